"""Design space exploration of floating point pipeline depths for dense
linear algebra workloads: analytic model, kernel generators, workload
characterization, and a cycle-approximate simulator."""

from .isa import (FP_CLASSES, Instruction, MemoryImage, OpClass, Program,
                  class_counts, disassemble, fp_instruction_count, parse,
                  validate)
from .model import (ClassProfile, HazardProfile, TechnologyParams, TpiCurve,
                    busy_nonbusy, optimal_depth, optimal_depth_per_class,
                    round_depth, sweep_depth, sweep_gamma, sweep_workload,
                    tpi_multi, tpi_single)
from .kernels import (GenerationError, KernelBundle, KernelKind, KernelSpec,
                      Schedule, gen_ddot, gen_dgemm, gen_dgemv, gen_dgeqrf,
                      gen_dgetrf, generate, load_bundle, save_bundle)
from .characterize import (DepDag, GammaFit, HazardEvent, WorkloadStats,
                           build_dag, characterize, characterize_program,
                           count_hazards, fit_gamma, to_class_profile)
from .sim import PipelineConfig, SimReport, cycle_time, run, sweep

__version__ = "0.1.0"
