import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipedepth import (FP_CLASSES, HazardProfile, Instruction, MemoryImage,
                       OpClass, PipelineConfig, Program, Schedule,
                       TechnologyParams, build_dag, characterize,
                       characterize_program, count_hazards, fit_gamma,
                       gen_ddot, gen_dgemm, gen_dgeqrf, gen_dgetrf,
                       optimal_depth, round_depth, run, sweep,
                       to_class_profile, tpi_single)
from pipedepth.characterize import stats_report, stats_to_csv
from test_isa import programs
from test_sim import ddot4_asap_fixture

MUL, ADD, SQRT, DIV = OpClass.MUL, OpClass.ADD, OpClass.SQRT, OpClass.DIV


def tech_uniform(latch=0.1, delay=8.0):
    return TechnologyParams(latch, {c: delay for c in FP_CLASSES})


# -- DAG ----------------------------------------------------------------------


def test_fixture_dag_levels():
    dag = build_dag(ddot4_asap_fixture())
    assert dag.levels[:4] == (0, 0, 0, 0)      # the multiplies are all roots
    assert dag.levels[4:] == (1, 1, 2)          # two tree levels of adds
    assert dag.critical_path_length == 3


def test_generated_ddot_critical_paths():
    # Full programs include the loads feeding each multiply and the final
    # store, so the longest chains are ld-mul-add-add-st for the tree and
    # ld-mul-add-add-add-st for the serial chain.
    tree = build_dag(gen_ddot(4, Schedule.ASAP, seed=7).program)
    serial = build_dag(gen_ddot(4, Schedule.PROGRAM_ORDER, seed=7).program)
    assert tree.critical_path_length == 5
    assert serial.critical_path_length == 6


def test_dag_edges_point_forward_and_levels_increase():
    dag = build_dag(gen_dgeqrf(5, 3, seed=1).program)
    for producer, consumer in dag.edges:
        assert producer < consumer
        assert dag.levels[consumer] > dag.levels[producer]


def test_dag_tracks_memory_raw_dependences():
    prog = Program((
        Instruction(OpClass.LOAD, dst=0, addr=0),
        Instruction(OpClass.STORE, addr=1, src1=0),
        Instruction(OpClass.LOAD, dst=1, addr=1),
        Instruction(OpClass.LOAD, dst=2, addr=0),
    ), num_registers=4, memory_words=2)
    dag = build_dag(prog)
    assert (1, 2) in dag.edges      # store feeds the reload of address 1
    assert dag.producers[3] == ()   # address 0 was never stored to


# -- hazard counting ----------------------------------------------------------


def test_fixture_hazards_window_one():
    prog = ddot4_asap_fixture()
    events, per_class = count_hazards(prog, build_dag(prog), window=1)
    assert per_class[MUL] == 0
    assert per_class[ADD] == 1
    assert len(events) == 1
    assert (events[0].consumer, events[0].producer) == (6, 5)
    assert events[0].distance == 1


def test_generated_ddot_mul_hazards_stay_zero():
    # Multiplies only read loaded values; load waits are not pipe hazards.
    for schedule in Schedule:
        bundle = gen_ddot(32, schedule, seed=1)
        dag = build_dag(bundle.program)
        for window in (1, 4, 17, len(bundle.program)):
            _, per_class = count_hazards(bundle.program, dag, window)
            assert per_class[MUL] == 0


def test_window_covering_program_counts_every_fp_dependent():
    bundle = gen_dgetrf(4, seed=2)
    prog = bundle.program
    dag = build_dag(prog)
    _, per_class = count_hazards(prog, dag, window=len(prog))
    expected = 0
    for i, ins in enumerate(prog.instructions):
        if ins.opclass in FP_CLASSES:
            if any(prog.instructions[j].opclass in FP_CLASSES
                   for j in dag.producers[i]):
                expected += 1
    assert sum(per_class.values()) == expected


def test_hazards_monotone_in_window():
    bundle = gen_dgeqrf(6, 4, seed=3)
    dag = build_dag(bundle.program)
    previous = 0
    for window in (1, 2, 4, 8, 16, 64):
        _, per_class = count_hazards(bundle.program, dag, window)
        total = sum(per_class.values())
        assert total >= previous
        previous = total


def test_window_must_be_positive():
    prog = ddot4_asap_fixture()
    with pytest.raises(ValueError):
        count_hazards(prog, build_dag(prog), window=0)


def test_qr_sqrt_consumes_fresh_norms():
    # Every square root reads the reduction finishing right before it.
    bundle = gen_dgeqrf(8, 8, seed=1)
    stats = characterize(bundle, window=4)
    assert stats.counts[SQRT] == 8
    assert stats.hazards[SQRT] == 8


# -- characterize -------------------------------------------------------------


def test_characterize_ddot1000():
    stats = characterize(gen_ddot(1000, seed=1))
    assert stats.n_instructions == 1999
    assert stats.counts[MUL] == 1000
    assert stats.counts[ADD] == 999


def test_characterize_dgemm8():
    stats = characterize(gen_dgemm(8, 8, 8, seed=1))
    assert stats.counts[MUL] == 512
    assert stats.counts[ADD] == 448


def test_characterize_dgeqrf16_sqrt_count():
    stats = characterize(gen_dgeqrf(16, 16, seed=1))
    assert stats.counts[SQRT] == 16


def test_ilp_bound_for_balanced_tree():
    for n in (8, 16, 64):
        stats = characterize(gen_ddot(n, Schedule.ASAP, seed=1))
        assert stats.ilp >= n / (math.ceil(math.log2(n)) + 1)


def test_stats_sums_are_consistent():
    stats = characterize(gen_dgeqrf(6, 5, seed=4), window=4)
    assert sum(stats.counts.values()) == stats.n_instructions
    assert sum(stats.hazards.values()) == stats.n_hazards
    for cls in FP_CLASSES:
        assert stats.hazards[cls] <= stats.counts[cls]


def test_stats_serialization():
    stats = characterize(gen_ddot(100, seed=1))
    csv_text = stats_to_csv(stats)
    lines = csv_text.splitlines()
    assert lines[0] == "class,instructions,hazards,gamma"
    assert lines[1].startswith("mul,100,0,")
    assert csv_text.endswith("\n")
    report = stats_report(stats)
    assert "average parallelism" in report


def test_to_class_profile_fills_defaults():
    stats = characterize(gen_ddot(50, Schedule.PROGRAM_ORDER, seed=1))
    classes = to_class_profile(stats, gamma_default=0.3)
    assert classes.per_class[MUL].n_hazards == 0
    assert classes.per_class[ADD].gamma == 0.3
    fitted = stats.with_gamma(ADD, 0.7)
    assert to_class_profile(fitted).per_class[ADD].gamma == 0.7


# -- gamma fitting ------------------------------------------------------------


def synthetic_stats(n_i=1000, n_h=200):
    counts = {c: 0 for c in FP_CLASSES}
    hazards = {c: 0 for c in FP_CLASSES}
    counts[ADD] = n_i
    hazards[ADD] = n_h
    return _stats(counts, hazards)


def _stats(counts, hazards):
    from pipedepth.characterize import WorkloadStats
    n = sum(counts.values())
    return WorkloadStats(counts=counts, hazards=hazards,
                         gammas={c: None for c in FP_CLASSES},
                         n_instructions=n, n_hazards=sum(hazards.values()),
                         n_memory_ops=0, critical_path_length=max(1, n),
                         ilp=1.0, window=4)


def depth_map(p):
    return {MUL: 1, ADD: p, SQRT: 1, DIV: 1}


def test_fit_recovers_injected_gamma_exactly():
    stats = synthetic_stats()
    tech = tech_uniform()
    gamma = 0.3
    ratio = 200 / 1000
    points = [(depth_map(p), 1.0 + gamma * ratio * p) for p in range(1, 9)]
    fit = fit_gamma(stats, tech, points, ADD)
    assert fit.gamma == pytest.approx(0.3, abs=1e-6)
    assert fit.residual_rms < 1e-9


def test_fit_recommendation_round_trip():
    # Data generated from the model leads back to the injected optimum.
    stats = synthetic_stats()
    tech = tech_uniform()
    gamma = 0.42
    profile = HazardProfile(1000, 200, gamma)
    points = [(depth_map(p),
               tpi_single(profile, 0.1, 8.0, p) / (8.0 / p + 0.1))
              for p in range(1, 17)]
    fit = fit_gamma(stats, tech, points, ADD)
    fitted_profile = HazardProfile(1000, 200, fit.gamma)
    p_opt = optimal_depth(fitted_profile, 0.1, 8.0)
    injected = optimal_depth(profile, 0.1, 8.0)
    assert abs(round_depth(fitted_profile, 0.1, 8.0, p_opt) - injected) <= 1.0


def test_fit_rejects_zero_hazard_class():
    stats = synthetic_stats(n_h=0)
    with pytest.raises(ValueError, match="no hazards"):
        fit_gamma(stats, tech_uniform(), [(depth_map(p), 1.0)
                                          for p in (1, 2, 3)], ADD)


def test_fit_rejects_too_few_points():
    stats = synthetic_stats()
    with pytest.raises(ValueError, match="three"):
        fit_gamma(stats, tech_uniform(), [(depth_map(1), 1.0),
                                          (depth_map(2), 1.1)], ADD)


def test_fit_rejects_degenerate_depths():
    stats = synthetic_stats()
    points = [(depth_map(3), 1.0)] * 4
    with pytest.raises(ValueError, match="degenerate"):
        fit_gamma(stats, tech_uniform(), points, ADD)


def test_fit_rejects_variation_in_other_classes():
    stats = synthetic_stats()
    points = [({MUL: p, ADD: p, SQRT: 1, DIV: 1}, 1.0 + 0.1 * p)
              for p in (1, 2, 3)]
    with pytest.raises(ValueError, match="only"):
        fit_gamma(stats, tech_uniform(), points, ADD)


def test_fit_clamps_and_warns_outside_range():
    stats = synthetic_stats()
    points = [(depth_map(p), 1.0 + 3.0 * p) for p in range(1, 6)]
    with pytest.warns(UserWarning, match="clamped"):
        fit = fit_gamma(stats, tech_uniform(), points, ADD)
    assert fit.gamma == 1.0
    assert fit.raw_gamma > 1.0


def test_fit_against_real_simulation_predicts_argmin():
    # End to end: fitted gamma's closed-form optimum lands within two
    # stages of the empirical per-pipe optimum.
    tech = tech_uniform(latch=0.5, delay=8.0)
    bundle = gen_ddot(1000, Schedule.PROGRAM_ORDER, seed=7)
    stats = characterize(bundle, window=4)
    base = PipelineConfig(1, 1, 1, 1, mem_latency=2)
    runs = sweep(bundle.program, bundle.inputs, base, ADD, range(1, 17))
    points = [(base.with_depth(ADD, p).depths(), rep.class_cpi(ADD))
              for p, rep in runs]
    fit = fit_gamma(stats, tech, points, ADD)
    profile = HazardProfile(stats.counts[ADD], stats.hazards[ADD], fit.gamma)
    p_opt = optimal_depth(profile, 0.5, 8.0)
    sim_tpi = [(p, (8.0 / p + 0.5) * rep.class_cpi(ADD)) for p, rep in runs]
    argmin = min(sim_tpi, key=lambda t: t[1])[0]
    assert abs(p_opt - argmin) <= 2.0


# -- DAG / simulator correspondence -------------------------------------------


@given(programs())
@settings(max_examples=30, deadline=None)
def test_every_simulator_stall_is_a_dag_edge(prog):
    import io
    if not prog.instructions:
        return
    dag = build_dag(prog)
    edges = set(dag.edges)
    buf = io.StringIO()
    run(prog, MemoryImage([0.0] * prog.memory_words),
        PipelineConfig(5, 4, 6, 7, mem_latency=3), trace=buf)
    for line in buf.getvalue().splitlines():
        _, idx, _, reason = line.split(",")
        if reason:
            producer = int(reason.rsplit("#", 1)[1])
            assert (producer, int(idx)) in edges
