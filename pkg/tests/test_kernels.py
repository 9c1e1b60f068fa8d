import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipedepth import (FP_CLASSES, GenerationError, KernelKind, KernelSpec,
                       MemoryImage, OpClass, PipelineConfig, Schedule,
                       class_counts, fp_instruction_count, gen_ddot,
                       gen_dgemm, gen_dgemv, gen_dgeqrf, gen_dgetrf, generate,
                       load_bundle, run, save_bundle)
from pipedepth.kernels import (doolittle_lu_reference, householder_qr_reference,
                               kahan_dot, qr_reconstruct, reference_gemm,
                               reference_gemv)

MUL, ADD, SQRT, DIV = OpClass.MUL, OpClass.ADD, OpClass.SQRT, OpClass.DIV


def fp_counts(bundle):
    counts = class_counts(bundle.program)
    return {c: counts[c] for c in FP_CLASSES}


def sim_error(bundle, config=None):
    """Worst final-memory deviation from the oracle, relative to the
    output's magnitude scale."""
    report = run(bundle.program, bundle.inputs, config or PipelineConfig())
    expected = bundle.expected_outputs
    scale = max(abs(v) for v in expected.values()) or 1.0
    worst = max(abs(report.final_memory[a] - v) for a, v in expected.items())
    return worst / scale


# -- ddot ---------------------------------------------------------------------


@pytest.mark.parametrize("n,mul,add", [(1, 1, 0), (4, 4, 3), (1000, 1000, 999)])
def test_ddot_counts(n, mul, add):
    counts = fp_counts(gen_ddot(n, seed=1))
    assert counts[MUL] == mul and counts[ADD] == add
    assert counts[SQRT] == 0 and counts[DIV] == 0


@given(st.integers(1, 40), st.sampled_from(list(Schedule)))
@settings(max_examples=30, deadline=None)
def test_ddot_instruction_identity(n, schedule):
    bundle = gen_ddot(n, schedule, seed=3)
    assert fp_instruction_count(bundle.program) == 2 * n - 1


def test_ddot_rejects_zero_length():
    with pytest.raises(ValueError):
        gen_ddot(0)


def test_ddot_schedules_agree_numerically():
    tree = gen_ddot(64, Schedule.ASAP, seed=5)
    serial = gen_ddot(64, Schedule.PROGRAM_ORDER, seed=5)
    addr = 2 * 64
    r1 = run(tree.program, tree.inputs, PipelineConfig())
    r2 = run(serial.program, serial.inputs, PipelineConfig())
    ref = tree.expected_outputs[addr]
    assert r1.final_memory[addr] == pytest.approx(ref, rel=1e-12)
    assert r2.final_memory[addr] == pytest.approx(ref, rel=1e-12)


def test_kahan_dot_matches_fsum():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 500)
    y = rng.uniform(-1, 1, 500)
    exact = math.fsum([float(a) * float(b) for a, b in zip(x, y)])
    assert kahan_dot(x, y) == pytest.approx(exact, rel=1e-14)


# -- dgemv / dgemm ------------------------------------------------------------


@pytest.mark.parametrize("m,n,mul,add", [(2, 2, 4, 2), (3, 5, 15, 12)])
def test_dgemv_counts(m, n, mul, add):
    counts = fp_counts(gen_dgemv(m, n, seed=1))
    assert counts[MUL] == mul and counts[ADD] == add


def test_dgemv_single_row_matches_ddot():
    assert fp_counts(gen_dgemv(1, 9, seed=1)) == fp_counts(gen_ddot(9, seed=1))


@pytest.mark.parametrize("m,k,n,mul,add", [
    (2, 2, 2, 8, 4),
    (3, 1, 4, 12, 0),      # k=1 is an outer product, no reductions
    (8, 8, 8, 512, 448),
])
def test_dgemm_counts(m, k, n, mul, add):
    counts = fp_counts(gen_dgemm(m, k, n, seed=1))
    assert counts[MUL] == mul and counts[ADD] == add


@pytest.mark.parametrize("gen", [
    lambda: gen_dgemv(0, 3),
    lambda: gen_dgemm(2, 0, 2),
])
def test_zero_dimensions_rejected(gen):
    with pytest.raises(ValueError):
        gen()


def test_reference_oracles_agree_with_numpy():
    rng = np.random.default_rng(2)
    a = rng.uniform(-1, 1, (5, 7))
    b = rng.uniform(-1, 1, (7, 4))
    x = rng.uniform(-1, 1, 7)
    assert np.allclose(reference_gemm(a, b), a @ b, rtol=1e-13, atol=1e-15)
    assert np.allclose(reference_gemv(a, x), a @ x, rtol=1e-13, atol=1e-15)


# -- dgeqrf -------------------------------------------------------------------


def test_qr_single_column_has_one_sqrt():
    counts = fp_counts(gen_dgeqrf(4, 1, seed=1))
    assert counts[SQRT] == 1
    assert counts[DIV] == 4  # three component scalings plus the tau quotient


def test_qr_counts_4x4():
    # Derived by tracing the generator's per-column recipe at m = n = 4.
    counts = fp_counts(gen_dgeqrf(4, 4, seed=1))
    assert counts == {MUL: 44, ADD: 52, SQRT: 4, DIV: 10}


def test_qr_one_sqrt_per_column():
    for n in (1, 3, 6):
        assert fp_counts(gen_dgeqrf(8, n, seed=1))[SQRT] == n


def test_qr_div_sqrt_share_halves_when_size_doubles():
    def ratio(n):
        counts = fp_counts(gen_dgeqrf(n, n, seed=1))
        total = sum(counts.values())
        return (counts[DIV] + counts[SQRT]) / total

    assert 1.5 <= ratio(16) / ratio(32) <= 2.5


def test_qr_rejects_wide_matrices():
    with pytest.raises(ValueError):
        gen_dgeqrf(3, 5)


def test_qr_expected_outputs_reconstruct_input():
    m = n = 12
    bundle = gen_dgeqrf(m, n, seed=9)
    packed = np.array([[bundle.expected_outputs[i * n + j] for j in range(n)]
                       for i in range(m)])
    taus = np.array([bundle.expected_outputs[m * n + j] for j in range(n)])
    q, r = qr_reconstruct(packed, taus)
    a = np.asarray(bundle.inputs.words[:m * n]).reshape(m, n)
    assert np.linalg.norm(a - q @ r) <= 1e-10 * np.linalg.norm(a)
    assert np.allclose(q.T @ q, np.eye(m), atol=1e-12)


def test_qr_oracle_matches_scipy():
    scipy_linalg = pytest.importorskip("scipy.linalg")
    rng = np.random.default_rng(4)
    a = rng.uniform(-1, 1, (10, 6))
    packed, taus, _ = householder_qr_reference(a)
    _, r_scipy = scipy_linalg.qr(a)
    # Same sign convention, so the R blocks agree directly.
    assert np.allclose(np.triu(packed)[:6, :], r_scipy[:6, :], atol=1e-10)


def test_qr_zero_column_fails_with_diagnosis():
    with pytest.raises(GenerationError, match="zero to working precision"):
        householder_qr_reference(np.zeros((4, 2)))


# -- dgetrf -------------------------------------------------------------------


def test_lu_trivial_size_has_no_arithmetic():
    bundle = gen_dgetrf(1, seed=1)
    assert fp_instruction_count(bundle.program) == 0
    assert len(bundle.program) > 0  # load/store passthrough keeps it runnable


@pytest.mark.parametrize("n", [2, 4, 7])
def test_lu_division_count(n):
    counts = fp_counts(gen_dgetrf(n, seed=1))
    assert counts[DIV] == n * (n - 1) // 2
    assert counts[SQRT] == 0
    updates = sum((n - 1 - k) ** 2 for k in range(n))
    assert counts[MUL] == updates and counts[ADD] == updates


def test_lu_oracle_verifies_pa_equals_lu():
    rng = np.random.default_rng(8)
    a = rng.uniform(-1, 1, (9, 9))
    packed, perm = doolittle_lu_reference(a)
    lower = np.tril(packed, -1) + np.eye(9)
    upper = np.triu(packed)
    assert np.linalg.norm(a[perm] - lower @ upper) <= 1e-10 * np.linalg.norm(a)


def test_lu_oracle_matches_scipy():
    scipy_linalg = pytest.importorskip("scipy.linalg")
    rng = np.random.default_rng(3)
    a = rng.uniform(-1, 1, (8, 8))
    packed, perm = doolittle_lu_reference(a)
    p, l, u = scipy_linalg.lu(a)
    assert np.allclose(np.triu(packed), u, atol=1e-10)
    assert np.allclose(np.tril(packed, -1) + np.eye(8), l, atol=1e-10)


def test_lu_singular_matrix_fails_with_diagnosis():
    with pytest.raises(GenerationError, match="singular"):
        gen_dgetrf(3, matrix=np.zeros((3, 3)))


# -- cross-kernel contracts ---------------------------------------------------

SMALL_BUNDLES = [
    ("ddot-tree", lambda: gen_ddot(17, Schedule.ASAP, seed=2)),
    ("ddot-serial", lambda: gen_ddot(17, Schedule.PROGRAM_ORDER, seed=2)),
    ("dgemv", lambda: gen_dgemv(5, 6, seed=2)),
    ("dgemm", lambda: gen_dgemm(4, 5, 3, seed=2)),
    ("dgeqrf", lambda: gen_dgeqrf(7, 5, seed=2)),
    ("dgetrf", lambda: gen_dgetrf(6, seed=2)),
]


@pytest.mark.parametrize("name,fn", SMALL_BUNDLES)
def test_stats_hint_matches_class_counts(name, fn):
    bundle = fn()
    assert dict(bundle.stats_hint) == fp_counts(bundle)


@pytest.mark.parametrize("name,fn", SMALL_BUNDLES)
def test_simulation_matches_oracle(name, fn):
    bundle = fn()
    assert sim_error(bundle) < 1e-12
    assert sim_error(bundle, PipelineConfig(5, 3, 7, 9, mem_latency=4)) < 1e-12


def test_small_register_file_spills_and_still_agrees():
    bundle = gen_ddot(40, Schedule.ASAP, seed=6, num_registers=8)
    counts = class_counts(bundle.program)
    assert counts[OpClass.STORE] > 1  # pressure forced spill stores
    assert sim_error(bundle) < 1e-12


def test_generate_dispatch():
    spec = KernelSpec(KernelKind.DGEMM, (3, 4, 2), Schedule.ASAP, seed=1)
    bundle = generate(spec)
    assert fp_counts(bundle)[MUL] == 24


@pytest.mark.parametrize("kind,dims", [
    (KernelKind.DDOT, (1, 2)),
    (KernelKind.DGEMM, (4,)),
    (KernelKind.DGEQRF, (3, 5)),
    (KernelKind.DGETRF, (0,)),
])
def test_spec_validation(kind, dims):
    with pytest.raises(ValueError):
        KernelSpec(kind, dims)


def test_bundle_roundtrip(tmp_path):
    bundle = gen_dgeqrf(5, 4, seed=3)
    save_bundle(bundle, tmp_path / "b")
    loaded = load_bundle(tmp_path / "b")
    assert loaded.program == bundle.program
    assert loaded.inputs == bundle.inputs
    assert dict(loaded.expected_outputs) == dict(bundle.expected_outputs)
    assert dict(loaded.stats_hint) == dict(bundle.stats_hint)


def test_bundles_are_deterministic_per_seed():
    a = gen_dgemm(3, 3, 3, seed=5)
    b = gen_dgemm(3, 3, 3, seed=5)
    assert a.program == b.program
    assert a.inputs == b.inputs
    c = gen_dgemm(3, 3, 3, seed=6)
    assert c.inputs != a.inputs
