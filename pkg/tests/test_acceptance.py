"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion."""

import math
import time

import numpy as np
import pytest

from conftest import make_problem
from podnn import io
from podnn.analysis import StudyConfig, fit_rate, run_study, truncation_study
from podnn.nn import TrainConfig, loss_and_grad, mlp_init, size_apriori
from podnn.pod import (
    SnapshotSet,
    assemble_snapshots,
    correlation_matrix,
    empirical_pod_error,
    merge_real_imag,
    pod_basis,
    project_coeffs,
    rank_apriori,
    reconstruct,
    split_real_imag,
)
from podnn.problem import COMPLEX_REACTION, REAL_DIFFUSION, FemSpace, assemble_gram
from podnn.qmc import RateConfig, parameter_points, qmc_mean


def report(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}")
    assert ok, detail


def random_instance(rng, n_dof, n, cplx):
    S = rng.standard_normal((n_dof, n))
    if cplx:
        S = S + 1j * rng.standard_normal((n_dof, n))
    S = S / (1.0 + np.arange(n))  # decaying column energies
    return SnapshotSet(rng.uniform(-1, 1, (n, 4)), S.astype(complex))


def test_c01_tail_identity(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_rel, worst_abs = 0.0, 0.0
    for k in range(20):
        n_dof, n = int(rng.integers(2, 129)), int(rng.integers(1, 65))
        snap = random_instance(rng, n_dof, n, cplx=bool(k % 2))
        g = assemble_gram(FemSpace(n_dof))
        full, diag = pod_basis(snap, g)
        for J in range(full.full_rank + 1):
            err = empirical_pod_error(snap, full.truncate(J), g)
            if J == full.full_rank:
                worst_abs = max(worst_abs, abs(err))
            else:
                tail = diag.tail_per_rank[J]
                worst_rel = max(worst_rel, abs(err - tail) / tail)
    secs = time.perf_counter() - t0
    ok = worst_rel <= 1e-8 and worst_abs <= 1e-10 and secs < 10
    report(capsys, 1, "tail identity", ok,
           f"max rel {worst_rel:.2e} (<=1e-8), abs at full rank {worst_abs:.2e} (<=1e-10), {secs:.1f}s")


def test_c02_eigen_svd_oracle(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(20):
        n_dof, n = int(rng.integers(2, 31)), int(rng.integers(1, 41))
        snap = random_instance(rng, n_dof, n, cplx=bool(k % 2))
        g = assemble_gram(FemSpace(n_dof))
        lam = np.sort(np.linalg.eigvalsh(correlation_matrix(snap, g)))[::-1]
        L = np.linalg.cholesky(g.dense())
        sv = np.linalg.svd(L.T @ snap.snapshots / math.sqrt(n), compute_uv=False)
        r = min(n, n_dof)
        worst = max(worst, float(np.max(np.abs(lam[:r] - sv[:r] ** 2) / sv[:r] ** 2)))
    secs = time.perf_counter() - t0
    report(capsys, 2, "eigen/SVD oracle", worst <= 1e-8 and secs < 5,
           f"max rel {worst:.2e} (<=1e-8), {secs:.2f}s")


def test_c03_gradient_check(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    m = mlp_init((4, 8, 8, 6), seed=3)
    for b in m.biases:
        b[:] = rng.uniform(-0.5, 0.5, b.shape)
    x = rng.uniform(-1, 1, (16, 4))
    t = rng.uniform(-1, 1, (16, 6))
    _, grads = loss_and_grad(m, x, t)
    sizes = [p.size for p in m.params]
    offsets = np.cumsum([0] + sizes)
    h, worst = 1e-5, 0.0
    for flat in rng.choice(offsets[-1], size=100, replace=False):
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx = np.unravel_index(int(flat - offsets[k]), m.params[k].shape)
        p = m.params[k]
        old = p[idx]
        p[idx] = old + h
        lp = loss_and_grad(m, x, t)[0]
        p[idx] = old - h
        lm = loss_and_grad(m, x, t)[0]
        p[idx] = old
        fd = (lp - lm) / (2 * h)
        g = grads[k][idx]
        worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), 1e-8))
    secs = time.perf_counter() - t0
    report(capsys, 3, "gradient check (4,8,8,6)", worst <= 1e-5 and secs < 5,
           f"max rel {worst:.2e} (<=1e-5), {secs:.2f}s")


def test_c04_halton_rate(capsys):
    t0 = time.perf_counter()
    ns = 2 ** np.arange(4, 13)
    weights = 2.0 ** -np.arange(1, 9)
    errs = []
    for n in ns:
        y = parameter_points(8, int(n))
        errs.append(abs(qmc_mean(np.prod(1 + y * weights, axis=1)) - 1))
    slope = fit_rate(ns, errs)
    secs = time.perf_counter() - t0
    report(capsys, 4, "Halton rate s=8", slope <= -0.8 and secs < 10,
           f"slope {slope:.3f} (<=-0.8), {secs:.2f}s")


@pytest.fixture(scope="module")
def pod_study():
    cfg = StudyConfig(
        problem=make_problem(REAL_DIFFUSION, n_dof=256, n_modes=64),
        s=64,
        n_grid=tuple(2**k for k in range(6, 13)),
        test_size=512,
        train_nn=False,
    )
    t0 = time.perf_counter()
    rep = run_study(cfg)
    return rep, time.perf_counter() - t0


def test_c05_pod_convergence(capsys, pod_study):
    rep, secs = pod_study
    slope = rep.slopes["pod_gen_err"]
    errs = ", ".join(f"{e:.2e}" for e in rep.column("pod_gen_err"))
    report(capsys, 5, "POD N-convergence", slope <= -0.35 and secs < 600,
           f"slope {slope:.3f} (<=-0.35), errors [{errs}], {secs:.0f}s")


def test_c06_rank_growth(capsys, pod_study):
    rep, _ = pod_study
    J = rep.column("J")
    N = rep.column("N")
    bound = 3 * N**0.45
    ok = bool(np.all(np.diff(J) >= 0) and np.all(J <= bound))
    report(capsys, 6, "rank growth", ok,
           f"J {J.astype(int).tolist()} vs 3N^0.45 {np.round(bound, 1).tolist()}")


def test_c07_apriori_formulas(capsys):
    rates = RateConfig(1.0, 4 / 9)
    J = rank_apriori(4096, rates)
    sz = size_apriori(4096, rates)
    got = (J, sz.n, sz.width, sz.hidden_layers)
    report(capsys, 7, "a-priori formulas", got == (28, 11, 121, 4),
           f"(J, n, width, hidden_layers) = {got}, expected (28, 11, 121, 4)")


def test_c08_truncation_decay(capsys):
    t0 = time.perf_counter()
    cfg = make_problem(REAL_DIFFUSION, n_dof=256, n_modes=64)
    res = truncation_study(cfg, (4, 8, 16, 32), parameter_points(64, 32))
    secs = time.perf_counter() - t0
    errs = ", ".join(f"{e:.2e}" for e in res.errors)
    report(capsys, 8, "truncation decay", res.slope <= -1.0 and secs < 120,
           f"slope {res.slope:.3f} (<=-1.0), errors [{errs}], {secs:.1f}s")


def test_c09_end_to_end(capsys):
    t0 = time.perf_counter()
    N = 256
    cfg = StudyConfig(
        problem=make_problem(COMPLEX_REACTION, n_dof=128, n_modes=64),
        s=16,
        n_grid=(N,),
        test_size=512,
        train=TrainConfig(max_epochs=50_000, seed=0),
    )
    row = run_study(cfg).rows[0]
    secs = time.perf_counter() - t0
    ratio = row.total_l2_err / row.pod_gen_err
    ok = row.nn_train_mse < 1 / N and ratio <= 3 and secs < 300
    report(capsys, 9, "end-to-end POD-NN", ok,
           f"J={row.J}, net {row.n}/{row.width}/{row.hidden_layers}, L_MSE {row.nn_train_mse:.2e} (<{1 / N:.2e}), "
           f"surrogate/pod {ratio:.2f} (<=3), {secs:.1f}s")


def test_c10_structural_invariants(capsys, tmp_path):
    t0 = time.perf_counter()
    checks = {}
    rng = np.random.default_rng(10)

    orth, recon = 0.0, 0.0
    for kind in (REAL_DIFFUSION, COMPLEX_REACTION):
        cfg = make_problem(kind, n_dof=64)
        g = assemble_gram(cfg.fem)
        snap = assemble_snapshots(cfg, parameter_points(16, 128))
        full, _ = pod_basis(snap, g)
        for J in (1, full.full_rank // 2, full.full_rank):
            b = full.truncate(J)
            orth = max(orth, float(np.abs(b.basis.conj().T @ g.matvec(b.basis) - np.eye(J)).max()))
            u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
            resid = u - reconstruct(split_real_imag(project_coeffs(u, b, g)), b)
            recon = max(recon, float(np.abs(b.basis.conj().T @ g.matvec(resid)).max()))
    checks["X-orthonormality <= 1e-8"] = orth <= 1e-8
    checks["reconstruction orthogonality <= 1e-8"] = recon <= 1e-8

    c = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    rc = rng.standard_normal(40)
    checks["split/merge bijection"] = (
        np.array_equal(merge_real_imag(split_real_imag(c)), c)
        and np.array_equal(split_real_imag(merge_real_imag(rc)), rc)
    )

    study = StudyConfig(make_problem(COMPLEX_REACTION, n_dof=32), 8, (16, 32, 64),
                        test_size=64, train=TrainConfig(max_epochs=500, seed=4))
    a, b = run_study(study), run_study(study)
    checks["study determinism"] = a.payload() == b.payload() and a.slopes == b.slopes

    cfg = make_problem(COMPLEX_REACTION, n_dof=32)
    snap = assemble_snapshots(cfg, parameter_points(8, 24))
    basis = pod_basis(snap, assemble_gram(cfg.fem))[0].truncate(3, tolerance=1e-3)
    model = mlp_init((8, 9, 6), seed=1)
    io.write_snapshots(tmp_path / "s", snap)
    io.write_basis(tmp_path / "b", basis)
    io.write_model(tmp_path / "m", model, io.file_id(tmp_path / "b"))
    s2, b2 = io.read_snapshots(tmp_path / "s"), io.read_basis(tmp_path / "b")
    m2, bid = io.read_model(tmp_path / "m")
    checks["binary round-trips"] = (
        np.array_equal(s2.snapshots, snap.snapshots) and np.array_equal(s2.params, snap.params)
        and s2.problem_meta == cfg
        and np.array_equal(b2.basis, basis.basis) and b2.tolerance == basis.tolerance
        and all(np.array_equal(p, q) for p, q in zip(m2.params, model.params))
        and bid == io.file_id(tmp_path / "b")
    )
    secs = time.perf_counter() - t0
    checks["runtime < 30s"] = secs < 30
    failed = [k for k, v in checks.items() if not v]
    report(capsys, 10, "structural invariants", not failed,
           f"{len(checks) - len(failed)}/{len(checks)} checks green"
           + (f", failed: {failed}" if failed else "") + f", {secs:.1f}s")
