"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Runs the full-size experiments (48x24 and 96x48 meshes, 100 iterations), so
this module takes a couple of minutes.
"""
import time

import numpy as np
import pytest

from difftopo.autodiff import Tape, backward
from difftopo.cli import main
from difftopo.drivers import neural_loss, run_neural, run_simp
from difftopo.fem import compliance, solve_load_cases
from difftopo.generator import init_params, make_seed
from difftopo.gradcheck import OP_TOL, run_suite
from difftopo.autodiff import registered_ops
from difftopo.optim import grayness, sensitivity
from difftopo.problems import make_problem
from difftopo.sparse import counters

pytestmark = pytest.mark.slow

PARITY_CASES = [(name, vf) for name in ("mbb", "cantilever", "bridge") for vf in (0.3, 0.4, 0.5)]


@pytest.fixture(scope="module")
def mbb_neural():
    return run_neural(make_problem("mbb", 48, 24, 0.3, 3), 100, seed=0)


@pytest.fixture(scope="module")
def inverter_runs():
    ratio = run_neural(make_problem("inverter", 48, 24, 0.3, 3, w=0.01), 200, seed=0)
    target = run_neural(make_problem("inverter", 48, 24, 0.3, 3, w=0.01, target=-100.0),
                        200, seed=0)
    return ratio, target


def test_c01_gradient_oracle_suite(criterion):
    t0 = time.perf_counter()
    results = run_suite()
    elapsed = time.perf_counter() - t0
    ops = [r for r in results if not r.name.startswith("end_to_end")]
    covered = {r.name for r in ops} == set(registered_ops())
    enough = all(r.instances >= 20 for r in ops)
    worst = max(ops, key=lambda r: r.max_error)
    ok = covered and enough and all(r.passed for r in ops) and elapsed < 60
    criterion(1, ok, f"{len(ops)} ops, worst {worst.name} {worst.max_error:.2e} "
                     f"(tol {OP_TOL:g}), {elapsed:.1f} s")
    assert ok


def test_c02_adjoint_equals_analytic(criterion):
    rng = np.random.default_rng(2)
    pb = make_problem("mbb", 4, 2, 0.5, 3)
    x = rng.uniform(0.2, 1.0, size=(2, 4))
    t = Tape()
    xv = t.variable(x)
    (U,) = solve_load_cases(pb, xv)
    g = backward(compliance(U, pb.load_vector())).wrt(xv)
    dc = sensitivity(x, U.data, pb.mesh, pb.material, pb.K0)
    err = np.max(np.abs(g - dc) / np.abs(dc))
    ok = err <= 1e-8 and np.all(dc < 0)
    criterion(2, ok, f"max rel err {err:.2e} on 4x2 (tol 1e-8), sensitivities all negative")
    assert ok


def test_c03_factorization_reuse(criterion):
    lines, ok = [], True
    for name in ("mbb", "inverter"):
        pb = make_problem(name, 16, 8, 0.3, 3)
        params = init_params(16, 8, 0)
        counters.reset()
        L, _, _ = neural_loss(pb, params, make_seed())
        fwd = counters.factorizations
        backward(L)
        bwd = counters.factorizations - fwd
        ok &= fwd == 1 and bwd == 0
        lines.append(f"{name}: {len(pb.loads)} load case(s), {fwd} forward / {bwd} backward")
    criterion(3, ok, "; ".join(lines))
    assert ok


def test_c04_mbb_convergence(criterion, mbb_neural):
    h = mbb_neural
    best = h.best_so_far()
    change = (best[-21] - best[-1]) / best[-1]
    vol_dev = np.max(np.abs(h.volfracs - 0.3))
    ok = change <= 0.02 and vol_dev <= 1e-3
    criterion(4, ok, f"best-objective change over last 20 iters {100 * change:.2f}% (<= 2%), "
                     f"max |volfrac - 0.3| {vol_dev:.1e}")
    assert ok


def test_c05_method_parity(criterion):
    ratios = {}
    for name, vf in PARITY_CASES:
        pb = make_problem(name, 48, 24, vf, 3)
        dn = run_neural(pb, 100, seed=0).final["displacement"]
        ds = run_simp(pb, 100).final["displacement"]
        ratios[(name, vf)] = max(dn, ds) / min(dn, ds)
    worst = max(ratios, key=ratios.get)
    ok = all(r <= 1.25 for r in ratios.values())
    criterion(5, ok, f"worst neural/SIMP displacement spread {ratios[worst]:.3f} at "
                     f"{worst[0]} {worst[1]} (<= 1.25)")
    assert ok


def test_c06_timing(criterion, mbb_neural):
    small = mbb_neural.seconds.mean()
    large = run_neural(make_problem("mbb", 96, 48, 0.3, 3), 100, seed=0).seconds.mean()
    ratio = large / small
    ok = small <= 1.0 and large <= 3.0 and 2.0 <= ratio <= 8.0
    criterion(6, ok, f"48x24 {small:.3f} s/iter, 96x48 {large:.3f} s/iter, ratio {ratio:.2f}")
    assert ok


def test_c07_force_inverter(criterion, inverter_runs):
    ga = inverter_runs[0].final["geometry_advantage"]
    ok = ga < 0 and abs(ga) > 1
    criterion(7, ok, f"geometry advantage {ga:.3f} (need < 0 and |GA| > 1)")
    assert ok


def test_c08_target_displacement(criterion, inverter_runs):
    ratio, target = inverter_runs
    u_ratio, u_target = ratio.final["u_out"], target.final["u_out"]
    ok = abs(u_target) < abs(u_ratio)
    criterion(8, ok, f"|U2| target run {abs(u_target):.2f} vs ratio run {abs(u_ratio):.2f}")
    assert ok


def test_c09_penalization_grayness(criterion):
    g = {p: grayness(run_simp(make_problem("mbb", 48, 24, 0.3, p), 100).density) for p in (1, 3)}
    ok = g[3] < g[1]
    criterion(9, ok, f"grayness p=3 {g[3]:.4f} < p=1 {g[1]:.4f}")
    assert ok


def test_c10_determinism(criterion, tmp_path):
    same = []
    for method in ("neural", "simp"):
        outs = []
        for k in range(2):
            d = tmp_path / f"{method}{k}"
            code = main(["run", "--problem", "mbb", "--nx", "48", "--ny", "24", "--iters", "20",
                         "--method", method, "--seed", "7", "--no-timing", "--no-figures",
                         "--out", str(d)])
            assert code == 0
            outs.append(((d / "history.csv").read_bytes(), (d / "density.pgm").read_bytes()))
        same.append(outs[0] == outs[1])
    ok = all(same)
    criterion(10, ok, "CSV and PGM byte-identical across repeated neural and SIMP runs")
    assert ok
