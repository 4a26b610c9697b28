import numpy as np
import pytest

from difftopo import autodiff as ad
from difftopo.autodiff import Tensor
from difftopo.fem import Material, Mesh, compliance, displacements, solve_load_cases
from difftopo.gradcheck import check_end_to_end
from difftopo.problems import (ProblemError, ProblemSpec, make_problem, objective,
                               objective_displacement, objective_inverter, objective_target)


def test_mbb_boundary_conditions():
    pb = make_problem("mbb", 48, 24, 0.3, 3)
    m = pb.mesh
    assert pb.loads == [{m.ydof(0, 0): -1.0}]
    assert pb.input_dof == m.ydof(0, 0)
    expected = {m.xdof(0, iy) for iy in range(25)} | {m.ydof(48, 24)}
    assert set(pb.fixed_dofs.tolist()) == expected


def test_cantilever_fixed_count():
    pb = make_problem("cantilever", 10, 6, 0.4, 3)
    assert pb.fixed_dofs.size == 2 * (6 + 1)
    assert pb.loads == [{pb.mesh.ydof(10, 3): -1.0}]


def test_bridge_supports():
    pb = make_problem("bridge", 8, 4, 0.4, 3)
    m = pb.mesh
    assert set(pb.fixed_dofs.tolist()) == {m.xdof(0, 4), m.ydof(0, 4), m.ydof(8, 4)}
    assert pb.loads == [{m.ydof(4, 4): -1.0}]


def test_inverter_has_two_cases():
    pb = make_problem("inverter", 8, 4, 0.3, 3)
    assert len(pb.loads) == 2
    assert pb.loads[0] == {pb.input_dof: 1.0}
    assert pb.loads[1] == {pb.output_dof: -1.0}
    assert pb.objective == "inverter"
    assert make_problem("inverter", 8, 4, 0.3, 3, target=-100.0).objective == "target"


def test_free_dofs_complement():
    pb = make_problem("mbb", 6, 3, 0.5, 3)
    assert np.intersect1d(pb.free_dofs, pb.fixed_dofs).size == 0
    assert pb.free_dofs.size + pb.fixed_dofs.size == pb.mesh.ndof


@pytest.mark.parametrize("kw,match", [
    (dict(name="arch"), "unknown problem"),
    (dict(nx=1), "too small"),
    (dict(volfrac=1.0), "volume fraction"),
    (dict(volfrac=0.0), "volume fraction"),
])
def test_make_problem_errors(kw, match):
    args = dict(name="mbb", nx=8, ny=4, volfrac=0.3)
    args.update(kw)
    with pytest.raises(ProblemError, match=match):
        make_problem(args.pop("name"), **args)


def test_spec_validation():
    mesh = Mesh(2, 2)
    with pytest.raises(ProblemError, match="fixed dof"):
        ProblemSpec("x", mesh, Material(), [999], [{0: 1.0}], 0.5)
    with pytest.raises(ProblemError, match="load dof"):
        ProblemSpec("x", mesh, Material(), [0], [{999: 1.0}], 0.5)
    with pytest.raises(ProblemError, match="at least one"):
        ProblemSpec("x", mesh, Material(), [0], [], 0.5)


def test_penalty_passes_through():
    assert make_problem("mbb", 4, 2, 0.3, 1.0).penalty == 1.0
    assert make_problem("mbb", 4, 2, 0.3, 2.0, material=Material(E0=3.0)).material.E0 == 3.0


# ---- objectives ----------------------------------------------------------------

def test_displacement_objective_identity_toy():
    pb = make_problem("mbb", 2, 2, 0.5, 3)
    U = np.arange(pb.mesh.ndof, dtype=float)
    # unit downward load: F.u = -U[dof]
    assert objective_displacement(U, pb).item() == -U[pb.input_dof]


def test_displacement_equals_compliance(rng):
    pb = make_problem("cantilever", 6, 4, 0.5, 3)
    U = displacements(pb, rng.uniform(0.2, 1, size=(4, 6)))
    c = compliance(U, pb.load_vector()).item()
    assert objective_displacement(U, pb).item() == pytest.approx(c, rel=1e-12)
    assert c > 0


def test_displacement_decreases_with_material(rng):
    pb = make_problem("bridge", 6, 4, 0.5, 3)
    x = rng.uniform(0.2, 0.8, size=(4, 6))
    base = objective(solve_load_cases(pb, x), pb).item()
    for e in rng.choice(24, size=5, replace=False):
        x2 = x.copy()
        x2.flat[e] += 0.1
        assert objective(solve_load_cases(pb, x2), pb).item() <= base


def test_inverter_solid_block_positive():
    pb = make_problem("inverter", 8, 4, 0.3, 3)
    U1, U2 = solve_load_cases(pb, np.ones((4, 8)))
    assert U1.data[pb.output_dof] > 0  # pushing in pushes the far side out
    assert objective_inverter(U1, U2, pb).item() > 0


def test_inverter_w_zero_is_geometry_advantage(rng):
    pb = make_problem("inverter", 8, 4, 0.3, 3)
    U1, U2 = solve_load_cases(pb, rng.uniform(0.1, 1, size=(4, 8)))
    ga = U1.data[pb.output_dof] / U1.data[pb.input_dof]
    assert objective_inverter(U1, U2, pb, w=0.0).item() == pytest.approx(ga, rel=1e-14)


def test_inverter_stiffness_term_is_work_conjugate(rng):
    pb = make_problem("inverter", 8, 4, 0.3, 3)
    U1, U2 = solve_load_cases(pb, rng.uniform(0.1, 1, size=(4, 8)))
    full = objective_inverter(U1, U2, pb, w=1.0).item()
    ratio = objective_inverter(U1, U2, pb, w=0.0).item()
    c1 = pb.load_vector(0) @ U1.data
    c2 = pb.load_vector(1) @ U2.data
    assert c1 > 0 and c2 > 0
    assert full - ratio == pytest.approx(c1 + c2, rel=1e-12)


def test_target_term_vanishes_at_target(rng):
    pb = make_problem("inverter", 8, 4, 0.3, 3)
    U1, U2 = solve_load_cases(pb, rng.uniform(0.1, 1, size=(4, 8)))
    u2 = float(U1.data[pb.output_dof])
    assert objective_target(U1, U2, pb, w=0.0, target=u2).item() == 0.0
    assert objective_target(U1, U2, pb, w=0.0, target=u2 - 3).item() == pytest.approx(3.0)


def test_zero_input_displacement_rejected():
    pb = make_problem("inverter", 4, 4, 0.3, 3)
    z = Tensor(np.zeros(pb.mesh.ndof))
    with pytest.raises(ProblemError, match="zero"):
        objective_inverter(z, z, pb)


def test_target_needs_value():
    pb = make_problem("inverter", 4, 4, 0.3, 3)
    U = Tensor(np.ones(pb.mesh.ndof))
    with pytest.raises(ProblemError):
        objective_target(U, U, pb)


def test_monitored_dof_missing():
    mesh = Mesh(2, 2)
    pb = ProblemSpec("x", mesh, Material(), [0, 1], [{5: 1.0}], 0.5)
    with pytest.raises(ProblemError, match="monitored"):
        objective_displacement(np.ones(mesh.ndof), pb)


def test_inverter_theta_gradient():
    assert check_end_to_end("inverter").passed


def test_target_theta_gradient():
    assert check_end_to_end("inverter", target=-100.0).passed
