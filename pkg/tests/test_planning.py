import json
import math

import numpy as np
import pytest

from lpp.dynamics import ControlInput, DiscreteState, lgvi_step
from lpp.planning import (
    CliqueError,
    DroneSpec,
    IKSpec,
    JointSpec,
    Obstacle,
    PlanningPOP,
    SpecError,
    build_drone_pop,
    build_ik_pop,
    clique_partition,
    default_landing_spec,
    dump_spec,
    fk_poses,
    load_spec,
    presolve,
    reach_radius,
)
from lpp.poly import Polynomial, VariableRegistry


def planar_joint(length, limits=None):
    return JointSpec(offset=[length, 0.0, 0.0], reorientation=np.eye(3), limits=limits)


def planar_arm(lengths, angles):
    """Arm spec whose target is the forward kinematics of the given angles."""
    joints = tuple(planar_joint(L) for L in lengths)
    probe = IKSpec(joints=joints, target_rotation=np.eye(3), target_position=[0, 0, 0])
    R, p = fk_poses(probe, angles)[-1]
    return IKSpec(joints=joints, target_rotation=R, target_position=p)


def bind_ik_point(pop, spec, angles):
    pt = {}
    for k, (R, p) in enumerate(fk_poses(spec, angles)):
        if k == 0:
            continue
        for c in range(3):
            for r in range(3):
                pt[pop.layout[f"pose{k}.R"][3 * c + r]] = R[r, c]
        for i in range(3):
            pt[pop.layout[f"pose{k}.p"][i]] = p[i]
    for k, th in enumerate(angles, start=1):
        pt[pop.layout[f"joint{k}.cos"][0]] = math.cos(th)
        pt[pop.layout[f"joint{k}.sin"][0]] = math.sin(th)
    return pt


# ------------------------------------------------------------------ IK build


def test_one_dof_z90_feasible_set():
    spec = planar_arm([1.0], [math.pi / 2])
    pop = build_ik_pop(spec)
    good = bind_ik_point(pop, spec, [math.pi / 2])
    assert max(abs(e.evaluate(good)) for e in pop.equalities) <= 1e-12
    # any other angle violates the terminal rows, so (0, 1) is the only
    # feasible angle pair and hence the minimum
    bad = bind_ik_point(pop, spec, [math.pi / 3])
    assert max(abs(e.evaluate(bad)) for e in pop.equalities) > 1e-2


def test_six_dof_variable_and_constraint_counts():
    spec = planar_arm([1.0, 0.9, 0.8, 0.7, 0.6, 0.5], [0.1, -0.2, 0.3, -0.4, 0.5, -0.6])
    pop = build_ik_pop(spec)
    # 6 joints x (2 angle vars + 12 pose vars) + 12 base vars = 96 registered;
    # the base pose is fixed by substitution so 84 remain free
    assert len(pop.registry) == 96
    assert len(pop.free_variables) == 84
    n_so3 = 6 * 15
    n_chain = 6 * 12
    n_circle = 6
    n_terminal = 12
    assert len(pop.equalities) == n_so3 + n_chain + n_circle + n_terminal
    assert len(pop.cliques) == 6
    assert [len(c) for c in pop.cliques] == [14] + [26] * 5


def test_joint_limit_expansion():
    # symmetric interval about 0: cbar=1, sbar=0, clim=cos(half-width)
    spec_half_pi = planar_arm([1.0], [0.3])
    spec_half_pi = IKSpec(
        joints=(planar_joint(1.0, limits=(-math.pi / 2, math.pi / 2)),),
        target_rotation=spec_half_pi.target_rotation,
        target_position=spec_half_pi.target_position,
    )
    pop = build_ik_pop(spec_half_pi)
    (g,) = pop.inequalities
    c_var = pop.layout["joint1.cos"][0]
    s_var = pop.layout["joint1.sin"][0]
    # c*1 + s*0 - cos(pi/2) >= 0
    assert g.evaluate({c_var: 1.0, s_var: 0.0}) == pytest.approx(1.0 - math.cos(math.pi / 2))
    assert g.evaluate({c_var: 0.0, s_var: 1.0}) == pytest.approx(-math.cos(math.pi / 2), abs=1e-15)

    spec_quarter = IKSpec(
        joints=(planar_joint(1.0, limits=(-math.pi / 4, math.pi / 4)),),
        target_rotation=spec_half_pi.target_rotation,
        target_position=spec_half_pi.target_position,
    )
    pop2 = build_ik_pop(spec_quarter)
    # cos(theta - 0) >= cos(pi/4): boundary angle is feasible with equality
    c2 = math.cos(math.pi / 4)
    (g2,) = pop2.inequalities
    cv, sv = pop2.layout["joint1.cos"][0], pop2.layout["joint1.sin"][0]
    assert g2.evaluate({cv: c2, sv: math.sin(math.pi / 4)}) == pytest.approx(0.0, abs=1e-15)
    assert g2.evaluate({cv: 1.0, sv: 0.0}) == pytest.approx(1 - c2)


def test_fk_satisfies_all_but_terminal():
    rng = np.random.default_rng(5)
    spec = planar_arm([1.0, 0.8, 0.6], [0.4, -0.7, 1.1])
    pop = build_ik_pop(spec)
    n_terminal = 12
    other, terminal = pop.equalities[:-n_terminal], pop.equalities[-n_terminal:]
    for _ in range(5):
        angles = rng.uniform(-math.pi, math.pi, 3)
        pt = bind_ik_point(pop, spec, angles)
        assert max(abs(e.evaluate(pt)) for e in other) <= 1e-12
        assert max(abs(e.evaluate(pt)) for e in terminal) > 1e-6  # generic angles miss the target


def test_reach_radius():
    spec = planar_arm([1.0, 0.8], [0.1, 0.2])
    assert reach_radius(spec) == pytest.approx(1.8)


def test_ik_degree_bound_up_to_10_dof():
    for dof in (1, 4, 10):
        spec = planar_arm([1.0] * dof, [0.1] * dof)
        pop = build_ik_pop(spec)
        assert pop.max_degree() <= 2


def test_ik_clique_structure_constant_in_dof():
    for dof in (4, 8):
        spec = planar_arm([1.0] * dof, [0.1] * dof)
        pop = build_ik_pop(spec)
        assert len(pop.cliques) == dof
        assert all(len(c) == 26 for c in pop.cliques[1:])
        clique_partition(pop)


# ------------------------------------------------------------------ drone build


def table_spec(**kw):
    return default_landing_spec(**kw)


def test_drone_objective_weights():
    spec = table_spec(horizon=2, step=0.1667)
    pop = build_drone_pop(spec)
    obj = pop.objective

    def sq_coeff(var):
        from lpp.poly import Monomial

        return obj.coefficient(Monomial.of(var, 2))

    # terminal step N=2 carries P = [100, 10, 100, 100]
    assert sq_coeff(pop.layout["step2.R"][0]) == pytest.approx(100.0)
    assert sq_coeff(pop.layout["step2.F"][0]) == pytest.approx(10.0)
    assert sq_coeff(pop.layout["step2.p"][0]) == pytest.approx(100.0)
    assert sq_coeff(pop.layout["step2.v"][0]) == pytest.approx(100.0)
    # stage step 1 carries Q = [0.1, 10, 0.1, 1], inputs U = [0.1, 0.1]
    assert sq_coeff(pop.layout["step1.R"][0]) == pytest.approx(0.1)
    assert sq_coeff(pop.layout["step1.F"][0]) == pytest.approx(10.0)
    assert sq_coeff(pop.layout["step1.p"][0]) == pytest.approx(0.1)
    assert sq_coeff(pop.layout["step1.v"][0]) == pytest.approx(1.0)
    assert sq_coeff(pop.layout["step1.tau"][0]) == pytest.approx(0.1)
    assert sq_coeff(pop.layout["step1.fz"][0]) == pytest.approx(0.1)
    assert sq_coeff(pop.layout["step2.tau"][0]) == pytest.approx(0.1)


def test_drone_hover_equilibrium():
    spec = table_spec(horizon=2, step=0.25)
    spec = DroneSpec(**{**{f: getattr(spec, f) for f in spec.__dataclass_fields__}, "initial_position": np.zeros(3)})
    pop = build_drone_pop(spec)
    pt = {}
    for k in (1, 2):
        for c in range(3):
            for r in range(3):
                pt[pop.layout[f"step{k}.R"][3 * c + r]] = float(np.eye(3)[r, c])
                pt[pop.layout[f"step{k}.F"][3 * c + r]] = float(np.eye(3)[r, c])
        for i in range(3):
            pt[pop.layout[f"step{k}.p"][i]] = 0.0
            pt[pop.layout[f"step{k}.v"][i]] = 0.0
            pt[pop.layout[f"step{k}.tau"][i]] = 0.0
        pt[pop.layout[f"step{k}.fz"][0]] = 0.5 * 9.81
    assert max(abs(e.evaluate(pt)) for e in pop.equalities) <= 1e-12


def test_obstacle_one_values():
    ob = Obstacle.cylinder_xy(0.0, 0.5, 0.5)
    assert ob.value([0.0, 0.5, 2.0]) == pytest.approx(-0.25)
    assert ob.value([1.0, 1.0, 3.0]) == pytest.approx(1.0)


def test_drone_infeasible_bounds_rejected():
    with pytest.raises(ValueError):
        DroneSpec(
            horizon=2,
            step=0.1,
            mass=0.5,
            inertia=np.diag([0.3, 0.2, 0.3]),
            gravity=[0, 0, -9.81],
            initial_rotation=np.eye(3),
            initial_position=[1, 1, 3],
            initial_pose_change=np.eye(3),
            initial_velocity=[0, 0, 0],
            torque_bounds=(5.0, -5.0),
        )


def bind_drone_trajectory(pop, spec, seed=0):
    body = spec.body
    h = spec.step
    s = DiscreteState(spec.initial_rotation, spec.initial_position, spec.initial_pose_change, spec.initial_velocity)
    rng = np.random.default_rng(seed)
    pt = {}
    for k in range(1, spec.horizon + 1):
        u = ControlInput(torque=rng.uniform(-1, 1, 3), thrust_z=rng.uniform(0, 8))
        s = lgvi_step(s, u, body, h, gravity_rotation=spec.gravity_rotation)
        for c in range(3):
            for r in range(3):
                pt[pop.layout[f"step{k}.R"][3 * c + r]] = s.R[r, c]
                pt[pop.layout[f"step{k}.F"][3 * c + r]] = s.F[r, c]
        for i in range(3):
            pt[pop.layout[f"step{k}.p"][i]] = s.p[i]
            pt[pop.layout[f"step{k}.v"][i]] = s.v[i]
            pt[pop.layout[f"step{k}.tau"][i]] = u.torque[i]
        pt[pop.layout[f"step{k}.fz"][0]] = u.thrust_z
    return pt


def test_integrator_trajectory_satisfies_drone_equalities():
    spec = table_spec(horizon=4, step=0.25, pitch_deg=90.0, obstacle=2)
    pop = build_drone_pop(spec)
    pt = bind_drone_trajectory(pop, spec, seed=3)
    assert max(abs(e.evaluate(pt)) for e in pop.equalities) <= 1e-10


def test_drone_degree_bound_and_cliques():
    for N in (1, 3, 10):
        spec = table_spec(horizon=N, step=0.25)
        pop = build_drone_pop(spec)
        assert pop.max_degree() <= 2
        assert len(pop.cliques) == N
        assert len(pop.cliques[0]) == 28
        assert all(len(c) == 56 for c in pop.cliques[1:])
        clique_partition(pop)


def test_drone_gravity_rotation_variant_builds():
    spec = table_spec(horizon=2, step=0.25)
    spec = DroneSpec(**{**{f: getattr(spec, f) for f in spec.__dataclass_fields__}, "gravity_rotation": "as_printed"})
    pop = build_drone_pop(spec)
    pt = bind_drone_trajectory(pop, spec, seed=1)
    assert max(abs(e.evaluate(pt)) for e in pop.equalities) <= 1e-10


# ------------------------------------------------------------------ cliques


def _toy_pop(cliques, eqs, reg, obj=None):
    return PlanningPOP(
        registry=reg,
        objective=obj if obj is not None else Polynomial.zero(reg),
        equalities=eqs,
        inequalities=[],
        cliques=cliques,
        layout={},
    )


def test_clique_chain_rip_holds():
    reg = VariableRegistry()
    xs = [reg.add(f"x{i}") for i in range(4)]
    cliques = [(xs[0], xs[1]), (xs[1], xs[2]), (xs[2], xs[3])]
    eqs = [Polynomial.variable(xs[i], reg) * Polynomial.variable(xs[i + 1], reg) for i in range(3)]
    out = clique_partition(_toy_pop(cliques, eqs, reg))
    assert len(out) == 3


def test_single_clique_trivially_valid():
    reg = VariableRegistry()
    xs = [reg.add(f"x{i}") for i in range(3)]
    pop = _toy_pop([tuple(xs)], [Polynomial.variable(xs[0], reg) * Polynomial.variable(xs[2], reg)], reg)
    clique_partition(pop)


def test_unsupported_constraint_reported():
    reg = VariableRegistry()
    xs = [reg.add(f"x{i}") for i in range(4)]
    cliques = [(xs[0], xs[1]), (xs[2], xs[3])]
    coupling = Polynomial.variable(xs[1], reg) * Polynomial.variable(xs[2], reg)
    with pytest.raises(CliqueError, match="equality 0"):
        clique_partition(_toy_pop(cliques, [coupling], reg))


def test_rip_violation_reported():
    reg = VariableRegistry()
    xs = [reg.add(f"x{i}") for i in range(5)]
    # clique 2 overlaps cliques 0 and 1 but its overlap fits in neither alone
    cliques = [(xs[0], xs[1]), (xs[2], xs[3]), (xs[1], xs[3], xs[4])]
    with pytest.raises(CliqueError, match="clique 2"):
        clique_partition(_toy_pop(cliques, [], reg))


# ------------------------------------------------------------------ presolve


def test_presolve_collapses_two_dof_ik_to_angles():
    spec = planar_arm([1.0, 0.8], [0.6, -0.9])
    pop = build_ik_pop(spec)
    pre = presolve(pop)
    assert len(pre.free_variables) == 4
    assert pre.max_degree() <= 2
    clique_partition(pre)
    angles = [0.6, -0.9]
    pt_full = bind_ik_point(pop, spec, angles)
    pt_red = {v: pt_full[v] for v in pre.free_variables}
    assert max(abs(e.evaluate(pt_red)) for e in pre.equalities) <= 1e-12
    assert pre.objective.evaluate(pt_red) == pytest.approx(pop.objective.evaluate(pt_full), rel=1e-12)
    # substitution records rebuild the full assignment
    full = pre.complete_point(pt_red)
    for v, x in pt_full.items():
        assert full[v] == pytest.approx(x, abs=1e-12)


def test_presolve_detects_contradiction():
    reg = VariableRegistry()
    x = reg.add("x")
    one = Polynomial.constant(reg, 1.0)
    two = Polynomial.constant(reg, 2.0)
    xv = Polynomial.variable(x, reg)
    pop = _toy_pop([(x,)], [xv - one, xv - two], reg)
    pre = presolve(pop)
    assert pre.infeasible_reason is not None


def test_presolve_drops_redundant_rows():
    reg = VariableRegistry()
    x, y = reg.add("x"), reg.add("y")
    xv, yv = Polynomial.variable(x, reg), Polynomial.variable(y, reg)
    pop = _toy_pop([(x, y)], [xv - yv, xv - yv], reg, obj=xv * xv + yv * yv)
    pre = presolve(pop)
    assert pre.infeasible_reason is None
    assert len(pre.equalities) == 0
    assert len(pre.free_variables) == 1


# ------------------------------------------------------------------ spec io


def test_ik_spec_json_round_trip():
    spec = planar_arm([1.0, 0.8], [0.3, 0.4])
    spec = IKSpec(
        joints=(planar_joint(1.0, limits=(-1.2, 1.5)), spec.joints[1]),
        target_rotation=spec.target_rotation,
        target_position=spec.target_position,
        ball_radius=5.0,
    )
    data = json.loads(json.dumps(dump_spec(spec)))
    back = load_spec(data)
    assert isinstance(back, IKSpec)
    assert back.dof == 2
    assert back.joints[0].limits == (-1.2, 1.5)
    assert np.allclose(back.target_rotation, spec.target_rotation)
    assert back.ball_radius == 5.0


def test_drone_spec_json_round_trip():
    spec = table_spec(horizon=4, step=0.125, pitch_deg=120.0, obstacle=2)
    back = load_spec(json.dumps(dump_spec(spec)))
    assert isinstance(back, DroneSpec)
    assert back.horizon == 4 and back.step == 0.125
    assert np.allclose(back.initial_rotation, spec.initial_rotation)
    assert len(back.obstacles) == 1
    assert back.obstacles[0].value([0.6, 0.5, 1.0]) == pytest.approx(-0.25)


def test_spec_errors():
    with pytest.raises(SpecError):
        load_spec("{not json")
    with pytest.raises(SpecError):
        load_spec({"schema": "other", "kind": "ik"})
    with pytest.raises(SpecError):
        load_spec({"schema": "lpp-1", "kind": "mystery"})
    with pytest.raises(SpecError):
        load_spec({"schema": "lpp-1", "kind": "ik", "joints": []})
