"""Builders that translate IK and drone-landing specs into quadratic programs.

A :class:`PlanningPOP` bundles a polynomial objective, equality and inequality
constraints, a chain of variable cliques satisfying the running intersection
property, and a layout map from semantic slots to variable blocks.  Everything
emitted here has degree <= 2.

:func:`presolve` performs exact affine elimination: any equality row of degree
<= 1 lets one variable be replaced by an affine expression of the others,
which never raises the degree of a quadratic program and never changes its
optimum.  Substitutions are recorded so extracted solutions can be completed
back to the full variable set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from lpp.dynamics import (
    BodyInertia,
    InputVars,
    StateVars,
    _const_matrix,
    _mat_mul,
    dynamics_polynomials,
    dynamics_rows,
    is_rotation,
    so3_polynomials,
)
from lpp.poly import Monomial, Polynomial, Variable, VariableRegistry

__all__ = [
    "JointSpec",
    "IKSpec",
    "Obstacle",
    "DroneSpec",
    "PlanningPOP",
    "build_ik_pop",
    "build_drone_pop",
    "clique_partition",
    "CliqueError",
    "presolve",
    "fk_poses",
    "reach_radius",
    "default_landing_spec",
    "SpecError",
    "load_spec",
    "dump_spec",
]

SCHEMA = "lpp-1"


# --------------------------------------------------------------------------
# specs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class JointSpec:
    """One revolute joint: link offset (rotates with the joint) and the constant
    reorientation applied before the joint acts."""

    offset: np.ndarray
    reorientation: np.ndarray
    limits: tuple[float, float] | None = None
    reference: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))
        object.__setattr__(self, "reorientation", np.asarray(self.reorientation, dtype=float))
        if self.offset.shape != (3,):
            raise ValueError("joint offset must be a 3-vector")
        if not is_rotation(self.reorientation, 1e-9):
            raise ValueError("joint reorientation must be a rotation matrix")
        if self.limits is not None:
            lo, hi = self.limits
            if not lo < hi:
                raise ValueError("joint limits must satisfy lo < hi")
        cr, sr = self.reference
        if abs(cr * cr + sr * sr - 1.0) > 1e-9:
            raise ValueError("joint reference must lie on the unit circle")


@dataclass(frozen=True)
class IKSpec:
    """Serial-manipulator inverse kinematics problem description."""

    joints: tuple[JointSpec, ...]
    target_rotation: np.ndarray
    target_position: np.ndarray
    ball_radius: float | None = None

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("need at least one joint")
        object.__setattr__(self, "target_rotation", np.asarray(self.target_rotation, dtype=float))
        object.__setattr__(self, "target_position", np.asarray(self.target_position, dtype=float))
        if not is_rotation(self.target_rotation, 1e-9):
            raise ValueError("target rotation is not in SO(3)")
        if self.target_position.shape != (3,):
            raise ValueError("target position must be a 3-vector")

    @property
    def dof(self) -> int:
        return len(self.joints)


@dataclass(frozen=True)
class Obstacle:
    """Quadratic free-space inequality p^T quad p + lin . p + const >= 0."""

    quad: np.ndarray
    lin: np.ndarray
    const: float

    def __post_init__(self):
        object.__setattr__(self, "quad", np.asarray(self.quad, dtype=float))
        object.__setattr__(self, "lin", np.asarray(self.lin, dtype=float))

    def value(self, p) -> float:
        p = np.asarray(p, dtype=float)
        return float(p @ self.quad @ p + self.lin @ p + self.const)

    @staticmethod
    def cylinder_xy(cx: float, cy: float, radius: float) -> "Obstacle":
        """Keep-out cylinder: (x-cx)^2 + (y-cy)^2 >= radius^2."""
        return Obstacle(
            quad=np.diag([1.0, 1.0, 0.0]),
            lin=np.array([-2.0 * cx, -2.0 * cy, 0.0]),
            const=cx * cx + cy * cy - radius * radius,
        )


@dataclass(frozen=True)
class DroneSpec:
    """Drone landing problem: horizon, body, initial state, bounds, costs."""

    horizon: int
    step: float
    mass: float
    inertia: np.ndarray
    gravity: np.ndarray
    initial_rotation: np.ndarray
    initial_position: np.ndarray
    initial_pose_change: np.ndarray
    initial_velocity: np.ndarray
    torque_bounds: tuple[float, float] | None = (-5.0, 5.0)
    thrust_bounds: tuple[float, float] | None = None
    obstacles: tuple[Obstacle, ...] = ()
    height_min: float | None = 0.0
    terminal_weights: tuple[float, float, float, float] = (100.0, 10.0, 100.0, 100.0)
    stage_weights: tuple[float, float, float, float] = (0.1, 10.0, 0.1, 1.0)
    input_weights: tuple[float, float] = (0.1, 0.1)
    gravity_rotation: str = "transpose"
    ball_radius: float | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.step <= 0:
            raise ValueError("step must be positive")
        for name in ("inertia", "gravity", "initial_rotation", "initial_position",
                     "initial_pose_change", "initial_velocity"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not is_rotation(self.initial_rotation, 1e-9):
            raise ValueError("initial rotation is not in SO(3)")
        if not is_rotation(self.initial_pose_change, 1e-9):
            raise ValueError("initial pose change is not in SO(3)")
        for b in (self.torque_bounds, self.thrust_bounds):
            if b is not None and not b[0] <= b[1]:
                raise ValueError("bounds must satisfy min <= max")

    @property
    def body(self) -> BodyInertia:
        return BodyInertia(self.mass, self.inertia, self.gravity)


def default_landing_spec(
    horizon: int = 5,
    step: float = 0.25,
    pitch_deg: float = 0.0,
    obstacle: int | None = None,
) -> DroneSpec:
    """Landing benchmark: 0.5 kg body, diag(0.3, 0.2, 0.3) inertia, start at
    (1, 1, 3) with zero twist and a given initial pitch, land at the origin."""
    th = np.deg2rad(pitch_deg)
    ry = np.array(
        [
            [np.cos(th), 0.0, np.sin(th)],
            [0.0, 1.0, 0.0],
            [-np.sin(th), 0.0, np.cos(th)],
        ]
    )
    obstacles: tuple[Obstacle, ...] = ()
    if obstacle == 1:
        obstacles = (Obstacle.cylinder_xy(0.0, 0.5, 0.5),)
    elif obstacle == 2:
        obstacles = (Obstacle.cylinder_xy(0.6, 0.5, 0.5),)
    elif obstacle is not None:
        raise ValueError("obstacle must be None, 1 or 2")
    return DroneSpec(
        horizon=horizon,
        step=step,
        mass=0.5,
        inertia=np.diag([0.3, 0.2, 0.3]),
        gravity=np.array([0.0, 0.0, -9.81]),
        initial_rotation=ry,
        initial_position=np.array([1.0, 1.0, 3.0]),
        initial_pose_change=np.eye(3),
        initial_velocity=np.zeros(3),
        obstacles=obstacles,
    )


# --------------------------------------------------------------------------
# the POP container
# --------------------------------------------------------------------------


@dataclass
class PlanningPOP:
    """A quadratic program plus its clique structure and variable layout."""

    registry: VariableRegistry
    objective: Polynomial
    equalities: list[Polynomial]
    inequalities: list[Polynomial]
    cliques: list[tuple[Variable, ...]]
    layout: dict[str, tuple[Variable, ...]]
    substitutions: list[tuple[Variable, Polynomial]] = field(default_factory=list)
    infeasible_reason: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def free_variables(self) -> tuple[Variable, ...]:
        """Variables still present in some clique (i.e. not substituted away)."""
        seen: set[int] = set()
        out = []
        for c in self.cliques:
            for v in c:
                if v.index not in seen:
                    seen.add(v.index)
                    out.append(v)
        return tuple(sorted(out, key=lambda v: v.index))

    def max_degree(self) -> int:
        polys = [self.objective, *self.equalities, *self.inequalities]
        return max((p.degree for p in polys if not p.is_zero()), default=0)

    def complete_point(self, point: dict[Variable, float]) -> dict[Variable, float]:
        """Fill substituted variables back in, newest substitution first."""
        full = dict(point)
        for var, expr in reversed(self.substitutions):
            full[var] = expr.evaluate(full)
        return full

    def constraint_violation(self, point: dict[Variable, float]) -> tuple[float, float]:
        """(max |equality|, max inequality shortfall) at a full assignment."""
        eq = max((abs(p.evaluate(point)) for p in self.equalities), default=0.0)
        ineq = max((max(0.0, -p.evaluate(point)) for p in self.inequalities), default=0.0)
        return eq, ineq


class CliqueError(ValueError):
    """A constraint escapes every clique, or the chain violates running intersection."""


def clique_partition(pop: PlanningPOP) -> list[tuple[Variable, ...]]:
    """Validate the clique chain and return it.

    Checks that every constraint and every objective term is supported inside
    at least one clique, and that the running intersection property holds:
    each clique's overlap with the union of its predecessors is contained in
    a single earlier clique.
    """
    sets = [frozenset(v.index for v in c) for c in pop.cliques]
    if not sets:
        raise CliqueError("no cliques present")

    def supported(s: frozenset[int]) -> bool:
        return any(s <= c for c in sets)

    for i, p in enumerate(pop.equalities):
        if not supported(p.support_vars()):
            raise CliqueError(f"equality {i} is not supported by any clique")
    for i, p in enumerate(pop.inequalities):
        if not supported(p.support_vars()):
            raise CliqueError(f"inequality {i} is not supported by any clique")
    for m in pop.objective.terms:
        if not supported(frozenset(m.variables())):
            raise CliqueError(f"objective term {m!r} is not supported by any clique")

    union: set[int] = set(sets[0])
    for k in range(1, len(sets)):
        overlap = sets[k] & union
        if overlap and not any(overlap <= sets[s] for s in range(k)):
            raise CliqueError(f"running intersection violated at clique {k}")
        union |= sets[k]
    return list(pop.cliques)


# --------------------------------------------------------------------------
# shared symbolic helpers
# --------------------------------------------------------------------------


def _pose_matrix(vars9, reg):
    M = [[None] * 3 for _ in range(3)]
    for c in range(3):
        for r in range(3):
            M[r][c] = Polynomial.variable(vars9[3 * c + r], reg)
    return M


def _rz_poly(c: Polynomial, s: Polynomial, reg) -> list[list[Polynomial]]:
    zero = Polynomial.zero(reg)
    one = Polynomial.constant(reg, 1.0)
    return [[c, -1.0 * s, zero], [s, c, zero], [zero, zero, one]]


def _mat_vec(M, v):
    return [sum((M[r][k] * v[k] for k in range(3)), start=M[0][0].scale(0.0)) for r in range(3)]


def _const_vec(v, reg):
    return [Polynomial.constant(reg, float(x)) for x in v]


def _ball_rows(pop_vars_by_clique, radius, reg):
    rows = []
    for clique in pop_vars_by_clique:
        row = Polynomial.constant(reg, radius * radius)
        for v in clique:
            row = row - Polynomial.variable(v, reg) * Polynomial.variable(v, reg)
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# IK builder
# --------------------------------------------------------------------------


def build_ik_pop(spec: IKSpec) -> PlanningPOP:
    """Quadratic program for N-joint IK with intermediate pose variables.

    Variables: per joint k, the angle pair (c_k, s_k) and the reached pose
    X_k (9 rotation entries column-major + 3 position entries).  The base
    pose is registered and immediately fixed to the identity by substitution.
    Cliques chain consecutive joints: I_k = {c_k, s_k} + poses X_{k-1}, X_k.
    """
    reg = VariableRegistry()
    N = spec.dof
    layout: dict[str, tuple[Variable, ...]] = {}
    subs: list[tuple[Variable, Polynomial]] = []

    base_R = tuple(reg.add_block("base.R", 9))
    base_p = tuple(reg.add_block("base.p", 3))
    layout["pose0.R"], layout["pose0.p"] = base_R, base_p
    eye = np.eye(3)
    for c in range(3):
        for r in range(3):
            subs.append((base_R[3 * c + r], Polynomial.constant(reg, eye[r, c])))
    for i in range(3):
        subs.append((base_p[i], Polynomial.constant(reg, 0.0)))

    cs: list[tuple[Variable, Variable]] = []
    poses: list[tuple[tuple[Variable, ...], tuple[Variable, ...]]] = []
    for k in range(1, N + 1):
        ck = reg.add(f"joint{k}.c")
        sk = reg.add(f"joint{k}.s")
        cs.append((ck, sk))
        layout[f"joint{k}.cos"], layout[f"joint{k}.sin"] = (ck,), (sk,)
        Rk = tuple(reg.add_block(f"pose{k}.R", 9))
        pk = tuple(reg.add_block(f"pose{k}.p", 3))
        poses.append((Rk, pk))
        layout[f"pose{k}.R"], layout[f"pose{k}.p"] = Rk, pk

    equalities: list[Polynomial] = []
    inequalities: list[Polynomial] = []
    one = Polynomial.constant(reg, 1.0)

    # kinematic chain, one step per joint
    prev_R: list[list[Polynomial]] = _const_matrix(eye, reg)
    prev_p: list[Polynomial] = _const_vec(np.zeros(3), reg)
    for k in range(1, N + 1):
        j = spec.joints[k - 1]
        ck, sk = cs[k - 1]
        cpoly, spoly = Polynomial.variable(ck, reg), Polynomial.variable(sk, reg)
        rz = _rz_poly(cpoly, spoly, reg)
        R_step = _mat_mul(_mat_mul(prev_R, rz), _const_matrix(j.reorientation, reg))
        p_step = [prev_p[i] + t for i, t in enumerate(_mat_vec(prev_R, _mat_vec(rz, _const_vec(j.offset, reg))))]
        Rk, pk = poses[k - 1]
        for c in range(3):
            for r in range(3):
                equalities.append(Polynomial.variable(Rk[3 * c + r], reg) - R_step[r][c])
        for i in range(3):
            equalities.append(Polynomial.variable(pk[i], reg) - p_step[i])
        prev_R = _pose_matrix(Rk, reg)
        prev_p = [Polynomial.variable(v, reg) for v in pk]

    # rotation-group membership for every reached pose
    for Rk, _ in poses:
        equalities.extend(so3_polynomials(Rk, reg))

    # unit circle per joint
    for ck, sk in cs:
        equalities.append(
            Polynomial.variable(ck, reg) * Polynomial.variable(ck, reg)
            + Polynomial.variable(sk, reg) * Polynomial.variable(sk, reg)
            - one
        )

    # terminal pose, 12 affine rows
    Rn, pn = poses[-1]
    for c in range(3):
        for r in range(3):
            equalities.append(
                Polynomial.variable(Rn[3 * c + r], reg)
                - Polynomial.constant(reg, spec.target_rotation[r, c])
            )
    for i in range(3):
        equalities.append(
            Polynomial.variable(pn[i], reg) - Polynomial.constant(reg, spec.target_position[i])
        )

    # joint limits: cos(theta - mid) >= cos(half) expands to c cbar + s sbar >= clim
    for k, j in enumerate(spec.joints, start=1):
        if j.limits is None:
            continue
        lo, hi = j.limits
        mid, half = (hi + lo) / 2.0, (hi - lo) / 2.0
        cbar, sbar, clim = np.cos(mid), np.sin(mid), np.cos(half)
        ck, sk = cs[k - 1]
        inequalities.append(
            Polynomial.variable(ck, reg).scale(cbar)
            + Polynomial.variable(sk, reg).scale(sbar)
            - Polynomial.constant(reg, clim)
        )

    # objective: stay near the reference angle
    objective = Polynomial.zero(reg)
    for (ck, sk), j in zip(cs, spec.joints):
        cr, sr = j.reference
        dc = Polynomial.variable(ck, reg) - Polynomial.constant(reg, cr)
        ds = Polynomial.variable(sk, reg) - Polynomial.constant(reg, sr)
        objective = objective + dc * dc + ds * ds

    cliques: list[tuple[Variable, ...]] = []
    for k in range(1, N + 1):
        ck, sk = cs[k - 1]
        members: list[Variable] = [ck, sk]
        if k >= 2:
            Rp, pp = poses[k - 2]
            members += list(Rp) + list(pp)
        Rk, pk = poses[k - 1]
        members += list(Rk) + list(pk)
        cliques.append(tuple(members))

    if spec.ball_radius is not None:
        inequalities.extend(_ball_rows(cliques, spec.ball_radius, reg))

    return PlanningPOP(
        registry=reg,
        objective=objective,
        equalities=equalities,
        inequalities=inequalities,
        cliques=cliques,
        layout=layout,
        substitutions=subs,
        meta={"kind": "ik", "dof": N},
    )


def fk_poses(spec: IKSpec, angles: Sequence[float]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Numeric forward kinematics: poses X_0 .. X_N for the given joint angles."""
    if len(angles) != spec.dof:
        raise ValueError("need one angle per joint")
    R, p = np.eye(3), np.zeros(3)
    out = [(R.copy(), p.copy())]
    for th, j in zip(angles, spec.joints):
        c, s = np.cos(th), np.sin(th)
        rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        p = p + R @ (rz @ j.offset)
        R = R @ rz @ j.reorientation
        out.append((R.copy(), p.copy()))
    return out


def reach_radius(spec: IKSpec) -> float:
    """Upper bound on reachable distance: sum of link offset lengths."""
    return float(sum(np.linalg.norm(j.offset) for j in spec.joints))


# --------------------------------------------------------------------------
# drone builder
# --------------------------------------------------------------------------


def build_drone_pop(spec: DroneSpec) -> PlanningPOP:
    """Quadratic program for the drone landing task.

    Variables per step k in 1..N: R_k(9), F_k(9), p_k(3), v_k(3), tau_k(3),
    fz_k(1).  Step 0 is fixed by substituting the initial condition into the
    first transition.  Cliques pair consecutive steps.
    """
    reg = VariableRegistry()
    N = spec.horizon
    body = spec.body
    h = spec.step
    layout: dict[str, tuple[Variable, ...]] = {}

    steps: list[StateVars] = []
    inputs: list[InputVars] = []
    for k in range(1, N + 1):
        R = tuple(reg.add_block(f"step{k}.R", 9))
        F = tuple(reg.add_block(f"step{k}.F", 9))
        p = tuple(reg.add_block(f"step{k}.p", 3))
        v = tuple(reg.add_block(f"step{k}.v", 3))
        tau = tuple(reg.add_block(f"step{k}.tau", 3))
        fz = reg.add(f"step{k}.fz")
        steps.append(StateVars(R=R, p=p, F=F, v=v))
        inputs.append(InputVars(torque=tau, thrust_z=fz))
        for name, block in (("R", R), ("F", F), ("p", p), ("v", v), ("tau", tau), ("fz", (fz,))):
            layout[f"step{k}.{name}"] = block

    equalities: list[Polynomial] = []
    inequalities: list[Polynomial] = []

    # step 0 -> 1 transition with the initial condition substituted in
    s1 = steps[0]
    equalities.extend(
        dynamics_rows(
            _const_matrix(spec.initial_rotation, reg),
            _const_vec(spec.initial_position, reg),
            _const_matrix(spec.initial_pose_change, reg),
            _const_vec(spec.initial_velocity, reg),
            _pose_matrix(s1.R, reg),
            [Polynomial.variable(v, reg) for v in s1.p],
            _pose_matrix(s1.F, reg),
            [Polynomial.variable(v, reg) for v in s1.v],
            [Polynomial.variable(t, reg) for t in inputs[0].torque],
            Polynomial.variable(inputs[0].thrust_z, reg),
            body,
            h,
            reg,
            gravity_rotation=spec.gravity_rotation,
        )
    )
    for k in range(1, N):
        equalities.extend(
            dynamics_polynomials(steps[k - 1], steps[k], inputs[k], body, h, reg,
                                 gravity_rotation=spec.gravity_rotation)
        )

    for sv in steps:
        equalities.extend(so3_polynomials(sv.R, reg))
        equalities.extend(so3_polynomials(sv.F, reg))

    for k, iv in enumerate(inputs, start=1):
        if spec.torque_bounds is not None:
            lo, hi = spec.torque_bounds
            for tv in iv.torque:
                if np.isfinite(hi):
                    inequalities.append(Polynomial.constant(reg, hi) - Polynomial.variable(tv, reg))
                if np.isfinite(lo):
                    inequalities.append(Polynomial.variable(tv, reg) - Polynomial.constant(reg, lo))
        if spec.thrust_bounds is not None:
            lo, hi = spec.thrust_bounds
            if np.isfinite(hi):
                inequalities.append(Polynomial.constant(reg, hi) - Polynomial.variable(iv.thrust_z, reg))
            if np.isfinite(lo):
                inequalities.append(Polynomial.variable(iv.thrust_z, reg) - Polynomial.constant(reg, lo))

    for k, sv in enumerate(steps, start=1):
        pv = [Polynomial.variable(v, reg) for v in sv.p]
        for ob in spec.obstacles:
            row = Polynomial.constant(reg, ob.const)
            for i in range(3):
                row = row + pv[i].scale(float(ob.lin[i]))
                for jx in range(3):
                    if ob.quad[i, jx] != 0.0:
                        row = row + (pv[i] * pv[jx]).scale(float(ob.quad[i, jx]))
            inequalities.append(row)
        if spec.height_min is not None:
            inequalities.append(pv[2] - Polynomial.constant(reg, spec.height_min))

    objective = _drone_objective(spec, steps, inputs, reg)

    cliques: list[tuple[Variable, ...]] = []
    step_vars = [
        tuple(sv.R) + tuple(sv.F) + tuple(sv.p) + tuple(sv.v) + tuple(iv.torque) + (iv.thrust_z,)
        for sv, iv in zip(steps, inputs)
    ]
    cliques.append(step_vars[0])
    for k in range(1, N):
        cliques.append(step_vars[k - 1] + step_vars[k])

    if spec.ball_radius is not None:
        inequalities.extend(_ball_rows(cliques, spec.ball_radius, reg))

    return PlanningPOP(
        registry=reg,
        objective=objective,
        equalities=equalities,
        inequalities=inequalities,
        cliques=cliques,
        layout=layout,
        meta={"kind": "drone", "horizon": N, "step": h, "gravity_rotation": spec.gravity_rotation},
    )


def _frobenius_sq(M_polys, reg) -> Polynomial:
    out = Polynomial.zero(reg)
    for r in range(3):
        for c in range(3):
            out = out + M_polys[r][c] * M_polys[r][c]
    return out


def _drone_objective(spec: DroneSpec, steps, inputs, reg) -> Polynomial:
    P1, P2, P3, P4 = spec.terminal_weights
    Q1, Q2, Q3, Q4 = spec.stage_weights
    U1, U2 = spec.input_weights
    eye = np.eye(3)

    def rot_minus_identity(vars9):
        M = _pose_matrix(vars9, reg)
        return [[M[r][c] - Polynomial.constant(reg, eye[r, c]) for c in range(3)] for r in range(3)]

    def vec_sq(vars3):
        out = Polynomial.zero(reg)
        for v in vars3:
            out = out + Polynomial.variable(v, reg) * Polynomial.variable(v, reg)
        return out

    obj = Polynomial.zero(reg)
    # stage k = 0 uses the constant initial state: only its inputs (u_1) carry terms,
    # plus a constant offset from the initial-state cost
    R0, F0 = spec.initial_rotation, spec.initial_pose_change
    const_stage = (
        Q1 * float(np.sum((R0 - eye) ** 2))
        + Q2 * float(np.sum((F0 - eye) ** 2))
        + Q3 * float(spec.initial_position @ spec.initial_position)
        + Q4 * float(spec.initial_velocity @ spec.initial_velocity)
    )
    obj = obj + Polynomial.constant(reg, const_stage)
    obj = obj + vec_sq(inputs[0].torque).scale(U1)
    obj = obj + (Polynomial.variable(inputs[0].thrust_z, reg) * Polynomial.variable(inputs[0].thrust_z, reg)).scale(U2)

    N = spec.horizon
    for k in range(1, N):  # stages 1 .. N-1 with inputs u_{k+1}
        sv, iv = steps[k - 1], inputs[k]
        obj = obj + _frobenius_sq(rot_minus_identity(sv.R), reg).scale(Q1)
        obj = obj + _frobenius_sq(rot_minus_identity(sv.F), reg).scale(Q2)
        obj = obj + vec_sq(sv.p).scale(Q3)
        obj = obj + vec_sq(sv.v).scale(Q4)
        obj = obj + vec_sq(iv.torque).scale(U1)
        obj = obj + (Polynomial.variable(iv.thrust_z, reg) * Polynomial.variable(iv.thrust_z, reg)).scale(U2)
    sv = steps[N - 1]
    obj = obj + _frobenius_sq(rot_minus_identity(sv.R), reg).scale(P1)
    obj = obj + _frobenius_sq(rot_minus_identity(sv.F), reg).scale(P2)
    obj = obj + vec_sq(sv.p).scale(P3)
    obj = obj + vec_sq(sv.v).scale(P4)
    return obj


# --------------------------------------------------------------------------
# presolve: exact affine elimination
# --------------------------------------------------------------------------

PRESOLVE_PIVOT_TOL = 1e-9
PRESOLVE_FEAS_TOL = 1e-7


def presolve(pop: PlanningPOP) -> PlanningPOP:
    """Eliminate variables pinned by affine equality rows; exact and optimum-preserving.

    A substitution var := affine(others) is accepted only when it shrinks the
    total clique footprint, so clique widths never grow.  Rows that reduce to
    a nonzero constant mark the program infeasible; rows reducing to zero are
    dropped as redundant.
    """
    reg = pop.registry
    eqs: list[Polynomial | None] = list(pop.equalities)
    ineqs = list(pop.inequalities)
    obj = pop.objective
    cliques = [dict.fromkeys(c) for c in pop.cliques]  # insertion-ordered sets
    subs = list(pop.substitutions)
    infeasible: str | None = pop.infeasible_reason

    def apply_sub(var: Variable, expr: Polynomial):
        nonlocal obj
        for i, e in enumerate(eqs):
            if e is not None and var.index in e.support_vars():
                eqs[i] = e.substitute(var, expr)
        for i, g in enumerate(ineqs):
            if var.index in g.support_vars():
                ineqs[i] = g.substitute(var, expr)
        if var.index in obj.support_vars():
            obj = obj.substitute(var, expr)
        supp = expr.support_vars()
        for c in cliques:
            if var in c:
                del c[var]
                for j in sorted(supp):
                    c.setdefault(reg[j])

    changed = True
    while changed and infeasible is None:
        changed = False
        for i, row in enumerate(eqs):
            if row is None:
                continue
            if row.is_zero():
                eqs[i] = None
                continue
            if row.degree == 0:
                c0 = row.coefficient(Monomial())
                if abs(c0) > PRESOLVE_FEAS_TOL:
                    infeasible = f"equality row reduced to {c0!r} == 0"
                    break
                eqs[i] = None
                continue
            if row.degree != 1:
                continue
            scale = max(abs(c) for c in row.terms.values())
            cands = sorted(
                ((m, c) for m, c in row.terms.items() if not m.is_constant()),
                key=lambda t: (-abs(t[1]), t[0].exps),
            )
            for m, coef in cands:
                if abs(coef) < PRESOLVE_PIVOT_TOL * scale:
                    continue
                vidx = m.exps[0][0]
                var = reg[vidx]
                rest = Polynomial(reg, {mm: cc for mm, cc in row.terms.items() if mm != m})
                expr = rest.scale(-1.0 / coef)
                supp = expr.support_vars()
                old = new = 0
                for c in cliques:
                    if var in c:
                        old += len(c)
                        new += len((set(v.index for v in c) | supp) - {vidx})
                if new >= old:
                    continue
                eqs[i] = None
                apply_sub(var, expr)
                subs.append((var, expr))
                changed = True
                break

    out_eqs = [e for e in eqs if e is not None and not e.is_zero()]
    return PlanningPOP(
        registry=reg,
        objective=obj,
        equalities=out_eqs,
        inequalities=ineqs,
        cliques=[tuple(c.keys()) for c in cliques],
        layout=pop.layout,
        substitutions=subs,
        infeasible_reason=infeasible,
        meta=dict(pop.meta),
    )


# --------------------------------------------------------------------------
# spec JSON round trip
# --------------------------------------------------------------------------


def dump_spec(spec: IKSpec | DroneSpec) -> dict:
    if isinstance(spec, IKSpec):
        return {
            "schema": SCHEMA,
            "kind": "ik",
            "joints": [
                {
                    "offset": j.offset.tolist(),
                    "reorientation": j.reorientation.tolist(),
                    "limits": list(j.limits) if j.limits is not None else None,
                    "reference": list(j.reference),
                }
                for j in spec.joints
            ],
            "target": {
                "rotation": spec.target_rotation.tolist(),
                "position": spec.target_position.tolist(),
            },
            "ball_radius": spec.ball_radius,
        }
    if isinstance(spec, DroneSpec):
        return {
            "schema": SCHEMA,
            "kind": "drone",
            "horizon": spec.horizon,
            "step": spec.step,
            "mass": spec.mass,
            "inertia": spec.inertia.tolist(),
            "gravity": spec.gravity.tolist(),
            "initial": {
                "rotation": spec.initial_rotation.tolist(),
                "position": spec.initial_position.tolist(),
                "pose_change": spec.initial_pose_change.tolist(),
                "velocity": spec.initial_velocity.tolist(),
            },
            "torque_bounds": list(spec.torque_bounds) if spec.torque_bounds else None,
            "thrust_bounds": list(spec.thrust_bounds) if spec.thrust_bounds else None,
            "obstacles": [
                {"quad": o.quad.tolist(), "lin": o.lin.tolist(), "const": o.const}
                for o in spec.obstacles
            ],
            "height_min": spec.height_min,
            "terminal_weights": list(spec.terminal_weights),
            "stage_weights": list(spec.stage_weights),
            "input_weights": list(spec.input_weights),
            "gravity_rotation": spec.gravity_rotation,
            "ball_radius": spec.ball_radius,
        }
    raise TypeError(f"unsupported spec type {type(spec).__name__}")


class SpecError(ValueError):
    """Malformed or unsupported problem spec file."""


def load_spec(data: dict | str) -> IKSpec | DroneSpec:
    """Parse a problem spec from a JSON dict or string (schema ``lpp-1``)."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SpecError("spec must be a JSON object")
    if data.get("schema") != SCHEMA:
        raise SpecError(f"unsupported schema {data.get('schema')!r}, expected {SCHEMA!r}")
    kind = data.get("kind")
    try:
        if kind == "ik":
            joints = tuple(
                JointSpec(
                    offset=j["offset"],
                    reorientation=j["reorientation"],
                    limits=tuple(j["limits"]) if j.get("limits") else None,
                    reference=tuple(j.get("reference", (1.0, 0.0))),
                )
                for j in data["joints"]
            )
            return IKSpec(
                joints=joints,
                target_rotation=data["target"]["rotation"],
                target_position=data["target"]["position"],
                ball_radius=data.get("ball_radius"),
            )
        if kind == "drone":
            return DroneSpec(
                horizon=int(data["horizon"]),
                step=float(data["step"]),
                mass=float(data["mass"]),
                inertia=data["inertia"],
                gravity=data["gravity"],
                initial_rotation=data["initial"]["rotation"],
                initial_position=data["initial"]["position"],
                initial_pose_change=data["initial"]["pose_change"],
                initial_velocity=data["initial"]["velocity"],
                torque_bounds=tuple(data["torque_bounds"]) if data.get("torque_bounds") else None,
                thrust_bounds=tuple(data["thrust_bounds"]) if data.get("thrust_bounds") else None,
                obstacles=tuple(
                    Obstacle(quad=o["quad"], lin=o["lin"], const=float(o["const"]))
                    for o in data.get("obstacles", ())
                ),
                height_min=data.get("height_min"),
                terminal_weights=tuple(data.get("terminal_weights", (100.0, 10.0, 100.0, 100.0))),
                stage_weights=tuple(data.get("stage_weights", (0.1, 10.0, 0.1, 1.0))),
                input_weights=tuple(data.get("input_weights", (0.1, 0.1))),
                gravity_rotation=data.get("gravity_rotation", "transpose"),
                ball_radius=data.get("ball_radius"),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"bad {kind} spec: {exc}") from exc
    raise SpecError(f"unknown spec kind {kind!r}")
