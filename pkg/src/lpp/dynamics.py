"""SO(3)/SE(3) rigid-body numerics and symbolic constraint generators.

Numeric side: hat/vee maps, the structure-preserving discrete integrator
(:func:`lgvi_step`, implicit in the pose change), an explicit-Euler baseline
kept deliberately drift-prone for comparison, and energy diagnostics.

Symbolic side: generators emitting the rotation-group membership equations
and the discrete equations of motion as degree-<=2 polynomials over a
variable registry, for use by the planning builders.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from lpp.poly import Monomial, Polynomial, Variable, VariableRegistry

__all__ = [
    "hat",
    "vee",
    "rot_exp",
    "rot_log",
    "is_rotation",
    "nonstandard_inertia",
    "BodyInertia",
    "DiscreteState",
    "ContinuousState",
    "ControlInput",
    "ZERO_INPUT",
    "lgvi_step",
    "euler_step",
    "kinetic_energy",
    "potential_energy",
    "discrete_twist",
    "discrete_energy",
    "StateVars",
    "InputVars",
    "so3_polynomials",
    "dynamics_rows",
    "dynamics_polynomials",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

ROTATION_TOL = 1e-9  # validation tolerance, looser than the implicit-solve tolerance


def hat(a) -> np.ndarray:
    """Skew matrix of a 3-vector: hat(a) @ b == cross(a, b)."""
    a = np.asarray(a, dtype=float)
    return np.array(
        [
            [0.0, -a[2], a[1]],
            [a[2], 0.0, -a[0]],
            [-a[1], a[0], 0.0],
        ]
    )


def vee(s: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hat`; rejects matrices that are not skew to 1e-9."""
    s = np.asarray(s, dtype=float)
    if np.max(np.abs(s + s.T)) > ROTATION_TOL:
        raise ValueError("vee requires a skew-symmetric matrix")
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def rot_exp(a) -> np.ndarray:
    """Rodrigues formula: exp of the skew matrix of ``a``."""
    a = np.asarray(a, dtype=float)
    th = float(np.linalg.norm(a))
    A = hat(a)
    if th < 1e-8:
        # series keeps full precision near zero
        return np.eye(3) + A * (1 - th**2 / 6) + (A @ A) * (0.5 - th**2 / 24)
    return np.eye(3) + (math.sin(th) / th) * A + ((1 - math.cos(th)) / th**2) * (A @ A)


def rot_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R (angle in [0, pi])."""
    R = np.asarray(R, dtype=float)
    c = (np.trace(R) - 1.0) / 2.0
    c = min(1.0, max(-1.0, c))
    th = math.acos(c)
    if th < 1e-8:
        return vee((R - R.T) / 2.0)
    if th > math.pi - 1e-6:
        # near a half-turn the axis comes from the symmetric part
        B = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(B), 0.0))
        k = int(np.argmax(axis))
        ax = B[:, k] / max(axis[k], 1e-12)
        ax = ax / np.linalg.norm(ax)
        sv = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if np.dot(sv, ax) < 0:
            ax = -ax
        return th * ax
    return th / (2.0 * math.sin(th)) * np.array(
        [R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]
    )


def is_rotation(R: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return bool(np.max(np.abs(R.T @ R - np.eye(3))) <= tol and np.linalg.det(R) > 0)


def _right_jacobian(a: np.ndarray) -> np.ndarray:
    """Right Jacobian of the rotation exponential at rotation vector ``a``."""
    th = float(np.linalg.norm(a))
    A = hat(a)
    if th < 1e-6:
        return np.eye(3) - 0.5 * A + (A @ A) / 6.0
    return (
        np.eye(3)
        - ((1 - math.cos(th)) / th**2) * A
        + ((th - math.sin(th)) / th**3) * (A @ A)
    )


def nonstandard_inertia(inertia: np.ndarray) -> np.ndarray:
    """Solve I_b = tr(J)I - J for J; closed form J = tr(I_b)/2 * I - I_b."""
    inertia = np.asarray(inertia, dtype=float)
    if inertia.shape != (3, 3) or np.max(np.abs(inertia - inertia.T)) > 1e-12:
        raise ValueError("inertia matrix must be 3x3 symmetric")
    return 0.5 * np.trace(inertia) * np.eye(3) - inertia


@dataclass(frozen=True)
class BodyInertia:
    """Mass properties of one rigid body plus the ambient gravity vector."""

    mass: float
    inertia: np.ndarray  # standard moment of inertia, SPD
    gravity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        I_b = np.asarray(self.inertia, dtype=float)
        if I_b.shape != (3, 3) or np.max(np.abs(I_b - I_b.T)) > 1e-12:
            raise ValueError("inertia must be 3x3 symmetric")
        if np.min(np.linalg.eigvalsh(I_b)) <= 0:
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "inertia", I_b)
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))

    @property
    def inertia_ns(self) -> np.ndarray:
        """Nonstandard inertia J with inertia == tr(J)I - J."""
        return nonstandard_inertia(self.inertia)


@dataclass(frozen=True)
class DiscreteState:
    """One integrator step: orientation R, position p, pose change F, body velocity v."""

    R: np.ndarray
    p: np.ndarray
    F: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "F", np.asarray(self.F, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))

    def validate(self, tol: float = ROTATION_TOL) -> None:
        if not is_rotation(self.R, tol):
            raise ValueError("R is not a rotation matrix")
        if not is_rotation(self.F, tol):
            raise ValueError("F is not a rotation matrix")


@dataclass(frozen=True)
class ContinuousState:
    """Continuous-time state: pose (R, p) and body twist (omega, v)."""

    R: np.ndarray
    p: np.ndarray
    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("R", "p", "omega", "v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def twist(self) -> np.ndarray:
        return np.concatenate([self.omega, self.v])


@dataclass(frozen=True)
class ControlInput:
    """Body torque and thrust along body z; either part may be absent."""

    torque: np.ndarray | None = None
    thrust_z: float | None = None

    def __post_init__(self):
        if self.torque is not None:
            t = np.asarray(self.torque, dtype=float)
            if not np.all(np.isfinite(t)):
                raise ValueError("torque must be finite")
            object.__setattr__(self, "torque", t)
        if self.thrust_z is not None and not math.isfinite(self.thrust_z):
            raise ValueError("thrust must be finite")


ZERO_INPUT = ControlInput()

THRUST_AXIS = np.array([0.0, 0.0, 1.0])


class NewtonError(RuntimeError):
    """Implicit pose-change solve did not converge (step or torque too large)."""


def _solve_pose_change(
    rhs: np.ndarray, J: np.ndarray, warm_start: np.ndarray, tol: float = 1e-12, maxiter: int = 50
) -> np.ndarray:
    """Find F in SO(3) with J F^T - F J == rhs (rhs skew), via Newton on the rotation vector.

    Parameterizing F = exp(hat(a)) keeps every iterate exactly on SO(3).
    """
    a = np.array(warm_start, dtype=float)
    for _ in range(maxiter):
        F = rot_exp(a)
        res_mat = J @ F.T - F @ J - rhs
        r = np.array([res_mat[2, 1], res_mat[0, 2], res_mat[1, 0]])
        if np.max(np.abs(r)) <= tol:
            return F
        # d residual / d w for F -> F exp(hat(w)):  -J hat(w) F^T - F hat(w) J
        L = np.empty((3, 3))
        for k in range(3):
            Ek = hat(np.eye(3)[k])
            D = -J @ Ek @ F.T - F @ Ek @ J
            L[:, k] = [D[2, 1], D[0, 2], D[1, 0]]
        M = L @ _right_jacobian(a)
        try:
            da = np.linalg.solve(M, -r)
        except np.linalg.LinAlgError as exc:
            raise NewtonError("singular Jacobian in pose-change solve") from exc
        a = a + da
    raise NewtonError(f"pose-change Newton did not reach {tol:g} in {maxiter} iterations")


def lgvi_step(
    state: DiscreteState,
    u: ControlInput,
    body: BodyInertia,
    h: float,
    gravity_rotation: str = "transpose",
) -> DiscreteState:
    """One step of the variational integrator for the forced rigid body.

    Updates::

        R+ = R F
        p+ = p + h R v
        J F+^T - F+ J = F^T J - J F + h^2 hat(torque)     (implicit, on SO(3))
        v+ = F^T v + h (B fz / m + R+^T g)

    ``gravity_rotation`` selects how gravity is rotated into the body frame in
    the velocity update: ``"transpose"`` (the index-shifted form implied by the
    discrete derivation) or ``"as_printed"`` (R+ g without transpose).
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if gravity_rotation not in ("transpose", "as_printed"):
        raise ValueError("gravity_rotation must be 'transpose' or 'as_printed'")
    J = body.inertia_ns
    R_next = state.R @ state.F
    p_next = state.p + h * state.R @ state.v

    rhs = state.F.T @ J - J @ state.F
    if u.torque is not None:
        rhs = rhs + h * h * hat(u.torque)
    F_next = _solve_pose_change(rhs, J, warm_start=rot_log(state.F))

    v_next = state.F.T @ state.v
    if u.thrust_z is not None:
        v_next = v_next + h * THRUST_AXIS * (u.thrust_z / body.mass)
    if gravity_rotation == "transpose":
        v_next = v_next + h * (R_next.T @ body.gravity)
    else:
        v_next = v_next + h * (R_next @ body.gravity)
    return DiscreteState(R_next, p_next, F_next, v_next)


def euler_step(state: ContinuousState, body: BodyInertia, h: float) -> ContinuousState:
    """Explicit Euler on the continuous equations of motion.

    First-order pose update without re-orthonormalization, so orientation
    drifts off the rotation group; kept that way on purpose as the baseline
    whose energy diverges.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    I_b = body.inertia
    om, v = state.omega, state.v
    dom = np.linalg.solve(I_b, -np.cross(om, I_b @ om))
    dv = -np.cross(om, v) + state.R.T @ body.gravity
    R_next = state.R @ (np.eye(3) + h * hat(om))
    p_next = state.p + h * state.R @ v
    return ContinuousState(R_next, p_next, om + h * dom, v + h * dv)


def kinetic_energy(twist, body: BodyInertia) -> float:
    """(1/2) xi^T diag(I_b, m I) xi for twist xi = (omega, v)."""
    xi = np.asarray(twist, dtype=float)
    om, v = xi[:3], xi[3:]
    return 0.5 * float(om @ body.inertia @ om) + 0.5 * body.mass * float(v @ v)


def potential_energy(p, body: BodyInertia) -> float:
    """Gravitational potential -m g . p (zero when gravity is zero)."""
    return -body.mass * float(np.asarray(p, dtype=float) @ body.gravity)


def discrete_twist(state: DiscreteState, h: float) -> np.ndarray:
    """Twist recovered from the discrete state: omega from the skew part of (F - I)/h."""
    if h <= 0:
        raise ValueError("step size must be positive")
    om = vee((state.F - state.F.T) / 2.0) / h
    return np.concatenate([om, state.v])


def discrete_energy(state: DiscreteState, body: BodyInertia, h: float) -> float:
    """Total energy of a discrete state, with the twist read via :func:`discrete_twist`."""
    return kinetic_energy(discrete_twist(state, h), body) + potential_energy(state.p, body)


# --------------------------------------------------------------------------
# symbolic constraint generators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StateVars:
    """Variable blocks of one discrete state; rotation entries are column-major."""

    R: tuple[Variable, ...]
    p: tuple[Variable, ...]
    F: tuple[Variable, ...]
    v: tuple[Variable, ...]

    def __post_init__(self):
        if len(self.R) != 9 or len(self.F) != 9 or len(self.p) != 3 or len(self.v) != 3:
            raise ValueError("state blocks must have sizes R:9, p:3, F:9, v:3")


@dataclass(frozen=True)
class InputVars:
    """Input variable blocks; omit a block for unforced axes."""

    torque: tuple[Variable, ...] | None = None
    thrust_z: Variable | None = None

    def __post_init__(self):
        if self.torque is not None and len(self.torque) != 3:
            raise ValueError("torque block must have 3 variables")


def _var_matrix(vars9: Sequence[Variable], reg: VariableRegistry) -> list[list[Polynomial]]:
    """3x3 polynomial matrix from 9 variables laid out column-major."""
    if len(set(v.index for v in vars9)) != 9:
        raise ValueError("rotation block must contain 9 distinct variables")
    M = [[None] * 3 for _ in range(3)]
    for c in range(3):
        for r in range(3):
            M[r][c] = Polynomial.variable(vars9[3 * c + r], reg)
    return M


def _const_matrix(A: np.ndarray, reg: VariableRegistry) -> list[list[Polynomial]]:
    return [[Polynomial.constant(reg, float(A[r, c])) for c in range(3)] for r in range(3)]


def _mat_mul(A, B):
    return [
        [sum((A[r][k] * B[k][c] for k in range(3)), start=A[0][0].scale(0.0)) for c in range(3)]
        for r in range(3)
    ]


def _mat_sub(A, B):
    return [[A[r][c] - B[r][c] for c in range(3)] for r in range(3)]


def _mat_T(A):
    return [[A[c][r] for c in range(3)] for r in range(3)]


def _vec_polys(vars3: Sequence[Variable], reg: VariableRegistry) -> list[Polynomial]:
    return [Polynomial.variable(v, reg) for v in vars3]


def so3_polynomials(r_vars: Sequence[Variable], registry: VariableRegistry) -> list[Polynomial]:
    """The 15 quadratic equations cutting out SO(3) from 9 matrix entries.

    Column-major layout: ``r_vars[3*c + r]`` is entry (r, c).  Returns, in
    order: 3 unit-norm rows, 3 orthogonality rows, 9 cross-product rows
    (right-hand rule, which excludes reflections).  All vanish iff the
    assignment is a rotation.
    """
    M = _var_matrix(r_vars, registry)
    cols = [[M[r][c] for r in range(3)] for c in range(3)]
    one = Polynomial.constant(registry, 1.0)

    def dot(a, b):
        return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]

    def cross(a, b):
        return [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]

    r1, r2, r3 = cols
    out = [dot(r1, r1) - one, dot(r2, r2) - one, dot(r3, r3) - one]
    out += [dot(r1, r2), dot(r2, r3), dot(r1, r3)]
    for a, b, c in ((r1, r2, r3), (r2, r3, r1), (r3, r1, r2)):
        cr = cross(a, b)
        out += [cr[i] - c[i] for i in range(3)]
    return out


def dynamics_rows(
    Rk, pk, Fk, vk,
    Rn, pn, Fn, vn,
    tau, fz,
    body: BodyInertia,
    h: float,
    registry: VariableRegistry,
    gravity_rotation: str = "transpose",
) -> list[Polynomial]:
    """Discrete equations of motion over polynomial matrices/vectors.

    Accepts 3x3 lists-of-lists of Polynomial for rotations and length-3 lists
    for vectors, so callers may pass variable blocks or substituted constants.
    ``tau`` is a 3-list of polynomials or None; ``fz`` a polynomial or None.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if gravity_rotation not in ("transpose", "as_printed"):
        raise ValueError("gravity_rotation must be 'transpose' or 'as_printed'")
    reg = registry
    zero = Polynomial.zero(reg)
    J = _const_matrix(body.inertia_ns, reg)
    out: list[Polynomial] = []

    # rotational rows: J F+^T - F+ J - F^T J + J F - h^2 hat(tau) == 0 (skew)
    S = _mat_sub(_mat_sub(_mat_mul(J, _mat_T(Fn)), _mat_mul(Fn, J)),
                 _mat_sub(_mat_mul(_mat_T(Fk), J), _mat_mul(J, Fk)))
    rot_rows = [S[2][1], S[0][2], S[1][0]]
    if tau is not None:
        for i in range(3):
            rot_rows[i] = rot_rows[i] - tau[i].scale(h * h)
    out.extend(rot_rows)

    # velocity rows: m v+ - m F^T v - h B fz - h m Rot(g) == 0
    FTv = [sum((Fk[k][i] * vk[k] for k in range(3)), start=zero) for i in range(3)]
    Rg = []
    g = body.gravity
    for i in range(3):
        if gravity_rotation == "transpose":
            row = [Rn[k][i] for k in range(3)]  # column i of R+, i.e. row of R+^T
        else:
            row = [Rn[i][k] for k in range(3)]
        Rg.append(sum((row[k].scale(float(g[k])) for k in range(3)), start=zero))
    m = body.mass
    for i in range(3):
        row = vn[i].scale(m) - FTv[i].scale(m) - Rg[i].scale(h * m)
        if fz is not None and THRUST_AXIS[i] != 0.0:
            row = row - fz.scale(h * THRUST_AXIS[i])
        out.append(row)

    # orientation chain: R+ - R F == 0 (9 rows, column-major order)
    RF = _mat_mul(Rk, Fk)
    for c in range(3):
        for r in range(3):
            out.append(Rn[r][c] - RF[r][c])

    # position chain: p+ - p - h R v == 0
    Rv = [sum((Rk[i][k] * vk[k] for k in range(3)), start=zero) for i in range(3)]
    for i in range(3):
        out.append(pn[i] - pk[i] - Rv[i].scale(h))
    return out


def dynamics_polynomials(
    prev: StateVars,
    nxt: StateVars,
    inputs: InputVars,
    body: BodyInertia,
    h: float,
    registry: VariableRegistry,
    gravity_rotation: str = "transpose",
) -> list[Polynomial]:
    """Discrete equations of motion as 18 polynomials of degree <= 2.

    In order: 3 rotational rows (skew components of the implicit pose-change
    equation, with torque), 3 velocity rows, 9 orientation-chain rows
    R+ = R F, 3 position rows p+ = p + h R v.  The rows vanish exactly on
    trajectories of :func:`lgvi_step` with the same ``gravity_rotation``.
    """
    reg = registry
    return dynamics_rows(
        _var_matrix(prev.R, reg), _vec_polys(prev.p, reg), _var_matrix(prev.F, reg), _vec_polys(prev.v, reg),
        _var_matrix(nxt.R, reg), _vec_polys(nxt.p, reg), _var_matrix(nxt.F, reg), _vec_polys(nxt.v, reg),
        [Polynomial.variable(t, reg) for t in inputs.torque] if inputs.torque is not None else None,
        Polynomial.variable(inputs.thrust_z, reg) if inputs.thrust_z is not None else None,
        body, h, reg, gravity_rotation,
    )


# --------------------------------------------------------------------------
# trajectory CSV
# --------------------------------------------------------------------------

TRAJECTORY_HEADER = (
    ["k", "t"]
    + [f"R{r}{c}" for r in range(3) for c in range(3)]
    + [f"p{i}" for i in range(3)]
    + [f"F{r}{c}" for r in range(3) for c in range(3)]
    + [f"v{i}" for i in range(3)]
    + ["E"]
)


def write_trajectory_csv(path, states: Sequence[DiscreteState], body: BodyInertia, h: float) -> None:
    """One row per step with mandatory header; E is total (kinetic + potential)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRAJECTORY_HEADER)
        for k, s in enumerate(states):
            row = [k, repr(k * h)]
            row += [repr(float(x)) for x in s.R.flatten()]
            row += [repr(float(x)) for x in s.p]
            row += [repr(float(x)) for x in s.F.flatten()]
            row += [repr(float(x)) for x in s.v]
            row.append(repr(discrete_energy(s, body, h)))
            w.writerow(row)


def read_trajectory_csv(path) -> list[DiscreteState]:
    states = []
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if header != TRAJECTORY_HEADER:
            raise ValueError("unexpected trajectory CSV header")
        for row in r:
            vals = [float(x) for x in row[2:]]
            R = np.array(vals[0:9]).reshape(3, 3)
            p = np.array(vals[9:12])
            F = np.array(vals[12:21]).reshape(3, 3)
            v = np.array(vals[21:24])
            states.append(DiscreteState(R, p, F, v))
    return states
