"""Reduced Lagrangian dynamics of the planar viscoelastic satellite.

The orbital angle ``psi`` is cyclic; eliminating it at fixed total angular
momentum ``p`` leaves

    L_r = T2 + T1 - V_eff,
    T2  = m/2 Rdot^2 + 1/2 v.a.v - b^2 / (2 Dm),
    T1  = p b / Dm,

with ``v = (chidot, betadot, Jdot, zdot)``, ``b = a[0] . v`` and
``Dm = m R^2 + I0 + J3``. The kinetic matrix ``a`` has ``a11 = I0 + J3``,
``a12 = kappa (J1 - J2)``, constant diagonal masses for ``(beta, J, z)`` and
no other couplings. Friction enters through a Rayleigh function of
``(betadot, Jdot, zdot)`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.integrate import DOP853, RK45

from . import _kernels
from .potentials import (
    ChartError,
    CubicTerm,
    ElasticCoeffs,
    GravityParams,
    veff_gradient,
    veff_value,
)

# Indices into y whose value the mass matrix and T1 depend on.
_R, _CHI, _BETA, _J1, _J2, _J3 = 0, 1, 2, 3, 4, 5
_METRIC_COORDS = (_R, _J1, _J2, _J3)


class KineticFormError(ValueError):
    pass


class MassMatrixError(ArithmeticError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


@dataclass(frozen=True)
class KineticSpec:
    I0: float = 0.1
    kappa: float = 0.05
    mass_beta: float = 0.01
    mass_J: np.ndarray = field(default_factory=lambda: np.full(3, 5.0))
    mass_z: np.ndarray = field(default_factory=lambda: np.full(1, 5.0))

    def __post_init__(self):
        mJ = np.asarray(self.mass_J, dtype=float).reshape(3)
        mz = np.atleast_1d(np.asarray(self.mass_z, dtype=float))
        if not (self.I0 > 0 and self.mass_beta > 0 and np.all(mJ > 0) and np.all(mz > 0)):
            raise ValueError("I0 and all kinetic masses must be strictly positive")
        object.__setattr__(self, "mass_J", mJ)
        object.__setattr__(self, "mass_z", mz)

    @property
    def n(self) -> int:
        return self.mass_z.size


@dataclass(frozen=True)
class ModelParams:
    gravity: GravityParams = field(default_factory=GravityParams)
    elastic: ElasticCoeffs = field(default_factory=ElasticCoeffs)
    kinetic: KineticSpec = field(default_factory=KineticSpec)

    def __post_init__(self):
        if self.kinetic.I0 != self.gravity.I0:
            raise ValueError("kinetic and gravity I0 differ")
        if self.kinetic.n != self.elastic.n:
            raise ValueError("number of z modes differs between kinetic and elastic specs")

    @property
    def n(self) -> int:
        return self.elastic.n

    @property
    def dim(self) -> int:
        return 6 + self.n

    def with_epsilon(self, epsilon: float) -> "ModelParams":
        return replace(self, elastic=self.elastic.with_epsilon(epsilon))

    def with_kappa(self, kappa: float) -> "ModelParams":
        return replace(self, kinetic=replace(self.kinetic, kappa=kappa))


@dataclass(frozen=True)
class DissipationSpec:
    """Rayleigh function ``F = 1/2 w.eta.w + F3(w)`` with ``w = (betadot, Jdot, zdot)``."""

    eta: np.ndarray
    cubic: Optional[CubicTerm] = None

    def __post_init__(self):
        eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
        if eta.shape[0] != eta.shape[1] or not np.allclose(eta, eta.T, rtol=0, atol=1e-14):
            raise ValueError("eta must be a symmetric square matrix")
        object.__setattr__(self, "eta", eta)

    @classmethod
    def scalar(cls, eta: float, n: int = 1) -> "DissipationSpec":
        return cls(eta * np.eye(4 + n))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.eta) and self.cubic is None

    def check_positive_definite(self):
        try:
            np.linalg.cholesky(self.eta)
        except np.linalg.LinAlgError:
            raise ValueError("dissipation matrix is not positive definite") from None

    def value(self, w: np.ndarray) -> float:
        f = 0.5 * w @ self.eta @ w
        if self.cubic is not None:
            f += self.cubic.value(w[:4], w[4:])
        return float(f)

    def gradient(self, w: np.ndarray) -> np.ndarray:
        g = self.eta @ w
        if self.cubic is not None:
            g = g + self.cubic.grad(w[:4], w[4:])
        return g


@dataclass(frozen=True)
class ReducedState:
    """Coordinates ``y = (R, chi, beta, J1, J2, J3, z)`` and their velocities."""

    y: np.ndarray
    ydot: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        yd = np.asarray(self.ydot, dtype=float).reshape(-1)
        if y.size < 7 or y.size != yd.size:
            raise ValueError("y and ydot must both have length 6 + n, n >= 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ydot", yd)

    @property
    def R(self) -> float:
        return float(self.y[_R])

    @property
    def gamma(self) -> float:
        return float(self.y[_CHI] + self.y[_BETA])

    @property
    def J(self) -> np.ndarray:
        return self.y[3:6]

    @property
    def z(self) -> np.ndarray:
        return self.y[6:]

    @property
    def elastic_velocity(self) -> np.ndarray:
        return self.ydot[2:]


def check_chart(y: np.ndarray, params: ModelParams, degeneracy_tol: Optional[float] = None):
    """Raise :class:`ChartError` unless the coordinates are valid at ``y``."""
    I0 = params.gravity.I0
    tol = 1e-12 * I0 if degeneracy_tol is None else degeneracy_tol
    J = y[3:6]
    if not y[_R] > 0:
        raise ChartError("R <= 0")
    if np.any(I0 + J <= 0):
        raise ChartError("nonpositive principal moment")
    if min(abs(J[0] - J[1]), abs(J[0] - J[2]), abs(J[1] - J[2])) <= tol:
        raise ChartError("principal moments coincide (C_=)")


def kinetic_matrix(J, z, ks: KineticSpec) -> np.ndarray:
    """Kinetic matrix over ``(alpha, beta, J1, J2, J3, z)``."""
    n = ks.n
    a = np.zeros((5 + n, 5 + n))
    a[0, 0] = ks.I0 + J[2]
    a[0, 1] = a[1, 0] = ks.kappa * (J[0] - J[1])
    a[1, 1] = ks.mass_beta
    a[np.arange(2, 5), np.arange(2, 5)] = ks.mass_J
    a[np.arange(5, 5 + n), np.arange(5, 5 + n)] = ks.mass_z
    if not (a[0, 0] > 0 and a[0, 0] * a[1, 1] - a[0, 1] ** 2 > 0):
        raise KineticFormError("kinetic form degenerate")
    return a


def kinetic_energy(state: ReducedState, ks: KineticSpec) -> float:
    """``1/2 v.a.v`` with the first slot carrying chidot."""
    v = state.ydot[1:]
    a = kinetic_matrix(state.J, state.z, ks)
    return float(0.5 * v @ a @ v)


def _inertia_sum(y: np.ndarray, params: ModelParams) -> float:
    gp = params.gravity
    D = gp.m * y[_R] ** 2 + gp.I0 + y[_J3]
    if not D > 0:
        raise ChartError(f"nonpositive effective inertia m R^2 + I0 + J3 = {D}")
    return D


def _spin_coupling(state: ReducedState, ks: KineticSpec) -> float:
    """``b = a[0] . v``: the body-rotation part of the angular momentum."""
    y, yd = state.y, state.ydot
    return (ks.I0 + y[_J3]) * yd[_CHI] + ks.kappa * (y[_J1] - y[_J2]) * yd[_BETA]


def angular_momentum(state: ReducedState, psi_dot_value: float, params: ModelParams) -> float:
    """``p = m R^2 psidot + (I0 + J3)(chidot + psidot) + sum_k a_1k qdot_k``."""
    gp = params.gravity
    R = state.R
    return gp.m * R * R * psi_dot_value + (gp.I0 + state.J[2]) * psi_dot_value + _spin_coupling(state, params.kinetic)


def psi_dot(state: ReducedState, p: float, params: ModelParams) -> float:
    """Orbital rate recovered from the conserved angular momentum."""
    D = _inertia_sum(state.y, params)
    return (p - _spin_coupling(state, params.kinetic)) / D


def mass_matrix(y: np.ndarray, params: ModelParams) -> np.ndarray:
    """Metric of T2 over the reduced velocities."""
    ks = params.kinetic
    D = _inertia_sum(y, params)
    a = kinetic_matrix(y[3:6], y[6:], ks)
    M = np.zeros((params.dim, params.dim))
    M[0, 0] = params.gravity.m
    M[1:, 1:] = a - np.outer(a[0], a[0]) / D
    return M


def _metric_terms(y: np.ndarray, p: float, params: ModelParams):
    """Mass matrix, T1 covector and their partials along R, J1, J2, J3.

    Only the (chi, beta) block of the mass matrix and the (chi, beta) slots of
    the covector vary, so derivatives are returned as 2x2 blocks / 2-vectors.
    """
    gp, ks = params.gravity, params.kinetic
    m, R = gp.m, y[_R]
    D = _inertia_sum(y, params)
    kappa = ks.kappa
    u = np.array([ks.I0 + y[_J3], kappa * (y[_J1] - y[_J2])])
    block = np.array([[u[0], u[1]], [u[1], ks.mass_beta]]) - np.outer(u, u) / D
    M = np.zeros((params.dim, params.dim))
    M[0, 0] = m
    M[1:3, 1:3] = block
    M[3:6, 3:6] = np.diag(ks.mass_J)
    M[6:, 6:] = np.diag(ks.mass_z)
    A = p * u / D

    du = {_R: np.zeros(2), _J1: np.array([0.0, kappa]), _J2: np.array([0.0, -kappa]), _J3: np.array([1.0, 0.0])}
    dD = {_R: 2.0 * m * R, _J1: 0.0, _J2: 0.0, _J3: 1.0}
    da = {
        _R: np.zeros((2, 2)),
        _J1: np.array([[0.0, kappa], [kappa, 0.0]]),
        _J2: np.array([[0.0, -kappa], [-kappa, 0.0]]),
        _J3: np.array([[1.0, 0.0], [0.0, 0.0]]),
    }
    dM, dA = {}, {}
    uu = np.outer(u, u)
    for j in _METRIC_COORDS:
        dM[j] = da[j] - (np.outer(du[j], u) + np.outer(u, du[j])) / D + uu * dD[j] / D**2
        dA[j] = p * du[j] / D - p * u * dD[j] / D**2
    return M, A, dM, dA


def _check_mass_matrix(M: np.ndarray):
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise MassMatrixError("mass matrix is not positive definite", float(np.linalg.cond(M))) from None


def generalized_forces(y: np.ndarray, ydot: np.ndarray, p: float, params: ModelParams,
                       diss: Optional[DissipationSpec] = None):
    """Mass matrix ``M`` and force ``f`` such that the motion obeys ``M yddot = f``.

    ``f`` collects the potential force, the velocity-quadratic terms from the
    configuration dependence of ``M``, the gyroscopic force from ``T1`` and the
    Rayleigh friction.
    """
    M, A, dM, dA = _metric_terms(y, p, params)
    w = ydot[1:3]
    k = y.size
    # sum_j ydot_j dM_j ydot, restricted to the (chi, beta) block
    mdot_w = np.zeros(2)
    quad = np.zeros(k)
    JA = np.zeros((k, k))
    for j in _METRIC_COORDS:
        mdot_w += ydot[j] * (dM[j] @ w)
        quad[j] = 0.5 * w @ dM[j] @ w
        JA[1:3, j] = dA[j]
    coriolis = -quad
    coriolis[1:3] += mdot_w
    gyro = (JA - JA.T) @ ydot
    f = -veff_gradient(y, params.gravity, params.elastic, p) - coriolis - gyro
    if diss is not None:
        f[2:] -= diss.gradient(ydot[2:])
    return M, f


def equations_of_motion(state: ReducedState, p: float, params: ModelParams,
                        diss: Optional[DissipationSpec] = None) -> np.ndarray:
    """Generalised accelerations of the reduced (optionally dissipative) system."""
    M, f = generalized_forces(state.y, state.ydot, p, params, diss)
    _check_mass_matrix(M)
    return _solve(M, f)


def _solve(M: np.ndarray, f: np.ndarray) -> np.ndarray:
    # M is diagonal apart from the (chi, beta) block
    acc = f / np.diag(M)
    b = M[1:3, 1:3]
    det = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
    if not det > 0:
        raise MassMatrixError("singular mass matrix", float(np.linalg.cond(M)))
    acc[1] = (b[1, 1] * f[1] - b[0, 1] * f[2]) / det
    acc[2] = (b[0, 0] * f[2] - b[1, 0] * f[1]) / det
    return acc


def reduced_energy(state: ReducedState, p: float, params: ModelParams) -> float:
    """``E = T2 + V_eff``."""
    M = mass_matrix(state.y, params)
    yd = state.ydot
    return float(0.5 * yd @ M @ yd + veff_value(state.y, params.gravity, params.elastic, p))


def energy_rate(state: ReducedState, p: float, params: ModelParams,
                diss: Optional[DissipationSpec] = None) -> float:
    """``dE/dt`` along the flow, from the chain rule and the accelerations."""
    y, yd = state.y, state.ydot
    M, A, dM, dA = _metric_terms(y, p, params)
    acc = equations_of_motion(state, p, params, diss)
    w = yd[1:3]
    metric_rate = sum(yd[j] * (w @ dM[j] @ w) for j in _METRIC_COORDS)
    grad = veff_gradient(y, params.gravity, params.elastic, p)
    return float(yd @ M @ acc + 0.5 * metric_rate + grad @ yd)


def rayleigh_power(state: ReducedState, diss: Optional[DissipationSpec]) -> float:
    """``w . dF/dw`` over the elastic velocities ``w``: minus the energy rate."""
    if diss is None:
        return 0.0
    w = state.elastic_velocity
    return float(w @ diss.gradient(w))


def osculating_eccentricity(state: ReducedState, psi_rate: float, params: ModelParams) -> float:
    """Two-body eccentricity from ``(R, Rdot, psidot)``.

    The central parameter includes the instantaneous quadrupole part of the
    radial force, ``GM (1 + 3 T / (m R^2))``, so the resonant circular orbit
    has eccentricity exactly zero.
    """
    gp = params.gravity
    R, Rdot = state.R, state.ydot[_R]
    J1, J2, J3 = state.J
    tidal = J1 - 2.0 * J2 + J3 + 3.0 * (J2 - J1) * math.cos(state.gamma) ** 2
    mu = gp.GM * (1.0 + 3.0 * tidal / (gp.m * R * R))
    h = R * R * psi_rate
    specific = 0.5 * (Rdot * Rdot + h * h / (R * R)) - mu / R
    return math.sqrt(max(0.0, 1.0 + 2.0 * specific * h * h / (mu * mu)))


def wrap_angle(x: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(x, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


# --- trajectory integration ---

_COMPLETED = "completed"


@dataclass(frozen=True)
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray          # (N, 2*(6+n)): y then ydot
    energies: np.ndarray
    energy_rates: np.ndarray
    psi: np.ndarray
    gamma: np.ndarray
    eccentricity: np.ndarray
    manifold_distance: np.ndarray
    rayleigh: np.ndarray
    step_times: np.ndarray
    step_energies: np.ndarray
    status: str
    message: str = ""
    n_steps: int = 0

    @property
    def ok(self) -> bool:
        return self.status == _COMPLETED

    @property
    def dim(self) -> int:
        return self.states.shape[1] // 2

    def state(self, i: int) -> ReducedState:
        d = self.dim
        return ReducedState(self.states[i, :d], self.states[i, d:])

    @property
    def max_step_energy_increase(self) -> float:
        if self.step_energies.size < 2:
            return 0.0
        return float(np.max(np.diff(self.step_energies)))


def column_names(n: int) -> list[str]:
    coords = ["R", "chi", "beta", "J1", "J2", "J3"] + [f"z{i + 1}" for i in range(n)]
    return (["t"] + coords + [c + "_dot" for c in coords]
            + ["E", "dE_dt", "psi", "gamma", "ecc", "manifold_dist"])


def write_trajectory(record: TrajectoryRecord, path) -> None:
    """Comma separated table, one row per sample, 17 significant digits."""
    n = record.dim - 6
    cols = np.column_stack([
        record.times, record.states, record.energies, record.energy_rates,
        record.psi, record.gamma, record.eccentricity, record.manifold_distance,
    ])
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(column_names(n)) + "\n")
        for row in cols:
            fh.write(",".join(f"{v:.16e}" for v in row) + "\n")


def read_trajectory(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


@dataclass(frozen=True)
class Tolerances:
    rtol: float = 1e-10
    atol: float = 1e-12
    method: str = "RK45"
    max_step: float = np.inf
    min_step: float = 1e-12
    degeneracy: Optional[float] = None


def simulate(initial: ReducedState, p: float, params: ModelParams, t_end: float,
             diss: Optional[DissipationSpec] = None, tol: Tolerances = Tolerances(),
             sample_dt: Optional[float] = None, equilibrium=None) -> TrajectoryRecord:
    """Integrate the reduced equations from ``initial`` up to ``t_end``.

    Samples are taken on a uniform grid of spacing ``sample_dt`` (default:
    ``t_end / 1000``) using the integrator's dense output; the energy is also
    recorded at every accepted step. ``psi`` is integrated alongside the
    state. Leaving the chart, losing definiteness of the mass matrix or step
    size underflow stop the run with a status instead of raising.
    """
    k = initial.y.size
    if k != params.dim:
        raise ValueError(f"state has dimension {k}, model expects {params.dim}")
    if diss is not None and diss.eta.shape[0] != k - 2:
        raise ValueError(f"dissipation matrix must be {k - 2}x{k - 2}")
    check_chart(initial.y, params, tol.degeneracy)
    order = _moment_order(initial.y)
    sample_dt = t_end / 1000.0 if sample_dt is None else sample_dt
    grid = np.arange(0.0, t_end + 0.5 * sample_dt, sample_dt)
    grid = grid[grid <= t_end * (1 + 1e-15)]

    kernel = _kernel_args(p, params, diss)
    if kernel is not None:
        def rhs(t, x):
            out = np.empty_like(x)
            _kernels.rhs(x, *kernel, out)
            return out

        def step_energy(x):
            return _kernels.energy(x, *kernel[:5])
    else:
        def rhs(t, x):
            y, yd = x[:k], x[k:2 * k]
            M, f = generalized_forces(y, yd, p, params, diss)
            out = np.empty_like(x)
            out[:k] = yd
            out[k:2 * k] = _solve(M, f)
            out[2 * k] = psi_dot(ReducedState(y, yd), p, params)
            return out

        def step_energy(x):
            return reduced_energy(ReducedState(x[:k], x[k:2 * k]), p, params)

    solver_cls = {"RK45": RK45, "DOP853": DOP853}[tol.method]
    x0 = np.concatenate([initial.y, initial.ydot, [0.0]])
    solver = solver_cls(rhs, 0.0, x0, t_end, rtol=tol.rtol, atol=tol.atol, max_step=tol.max_step)

    samples = [x0.copy()]
    sample_t = [0.0]
    gi = 1
    step_t = [0.0]
    step_E = [step_energy(x0)]
    status, message = _COMPLETED, ""
    n_steps = 0
    while solver.status == "running":
        try:
            msg = solver.step()
        except (ChartError, MassMatrixError, ValueError, ArithmeticError) as exc:
            status, message = "numerical_failure", str(exc)
            break
        if solver.status == "failed":
            status, message = "step_underflow", str(msg)
            break
        n_steps += 1
        x = solver.y
        st = ReducedState(x[:k], x[k:2 * k])
        try:
            check_chart(st.y, params, tol.degeneracy)
            if np.any(_moment_order(st.y) != order):
                # a step can jump across the coincidence set without landing in it
                raise ChartError("principal moments crossed (C_=)")
            _check_metric_block(st.y, params)
        except ChartError as exc:
            status, message = "chart_exit", str(exc)
        except (MassMatrixError, KineticFormError) as exc:
            status, message = "numerical_failure", str(exc)
        if solver.step_size is not None and solver.step_size < tol.min_step and solver.t < t_end:
            status, message = "step_underflow", f"step size {solver.step_size:g} below {tol.min_step:g}"
        step_t.append(solver.t)
        step_E.append(step_energy(x) if status == _COMPLETED else np.nan)
        if gi < grid.size and grid[gi] <= solver.t:
            dense = solver.dense_output()
            while gi < grid.size and grid[gi] <= solver.t:
                samples.append(x.copy() if grid[gi] == solver.t else dense(grid[gi]))
                sample_t.append(grid[gi])
                gi += 1
        if status != _COMPLETED:
            break

    return _assemble_record(np.array(sample_t), np.array(samples), p, params, diss, equilibrium,
                            np.array(step_t), np.array(step_E), status, message, n_steps)


def _kernel_args(p, params: ModelParams, diss: Optional[DissipationSpec]):
    """Packed arguments for the compiled kernels, or None when a cubic term is set."""
    co, gp, ks = params.elastic, params.gravity, params.kinetic
    if co.cubic is not None or (diss is not None and diss.cubic is not None):
        return None
    scal = np.array([p, gp.GM, gp.m, gp.I0, ks.kappa, ks.mass_beta, co.A, co.B, co.epsilon])
    eta = diss.eta if diss is not None else np.zeros((params.dim - 2, params.dim - 2))
    return scal, ks.mass_J, ks.mass_z, co.C, co.D, eta


def _moment_order(y: np.ndarray) -> np.ndarray:
    J = y[3:6]
    return np.sign([J[0] - J[1], J[0] - J[2], J[1] - J[2]])


def _check_metric_block(y: np.ndarray, params: ModelParams):
    """Positive definiteness of the mass matrix; only its (chi, beta) block can fail."""
    ks = params.kinetic
    u0 = ks.I0 + y[_J3]
    u1 = ks.kappa * (y[_J1] - y[_J2])
    D = _inertia_sum(y, params)
    b00 = u0 - u0 * u0 / D
    det = b00 * (ks.mass_beta - u1 * u1 / D) - (u1 - u0 * u1 / D) ** 2
    if not (b00 > 0 and det > 0):
        raise MassMatrixError("mass matrix is not positive definite",
                              float(np.linalg.cond(mass_matrix(y, params))))


def _assemble_record(times, xs, p, params, diss, equilibrium, step_t, step_E, status, message, n_steps):
    k = params.dim
    N = times.size
    E = np.empty(N)
    dE = np.empty(N)
    gam = np.empty(N)
    ecc = np.empty(N)
    dist = np.full(N, np.nan)
    power = np.empty(N)
    for i in range(N):
        st = ReducedState(xs[i, :k], xs[i, k:2 * k])
        E[i] = reduced_energy(st, p, params)
        dE[i] = energy_rate(st, p, params, diss)
        gam[i] = wrap_angle(st.gamma)
        ecc[i] = osculating_eccentricity(st, psi_dot(st, p, params), params)
        power[i] = rayleigh_power(st, diss)
        if equilibrium is not None:
            dist[i] = equilibrium.distance(st)
    return TrajectoryRecord(
        times=times, states=xs[:, :2 * k], energies=E, energy_rates=dE, psi=xs[:, 2 * k],
        gamma=gam, eccentricity=ecc, manifold_distance=dist, rayleigh=power,
        step_times=step_t, step_energies=step_E, status=status, message=message, n_steps=n_steps,
    )
