"""The 1:1 resonance manifold and the relaxation experiments around it.

The resonant states are the critical points of the effective potential on
the slice ``gamma = 0``; shifting ``(chi, beta) -> (chi + d, beta - d)``
moves along the manifold without changing anything physical.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import (
    DissipationSpec,
    ModelParams,
    ReducedState,
    Tolerances,
    TrajectoryRecord,
    _metric_terms,
    generalized_forces,
    kinetic_matrix,
    simulate,
    wrap_angle,
)
from .potentials import (
    GravityParams,
    kepler_potential,
    veff_gradient,
    veff_hessian,
)


class EquilibriumError(RuntimeError):
    pass


class NewtonDivergenceError(EquilibriumError):
    pass


class OrderingViolationError(EquilibriumError):
    pass


class IndefiniteHessianError(EquilibriumError):
    pass


def kepler_radius(p: float, gp: GravityParams, tol: float = 1e-14, max_iter: int = 200) -> float:
    """Nondegenerate minimiser of ``-GMm/R + p^2 / (2 (m R^2 + I0))``.

    Safeguarded Newton on the derivative, started from the point-mass Kepler
    radius ``p^2 / (GM m^2)`` and kept inside a sign-change bracket.
    """
    if p == 0:
        raise EquilibriumError("angular momentum must be nonzero")
    G, m, I0 = gp.GM, gp.m, gp.I0
    p2 = p * p

    def d1(R):
        return G * m / R**2 - p2 * m * R / (m * R * R + I0) ** 2

    def d2(R):
        D = m * R * R + I0
        return -2.0 * G * m / R**3 - p2 * m / D**2 + 4.0 * p2 * m * m * R * R / D**3

    R = p2 / (G * m * m)
    # bracket [lo, hi] with d1(lo) < 0 < d1(hi): V_G0 falls then rises through the minimum
    hi = R
    while d1(hi) <= 0:
        hi *= 2.0
        if hi > 1e12 * R:
            raise EquilibriumError("no interior minimum found")
    lo = hi
    while d1(lo) >= 0:
        lo *= 0.5
        if lo < 1e-12 * R:
            raise EquilibriumError("no interior minimum found")
    R = 0.5 * (lo + hi) if not lo < R < hi else R
    for _ in range(max_iter):
        g = d1(R)
        if g < 0:
            lo = R
        else:
            hi = R
        h = d2(R)
        step = g / h if h > 0 else None
        R_new = R - step if step is not None else 0.5 * (lo + hi)
        if not lo < R_new < hi:
            R_new = 0.5 * (lo + hi)
        if abs(R_new - R) <= tol * R:
            R = R_new
            break
        R = R_new
    else:
        raise EquilibriumError("Newton iteration for the Kepler radius did not converge")
    if not d2(R) > 0:
        raise EquilibriumError(f"critical point R={R} is not a nondegenerate minimum")
    return R


@dataclass(frozen=True)
class Equilibrium:
    Rbar: float
    Jbar: np.ndarray
    zbar: np.ndarray
    p: float
    epsilon: float
    R0: float
    residual_norm: float
    transversal_hessian_eigs: np.ndarray
    iterations: int = 0

    @property
    def ordered(self) -> bool:
        return bool(self.Jbar[0] < self.Jbar[1] < self.Jbar[2])

    def coordinates(self, chi: float = 0.0) -> np.ndarray:
        return np.concatenate([[self.Rbar, chi, -chi], self.Jbar, self.zbar])

    def state(self, chi: float = 0.0) -> ReducedState:
        y = self.coordinates(chi)
        return ReducedState(y, np.zeros_like(y))

    def distance(self, state: ReducedState) -> float:
        return manifold_distance(state, self)

    def summary(self) -> dict:
        return {
            "Rbar": self.Rbar,
            "Jbar": self.Jbar.tolist(),
            "zbar": self.zbar.tolist(),
            "p": self.p,
            "epsilon": self.epsilon,
            "R0": self.R0,
            "residual_norm": self.residual_norm,
            "transversal_hessian_eigs": self.transversal_hessian_eigs.tolist(),
            "ordering_J1_lt_J2_lt_J3": self.ordered,
            "iterations": self.iterations,
        }


def manifold_tangent(dim: int) -> np.ndarray:
    t = np.zeros(dim)
    t[1], t[2] = 1.0, -1.0
    return t / math.sqrt(2.0)


def transversal_hessian(H: np.ndarray) -> np.ndarray:
    """Hessian restricted to the orthogonal complement of the manifold tangent."""
    t = manifold_tangent(H.shape[0])
    # orthonormal basis of the complement: QR of [t | I] and drop the first column
    Q, _ = np.linalg.qr(np.column_stack([t, np.eye(H.shape[0])]))
    basis = Q[:, 1:H.shape[0]]
    return basis.T @ H @ basis


def find_equilibrium(p: float, params: ModelParams, epsilon: Optional[float] = None,
                     tol: float = 1e-12, max_iter: int = 100) -> Equilibrium:
    """Solve ``grad V_eff = 0`` on ``gamma = 0`` by damped Newton from ``(R0, 0, 0)``.

    The residual is measured in scaled form: each gradient component is divided
    by the square root of the matching diagonal Hessian entry.
    """
    if epsilon is not None:
        params = params.with_epsilon(epsilon)
    gp, co = params.gravity, params.elastic
    R0 = kepler_radius(p, gp)
    idx = np.r_[0, 3:params.dim]  # R, J, z; gamma is pinned at 0

    def full(x):
        y = np.zeros(params.dim)
        y[idx] = x
        return y

    def scaled_grad(x):
        y = full(x)
        g = veff_gradient(y, gp, co, p)[idx]
        H = veff_hessian(y, gp, co, p)[np.ix_(idx, idx)]
        return g, H, g / np.sqrt(np.abs(np.diag(H)))

    x = np.zeros(idx.size)
    x[0] = R0
    g, H, gs = scaled_grad(x)
    res = float(np.linalg.norm(gs))
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NewtonDivergenceError(f"Newton did not converge in {max_iter} iterations (residual {res:.3e})")
        it += 1
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise NewtonDivergenceError("singular Hessian in Newton iteration") from None
        lam = 1.0
        while True:
            trial = x + lam * step
            try:
                if trial[0] <= 0:
                    raise ValueError
                g_t, H_t, gs_t = scaled_grad(trial)
                res_t = float(np.linalg.norm(gs_t))
            except ValueError:
                res_t = math.inf
            if res_t < (1.0 - 1e-4 * lam) * res or (lam < 1e-3 and res_t < res):
                break
            lam *= 0.5
            if lam < 1e-10:
                if res < 1e3 * tol:
                    # roundoff floor reached
                    res_t, trial, g_t, H_t = res, x, g, H
                    break
                raise NewtonDivergenceError(f"line search failed (residual {res:.3e})")
        if trial is x:
            break
        x, g, H, res = trial, g_t, H_t, res_t

    y = full(x)
    Hfull = veff_hessian(y, gp, co, p)
    eigs = np.linalg.eigvalsh(transversal_hessian(Hfull))
    eq = Equilibrium(
        Rbar=float(x[0]), Jbar=x[1:4].copy(), zbar=x[4:].copy(), p=p, epsilon=co.epsilon,
        R0=R0, residual_norm=res, transversal_hessian_eigs=eigs, iterations=it,
    )
    check_equilibrium(eq)
    return eq


def check_equilibrium(eq: Equilibrium) -> None:
    """Raise unless the moments are ordered and the transversal Hessian is positive definite."""
    if not eq.ordered:
        raise OrderingViolationError(f"ordering J1 < J2 < J3 violated: {eq.Jbar}")
    eigs = eq.transversal_hessian_eigs
    if not eigs.min() > 0:
        raise IndefiniteHessianError(f"transversal Hessian not positive definite: min eig {eigs.min():.3e}")


def leading_order_differences(eq: Equilibrium, params: ModelParams) -> tuple[float, float]:
    """Leading-order predictions for ``J1 - J2`` and ``J2 - J3`` at the equilibrium."""
    gp, co = params.gravity, params.elastic
    AB = co.A - co.B
    d12 = -3.0 * gp.GM * eq.epsilon / (AB * eq.Rbar**3)
    Dm = gp.m * eq.Rbar**2 + gp.I0 + eq.Jbar[2]
    d23 = -eq.epsilon * eq.p**2 / (2.0 * AB * Dm**2)
    return d12, d23


def manifold_distance(state: ReducedState, eq: Equilibrium) -> float:
    """Euclidean distance in ``(R, gamma, J, z, ydot)`` from the resonant point."""
    y, yd = state.y, state.ydot
    diff = np.concatenate([
        [y[0] - eq.Rbar, wrap_angle(y[1] + y[2])],
        y[3:6] - eq.Jbar,
        y[6:] - eq.zbar,
        yd,
    ])
    return float(np.linalg.norm(diff))


# --- the no-dissipation set ---

def nd_specialized_residuals(state: ReducedState, chi_ddot: float, p: float, params: ModelParams):
    """The chi- and beta-equations in closed form on states with no elastic motion.

    Each is returned as ``dL/dq - d/dt dL/dqdot`` for accelerations with
    ``betaddot = Jddot = zddot = 0``.
    """
    gp = params.gravity
    y, yd = state.y, state.ydot
    m, R, Rdot, chidot = gp.m, y[0], yd[0], yd[1]
    I3 = gp.I0 + y[5]
    Dm = m * R * R + I3
    a12 = kinetic_matrix(y[3:6], y[6:], params.kinetic)[0, 1]
    dV_dgamma = veff_gradient(y, gp, params.elastic, p)[1]
    common = (-chi_ddot / Dm + 2.0 * m * R * chidot * Rdot / Dm**2)
    lhs_chi = I3 * I3 * common + I3 * chi_ddot - 2.0 * p * m * R * I3 * Rdot / Dm**2
    lhs_beta = a12 * I3 * common + a12 * chi_ddot - 2.0 * p * m * R * a12 * Rdot / Dm**2
    return -dV_dgamma - lhs_chi, -dV_dgamma - lhs_beta


def nd_direct_residuals(state: ReducedState, chi_ddot: float, p: float, params: ModelParams,
                        R_ddot: float = 0.0):
    """The same two residuals from the general mass-matrix/force assembly."""
    acc = np.zeros(state.y.size)
    acc[0], acc[1] = R_ddot, chi_ddot
    M, f = generalized_forces(state.y, state.ydot, p, params, None)
    r = f - M @ acc
    return float(r[1]), float(r[2])


def nd_residual_check(state: ReducedState, p: float, params: ModelParams, chi_ddot: float = 0.0) -> float:
    """``a12/(I0+J3)`` times the chi-residual minus the beta-residual.

    On a state with no elastic motion this equals
    ``(1 - a12/(I0+J3)) dV_eff/dgamma``, whatever ``chi_ddot`` is.
    """
    if np.any(state.elastic_velocity != 0):
        raise ValueError("state has elastic motion; the identity holds only without it")
    r_chi, r_beta = nd_direct_residuals(state, chi_ddot, p, params)
    a = kinetic_matrix(state.J, state.z, params.kinetic)
    return a[0, 1] / a[0, 0] * r_chi - r_beta


# --- relaxation experiment ---

@dataclass(frozen=True)
class Thresholds:
    manifold_distance: float = 1e-6
    gamma: float = 1e-6
    eccentricity: float = 1e-5
    elastic_speed: float = 1e-8
    energy_step: float = 1e-9


@dataclass(frozen=True)
class Perturbation:
    """Offset added to the resonant state.

    Without a seed every listed component receives ``size``; with a seed the
    offset is a random direction in those components scaled to norm ``size``.
    """

    size: float = 1e-3
    components: tuple = ("R", "gamma", "Rdot", "chidot")
    seed: Optional[int] = None

    _SLOTS = {"R": (0, 0), "gamma": (0, 1), "chi": (0, 1), "beta": (0, 2), "J1": (0, 3), "J2": (0, 4),
              "J3": (0, 5), "Rdot": (1, 0), "chidot": (1, 1), "betadot": (1, 2), "J1dot": (1, 3),
              "J2dot": (1, 4), "J3dot": (1, 5)}

    def apply(self, state: ReducedState) -> ReducedState:
        y, yd = state.y.copy(), state.ydot.copy()
        if self.seed is None:
            amounts = np.full(len(self.components), self.size)
        else:
            v = np.random.default_rng(self.seed).standard_normal(len(self.components))
            amounts = self.size * v / np.linalg.norm(v)
        for name, amt in zip(self.components, amounts):
            if name not in self._SLOTS:
                raise ValueError(f"unknown perturbation component {name!r}")
            which, i = self._SLOTS[name]
            (y if which == 0 else yd)[i] += amt
        return ReducedState(y, yd)


@dataclass
class ConvergenceReport:
    perturbation: dict
    thresholds: dict
    eta: float
    times: np.ndarray
    manifold_distance: np.ndarray
    gamma: np.ndarray
    eccentricity: np.ndarray
    energy: np.ndarray
    status: str
    flags: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)
    verdict: str = "INCONCLUSIVE"
    classification: str = ""

    def to_dict(self, include_series: bool = False) -> dict:
        out = {
            "verdict": self.verdict,
            "classification": self.classification,
            "status": self.status,
            "eta": self.eta,
            "perturbation": self.perturbation,
            "thresholds": self.thresholds,
            "flags": self.flags,
            "final": self.final,
        }
        if include_series:
            out["series"] = {
                "t": self.times.tolist(),
                "manifold_distance": self.manifold_distance.tolist(),
                "gamma": self.gamma.tolist(),
                "eccentricity": self.eccentricity.tolist(),
                "energy": self.energy.tolist(),
            }
        return out


def _eta_scale(diss: Optional[DissipationSpec]) -> float:
    if diss is None:
        return 0.0
    return float(np.max(np.abs(diss.eta)))


def lasalle_experiment(eq: Equilibrium, params: ModelParams, perturbation: Perturbation,
                       diss: Optional[DissipationSpec], t_end: float,
                       thresholds: Thresholds = Thresholds(), tol: Tolerances = Tolerances(),
                       sample_dt: Optional[float] = None) -> tuple[ConvergenceReport, TrajectoryRecord]:
    """Perturb the resonant state, integrate, and judge relaxation back to it.

    PASS requires: energy never rising by more than ``thresholds.energy_step``
    over an accepted step, and at ``t_end`` manifold distance, ``|gamma|``,
    eccentricity and elastic speeds all below their thresholds.
    """
    start = perturbation.apply(eq.state())
    rec = simulate(start, eq.p, params, t_end, diss=diss, tol=tol, sample_dt=sample_dt, equilibrium=eq)
    report = ConvergenceReport(
        perturbation={"size": perturbation.size, "components": list(perturbation.components),
                      "seed": perturbation.seed},
        thresholds=asdict(thresholds),
        eta=_eta_scale(diss),
        times=rec.times, manifold_distance=rec.manifold_distance, gamma=rec.gamma,
        eccentricity=rec.eccentricity, energy=rec.energies, status=rec.status,
    )
    if not rec.ok:
        report.final = {"message": rec.message, "t_reached": float(rec.times[-1])}
        report.verdict = "INCONCLUSIVE"
        report.classification = "chart exit or numerical failure"
        return report, rec
    last = rec.state(-1)
    w = last.elastic_velocity
    E0 = rec.energies[0]
    d0 = rec.manifold_distance[0]
    report.final = {
        "t": float(rec.times[-1]),
        "manifold_distance": float(rec.manifold_distance[-1]),
        "gamma": float(rec.gamma[-1]),
        "eccentricity": float(rec.eccentricity[-1]),
        "elastic_speed": float(np.max(np.abs(w))),
        "chi_dot": float(last.ydot[1]),
        "beta_dot": float(last.ydot[2]),
        "R_dot": float(last.ydot[0]),
        "energy_drift_relative": float(np.max(np.abs(rec.energies - E0)) / abs(E0)),
        "max_step_energy_increase": rec.max_step_energy_increase,
        "initial_manifold_distance": float(d0),
        "max_manifold_distance": float(np.max(rec.manifold_distance)),
        "n_steps": rec.n_steps,
    }
    flags = {
        "energy_nonincreasing": rec.max_step_energy_increase <= thresholds.energy_step,
        "manifold_distance": report.final["manifold_distance"] < thresholds.manifold_distance,
        "gamma": abs(report.final["gamma"]) < thresholds.gamma,
        "eccentricity": report.final["eccentricity"] < thresholds.eccentricity,
        "elastic_speed": report.final["elastic_speed"] < thresholds.elastic_speed,
    }
    report.flags = flags
    if d0 == 0.0 or all(flags.values()):
        report.verdict = "PASS"
        report.classification = "asymptotically stable"
    else:
        report.verdict = "FAIL"
        bounded = report.final["max_manifold_distance"] < 10.0 * d0
        decaying = report.final["manifold_distance"] < 0.1 * d0
        if bounded and not decaying:
            report.classification = "stable, not asymptotic"
        elif bounded:
            report.classification = "decaying, thresholds not met"
        else:
            report.classification = "unbounded excursion"
    return report, rec
