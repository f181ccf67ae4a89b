"""Elastic, quadrupole gravitational and effective potentials.

Shape coordinates are the principal-moment increments ``J_i = I_i - I0``
and ``n`` residual shape modes ``z``. The gravitational energy is the
quadrupole truncation of the Newtonian potential of the body; the direct
point-mass sum in :func:`quadrature_oracle` is kept as an independent check
on that formula.

Reduced coordinates are ordered ``y = (R, chi, beta, J1, J2, J3, z1..zn)``;
the potentials depend on ``chi`` and ``beta`` only through
``gamma = chi + beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .kinematics import PointMassBody, inertia_from_body, principal_axes


class ChartError(ValueError):
    """The state lies outside the region where the coordinates are valid."""


@dataclass(frozen=True)
class CubicTerm:
    """Optional cubic remainder of the elastic potential.

    ``value(J, z)`` and ``grad(J, z)`` (a vector over ``(J1, J2, J3, z)``) must
    both be supplied; the function is expected to vanish to third order at 0.
    """

    value: Callable[[np.ndarray, np.ndarray], float]
    grad: Callable[[np.ndarray, np.ndarray], np.ndarray]


def symmetric_cubic(c3: float) -> CubicTerm:
    """Permutation-symmetric example ``c3 * (J1^3 + J2^3 + J3^3)``."""
    def value(J, z):
        return c3 * float(np.sum(np.asarray(J) ** 3))

    def grad(J, z):
        return np.concatenate([3.0 * c3 * np.asarray(J) ** 2, np.zeros(len(z))])

    return CubicTerm(value, grad)


@dataclass(frozen=True)
class GravityParams:
    GM: float = 1.0
    m: float = 50.0
    I0: float = 0.1

    def __post_init__(self):
        for name in ("GM", "m", "I0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class ElasticCoeffs:
    """Coefficients of the permutation-symmetric quadratic elastic energy.

    The quadratic form is ``Q = 1/2 x.H.x`` over ``x = (J, z)``; ``H`` must be
    positive definite, which is checked with a Cholesky factorisation.
    """

    A: float = 0.4
    B: float = 0.1
    C: np.ndarray = field(default_factory=lambda: np.array([0.1]))
    D: np.ndarray = field(default_factory=lambda: np.eye(1))
    epsilon: float = 1e-3
    cubic: Optional[CubicTerm] = None

    def __post_init__(self):
        C = np.atleast_1d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if D.shape != (C.size, C.size):
            raise ValueError(f"D must be {C.size}x{C.size}, got {D.shape}")
        if not np.allclose(D, D.T, rtol=0, atol=1e-14):
            raise ValueError("D must be symmetric")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        if not self.A > self.B:
            raise ValueError(f"elastic form requires A > B (A={self.A}, B={self.B})")
        try:
            np.linalg.cholesky(self.hessian_matrix())
        except np.linalg.LinAlgError:
            raise ValueError("elastic quadratic form is not positive definite") from None

    @property
    def n(self) -> int:
        return self.C.size

    def with_epsilon(self, epsilon: float) -> "ElasticCoeffs":
        return ElasticCoeffs(self.A, self.B, self.C, self.D, epsilon, self.cubic)

    def hessian_matrix(self) -> np.ndarray:
        n = self.n
        H = np.empty((3 + n, 3 + n))
        H[:3, :3] = self.B
        H[np.arange(3), np.arange(3)] = self.A
        H[:3, 3:] = self.C[None, :]
        H[3:, :3] = self.C[:, None]
        H[3:, 3:] = self.D
        return H


@dataclass(frozen=True)
class ShapeCoords:
    J: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float).reshape(3)
        z = np.atleast_1d(np.asarray(self.z, dtype=float)).reshape(-1)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "z", z)

    @classmethod
    def zero(cls, n: int = 1) -> "ShapeCoords":
        return cls(np.zeros(3), np.zeros(n))


def quadratic_form(J, z, co: ElasticCoeffs) -> float:
    J = np.asarray(J, dtype=float)
    z = np.asarray(z, dtype=float)
    sJ = J.sum()
    cross = J[0] * J[1] + J[0] * J[2] + J[1] * J[2]
    return float(0.5 * co.A * (J @ J) + co.B * cross + (co.C @ z) * sJ + 0.5 * z @ co.D @ z)


def elastic_potential(shape: ShapeCoords, co: ElasticCoeffs, cubic: Optional[CubicTerm] = None) -> float:
    """``(Q(J, z) + V3(J, z)) / epsilon``; V3 defaults to ``co.cubic`` or zero."""
    cubic = cubic if cubic is not None else co.cubic
    v = quadratic_form(shape.J, shape.z, co)
    if cubic is not None:
        v += cubic.value(shape.J, shape.z)
    return v / co.epsilon


def elastic_gradient(J, z, co: ElasticCoeffs) -> np.ndarray:
    """Gradient of the elastic energy over ``(J1, J2, J3, z)``."""
    x = np.concatenate([J, z])
    g = co.hessian_matrix() @ x
    if co.cubic is not None:
        g = g + co.cubic.grad(np.asarray(J), np.asarray(z))
    return g / co.epsilon


def elastic_hessian(J, z, co: ElasticCoeffs, h: float = 1e-6) -> np.ndarray:
    H = co.hessian_matrix()
    if co.cubic is not None:
        x = np.concatenate([J, z])
        k = x.size
        Hc = np.empty((k, k))
        for i in range(k):
            step = h * max(1.0, abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += step
            xm[i] -= step
            Hc[:, i] = (co.cubic.grad(xp[:3], xp[3:]) - co.cubic.grad(xm[:3], xm[3:])) / (2 * step)
        H = H + 0.5 * (Hc + Hc.T)
    return H / co.epsilon


def gravitational_potential(Rdist: float, shape: ShapeCoords, gamma: float, gp: GravityParams) -> float:
    """Quadrupole-truncated Newtonian energy of the body in the planet's field."""
    if not Rdist > 0:
        raise ChartError("distance to the planet must be positive")
    J1, J2, J3 = shape.J
    c2 = math.cos(gamma) ** 2
    tidal = -J1 + 2.0 * J2 - J3 + 3.0 * (J1 - J2) * c2
    return -gp.GM * gp.m / Rdist + gp.GM / Rdist**3 * tidal


def quadrature_oracle(body: PointMassBody, Rdist: float, gamma: float, gp: GravityParams) -> float:
    """Exact point-mass sum ``-GM sum_p m_p / |xi_p|``.

    The body is given in its principal frame; the planet sits at distance
    ``Rdist`` on the direction ``(cos gamma, -sin gamma, 0)``, which makes
    ``cos(eta) = cos(phi) cos(theta + gamma)`` for a point at spherical angles
    ``(theta, phi)``.
    """
    if not Rdist > body.radius:
        raise ChartError("planet lies inside the body hull")
    planet = Rdist * np.array([math.cos(gamma), -math.sin(gamma), 0.0])
    dist = np.sqrt(((body.positions - planet) ** 2).sum(axis=1))
    return -gp.GM * math.fsum(body.masses / dist)


def quadrupole_moments(body: PointMassBody) -> np.ndarray:
    """Principal moments in the normalisation the quadrupole formula is written in.

    With ``K_j = 1/2 sum_p m_p x_j^2`` in the principal frame the moments are
    ``(K2 + K3, K1 + K3, K1 + K2)``, half the eigenvalues of the inertia
    tensor. Feeding ``J = quadrupole_moments(body) - I0`` (any I0) into
    :func:`gravitational_potential` reproduces the Newtonian energy to
    quadrupole order; the plain inertia eigenvalues would double the tidal part.
    """
    _, frame = principal_axes(inertia_from_body(body))
    x = body.positions @ frame
    K = 0.5 * np.einsum("p,pj->j", body.masses, x * x)
    return np.array([K[1] + K[2], K[0] + K[2], K[0] + K[1]])


def _check_inertia(Rdist: float, J3: float, gp: GravityParams) -> float:
    if not Rdist > 0:
        raise ChartError("distance to the planet must be positive")
    D = gp.m * Rdist**2 + gp.I0 + J3
    if not D > 0:
        raise ChartError(f"nonpositive effective inertia m R^2 + I0 + J3 = {D}")
    return D


def effective_potential(Rdist, chi, beta, shape: ShapeCoords, gp: GravityParams, co: ElasticCoeffs, p: float) -> float:
    """Centrifugal + gravitational + elastic energy of the reduced system."""
    J1, J2, J3 = shape.J
    D = _check_inertia(Rdist, J3, gp)
    c2 = math.cos(chi + beta) ** 2
    tidal = J1 - 2.0 * J2 + J3 + 3.0 * (J2 - J1) * c2
    return (
        p * p / (2.0 * D)
        - gp.GM * gp.m / Rdist
        - gp.GM / Rdist**3 * tidal
        + elastic_potential(shape, co)
    )


def kepler_potential(Rdist: float, gp: GravityParams, p: float) -> float:
    """Effective potential of the undeformed body, ``-GMm/R + p^2/(2(mR^2+I0))``."""
    return -gp.GM * gp.m / Rdist + p * p / (2.0 * (gp.m * Rdist**2 + gp.I0))


def grad_effective_potential(Rdist, chi, beta, shape: ShapeCoords, gp: GravityParams, co: ElasticCoeffs, p: float) -> np.ndarray:
    """Analytic gradient over ``(R, chi, beta, J1, J2, J3, z)``."""
    y = np.concatenate([[Rdist, chi, beta], shape.J, shape.z])
    return veff_gradient(y, gp, co, p)


def veff_value(y: np.ndarray, gp: GravityParams, co: ElasticCoeffs, p: float) -> float:
    return effective_potential(y[0], y[1], y[2], ShapeCoords(y[3:6], y[6:]), gp, co, p)


def veff_gradient(y: np.ndarray, gp: GravityParams, co: ElasticCoeffs, p: float) -> np.ndarray:
    R, chi, beta = y[0], y[1], y[2]
    J = y[3:6]
    z = y[6:]
    D = _check_inertia(R, J[2], gp)
    G, m = gp.GM, gp.m
    gamma = chi + beta
    c2 = math.cos(gamma) ** 2
    s2g = math.sin(2.0 * gamma)
    tidal = J[0] - 2.0 * J[1] + J[2] + 3.0 * (J[1] - J[0]) * c2
    R3 = R**3

    g = np.empty(y.size)
    g[0] = -p * p * m * R / D**2 + G * m / R**2 + 3.0 * G * tidal / R**4
    dgamma = 3.0 * G * (J[1] - J[0]) * s2g / R3
    g[1] = dgamma
    g[2] = dgamma
    g[3:] = elastic_gradient(J, z, co)
    g[3] -= G / R3 * (1.0 - 3.0 * c2)
    g[4] -= G / R3 * (-2.0 + 3.0 * c2)
    g[5] -= G / R3 + p * p / (2.0 * D**2)
    return g


def veff_hessian(y: np.ndarray, gp: GravityParams, co: ElasticCoeffs, p: float) -> np.ndarray:
    """Analytic Hessian over the reduced coordinates (cubic part by differences)."""
    R, chi, beta = y[0], y[1], y[2]
    J = y[3:6]
    z = y[6:]
    D = _check_inertia(R, J[2], gp)
    G, m = gp.GM, gp.m
    gamma = chi + beta
    c2 = math.cos(gamma) ** 2
    s2g = math.sin(2.0 * gamma)
    c2g = math.cos(2.0 * gamma)
    tidal = J[0] - 2.0 * J[1] + J[2] + 3.0 * (J[1] - J[0]) * c2
    dtidal_dJ = np.array([1.0 - 3.0 * c2, -2.0 + 3.0 * c2, 1.0])
    dtidal_dgamma = -3.0 * (J[1] - J[0]) * s2g

    k = y.size
    H = np.zeros((k, k))
    H[0, 0] = (
        -p * p * m / D**2
        + 4.0 * p * p * m * m * R * R / D**3
        - 2.0 * G * m / R**3
        - 12.0 * G * tidal / R**5
    )
    hRg = 3.0 * G * dtidal_dgamma / R**4
    H[0, 1] = H[1, 0] = H[0, 2] = H[2, 0] = hRg
    hRJ = 3.0 * G * dtidal_dJ / R**4
    hRJ[2] += 2.0 * p * p * m * R / D**3
    H[0, 3:6] = H[3:6, 0] = hRJ
    hgg = 6.0 * G * (J[1] - J[0]) * c2g / R**3
    H[1:3, 1:3] = hgg
    hgJ = np.array([-3.0 * G * s2g / R**3, 3.0 * G * s2g / R**3, 0.0])
    H[1, 3:6] = H[3:6, 1] = hgJ
    H[2, 3:6] = H[3:6, 2] = hgJ
    H[3:, 3:] = elastic_hessian(J, z, co)
    H[5, 5] += p * p / D**3
    return H
