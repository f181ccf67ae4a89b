"""Inertia tensors, principal axes and the chiral octahedral group.

A deformed body is represented by a finite cloud of point masses. Its
inertia tensor determines the principal moments (the elastic coordinates
used everywhere else) and the principal frame, which is only fixed up to
the 24 rotations of the cube that map the set of coordinate axes to itself.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

DEFAULT_GAP_TOL = 1e-9

# Quarter turns about e1, e2, e3.
GENERATORS = (
    np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]]),
    np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]]),
    np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]]),
)


class DegenerateBodyError(ValueError):
    pass


class DegenerateConfigurationError(ValueError):
    """Two principal moments coincide, so the principal frame is undefined."""


@dataclass(frozen=True)
class PointMassBody:
    """Point masses with their centre of mass at the origin."""

    positions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        mass = np.asarray(self.masses, dtype=float).reshape(-1)
        if pos.shape[0] != mass.shape[0]:
            raise ValueError("positions and masses differ in length")
        if mass.size == 0 or mass.sum() <= 0.0:
            raise DegenerateBodyError("degenerate body")
        scale = max(1.0, float(np.abs(pos).max()))
        com = mass @ pos / mass.sum()
        if np.abs(com).max() > 1e-12 * scale:
            raise ValueError(f"centre of mass {com} is not at the origin")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", mass)

    @classmethod
    def centred(cls, positions, masses) -> "PointMassBody":
        """Build a body after shifting the cloud so its centre of mass is 0."""
        pos = np.asarray(positions, dtype=float).reshape(-1, 3)
        mass = np.asarray(masses, dtype=float).reshape(-1)
        if mass.size == 0 or mass.sum() <= 0.0:
            raise DegenerateBodyError("degenerate body")
        return cls(pos - mass @ pos / mass.sum(), mass)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def radius(self) -> float:
        return float(np.sqrt((self.positions**2).sum(axis=1).max()))

    def rotated(self, rot: np.ndarray) -> "PointMassBody":
        return PointMassBody(self.positions @ np.asarray(rot).T, self.masses)


def ellipsoid_cloud(semiaxes, n_per_axis: int, mass: float = 1.0) -> PointMassBody:
    """Homogeneous ellipsoid sampled on a cell-centred lattice.

    The lattice is symmetric under each coordinate reflection, so the cloud
    is centrally symmetric and its inertia tensor is exactly diagonal.
    """
    a = np.asarray(semiaxes, dtype=float)
    u = (np.arange(n_per_axis) + 0.5) * 2.0 / n_per_axis - 1.0
    X, Y, Z = np.meshgrid(u, u, u, indexing="ij")
    inside = X**2 + Y**2 + Z**2 <= 1.0
    pos = np.column_stack([X[inside] * a[0], Y[inside] * a[1], Z[inside] * a[2]])
    masses = np.full(pos.shape[0], mass / pos.shape[0])
    return PointMassBody(pos, masses)


def load_point_cloud(path) -> PointMassBody:
    """Read whitespace separated ``x y z m`` rows; the cloud is re-centred."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns (x y z m), got {data.shape[1]}")
    return PointMassBody.centred(data[:, :3], data[:, 3])


def is_rotation(mat, tol: float = 1e-12) -> bool:
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (3, 3):
        return False
    orth = np.abs(mat.T @ mat - np.eye(3)).max() <= tol
    return bool(orth and abs(np.linalg.det(mat) - 1.0) <= tol)


def inertia_from_body(body: PointMassBody) -> np.ndarray:
    """Inertia tensor sum_p m_p (|r_p|^2 Id - r_p r_p^T)."""
    r = body.positions
    m = body.masses
    if m.size == 0:
        raise DegenerateBodyError("degenerate body")
    outer = np.einsum("p,pi,pj->ij", m, r, r)
    tensor = np.trace(outer) * np.eye(3) - outer
    return 0.5 * (tensor + tensor.T)


def principal_axes(tensor, gap_tol: float = DEFAULT_GAP_TOL):
    """Ascending principal moments and a right-handed principal frame.

    ``gap_tol`` is relative to the largest moment. Among the four frames that
    keep the labelling (sign flips of two axes), the one with the largest
    trace is returned so the output is deterministic.
    """
    tensor = np.asarray(tensor, dtype=float)
    if tensor.shape != (3, 3) or not np.allclose(tensor, tensor.T, rtol=0, atol=1e-12 * max(1.0, np.abs(tensor).max())):
        raise ValueError("inertia tensor must be a symmetric 3x3 matrix")
    moments, frame = np.linalg.eigh(0.5 * (tensor + tensor.T))
    scale = max(abs(moments[-1]), np.finfo(float).tiny)
    if np.min(np.diff(moments)) < gap_tol * scale:
        raise DegenerateConfigurationError(
            f"degenerate configuration in C_=: moments {moments} closer than {gap_tol:g} (relative)"
        )
    if np.linalg.det(frame) < 0:
        frame[:, 2] = -frame[:, 2]
    flips = [np.diag(s) for s in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))]
    frame = max((frame @ f for f in flips), key=np.trace)
    return moments, frame


def _key(mat: np.ndarray) -> bytes:
    return np.asarray(np.rint(mat), dtype=np.int64).tobytes()


def chiral_octahedral_group(generators=GENERATORS) -> list[np.ndarray]:
    """Closure of the generators under matrix multiplication.

    Elements are returned as integer matrices in a fixed (lexicographic)
    order. For the default quarter-turn generators the result has 24 elements.
    """
    gens = [np.asarray(np.rint(g), dtype=np.int64) for g in generators]
    ident = np.eye(3, dtype=np.int64)
    seen = {_key(ident): ident}
    frontier = [ident]
    while frontier:
        nxt = []
        for g in frontier:
            for h in gens:
                prod = g @ h
                k = _key(prod)
                if k not in seen:
                    if len(seen) > 10_000:
                        raise RuntimeError("generated group is not finite")
                    seen[k] = prod
                    nxt.append(prod)
        frontier = nxt
    return sorted(seen.values(), key=lambda m: tuple(m.ravel()))


def signed_permutation_rotations() -> list[np.ndarray]:
    """All signed permutation matrices with determinant +1, by enumeration."""
    out = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            mat = np.zeros((3, 3), dtype=np.int64)
            for row, (col, s) in enumerate(zip(perm, signs)):
                mat[row, col] = s
            if round(np.linalg.det(mat)) == 1:
                out.append(mat)
    return sorted(out, key=lambda m: tuple(m.ravel()))


def covering_fiber(tensor, gap_tol: float = DEFAULT_GAP_TOL) -> list[tuple[np.ndarray, np.ndarray]]:
    """All 24 pairs (frame, diagonal tensor) with frame @ diag @ frame.T == tensor."""
    moments, frame = principal_axes(tensor, gap_tol)
    diag = np.diag(moments)
    fiber = []
    for g in chiral_octahedral_group():
        g = g.astype(float)
        fiber.append((frame @ g, g.T @ diag @ g))
    return fiber
