"""Disorder ensembles: the dipolar coupling matrix of a cloud and the three
surrogate ensembles used for comparison (marginal-decorrelated, GOE,
1-stable Cauchy).

Every build returns a dense real symmetric matrix with zero diagonal; the
diagonal would only shift all eigenvalues by a constant, so the surrogate
ensembles zero it as well for comparability (recorded in the spec metadata of
each kind).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import analytic
from .analytic import ANISO_AMP, COUPLING_AMP, GeometryParams
from .cloud import AtomCloud, CloudConfig, sample_cloud

__all__ = [
    "EnsembleSpec",
    "SymmetricMatrix",
    "build_rydberg",
    "draw_matrix",
    "sample_couplings",
    "sample_decorrelated",
    "sample_goe",
    "sample_levy1",
]

KINDS = ("rydberg", "decorrelated", "goe", "levy1")


@dataclass(frozen=True)
class SymmetricMatrix:
    """Dense real symmetric coupling matrix with zero diagonal."""

    values: np.ndarray

    @property
    def order(self) -> int:
        return self.values.shape[0]

    def validate(self, element_bounds: tuple[float, float] | None = None) -> None:
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise AssertionError("matrix must be square")
        if not np.array_equal(v, v.T):
            raise AssertionError("matrix must be exactly symmetric")
        if np.any(np.diagonal(v) != 0.0):
            raise AssertionError("diagonal must be exactly zero")
        if element_bounds is not None:
            lo, hi = element_bounds
            if v.min() < lo or v.max() > hi:
                raise AssertionError("element outside the blockade bounds")


@dataclass(frozen=True)
class EnsembleSpec:
    """Which ensemble to draw and its physical parameters.

    ``goe_sigma`` may be left None for kind="goe", in which case the width is
    matched to the coupling variance of (n_atoms, blockade_radius).
    """

    kind: str
    n_atoms: int
    blockade_radius: float = 0.0
    goe_sigma: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.n_atoms < 2:
            raise ValueError("n_atoms must be >= 2")
        if self.blockade_radius < 0:
            raise ValueError("blockade_radius must be >= 0")
        if self.kind == "goe" and self.goe_sigma is None and self.blockade_radius == 0:
            raise ValueError("goe needs an explicit sigma when r_b = 0")

    def resolved_goe_sigma(self) -> float:
        if self.goe_sigma is not None:
            return self.goe_sigma
        return analytic.goe_sigma_matched(
            GeometryParams(self.n_atoms, self.blockade_radius))

    def metadata(self) -> dict:
        meta = {
            "kind": self.kind,
            "n_atoms": self.n_atoms,
            "blockade_radius": self.blockade_radius,
            "diagonal": "zero",
        }
        if self.kind == "rydberg":
            meta["cloud_scheme"] = "random-sequential-addition"
        if self.kind == "goe":
            meta["goe_sigma"] = self.resolved_goe_sigma()
        return meta


def build_rydberg(cloud: AtomCloud) -> SymmetricMatrix:
    """Dipolar coupling matrix of a cloud.

    H_ij = (9 sqrt3 / 8 pi)(3 cos^2(theta_ij) - 1) / R_ij^3 with theta_ij the
    angle of the separation vector to the Z axis; zero diagonal.
    """
    pos = cloud.positions
    n = pos.shape[0]
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, 1.0)
    cos2 = d[:, :, 2] ** 2 / r2
    h = ANISO_AMP * (3.0 * cos2 - 1.0) / (r2 * np.sqrt(r2))
    np.fill_diagonal(h, 0.0)
    # exact symmetry despite floating-point: mirror the upper triangle
    h = np.triu(h, k=1)
    h = h + h.T
    m = SymmetricMatrix(h)
    if cloud.blockade_radius > 0:
        rb3 = cloud.blockade_radius**3
        m.validate((-COUPLING_AMP / (3 * rb3), 2 * COUPLING_AMP / (3 * rb3)))
    return m


def sample_couplings(params: GeometryParams, rng: np.random.Generator,
                     size: int) -> np.ndarray:
    """Draw i.i.d. couplings from the exact single-element marginal:
    anisotropy(u) / r^3 with u uniform on [-1, 1] and r from the
    pair-distance law."""
    r = analytic.sample_pair_distances(params, rng, size)
    u = rng.uniform(-1.0, 1.0, size)
    return analytic.anisotropy(u) / r**3


def sample_decorrelated(n: int, r_b: float, rng: np.random.Generator) -> SymmetricMatrix:
    """Correlation-free surrogate: every off-diagonal element drawn
    independently from the single-coupling marginal of an (n, r_b) cloud."""
    if n < 2:
        raise ValueError("need n >= 2")
    params = GeometryParams(n, r_b)
    m = int(n * (n - 1) // 2)
    vals = sample_couplings(params, rng, m)
    h = np.zeros((n, n))
    h[np.triu_indices(n, k=1)] = vals
    h = h + h.T
    return SymmetricMatrix(h)


def sample_goe(n: int, sigma: float, rng: np.random.Generator) -> SymmetricMatrix:
    """Gaussian orthogonal surrogate: off-diagonals N(0, sigma^2/2), zero
    diagonal."""
    if n < 2:
        raise ValueError("need n >= 2")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    h = np.zeros((n, n))
    h[np.triu_indices(n, k=1)] = rng.normal(
        0.0, sigma / math.sqrt(2.0), int(n * (n - 1) // 2))
    h = h + h.T
    return SymmetricMatrix(h)


def sample_levy1(n: int, rng: np.random.Generator) -> SymmetricMatrix:
    """1-stable surrogate: off-diagonals Cauchy with scale pi/n, zero
    diagonal."""
    if n < 2:
        raise ValueError("need n >= 2")
    h = np.zeros((n, n))
    h[np.triu_indices(n, k=1)] = (math.pi / n) * rng.standard_cauchy(
        int(n * (n - 1) // 2))
    h = h + h.T
    return SymmetricMatrix(h)


def draw_matrix(spec: EnsembleSpec, rng: np.random.Generator) -> SymmetricMatrix:
    """Draw one realization of the requested ensemble."""
    if spec.kind == "rydberg":
        cfg = CloudConfig(spec.n_atoms, spec.blockade_radius, seed=0)
        cloud = sample_cloud(cfg, rng)
        return build_rydberg(cloud)
    if spec.kind == "decorrelated":
        return sample_decorrelated(spec.n_atoms, spec.blockade_radius, rng)
    if spec.kind == "goe":
        return sample_goe(spec.n_atoms, spec.resolved_goe_sigma(), rng)
    if spec.kind == "levy1":
        return sample_levy1(spec.n_atoms, rng)
    raise ValueError(f"unknown ensemble kind {spec.kind!r}")


def matrix_triplets(m: SymmetricMatrix) -> str:
    """Plain-text dump 'i j value' (0-based, i < j), one element per line."""
    n = m.order
    iu, ju = np.triu_indices(n, k=1)
    lines = [f"{i} {j} {m.values[i, j]:.17g}" for i, j in zip(iu, ju)]
    return "\n".join(lines) + "\n"
