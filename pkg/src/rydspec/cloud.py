"""Random atomic configurations: uniform ball placement with hard-sphere
exclusion.

Clouds live at unit number density, so N atoms fill a ball of radius
(3N/4pi)^(1/3).  The blockade constraint keeps every pair farther apart than
the exclusion radius; sampling is random sequential addition with a global
rejection budget (scheme name recorded in ``AtomCloud.scheme``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analytic import ball_radius

__all__ = [
    "AtomCloud",
    "CloudConfig",
    "FeasibilityError",
    "SamplingExhausted",
    "pair_distances",
    "sample_cloud",
]

PACKING_CAP = 0.3
SAMPLING_SCHEME = "random-sequential-addition"


class FeasibilityError(ValueError):
    """Requested packing fraction exceeds the feasibility cap."""


class SamplingExhausted(RuntimeError):
    """The rejection budget ran out before a valid cloud was produced."""


@dataclass(frozen=True)
class CloudConfig:
    """Parameters of one cloud draw.

    Attributes
    ----------
    n_atoms : int
        Number of atoms, >= 1.
    blockade_radius : float
        Minimum allowed pair distance, >= 0 (units of rho^(-1/3)).
    seed : int
        Seed for the default random stream.
    max_attempts : int
        Per-atom rejection budget; the total budget is
        n_atoms * max_attempts candidate rejections.
    """

    n_atoms: int
    blockade_radius: float = 0.0
    seed: int = 0
    max_attempts: int = 1000

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if self.blockade_radius < 0:
            raise ValueError("blockade_radius must be >= 0")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.packing_fraction > PACKING_CAP:
            raise FeasibilityError(
                f"packing fraction {self.packing_fraction:.3f} exceeds cap "
                f"{PACKING_CAP}")

    @property
    def cloud_radius(self) -> float:
        return ball_radius(self.n_atoms)

    @property
    def packing_fraction(self) -> float:
        """N (r_b/2)^3 / R^3; equals pi r_b^3 / 6 at unit density."""
        return self.n_atoms * (self.blockade_radius / 2.0) ** 3 / self.cloud_radius**3


@dataclass(frozen=True)
class AtomCloud:
    """Accepted configuration: positions inside the ball, pairwise separated."""

    positions: np.ndarray
    cloud_radius: float
    blockade_radius: float = 0.0
    scheme: str = SAMPLING_SCHEME

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    def validate(self) -> None:
        """Assert both cloud invariants (containment and hard core)."""
        radii = np.linalg.norm(self.positions, axis=1)
        if np.any(radii > self.cloud_radius * (1 + 1e-12)):
            raise AssertionError("atom outside the cloud ball")
        if self.n_atoms > 1 and self.blockade_radius > 0:
            if min_pair_distance(self.positions) <= self.blockade_radius:
                raise AssertionError("hard-core violation")


def _ball_points(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    # direction from a normalized 3-D normal, radius from U^(1/3): exact and
    # branch-free
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / 3.0)
    return v * r[:, None]


def min_pair_distance(positions: np.ndarray) -> float:
    d = positions[:, None, :] - positions[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    return math.sqrt(float(r2.min()))


def sample_cloud(config: CloudConfig, rng: np.random.Generator | None = None) -> AtomCloud:
    """Draw one blockade-constrained cloud.

    Atoms are added sequentially; a candidate closer than the blockade radius
    to any accepted atom is rejected.  When one atom accumulates
    ``max_attempts`` rejections the whole cloud restarts; when total
    rejections exceed ``n_atoms * max_attempts`` the draw fails with
    `SamplingExhausted`.  Deterministic given (config, seed).
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence((config.seed,)))
    n = config.n_atoms
    radius = config.cloud_radius
    rb2 = config.blockade_radius**2

    if config.blockade_radius == 0.0:
        cloud = AtomCloud(_ball_points(rng, n, radius), radius, 0.0)
        cloud.validate()
        return cloud

    budget = n * config.max_attempts
    while budget > 0:
        pos = np.empty((n, 3))
        count = 0
        restart = False
        while count < n:
            attempts_left = config.max_attempts
            placed = False
            while attempts_left > 0:
                cand = _ball_points(rng, 1, radius)[0]
                if count == 0:
                    placed = True
                    break
                delta = pos[:count] - cand
                if np.min(np.einsum("ij,ij->i", delta, delta)) > rb2:
                    placed = True
                    break
                attempts_left -= 1
                budget -= 1
                if budget <= 0:
                    raise SamplingExhausted(
                        f"rejection budget {n * config.max_attempts} exhausted "
                        f"(n={n}, r_b={config.blockade_radius})")
            if not placed:
                restart = True
                break
            pos[count] = cand
            count += 1
        if restart:
            continue
        cloud = AtomCloud(pos, radius, config.blockade_radius)
        cloud.validate()
        return cloud
    raise SamplingExhausted(
        f"rejection budget {n * config.max_attempts} exhausted "
        f"(n={n}, r_b={config.blockade_radius})")


def pair_distances(cloud: AtomCloud) -> np.ndarray:
    """All N(N-1)/2 pair distances, arbitrary order."""
    pos = cloud.positions
    n = pos.shape[0]
    if n < 2:
        return np.empty(0)
    d = pos[:, None, :] - pos[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    iu = np.triu_indices(n, k=1)
    return r[iu]
