"""Ensemble campaigns: draw disorder realizations in parallel worker
processes, diagonalize, and reduce into mergeable accumulators.

Per-realization randomness comes from SeedSequence((seed, index)), so
statistics depend only on (config, seed set), never on worker count or
completion order.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from .ensembles import EnsembleSpec, draw_matrix
from .spectra import (
    SpacingAccumulator,
    SpectrumAccumulator,
    TransitionResult,
    Window,
    default_windows,
    dichotomy_windows,
    eigenvalues,
    transition_energies,
    unfold,
)

__all__ = [
    "CampaignResult",
    "realization_rng",
    "run_ensemble",
    "spacing_analysis",
    "transition_analysis",
]


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one realization: hash of (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


@dataclass
class CampaignResult:
    """Eigenvalue sets and pooled statistics of one ensemble campaign."""

    spec: EnsembleSpec
    seed: int
    eigenvalues: list[np.ndarray]
    accumulator: SpectrumAccumulator
    failures: list[tuple[int, str]] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def n_realizations(self) -> int:
        return len(self.eigenvalues)


_WORKER_SPEC: EnsembleSpec | None = None
_WORKER_SEED: int = 0


def _worker_init(spec: EnsembleSpec, seed: int):
    global _WORKER_SPEC, _WORKER_SEED
    # keep BLAS single-threaded inside workers: the pool supplies parallelism
    os.environ["OMP_NUM_THREADS"] = "1"
    os.environ["OPENBLAS_NUM_THREADS"] = "1"
    _WORKER_SPEC = spec
    _WORKER_SEED = seed


def _realize(index: int):
    try:
        rng = realization_rng(_WORKER_SEED, index)
        matrix = draw_matrix(_WORKER_SPEC, rng)
        return index, eigenvalues(matrix), None
    except Exception as exc:  # failed realizations are dropped, never reseeded
        return index, None, f"{type(exc).__name__}: {exc}"


def run_ensemble(spec: EnsembleSpec, realizations: int, seed: int,
                 workers: int = 1,
                 accumulator: SpectrumAccumulator | None = None) -> CampaignResult:
    """Diagonalize `realizations` independent draws of `spec`.

    Results are keyed by realization index, so any worker count reproduces
    identical statistics for the same (spec, seed).
    """
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    acc = accumulator if accumulator is not None else SpectrumAccumulator()
    t0 = time.monotonic()
    results: dict[int, np.ndarray] = {}
    failures: list[tuple[int, str]] = []
    if workers <= 1:
        _worker_init(spec, seed)
        for i in range(realizations):
            idx, eigs, err = _realize(i)
            if err is None:
                results[idx] = eigs
            else:
                failures.append((idx, err))
    else:
        ctx = get_context("fork")
        with ctx.Pool(workers, initializer=_worker_init,
                      initargs=(spec, seed)) as pool:
            for idx, eigs, err in pool.imap_unordered(
                    _realize, range(realizations), chunksize=4):
                if err is None:
                    results[idx] = eigs
                else:
                    failures.append((idx, err))
    ordered = [results[i] for i in sorted(results)]
    for eigs in ordered:
        acc.add(eigs)
    return CampaignResult(
        spec=spec, seed=seed, eigenvalues=ordered, accumulator=acc,
        failures=sorted(failures), wall_time=time.monotonic() - t0)


def spacing_analysis(eigs: list[np.ndarray], windows: list[Window],
                     s_max: float = 5.0, n_bins: int = 100) -> SpacingAccumulator:
    """Unfold an ensemble and fill a spacing accumulator over `windows`."""
    unfolded = unfold(eigs, windows)
    acc = SpacingAccumulator(windows, s_max=s_max, n_bins=n_bins)
    acc.add_unfolded(unfolded)
    return acc


def transition_analysis(eigs: list[np.ndarray],
                        abs_min: float = 0.05, abs_max: float = 1000.0,
                        n_windows: int = 14,
                        min_spacings: int = 200,
                        degree: int = 3) -> tuple[TransitionResult, SpacingAccumulator]:
    """Full transition-energy pipeline on an ensemble's eigenvalue sets."""
    wins = default_windows(abs_min, abs_max, n_windows)
    all_windows = wins["plus"] + wins["minus"]
    signs = [1] * len(wins["plus"]) + [-1] * len(wins["minus"])
    acc = spacing_analysis(eigs, all_windows)
    result = transition_energies(acc, signs, min_spacings=min_spacings,
                                 degree=degree)
    return result, acc


def dichotomy_analysis(eigs: list[np.ndarray], center_halfwidth: float = 0.2,
                       wing_start: float = 100.0) -> SpacingAccumulator:
    """Spacing statistics in the literal center/wings comparison windows."""
    return spacing_analysis(eigs, dichotomy_windows(center_halfwidth, wing_start))
