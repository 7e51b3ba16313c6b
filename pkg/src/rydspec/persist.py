"""On-disk artifacts: CSV histograms and curves, key-value run summaries,
mergeable accumulator state, and failure manifests.

Every file starts with comment lines carrying the schema version and the
hash of the generating config, so downstream tooling can refuse to combine
incompatible runs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .spectra import SpacingAccumulator, SpectrumAccumulator, Window

__all__ = [
    "SCHEMA_VERSION",
    "config_hash",
    "load_spacing_accumulator",
    "load_spectrum_accumulator",
    "read_csv_with_meta",
    "save_spacing_accumulator",
    "save_spectrum_accumulator",
    "write_curve_csv",
    "write_failures",
    "write_histogram_csv",
    "write_positions_csv",
    "write_summary",
]

SCHEMA_VERSION = 1


def config_hash(config: dict) -> str:
    """Stable 12-hex digest of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _meta_lines(meta: dict) -> str:
    items = {"schema_version": SCHEMA_VERSION, **meta}
    return "".join(f"# {k}={v}\n" for k, v in items.items())


def write_histogram_csv(path, edges, density, counts, meta: dict) -> None:
    path = Path(path)
    edges = np.asarray(edges)
    with path.open("w") as fh:
        fh.write(_meta_lines(meta))
        fh.write("bin_left,bin_right,density,count\n")
        for lo, hi, d, c in zip(edges[:-1], edges[1:], density, counts):
            fh.write(f"{lo:.12g},{hi:.12g},{d:.12g},{int(c)}\n")


def write_curve_csv(path, lam, re_g, im_g, dos, residual, epsilon,
                    meta: dict) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(_meta_lines(meta))
        fh.write("lambda,re_g,im_g,dos,residual,epsilon\n")
        for row in zip(lam, re_g, im_g, dos, residual):
            fh.write(",".join(f"{v:.12g}" for v in row) + f",{epsilon:.12g}\n")


def write_positions_csv(path, positions, meta: dict) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(_meta_lines(meta))
        fh.write("x,y,z\n")
        for row in positions:
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


def read_csv_with_meta(path):
    """Read one of the CSV artifacts back: (meta dict, column dict)."""
    path = Path(path)
    meta: dict[str, str] = {}
    rows = []
    header = None
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            elif header is None:
                header = line.split(",")
            else:
                rows.append(line.split(","))
    if header is None:
        raise ValueError(f"no data in {path}")
    cols = {name: np.array([float(r[i]) for r in rows])
            for i, name in enumerate(header)}
    return meta, cols


def write_summary(path, entries: dict) -> None:
    """Flat key = value summary document."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"schema_version = {SCHEMA_VERSION}\n")
        for key, val in entries.items():
            fh.write(f"{key} = {val}\n")


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def write_failures(path, failures) -> None:
    """Partial-failure manifest: realization index, seed tuple, error."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("realization,error\n")
        for idx, err in failures:
            fh.write(f"{idx},{err}\n")


# ----------------------------------------------------------------------
# mergeable accumulator state
# ----------------------------------------------------------------------

def save_spectrum_accumulator(path, acc: SpectrumAccumulator, meta: dict) -> None:
    np.savez(
        Path(path),
        kind="spectrum",
        meta=json.dumps({"schema_version": SCHEMA_VERSION, **meta}),
        lin_range=np.array(acc.lin_range),
        lin_bins=acc.lin_bins,
        log_bins_per_decade=acc.log_bins_per_decade,
        log_max_decade=acc.log_max_decade,
        moment_halfwidth=acc.moment_halfwidth,
        lin_counts=acc.lin_counts,
        pos_log_counts=acc.pos_log_counts,
        neg_log_counts=acc.neg_log_counts,
        overflow=acc.overflow,
        n_realizations=acc.n_realizations,
        n_eigenvalues=acc.n_eigenvalues,
        moments=np.array([acc.m_count, acc.m_mean, acc.m_m2, acc.m_m3]),
    )


def load_spectrum_accumulator(path) -> tuple[SpectrumAccumulator, dict]:
    data = np.load(Path(path), allow_pickle=False)
    if str(data["kind"]) != "spectrum":
        raise ValueError("not a spectrum accumulator file")
    acc = SpectrumAccumulator(
        lin_range=tuple(data["lin_range"]),
        lin_bins=int(data["lin_bins"]),
        log_bins_per_decade=int(data["log_bins_per_decade"]),
        log_max_decade=float(data["log_max_decade"]),
        moment_halfwidth=float(data["moment_halfwidth"]),
    )
    acc.lin_counts = data["lin_counts"].copy()
    acc.pos_log_counts = data["pos_log_counts"].copy()
    acc.neg_log_counts = data["neg_log_counts"].copy()
    acc.overflow = int(data["overflow"])
    acc.n_realizations = int(data["n_realizations"])
    acc.n_eigenvalues = int(data["n_eigenvalues"])
    m = data["moments"]
    acc.m_count, acc.m_mean, acc.m_m2, acc.m_m3 = int(m[0]), m[1], m[2], m[3]
    return acc, json.loads(str(data["meta"]))


def save_spacing_accumulator(path, acc: SpacingAccumulator, meta: dict) -> None:
    np.savez(
        Path(path),
        kind="spacing",
        meta=json.dumps({"schema_version": SCHEMA_VERSION, **meta}),
        window_names=np.array([w.name for w in acc.windows]),
        window_intervals=json.dumps([list(map(list, w.intervals))
                                     for w in acc.windows]),
        s_max=acc.s_max,
        n_bins=acc.n_bins,
        counts=acc.counts,
        beyond=acc.beyond,
        totals=acc.totals,
        sums=acc.sums,
    )


def load_spacing_accumulator(path) -> tuple[SpacingAccumulator, dict]:
    data = np.load(Path(path), allow_pickle=False)
    if str(data["kind"]) != "spacing":
        raise ValueError("not a spacing accumulator file")
    names = [str(n) for n in data["window_names"]]
    intervals = json.loads(str(data["window_intervals"]))
    windows = [Window(n, tuple(tuple(iv) for iv in ivs))
               for n, ivs in zip(names, intervals)]
    acc = SpacingAccumulator(windows, s_max=float(data["s_max"]),
                             n_bins=int(data["n_bins"]))
    acc.counts = data["counts"].copy()
    acc.beyond = data["beyond"].copy()
    acc.totals = data["totals"].copy()
    acc.sums = data["sums"].copy()
    return acc, json.loads(str(data["meta"]))
