"""Grid scan of the lattice super-martingale inequality for radial variants.

For ``g`` applied to the squared distance ``r = x^2 + y^2`` the uniform walk
in the plane has ``Exp V <= V`` at ``(x, y)`` exactly when

    g((x+1)^2 + y^2) + g((x-1)^2 + y^2) + g(x^2 + (y+1)^2) + g(x^2 + (y-1)^2) <= 4 g(x^2 + y^2).

The slack is ``4 g(r) - sum g(r_k)``.  It is evaluated through the increments
``g(r + delta) - g(r)`` with ``log1p`` so that the small differences far from
the origin keep full relative precision.  Only the fundamental domain
``0 <= y <= x`` is computed; the other seven images follow by symmetry, which
is spot-checked on a sample.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import permutations, product
from typing import List, Optional, Tuple

import numpy as np

MARGIN = 1e-12
FUNCTIONS = ("log", "loglog")


@dataclass(frozen=True)
class ScanConfig:
    N: int
    function: str = "loglog"
    exclusion_radius: float = 2.0
    chunk: int = 64
    dims: int = 2
    sample_fraction: float = 0.01
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if self.exclusion_radius < 1:
            raise ValueError("exclusion_radius must be at least 1")
        if self.function not in FUNCTIONS:
            raise ValueError(f"function must be one of {FUNCTIONS}")
        if self.dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")
        if self.chunk < 1:
            raise ValueError("chunk must be positive")


@dataclass
class ScanReport:
    config: ScanConfig
    points_scanned: int
    violations: List[Tuple[Tuple[int, ...], float]]
    marginals: List[Tuple[Tuple[int, ...], float]]
    excluded: List[Tuple[int, ...]]
    min_slack: float
    min_slack_at: Tuple[int, ...]
    symmetry_checked: int
    symmetry_max_diff: float
    elapsed: float = 0.0

    def summary(self) -> dict:
        c = self.config
        return {
            "function": c.function,
            "N": c.N,
            "dims": c.dims,
            "exclusion_radius": c.exclusion_radius,
            "points_scanned": self.points_scanned,
            "violation_count": len(self.violations),
            "violations": [list(p) for p, _ in self.violations[:1000]],
            "marginal_count": len(self.marginals),
            "excluded": [list(p) for p in self.excluded],
            "min_slack": self.min_slack,
            "min_slack_at": list(self.min_slack_at),
            "symmetry_checked": self.symmetry_checked,
            "symmetry_max_diff": self.symmetry_max_diff,
            "elapsed_seconds": round(self.elapsed, 3),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            coords = ["x", "y", "z"][: self.config.dims]
            w.writerow(coords + ["slack", "kind"])
            for kind, rows in (("violation", self.violations), ("marginal", self.marginals)):
                for p, s in rows:
                    w.writerow(list(p) + [repr(s), kind])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def _increment(r: np.ndarray, delta: np.ndarray, function: str) -> np.ndarray:
    """``g(r + delta) - g(r)`` computed without cancellation."""
    step = np.log1p(delta / r)
    if function == "log":
        return step
    return np.log1p(step / np.log(r))


def slack_arrays(coords: List[np.ndarray], function: str) -> np.ndarray:
    """Slack ``2k g(r) - sum g(neighbours)`` for integer coordinate arrays (k = dimension)."""
    r = sum(c.astype(np.float64) ** 2 for c in coords)
    total = np.zeros_like(r)
    for c in coords:
        c = c.astype(np.float64)
        total += _increment(r, 2 * c + 1, function)
        total += _increment(r, -2 * c + 1, function)
    return -total


def slack_at(point, function: str = "loglog") -> float:
    """Slack at a single lattice point."""
    coords = [np.array([float(c)]) for c in point]
    return float(slack_arrays(coords, function)[0])


def _excluded_mask(coords: List[np.ndarray], radius: float) -> np.ndarray:
    r = sum(c.astype(np.float64) ** 2 for c in coords)
    m = r <= radius
    for c in coords:
        c = c.astype(np.float64)
        m |= (r + 2 * c + 1) <= radius
        m |= (r - 2 * c + 1) <= radius
    return m


def _images(point: Tuple[int, ...]) -> List[Tuple[int, ...]]:
    out = set()
    for perm in permutations(point):
        for signs in product((1, -1), repeat=len(point)):
            out.add(tuple(s * c for s, c in zip(signs, perm)))
    return sorted(out)


def _domain_chunk(xs: np.ndarray, dims: int):
    """Fundamental-domain points ``x >= y (>= z) >= 0`` with ``x`` in ``xs``."""
    parts = []
    for x in xs:
        if dims == 2:
            y = np.arange(0, x + 1)
            parts.append(np.stack([np.full_like(y, x), y]))
        else:
            yy, zz = np.meshgrid(np.arange(0, x + 1), np.arange(0, x + 1), indexing="ij")
            keep = zz <= yy
            y, z = yy[keep], zz[keep]
            parts.append(np.stack([np.full_like(y, x), y, z]))
    return np.concatenate(parts, axis=1)


def _scan_chunk(xs, cfg: ScanConfig):
    pts = _domain_chunk(xs, cfg.dims)
    coords = list(pts)
    excl = _excluded_mask(coords, cfg.exclusion_radius)
    keep = ~excl
    kept = pts[:, keep]
    slack = slack_arrays(list(kept), cfg.function)
    return pts[:, excl], kept, slack


def _threads(cfg: ScanConfig) -> int:
    if cfg.threads:
        return cfg.threads
    env = os.environ.get("ACTCERT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def scan(cfg: ScanConfig) -> ScanReport:
    """Evaluate the inequality at every lattice point with ``0 < max|coord| <= N``."""
    t0 = time.perf_counter()
    xs = np.arange(1, cfg.N + 1)
    chunks = [xs[i : i + cfg.chunk] for i in range(0, xs.size, cfg.chunk)]
    with ThreadPoolExecutor(max_workers=_threads(cfg)) as pool:
        results = list(pool.map(lambda c: _scan_chunk(c, cfg), chunks))

    violations, marginals, excluded = [], [], []
    scanned = 0
    best = (np.inf, None)
    rng = np.random.default_rng(cfg.seed)
    sample_pts, sample_vals = [], []
    for excl, kept, slack in results:
        for p in excl.T.tolist():
            excluded.extend(_images(tuple(p)))
        bad = slack <= -MARGIN
        marg = np.abs(slack) < MARGIN
        for idx, bucket in ((np.nonzero(bad)[0], violations), (np.nonzero(marg)[0], marginals)):
            for i in idx:
                p = tuple(int(c) for c in kept[:, i])
                bucket.extend((img, float(slack[i])) for img in _images(p))
        if slack.size:
            i = int(np.argmin(slack))
            if slack[i] < best[0]:
                best = (float(slack[i]), tuple(int(c) for c in kept[:, i]))
            take = rng.random(slack.size) < cfg.sample_fraction
            sample_pts.append(kept[:, take])
            sample_vals.append(slack[take])
        scanned += _orbit_count(kept)

    checked, max_diff = _check_symmetry(sample_pts, sample_vals, cfg, rng)
    excluded = sorted(set(excluded))
    return ScanReport(
        cfg, scanned, sorted(violations), sorted(marginals), excluded, best[0], best[1] or (), checked, max_diff,
        time.perf_counter() - t0,
    )


def _orbit_count(pts: np.ndarray) -> int:
    """Number of lattice points represented by fundamental-domain points (sizes of their orbits)."""
    if pts.size == 0:
        return 0
    dims = pts.shape[0]
    nonzero = (pts != 0).sum(axis=0)
    signs = 2 ** nonzero
    if dims == 2:
        perms = np.where(pts[0] != pts[1], 2, 1)
    else:
        x, y, z = pts
        distinct = 1 + (x != y).astype(int) + (y != z).astype(int)
        perms = np.select([distinct == 3, distinct == 2], [6, 3], 1)
    return int((signs * perms).sum())


def _check_symmetry(sample_pts, sample_vals, cfg: ScanConfig, rng) -> Tuple[int, float]:
    if not sample_pts:
        return 0, 0.0
    pts = np.concatenate(sample_pts, axis=1)
    vals = np.concatenate(sample_vals)
    if pts.shape[1] == 0:
        return 0, 0.0
    # a random signed permutation of each sampled point
    order = np.argsort(rng.random(pts.shape), axis=0)
    mirrored = np.take_along_axis(pts, order, axis=0)
    mirrored = mirrored * rng.choice([-1, 1], size=mirrored.shape)
    other = slack_arrays(list(mirrored), cfg.function)
    diff = np.abs(other - vals)
    scale = np.maximum(1.0, np.abs(vals))
    worst = float(np.max(diff / scale))
    if worst > 1e-9:
        raise AssertionError(f"slack is not symmetric on the sample: relative difference {worst:.3g}")
    return int(vals.size), worst
