"""Nested, uniformly separated point families inside a domain.

Level k keeps only target points whose boundary distance is at least 2^-k
and extends the previous level to a maximal 2^-k-separated subset (greedy,
input order). Maximality is relative to the finite representation of the
target set; the union over levels is dense in it at resolution 2^-k_max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import LipForgeError
from .space import Domain, NormKind, halton_point, norm_batch


@dataclass(frozen=True)
class TargetSet:
    """Finite representation of the point set the nets must approximate."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise LipForgeError("target set needs an (n, d) point array")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_points(cls, points) -> "TargetSet":
        return cls(np.asarray(points, dtype=float))

    @classmethod
    def grid(cls, lo, hi, step: float) -> "TargetSet":
        """Axis-aligned grid strictly inside the open box (lo, hi)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if step <= 0:
            raise LipForgeError("grid step must be positive")
        axes = []
        for i in range(len(lo)):
            vals = []
            k = 1
            while lo[i] + k * step < hi[i] - 1e-12:
                vals.append(lo[i] + k * step)
                k += 1
            if not vals:
                return cls(np.empty((0, len(lo))))
            axes.append(np.asarray(vals))
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1))

    @classmethod
    def low_discrepancy(cls, domain: Domain, count: int, seed: int = 0, predicate=None) -> "TargetSet":
        """Halton sample of the domain interior, optionally filtered."""
        lo, hi = domain.bounding_box()
        pts = []
        idx = (seed & 0x7FFFFFFF) * 389 + 1
        while len(pts) < count and idx < 10_000_000:
            cand = lo + (hi - lo) * halton_point(idx, domain.dim)
            idx += 1
            try:
                inside = domain.dist_to_boundary(cand) > 0
            except LipForgeError:
                inside = False
            if inside and (predicate is None or predicate(cand)):
                pts.append(cand)
        return cls(np.asarray(pts) if pts else np.empty((0, domain.dim)))

    def __len__(self) -> int:
        return len(self.points)


def separation(points: np.ndarray, kind: NormKind = NormKind.EUCLIDEAN) -> float:
    """Minimum pairwise distance; +inf for fewer than two points."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return math.inf
    diff = pts[:, None, :] - pts[None, :, :]
    dists = norm_batch(diff.reshape(-1, pts.shape[1]), kind).reshape(len(pts), len(pts))
    np.fill_diagonal(dists, np.inf)
    return float(np.min(dists))


def restrict(target: TargetSet, domain: Domain, k: int) -> np.ndarray:
    """Target points with boundary distance at least 2^-k (may be empty)."""
    if k < 1:
        raise LipForgeError("level index must be >= 1")
    margin = 2.0 ** -k
    keep = []
    for p in target.points:
        try:
            ok = float(domain.dist_to_boundary(p)) >= margin
        except LipForgeError as e:
            raise LipForgeError("target point outside the domain") from e
        if ok:
            keep.append(p)
    return np.asarray(keep) if keep else np.empty((0, target.points.shape[1] if target.points.ndim == 2 else 0))


def greedy_net(points: np.ndarray, delta: float, seed_set: np.ndarray | None = None,
               kind: NormKind = NormKind.EUCLIDEAN) -> np.ndarray:
    """Maximal delta-separated subset containing seed_set (greedy, input order).

    The seed set must itself be delta-separated; the result is maximal with
    respect to the input list: no remaining input point can be added.
    """
    pts = np.asarray(points, dtype=float)
    chosen: list[np.ndarray] = []
    if seed_set is not None and len(seed_set):
        seeds = np.asarray(seed_set, dtype=float)
        if separation(seeds, kind) < delta:
            raise LipForgeError("seed set violates separation")
        chosen = [s for s in seeds]
    for p in pts:
        if not chosen:
            chosen.append(p)
            continue
        d = norm_batch(np.asarray(chosen) - p, kind)
        if float(np.min(d)) >= delta:
            chosen.append(p)
    return np.asarray(chosen) if chosen else np.empty((0, pts.shape[1] if pts.ndim == 2 else 0))


@dataclass(frozen=True)
class NetFamily:
    """Nested levels with separation and boundary-margin certificates."""

    levels: tuple[np.ndarray, ...]
    deltas: tuple[float, ...]
    margins: tuple[float, ...] = field(default=())

    def level(self, k: int) -> np.ndarray:
        return self.levels[k - 1]

    @property
    def k_max(self) -> int:
        return len(self.levels)

    def validate(self, domain: Domain, target: TargetSet | None = None) -> None:
        """Assert the nesting/separation/margin/membership invariants."""
        prev: np.ndarray | None = None
        for k, lvl in enumerate(self.levels, start=1):
            delta = self.deltas[k - 1]
            if separation(lvl, domain.norm) < delta:
                raise LipForgeError(f"level {k} violates {delta}-separation")
            for p in lvl:
                if float(domain.dist_to_boundary(p)) < delta:
                    raise LipForgeError(f"level {k} violates the boundary margin")
            if prev is not None and len(prev):
                for p in prev:
                    if not len(lvl) or float(np.min(norm_batch(lvl - p, domain.norm))) > 0:
                        raise LipForgeError(f"level {k} does not contain level {k - 1}")
            if target is not None and len(lvl):
                for p in lvl:
                    if float(np.min(norm_batch(target.points - p, domain.norm))) > 0:
                        raise LipForgeError(f"level {k} contains a point outside the target set")
            prev = lvl

    def to_csv(self) -> str:
        if not self.levels:
            return "k\n"
        d = 0
        for lvl in self.levels:
            if len(lvl):
                d = lvl.shape[1]
                break
        header = "k," + ",".join(f"x{i + 1}" for i in range(d))
        lines = [header]
        for k, lvl in enumerate(self.levels, start=1):
            for p in lvl:
                lines.append(f"{k}," + ",".join(repr(float(v)) for v in p))
        return "\n".join(lines) + "\n"


def nested_nets(target: TargetSet, domain: Domain, k_max: int) -> NetFamily:
    """Build levels 1..k_max of nested maximal 2^-k-separated subsets."""
    if k_max < 1:
        raise LipForgeError("k_max must be >= 1")
    levels: list[np.ndarray] = []
    margins: list[float] = []
    prev: np.ndarray | None = None
    for k in range(1, k_max + 1):
        admissible = restrict(target, domain, k)
        lvl = greedy_net(admissible, 2.0 ** -k, seed_set=prev, kind=domain.norm)
        levels.append(lvl)
        if len(lvl):
            margins.append(min(float(domain.dist_to_boundary(p)) for p in lvl))
        else:
            margins.append(math.inf)
        prev = lvl if len(lvl) else prev
    return NetFamily(tuple(levels), tuple(2.0 ** -k for k in range(1, k_max + 1)), tuple(margins))
