"""Low-level geometry: angle wrapping, axis-aligned boxes, segment tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]. Idempotent on already-wrapped values."""
    return math.pi - (math.pi - a) % (2.0 * math.pi)


def normalize_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=np.float64), 2.0 * np.pi)


def angle_difference(target: float, source: float) -> float:
    """Shortest signed angular difference target - source, in (-pi, pi]."""
    return normalize_angle(target - source)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by two corners (lo <= hi componentwise, meters)."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self) -> None:
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"box lo {self.lo} exceeds hi {self.hi}")

    def contains(self, p: np.ndarray, *, strict: bool = False) -> bool:
        """Point membership; strict=True tests the open interior."""
        if strict:
            return bool(np.all(p > self.lo) and np.all(p < self.hi))
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def inflate(self, margin: float) -> Box:
        return Box(
            tuple(l - margin for l in self.lo),
            tuple(h + margin for h in self.hi),
        )

    def corners(self) -> list[np.ndarray]:
        out = []
        for ix in (0, 1):
            for iy in (0, 1):
                for iz in (0, 1):
                    out.append(np.array([
                        (self.lo, self.hi)[ix][0],
                        (self.lo, self.hi)[iy][1],
                        (self.lo, self.hi)[iz][2],
                    ]))
        return out

    def clamp(self, p: np.ndarray) -> np.ndarray:
        return np.clip(p, self.lo, self.hi)

    def contains_box(self, other: Box) -> bool:
        return all(sl <= ol for sl, ol in zip(self.lo, other.lo)) and all(
            oh <= sh for sh, oh in zip(self.hi, other.hi)
        )

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        return lo + rng.random(3) * (hi - lo)

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_json(cls, d: dict) -> Box:
        return cls(tuple(float(x) for x in d["lo"]), tuple(float(x) for x in d["hi"]))


def segment_box_entry(p0: np.ndarray, p1: np.ndarray, box: Box) -> float | None:
    """Earliest parameter t in [0, 1] at which segment p0->p1 penetrates the
    open interior of `box`, or None if it never does.

    Touching a face, edge, or corner does not count as penetration, so motion
    may slide along a surface the previous step was truncated against.
    """
    d = p1 - p0
    t_lo, t_hi = 0.0, 1.0
    for i in range(3):
        lo, hi = box.lo[i], box.hi[i]
        if abs(d[i]) < 1e-15:
            if p0[i] <= lo or p0[i] >= hi:
                return None
            continue
        ta = (lo - p0[i]) / d[i]
        tb = (hi - p0[i]) / d[i]
        if ta > tb:
            ta, tb = tb, ta
        t_lo = max(t_lo, ta)
        t_hi = min(t_hi, tb)
        if t_lo >= t_hi:
            return None
    # nonempty (t_lo, t_hi) within [0,1] means the open interior is crossed
    if t_hi - t_lo <= 1e-12:
        return None
    return t_lo


def segment_intersects_box(p0: np.ndarray, p1: np.ndarray, box: Box) -> bool:
    return segment_box_entry(p0, p1, box) is not None


def segment_clear(p0: np.ndarray, p1: np.ndarray, boxes: list[Box]) -> bool:
    return all(segment_box_entry(p0, p1, b) is None for b in boxes)


def nearest_exterior_point(p: np.ndarray, box: Box) -> np.ndarray:
    """Project a point inside `box` to the nearest point on its surface.

    Points already outside are returned unchanged.
    """
    if not box.contains(p, strict=True):
        return np.array(p, dtype=np.float64)
    lo = np.asarray(box.lo)
    hi = np.asarray(box.hi)
    # cheapest single-axis exit
    best_axis, best_val, best_cost = 0, lo[0], np.inf
    for i in range(3):
        for val in (lo[i], hi[i]):
            cost = abs(p[i] - val)
            if cost < best_cost:
                best_axis, best_val, best_cost = i, val, cost
    q = np.array(p, dtype=np.float64)
    q[best_axis] = best_val
    return q
