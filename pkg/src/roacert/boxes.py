"""Axis-aligned box domains."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi], the training / verification domain."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d vectors of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if not (lo < hi).all():
            raise ValueError("box must satisfy lo < hi elementwise")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.width))

    def contains(self, x, strict: bool = False) -> np.ndarray:
        """Membership mask for points x of shape [..., dim]."""
        x = np.asarray(x, dtype=np.float64)
        if strict:
            inside = (x > self.lo) & (x < self.hi)
        else:
            inside = (x >= self.lo) & (x <= self.hi)
        return inside.all(axis=-1)

    def scaled(self, factor: float, about_origin: bool = False) -> "Box":
        """Scale widths by `factor`, about the center (default) or the origin."""
        if about_origin:
            return Box(self.lo * factor, self.hi * factor)
        c = self.center
        half = 0.5 * factor * self.width
        return Box(c - half, c + half)

    def union(self, other: "Box") -> "Box":
        return Box(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def expanded_to_include(self, lo: np.ndarray, hi: np.ndarray) -> "Box":
        """Smallest box containing self and the hull [lo, hi]."""
        return Box(np.minimum(self.lo, lo), np.maximum(self.hi, hi))

    def uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def to_json(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Box":
        return cls(np.asarray(obj["lo"]), np.asarray(obj["hi"]))

    @classmethod
    def symmetric(cls, half_widths) -> "Box":
        h = np.asarray(half_widths, dtype=np.float64)
        return cls(-h, h)
