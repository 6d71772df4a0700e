"""Fenchel-Nielsen charts: length functions, pinching rays, twists.

A point of the parameter space is (genus, lengths, twists) over a fixed
pants decomposition.  Every number reported here goes through the
associated Fuchsian holonomy, so it is an invariant of the marked
hyperbolic surface, not of the chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .surfgrp import (
    Representation,
    _lengths_from_traces,
    cyclic_reduce,
    decomposition_curve_words,
    fuchsian_from_fn,
    is_trivial_word,
    length_spectrum,
    min_translation_length,
)

__all__ = [
    "FNCoordinates",
    "PinchingRay",
    "dehn_twist",
    "geodesic_length",
    "holonomy",
    "mesh_metric",
    "pinching_ray",
    "systole",
]


def default_decomposition(genus: int) -> str:
    return "chain" if genus == 2 else "flower"


@dataclass(frozen=True)
class FNCoordinates:
    """A marked hyperbolic structure: one (length, twist) pair per curve
    of the pants decomposition, 3g - 3 curves, zero-based indices."""

    genus: int
    lengths: tuple
    twists: tuple
    decomposition: str = ""

    def __post_init__(self):
        if self.genus < 2:
            raise ValueError("genus must be at least 2")
        n = 3 * self.genus - 3
        lengths = tuple(float(v) for v in self.lengths)
        twists = tuple(float(v) for v in self.twists)
        if len(lengths) != n or len(twists) != n:
            raise ValueError(f"expected {n} lengths and twists")
        if not all(v > 0.0 for v in lengths):
            raise ValueError("curve lengths must be positive")
        deco = self.decomposition or default_decomposition(self.genus)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "twists", twists)
        object.__setattr__(self, "decomposition", deco)

    @property
    def n_curves(self) -> int:
        return 3 * self.genus - 3

    def curve_word(self, i: int):
        """Free-group word of decomposition curve i."""
        return tuple(decomposition_curve_words(self.genus)[self._index(i)])

    def with_length(self, i: int, value: float) -> "FNCoordinates":
        i = self._index(i)
        lengths = self.lengths[:i] + (float(value),) + self.lengths[i + 1:]
        return FNCoordinates(self.genus, lengths, self.twists, self.decomposition)

    def with_twist(self, i: int, value: float) -> "FNCoordinates":
        i = self._index(i)
        twists = self.twists[:i] + (float(value),) + self.twists[i + 1:]
        return FNCoordinates(self.genus, self.lengths, twists, self.decomposition)

    def _index(self, i: int) -> int:
        i = int(i)
        if not 0 <= i < self.n_curves:
            raise ValueError(f"curve index {i} out of range")
        return i

    def to_json_dict(self) -> dict:
        return {
            "genus": self.genus,
            "lengths": list(self.lengths),
            "twists": list(self.twists),
            "decomposition": self.decomposition,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "FNCoordinates":
        return cls(
            int(data["genus"]),
            tuple(data["lengths"]),
            tuple(data["twists"]),
            str(data.get("decomposition", "")),
        )


@lru_cache(maxsize=64)
def holonomy(fn: FNCoordinates) -> Representation:
    """Fuchsian holonomy of the coordinates, cached per point."""
    return fuchsian_from_fn(fn)


def geodesic_length(fn: FNCoordinates, c) -> float:
    """Length of the closed geodesic in the free-homotopy class of c."""
    # the cyclically reduced representative keeps conjugator noise out of
    # the matrix product entirely
    word = cyclic_reduce(tuple(c))
    if not word or is_trivial_word(word, fn.genus):
        raise ValueError("geodesic length needs a nontrivial curve class")
    tr = _trace_extended(holonomy(fn), word)
    return float(_lengths_from_traces(np.array([tr], dtype=complex))[0])


def _trace_extended(rep: Representation, word) -> complex:
    """Word trace accumulated in extended precision; long products in
    double would leak rounding into the last few digits of the length."""
    mats = {}
    for g, i in zip(rep.generators, range(1, 2 * rep.genus + 1)):
        m = np.array(g.matrix, dtype=np.clongdouble)
        mats[i] = m
        mats[-i] = np.array(g.inv().matrix, dtype=np.clongdouble)
    out = np.eye(2, dtype=np.clongdouble)
    for x in word:
        out = out @ mats[x]
    return complex(out[0, 0] + out[1, 1])


@dataclass(frozen=True)
class PinchingRay:
    """One-parameter family shrinking a single decomposition curve; the
    parameter is the curve's length itself, domain (0, base length]."""

    base: FNCoordinates
    curve: int

    def __call__(self, t: float) -> FNCoordinates:
        t = float(t)
        if t <= 0.0:
            raise ValueError("pinching parameter must be positive")
        top = self.base.lengths[self.curve]
        if t > top * (1.0 + 1e-12):
            raise ValueError(f"ray domain is (0, {top}]")
        return self.base.with_length(self.curve, min(t, top))

    def to_json_dict(self, t_grid=()) -> dict:
        return {
            "base": self.base.to_json_dict(),
            "curve": self.curve,
            "t_grid": [float(t) for t in t_grid],
        }

    @classmethod
    def from_json_dict(cls, data: dict):
        """Returns (ray, t_grid)."""
        ray = cls(FNCoordinates.from_json_dict(data["base"]), int(data["curve"]))
        return ray, tuple(float(t) for t in data.get("t_grid", ()))


def pinching_ray(fn: FNCoordinates, i: int) -> PinchingRay:
    return PinchingRay(fn, fn._index(i))


def dehn_twist(fn: FNCoordinates, i: int, power: int = 1) -> FNCoordinates:
    """Full twist about decomposition curve i: the twist coordinate moves
    by the curve length, so the underlying unmarked surface is unchanged."""
    i = fn._index(i)
    return fn.with_twist(i, fn.twists[i] + power * fn.lengths[i])


def systole(fn: FNCoordinates, W: int = 6) -> float:
    """Shortest closed-geodesic length among classes with a cyclically
    reduced word of length <= W; a certificate scale for the injectivity
    radius.  W >= 6 is enough to see all single-pants curves."""
    cert = min_translation_length(holonomy(fn), W)
    if not cert.eps0 > 0.0:
        raise RuntimeError(
            "scan could not separate the shortest class from a parabolic"
        )
    return cert.eps0


def mesh_metric(fn: FNCoordinates, mesh):
    """Positive cotangent weight per mesh edge, computed from hyperbolic
    edge lengths of the triangles realized at these coordinates."""
    if getattr(mesh, "coordinates", None) != fn:
        raise ValueError("mesh was built at different coordinates")
    from .meshing import cotangent_weights

    return cotangent_weights(mesh)
