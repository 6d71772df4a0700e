"""Discrete equivariant harmonic maps and their energies.

A map assigns one hyperbolic-space point per mesh vertex; the deck
words on the mesh edges extend it equivariantly to the whole cover.
The energy is half the weighted sum of squared chord lengths, which
calibrates an isometric map to report the surface area.  Minimization
is damped vertex-wise relaxation toward the weighted barycenter of the
deck-translated neighbors, swept in graph-coloring order so each color
class updates as one vectorized batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hypgeo import HPoint, dist_many, exp_many, geodesic_point, log_many
from .meshing import EquivariantMesh, MeshQualityError, surface_mesh
from .surfgrp import Representation, word_inverse, word_mul
from .teich import FNCoordinates, geodesic_length, mesh_metric

__all__ = [
    "EquivariantMesh",
    "MeshMap",
    "EnergyReport",
    "LengthCheckReport",
    "discrete_energy",
    "minimize",
    "energy_function",
    "harmonic_map",
    "length_energy_check",
    "weighted_barycenter",
]


@dataclass
class MeshMap:
    """One target point per mesh vertex, on the fundamental domain;
    the deck words extend the map equivariantly."""

    points: list

    def __len__(self) -> int:
        return len(self.points)

    def array(self) -> np.ndarray:
        return np.array([p.array for p in self.points])

    @classmethod
    def from_array(cls, a) -> "MeshMap":
        return cls([HPoint.from_array(row) for row in np.asarray(a, dtype=float)])

    def copy(self) -> "MeshMap":
        return MeshMap(list(self.points))

    def transformed(self, iso) -> "MeshMap":
        return MeshMap([iso.apply(p) for p in self.points])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"{len(self.points)}\n")
            for p in self.points:
                x, y, t = p.array
                fh.write(f"{x!r} {y!r} {t!r}\n")

    @classmethod
    def load(cls, path) -> "MeshMap":
        with open(path) as fh:
            n = int(fh.readline())
            pts = [
                HPoint.from_array([float(v) for v in fh.readline().split()])
                for _ in range(n)
            ]
        return cls(pts)


@dataclass
class EnergyReport:
    """Outcome of one minimization run.

    residual is the relative energy decrease of the last accepted
    sweep; lipschitz_estimate is max over edges of the image chord
    length divided by the domain edge length."""

    energy: float
    iterations: int
    residual: float
    lipschitz_estimate: float
    converged: bool
    trajectory: list = field(default_factory=list, repr=False)


class _Operator:
    """Index plumbing for one (mesh, rep) pair: batched chord lengths
    and colored relaxation sweeps over the vertex adjacency."""

    def __init__(self, mesh: EquivariantMesh, rep: Representation):
        if mesh.edge_weights is None:
            raise ValueError("mesh has no edge weights; assign mesh_metric first")
        edges = mesh.edges
        ne = len(edges)
        self.nv = mesh.n_vertices
        self.tail = np.fromiter((e[0] for e in edges), dtype=int, count=ne)
        self.head = np.fromiter((e[1] for e in edges), dtype=int, count=ne)
        self.weight = np.asarray(mesh.edge_weights, dtype=float)

        # chord q_e = rho(word)^-1 u[head]; batch the moves per word
        by_word = {}
        for k, (_, _, w) in enumerate(edges):
            by_word.setdefault(w, []).append(k)
        self.edge_groups = [
            (rep.evaluate(word_inverse(w)) if w else None, np.asarray(ks))
            for w, ks in by_word.items()
        ]

        # adjacency entries, two per edge: tail sees the moved head and
        # head sees the tail moved the opposite way
        self.ent_v = np.concatenate([self.tail, self.head])
        self.ent_n = np.concatenate([self.head, self.tail])
        self.ent_w = np.concatenate([self.weight, self.weight])
        self._ent_gid = np.empty(2 * ne, dtype=int)
        self._movers = []
        for w, ks in by_word.items():
            ks = np.asarray(ks)
            self._ent_gid[ks] = len(self._movers)
            self._movers.append(rep.evaluate(word_inverse(w)) if w else None)
            self._ent_gid[ks + ne] = len(self._movers)
            self._movers.append(rep.evaluate(w) if w else None)
        self.wsum = np.bincount(self.ent_v, weights=self.ent_w, minlength=self.nv)
        if not np.all(self.wsum > 0.0):
            raise MeshQualityError("vertex with empty or nonpositive weight star")
        self._colors = None

    def chords(self, u: np.ndarray) -> np.ndarray:
        q = u[self.head].copy()
        for iso, ks in self.edge_groups:
            if iso is not None:
                q[ks] = iso.apply_many(q[ks])
        return dist_many(u[self.tail], q)

    def energy(self, u: np.ndarray) -> float:
        d = self.chords(u)
        return 0.5 * float((self.weight * d * d).sum())

    def _color_setup(self):
        # greedy proper coloring; classes update independently
        nbr = [[] for _ in range(self.nv)]
        for t, h in zip(self.tail, self.head):
            if t != h:
                nbr[t].append(h)
                nbr[h].append(t)
        color = np.full(self.nv, -1, dtype=int)
        for v in range(self.nv):
            used = {color[u] for u in nbr[v] if color[u] >= 0}
            c = 0
            while c in used:
                c += 1
            color[v] = c
        self._colors = []
        for c in range(int(color.max()) + 1):
            rows = np.flatnonzero(color[self.ent_v] == c)
            rows = rows[np.argsort(self._ent_gid[rows], kind="stable")]
            gids = self._ent_gid[rows]
            starts = np.flatnonzero(np.r_[True, gids[1:] != gids[:-1]])
            stops = np.r_[starts[1:], len(rows)]
            segs = [
                (self._movers[gids[s]], slice(int(s), int(e)))
                for s, e in zip(starts, stops)
            ]
            self._colors.append((np.flatnonzero(color == c), rows, segs))

    def sweep(self, u: np.ndarray, lam: float) -> float:
        """One colored relaxation pass in place; returns the largest
        vertex displacement."""
        if self._colors is None:
            self._color_setup()
        disp = 0.0
        for vids, rows, segs in self._colors:
            pts = u[self.ent_n[rows]]
            for iso, sl in segs:
                if iso is not None:
                    pts[sl] = iso.apply_many(pts[sl])
            tan = log_many(u[self.ent_v[rows]], pts) * self.ent_w[rows, None]
            acc = np.zeros((self.nv, 3))
            np.add.at(acc, self.ent_v[rows], tan)
            new = exp_many(u[vids], lam * acc[vids] / self.wsum[vids, None])
            disp = max(disp, float(dist_many(u[vids], new).max()))
            u[vids] = new
        return disp


def _domain_chords(mesh: EquivariantMesh) -> np.ndarray:
    """Hyperbolic edge lengths of the realized domain mesh."""
    pos = np.array([p.array for p in mesh.positions])
    heads = np.fromiter((e[1] for e in mesh.edges), dtype=int, count=len(mesh.edges))
    tails = np.fromiter((e[0] for e in mesh.edges), dtype=int, count=len(mesh.edges))
    q = pos[heads].copy()
    by_word = {}
    for k, (_, _, w) in enumerate(mesh.edges):
        if w:
            by_word.setdefault(w, []).append(k)
    for w, ks in by_word.items():
        q[ks] = mesh.deck(word_inverse(w)).apply_many(q[np.asarray(ks)])
    return dist_many(pos[tails], q)


def discrete_energy(mesh: EquivariantMesh, rep: Representation, u: MeshMap) -> float:
    """E = 1/2 sum_e w_e dist^2(u[tail], rho(word)^-1 u[head]).

    Zero exactly when every identified endpoint pair coincides; an
    isometric map reports the surface area."""
    if len(u) != mesh.n_vertices:
        raise ValueError("map and mesh vertex counts differ")
    return _Operator(mesh, rep).energy(u.array())


def minimize(mesh: EquivariantMesh, rep: Representation, init: MeshMap,
             tol: float = 1e-8, max_iter: int = 500,
             disp_tol: float = 1e-5) -> tuple:
    """Relax the map toward the energy minimizer.

    Each sweep moves every vertex a damped step along the geodesic
    toward the weighted barycenter of its deck-translated neighbors;
    the local problem is geodesically convex, so accepted sweeps never
    increase the energy.  Damping starts at 0.5, doubles on progress,
    and a sweep that overshoots is rolled back at half the step.
    Convergence requires both a relative energy decrease below tol and
    a maximum displacement below disp_tol; running out of iterations
    returns converged=False with the trajectory, not an exception."""
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if len(init) != mesh.n_vertices:
        raise ValueError("map and mesh vertex counts differ")
    op = _Operator(mesh, rep)
    u = init.array()
    energy = op.energy(u)
    trajectory = [energy]
    lam = 0.5
    rel = math.inf
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        prev = u.copy()
        disp = op.sweep(u, lam)
        e_new = op.energy(u)
        if e_new > energy + 1e-12 * max(1.0, energy):
            u = prev
            lam *= 0.5
            if lam < 1e-6:
                # no descent left at floor step size: at the minimizer
                rel = 0.0
                converged = True
                break
            continue
        rel = (energy - e_new) / max(energy, 1e-300)
        energy = e_new
        trajectory.append(energy)
        lam = min(1.0, 2.0 * lam)
        if rel < tol and disp < disp_tol:
            converged = True
            break
    ref = _domain_chords(mesh)
    lip = float((op.chords(u) / ref).max())
    report = EnergyReport(
        energy=energy,
        iterations=it,
        residual=rel,
        lipschitz_estimate=lip,
        converged=converged,
        trajectory=trajectory,
    )
    return MeshMap.from_array(u), report


def weighted_barycenter(points, weights=None, tol: float = 1e-12,
                        max_iter: int = 200) -> HPoint:
    """Minimizer of sum_i w_i dist^2(x, p_i) by damped Karcher
    iteration; the objective is geodesically strictly convex, so the
    minimizer is unique."""
    pts = np.array([p.array for p in points], dtype=float)
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
    if len(w) != len(pts) or np.any(w < 0.0) or w.sum() <= 0.0:
        raise ValueError("weights must be nonnegative and not all zero")
    x = pts[int(np.argmax(w))]
    obj = float((w * dist_many(np.broadcast_to(x, pts.shape), pts) ** 2).sum())
    lam = 1.0
    for _ in range(max_iter):
        tan = (log_many(np.broadcast_to(x, pts.shape), pts) * w[:, None]).sum(0)
        tan /= w.sum()
        step = float(np.linalg.norm(tan)) / x[2]
        if step * lam < tol:
            break
        cand = exp_many(x, lam * tan)
        cobj = float((w * dist_many(np.broadcast_to(cand, pts.shape), pts) ** 2).sum())
        if cobj <= obj:
            x, obj = cand, cobj
            lam = min(1.0, 2.0 * lam)
        else:
            lam *= 0.5
    return HPoint.from_array(x)


def harmonic_map(rep: Representation, fn: FNCoordinates, resolution: int = 2,
                 tol: float = 1e-8, max_iter: int = 500,
                 warm: MeshMap | None = None) -> tuple:
    """Mesh, minimizing map, and report at one set of coordinates.

    warm reuses an earlier minimizer when its vertex count matches the
    fresh mesh; otherwise the seed places every vertex at its domain
    position (finite energy, Lipschitz constant 1)."""
    mesh = surface_mesh(fn, level=resolution)
    mesh_metric(fn, mesh)
    if warm is not None and len(warm) == mesh.n_vertices:
        init = warm
    else:
        init = MeshMap(list(mesh.positions))
    u, report = minimize(mesh, rep, init, tol=tol, max_iter=max_iter)
    return mesh, u, report


def prolong(mesh: EquivariantMesh, rep: Representation, u: MeshMap) -> MeshMap:
    """Transfer a map on ``mesh`` to the subdivided mesh by splitting
    each image edge at its geodesic midpoint.

    New vertices are visited in the same edge order the subdivision
    uses, so the result indexes the refined mesh vertex for vertex and
    seeds the next resolution of a minimization."""
    points = list(u.points)
    seen = set()
    deck = {}

    def midpoint(ra, rb):
        (va, wa), (vb, wb) = ra, rb
        e = mesh.canon_word(word_mul(word_inverse(wa), wb))
        key = (va, vb, e)
        alt = (vb, va, mesh.canon_word(word_inverse(e)))
        canon = key if key <= alt else alt
        if canon in seen:
            return
        seen.add(canon)
        base, other, ew = canon
        pb = points[other]
        if ew:
            iso = deck.get(ew)
            if iso is None:
                iso = deck[ew] = rep.evaluate(ew)
            pb = iso.apply(pb)
        points.append(geodesic_point(points[base], pb, 0.5))

    for a, b, c in mesh.triangles:
        midpoint(a, b)
        midpoint(b, c)
        midpoint(c, a)
    return MeshMap(points)


def energy_function(rep: Representation, fn: FNCoordinates, resolution: int = 2,
                    tol: float = 1e-8, max_iter: int = 500,
                    warm: MeshMap | None = None) -> EnergyReport:
    """E_rho at the given coordinates: build the mesh, assign the
    metric weights, minimize.  Deterministic for fixed inputs."""
    _, _, report = harmonic_map(rep, fn, resolution, tol, max_iter, warm)
    return report


@dataclass
class LengthCheckRow:
    word: tuple
    translation: float
    curve_length: float
    bound: float
    ratio: float
    ok: bool


@dataclass
class LengthCheckReport:
    rows: list
    lipschitz: float
    mesh_scale: float
    passed: bool


def length_energy_check(rep: Representation, fn: FNCoordinates,
                        mesh: EquivariantMesh, u: MeshMap,
                        curves) -> LengthCheckReport:
    """Check translation_length(rho(c)) <= K * geodesic_length(fn, c)
    plus mesh-scale slack for each curve.

    K is the Lipschitz estimate of u.  The slack 2*K*h, with h the
    longest domain edge, covers the detour a discrete edge path makes
    around the closed geodesic; a violation beyond it means the mesh
    is too coarse for the estimate, and is reported, not raised."""
    ref = _domain_chords(mesh)
    K = float((_Operator(mesh, rep).chords(u.array()) / ref).max())
    h = float(ref.max())
    rows = []
    for c in curves:
        tl = rep.evaluate(c).translation_length()
        cl = geodesic_length(fn, c)
        bound = K * cl + 2.0 * K * h
        rows.append(LengthCheckRow(
            word=tuple(c),
            translation=tl,
            curve_length=cl,
            bound=bound,
            ratio=tl / (K * cl),
            ok=bool(tl <= bound * (1.0 + 1e-9)),
        ))
    return LengthCheckReport(
        rows=rows,
        lipschitz=K,
        mesh_scale=h,
        passed=all(r.ok for r in rows),
    )
