"""Equivariant geodesic triangulations built on a pants decomposition.

Construction: around every decomposition curve sit two vertex rings at
Fermi offset delta, one per adjacent pants; the annulus between them is
zipper-triangulated.  What remains of each pants is two right-angled
hexagons shrunk by the collars ("inset hexagons"), each triangulated as
a fan around its own center.  Every triangle corner is a reference
(vertex id, deck word), realized as rho(word) applied to the stored
representative position, so the complex closes up equivariantly.

A build is accepted only if it passes the closure audit: correct Euler
characteristic, every edge in exactly two triangles, angle sum 2*pi at
every vertex, and total area (by angle deficit) equal to 2*pi*|chi|.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .hypgeo import (
    GeodesicAxis,
    HPoint,
    MobiusIsometry,
    dist,
    geodesic_point,
    gudermann,
    gudermann_inv,
)
from .surfgrp import (
    Representation,
    SurfaceBlueprint,
    free_reduce,
    surface_blueprint,
    word_inverse,
    word_mul,
)

__all__ = [
    "CollarBand",
    "EquivariantMesh",
    "MeshQualityError",
    "cotangent_weights",
    "refine",
    "surface_mesh",
    "total_area",
    "triangle_angles",
    "vertex_angle_sums",
]

_ANGLE_FLOOR = 1e-4
_CLOSURE_TOL = 1e-6


class MeshQualityError(RuntimeError):
    pass


def _word_power(w, m: int):
    if m == 0:
        return ()
    base = w if m > 0 else word_inverse(w)
    out = ()
    for _ in range(abs(m)):
        out = word_mul(out, base)
    return out


@dataclass
class CollarBand:
    """Triangulated annulus around one decomposition curve.

    members maps vertex id -> (param, offset, side) in the Fermi frame
    of the curve's axis; side 0 is the pants listed first in the
    blueprint, and its offsets carry the sign side0_sign.
    """

    curve_index: int
    word: tuple
    transport: tuple
    axis: GeodesicAxis
    length: float
    deltas: tuple
    side0_sign: float
    members: dict


@dataclass(eq=False)
class EquivariantMesh:
    """Triangle corners are (vertex id, deck word) references; an edge
    record (tail, head, word) realizes its chord between u(tail) and
    rho(word)^-1 u(head), matching the discrete energy convention."""

    coordinates: object
    rep: Representation
    positions: list
    triangles: list
    collars: list
    level: int = 0
    edge_weights: np.ndarray | None = None
    _edges: list | None = field(default=None, repr=False)
    _edge_tris: dict | None = field(default=None, repr=False)
    _deck_cache: dict = field(default_factory=dict, repr=False)
    _realized: np.ndarray | None = field(default=None, repr=False)
    _canon: dict = field(default_factory=dict, repr=False)
    _canon_mats: list = field(default_factory=list, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def deck(self, word) -> MobiusIsometry:
        iso = self._deck_cache.get(word)
        if iso is None:
            iso = self.rep.evaluate(word)
            self._deck_cache[word] = iso
        return iso

    def canon_word(self, word):
        """Canonical spelling of the deck element of `word`.

        Edge identifications must follow the deck transformation, not
        its spelling: frame words around a pants can differ by relator
        factors that free reduction cannot see."""
        word = free_reduce(word)
        if not word:
            return ()
        hit = self._canon.get(word)
        if hit is None:
            if not self._canon_mats:
                self._canon_mats.append(((), np.eye(2, dtype=complex)))
            m = self.deck(word).matrix
            tol = 1e-8 * (1.0 + np.abs(m).max())
            for known, km in self._canon_mats:
                if min(np.abs(m - km).max(), np.abs(m + km).max()) < tol:
                    hit = known
                    break
            else:
                hit = word
                self._canon_mats.append((word, m))
            self._canon[word] = hit
        return hit

    def realize(self, vid: int, word) -> HPoint:
        if word:
            return self.deck(word).apply(self.positions[vid])
        return self.positions[vid]

    def realized_corners(self) -> np.ndarray:
        """(n_triangles, 3, 3) array of corner positions."""
        if self._realized is not None:
            return self._realized
        pos = np.array([p.array for p in self.positions])
        out = np.empty((len(self.triangles), 3, 3))
        by_word = {}
        for ti, tri in enumerate(self.triangles):
            for ci, (vid, word) in enumerate(tri):
                by_word.setdefault(word, []).append((ti, ci, vid))
        for word, hits in by_word.items():
            idx = np.array([h[2] for h in hits])
            pts = pos[idx]
            if word:
                pts = self.deck(word).apply_many(pts)
            for (ti, ci, _), p in zip(hits, pts):
                out[ti, ci] = p
        self._realized = out
        return out

    @property
    def edges(self) -> list:
        if self._edges is None:
            self._build_edges()
        return self._edges

    def edge_triangles(self) -> dict:
        """Canonical edge index -> list of (triangle, corner opposite)."""
        if self._edge_tris is None:
            self._build_edges()
        return self._edge_tris

    def _build_edges(self):
        index = {}
        edges = []
        edge_tris = {}
        for ti, tri in enumerate(self.triangles):
            for ci in range(3):
                va, wa = tri[(ci + 1) % 3]
                vb, wb = tri[(ci + 2) % 3]
                e = word_mul(word_inverse(wa), wb)
                key = (va, vb, self.canon_word(e))
                alt = (vb, va, self.canon_word(word_inverse(e)))
                if alt < key:
                    key = alt
                k = index.get(key)
                if k is None:
                    k = len(edges)
                    index[key] = k
                    # chord d(u_tail, rho(word)^-1 u_head)
                    edges.append((key[0], key[1], word_inverse(key[2])))
                    edge_tris[k] = []
                edge_tris[k].append((ti, ci))
        self._edges = edges
        self._edge_tris = edge_tris


def triangle_angles(corners: np.ndarray) -> np.ndarray:
    """(n, 3) interior angles of realized triangles given as (n, 3, 3)
    position arrays; angle [i, k] sits at corner k."""
    from .hypgeo import dist_many

    sides = np.empty((len(corners), 3))
    for k in range(3):
        sides[:, k] = dist_many(corners[:, (k + 1) % 3], corners[:, (k + 2) % 3])
    if sides.min() <= 0.0:
        raise MeshQualityError("degenerate triangle: coincident corners")
    ch, sh = np.cosh(sides), np.sinh(sides)
    angles = np.empty_like(sides)
    for k in range(3):
        b, c = (k + 1) % 3, (k + 2) % 3
        cosv = (ch[:, b] * ch[:, c] - ch[:, k]) / (sh[:, b] * sh[:, c])
        angles[:, k] = np.arccos(np.clip(cosv, -1.0, 1.0))
    if angles.min() < _ANGLE_FLOOR:
        raise MeshQualityError(
            f"triangle angle {angles.min():.2e} below quality floor"
        )
    return angles


def total_area(mesh: EquivariantMesh) -> float:
    """Sum of angle deficits pi - (a + b + c); equals 2*pi*|chi| when
    the complex closes up."""
    angles = triangle_angles(mesh.realized_corners())
    return float((math.pi - angles.sum(axis=1)).sum())


def vertex_angle_sums(mesh: EquivariantMesh) -> np.ndarray:
    angles = triangle_angles(mesh.realized_corners())
    sums = np.zeros(mesh.n_vertices)
    for ti, tri in enumerate(mesh.triangles):
        for ci, (vid, _) in enumerate(tri):
            sums[vid] += angles[ti, ci]
    return sums


def cotangent_weights(mesh: EquivariantMesh) -> np.ndarray:
    """w_e = (cot a + cot a') / 2 over the two angles opposite e."""
    angles = triangle_angles(mesh.realized_corners())
    weights = np.zeros(len(mesh.edges))
    for k, hits in mesh.edge_triangles().items():
        if len(hits) != 2:
            raise MeshQualityError(f"edge {k} lies in {len(hits)} triangles")
        weights[k] = 0.5 * sum(
            math.cos(angles[ti, ci]) / math.sin(angles[ti, ci]) for ti, ci in hits
        )
    if weights.min() <= 0.0:
        raise MeshQualityError(
            f"{int((weights <= 0).sum())} non-positive cotangent weights"
        )
    mesh.edge_weights = weights
    return weights


def _audit(mesh: EquivariantMesh, genus: int):
    v, f = mesh.n_vertices, mesh.n_triangles
    e = len(mesh.edges)
    if v - e + f != 2 - 2 * genus:
        raise MeshQualityError(f"Euler characteristic {v - e + f} != {2 - 2 * genus}")
    for k, hits in mesh.edge_triangles().items():
        if len(hits) != 2:
            t, h, w = mesh.edges[k]
            raise MeshQualityError(
                f"edge ({t}, {h}, {w}) lies in {len(hits)} triangles"
            )
    # Corner realization noise grows with the generator entry scale and
    # is divided by the local chord when turned into an angle; a wrong
    # gluing is off by a whole corner angle, far above this slack.
    scale = max(float(np.abs(g.matrix).max()) for g in mesh.rep.generators)
    tol = max(_CLOSURE_TOL, scale**4 * 1e-13)
    sums = vertex_angle_sums(mesh)
    worst = np.abs(sums - 2.0 * math.pi).max()
    if worst > tol:
        raise MeshQualityError(f"vertex angle sum off by {worst:.3e}")
    area = total_area(mesh)
    target = 2.0 * math.pi * (2 * genus - 2)
    if abs(area - target) > tol * max(1.0, target):
        raise MeshQualityError(f"area {area} != {target}")


def _orient(mesh: EquivariantMesh):
    """Flip triangles to a consistent orientation in the halfplane."""
    corners = mesh.realized_corners()
    u = corners[:, 1] - corners[:, 0]
    v = corners[:, 2] - corners[:, 0]
    cross = u[:, 0] * v[:, 2] - u[:, 2] * v[:, 0]
    for ti in np.nonzero(cross < 0)[0]:
        a, b, c = mesh.triangles[ti]
        mesh.triangles[ti] = (a, c, b)
    mesh._realized = None
    mesh._edges = None
    mesh._edge_tris = None


def _halfplane_cross(corners: np.ndarray) -> float:
    u = corners[1] - corners[0]
    v = corners[2] - corners[0]
    return float(u[0] * v[2] - u[2] * v[0])


def _flip_edge(mesh: EquivariantMesh, t1: int, c1: int, t2: int, c2: int,
               w_old: float) -> bool:
    """Replace the diagonal shared by triangles t1, t2 (opposite
    corners c1, c2) with the other diagonal of their quad.  Refuses,
    returning False, when the swap would not strictly raise the edge
    weight or would fold the quad."""
    if t1 == t2:
        return False
    tri1, tri2 = mesh.triangles[t1], mesh.triangles[t2]
    u = tri1[(c1 + 1) % 3]
    v = tri1[(c1 + 2) % 3]
    x = tri1[c1]
    u2 = tri2[(c2 + 2) % 3]
    v2 = tri2[(c2 + 1) % 3]
    if u2[0] != u[0] or v2[0] != v[0]:
        raise MeshQualityError("edge pairing disagrees with orientation")
    # carry t2's frame onto t1's through the shared edge
    g = free_reduce(word_mul(u[1], word_inverse(u2[1])))
    y = (tri2[c2][0], free_reduce(word_mul(g, tri2[c2][1])))
    pos = {r: mesh.realize(*r).array for r in (u, v, x, y)}
    new = np.array([[pos[y], pos[v], pos[x]], [pos[x], pos[u], pos[y]]])
    if _halfplane_cross(new[0]) <= 0.0 or _halfplane_cross(new[1]) <= 0.0:
        return False
    try:
        ang = triangle_angles(new)
    except MeshQualityError:
        return False
    w_new = 0.5 * (
        math.cos(ang[0, 1]) / math.sin(ang[0, 1])
        + math.cos(ang[1, 1]) / math.sin(ang[1, 1])
    )
    if w_new <= w_old + 1e-12:
        return False
    mesh.triangles[t1] = (y, v, x)
    mesh.triangles[t2] = (x, u, y)
    return True


def _delaunay_flips(mesh: EquivariantMesh, margin: float = 1e-6,
                    max_passes: int = 60):
    """Lawson edge flips until every edge weight clears `margin`.

    Midpoint subdivision does not preserve the local condition that
    keeps cotangent weights positive (opposite angle sum below pi), so
    this runs after the initial build and after every refinement.
    Ring arcs, where a collar band triangle meets a hexagon triangle,
    are structural and are never flipped; that keeps the band
    bookkeeping that refinement relies on intact."""
    collar_of = {}
    for ci, col in enumerate(mesh.collars):
        for vid in col.members:
            collar_of.setdefault(vid, set()).add(ci)

    def in_band(tri):
        common = None
        for vid, _ in tri:
            cs = collar_of.get(vid)
            if not cs:
                return False
            common = cs if common is None else common & cs
            if not common:
                return False
        return True

    for _ in range(max_passes):
        angles = triangle_angles(mesh.realized_corners())
        et = mesh.edge_triangles()
        banded = [in_band(tri) for tri in mesh.triangles]
        bad = []
        for k, hits in et.items():
            if len(hits) != 2:
                raise MeshQualityError(f"edge {k} lies in {len(hits)} triangles")
            w = 0.5 * sum(
                math.cos(angles[ti, ci]) / math.sin(angles[ti, ci])
                for ti, ci in hits
            )
            if w <= margin:
                if banded[hits[0][0]] != banded[hits[1][0]]:
                    continue
                bad.append((w, k))
        if not bad:
            return
        bad.sort()
        touched = set()
        flips = 0
        for w, k in bad:
            (t1, c1), (t2, c2) = et[k]
            if t1 in touched or t2 in touched:
                continue
            if _flip_edge(mesh, t1, c1, t2, c2, w):
                touched.update((t1, t2))
                flips += 1
        mesh._realized = None
        mesh._edges = None
        mesh._edge_tris = None
        if flips == 0:
            return
    raise MeshQualityError("edge flipping did not settle")


def _turn_sign(prev: HPoint, cur: HPoint, nxt: HPoint) -> float:
    from .hypgeo import log_map

    vin = -log_map(cur, prev)
    vout = log_map(cur, nxt)
    return float(np.sign(vin[0] * vout[2] - vin[2] * vout[0]))


def _point_in_polygon(z: complex, poly: np.ndarray) -> bool:
    """Even-odd test; poly vertices as complex, straight edges."""
    x, y = z.real, z.imag
    inside = False
    for a, b in zip(poly, np.roll(poly, -1)):
        if (a.imag > y) != (b.imag > y):
            xs = a.real + (y - a.imag) * (b.real - a.real) / (b.imag - a.imag)
            if xs > x:
                inside = not inside
    return inside


def _delaunay_region(boundary, interior):
    """Triangulate a polygon region given boundary HPoints (a closed
    loop, in order) and interior HPoints; returns corner index triples
    (boundary indexed 0.. then interior).

    The points are mapped to the Poincare disk, where a Euclidean
    Delaunay triangulation is angle-faithful for small triangles.  The
    region's triangles are then selected by flooding outward from the
    simplex under the chart center without ever crossing a polygon
    edge, which is exact as long as every polygon edge is a Delaunay
    edge (asserted)."""
    from scipy.spatial import Delaunay, QhullError

    zs = np.array([p.halfplane for p in boundary + interior])
    z0 = complex(zs.real.mean(), math.exp(np.log(zs.imag).mean()))
    w = (zs - z0) / (zs - np.conj(z0))
    m = len(boundary)
    try:
        tri = Delaunay(np.column_stack([w.real, w.imag]))
    except QhullError as exc:
        raise MeshQualityError(f"degenerate polygon chart: {exc}") from exc

    present = set()
    for simplex in tri.simplices:
        for a in range(3):
            i, j = int(simplex[a]), int(simplex[(a + 1) % 3])
            present.add(frozenset((i, j)))
    fence = [frozenset((i, (i + 1) % m)) for i in range(m)]
    if any(e not in present for e in fence):
        raise MeshQualityError("region triangulation dropped a boundary edge")
    fence = set(fence)

    # Seed strictly inside the region.  An interior sample is inside by
    # construction and no Delaunay edge can cross the fence, so any
    # simplex incident to it works.  The chart center is unreliable:
    # thin crescent regions can leave their coordinate mean outside.
    if len(interior):
        seed = int(tri.vertex_to_simplex[m])
    else:
        klein = 2.0 * w / (1.0 + np.abs(w) ** 2)
        seed = -1
        for s, simplex in enumerate(tri.simplices):
            if _point_in_polygon(klein[simplex].mean(), klein[:m]):
                seed = s
                break
    if seed < 0:
        raise MeshQualityError("no simplex found inside the polygon")
    inside = {seed}
    stack = [seed]
    while stack:
        s = stack.pop()
        simplex = tri.simplices[s]
        for k in range(3):
            nb = int(tri.neighbors[s][k])
            if nb < 0 or nb in inside:
                continue
            shared = frozenset(int(v) for v in simplex) - {int(simplex[k])}
            if shared in fence:
                continue
            inside.add(nb)
            stack.append(nb)
    return [tuple(int(v) for v in tri.simplices[s]) for s in sorted(inside)]


def _hexagon_interior_points(boundary, spacing):
    """Sample the inside of a polygon of HPoints on concentric
    hyperbolic circles around its rough center, keeping a clearance
    from the boundary proportional to the local segment length."""
    from .hypgeo import dist_many, midpoint_many

    zs = np.array([p.halfplane for p in boundary])
    z0 = complex(zs.real.mean(), math.exp(np.log(zs.imag).mean()))
    w = (zs - z0) / (zs - np.conj(z0))
    klein_poly = 2.0 * w / (1.0 + np.abs(w) ** 2)

    barr = np.array([p.array for p in boundary])
    nxt = np.roll(barr, -1, axis=0)
    seg = dist_many(barr, nxt)
    samples = np.concatenate([barr, midpoint_many(barr, nxt)])
    # Boundary segments can differ in length by an order of magnitude
    # (ring chords of a long cuff next to a finely divided seam).  A
    # sample too close to a long chord makes a flat triangle against
    # it, so the required clearance scales with the segment itself.
    local = np.concatenate([np.maximum(seg, np.roll(seg, 1)), seg])
    clear = np.maximum(0.55 * spacing, 0.65 * local)
    radius = dist_many(
        np.broadcast_to(HPoint.from_halfplane(z0).array, barr.shape), barr
    ).max()

    cands = [0j]
    n_rings = int(radius / spacing) + 1
    for k in range(1, n_rings + 1):
        r = k * spacing
        cnt = max(6, int(round(2.0 * math.pi * math.sinh(r) / spacing)))
        rho = math.tanh(0.5 * r)
        for idx in range(cnt):
            theta = 2.0 * math.pi * (idx + 0.5 * (k % 2)) / cnt
            cands.append(rho * cmath.exp(1j * theta))
    out = []
    for wc in cands:
        kc = 2.0 * wc / (1.0 + abs(wc) ** 2)
        if not _point_in_polygon(kc, klein_poly):
            continue
        zc = (z0 - np.conj(z0) * wc) / (1.0 - wc)
        p = HPoint.from_halfplane(zc)
        d = dist_many(np.broadcast_to(p.array, samples.shape), samples)
        if bool((d < clear).any()):
            continue
        out.append(p)
    return out


# per pants: which corner-pair entries the three seams connect.  The
# builder puts the seam feet of cuff i at corners[i]; entry order is
# fixed by the wall layout: seam on wall A joins cuffs (0, 1), on wall B
# joins (0, 2), on wall C joins (1, 2).
_SEAM_PLAN = (
    ((0, 0), (1, 0)),
    ((0, 1), (2, 0)),
    ((1, 1), (2, 1)),
)


class _Builder:
    def __init__(self, blueprint: SurfaceBlueprint, ring: int, seam_div: int):
        if ring < 4 or ring % 2:
            raise ValueError("ring count must be even and at least 4")
        if seam_div < 1:
            raise ValueError("seam_div must be at least 1")
        self.bp = blueprint
        self.rep = blueprint.rep
        self.ring = ring
        self.seam_div = seam_div
        self.positions = []
        self.triangles = []
        self.deltas = self._collar_widths()
        # per (block, slot): ring vertex ids plus deck word bookkeeping
        self.rings = {}
        # deck words are always spelled through the curve words so that
        # edge identifications agree letter for letter across the whole
        # complex; cuff words can differ from them by the relator
        self.slot_curve = {}
        for curve in blueprint.curves:
            for si, key in enumerate(curve.sides):
                self.slot_curve[key] = (curve, si)

    def new_vertex(self, p: HPoint) -> int:
        self.positions.append(p)
        return len(self.positions) - 1

    def _seam_feet(self, block):
        """Realized seam endpoints and lengths for one placed pants."""
        geo, pl = block.geometry, block.placement
        feet = []
        for (ca, ia), (cb, ib) in _SEAM_PLAN:
            za = pl.apply(HPoint.from_halfplane(geo.corners[ca][ia]))
            zb = pl.apply(HPoint.from_halfplane(geo.corners[cb][ib]))
            feet.append(((ca, ia), (cb, ib), za, zb, dist(za, zb)))
        return feet

    def _collar_widths(self):
        # delta_i + delta_j <= 0.7 * seam keeps the inset hexagons fat;
        # the arcsinh bound keeps every tube inside the embedded collar
        # of its curve, which matters once cuffs get long
        deltas = {}
        for bi, block in enumerate(self.bp.pants):
            for (ca, _), (cb, _), _, _, s in self._seam_feet(block):
                for slot in (ca, cb):
                    cv = block.cuff_curves[slot]
                    deltas[cv] = min(deltas.get(cv, 0.35), 0.35 * s)
        for curve in self.bp.curves:
            cap = 0.9 * math.asinh(1.0 / math.sinh(0.5 * curve.length))
            deltas[curve.index] = min(deltas[curve.index], cap)
        return [deltas[i] for i in range(len(self.bp.curves))]

    def build(self):
        for bi in range(len(self.bp.pants)):
            self._build_pants(bi)
        collars = [self._build_band(curve) for curve in self.bp.curves]
        mesh = EquivariantMesh(
            coordinates=None,
            rep=self.rep,
            positions=self.positions,
            triangles=self.triangles,
            collars=collars,
        )
        return mesh

    # -- pants interior ------------------------------------------------

    def _build_pants(self, bi: int):
        block = self.bp.pants[bi]
        geo, pl = block.geometry, block.placement
        n = self.ring
        rings = []
        for slot in range(3):
            curve = block.cuff_curves[slot]
            delta = self.deltas[curve]
            ell = geo.lengths[slot]
            local = geo.cuff_axis(slot)
            fa, _ = local.project(HPoint.from_halfplane(geo.corners[slot][0]))
            fb, _ = local.project(HPoint.from_halfplane(geo.corners[slot][1]))
            if abs(abs(fb - fa) - 0.5 * ell) > 1e-9:
                raise MeshQualityError("seam feet are not half a cuff apart")
            sgn = 1.0 if fb > fa else -1.0
            # The hexagon lies strictly on one side of each cuff's full
            # geodesic, so any corner of another cuff orients the inward
            # normal.  A coordinate-mean interior point is not reliable
            # here: it can exit a hexagon stretched by a short cuff.
            sides = [
                local.project(HPoint.from_halfplane(z))[1]
                for j in range(3) if j != slot
                for z in geo.corners[j]
            ]
            if max(sides) * min(sides) <= 0.0:
                raise MeshQualityError("hexagon corners straddle a cuff axis")
            inward = math.copysign(1.0, sides[0])
            vids = []
            for k in range(n):
                p = local.point_at(fa + sgn * k * ell / n, inward * delta)
                vids.append(self.new_vertex(pl.apply(p)))
            curve_obj, si = self.slot_curve[(bi, slot)]
            cross = curve_obj.crossing if si == 1 else ()
            deck_word = free_reduce(
                word_mul(word_inverse(cross), curve_obj.word, cross)
            )
            # measure which way that deck word shifts this window: one
            # power moves the ring dirn * n index steps
            fwd = self.rep.evaluate(deck_word).apply(self.positions[vids[0]])
            dirn = 0
            for cand in (1, -1):
                q = pl.apply(local.point_at(fa + cand * sgn * ell, inward * delta))
                if dist(fwd, q) < 1e-7:
                    dirn = cand
            if dirn == 0:
                raise MeshQualityError("deck word does not shift its ring window")
            rings.append({
                "vids": vids,
                "word": deck_word,
                "dir": dirn,
                "ell": ell,
                "delta": delta,
            })
            self.rings[(bi, slot)] = rings[-1]
        seams = []
        for si, ((ca, ia), (cb, ib)) in enumerate(_SEAM_PLAN):
            enda = rings[ca]["vids"][0 if ia == 0 else n // 2]
            endb = rings[cb]["vids"][0 if ib == 0 else n // 2]
            pa, pb = self.positions[enda], self.positions[endb]
            # keep seam segments commensurate with the ring arcs; a large
            # mismatch breeds slivers along the seams
            chord = min(rings[ca]["ell"], rings[cb]["ell"]) / n
            div = max(self.seam_div, min(24, round(dist(pa, pb) / (2.0 * chord))))
            inner = [
                self.new_vertex(geodesic_point(pa, pb, m / div))
                for m in range(1, div)
            ]
            seams.append({
                "path": [enda] + inner + [endb],
                "feet": {(ca, 0 if ia == 0 else n // 2), (cb, 0 if ib == 0 else n // 2)},
            })
        self._fan_hexagons(rings, seams)

    def _fan_hexagons(self, rings, seams):
        """Walk the two inset-hexagon boundary loops and mesh their
        interiors at the boundary's own spacing."""
        from .hypgeo import dist_many

        n = self.ring
        used_arcs = set()
        for first_foot in (0, n // 2):
            loop = self._walk_loop(rings, seams, first_foot, used_arcs)
            pts = [
                self.rep.evaluate(w).apply(self.positions[v]) if w
                else self.positions[v]
                for v, w in loop
            ]
            barr = np.array([p.array for p in pts])
            spacing = float(np.median(dist_many(barr, np.roll(barr, -1, axis=0))))
            inner = _hexagon_interior_points(pts, spacing)
            refs = list(loop) + [(self.new_vertex(p), ()) for p in inner]
            for i, k, j in _delaunay_region(pts, inner):
                self.triangles.append((refs[i], refs[k], refs[j]))

    def _walk_loop(self, rings, seams, first_foot, used_arcs):
        n = self.ring

        def ref(cuff, k, g):
            ring = rings[cuff]
            m, kk = divmod(k, n)
            word = free_reduce(word_mul(g, _word_power(ring["word"], m * ring["dir"])))
            return (ring["vids"][kk], word)

        def realize(r):
            vid, w = r
            return self.rep.evaluate(w).apply(self.positions[vid]) if w \
                else self.positions[vid]

        def seam_at(cuff, kk):
            for s in seams:
                if (cuff, kk) in s["feet"]:
                    return s
            raise MeshQualityError("no seam at this foot")

        loop = []
        cuff, k, g = 0, first_foot, ()
        turn = 0.0
        for leg in range(3):
            # arc direction: the first leg defines the loop; afterwards
            # pick the step whose corner turn matches the loop's sign.
            # Only the near-right-angle corner turns are consulted, the
            # tiny turns interior to an arc carry the opposite sign.
            if leg == 0:
                step = 1
            else:
                prev = realize(loop[-1])
                cur = realize(ref(cuff, k, g))
                step = 0
                for s in (1, -1):
                    if _turn_sign(prev, cur, realize(ref(cuff, k + s, g))) == turn:
                        step = s
                if step == 0:
                    raise MeshQualityError("inset hexagon walk lost its corner turn")
            arc_key = (id(rings[cuff]), min(k, k + step * (n // 2)) % n)
            if arc_key in used_arcs:
                raise MeshQualityError("ring arc visited twice")
            used_arcs.add(arc_key)
            for j in range(n // 2):
                loop.append(ref(cuff, k + step * j, g))
            k = k + step * (n // 2)
            m, k = divmod(k, n)
            g = free_reduce(
                word_mul(g, _word_power(rings[cuff]["word"], m * rings[cuff]["dir"]))
            )
            seam = seam_at(cuff, k)
            path = list(seam["path"])
            if path[-1] == rings[cuff]["vids"][k]:
                path.reverse()
            if path[0] != rings[cuff]["vids"][k]:
                raise MeshQualityError("seam does not attach at this foot")
            if turn == 0.0:
                turn = _turn_sign(
                    realize(loop[-1]), realize((path[0], g)), realize((path[1], g))
                )
                if turn == 0.0:
                    raise MeshQualityError("degenerate corner at seam foot")
            for vid in path[:-1]:
                loop.append((vid, g))
            nxt = None
            for c2 in range(3):
                if c2 == cuff:
                    continue
                for kk2 in (0, n // 2):
                    if rings[c2]["vids"][kk2] == path[-1]:
                        nxt = (c2, kk2)
            if nxt is None:
                raise MeshQualityError("seam endpoint is not a ring foot")
            cuff, k = nxt
        if (cuff, k % n) != (0, first_foot):
            raise MeshQualityError("inset hexagon loop failed to close")
        # A wrong deck word would displace the endpoint by at least a
        # translation length; float noise stays far below a ring chord.
        gap = dist(realize(ref(0, first_foot, ())), realize(ref(cuff, k, g)))
        if gap > 0.01 * min(c.length for c in self.bp.curves) / n:
            raise MeshQualityError("inset hexagon loop failed to close")
        return loop

    # -- collar bands ----------------------------------------------------

    def _build_band(self, curve):
        n = self.ring
        axis = GeodesicAxis.of_isometry(self.rep.evaluate(curve.word))
        ell = curve.length
        delta = self.deltas[curve.index]
        sides = []
        for si, (bi, slot) in enumerate(curve.sides):
            ring = self.rings[(bi, slot)]
            transport = curve.crossing if si == 1 else ()
            entries = []
            for vid in ring["vids"]:
                p = self.positions[vid]
                if transport:
                    p = self.rep.evaluate(transport).apply(p)
                param, off = axis.project(p)
                entries.append([param, off, vid, transport])
            sides.append(entries)
        # both rings into one param window, deck powers folded into words
        r0 = min(e[0] for e in sides[0])
        for entries in sides:
            for e in entries:
                m = math.floor((e[0] - r0) / ell)
                if m:
                    e[0] -= m * ell
                    e[3] = free_reduce(word_mul(_word_power(curve.word, -m), e[3]))
            entries.sort(key=lambda e: e[0])
        off0 = np.array([e[1] for e in sides[0]])
        off1 = np.array([e[1] for e in sides[1]])
        if not ((off0 > 0).all() and (off1 < 0).all()) and \
           not ((off0 < 0).all() and (off1 > 0).all()):
            raise MeshQualityError("collar rings are not on opposite sides")
        # Grade the annulus into rows of near-square quads.  In the
        # conformal collar coordinate u = gd(w) a row of height
        # du = ell / n matches the ring chords exactly, so the row count
        # grows as the cuff shrinks instead of the quads degenerating.
        s0 = 1.0 if off0[0] > 0 else -1.0
        u_max = float(gudermann(delta))
        strips = max(1, math.ceil(2.0 * u_max / (ell / n)))
        rows = [sides[0]]
        for k in range(1, strips):
            w = s0 * float(gudermann_inv(u_max * (1.0 - 2.0 * k / strips)))
            entries = []
            for j in range(n):
                param = r0 + j * ell / n
                vid = self.new_vertex(axis.point_at(param, w))
                entries.append([param, w, vid, ()])
            rows.append(entries)
        rows.append(sides[1])
        # member params live in [0, ell) so refinement can unwrap pairs
        members = {}
        for entries in rows:
            for param, off, vid, _ in entries:
                members[vid] = (param % ell, off, 0 if off * s0 > 0 else 1)

        def shifted(entries):
            first = entries[0]
            word = free_reduce(word_mul(_word_power(curve.word, 1), first[3]))
            return entries + [[first[0] + ell, first[1], first[2], word]]

        for lo, hi in zip(rows[:-1], rows[1:]):
            n_lo, n_hi = len(lo), len(hi)
            lo, hi = shifted(lo), shifted(hi)
            i = j = 0
            while i < n_lo or j < n_hi:
                a = (lo[i][2], lo[i][3])
                b = (hi[j][2], hi[j][3])
                if j >= n_hi or (i < n_lo and lo[i + 1][0] <= hi[j + 1][0]):
                    self.triangles.append((a, (lo[i + 1][2], lo[i + 1][3]), b))
                    i += 1
                else:
                    self.triangles.append((a, (hi[j + 1][2], hi[j + 1][3]), b))
                    j += 1
        return CollarBand(
            curve_index=curve.index,
            word=tuple(curve.word),
            transport=tuple(curve.crossing),
            axis=axis,
            length=ell,
            deltas=(float(abs(off0).mean()), float(abs(off1).mean())),
            side0_sign=float(np.sign(off0[0])),
            members=members,
        )


def surface_mesh(fn, level: int = 0, ring: int = 8, seam_div: int = 2) -> EquivariantMesh:
    """Equivariant triangulation of the surface at the given coordinates.

    level counts uniform 4-to-1 refinements of the base mesh; ring is
    the base vertex count around each decomposition curve."""
    bp = surface_blueprint(fn)
    mesh = _Builder(bp, ring, seam_div).build()
    mesh.coordinates = fn
    _orient(mesh)
    _delaunay_flips(mesh)
    _audit(mesh, fn.genus)
    for _ in range(level):
        mesh = refine(mesh)
    return mesh


def refine(mesh: EquivariantMesh) -> EquivariantMesh:
    """Uniform 4-to-1 subdivision at geodesic edge midpoints."""
    positions = list(mesh.positions)
    triangles = []
    midpoint_of = {}
    collar_by_vid = {}
    for ki, col in enumerate(mesh.collars):
        for vid in col.members:
            collar_by_vid.setdefault(vid, set()).add(ki)
    new_members = [dict(col.members) for col in mesh.collars]

    def midpoint(ra, rb):
        (va, wa), (vb, wb) = ra, rb
        e = mesh.canon_word(word_mul(word_inverse(wa), wb))
        key = (va, vb, e)
        alt = (vb, va, mesh.canon_word(word_inverse(e)))
        canon, flipped = (key, False) if key <= alt else (alt, True)
        hit = midpoint_of.get(canon)
        if hit is not None:
            vid = hit
        else:
            # store the midpoint in the frame of the canonical tail
            if flipped:
                base, other, ew = vb, va, word_inverse(e)
            else:
                base, other, ew = va, vb, e
            pa = positions[base]
            pb = mesh.deck(ew).apply(positions[other]) if ew else positions[other]
            vid = len(positions)
            positions.append(geodesic_point(pa, pb, 0.5))
            midpoint_of[canon] = vid
            shared = collar_by_vid.get(va, set()) & collar_by_vid.get(vb, set())
            for ki in shared:
                col = mesh.collars[ki]
                p1, o1, _ = col.members[va]
                p2, o2, _ = col.members[vb]
                if abs(p2 - p1) > 0.5 * col.length:
                    p2 -= math.copysign(col.length, p2 - p1)
                m = geodesic_point(
                    col.axis.point_at(p1, o1), col.axis.point_at(p2, o2), 0.5
                )
                param, off = col.axis.project(m)
                side = 0 if off * col.side0_sign > 0 else 1
                new_members[ki][vid] = (param % col.length, off, side)
                collar_by_vid.setdefault(vid, set()).add(ki)
        # the ref word in this triangle's frame
        return vid, (wa if not flipped else wb)

    for tri in mesh.triangles:
        a, b, c = tri
        mab = midpoint(a, b)
        mbc = midpoint(b, c)
        mca = midpoint(c, a)
        triangles.extend([
            (a, mab, mca),
            (b, mbc, mab),
            (c, mca, mbc),
            (mab, mbc, mca),
        ])
    collars = [
        CollarBand(
            curve_index=col.curve_index,
            word=col.word,
            transport=col.transport,
            axis=col.axis,
            length=col.length,
            deltas=col.deltas,
            side0_sign=col.side0_sign,
            members=new_members[ki],
        )
        for ki, col in enumerate(mesh.collars)
    ]
    out = EquivariantMesh(
        coordinates=mesh.coordinates,
        rep=mesh.rep,
        positions=positions,
        triangles=triangles,
        collars=collars,
        level=mesh.level + 1,
    )
    _orient(out)
    _delaunay_flips(out)
    _audit(out, mesh.rep.genus)
    return out
