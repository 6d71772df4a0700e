"""Surface group words and representations into PSL(2, C).

Generators of the genus-g group are numbered 1..2g in the order
a1, b1, ..., ag, bg; a word is a tuple of nonzero signed integers, the
sign marking inversion.  The single relator is the product of the g
commutators [a_k, b_k] = a_k b_k a_k^-1 b_k^-1.

Fuchsian representations come from pants pieces built out of reflections
in three pairwise-disjoint circles, glued along cuffs by a uniform
conjugating primitive that realizes prescribed twists.  The assembly is
arranged so the relator telescopes to the identity as a matrix product;
its residual is rounding noise, orders below the 1e-9 contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hypgeo import (
    HPoint,
    MobiusIsometry,
    dist,
    exp_map,
    frame,
    GeodesicAxis,
    rotation_about,
)

Word = tuple  # tuple of nonzero signed ints


class EnumerationCapError(RuntimeError):
    """Word enumeration would exceed the configured cap."""


# ----------------------------------------------------------------- words


def free_reduce(letters) -> Word:
    out = []
    for x in letters:
        x = int(x)
        if x == 0:
            raise ValueError("0 is not a letter")
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def word_inverse(w) -> Word:
    return tuple(-x for x in reversed(w))


def word_mul(*ws) -> Word:
    cat = []
    for w in ws:
        cat.extend(w)
    return free_reduce(cat)


def cyclic_reduce(w) -> Word:
    w = free_reduce(w)
    while len(w) >= 2 and w[0] == -w[-1]:
        w = w[1:-1]
    return w


def commutator_word(x, y) -> Word:
    return word_mul(x, y, word_inverse(x), word_inverse(y))


def relator_word(genus: int) -> Word:
    out = []
    for k in range(1, genus + 1):
        a, b = 2 * k - 1, 2 * k
        out.extend((a, b, -a, -b))
    return tuple(out)


def cyclically_equal(u, v) -> bool:
    u = cyclic_reduce(u)
    v = cyclic_reduce(v)
    if len(u) != len(v):
        return False
    if not u:
        return True
    return any(u[i:] + u[:i] == v for i in range(len(u)))


def _rotations(w):
    return [w[i:] + w[:i] for i in range(len(w))]


def is_trivial_word(w, genus: int) -> bool:
    """Whether w represents the identity of the genus-g surface group.

    Dehn's algorithm: a nonempty cyclically reduced trivial word must
    contain more than half of some cyclic rotation of the relator (or
    its inverse) as a subword; replacing that piece by the inverse of
    the complement strictly shortens the word.
    """
    rel = relator_word(genus)
    pieces = _rotations(rel) + _rotations(word_inverse(rel))
    L = len(rel)
    half = L // 2  # need a match of length > L/2, i.e. >= half+1
    w = cyclic_reduce(w)
    while w:
        if len(w) < half + 1:
            return False
        doubled = w + w[: L - 1]
        best = None
        for rot in pieces:
            # longest prefix of rot occurring in the cyclic word
            for k in range(min(L, len(w)), half, -1):
                pat = rot[:k]
                for i in range(len(w)):
                    if doubled[i : i + k] == pat:
                        best = (k, i, rot)
                        break
                if best:
                    break
            if best:
                break
        if best is None:
            return False
        k, i, rot = best
        # rot = pat * tail and pat = tail^-1 in the group
        repl = word_inverse(rot[k:])
        rotated = doubled[i : i + len(w)]  # w cycled to start at the match
        w = cyclic_reduce(repl + rotated[k:])
    return True


@dataclass(frozen=True)
class SurfaceGroupPresentation:
    genus: int
    generators: tuple
    relator: Word


def presentation(genus: int) -> SurfaceGroupPresentation:
    if genus < 2:
        raise ValueError("genus must be at least 2")
    names = []
    for k in range(1, genus + 1):
        names.extend((f"a{k}", f"b{k}"))
    return SurfaceGroupPresentation(genus, tuple(names), relator_word(genus))


# -------------------------------------------------------- representations


@dataclass(frozen=True, eq=False)
class Representation:
    """Assignment of isometries to the generators a1, b1, ..., ag, bg."""

    genus: int
    generators: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.generators) != 2 * self.genus:
            raise ValueError("expected 2*genus generator isometries")

    def evaluate(self, word) -> MobiusIsometry:
        out = MobiusIsometry.identity()
        n = 2 * self.genus
        for x in word:
            x = int(x)
            if not 1 <= abs(x) <= n:
                raise ValueError(f"letter {x} outside generator range")
            g = self.generators[abs(x) - 1]
            out = out @ (g if x > 0 else g.inv())
        return out

    def relator_residual(self) -> float:
        cached = getattr(self, "_residual", None)
        if cached is None:
            # evaluate in extended precision: the relator product passes
            # through large intermediates whose double rounding would
            # otherwise drown the true defect of the stored generators
            m = np.eye(2, dtype=np.clongdouble)
            for x in relator_word(self.genus):
                g = self.generators[x - 1] if x > 0 else self.generators[-x - 1].inv()
                m = m @ g.matrix.astype(np.clongdouble)
            eye = np.eye(2)
            cached = float(min(np.abs(m - eye).max(), np.abs(m + eye).max()))
            object.__setattr__(self, "_residual", cached)
        return cached

    @property
    def is_fuchsian(self) -> bool:
        return all(g.is_real for g in self.generators)

    def conjugate(self, k: MobiusIsometry) -> "Representation":
        ki = k.inv()
        gens = tuple(k @ g @ ki for g in self.generators)
        return Representation(self.genus, gens, dict(self.metadata))

    def to_json_dict(self) -> dict:
        return {
            "genus": self.genus,
            "generators": [g.to_row() for g in self.generators],
            "metadata": self.metadata,
        }

    @classmethod
    def from_json_dict(cls, doc) -> "Representation":
        gens = tuple(MobiusIsometry.from_row(row) for row in doc["generators"])
        return cls(int(doc["genus"]), gens, dict(doc.get("metadata", {})))


def evaluate(rep: Representation, word) -> MobiusIsometry:
    return rep.evaluate(word)


# ------------------------------------------------------- pants geometry


def _perp_circle(c1, r1, c2, r2):
    """Center and radius of the circle orthogonal to two circles with
    centers on the real line: the common perpendicular geodesic."""
    m = 0.5 * ((r1 * r1 - r2 * r2) / (c2 - c1) + c1 + c2)
    s2 = (m - c1) ** 2 - r1 * r1
    if s2 <= 0:
        raise ValueError("circles are not disjoint")
    return m, math.sqrt(s2)


def _circle_meet(c1, r1, c2, r2) -> complex:
    """Upper intersection point of two circles centered on the real line."""
    x = 0.5 * ((r1 * r1 - r2 * r2) / (c2 - c1) + c1 + c2)
    y2 = r1 * r1 - (x - c1) ** 2
    if y2 <= 0:
        raise ValueError("circles do not meet")
    return complex(x, math.sqrt(y2))


@dataclass(frozen=True)
class PantsGeometry:
    """Pair of pants with cuff lengths (L1, L2, L3) in standard position.

    cuffs = (X1, X2, X3) are the cuff translations, X1 X2 X3 = identity
    exactly; X1 is diagonal with vertical axis.  circles are the three
    reflection walls (center, radius) on the real line; corners[i] holds
    the two hexagon corners on the axis of cuff i, as halfplane points.
    """

    lengths: tuple
    cuffs: tuple
    circles: tuple
    corners: tuple

    def cuff_axis(self, i: int) -> GeodesicAxis:
        return GeodesicAxis.of_isometry(self.cuffs[i])

    def interior_point(self) -> HPoint:
        """A point inside the hexagon, used for side bookkeeping."""
        zs = [z for pair in self.corners for z in pair]
        x = sum(z.real for z in zs) / len(zs)
        t = math.exp(sum(math.log(z.imag) for z in zs) / len(zs))
        return HPoint(x, 0.0, t)


def pants(L1: float, L2: float, L3: float) -> PantsGeometry:
    if min(L1, L2, L3) <= 0:
        raise ValueError("cuff lengths must be positive")
    rho = math.exp(0.5 * L1)
    ch2 = math.cosh(0.5 * L2)
    ch3 = math.cosh(0.5 * L3)
    r0 = (rho * rho - 1.0) / (2.0 * (ch2 + rho * ch3))
    x0 = math.sqrt(1.0 + 2.0 * r0 * ch2 + r0 * r0)
    # walls must be pairwise disjoint: C outside A, C inside B
    if not (1.0 < x0 - r0 and x0 + r0 < rho):
        raise ValueError("degenerate pants walls")
    ra = np.array([[0.0, 1.0], [1.0, 0.0]])
    rb = np.array([[0.0, rho], [1.0 / rho, 0.0]])
    rc = np.array([[x0 / r0, (r0 * r0 - x0 * x0) / r0], [1.0 / r0, -x0 / r0]])
    x1 = MobiusIsometry.from_matrix(rb @ ra)
    x2 = MobiusIsometry.from_matrix(ra @ rc)
    x3 = MobiusIsometry.from_matrix(rc @ rb)
    m2, s2 = _perp_circle(0.0, 1.0, x0, r0)
    m3, s3 = _perp_circle(0.0, rho, x0, r0)
    corners = (
        (1j, 1j * rho),
        (_circle_meet(0.0, 1.0, m2, s2), _circle_meet(x0, r0, m2, s2)),
        (_circle_meet(0.0, rho, m3, s3), _circle_meet(x0, r0, m3, s3)),
    )
    return PantsGeometry(
        (L1, L2, L3), (x1, x2, x3), ((0.0, 1.0), (0.0, rho), (x0, r0)), corners
    )


def glue_isometry(
    src: MobiusIsometry, target: MobiusIsometry, twist: float
) -> MobiusIsometry:
    """K with K src K^-1 = target^-1 (projectively), sliding by `twist`
    along the target axis.  Requires equal translation lengths."""
    if abs(src.translation_length() - target.translation_length()) > 1e-9:
        raise ValueError("glued cuffs must have equal lengths")
    fs = frame(*src.fixed_points())
    ft = frame(*target.inv().fixed_points())
    h = math.exp(0.5 * twist)
    return ft @ MobiusIsometry(h, 0.0, 0.0, 1.0 / h) @ fs.inv()


# ------------------------------------------------------------- assembly


@dataclass(frozen=True)
class CurveGluing:
    """One pants curve of the decomposition and how its two cuff sides
    are identified in the assembled group."""

    index: int
    word: Word
    length: float
    twist: float
    sides: tuple  # ((pants block, cuff slot), (pants block, cuff slot))
    crossing: Word  # side-1 chart to side-0 chart; empty when axes agree


@dataclass(frozen=True)
class PantsBlock:
    geometry: PantsGeometry
    placement: MobiusIsometry
    cuff_words: tuple  # global words realizing the placed cuffs
    cuff_curves: tuple  # decomposition curve index per cuff slot


@dataclass(frozen=True, eq=False)
class SurfaceBlueprint:
    genus: int
    lengths: tuple
    twists: tuple
    decomposition: str
    pants: tuple
    curves: tuple
    rep: Representation


def decomposition_curve_words(genus: int) -> list:
    """Words of the 3g-3 decomposition curves, in index order."""
    if genus < 2:
        raise ValueError("genus must be at least 2")
    if genus == 2:
        return [(1,), (1, 2, -1, -2), (3,)]
    cs = [(2 * k - 1,) for k in range(1, genus + 1)]
    ss = [
        commutator_word((2 * k - 1,), (2 * k,)) for k in range(1, genus + 1)
    ]
    ts = []
    for j in range(1, genus - 2):
        ts.append(word_mul(*(ss[k] for k in range(j + 1))))
    return cs + ss + ts


def _separating_sides(genus: int) -> dict:
    """curve index -> generator indices (1-based) on one side."""
    if genus == 2:
        return {1: [3, 4]}
    out = {}
    for k in range(1, genus + 1):
        out[genus + k - 1] = [2 * k - 1, 2 * k]
    for j in range(1, genus - 2):
        out[2 * genus + j - 1] = [i for i in range(1, 2 * (j + 1) + 1)]
    return out


def _base_metadata(genus, lengths, twists, decomposition) -> dict:
    return {
        "constructor": "fuchsian_from_fn",
        "genus": genus,
        "lengths": [float(v) for v in lengths],
        "twists": [float(v) for v in twists],
        "decomposition": decomposition,
        "curve_words": [list(w) for w in decomposition_curve_words(genus)],
        "separating": {
            str(i): side for i, side in _separating_sides(genus).items()
        },
    }


def _handle_cuff_words(k: int) -> tuple:
    a, b = 2 * k - 1, 2 * k
    return ((a,), (b, -a, -b), (b, a, -b, -a))


def _assemble_genus2(lengths, twists) -> SurfaceBlueprint:
    l1, ls, l2 = lengths
    t1, ts, t2 = twists
    p0 = pants(l1, l1, ls)
    x1, x2, x3 = p0.cuffs
    b1_std = glue_isometry(x1, x2, t1)
    p1 = pants(l2, l2, ls)
    y1, y2, y3 = p1.cuffs
    b2_std = glue_isometry(y1, y2, t2)
    # split the separating twist: placing the global frame halfway along
    # the glued cuff keeps both blocks' entries moderate, which is what
    # bounds the rounding defect of the relator product
    h = math.exp(0.25 * ts)
    dh = MobiusIsometry(h, 0.0, 0.0, 1.0 / h)
    fs = frame(*y3.fixed_points())
    ft = frame(*x3.inv().fixed_points())
    place0 = dh.inv() @ ft.inv()
    place1 = dh @ fs.inv()
    pl0i = place0.inv()
    pl1i = place1.inv()
    a1 = place0 @ x1 @ pl0i
    b1 = place0 @ b1_std @ pl0i
    a2 = place1 @ y1 @ pl1i
    b2 = place1 @ b2_std @ pl1i
    meta = _base_metadata(2, lengths, twists, "chain")
    rep = Representation(2, (a1, b1, a2, b2), meta)
    blocks = (
        PantsBlock(p0, place0, _handle_cuff_words(1), (0, 0, 1)),
        PantsBlock(p1, place1, _handle_cuff_words(2), (2, 2, 1)),
    )
    words = decomposition_curve_words(2)
    curves = (
        CurveGluing(0, words[0], l1, t1, ((0, 0), (0, 1)), (-2,)),
        CurveGluing(1, words[1], ls, ts, ((0, 2), (1, 2)), ()),
        CurveGluing(2, words[2], l2, t2, ((1, 0), (1, 1)), (-4,)),
    )
    return SurfaceBlueprint(2, tuple(lengths), tuple(twists), "chain", blocks, curves, rep)


def _assemble_flower(genus, lengths, twists) -> SurfaceBlueprint:
    g = genus
    lc, ls = lengths[:g], lengths[g : 2 * g]
    lt = lengths[2 * g :]
    tc, ts = twists[:g], twists[g : 2 * g]
    tt = twists[2 * g :]

    # central chain of g-2 pants carrying the g handle boundaries
    center = []
    for j in range(1, g - 1):
        if j == 1:
            tri = (ls[0], ls[1], lt[0] if g > 3 else ls[2])
        elif j <= g - 3:
            tri = (lt[j - 2], ls[j], lt[j - 1])
        else:
            tri = (lt[j - 2], ls[j], ls[g - 1])
        center.append(pants(*tri))
    places = [MobiusIsometry.identity()]
    for j in range(1, g - 2):
        prev_v3 = places[j - 1] @ center[j - 1].cuffs[2] @ places[j - 1].inv()
        places.append(glue_isometry(center[j].cuffs[0], prev_v3, tt[j - 1]))

    def placed(j, slot):
        return places[j] @ center[j].cuffs[slot] @ places[j].inv()

    slots = [placed(0, 0), placed(0, 1)]
    slot_pos = [(0, 0), (0, 1)]
    for k in range(3, g):
        slots.append(placed(k - 2, 1))
        slot_pos.append((k - 2, 1))
    slots.append(placed(g - 3, 2))
    slot_pos.append((g - 3, 2))

    handles = []
    for k in range(1, g + 1):
        pk = pants(lc[k - 1], lc[k - 1], ls[k - 1])
        xk1, xk2, xk3 = pk.cuffs
        bk_std = glue_isometry(xk1, xk2, tc[k - 1])
        mk = glue_isometry(xk3, slots[k - 1], ts[k - 1])
        handles.append((pk, bk_std, mk))

    # recenter the global frame at the middle of the chain; distant
    # handles otherwise get large matrix entries, which inflates the
    # rounding defect of the relator product
    mid = (g - 2) // 2
    if mid > 0:
        ci = places[mid].inv()
        places = [ci @ pl for pl in places]
        handles = [(pk, bk_std, ci @ mk) for pk, bk_std, mk in handles]

    gens = []
    handle_blocks = []
    for k, (pk, bk_std, mk) in enumerate(handles, start=1):
        mki = mk.inv()
        gens.append(mk @ pk.cuffs[0] @ mki)
        gens.append(mk @ bk_std @ mki)
        handle_blocks.append(
            PantsBlock(pk, mk, _handle_cuff_words(k), (k - 1, k - 1, g + k - 1))
        )

    meta = _base_metadata(g, lengths, twists, "flower")
    rep = Representation(g, tuple(gens), meta)

    words = decomposition_curve_words(g)
    sw = words[g : 2 * g]
    tw = words[2 * g :]
    center_blocks = []
    for j in range(1, g - 1):
        if j == 1:
            w1 = sw[0]
            w2 = sw[1]
        else:
            w1 = tw[j - 2]
            w2 = sw[j]
        if j <= g - 3:
            w3 = word_inverse(tw[j - 1])
        else:
            w3 = sw[g - 1]
        if j == 1:
            k1 = g
        else:
            k1 = 2 * g + j - 2
        k2 = g + j
        k3 = 2 * g + j - 1 if j <= g - 3 else 2 * g - 1
        center_blocks.append(
            PantsBlock(center[j - 1], places[j - 1], (w1, w2, w3), (k1, k2, k3))
        )

    blocks = tuple(handle_blocks + center_blocks)
    curves = []
    for k in range(1, g + 1):
        curves.append(
            CurveGluing(
                k - 1, words[k - 1], lc[k - 1], tc[k - 1],
                ((k - 1, 0), (k - 1, 1)), (-2 * k,),
            )
        )
    for k in range(1, g + 1):
        cj, cslot = slot_pos[k - 1]
        curves.append(
            CurveGluing(
                g + k - 1, sw[k - 1], ls[k - 1], ts[k - 1],
                ((k - 1, 2), (g + cj, cslot)), (),
            )
        )
    for j in range(1, g - 2):
        curves.append(
            CurveGluing(
                2 * g + j - 1, tw[j - 1], lt[j - 1], tt[j - 1],
                ((g + j - 1, 2), (g + j, 0)), (),
            )
        )
    return SurfaceBlueprint(
        g, tuple(lengths), tuple(twists), "flower", blocks, tuple(curves), rep
    )


def surface_blueprint(fn) -> SurfaceBlueprint:
    """Assemble the Fuchsian surface for Fenchel-Nielsen data.  `fn` needs
    genus, lengths, twists and decomposition attributes."""
    genus = int(fn.genus)
    lengths = tuple(float(v) for v in fn.lengths)
    twists = tuple(float(v) for v in fn.twists)
    if genus < 2:
        raise ValueError("genus must be at least 2")
    if len(lengths) != 3 * genus - 3 or len(twists) != 3 * genus - 3:
        raise ValueError("expected 3g-3 lengths and twists")
    if min(lengths) <= 0:
        raise ValueError("all lengths must be positive")
    expected = "chain" if genus == 2 else "flower"
    deco = getattr(fn, "decomposition", None) or expected
    if deco != expected:
        raise ValueError(f"unsupported decomposition {deco!r}")
    if genus == 2:
        bp = _assemble_genus2(lengths, twists)
    else:
        bp = _assemble_flower(genus, lengths, twists)
    res = bp.rep.relator_residual()
    # Forward float64 error of the 8-factor relator product grows like
    # the fourth power of the generator entry scale, so the strict 1e-9
    # contract is attainable only for moderate coordinates.
    scale = max(float(np.abs(g.matrix).max()) for g in bp.rep.generators)
    if not res < max(1e-9, scale**4 * 1e-15):
        raise AssertionError(f"relator residual {res} out of contract")
    return bp


def fuchsian_from_fn(fn) -> Representation:
    """Discrete faithful PSL(2, R) representation realizing the given
    Fenchel-Nielsen coordinates."""
    return surface_blueprint(fn).rep


# --------------------------------------------------------------- bending


def bend(rep: Representation, curve, angle: float) -> Representation:
    """Conjugate the generators on one side of a separating pants curve
    by the elliptic rotation about the curve's axis."""
    if not abs(angle) < 0.5 * math.pi:
        raise ValueError("bending angle must satisfy |angle| < pi/2")
    if not rep.is_fuchsian:
        raise ValueError("bend starts from a Fuchsian representation")
    word = free_reduce(curve)
    if not word:
        raise ValueError("trivial curve")
    curve_words = rep.metadata.get("curve_words")
    separating = rep.metadata.get("separating", {})
    if curve_words is None:
        raise ValueError("representation carries no decomposition data")
    match = None
    for i, w in enumerate(curve_words):
        w = tuple(w)
        if cyclically_equal(word, w) or cyclically_equal(word, word_inverse(w)):
            match = i
            break
    if match is None or str(match) not in separating:
        raise ValueError("bending supports separating decomposition curves only")
    if angle == 0.0:
        return rep
    stored = tuple(curve_words[match])
    axis_iso = rep.evaluate(stored)
    p, q = axis_iso.fixed_points()
    rot = rotation_about(p, q, angle)
    roti = rot.inv()
    side = set(separating[str(match)])
    gens = tuple(
        rot @ g @ roti if (i + 1) in side else g
        for i, g in enumerate(rep.generators)
    )
    meta = dict(rep.metadata)
    meta["constructor"] = "bend"
    meta["bend_curve_index"] = match
    meta["bend_angle"] = float(angle)
    out = Representation(rep.genus, gens, meta)
    res = out.relator_residual()
    if not res < 1e-9:
        raise AssertionError(f"relator residual {res} out of contract")
    return out


# ------------------------------------------------------------ word scans


@dataclass(frozen=True)
class DiscretenessCertificate:
    """Minimum translation length over nontrivial words of length <= W."""

    eps0: float
    word_length: int
    witness: Word
    parabolic_found: bool = False
    words_scanned: int = 0


@dataclass(frozen=True)
class SeparationReport:
    passed: bool
    trials: int
    counterexample: tuple = None


def _word_count(genus: int, max_len: int) -> int:
    n = 4 * genus
    total = 0
    block = n
    for _ in range(max_len):
        total += block
        block *= n - 1
    return total


class _Level:
    __slots__ = ("mats", "letter", "first", "parent")

    def __init__(self, mats, letter, first, parent):
        self.mats = mats
        self.letter = letter
        self.first = first
        self.parent = parent


def _letter_set(genus: int):
    g2 = 2 * genus
    return [x for x in range(1, g2 + 1)] + [-x for x in range(1, g2 + 1)]


def _letter_matrices(rep: Representation) -> dict:
    out = {}
    for i, gen in enumerate(rep.generators):
        out[i + 1] = gen.matrix
        out[-(i + 1)] = gen.inv().matrix
    return out


def _first_level(rep: Representation) -> _Level:
    letters = _letter_set(rep.genus)
    mats = np.stack([_letter_matrices(rep)[x] for x in letters])
    arr = np.array(letters, dtype=np.int8)
    return _Level(mats, arr, arr.copy(), np.full(len(letters), -1, dtype=np.int64))

def _expand_block(level: _Level, letter: int, mat) -> tuple:
    """Children of `level` ending in `letter`: (matrices, parent indices)."""
    idx = np.nonzero(level.letter != -letter)[0]
    return level.mats[idx] @ mat, idx


def _expand_level(level: _Level, rep: Representation) -> _Level:
    lmats = _letter_matrices(rep)
    mats, letters, firsts, parents = [], [], [], []
    for x in _letter_set(rep.genus):
        m, idx = _expand_block(level, x, lmats[x])
        mats.append(m)
        letters.append(np.full(len(idx), x, dtype=np.int8))
        firsts.append(level.first[idx])
        parents.append(idx.astype(np.int64))
    return _Level(
        np.concatenate(mats),
        np.concatenate(letters),
        np.concatenate(firsts),
        np.concatenate(parents),
    )


def _reconstruct(levels, level_index: int, word_index: int) -> Word:
    out = []
    i = word_index
    for n in range(level_index, -1, -1):
        out.append(int(levels[n].letter[i]))
        i = int(levels[n].parent[i])
    return tuple(reversed(out))


def _lengths_from_traces(tr):
    mu = 0.5 * tr
    disc = np.sqrt(mu * mu - 1.0 + 0j)
    lam = np.maximum(np.abs(mu + disc), np.abs(mu - disc))
    return 2.0 * np.log(np.maximum(lam, 1.0))


_STREAM_LIMIT = 2_000_000


class _MinScan:
    """Tracks the smallest positive-or-zero translation length over
    cyclically reduced words, sorting out group-trivial identities."""

    def __init__(self, rep):
        self.rep = rep
        self.best = math.inf
        self.best_ref = None
        self.zero_witness = None
        self.parabolic = False

    def feed(self, traces, mats, cyc_mask, refs):
        # distance to +-2 in C, so loxodromics with |trace| = 2 stay honest
        near = np.minimum(np.abs(traces - 2.0), np.abs(traces + 2.0)) < 1e-8
        lengths = _lengths_from_traces(traces)
        ok = cyc_mask & ~near
        if ok.any():
            sub = np.nonzero(ok)[0]
            k = sub[np.argmin(lengths[sub])]
            if lengths[k] < self.best:
                self.best = float(lengths[k])
                self.best_ref = refs(int(k))
        flagged = np.nonzero(cyc_mask & near)[0]
        eye = np.eye(2)
        for k in flagged:
            word = refs(int(k))()
            m = mats[k]
            if min(np.abs(m - eye).max(), np.abs(m + eye).max()) < 1e-8:
                if is_trivial_word(word, self.rep.genus):
                    continue  # relator class, not a group element witness
                if self.zero_witness is None:
                    self.zero_witness = word
            elif not self.parabolic:
                # a parabolic witness outranks a non-faithful identity
                self.zero_witness = word
                self.parabolic = True


def min_translation_length(
    rep: Representation, W: int, cap: int = 10_000_000
) -> DiscretenessCertificate:
    """Scan all freely reduced words of length <= W (translation lengths
    taken on cyclically reduced ones, which exhaust all conjugacy
    classes) for the shortest displacement.  Zero means a parabolic or a
    non-faithful identity was found; group-trivial words are excluded."""
    if W < 1:
        raise ValueError("W must be at least 1")
    total = _word_count(rep.genus, W)
    if total > cap:
        raise EnumerationCapError(
            f"{total} words of length <= {W} exceed the cap {cap}"
        )
    scan = _MinScan(rep)
    levels = []
    level = _first_level(rep)
    for n in range(W):
        is_last = n == W - 1
        if is_last and len(level.letter) * (4 * rep.genus - 1) > _STREAM_LIMIT and n > 0:
            # stream the last level in per-letter blocks
            lmats = _letter_matrices(rep)
            prev = level
            levels.append(prev)
            for x in _letter_set(rep.genus):
                mats, idx = _expand_block(prev, x, lmats[x])
                traces = mats[:, 0, 0] + mats[:, 1, 1]
                cyc = prev.first[idx] != -x

                def mkref(i, x=x, idx=idx):
                    return lambda: _reconstruct(levels, n - 1, int(idx[i])) + (x,)

                scan.feed(traces, mats, cyc, mkref)
            break
        if n > 0:
            level = _expand_level(level, rep)
        levels.append(level)
        traces = level.mats[:, 0, 0] + level.mats[:, 1, 1]
        cyc = level.first != -level.letter

        def mkref(i, n=n):
            return lambda: _reconstruct(levels, n, i)

        scan.feed(traces, level.mats, cyc, mkref)
        if scan.zero_witness is not None:
            break  # eps0 = 0 is definitive

    if scan.zero_witness is not None:
        return DiscretenessCertificate(
            0.0, W, scan.zero_witness, scan.parabolic, total
        )
    witness = scan.best_ref() if scan.best_ref is not None else ()
    return DiscretenessCertificate(float(scan.best), W, witness, False, total)


def length_spectrum(rep: Representation, W: int, cap: int = 10_000_000) -> list:
    """(word, translation length) per conjugacy class with a cyclically
    reduced representative of length <= W, deduplicated by trace
    bucketing, sorted by length."""
    if W < 1:
        raise ValueError("W must be at least 1")
    total = _word_count(rep.genus, W)
    if total > cap:
        raise EnumerationCapError(
            f"{total} words of length <= {W} exceed the cap {cap}"
        )
    buckets = {}
    eye = np.eye(2)

    def feed(traces, mats, cyc_mask, make_word):
        keys_re = np.round(traces.real, 8)
        keys_im = np.round(traces.imag, 8)
        sub = np.nonzero(cyc_mask)[0]
        if len(sub) == 0:
            return
        pairs = np.stack([keys_re[sub], keys_im[sub]], axis=1)
        _, uniq_pos = np.unique(pairs, axis=0, return_index=True)
        for p in np.sort(uniq_pos):
            k = int(sub[p])
            key = (float(keys_re[k]), float(keys_im[k]))
            if key in buckets:
                continue
            m = mats[k]
            if min(np.abs(m - eye).max(), np.abs(m + eye).max()) < 1e-8:
                word = make_word(k)
                if is_trivial_word(word, rep.genus):
                    buckets[key] = None  # identity class, not listed
                    continue
                buckets[key] = (0.0, word)
                continue
            tr = complex(traces[k])
            ell = float(_lengths_from_traces(np.array([tr]))[0])
            buckets[key] = (ell, make_word(k))

    levels = []
    level = _first_level(rep)
    for n in range(W):
        is_last = n == W - 1
        if is_last and len(level.letter) * (4 * rep.genus - 1) > _STREAM_LIMIT and n > 0:
            lmats = _letter_matrices(rep)
            prev = level
            levels.append(prev)
            for x in _letter_set(rep.genus):
                mats, idx = _expand_block(prev, x, lmats[x])
                traces = mats[:, 0, 0] + mats[:, 1, 1]
                cyc = prev.first[idx] != -x
                feed(
                    traces, mats, cyc,
                    lambda k, x=x, idx=idx: _reconstruct(levels, n - 1, int(idx[k])) + (x,),
                )
            break
        if n > 0:
            level = _expand_level(level, rep)
        levels.append(level)
        traces = level.mats[:, 0, 0] + level.mats[:, 1, 1]
        cyc = level.first != -level.letter
        feed(traces, level.mats, cyc, lambda k, n=n: _reconstruct(levels, n, k))

    entries = [v for v in buckets.values() if v is not None]
    entries.sort(key=lambda item: (item[0], len(item[1]), item[1]))
    return [(word, ell) for ell, word in entries]


def separation_check(
    rep: Representation,
    cert: DiscretenessCertificate,
    trials: int,
    seed: int = 0,
) -> SeparationReport:
    """Sample point pairs closer than eps0/2 and short word pairs; any
    pair of distinct isometries bringing them back within eps0/2 of each
    other falsifies the certificate scale."""
    if not cert.eps0 > 0:
        raise ValueError("separation check needs a positive eps0")
    eps = cert.eps0
    rng = np.random.default_rng(seed)
    pool = [()]
    pool.extend((x,) for x in _letter_set(rep.genus))
    for x in _letter_set(rep.genus):
        for y in _letter_set(rep.genus):
            if y != -x:
                pool.append((x, y))
    if cert.witness and cert.witness not in pool:
        pool.append(cert.witness)
    isoms = [rep.evaluate(w) for w in pool]

    anchors = [HPoint(0.0, 0.0, 1.0)]
    wit = rep.evaluate(cert.witness) if cert.witness else None
    if wit is not None and wit.is_real and wit.classify().tag == "hyperbolic-loxodromic":
        axis = GeodesicAxis.of_isometry(wit)
        anchors.append(axis.point_at(0.0))

    for trial in range(trials):
        anchor = anchors[trial % len(anchors)]
        v = rng.normal(size=3)
        v *= rng.uniform(0.0, 1.0) / max(np.linalg.norm(v), 1e-12)
        x = exp_map(anchor, v * anchor.t)
        u = rng.normal(size=3)
        r = rng.uniform(0.0, 0.499 * eps)
        u *= r / max(np.linalg.norm(u), 1e-12)
        y = exp_map(x, u * x.t)
        i1, i2 = rng.integers(0, len(pool), size=2)
        g1, g2 = isoms[i1], isoms[i2]
        if dist(g1.apply(x), g2.apply(y)) < 0.5 * eps:
            if not g1.almost_equal(g2, 1e-9):
                return SeparationReport(
                    False, trial + 1, (pool[i1], pool[i2], x, y)
                )
    return SeparationReport(True, trials, None)
