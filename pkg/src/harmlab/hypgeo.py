"""Upper half-space model of hyperbolic 3-space.

Points are (x, y, t) with t > 0; the plane slice y = 0 is a totally
geodesic copy of the hyperbolic plane, with complex coordinate x + i t.
Orientation-preserving isometries act through SL(2, C) by the Poincare
extension of the Mobius action on the boundary plane t = 0.

Tangent vectors are stored as raw coordinate vectors; the Riemannian norm
of a vector v at (x, y, t) is |v| / t.  Array functions accept stacks of
shape (..., 3) and broadcast.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

INF = complex("inf")


def gudermann(r):
    """Angle phi with tan(phi) = sinh(r); maps R onto (-pi/2, pi/2)."""
    return np.arctan(np.sinh(r))


def gudermann_inv(phi):
    return np.arcsinh(np.tan(phi))


@dataclass(frozen=True)
class IsometryClass:
    """Classification of an isometry with its translation length.

    tag is one of identity, elliptic, parabolic, hyperbolic-loxodromic.
    The translation length is positive exactly for the last tag.  When
    the trace sits within tolerance of +-2 the parabolic/identity call
    is below noise, and diagnostics says so.
    """

    tag: str
    translation_length: float
    diagnostics: str = ""


@dataclass(frozen=True)
class HPoint:
    """Point of the upper half-space, height t > 0."""

    x: float
    y: float
    t: float

    def __post_init__(self):
        if not self.t > 0.0:
            raise ValueError(f"height must be positive, got t={self.t}")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.t])

    @classmethod
    def from_array(cls, a) -> "HPoint":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    @property
    def halfplane(self) -> complex:
        """Coordinate x + i t of the slice y = 0."""
        return complex(self.x, self.t)

    @classmethod
    def from_halfplane(cls, w: complex) -> "HPoint":
        return cls(w.real, 0.0, w.imag)


def dist_many(p, q):
    """Hyperbolic distance, elementwise over (..., 3) stacks."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    dz2 = (p[..., 0] - q[..., 0]) ** 2 + (p[..., 1] - q[..., 1]) ** 2
    dt2 = (p[..., 2] - q[..., 2]) ** 2
    # cosh d = 1 + u, written as 2 asinh sqrt(u/2) to keep accuracy near 0
    u = (dz2 + dt2) / (2.0 * p[..., 2] * q[..., 2])
    return 2.0 * np.arcsinh(np.sqrt(0.5 * u))


def dist(p: HPoint, q: HPoint) -> float:
    return float(dist_many(p.array, q.array))


def log_many(base, target):
    """Tangent vectors at base pointing to target, of Riemannian length
    dist(base, target).  Shapes (..., 3)."""
    base = np.asarray(base, dtype=float)
    target = np.asarray(target, dtype=float)
    bt = base[..., 2]
    # normalize so the base sits at (0, 0, 1)
    wx = (target[..., 0] - base[..., 0]) / bt
    wy = (target[..., 1] - base[..., 1]) / bt
    tau = target[..., 2] / bt
    xi = np.hypot(wx, wy)
    d = dist_many(base, target)
    vertical = xi <= 1e-15 * tau
    xi_s = np.where(vertical, 1.0, xi)
    # circle through (0,1) and (xi,tau) with center (c0, 0) on the boundary
    c0 = (xi_s * xi_s + tau * tau - 1.0) / (2.0 * xi_s)
    s = d / np.sqrt(1.0 + c0 * c0)
    vx = np.where(vertical, 0.0, wx / xi_s * s)
    vy = np.where(vertical, 0.0, wy / xi_s * s)
    vt = np.where(vertical, np.log(tau), c0 * s)
    return np.stack([vx, vy, vt], axis=-1) * bt[..., None]


def exp_many(base, vec):
    """Geodesic exponential; inverse of log_many.  Shapes (..., 3)."""
    base = np.asarray(base, dtype=float)
    vec = np.asarray(vec, dtype=float)
    bt = base[..., 2]
    hx = vec[..., 0] / bt
    hy = vec[..., 1] / bt
    hv = vec[..., 2] / bt
    h = np.hypot(hx, hy)
    d = np.sqrt(h * h + hv * hv)
    stay = d == 0.0
    vertical = h <= 1e-15 * np.abs(hv)
    t_vert = np.exp(np.sign(hv) * d)
    h_s = np.where(vertical | stay, 1.0, h)
    c0 = hv / h_s
    rr = np.sqrt(1.0 + c0 * c0)
    # angle on the circle of center (c0, 0): pi/2 + atan(c0) at the base,
    # moving toward 0 as the arclength grows
    theta0 = np.arctan2(1.0, -c0)
    theta = 2.0 * np.arctan(np.tan(0.5 * theta0) * np.exp(-d))
    xi = c0 + rr * np.cos(theta)
    tau = rr * np.sin(theta)
    ex = hx / h_s
    ey = hy / h_s
    px = np.where(vertical | stay, 0.0, ex * xi)
    py = np.where(vertical | stay, 0.0, ey * xi)
    pt = np.where(stay, 1.0, np.where(vertical, t_vert, tau))
    return np.stack(
        [base[..., 0] + bt * px, base[..., 1] + bt * py, bt * pt], axis=-1
    )


def log_map(base: HPoint, target: HPoint) -> np.ndarray:
    return log_many(base.array, target.array)


def exp_map(base: HPoint, vec) -> HPoint:
    return HPoint.from_array(exp_many(base.array, np.asarray(vec, dtype=float)))


def geodesic_point(p: HPoint, q: HPoint, s: float) -> HPoint:
    """Point at parameter s on the geodesic from p (s=0) to q (s=1),
    parametrized proportionally to arclength.  Endpoints are exact."""
    if s == 0.0:
        return p
    if s == 1.0:
        return q
    return exp_map(p, s * log_map(p, q))


def midpoint_many(p, q):
    return exp_many(p, 0.5 * log_many(p, q))


@dataclass(frozen=True)
class MobiusIsometry:
    """Element of PSL(2, C) acting on the upper half-space.

    Entries are normalized to determinant 1 on construction; the matrices
    m and -m describe the same isometry and compare equal under
    almost_equal.
    """

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        a = complex(self.a)
        b = complex(self.b)
        c = complex(self.c)
        d = complex(self.d)
        det = a * d - b * c
        # the computed det of a true det-1 matrix is only good to the
        # cancellation noise of a*d - b*c; below that floor the value
        # carries no information, so neither rescaling nor a singularity
        # verdict is justified for large products
        mag = abs(a * d) + abs(b * c)
        noise = 1e-13 * max(1.0, mag)
        if abs(det) <= noise:
            if mag < 1e3:
                raise ValueError("matrix is singular")
        elif abs(det - 1.0) > noise:
            s = cmath.sqrt(det)
            a, b, c, d = a / s, b / s, c / s, d / s
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @classmethod
    def identity(cls) -> "MobiusIsometry":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_matrix(cls, m) -> "MobiusIsometry":
        m = np.asarray(m, dtype=complex)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def trace(self) -> complex:
        return self.a + self.d

    @property
    def is_real(self) -> bool:
        return float(np.abs(self.matrix.imag).max()) < 1e-12

    def __matmul__(self, other: "MobiusIsometry") -> "MobiusIsometry":
        return MobiusIsometry(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inv(self) -> "MobiusIsometry":
        return MobiusIsometry(self.d, -self.b, -self.c, self.a)

    def almost_equal(self, other: "MobiusIsometry", tol: float = 1e-9) -> bool:
        m = self.matrix
        n = other.matrix
        return min(np.abs(m - n).max(), np.abs(m + n).max()) < tol

    def apply_many(self, pts) -> np.ndarray:
        """Poincare extension applied to a stack of points (..., 3)."""
        pts = np.asarray(pts, dtype=float)
        z = pts[..., 0] + 1j * pts[..., 1]
        t = pts[..., 2]
        num = self.a * z + self.b
        den = self.c * z + self.d
        dd = den.real * den.real + den.imag * den.imag
        cc = self.c.real * self.c.real + self.c.imag * self.c.imag
        big = dd + cc * t * t
        znew = (num * np.conj(den) + self.a * np.conj(self.c) * t * t) / big
        tnew = t / big
        return np.stack([znew.real, znew.imag, tnew], axis=-1)

    def apply(self, p: HPoint) -> HPoint:
        return HPoint.from_array(self.apply_many(p.array))

    def boundary_apply(self, z) -> complex:
        """Mobius action on the sphere at infinity; INF is accepted."""
        if cmath.isinf(complex(z)):
            return self.a / self.c if self.c != 0 else INF
        z = complex(z)
        den = self.c * z + self.d
        if den == 0:
            return INF
        return (self.a * z + self.b) / den

    def halfplane_apply(self, w: complex) -> complex:
        """Action on the slice y = 0 in its coordinate x + i t.  Only
        correct for real matrices, which preserve that slice."""
        den = self.c * w + self.d
        return (self.a * w + self.b) / den

    def classify(self, tol: float = 1e-8) -> IsometryClass:
        tr = self.trace
        note = "parabolic-or-identity" if abs(abs(tr) - 2.0) < tol else ""
        m = self.matrix
        eye = np.eye(2)
        if min(np.abs(m - eye).max(), np.abs(m + eye).max()) < tol:
            return IsometryClass("identity", 0.0, note)
        if min(abs(tr - 2.0), abs(tr + 2.0)) < tol:
            return IsometryClass("parabolic", 0.0, note)
        if abs(tr.imag) < tol and abs(tr.real) < 2.0:
            return IsometryClass("elliptic", 0.0, note)
        mu = tr / 2.0
        lam = mu + cmath.sqrt(mu * mu - 1.0)
        if abs(lam) < 1.0:
            lam = mu - cmath.sqrt(mu * mu - 1.0)
        # eigenvalue modulus sets the metric displacement; any rotation
        # part is invisible to the infimum of dist(x, gx)
        return IsometryClass("hyperbolic-loxodromic", 2.0 * math.log(abs(lam)), note)

    def translation_length(self, tol: float = 1e-8) -> float:
        return self.classify(tol).translation_length

    def fixed_points(self) -> tuple[complex, complex]:
        """(repelling, attracting) boundary fixed points of a loxodromic."""
        a, b, c, d = self.a, self.b, self.c, self.d
        # c must be compared against the matrix scale: for a near-diagonal
        # product |c| is cancellation residue, and the quadratic formula
        # below would divide noise by noise
        scale = abs(a) + abs(d)
        if abs(c) < 1e-12 * scale:
            other = b / (d - a) if abs(d - a) > 1e-12 * scale else INF
            if abs(a) > abs(d):
                return other, INF
            return INF, other
        disc = cmath.sqrt(self.trace * self.trace - 4.0)
        z1 = ((a - d) + disc) / (2.0 * c)
        z2 = ((a - d) - disc) / (2.0 * c)
        # |g'(z)| = |cz + d|^(-2) is < 1 exactly at the attracting point
        if abs(c * z1 + d) > abs(c * z2 + d):
            return z2, z1
        return z1, z2

    def to_row(self) -> list[float]:
        return [
            self.a.real, self.a.imag, self.b.real, self.b.imag,
            self.c.real, self.c.imag, self.d.real, self.d.imag,
        ]

    @classmethod
    def from_row(cls, row) -> "MobiusIsometry":
        row = [float(v) for v in row]
        if len(row) != 8:
            raise ValueError("expected 8 fields")
        return cls(
            complex(row[0], row[1]), complex(row[2], row[3]),
            complex(row[4], row[5]), complex(row[6], row[7]),
        )


def frame(p, q) -> MobiusIsometry:
    """Isometry carrying the vertical axis to the directed geodesic with
    ideal endpoints (p, q): 0 goes to p, infinity to q.  frame(0, INF) is
    exactly the identity, and real endpoints give a real matrix."""
    p = complex(p)
    q = complex(q)
    pinf = cmath.isinf(p)
    qinf = cmath.isinf(q)
    if pinf and qinf:
        raise ValueError("endpoints must be distinct")
    if qinf:
        m = MobiusIsometry(1.0, -p, 0.0, 1.0)
    elif pinf:
        m = MobiusIsometry(0.0, -1.0, 1.0, -q)
    else:
        if p == q:
            raise ValueError("endpoints must be distinct")
        # pick the sign that keeps real input real (positive determinant)
        if (p - q).imag == 0.0 and (p - q).real < 0.0:
            m = MobiusIsometry(-1.0, p, 1.0, -q)
        else:
            m = MobiusIsometry(1.0, -p, 1.0, -q)
    return m.inv()


def translation_along(p, q, length: float) -> MobiusIsometry:
    """Loxodromic translating by `length` from p toward q."""
    f = frame(p, q)
    h = math.exp(0.5 * length)
    return f @ MobiusIsometry(h, 0.0, 0.0, 1.0 / h) @ f.inv()


def rotation_about(p, q, angle: float) -> MobiusIsometry:
    """Elliptic rotation by `angle` about the geodesic from p to q."""
    f = frame(p, q)
    e = cmath.exp(0.5j * angle)
    return f @ MobiusIsometry(e, 0.0, 0.0, 1.0 / e) @ f.inv()


@dataclass(frozen=True)
class GeodesicAxis:
    """Directed geodesic of the plane slice y = 0 with Fermi coordinates.

    `chart` carries the vertical axis to the geodesic.  A point at
    (param, offset) lies at signed distance `offset` from the axis, with
    foot at arclength `param`; offset > 0 is the side that 0 < Re w maps
    to under the chart.
    """

    chart: MobiusIsometry

    def __post_init__(self):
        if not self.chart.is_real:
            raise ValueError("axis chart must preserve the plane slice")

    @classmethod
    def through(cls, p, q) -> "GeodesicAxis":
        return cls(frame(p, q))

    @classmethod
    def of_isometry(cls, g: MobiusIsometry) -> "GeodesicAxis":
        rep, att = g.fixed_points()
        return cls(frame(rep, att))

    def point_at(self, param: float, offset: float = 0.0) -> HPoint:
        psi = float(gudermann(offset))
        w = cmath.exp(complex(param, 0.5 * math.pi - psi))
        return HPoint.from_halfplane(self.chart.halfplane_apply(w))

    def project(self, p: HPoint) -> tuple[float, float]:
        """(param, offset) Fermi coordinates of a point of the slice."""
        w = self.chart.inv().halfplane_apply(p.halfplane)
        if w.imag <= 0:
            raise ValueError("point does not lie in the chart image")
        param = 0.5 * math.log(w.real * w.real + w.imag * w.imag)
        offset = math.asinh(w.real / w.imag)
        return param, offset
