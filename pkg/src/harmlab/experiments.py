"""Energy probes along pinching rays and cusp certificates.

The properness story is quantitative: along a ray that pinches one
decomposition curve, the minimized energy must blow up, and a
certificate of parabolic behavior must cap a test family's energy
instead.  This module drives the harmonic-map solver along such
families, checks certificates by direct sampling, locates near-minima
over coordinate grids, and serializes everything as flat files a
plotting script can pick up unchanged.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from .harmonic import harmonic_map
from .hypgeo import HPoint, MobiusIsometry, dist_many, geodesic_point
from .surfgrp import (
    EnumerationCapError,
    Representation,
    cyclically_equal,
    length_spectrum,
    word_inverse,
)
from .teich import FNCoordinates, PinchingRay, pinching_ray, systole

__all__ = [
    "CSV_HEADER",
    "DecayCheckError",
    "DecayReport",
    "MinSetReport",
    "ParabolicCertificate",
    "ProbeRow",
    "emit_report",
    "main",
    "min_set",
    "parabolic_energy_family",
    "parse_report",
    "probe_properness",
    "synthetic_parabolic_certificate",
    "synthetic_parabolic_rep",
]

CSV_HEADER = "t,length_c,systole,energy,lipschitz,iters,converged"


class DecayCheckError(RuntimeError):
    """A certificate failed its decay inequality at a sampled point."""

    def __init__(self, t, measured, allowed):
        self.t = float(t)
        self.measured = float(measured)
        self.allowed = float(allowed)
        super().__init__(
            f"decay check failed at t={self.t}: displacement "
            f"{self.measured} exceeds bound {self.allowed}"
        )


@dataclass(frozen=True)
class DecayReport:
    passed: bool
    samples: int
    worst_t: float
    worst_value: float
    worst_bound: float


@dataclass(frozen=True)
class ParabolicCertificate:
    """Geodesic ray plus a decay bound for one curve's holonomy.

    The ray is gamma(t) = frame(base scaled e^t in height); the claim
    is dist(gamma(t), rho(curve) gamma(t)) <= C e^(-delta t) for
    t in [0, t_max], which forces rho(curve) to be parabolic with the
    ray running into its fixed point."""

    curve: tuple
    frame: MobiusIsometry
    base: HPoint
    C: float
    delta: float
    t_max: float

    def __post_init__(self):
        object.__setattr__(self, "curve", tuple(int(k) for k in self.curve))
        if not self.curve:
            raise ValueError("certificate needs a nonempty curve word")
        if not (self.C > 0 and self.delta > 0 and self.t_max > 0):
            raise ValueError("C, delta, t_max must all be positive")

    def point(self, t) -> HPoint:
        """Ray point at parameter t (vectorized over array t)."""
        t = np.asarray(t, dtype=float)
        raw = np.stack(
            [
                np.broadcast_to(self.base.x, t.shape),
                np.broadcast_to(self.base.y, t.shape),
                self.base.t * np.exp(t),
            ],
            axis=-1,
        )
        out = self.frame.apply_many(raw)
        if t.ndim == 0:
            return HPoint.from_array(out)
        return out

    def bound(self, t):
        return self.C * np.exp(-self.delta * np.asarray(t, dtype=float))

    def decay_check(self, rep: Representation, samples: int = 257) -> DecayReport:
        """Sample the displacement along the ray against the bound.

        Applying a float matrix to a point at height e^t carries a
        displacement noise floor of about 1e-13 e^t, so the bound gets
        that much slack; a genuinely non-parabolic holonomy overshoots
        it by many orders."""
        if samples < 2:
            raise ValueError("need at least two samples")
        iso = rep.evaluate(self.curve)
        ts = np.linspace(0.0, self.t_max, samples)
        pts = self.point(ts)
        disp = dist_many(pts, iso.apply_many(pts))
        allowed = self.bound(ts) * (1.0 + 1e-9) + 1e-13 * np.exp(ts)
        k = int(np.argmax(disp / allowed))
        passed = bool(disp[k] <= allowed[k])
        return DecayReport(
            passed=passed,
            samples=samples,
            worst_t=float(ts[k]),
            worst_value=float(disp[k]),
            worst_bound=float(allowed[k]),
        )

    def to_json_dict(self) -> dict:
        return {
            "curve": list(self.curve),
            "ray": {
                "isometry": self.frame.to_row(),
                "base": [self.base.x, self.base.y, self.base.t],
            },
            "C": self.C,
            "delta": self.delta,
            "t_max": self.t_max,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ParabolicCertificate":
        ray = data["ray"]
        return cls(
            curve=tuple(int(k) for k in data["curve"]),
            frame=MobiusIsometry.from_row(ray["isometry"]),
            base=HPoint.from_array([float(v) for v in ray["base"]]),
            C=float(data["C"]),
            delta=float(data["delta"]),
            t_max=float(data["t_max"]),
        )


def synthetic_parabolic_rep() -> Representation:
    """Genus-2 representation whose separating curve is parabolic.

    A punctured-torus group with unipotent commutator, doubled: the
    first handle pair carries (B, A), the second (A, B), so the single
    relator [g1,g2][g3,g4] collapses exactly and the separating curve
    maps to the commutator, conjugated here to z -> z + 1."""
    a = np.array([[1.0, 1.0], [1.0, 2.0]])
    b = np.array([[1.0, -1.0], [-1.0, 2.0]])
    lam = 6.0 ** -0.5
    g = np.array([[0.0, -lam], [1.0 / lam, 0.0]])
    ginv = np.array([[0.0, lam], [-1.0 / lam, 0.0]])

    def conj(m):
        return MobiusIsometry(*np.asarray(g @ m @ ginv, dtype=complex).ravel())

    gens = (conj(b), conj(a), conj(a), conj(b))
    return Representation(2, gens, {"constructor": "synthetic_parabolic"})


def synthetic_parabolic_certificate(t_max: float = 12.0) -> ParabolicCertificate:
    """Certificate for the synthetic representation: the vertical ray
    from height 1 toward the fixed point of z -> z + 1, where the
    displacement 2 asinh(e^-t / 2) sits below e^-t."""
    return ParabolicCertificate(
        curve=(1, 2, -1, -2),
        frame=MobiusIsometry.identity(),
        base=HPoint(0.0, 0.0, 1.0),
        C=1.0,
        delta=1.0,
        t_max=float(t_max),
    )


# ------------------------------------------------------------ probe rows


@dataclass(frozen=True)
class ProbeRow:
    """One energy measurement along a family of coordinates."""

    t: float
    length_c: float
    systole: float
    energy: float
    lipschitz: float
    iters: int
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "length_c", float(self.length_c))
        object.__setattr__(self, "systole", float(self.systole))
        object.__setattr__(self, "energy", float(self.energy))
        object.__setattr__(self, "lipschitz", float(self.lipschitz))
        object.__setattr__(self, "iters", int(self.iters))
        object.__setattr__(self, "converged", bool(self.converged))
        for name in ("t", "length_c", "systole", "energy", "lipschitz"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def _check_grid(t_grid):
    ts = [float(t) for t in t_grid]
    if not ts:
        raise ValueError("t grid is empty")
    if min(ts) <= 0:
        raise ValueError("t grid must be positive")
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t grid must be strictly decreasing")
    return ts


def probe_properness(rep: Representation, ray: PinchingRay, t_grid,
                     resolution: int = 2, tol: float = 1e-8,
                     max_iter: int = 500, out=None) -> list:
    """Minimized energy at each step of a pinching ray.

    Each row records the pinched curve length (the parameter itself),
    the systole of the step's coordinates, and the solver outcome.  The
    previous minimizer seeds the next step whenever the mesh sizes
    agree.  Non-converged steps are flagged in their row and the run
    continues."""
    ts = _check_grid(t_grid)
    rows = []
    warm = None
    for t in ts:
        fn_t = ray(t)
        mesh, u, rpt = harmonic_map(
            rep, fn_t, resolution=resolution, tol=tol,
            max_iter=max_iter, warm=warm,
        )
        warm = u
        rows.append(ProbeRow(
            t=t,
            length_c=t,
            systole=systole(fn_t),
            energy=rpt.energy,
            lipschitz=rpt.lipschitz_estimate,
            iters=rpt.iterations,
            converged=rpt.converged,
        ))
    if out is not None:
        emit_report(rows, out)
    return rows


# ------------------------------------------------- parabolic energy cap


def _strip_energy(iso: MobiusIsometry, cert: ParabolicCertificate,
                  y_top: float, y0: float, n_around: int,
                  level_step: float) -> tuple:
    """Flat-annulus quadrature of the certificate test map.

    The domain is R/Z x [y0, y_top); row j at height y maps to the ray
    point at L(y) = log(y / y0) / delta, spread toward its iso-image
    around the circle direction.  Horizontal edges carry weight
    band/dx, vertical edges dx/dy, the flat cotangent weights of a
    rectangle grid."""
    L_top = math.log(y_top / y0) / cert.delta
    n_rows = max(2, int(math.ceil(L_top / level_step)) + 1)
    Ls = np.linspace(0.0, L_top, n_rows)
    ys = y0 * np.exp(cert.delta * Ls)
    axis_pts = cert.point(Ls)
    moved = iso.apply_many(axis_pts)
    dx = 1.0 / n_around
    # grid[j, i] walks the geodesic from the ray point to its image;
    # column n_around is the wrap, reached by applying iso to column 0
    grid = np.empty((n_rows, n_around + 1, 3))
    for j in range(n_rows):
        p = HPoint.from_array(axis_pts[j])
        q = HPoint.from_array(moved[j])
        for i in range(n_around):
            grid[j, i] = geodesic_point(p, q, i / n_around).array
    grid[:, n_around] = iso.apply_many(grid[:, 0])

    bands = np.empty(n_rows)
    bands[1:-1] = 0.5 * (ys[2:] - ys[:-2])
    bands[0] = 0.5 * (ys[1] - ys[0])
    bands[-1] = 0.5 * (ys[-1] - ys[-2])
    dys = ys[1:] - ys[:-1]

    d_h = dist_many(grid[:, :-1].reshape(-1, 3), grid[:, 1:].reshape(-1, 3))
    d_h = d_h.reshape(n_rows, n_around)
    d_v = dist_many(grid[:-1, :-1].reshape(-1, 3), grid[1:, :-1].reshape(-1, 3))
    d_v = d_v.reshape(n_rows - 1, n_around)

    energy = 0.5 * float(
        ((bands / dx)[:, None] * d_h**2).sum()
        + ((dx / dys)[:, None] * d_v**2).sum()
    )
    lip = max(
        float((d_h / dx).max()),
        float((d_v / dys[:, None]).max()),
    )
    return energy, lip


def parabolic_energy_family(rep: Representation, cert: ParabolicCertificate,
                            fn: FNCoordinates, t_grid, resolution: int = 2,
                            tol: float = 1e-8, max_iter: int = 500,
                            n_around: int = 16, level_step: float = 0.125,
                            uniform_margin: float = 0.1) -> list:
    """Uniformly bounded test-map energies along a pinching family.

    The certificate is checked by sampling first; a failure aborts with
    the offending sample.  The base coordinates get one minimization,
    and each deeper step adds the energy of the certificate's test map
    on the growing flat annulus glued into the pinching collar.  The
    family witnesses non-properness, so the run asserts the resulting
    energies stay within uniform_margin of the base value."""
    report = cert.decay_check(rep)
    if not report.passed:
        raise DecayCheckError(report.worst_t, report.worst_value,
                              report.worst_bound)
    curve_index = None
    for i in range(len(fn.lengths)):
        w = fn.curve_word(i)
        if cyclically_equal(cert.curve, w) or \
                cyclically_equal(cert.curve, word_inverse(w)):
            curve_index = i
            break
    if curve_index is None:
        raise ValueError("certificate curve is not a decomposition curve")
    ts = _check_grid(t_grid)
    base_len = fn.lengths[curve_index]
    if ts[0] > base_len * (1.0 + 1e-12):
        raise ValueError("t grid starts above the base curve length")
    y0 = 1.0 / base_len
    iso = rep.evaluate(cert.curve)

    _, _, base = harmonic_map(rep, fn, resolution=resolution, tol=tol,
                              max_iter=max_iter)
    rows = []
    for t in ts:
        fn_t = fn.with_length(curve_index, min(t, base_len))
        y_top = 1.0 / t
        if y_top > y0 * (1.0 + 1e-12):
            e_strip, k_strip = _strip_energy(
                iso, cert, y_top, y0, n_around, level_step
            )
        else:
            e_strip, k_strip = 0.0, 0.0
        rows.append(ProbeRow(
            t=t,
            length_c=t,
            systole=systole(fn_t),
            energy=base.energy + e_strip,
            lipschitz=max(base.lipschitz_estimate, k_strip),
            iters=base.iterations,
            converged=base.converged,
        ))
    cap = (1.0 + uniform_margin) * rows[0].energy if ts[0] >= base_len \
        else (1.0 + uniform_margin) * base.energy
    worst = max(r.energy for r in rows)
    if worst > cap:
        raise RuntimeError(
            f"energy family is not uniformly bounded: {worst} > {cap}"
        )
    return rows


# ------------------------------------------------------------- min sets


@dataclass(frozen=True)
class MinSetReport:
    """Grid cells whose energy sits within margin of the minimum."""

    m0: float
    members: tuple
    energies: tuple
    converged: tuple

    def subset(self, grid):
        return [grid[i] for i in self.members]


def min_set(rep: Representation, grid, margin: float, resolution: int = 2,
            tol: float = 1e-8, max_iter: int = 500) -> MinSetReport:
    """Scan a grid of coordinates for the near-minimal energy cells.

    m0 is taken over converged cells only; membership compares every
    finite energy against m0 + margin, so an infinite margin returns
    the whole grid.  All cells failing to converge is an error."""
    grid = list(grid)
    if not grid:
        raise ValueError("grid is empty")
    energies = []
    converged = []
    warm = None
    for fn in grid:
        mesh, u, rpt = harmonic_map(
            rep, fn, resolution=resolution, tol=tol,
            max_iter=max_iter, warm=warm,
        )
        warm = u
        energies.append(rpt.energy)
        converged.append(rpt.converged)
    if not any(converged):
        raise RuntimeError("no grid cell converged")
    m0 = min(e for e, c in zip(energies, converged) if c)
    members = tuple(
        i for i, e in enumerate(energies) if e <= m0 + margin
    )
    return MinSetReport(
        m0=m0,
        members=members,
        energies=tuple(energies),
        converged=tuple(converged),
    )


# ------------------------------------------------------------ flat files


def emit_report(rows, out) -> list:
    """Write probe rows as CSV plus one two-column .dat per plotted
    quantity.  Floats are emitted with repr so a parse round-trips
    bit for bit."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to emit")
    _check_grid([r.t for r in rows])
    out = str(out)
    stem = out[:-4] if out.endswith(".csv") else out
    csv_path = stem + ".csv"
    with open(csv_path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.t!r},{r.length_c!r},{r.systole!r},{r.energy!r},"
                f"{r.lipschitz!r},{r.iters},{1 if r.converged else 0}\n"
            )
    paths = [csv_path]
    for col in ("energy", "systole", "lipschitz"):
        path = f"{stem}_{col}.dat"
        with open(path, "w") as fh:
            fh.write(f"# t {col}\n")
            for r in rows:
                fh.write(f"{r.t!r} {getattr(r, col)!r}\n")
        paths.append(path)
    return paths


def parse_report(path) -> list:
    """Read back a CSV written by emit_report."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            f = line.split(",")
            if len(f) != 7:
                raise ValueError(f"expected 7 fields, got {len(f)}")
            rows.append(ProbeRow(
                t=float(f[0]), length_c=float(f[1]), systole=float(f[2]),
                energy=float(f[3]), lipschitz=float(f[4]),
                iters=int(f[5]), converged=bool(int(f[6])),
            ))
    return rows


# ------------------------------------------------------------------ CLI


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _geometric_grid(tmax: float, tmin: float, steps: int) -> list:
    if steps < 2:
        raise ValueError("steps must be at least 2")
    if not 0 < tmin < tmax:
        raise ValueError("need 0 < tmin < tmax")
    q = tmin / tmax
    return [tmax * q ** (k / (steps - 1)) for k in range(steps)]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="harmlab",
        description="harmonic map energy experiments on hyperbolic surfaces",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("probe", help="energy along a pinching ray")
    p.add_argument("--rep", required=True, help="representation JSON file")
    p.add_argument("--fn", required=True, help="base coordinates JSON file")
    p.add_argument("--pinch", type=int, required=True,
                   help="index of the decomposition curve to pinch")
    p.add_argument("--tmin", type=float, required=True)
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--steps", type=int, required=True,
                   help="geometric steps from tmax down to tmin")
    p.add_argument("--resolution", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("parabolic", help="certificate-capped energy family")
    p.add_argument("--rep", required=True)
    p.add_argument("--cert", required=True, help="certificate JSON file")
    p.add_argument("--fn", required=True)
    p.add_argument("--tgrid", required=True,
                   help="comma-separated decreasing curve lengths")
    p.add_argument("--resolution", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True)

    p = sub.add_parser("minset", help="near-minimal cells of a grid")
    p.add_argument("--rep", required=True)
    p.add_argument("--grid", required=True,
                   help="JSON list of coordinate dicts")
    p.add_argument("--margin", type=float, required=True)
    p.add_argument("--resolution", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("spectrum", help="length spectrum scan")
    p.add_argument("--rep", required=True)
    p.add_argument("--maxword", type=int, required=True)
    p.add_argument("--out", required=True, help="output CSV path")

    args = ap.parse_args(argv)
    rep = Representation.from_json_dict(_load_json(args.rep))

    if args.command == "probe":
        fn = FNCoordinates.from_json_dict(_load_json(args.fn))
        ray = pinching_ray(fn, args.pinch)
        grid = _geometric_grid(args.tmax, args.tmin, args.steps)
        rows = probe_properness(
            rep, ray, grid, resolution=args.resolution, tol=args.tol,
            out=args.out,
        )
        if not all(r.converged for r in rows):
            return 2
        return 0

    if args.command == "parabolic":
        fn = FNCoordinates.from_json_dict(_load_json(args.fn))
        cert = ParabolicCertificate.from_json_dict(_load_json(args.cert))
        grid = [float(v) for v in args.tgrid.split(",")]
        try:
            rows = parabolic_energy_family(
                rep, cert, fn, grid,
                resolution=args.resolution, tol=args.tol,
            )
        except DecayCheckError as err:
            print(err, file=sys.stderr)
            return 3
        emit_report(rows, args.out)
        if not all(r.converged for r in rows):
            return 2
        return 0

    if args.command == "minset":
        doc = _load_json(args.grid)
        if isinstance(doc, dict):
            doc = doc["grid"]
        grid = [FNCoordinates.from_json_dict(d) for d in doc]
        try:
            report = min_set(
                rep, grid, args.margin,
                resolution=args.resolution, tol=args.tol,
            )
        except RuntimeError as err:
            print(err, file=sys.stderr)
            return 2
        with open(args.out, "w") as fh:
            json.dump({
                "m0": report.m0,
                "margin": args.margin,
                "members": list(report.members),
                "energies": list(report.energies),
                "converged": [1 if c else 0 for c in report.converged],
            }, fh, indent=2)
            fh.write("\n")
        return 0

    if args.command == "spectrum":
        try:
            spec = length_spectrum(rep, args.maxword)
        except EnumerationCapError as err:
            print(err, file=sys.stderr)
            return 2
        with open(args.out, "w") as fh:
            fh.write("length,word\n")
            for word, length in spec:
                fh.write(f"{length!r},{'.'.join(str(k) for k in word)}\n")
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
