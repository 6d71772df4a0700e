import cmath
import math

import numpy as np
import pytest

from harmlab.hypgeo import (
    INF,
    GeodesicAxis,
    HPoint,
    MobiusIsometry,
    dist,
    dist_many,
    exp_many,
    exp_map,
    frame,
    geodesic_point,
    gudermann,
    gudermann_inv,
    log_many,
    log_map,
    midpoint_many,
    rotation_about,
    translation_along,
)


def rand_points(rng, n, spread=2.0):
    xy = spread * rng.normal(size=(n, 2))
    t = np.exp(0.8 * rng.normal(size=n))
    return np.column_stack([xy, t])


def rand_isometry(rng, real=False):
    while True:
        m = rng.normal(size=(2, 2))
        if not real:
            m = m + 1j * rng.normal(size=(2, 2))
        det = np.linalg.det(m)
        if abs(det) < 0.1:
            continue
        if real and det.real < 0:
            m[0] = -m[0]  # stay inside SL(2, R) after normalization
        return MobiusIsometry.from_matrix(m)


def polyline_length(samples):
    # Riemannian length of a polyline, midpoint rule on |dx| / t.  This
    # uses only the metric tensor, independently of the distance formula.
    seg = np.diff(samples, axis=0)
    tm = 0.5 * (samples[1:, 2] + samples[:-1, 2])
    return float(np.sum(np.linalg.norm(seg, axis=1) / tm))


# ---------------------------------------------------------------- distance


def test_dist_known_values():
    j = HPoint(0.0, 0.0, 1.0)
    # vertical geodesics have exactly logarithmic distance
    for s in (0.3, 1.0, 5.0):
        assert dist(j, HPoint(0.0, 0.0, math.exp(s))) == pytest.approx(s)
        assert dist(j, HPoint(0.0, 0.0, math.exp(-s))) == pytest.approx(s)
    # endpoints of the unit semicircle at height 1
    want = 2.0 * math.asinh(1.0)
    assert dist(HPoint(-1, 0, 1), HPoint(1, 0, 1)) == pytest.approx(want)
    assert dist(j, j) == 0.0


def test_dist_metric_axioms():
    rng = np.random.default_rng(7)
    p = rand_points(rng, 200)
    q = rand_points(rng, 200)
    r = rand_points(rng, 200)
    dpq = dist_many(p, q)
    assert np.all(dpq > 0)
    np.testing.assert_allclose(dpq, dist_many(q, p), rtol=1e-12)
    assert np.all(dpq <= dist_many(p, r) + dist_many(r, q) + 1e-12)


def test_dist_matches_length_integral():
    # independent oracle: integrate |gamma'| / t along the geodesic
    rng = np.random.default_rng(11)
    s = np.linspace(0.0, 1.0, 4001)
    for _ in range(10):
        p, q = rand_points(rng, 2)
        path = exp_many(p[None, :], s[:, None] * log_many(p, q)[None, :])
        assert polyline_length(path) == pytest.approx(
            float(dist_many(p, q)), rel=1e-6
        )


def test_perturbed_paths_are_longer():
    rng = np.random.default_rng(13)
    s = np.linspace(0.0, 1.0, 801)
    bump = np.sin(math.pi * s)
    for _ in range(10):
        p, q = rand_points(rng, 2)
        path = exp_many(p[None, :], s[:, None] * log_many(p, q)[None, :])
        wob = path.copy()
        wob[:, 1] += 0.1 * bump
        assert polyline_length(wob) > float(dist_many(p, q))


# ---------------------------------------------------------------- geodesics


def test_geodesic_endpoints_exact():
    p = HPoint(0.3, -1.2, 0.7)
    q = HPoint(-2.0, 0.4, 3.1)
    assert geodesic_point(p, q, 0.0) is p
    assert geodesic_point(p, q, 1.0) is q


def test_geodesic_midpoint_frozen():
    m = geodesic_point(HPoint(-1, 0, 1), HPoint(1, 0, 1), 0.5)
    np.testing.assert_allclose(m.array, [0.0, 0.0, math.sqrt(2.0)], atol=1e-12)


def test_geodesic_parametrization():
    rng = np.random.default_rng(3)
    for _ in range(25):
        p, q = rand_points(rng, 2)
        hp, hq = HPoint.from_array(p), HPoint.from_array(q)
        d = dist(hp, hq)
        s1, s2 = sorted(rng.uniform(0.0, 1.0, size=2))
        g1 = geodesic_point(hp, hq, s1)
        g2 = geodesic_point(hp, hq, s2)
        # proportional to arclength, and reversal symmetry
        assert dist(g1, g2) == pytest.approx((s2 - s1) * d, abs=1e-9)
        rev = geodesic_point(hq, hp, 1.0 - s1)
        np.testing.assert_allclose(g1.array, rev.array, atol=1e-9)


def test_midpoint_many_matches_scalar():
    rng = np.random.default_rng(5)
    p = rand_points(rng, 40)
    q = rand_points(rng, 40)
    mid = midpoint_many(p, q)
    for i in range(40):
        want = geodesic_point(
            HPoint.from_array(p[i]), HPoint.from_array(q[i]), 0.5
        )
        np.testing.assert_allclose(mid[i], want.array, atol=1e-10)
        assert float(dist_many(mid[i], p[i])) == pytest.approx(
            float(dist_many(mid[i], q[i])), abs=1e-9
        )


# ---------------------------------------------------------------- exp / log


def test_exp_log_roundtrip():
    rng = np.random.default_rng(17)
    base = rand_points(rng, 300)
    target = rand_points(rng, 300)
    v = log_many(base, target)
    np.testing.assert_allclose(exp_many(base, v), target, atol=1e-9)
    # Riemannian norm of the log equals the distance
    np.testing.assert_allclose(
        np.linalg.norm(v, axis=1) / base[:, 2],
        dist_many(base, target),
        rtol=1e-10,
    )


def test_log_exp_roundtrip():
    rng = np.random.default_rng(19)
    base = rand_points(rng, 300)
    v = rng.normal(size=(300, 3)) * base[:, 2:]
    np.testing.assert_allclose(log_many(base, exp_many(base, v)), v, atol=1e-9)


def test_exp_unit_speed_and_vertical():
    rng = np.random.default_rng(23)
    j = HPoint(0.0, 0.0, 1.0)
    for _ in range(50):
        v = rng.normal(size=3)
        d = float(np.linalg.norm(v))
        assert dist(j, exp_map(j, v)) == pytest.approx(d, rel=1e-10)
    up = exp_map(j, np.array([0.0, 0.0, 2.0]))
    np.testing.assert_allclose(up.array, [0.0, 0.0, math.exp(2.0)], rtol=1e-12)
    down = exp_map(j, np.array([0.0, 0.0, -2.0]))
    np.testing.assert_allclose(down.array, [0.0, 0.0, math.exp(-2.0)], rtol=1e-12)


# ---------------------------------------------------------------- isometries


def test_apply_known_values():
    j = HPoint(0.0, 0.0, 1.0)
    shear = MobiusIsometry(1.0, 0.0, 1.0, 1.0)
    np.testing.assert_allclose(shear.apply(j).array, [0.5, 0.0, 0.5], atol=1e-15)
    assert dist(j, shear.apply(j)) == pytest.approx(math.acosh(1.5))
    shift = MobiusIsometry(1.0, 1.0, 0.0, 1.0)
    np.testing.assert_allclose(shift.apply(j).array, [1.0, 0.0, 1.0], atol=1e-15)
    dil = MobiusIsometry(math.exp(0.5), 0.0, 0.0, math.exp(-0.5))
    np.testing.assert_allclose(dil.apply(j).array, [0.0, 0.0, math.e], rtol=1e-15)
    inversion = MobiusIsometry(0.0, -1.0, 1.0, 0.0)
    np.testing.assert_allclose(inversion.apply(j).array, j.array, atol=1e-15)


def test_apply_preserves_distance():
    rng = np.random.default_rng(29)
    p = rand_points(rng, 100)
    q = rand_points(rng, 100)
    for _ in range(20):
        g = rand_isometry(rng)
        np.testing.assert_allclose(
            dist_many(g.apply_many(p), g.apply_many(q)),
            dist_many(p, q),
            rtol=1e-9,
            atol=1e-12,
        )


def test_apply_is_group_action():
    rng = np.random.default_rng(31)
    p = rand_points(rng, 50)
    for _ in range(20):
        g = rand_isometry(rng)
        h = rand_isometry(rng)
        np.testing.assert_allclose(
            (g @ h).apply_many(p),
            g.apply_many(h.apply_many(p)),
            rtol=1e-9,
            atol=1e-12,
        )
        np.testing.assert_allclose(
            g.inv().apply_many(g.apply_many(p)), p, rtol=1e-9, atol=1e-12
        )


def test_real_matrices_preserve_plane_slice():
    rng = np.random.default_rng(37)
    for _ in range(20):
        g = rand_isometry(rng, real=True)
        p = rand_points(rng, 30)
        p[:, 1] = 0.0
        img = g.apply_many(p)
        np.testing.assert_allclose(img[:, 1], 0.0, atol=1e-12)
        # matches the Mobius action in the halfplane coordinate
        for row in p[:5]:
            w = g.halfplane_apply(complex(row[0], row[2]))
            got = g.apply(HPoint.from_array(row))
            assert got.halfplane == pytest.approx(w, rel=1e-12)


def test_boundary_compatibility():
    rng = np.random.default_rng(41)
    for _ in range(10):
        g = rand_isometry(rng)
        z = complex(rng.normal(), rng.normal())
        w = g.boundary_apply(z)
        img = g.apply_many(np.array([[z.real, z.imag, 1e-9]]))[0]
        assert complex(img[0], img[1]) == pytest.approx(w, abs=1e-6)


# ---------------------------------------------------- classification, length


def test_classify_catalog():
    eye = MobiusIsometry.identity()
    assert eye.classify().tag == "identity"
    assert MobiusIsometry(-1.0, 0.0, 0.0, -1.0).classify().tag == "identity"
    par = MobiusIsometry(1.0, 1.0, 0.0, 1.0).classify()
    assert par.tag == "parabolic"
    assert par.translation_length == 0.0
    assert par.diagnostics == "parabolic-or-identity"
    assert MobiusIsometry(-1.0, 1.0, 0.0, -1.0).classify().tag == "parabolic"
    rot = rotation_about(1j, -1j, 0.8)
    assert rot.classify().tag == "elliptic"
    assert rot.translation_length() == 0.0
    hyp = MobiusIsometry(math.exp(0.5), 0.0, 0.0, math.exp(-0.5)).classify()
    assert hyp.tag == "hyperbolic-loxodromic"
    assert hyp.translation_length > 0
    assert hyp.diagnostics == ""
    lam = cmath.exp(complex(0.3, 0.4))
    twisted = MobiusIsometry(lam, 0.0, 0.0, 1.0 / lam)
    assert twisted.classify().tag == "hyperbolic-loxodromic"


def test_translation_length_values():
    for ell in (0.1, 1.0, 3.7):
        h = math.exp(0.5 * ell)
        g = MobiusIsometry(h, 0.0, 0.0, 1.0 / h)
        assert g.translation_length() == pytest.approx(ell, rel=1e-12)
        # real trace: length equals 2 acosh(|tr| / 2)
        tr = abs(g.trace)
        assert g.translation_length() == pytest.approx(
            2.0 * math.acosh(tr / 2.0), rel=1e-12
        )
    # loxodromic with rotation: length is set by the eigenvalue modulus
    g = translation_along(0.0, INF, 1.4) @ rotation_about(0.0, INF, 0.9)
    assert g.translation_length() == pytest.approx(1.4, rel=1e-10)
    assert MobiusIsometry(1.0, 5.0, 0.0, 1.0).translation_length() == 0.0


def test_translation_length_is_axis_displacement():
    # independent oracle: a loxodromic displaces points of its own axis by
    # exactly its translation length, and other points by at least that
    rng = np.random.default_rng(43)
    for _ in range(30):
        p, q = rng.uniform(-4.0, 4.0, size=2)
        if abs(p - q) < 0.2:
            continue
        ell = rng.uniform(0.2, 3.5)
        g = translation_along(p, q, ell)
        assert g.translation_length() == pytest.approx(ell, rel=1e-9)
        axis = GeodesicAxis.through(p, q)
        x = axis.point_at(rng.uniform(-1.0, 1.0))
        assert dist(x, g.apply(x)) == pytest.approx(ell, rel=1e-9)
        y = HPoint.from_array(rand_points(rng, 1)[0])
        assert dist(y, g.apply(y)) >= ell - 1e-9


def test_length_is_conjugation_invariant():
    rng = np.random.default_rng(47)
    g = translation_along(-1.0, 2.0, 1.3) @ rotation_about(-1.0, 2.0, 0.5)
    for _ in range(20):
        k = rand_isometry(rng)
        conj = k @ g @ k.inv()
        assert conj.translation_length() == pytest.approx(
            g.translation_length(), rel=1e-8
        )
        assert conj.classify().tag == "hyperbolic-loxodromic"


# ------------------------------------------------------------ frames, axes


def test_frame_basics():
    eye = frame(0.0, INF)
    assert eye.almost_equal(MobiusIsometry.identity(), tol=1e-15)
    rng = np.random.default_rng(53)
    for _ in range(30):
        p, q = rng.uniform(-5.0, 5.0, size=2)
        if abs(p - q) < 0.1:
            continue
        f = frame(p, q)
        assert f.is_real
        assert f.boundary_apply(0.0) == pytest.approx(p, abs=1e-12)
        fq = f.boundary_apply(INF)
        assert fq == pytest.approx(q, abs=1e-12)
    f = frame(INF, 0.5)
    assert cmath.isinf(f.boundary_apply(0.0))
    assert f.boundary_apply(INF) == pytest.approx(0.5)


def test_fixed_points():
    rng = np.random.default_rng(59)
    for _ in range(30):
        p, q = rng.uniform(-5.0, 5.0, size=2)
        if abs(p - q) < 0.1:
            continue
        g = translation_along(p, q, 1.1)
        rep, att = g.fixed_points()
        assert rep == pytest.approx(p, abs=1e-9)
        assert att == pytest.approx(q, abs=1e-9)
    g = translation_along(0.0, INF, 0.7)
    rep, att = g.fixed_points()
    assert rep == 0.0 and cmath.isinf(att)
    g = translation_along(INF, 1.0, 0.7)
    rep, att = g.fixed_points()
    assert cmath.isinf(rep) and att == pytest.approx(1.0)


def test_axis_fermi_coordinates():
    rng = np.random.default_rng(61)
    for _ in range(25):
        p, q = rng.uniform(-4.0, 4.0, size=2)
        if abs(p - q) < 0.2:
            continue
        axis = GeodesicAxis.through(p, q)
        s = rng.uniform(-2.0, 2.0)
        r = rng.uniform(-1.5, 1.5)
        pt = axis.point_at(s, r)
        s2, r2 = axis.project(pt)
        assert s2 == pytest.approx(s, abs=1e-9)
        assert r2 == pytest.approx(r, abs=1e-9)
        # offset really is the distance to the axis, with foot at param
        foot = axis.point_at(s)
        assert dist(pt, foot) == pytest.approx(abs(r), abs=1e-9)
        s3, r3 = axis.project(foot)
        assert r3 == pytest.approx(0.0, abs=1e-10)
        # translating along the axis shifts param, keeps offset
        g = translation_along(p, q, 0.9)
        s4, r4 = axis.project(g.apply(pt))
        assert s4 == pytest.approx(s + 0.9, abs=1e-9)
        assert r4 == pytest.approx(r, abs=1e-9)


def test_axis_param_is_arclength():
    axis = GeodesicAxis.through(-1.0, 3.0)
    a = axis.point_at(-0.7)
    b = axis.point_at(1.1)
    assert dist(a, b) == pytest.approx(1.8, rel=1e-12)
    # hypercycle chord lies between axis gap and stretched arclength
    c = axis.point_at(-0.7, 0.8)
    d = axis.point_at(1.1, 0.8)
    assert 1.8 < dist(c, d) < 1.8 * math.cosh(0.8) + 1e-12


# ------------------------------------------------------------------- misc


def test_gudermann():
    assert gudermann(0.0) == 0.0
    r = np.linspace(-3.0, 3.0, 31)
    np.testing.assert_allclose(np.tan(gudermann(r)), np.sinh(r), rtol=1e-12)
    np.testing.assert_allclose(gudermann_inv(gudermann(r)), r, rtol=1e-12)
    assert float(gudermann(50.0)) == pytest.approx(math.pi / 2.0, abs=1e-6)


def test_isometry_serialization_roundtrip():
    rng = np.random.default_rng(67)
    for _ in range(20):
        g = rand_isometry(rng)
        row = g.to_row()
        assert len(row) == 8
        h = MobiusIsometry.from_row(row)
        assert g.almost_equal(h, tol=1e-12)
    g = MobiusIsometry(1.0, 2.0, 0.5, 2.0)
    assert g.almost_equal(MobiusIsometry(-1.0, -2.0, -0.5, -2.0), tol=1e-15)


def test_determinant_normalization():
    g = MobiusIsometry(2.0, 0.0, 0.0, 2.0)
    m = g.matrix
    assert np.linalg.det(m) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        MobiusIsometry(1.0, 1.0, 1.0, 1.0)


def test_hpoint_validation():
    with pytest.raises(ValueError):
        HPoint(0.0, 0.0, -1.0)
    with pytest.raises(ValueError):
        HPoint(0.0, 0.0, 0.0)
