"""Geometry kernel checks against independent oracles."""

import math

import numpy as np
import pytest

from helpers import circle_pair, cube_sequence, cylinder_sequence, extrusion, square_loop, star_polygon_loop

from cadfit.errors import (
    DegenerateLoopError,
    EmptySurfaceError,
    RenderInvalidError,
    ZeroExtentError,
)
from cadfit.kernel import (
    GridSpec,
    TSDFGrid,
    arc_center_radius,
    attribute,
    body_sdf,
    loop_sdf,
    profile_sdf,
    render,
    sdf_difference,
    sdf_intersection,
    sdf_union,
    surface_points,
)
from cadfit.quant import Channel, dequantize, quantize
from cadfit.sequence import (
    Arc,
    BoolOp,
    Circle,
    ConstructionSequence,
    Extent,
    Line,
    Loop,
    SegmentKind,
    Sketch,
)


# -- dense-sampling oracle for 2D loops -------------------------------------


def _dense_polyline(loop, samples_per_prim=4000):
    """Boundary of a chain loop as a dense point polyline."""
    from cadfit.sequence import chain_vertices

    verts = [
        np.array([dequantize(x, Channel.COORD_2D), dequantize(y, Channel.COORD_2D)])
        for x, y in chain_vertices(loop)
    ]
    pts = []
    n = len(loop.primitives)
    for k, prim in enumerate(loop.primitives):
        a, b = verts[k], verts[(k + 1) % n]
        if isinstance(prim, Line):
            t = np.linspace(0.0, 1.0, samples_per_prim, endpoint=False)
            pts.append(a + t[:, None] * (b - a))
        else:
            sweep = dequantize(prim.sweep, Channel.ANGLE)
            center, radius = arc_center_radius(a, b, sweep, prim.ccw)
            start = math.atan2(a[1] - center[1], a[0] - center[0])
            sign = 1.0 if prim.ccw else -1.0
            ang = start + sign * np.linspace(0.0, sweep, samples_per_prim, endpoint=False)
            pts.append(center + radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1))
    return np.concatenate(pts, axis=0)


def _even_odd_inside(poly, pts):
    """Ray-cast point-in-polygon on a closed dense polyline."""
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    inside = np.zeros(len(pts), dtype=bool)
    for i, (px, py) in enumerate(pts):
        straddle = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside[i] = (np.count_nonzero(straddle & (px < xs)) % 2) == 1
    return inside


def _check_loop_against_oracle(loop, rng, tol=1e-4):
    poly = _dense_polyline(loop)
    pts = rng.uniform(-0.5, 0.5, size=(250, 2))
    brute = np.array([np.linalg.norm(poly - p, axis=1).min() for p in pts])
    keep = brute > 2e-3  # stay clear of the boundary so sampling error is negligible
    sdf = loop_sdf(loop, pts[keep])
    inside = _even_odd_inside(poly, pts[keep])
    assert np.abs(np.abs(sdf) - brute[keep]).max() < tol
    assert np.array_equal(sdf < 0, inside)


def test_square_loop_sdf_values():
    loop = square_loop()  # bins 51/204 decode to exactly -0.3/0.3
    assert loop_sdf(loop, np.array([0.0, 0.0])) == pytest.approx(-0.3)
    assert loop_sdf(loop, np.array([0.45, 0.0])) == pytest.approx(0.15)
    assert loop_sdf(loop, np.array([0.45, 0.45])) == pytest.approx(math.hypot(0.15, 0.15))


def test_circle_loop_sdf_is_exact():
    loop = Loop((Circle((128, 128), 51),))
    c = dequantize(128, Channel.COORD_2D)
    pts = np.array([[c, c], [c + 0.5, c], [c, c - 0.2]])
    expect = np.array([-0.2, 0.3, 0.0])
    assert loop_sdf(loop, pts) == pytest.approx(expect, abs=1e-12)


def test_polygon_loops_match_dense_oracle():
    rng = np.random.default_rng(23)
    for _ in range(8):
        _check_loop_against_oracle(star_polygon_loop(rng), rng)


def test_arc_loops_match_dense_oracle():
    rng = np.random.default_rng(29)
    for _ in range(8):
        _check_loop_against_oracle(star_polygon_loop(rng, arc_prob=0.6), rng)


def test_lens_loop_of_two_arcs():
    # two arcs between the same endpoints bound a lens; its widest point
    # sits on the symmetry axis
    a, b = (quantize(-0.2, Channel.COORD_2D), 128), (quantize(0.2, Channel.COORD_2D), 128)
    lens = Loop((Arc(b, 85, True), Arc(a, 85, True)))
    rng = np.random.default_rng(31)
    _check_loop_against_oracle(lens, rng)
    assert loop_sdf(lens, np.array([0.0, dequantize(128, Channel.COORD_2D)])) < 0


def test_degenerate_chain_raises():
    loop = Loop((Line((60, 60)), Line((60, 60)), Line((200, 60))))
    with pytest.raises(DegenerateLoopError):
        loop_sdf(loop, np.zeros(2))


def test_profile_with_hole_annulus():
    sketch = Sketch((Loop((Circle((128, 128), 102),)), Loop((Circle((128, 128), 51),))))
    c = dequantize(128, Channel.COORD_2D)
    # outer radius decodes to exactly 0.4, hole to 0.2
    assert profile_sdf(sketch, np.array([c, c])) == pytest.approx(0.2)
    assert profile_sdf(sketch, np.array([c + 0.3, c])) == pytest.approx(-0.1)
    assert profile_sdf(sketch, np.array([c + 0.45, c])) == pytest.approx(0.05)


# -- bodies -----------------------------------------------------------------


def _cylinder_mesh_oracle(radius, z_lo, z_hi, pts):
    """Signed distance via a densely meshed cylinder surface."""
    ang = np.linspace(0.0, 2 * np.pi, 600, endpoint=False)
    zs = np.linspace(z_lo, z_hi, 240)
    side = np.stack(
        [
            np.repeat(radius * np.cos(ang), len(zs)),
            np.repeat(radius * np.sin(ang), len(zs)),
            np.tile(zs, len(ang)),
        ],
        axis=-1,
    )
    rr = np.sqrt(np.linspace(0.0, radius**2, 120))
    disk_ang = ang[::6]
    cap_pts = []
    for z in (z_lo, z_hi):
        ga, gr = np.meshgrid(disk_ang, rr)
        cap_pts.append(np.stack([gr.ravel() * np.cos(ga.ravel()), gr.ravel() * np.sin(ga.ravel()), np.full(gr.size, z)], axis=-1))
    mesh = np.concatenate([side] + cap_pts, axis=0)
    dist = np.array([np.linalg.norm(mesh - p, axis=1).min() for p in pts])
    inside = (np.hypot(pts[:, 0], pts[:, 1]) < radius) & (pts[:, 2] > z_lo) & (pts[:, 2] < z_hi)
    return np.where(inside, -dist, dist)


def test_body_sdf_matches_cylinder_mesh_oracle():
    seq = cylinder_sequence()
    sketch, ext = seq.pairs[0]
    radius = dequantize(64, Channel.DISTANCE)
    z_lo = dequantize(64, Channel.COORD_3D)
    z_hi = z_lo + dequantize(128, Channel.DISTANCE)
    rng = np.random.default_rng(37)
    pts = rng.uniform(-0.5, 0.5, size=(150, 3))
    got = body_sdf(sketch, ext, pts)
    want = _cylinder_mesh_oracle(radius, z_lo, z_hi, pts)
    pitch = GridSpec().pitch
    assert np.abs(got - want).max() < 2 * pitch


def _circle_axis_xy(center_bin=128, origin_bin=128, scale=1.0):
    # a circle's world axis carries both the plane-center and origin decodes
    c = dequantize(center_bin, Channel.COORD_2D)
    o = dequantize(origin_bin, Channel.COORD_3D)
    return o + scale * c


def test_body_sdf_axis_values():
    seq = cylinder_sequence()
    sketch, ext = seq.pairs[0]
    radius = dequantize(64, Channel.DISTANCE)
    z_lo = dequantize(64, Channel.COORD_3D)
    height = dequantize(128, Channel.DISTANCE)
    ax = _circle_axis_xy()
    mid = z_lo + height / 2
    assert body_sdf(sketch, ext, np.array([ax, ax, mid])) == pytest.approx(-min(radius, height / 2))
    assert body_sdf(sketch, ext, np.array([ax, ax, z_lo + height + 0.1])) == pytest.approx(0.1)
    on_cap = body_sdf(sketch, ext, np.array([ax, ax, z_lo + height]))
    assert on_cap == pytest.approx(0.0, abs=1e-12)


def test_in_plane_rotations_compose():
    sk, _ = circle_pair()
    rng = np.random.default_rng(41)
    pts = rng.uniform(-0.5, 0.5, size=(200, 3))
    # the two z rotations flank the tilt; with zero tilt they add bin-wise
    a = body_sdf(sk, extrusion(orientation=(37, 0, 19), origin=(128, 128, 64)), pts)
    b = body_sdf(sk, extrusion(orientation=(56, 0, 0), origin=(128, 128, 64)), pts)
    c = body_sdf(sk, extrusion(orientation=(0, 0, 56), origin=(128, 128, 64)), pts)
    assert np.allclose(a, b, atol=1e-12)
    assert np.allclose(a, c, atol=1e-12)


def test_tilted_body_is_the_upright_body_in_rotated_coordinates():
    from cadfit.kernel import placement_frame

    sk, _ = circle_pair(r=80)
    tilted = extrusion(orientation=(31, 77, 205), origin=(140, 120, 100))
    upright = extrusion(orientation=(0, 0, 0), origin=(140, 120, 100))
    rot, origin = placement_frame(tilted)
    rng = np.random.default_rng(47)
    pts = rng.uniform(-0.5, 0.5, size=(300, 3))
    mapped = (pts - origin) @ rot + origin
    assert np.allclose(body_sdf(sk, tilted, pts), body_sdf(sk, upright, mapped), atol=1e-9)


def test_body_scale_shrinks_profile():
    sk, _ = circle_pair(r=102)
    half = extrusion(scale=128, origin=(128, 128, 64))  # scale bin 128 ~ 0.502
    s = dequantize(128, Channel.SCALE)
    r_world = dequantize(102, Channel.DISTANCE) * s
    ax = _circle_axis_xy(scale=s)
    z_lo = dequantize(64, Channel.COORD_3D)
    mid = z_lo + dequantize(128, Channel.DISTANCE) / 2
    got = body_sdf(sk, half, np.array([ax + r_world + 0.05, ax, mid]))
    assert got == pytest.approx(0.05)


def test_extent_interval_symmetric_and_two_sided():
    sk, _ = circle_pair()
    ax = _circle_axis_xy()
    oz = dequantize(128, Channel.COORD_3D)
    sym = extrusion(extent=Extent.SYMMETRIC, origin=(128, 128, 128), dist_pos=102)
    d = dequantize(102, Channel.DISTANCE)
    top = body_sdf(sk, sym, np.array([ax, ax, oz + d / 2 + 0.05]))
    bot = body_sdf(sk, sym, np.array([ax, ax, oz - d / 2 - 0.05]))
    assert top == pytest.approx(0.05) and bot == pytest.approx(0.05)
    two = extrusion(extent=Extent.TWO_SIDED, origin=(128, 128, 128), dist_pos=51, dist_neg=102)
    up, dn = dequantize(51, Channel.DISTANCE), dequantize(102, Channel.DISTANCE)
    assert body_sdf(sk, two, np.array([ax, ax, oz + up + 0.03])) == pytest.approx(0.03)
    assert body_sdf(sk, two, np.array([ax, ax, oz - dn - 0.07])) == pytest.approx(0.07)


def test_zero_extent_raises():
    sk, _ = circle_pair()
    bad = extrusion(dist_pos=0, dist_neg=0)
    with pytest.raises(ZeroExtentError):
        body_sdf(sk, bad, np.zeros(3))


# -- boolean algebra --------------------------------------------------------


def test_boolean_identities_on_random_fields():
    rng = np.random.default_rng(43)
    f = rng.normal(size=1000)
    g = rng.normal(size=1000)
    assert np.array_equal(sdf_union(f, g), np.minimum(f, g))
    assert np.array_equal(sdf_difference(f, g), sdf_intersection(f, -g))
    assert np.array_equal(-sdf_union(f, g), sdf_intersection(-f, -g))
    assert np.array_equal(sdf_union(f, f), f)


# -- rendering --------------------------------------------------------------


def _grid_volume(grid):
    # fractional coverage per voxel; plain center counting can be off by a
    # whole voxel layer per face, which swamps a 5% check at this resolution
    frac = np.clip(0.5 - grid.values / grid.spec.pitch, 0.0, 1.0)
    return float(frac.sum()) * grid.spec.pitch**3


def test_render_cylinder_volume():
    grid = render(cylinder_sequence())
    radius = dequantize(64, Channel.DISTANCE)
    height = dequantize(128, Channel.DISTANCE)
    expect = math.pi * radius**2 * height
    assert _grid_volume(grid) == pytest.approx(expect, rel=0.05)


def test_render_cube_volume():
    grid = render(cube_sequence())
    assert _grid_volume(grid) == pytest.approx(0.6**3, rel=0.05)


def test_render_cube_minus_cylinder_volume():
    seq = ConstructionSequence(
        cube_sequence().pairs + (circle_pair(op=BoolOp.CUT, r=38, dist_pos=153, origin=(128, 128, 51)),)
    )
    grid = render(seq)
    r = dequantize(38, Channel.DISTANCE)
    expect = 0.6**3 - math.pi * r**2 * 0.6
    assert _grid_volume(grid) == pytest.approx(expect, rel=0.05)


def test_render_values_stay_in_band_and_deterministic():
    spec = GridSpec(resolution=32, tau=0.2)
    a = render(cylinder_sequence(), spec)
    b = render(cylinder_sequence(), spec)
    assert np.array_equal(a.values, b.values)
    assert a.values.max() <= np.float32(spec.tau)
    assert a.values.min() >= -np.float32(spec.tau)
    assert a.values.dtype == np.float32


def test_render_out_of_domain_profile_is_invalid():
    seq = ConstructionSequence((circle_pair(origin=(255, 255, 255), r=30),))
    with pytest.raises(RenderInvalidError):
        render(seq)


def test_join_grows_and_cut_shrinks_occupancy():
    base = cylinder_sequence()
    joined = ConstructionSequence(base.pairs + (circle_pair(op=BoolOp.JOIN, cx=90, cy=90, r=40, origin=(128, 128, 90)),))
    cut = ConstructionSequence(base.pairs + (circle_pair(op=BoolOp.CUT, cx=128, cy=128, r=30, origin=(128, 128, 80)),))
    occ = render(base).occupancy()
    assert (render(joined).occupancy() | occ).sum() == render(joined).occupancy().sum()
    assert (render(cut).occupancy() & occ).sum() == render(cut).occupancy().sum()


def test_render_respects_resolution_and_tau():
    spec = GridSpec(resolution=16, tau=0.1)
    grid = render(cylinder_sequence(), spec)
    assert grid.values.shape == (16, 16, 16)
    assert grid.values.max() <= np.float32(0.1)


# -- attribution ------------------------------------------------------------


def test_attribution_single_pair_owns_everything():
    ag = attribute(cylinder_sequence())
    assert (ag.owner >= 0).all()
    pairs = {ag.segment_ids[i].pair for i in np.unique(ag.owner)}
    assert pairs == {0}
    kinds = {ag.segment_ids[i].kind for i in np.unique(ag.owner)}
    assert kinds == {SegmentKind.PRIMITIVE, SegmentKind.EXTRUSION}


def test_attribution_matches_render_values():
    seq = ConstructionSequence(
        cylinder_sequence().pairs + (circle_pair(op=BoolOp.CUT, r=30, origin=(128, 128, 80)),)
    )
    ag = attribute(seq)
    assert np.array_equal(ag.values, render(seq).values)


def test_attribution_disjoint_union_against_field_oracle():
    a = circle_pair(cx=80, cy=128, r=30, origin=(103, 128, 90), dist_pos=64)
    b = circle_pair(op=BoolOp.JOIN, cx=176, cy=128, r=30, origin=(154, 128, 90), dist_pos=64)
    seq = ConstructionSequence((a, b))
    spec = GridSpec()
    ag = attribute(seq, spec)
    pts = spec.points()
    fa = body_sdf(*a, pts).reshape(ag.owner.shape)
    fb = body_sdf(*b, pts).reshape(ag.owner.shape)
    band = np.abs(ag.values) < 2 * spec.pitch
    owner_pair = np.vectorize(lambda i: ag.segment_ids[i].pair)(ag.owner[band])
    assert np.array_equal(owner_pair, (fb[band] < fa[band]).astype(int))


def test_attribution_cut_cavity_owned_by_cut_pair():
    cube = cube_sequence()
    cutter = circle_pair(op=BoolOp.CUT, r=38, dist_pos=153, origin=(128, 128, 51))
    seq = ConstructionSequence(cube.pairs + (cutter,))
    spec = GridSpec()
    ag = attribute(seq, spec)
    without = render(cube, spec)
    cavity = without.occupancy() & ~ (ag.values < 0)
    band = cavity & (ag.values > 0) & (ag.values < 2 * spec.pitch)
    assert band.any()
    owner_pair = np.array([ag.segment_ids[i].pair for i in ag.owner[band]])
    assert (owner_pair == 1).all()


def test_attribution_caps_go_to_extrusion_block():
    ag = attribute(cylinder_sequence())
    spec = ag.spec
    c = spec.centers()
    z_lo = dequantize(64, Channel.COORD_3D)
    height = dequantize(128, Channel.DISTANCE)
    iz_top = int(np.argmin(np.abs(c - (z_lo + height))))
    ix = int(np.argmin(np.abs(c)))
    top_owner = ag.segment_ids[ag.owner[ix, ix, iz_top]]
    assert top_owner.kind is SegmentKind.EXTRUSION
    radius = dequantize(64, Channel.DISTANCE)
    iz_mid = int(np.argmin(np.abs(c - (z_lo + height / 2))))
    ix_wall = int(np.argmin(np.abs(c - radius)))
    wall_owner = ag.segment_ids[ag.owner[ix_wall, ix, iz_mid]]
    assert wall_owner.kind is SegmentKind.PRIMITIVE


# -- surface extraction -----------------------------------------------------


def _sphere_grid(radius=0.35, spec=GridSpec()):
    pts = spec.points()
    vals = np.linalg.norm(pts, axis=1) - radius
    tau = spec.tau
    return TSDFGrid(spec, np.clip(vals, -tau, tau).reshape(spec.resolution, spec.resolution, spec.resolution))


def test_sphere_surface_points_sit_on_the_sphere():
    grid = _sphere_grid()
    pts = surface_points(grid, max_points=100000)
    radii = np.linalg.norm(pts, axis=1)
    assert np.abs(radii - 0.35).max() < grid.spec.pitch
    assert len(pts) > 500


def test_surface_points_subsample_is_seeded():
    grid = _sphere_grid()
    a = surface_points(grid, max_points=64, seed=5)
    b = surface_points(grid, max_points=64, seed=5)
    c = surface_points(grid, max_points=64, seed=6)
    assert np.array_equal(a, b)
    assert len(a) == 64
    assert not np.array_equal(a, c)


def test_surface_points_empty_grid_raises():
    spec = GridSpec()
    n = spec.resolution
    grid = TSDFGrid(spec, np.full((n, n, n), spec.tau, dtype=np.float32))
    with pytest.raises(EmptySurfaceError):
        surface_points(grid)
