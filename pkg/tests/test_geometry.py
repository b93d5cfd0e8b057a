import struct

import numpy as np
import pytest

from coilopt.geometry import (
    DegenerateCrossSectionError,
    CrossSectionParams,
    GeometryError,
    NominalCoil,
    PathParams,
    ReactorSurface,
    add_ports,
    build_path,
    build_reactor_surface,
    expected_triangle_count,
    export_stl,
    interpolate_cross_section,
    loft_surface,
    section_angles,
    transport_frames,
    validate_geometry,
)

NOM = NominalCoil()


def parse_stl(data: bytes):
    """Test-local binary STL reader, independent of the export path."""
    count = struct.unpack("<I", data[80:84])[0]
    rec = np.dtype([("normal", "<f4", 3), ("verts", "<f4", (3, 3)), ("attr", "<u2")])
    body = np.frombuffer(data[84:], dtype=rec, count=count)
    return body["normal"], body["verts"]


def straight_tube(radius=3.0, length=50.0, rings=40, res=24, shift=(0, 0, 0)):
    pts = np.column_stack([
        np.linspace(0, length, rings),
        np.zeros(rings),
        np.zeros(rings),
    ]) + np.asarray(shift, dtype=float)
    frames = transport_frames(pts)
    angles = section_angles(res)
    offs = radius * (np.cos(angles)[None, :, None] * frames[:, None, 1, :]
                     + np.sin(angles)[None, :, None] * frames[:, None, 2, :])
    verts = (pts[:, None, :] + offs).reshape(-1, 3)
    from coilopt.geometry import _tube_triangles

    return verts, _tube_triangles(rings, res)


class TestCrossSection:
    def test_constant_radii_give_circle(self):
        curve = interpolate_cross_section(np.full(6, 3.0), resolution=64)
        assert np.allclose(curve, 3.0, atol=1e-12)

    def test_inducing_points_reproduced(self):
        radii = np.array([2.0, 4.0, 2.5, 3.6, 2.2, 3.9])
        res = 60  # multiple of 6, so inducing angles land on the grid
        curve = interpolate_cross_section(radii, resolution=res)
        idx = np.arange(6) * (res // 6)
        assert np.max(np.abs(curve[idx] - radii)) < 1e-6

    def test_threefold_symmetry(self):
        curve = interpolate_cross_section(np.array([2.0, 4.0] * 3), resolution=48)
        rotated = np.roll(curve, 48 // 3)
        assert np.max(np.abs(curve - rotated)) < 1e-6

    def test_closure_at_wraparound(self):
        radii = np.array([2.0, 4.0, 2.5, 3.6, 2.2, 3.9])
        from coilopt.gp import GPModel, KernelSpec, gp_posterior

        angles = section_angles(6)
        model = GPModel(KernelSpec.polar(4.0), angles, radii,
                        prior_mean=float(np.mean(radii)))
        ends, _ = gp_posterior(model, np.array([[0.0], [2.0 * np.pi]]))
        assert abs(ends[0] - ends[1]) < 1e-9

    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            interpolate_cross_section(np.array([1.0, 3.0, 3.0, 3.0]))

    def test_degenerate_detection(self):
        with pytest.raises(DegenerateCrossSectionError):
            interpolate_cross_section(np.array([0.05, 3.0, 3.0, 3.0]),
                                      check_bounds=False)


class TestPath:
    def test_nominal_helix(self):
        path = build_path(PathParams.zeros(6), NOM, samples=513)
        rho = np.hypot(path.points[:, 0], path.points[:, 1])
        assert np.allclose(rho, 12.5, atol=1e-9)
        assert path.points[-1, 2] == pytest.approx(20.8, abs=1e-9)
        analytic = 4 * np.pi * np.hypot(12.5, 10.4 / (2 * np.pi))
        assert path.length == pytest.approx(analytic, rel=1e-4)
        assert np.allclose(path.curvature, 12.5 / (12.5**2 + (10.4 / 2 / np.pi) ** 2),
                           rtol=1e-9)

    def test_uniform_z_shift(self):
        base = build_path(PathParams.zeros(6), NOM)
        up = build_path(PathParams(np.zeros(6), np.ones(6)), NOM)
        dz = up.points[:, 2] - base.points[:, 2]
        assert np.all(dz <= 1.0 + 1e-12)
        assert np.allclose(dz, 1.0, atol=1e-9)

    def test_interturn_clearance_100_draws(self):
        # Brute-force sweep: points one full turn apart must stay clear of
        # twice the maximum tube radius (4 mm bound).
        rng = np.random.default_rng(11)
        for _ in range(100):
            params = PathParams(rng.uniform(-3.5, 3.5, 6), rng.uniform(-1, 1, 6))
            path = build_path(params, NOM, samples=257)
            phi = path.phi
            half = phi <= phi[-1] - 2 * np.pi
            partner = np.searchsorted(phi, phi[half] + 2 * np.pi)
            partner = np.clip(partner, 0, phi.size - 1)
            dist = np.linalg.norm(path.points[half] - path.points[partner], axis=1)
            assert dist.min() > 8.0

    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            PathParams(np.array([4.0] + [0] * 5), np.zeros(6))
        with pytest.raises(ValueError):
            PathParams(np.zeros(6), np.array([0, 0, 1.5, 0, 0, 0]))


class TestFrames:
    def test_straight_line_constant_frame(self):
        pts = np.column_stack([np.linspace(0, 10, 20), np.zeros(20), np.zeros(20)])
        frames = transport_frames(pts)
        assert np.allclose(frames, frames[0], atol=1e-12)

    def test_circle_orthonormal_in_plane(self):
        s = np.linspace(0, 2 * np.pi, 200, endpoint=False)
        pts = np.column_stack([np.cos(s), np.sin(s), np.zeros_like(s)])
        frames = transport_frames(pts)
        t, n = frames[:, 0, :], frames[:, 1, :]
        assert np.max(np.abs(np.einsum("ij,ij->i", t, n))) < 1e-10
        # Initial normal is in-plane, and minimal rotation keeps it there.
        assert np.max(np.abs(n[:, 2])) < 1e-8
        for i in (0, 1, 2):
            assert np.allclose(np.linalg.norm(frames[:, i, :], axis=1), 1.0, atol=1e-10)

    def test_helix_against_analytic_transport(self):
        # Oracle: Frenet frame of the helix rotated about the tangent by the
        # integral of the (constant) torsion.
        n = 1000
        r, pitch = 12.5, 10.4
        c = pitch / (2 * np.pi)
        phi = np.linspace(0, 4 * np.pi, n)
        pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), c * phi])
        frames = transport_frames(pts)

        speed = np.hypot(r, c)
        tan = np.column_stack([-r * np.sin(phi), r * np.cos(phi), np.full(n, c)]) / speed
        normal_frenet = np.column_stack([-np.cos(phi), -np.sin(phi), np.zeros(n)])
        binorm_frenet = np.cross(tan, normal_frenet)
        torsion = c / (r**2 + c**2)
        s = phi * speed
        psi0 = np.arctan2(frames[0, 1] @ binorm_frenet[0], frames[0, 1] @ normal_frenet[0])
        psi = psi0 - torsion * s
        analytic_normal = (np.cos(psi)[:, None] * normal_frenet
                           + np.sin(psi)[:, None] * binorm_frenet)
        dots = np.clip(np.einsum("ij,ij->i", frames[:, 1, :], analytic_normal), -1, 1)
        drift_deg = np.degrees(np.arccos(dots))
        assert drift_deg.max() < 0.5

    def test_degenerate_points_rejected(self):
        pts = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0]], dtype=float)
        with pytest.raises(GeometryError):
            transport_frames(pts)


class TestLoft:
    def test_constant_sections_distance_to_centerline(self):
        path = build_path(PathParams.zeros(6), NOM, samples=129)
        sections = CrossSectionParams.constant(3.0, 6, 6)
        surf = loft_surface(sections, path, ring_resolution=32, end_radius=3.0)
        centers = np.repeat(
            np.column_stack([np.interp(np.linspace(0, path.length, 129),
                                       path.arclength, path.points[:, k])
                             for k in range(3)]), 32, axis=0)
        dist = np.linalg.norm(surf.vertices - centers, axis=1)
        assert np.max(np.abs(dist - 3.0)) < 1e-6

    def test_ring_radius_matches_station_curve(self):
        # 8 stations (n_l=6 plus ends), rings chosen so stations coincide.
        rng = np.random.default_rng(5)
        sections = CrossSectionParams(rng.uniform(2, 4, size=(6, 6)))
        path = build_path(PathParams.zeros(6), NOM, samples=211)
        surf = loft_surface(sections, path, axial_sections=7 * 10 + 1,
                            ring_resolution=24, end_radius=3.0)
        radii = surf.port_markers["ring_radii"]
        from coilopt.geometry import station_curves_for

        curves = station_curves_for(sections, 3.0, 24)
        for station in range(8):
            ring = station * 10
            assert np.max(np.abs(radii[ring] - curves[station])) < 1e-9

    def test_watertight_after_ports_random_draws(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            x = rng.uniform(2, 4, 36)
            surf = build_reactor_surface("cross-section", x, NOM,
                                         rings_per_turn=24, ring_resolution=20)
            report = validate_geometry(surf, check_self_intersection=False)
            assert report.watertight and report.winding_consistent


class TestPorts:
    def build_tube(self):
        path = build_path(PathParams.zeros(6), NOM, samples=129)
        sections = CrossSectionParams.constant(3.0, 6, 6)
        return loft_surface(sections, path, ring_resolution=32, end_radius=3.0)

    def test_zero_length_extension_is_caps_only(self):
        tube = self.build_tube()
        closed = add_ports(tube, 0.0, 0.0)
        assert closed.n_vertices == tube.n_vertices + 2
        again = add_ports(self.build_tube(), 0.0, 0.0)
        r1 = validate_geometry(closed, check_self_intersection=False)
        r2 = validate_geometry(again, check_self_intersection=False)
        assert abs(r1.volume - r2.volume) < 1e-9
        assert r1.watertight

    def test_port_area_increase(self):
        tube = self.build_tube()
        base = validate_geometry(add_ports(tube, 0.0, 0.0),
                                 check_self_intersection=False)
        extended = validate_geometry(add_ports(self.build_tube(), 10.0, 0.0),
                                     check_self_intersection=False)
        gain = extended.total_area - base.total_area
        assert gain == pytest.approx(2 * np.pi * 3.0 * 10.0, rel=0.01)

    def test_watertightness_preserved(self):
        closed = add_ports(self.build_tube(), 10.0, 10.0)
        report = validate_geometry(closed, check_self_intersection=False)
        assert report.watertight and report.winding_consistent
        assert "inlet_faces" in closed.port_markers

    def test_noncircular_end_rejected(self):
        path = build_path(PathParams.zeros(6), NOM, samples=65)
        sections = CrossSectionParams.constant(3.0, 6, 6)
        tube = loft_surface(sections, path, ring_resolution=24, end_radius=3.0)
        tube.vertices[0] += 1.0  # deform one inlet-ring vertex
        with pytest.raises(GeometryError):
            add_ports(tube, 5.0, 5.0)


class TestStl:
    def test_tetrahedron_byte_count(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
        tris = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], dtype=np.int32)
        data = export_stl(ReactorSurface(verts, tris))
        assert len(data) == 80 + 4 + 4 * 50 == 284

    def test_roundtrip_bit_exact(self):
        surf = build_reactor_surface("cross-section", np.full(36, 3.0), NOM,
                                     rings_per_turn=16, ring_resolution=16)
        data = export_stl(surf)
        _, tri_verts = parse_stl(data)
        expected = surf.vertices[surf.triangles].astype("<f4")
        assert tri_verts.tobytes() == expected.tobytes()
        assert export_stl(surf) == data  # byte-deterministic

    def test_export_is_manifold_by_independent_check(self):
        surf = build_reactor_surface("cross-section", np.full(36, 3.0), NOM,
                                     rings_per_turn=24, ring_resolution=20)
        _, tri_verts = parse_stl(export_stl(surf))
        # Weld vertices by exact float32 bytes and count undirected edges.
        flat = tri_verts.reshape(-1, 3)
        _, inverse = np.unique(flat.view([("", "<f4")] * 3), return_inverse=True)
        tris = inverse.reshape(-1, 3)
        edges = np.sort(np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        assert np.all(counts == 2)


class TestValidate:
    def test_sphere_volume(self):
        # Lat-long sphere with ~10k triangles against 4/3 pi r^3.
        r = 2.0
        n_lat, n_lon = 50, 100
        lat = np.linspace(0, np.pi, n_lat + 1)[1:-1]
        lon = np.linspace(0, 2 * np.pi, n_lon, endpoint=False)
        ring_pts = np.array([
            [r * np.sin(a) * np.cos(b), r * np.sin(a) * np.sin(b), r * np.cos(a)]
            for a in lat for b in lon
        ])
        top = np.array([[0, 0, r]])
        bottom = np.array([[0, 0, -r]])
        verts = np.vstack([top, ring_pts, bottom])
        tris = []
        for j in range(n_lon):
            tris.append([0, 1 + j, 1 + (j + 1) % n_lon])
        for i in range(len(lat) - 1):
            base = 1 + i * n_lon
            for j in range(n_lon):
                a = base + j
                b = base + (j + 1) % n_lon
                c = a + n_lon
                d = b + n_lon
                tris.append([a, c, d])
                tris.append([a, d, b])
        last = 1 + (len(lat) - 1) * n_lon
        bot = verts.shape[0] - 1
        for j in range(n_lon):
            tris.append([bot, last + (j + 1) % n_lon, last + j])
        surf = ReactorSurface(verts, np.asarray(tris, dtype=np.int32))
        report = validate_geometry(surf, check_self_intersection=False)
        assert report.watertight and report.winding_consistent
        assert report.volume == pytest.approx(4 / 3 * np.pi * r**3, rel=0.01)

    def test_deleted_triangle_breaks_watertightness(self):
        surf = build_reactor_surface("cross-section", np.full(36, 3.0), NOM,
                                     rings_per_turn=12, ring_resolution=16)
        broken = ReactorSurface(surf.vertices, surf.triangles[1:],
                                surf.port_markers)
        report = validate_geometry(broken, check_self_intersection=False)
        assert not report.watertight
        assert report.boundary_edges == 3

    def test_overlapping_tubes_detected(self):
        v1, t1 = straight_tube()
        v2, t2 = straight_tube(shift=(25.0, 2.0, -25.0))
        # Rotate the second tube to cross the first.
        rot = np.array([[0, 0, 1.0], [0, 1.0, 0], [-1.0, 0, 0]])
        v2 = (v2 - v2.mean(axis=0)) @ rot.T + np.array([25.0, 0.0, 0.0])
        merged = ReactorSurface(np.vstack([v1, v2]),
                                np.vstack([t1, t2 + v1.shape[0]]).astype(np.int32))
        report = validate_geometry(merged)
        assert report.self_intersecting
        assert len(report.intersecting_pairs) > 0

    def test_clean_tube_has_no_self_intersection(self):
        surf = build_reactor_surface("cross-section", np.full(36, 3.0), NOM,
                                     rings_per_turn=24, ring_resolution=20)
        report = validate_geometry(surf)
        assert report.clean


class TestBuildReactor:
    def test_triangle_count_formula(self):
        for rpt, res, inl, out in ((64, 48, 10.0, 10.0), (24, 20, 0.0, 5.0)):
            surf = build_reactor_surface("cross-section", np.full(36, 3.0), NOM,
                                         rings_per_turn=rpt, ring_resolution=res,
                                         inlet_length=inl, outlet_length=out)
            assert surf.n_triangles == expected_triangle_count(NOM, rpt, res, inl, out)

    def test_nominal_volume_against_convention(self):
        surf = build_reactor_surface("cross-section", np.full(36, 3.0), NOM,
                                     inlet_length=0.0, outlet_length=0.0)
        report = validate_geometry(surf, check_self_intersection=False)
        expected = np.pi * 3.0**2 * 4 * np.pi * 12.5
        assert report.volume == pytest.approx(expected, rel=0.01)

    def test_coil_path_parameterisation(self):
        rng = np.random.default_rng(8)
        x = np.concatenate([rng.uniform(-3.5, 3.5, 6), rng.uniform(-1, 1, 6)])
        surf = build_reactor_surface("coil-path", x, NOM,
                                     rings_per_turn=24, ring_resolution=20)
        report = validate_geometry(surf)
        assert report.clean
