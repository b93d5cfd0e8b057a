"""Parametric coiled-tube geometry: cross-sections, paths, lofting, STL.

Two parameterisations are realised as watertight triangulated surfaces:

* variable cross-section: inducing radii at equally spaced angles are
  interpolated by a noiseless polar-kernel GP into closed curves, one curve
  per axial station, with constant-radius sections at both ends;
* variable coil path: radial and height deviations at equally spaced
  angular stations perturb a baseline helix, interpolated by natural cubic
  splines, with a constant circular cross-section.

Cross-sections are carried along the path in rotation-minimizing frames
(double-reflection transport), stitched into a triangle tube, extended with
inlet/outlet ports, capped, and exported as binary STL.  In-bounds
parameters produce feasible (non-self-intersecting) geometries by
construction; :func:`validate_geometry` verifies this mesh by mesh.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .gp import GPModel, KernelSpec, gp_posterior

RADIUS_BOUNDS = (2.0, 4.0)      # mm, inducing cross-section radii
RHO_BOUNDS = (-3.5, 3.5)        # mm, radial path deviations
Z_BOUNDS = (-1.0, 1.0)          # mm, height path deviations
MIN_CROSS_SECTION_RADIUS = 0.1  # mm, below this a section is degenerate

DEFAULT_RINGS_PER_TURN = 64
DEFAULT_RING_RESOLUTION = 48
DEFAULT_PORT_LENGTH = 10.0      # mm


class GeometryError(ValueError):
    """Invalid geometry: degenerate cross-section or failed surface contract."""


class DegenerateCrossSectionError(GeometryError):
    pass


@dataclass(frozen=True)
class NominalCoil:
    """Baseline two-turn coil and parameterisation sizes.

    The coil length convention is circumferential: 2 pi * coil_radius per
    turn, i.e. 4 pi * coil_radius for the default two turns.
    """

    pitch: float = 10.4            # mm per turn
    coil_radius: float = 12.5      # mm
    turns: int = 2
    tube_radius: float = 3.0       # mm, constant end cross-section radius
    n_c: int = 6                   # inducing radii per cross-section
    n_l: int = 6                   # interpolating cross-sections along the coil
    n_p: int = 6                   # path deviation stations

    def __post_init__(self):
        if self.pitch <= 0:
            raise ValueError("pitch must be positive")
        if self.coil_radius <= RADIUS_BOUNDS[1]:
            raise ValueError("coil radius must exceed the tube radius upper bound")
        if self.turns < 1 or min(self.n_c, self.n_l, self.n_p) < 2:
            raise ValueError("counts must be at least 2 (turns at least 1)")

    @property
    def sweep_angle(self) -> float:
        return 2.0 * np.pi * self.turns

    @property
    def nominal_length(self) -> float:
        return 2.0 * np.pi * self.coil_radius * self.turns


@dataclass(frozen=True)
class CrossSectionParams:
    """Inducing radii, one row per axial station, one column per angle.

    Row j holds radii at angles theta_i = 2 pi i / n_c; every entry must lie
    within RADIUS_BOUNDS.
    """

    radii: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.ndim != 2:
            raise ValueError("radii must be a (n_l, n_c) matrix")
        lo, hi = RADIUS_BOUNDS
        if np.any(r < lo) or np.any(r > hi):
            bad = np.argwhere((r < lo) | (r > hi))[0]
            raise ValueError(
                f"radius out of bounds [{lo}, {hi}] at station {bad[0]}, angle {bad[1]}"
            )
        object.__setattr__(self, "radii", r)

    @property
    def n_l(self) -> int:
        return self.radii.shape[0]

    @property
    def n_c(self) -> int:
        return self.radii.shape[1]

    def as_vector(self) -> np.ndarray:
        return self.radii.ravel().copy()

    @classmethod
    def from_vector(cls, x, n_l: int, n_c: int) -> "CrossSectionParams":
        x = np.asarray(x, dtype=float).ravel()
        if x.size != n_l * n_c:
            raise ValueError(f"expected {n_l * n_c} radii, got {x.size}")
        return cls(radii=x.reshape(n_l, n_c))

    @classmethod
    def constant(cls, radius: float, n_l: int, n_c: int) -> "CrossSectionParams":
        return cls(radii=np.full((n_l, n_c), float(radius)))


@dataclass(frozen=True)
class PathParams:
    """Radial and height deviations at equally spaced angular stations.

    No deviations in the rotational coordinate; bounds keep adjacent turns
    clear of each other so in-bounds paths cannot self-intersect.
    """

    delta_rho: np.ndarray
    delta_z: np.ndarray

    def __post_init__(self):
        dr = np.asarray(self.delta_rho, dtype=float).ravel()
        dz = np.asarray(self.delta_z, dtype=float).ravel()
        if dr.size != dz.size:
            raise ValueError("delta_rho and delta_z must have the same length")
        if np.any(dr < RHO_BOUNDS[0]) or np.any(dr > RHO_BOUNDS[1]):
            idx = int(np.argmax((dr < RHO_BOUNDS[0]) | (dr > RHO_BOUNDS[1])))
            raise ValueError(f"radial deviation out of bounds {RHO_BOUNDS} at station {idx}")
        if np.any(dz < Z_BOUNDS[0]) or np.any(dz > Z_BOUNDS[1]):
            idx = int(np.argmax((dz < Z_BOUNDS[0]) | (dz > Z_BOUNDS[1])))
            raise ValueError(f"height deviation out of bounds {Z_BOUNDS} at station {idx}")
        object.__setattr__(self, "delta_rho", dr)
        object.__setattr__(self, "delta_z", dz)

    @property
    def n_p(self) -> int:
        return self.delta_rho.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.delta_rho, self.delta_z])

    @classmethod
    def from_vector(cls, x, n_p: int) -> "PathParams":
        x = np.asarray(x, dtype=float).ravel()
        if x.size != 2 * n_p:
            raise ValueError(f"expected {2 * n_p} deviations, got {x.size}")
        return cls(delta_rho=x[:n_p], delta_z=x[n_p:])

    @classmethod
    def zeros(cls, n_p: int) -> "PathParams":
        return cls(delta_rho=np.zeros(n_p), delta_z=np.zeros(n_p))


@dataclass
class Centerline:
    """Sampled coil path: positions, tangents, curvature, arclength."""

    phi: np.ndarray          # sweep parameter per sample
    points: np.ndarray       # (n, 3) mm
    tangents: np.ndarray     # (n, 3) unit
    curvature: np.ndarray    # (n,) 1/mm
    arclength: np.ndarray    # (n,) cumulative chord length, mm

    @property
    def length(self) -> float:
        return float(self.arclength[-1])


@dataclass
class ReactorSurface:
    """Triangulated tube surface with inlet/outlet metadata.

    ``port_markers`` carries the end-ring vertex index arrays plus the end
    tangents and mean ring spacing needed to extrude ports, and, once ports
    are added, the inlet/outlet triangle index ranges (face groups).
    """

    vertices: np.ndarray     # (n, 3) float64, mm
    triangles: np.ndarray    # (m, 3) int32
    port_markers: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


def interpolate_cross_section(radii_row, resolution: int = DEFAULT_RING_RESOLUTION,
                              *, tau: float = 4.0, check_bounds: bool = True) -> np.ndarray:
    """Closed polar curve through inducing radii at equal angles.

    A noiseless polar-kernel GP with the mean radius as prior mean is
    conditioned on (theta_i = 2 pi i / n_c, r_i) and its posterior mean is
    returned at ``resolution`` equally spaced angles on [0, 2 pi).  The
    kernel is periodic, so the curve closes exactly; constant inducing radii
    reproduce a circle.

    Raises
    ------
    DegenerateCrossSectionError
        If the interpolated radius drops to MIN_CROSS_SECTION_RADIUS or
        below anywhere on the curve.
    """
    r = np.asarray(radii_row, dtype=float).ravel()
    if resolution < 16:
        raise ValueError("resolution must be at least 16")
    if check_bounds:
        lo, hi = RADIUS_BOUNDS
        if np.any(r < lo) or np.any(r > hi):
            raise ValueError(f"inducing radii must lie within [{lo}, {hi}]")
    weights = _section_weights(r.size, resolution, tau)
    mean = float(np.mean(r))
    curve = mean + weights @ (r - mean)
    if np.min(curve) <= MIN_CROSS_SECTION_RADIUS:
        raise DegenerateCrossSectionError(
            f"interpolated cross-section radius reaches {np.min(curve):.4f} mm"
        )
    return np.maximum(curve, MIN_CROSS_SECTION_RADIUS)


@lru_cache(maxsize=64)
def _section_weights(n_c: int, resolution: int, tau: float) -> np.ndarray:
    """Posterior-mean weight matrix K(Q, X) K(X, X)^-1 for inducing angles."""
    angles = 2.0 * np.pi * np.arange(n_c) / n_c
    query = 2.0 * np.pi * np.arange(resolution) / resolution
    model = GPModel(KernelSpec.polar(tau), angles, np.zeros(n_c))
    chol, _, _ = model.factorization()
    from scipy.linalg import cho_solve

    from .gp import kernel_matrix

    k_cross = kernel_matrix(model.kernel, query.reshape(-1, 1), angles.reshape(-1, 1))
    return cho_solve((chol, True), k_cross.T).T


def section_angles(resolution: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(resolution) / resolution


def build_path(params: PathParams, nominal: NominalCoil, samples: int = 257) -> Centerline:
    """Deviated helix centerline in Cartesian coordinates.

    The baseline is rho = coil_radius, phi linear over [0, 2 pi turns],
    z = pitch * phi / 2 pi.  Deviations are applied at n_p equally spaced
    phi stations and interpolated with natural cubic splines in rho and z
    against phi, then converted to Cartesian; arclength is a cumulative
    chord sum.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if params.n_p != nominal.n_p:
        raise ValueError(f"expected {nominal.n_p} deviation stations, got {params.n_p}")
    sweep = nominal.sweep_angle
    phi = np.linspace(0.0, sweep, samples)
    stations = np.linspace(0.0, sweep, params.n_p)
    rho_spline = CubicSpline(stations, nominal.coil_radius + params.delta_rho, bc_type="natural")
    pitch_per_rad = nominal.pitch / (2.0 * np.pi)
    z_spline = CubicSpline(stations, pitch_per_rad * stations + params.delta_z, bc_type="natural")

    rho = rho_spline(phi)
    z = z_spline(phi)
    drho = rho_spline(phi, 1)
    dz = z_spline(phi, 1)
    d2rho = rho_spline(phi, 2)
    d2z = z_spline(phi, 2)

    cos_p, sin_p = np.cos(phi), np.sin(phi)
    points = np.column_stack([rho * cos_p, rho * sin_p, z])
    # First and second derivatives of (rho cos, rho sin, z) wrt phi.
    d1 = np.column_stack([
        drho * cos_p - rho * sin_p,
        drho * sin_p + rho * cos_p,
        dz,
    ])
    d2 = np.column_stack([
        d2rho * cos_p - 2.0 * drho * sin_p - rho * cos_p,
        d2rho * sin_p + 2.0 * drho * cos_p - rho * sin_p,
        d2z,
    ])
    speed = np.linalg.norm(d1, axis=1)
    tangents = d1 / speed[:, None]
    cross = np.cross(d1, d2)
    curvature = np.linalg.norm(cross, axis=1) / speed**3

    seglen = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arclength = np.concatenate([[0.0], np.cumsum(seglen)])
    return Centerline(phi=phi, points=points, tangents=tangents,
                      curvature=curvature, arclength=arclength)


def transport_frames(points, tangents=None) -> np.ndarray:
    """Rotation-minimizing frames along a polyline (double reflection).

    Returns an (n, 3, 3) array of rows (tangent, normal, binormal).  The
    initial normal points along the curvature direction at the start (so a
    planar curve keeps its normal in-plane), falling back to the coordinate
    axis least aligned with the first tangent on straight starts; frames
    then vary continuously with no flips, which Frenet frames cannot
    guarantee at zero curvature.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points to transport frames")
    seg = np.diff(pts, axis=0)
    seglen = np.linalg.norm(seg, axis=1)
    if np.any(seglen == 0.0):
        raise GeometryError("repeated consecutive points give a degenerate tangent")
    if tangents is None:
        tangents = np.empty_like(pts)
        tangents[0] = seg[0] / seglen[0]
        tangents[-1] = seg[-1] / seglen[-1]
        interior = seg[:-1] / seglen[:-1, None] + seg[1:] / seglen[1:, None]
        tangents[1:-1] = interior / np.linalg.norm(interior, axis=1)[:, None]
    else:
        tangents = np.asarray(tangents, dtype=float)
        tangents = tangents / np.linalg.norm(tangents, axis=1)[:, None]

    t0 = tangents[0]
    normal = None
    if n >= 3:
        turn = seg[1] / seglen[1] - seg[0] / seglen[0]
        turn -= np.dot(turn, t0) * t0
        if np.linalg.norm(turn) > 1e-9:
            normal = turn / np.linalg.norm(turn)
    if normal is None:
        axis = int(np.argmin(np.abs(t0)))
        e = np.zeros(3)
        e[axis] = 1.0
        normal = e - np.dot(e, t0) * t0
        normal /= np.linalg.norm(normal)

    frames = np.empty((n, 3, 3))
    frames[0] = (t0, normal, np.cross(t0, normal))
    r = normal
    for i in range(n - 1):
        v1 = pts[i + 1] - pts[i]
        c1 = v1 @ v1
        r_l = r - (2.0 / c1) * (v1 @ r) * v1
        t_l = tangents[i] - (2.0 / c1) * (v1 @ tangents[i]) * v1
        v2 = tangents[i + 1] - t_l
        c2 = v2 @ v2
        if c2 > 1e-30:
            r = r_l - (2.0 / c2) * (v2 @ r_l) * v2
        else:
            r = r_l
        frames[i + 1] = (tangents[i + 1], r, np.cross(tangents[i + 1], r))
    return frames


def _resample_centerline(path: Centerline, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-arclength resampling of positions; returns (s, points)."""
    s = np.linspace(0.0, path.length, n)
    pts = np.column_stack([
        np.interp(s, path.arclength, path.points[:, k]) for k in range(3)
    ])
    return s, pts


def _axial_ring_radii(station_curves: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Per-angle radii at fractional axial positions, from station curves.

    ``station_curves`` is (n_stations, resolution) at equally spaced
    stations over [0, 1]; ``positions`` are fractions of the tube length.
    Each position uses a local Lagrange quadratic through the three nearest
    stations (active triple switching at station midpoints, clamped at the
    ends), which passes through every station exactly while avoiding the
    global oscillation of a full polynomial.
    """
    n_st = station_curves.shape[0]
    u = np.clip(np.asarray(positions, dtype=float), 0.0, 1.0) * (n_st - 1)
    center = np.clip(np.round(u).astype(int), 1, n_st - 2)
    t = u - center  # in [-1, 1] around the central station
    w_prev = 0.5 * t * (t - 1.0)
    w_mid = 1.0 - t**2
    w_next = 0.5 * t * (t + 1.0)
    return (
        w_prev[:, None] * station_curves[center - 1]
        + w_mid[:, None] * station_curves[center]
        + w_next[:, None] * station_curves[center + 1]
    )


def station_curves_for(sections: CrossSectionParams, end_radius: float,
                       resolution: int) -> np.ndarray:
    """Stack of interpolated station curves with constant-radius ends.

    The n_l parameterised stations are equally spaced between the two
    constant end sections at 0 and L, so the full stack of n_l + 2 stations
    is uniform in arclength.
    """
    curves = [np.full(resolution, float(end_radius))]
    for row in sections.radii:
        curves.append(interpolate_cross_section(row, resolution))
    curves.append(np.full(resolution, float(end_radius)))
    return np.asarray(curves)


def loft_surface(cross_sections: CrossSectionParams, path: Centerline,
                 axial_sections: int | None = None,
                 ring_resolution: int = DEFAULT_RING_RESOLUTION,
                 *, end_radius: float | None = None) -> ReactorSurface:
    """Open tube surface lofted from station curves along the path.

    Rings are placed at ``axial_sections`` equal-arclength stations (default
    one per path sample); each ring's per-angle radius interpolates the
    station curves quadratically and the ring is embedded in that station's
    rotation-minimizing frame.  Consecutive rings are stitched with
    quad-split triangles wound outward.  The two end rings use the constant
    ``end_radius`` so ports can attach; the result is open until
    :func:`add_ports` caps it.
    """
    n_rings = axial_sections if axial_sections is not None else path.points.shape[0]
    if n_rings < 2:
        raise ValueError("need at least 2 rings")
    if end_radius is None:
        end_radius = 0.5 * (RADIUS_BOUNDS[0] + RADIUS_BOUNDS[1])
    curves = station_curves_for(cross_sections, end_radius, ring_resolution)

    s, centers = _resample_centerline(path, n_rings)
    frames = transport_frames(centers)
    radii = _axial_ring_radii(curves, s / s[-1])
    if np.min(radii) <= MIN_CROSS_SECTION_RADIUS:
        k = int(np.argmin(np.min(radii, axis=1)))
        raise GeometryError(
            f"degenerate lofted radius near arclength {s[k]:.2f} mm"
        )

    angles = section_angles(ring_resolution)
    cos_a, sin_a = np.cos(angles), np.sin(angles)
    normals = frames[:, 1, :]
    binormals = frames[:, 2, :]
    offsets = (
        radii[:, :, None] * (cos_a[None, :, None] * normals[:, None, :]
                             + sin_a[None, :, None] * binormals[:, None, :])
    )
    vertices = (centers[:, None, :] + offsets).reshape(-1, 3)

    tri = _tube_triangles(n_rings, ring_resolution)
    markers = {
        "ring_resolution": ring_resolution,
        "inlet_ring": np.arange(ring_resolution, dtype=np.int64),
        "outlet_ring": np.arange((n_rings - 1) * ring_resolution,
                                 n_rings * ring_resolution, dtype=np.int64),
        "inlet_center": centers[0],
        "outlet_center": centers[-1],
        "inlet_tangent": frames[0, 0],
        "outlet_tangent": frames[-1, 0],
        "ring_spacing": float(s[-1] / (n_rings - 1)),
        "end_radius": float(end_radius),
        "ring_radii": radii,
        "ring_arclength": s,
    }
    return ReactorSurface(vertices=vertices, triangles=tri, port_markers=markers)


def _tube_triangles(n_rings: int, v: int) -> np.ndarray:
    """Quad-split triangle strip between consecutive rings, outward wound."""
    k = np.arange(n_rings - 1)[:, None]
    j = np.arange(v)[None, :]
    jn = (j + 1) % v
    a = k * v + j
    b = k * v + jn
    c = (k + 1) * v + jn
    d = (k + 1) * v + j
    t1 = np.stack([a, b, c], axis=-1).reshape(-1, 3)
    t2 = np.stack([a, c, d], axis=-1).reshape(-1, 3)
    return np.vstack([t1, t2]).astype(np.int32)


def add_ports(surface: ReactorSurface, inlet_length: float = DEFAULT_PORT_LENGTH,
              outlet_length: float = DEFAULT_PORT_LENGTH) -> ReactorSurface:
    """Extrude the constant-radius end rings into ports and cap both ends.

    Each port extends the end ring along the end tangent, subdivided so
    port triangles stay comparable in size to tube triangles, and is closed
    with a fan-triangulated disk.  Watertightness is preserved: every added
    edge is shared by exactly two triangles.

    Raises
    ------
    GeometryError
        If an end ring is not circular (constant radius contract).
    """
    m = surface.port_markers
    if not m or "inlet_ring" not in m:
        raise GeometryError("surface carries no port markers")
    v = int(m["ring_resolution"])
    verts = [surface.vertices]
    tris = [surface.triangles.copy()]
    next_index = surface.n_vertices
    spacing = float(m.get("ring_spacing", 1.0))

    def check_circular(ring_idx, center):
        ring = surface.vertices[ring_idx]
        radii = np.linalg.norm(ring - center, axis=1)
        if (radii.max() - radii.min()) > 1e-6 + 1e-3 * radii.mean():
            raise GeometryError("port end ring is not circular")

    groups = {}
    for name, direction in (("inlet", -1.0), ("outlet", 1.0)):
        ring_idx = np.asarray(m[f"{name}_ring"], dtype=np.int64)
        center = np.asarray(m[f"{name}_center"], dtype=float)
        tangent = np.asarray(m[f"{name}_tangent"], dtype=float)
        length = inlet_length if name == "inlet" else outlet_length
        check_circular(ring_idx, center)
        tri_start = sum(t.shape[0] for t in tris)

        last_ring = ring_idx
        if length > 0:
            n_seg = max(1, int(np.ceil(length / max(spacing, 1e-9))))
            base = surface.vertices[ring_idx]
            for k in range(1, n_seg + 1):
                offset = direction * tangent * (length * k / n_seg)
                new_ring = base + offset
                verts.append(new_ring)
                new_idx = np.arange(next_index, next_index + v, dtype=np.int64)
                next_index += v
                tris.append(_strip_between(last_ring, new_idx, outward=direction > 0))
                last_ring = new_idx

        # Cap: fan around the centroid of the final ring.
        cap_center = np.mean(np.vstack(verts).reshape(-1, 3)[last_ring], axis=0)
        verts.append(cap_center[None, :])
        center_idx = next_index
        next_index += 1
        j = np.arange(v)
        jn = (j + 1) % v
        if direction > 0:
            fan = np.column_stack([last_ring[j], last_ring[jn],
                                   np.full(v, center_idx)])
        else:
            fan = np.column_stack([last_ring[jn], last_ring[j],
                                   np.full(v, center_idx)])
        tris.append(fan.astype(np.int32))
        groups[f"{name}_faces"] = (tri_start, sum(t.shape[0] for t in tris))

    markers = dict(m)
    markers.update(groups)
    return ReactorSurface(
        vertices=np.vstack(verts),
        triangles=np.vstack(tris).astype(np.int32),
        port_markers=markers,
    )


def _strip_between(ring_a, ring_b, outward: bool) -> np.ndarray:
    v = ring_a.size
    j = np.arange(v)
    jn = (j + 1) % v
    if outward:
        t1 = np.column_stack([ring_a[j], ring_a[jn], ring_b[jn]])
        t2 = np.column_stack([ring_a[j], ring_b[jn], ring_b[j]])
    else:
        t1 = np.column_stack([ring_a[jn], ring_a[j], ring_b[j]])
        t2 = np.column_stack([ring_a[jn], ring_b[j], ring_b[jn]])
    return np.vstack([t1, t2]).astype(np.int32)


def build_reactor_surface(parameterisation: str, x, nominal: NominalCoil = NominalCoil(),
                          *, n_c: int | None = None, n_l: int | None = None,
                          rings_per_turn: int = DEFAULT_RINGS_PER_TURN,
                          ring_resolution: int = DEFAULT_RING_RESOLUTION,
                          inlet_length: float = DEFAULT_PORT_LENGTH,
                          outlet_length: float = DEFAULT_PORT_LENGTH,
                          frozen_path: PathParams | None = None) -> ReactorSurface:
    """Closed reactor surface for a parameter vector.

    ``parameterisation`` is ``"cross-section"`` (x = row-major inducing
    radii; path is the nominal helix, or ``frozen_path`` when given) or
    ``"coil-path"`` (x = [delta_rho..., delta_z...]; constant circular
    cross-section).

    Triangle count is exactly ``2 * ring_resolution * R`` with
    ``R = rings_per_turn * turns + 1`` path rings plus
    ``ceil(length / ring_spacing)`` rings per port.
    """
    n_c = n_c if n_c is not None else nominal.n_c
    n_l = n_l if n_l is not None else nominal.n_l
    samples = rings_per_turn * nominal.turns + 1
    if parameterisation == "cross-section":
        sections = CrossSectionParams.from_vector(x, n_l, n_c)
        path_params = frozen_path if frozen_path is not None else PathParams.zeros(nominal.n_p)
    elif parameterisation == "coil-path":
        sections = CrossSectionParams.constant(nominal.tube_radius, 2, n_c)
        path_params = PathParams.from_vector(x, nominal.n_p)
    else:
        raise ValueError(f"unknown parameterisation: {parameterisation!r}")
    path = build_path(path_params, nominal, samples=samples)
    tube = loft_surface(sections, path, axial_sections=samples,
                        ring_resolution=ring_resolution,
                        end_radius=nominal.tube_radius)
    return add_ports(tube, inlet_length, outlet_length)


def expected_triangle_count(nominal: NominalCoil, rings_per_turn: int,
                            ring_resolution: int, inlet_length: float,
                            outlet_length: float) -> int:
    """Exact triangle count of :func:`build_reactor_surface` output."""
    samples = rings_per_turn * nominal.turns + 1
    path = build_path(PathParams.zeros(nominal.n_p), nominal, samples=samples)
    spacing = path.length / (samples - 1)
    rings = samples
    for length in (inlet_length, outlet_length):
        if length > 0:
            rings += max(1, int(np.ceil(length / spacing)))
    return 2 * ring_resolution * rings


def export_stl(surface: ReactorSurface, header: bytes = b"coilopt reactor surface") -> bytes:
    """Binary little-endian STL bytes for the surface.

    Layout: 80-byte header, uint32 triangle count, then per triangle a unit
    normal recomputed from the winding, three vertices (float32 each) and a
    zero uint16 attribute.  Output is byte-deterministic for identical
    input.
    """
    n_tri = surface.n_triangles
    if n_tri >= 2**32:
        raise ValueError("triangle count exceeds the uint32 STL limit")
    tri = surface.vertices[surface.triangles]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norms = np.linalg.norm(normals, axis=1)
    safe = norms > 0
    normals[safe] /= norms[safe, None]
    normals[~safe] = 0.0

    record = np.dtype([
        ("normal", "<f4", 3),
        ("verts", "<f4", (3, 3)),
        ("attr", "<u2"),
    ])
    body = np.zeros(n_tri, dtype=record)
    body["normal"] = normals.astype("<f4")
    body["verts"] = tri.astype("<f4")
    out = bytearray(header[:80].ljust(80, b"\0"))
    out += struct.pack("<I", n_tri)
    out += body.tobytes()
    return bytes(out)


@dataclass
class GeometryReport:
    """Diagnostics from :func:`validate_geometry`."""

    watertight: bool
    boundary_edges: int
    nonmanifold_edges: int
    winding_consistent: bool
    self_intersecting: bool
    intersecting_pairs: list
    volume: float
    total_area: float
    min_radius: float | None
    max_radius: float | None

    @property
    def clean(self) -> bool:
        return self.watertight and self.winding_consistent and not self.self_intersecting


def validate_geometry(surface: ReactorSurface,
                      check_self_intersection: bool = True,
                      max_reported_pairs: int = 16) -> GeometryReport:
    """Mesh diagnostics: manifoldness, winding, intersections, volume.

    Watertight means every undirected edge is shared by exactly two
    triangles; winding is consistent when each such edge is traversed once
    in each direction.  Self-intersection runs an edge-against-triangle
    sweep over candidate pairs found with a spatial tree, skipping pairs
    that share a vertex.  Volume uses the divergence theorem (positive for
    outward winding); cross-section radii come from loft metadata when
    present.
    """
    tris = surface.triangles
    verts = surface.vertices
    edges = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    directed = edges[:, 0].astype(np.int64) * surface.n_vertices + edges[:, 1]
    undirected = (np.minimum(edges[:, 0], edges[:, 1]).astype(np.int64) * surface.n_vertices
                  + np.maximum(edges[:, 0], edges[:, 1]))
    _, und_counts = np.unique(undirected, return_counts=True)
    boundary = int(np.sum(und_counts == 1))
    nonmanifold = int(np.sum(und_counts > 2))
    watertight = boundary == 0 and nonmanifold == 0
    _, dir_counts = np.unique(directed, return_counts=True)
    winding_consistent = bool(np.all(dir_counts == 1)) and watertight

    p = verts[tris]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    volume = float(np.sum(np.einsum("ij,ij->i", p[:, 0], cross)) / 6.0)
    total_area = float(np.sum(np.linalg.norm(cross, axis=1)) / 2.0)

    pairs = []
    intersecting = False
    if check_self_intersection:
        pairs = _self_intersections(verts, tris, max_reported_pairs)
        intersecting = len(pairs) > 0

    radii = surface.port_markers.get("ring_radii")
    return GeometryReport(
        watertight=watertight,
        boundary_edges=boundary,
        nonmanifold_edges=nonmanifold,
        winding_consistent=winding_consistent,
        self_intersecting=intersecting,
        intersecting_pairs=pairs,
        volume=volume,
        total_area=total_area,
        min_radius=float(np.min(radii)) if radii is not None else None,
        max_radius=float(np.max(radii)) if radii is not None else None,
    )


def _self_intersections(verts: np.ndarray, tris: np.ndarray, max_pairs: int) -> list:
    """Transversal triangle-triangle intersections among non-adjacent pairs."""
    p = verts[tris]
    centroids = p.mean(axis=1)
    half_diag = np.max(np.linalg.norm(p - centroids[:, None, :], axis=2), axis=1)
    radius = 2.0 * float(np.max(half_diag)) + 1e-9
    tree = cKDTree(centroids)
    cand = tree.query_pairs(radius, output_type="ndarray")
    if cand.size == 0:
        return []
    # Drop pairs sharing any vertex index (mesh-adjacent triangles).
    a = tris[cand[:, 0]]
    b = tris[cand[:, 1]]
    shared = (
        (a[:, :, None] == b[:, None, :]).any(axis=(1, 2))
    )
    cand = cand[~shared]
    if cand.size == 0:
        return []
    # AABB prefilter.
    lo = p.min(axis=1)
    hi = p.max(axis=1)
    eps = 1e-9
    overlap = np.all(
        (lo[cand[:, 0]] <= hi[cand[:, 1]] + eps) & (lo[cand[:, 1]] <= hi[cand[:, 0]] + eps),
        axis=1,
    )
    cand = cand[overlap]
    if cand.size == 0:
        return []

    hits = np.zeros(cand.shape[0], dtype=bool)
    for src, dst in ((0, 1), (1, 0)):
        tri_pts = p[cand[:, dst]]
        seg_tri = p[cand[:, src]]
        for e0, e1 in ((0, 1), (1, 2), (2, 0)):
            hits |= _segment_hits_triangle(seg_tri[:, e0], seg_tri[:, e1], tri_pts)
    bad = cand[hits]
    return [tuple(map(int, pair)) for pair in bad[:max_pairs]]


def _segment_hits_triangle(p0, p1, tri) -> np.ndarray:
    """Vectorised Moller-Trumbore segment/triangle test."""
    eps = 1e-12
    d = p1 - p0
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    h = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = p0 - tri[:, 0]
    u = np.einsum("ij,ij->i", s, h) * inv
    q = np.cross(s, e1)
    v = np.einsum("ij,ij->i", d, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    tol = 1e-9
    return (
        ok
        & (u >= -tol) & (v >= -tol) & (u + v <= 1.0 + tol)
        & (t >= -tol) & (t <= 1.0 + tol)
    )
