"""Fidelity-aware reduced-order flow evaluator for coil designs.

The evaluator contract: ``evaluate(x, z, seed) -> SimulationResult`` maps a
design parameter vector and a pair of continuous fidelities (rounded to
integers on evaluation) to an outlet tracer series plus a simulated compute
cost.  The built-in implementation composes geometry feature extraction, a
per-cell effective dispersion profile, and a finite-volume multi-channel
advection-dispersion solve; any external solver can replace it behind the
same contract (see the HTTP service for the wire form).

Physics constants here are surrogate-only stand-ins, chosen so that
directional trends hold: stronger secondary flow (Dean proxy) and sharper
cross-section pinching suppress axial dispersion, pushing behaviour toward
plug flow.  All constants live on :class:`SurrogateConfig` and are
documented there.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    CrossSectionParams,
    GeometryError,
    NominalCoil,
    PathParams,
    RADIUS_BOUNDS,
    RHO_BOUNDS,
    Z_BOUNDS,
    _axial_ring_radii,
    build_path,
    station_curves_for,
)

FIDELITY_BOUNDS = ((1.0, 4.0), (1.0, 4.0))

CROSS_SECTION = "cross-section"
COIL_PATH = "coil-path"
PARAMETERISATIONS = (CROSS_SECTION, COIL_PATH)


class BoundsError(ValueError):
    """Input outside its declared box; ``field`` names the offending entry."""

    def __init__(self, message: str, fieldname: str | None = None):
        super().__init__(message)
        self.field = fieldname


class SolverError(RuntimeError):
    """Non-finite state or other internal solver failure."""


@dataclass(frozen=True)
class FidelityVector:
    """Axial and radial simulation fidelities.

    Treated as continuous during modelling and optimisation; rounded to the
    nearest integer whenever a simulation is evaluated or stored.
    """

    axial: float
    radial: float

    def rounded(self) -> tuple[int, int]:
        return int(round(self.axial)), int(round(self.radial))

    def validate(self, bounds=FIDELITY_BOUNDS) -> None:
        for name, value, (lo, hi) in zip(("axial", "radial"),
                                         (self.axial, self.radial), bounds):
            if not (lo <= value <= hi):
                raise BoundsError(f"fidelity {name}={value} outside [{lo}, {hi}]",
                                  fieldname=f"z.{name}")


@dataclass
class GeometryFeatures:
    """Per-axis-cell geometry summaries used by the dispersion model.

    All arrays share one length (the axial cell count); areas are positive
    and the pinch index (min/max ring radius) lies in (0, 1].
    """

    area: np.ndarray               # mm^2
    hydraulic_radius: np.ndarray   # mm, 2 A / P (equals tube radius for circles)
    curvature: np.ndarray          # 1/mm
    pinch: np.ndarray              # dimensionless, min/max ring radius
    dean: np.ndarray               # Re sqrt(hydraulic radius * curvature)
    path_length: float             # mm
    flow_rate: float               # mm^3/s

    def __post_init__(self):
        n = self.area.size
        for name in ("hydraulic_radius", "curvature", "pinch", "dean"):
            if getattr(self, name).size != n:
                raise ValueError("feature arrays must share one length")
        if np.any(self.area <= 0):
            raise ValueError("cell areas must be positive")
        if np.any((self.pinch <= 0) | (self.pinch > 1.0 + 1e-12)):
            raise ValueError("pinch index must lie in (0, 1]")

    @property
    def n_cells(self) -> int:
        return self.area.size


@dataclass
class SimulationResult:
    """Outlet tracer series plus bookkeeping for one evaluation.

    The series terminates once the post-peak outlet signal falls below the
    termination threshold; the concentration integral over time recovers the
    injected (unit) mass to within half a percent at every fidelity.
    """

    times: np.ndarray
    concentrations: np.ndarray
    cost: float
    fidelity_used: tuple[int, int]
    seed: int

    def mass_recovered(self) -> float:
        return float(np.trapezoid(self.concentrations, self.times))


@dataclass(frozen=True)
class SurrogateConfig:
    """Constants of the reduced-order surrogate (all surrogate-only).

    The operating point fixes the flow rate from the Reynolds number at the
    nominal tube diameter; geometry then modulates the local velocity
    through continuity.  The dispersion modifier
    ``g = g_min + (1 - g_min) exp(-a De - b (1 - pinch))`` is bounded in
    [g_min, 1] and strictly decreasing in both the Dean proxy and the pinch
    depth; ``dean_sensitivity`` (a) is small because the Dean proxy is O(20)
    at the nominal coil and a unit coefficient would saturate the response.
    """

    reynolds: float = 50.0
    kinematic_viscosity: float = 1.0       # mm^2/s (water)
    molecular_diffusivity: float = 1.0     # mm^2/s, surrogate base diffusivity
    g_min: float = 0.2
    dean_sensitivity: float = 0.05         # a
    pinch_sensitivity: float = 1.0         # b
    exchange_dean_gain: float = 0.2        # secondary flow boosts channel exchange
    base_cells_per_turn: int = 50
    noise_relative: float = 0.02           # sigma0, relative to local concentration
    termination_fraction: float = 0.01     # of the post-peak outlet maximum
    cfl_safety: float = 0.8
    max_time_factor: float = 12.0          # hard stop at this multiple of tbar
    cost_coefficient: float = 2.66e-7      # calibrated: max-fidelity nominal ~ 10 s
    cost_model_coefficient: float = 1.5625e-3
    fidelity_bounds: tuple = FIDELITY_BOUNDS
    ring_samples: int = 64

    def mean_velocity(self, tube_radius: float) -> float:
        # Re = u d_h / nu with d_h the nominal tube diameter.
        return self.reynolds * self.kinematic_viscosity / (2.0 * tube_radius)

    def flow_rate(self, tube_radius: float) -> float:
        return self.mean_velocity(tube_radius) * np.pi * tube_radius**2


def extract_features(x, nominal: NominalCoil = NominalCoil(), *,
                     parameterisation: str = CROSS_SECTION,
                     n_cells: int, n_c: int | None = None, n_l: int | None = None,
                     frozen_path: PathParams | None = None,
                     config: SurrogateConfig = SurrogateConfig()) -> GeometryFeatures:
    """Geometry features at ``n_cells`` axial stations for a design vector.

    Samples the same station curves and axial interpolation the mesh lofting
    uses, so features are consistent with the exported surface, without
    building triangles.
    """
    n_c = n_c if n_c is not None else nominal.n_c
    n_l = n_l if n_l is not None else nominal.n_l
    if parameterisation == CROSS_SECTION:
        sections = CrossSectionParams.from_vector(x, n_l, n_c)
        path_params = frozen_path if frozen_path is not None else PathParams.zeros(nominal.n_p)
    elif parameterisation == COIL_PATH:
        sections = CrossSectionParams.constant(nominal.tube_radius, 2, n_c)
        path_params = PathParams.from_vector(x, nominal.n_p)
    else:
        raise ValueError(f"unknown parameterisation: {parameterisation!r}")

    samples = max(4 * n_cells + 1, 129)
    path = build_path(path_params, nominal, samples=samples)
    curves = station_curves_for(sections, nominal.tube_radius, config.ring_samples)

    length = path.length
    centers = (np.arange(n_cells) + 0.5) * (length / n_cells)
    radii = _axial_ring_radii(curves, centers / length)

    k = config.ring_samples
    dtheta = 2.0 * np.pi / k
    area = 0.5 * np.sum(radii**2, axis=1) * dtheta
    drdtheta = (np.roll(radii, -1, axis=1) - np.roll(radii, 1, axis=1)) / (2.0 * dtheta)
    perimeter = np.sum(np.sqrt(radii**2 + drdtheta**2), axis=1) * dtheta
    hydraulic_radius = 2.0 * area / perimeter
    pinch = np.min(radii, axis=1) / np.max(radii, axis=1)
    curvature = np.interp(centers, path.arclength, path.curvature)
    dean = config.reynolds * np.sqrt(np.maximum(hydraulic_radius * curvature, 0.0))

    return GeometryFeatures(
        area=area,
        hydraulic_radius=hydraulic_radius,
        curvature=curvature,
        pinch=pinch,
        dean=dean,
        path_length=length,
        flow_rate=config.flow_rate(nominal.tube_radius),
    )


def dispersion_profile(features: GeometryFeatures, re: float | None = None,
                       config: SurrogateConfig = SurrogateConfig()) -> np.ndarray:
    """Per-cell effective axial dispersion coefficients (mm^2/s).

    Base dispersion follows the Taylor-Aris form at the local velocity and
    hydraulic radius; the bounded modifier ``g`` suppresses it where the
    Dean proxy is large or the ring is pinched, mirroring the physical
    mechanism by which secondary flow redistributes streamwise velocity.
    A straight unpinched tube has g = 1 exactly.
    """
    del re  # the Reynolds number is baked into the Dean proxy and flow rate
    dm = config.molecular_diffusivity
    u = features.flow_rate / features.area
    d_base = dm + (u * features.hydraulic_radius) ** 2 / (48.0 * dm)
    g = config.g_min + (1.0 - config.g_min) * np.exp(
        -config.dean_sensitivity * features.dean
        - config.pinch_sensitivity * (1.0 - features.pinch)
    )
    return d_base * g


def _channel_velocity_factors(m: int) -> np.ndarray:
    """Mean laminar-profile velocity in m equal-area annular bins.

    Parabolic profile u(r) = 2 u_mean (1 - (r/R)^2) averaged over equal-area
    annuli; flow-weighted mean is u_mean exactly.
    """
    k = np.arange(1, m + 1)
    return 2.0 * (1.0 - (2.0 * k - 1.0) / (2.0 * m))


def simulate_rtd(features: GeometryFeatures, dispersion: np.ndarray,
                 z: FidelityVector, seed: int = 0,
                 config: SurrogateConfig = SurrogateConfig()) -> SimulationResult:
    """Finite-volume impulse-tracer solve; returns the outlet series.

    An explicit flux-conservative advection-dispersion system over the axial
    cells, split into ``radial`` cross-stream sub-channels with laminar
    velocity shear and symmetric inter-channel exchange.  The step size is
    chosen from the stability bound, so the scheme cannot violate it.  The
    solve terminates once the post-peak outlet signal drops below the
    termination fraction of its maximum; lower fidelities carry the
    discretisation bias of their coarser grids plus a seed-controlled
    multiplicative noise whose amplitude vanishes at the highest fidelity.
    Cost is ``c0 * cells * channels^2 * steps`` in simulated seconds.
    """
    axial, radial = z.rounded()
    n = features.n_cells
    m = radial
    dx = features.path_length / n
    q_total = features.flow_rate
    vol = (features.area * dx)[None, :] / m                      # (1, n) per channel
    v_factors = _channel_velocity_factors(m)
    q = (q_total * v_factors / m)[:, None]                       # (m, 1) channel flows

    d_face = 0.5 * (dispersion[:-1] + dispersion[1:])
    a_face = 0.5 * (features.area[:-1] + features.area[1:])
    dcoef = (d_face * a_face / (m * dx))[None, :]                # (1, n-1)

    dm = config.molecular_diffusivity
    beta = (dm / features.hydraulic_radius**2) * (1.0 + config.exchange_dean_gain * features.dean)
    beta_v = (beta * features.area * dx / m)[None, :]            # (1, n) volumetric exchange

    # Stability: per-cell loss rate from advection, dispersion, and exchange.
    rate = q / vol
    rate = rate + np.pad(dcoef, ((0, 0), (1, 0)))[:, :n] / vol
    rate = rate + np.pad(dcoef, ((0, 0), (0, 1)))[:, :n] / vol
    if m > 1:
        rate = rate + 2.0 * beta_v / vol
    dt = config.cfl_safety / float(np.max(rate))

    tbar = float(np.sum(features.area) * dx / q_total)
    max_steps = int(np.ceil(config.max_time_factor * tbar / dt))

    mass = np.zeros((m, n))
    mass[:, 0] = (v_factors / m)  # unit impulse injected with the feed split
    outlet = [0.0]
    peak = 0.0
    peak_step = 0
    threshold = config.termination_fraction
    step = 0
    while step < max_steps:
        c = mass / vol
        adv = q * c
        flux_out = float(adv[:, -1].sum())
        dmass = -adv
        dmass[:, 1:] += adv[:, :-1]
        grad = dcoef * (c[:, 1:] - c[:, :-1])
        dmass[:, :-1] += grad
        dmass[:, 1:] -= grad
        if m > 1:
            ex = beta_v * (c[1:, :] - c[:-1, :])
            dmass[:-1] += ex
            dmass[1:] -= ex
        mass += dt * dmass
        step += 1
        outlet.append(flux_out)
        if flux_out > peak:
            peak = flux_out
            peak_step = step
        elif peak > 0.0 and step > peak_step and flux_out < threshold * peak:
            break
    if not np.all(np.isfinite(mass)):
        raise SolverError("non-finite solver state")

    times = np.arange(len(outlet)) * dt
    series = np.asarray(outlet)

    lo, hi = np.asarray(config.fidelity_bounds).T
    z_norm = float(np.mean((np.array([axial, radial]) - lo) / (hi - lo)))
    sigma = config.noise_relative * (1.0 - z_norm)
    if sigma > 0.0:
        rng = np.random.default_rng(seed)
        eps = np.clip(rng.standard_normal(series.size) * sigma, -0.9, None)
        noisy = series * (1.0 + eps)
        base_mass = np.trapezoid(series, times)
        noisy_mass = np.trapezoid(noisy, times)
        if noisy_mass > 0:
            # Rescale so the multiplicative noise stays mass-neutral.
            series = noisy * (base_mass / noisy_mass)

    cost = config.cost_coefficient * n * m**2 * step
    return SimulationResult(times=times, concentrations=series, cost=cost,
                            fidelity_used=(axial, radial), seed=seed)


def cost_model(z: FidelityVector, path_length: float,
               nominal: NominalCoil = NominalCoil(),
               config: SurrogateConfig = SurrogateConfig()) -> float:
    """A-priori cost index: c0 * cells(axial) * radial^2 * relative length.

    Strictly increasing in each fidelity coordinate.  This predicts the
    scale of an evaluation before running it; the recorded cost of an actual
    solve additionally reflects the executed step count.
    """
    base_cells = config.base_cells_per_turn * nominal.turns
    return float(
        config.cost_model_coefficient
        * base_cells * z.axial * z.radial**2
        * (path_length / nominal.nominal_length)
    )


class SurrogateEvaluator:
    """Built-in evaluator for one parameterisation of the coil geometry.

    Satisfies the evaluator contract: deterministic for fixed
    (x, rounded z, seed); geometry failures raise :class:`GeometryError`
    and propagate to the caller, which records them without aborting a
    campaign.
    """

    def __init__(self, parameterisation: str = CROSS_SECTION,
                 nominal: NominalCoil = NominalCoil(), *,
                 n_c: int | None = None, n_l: int | None = None,
                 frozen_path: PathParams | np.ndarray | None = None,
                 config: SurrogateConfig = SurrogateConfig()):
        if parameterisation not in PARAMETERISATIONS:
            raise ValueError(f"unknown parameterisation: {parameterisation!r}")
        self.parameterisation = parameterisation
        self.nominal = nominal
        self.n_c = n_c if n_c is not None else nominal.n_c
        self.n_l = n_l if n_l is not None else nominal.n_l
        self.config = config
        if frozen_path is not None and not isinstance(frozen_path, PathParams):
            frozen_path = PathParams.from_vector(frozen_path, nominal.n_p)
        self.frozen_path = frozen_path

    @property
    def dim_x(self) -> int:
        if self.parameterisation == CROSS_SECTION:
            return self.n_l * self.n_c
        return 2 * self.nominal.n_p

    @property
    def x_bounds(self) -> np.ndarray:
        if self.parameterisation == CROSS_SECTION:
            return np.tile(RADIUS_BOUNDS, (self.dim_x, 1)).astype(float)
        n_p = self.nominal.n_p
        return np.array([RHO_BOUNDS] * n_p + [Z_BOUNDS] * n_p, dtype=float)

    @property
    def x_labels(self) -> tuple[str, ...]:
        if self.parameterisation == CROSS_SECTION:
            return tuple(f"s{j}_r{i}" for j in range(self.n_l) for i in range(self.n_c))
        n_p = self.nominal.n_p
        return tuple([f"drho{j}" for j in range(n_p)] + [f"dz{j}" for j in range(n_p)])

    @property
    def z_bounds(self) -> np.ndarray:
        return np.asarray(self.config.fidelity_bounds, dtype=float)

    def validate_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        bounds = self.x_bounds
        if x.size != bounds.shape[0]:
            raise BoundsError(
                f"expected {bounds.shape[0]} parameters, got {x.size}", fieldname="x"
            )
        low_bad = x < bounds[:, 0]
        high_bad = x > bounds[:, 1]
        if np.any(low_bad | high_bad):
            i = int(np.argmax(low_bad | high_bad))
            raise BoundsError(
                f"x[{i}] = {x[i]} outside [{bounds[i, 0]}, {bounds[i, 1]}]"
                f" ({self.x_labels[i]})",
                fieldname=f"x[{i}]",
            )
        return x

    def evaluate(self, x, z, seed: int = 0) -> SimulationResult:
        x = self.validate_x(x)
        if not isinstance(z, FidelityVector):
            z = FidelityVector(*np.asarray(z, dtype=float).ravel())
        z.validate(self.config.fidelity_bounds)
        axial, _ = z.rounded()
        n_cells = int(round(self.config.base_cells_per_turn * self.nominal.turns * axial))
        features = extract_features(
            x, self.nominal, parameterisation=self.parameterisation,
            n_cells=n_cells, n_c=self.n_c, n_l=self.n_l,
            frozen_path=self.frozen_path, config=self.config,
        )
        dispersion = dispersion_profile(features, config=self.config)
        return simulate_rtd(features, dispersion, z, seed=seed, config=self.config)

    def with_frozen_path(self, path_vector) -> "SurrogateEvaluator":
        """Cross-section evaluator over a fixed (frozen) coil path."""
        return SurrogateEvaluator(
            CROSS_SECTION, self.nominal, n_c=self.n_c, n_l=self.n_l,
            frozen_path=path_vector, config=self.config,
        )
