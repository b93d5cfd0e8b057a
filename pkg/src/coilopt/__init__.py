"""Coiled-tube reactor design toolkit.

Parametric tube geometries (variable cross-section and coil path), a
fidelity-aware reduced-order flow evaluator, tanks-in-series residence-time
objectives, and a cost-adjusted multi-fidelity Bayesian optimisation loop,
plus campaign persistence, convergence analysis, a CLI, and an HTTP
benchmark service.
"""

__version__ = "0.1.0"

from .gp import (  # noqa: F401
    ARD_SE,
    POLAR,
    GPModel,
    KernelSpec,
    ard_se_kernel,
    fit_hyperparameters,
    gp_posterior,
    polar_distance,
    polar_kernel,
)
from .geometry import (  # noqa: F401
    CrossSectionParams,
    NominalCoil,
    PathParams,
    ReactorSurface,
    add_ports,
    build_path,
    build_reactor_surface,
    export_stl,
    interpolate_cross_section,
    loft_surface,
    transport_frames,
    validate_geometry,
)
from .rtd import (  # noqa: F401
    RTDCurve,
    TanksFit,
    composite_objective,
    fit_tanks,
    normalize_rtd,
    tanks_model,
)
from .flow import (  # noqa: F401
    FidelityVector,
    GeometryFeatures,
    SimulationResult,
    SurrogateConfig,
    SurrogateEvaluator,
    cost_model,
    dispersion_profile,
    extract_features,
    simulate_rtd,
)
from .campaign import (  # noqa: F401
    CampaignConfig,
    CampaignState,
    DesignSpace,
    Evaluation,
    ObjectiveEvaluator,
    acquisition,
    doe_sample,
    finalize,
    fit_cost_gp,
    fit_objective_gp,
    maximize_acquisition,
    resume_campaign,
    run_campaign,
    run_sequential_joint,
    should_stop,
)
from .analysis import (  # noqa: F401
    VariabilityReport,
    export_embedding_data,
    lengthscale_history,
    parameter_variability,
)
