"""heatlab: weighted heat flow, curvature bounds, and entropy functionals
on discretized 1-D model geometries.

The package builds weighted model spaces (circles, reflecting intervals,
truncated lines, radial reductions of rotationally symmetric metrics),
assembles the weighted Laplacian in divergence form, runs heat flow and
spectral heat kernels on them, and then checks a battery of sharp
inequalities and identities: differential Harnack bounds, kernel envelope
and log-derivative estimates, entropy monotonicity and rigidity, diffusion
bridge identities, and log-Sobolev constants.  Every check returns a
CheckReport with an explicit margin; nothing passes silently.
"""

from .geometry import (
    KINDS,
    ModelSpace,
    Potential,
    Warp,
    ball_inside,
    ball_volume,
    bishop_gromov_check,
    build_space,
    comparison_volume,
    constant_potential,
    cosine_potential,
    geodesic_distance,
    quadratic_potential,
    ric_l,
    ric_mn,
    sphere_area,
    tabulated_potential,
    tabulated_potential_from_csv,
    volume_ratio_check,
)
from .operators import (
    DiscreteOperator,
    assemble,
    bochner_defect,
    dirichlet_form,
    face_weights,
    gradient,
    hessian,
    ibp_defect,
    operator_from_json,
    row_sum_defect,
    symmetry_defect,
)
from .heatflow import (
    AnalyticGaussianKernel,
    AnalyticOUKernel,
    HeatKernel,
    HeatSolution,
    HJDefect,
    bump_density,
    hamilton_jacobi_defect,
    kernel,
    normalize,
    solve,
    two_bump_density,
    uniform_density,
)
from .entropy import (
    EntropyTrace,
    boltzmann_entropy,
    dissipation_identity,
    entropy_derivatives,
    fisher_information,
    geometric_times,
    h_m_entropy,
    h_m_trace,
    w_dissipation,
    w_entropy,
    w_entropy_via_rate,
    w_monotonicity,
    w_rigidity,
)
from .harnack import (
    coefficient_dominance_margin,
    drift_verdict,
    harnack_coefficient,
    harnack_drift_form,
    harnack_hamilton,
    harnack_improved,
    kernel_gaussian_bounds,
    lambda_km,
    liouville_check,
    log_kernel_gradient,
    log_kernel_gradient_n2,
    lsi_semigroup,
    sinh_ratio,
)
from .stochastic import (
    DiffusionEnsemble,
    bridge_energy_identity,
    dump_paths,
    empirical_law_distance,
    export_moments_csv,
    girsanov_consistency,
    gradient_energy_derivative,
    harnack_via_bridge,
    load_paths,
    psi_weight,
    simulate,
    simulate_bridge,
    supermartingale_h,
)
from .lsi import (
    MuEstimate,
    lsi_check,
    minimize_mu,
    mu_lower_bound_scan,
    w_gradient,
    w_of_v,
)
from .reports import FAIL, INCONCLUSIVE, PASS, CheckReport, make_report

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
