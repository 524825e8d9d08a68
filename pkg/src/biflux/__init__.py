"""biflux: a laboratory for 1D lattice systems with two conservation laws.

Validate a model against the structural conditions, compute its
equilibrium thermodynamics and macroscopic fluxes, solve the predicted
pair of decoupled scalar waves for small perturbations, and check the
prediction against event-driven Monte Carlo and exact small-system
evolution.
"""

__version__ = "0.1.0"

from .model import (
    ModelSpec,
    ValidationReport,
    compute_Q,
    load_model_spec,
    parse_model_spec,
    synthesize_model,
    synthesize_rates,
    two_lane_tasep,
    two_species_exclusion,
    two_species_support,
    validate_model,
    write_model_spec,
)
from .thermo import (
    CanonicalPoint,
    FluxPoint,
    PhysicalDomain,
    canonical_measure,
    entropy_S,
    flux_hessians,
    flux_jacobian,
    flux_point,
    invert_densities,
    log_mgf,
    macro_flux,
    mean_densities,
    micro_flux,
    onsager_residual,
    physical_domain,
)
from .waves import (
    EigenStructure,
    GeoCoeffs,
    WaveField,
    WaveProblem,
    characteristics_oracle,
    corrected_profiles,
    eigen_structure,
    geo_coefficients,
    initial_waves,
    normalize_coordinates,
    reconstruct_profiles,
    solve_scalar_conservation,
)
from .sim import (
    Configuration,
    ResidualReport,
    SeedStream,
    SimParams,
    corollary_residual,
    empirical_profile,
    endpoint_distribution,
    evolve,
    run_experiment,
    sample_initial,
)
from .exact import (
    EntropyTrajectory,
    GapReport,
    GeneratorMatrix,
    build_generator,
    dirichlet_form,
    entropy_trajectory,
    evolve_exact,
    gap_scaling_report,
    microcanonical_measure,
    reference_product_measure,
    relative_entropy,
    spectral_gap,
)

__all__ = [name for name in dir() if not name.startswith("_")]
