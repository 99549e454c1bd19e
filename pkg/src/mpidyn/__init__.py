"""Dynamic magnetic particle imaging toolkit.

Simulates voltage data for moving tracer phantoms, estimates per-subproblem
uncertainty levels directly from the measured data, and reconstructs
time-resolved concentrations with uncertainty-aware Kaczmarz solvers.
"""

from mpidyn.model import (
    ConcentrationSequence,
    DynamicDataset,
    Grid2D,
    SystemMatrix,
    TimePartition,
    gamma,
    slice_data,
    slice_subproblem,
)
from mpidyn.simulator import (
    PhantomMotion,
    ScannerConfig,
    build_system_matrix,
    ffp_trajectory,
    generate_dataset,
    langevin,
    phantom_state,
)
from mpidyn.projections import (
    Stripe,
    project_hyperplane,
    project_stripe,
    project_stripe_intersection,
    project_two_hyperplanes,
)
from mpidyn.inexactness import (
    UncertaintyLevels,
    estimate_noise_level,
    estimate_rho,
    zeta_norm_frames,
    zeta_prior_recon,
    zeta_subframe_interpolated,
)
from mpidyn.solvers import (
    SolveResult,
    SolverConfig,
    clamp_nonnegative,
    discrepancy_check,
    regularized_kaczmarz,
    resesop_kaczmarz,
    sesop_kaczmarz,
)

__version__ = "0.1.0"
