"""Finite-volume random fields and their conditional specifications.

A positive field on a finite window of Z^d is described by five families of
conditional tables (finite boundaries, one-point, Palm, full-complement and
one-point full-complement).  The package derives each family from a field,
checks its consistency identities, rebuilds the field from it, lifts the
smaller families to the finite-boundary one, and runs Markov, mixing,
Dobrushin and Sullivan diagnostics.
"""

__version__ = "0.1.0"

from .errors import BudgetError, DomainError, InvalidDistributionError, ReconstructionError
from .lattice import (
    Alphabet,
    Configuration,
    LatticePoint,
    NeighborhoodSystem,
    Window,
    boundary,
    concat,
    enumerate_configurations,
    grid_window,
    line_window,
    restrict,
    splice,
)
from .measures import (
    Distribution,
    FiniteField,
    Potential,
    conditional,
    gibbs_field,
    ising_potential,
    marginal,
    product_field,
    random_positive_field,
    total_variation,
)
from .specifications import (
    DSpecFinite,
    FSpec,
    OneDSpecFinite,
    OneFSpec,
    PalmSpec,
    dspec_from_field,
    fspec_from_field,
    onedspec_from_field,
    onefspec_from_field,
    onefspec_from_potential,
    palm_from_field,
)
from .consistency import (
    Report,
    ReportBundle,
    check_1dspec,
    check_1f_derived,
    check_1fspec,
    check_dspec,
    check_fspec,
    check_fspec_derived,
    check_palm,
    check_system,
    perturb,
)
from .reconstruct import (
    Reconstruction,
    dlr_residual,
    field_from_1fspec,
    field_from_fspec,
    field_from_palm,
    lift_1f_to_f_product,
    lift_1f_to_f_ratio,
    lift_palm_to_f,
    reconstruct_1fspec,
    reconstruct_fspec,
    reconstruct_palm,
)
from .analysis import (
    RhoMatrix,
    dobrushin_coefficient,
    dobrushin_rho_matrix,
    dobrushin_summary,
    is_markov_1f,
    is_markov_dspec,
    is_markov_fspec,
    markov_equivalence_check,
    markov_lift_preservation,
    mixing_bound_check,
    mixing_rho_matrix,
    positivity_check,
    sullivan_check,
)
