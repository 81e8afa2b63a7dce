"""Numerical checks of stability estimates for interaction energies under rearrangement."""

from .density import (GridDensity, Piece, RadialComposite, SignedGridField, annulus, ball,
                      center_of_mass, density_from_spec, density_to_spec, mass, rasterize,
                      second_moment, sup_norm, translate)
from .potential import Custom, Newtonian, PowerLaw, c_wr, quadratic_kernel, validate_assumptions
from .rearrange import layer_decomposition, rearrange_composite, rearrange_grid
from .energy import hminus1_sq, interaction_energy, newtonian_energy_composite, riesz_gap
from .asymmetry import AsymmetryResult, l1_asymmetry, l1_distance
from .transport import TransportPlan, layercake_plan, loeper_gap, w2_exact, w2_radial
from .stability import (StabilityReport, SweepSeries, check_lemma31, check_lemma32, check_thm1,
                        check_thm2, check_thm3, sweep, thm4_counterexample)
from .config import RunConfig

__version__ = "0.1.0"
