"""Bethe ansatz and separation of variables for inhomogeneous sl2 / Uq(sl2) chains."""
from .numkernel import CPoly, NumericalError, OpPoly, ToleranceProfile, commuting_diag, poly_eval, poly_roots
from .repr_core import ModelSpec, SpecError, Variant, build_space, monodromy, transfer, weight_dims, sing_dims
from .bethe_solve import (BetheSolution, PathStatus, TrackOptions, bae_jacobian, bae_residual,
                          eigenvalue_tau, orbit_dedup, seeds_kappa0, track_path)
from .bethe_vec import (bethe_vector_product, bethe_vector_sum, dual_pairing, eigen_residual,
                        norm_determinant, permutation_intertwiner)
from .baxter_sov import (build_lattice, global_from_bethe, local_solve_linear, sl2_report,
                         sov_operators, sov_spectrum)

__version__ = "0.1.0"
