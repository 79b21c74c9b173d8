"""exbound: learned put-pricing operator with FD ground truth.

A finite-difference engine prices European and American puts in
log-price coordinates; a branch/trunk network trained on those
surfaces maps any sampled put payoff to its price surface, from which
early-exercise boundaries are recovered for strikes never seen in
training.  Side modules verify the probabilistic and approximation-
theoretic ingredients at desk scale.
"""

from .boundary import (ExerciseBoundary, StyleError, clip_to_payoff,
                       compare_boundaries, extract_boundary, node_distances)
from .fd import (ConvergenceFailure, GridSpec, MarketParams, ObstacleMethod,
                 ObstacleVariant, PriceSurface, PutPayoff,
                 SingularSystemError, SurfaceStyle, TridiagonalSystem,
                 assemble_implicit_system, brute_force_lcp, build_grid,
                 price_american, price_european, psor_step, surface_to_csv,
                 thomas_solve)
from .neural import (AdamState, DivergenceError, Mlp, NetworkClassSpec,
                     TrainConfig, adam_step, audit_class, load_mlp,
                     mlp_backward, mlp_forward, mlp_init, save_mlp)
from .operator import (OperatorModel, SensorSet, SurfaceDataset, build_dataset,
                       build_model, encode_payoff, load_dataset, load_operator,
                       operator_forward, predict_surface, save_dataset,
                       save_operator, train)
from .oracles import BsQuote, bs_call, bs_put, crr_american_put, normal_cdf
from .pou import (CenterGrid, approx_mul, approx_square, mul_accuracy,
                  path_approx_error, phi_center, piecewise_const_approx,
                  product_bump_network, psi, square_accuracy)
from .sde import (AssumptionConstants, PathBatch, derive_seed,
                  empirical_sup_moment, empirical_tail_prob, euler_maruyama,
                  lipschitz_gap_check, mc_european_put, simulate_gbm)

__version__ = "0.1.0"
