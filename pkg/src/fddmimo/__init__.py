"""FDD massive MIMO downlink covariance transformation and precoding.

The package covers the full chain: uplink covariance estimation on a
uniform linear array, angular-density recovery (NNLS, minimum-norm, and a
small trained network), downlink covariance reconstruction across the
duplex gap, DFT-beamspace sparsifying precoding with exact beam/user
selection, and link-level sum-rate simulation against a statistical
beamforming baseline.
"""

from .config import ExperimentConfig, config_hash, load_config, save_config
from .errors import (EmptyDatasetError, InvalidOrderError, LpNumericalFailureError,
                     NonFiniteLossError, NotHermitianError, NotPsdError,
                     RankDeficientError, ShapeMismatchError, SingularSystemError,
                     ZeroTrueCovarianceError)
from .linksim import (LinkRealization, PilotMatrix, lmmse_estimate, make_pilots,
                      run_downlink_trial, run_sbf_trial, statistical_beamformer,
                      zf_precoder)
from .matching import max_matching
from .milp import (BeamGraph, MilpInstance, MilpSolution, lp_relax_bound,
                   read_instance, solve_milp, write_instance, write_solution)
from .mlp import (MlpParams, MlpSpec, TrainConfig, backward, forward, init_params,
                  load_checkpoint, loss_l1, save_checkpoint, train)
from .precoding import (BeamGains, SparsifyingPrecoder, build_graph,
                        circulant_gains, design_precoder, dft_matrix)
from .udct import (UdctEstimate, efficiency_curve, estimate_l2, estimate_mlp,
                   estimate_nnls, features_from_cov, metric_efficiency,
                   metric_nfd, metric_power_loss, reconstruct_dl, solve_nnls,
                   ul_dictionary)
from .ula import (Asf, ChannelBatch, GroupSparseAsfSpec, HermitianToeplitz,
                  UlaModel, array_response, cov_factor, sample_asf,
                  sample_channels, sample_cov, synth_cov, toeplitzify)

__version__ = "0.1.0"
