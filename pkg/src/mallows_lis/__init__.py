"""Monotone subsequences of Mallows(q) permutations through the regenerative
structure of the infinite insertion process."""
from .chain import (euler_mu0, first_passage_pmf, kac_check, stationarity_residual,
                    stationary_dist, transition_matrix, transition_row)
from .config import load_config
from .estimators import (CltConstants, DegenerateEstimateError, ExperimentReport,
                         clt_experiment, constants_from_blocks, estimate_constants,
                         ks_statistic, lds_lln_experiment, normal_cdf)
from .exact import enumerate_mallows, exact_statistic_distribution, tv_distance
from .monotone import lds_length, lis_bruteforce, lis_length
from .perm import (InfinitePrefix, MallowsParams, Permutation, assign_positions,
                   induce_finite, inversions, kendall_tau, log_partition_function,
                   partition_function, reversal, sample_mallows)
from .regen import (Block, BlockBatch, Decomposition, block_batch, chain_step,
                    decompose_prefix, regeneration_times, sample_block, sample_blocks)
from .rng import DEFAULT_SEED, GeometricStream, geometric_draw

__version__ = "0.1.0"
