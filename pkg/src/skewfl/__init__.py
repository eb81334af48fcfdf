"""skewfl: a federated-learning round simulator for studying gradient-skew
Byzantine attacks against robust aggregation defenses.

The package is organized by role:

* :mod:`skewfl.stats` — gradient batches and shared vector statistics
* :mod:`skewfl.aggregators` — defense rules, wrappers, robustness checker
* :mod:`skewfl.attacks` — Byzantine strategies, including the skew attack
* :mod:`skewfl.datasets` / :mod:`skewfl.models` — synthetic data and models
* :mod:`skewfl.simulation` — the federated round protocol
* :mod:`skewfl.analysis` — skew scoring and LLE embedding
* :mod:`skewfl.config` / :mod:`skewfl.harness` / :mod:`skewfl.cli` — the
  config-driven experiment harness

Heavy numeric kernels run through numba when available; set
``SKEWFL_BACKEND=numpy`` to force the pure-numpy path (see
:mod:`skewfl._backend`).
"""

from ._backend import backend_name
from .aggregators import (BASE_RULE_NAMES, WRAPPER_NAMES, AggregatorSpec,
                          BucketingParams, CClipParams, DncParams, RfaParams,
                          RobustnessQuery, RobustnessReport, WrapperSpec,
                          aggregate_mean, aggregate_median, aksel,
                          apply_aggregator, bucketing_wrap, centered_clip,
                          check_f_kappa_robustness, dnc,
                          geometric_median_objective, krum_scores, multi_krum,
                          nnm_mix, nnm_wrap, rfa_geometric_median,
                          trimmed_mean_rbtm)
from .analysis import (LleParams, SkewReport, lle_embed,
                       reconstruction_weights, skew_score, summarize_runs)
from .attacks import (ATTACK_NAMES, AttackContext, IpmParams, LieParams,
                      MinOptParams, SkewSelection, StrikeParams, apply_attack,
                      bitflip_attack, default_attack_params, ipm_attack,
                      labelflip_transform, lie_attack, mimic_attack,
                      minmax_attack, minsum_attack, strike_attack,
                      strike_bisection, strike_stage1_select)
from .config import (ExperimentConfig, SweepSpec, cell_config, emit_config,
                     parse_config, sweep_spec)
from .datasets import (Dataset, PartitionSpec, class_means,
                       dirichlet_partition, generate_synthetic_dataset,
                       iid_partition, load_features_csv, load_partition_csv,
                       save_features_csv, save_partition_csv)
from .errors import (ConfigError, DegenerateDirectionError,
                     InsufficientClientsError, InvalidParameterError,
                     SkewflError, TrainingDivergenceError)
from .models import (ModelSpec, batch_loss, init_params, load_params,
                     model_scores, predict, save_params)
from .simulation import (ExperimentResult, FederationSpec, RoundRecord,
                         TrainSpec, build_shards, derive_seed,
                         evaluate_accuracy, local_update, run_experiment,
                         run_round)
from .stats import (GradientBatch, coordinate_median, coordinate_std,
                    fix_sign, pairwise_diameter, pairwise_sq_dists,
                    scalar_projection, smallest_eigenpairs,
                    top_singular_direction)

__version__ = "0.1.0"
