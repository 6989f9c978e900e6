"""Partial-correlation inference for categorical sequence alignments.

Typical use::

    from catparc import read_alignment, encode, test_all_pairs
    enc = encode(read_alignment("family.fa"))
    results = test_all_pairs(enc)
"""

from .aa_level import (AAGroupStrength, AAPairMatrix, Grouping, aa_group_strength, aa_pair,
                       murphy8, normalized_partial_corr, read_grouping, top_aa_pairs)
from .baselines import (PrecisionEstimate, graphical_lasso, l2_statistic, linf_statistic,
                        mi_all_pairs, mutual_information, psicov_score)
from .bench import RocCurve, auc, median_curve, rate_at_level, roc_curve, run_replicates, score_methods
from .errors import (CatparcError, DataError, DegenerateDataError, EmptyInputError, FormatError,
                     InputError, NumericError, ParameterError, SingularityError)
from .features import (FeatureRow, PartialCovMap, delta_features, partial_cov_map, precision_map,
                       sequence_scores, spearman)
from .group_lasso import (FitResult, GroupPenaltySpec, fit_multivariate_group_lasso, kkt_check,
                          lambda_schedule)
from .inference import (InferenceOptions, PairResult, ResidualCache, analyze_pair, bh_adjust,
                        cov_q_hat, one_vs_rest_all, pair_pvalue, pair_residuals, recover_graph,
                        test_all_pairs, tune_c, wilks_pair)
from .linalg_stats import (WeightedChiSq, chisq_tail, gumbel_cdf, gumbel_tail, inv_sqrt_sym,
                           normal_two_sided, sym_eig, weighted_chisq_quantile, weighted_chisq_tail)
from .msa import (Alignment, EncodedMatrix, encode, one_hot_encode, parse_alignment,
                  read_alignment, standardize_columns, trim_rare_residues, write_fasta)
from .simulation import (SimDesign, group_truth, latent_gaussian_generator, multinomial_generator,
                         permute_groups, potts_family, simulate)

__version__ = "0.1.0"
