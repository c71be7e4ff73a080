//! Aggregate statistics over trial records.

mod correlation;
mod permutation;
mod rates;
mod text;
mod themes;

pub use correlation::{
    correlate, pearson, ranks, residualize, spearman, two_sided_p_value, CorrelationReport,
    Residualization, ResidualizationMode,
};
pub use permutation::{
    convergence_permutation_test, permutation_rng, permutation_test, ConvergenceTest,
    PermutationConfig,
    DEFAULT_PERMUTATIONS,
};
pub use rates::{
    aggregate_cells, coefficient_of_variation, hyper_truth_rate, manhattan_distance, mean,
    mean_triple, sample_variance, severity_profile, tautology_comparison, variance_compression,
    CellAggregate, Rate, SeverityProfile, TautologyComparison, TensorMeans, VarianceRatio,
};
pub use text::{
    cross_stimulus_loss_overlap, jaccard, pairwise_jaccard_matrix, pooled_vocabulary,
    tokenize_loss_text, JaccardMatrix, LossOverlap, TokenizerOptions,
};
pub use themes::{
    ablation_overlap, tag_themes, theme_convergence, AblationModelRow, AblationOverlap,
    ConvergenceMode, ConvergenceSummary, StimulusConvergence, ThemeLexicon, DEFAULT_LEXICON_TOML,
};
