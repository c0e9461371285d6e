//! Parameter accounting, next-token entropy, embedding variance, saliency
//! and efficiency measurements.

pub mod efficiency;
pub mod entropy;
pub mod params;
pub mod saliency;
pub mod variance;

pub use efficiency::{bench, bench_stack, mac_count, BenchReport, BenchResult, MacCount};
pub use entropy::{
    corpus_entropies, entropy, entropy_from_log_probs, next_token_entropy, EntropyHistogram,
};
pub use params::{param_report, ParamReport, TransformReport};
pub use saliency::{saliency, saliency_scores, saliency_shifted, SaliencyMap};
pub use variance::{
    category_variance, embedding_rows, group_by_category, parse_category_map, variance_by_category,
    CategoryVariance,
};
