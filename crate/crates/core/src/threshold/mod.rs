//! Threshold estimation for the Hoeffding test.

pub mod cache;
pub mod covariance;
pub mod estimate;
pub mod psd;

pub use cache::{
    cache_builds_on_this_thread, chi2_mixture_weights, chi2_sample_cache, gaussian_sample_cache,
    order_statistic, quantile_index, quantile_threshold, CacheMethod, SampleCache,
    ThresholdEstimate, ThresholdMethod, DEFAULT_SAMPLES,
};
pub use covariance::{covariance, covariance_series, CovarianceModel, CovarianceOptions};
pub use estimate::{
    estimate_threshold_ordinary, estimate_threshold_robust, law_seed, sanov_threshold, Branch,
    PreparedReference, Reference, RobustCache, ThresholdOptions, ThresholdReport,
};
pub use psd::{psd_repair, PsdRepair, DEFAULT_PSD_FLOOR};
