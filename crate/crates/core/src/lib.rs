//! Composite-hypothesis anomaly detection for finite-state Markov streams.
//!
//! The crate estimates pair-chain laws from symbol streams, evaluates the
//! Hoeffding relative-entropy statistic, and derives detection thresholds by
//! large deviations (Sanov) or by simulating the statistic's weak-convergence
//! limit (Gaussian quadratic form or χ² mixture), including a robust variant
//! over a set of reference laws. On top of that sit a sliding-window
//! detector, a feature quantizer, and evaluation harnesses.

pub mod detector;
pub mod divergence;
pub mod error;
pub mod eval;
pub mod io;
pub mod markov;
pub mod quantizer;
pub mod rng;
pub mod threshold;

pub use divergence::{gradient_h, hessian_h, relative_entropy, DivergenceWorkspace};
pub use error::{Error, Result};
pub use markov::{
    conditional_rows, empirical_law, lift_transition, pair_encode, simulate_path,
    simulate_states, stationary_law, Alphabet, EmpiricalLaw, SymbolSequence, TransitionModel,
    DEFAULT_EPS,
};
pub use threshold::{
    estimate_threshold_ordinary, estimate_threshold_robust, quantile_threshold, sanov_threshold,
    Branch, Reference, SampleCache, ThresholdEstimate, ThresholdMethod, ThresholdOptions,
    ThresholdReport,
};
