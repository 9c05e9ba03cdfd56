//! Fixtures shared by the benchmarks.

use hoeffding_core::eval::{random_transition, DEFAULT_MIN_ENTRY};
use hoeffding_core::TransitionModel;

/// A fixed random chain on `n_states` states.
pub fn fixture_model(n_states: usize) -> TransitionModel {
    random_transition(n_states, 0x5eed + n_states as u64, DEFAULT_MIN_ENTRY)
        .expect("fixture model is valid")
}
