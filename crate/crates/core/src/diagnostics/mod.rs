//! Empirical checks of the excitation and concentration conditions behind
//! the finite-sample error bound.

mod bmsb;
mod bound;
mod crossterm;
mod gram;

pub use bmsb::{
    estimate_bmsb, estimate_bmsb_with_directions, exceedance_frequency, sample_unit_directions,
    BmsbEstimate, DEFAULT_N_DIRECTIONS, DEFAULT_QUANTILE,
};
pub use bound::{bound_value, evaluate_bound, BoundReport, BoundTerms};
pub use crossterm::{crossterm_bound, noise_crossterm_check, CrossTermReport};
pub use gram::{gram_check, sample_size_threshold, ClientGram, GramReport};
