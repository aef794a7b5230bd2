//! Exact likelihood of presence/absence label sets under per-location
//! categorical emissions, for weakly supervised multiclass
//! multiple-instance learning.
//!
//! A model emits a tensor `P` of shape `(C + 1, M, N)`: at every location a
//! distribution over `C` classes plus a background label. A training sample
//! only says which classes occur somewhere. This crate computes the exact
//! probability of such a label set, its gradients, cheaper upper bounds, and
//! decoding rules, together with a small synthetic training harness.

pub mod baselines;
pub mod decode;
pub mod error;
pub mod gradient;
pub mod harness;
pub mod io;
pub mod likelihood;
pub mod rng;
pub mod signed_log;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use gradient::{finite_difference_gradient, grad_wrt_logits, grad_wrt_prob, GradTensor};
pub use likelihood::{
    beta_table, brute_force_likelihood, likelihood_beta, likelihood_exact, likelihood_upper_bound, log_alpha,
    sum_over_all_label_sets, AugmentedSubset, LikelihoodConfig, LikelihoodResult, Method,
};
pub use signed_log::{sl_add, sl_sum, SignedLog};
pub use tensor::{softmax_locations, LabelSet, LogitTensor, ProbTensor, Shape};
