//! Analytic gradients of `log Prb(L | P)` with respect to probabilities and
//! logits, plus a central-difference reference.
//!
//! The probability gradient differentiates the alternating series term by
//! term: `d a(A) / d p[c, loc] = [c in A] * a(A) / s_loc(A)`, where `s_loc(A)`
//! is the mass of `A` at that location. The per-term weights are collected in
//! the same subset sweep that produces the likelihood.

use crate::error::{Error, Result};
use crate::likelihood::{augmented_channels, finalize, inclusion_exclusion, likelihood_exact, LikelihoodConfig, LikelihoodResult, Method};
use crate::tensor::{softmax_locations, LabelSet, LogitTensor, ProbTensor, Shape};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Gradient with the layout of the tensor it was taken against.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl GradTensor {
    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![0.0; shape.len()] }
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[self.shape.index(channel, row, col)]
    }

    /// Largest `|a - b| / (|a| + floor)` over entries.
    pub fn max_relative_error(&self, reference: &GradTensor, floor: f64) -> f64 {
        self.data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b).abs() / (a.abs() + floor))
            .fold(0.0, f64::max)
    }
}

/// `d log Prb(L | P) / d p`.
pub fn grad_wrt_prob(labels: &LabelSet, p: &ProbTensor) -> Result<GradTensor> {
    Ok(prob_grad(labels, p)?.1)
}

fn prob_grad(labels: &LabelSet, p: &ProbTensor) -> Result<(LikelihoodResult, GradTensor)> {
    LikelihoodConfig::default().check(labels, p)?;
    let sweep = inclusion_exclusion(labels, p, true);
    let log_prob = finalize(sweep.total, labels, p);
    if log_prob == f64::NEG_INFINITY {
        return Err(Error::ZeroProbability);
    }
    let shape = p.shape();
    let locs = shape.locations();
    let chans = augmented_channels(labels, p);
    let acc = sweep.grad.expect("sweep ran with gradient");
    let mut out = GradTensor::zeros(shape);
    for (pos, &c) in chans.iter().enumerate() {
        for loc in 0..locs {
            out.data[c * locs + loc] = acc[pos * locs + loc].scale_log(-log_prob).to_f64();
        }
    }
    let result = LikelihoodResult {
        log_prob,
        terms_evaluated: 1 << labels.len(),
        method: Method::ExactSeries,
    };
    Ok((result, out))
}

/// `d log Prb(L | softmax(Z)) / d Z`, chained through the per-location softmax.
pub fn grad_wrt_logits(labels: &LabelSet, logits: &LogitTensor) -> Result<GradTensor> {
    Ok(log_likelihood_and_logit_grad(labels, logits)?.1)
}

/// Log-likelihood and its logit gradient from a single subset sweep.
pub fn log_likelihood_and_logit_grad(
    labels: &LabelSet,
    logits: &LogitTensor,
) -> Result<(LikelihoodResult, GradTensor)> {
    let p = softmax_locations(logits)?;
    let (result, g) = prob_grad(labels, &p)?;
    Ok((result, chain_softmax(&p, &g)))
}

/// Per location `p_c * (g_c - sum_j p_j g_j)`.
pub fn chain_softmax(p: &ProbTensor, g: &GradTensor) -> GradTensor {
    let shape = p.shape();
    let locs = shape.locations();
    let pd = p.data();
    let mut out = GradTensor::zeros(shape);
    for loc in 0..locs {
        let dot: f64 = (0..shape.channels()).map(|c| pd[c * locs + loc] * g.data[c * locs + loc]).sum();
        for c in 0..shape.channels() {
            let i = c * locs + loc;
            out.data[i] = pd[i] * (g.data[i] - dot);
        }
    }
    out
}

/// Central differences of `log Prb(L | softmax(Z))`, one logit at a time.
pub fn finite_difference_gradient(labels: &LabelSet, logits: &LogitTensor, step: f64) -> Result<GradTensor> {
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!("step must be positive, got {step}")));
    }
    let eval = |z: &LogitTensor| -> Result<f64> {
        let r = likelihood_exact(labels, &softmax_locations(z)?)?;
        if r.is_zero() {
            return Err(Error::ZeroProbability);
        }
        Ok(r.log_prob)
    };
    let mut out = GradTensor::zeros(logits.shape());
    let mut probe = logits.clone();
    for i in 0..logits.data().len() {
        let z0 = logits.data()[i];
        probe.data_mut()[i] = z0 + step;
        let up = eval(&probe)?;
        probe.data_mut()[i] = z0 - step;
        let down = eval(&probe)?;
        probe.data_mut()[i] = z0;
        out.data[i] = (up - down) / (2.0 * step);
    }
    Ok(out)
}
