//! Randomized property suites over the likelihood and gradient routines, and
//! the random tensor generators they share with the tests.
//!
//! Each suite draws from a seeded stream and returns a [`SuiteReport`] whose
//! serialized form is identical across runs with the same seed.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::gradient::{finite_difference_gradient, grad_wrt_logits, DEFAULT_STEP};
use crate::likelihood::{brute_force_distribution, likelihood_beta, likelihood_exact, likelihood_upper_bound, sum_over_all_label_sets};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{softmax_locations, LabelSet, LogitTensor, ProbTensor, Shape};

pub const ORACLE_TOLERANCE: f64 = 1e-9;
pub const METHOD_TOLERANCE: f64 = 1e-9;
pub const PARTITION_TOLERANCE: f64 = 1e-9;
pub const BOUND_TOLERANCE: f64 = 1e-9;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
/// Denominator floor in the gradcheck relative error.
pub const GRADCHECK_FLOOR: f64 = 1e-8;

/// Logits drawn uniformly from `[-2, 2]`.
pub fn random_logits<R: Rng>(rng: &mut R, shape: Shape) -> LogitTensor {
    let data = (0..shape.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
    LogitTensor::new(shape, data).expect("finite logits")
}

/// Softmax of [`random_logits`].
pub fn random_prob_tensor<R: Rng>(rng: &mut R, shape: Shape) -> ProbTensor {
    softmax_locations(&random_logits(rng, shape)).expect("finite logits")
}

/// Uniformly chosen label set of exactly `len` classes from `1..=num_classes`.
pub fn random_label_set<R: Rng>(rng: &mut R, num_classes: usize, len: usize) -> LabelSet {
    let picked = rand::seq::index::sample(rng, num_classes, len.min(num_classes));
    LabelSet::new(picked.iter().map(|i| i + 1)).expect("labels are positive")
}

fn random_shape<R: Rng>(rng: &mut R, classes: std::ops::RangeInclusive<usize>, side: usize) -> Shape {
    let c = rng.random_range(classes);
    let m = rng.random_range(1..=side);
    let n = rng.random_range(1..=side);
    Shape::new(c, m, n).expect("positive dimensions")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Methods,
    Partition,
    Gradcheck,
    Bounds,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::Methods => "methods",
            Suite::Partition => "partition",
            Suite::Gradcheck => "gradcheck",
            Suite::Bounds => "bounds",
        }
    }

    pub fn default_trials(&self) -> usize {
        match self {
            Suite::Oracle | Suite::Methods => 200,
            Suite::Partition => 50,
            Suite::Gradcheck => 50,
            Suite::Bounds => 100,
        }
    }

    pub fn run(&self, seed: u64, trials: usize) -> Result<SuiteReport> {
        match self {
            Suite::Oracle => oracle_suite(seed, trials),
            Suite::Methods => methods_suite(seed, trials),
            Suite::Partition => partition_suite(seed, trials, 8, 4),
            Suite::Gradcheck => gradcheck_suite(seed, trials),
            Suite::Bounds => bounds_suite(seed, trials),
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "oracle" => Ok(Suite::Oracle),
            "methods" => Ok(Suite::Methods),
            "partition" => Ok(Suite::Partition),
            "gradcheck" => Ok(Suite::Gradcheck),
            "bounds" => Ok(Suite::Bounds),
            other => Err(format!("unknown suite {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub trials: usize,
    pub checks: u64,
    pub failures: u64,
    pub worst_error: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    fn new(suite: Suite, seed: u64, trials: usize, tolerance: f64) -> Self {
        Self { suite: suite.name().into(), seed, trials, checks: 0, failures: 0, worst_error: 0.0, tolerance }
    }

    fn record(&mut self, error: f64) {
        self.checks += 1;
        // NaN counts as a failure.
        if !(error <= self.tolerance) {
            self.failures += 1;
        }
        if error > self.worst_error || error.is_nan() {
            self.worst_error = error;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Exact series against full enumeration, every label set of every draw.
pub fn oracle_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let mut rng = stream_rng(seed, Stream::Verify);
    let mut report = SuiteReport::new(Suite::Oracle, seed, trials, ORACLE_TOLERANCE);
    for _ in 0..trials {
        let shape = random_shape(&mut rng, 1..=4, 3);
        let p = random_prob_tensor(&mut rng, shape);
        let dist = brute_force_distribution(&p)?;
        for (mask, &want) in dist.iter().enumerate() {
            let got = likelihood_exact(&LabelSet::from_class_mask(mask as u64), &p)?.probability();
            report.record((got - want).abs());
        }
    }
    Ok(report)
}

/// Alternating series against the `b` recursion: the oracle-suite draws plus
/// six-class single-location tensors.
pub fn methods_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let mut rng = stream_rng(seed, Stream::Verify);
    let mut report = SuiteReport::new(Suite::Methods, seed, trials, METHOD_TOLERANCE);
    let compare = |p: &ProbTensor, report: &mut SuiteReport| -> Result<()> {
        for mask in 0u64..(1 << p.num_classes()) {
            let l = LabelSet::from_class_mask(mask);
            let a = likelihood_exact(&l, p)?.probability();
            let b = likelihood_beta(&l, p)?.probability();
            report.record(relative_difference(a, b));
        }
        Ok(())
    };
    for _ in 0..trials {
        let shape = random_shape(&mut rng, 1..=4, 3);
        let p = random_prob_tensor(&mut rng, shape);
        compare(&p, &mut report)?;
    }
    for _ in 0..trials.div_ceil(10) {
        let p = random_prob_tensor(&mut rng, Shape::new(6, 1, 1).expect("valid"));
        compare(&p, &mut report)?;
    }
    Ok(report)
}

/// `|sum over all label sets of Prb(L|P) - 1|`.
pub fn partition_suite(seed: u64, trials: usize, max_classes: usize, max_side: usize) -> Result<SuiteReport> {
    let mut rng = stream_rng(seed, Stream::Verify);
    let mut report = SuiteReport::new(Suite::Partition, seed, trials, PARTITION_TOLERANCE);
    for _ in 0..trials {
        let shape = random_shape(&mut rng, 1..=max_classes, max_side);
        let p = random_prob_tensor(&mut rng, shape);
        let total = sum_over_all_label_sets(&p)?.exp();
        report.record((total - 1.0).abs());
    }
    Ok(report)
}

/// Analytic logit gradient against central differences.
pub fn gradcheck_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let mut rng = stream_rng(seed, Stream::Verify);
    let mut report = SuiteReport::new(Suite::Gradcheck, seed, trials, GRADCHECK_TOLERANCE);
    for _ in 0..trials {
        let shape = random_shape(&mut rng, 1..=4, 3);
        let z = random_logits(&mut rng, shape);
        let len = rng.random_range(0..=shape.num_classes.min(shape.locations()));
        let l = random_label_set(&mut rng, shape.num_classes, len);
        let analytic = grad_wrt_logits(&l, &z)?;
        let numeric = finite_difference_gradient(&l, &z, DEFAULT_STEP)?;
        report.record(analytic.max_relative_error(&numeric, GRADCHECK_FLOOR));
    }
    Ok(report)
}

/// Truncated `b` series never undercuts the exact value and matches it once
/// nothing is dropped. Records the largest violation over all orders.
pub fn bounds_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let mut rng = stream_rng(seed, Stream::Verify);
    let mut report = SuiteReport::new(Suite::Bounds, seed, trials, BOUND_TOLERANCE);
    for _ in 0..trials {
        let len = rng.random_range(2..=5);
        let c = rng.random_range(len..=6);
        let shape = Shape::new(c, rng.random_range(1..=3), rng.random_range(1..=3)).expect("valid");
        let p = random_prob_tensor(&mut rng, shape);
        let l = random_label_set(&mut rng, c, len);
        let exact = likelihood_exact(&l, &p)?.probability();
        for k in 0..len {
            let bound = likelihood_upper_bound(&l, &p, k)?.probability();
            let violation = if k == len - 1 { (bound - exact).abs() } else { (exact - bound).max(0.0) };
            report.record(violation);
        }
    }
    Ok(report)
}
