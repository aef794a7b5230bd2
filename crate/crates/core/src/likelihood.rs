//! Probability that a per-location probability tensor emits exactly a given
//! label set.
//!
//! Write `a(S)` for the probability that every location emits a label from
//! `S`, i.e. the product over locations of the per-location mass on `S`. With
//! background `bg`, the label-set probability is the alternating subset sum
//!
//! ```text
//! Prb(L | P) = sum over S ⊆ L of (-1)^(|L| - |S|) * a(S ∪ {bg})
//! ```
//!
//! Alongside it, `b(S)` is the probability that every label of `S` is emitted
//! at least once and nothing outside `S` is. It obeys `b(S) = a(S) - sum of
//! b(T)` over the nonempty proper subsets `T` of `S`, and
//! `Prb(L | P) = a(L ∪ {bg})` minus every `b(T)` whose intersection with `L`
//! misses at least one label. Dropping some of those nonnegative `b` terms
//! gives an upper bound.
//!
//! All products over locations and sums across subsets are carried in the
//! log / signed-log domain; per-location subset sums stay linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signed_log::{sl_add, sl_sum, SignedLog};
use crate::tensor::{LabelSet, ProbTensor};

/// Largest label set the exact methods evaluate by default.
pub const DEFAULT_MAX_SUBSET_ORDER: usize = 16;

/// Largest number of emission assignments the brute-force oracle enumerates.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactSeries,
    BetaRecursion,
    Truncated(usize),
    BruteForce,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::ExactSeries => write!(f, "exact-series"),
            Method::BetaRecursion => write!(f, "beta-recursion"),
            Method::Truncated(k) => write!(f, "truncated({k})"),
            Method::BruteForce => write!(f, "brute-force"),
        }
    }
}

/// Log-probability of a label set; `-inf` marks probability zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodResult {
    pub log_prob: f64,
    pub terms_evaluated: u64,
    pub method: Method,
}

impl LikelihoodResult {
    pub fn probability(&self) -> f64 {
        self.log_prob.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.log_prob == f64::NEG_INFINITY
    }
}

/// Subset of `L ∪ {bg}`: a bitmask over the positions of the (sorted) label
/// set plus a background flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AugmentedSubset {
    pub classes: u32,
    pub background: bool,
}

impl AugmentedSubset {
    pub fn new(classes: u32, background: bool) -> Self {
        Self { classes, background }
    }

    /// Number of members, background included.
    pub fn order(&self) -> usize {
        self.classes.count_ones() as usize + usize::from(self.background)
    }

    /// 1-based members, with the background reported as `C + 1`.
    pub fn labels(&self, set: &LabelSet, num_classes: usize) -> Vec<usize> {
        let mut out: Vec<usize> = set
            .labels()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.classes >> i & 1 == 1)
            .map(|(_, &l)| l)
            .collect();
        if self.background {
            out.push(num_classes + 1);
        }
        out
    }

    fn index(&self, num_labels: usize) -> usize {
        self.classes as usize | usize::from(self.background) << num_labels
    }

    fn from_index(index: usize, num_labels: usize) -> Self {
        Self {
            classes: (index & ((1 << num_labels) - 1)) as u32,
            background: index >> num_labels & 1 == 1,
        }
    }
}

/// Exact-method settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LikelihoodConfig {
    pub max_subset_order: usize,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self { max_subset_order: DEFAULT_MAX_SUBSET_ORDER }
    }
}

impl LikelihoodConfig {
    pub fn with_max_subset_order(max_subset_order: usize) -> Self {
        Self { max_subset_order }
    }

    pub(crate) fn check(&self, labels: &LabelSet, p: &ProbTensor) -> Result<()> {
        p.validate()?;
        labels.check_range(p.num_classes())?;
        // Bitmasks are u32 with one extra bit for the background.
        let max = self.max_subset_order.min(30);
        if labels.len() > max {
            return Err(Error::SubsetOrderExceeded { order: labels.len(), max });
        }
        Ok(())
    }

    /// Alternating-series evaluation over all `2^|L|` subsets.
    pub fn exact(&self, labels: &LabelSet, p: &ProbTensor) -> Result<LikelihoodResult> {
        self.check(labels, p)?;
        let sweep = inclusion_exclusion(labels, p, false);
        Ok(LikelihoodResult {
            log_prob: finalize(sweep.total, labels, p),
            terms_evaluated: 1 << labels.len(),
            method: Method::ExactSeries,
        })
    }

    /// Evaluation through the recursively built `b` table.
    pub fn beta(&self, labels: &LabelSet, p: &ProbTensor) -> Result<LikelihoodResult> {
        self.check(labels, p)?;
        let (total, terms) = beta_series(labels, p, labels.len().saturating_sub(1));
        Ok(LikelihoodResult {
            log_prob: finalize(total, labels, p),
            terms_evaluated: terms,
            method: Method::BetaRecursion,
        })
    }

    /// Upper bound keeping only subtracted `b(T)` with at most `k` labels of
    /// `L` in `T`. `k = |L| - 1` keeps every term.
    pub fn upper_bound(&self, labels: &LabelSet, p: &ProbTensor, k: usize) -> Result<LikelihoodResult> {
        self.check(labels, p)?;
        if k > labels.len() {
            return Err(Error::InvalidConfig(format!(
                "truncation order {k} exceeds label set order {}",
                labels.len()
            )));
        }
        let (total, terms) = beta_series(labels, p, k);
        // Nonnegative by construction up to rounding.
        let log_prob = total.log_nonneg().unwrap_or(f64::NEG_INFINITY);
        Ok(LikelihoodResult { log_prob, terms_evaluated: terms, method: Method::Truncated(k) })
    }

    /// Table of `log b(S)` for every nonempty `S ⊆ L ∪ {bg}` with
    /// `|S| <= max_order`.
    pub fn beta_table(&self, labels: &LabelSet, p: &ProbTensor, max_order: usize) -> Result<BetaTable> {
        self.check(labels, p)?;
        if max_order > labels.len() + 1 {
            return Err(Error::SubsetOrderExceeded { order: max_order, max: labels.len() + 1 });
        }
        Ok(build_beta_table(labels, p, max_order))
    }
}

pub fn likelihood_exact(labels: &LabelSet, p: &ProbTensor) -> Result<LikelihoodResult> {
    LikelihoodConfig::default().exact(labels, p)
}

pub fn likelihood_beta(labels: &LabelSet, p: &ProbTensor) -> Result<LikelihoodResult> {
    LikelihoodConfig::default().beta(labels, p)
}

pub fn likelihood_upper_bound(labels: &LabelSet, p: &ProbTensor, k: usize) -> Result<LikelihoodResult> {
    LikelihoodConfig::default().upper_bound(labels, p, k)
}

pub fn beta_table(labels: &LabelSet, p: &ProbTensor, max_order: usize) -> Result<BetaTable> {
    LikelihoodConfig::default().beta_table(labels, p, max_order)
}

/// `log a(S)` for `S` given as 1-based labels, `C + 1` standing for the
/// background.
pub fn log_alpha(subset: &[usize], p: &ProbTensor) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    p.validate()?;
    let channels = p.shape().channels();
    let mut chans = Vec::with_capacity(subset.len());
    for &l in subset {
        if l == 0 || l > channels {
            return Err(Error::LabelOutOfRange { label: l, num_classes: channels });
        }
        if !chans.contains(&(l - 1)) {
            chans.push(l - 1);
        }
    }
    Ok(log_alpha_channels(&chans, p))
}

pub(crate) fn log_alpha_channels(channels: &[usize], p: &ProbTensor) -> f64 {
    let locs = p.shape().locations();
    let data = p.data();
    let mut acc = CompensatedSum::default();
    for loc in 0..locs {
        let mut s = CompensatedSum::default();
        for &c in channels {
            s.add(data[c * locs + loc]);
        }
        if s.value() <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc.add(s.ln());
    }
    acc.value()
}

/// Neumaier running sum, added to in input order.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    hi: f64,
    lo: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.hi + x;
        if self.hi.abs() >= x.abs() {
            self.lo += (self.hi - t) + x;
        } else {
            self.lo += (x - t) + self.hi;
        }
        self.hi = t;
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }

    /// Log of a positive sum. Masses near one go through `ln_1p`, where
    /// `hi - 1` is exact.
    pub fn ln(&self) -> f64 {
        if (0.5..=2.0).contains(&self.hi) {
            ((self.hi - 1.0) + self.lo).ln_1p()
        } else {
            self.hi.ln() + self.lo / self.hi
        }
    }
}

/// 0-based channels of the labels followed by the background channel.
pub(crate) fn augmented_channels(labels: &LabelSet, p: &ProbTensor) -> Vec<usize> {
    let mut chans: Vec<usize> = labels.labels().iter().map(|l| l - 1).collect();
    chans.push(p.shape().background());
    chans
}

/// Output of one pass over the subsets of `L`.
pub(crate) struct Sweep {
    pub total: SignedLog,
    /// Indexed `[position * locations + loc]`, positions `0..|L|` for the
    /// labels and `|L|` for the background. Entry holds the signed sum of
    /// `a(A) / s_loc(A)` over the series terms `A` containing that channel.
    pub grad: Option<Vec<SignedLog>>,
}

pub(crate) fn inclusion_exclusion(labels: &LabelSet, p: &ProbTensor, with_grad: bool) -> Sweep {
    let l = labels.len();
    let locs = p.shape().locations();
    let data = p.data();
    let chans = augmented_channels(labels, p);
    let bg = chans[l];

    let mut total = SignedLog::ZERO;
    let mut grad = with_grad.then(|| vec![SignedLog::ZERO; (l + 1) * locs]);
    let mut log_sums = vec![0.0; locs];

    'masks: for mask in 0u32..(1 << l) {
        let mut log_alpha = CompensatedSum::default();
        for loc in 0..locs {
            let mut s = CompensatedSum::default();
            s.add(data[bg * locs + loc]);
            for (i, &c) in chans[..l].iter().enumerate() {
                if mask >> i & 1 == 1 {
                    s.add(data[c * locs + loc]);
                }
            }
            // Zero-probability terms contribute nothing, gradient included.
            if s.value() <= 0.0 {
                continue 'masks;
            }
            log_sums[loc] = s.ln();
            log_alpha.add(log_sums[loc]);
        }
        let log_alpha = log_alpha.value();
        let negative = (l - mask.count_ones() as usize) % 2 == 1;
        let term = if negative { SignedLog::from_neg_log(log_alpha) } else { SignedLog::from_log(log_alpha) };
        total = sl_add(total, term);

        if let Some(g) = grad.as_mut() {
            for pos in (0..=l).filter(|&i| i == l || mask >> i & 1 == 1) {
                let row = &mut g[pos * locs..(pos + 1) * locs];
                for loc in 0..locs {
                    row[loc] = sl_add(row[loc], term.scale_log(-log_sums[loc]));
                }
            }
        }
    }
    Sweep { total, grad }
}

/// Converts a signed total into a log-probability. Negative totals are
/// cancellation noise around zero, and more distinct labels than locations
/// is an exact zero.
pub(crate) fn finalize(total: SignedLog, labels: &LabelSet, p: &ProbTensor) -> f64 {
    if labels.len() > p.shape().locations() {
        return f64::NEG_INFINITY;
    }
    total.log_nonneg().unwrap_or(f64::NEG_INFINITY)
}

/// `log b(S)` over subsets of `L ∪ {bg}` up to a given order.
#[derive(Debug, Clone)]
pub struct BetaTable {
    num_labels: usize,
    max_order: usize,
    values: Vec<Option<f64>>,
    min_raw: f64,
}

impl BetaTable {
    pub fn get(&self, subset: &AugmentedSubset) -> Option<f64> {
        if subset.classes >> self.num_labels != 0 {
            return None;
        }
        self.values.get(subset.index(self.num_labels)).copied().flatten()
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Every computed entry in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = (AugmentedSubset, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(move |(i, v)| v.map(|v| (AugmentedSubset::from_index(i, self.num_labels), v)))
    }

    /// Most negative raw value (linear domain) seen before clamping to zero;
    /// `0.0` when nothing was clamped.
    pub fn min_raw_value(&self) -> f64 {
        self.min_raw
    }
}

fn build_beta_table(labels: &LabelSet, p: &ProbTensor, max_order: usize) -> BetaTable {
    let l = labels.len();
    let chans = augmented_channels(labels, p);
    let mut values: Vec<Option<f64>> = vec![None; 1 << (l + 1)];
    let mut min_raw = 0.0f64;
    let mut members = Vec::with_capacity(l + 1);

    // Every proper submask is numerically smaller, so increasing order is
    // bottom-up.
    for mask in 1usize..(1 << (l + 1)) {
        if mask.count_ones() as usize > max_order {
            continue;
        }
        members.clear();
        members.extend((0..=l).filter(|&i| mask >> i & 1 == 1).map(|i| chans[i]));
        let alpha = SignedLog::from_log(log_alpha_channels(&members, p));

        let mut below = SignedLog::ZERO;
        let mut sub = (mask - 1) & mask;
        while sub > 0 {
            if let Some(v) = values[sub] {
                below = sl_add(below, SignedLog::from_log(v));
            }
            sub = (sub - 1) & mask;
        }
        let raw = sl_add(alpha, -below);
        let v = match raw.log_nonneg() {
            Some(v) => v,
            None => {
                min_raw = min_raw.min(raw.to_f64());
                f64::NEG_INFINITY
            }
        };
        values[mask] = Some(v);
    }
    BetaTable { num_labels: l, max_order, values, min_raw }
}

/// `a(L ∪ {bg})` minus every `b(T)` with `T ∩ L` a proper subset of `L` of
/// size at most `k`. Returns the signed total and the number of terms.
fn beta_series(labels: &LabelSet, p: &ProbTensor, k: usize) -> (SignedLog, u64) {
    let l = labels.len();
    let chans = augmented_channels(labels, p);
    let leading = SignedLog::from_log(log_alpha_channels(&chans, p));
    if l == 0 {
        return (leading, 1);
    }
    let table = build_beta_table(labels, p, (k + 1).min(l));
    let full = (1usize << l) - 1;
    let mut dropped = Vec::new();
    for (subset, v) in table.iter() {
        let classes = subset.classes as usize;
        if classes != full && classes.count_ones() as usize <= k {
            dropped.push(SignedLog::from_log(v));
        }
    }
    let terms = 1 + dropped.len() as u64;
    (sl_add(leading, -sl_sum(dropped)), terms)
}

fn check_brute_force_size(p: &ProbTensor) -> Result<()> {
    let s = p.shape();
    let size = (s.channels() as f64).powi(s.locations() as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::EnumerationTooLarge { size, limit: BRUTE_FORCE_LIMIT });
    }
    Ok(())
}

/// Sums `prod p` over every assignment of one label per location whose set of
/// emitted non-background labels equals `L`. Assignments emitting a label
/// outside `L` are skipped without being expanded.
pub fn brute_force_likelihood(labels: &LabelSet, p: &ProbTensor) -> Result<LikelihoodResult> {
    p.validate()?;
    labels.check_range(p.num_classes())?;
    check_brute_force_size(p)?;
    let chans = augmented_channels(labels, p);
    let target: u64 = (1u64 << labels.len()) - 1;
    let locs = p.shape().locations();
    let mut total = 0.0;
    let mut leaves = 0u64;

    fn visit(
        loc: usize,
        prob: f64,
        emitted: u64,
        ctx: (&[usize], &[f64], usize, u64),
        total: &mut f64,
        leaves: &mut u64,
    ) {
        let (chans, data, locs, target) = ctx;
        if loc == locs {
            *leaves += 1;
            if emitted == target {
                *total += prob;
            }
            return;
        }
        let bg = chans.len() - 1;
        for (pos, &c) in chans.iter().enumerate() {
            let bit = if pos == bg { 0 } else { 1 << pos };
            visit(loc + 1, prob * data[c * locs + loc], emitted | bit, ctx, total, leaves);
        }
    }
    visit(0, 1.0, 0, (&chans, p.data(), locs, target), &mut total, &mut leaves);

    Ok(LikelihoodResult { log_prob: total.ln(), terms_evaluated: leaves, method: Method::BruteForce })
}

/// Probability of every label set at once by full enumeration, indexed by
/// class mask (bit `i` for class `i + 1`).
pub fn brute_force_distribution(p: &ProbTensor) -> Result<Vec<f64>> {
    p.validate()?;
    check_brute_force_size(p)?;
    let c = p.num_classes();
    if c > 20 {
        return Err(Error::SubsetOrderExceeded { order: c, max: 20 });
    }
    let mut dist = vec![0.0; 1 << c];
    let locs = p.shape().locations();

    fn visit(loc: usize, prob: f64, emitted: usize, p: &ProbTensor, locs: usize, dist: &mut [f64]) {
        if loc == locs {
            dist[emitted] += prob;
            return;
        }
        let c = p.num_classes();
        let data = p.data();
        for ch in 0..=c {
            let bit = if ch == c { 0 } else { 1 << ch };
            visit(loc + 1, prob * data[ch * locs + loc], emitted | bit, p, locs, dist);
        }
    }
    visit(0, 1.0, 0, p, locs, &mut dist);
    Ok(dist)
}

/// `log` of the total probability over all `2^C` label sets.
pub fn sum_over_all_label_sets(p: &ProbTensor) -> Result<f64> {
    let c = p.num_classes();
    if c > DEFAULT_MAX_SUBSET_ORDER {
        return Err(Error::SubsetOrderExceeded { order: c, max: DEFAULT_MAX_SUBSET_ORDER });
    }
    p.validate()?;
    let mut total = SignedLog::ZERO;
    for mask in 0u64..(1 << c) {
        let r = likelihood_exact(&LabelSet::from_class_mask(mask), p)?;
        total = sl_add(total, SignedLog::from_log(r.log_prob));
    }
    Ok(total.log_nonneg().unwrap_or(f64::NEG_INFINITY))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use crate::verify::random_prob_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> ProbTensor {
        ProbTensor::new(Shape::new(2, 1, 1).unwrap(), vec![0.5, 0.3, 0.2]).unwrap()
    }

    fn set(l: &[usize]) -> LabelSet {
        LabelSet::new(l.iter().copied()).unwrap()
    }

    #[test]
    fn log_alpha_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_prob_tensor(&mut rng, Shape::new(3, 2, 2).unwrap());
        assert!(log_alpha(&[1, 2, 3, 4], &p).unwrap().abs() < 1e-15);

        let p = ProbTensor::new(Shape::new(1, 1, 1).unwrap(), vec![0.75, 0.25]).unwrap();
        assert_eq!(log_alpha(&[2], &p).unwrap(), 0.25f64.ln());

        let p = ProbTensor::uniform(Shape::new(2, 2, 2).unwrap());
        let got = log_alpha(&[1, 3], &p).unwrap();
        assert!((got - 4.0 * (2.0f64 / 3.0).ln()).abs() < 1e-14);

        assert_eq!(log_alpha(&[], &p), Err(Error::EmptySubset));
    }

    #[test]
    fn exact_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_prob_tensor(&mut rng, Shape::new(3, 2, 3).unwrap());
        let r = likelihood_exact(&LabelSet::empty(), &p).unwrap();
        let want: f64 = p.channel(3).iter().map(|v| v.ln()).sum();
        assert!((r.log_prob - want).abs() < 1e-12);
        assert_eq!(r.terms_evaluated, 1);

        let r = likelihood_exact(&set(&[1]), &fixture()).unwrap();
        assert!((r.log_prob - 0.5f64.ln()).abs() < 1e-12);
        assert!(likelihood_exact(&set(&[1, 2]), &fixture()).unwrap().is_zero());

        let shape = Shape::new(1, 2, 2).unwrap();
        let p = ProbTensor::new(shape, vec![0.5; 8]).unwrap();
        let r = likelihood_exact(&set(&[1]), &p).unwrap();
        assert!((r.log_prob - 0.9375f64.ln()).abs() < 1e-14);

        let p = random_prob_tensor(&mut rng, Shape::new(5, 2, 2).unwrap());
        let r = likelihood_exact(&set(&[1, 2, 3, 4, 5]), &p).unwrap();
        assert!(r.is_zero());
        assert_eq!(r.terms_evaluated, 32);
    }

    #[test]
    fn exact_matches_brute_force_on_seeded_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(20240);
        let p = random_prob_tensor(&mut rng, Shape::new(3, 2, 2).unwrap());
        let exact = likelihood_exact(&set(&[1, 3]), &p).unwrap();
        let brute = brute_force_likelihood(&set(&[1, 3]), &p).unwrap();
        assert!((exact.probability() - brute.probability()).abs() < 1e-12);
        assert!(brute.probability() > 0.01);
    }

    #[test]
    fn order_guard() {
        let p = ProbTensor::uniform(Shape::new(4, 2, 2).unwrap());
        let cfg = LikelihoodConfig::with_max_subset_order(3);
        assert_eq!(
            cfg.exact(&set(&[1, 2, 3, 4]), &p),
            Err(Error::SubsetOrderExceeded { order: 4, max: 3 })
        );
        assert!(cfg.exact(&set(&[1, 2, 3]), &p).is_ok());
        assert!(matches!(likelihood_exact(&set(&[5]), &p), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn invalid_tensor_rejected() {
        let p = ProbTensor::from_parts(Shape::new(1, 1, 1).unwrap(), vec![0.5, 0.4]).unwrap();
        assert!(matches!(likelihood_exact(&set(&[1]), &p), Err(Error::UnnormalizedLocation { .. })));
    }

    #[test]
    fn beta_table_examples() {
        let p = ProbTensor::new(Shape::new(1, 1, 1).unwrap(), vec![0.8, 0.2]).unwrap();
        let t = beta_table(&LabelSet::empty(), &p, 1).unwrap();
        assert!((t.get(&AugmentedSubset::new(0, true)).unwrap() - 0.2f64.ln()).abs() < 1e-15);

        let t = beta_table(&set(&[1, 2]), &fixture(), 2).unwrap();
        assert_eq!(t.get(&AugmentedSubset::new(0b11, false)), Some(f64::NEG_INFINITY));
        assert!((t.get(&AugmentedSubset::new(0b01, false)).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(t.get(&AugmentedSubset::new(0b11, true)), None);

        assert!(matches!(beta_table(&set(&[1]), &fixture(), 3), Err(Error::SubsetOrderExceeded { .. })));
    }

    #[test]
    fn beta_table_matches_enumeration() {
        // b({1,2,bg}): every one of 1, 2 and background emitted, nothing else.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_prob_tensor(&mut rng, Shape::new(2, 2, 2).unwrap());
        let t = beta_table(&set(&[1, 2]), &p, 3).unwrap();
        let got = t.get(&AugmentedSubset::new(0b11, true)).unwrap().exp();

        let mut want = 0.0;
        for code in 0..81usize {
            let mut c = code;
            let mut prob = 1.0;
            let mut seen = [false; 3];
            for loc in 0..4 {
                let ch = c % 3;
                c /= 3;
                seen[ch] = true;
                prob *= p.data()[ch * 4 + loc];
            }
            if seen.iter().all(|&s| s) {
                want += prob;
            }
        }
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        assert!(t.min_raw_value() >= -1e-9);
    }

    #[test]
    fn beta_examples() {
        let r = likelihood_beta(&set(&[1]), &fixture()).unwrap();
        assert!((r.log_prob - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(r.method, Method::BetaRecursion);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_prob_tensor(&mut rng, Shape::new(3, 3, 2).unwrap());
        let r = likelihood_beta(&LabelSet::empty(), &p).unwrap();
        assert!((r.log_prob - log_alpha(&[4], &p).unwrap()).abs() < 1e-12);
        for mask in 0..8u64 {
            let l = LabelSet::from_class_mask(mask);
            let a = likelihood_exact(&l, &p).unwrap().probability();
            let b = likelihood_beta(&l, &p).unwrap().probability();
            assert!((a - b).abs() <= 1e-9 * a.max(b), "{l:?}: {a} vs {b}");
        }
    }

    #[test]
    fn upper_bound_examples() {
        let r = likelihood_upper_bound(&set(&[1, 2]), &fixture(), 0).unwrap();
        assert!((r.probability() - 0.8).abs() < 1e-12);
        assert_eq!(r.method, Method::Truncated(0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_prob_tensor(&mut rng, Shape::new(4, 3, 3).unwrap());
        let l = set(&[1, 2, 3, 4]);
        let exact = likelihood_exact(&l, &p).unwrap().probability();
        let mut prev = f64::INFINITY;
        for k in 0..4 {
            let b = likelihood_upper_bound(&l, &p, k).unwrap().probability();
            assert!(b >= exact - 1e-9);
            assert!(b <= prev + 1e-12);
            prev = b;
        }
        assert!((prev - exact).abs() < 1e-12);
        assert!(likelihood_upper_bound(&l, &p, 5).is_err());
    }

    #[test]
    fn brute_force_examples() {
        // The fifteen single-class 2x2 emission patterns sum to a(l,bg) - a(bg).
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_prob_tensor(&mut rng, Shape::new(1, 2, 2).unwrap());
        let brute = brute_force_likelihood(&set(&[1]), &p).unwrap().probability();
        let closed = log_alpha(&[1, 2], &p).unwrap().exp() - log_alpha(&[2], &p).unwrap().exp();
        assert!((brute - closed).abs() < 1e-12);

        let p = random_prob_tensor(&mut rng, Shape::new(4, 1, 1).unwrap());
        let r = brute_force_likelihood(&set(&[3]), &p).unwrap();
        assert!((r.probability() - p.get(2, 0, 0)).abs() < 1e-15);

        let p = random_prob_tensor(&mut rng, Shape::new(3, 2, 2).unwrap());
        let dist = brute_force_distribution(&p).unwrap();
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (mask, &v) in dist.iter().enumerate() {
            let r = brute_force_likelihood(&LabelSet::from_class_mask(mask as u64), &p).unwrap();
            assert!((r.probability() - v).abs() < 1e-15);
        }

        let p = ProbTensor::uniform(Shape::new(10, 3, 3).unwrap());
        assert!(matches!(brute_force_likelihood(&set(&[1]), &p), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn partition_examples() {
        let p = ProbTensor::new(Shape::new(1, 1, 1).unwrap(), vec![0.35, 0.65]).unwrap();
        assert!(sum_over_all_label_sets(&p).unwrap().abs() < 1e-12);
        let p = ProbTensor::uniform(Shape::new(3, 2, 2).unwrap());
        assert!(sum_over_all_label_sets(&p).unwrap().abs() < 1e-12);
    }
}
