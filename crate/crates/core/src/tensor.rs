//! Label sets and per-location probability / logit tensors.
//!
//! Tensors have shape `(C + 1, M, N)` and are stored channel-major,
//! row-major: channel slowest, then row, then column. Class labels are
//! 1-based (`1..=C`) while channel indices are 0-based, so class `l` lives in
//! channel `l - 1` and the background label (numbered `C + 1`) lives in
//! channel `C`.

use crate::error::{Error, Result};

/// Tolerance on per-location sums accepted by [`ProbTensor::validate`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Set of distinct class labels present in a sample. Never contains the
/// background label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LabelSet {
    labels: Vec<usize>,
}

impl LabelSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a label set, collapsing duplicates. Labels are 1-based, so `0`
    /// is rejected; the upper bound is checked where `C` is known.
    pub fn new<I: IntoIterator<Item = usize>>(labels: I) -> Result<Self> {
        let mut labels: Vec<usize> = labels.into_iter().collect();
        if labels.contains(&0) {
            return Err(Error::LabelOutOfRange { label: 0, num_classes: 0 });
        }
        labels.sort_unstable();
        labels.dedup();
        Ok(Self { labels })
    }

    /// Builds a label set and checks every label is within `1..=num_classes`.
    pub fn with_classes<I: IntoIterator<Item = usize>>(labels: I, num_classes: usize) -> Result<Self> {
        let set = Self::new(labels)?;
        set.check_range(num_classes)?;
        Ok(set)
    }

    pub fn from_binary_vector(bits: &[bool]) -> Self {
        let labels = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i + 1)
            .collect();
        Self { labels }
    }

    /// Labels whose bit is set in `mask`, bit `i` standing for class `i + 1`.
    pub fn from_class_mask(mask: u64) -> Self {
        let labels = (0..64).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect();
        Self { labels }
    }

    pub fn check_range(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l > num_classes) {
            Some(&label) => Err(Error::LabelOutOfRange { label, num_classes }),
            None => Ok(()),
        }
    }

    /// Labels in ascending order.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn to_binary_vector(&self, num_classes: usize) -> Result<Vec<u8>> {
        self.check_range(num_classes)?;
        let mut bits = vec![0u8; num_classes];
        for &l in &self.labels {
            bits[l - 1] = 1;
        }
        Ok(bits)
    }
}

/// Shape metadata shared by probability and logit tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(num_classes: usize, height: usize, width: usize) -> Result<Self> {
        if num_classes == 0 || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "dimensions must be positive, got C={num_classes}, M={height}, N={width}"
            )));
        }
        Ok(Self { num_classes, height, width })
    }

    /// Number of channels, `C + 1`.
    pub fn channels(&self) -> usize {
        self.num_classes + 1
    }

    /// Number of locations, `M * N`.
    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.channels() * self.locations()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel holding the background label.
    pub fn background(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.height + row) * self.width + col
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape ({}, {}, {}) needs {} values, got {len}",
                self.channels(),
                self.height,
                self.width,
                self.len()
            )));
        }
        Ok(())
    }
}

/// Per-location categorical distributions over `C` classes plus background.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl ProbTensor {
    /// Wraps raw values after a shape check only. Call [`validate`](Self::validate)
    /// before relying on the probability invariants.
    pub fn from_parts(shape: Shape, data: Vec<f64>) -> Result<Self> {
        shape.check_len(data.len())?;
        Ok(Self { shape, data })
    }

    /// Wraps raw values and validates them.
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        let t = Self::from_parts(shape, data)?;
        t.validate()?;
        Ok(t)
    }

    /// Every location uniform over all `C + 1` channels.
    pub fn uniform(shape: Shape) -> Self {
        let v = 1.0 / shape.channels() as f64;
        Self { shape, data: vec![v; shape.len()] }
    }

    /// Checks nonnegativity and per-location normalization.
    pub fn validate(&self) -> Result<()> {
        let s = self.shape;
        for c in 0..s.channels() {
            for m in 0..s.height {
                for n in 0..s.width {
                    let v = self.get(c, m, n);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteInput);
                    }
                    if v < 0.0 {
                        return Err(Error::NegativeEntry { class: c + 1, row: m + 1, col: n + 1 });
                    }
                }
            }
        }
        for m in 0..s.height {
            for n in 0..s.width {
                let sum: f64 = (0..s.channels()).map(|c| self.get(c, m, n)).sum();
                if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                    return Err(Error::UnnormalizedLocation { row: m + 1, col: n + 1, sum });
                }
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.shape.num_classes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[self.shape.index(channel, row, col)]
    }

    /// Values of one channel over all locations, row-major.
    pub fn channel(&self, channel: usize) -> &[f64] {
        let l = self.shape.locations();
        &self.data[channel * l..(channel + 1) * l]
    }
}

/// Unconstrained pre-softmax scores with the same layout as [`ProbTensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogitTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl LogitTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        shape.check_len(data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![0.0; shape.len()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[self.shape.index(channel, row, col)]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let l = self.shape.locations();
        &self.data[channel * l..(channel + 1) * l]
    }
}

/// Softmax over channels, independently at each location.
pub fn softmax_locations(logits: &LogitTensor) -> Result<ProbTensor> {
    let shape = logits.shape();
    let z = logits.data();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let locs = shape.locations();
    let mut out = vec![0.0; shape.len()];
    for loc in 0..locs {
        let max = (0..shape.channels())
            .map(|c| z[c * locs + loc])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..shape.channels() {
            let e = (z[c * locs + loc] - max).exp();
            out[c * locs + loc] = e;
            sum += e;
        }
        for c in 0..shape.channels() {
            out[c * locs + loc] /= sum;
        }
    }
    Ok(ProbTensor { shape, data: out })
}
