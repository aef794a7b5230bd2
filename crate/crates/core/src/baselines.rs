//! Reference losses: the single-location cross entropy and the max-pooling
//! MIL cost over a globally normalized tensor.

use crate::error::{Error, Result};
use crate::gradient::GradTensor;
use crate::tensor::{LabelSet, LogitTensor, ProbTensor, Shape, NORMALIZATION_TOLERANCE};

/// Nonnegative tensor summing to one over all channels and locations.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalProbTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl GlobalProbTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!("expected {} values, got {}", shape.len(), data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if let Some(i) = data.iter().position(|&v| v < 0.0) {
            let locs = shape.locations();
            return Err(Error::NegativeEntry {
                class: i / locs + 1,
                row: i % locs / shape.width + 1,
                col: i % shape.width + 1,
            });
        }
        let sum: f64 = data.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidConfig(format!("global sum is {sum}, expected 1")));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let l = self.shape.locations();
        &self.data[channel * l..(channel + 1) * l]
    }
}

/// Softmax over all `(C + 1) * M * N` entries at once.
pub fn global_softmax(logits: &LogitTensor) -> Result<GlobalProbTensor> {
    let z = logits.data();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut data: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = data.iter().sum();
    data.iter_mut().for_each(|v| *v /= sum);
    Ok(GlobalProbTensor { shape: logits.shape(), data })
}

/// Index of the first maximum in scan order.
fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `-(1/|L|) * sum over l in L of log max_{m,n} q[l, m, n]`.
pub fn traditional_mil_cost(labels: &LabelSet, q: &GlobalProbTensor) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    labels.check_range(q.shape.num_classes)?;
    let mut total = 0.0;
    for &l in labels.labels() {
        let max = q.channel(l - 1).iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::MaxIsZero { label: l });
        }
        total -= max.ln();
    }
    Ok(total / labels.len() as f64)
}

/// Cost and logit gradient of [`traditional_mil_cost`] under
/// [`global_softmax`]. The max passes its gradient to the first maximizing
/// location in row-major scan order.
pub fn traditional_mil_cost_and_grad(labels: &LabelSet, logits: &LogitTensor) -> Result<(f64, GradTensor)> {
    let q = global_softmax(logits)?;
    let cost = traditional_mil_cost(labels, &q)?;
    let shape = logits.shape();
    let locs = shape.locations();
    let mut grad = GradTensor { shape, data: q.data().to_vec() };
    let w = 1.0 / labels.len() as f64;
    for &l in labels.labels() {
        let c = l - 1;
        let loc = first_argmax(q.channel(c));
        grad.data[c * locs + loc] -= w;
    }
    Ok((cost, grad))
}

/// `-log p[l, 1, 1]` on a single-location tensor.
pub fn cross_entropy_special_case(label: usize, p: &ProbTensor) -> Result<f64> {
    let s = p.shape();
    if s.height != 1 || s.width != 1 {
        return Err(Error::ShapeNotSingleton);
    }
    if label == 0 || label > s.num_classes {
        return Err(Error::LabelOutOfRange { label, num_classes: s.num_classes });
    }
    Ok(-p.get(label - 1, 0, 0).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::likelihood_exact;
    use crate::verify::random_prob_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(l: &[usize]) -> LabelSet {
        LabelSet::new(l.iter().copied()).unwrap()
    }

    #[test]
    fn global_softmax_examples() {
        let q = global_softmax(&LogitTensor::zeros(Shape::new(1, 1, 1).unwrap())).unwrap();
        assert_eq!(q.data(), &[0.5, 0.5]);
        let q = global_softmax(&LogitTensor::zeros(Shape::new(10, 28, 28).unwrap())).unwrap();
        let want = 1.0 / (11.0 * 784.0);
        assert!(q.data().iter().all(|v| (v - want).abs() < 1e-18));

        let s = Shape::new(2, 2, 1).unwrap();
        let z: Vec<f64> = (0..6).map(|i| i as f64 * 0.7 - 1.0).collect();
        let a = global_softmax(&LogitTensor::new(s, z.clone()).unwrap()).unwrap();
        let b = global_softmax(&LogitTensor::new(s, z.iter().map(|v| v + 123.0).collect()).unwrap()).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn mil_cost_examples() {
        let s = Shape::new(2, 1, 2).unwrap();
        let q = GlobalProbTensor::new(s, vec![0.8, 0.0, 0.05, 0.05, 0.05, 0.05]).unwrap();
        assert!((traditional_mil_cost(&set(&[1]), &q).unwrap() - 0.22314355131420976).abs() < 1e-12);

        let q = GlobalProbTensor::new(s, vec![0.5, 0.0, 0.0, 0.5, 0.0, 0.0]).unwrap();
        assert!((traditional_mil_cost(&set(&[1, 2]), &q).unwrap() - 2f64.ln()).abs() < 1e-12);

        let q = GlobalProbTensor::new(s, vec![0.0, 0.0, 0.5, 0.0, 0.5, 0.0]).unwrap();
        assert_eq!(traditional_mil_cost(&set(&[1]), &q), Err(Error::MaxIsZero { label: 1 }));
        assert_eq!(traditional_mil_cost(&LabelSet::empty(), &q), Err(Error::EmptyLabelSet));

        // Zero exactly when each named class holds all the mass at one location.
        let q = GlobalProbTensor::new(s, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(traditional_mil_cost(&set(&[1]), &q).unwrap(), 0.0);
    }

    #[test]
    fn global_tensor_validation() {
        let s = Shape::new(1, 1, 1).unwrap();
        assert!(GlobalProbTensor::new(s, vec![0.5, 0.4]).is_err());
        assert!(matches!(GlobalProbTensor::new(s, vec![-0.5, 1.5]), Err(Error::NegativeEntry { .. })));
    }

    #[test]
    fn mil_gradient_matches_finite_differences() {
        let s = Shape::new(3, 2, 3).unwrap();
        let z: Vec<f64> = (0..s.len()).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let logits = LogitTensor::new(s, z.clone()).unwrap();
        let l = set(&[1, 3]);
        let (_, g) = traditional_mil_cost_and_grad(&l, &logits).unwrap();
        let h = 1e-6;
        for i in 0..z.len() {
            let eval = |d: f64| {
                let mut zz = z.clone();
                zz[i] += d;
                traditional_mil_cost(&l, &global_softmax(&LogitTensor::new(s, zz).unwrap()).unwrap()).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((fd - g.data[i]).abs() < 1e-7, "entry {i}: {fd} vs {}", g.data[i]);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let p = ProbTensor::new(Shape::new(2, 1, 1).unwrap(), vec![0.5, 0.3, 0.2]).unwrap();
        assert_eq!(cross_entropy_special_case(1, &p).unwrap(), -0.5f64.ln());
        let p = ProbTensor::uniform(Shape::new(2, 1, 1).unwrap());
        assert!((cross_entropy_special_case(2, &p).unwrap() - 3f64.ln()).abs() < 1e-15);
        let p = ProbTensor::uniform(Shape::new(2, 2, 1).unwrap());
        assert_eq!(cross_entropy_special_case(1, &p), Err(Error::ShapeNotSingleton));
    }

    #[test]
    fn cross_entropy_equals_negative_log_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for i in 0..100 {
            let c = 1 + i % 7;
            let p = random_prob_tensor(&mut rng, Shape::new(c, 1, 1).unwrap());
            for l in 1..=c {
                let ce = cross_entropy_special_case(l, &p).unwrap();
                let ll = likelihood_exact(&set(&[l]), &p).unwrap().log_prob;
                assert!((ce + ll).abs() <= 1e-12);
            }
        }
    }
}
