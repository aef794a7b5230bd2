//! Sign and log-magnitude scalars for alternating sums of tiny quantities.
//!
//! `log(x ± y) = log x + log(1 ± exp(log y - log x))` with `x` the larger
//! magnitude, so `exp` only ever sees a nonpositive argument.

use std::cmp::Ordering;
use std::ops::{Add, Neg};

/// Opposite-sign operands whose log magnitudes differ by less than this
/// cancel to exactly zero.
pub const CANCELLATION_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    fn flip(self) -> Self {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Zero => 0.0,
            Sign::Positive => 1.0,
        }
    }
}

/// The real number `sign * exp(logmag)`. `logmag` is meaningless when the
/// sign is zero and finite otherwise.
#[derive(Debug, Clone, Copy)]
pub struct SignedLog {
    sign: Sign,
    logmag: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog { sign: Sign::Zero, logmag: f64::NEG_INFINITY };
    pub const ONE: SignedLog = SignedLog { sign: Sign::Positive, logmag: 0.0 };

    /// Positive value with the given log magnitude; `-inf` maps to zero.
    pub fn from_log(logmag: f64) -> Self {
        if logmag == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            debug_assert!(logmag.is_finite(), "log magnitude must be finite or -inf");
            Self { sign: Sign::Positive, logmag }
        }
    }

    /// Negative value with the given log magnitude; `-inf` maps to zero.
    pub fn from_neg_log(logmag: f64) -> Self {
        -Self::from_log(logmag)
    }

    pub fn from_f64(x: f64) -> Self {
        match x.partial_cmp(&0.0) {
            Some(Ordering::Greater) => Self { sign: Sign::Positive, logmag: x.ln() },
            Some(Ordering::Less) => Self { sign: Sign::Negative, logmag: (-x).ln() },
            _ => Self::ZERO,
        }
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn logmag(&self) -> f64 {
        self.logmag
    }

    pub fn is_zero(&self) -> bool {
        self.sign == Sign::Zero
    }

    /// Log of the value when it is nonnegative: `-inf` for zero, `None` for
    /// a negative value.
    pub fn log_nonneg(&self) -> Option<f64> {
        match self.sign {
            Sign::Positive => Some(self.logmag),
            Sign::Zero => Some(f64::NEG_INFINITY),
            Sign::Negative => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self.sign {
            Sign::Zero => 0.0,
            s => s.as_f64() * self.logmag.exp(),
        }
    }

    /// Multiplication by a positive factor given as its log.
    pub fn scale_log(self, log_factor: f64) -> Self {
        if self.is_zero() || log_factor == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self { sign: self.sign, logmag: self.logmag + log_factor }
        }
    }
}

/// Sum of two signed-log values.
pub fn sl_add(a: SignedLog, b: SignedLog) -> SignedLog {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    // Anchor on the larger magnitude; ties broken by sign so the choice does
    // not depend on argument order.
    let (big, small) = match a.logmag.partial_cmp(&b.logmag) {
        Some(Ordering::Less) => (b, a),
        Some(Ordering::Greater) => (a, b),
        _ => {
            if a.sign >= b.sign {
                (a, b)
            } else {
                (b, a)
            }
        }
    };
    let diff = small.logmag - big.logmag;
    if big.sign == small.sign {
        SignedLog { sign: big.sign, logmag: big.logmag + diff.exp().ln_1p() }
    } else if -diff < CANCELLATION_THRESHOLD {
        SignedLog::ZERO
    } else {
        SignedLog { sign: big.sign, logmag: big.logmag + (-diff.exp_m1()).ln() }
    }
}

/// Left fold of [`sl_add`] in input order.
pub fn sl_sum<I: IntoIterator<Item = SignedLog>>(terms: I) -> SignedLog {
    terms.into_iter().fold(SignedLog::ZERO, sl_add)
}

/// `log(sum exp(x_i))` over the finite-or-`-inf` inputs.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl Add for SignedLog {
    type Output = SignedLog;

    fn add(self, rhs: Self) -> Self {
        sl_add(self, rhs)
    }
}

impl Neg for SignedLog {
    type Output = SignedLog;

    fn neg(self) -> Self {
        SignedLog { sign: self.sign.flip(), logmag: self.logmag }
    }
}

impl Default for SignedLog {
    fn default() -> Self {
        Self::ZERO
    }
}

impl PartialEq for SignedLog {
    fn eq(&self, other: &Self) -> bool {
        self.sign == other.sign && (self.sign == Sign::Zero || self.logmag == other.logmag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-14
    }

    #[test]
    fn from_log_examples() {
        let v = SignedLog::from_log(0.25f64.ln());
        assert_eq!(v.sign(), Sign::Positive);
        assert_eq!(v.logmag(), 0.25f64.ln());
        assert!(SignedLog::from_log(f64::NEG_INFINITY).is_zero());
        assert_eq!(SignedLog::from_log(0.0).to_f64(), 1.0);
    }

    #[test]
    fn add_examples() {
        let two = sl_add(SignedLog::ONE, SignedLog::ONE);
        assert_eq!(two.sign(), Sign::Positive);
        assert!(close(two.logmag(), 2f64.ln()));

        let half = SignedLog::from_log(0.7f64.ln()) + SignedLog::from_neg_log(0.2f64.ln());
        assert_eq!(half.sign(), Sign::Positive);
        assert!(close(half.logmag(), 0.5f64.ln()));

        let zero = SignedLog::from_log(0.3f64.ln()) + SignedLog::from_neg_log(0.3f64.ln());
        assert!(zero.is_zero());

        let neg = SignedLog::from_log(0.2f64.ln()) + SignedLog::from_neg_log(0.7f64.ln());
        assert_eq!(neg.sign(), Sign::Negative);
        assert!(close(neg.logmag(), 0.5f64.ln()));
    }

    #[test]
    fn sum_examples() {
        let s = sl_sum(std::iter::repeat_n(SignedLog::from_log(-700.0), 4));
        assert_eq!(s.sign(), Sign::Positive);
        assert!(close(s.logmag(), -700.0 + 4f64.ln()));
        assert_eq!((-700.0f64).exp() * 1e-300, 0.0);

        assert!(sl_sum(std::iter::empty()).is_zero());

        let s = sl_sum([SignedLog::ONE, -SignedLog::ONE, SignedLog::from_log(3f64.ln())]);
        assert_eq!(s.sign(), Sign::Positive);
        assert!(close(s.logmag(), 3f64.ln()));
    }

    #[test]
    fn random_pairs_match_linear_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draw = |rng: &mut ChaCha8Rng| {
            let l = rng.random_range(-50.0..50.0);
            if rng.random_bool(0.5) {
                SignedLog::from_log(l)
            } else {
                SignedLog::from_neg_log(l)
            }
        };
        for _ in 0..100_000 {
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let (x, y) = (a.to_f64(), b.to_f64());
            let got = sl_add(a, b).to_f64();
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!((got - (x + y)).abs() <= 1e-12 * scale, "{x} + {y} gave {got}");
        }
    }

    #[test]
    fn no_overflow_across_range() {
        for &l in &[-1e8, -745.0, -1.0, 0.0, 300.0, 700.0] {
            let a = SignedLog::from_log(l);
            let s = a + a;
            assert!(s.logmag().is_finite());
            assert!(close(s.logmag() - l, 2f64.ln()) || (s.logmag() - l - 2f64.ln()).abs() < 1e-7);
            let d = a + SignedLog::from_neg_log(l - 1.0);
            assert!(d.logmag().is_finite());
        }
    }

    proptest! {
        #[test]
        fn add_is_commutative_to_the_bit(
            la in -1e3f64..700.0, lb in -1e3f64..700.0, sa: bool, sb: bool,
        ) {
            let mk = |l: f64, s: bool| if s { SignedLog::from_log(l) } else { SignedLog::from_neg_log(l) };
            let (a, b) = (mk(la, sa), mk(lb, sb));
            let ab = sl_add(a, b);
            let ba = sl_add(b, a);
            prop_assert_eq!(ab.sign(), ba.sign());
            if !ab.is_zero() {
                prop_assert_eq!(ab.logmag().to_bits(), ba.logmag().to_bits());
            }
        }
    }
}
