//! Reference implementations shared by integration tests. Nothing here calls
//! into the library's numeric code.

#![allow(dead_code)]

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Fractional bits of the fixed-point representation.
const FRAC_BITS: u32 = 256;

/// Fixed-point real `value / 2^256`, for ln/exp to ~75 decimal digits.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fixed(BigInt);

impl Fixed {
    pub fn one() -> Self {
        Fixed(BigInt::one() << FRAC_BITS)
    }

    pub fn from_int(n: i64) -> Self {
        Fixed(BigInt::from(n) << FRAC_BITS)
    }

    /// Exact conversion of a finite double.
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite());
        if x == 0.0 {
            return Fixed(BigInt::zero());
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let exponent = ((bits >> 52) & 0x7ff) as i64;
        let fraction = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if exponent == 0 {
            (fraction, -1074)
        } else {
            (fraction | (1u64 << 52), exponent - 1075)
        };
        let shift = exp + FRAC_BITS as i64;
        let mut v = BigInt::from(mantissa);
        if shift >= 0 {
            v <<= shift as usize;
        } else {
            v >>= (-shift) as usize;
        }
        Fixed(if negative { -v } else { v })
    }

    pub fn to_f64(&self) -> f64 {
        // Keep 64 significant bits, then scale by a power of two.
        let bits = self.0.bits() as i64;
        let drop = (bits - 64).max(0);
        let top = (&self.0 >> drop as usize).to_f64().unwrap();
        top * 2f64.powi((drop - FRAC_BITS as i64) as i32)
    }

    pub fn add(&self, o: &Self) -> Self {
        Fixed(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Fixed(&self.0 - &o.0)
    }

    pub fn mul(&self, o: &Self) -> Self {
        Fixed((&self.0 * &o.0) >> FRAC_BITS)
    }

    pub fn div(&self, o: &Self) -> Self {
        Fixed((&self.0 << FRAC_BITS) / &o.0)
    }

    pub fn div_int(&self, n: i64) -> Self {
        Fixed(&self.0 / BigInt::from(n))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// `atanh(z)` for `|z| < 1/2` by its odd power series.
    fn atanh(z: &Self) -> Self {
        let z2 = z.mul(z);
        let mut power = z.clone();
        let mut sum = z.clone();
        let mut k = 1i64;
        loop {
            power = power.mul(&z2);
            k += 2;
            let term = power.div_int(k);
            if term.is_zero() {
                return sum;
            }
            sum = sum.add(&term);
        }
    }

    pub fn ln2() -> Self {
        static LN2: OnceLock<Fixed> = OnceLock::new();
        LN2.get_or_init(|| {
            let third = Fixed::one().div_int(3);
            Fixed::atanh(&third).add(&Fixed::atanh(&third))
        })
        .clone()
    }

    /// Natural log of a positive value.
    pub fn ln(&self) -> Self {
        assert!(self.0.is_positive(), "ln of non-positive value");
        // self = m * 2^k with m in [1, 2).
        let k = self.0.bits() as i64 - 1 - FRAC_BITS as i64;
        let m = if k >= 0 {
            Fixed(&self.0 >> k as usize)
        } else {
            Fixed(&self.0 << (-k) as usize)
        };
        let one = Fixed::one();
        let z = m.sub(&one).div(&m.add(&one));
        let ln_m = Fixed::atanh(&z).add(&Fixed::atanh(&z));
        ln_m.add(&Fixed(Fixed::ln2().0 * BigInt::from(k)))
    }

    /// `e^self` for a nonnegative argument.
    pub fn exp(&self) -> Self {
        assert!(!self.0.is_negative(), "exp oracle only handles nonnegative arguments");
        let ln2 = Fixed::ln2();
        let k = &self.0 / &ln2.0;
        let r = self.sub(&Fixed(&ln2.0 * &k));
        let mut term = Fixed::one();
        let mut sum = Fixed::one();
        let mut n = 1i64;
        loop {
            term = term.mul(&r).div_int(n);
            if term.is_zero() {
                break;
            }
            sum = sum.add(&term);
            n += 1;
        }
        Fixed(sum.0 << k.to_usize().unwrap())
    }
}

/// Perplexity of a list of gold-class probabilities, each clamped to
/// `[floor, 1]`, computed in 256-bit fixed point.
pub fn perplexity_oracle(gold_probabilities: &[f64], floor: f64) -> f64 {
    let mut nll = Fixed::from_int(0);
    for &p in gold_probabilities {
        nll = nll.sub(&Fixed::from_f64(p.clamp(floor, 1.0)).ln());
    }
    nll.div_int(gold_probabilities.len() as i64).exp().to_f64()
}

pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

/// Exact `w_i = (1/(P_i - 1)) / sum_j (1/(P_j - 1))`, with `P - 1` floored at `floor`.
pub fn inverse_perplexity_oracle(perplexities: &[f64], floor: f64) -> Vec<f64> {
    let floor = rational(floor);
    let inv: Vec<BigRational> = perplexities
        .iter()
        .map(|&p| {
            let adjusted = rational(p) - BigRational::one();
            let adjusted = if adjusted < floor { floor.clone() } else { adjusted };
            adjusted.recip()
        })
        .collect();
    let total = inv.iter().fold(BigRational::zero(), |acc, x| acc + x);
    inv.iter().map(|x| (x / &total).to_f64().unwrap()).collect()
}

/// Macro and micro F1 by counting, per class, true positives, false
/// positives and false negatives over `(gold, predicted)` pairs.
/// F1 is `2tp / (2tp + fp + fn)`, 0 when that denominator is 0.
pub fn f1_oracle(gold: &[usize], predicted: &[usize], classes: usize) -> (f64, f64, f64) {
    let f1 = |tp: u64, fp: u64, fn_: u64| {
        if 2 * tp + fp + fn_ == 0 {
            0.0
        } else {
            (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
        }
    };
    let mut macro_sum = 0.0;
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for k in 0..classes {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&g, &p) in gold.iter().zip(predicted) {
            match (g == k, p == k) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        macro_sum += f1(tp, fp, fn_);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
    }
    let correct = gold.iter().zip(predicted).filter(|(g, p)| g == p).count();
    (
        macro_sum / classes as f64,
        f1(tp_all, fp_all, fn_all),
        correct as f64 / gold.len() as f64,
    )
}

/// Checks the fixed-point ln/exp against known constants.
pub fn fixed_point_self_check() {
    assert!((Fixed::ln2().to_f64() - std::f64::consts::LN_2).abs() < 1e-16);
    assert!((Fixed::one().exp().to_f64() - std::f64::consts::E).abs() < 1e-15);
    assert!((Fixed::from_f64(10.0).ln().to_f64() - std::f64::consts::LN_10).abs() < 1e-15);
}
