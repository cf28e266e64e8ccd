//! Double-double arithmetic and compensated summation.
//!
//! The ledger quantities `r_j(x)` are tiny differences of very large sums
//! (the prime sum and the kernel integral nearly cancel), so they are carried
//! in unevaluated-sum form `hi + lo` with roughly 106 bits of significand.
//! Only the operations the ledger and kernel actually need are provided.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// A real number represented as the unevaluated sum `hi + lo`, `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

const FRAC_PI_2: Dd = Dd {
    hi: std::f64::consts::FRAC_PI_2,
    lo: 6.123_233_995_736_766e-17,
};

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub const fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact for every `u64` (values above 2^53 are split across both words).
    pub fn from_u64(n: u64) -> Self {
        let hi = n as f64;
        // `hi` may round; the remainder is exactly representable.
        let rem = n as i128 - hi as i128;
        let (hi, lo) = quick_two_sum(hi, rem as f64);
        Dd { hi, lo }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    #[inline]
    pub fn add_f64(self, b: f64) -> Self {
        let (s, e) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        Dd { hi, lo }
    }

    pub fn ldexp(self, e: i32) -> Self {
        let f = 2f64.powi(e);
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    pub fn powi(self, n: u32) -> Self {
        let mut acc = Dd::ONE;
        let mut base = self;
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2.mul_f64(k)).ldexp(-10);
        // expm1 of the reduced argument, |r| < 4e-4
        let mut term = r;
        let mut sum = r;
        for i in 2..=12 {
            term = term * r / Dd::from_f64(i as f64);
            sum += term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // (1 + s)^2 - 1 = 2s + s^2, applied ten times.
        for _ in 0..10 {
            sum = sum.ldexp(1) + sum * sum;
        }
        (sum + Dd::ONE).ldexp(k as i32)
    }

    /// Natural logarithm of a positive value.
    pub fn ln(self) -> Self {
        assert!(self.hi > 0.0, "logarithm of a non-positive value");
        let y = Dd::from_f64(self.hi.ln());
        // One Newton step on exp(y) = x doubles the number of correct bits.
        y + self * (-y).exp() - Dd::ONE
    }

    /// Simultaneous sine and cosine.
    pub fn sin_cos(self) -> (Self, Self) {
        let q = (self.hi / FRAC_PI_2.hi).round();
        let r = self - FRAC_PI_2.mul_f64(q);
        let r2 = r * r;
        let mut sin = r;
        let mut cos = Dd::ONE;
        let mut term_s = r;
        let mut term_c = Dd::ONE;
        let mut k = 1.0;
        loop {
            term_c = -(term_c * r2) / Dd::from_f64(k * (k + 1.0));
            term_s = -(term_s * r2) / Dd::from_f64((k + 1.0) * (k + 2.0));
            cos += term_c;
            sin += term_s;
            k += 2.0;
            if term_c.hi.abs() < 1e-34 && term_s.hi.abs() < 1e-34 {
                break;
            }
        }
        match (q as i64).rem_euclid(4) {
            0 => (sin, cos),
            1 => (cos, -sin),
            2 => (-sin, -cos),
            _ => (-cos, sin),
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::from_f64(x)
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add_f64(q3)
    }
}

impl AddAssign for Dd {
    #[inline]
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
    }
}

impl SubAssign for Dd {
    #[inline]
    fn sub_assign(&mut self, b: Dd) {
        *self = *self - b;
    }
}

/// Complex number with double-double parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DdComplex {
    pub re: Dd,
    pub im: Dd,
}

impl DdComplex {
    pub const ZERO: DdComplex = DdComplex {
        re: Dd::ZERO,
        im: Dd::ZERO,
    };
    pub const ONE: DdComplex = DdComplex {
        re: Dd::ONE,
        im: Dd::ZERO,
    };

    pub fn new(re: Dd, im: Dd) -> Self {
        DdComplex { re, im }
    }

    pub fn from_real(re: Dd) -> Self {
        DdComplex { re, im: Dd::ZERO }
    }

    pub fn from_c64(z: Complex64) -> Self {
        DdComplex {
            re: Dd::from_f64(z.re),
            im: Dd::from_f64(z.im),
        }
    }

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn scale(self, s: Dd) -> Self {
        DdComplex {
            re: self.re * s,
            im: self.im * s,
        }
    }

    pub fn scale_f64(self, s: f64) -> Self {
        DdComplex {
            re: self.re.mul_f64(s),
            im: self.im.mul_f64(s),
        }
    }

    /// Product with an ordinary complex number.
    pub fn mul_c64(self, z: Complex64) -> Self {
        DdComplex {
            re: self.re.mul_f64(z.re) - self.im.mul_f64(z.im),
            im: self.re.mul_f64(z.im) + self.im.mul_f64(z.re),
        }
    }

    pub fn norm_sqr(self) -> Dd {
        self.re * self.re + self.im * self.im
    }

    pub fn norm(self) -> f64 {
        self.to_c64().norm()
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn conj(self) -> Self {
        DdComplex {
            re: self.re,
            im: -self.im,
        }
    }
}

impl Neg for DdComplex {
    type Output = DdComplex;
    fn neg(self) -> DdComplex {
        DdComplex {
            re: -self.re,
            im: -self.im,
        }
    }
}

impl Add for DdComplex {
    type Output = DdComplex;
    #[inline]
    fn add(self, b: DdComplex) -> DdComplex {
        DdComplex {
            re: self.re + b.re,
            im: self.im + b.im,
        }
    }
}

impl Sub for DdComplex {
    type Output = DdComplex;
    #[inline]
    fn sub(self, b: DdComplex) -> DdComplex {
        DdComplex {
            re: self.re - b.re,
            im: self.im - b.im,
        }
    }
}

impl Mul for DdComplex {
    type Output = DdComplex;
    #[inline]
    fn mul(self, b: DdComplex) -> DdComplex {
        DdComplex {
            re: self.re * b.re - self.im * b.im,
            im: self.re * b.im + self.im * b.re,
        }
    }
}

impl Div for DdComplex {
    type Output = DdComplex;
    fn div(self, b: DdComplex) -> DdComplex {
        let d = b.norm_sqr();
        let n = self * b.conj();
        DdComplex {
            re: n.re / d,
            im: n.im / d,
        }
    }
}

impl AddAssign for DdComplex {
    #[inline]
    fn add_assign(&mut self, b: DdComplex) {
        *self = *self + b;
    }
}

impl SubAssign for DdComplex {
    #[inline]
    fn sub_assign(&mut self, b: DdComplex) {
        *self = *self - b;
    }
}

/// `x^w` for real `x > 0` and complex `w`, in double-double precision.
pub fn real_pow(x: f64, w: Complex64) -> DdComplex {
    real_pow_ln(Dd::from_f64(x).ln(), w)
}

/// `exp(w * log_x)` with a precomputed double-double logarithm.
pub fn real_pow_ln(log_x: Dd, w: Complex64) -> DdComplex {
    let modulus = log_x.mul_f64(w.re).exp();
    if w.im == 0.0 {
        return DdComplex::from_real(modulus);
    }
    let (s, c) = log_x.mul_f64(w.im).sin_cos();
    DdComplex::new(modulus * c, modulus * s)
}

/// Neumaier-compensated running sum of complex `f64` terms.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: Complex64,
    comp: Complex64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        let (re, cre) = neumaier(self.sum.re, z.re);
        let (im, cim) = neumaier(self.sum.im, z.im);
        self.sum = Complex64::new(re, im);
        self.comp += Complex64::new(cre, cim);
    }

    pub fn value(&self) -> Complex64 {
        self.sum + self.comp
    }
}

#[inline]
fn neumaier(sum: f64, x: f64) -> (f64, f64) {
    let t = sum + x;
    let c = if sum.abs() >= x.abs() {
        (sum - t) + x
    } else {
        (x - t) + sum
    };
    (t, c)
}

/// Binomial coefficient as a float; exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Pochhammer product `s (s+1) ... (s+j-1)`; equals 1 for `j = 0`.
pub fn pochhammer(s: Complex64, j: usize) -> Complex64 {
    (0..j).fold(Complex64::new(1.0, 0.0), |acc, i| acc * (s + i as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, b: Dd, tol: f64) -> bool {
        let d = (a - b).abs().to_f64();
        d <= tol * b.abs().to_f64().max(1e-300)
    }

    #[test]
    fn one_third_times_three() {
        let third = Dd::ONE / Dd::from_f64(3.0);
        let back = third.mul_f64(3.0);
        assert!(close(back, Dd::ONE, 1e-31));
        assert!(third.lo != 0.0);
    }

    #[test]
    fn u64_conversion_is_exact() {
        let n = (1u64 << 60) + 12345;
        let d = Dd::from_u64(n);
        assert_eq!(d.hi as i128 + d.lo as i128, n as i128);
    }

    #[test]
    fn exp_and_ln_are_inverse() {
        for &x in &[1e-10, 0.3, 1.0, 2.0, 17.5, 1e6, 3.7e15] {
            let l = Dd::from_f64(x).ln();
            assert!(close(l.exp(), Dd::from_f64(x), 1e-28), "x = {x}");
        }
        assert!(close(Dd::ONE.exp(), Dd { hi: std::f64::consts::E, lo: 1.445_646_891_729_250_2e-16 }, 1e-31));
    }

    #[test]
    fn exp_is_additive() {
        let a = Dd::from_f64(3.25);
        let b = Dd::from_f64(-7.125);
        assert!(close((a + b).exp(), a.exp() * b.exp(), 1e-28));
    }

    #[test]
    fn sin_cos_identities() {
        for &t in &[0.0, 0.1, 1.0, 2.5, -4.0, 100.0, 523.7] {
            let (s, c) = Dd::from_f64(t).sin_cos();
            let one = s * s + c * c;
            assert!(close(one, Dd::ONE, 1e-30), "t = {t}");
            assert!((s.to_f64() - t.sin()).abs() < 1e-13);
            assert!((c.to_f64() - t.cos()).abs() < 1e-13);
        }
        // sin(pi/6) = 1/2 with pi/6 = (pi/2)/3
        let (s, _) = (FRAC_PI_2 / Dd::from_f64(3.0)).sin_cos();
        assert!(close(s, Dd::from_f64(0.5), 1e-30));
    }

    #[test]
    fn real_pow_matches_f64() {
        let w = Complex64::new(-0.75, 0.5);
        let z = real_pow(1234.5, w).to_c64();
        let expect = Complex64::new(1234.5, 0.0).powc(w);
        assert!((z - expect).norm() < 1e-14 * expect.norm());
        // x^{1/2} * x^{1/2} = x to double-double accuracy
        let h = real_pow(7.0, Complex64::new(0.5, 0.0));
        assert!(close((h * h).re, Dd::from_f64(7.0), 1e-30));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(Complex64::new(1e16, 0.0));
        for _ in 0..1000 {
            s.add(Complex64::new(1.0, 0.0));
        }
        s.add(Complex64::new(-1e16, 0.0));
        assert_eq!(s.value().re, 1000.0);
    }

    #[test]
    fn binomial_and_factorial() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(6, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert_eq!(factorial(5), 120.0);
        let p = pochhammer(Complex64::new(2.0, 0.0), 3);
        assert_eq!(p, Complex64::new(24.0, 0.0));
    }
}
