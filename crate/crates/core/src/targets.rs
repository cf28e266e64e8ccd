//! Prescribed zeros and poles, and the kernel `q(x) = sum n_a x^{a-1}` whose
//! Mellin transform `f_0(s) = int_1^inf q(x) x^{-s} dx = sum n_a / (s - a)`
//! carries exactly those singularities into the logarithmic derivative.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numerics::{binomial, factorial, real_pow_ln, Dd, DdComplex};

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("entry {index}: location real part {re} is not below 1")]
    NotLeftOfOne { index: usize, re: f64 },
    #[error("entry {index}: order must be a nonzero integer")]
    ZeroOrder { index: usize },
    #[error("entry {index}: location is not finite")]
    NonFinite { index: usize },
    #[error("entries {first} and {second} share a location")]
    Duplicate { first: usize, second: usize },
    #[error("s = {0} coincides with a prescribed singularity")]
    Pole(Complex64),
    #[error("malformed spec: {0}")]
    Json(String),
}

/// One prescribed singularity: a zero of order `order` when positive, a pole
/// of order `-order` when negative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecEntry {
    pub re: f64,
    pub im: f64,
    pub order: i32,
}

impl SpecEntry {
    pub fn new(location: Complex64, order: i32) -> Self {
        SpecEntry {
            re: location.re,
            im: location.im,
            order,
        }
    }

    pub fn location(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// A finite signed multiset of zeros and poles in `Re(s) < 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ZeroPoleSpec {
    entries: Vec<SpecEntry>,
}

impl ZeroPoleSpec {
    pub fn new(entries: Vec<SpecEntry>) -> Result<Self, SpecError> {
        validate(&entries)?;
        Ok(ZeroPoleSpec { entries })
    }

    pub fn empty() -> Self {
        ZeroPoleSpec::default()
    }

    pub fn entries(&self) -> &[SpecEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `[{"re": .., "im": .., "order": ..}, ...]` and validates it.
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let entries: Vec<SpecEntry> =
            serde_json::from_str(text).map_err(|e| SpecError::Json(e.to_string()))?;
        ZeroPoleSpec::new(entries)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.entries).expect("spec entries serialize")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex_digest(self.to_json().as_bytes())
    }
}

impl<'de> Deserialize<'de> for ZeroPoleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let entries = Vec::<SpecEntry>::deserialize(d)?;
        ZeroPoleSpec::new(entries).map_err(serde::de::Error::custom)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn validate(entries: &[SpecEntry]) -> Result<(), SpecError> {
    for (index, e) in entries.iter().enumerate() {
        if !(e.re.is_finite() && e.im.is_finite()) {
            return Err(SpecError::NonFinite { index });
        }
        if e.re >= 1.0 {
            return Err(SpecError::NotLeftOfOne { index, re: e.re });
        }
        if e.order == 0 {
            return Err(SpecError::ZeroOrder { index });
        }
        if let Some(first) = entries[..index]
            .iter()
            .position(|f| f.re == e.re && f.im == e.im)
        {
            return Err(SpecError::Duplicate {
                first,
                second: index,
            });
        }
    }
    Ok(())
}

/// `c * x^w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTerm {
    pub coefficient: Complex64,
    pub exponent: Complex64,
}

/// `q(x) = sum_i c_i x^{w_i}` with every `Re(w_i) < 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelQ {
    pub terms: Vec<KernelTerm>,
}

pub fn kernel_from_spec(spec: &ZeroPoleSpec) -> Result<KernelQ, SpecError> {
    validate(spec.entries())?;
    Ok(KernelQ {
        terms: spec
            .entries()
            .iter()
            .map(|e| KernelTerm {
                coefficient: Complex64::new(e.order as f64, 0.0),
                exponent: e.location() - 1.0,
            })
            .collect(),
    })
}

/// `f_0(s) = sum n_i / (s - a_i)`.
pub fn f0_value(spec: &ZeroPoleSpec, s: Complex64) -> Result<Complex64, SpecError> {
    let mut acc = Complex64::new(0.0, 0.0);
    for e in spec.entries() {
        let d = s - e.location();
        if d == Complex64::new(0.0, 0.0) {
            return Err(SpecError::Pole(s));
        }
        acc += e.order as f64 / d;
    }
    Ok(acc)
}

/// Exponents within this distance of zero take the logarithmic branch.
const LOG_BRANCH_EPS: f64 = 1e-13;

impl KernelQ {
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|t| t.coefficient * Complex64::new(x, 0.0).powc(t.exponent))
            .sum()
    }

    /// Largest `Re(w_i)`, or `-inf` for the zero kernel.
    pub fn max_exponent_re(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.exponent.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn coefficient_l1(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.norm()).sum()
    }

    /// `int_lo^hi (hi - t)^{j-1} q(t) dt` for `j = 1..=j_max`, in double-double.
    ///
    /// Uses the binomial expansion of `(hi - t)^{j-1}` and the antiderivative
    /// of each power; the cancellation this causes on short intervals is
    /// absorbed by the extra precision.
    pub fn moments_dd(&self, j_max: usize, lo: f64, hi: f64) -> Vec<DdComplex> {
        let mut out = vec![DdComplex::ZERO; j_max];
        if self.terms.is_empty() || hi <= lo {
            return out;
        }
        let hi_dd = Dd::from_f64(hi);
        let lo_dd = Dd::from_f64(lo);
        let (ln_hi, ln_lo) = (hi_dd.ln(), lo_dd.ln());
        // hi^p and lo^p for p = 0..=j_max
        let hi_pow: Vec<Dd> = (0..=j_max as u32).map(|p| hi_dd.powi(p)).collect();
        let lo_pow: Vec<Dd> = (0..=j_max as u32).map(|p| lo_dd.powi(p)).collect();
        for term in &self.terms {
            let w = term.exponent;
            let hi_w = real_pow_ln(ln_hi, w);
            let lo_w = real_pow_ln(ln_lo, w);
            // F[m] = int_lo^hi t^{w+m} dt
            let antider: Vec<DdComplex> = (0..j_max)
                .map(|m| {
                    let e = w + (m as f64 + 1.0);
                    if e.norm() < LOG_BRANCH_EPS {
                        DdComplex::from_real(ln_hi - ln_lo)
                    } else {
                        let diff = hi_w.scale(hi_pow[m + 1]) - lo_w.scale(lo_pow[m + 1]);
                        diff / DdComplex::from_c64(e)
                    }
                })
                .collect();
            for (j, slot) in out.iter_mut().enumerate() {
                // moment index j+1: (hi - t)^j
                let mut acc = DdComplex::ZERO;
                for (m, f) in antider.iter().enumerate().take(j + 1) {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    let coef = hi_pow[j - m].mul_f64(sign * binomial(j, m));
                    acc += f.scale(coef);
                }
                *slot += acc.mul_c64(term.coefficient);
            }
        }
        out
    }

    /// `(1/(j-1)!) int_1^x (x - t)^{j-1} q(t) dt` for `j = 1..=j_max`: the
    /// smooth part of `r_j(x)`.
    pub fn iterated_integrals_dd(&self, j_max: usize, x: f64) -> Vec<DdComplex> {
        let mut m = self.moments_dd(j_max, 1.0, x);
        for (j, v) in m.iter_mut().enumerate() {
            *v = v.scale(Dd::ONE / Dd::from_f64(factorial(j)));
        }
        m
    }

    /// `int_lo^hi q(x) x^{-s} dx` in closed form.
    pub fn mellin_segment(&self, s: Complex64, lo: f64, hi: f64) -> Complex64 {
        let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
        self.terms
            .iter()
            .map(|t| {
                let e = t.exponent + 1.0 - s;
                let v = if e.norm() < LOG_BRANCH_EPS {
                    Complex64::new(ln_hi - ln_lo, 0.0)
                } else {
                    ((e * ln_hi).exp() - (e * ln_lo).exp()) / e
                };
                t.coefficient * v
            })
            .sum()
    }

    /// `int_X^inf q(x) x^{-s} dx`, analytically continued to all `s` away from
    /// the singularities: `sum c X^{w+1-s} / (s - w - 1)`.
    pub fn mellin_tail(&self, s: Complex64, x: f64) -> Complex64 {
        let ln_x = x.ln();
        self.terms
            .iter()
            .map(|t| {
                let e = t.exponent + 1.0 - s;
                t.coefficient * (e * ln_x).exp() / (-e)
            })
            .sum()
    }
}

/// `int_lo^hi (hi - t)^{j-1} q(t) dt`.
pub fn kernel_moment(q: &KernelQ, j: usize, lo: f64, hi: f64) -> Complex64 {
    assert!(j >= 1, "moment index starts at 1");
    q.moments_dd(j, lo, hi)[j - 1].to_c64()
}
