//! The Dirichlet series of `zeta_chi` on `Re(s) > 1` and the continuation of
//! `zeta_chi'/zeta_chi` to `Re(s) > 1 - j(1 - theta)`.
//!
//! Integrating `int_1^X x^{-s} dr_1` by parts `j` times gives, for any `X`,
//!
//! `zeta'/zeta(s) = int_X^inf q x^{-s} dx - D_X(s)
//!     + sum_{i=1}^{j} s(s+1)...(s+i-2) r_i(X) X^{1-s-i}
//!     - s(s+1)...(s+j-1) int_X^inf r_j(x) x^{-s-j} dx`
//!
//! with `D_X(s) = sum_{n<=X} chi(n) Lambda(n) n^{-s}`. Every term but the last
//! is evaluated exactly; the last one is bounded with the ledger's empirical
//! growth constant.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forge::chi::ChiAssignment;
use crate::forge::ledger::Ledger;
use crate::forge::growth_constants;
use crate::numerics::{factorial, pochhammer, CompensatedSum, Dd, DdComplex};
use crate::targets::{f0_value, ZeroPoleSpec};

pub const DEFAULT_NODES: usize = 256;
pub const DEFAULT_RADIUS: f64 = 0.05;

/// Terms kept in the local expansion of `D_X` used by the contour probe.
const TAYLOR_TERMS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum ContinuationError {
    #[error("Re(s) = {re} is outside the region Re(s) > {threshold}")]
    Region { re: f64, threshold: f64 },
    #[error("depth {j} not converged at Re(s) = {re}: need Re(s) > {threshold}")]
    NotConverged { j: usize, re: f64, threshold: f64 },
    #[error("x = {x} lies beyond the frontier {frontier}")]
    Frontier { x: f64, frontier: f64 },
    #[error("depth {j} outside 1..={max}")]
    Depth { j: usize, max: usize },
    #[error("s = {0} is a prescribed singularity")]
    SpecPoint(Complex64),
    #[error("contour: {0}")]
    Contour(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub s: Complex64,
    pub j: usize,
    #[serde(rename = "X")]
    pub x: f64,
    pub value: Complex64,
    pub tail_bound: f64,
    pub converged: bool,
}

/// `1 - j (1 - theta)`: the continuation at depth `j` converges to the right.
pub fn convergence_threshold(theta: f64, j: usize) -> f64 {
    1.0 - j as f64 * (1.0 - theta)
}

fn check_frontier(chi: &ChiAssignment, ledger: &Ledger, x: f64) -> Result<(), ContinuationError> {
    let frontier = ledger.last_x().min(chi.x_built);
    if x > frontier || !x.is_finite() {
        return Err(ContinuationError::Frontier { x, frontier });
    }
    Ok(())
}

fn check_depth(ledger: &Ledger, j: usize) -> Result<(), ContinuationError> {
    if j == 0 || j > ledger.depth {
        return Err(ContinuationError::Depth { j, max: ledger.depth });
    }
    Ok(())
}

/// `r_j(x) = (1/(j-1)!) [int_1^x (x-t)^{j-1} q(t) dt + sum_{n<=x} chi(n) Lambda(n) (x-n)^{j-1}]`,
/// from the prefix power sums at the last breakpoint `<= x` plus the terms
/// between that breakpoint and `x`.
pub fn r_j_eval(chi: &ChiAssignment, ledger: &Ledger, j: usize, x: f64) -> Result<Complex64, ContinuationError> {
    Ok(r_j_eval_dd(chi, ledger, j, x)?.to_c64())
}

pub fn r_j_eval_dd(chi: &ChiAssignment, ledger: &Ledger, j: usize, x: f64) -> Result<DdComplex, ContinuationError> {
    check_depth(ledger, j)?;
    check_frontier(chi, ledger, x)?;
    if x < 1.0 {
        return Ok(DdComplex::ZERO);
    }
    let k = ledger.locate(x).expect("x >= 1 = x_1");
    let mut s = ledger.power_sum_shift(k, j, x);
    let x_dd = Dd::from_f64(x);
    for t in chi.lambda_terms_in(ledger.x(k), x) {
        let d = x_dd - Dd::from_u64(t.n);
        s += DdComplex::from_c64(chi.weighted(&t)).scale(d.powi(j as u32 - 1));
    }
    let q = ledger.kernel().iterated_integrals_dd(j, x)[j - 1];
    Ok(q + s.scale(Dd::ONE / Dd::from_f64(factorial(j - 1))))
}

/// `|r_j(x)| / x^{j theta}` maximized over `samples` uniformly random points
/// of `[lo, frontier]`.
pub fn sampled_constant(
    chi: &ChiAssignment,
    ledger: &Ledger,
    j: usize,
    lo: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, ContinuationError> {
    let hi = ledger.last_x().min(chi.x_built);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let x = rng.random_range(lo..hi);
        let r = r_j_eval(chi, ledger, j, x)?;
        best = best.max(r.norm() / x.powf(j as f64 * ledger.theta));
    }
    Ok(best)
}

/// `chi(n)` for `n = 0..=n_max` (index 0 unused), by a smallest prime factor
/// sieve and complete multiplicativity.
pub fn chi_values(chi: &ChiAssignment, n_max: u64) -> Result<Vec<Complex64>, ContinuationError> {
    if n_max as f64 > chi.x_built {
        return Err(ContinuationError::Frontier { x: n_max as f64, frontier: chi.x_built });
    }
    let n = n_max as usize;
    let mut angle = vec![0.0f64; n + 1];
    let mut spf = vec![0u32; n + 1];
    let primes = chi.primes();
    let angles = chi.angles();
    let mut pi = 0;
    for m in 2..=n {
        if spf[m] == 0 {
            // m is prime
            while primes[pi] < m as u64 {
                pi += 1;
            }
            spf[m] = m as u32;
            angle[m] = angles[pi];
            let mut c = m.saturating_mul(m);
            while c <= n {
                if spf[c] == 0 {
                    spf[c] = m as u32;
                }
                c += m;
            }
        } else {
            let p = spf[m] as usize;
            angle[m] = angle[p] + angle[m / p];
        }
    }
    Ok(angle.iter().map(|&a| Complex64::from_polar(1.0, a)).collect())
}

fn require_half_plane(s: Complex64) -> Result<(), ContinuationError> {
    if s.re <= 1.0 {
        return Err(ContinuationError::Region { re: s.re, threshold: 1.0 });
    }
    Ok(())
}

#[inline]
fn n_pow(ln_n: f64, s: Complex64) -> Complex64 {
    (-s * ln_n).exp()
}

/// `sum_{n<=N} chi(n) n^{-s}`.
pub fn zeta_series(chi: &ChiAssignment, s: Complex64, n_max: u64) -> Result<Complex64, ContinuationError> {
    require_half_plane(s)?;
    let values = chi_values(chi, n_max)?;
    let mut acc = CompensatedSum::new();
    for (n, z) in values.iter().enumerate().skip(1) {
        acc.add(z * n_pow((n as f64).ln(), s));
    }
    Ok(acc.value())
}

/// `prod_{p<=N} (1 - chi(p) p^{-s})^{-1}`, via the sum of logarithms.
pub fn euler_product(chi: &ChiAssignment, s: Complex64, n_max: u64) -> Result<Complex64, ContinuationError> {
    require_half_plane(s)?;
    if n_max as f64 > chi.x_built {
        return Err(ContinuationError::Frontier { x: n_max as f64, frontier: chi.x_built });
    }
    let mut acc = CompensatedSum::new();
    for (i, &p) in chi.primes().iter().enumerate() {
        if p > n_max {
            break;
        }
        let w = chi.value(i) * n_pow((p as f64).ln(), s);
        // -log(1 - w), with log1p accuracy for small w
        acc.add(-ln_1p(-w));
    }
    Ok(acc.value().exp())
}

fn ln_1p(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        // z - z^2/2 + z^3/3 - z^4/4
        z * (1.0 - z * (0.5 - z * (1.0 / 3.0 - z * 0.25)))
    } else {
        (z + 1.0).ln()
    }
}

/// `-sum_{n<=N} chi(n) Lambda(n) n^{-s}`.
pub fn log_deriv_series(chi: &ChiAssignment, s: Complex64, n_max: f64) -> Result<Complex64, ContinuationError> {
    require_half_plane(s)?;
    if n_max > chi.x_built {
        return Err(ContinuationError::Frontier { x: n_max, frontier: chi.x_built });
    }
    Ok(-dirichlet_lambda_sum(&lambda_data(chi, n_max), s))
}

/// `(ln n, chi(n) Lambda(n))` for every prime power `n <= x`.
fn lambda_data(chi: &ChiAssignment, x: f64) -> Vec<(f64, Complex64)> {
    chi.lambda_terms(x)
        .iter()
        .map(|t| ((t.n as f64).ln(), chi.weighted(t)))
        .collect()
}

fn dirichlet_lambda_sum(data: &[(f64, Complex64)], s: Complex64) -> Complex64 {
    let mut acc = CompensatedSum::new();
    for &(ln_n, c) in data {
        acc.add(c * n_pow(ln_n, s));
    }
    acc.value()
}

/// Bound on `|sum_{n>N} chi(n) Lambda(n) n^{-s}|` for `Re(s) > 1`, from
/// `psi(x) <= 1.04 x`.
pub fn lambda_series_tail(s: Complex64, n_max: f64) -> f64 {
    let sigma = s.re;
    1.04 * s.norm() * n_max.powf(1.0 - sigma) / (sigma - 1.0)
}

/// Continued `zeta'/zeta` at truncation point `X` for a fixed character.
///
/// Holds the prime-power data up to `X`, the values `r_i(X)` and the growth
/// constants, so repeated evaluation costs one pass over the prime powers.
#[derive(Clone, Debug)]
pub struct Evaluator<'a> {
    spec: &'a ZeroPoleSpec,
    ledger: &'a Ledger,
    theta: f64,
    x: f64,
    ln_x: f64,
    data: Vec<(f64, Complex64)>,
    /// `r_i(X)`, `i = 1..=depth`.
    r_at_x: Vec<Complex64>,
    /// `C_i = max(sup_k |r_i(x_k)|/x_k^{i theta}, |r_i(X)|/X^{i theta})`.
    constants: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        chi: &'a ChiAssignment,
        ledger: &'a Ledger,
        spec: &'a ZeroPoleSpec,
        x: f64,
    ) -> Result<Self, ContinuationError> {
        check_frontier(chi, ledger, x)?;
        if x < 2.0 {
            return Err(ContinuationError::Frontier { x, frontier: ledger.last_x() });
        }
        let theta = ledger.theta;
        let r_at_x = (1..=ledger.depth)
            .map(|j| r_j_eval(chi, ledger, j, x))
            .collect::<Result<Vec<_>, _>>()?;
        let constants = growth_constants(ledger)
            .iter()
            .zip(&r_at_x)
            .enumerate()
            .map(|(i, (c, r))| c.max(r.norm() / x.powf((i + 1) as f64 * theta)))
            .collect();
        Ok(Evaluator {
            spec,
            ledger,
            theta,
            x,
            ln_x: x.ln(),
            data: lambda_data(chi, x),
            r_at_x,
            constants,
        })
    }

    pub fn truncation(&self) -> f64 {
        self.x
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn max_depth(&self) -> usize {
        self.ledger.depth
    }

    fn check(&self, s: Complex64, j: usize) -> Result<(), ContinuationError> {
        check_depth(self.ledger, j)?;
        if self.spec.entries().iter().any(|e| e.location() == s) {
            return Err(ContinuationError::SpecPoint(s));
        }
        Ok(())
    }

    /// `int_X^inf q x^{-s} dx + sum_{i<=j} s(s+1)...(s+i-2) r_i(X) X^{1-s-i}`:
    /// the smooth part of the value.
    fn boundary_terms(&self, s: Complex64, j: usize) -> Complex64 {
        let mut v = self.ledger.kernel().mellin_tail(s, self.x);
        for i in 1..=j {
            let e = Complex64::new(1.0 - i as f64, 0.0) - s;
            v += pochhammer(s, i - 1) * self.r_at_x[i - 1] * (e * self.ln_x).exp();
        }
        v
    }

    /// `|s...(s+j-1)| C_j X^{1-j(1-theta)-Re s} / (Re s + j(1-theta) - 1)`,
    /// infinite outside the region of convergence.
    pub fn tail_bound(&self, s: Complex64, j: usize) -> f64 {
        let gap = s.re - convergence_threshold(self.theta, j);
        if gap <= 0.0 {
            return f64::INFINITY;
        }
        pochhammer(s, j).norm() * self.constants[j - 1] * (-gap * self.ln_x).exp() / gap
    }

    /// The continued value; outside the region of convergence the finite
    /// expression is still returned, flagged as not converged.
    pub fn evaluate(&self, s: Complex64, j: usize) -> Result<ContinuationResult, ContinuationError> {
        self.check(s, j)?;
        let value = self.boundary_terms(s, j) - dirichlet_lambda_sum(&self.data, s);
        let converged = s.re > convergence_threshold(self.theta, j);
        Ok(ContinuationResult {
            s,
            j,
            x: self.x,
            value,
            tail_bound: self.tail_bound(s, j),
            converged,
        })
    }

    /// Like [`Evaluator::evaluate`] but rejects points outside the region.
    pub fn continue_log_deriv(&self, s: Complex64, j: usize) -> Result<ContinuationResult, ContinuationError> {
        let threshold = convergence_threshold(self.theta, j);
        if s.re <= threshold {
            return Err(ContinuationError::NotConverged { j, re: s.re, threshold });
        }
        self.evaluate(s, j)
    }

    /// `s(s+1)...(s+j-1) int_1^X r_j(x) x^{-s-j} dx`, the head of the
    /// integral representation, in closed form.
    pub fn head_integral(&self, s: Complex64, j: usize) -> Result<Complex64, ContinuationError> {
        self.check(s, j)?;
        let f0 = f0_value(self.spec, s).map_err(|_| ContinuationError::SpecPoint(s))?;
        // f0 - int_X^inf q x^{-s} = int_1^X q x^{-s}
        let smooth = f0 - self.ledger.kernel().mellin_tail(s, self.x);
        let boundary = self.boundary_terms(s, j) - self.ledger.kernel().mellin_tail(s, self.x);
        Ok(smooth + dirichlet_lambda_sum(&self.data, s) - boundary)
    }

    /// `(1/2 pi i) \oint zeta'/zeta(s) ds` over the circle `|s - a| = radius`
    /// by the trapezoidal rule. `D_X` is expanded in powers of `s - a`, so the
    /// cost is one pass over the prime powers.
    pub fn residue_probe(
        &self,
        a: Complex64,
        j: usize,
        radius: f64,
        nodes: usize,
    ) -> Result<Complex64, ContinuationError> {
        check_depth(self.ledger, j)?;
        if !(radius > 0.0) || nodes < 3 {
            return Err(ContinuationError::Contour(format!("radius {radius}, nodes {nodes}")));
        }
        let threshold = convergence_threshold(self.theta, j);
        if a.re - radius <= threshold {
            return Err(ContinuationError::Contour(format!(
                "circle reaches Re(s) = {} but depth {j} needs Re(s) > {threshold}",
                a.re - radius
            )));
        }
        for e in self.spec.entries() {
            let d = (e.location() - a).norm();
            if d != 0.0 && d <= radius * (1.0 + 1e-9) {
                return Err(ContinuationError::Contour(format!(
                    "spec point {} lies within {d} of the centre",
                    e.location()
                )));
            }
        }
        let moments = self.local_moments(a, radius);
        let mut acc = CompensatedSum::new();
        for k in 0..nodes {
            let phi = 2.0 * PI * k as f64 / nodes as f64;
            let u = Complex64::from_polar(1.0, phi);
            let delta = u * radius;
            let s = a + delta;
            // D_X(a + delta) = sum_m (-delta)^m / m! M_m
            let mut d = Complex64::new(0.0, 0.0);
            let mut pw = Complex64::new(1.0, 0.0);
            for mm in &moments {
                d += pw * mm;
                pw *= -delta;
            }
            acc.add((self.boundary_terms(s, j) - d) * delta);
        }
        Ok(acc.value() / nodes as f64)
    }

    /// `M_m / m!` with `M_m = sum chi(n) Lambda(n) n^{-a} (ln n)^m`, truncated
    /// once the terms are negligible on the given radius.
    fn local_moments(&self, a: Complex64, radius: f64) -> Vec<Complex64> {
        let terms = TAYLOR_TERMS.min(((radius * self.ln_x).ceil() as usize * 4 + 24).max(24));
        let mut sums: Vec<CompensatedSum> = (0..terms).map(|_| CompensatedSum::new()).collect();
        for &(ln_n, c) in &self.data {
            let mut w = c * n_pow(ln_n, a);
            for (m, acc) in sums.iter_mut().enumerate() {
                acc.add(w);
                w *= ln_n / (m as f64 + 1.0);
            }
        }
        sums.iter().map(|s| s.value()).collect()
    }
}

/// One-shot form of [`Evaluator::continue_log_deriv`].
pub fn continue_log_deriv(
    chi: &ChiAssignment,
    ledger: &Ledger,
    spec: &ZeroPoleSpec,
    s: Complex64,
    j: usize,
    x: f64,
) -> Result<ContinuationResult, ContinuationError> {
    let threshold = convergence_threshold(ledger.theta, j);
    if s.re <= threshold {
        return Err(ContinuationError::NotConverged { j, re: s.re, threshold });
    }
    Evaluator::new(chi, ledger, spec, x)?.continue_log_deriv(s, j)
}

/// One-shot form of [`Evaluator::residue_probe`], truncating at the frontier.
pub fn residue_probe(
    chi: &ChiAssignment,
    ledger: &Ledger,
    spec: &ZeroPoleSpec,
    a: Complex64,
    j: usize,
    radius: f64,
    nodes: usize,
) -> Result<Complex64, ContinuationError> {
    let x = ledger.last_x().min(chi.x_built);
    Evaluator::new(chi, ledger, spec, x)?.residue_probe(a, j, radius, nodes)
}

/// `(1/2 pi i) \oint f(s) ds` over `|s - a| = radius` by the trapezoidal rule.
pub fn contour_integral<F>(f: F, a: Complex64, radius: f64, nodes: usize) -> Complex64
where
    F: Fn(Complex64) -> Complex64,
{
    let mut acc = CompensatedSum::new();
    for k in 0..nodes {
        let delta = Complex64::from_polar(radius, 2.0 * PI * k as f64 / nodes as f64);
        acc.add(f(a + delta) * delta);
    }
    acc.value() / nodes as f64
}
