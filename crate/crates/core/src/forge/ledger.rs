//! Exact running values of `r_j` and of the prefix power sums at the
//! breakpoints.
//!
//! `r_j(x) = Q_j(x) + S_j(x)` with the smooth part
//! `Q_j(x) = (1/(j-1)!) int_1^x (x-t)^{j-1} q(t) dt` and the arithmetic part
//! `S_j(x) = (1/(j-1)!) sum_{n<x} chi(n) Lambda(n) (x-n)^{j-1}`. `S_j` is a
//! polynomial in `x` between prime powers, so it is carried from one
//! breakpoint to the next by an exact Taylor shift plus the new terms. All
//! values are left limits: a term `n` counts at `x_k` only if `n < x_k`.

use num_complex::Complex64;

use super::chi::ChiAssignment;
use crate::numerics::{Dd, DdComplex, factorial};
use crate::targets::KernelQ;

#[derive(Clone, Debug)]
pub struct Ledger {
    pub theta: f64,
    /// Number of tracked functions `r_1..r_depth`.
    pub depth: usize,
    q: KernelQ,
    breakpoints: Vec<f64>,
    /// `r_j(x_k)`, `j = 1..depth`.
    r: Vec<Vec<DdComplex>>,
    /// `T_m(x_k) = sum_{n<x_k} chi(n) Lambda(n) n^m`, `m = 0..depth-1`.
    t: Vec<Vec<DdComplex>>,
    s: Vec<DdComplex>,
    inv_fact: Vec<Dd>,
}

impl Ledger {
    /// Empty ledger at `x_1 = 1`.
    pub fn new(theta: f64, depth: usize, q: KernelQ) -> Self {
        assert!(depth >= 1);
        let inv_fact = (0..depth).map(|m| Dd::ONE / Dd::from_f64(factorial(m))).collect();
        Ledger {
            theta,
            depth,
            q,
            breakpoints: vec![1.0],
            r: vec![vec![DdComplex::ZERO; depth]],
            t: vec![vec![DdComplex::ZERO; depth]],
            s: vec![DdComplex::ZERO; depth],
            inv_fact,
        }
    }

    pub fn kernel(&self) -> &KernelQ {
        &self.q
    }

    /// Number of recorded breakpoints.
    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn x(&self, k: usize) -> f64 {
        self.breakpoints[k]
    }

    pub fn last_x(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// `r_j(x_k)` for 0-based `k` and `j >= 1`.
    pub fn r(&self, k: usize, j: usize) -> Complex64 {
        self.r[k][j - 1].to_c64()
    }

    pub fn r_dd(&self, k: usize, j: usize) -> DdComplex {
        self.r[k][j - 1]
    }

    pub fn t_dd(&self, k: usize, m: usize) -> DdComplex {
        self.t[k][m]
    }

    /// Current values `r_1..r_depth` at the last breakpoint.
    pub fn current(&self) -> Vec<Complex64> {
        self.r.last().unwrap().iter().map(|z| z.to_c64()).collect()
    }

    /// Advance to `x_next` given `chi(n) Lambda(n)` for every `n` with
    /// `last_x <= n < x_next`, in increasing order.
    pub fn advance<I>(&mut self, x_next: f64, terms: I)
    where
        I: IntoIterator<Item = (u64, Complex64)>,
    {
        let depth = self.depth;
        let x_dd = Dd::from_f64(x_next);
        let h = x_dd - Dd::from_f64(self.last_x());
        let mut hp = Vec::with_capacity(depth);
        let mut pw = Dd::ONE;
        for m in 0..depth {
            hp.push(pw * self.inv_fact[m]);
            pw = pw * h;
        }
        let mut s: Vec<DdComplex> = (0..depth)
            .map(|j| {
                let mut acc = DdComplex::ZERO;
                for m in 0..=j {
                    acc += self.s[j - m].scale(hp[m]);
                }
                acc
            })
            .collect();
        let mut t = self.t.last().unwrap().clone();
        for (n, w) in terms {
            let c = DdComplex::from_c64(w);
            let d = x_dd - Dd::from_u64(n);
            let nn = Dd::from_u64(n);
            let (mut dp, mut np) = (Dd::ONE, Dd::ONE);
            for m in 0..depth {
                s[m] += c.scale(dp * self.inv_fact[m]);
                t[m] += c.scale(np);
                dp = dp * d;
                np = np * nn;
            }
        }
        let qv = self.q.iterated_integrals_dd(depth, x_next);
        let r = qv.iter().zip(&s).map(|(a, b)| *a + *b).collect();
        self.s = s;
        self.breakpoints.push(x_next);
        self.r.push(r);
        self.t.push(t);
    }

    /// Recompute the ledger from a stored character over the given
    /// breakpoints (which start at 1).
    pub fn replay(chi: &ChiAssignment, q: KernelQ, breakpoints: &[f64], depth: usize) -> Ledger {
        let mut ledger = Ledger::new(chi.theta, depth, q);
        let end = *breakpoints.last().unwrap();
        let terms = chi.lambda_terms(end);
        let mut idx = 0;
        for &x in &breakpoints[1..] {
            let start = idx;
            while idx < terms.len() && (terms[idx].n as f64) < x {
                idx += 1;
            }
            ledger.advance(x, terms[start..idx].iter().map(|t| (t.n, chi.weighted(t))));
        }
        ledger
    }

    /// Index of the last breakpoint `<= x`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        k.checked_sub(1)
    }

    /// `sum_{n<x_k} chi(n) Lambda(n) (x - n)^{j-1}` from the prefix sums, by
    /// binomial expansion in double-double.
    pub fn power_sum_shift(&self, k: usize, j: usize, x: f64) -> DdComplex {
        let x_dd = Dd::from_f64(x);
        let mut acc = DdComplex::ZERO;
        let mut binom = 1.0;
        for m in 0..j {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let coef = x_dd.powi((j - 1 - m) as u32).mul_f64(sign * binom);
            acc += self.t[k][m].scale(coef);
            binom = binom * (j - 1 - m) as f64 / (m + 1) as f64;
        }
        acc
    }

    /// Per-breakpoint `r_j` table as plain complex numbers.
    pub fn r_table(&self) -> Vec<Vec<Complex64>> {
        self.r.iter().map(|row| row.iter().map(|z| z.to_c64()).collect()).collect()
    }
}
