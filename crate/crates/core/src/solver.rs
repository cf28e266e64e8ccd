//! Per-interval realization: prime clusters, the weighted moment system and
//! rounding of its disc-valued solution to unimodular values.

use std::ops::Range;

use num_complex::Complex64;
use thiserror::Error;

use crate::balance::{self, BalanceError, BalanceInstance};
use crate::primes::PrimeTable;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("cluster parameter eps={eps} must lie in (0, {limit})")]
    BadEps { eps: f64, limit: f64 },
    #[error("system size must be positive")]
    ZeroSize,
    #[error("prime table ends at {table} below interval end {needed}")]
    Coverage { table: u64, needed: f64 },
    #[error("cluster {0} contains no prime")]
    EmptyCluster(usize),
    #[error("expected {expected} targets, got {got}")]
    TargetCount { expected: usize, got: usize },
    #[error("solution has modulus {max_modulus} > 1")]
    TargetsTooLarge { max_modulus: f64 },
    #[error("weight matrix condition number {cond:e} too large")]
    SingularSystem { cond: f64 },
    #[error("residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error(transparent)]
    Balance(#[from] BalanceError),
}

/// Largest accepted condition number of the row-scaled weight matrix.
pub const MAX_CONDITION: f64 = 1e12;
const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ClusterSystem {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Cluster scale `x_lo^theta`.
    pub h: f64,
    pub j_max: usize,
    pub eps: f64,
    /// Prime index ranges, cluster `m = 1..j_max` at position `m - 1`.
    pub clusters: Vec<Range<usize>>,
    /// Row-major `W[j][m] = sum_{p in cluster m} (x_hi - p)^(j-1) log p`.
    pub weights: Vec<f64>,
    pub targets: Vec<Complex64>,
}

pub fn eps_limit(j_max: usize) -> f64 {
    1.0 / (2.0 * (j_max as f64 + 1.0))
}

pub fn build_clusters(
    x_lo: f64,
    x_hi: f64,
    theta: f64,
    j_max: usize,
    eps: f64,
    table: &PrimeTable,
) -> Result<ClusterSystem, SolverError> {
    if j_max == 0 {
        return Err(SolverError::ZeroSize);
    }
    let limit = eps_limit(j_max);
    if !(eps > 0.0 && eps < limit) {
        return Err(SolverError::BadEps { eps, limit });
    }
    if (table.x_max() as f64) < x_hi.floor() {
        return Err(SolverError::Coverage {
            table: table.x_max(),
            needed: x_hi,
        });
    }
    let h = x_lo.powf(theta);
    let half = eps * h;
    let n1 = (j_max + 1) as f64;
    let mut clusters = Vec::with_capacity(j_max);
    for m in 1..=j_max {
        let centre = x_lo + ((n1 - m as f64) / n1) * h;
        let r = table.prime_range((centre - half).max(x_lo), (centre + half).min(x_hi));
        if r.is_empty() {
            return Err(SolverError::EmptyCluster(m));
        }
        clusters.push(r);
    }
    let primes = table.primes();
    let mut weights = vec![0.0; j_max * j_max];
    for (m, r) in clusters.iter().enumerate() {
        for i in r.clone() {
            let d = x_hi - primes[i] as f64;
            let lp = table.log_prime(i);
            let mut pw = 1.0;
            for j in 0..j_max {
                weights[j * j_max + m] += pw * lp;
                pw *= d;
            }
        }
    }
    Ok(ClusterSystem {
        x_lo,
        x_hi,
        h,
        j_max,
        eps,
        clusters,
        weights,
        targets: vec![Complex64::new(0.0, 0.0); j_max],
    })
}

/// A system without clusters: every coefficient starts at 0, so realizing it
/// only balances the interval's primes against `j_max` zero targets.
pub fn empty_system(x_lo: f64, x_hi: f64, theta: f64, j_max: usize) -> ClusterSystem {
    ClusterSystem {
        x_lo,
        x_hi,
        h: x_lo.powf(theta),
        j_max,
        eps: 0.0,
        clusters: vec![0..0; j_max],
        weights: vec![0.0; j_max * j_max],
        targets: vec![Complex64::new(0.0, 0.0); j_max],
    }
}

impl ClusterSystem {
    pub fn weight(&self, j: usize, m: usize) -> f64 {
        self.weights[(j - 1) * self.j_max + (m - 1)]
    }

    pub fn set_targets(&mut self, targets: Vec<Complex64>) -> Result<(), SolverError> {
        if targets.len() != self.j_max {
            return Err(SolverError::TargetCount {
                expected: self.j_max,
                got: targets.len(),
            });
        }
        self.targets = targets;
        Ok(())
    }

    /// Default budget `|xi_j| <= w x_lo^(j theta)` with `w = 1 / log x_lo`.
    pub fn budget(&self, j: usize, w: f64) -> f64 {
        w * self.h.powi(j as i32)
    }

    pub fn factor(&self) -> Result<Factored, SolverError> {
        Factored::new(self)
    }

    /// `W y`.
    pub fn apply(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.j_max;
        (0..n)
            .map(|j| (0..n).map(|m| self.weights[j * n + m] * y[m]).sum())
            .collect()
    }
}

/// LU factorization of the row-scaled weight matrix.
#[derive(Clone, Debug)]
pub struct Factored {
    n: usize,
    row_scale: Vec<f64>,
    lu: Vec<f64>,
    perm: Vec<usize>,
    pub cond: f64,
}

impl Factored {
    fn new(sys: &ClusterSystem) -> Result<Self, SolverError> {
        let n = sys.j_max;
        // row j carries a factor h^(j-1); removing it equilibrates the rows
        let row_scale: Vec<f64> = (0..n).map(|j| sys.h.powi(-(j as i32))).collect();
        let mut a: Vec<f64> = (0..n * n).map(|i| sys.weights[i] * row_scale[i / n]).collect();
        let norm_a = inf_norm(&a, n);
        let mut perm: Vec<usize> = (0..n).collect();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| a[x * n + c].abs().total_cmp(&a[y * n + c].abs()))
                .unwrap();
            if a[p * n + c] == 0.0 {
                return Err(SolverError::SingularSystem { cond: f64::INFINITY });
            }
            if p != c {
                for k in 0..n {
                    a.swap(p * n + k, c * n + k);
                }
                perm.swap(p, c);
            }
            for r in c + 1..n {
                let f = a[r * n + c] / a[c * n + c];
                a[r * n + c] = f;
                for k in c + 1..n {
                    a[r * n + k] -= f * a[c * n + k];
                }
            }
        }
        let mut f = Factored {
            n,
            row_scale,
            lu: a,
            perm,
            cond: 0.0,
        };
        // explicit inverse is cheap at these sizes
        let mut inv = vec![0.0; n * n];
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = f.solve_scaled_real(&e);
            for r in 0..n {
                inv[r * n + c] = col[r];
            }
        }
        f.cond = norm_a * inf_norm(&inv, n);
        if !(f.cond <= MAX_CONDITION) {
            return Err(SolverError::SingularSystem { cond: f.cond });
        }
        Ok(f)
    }

    fn solve_scaled_real(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            for k in 0..r {
                x[r] -= self.lu[r * n + k] * x[k];
            }
        }
        for r in (0..n).rev() {
            for k in r + 1..n {
                x[r] -= self.lu[r * n + k] * x[k];
            }
            x[r] /= self.lu[r * n + r];
        }
        x
    }

    /// `W^{-1} b` without any modulus check.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let re: Vec<f64> = b.iter().zip(&self.row_scale).map(|(z, s)| z.re * s).collect();
        let im: Vec<f64> = b.iter().zip(&self.row_scale).map(|(z, s)| z.im * s).collect();
        let xr = self.solve_scaled_real(&re);
        let xi = self.solve_scaled_real(&im);
        xr.into_iter().zip(xi).map(|(r, i)| Complex64::new(r, i)).collect()
    }
}

fn inf_norm(a: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|r| a[r * n..(r + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn residual(sys: &ClusterSystem, y: &[Complex64]) -> f64 {
    sys.apply(y)
        .iter()
        .zip(&sys.targets)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

pub fn solve_targets(sys: &ClusterSystem) -> Result<Vec<Complex64>, SolverError> {
    let fac = sys.factor()?;
    let mut y = fac.solve(&sys.targets);
    // one step of refinement
    let r: Vec<Complex64> = sys.apply(&y).iter().zip(&sys.targets).map(|(a, b)| b - a).collect();
    for (yi, d) in y.iter_mut().zip(fac.solve(&r)) {
        *yi += d;
    }
    let xi_norm = sys.targets.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tolerance = RESIDUAL_TOL * xi_norm.max(sys.h);
    let res = residual(sys, &y);
    if !(res <= tolerance) {
        return Err(SolverError::Residual {
            residual: res,
            tolerance,
        });
    }
    let max_modulus = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max_modulus > 1.0 {
        return Err(SolverError::TargetsTooLarge { max_modulus });
    }
    Ok(y)
}

#[derive(Clone, Debug)]
pub struct Realization {
    /// Prime index range of `[x_lo, x_hi)`.
    pub primes: Range<usize>,
    /// Unimodular value per prime of `primes`, in order.
    pub chi: Vec<Complex64>,
    /// `sum_p chi(p) (x_hi - p)^(j-1) log p`, `j = 1..j_max`.
    pub achieved: Vec<Complex64>,
    /// `|achieved_j - xi_j|`.
    pub errors: Vec<f64>,
    /// `j_max x_lo^((j-1) theta) log x_hi`.
    pub bounds: Vec<f64>,
}

impl Realization {
    pub fn within_bounds(&self) -> bool {
        self.errors.iter().zip(&self.bounds).all(|(e, b)| e <= b)
    }
}

pub fn realize_interval(
    sys: &ClusterSystem,
    y: &[Complex64],
    table: &PrimeTable,
) -> Result<Realization, SolverError> {
    let n = sys.j_max;
    if y.len() != n {
        return Err(SolverError::TargetCount {
            expected: n,
            got: y.len(),
        });
    }
    let range = table.prime_range(sys.x_lo, sys.x_hi);
    let primes = table.primes();
    let count = range.len();
    if count == 0 {
        let achieved = vec![Complex64::new(0.0, 0.0); n];
        return Ok(finish(sys, range, Vec::new(), achieved));
    }
    let mut coefficients = vec![Complex64::new(0.0, 0.0); count];
    for (m, r) in sys.clusters.iter().enumerate() {
        for i in r.clone() {
            coefficients[i - range.start] = y[m];
        }
    }
    let mut vectors = Vec::with_capacity(count * n);
    for i in range.clone() {
        let u = (sys.x_hi - primes[i] as f64) / sys.h;
        let lp = table.log_prime(i);
        let mut pw = 1.0;
        for _ in 0..n {
            vectors.push(Complex64::new(pw * lp, 0.0));
            pw *= u;
        }
    }
    let inst = BalanceInstance::from_flat(n, vectors, coefficients)?;
    let chi = balance::balance(&inst)?.values;

    let mut achieved = vec![Complex64::new(0.0, 0.0); n];
    for (i, c) in range.clone().zip(&chi) {
        let d = sys.x_hi - primes[i] as f64;
        let lp = table.log_prime(i);
        let mut pw = 1.0;
        for a in achieved.iter_mut() {
            *a += c * (pw * lp);
            pw *= d;
        }
    }
    Ok(finish(sys, range, chi, achieved))
}

fn finish(sys: &ClusterSystem, primes: Range<usize>, chi: Vec<Complex64>, achieved: Vec<Complex64>) -> Realization {
    let n = sys.j_max;
    let log_hi = sys.x_hi.ln();
    let errors = achieved.iter().zip(&sys.targets).map(|(a, t)| (a - t).norm()).collect();
    let bounds = (0..n)
        .map(|j| n as f64 * sys.h.powi(j as i32) * log_hi)
        .collect();
    Realization {
        primes,
        chi,
        achieved,
        errors,
        bounds,
    }
}
