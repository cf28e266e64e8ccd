//! Rounding disc coefficients to the unit circle while moving the weighted
//! vector sum `sum a_j v_j` by at most `d * max_j |v_j|_inf`.
//!
//! The walk keeps a window of `d + 1` still-interior coefficients. Their
//! vectors are linearly dependent, so a null direction exists; moving along
//! it leaves the sum unchanged until some coefficient reaches the circle,
//! which is then frozen. Once at most `d` interior coefficients remain they
//! are rounded radially, each costing at most `max |v|_inf`.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError {
    #[error("invalid balancing instance: {0}")]
    Invalid(String),
    #[error("no usable null direction at walk step {step}")]
    NumericalRank { step: usize },
}

/// Coefficients are treated as on the circle once within this of modulus 1.
const UNIT_TOL: f64 = 1e-12;
/// Pivots below this fraction of the largest matrix entry count as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct BalanceInstance {
    dim: usize,
    /// Row-major `n x dim`.
    vectors: Vec<Complex64>,
    coefficients: Vec<Complex64>,
}

impl BalanceInstance {
    pub fn new(
        dim: usize,
        vectors: Vec<Vec<Complex64>>,
        coefficients: Vec<Complex64>,
    ) -> Result<Self, BalanceError> {
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(BalanceError::Invalid("vector length differs from dimension".into()));
        }
        Self::from_flat(dim, vectors.into_iter().flatten().collect(), coefficients)
    }

    /// `vectors` holds the `n` vectors back to back.
    pub fn from_flat(
        dim: usize,
        vectors: Vec<Complex64>,
        coefficients: Vec<Complex64>,
    ) -> Result<Self, BalanceError> {
        let n = coefficients.len();
        if dim == 0 {
            return Err(BalanceError::Invalid("dimension must be positive".into()));
        }
        if n == 0 {
            return Err(BalanceError::Invalid("no vectors".into()));
        }
        if vectors.len() != n * dim {
            return Err(BalanceError::Invalid(format!(
                "expected {} vector entries, got {}",
                n * dim,
                vectors.len()
            )));
        }
        if let Some(j) = coefficients.iter().position(|a| !(a.norm() <= 1.0 + UNIT_TOL)) {
            return Err(BalanceError::Invalid(format!("coefficient {j} lies outside the unit disc")));
        }
        if vectors.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(BalanceError::Invalid("non-finite vector entry".into()));
        }
        Ok(BalanceInstance {
            dim,
            vectors,
            coefficients,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn vector(&self, j: usize) -> &[Complex64] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }

    /// `max_j |v_j|_inf`.
    pub fn max_norm(&self) -> f64 {
        self.vectors.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `sum_j c_j v_j`.
    pub fn combine(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for (j, &cj) in c.iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(self.vector(j)) {
                *o += cj * v;
            }
        }
        out
    }
}

/// State after the sum-preserving walk, before radial rounding.
#[derive(Clone, Debug)]
pub struct WalkResult {
    pub coefficients: Vec<Complex64>,
    /// Indices still strictly inside the disc (at most `dim` of them).
    pub interior: Vec<usize>,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct Balanced {
    pub values: Vec<Complex64>,
    pub radial_roundings: usize,
    pub walk_steps: usize,
}

pub fn balance(inst: &BalanceInstance) -> Result<Balanced, BalanceError> {
    let walk = walk(inst)?;
    let mut values = walk.coefficients;
    for &j in &walk.interior {
        values[j] = unit_direction(values[j]);
    }
    for v in values.iter_mut() {
        // frozen entries are already unit up to rounding; renormalise exactly
        *v = unit_direction(*v);
    }
    Ok(Balanced {
        values,
        radial_roundings: walk.interior.len(),
        walk_steps: walk.steps,
    })
}

/// `a / |a|`, or `1` for `a = 0`.
pub fn unit_direction(a: Complex64) -> Complex64 {
    let r = a.norm();
    if r == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        a / r
    }
}

pub fn walk(inst: &BalanceInstance) -> Result<WalkResult, BalanceError> {
    let d = inst.dim;
    let mut a = inst.coefficients.clone();
    let mut pending = Vec::with_capacity(a.len());
    for (j, aj) in a.iter_mut().enumerate() {
        if aj.norm() >= 1.0 - UNIT_TOL {
            *aj = unit_direction(*aj);
        } else {
            pending.push(j);
        }
    }
    let mut pending = pending.into_iter();
    let mut window: Vec<usize> = Vec::with_capacity(d + 1);
    let mut matrix = vec![Complex64::new(0.0, 0.0); d * (d + 1)];
    let mut steps = 0;
    loop {
        while window.len() < d + 1 {
            match pending.next() {
                Some(j) => window.push(j),
                None => break,
            }
        }
        if window.len() <= d {
            break;
        }
        for (col, &j) in window.iter().enumerate() {
            for (row, &v) in inst.vector(j).iter().enumerate() {
                matrix[row * (d + 1) + col] = v;
            }
        }
        let delta = null_vector(&mut matrix, d, d + 1)
            .ok_or(BalanceError::NumericalRank { step: steps })?;

        // smallest t > 0 putting some window entry on the circle
        let mut best: Option<(f64, usize)> = None;
        for (pos, &j) in window.iter().enumerate() {
            let dl = delta[pos];
            let qa = dl.norm_sqr();
            if qa == 0.0 {
                continue;
            }
            let qb = (a[j].conj() * dl).re;
            let qc = a[j].norm_sqr() - 1.0;
            let disc = (qb * qb - qa * qc).sqrt();
            let t = if qb > 0.0 { -qc / (qb + disc) } else { (disc - qb) / qa };
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, pos));
            }
        }
        let (t, hit) = best.ok_or(BalanceError::NumericalRank { step: steps })?;
        if !t.is_finite() {
            return Err(BalanceError::NumericalRank { step: steps });
        }
        for (pos, &j) in window.iter().enumerate() {
            a[j] += t * delta[pos];
        }
        let hit_index = window[hit];
        a[hit_index] = unit_direction(a[hit_index]);
        window.retain(|&j| {
            if j == hit_index {
                return false;
            }
            if a[j].norm() >= 1.0 - UNIT_TOL {
                a[j] = unit_direction(a[j]);
                return false;
            }
            true
        });
        steps += 1;
    }
    Ok(WalkResult {
        coefficients: a,
        interior: window,
        steps,
    })
}

/// A nonzero solution of `M x = 0` for a row-major `rows x cols` matrix with
/// `cols > rows`, by elimination with complete pivoting. `m` is overwritten.
fn null_vector(m: &mut [Complex64], rows: usize, cols: usize) -> Option<Vec<Complex64>> {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut rank = 0;
    if scale > 0.0 {
        let tol = RANK_TOL * scale;
        for r in 0..rows {
            let mut piv = (r, r, -1.0);
            for i in r..rows {
                for j in r..cols {
                    let v = m[i * cols + j].norm();
                    if v > piv.2 {
                        piv = (i, j, v);
                    }
                }
            }
            if piv.2 <= tol {
                break;
            }
            if piv.0 != r {
                for j in 0..cols {
                    m.swap(r * cols + j, piv.0 * cols + j);
                }
            }
            if piv.1 != r {
                for i in 0..rows {
                    m.swap(i * cols + r, i * cols + piv.1);
                }
                perm.swap(r, piv.1);
            }
            let p = m[r * cols + r];
            for i in r + 1..rows {
                let f = m[i * cols + r] / p;
                if f == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in r..cols {
                    let v = m[r * cols + j];
                    m[i * cols + j] -= f * v;
                }
            }
            rank += 1;
        }
    }
    // free variable at position `rank` set to 1, the other free ones to 0
    let mut x = vec![Complex64::new(0.0, 0.0); cols];
    x[rank] = Complex64::new(1.0, 0.0);
    for r in (0..rank).rev() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in r + 1..cols {
            acc += m[r * cols + j] * x[j];
        }
        x[r] = -acc / m[r * cols + r];
    }
    let mut out = vec![Complex64::new(0.0, 0.0); cols];
    for (k, &c) in perm.iter().enumerate() {
        out[c] = x[k];
    }
    out.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(out)
}

/// `|sum b v - sum a v|_inf`.
pub fn deviation(inst: &BalanceInstance, b: &[Complex64]) -> f64 {
    let sa = inst.combine(inst.coefficients());
    let sb = inst.combine(b);
    sa.iter().zip(&sb).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
