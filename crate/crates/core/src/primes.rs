//! Prime tables, the von Mangoldt function, the breakpoint partition
//! `x_{k+1} = x_k + x_k^theta`, and short-interval prime-count audits.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PrimeError {
    #[error("sieve limit {0} is below 2")]
    LimitTooSmall(u64),
    #[error("sieve limit {limit} needs ~{needed} bytes, over the {budget}-byte budget")]
    Capacity { limit: u64, needed: u64, budget: u64 },
    #[error("partition reaches {needed}, beyond the prime table limit {limit}")]
    Coverage { needed: f64, limit: u64 },
    #[error("theta must lie in (0, 1), got {0}")]
    BadTheta(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct SieveConfig {
    pub segment_size: usize,
    pub memory_budget: u64,
}

impl Default for SieveConfig {
    fn default() -> Self {
        SieveConfig {
            segment_size: 1 << 20,
            memory_budget: 2 << 30,
        }
    }
}

/// A prime power `p^v` with `v >= 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrimePower {
    pub p: u64,
    pub v: u32,
    pub value: u64,
}

/// All primes and higher prime powers up to `x_max`.
#[derive(Clone, Debug)]
pub struct PrimeTable {
    x_max: u64,
    primes: Vec<u64>,
    log_primes: Vec<f64>,
    prime_powers: Vec<PrimePower>,
}

/// A term `n` of the von Mangoldt sum, with `n = p^v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaTerm {
    pub n: u64,
    /// Index of `p` in the prime list.
    pub prime_index: usize,
    pub v: u32,
    pub log_p: f64,
}

pub fn sieve_primes(x_max: u64) -> Result<PrimeTable, PrimeError> {
    sieve_primes_with(x_max, &SieveConfig::default())
}

pub fn sieve_primes_with(x_max: u64, config: &SieveConfig) -> Result<PrimeTable, PrimeError> {
    if x_max < 2 {
        return Err(PrimeError::LimitTooSmall(x_max));
    }
    // prime list (8 bytes) + log table (8 bytes) per prime, plus one segment
    let est_primes = (1.3 * x_max as f64 / (x_max as f64).ln().max(1.0)) as u64 + 16;
    let needed = est_primes * 16 + config.segment_size as u64;
    if needed > config.memory_budget {
        return Err(PrimeError::Capacity {
            limit: x_max,
            needed,
            budget: config.memory_budget,
        });
    }

    let root = integer_sqrt(x_max);
    let base = simple_sieve(root);
    let mut primes = Vec::with_capacity(est_primes as usize);
    let seg = config.segment_size.max(64) as u64;
    let mut mark = vec![false; seg as usize];
    let mut low = 2u64;
    while low <= x_max {
        let high = (low + seg - 1).min(x_max);
        let len = (high - low + 1) as usize;
        mark[..len].fill(true);
        for &p in &base {
            if p * p > high {
                break;
            }
            let start = (p * p).max(low.div_ceil(p) * p);
            let mut m = start;
            while m <= high {
                mark[(m - low) as usize] = false;
                m += p;
            }
        }
        primes.extend(
            mark[..len]
                .iter()
                .enumerate()
                .filter(|(_, &is_prime)| is_prime)
                .map(|(i, _)| low + i as u64),
        );
        low = high + 1;
    }

    let mut prime_powers = Vec::new();
    for &p in &primes {
        let Some(mut pv) = p.checked_mul(p) else { break };
        if pv > x_max {
            break;
        }
        let mut v = 2;
        while pv <= x_max {
            prime_powers.push(PrimePower { p, v, value: pv });
            match pv.checked_mul(p) {
                Some(next) => pv = next,
                None => break,
            }
            v += 1;
        }
    }
    prime_powers.sort_by_key(|pp| pp.value);
    let log_primes = primes.iter().map(|&p| (p as f64).ln()).collect();

    Ok(PrimeTable {
        x_max,
        primes,
        log_primes,
        prime_powers,
    })
}

fn simple_sieve(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut is_prime = vec![true; n + 1];
    is_prime[0] = false;
    is_prime[1] = false;
    let mut i = 2;
    while i * i <= n {
        if is_prime[i] {
            for m in (i * i..=n).step_by(i) {
                is_prime[m] = false;
            }
        }
        i += 1;
    }
    (2..=n).filter(|&i| is_prime[i]).map(|i| i as u64).collect()
}

pub(crate) fn integer_sqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

impl PrimeTable {
    pub fn x_max(&self) -> u64 {
        self.x_max
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn log_prime(&self, index: usize) -> f64 {
        self.log_primes[index]
    }

    pub fn prime_powers(&self) -> &[PrimePower] {
        &self.prime_powers
    }

    /// Number of primes `<= x`.
    pub fn pi(&self, x: f64) -> usize {
        self.primes.partition_point(|&p| (p as f64) <= x)
    }

    /// Index range of the primes `p` with `lo <= p < hi`.
    pub fn prime_range(&self, lo: f64, hi: f64) -> Range<usize> {
        let a = self.primes.partition_point(|&p| (p as f64) < lo);
        let b = self.primes.partition_point(|&p| (p as f64) < hi);
        a..b.max(a)
    }

    /// Prime powers `p^v`, `v >= 2`, with `lo <= p^v < hi`.
    pub fn prime_powers_in(&self, lo: f64, hi: f64) -> &[PrimePower] {
        let a = self.prime_powers.partition_point(|pp| (pp.value as f64) < lo);
        let b = self.prime_powers.partition_point(|pp| (pp.value as f64) < hi);
        &self.prime_powers[a..b.max(a)]
    }

    pub fn index_of(&self, p: u64) -> Option<usize> {
        self.primes.binary_search(&p).ok()
    }

    /// Every `n` with `lo <= n < hi` and `Lambda(n) > 0`, in increasing order.
    pub fn lambda_terms(&self, lo: f64, hi: f64) -> Vec<LambdaTerm> {
        let range = self.prime_range(lo, hi);
        let mut out: Vec<LambdaTerm> = range
            .map(|i| LambdaTerm {
                n: self.primes[i],
                prime_index: i,
                v: 1,
                log_p: self.log_primes[i],
            })
            .collect();
        let pps = self.prime_powers_in(lo, hi);
        if !pps.is_empty() {
            out.extend(pps.iter().map(|pp| {
                let i = self.index_of(pp.p).expect("base prime in table");
                LambdaTerm {
                    n: pp.value,
                    prime_index: i,
                    v: pp.v,
                    log_p: self.log_primes[i],
                }
            }));
            out.sort_by_key(|t| t.n);
        }
        out
    }

    /// `Lambda(n)` by table lookup.
    pub fn lambda(&self, n: u64) -> f64 {
        if let Some(i) = self.index_of(n) {
            return self.log_primes[i];
        }
        match self.prime_powers.binary_search_by_key(&n, |pp| pp.value) {
            Ok(i) => (self.prime_powers[i].p as f64).ln(),
            Err(_) => 0.0,
        }
    }

    /// Chebyshev `psi(x) = sum_{n <= x} Lambda(n)`.
    pub fn chebyshev_psi(&self, x: f64) -> f64 {
        let mut s = crate::numerics::CompensatedSum::new();
        for t in self.lambda_terms(1.0, x.floor() + 0.5) {
            s.add(t.log_p.into());
        }
        s.value().re
    }
}

/// `Lambda(n)`: `log p` when `n = p^k`, otherwise 0.
pub fn von_mangoldt(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let p = smallest_factor(n);
    let mut m = n;
    while m % p == 0 {
        m /= p;
    }
    if m == 1 {
        (p as f64).ln()
    } else {
        0.0
    }
}

fn smallest_factor(n: u64) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return d;
        }
        d += 2;
    }
    n
}

/// Breakpoints `x_1 = 1`, `x_{k+1} = x_k + x_k^theta`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IntervalPartition {
    pub theta: f64,
    pub breakpoints: Vec<f64>,
}

/// Breakpoints up to and including the first `x_k >= x_stop`.
pub fn interval_breakpoints(theta: f64, x_stop: f64) -> Result<IntervalPartition, PrimeError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(PrimeError::BadTheta(theta));
    }
    let mut breakpoints = vec![1.0];
    let mut x = 1.0f64;
    while x < x_stop {
        x += x.powf(theta);
        breakpoints.push(x);
    }
    Ok(IntervalPartition { theta, breakpoints })
}

impl IntervalPartition {
    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.breakpoints.last().expect("partition has x_1")
    }

    /// Index of the interval `[x_k, x_{k+1})` holding `n`, if any.
    pub fn interval_of(&self, n: f64) -> Option<usize> {
        let k = self.breakpoints.partition_point(|&x| x <= n);
        (k >= 1 && k < self.breakpoints.len()).then(|| k - 1)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditRow {
    /// 1-based breakpoint index of the interval's left end.
    pub k: usize,
    pub x_k: f64,
    pub count: usize,
    /// `(pi(x_{k+1}) - pi(x_k)) * log x_k / x_k^theta`.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct AuditConfig {
    /// The constant `c` in the lower bound `c x^theta / log x`.
    pub c: f64,
    /// Intervals with `x_k` below this are reported but excluded from the minimum.
    pub min_x: f64,
    /// Flag intervals whose count is below this fraction of `c x^theta / log x`.
    pub flag_fraction: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            c: 1.0,
            min_x: 100.0,
            flag_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    pub theta: f64,
    pub c: f64,
    pub rows: Vec<AuditRow>,
    pub min_ratio: f64,
    pub argmin: Option<usize>,
    /// Largest measured deficit `max(0, 1 - ratio/c)` over audited intervals.
    pub max_deficit: f64,
    pub flagged: Vec<usize>,
}

pub fn audit_short_intervals(
    table: &PrimeTable,
    partition: &IntervalPartition,
    config: &AuditConfig,
) -> Result<AuditReport, PrimeError> {
    if partition.last() > table.x_max() as f64 + 1.0 {
        return Err(PrimeError::Coverage {
            needed: partition.last(),
            limit: table.x_max(),
        });
    }
    let theta = partition.theta;
    let mut rows = Vec::with_capacity(partition.len());
    let mut min_ratio = f64::INFINITY;
    let mut argmin = None;
    let mut max_deficit: f64 = 0.0;
    let mut flagged = Vec::new();
    for (i, w) in partition.breakpoints.windows(2).enumerate() {
        let (x, x_next) = (w[0], w[1]);
        let count = table.prime_range(x, x_next).len();
        let scale = x.powf(theta) / x.ln().max(f64::MIN_POSITIVE);
        let ratio = if x > 1.0 { count as f64 / scale } else { f64::NAN };
        let k = i + 1;
        rows.push(AuditRow { k, x_k: x, count, ratio });
        if x < config.min_x {
            continue;
        }
        if ratio < min_ratio {
            min_ratio = ratio;
            argmin = Some(k);
        }
        max_deficit = max_deficit.max(1.0 - ratio / config.c);
        if (count as f64) < config.flag_fraction * config.c * scale {
            flagged.push(k);
        }
    }
    Ok(AuditReport {
        theta,
        c: config.c,
        rows,
        min_ratio,
        argmin,
        max_deficit,
        flagged,
    })
}

impl AuditReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,x_k,count,ratio\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.k, r.x_k, r.count, r.ratio);
        }
        out
    }
}
