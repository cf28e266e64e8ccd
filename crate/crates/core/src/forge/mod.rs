//! Staged construction of `chi`.
//!
//! After a sign-alternating start and a greedy phase that makes `r_1` small,
//! stage `J` walks the breakpoints one interval at a time: the values of
//! `chi` on the interval's primes cancel the Taylor prediction of
//! `r_1..r_J` at the next breakpoint and pull `r_{J+1}` back by a fixed quota
//! until it is small enough to open stage `J + 1`.

pub mod chi;
pub mod ledger;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::BalanceError;
use crate::numerics::factorial;
use crate::primes::{interval_breakpoints, sieve_primes, IntervalPartition, PrimeError, PrimeTable};
use crate::solver::{self, ClusterSystem, Realization, SolverError};
use crate::targets::{hex_digest, kernel_from_spec, KernelQ, SpecError, ZeroPoleSpec};

pub use chi::ChiAssignment;
pub use ledger::Ledger;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prime(#[from] PrimeError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("interval {k}: {source}")]
    Solver { k: usize, source: SolverError },
    #[error("stage {stage} made no progress for {intervals} intervals (at x = {x:.1}, best ratio {best:.3})")]
    StageStalled {
        stage: usize,
        intervals: usize,
        x: f64,
        best: f64,
    },
}

/// Target budget `w(x)`: `|xi_j| <= w(x_k) x_k^{j theta}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    InverseLog,
    Constant(f64),
}

impl Budget {
    pub fn at(self, x: f64) -> f64 {
        match self {
            Budget::InverseLog => 1.0 / x.ln(),
            Budget::Constant(c) => c,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::InverseLog => write!(f, "inverse-log"),
            Budget::Constant(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for Budget {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "inverse-log" {
            return Ok(Budget::InverseLog);
        }
        match s.parse::<f64>() {
            Ok(c) if c > 0.0 && c.is_finite() => Ok(Budget::Constant(c)),
            _ => Err(format!("budget must be 'inverse-log' or a positive number, got '{s}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    pub theta: f64,
    pub x_max: u64,
    /// Cluster half-width as a fraction of `x^theta`.
    pub eps: f64,
    pub budget: Budget,
    /// The sign-alternating start covers the primes below the first
    /// breakpoint at or above this.
    pub bootstrap_min_x: f64,
    /// Highest stage `J`; functions `r_1..r_{J+1}` are tracked.
    pub stage_limit: usize,
    /// Intervals a stage may run without a new best damping ratio.
    pub stall_limit: usize,
    pub seed: u64,
}

pub const MIN_BOOTSTRAP_X: f64 = 100.0;

impl Default for ForgeConfig {
    fn default() -> Self {
        ForgeConfig {
            theta: 7.0 / 12.0,
            x_max: 1_000_000,
            eps: 0.05,
            budget: Budget::InverseLog,
            bootstrap_min_x: 1000.0,
            stage_limit: 2,
            stall_limit: 500,
            seed: 0,
        }
    }
}

impl ForgeConfig {
    pub fn validate(&self) -> Result<(), ForgeError> {
        let bad = |m: String| Err(ForgeError::Config(m));
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta must lie in (0, 1), got {}", self.theta));
        }
        if self.stage_limit == 0 {
            return bad("stage_limit must be at least 1".into());
        }
        let limit = solver::eps_limit(self.stage_limit + 1);
        if !(self.eps > 0.0 && self.eps < limit) {
            return bad(format!("eps must lie in (0, {limit}) for stage_limit {}", self.stage_limit));
        }
        if !(self.bootstrap_min_x >= MIN_BOOTSTRAP_X) {
            return bad(format!("bootstrap_min_x must be at least {MIN_BOOTSTRAP_X}"));
        }
        if (self.x_max as f64) < 2.0 * self.bootstrap_min_x {
            return bad(format!(
                "x_max {} lies below the bootstrap window ending near {}",
                self.x_max,
                2.0 * self.bootstrap_min_x
            ));
        }
        if self.stall_limit == 0 {
            return bad("stall_limit must be positive".into());
        }
        if let Budget::Constant(c) = self.budget {
            if !(c > 0.0) {
                return bad("budget must be positive".into());
            }
        }
        Ok(())
    }

    /// Tracked depth `R = stage_limit + 1`.
    pub fn depth(&self) -> usize {
        self.stage_limit + 1
    }

    pub fn digest(&self) -> String {
        hex_digest(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    /// Breakpoint index (0-based, `x_1` at 0) where the stage opened.
    pub start: usize,
    pub start_x: f64,
    /// Closing breakpoint, absent for the stage still open at the end.
    pub end: Option<usize>,
    pub end_x: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum Fallback {
    /// Clusters widened to the largest admissible half-width.
    Widened,
    /// Fewer equations than the stage asks for.
    Reduced,
    /// No solvable system at all: zero targets, balancing only.
    BalanceOnly,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IntervalRecord {
    pub k: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub stage: usize,
    /// Number of moment equations actually solved.
    pub size: usize,
    pub fallback: Option<Fallback>,
    pub primes: usize,
    pub clipped: bool,
    /// Scale applied to the cancellation rows `j <= J`.
    pub mu: f64,
    /// Distance between the desired and the feasible target of the
    /// steering row `J + 1`.
    pub gap: f64,
    /// Targets `xi_j` handed to the realization.
    pub xi: Vec<Complex64>,
    /// `sum_p chi(p) (x_hi - p)^{j-1} log p` with the stored values.
    pub achieved: Vec<Complex64>,
    pub bounds: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForgeReport {
    pub config_digest: String,
    pub spec_digest: String,
    pub x_built: f64,
    pub prime_count: usize,
    pub k0: usize,
    pub k1: usize,
    pub bootstrap_r1: f64,
    pub stages: Vec<StageRecord>,
    /// `sup_k |r_j(x_k)| / x_k^{j theta}`, `j = 1..depth`.
    pub constants: Vec<f64>,
    pub intervals: Vec<IntervalRecord>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ForgeOutput {
    pub chi: ChiAssignment,
    pub ledger: Ledger,
    pub report: ForgeReport,
}

/// Everything produced before an abort, so it can be persisted.
#[derive(Debug)]
pub struct ForgeAbort {
    pub error: ForgeError,
    pub partial: Option<Box<ForgeOutput>>,
}

impl From<ForgeError> for ForgeAbort {
    fn from(error: ForgeError) -> Self {
        ForgeAbort { error, partial: None }
    }
}

pub fn forge(spec: &ZeroPoleSpec, config: &ForgeConfig) -> Result<ForgeOutput, ForgeAbort> {
    config.validate()?;
    let partition = interval_breakpoints(config.theta, config.x_max as f64).map_err(ForgeError::from)?;
    let table = sieve_primes(partition.last().ceil() as u64).map_err(ForgeError::from)?;
    forge_with_table(spec, config, &table)
}

/// `(k0, k1)`: first breakpoint at or above `min_x`, then the first with
/// `x_{k1} / x_{k0} >= 3/2`.
pub fn bootstrap_window(partition: &IntervalPartition, min_x: f64) -> Option<(usize, usize)> {
    let b = &partition.breakpoints;
    let k0 = b.iter().position(|&x| x >= min_x)?;
    let k1 = (k0 + 1..b.len()).find(|&k| b[k] / b[k0] >= 1.5)?;
    Some((k0, k1))
}

pub fn forge_with_table(
    spec: &ZeroPoleSpec,
    config: &ForgeConfig,
    table: &PrimeTable,
) -> Result<ForgeOutput, ForgeAbort> {
    config.validate()?;
    let q = kernel_from_spec(spec).map_err(ForgeError::from)?;
    let partition = interval_breakpoints(config.theta, config.x_max as f64).map_err(ForgeError::from)?;
    let x_built = partition.last();
    if (table.x_max() as f64) < x_built.floor() {
        return Err(ForgeError::Prime(PrimeError::Coverage {
            needed: x_built,
            limit: table.x_max(),
        })
        .into());
    }
    let (k0, k1) = bootstrap_window(&partition, config.bootstrap_min_x).ok_or_else(|| {
        ForgeError::Config(format!("x_max {} lies below the bootstrap window", config.x_max))
    })?;
    let mut run = Run::new(spec, config, table, q, partition, k0, k1);
    match run.execute() {
        Ok(()) => Ok(run.finish()),
        Err(error) => Err(ForgeAbort {
            error,
            partial: Some(Box::new(run.finish())),
        }),
    }
}

struct Run<'a> {
    config: &'a ForgeConfig,
    table: &'a PrimeTable,
    q: KernelQ,
    partition: IntervalPartition,
    spec_digest: String,
    k0: usize,
    k1: usize,
    angles: Vec<f64>,
    ledger: Ledger,
    stages: Vec<StageRecord>,
    intervals: Vec<IntervalRecord>,
    warnings: Vec<String>,
    bootstrap_r1: f64,
    rng: Xoshiro256PlusPlus,
}

impl<'a> Run<'a> {
    fn new(
        spec: &ZeroPoleSpec,
        config: &'a ForgeConfig,
        table: &'a PrimeTable,
        q: KernelQ,
        partition: IntervalPartition,
        k0: usize,
        k1: usize,
    ) -> Self {
        let ledger = Ledger::new(config.theta, config.depth(), q.clone());
        Run {
            config,
            table,
            q,
            partition,
            spec_digest: spec.digest(),
            k0,
            k1,
            angles: Vec::new(),
            ledger,
            stages: Vec::new(),
            intervals: Vec::new(),
            warnings: Vec::new(),
            bootstrap_r1: f64::NAN,
            rng: Xoshiro256PlusPlus::seed_from_u64(config.seed),
        }
    }

    fn x(&self, k: usize) -> f64 {
        self.partition.breakpoints[k]
    }

    /// `chi(n) Lambda(n)` for `x_k <= n < x_{k+1}`, all bases assigned.
    fn terms(&self, k: usize) -> Vec<(u64, Complex64)> {
        self.table
            .lambda_terms(self.x(k), self.x(k + 1))
            .iter()
            .map(|t| (t.n, chi::unit(self.angles[t.prime_index], t.v) * t.log_p))
            .collect()
    }

    fn advance_ledger(&mut self, k: usize) {
        let terms = self.terms(k);
        let x = self.x(k + 1);
        self.ledger.advance(x, terms);
    }

    fn execute(&mut self) -> Result<(), ForgeError> {
        self.bootstrap();
        self.stages_loop()
    }

    fn bootstrap(&mut self) {
        let (x0, x1) = (self.x(self.k0), self.x(self.k1));
        let below = self.table.prime_range(0.0, x0);
        // chi(p_m) = (-1)^m with p_1 = 2
        self.angles = below
            .map(|i| if i % 2 == 0 { std::f64::consts::PI } else { 0.0 })
            .collect();
        let mut a = self.q.moments_dd(1, 1.0, x1)[0].to_c64();
        for t in self.table.lambda_terms(1.0, x0) {
            a += chi::unit(self.angles[t.prime_index], t.v) * t.log_p;
        }
        for pp in self.table.prime_powers_in(x0, x1) {
            let i = self.table.index_of(pp.p).expect("base prime");
            a += chi::unit(self.angles[i], pp.v) * self.table.log_prime(i);
        }
        let mut s = a;
        for i in self.table.prime_range(x0, x1) {
            let z = if s.norm() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                -s / s.norm()
            };
            let angle = chi::angle_of(z);
            self.angles.push(angle);
            s += chi::unit(angle, 1) * self.table.log_prime(i);
        }
        for k in 0..self.k1 {
            self.advance_ledger(k);
        }
        self.bootstrap_r1 = self.ledger.r(self.k1, 1).norm();
        if self.bootstrap_r1 > x1.ln() {
            self.warnings.push(format!(
                "bootstrap |r_1(x_k1)| = {:.6} exceeds log x_k1 = {:.6}",
                self.bootstrap_r1,
                x1.ln()
            ));
        }
    }

    fn stages_loop(&mut self) -> Result<(), ForgeError> {
        let theta = self.config.theta;
        let last = self.partition.len() - 1;
        let mut stage = 1;
        let mut stage_start = self.k1;
        self.stages.push(StageRecord {
            stage,
            start: stage_start,
            start_x: self.x(stage_start),
            end: None,
            end_x: None,
        });
        let mut best = f64::INFINITY;
        let mut since_best = 0;
        for k in self.k1..last {
            let record = self.interval(k, stage)?;
            self.intervals.push(record);
            self.advance_ledger(k);
            let k_next = k + 1;
            if stage < self.config.stage_limit {
                let ratio = closing_ratio(&self.ledger, k_next, stage, theta);
                // 1-based index must exceed max(k_J, 2^J)
                let old_enough = k_next > stage_start && k_next + 1 > (1usize << stage);
                if ratio <= 1.0 && old_enough {
                    let x_next = self.x(k_next);
                    let rec = self.stages.last_mut().unwrap();
                    rec.end = Some(k_next);
                    rec.end_x = Some(x_next);
                    stage += 1;
                    stage_start = k_next;
                    self.stages.push(StageRecord {
                        stage,
                        start: k_next,
                        start_x: self.x(k_next),
                        end: None,
                        end_x: None,
                    });
                    best = f64::INFINITY;
                    since_best = 0;
                } else if ratio < best {
                    best = ratio;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= self.config.stall_limit {
                        return Err(ForgeError::StageStalled {
                            stage,
                            intervals: since_best,
                            x: self.x(k_next),
                            best,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Assign chi on `[x_k, x_{k+1})` during stage `stage`.
    fn interval(&mut self, k: usize, stage: usize) -> Result<IntervalRecord, ForgeError> {
        let theta = self.config.theta;
        let (lo, hi) = (self.x(k), self.x(k + 1));
        let full = stage + 1;
        // try the configured clusters, then the widest allowed, then fewer
        // equations; stop at the first plan that keeps every cancellation
        // row unscaled, otherwise keep the best scored one
        let mut chosen: Option<(f64, ClusterSystem, Plan, Option<Fallback>)> = None;
        'search: for size in (1..=full).rev() {
            let wide = 0.95 * solver::eps_limit(size);
            let mut widths = vec![self.config.eps];
            if wide > self.config.eps {
                widths.push(wide);
            }
            for (w, &eps) in widths.iter().enumerate() {
                let mut sys = match solver::build_clusters(lo, hi, theta, size, eps, self.table) {
                    Ok(sys) => sys,
                    Err(SolverError::EmptyCluster(_)) => continue,
                    Err(e) => return Err(ForgeError::Solver { k, source: e }),
                };
                let Some(plan) = self.plan(k, stage, &mut sys) else { continue };
                let fallback = if size < full {
                    Some(Fallback::Reduced)
                } else if w > 0 {
                    Some(Fallback::Widened)
                } else {
                    None
                };
                // dropping cancellation rows costs more than scaling them
                let score = if size >= stage {
                    plan.mu
                } else {
                    0.5 * plan.mu * size as f64 / stage as f64
                };
                let done = size >= stage && plan.mu == 1.0;
                if chosen.as_ref().is_none_or(|c| score > c.0) {
                    chosen = Some((score, sys, plan, fallback));
                }
                if done {
                    break 'search;
                }
            }
        }
        let chosen = chosen.map(|(_, a, b, c)| (a, b, c));
        let (sys, plan, fallback) = chosen.unwrap_or_else(|| {
            let mut sys = solver::empty_system(lo, hi, theta, full);
            sys.set_targets(vec![Complex64::new(0.0, 0.0); full]).unwrap();
            (sys, Plan::zero(full), Some(Fallback::BalanceOnly))
        });
        {
            let realization = self.realize(k, &sys, &plan.y)?;
            let start = realization.primes.start;
            debug_assert_eq!(start, self.angles.len());
            self.angles.extend(realization.chi.iter().map(|&z| chi::angle_of(z)));
            let achieved = self.achieved(&realization, hi, sys.j_max);
            if plan.clipped {
                self.warnings.push(format!("interval {k} (x = {lo:.1}): targets clipped to budget"));
            }
            if let Some(f) = fallback {
                self.warnings.push(format!("interval {k} (x = {lo:.1}): {f:?} with {} equations", sys.j_max));
            }
            return Ok(IntervalRecord {
                k,
                x_lo: lo,
                x_hi: hi,
                stage,
                size: sys.j_max,
                fallback,
                primes: realization.chi.len(),
                clipped: plan.clipped,
                mu: plan.mu,
                gap: plan.gap,
                xi: sys.targets.clone(),
                achieved,
                bounds: realization.bounds.clone(),
            });
        }
    }

    /// Targets and disc solution for one system; `None` when the system is
    /// unusable at this size.
    fn plan(&mut self, k: usize, stage: usize, sys: &mut ClusterSystem) -> Option<Plan> {
        let theta = self.config.theta;
        let size = sys.j_max;
        let (lo, hi) = (sys.x_lo, sys.x_hi);
        let r = self.ledger.current();
        let h = hi - lo;
        let moments = self.q.moments_dd(size, lo, hi);
        let mut pp_sum = vec![Complex64::new(0.0, 0.0); size];
        for pp in self.table.prime_powers_in(lo, hi) {
            let i = self.table.index_of(pp.p).expect("base prime");
            let w = chi::unit(self.angles[i], pp.v) * self.table.log_prime(i);
            let d = hi - pp.value as f64;
            for (j, s) in pp_sum.iter_mut().enumerate() {
                *s += w * d.powi(j as i32);
            }
        }
        let w_budget = self.config.budget.at(lo);
        // desired moment sums; rows above `stage` steer r_{J+1}
        let mut want = Vec::with_capacity(size);
        for j in 1..=size {
            let fact = factorial(j - 1);
            let mut p = Complex64::new(0.0, 0.0);
            for m in 0..j {
                p += r[j - m - 1] * (h.powi(m as i32) / factorial(m));
            }
            // (j-1)! (P_j + E_j)
            let pe = p * fact + moments[j - 1].to_c64() + pp_sum[j - 1];
            if j <= stage {
                want.push(-pe);
            } else {
                let rk = r[j - 1];
                let quota = 4.0 * stage as f64 * lo.powf(stage as f64 * theta) * lo.ln();
                let next = if rk.norm() <= 2.0 * quota {
                    Complex64::new(0.0, 0.0)
                } else {
                    rk - rk / rk.norm() * quota
                };
                want.push(next * fact - pe);
            }
        }
        let budgets: Vec<f64> = (1..=size).map(|j| sys.budget(j, w_budget)).collect();
        let mut clipped = false;
        for (t, &b) in want.iter_mut().zip(&budgets) {
            let n = t.norm();
            if n > b {
                *t *= b / n;
                clipped = true;
            }
        }
        let fac = sys.factor().ok()?;
        let steer = size > stage;
        let fixed = if steer { size - 1 } else { size };
        let mut rhs = want.clone();
        if steer {
            rhs[size - 1] = Complex64::new(0.0, 0.0);
        }
        let c = fac.solve(&rhs);
        let mut e = vec![Complex64::new(0.0, 0.0); size];
        e[size - 1] = Complex64::new(1.0, 0.0);
        let n = if steer { fac.solve(&e) } else { vec![Complex64::new(0.0, 0.0); size] };
        let last_budget = budgets[size - 1];
        let want_last = want[size - 1];
        let choose = |mu: f64| -> Option<Complex64> {
            if !steer {
                let ok = c.iter().all(|z| (z * mu).norm() <= 1.0);
                return ok.then_some(Complex64::new(0.0, 0.0));
            }
            let mut discs = vec![(Complex64::new(0.0, 0.0), last_budget)];
            for (cm, nm) in c.iter().zip(&n) {
                let cm = cm * mu;
                if nm.norm() == 0.0 {
                    if cm.norm() > 1.0 {
                        return None;
                    }
                } else {
                    discs.push((-cm / nm, 1.0 / nm.norm()));
                }
            }
            nearest_in_discs(&discs, want_last)
        };
        let (mu, tau) = match choose(1.0) {
            Some(t) => (1.0, t),
            None => {
                let (mut good, mut bad) = (0.0, 1.0);
                for _ in 0..40 {
                    let mid = 0.5 * (good + bad);
                    if choose(mid).is_some() {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                }
                (good, choose(good).unwrap_or_default())
            }
        };
        let mut y: Vec<Complex64> = c.iter().zip(&n).map(|(a, b)| a * mu + b * tau).collect();
        for z in y.iter_mut() {
            if z.norm() > 1.0 {
                *z /= z.norm();
            }
        }
        let mut targets: Vec<Complex64> = want[..fixed].iter().map(|t| t * mu).collect();
        if steer {
            targets.push(tau);
        }
        let gap = if steer { (tau - want_last).norm() } else { 0.0 };
        sys.set_targets(targets).unwrap();
        let tol = 1e-9 * sys.targets.iter().map(|z| z.norm()).fold(sys.h, f64::max);
        if !(solver::residual(sys, &y) <= tol) {
            self.warnings.push(format!("interval {k}: residual check failed at size {size}"));
            return None;
        }
        Some(Plan { y, mu, gap, clipped })
    }

    fn realize(&mut self, k: usize, sys: &ClusterSystem, y: &[Complex64]) -> Result<Realization, ForgeError> {
        let mut y = y.to_vec();
        for attempt in 0..4 {
            match solver::realize_interval(sys, &y, self.table) {
                Ok(r) => return Ok(r),
                Err(SolverError::Balance(BalanceError::NumericalRank { .. })) if attempt < 3 => {
                    for z in y.iter_mut() {
                        let t: f64 = self.rng.random_range(-1.0..1.0);
                        *z *= Complex64::from_polar(1.0 - 1e-9, 1e-9 * t);
                    }
                }
                Err(e) => return Err(ForgeError::Solver { k, source: e }),
            }
        }
        unreachable!()
    }

    fn achieved(&self, r: &Realization, hi: f64, size: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); size];
        for i in r.primes.clone() {
            let z = chi::unit(self.angles[i], 1) * self.table.log_prime(i);
            let d = hi - self.table.primes()[i] as f64;
            let mut pw = 1.0;
            for o in out.iter_mut() {
                *o += z * pw;
                pw *= d;
            }
        }
        out
    }

    fn finish(&mut self) -> ForgeOutput {
        let x_built = self.ledger.last_x();
        let primes = self.table.primes()[..self.angles.len()].to_vec();
        let mut chi = ChiAssignment::new(
            self.config.theta,
            self.config.x_max,
            x_built,
            self.spec_digest.clone(),
            primes,
            self.angles.clone(),
        )
        .expect("forged angles are normalized");
        chi.config_hash = Some(self.config.digest());
        let constants = growth_constants(&self.ledger);
        let report = ForgeReport {
            config_digest: self.config.digest(),
            spec_digest: self.spec_digest.clone(),
            x_built,
            prime_count: chi.len(),
            k0: self.k0,
            k1: self.k1,
            bootstrap_r1: self.bootstrap_r1,
            stages: self.stages.clone(),
            constants,
            intervals: std::mem::take(&mut self.intervals),
            warnings: std::mem::take(&mut self.warnings),
        };
        ForgeOutput {
            chi,
            ledger: self.ledger.clone(),
            report,
        }
    }
}

struct Plan {
    y: Vec<Complex64>,
    mu: f64,
    gap: f64,
    clipped: bool,
}

impl Plan {
    fn zero(n: usize) -> Self {
        Plan {
            y: vec![Complex64::new(0.0, 0.0); n],
            mu: 0.0,
            gap: 0.0,
            clipped: false,
        }
    }
}

/// Point of `{z : |z - c_i| <= r_i for all i}` nearest to `target`, or
/// `None` if the discs have no common point.
///
/// The nearest point is the target itself, its projection onto one circle,
/// or a crossing of two circles; every candidate is tested.
pub fn nearest_in_discs(discs: &[(Complex64, f64)], target: Complex64) -> Option<Complex64> {
    let inside = |z: Complex64| discs.iter().all(|(c, r)| (z - c).norm() <= r * (1.0 + 1e-12));
    if inside(target) {
        return Some(target);
    }
    let mut best: Option<(f64, Complex64)> = None;
    let mut offer = |z: Complex64| {
        if inside(z) {
            let d = (z - target).norm();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, z));
            }
        }
    };
    for &(c, r) in discs {
        let d = target - c;
        let z = if d.norm() == 0.0 { c + r } else { c + d * (r / d.norm()) };
        offer(z);
    }
    for (i, &(c1, r1)) in discs.iter().enumerate() {
        for &(c2, r2) in &discs[i + 1..] {
            let dv = c2 - c1;
            let d = dv.norm();
            if d == 0.0 || d > r1 + r2 || d < (r1 - r2).abs() {
                continue;
            }
            let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
            let hh = (r1 * r1 - a * a).max(0.0).sqrt();
            let u = dv / d;
            let mid = c1 + u * a;
            let perp = Complex64::new(-u.im, u.re) * hh;
            offer(mid + perp);
            offer(mid - perp);
        }
    }
    // a disc lying inside all others contributes only its centre region
    for &(c, _) in discs {
        offer(c);
    }
    best.map(|(_, z)| z)
}

/// Bound (iii) of stage `J` for `r_j`: `(J+1)/(j-1)! x^{(j-1) theta} log x`.
pub fn stage_bound(stage: usize, j: usize, x: f64, theta: f64) -> f64 {
    (stage as f64 + 1.0) / factorial(j - 1) * x.powf((j as f64 - 1.0) * theta) * x.ln()
}

/// `max_{j <= J+1} |r_j(x_k)| / bound`, with the bound of stage `J + 1`.
fn closing_ratio(ledger: &Ledger, k: usize, stage: usize, theta: f64) -> f64 {
    let x = ledger.x(k);
    (1..=stage + 1)
        .map(|j| ledger.r(k, j).norm() / stage_bound(stage + 1, j, x, theta))
        .fold(0.0, f64::max)
}

/// `sup_k |r_j(x_k)| / x_k^{j theta}` for every tracked `j`.
pub fn growth_constants(ledger: &Ledger) -> Vec<f64> {
    (1..=ledger.depth)
        .map(|j| {
            (1..ledger.len())
                .map(|k| ledger.r(k, j).norm() / ledger.x(k).powf(j as f64 * ledger.theta))
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoundViolation {
    pub k: usize,
    pub stage: usize,
    pub j: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StageAudit {
    pub checked: usize,
    /// Breakpoints of a stage where some `r_j`, `j <= J`, breaks (iii).
    pub running: Vec<BoundViolation>,
    /// Stage closes where some `r_j`, `j <= J + 1`, breaks (iv).
    pub closing: Vec<BoundViolation>,
    /// Largest ratio to the bound seen per stage.
    pub max_ratio: Vec<f64>,
}

impl StageAudit {
    pub fn passed(&self) -> bool {
        self.running.is_empty() && self.closing.is_empty()
    }
}

pub fn audit_stages(ledger: &Ledger, stages: &[StageRecord]) -> StageAudit {
    let theta = ledger.theta;
    let mut audit = StageAudit::default();
    for st in stages {
        let end = st.end.unwrap_or(ledger.len() - 1).min(ledger.len() - 1);
        let mut worst: f64 = 0.0;
        for k in st.start..=end {
            let x = ledger.x(k);
            audit.checked += 1;
            for j in 1..=st.stage.min(ledger.depth) {
                let ratio = ledger.r(k, j).norm() / stage_bound(st.stage, j, x, theta);
                worst = worst.max(ratio);
                if ratio > 1.0 {
                    audit.running.push(BoundViolation {
                        k,
                        stage: st.stage,
                        j,
                        ratio,
                    });
                }
            }
        }
        audit.max_ratio.push(worst);
        if let Some(e) = st.end {
            let x = ledger.x(e);
            for j in 1..=(st.stage + 1).min(ledger.depth) {
                let ratio = ledger.r(e, j).norm() / stage_bound(st.stage + 1, j, x, theta);
                if ratio > 1.0 {
                    audit.closing.push(BoundViolation {
                        k: e,
                        stage: st.stage,
                        j,
                        ratio,
                    });
                }
            }
        }
    }
    audit
}

/// Intervals whose achieved moments miss the targets by more than the
/// realization bound `size * x_k^{(j-1) theta} log x_{k+1}`.
pub fn realization_violations(records: &[IntervalRecord]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for r in records {
        for (j, ((a, t), b)) in r.achieved.iter().zip(&r.xi).zip(&r.bounds).enumerate() {
            let e = (a - t).norm();
            if e > *b {
                out.push((r.k, j + 1, e / b));
            }
        }
    }
    out
}

/// Rebuild the ledger of a stored character over the run's breakpoints.
pub fn recompute_ledger(chi: &ChiAssignment, spec: &ZeroPoleSpec, config: &ForgeConfig) -> Result<Ledger, ForgeError> {
    let q = kernel_from_spec(spec)?;
    let partition = interval_breakpoints(config.theta, config.x_max as f64)?;
    let end = partition.breakpoints.partition_point(|&x| x <= chi.x_built);
    Ok(Ledger::replay(chi, q, &partition.breakpoints[..end.max(1)], config.depth()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(x_max: u64) -> ForgeConfig {
        ForgeConfig {
            x_max,
            bootstrap_min_x: 100.0,
            stage_limit: 2,
            ..ForgeConfig::default()
        }
    }

    #[test]
    fn bootstrap_signs_alternate() {
        let out = forge(&ZeroPoleSpec::empty(), &small_config(20_000)).unwrap();
        let v = |p| out.chi.value_at_prime(p).unwrap();
        assert!((v(2) - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((v(3) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((v(5) - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((v(7) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn bootstrap_controls_r1() {
        let out = forge(&ZeroPoleSpec::empty(), &small_config(20_000)).unwrap();
        let x1 = out.ledger.x(out.report.k1);
        assert!(out.report.bootstrap_r1 <= x1.ln());
        let ratio = x1 / out.ledger.x(out.report.k0);
        assert!((1.5..=2.0).contains(&ratio));
    }

    #[test]
    fn damping_push_has_exact_length() {
        let rk = Complex64::new(3e6, -4e6);
        let scale = 4.0 * 2.0 * 1e4f64.powf(2.0 * 7.0 / 12.0) * 1e4f64.ln();
        let target = rk - rk / rk.norm() * scale;
        assert!(((target - rk).norm() - scale).abs() < 1e-6 * scale);
    }

    #[test]
    fn nearest_point_of_disc_intersection() {
        let c = |re, im| Complex64::new(re, im);
        // target inside
        assert_eq!(nearest_in_discs(&[(c(0.0, 0.0), 1.0)], c(0.5, 0.0)), Some(c(0.5, 0.0)));
        // projection onto a single circle
        let z = nearest_in_discs(&[(c(0.0, 0.0), 1.0)], c(3.0, 4.0)).unwrap();
        assert!((z - c(0.6, 0.8)).norm() < 1e-15);
        // lens of two unit discs at +-0.5; nearest to (0, 5) is the upper corner
        let z = nearest_in_discs(&[(c(-0.5, 0.0), 1.0), (c(0.5, 0.0), 1.0)], c(0.0, 5.0)).unwrap();
        assert!((z - c(0.0, 0.75f64.sqrt())).norm() < 1e-12);
        // disjoint discs
        assert!(nearest_in_discs(&[(c(-2.0, 0.0), 1.0), (c(2.0, 0.0), 1.0)], c(0.0, 0.0)).is_none());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = small_config(100_000);
        c.bootstrap_min_x = 50.0;
        assert!(c.validate().is_err());
        let mut c = small_config(150);
        c.bootstrap_min_x = 100.0;
        assert!(c.validate().is_err());
        let mut c = small_config(100_000);
        c.eps = 0.2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn replay_reproduces_forge_ledger_bitwise() {
        let spec = ZeroPoleSpec::new(vec![crate::targets::SpecEntry::new(Complex64::new(0.5, 0.0), 1)]).unwrap();
        let cfg = small_config(30_000);
        let out = forge(&spec, &cfg).unwrap();
        let text = out.chi.to_text();
        let back = ChiAssignment::parse(&text).unwrap();
        let ledger = recompute_ledger(&back, &spec, &cfg).unwrap();
        assert_eq!(ledger.len(), out.ledger.len());
        assert_eq!(ledger.r_table(), out.ledger.r_table());
    }

    #[test]
    fn stages_advance_and_audit_clean() {
        let out = forge(&ZeroPoleSpec::empty(), &small_config(200_000)).unwrap();
        assert!(out.report.stages.len() >= 2, "{:?}", out.report.stages);
        let audit = audit_stages(&out.ledger, &out.report.stages);
        assert!(audit.closing.is_empty());
        assert!(realization_violations(&out.report.intervals).is_empty());
    }
}
