//! The subcommands, as library functions returning their reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use helson_core::continuation::{ContinuationResult, Evaluator};
use helson_core::forge::{self, audit_stages, growth_constants, realization_violations, ForgeOutput, StageAudit};
use helson_core::primes::{audit_short_intervals, interval_breakpoints, sieve_primes, AuditConfig};
use helson_core::targets::{hex_digest, ZeroPoleSpec};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::*;
use crate::config::RunConfig;
use crate::CliError;

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

pub struct ForgeSummary {
    pub out: PathBuf,
    pub x_built: f64,
    pub primes: usize,
    pub constants: Vec<f64>,
    pub checks: SelfChecks,
    pub warnings: usize,
}

pub fn self_checks(out: &ForgeOutput) -> SelfChecks {
    let audit = audit_stages(&out.ledger, &out.report.stages);
    SelfChecks {
        stage_audit_passed: audit.passed(),
        running_violations: audit.running.len(),
        closing_violations: audit.closing.len(),
        realization_violations: realization_violations(&out.report.intervals).len(),
    }
}

/// Forge and write every artifact into `config.out`. Failed self-checks are
/// reported after the artifacts are written.
pub fn cmd_forge(config: &RunConfig) -> Result<ForgeSummary, CliError> {
    config.validate()?;
    let spec_path = config
        .spec
        .as_ref()
        .ok_or_else(|| CliError::Validation("no spec file given".into()))?;
    let spec = load_spec(spec_path)?;
    let out = forge::forge(&spec, &config.forge).map_err(|a| CliError::Runtime(format!("forge: {}", a.error)))?;
    let dir = &config.out;
    std::fs::create_dir_all(dir).map_err(|e| crate::io_err("cannot create", dir, e))?;

    let checks = self_checks(&out);
    let texts: [(&str, String); 5] = [
        (CHI_FILE, out.chi.to_text()),
        (LEDGER_FILE, to_json(&LedgerFile::from_output(&out))),
        (REPORT_FILE, to_json(&out.report)),
        (SPEC_FILE, format!("{}\n", spec.to_json())),
        (CONFIG_FILE, config.to_text(SPEC_FILE, ".")),
    ];
    let mut files = BTreeMap::new();
    for (name, text) in &texts {
        write_text(&dir.join(name), text)?;
        files.insert(name.to_string(), hex_digest(text.as_bytes()));
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_digest: out.report.config_digest.clone(),
        spec_digest: out.report.spec_digest.clone(),
        files,
        checks: checks.clone(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    write_text(&dir.join(MANIFEST_FILE), &to_json(&manifest))?;
    let summary = ForgeSummary {
        out: dir.clone(),
        x_built: out.report.x_built,
        primes: out.report.prime_count,
        constants: out.report.constants.clone(),
        checks,
        warnings: out.report.warnings.len(),
    };
    if !summary.checks.passed() {
        return Err(CliError::Runtime(format!(
            "self-checks failed: {} running, {} closing, {} realization violations",
            summary.checks.running_violations, summary.checks.closing_violations, summary.checks.realization_violations
        )));
    }
    Ok(summary)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageGrowth {
    pub stage: usize,
    pub start_x: f64,
    pub end_x: Option<f64>,
    /// `max |r_j(x_k)| / x_k^{j theta}` over the stage, `j = 1..=depth`.
    pub max_ratio: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShortIntervalSummary {
    pub intervals: usize,
    pub min_ratio: f64,
    pub argmin_x: Option<f64>,
    pub flagged: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config_digest: String,
    pub spec_digest: String,
    pub x_built: f64,
    pub changed_files: Vec<String>,
    pub ledger_breakpoints: usize,
    pub ledger_max_rel_diff: f64,
    pub ledger_matches: bool,
    pub constants: Vec<f64>,
    pub stages: Vec<StageGrowth>,
    pub stage_audit: StageAudit,
    pub short_intervals: ShortIntervalSummary,
    pub passed: bool,
}

/// Relative agreement required between the stored and recomputed ledgers.
const LEDGER_TOLERANCE: f64 = 1e-9;

pub fn cmd_verify(dir: &Path) -> Result<VerifyReport, CliError> {
    let run = StoredRun::load(dir)?;
    let changed_files = run.changed_files()?;
    let ledger = run.rebuild_ledger()?;
    let stored = &run.ledger_file;
    let mut diff: f64 = 0.0;
    let same_grid = stored.breakpoints.len() == ledger.len()
        && stored.depth == ledger.depth
        && stored.breakpoints.iter().zip(ledger.breakpoints()).all(|(a, b)| a == b);
    if same_grid {
        for (k, row) in stored.r.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let w = ledger.r(k, j + 1);
                diff = diff.max((v - w).norm() / w.norm().max(1.0));
            }
        }
    } else {
        diff = f64::INFINITY;
    }
    let ledger_matches = diff <= LEDGER_TOLERANCE;

    let theta = ledger.theta;
    let stages = stored
        .stages
        .iter()
        .map(|s| {
            let end = s.end.unwrap_or(ledger.len() - 1).min(ledger.len() - 1);
            let max_ratio = (1..=ledger.depth)
                .map(|j| {
                    (s.start.max(1)..=end)
                        .map(|k| ledger.r(k, j).norm() / ledger.x(k).powf(j as f64 * theta))
                        .fold(0.0, f64::max)
                })
                .collect();
            StageGrowth { stage: s.stage, start_x: s.start_x, end_x: s.end_x, max_ratio }
        })
        .collect();
    let stage_audit = audit_stages(&ledger, &stored.stages);

    let x_built = run.chi.x_built;
    let partition = interval_breakpoints(theta, x_built).map_err(runtime)?;
    let table = sieve_primes(partition.last().ceil() as u64).map_err(runtime)?;
    let audit = audit_short_intervals(&table, &partition, &AuditConfig::default()).map_err(runtime)?;
    let short_intervals = ShortIntervalSummary {
        intervals: audit.rows.len(),
        min_ratio: audit.min_ratio,
        argmin_x: audit.argmin.map(|k| audit.rows[k - 1].x_k),
        flagged: audit.flagged.len(),
    };

    let passed = changed_files.is_empty() && ledger_matches && stage_audit.passed();
    Ok(VerifyReport {
        config_digest: run.manifest.config_digest.clone(),
        spec_digest: run.manifest.spec_digest.clone(),
        x_built,
        changed_files,
        ledger_breakpoints: ledger.len(),
        ledger_max_rel_diff: diff,
        ledger_matches,
        constants: growth_constants(&ledger),
        stages,
        stage_audit,
        short_intervals,
        passed,
    })
}

impl VerifyReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config  {}", self.config_digest);
        let _ = writeln!(s, "spec    {}", self.spec_digest);
        let _ = writeln!(s, "x_built {:.3}", self.x_built);
        if self.changed_files.is_empty() {
            let _ = writeln!(s, "files   unchanged");
        } else {
            let _ = writeln!(s, "files   CHANGED: {}", self.changed_files.join(", "));
        }
        let _ = writeln!(
            s,
            "ledger  {} breakpoints, max relative difference {:.3e} ({})",
            self.ledger_breakpoints,
            self.ledger_max_rel_diff,
            if self.ledger_matches { "match" } else { "MISMATCH" }
        );
        let _ = writeln!(s, "growth constants C_j = sup |r_j(x_k)| / x_k^(j theta):");
        for (j, c) in self.constants.iter().enumerate() {
            let _ = writeln!(s, "  j={}  {:.6}", j + 1, c);
        }
        let _ = writeln!(s, "per-stage max |r_j| / x^(j theta):");
        for g in &self.stages {
            let end = g.end_x.map(|x| format!("{x:.1}")).unwrap_or_else(|| "open".into());
            let ratios: Vec<String> = g.max_ratio.iter().map(|r| format!("{r:.4}")).collect();
            let _ = writeln!(s, "  stage {}  [{:.1}, {}]  {}", g.stage, g.start_x, end, ratios.join("  "));
        }
        let a = &self.stage_audit;
        let _ = writeln!(
            s,
            "stage audit: {} breakpoints, {} running and {} closing violations",
            a.checked,
            a.running.len(),
            a.closing.len()
        );
        let si = &self.short_intervals;
        let _ = writeln!(
            s,
            "short intervals: {} intervals, min count ratio {:.4} at x = {}, {} flagged",
            si.intervals,
            si.min_ratio,
            si.argmin_x.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into()),
            si.flagged
        );
        let _ = writeln!(s, "{}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}

/// Evaluation points: one `re,im` pair per line; `#` starts a comment.
pub fn parse_points(text: &str) -> Result<Vec<Complex64>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split([',', ' ', '\t']).filter(|p| !p.is_empty()).collect();
        let nums: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
        match nums.as_deref() {
            Some([re, im]) => out.push(Complex64::new(*re, *im)),
            Some([re]) => out.push(Complex64::new(*re, 0.0)),
            _ => return Err(CliError::Validation(format!("points line {}: expected 're,im'", i + 1))),
        }
    }
    Ok(out)
}

/// Rectangle `re_min,re_max,im_min,im_max,n_re,n_im` as a row-major grid.
pub fn parse_grid(text: &str) -> Result<Vec<Complex64>, CliError> {
    let bad = || CliError::Validation(format!("grid '{text}': expected re_min,re_max,im_min,im_max,n_re,n_im"));
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(bad());
    }
    let f: Vec<f64> = parts[..4].iter().map(|p| p.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    let n: Vec<usize> = parts[4..].iter().map(|p| p.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    if n[0] == 0 || n[1] == 0 {
        return Err(bad());
    }
    let step = |lo: f64, hi: f64, n: usize, i: usize| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(n[0] * n[1]);
    for b in 0..n[1] {
        for a in 0..n[0] {
            out.push(Complex64::new(step(f[0], f[1], n[0], a), step(f[2], f[3], n[1], b)));
        }
    }
    Ok(out)
}

fn loaded_evaluator_inputs(dir: &Path) -> Result<(StoredRun, helson_core::forge::Ledger), CliError> {
    let run = StoredRun::load(dir)?;
    let ledger = run.rebuild_ledger()?;
    Ok((run, ledger))
}

fn check_depth(j: usize, depth: usize) -> Result<(), CliError> {
    if j == 0 || j > depth {
        return Err(CliError::Validation(format!("depth must lie in 1..={depth}, got {j}")));
    }
    Ok(())
}

/// One result per point, in input order. Prescribed singularities give a
/// row with NaN value.
pub fn cmd_eval(
    dir: &Path,
    points: &[Complex64],
    j: usize,
    x: Option<f64>,
    threads: usize,
) -> Result<Vec<ContinuationResult>, CliError> {
    let (run, ledger) = loaded_evaluator_inputs(dir)?;
    check_depth(j, ledger.depth)?;
    let x = x.unwrap_or_else(|| ledger.last_x().min(run.chi.x_built));
    let ev = Evaluator::new(&run.chi, &ledger, &run.spec, x).map_err(|e| CliError::Validation(e.to_string()))?;
    let pool = thread_pool(threads)?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .map(|&s| {
                ev.evaluate(s, j).unwrap_or(ContinuationResult {
                    s,
                    j,
                    x,
                    value: Complex64::new(f64::NAN, f64::NAN),
                    tail_bound: f64::INFINITY,
                    converged: false,
                })
            })
            .collect()
    }))
}

pub fn results_csv(results: &[ContinuationResult]) -> String {
    let mut s = String::from("re,im,j,X,value_re,value_im,abs,tail_bound,converged\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.17e},{:.17e},{:.17e},{:.6e},{}",
            r.s.re,
            r.s.im,
            r.j,
            r.x,
            r.value.re,
            r.value.im,
            r.value.norm(),
            r.tail_bound,
            r.converged
        );
    }
    s
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeRow {
    pub centre: Complex64,
    /// Prescribed order at the centre, 0 for control contours.
    pub order: i32,
    pub residue: Complex64,
    pub nearest: i64,
    pub matches: bool,
}

/// Probe every spec entry and every extra centre.
pub fn cmd_probe(
    dir: &Path,
    j: usize,
    radius: f64,
    nodes: usize,
    extra: &[Complex64],
    threads: usize,
) -> Result<Vec<ProbeRow>, CliError> {
    let (run, ledger) = loaded_evaluator_inputs(dir)?;
    check_depth(j, ledger.depth)?;
    let x = ledger.last_x().min(run.chi.x_built);
    let ev = Evaluator::new(&run.chi, &ledger, &run.spec, x).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut centres: Vec<(Complex64, i32)> = run.spec.entries().iter().map(|e| (e.location(), e.order)).collect();
    centres.extend(extra.iter().map(|&a| (a, order_at(&run.spec, a))));
    let pool = thread_pool(threads)?;
    pool.install(|| {
        centres
            .par_iter()
            .map(|&(a, order)| {
                let residue = ev
                    .residue_probe(a, j, radius, nodes)
                    .map_err(|e| CliError::Validation(format!("probe at {a}: {e}")))?;
                let nearest = residue.re.round() as i64;
                Ok(ProbeRow { centre: a, order, residue, nearest, matches: nearest == order as i64 })
            })
            .collect()
    })
}

fn order_at(spec: &ZeroPoleSpec, a: Complex64) -> i32 {
    spec.entries().iter().filter(|e| e.location() == a).map(|e| e.order).sum()
}

pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from("re,im,order,residue_re,residue_im,nearest,matches\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.12e},{:.12e},{},{}",
            r.centre.re, r.centre.im, r.order, r.residue.re, r.residue.im, r.nearest, r.matches
        );
    }
    s
}

pub fn cmd_audit_primes(
    theta: f64,
    x_max: u64,
    config: &AuditConfig,
) -> Result<helson_core::primes::AuditReport, CliError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(CliError::Validation(format!("theta must lie in (0, 1), got {theta}")));
    }
    let partition = interval_breakpoints(theta, x_max as f64).map_err(|e| CliError::Validation(e.to_string()))?;
    let table = sieve_primes(partition.last().ceil() as u64).map_err(|e| CliError::Validation(e.to_string()))?;
    audit_short_intervals(&table, &partition, config).map_err(runtime)
}
