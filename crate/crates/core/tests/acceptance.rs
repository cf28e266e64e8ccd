//! Acceptance gate: one pass/fail line per criterion; exits non-zero if any
//! criterion fails.

mod common;

use std::time::Instant;

use common::*;
use helson_core::balance::{balance, BalanceInstance};
use helson_core::continuation::{
    euler_product, lambda_series_tail, log_deriv_series, zeta_series, Evaluator, DEFAULT_NODES,
};
use helson_core::forge::{audit_stages, ForgeOutput};
use helson_core::targets::ZeroPoleSpec;
use num_complex::Complex64;
use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn theta() -> f64 {
    7.0 / 12.0
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..1000 {
        let d = rng.random_range(1..=8usize);
        let n = rng.random_range(1..=2000usize);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let vectors: Vec<Vec<Complex64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
                    .collect()
            })
            .collect();
        let coeffs: Vec<Complex64> = (0..n)
            .map(|_| {
                let r: f64 = if rng.random_bool(0.2) { 1.0 } else { rng.random_range(0.0..1.0) };
                Complex64::from_polar(r, rng.random_range(-3.14..3.14))
            })
            .collect();
        let bound = d as f64 * vectors.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        let inst = BalanceInstance::new(d, vectors.clone(), coeffs.clone()).unwrap();
        let b = match balance(&inst) {
            Ok(b) => b.values,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let unimodular = b.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12);
        let mut dev: f64 = 0.0;
        for i in 0..d {
            let s: Complex64 = (0..n).map(|j| (coeffs[j] - b[j]) * vectors[j][i]).sum();
            dev = dev.max(s.norm());
        }
        if !unimodular || dev > bound * (1.0 + 1e-12) {
            failures += 1;
        }
        worst = worst.max(dev / bound);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs < 30.0,
        format!("1000 instances, {failures} failures, max deviation/bound {worst:.3}, {secs:.1} s"),
    )
}

/// Every interval with targets: direct moment sums from the stored character.
fn realization_check(out: &ForgeOutput) -> (usize, usize, f64) {
    let chi = &out.chi;
    let primes = chi.primes();
    let (mut checked, mut bad, mut worst) = (0, 0, 0.0f64);
    for rec in &out.report.intervals {
        let a = primes.partition_point(|&p| (p as f64) < rec.x_lo);
        let b = primes.partition_point(|&p| (p as f64) < rec.x_hi);
        for j in 1..=rec.xi.len() {
            let mut s = c(0.0, 0.0);
            for i in a..b {
                let p = primes[i];
                assert!(is_prime(p));
                s += chi.value(i) * (rec.x_hi - p as f64).powi(j as i32 - 1) * (p as f64).ln();
            }
            let bound = rec.size as f64 * rec.x_lo.powf((j as f64 - 1.0) * theta()) * rec.x_hi.ln();
            let ratio = (s - rec.xi[j - 1]).norm() / bound;
            worst = worst.max(ratio);
            bad += (ratio > 1.0) as usize;
        }
        checked += 1;
    }
    (checked, bad, worst)
}

fn criterion_2(runs: &[(&str, &ForgeOutput)]) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, out) in runs {
        let (checked, bad, worst) = realization_check(out);
        passed &= bad == 0 && checked > 0;
        parts.push(format!("{name}: {checked} intervals, {bad} violations, max error/bound {worst:.3}"));
    }
    outcome(passed, parts.join("; "))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `(J + c)/(j-1)! x^{(j-1) theta} log x`.
fn stage_bound(stage: usize, extra: usize, j: usize, x: f64) -> f64 {
    (stage + extra) as f64 / factorial(j - 1) * x.powf((j as f64 - 1.0) * theta()) * x.ln()
}

fn criterion_3(runs: &[(&str, &ForgeOutput)]) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, out) in runs {
        let ledger = &out.ledger;
        let (mut running, mut closing, mut checked) = (0, 0, 0);
        for st in &out.report.stages {
            let stop = st.end.unwrap_or(ledger.len());
            for k in st.start..stop {
                checked += 1;
                for j in 1..=st.stage {
                    if ledger.r(k, j).norm() > stage_bound(st.stage, 1, j, ledger.x(k)) {
                        running += 1;
                    }
                }
            }
            if let Some(e) = st.end {
                for j in 1..=st.stage + 1 {
                    if ledger.r(e, j).norm() > stage_bound(st.stage, 2, j, ledger.x(e)) {
                        closing += 1;
                    }
                }
            }
        }
        let audit = audit_stages(ledger, &out.report.stages);
        let closes = out.report.stages.iter().filter(|s| s.end.is_some()).count();
        passed &= running == 0 && closing == 0 && audit.passed() && !out.report.stages.is_empty();
        parts.push(format!(
            "{name}: {} stages, {closes} closes, {checked} breakpoints, (iii) violations {running}, (iv) violations {closing}",
            out.report.stages.len()
        ));
    }
    outcome(passed, parts.join("; "))
}

fn c1(out: &ForgeOutput) -> f64 {
    let l = &out.ledger;
    (1..l.len()).map(|k| l.r(k, 1).norm() / l.x(k).powf(theta())).fold(0.0, f64::max)
}

fn criterion_4(pairs: &[(&str, &ForgeOutput, &ForgeOutput)]) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, half, full) in pairs {
        let (a, b) = (c1(half), c1(full));
        let growth = b / a - 1.0;
        passed &= a.is_finite() && b.is_finite() && growth < 0.10;
        parts.push(format!("{name}: C_1 {a:.4} at 5e5, {b:.4} at 1e6, change {:+.2}%", 100.0 * growth));
    }
    outcome(passed, parts.join("; "))
}

fn criterion_5(runs: &[(&str, &ForgeOutput)]) -> Outcome {
    let powers = prime_powers(1_001_500);
    let gl = gauss_legendre(4);
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, out) in runs {
        let ledger = &out.ledger;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        let mut worst_q: f64 = 0.0;
        for _ in 0..20 {
            let k = rng.random_range(1..ledger.len());
            let x = ledger.x(k);
            let q = ledger.kernel().iterated_integrals_dd(ledger.depth, x);
            for j in 1..=ledger.depth {
                let s = brute_s(&out.chi, &powers, x, j);
                let r = ledger.r_dd(k, j);
                let (got, want) = if ledger.kernel().is_zero() {
                    (r.to_c64(), s)
                } else {
                    // q(t) = t^{-1/2}: with t = u^2 the smooth part is a polynomial integral
                    let (a, b) = (1.0, x.sqrt());
                    let poly: f64 = gl
                        .iter()
                        .map(|&(t, w)| {
                            let u = 0.5 * (a + b) + 0.5 * (b - a) * t;
                            w * 0.5 * (b - a) * 2.0 * (x - u * u).powi(j as i32 - 1)
                        })
                        .sum::<f64>()
                        / factorial(j - 1);
                    let qj = q[j - 1].to_c64();
                    worst_q = worst_q.max((qj.re - poly).abs() / poly.abs());
                    ((r - q[j - 1]).to_c64(), s)
                };
                let rel = (got - want).norm() / want.norm().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
            }
        }
        passed &= worst < 1e-8 && worst_q < 1e-12;
        let qpart = if ledger.kernel().is_zero() { String::new() } else { format!(", kernel part {worst_q:.1e}") };
        parts.push(format!("{name}: max relative difference {worst:.1e}{qpart}"));
    }
    outcome(passed, parts.join("; "))
}

fn criterion_6(out: &ForgeOutput, spec: &ZeroPoleSpec) -> Outcome {
    let x = out.ledger.last_x();
    let ev = Evaluator::new(&out.chi, &out.ledger, spec, x).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
    let (mut bad_overlap, mut worst_overlap) = (0, 0.0f64);
    for _ in 0..50 {
        let s = c(rng.random_range(0.7..0.95), rng.random_range(-20.0..20.0));
        let a = ev.continue_log_deriv(s, 2).unwrap();
        let b = ev.continue_log_deriv(s, 3).unwrap();
        let ratio = (a.value - b.value).norm() / (a.tail_bound + b.tail_bound);
        worst_overlap = worst_overlap.max(ratio);
        bad_overlap += (ratio > 1.0) as usize;
    }
    let (mut bad_series, mut worst_series) = (0, 0.0f64);
    for _ in 0..20 {
        let s = c(rng.random_range(1.05..3.0), rng.random_range(-20.0..20.0));
        let a = ev.continue_log_deriv(s, 2).unwrap();
        let series = log_deriv_series(&out.chi, s, x).unwrap();
        let ratio = (a.value - series).norm() / (a.tail_bound + lambda_series_tail(s, x));
        worst_series = worst_series.max(ratio);
        bad_series += (ratio > 1.0) as usize;
    }
    outcome(
        bad_overlap == 0 && bad_series == 0,
        format!(
            "depth 2 vs 3 at 50 points: {bad_overlap} outside tails (max diff/tails {worst_overlap:.2e}); \
             depth 2 vs series at 20 points: {bad_series} outside (max {worst_series:.2e})"
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let spec = zero_spec();
    let out = run(&spec, 10_000_000);
    let forged = start.elapsed().as_secs_f64();
    let x = out.ledger.last_x();
    let ev = Evaluator::new(&out.chi, &out.ledger, &spec, x).unwrap();
    let main = ev.residue_probe(c(0.5, 0.0), 3, 0.05, DEFAULT_NODES).unwrap();
    let controls = [c(0.5, 1.5), c(0.8, 0.0), c(0.2, -2.0)];
    let ctrl: Vec<Complex64> =
        controls.iter().map(|&a| ev.residue_probe(a, 3, 0.05, DEFAULT_NODES).unwrap()).collect();
    let probed = start.elapsed().as_secs_f64() - forged;
    let passed = main.re.round() == 1.0 && ctrl.iter().all(|z| z.re.round() == 0.0);
    let ctrl_text: Vec<String> = ctrl.iter().map(|z| format!("{:.2e}", z.norm())).collect();
    outcome(
        passed,
        format!(
            "X = {x:.0}: residue at 1/2 = {:.6}{:+.1e}i, controls |.| = [{}]; forge {forged:.1} s, probes {probed:.1} s",
            main.re,
            main.im,
            ctrl_text.join(", ")
        ),
    )
}

fn criterion_8(out: &ForgeOutput) -> Outcome {
    let spec = ZeroPoleSpec::empty();
    let x = out.ledger.last_x();
    let ev = Evaluator::new(&out.chi, &out.ledger, &spec, x).unwrap();
    let (mut over, mut nonfinite, mut probe_bad) = (0, 0, 0);
    let mut worst = (0.0f64, c(0.0, 0.0));
    let mut worst_probe: f64 = 0.0;
    for a in 0..21 {
        for b in 0..21 {
            let s = c(-0.2 + 1.1 * a as f64 / 20.0, -3.0 + 6.0 * b as f64 / 20.0);
            let r = ev.continue_log_deriv(s, 3).unwrap();
            if !(r.value.re.is_finite() && r.value.im.is_finite()) {
                nonfinite += 1;
            }
            let ratio = r.value.norm() / (10.0 * (1.0 + s.norm().powi(3)));
            if ratio >= 1.0 {
                over += 1;
            }
            if ratio > worst.0 {
                worst = (ratio, s);
            }
            let z = ev.residue_probe(s, 3, 0.04, DEFAULT_NODES).unwrap();
            worst_probe = worst_probe.max(z.norm());
            probe_bad += (z.re.round() != 0.0) as usize;
        }
    }
    outcome(
        over == 0 && nonfinite == 0 && probe_bad == 0,
        format!(
            "441 points: {nonfinite} non-finite, {over} with |value| >= 10(1+|s|^3) (worst ratio {:.2} at s = {}), \
             {probe_bad} probes off 0 (max |residue| {worst_probe:.1e})",
            worst.0, worst.1
        ),
    )
}

fn criterion_9(out: &ForgeOutput) -> Outcome {
    let s = c(2.5, 0.0);
    let series = zeta_series(&out.chi, s, 1_000_000).unwrap();
    let product = euler_product(&out.chi, s, 1_000_000).unwrap();
    let d = (series - product).norm();
    outcome(d < 1e-6, format!("series {series:.10}, product {product:.10}, |difference| {d:.2e}"))
}

fn criterion_10(cached: &ForgeOutput) -> Outcome {
    let a = run(&zero_spec(), 1_000_000).chi.to_text();
    let b = run(&zero_spec(), 1_000_000).chi.to_text();
    let same = a == b && a == cached.chi.to_text();
    outcome(same, format!("three runs, {} bytes each, identical: {same}", a.len()))
}

fn main() {
    let zero_half = run(&zero_spec(), 500_000);
    let empty_half = run(&ZeroPoleSpec::empty(), 500_000);
    let zero = zero_run_1e6();
    let empty = empty_run_1e6();
    let runs: [(&str, &ForgeOutput); 2] = [("spec {(1/2,1)}", zero), ("empty spec", empty)];

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("balancing bound", Box::new(criterion_1)),
        ("interval realization", Box::new(|| criterion_2(&runs))),
        ("stage bounds (iii)/(iv)", Box::new(|| criterion_3(&runs))),
        (
            "global growth",
            Box::new(|| criterion_4(&[("spec {(1/2,1)}", &zero_half, zero), ("empty spec", &empty_half, empty)])),
        ),
        ("ledger exactness", Box::new(|| criterion_5(&runs))),
        ("region-overlap consistency", Box::new(|| criterion_6(zero, &zero_spec()))),
        ("prescribed zero recovery", Box::new(criterion_7)),
        ("entire zero-free demo", Box::new(|| criterion_8(empty))),
        ("Euler/series agreement", Box::new(|| criterion_9(zero))),
        ("determinism", Box::new(|| criterion_10(zero))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += !o.passed as usize;
        println!("criterion {:>2} {:<28} {}  {}", i + 1, name, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
