//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::sync::OnceLock;

use helson_core::forge::{forge, ChiAssignment, ForgeConfig, ForgeOutput};
use helson_core::targets::{SpecEntry, ZeroPoleSpec};
use num_complex::Complex64;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn zero_spec() -> ZeroPoleSpec {
    ZeroPoleSpec::new(vec![SpecEntry::new(c(0.5, 0.0), 1)]).unwrap()
}

pub fn run(spec: &ZeroPoleSpec, x_max: u64) -> ForgeOutput {
    let config = ForgeConfig { x_max, ..ForgeConfig::default() };
    forge(spec, &config).map_err(|a| a.error).expect("forge succeeds")
}

/// Cached default-config runs shared across tests of one binary.
pub fn zero_run_1e6() -> &'static ForgeOutput {
    static R: OnceLock<ForgeOutput> = OnceLock::new();
    R.get_or_init(|| run(&zero_spec(), 1_000_000))
}

pub fn empty_run_1e6() -> &'static ForgeOutput {
    static R: OnceLock<ForgeOutput> = OnceLock::new();
    R.get_or_init(|| run(&ZeroPoleSpec::empty(), 1_000_000))
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Every prime power `n = p^v <= n_max` as `(n, p, v)`, sorted by `n`, from a
/// plain sieve of Eratosthenes.
pub fn prime_powers(n_max: usize) -> Vec<(u64, u64, u32)> {
    let mut composite = vec![false; n_max + 1];
    let mut out = Vec::new();
    for p in 2..=n_max {
        if composite[p] {
            continue;
        }
        let mut m = p * p;
        while m <= n_max {
            composite[m] = true;
            m += p;
        }
        let (mut q, mut v) = (p, 1);
        while q <= n_max {
            out.push((q as u64, p as u64, v));
            match q.checked_mul(p) {
                Some(next) => q = next,
                None => break,
            }
            v += 1;
        }
    }
    out.sort_unstable();
    out
}

/// `chi(p)^v` by repeated complex multiplication.
pub fn chi_prime_power(chi: &ChiAssignment, p: u64, v: u32) -> Complex64 {
    let z = chi.value_at_prime(p).expect("prime inside the domain");
    (0..v).fold(c(1.0, 0.0), |acc, _| acc * z)
}

/// Minimal double-double real for oracle sums.
#[derive(Clone, Copy, Debug, Default)]
pub struct Dd2 {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd2 {
    pub fn from(x: f64) -> Self {
        Dd2 { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd2) -> Dd2 {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd2 { hi, lo }
    }

    pub fn mul(self, o: Dd2) -> Dd2 {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd2 { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// `sum chi(n) Lambda(n) (x - n)^{j-1} / (j-1)!` over prime powers `n < x`,
/// by a direct loop over the prime powers below `x`.
pub fn brute_s(chi: &ChiAssignment, powers: &[(u64, u64, u32)], x: f64, j: usize) -> Complex64 {
    let (mut re, mut im) = (Dd2::default(), Dd2::default());
    for &(n, p, v) in powers {
        if (n as f64) >= x {
            break;
        }
        let z = chi_prime_power(chi, p, v);
        let d = Dd2::from(x).add(Dd2::from(-(n as f64)));
        let mut w = Dd2::from((p as f64).ln());
        for _ in 1..j {
            w = w.mul(d);
        }
        re = re.add(w.mul(Dd2::from(z.re)));
        im = im.add(w.mul(Dd2::from(z.im)));
    }
    let f: f64 = (1..j).map(|i| i as f64).product();
    c(re.to_f64() / f, im.to_f64() / f)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> Complex64 {
    let nodes = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut acc = c(0.0, 0.0);
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        for &(t, w) in &nodes {
            acc += f(mid + 0.5 * h * t) * (w * 0.5 * h);
        }
    }
    acc
}
