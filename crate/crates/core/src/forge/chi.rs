//! The forged character: unimodular values on primes, stored as angles, and
//! its text serialization.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::primes::LambdaTerm;

pub const CHI_MAGIC: &str = "helson-chi v1";

#[derive(Debug, Error, PartialEq)]
pub enum ChiError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("primes not strictly increasing at position {0}")]
    Order(usize),
    #[error("{primes} primes but {angles} angles")]
    Length { primes: usize, angles: usize },
    #[error("angle {angle} at position {index} is outside (-pi, pi]")]
    Angle { index: usize, angle: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChiAssignment {
    pub theta: f64,
    pub x_max: u64,
    /// Values are defined on exactly the primes below this frontier.
    pub x_built: f64,
    pub spec_hash: String,
    /// Digest of the run configuration, written as a comment line.
    pub config_hash: Option<String>,
    primes: Vec<u64>,
    angles: Vec<f64>,
}

/// Angle of a unit complex number, in `(-pi, pi]`.
pub fn angle_of(z: Complex64) -> f64 {
    normalize_angle(z.arg())
}

pub fn normalize_angle(a: f64) -> f64 {
    if a == -PI {
        PI
    } else {
        a
    }
}

/// `chi(p)^v` for a prime with angle `a`.
#[inline]
pub fn unit(a: f64, v: u32) -> Complex64 {
    Complex64::from_polar(1.0, a * v as f64)
}

impl ChiAssignment {
    pub fn new(
        theta: f64,
        x_max: u64,
        x_built: f64,
        spec_hash: String,
        primes: Vec<u64>,
        angles: Vec<f64>,
    ) -> Result<Self, ChiError> {
        if primes.len() != angles.len() {
            return Err(ChiError::Length {
                primes: primes.len(),
                angles: angles.len(),
            });
        }
        if let Some(i) = primes.windows(2).position(|w| w[0] >= w[1]) {
            return Err(ChiError::Order(i + 1));
        }
        if let Some(index) = angles.iter().position(|&a| !(a > -PI && a <= PI)) {
            return Err(ChiError::Angle {
                index,
                angle: angles[index],
            });
        }
        Ok(ChiAssignment {
            theta,
            x_max,
            x_built,
            spec_hash,
            config_hash: None,
            primes,
            angles,
        })
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn value(&self, index: usize) -> Complex64 {
        unit(self.angles[index], 1)
    }

    pub fn value_at_prime(&self, p: u64) -> Option<Complex64> {
        self.primes.binary_search(&p).ok().map(|i| self.value(i))
    }

    /// `chi(n)` by complete multiplicativity; `None` if `n` has a prime
    /// factor outside the domain.
    pub fn chi(&self, n: u64) -> Option<Complex64> {
        if n == 0 {
            return None;
        }
        let mut m = n;
        let mut angle = 0.0;
        for (i, &p) in self.primes.iter().enumerate() {
            if p * p > m {
                break;
            }
            while m % p == 0 {
                m /= p;
                angle += self.angles[i];
            }
        }
        if m > 1 {
            let i = self.primes.binary_search(&m).ok()?;
            angle += self.angles[i];
        }
        Some(Complex64::from_polar(1.0, angle))
    }

    /// Every `p^v <= x` with `p` in the domain, sorted by `n`.
    pub fn lambda_terms(&self, x: f64) -> Vec<LambdaTerm> {
        self.lambda_terms_in(1.0, x)
    }

    /// Every `p^v` with `lo <= p^v <= hi` and `p` in the domain, sorted.
    pub fn lambda_terms_in(&self, lo: f64, hi: f64) -> Vec<LambdaTerm> {
        let a = self.primes.partition_point(|&p| (p as f64) < lo);
        let b = self.primes.partition_point(|&p| (p as f64) <= hi);
        let mut out: Vec<LambdaTerm> = (a..b.max(a))
            .map(|i| LambdaTerm {
                n: self.primes[i],
                prime_index: i,
                v: 1,
                log_p: (self.primes[i] as f64).ln(),
            })
            .collect();
        let before = out.len();
        for (i, &p) in self.primes.iter().enumerate() {
            if ((p * p) as f64) > hi {
                break;
            }
            let mut n = p * p;
            let mut v = 2;
            while (n as f64) <= hi {
                if (n as f64) >= lo {
                    out.push(LambdaTerm {
                        n,
                        prime_index: i,
                        v,
                        log_p: (p as f64).ln(),
                    });
                }
                match n.checked_mul(p) {
                    Some(next) => n = next,
                    None => break,
                }
                v += 1;
            }
        }
        if out.len() > before {
            out.sort_by_key(|t| t.n);
        }
        out
    }

    /// `chi(n) Lambda(n)` for a term.
    #[inline]
    pub fn weighted(&self, t: &LambdaTerm) -> Complex64 {
        unit(self.angles[t.prime_index], t.v) * t.log_p
    }

    pub fn header(&self) -> String {
        format!(
            "{CHI_MAGIC} theta={} xmax={} spec={}",
            fmt17(self.theta),
            self.x_max,
            self.spec_hash
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(32 * self.primes.len() + 128);
        s.push_str(&self.header());
        s.push('\n');
        if let Some(c) = &self.config_hash {
            let _ = writeln!(s, "# config={c}");
        }
        let _ = writeln!(s, "# built={}", fmt17(self.x_built));
        for (p, a) in self.primes.iter().zip(&self.angles) {
            let _ = writeln!(s, "{p},{}", fmt17(*a));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ChiError> {
        let mut lines = text.lines().enumerate();
        let (_, head) = lines.next().ok_or(ChiError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let rest = head.strip_prefix(CHI_MAGIC).ok_or(ChiError::Parse {
            line: 1,
            msg: format!("header must start with '{CHI_MAGIC}'"),
        })?;
        let (mut theta, mut x_max, mut spec) = (None, None, None);
        for field in rest.split_whitespace() {
            let bad = || ChiError::Parse {
                line: 1,
                msg: format!("bad header field '{field}'"),
            };
            let (k, v) = field.split_once('=').ok_or_else(bad)?;
            match k {
                "theta" => theta = Some(v.parse::<f64>().map_err(|_| bad())?),
                "xmax" => x_max = Some(v.parse::<u64>().map_err(|_| bad())?),
                "spec" => spec = Some(v.to_string()),
                _ => return Err(bad()),
            }
        }
        let missing = |name: &str| ChiError::Parse {
            line: 1,
            msg: format!("header lacks {name}"),
        };
        let theta = theta.ok_or_else(|| missing("theta"))?;
        let x_max = x_max.ok_or_else(|| missing("xmax"))?;
        let spec = spec.ok_or_else(|| missing("spec"))?;

        let mut config_hash = None;
        let mut built = None;
        let mut primes = Vec::new();
        let mut angles = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.trim().split_once('=') {
                    match k {
                        "config" => config_hash = Some(v.to_string()),
                        "built" => {
                            built = Some(v.parse::<f64>().map_err(|_| ChiError::Parse {
                                line: line_no,
                                msg: "bad frontier".into(),
                            })?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| ChiError::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            let (p, a) = line.split_once(',').ok_or_else(|| bad("expected 'p,angle'"))?;
            primes.push(p.trim().parse::<u64>().map_err(|_| bad("bad prime"))?);
            angles.push(a.trim().parse::<f64>().map_err(|_| bad("bad angle"))?);
        }
        let x_built = built.unwrap_or_else(|| primes.last().map_or(0.0, |&p| p as f64 + 1.0));
        let mut chi = ChiAssignment::new(theta, x_max, x_built, spec, primes, angles)?;
        chi.config_hash = config_hash;
        Ok(chi)
    }
}

/// Shortest-free rendering with 17 significant digits, positional where the
/// exponent is moderate. Round-trips every `f64`.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..17).contains(&e) {
        let s = format!("{:.*}", (16 - e).max(0) as usize, x);
        // guard against log10 rounding at exact powers of ten
        if s.parse::<f64>() == Ok(x) {
            return s;
        }
    }
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ChiAssignment {
        let primes = vec![2, 3, 5, 7, 11, 13];
        let angles = vec![PI, 0.0, PI, 0.0, 1.234_567_890_123_456_7, -2.0];
        ChiAssignment::new(7.0 / 12.0, 20, 16.5, "ab".repeat(32), primes, angles).unwrap()
    }

    #[test]
    fn header_layout() {
        let chi = sample();
        assert_eq!(
            chi.header(),
            format!("helson-chi v1 theta=0.58333333333333337 xmax=20 spec={}", "ab".repeat(32))
        );
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut chi = sample();
        chi.config_hash = Some("cd".repeat(32));
        let back = ChiAssignment::parse(&chi.to_text()).unwrap();
        assert_eq!(back, chi);
        assert_eq!(back.to_text(), chi.to_text());
    }

    #[test]
    fn fmt17_round_trips() {
        for &x in &[1.0, 0.1, 1e-7, 3.141592653589793, -2.718281828459045, 1e20, 123456.789, 7.0 / 12.0, 1e-300] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn minus_pi_maps_to_pi() {
        assert_eq!(angle_of(Complex64::new(-1.0, -0.0)), PI);
        assert_eq!(angle_of(Complex64::new(-1.0, 0.0)), PI);
        assert!(ChiAssignment::new(0.5, 3, 3.0, String::new(), vec![2], vec![-PI]).is_err());
    }

    #[test]
    fn complete_multiplicativity() {
        let chi = sample();
        let z12 = chi.chi(12).unwrap();
        let expect = chi.value_at_prime(2).unwrap().powi(2) * chi.value_at_prime(3).unwrap();
        assert!((z12 - expect).norm() < 1e-15);
        assert!((chi.chi(1).unwrap() - Complex64::new(1.0, 0.0)).norm() == 0.0);
        assert!(chi.chi(17).is_none());
        assert!(chi.chi(11 * 13).is_some());
    }

    #[test]
    fn lambda_terms_up_to_30() {
        let chi = ChiAssignment::new(0.5, 30, 31.0, String::new(), vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29], vec![0.0; 10]).unwrap();
        let ns: Vec<u64> = chi.lambda_terms(30.0).iter().map(|t| t.n).collect();
        assert_eq!(ns, vec![2, 3, 4, 5, 7, 8, 9, 11, 13, 16, 17, 19, 23, 25, 27, 29]);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(ChiAssignment::parse("").is_err());
        assert!(ChiAssignment::parse("helson-chi v2 theta=0.5 xmax=3 spec=x\n").is_err());
        assert!(ChiAssignment::parse("helson-chi v1 theta=0.5 xmax=3\n").is_err());
        assert!(ChiAssignment::parse("helson-chi v1 theta=0.5 xmax=3 spec=x\n2;1.0\n").is_err());
        assert!(ChiAssignment::parse("helson-chi v1 theta=0.5 xmax=3 spec=x\n3,0\n2,0\n").is_err());
    }
}
