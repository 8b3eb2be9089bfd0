//! β-expansions, the Parry admissibility test and the word surgeries used to
//! connect points of a β-shift.
//!
//! β is a double. Every multiplication carries an error bound that grows by a
//! factor β per digit. A digit is emitted only when the bound keeps the value
//! clear of a digit boundary; otherwise expansion stops with
//! [`Error::PrecisionExhausted`].
//!
//! The one exception is the cached expansion of 1. When βx lands within the
//! error bound of an integer there, the expansion is treated as finite (a
//! simple Parry number) and the cache is flagged.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative uncertainty attached to β itself.
pub const DEFAULT_BETA_REL_ERR: f64 = f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Boundary {
    /// Stop with an error whenever a digit is ambiguous.
    Strict,
    /// Resolve a near-integer βx as an exact hit with remainder 0.
    SnapToFinite,
}

struct Step {
    digits: Vec<u8>,
    finite: bool,
    exhausted_at: Option<usize>,
}

fn expand(x: f64, beta: f64, n: usize, rel_err: f64, mode: Boundary) -> Step {
    let b = digit_bound(beta);
    let mut digits = Vec::with_capacity(n);
    let mut x = x;
    let mut err = 0.0f64;
    for j in 0..n {
        if x == 0.0 && err == 0.0 {
            digits.resize(n, 0);
            return Step { digits, finite: true, exhausted_at: None };
        }
        let v = beta * x;
        let e = beta * err + x * beta * rel_err + v.abs() * f64::EPSILON / 2.0;
        let k = v.floor();
        let below = v - k;
        let above = k + 1.0 - v;
        if mode == Boundary::SnapToFinite && (below <= e || above <= e) {
            let hit = if below <= e { k } else { k + 1.0 };
            if hit >= 1.0 && hit <= b as f64 + 1.0 {
                digits.push(hit as u8);
                digits.resize(n, 0);
                return Step { digits, finite: true, exhausted_at: None };
            }
        }
        let ambiguous = (k >= 1.0 && below <= 2.0 * e) || above <= 2.0 * e;
        if ambiguous {
            return Step { digits, finite: false, exhausted_at: Some(j) };
        }
        let d = (k as i64).clamp(0, 255) as u8;
        digits.push(d);
        x = v - k;
        err = e;
    }
    Step { digits, finite: false, exhausted_at: None }
}

/// Largest digit of the β-shift: ⌊β⌋, or β−1 when β is an integer.
pub fn digit_bound(beta: f64) -> u8 {
    let f = beta.floor();
    if f == beta {
        (f - 1.0) as u8
    } else {
        f as u8
    }
}

/// Greedy digits d_j = ⌊β x_{j−1}⌋ with x_j = {β x_{j−1}}.
pub fn greedy_expansion(x: f64, beta: f64, n: usize) -> Result<Vec<u8>> {
    check_beta(beta)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("x = {x} outside [0,1]")));
    }
    let step = expand(x, beta, n, DEFAULT_BETA_REL_ERR, Boundary::Strict);
    match step.exhausted_at {
        Some(digit) => Err(Error::PrecisionExhausted { digit, digits: step.digits }),
        None => Ok(step.digits),
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 1.0 && beta.is_finite() && beta < 256.0) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must lie in (1, 256)")));
    }
    Ok(())
}

/// β together with a cached prefix of the expansion of 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaParams {
    beta: f64,
    digits: usize,
    b: u8,
    one: Vec<u8>,
    finite: bool,
}

/// Outcome of a Parry test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParryVerdict {
    pub admissible: bool,
    /// Some suffix matched the cached expansion of 1 over its whole length.
    pub boundary: bool,
}

impl BetaParams {
    pub fn new(beta: f64, digits: usize) -> Result<Self> {
        check_beta(beta)?;
        if digits == 0 {
            return Err(Error::InvalidParameter("digit depth must be positive".into()));
        }
        let step = expand(1.0, beta, digits, DEFAULT_BETA_REL_ERR, Boundary::SnapToFinite);
        Ok(Self { beta, digits, b: digit_bound(beta), one: step.digits, finite: step.finite })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Requested digit depth D.
    pub fn digits(&self) -> usize {
        self.digits
    }

    pub fn max_digit(&self) -> u8 {
        self.b
    }

    pub fn alphabet_size(&self) -> u8 {
        self.b + 1
    }

    /// Certified prefix of i(1,β); shorter than D when precision ran out.
    pub fn expansion_of_one(&self) -> &[u8] {
        &self.one
    }

    /// Whether the expansion of 1 was resolved as finite.
    pub fn finite_expansion(&self) -> bool {
        self.finite
    }

    fn one_digit(&self, j: usize) -> Option<u8> {
        match self.one.get(j) {
            Some(&d) => Some(d),
            None if self.finite => Some(0),
            None => None,
        }
    }

    pub fn greedy(&self, x: f64, n: usize) -> Result<Vec<u8>> {
        greedy_expansion(x, self.beta, n)
    }

    /// Every suffix of `w` must be lexicographically ≤ the expansion of 1 on
    /// the overlap; a suffix equal to the whole overlap counts as admissible.
    pub fn parry_check(&self, w: &[u8]) -> Result<ParryVerdict> {
        if let Some(&symbol) = w.iter().find(|&&d| d > self.b) {
            return Err(Error::SymbolOutOfRange { symbol, q: self.b + 1 });
        }
        let mut boundary = false;
        for k in 0..w.len() {
            let suffix = &w[k..];
            let mut decided = false;
            for (j, &d) in suffix.iter().enumerate() {
                let e = self
                    .one_digit(j)
                    .ok_or(Error::DepthExceeded { needed: j + 1, depth: self.one.len() })?;
                if d < e {
                    decided = true;
                    break;
                }
                if d > e {
                    return Ok(ParryVerdict { admissible: false, boundary });
                }
            }
            if !decided {
                boundary = true;
            }
        }
        Ok(ParryVerdict { admissible: true, boundary })
    }

    pub fn parry_admissible(&self, w: &[u8]) -> Result<bool> {
        Ok(self.parry_check(w)?.admissible)
    }

    pub fn word(&self, digits: Vec<u8>) -> Result<BetaWord> {
        if self.parry_admissible(&digits)? {
            Ok(BetaWord { digits })
        } else {
            Err(Error::Inadmissible(digits_string(&digits)))
        }
    }

    /// w_1⋯(w_j − 1)⋯w_n η with 1-based `j`; the result is re-checked.
    ///
    /// Admissibility is guaranteed when every digit after `j` is zero. For
    /// other positions a later suffix can exceed the expansion of 1, and the
    /// re-check reports it as [`Error::Inadmissible`].
    pub fn decrement_append(&self, w: &[u8], j: usize, eta: &BetaWord) -> Result<BetaWord> {
        if j == 0 || j > w.len() {
            return Err(Error::InvalidParameter(format!("position {j} outside 1..={}", w.len())));
        }
        if !self.parry_admissible(w)? {
            return Err(Error::Inadmissible(digits_string(w)));
        }
        if w[j - 1] == 0 {
            return Err(Error::CannotDecrement(j));
        }
        let mut out = w.to_vec();
        out[j - 1] -= 1;
        out.extend_from_slice(&eta.digits);
        self.word(out)
    }

    /// A word starting with `u` whose shift by `k` is `omega`.
    pub fn reach_target(&self, omega: &BetaWord, u: &[u8]) -> Result<(BetaWord, usize)> {
        if omega.digits.starts_with(u) {
            return Ok((omega.clone(), 0));
        }
        if !self.parry_admissible(u)? {
            return Err(Error::Inadmissible(digits_string(u)));
        }
        for k in u.len() + 1..=self.digits.max(u.len() + 1) {
            let mut bumped = u.to_vec();
            bumped.resize(k - 1, 0);
            bumped.push(1);
            match self.parry_admissible(&bumped) {
                Ok(true) => {}
                Ok(false) | Err(Error::DepthExceeded { .. }) => continue,
                Err(e) => return Err(e),
            }
            let mut eta = bumped;
            eta[k - 1] = 0;
            eta.extend_from_slice(&omega.digits);
            return Ok((self.word(eta)?, k));
        }
        Err(Error::NoRepresentative(self.digits))
    }
}

/// A digit word admissible for some β.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BetaWord {
    digits: Vec<u8>,
}

impl BetaWord {
    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn shifted(&self, k: usize) -> &[u8] {
        &self.digits[k.min(self.digits.len())..]
    }
}

pub fn digits_string(d: &[u8]) -> String {
    d.iter().map(|&x| std::char::from_digit(x as u32, 36).unwrap_or('?')).collect()
}

/// Σ d_j β^{-j}.
pub fn reconstruct(digits: &[u8], beta: f64) -> f64 {
    digits.iter().rev().fold(0.0, |acc, &d| (acc + d as f64) / beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_expansion(1.0, 1.8, 4).unwrap(), vec![1, 1, 0, 1]);
        assert_eq!(greedy_expansion(0.0, 1.8, 6).unwrap(), vec![0; 6]);
        assert!(greedy_expansion(0.4, 1.8, 0).unwrap().is_empty());
    }

    #[test]
    fn direct_iteration_oracle() {
        // 1 -> .8 -> .44 -> .792 -> .4256 -> .76608 in exact decimals.
        let mut x = 1.0f64;
        let mut digits = Vec::new();
        for _ in 0..6 {
            let v = 1.8 * x;
            digits.push(v.floor() as u8);
            x = v - v.floor();
        }
        assert_eq!(greedy_expansion(1.0, 1.8, 6).unwrap(), digits);
        assert_eq!(digits, vec![1, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn parry_examples() {
        let p = BetaParams::new(1.8, 40).unwrap();
        assert!(!p.parry_admissible(&[1, 1, 1]).unwrap());
        assert!(p.parry_admissible(&[0; 30]).unwrap());
        let g = greedy_expansion(0.7, 1.8, 10).unwrap();
        assert!(p.parry_admissible(&g).unwrap());
        assert!(p.parry_check(&[1, 1]).unwrap().boundary);
        assert!(matches!(p.parry_check(&[2]), Err(Error::SymbolOutOfRange { .. })));
    }

    #[test]
    fn golden_ratio_expansion_is_finite() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let p = BetaParams::new(phi, 64).unwrap();
        assert!(p.finite_expansion());
        assert_eq!(&p.expansion_of_one()[..4], &[1, 1, 0, 0]);
        assert!(!p.parry_admissible(&[0, 1, 1, 1]).unwrap());
        // Ties with the finite expansion count as admissible and are flagged.
        let tie = p.parry_check(&[0, 1, 1, 0]).unwrap();
        assert!(tie.admissible && tie.boundary);
        assert!(p.parry_admissible(&[1, 0, 1, 0, 1, 0, 0, 1]).unwrap());
    }

    #[test]
    fn integer_beta_is_full_shift() {
        let p = BetaParams::new(2.0, 16).unwrap();
        assert_eq!(p.max_digit(), 1);
        assert!(p.parry_admissible(&[1; 40]).unwrap());
    }

    #[test]
    fn depth_exceeded_when_cache_runs_out() {
        let p = BetaParams::new(1.8, 4).unwrap();
        assert_eq!(p.expansion_of_one(), &[1, 1, 0, 1]);
        assert!(matches!(p.parry_check(&[1, 1, 0, 1, 0]), Err(Error::DepthExceeded { .. })));
    }

    #[test]
    fn decrement_append_examples() {
        let p = BetaParams::new(1.8, 40).unwrap();
        let eta = p.word(greedy_expansion(0.3, 1.8, 8).unwrap()).unwrap();
        let one = p.decrement_append(&[1], 1, &eta).unwrap();
        assert_eq!(one.digits()[0], 0);
        assert_eq!(&one.digits()[1..], eta.digits());
        let two = p.decrement_append(&[1, 0], 1, &eta).unwrap();
        assert_eq!(&two.digits()[..2], &[0, 0]);
        assert_eq!(p.decrement_append(&[0, 0, 0], 2, &eta), Err(Error::CannotDecrement(2)));
    }

    #[test]
    fn reach_target_examples() {
        let p = BetaParams::new(1.8, 40).unwrap();
        let zeros = p.word(vec![0; 12]).unwrap();
        assert_eq!(p.reach_target(&zeros, &[0]).unwrap(), (zeros.clone(), 0));
        assert_eq!(p.reach_target(&zeros, &[]).unwrap(), (zeros.clone(), 0));
        let (eta, k) = p.reach_target(&zeros, &[1]).unwrap();
        assert_eq!(eta.digits()[0], 1);
        assert_eq!(eta.shifted(k), zeros.digits());
        assert!(p.parry_admissible(eta.digits()).unwrap());
    }

    #[test]
    fn reconstruction_bound() {
        for &beta in &[1.5, 1.8, 2.5] {
            for i in 0..50 {
                let x = i as f64 / 50.0;
                let d = match greedy_expansion(x, beta, 20) {
                    Ok(d) => d,
                    Err(Error::PrecisionExhausted { .. }) => continue,
                    Err(e) => panic!("{e}"),
                };
                let b = digit_bound(beta) as f64;
                assert!((reconstruct(&d, beta) - x).abs() <= beta.powi(-20) * (1.0 + b) + 1e-12);
            }
        }
    }
}
