//! Interleaved block orbits that shadow two distal pairs.

use std::sync::Arc;

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use super::DistalPair;
use crate::error::{Error, Result};
use crate::measures::{convex_combine, ratio_to_f64, CylinderMeasure};
use crate::shiftspace::{cylinder_index, max_word_len, prefix_distance, LazyPoint, Run, ShiftModel};
use crate::specification::{connect, mixing_gap};

pub const DEFAULT_THETA_CAP: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct MuPairParams {
    pub theta: BigRational,
    pub eps: f64,
    pub delta: f64,
    pub metric_depth: usize,
    pub theta_cap: u64,
}

#[derive(Debug, Clone)]
pub struct MuPair {
    pub x1: LazyPoint,
    pub x2: LazyPoint,
    /// Clauses hold for every n > `n`.
    pub n: u64,
    pub block: u64,
    pub gap: u64,
    pub reps: u64,
    pub s: u64,
    pub t: u64,
    pub zeta: f64,
    pub eps: f64,
    pub delta: f64,
    pub metric_depth: usize,
    pub target: CylinderMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuPairAudit {
    pub horizon: u64,
    pub audited: u64,
    pub max_close_fraction: f64,
    pub max_distance: [f64; 2],
    pub measure_bound: f64,
    pub clause_a: bool,
    pub clause_b: bool,
}

impl MuPairAudit {
    pub fn passed(&self) -> bool {
        self.clause_a && self.clause_b
    }
}

fn theta_split(theta: &BigRational, cap: u64) -> Result<(u64, u64)> {
    if theta.is_negative() || theta > &BigRational::from_integer(1.into()) {
        return Err(Error::ThetaOutOfRange(theta.to_string()));
    }
    let den = theta.denom().to_u64().unwrap_or(u64::MAX);
    if den > cap {
        return Err(Error::ThetaDenominatorTooLarge(den, cap));
    }
    let s = theta.numer().to_u64().unwrap_or(0);
    Ok((s, den - s))
}

fn block_word(model: &ShiftModel, x: &LazyPoint, m: u64, next: u8, gap: u64) -> Result<Vec<u8>> {
    let mut out = x.orbit_window(0, m)?.into_symbols();
    let conn = connect(model, *out.last().unwrap(), next, (gap - 1) as usize)?;
    out.extend_from_slice(conn.symbols());
    Ok(out)
}

/// Builds x₁ (tracing p₁, p₂) and x₂ (tracing q₁, q₂) from s blocks of the
/// first pair followed by t blocks of the second, θ = s/(s+t).
pub fn lemma_mu_pair(
    model: &ShiftModel,
    mu1: &CylinderMeasure,
    mu2: &CylinderMeasure,
    pairs: (&DistalPair, &DistalPair),
    params: &MuPairParams,
) -> Result<MuPair> {
    let (eps, delta) = (params.eps, params.delta);
    let zeta = pairs.0.zeta.min(pairs.1.zeta);
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("ε = {eps} must be positive")));
    }
    if eps >= zeta {
        return Err(Error::EpsilonExceedsZeta { eps, zeta });
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("δ = {delta} must be positive")));
    }
    let (s, t) = theta_split(&params.theta, params.theta_cap)?;
    let q = model.q();
    let k = mixing_gap(model)?.k;
    let l = max_word_len(q, params.metric_depth) as u64;
    let wmax = pairs.0.word.len().max(pairs.1.word.len()) as f64;
    let m = [(2.0 * wmax / eps).floor() + 1.0, 4.0 * k as f64 / delta, 4.0 * (k + l) as f64 / delta]
        .into_iter()
        .fold(0.0f64, f64::max)
        .floor() as u64
        + 1;
    let reps = (4.0 / delta).floor() as u64 + 1;

    let sides = [(&pairs.0.p, &pairs.1.p), (&pairs.0.q, &pairs.1.q)];
    let mut points = Vec::with_capacity(2);
    for (a, b) in sides {
        let mut seq: Vec<&LazyPoint> = vec![a; s as usize];
        seq.extend(std::iter::repeat(b).take(t as usize));
        let mut period = Vec::with_capacity((seq.len() as u64 * (m + k)) as usize);
        for (i, x) in seq.iter().enumerate() {
            let next = seq[(i + 1) % seq.len()].coord(0)?;
            period.extend(block_word(model, x, m, next, k)?);
        }
        points.push(LazyPoint::from_runs(q, vec![Run::periodic(0, Arc::from(period), 0)])?);
    }
    let x2 = points.pop().unwrap();
    let x1 = points.pop().unwrap();
    let target = convex_combine(mu1, mu2, &params.theta)?;
    let n = reps
        .checked_mul((s + t) * (m + k))
        .ok_or(Error::HorizonCapExceeded { achieved: 0, attempted: 0 })?;
    Ok(MuPair {
        x1,
        x2,
        n,
        block: m,
        gap: k,
        reps,
        s,
        t,
        zeta,
        eps,
        delta,
        metric_depth: params.metric_depth,
        target,
    })
}

impl MuPair {
    /// Streams every n in (N, horizon] and checks both clauses.
    pub fn audit(&self, horizon: u64) -> Result<MuPairAudit> {
        let depth = self.metric_depth;
        let q = self.x1.q();
        let l = max_word_len(q, depth) as u64;
        let period = (self.s + self.t) * (self.block + self.gap);
        let target: Vec<f64> = (0..depth)
            .map(|i| ratio_to_f64(&self.target_weights()[i]))
            .collect();
        let mut coords = [Vec::new(), Vec::new()];
        self.x1.extend_coords(0, period + l, &mut coords[0])?;
        self.x2.extend_coords(0, period + l, &mut coords[1])?;
        let codes: Vec<Vec<Vec<usize>>> = coords
            .iter()
            .map(|c| {
                (0..period as usize)
                    .map(|i| {
                        (1..=l as usize)
                            .map(|len| cylinder_index(q, &c[i..i + len]) as usize)
                            .filter(|&k| k <= depth)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let close: Vec<bool> = (0..period as usize)
            .map(|i| {
                let d = prefix_distance(q, depth, &coords[0][i..i + l as usize], &coords[1][i..i + l as usize]);
                d < self.zeta - self.eps
            })
            .collect();
        let bound = self.eps + self.delta + (-(depth as f64)).exp2();
        let mut counts = [vec![0u64; depth + 1], vec![0u64; depth + 1]];
        let mut close_count = 0u64;
        let mut audit = MuPairAudit {
            horizon,
            audited: 0,
            max_close_fraction: 0.0,
            max_distance: [0.0; 2],
            measure_bound: bound,
            clause_a: true,
            clause_b: true,
        };
        for i in 0..horizon {
            let j = (i % period) as usize;
            for side in 0..2 {
                for &k in &codes[side][j] {
                    counts[side][k] += 1;
                }
            }
            close_count += close[j] as u64;
            let n = i + 1;
            if n <= self.n {
                continue;
            }
            audit.audited += 1;
            let frac = close_count as f64 / n as f64;
            audit.max_close_fraction = audit.max_close_fraction.max(frac);
            audit.clause_b &= frac < self.delta;
            for side in 0..2 {
                let d: f64 = (0..depth)
                    .map(|i| (counts[side][i + 1] as f64 / n as f64 - target[i]).abs() * (-((i + 1) as f64)).exp2())
                    .sum();
                audit.max_distance[side] = audit.max_distance[side].max(d);
                audit.clause_a &= d <= bound;
            }
        }
        Ok(audit)
    }

    fn target_weights(&self) -> Vec<BigRational> {
        let q = self.target.q();
        (1..=self.metric_depth as u64)
            .map(|k| {
                self.target
                    .weight(&crate::shiftspace::cylinder_word(q, k))
                    .cloned()
                    .unwrap_or_else(|_| BigRational::zero())
            })
            .collect()
    }

    /// θ as (s, s + t) in lowest terms.
    pub fn theta(&self) -> (u64, u64) {
        let g = self.s.gcd(&(self.s + self.t)).max(1);
        (self.s / g, (self.s + self.t) / g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::distal_pair_from_periodic;
    use crate::measures::{periodic_measure, ratio};
    use crate::shiftspace::SymbolWord;

    fn w(s: &str) -> SymbolWord {
        SymbolWord::parse(s).unwrap()
    }

    fn params(theta: BigRational, eps: f64) -> MuPairParams {
        MuPairParams { theta, eps, delta: 0.25, metric_depth: 24, theta_cap: DEFAULT_THETA_CAP }
    }

    #[test]
    fn single_pair_separation() {
        let m = ShiftModel::full(2).unwrap();
        let mu = periodic_measure(&m, &w("01"), 4).unwrap();
        let pair = distal_pair_from_periodic(&m, &w("01"), 1, 24).unwrap();
        let out = lemma_mu_pair(&m, &mu, &mu, (&pair, &pair), &params(ratio(1, 1), 0.1)).unwrap();
        let audit = out.audit(20_000).unwrap();
        assert!(audit.audited > 0);
        assert!(audit.clause_b, "{audit:?}");
        assert!(audit.max_close_fraction < 0.25);
        assert!(audit.clause_a, "{audit:?}");
    }

    #[test]
    fn golden_mean_midpoint() {
        let g = ShiftModel::golden_mean();
        let mu1 = periodic_measure(&g, &w("01"), 4).unwrap();
        let mu2 = periodic_measure(&g, &w("001"), 4).unwrap();
        let p1 = distal_pair_from_periodic(&g, &w("01"), 1, 24).unwrap();
        let p2 = distal_pair_from_periodic(&g, &w("001"), 1, 24).unwrap();
        let eps = 0.1f64.min(p1.zeta.min(p2.zeta) / 2.0);
        let out = lemma_mu_pair(&g, &mu1, &mu2, (&p1, &p2), &params(ratio(1, 2), eps)).unwrap();
        for x in [&out.x1, &out.x2] {
            let win = x.orbit_window(0, 2 * (out.block + out.gap) * 2).unwrap();
            assert!(g.word_admissible(&win).unwrap());
        }
        let audit = out.audit(30_000).unwrap();
        assert!(audit.passed(), "{audit:?}");
        let doubled = out.audit(60_000).unwrap();
        assert!(doubled.max_close_fraction >= audit.max_close_fraction);
        assert!(doubled.passed());
    }

    #[test]
    fn rejects_bad_parameters() {
        let m = ShiftModel::full(2).unwrap();
        let mu = periodic_measure(&m, &w("01"), 4).unwrap();
        let pair = distal_pair_from_periodic(&m, &w("01"), 1, 24).unwrap();
        let big = params(ratio(1, 1), pair.zeta);
        assert!(matches!(
            lemma_mu_pair(&m, &mu, &mu, (&pair, &pair), &big),
            Err(Error::EpsilonExceedsZeta { .. })
        ));
        let fine = params(ratio(1, 101), 0.1);
        assert!(matches!(
            lemma_mu_pair(&m, &mu, &mu, (&pair, &pair), &fine),
            Err(Error::ThetaDenominatorTooLarge(101, 64))
        ));
    }
}
