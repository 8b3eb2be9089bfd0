//! Orbits whose empirical measures travel along a measure chain.
//!
//! The point first traces a generic word for μ on [0, N]. It then hops from
//! chain position to chain position: each hop glues a connector and a generic
//! word of the next waypoint, and lasts until a certified bound puts the
//! empirical measure close to that waypoint. Waypoints on other segments are
//! reached through the shared vertices, so every intermediate average stays
//! near a convex combination of points of a single segment.

use std::sync::Arc;

use serde::Serialize;

use super::generic_word;
use crate::error::{Error, Result};
use crate::measures::{
    dist_to_chain, dist_to_segment, empirical_measure, ratio_to_f64, weakstar_distance, ChainPoint,
    CylinderMeasure, MeasureChain,
};
use crate::shiftspace::{max_word_len, LazyPoint, Run, ShiftModel};
use crate::specification::{connect, mixing_gap};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathParams {
    pub eps: f64,
    /// End of the initial μ window; defaults to the computed threshold.
    pub n: Option<u64>,
    /// The final forward checkpoint N* must exceed this.
    pub min_end: u64,
    pub roundtrip: bool,
    pub metric_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopRecord {
    pub target: ChainPoint,
    pub segment: usize,
    pub word_len: usize,
    pub defect: f64,
    /// First coordinate of the generic word run.
    pub start: u64,
    /// Last coordinate of the run; also the hop's checkpoint.
    pub end: u64,
    pub goal: f64,
    /// Certified sup of the chain distance over the hop.
    pub chain_bound: f64,
    /// Certified distance to the target at `end`.
    pub target_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMarkers {
    pub eps: f64,
    /// Threshold N_ε^μ: from here on the μ window keeps 𝓔_n within ε/2 of μ.
    pub n_threshold: u64,
    pub n: u64,
    pub n_star: u64,
    pub t1: Option<u64>,
    pub t2: Option<u64>,
    pub mu_word_len: usize,
    pub mu_defect: f64,
    pub hops: Vec<HopRecord>,
    /// Largest certified chain distance over [N, end of construction].
    pub chain_bound: f64,
}

#[derive(Debug, Clone)]
pub struct PathOrbit {
    pub point: LazyPoint,
    pub markers: PathMarkers,
}

fn locate(chain: &MeasureChain, mu: &CylinderMeasure, depth: usize) -> Result<ChainPoint> {
    let d = dist_to_chain(mu, chain, depth)?;
    if !d.exact.eq(&super::zero_ratio()) {
        return Err(Error::OffChainMeasure(d.value));
    }
    Ok(d.witness)
}

/// Waypoints (target, segment shared with the previous position) from `p`
/// to `q` along the chain.
fn waypoints(chain: &MeasureChain, p: &ChainPoint, q: &ChainPoint) -> Vec<(ChainPoint, usize)> {
    let joints = chain.joints();
    let mut out = Vec::new();
    if p.segment < q.segment {
        for (i, joint) in joints.iter().enumerate().take(q.segment).skip(p.segment) {
            out.push((joint.0.clone(), i));
        }
    } else if p.segment > q.segment {
        for i in (q.segment..p.segment).rev() {
            out.push((joints[i].1.clone(), i + 1));
        }
    }
    out.push((q.clone(), q.segment));
    out
}

fn ceil_div_f64(num: f64, den: f64) -> Result<u64> {
    let v = (num / den).ceil();
    if !v.is_finite() || v >= u64::MAX as f64 / 4.0 {
        return Err(Error::HorizonCapExceeded { achieved: 0, attempted: 0 });
    }
    Ok(v.max(0.0) as u64)
}

/// Threshold from which a μ window alone keeps 𝓔_n within ε/2 of μ.
pub fn mu_threshold(model: &ShiftModel, chain: &MeasureChain, mu: &CylinderMeasure, eps: f64, depth: usize) -> Result<u64> {
    let l = max_word_len(model.q(), depth) as f64;
    let k = mixing_gap(model)?.k as f64;
    let p = locate(chain, mu, depth)?;
    let gen = generic_word(model, &chain.point(&p)?, eps / 12.0, depth)?;
    let w = gen.word.len() as f64;
    Ok(ceil_div_f64(w + l, eps / 2.0 - gen.defect)?.max(ceil_div_f64(12.0 * (k + w + l), eps)?))
}

/// The smallest admissible N for a path (or roundtrip) from μ to α.
pub fn path_threshold(
    model: &ShiftModel,
    chain: &MeasureChain,
    mu: &CylinderMeasure,
    alpha: &CylinderMeasure,
    eps: f64,
    roundtrip: bool,
    depth: usize,
) -> Result<u64> {
    let params = PathParams { eps, n: None, min_end: 0, roundtrip, metric_depth: depth };
    Ok(lemma_path_orbit(model, chain, mu, alpha, &params)?.markers.n_threshold)
}

/// Builds an orbit whose empirical measures are near μ on [N_ε^μ, N], stay
/// near the chain up to N*, and are near α at N*. With `roundtrip`, the orbit
/// continues back to μ, with t₁ = N* and 𝓔_{t₂} near μ.
pub fn lemma_path_orbit(
    model: &ShiftModel,
    chain: &MeasureChain,
    mu: &CylinderMeasure,
    alpha: &CylinderMeasure,
    params: &PathParams,
) -> Result<PathOrbit> {
    let depth = params.metric_depth;
    let eps = params.eps;
    let bound = (-(depth as f64)).exp2();
    if !(eps > bound) {
        return Err(Error::EpsilonTooSmall { eps, bound });
    }
    let q = model.q();
    let l = max_word_len(q, depth) as u64;
    let m = mu.depth();
    if (m as u64) < l {
        return Err(Error::DepthExceeded { needed: l as usize, depth: m });
    }
    let k = mixing_gap(model)?.k;
    let g = eps / 12.0;

    let p_mu = locate(chain, mu, depth)?;
    let p_alpha = locate(chain, alpha, depth)?;
    let mu_on_chain = chain.point(&p_mu)?;
    let gen_mu = generic_word(model, &mu_on_chain, g, depth)?;

    let mut legs = vec![waypoints(chain, &p_mu, &p_alpha)];
    if params.roundtrip {
        legs.push(waypoints(chain, &p_alpha, &p_mu));
    }
    let mut gens = Vec::new();
    for leg in &legs {
        let mut row = Vec::new();
        for (cp, _) in leg {
            let target = chain.point(cp)?;
            let gw = generic_word(model, &target, g, depth)?;
            row.push((target, gw));
        }
        gens.push(row);
    }
    let max_w = gens.iter().flatten().map(|(_, gw)| gw.word.len()).chain([gen_mu.word.len()]).max().unwrap() as f64;
    let n_threshold = ceil_div_f64(gen_mu.word.len() as f64 + l as f64, eps / 2.0 - gen_mu.defect)?
        .max(ceil_div_f64(12.0 * (k as f64 + max_w + l as f64), eps)?);
    let n = params.n.unwrap_or(n_threshold);
    if n < n_threshold {
        return Err(Error::InvalidParameter(format!("N = {n} is below the threshold {n_threshold}")));
    }

    let mut runs = vec![Run::periodic(0, Arc::from(gen_mu.word.symbols()), 0)];
    let mut cur_end = n;
    let mut last_symbol = gen_mu.word.symbols()[(n % gen_mu.word.len() as u64) as usize];
    let mut hops = Vec::new();
    let mut ends = Vec::new();
    let mut chain_bound: f64 = 0.0;
    for (leg_idx, leg) in legs.iter().enumerate() {
        for (j, ((cp, seg), (target, gw))) in leg.iter().zip(&gens[leg_idx]).enumerate() {
            let last_in_leg = j + 1 == leg.len();
            let word: Arc<[u8]> = Arc::from(gw.word.symbols());
            let conn = connect(model, last_symbol, word[0], (k - 1) as usize)?;
            let start = cur_end + k;
            let mut trial = runs.clone();
            if !conn.is_empty() {
                trial.push(Run::periodic(cur_end + 1, Arc::from(conn.symbols()), 0));
            }
            trial.push(Run::periodic(start, word.clone(), 0));
            let point = LazyPoint::from_runs(q, trial.clone())?;

            let e_prev = empirical_measure(&point, cur_end, m)?;
            let conn_bound =
                dist_to_chain(&e_prev, chain, depth)?.value + (start - cur_end + l) as f64 / cur_end as f64;
            let e_start = empirical_measure(&point, start, m)?;
            let segment = &chain.segments()[*seg];
            let a = ratio_to_f64(&dist_to_segment(&e_start, segment, depth)?.0);
            let d0 = weakstar_distance(&e_start, target, depth)?.value;
            let wl = gw.word.len() as f64;
            let hop_bound = a + (wl + l as f64) / start as f64 + gw.defect;
            let goal = if last_in_leg { eps / 2.0 } else { eps / 4.0 };
            let mut end = ceil_div_f64(start as f64 * d0 + wl + l as f64, goal - gw.defect)?.max(start + l);
            if leg_idx == 0 && last_in_leg {
                end = end.max(params.min_end + 1);
            }
            let target_bound = (start as f64 * d0 + wl + l as f64) / end as f64 + gw.defect;
            let worst = hop_bound.max(conn_bound);
            if worst >= eps {
                return Err(Error::CertificationFailed(format!(
                    "chain bound {worst} on hop toward segment {seg} is not below {eps}"
                )));
            }
            chain_bound = chain_bound.max(worst);
            hops.push(HopRecord {
                target: cp.clone(),
                segment: *seg,
                word_len: gw.word.len(),
                defect: gw.defect,
                start,
                end,
                goal,
                chain_bound: worst,
                target_bound,
            });
            runs = trial;
            last_symbol = word[((end - start) % word.len() as u64) as usize];
            cur_end = end;
        }
        ends.push(cur_end);
    }
    let point = LazyPoint::from_runs(q, runs)?.with_horizon_hint(cur_end);
    let n_star = ends[0];
    let markers = PathMarkers {
        eps,
        n_threshold,
        n,
        n_star,
        t1: params.roundtrip.then_some(n_star),
        t2: params.roundtrip.then(|| ends[1]),
        mu_word_len: gen_mu.word.len(),
        mu_defect: gen_mu.defect,
        hops,
        chain_bound,
    };
    Ok(PathOrbit { point, markers })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::shiftspace::SymbolWord;
    use crate::measures::{convex_combine, periodic_measure, ratio};

    fn w(s: &str) -> SymbolWord {
        SymbolWord::parse(s).unwrap()
    }

    fn audit_grid(lo: u64, hi: u64) -> Vec<u64> {
        let mut g: Vec<u64> = (0..=200).map(|i| lo + (hi - lo) * i / 200).collect();
        g.dedup();
        g
    }

    #[test]
    fn singleton_chain_stays_at_mu() {
        let m = ShiftModel::full(2).unwrap();
        let mu = periodic_measure(&m, &w("01"), 4).unwrap();
        let chain = MeasureChain::singleton(mu.clone()).unwrap();
        let params = PathParams { eps: 0.1, n: None, min_end: 0, roundtrip: false, metric_depth: 24 };
        let orbit = lemma_path_orbit(&m, &chain, &mu, &mu, &params).unwrap();
        let mk = &orbit.markers;
        for n in audit_grid(mk.n_threshold, mk.n_star) {
            let e = empirical_measure(&orbit.point, n, 4).unwrap();
            assert!(weakstar_distance(&e, &mu, 24).unwrap().value <= 0.1, "n={n}");
        }
    }

    #[test]
    fn roundtrip_on_segment() {
        let m = ShiftModel::full(2).unwrap();
        let zero = periodic_measure(&m, &w("0"), 4).unwrap();
        let alt = periodic_measure(&m, &w("01"), 4).unwrap();
        let chain = MeasureChain::path(vec![zero.clone(), alt.clone()]).unwrap();
        let eps = 0.1;
        let params = PathParams { eps, n: None, min_end: 0, roundtrip: true, metric_depth: 24 };
        let orbit = lemma_path_orbit(&m, &chain, &alt, &zero, &params).unwrap();
        let mk = &orbit.markers;
        let (t1, t2) = (mk.t1.unwrap(), mk.t2.unwrap());
        assert!(mk.n < t1 && t1 < t2);
        let e1 = empirical_measure(&orbit.point, t1, 4).unwrap();
        assert!(weakstar_distance(&e1, &zero, 24).unwrap().value <= eps);
        let e2 = empirical_measure(&orbit.point, t2, 4).unwrap();
        assert!(weakstar_distance(&e2, &alt, 24).unwrap().value <= eps);
        for n in audit_grid(mk.n, t2) {
            let e = empirical_measure(&orbit.point, n, 4).unwrap();
            assert!(dist_to_chain(&e, &chain, 24).unwrap().value <= eps, "n={n}");
        }
        for n in audit_grid(mk.n_threshold, mk.n) {
            let e = empirical_measure(&orbit.point, n, 4).unwrap();
            assert!(weakstar_distance(&e, &alt, 24).unwrap().value <= eps, "n={n}");
        }
    }

    #[test]
    fn multi_segment_route() {
        let g = ShiftModel::golden_mean();
        let a = periodic_measure(&g, &w("0"), 4).unwrap();
        let b = periodic_measure(&g, &w("01"), 4).unwrap();
        let c = periodic_measure(&g, &w("001"), 4).unwrap();
        let chain = MeasureChain::path(vec![a.clone(), b.clone(), c.clone()]).unwrap();
        let start = convex_combine(&a, &b, &ratio(1, 2)).unwrap();
        let params = PathParams { eps: 0.1, n: None, min_end: 0, roundtrip: false, metric_depth: 24 };
        let orbit = lemma_path_orbit(&g, &chain, &start, &c, &params).unwrap();
        assert_eq!(orbit.markers.hops.len(), 2);
        let x = orbit.point.orbit_window(0, orbit.markers.n_star).unwrap();
        assert!(g.word_admissible(&x).unwrap());
        let e = empirical_measure(&orbit.point, orbit.markers.n_star, 4).unwrap();
        assert!(weakstar_distance(&e, &c, 24).unwrap().value <= 0.1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = ShiftModel::full(2).unwrap();
        let mu = periodic_measure(&m, &w("01"), 4).unwrap();
        let chain = MeasureChain::singleton(mu.clone()).unwrap();
        let zero = PathParams { eps: 0.0, n: None, min_end: 0, roundtrip: false, metric_depth: 24 };
        assert!(matches!(lemma_path_orbit(&m, &chain, &mu, &mu, &zero), Err(Error::EpsilonTooSmall { .. })));
        let off = periodic_measure(&m, &w("0"), 4).unwrap();
        let ok = PathParams { eps: 0.1, ..zero };
        assert!(matches!(lemma_path_orbit(&m, &chain, &off, &mu, &ok), Err(Error::OffChainMeasure(_))));
    }
}
