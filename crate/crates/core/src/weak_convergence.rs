//! Statistical diagnostics for weak convergence of path laws: single-time
//! marginals by two-sample KS, two-time moments against the semigroup
//! product formula, the δ-modulus of continuity against its Brownian bound,
//! and the conditions on the initial laws.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form_assembly::DiscreteForm;
use crate::path_sim::{path_rng, InitialLaw, Path, PathEnsemble};
use crate::scale_measure::{ScaleFunction, SpeedMeasure};
use crate::semigroup_mosco::{Scheme, SemigroupEvolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub stat: f64,
    pub critical_5pct: f64,
}

pub fn ks_critical_5pct(nx: usize, ny: usize) -> f64 {
    let (nx, ny) = (nx as f64, ny as f64);
    1.358 * ((nx + ny) / (nx * ny)).sqrt()
}

/// `sup |F̂_x - F̂_y|` over the pooled sample; ties are stepped over together.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut stat: f64 = 0.0;
    while i < na && j < nb {
        let v = a[i].min(b[j]);
        while i < na && a[i] <= v {
            i += 1;
        }
        while j < nb && b[j] <= v {
            j += 1;
        }
        stat = stat.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    Ok(KsResult { stat, critical_5pct: ks_critical_5pct(na, nb) })
}

/// Semigroup side of the two-time identity
/// `E[f_0(Z_{t_0}) f_1(Z_{t_1})] = ⟨p, T_{t_0}(f_0 · T_{t_1 - t_0} f_1)⟩`.
pub fn semigroup_product_moment(
    form: &DiscreteForm,
    initial_probs: &[f64],
    f0: &[f64],
    f1: &[f64],
    t0: f64,
    t1: f64,
) -> Result<f64> {
    if t1 < t0 {
        return Err(Error::InvalidArgument(format!("t1 = {t1} before t0 = {t0}")));
    }
    let ev = SemigroupEvolver::new(form.clone(), Scheme::CrankNicolson);
    let inner = ev.evolve(f1, t1 - t0)?;
    let g: Vec<f64> = f0.iter().zip(&inner).map(|(a, b)| a * b).collect();
    let outer = ev.evolve(&g, t0)?;
    Ok(initial_probs.iter().zip(&outer).map(|(p, v)| p * v).sum())
}

/// Monte-Carlo mean of `f_0(Z_{t_0}) f_1(Z_{t_1})` and its standard error.
pub fn mc_product_moment(
    ens: &PathEnsemble,
    f0: &dyn Fn(f64) -> f64,
    f1: &dyn Fn(f64) -> f64,
    t0: f64,
    t1: f64,
) -> Result<(f64, f64)> {
    let a = ens.values_at(t0)?;
    let b = ens.values_at(t1)?;
    let samples: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| f0(x) * f1(y)).collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Inputs for the semigroup cross-check: one form and initial state law per
/// family ensemble, and the two test functions of the `Z`-value.
pub struct SemigroupOracle<'a> {
    pub forms: &'a [DiscreteForm],
    pub initial_probs: Vec<Vec<f64>>,
    pub f0: &'a (dyn Fn(f64) -> f64 + Sync),
    pub f1: &'a (dyn Fn(f64) -> f64 + Sync),
    pub t0: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub n: usize,
    pub t0: f64,
    pub t1: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub oracle: f64,
    /// `|mc_mean - oracle| / mc_se`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FddReport {
    pub time_vector: Vec<f64>,
    /// `ks_stats[n][t]` against the limit ensemble.
    pub ks_stats: Vec<Vec<f64>>,
    pub thresholds: Vec<Vec<f64>>,
    pub moments: Vec<MomentCheck>,
    /// Every final-`n` statistic is below its critical value.
    pub pass: bool,
}

impl FddReport {
    /// `n,statistic,parameters,value,threshold,pass` rows; `slack` scales the
    /// KS thresholds and `z_max` bounds the moment z-scores.
    pub fn to_csv(&self, labels: &[u32], slack: f64, z_max: f64) -> String {
        let mut out = String::from("n,statistic,parameters,value,threshold,pass\n");
        for (k, (stats, crits)) in self.ks_stats.iter().zip(&self.thresholds).enumerate() {
            let n = labels.get(k).copied().unwrap_or(k as u32 + 1);
            for ((t, s), c) in self.time_vector.iter().zip(stats).zip(crits) {
                let th = slack * c;
                out.push_str(&format!("{n},ks,t={t},{s:.6},{th:.6},{}\n", s <= &th));
            }
        }
        for m in &self.moments {
            let n = labels.get(m.n).copied().unwrap_or(m.n as u32 + 1);
            out.push_str(&format!(
                "{n},moment_z,t0={};t1={};mc={:.6};oracle={:.6};se={:.6},{:.4},{z_max},{}\n",
                m.t0,
                m.t1,
                m.mc_mean,
                m.oracle,
                m.mc_se,
                m.z,
                m.z <= z_max
            ));
        }
        out
    }
}

pub fn fdd_convergence_suite(
    family_ens: &[PathEnsemble],
    limit_ens: &PathEnsemble,
    times: &[f64],
    oracle: Option<&SemigroupOracle<'_>>,
) -> Result<FddReport> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    for ens in family_ens.iter().chain(std::iter::once(limit_ens)) {
        if t_max > ens.horizon {
            return Err(Error::HorizonExceeded { requested: t_max, available: ens.horizon });
        }
    }
    let limit_samples: Vec<Vec<f64>> = times.iter().map(|&t| limit_ens.values_at(t)).collect::<Result<_>>()?;
    let mut ks_stats = Vec::with_capacity(family_ens.len());
    let mut thresholds = Vec::with_capacity(family_ens.len());
    for ens in family_ens {
        let mut row = Vec::with_capacity(times.len());
        let mut crit = Vec::with_capacity(times.len());
        for (&t, lim) in times.iter().zip(&limit_samples) {
            let r = ks_two_sample(&ens.values_at(t)?, lim)?;
            row.push(r.stat);
            crit.push(r.critical_5pct);
        }
        ks_stats.push(row);
        thresholds.push(crit);
    }

    let mut moments = Vec::new();
    if let Some(o) = oracle {
        if o.forms.len() != family_ens.len() || o.initial_probs.len() != family_ens.len() {
            return Err(Error::DimensionMismatch { expected: family_ens.len(), got: o.forms.len() });
        }
        let available = family_ens.iter().map(|e| e.horizon).fold(f64::INFINITY, f64::min);
        if o.t1 > available {
            return Err(Error::HorizonExceeded { requested: o.t1, available });
        }
        moments = family_ens
            .par_iter()
            .enumerate()
            .map(|(n, ens)| {
                let (mc_mean, mc_se) = mc_product_moment(ens, o.f0, o.f1, o.t0, o.t1)?;
                let f0: Vec<f64> = ens.state_values.iter().map(|&v| (o.f0)(v)).collect();
                let f1: Vec<f64> = ens.state_values.iter().map(|&v| (o.f1)(v)).collect();
                let value = semigroup_product_moment(&o.forms[n], &o.initial_probs[n], &f0, &f1, o.t0, o.t1)?;
                let z = if mc_se > 0.0 {
                    (mc_mean - value).abs() / mc_se
                } else if (mc_mean - value).abs() < 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                Ok(MomentCheck { n, t0: o.t0, t1: o.t1, mc_mean, mc_se, oracle: value, z })
            })
            .collect::<Result<_>>()?;
    }
    let pass = match (ks_stats.last(), thresholds.last()) {
        (Some(s), Some(c)) => s.iter().zip(c).all(|(a, b)| a < b),
        _ => true,
    };
    Ok(FddReport { time_vector: times.to_vec(), ks_stats, thresholds, moments, pass })
}

/// Segment start times and values up to `horizon`.
fn segments(path: &Path, values: &[f64], horizon: f64) -> (Vec<f64>, Vec<f64>) {
    let k = path.times.partition_point(|&t| t <= horizon).max(1);
    let starts = path.times[..k].to_vec();
    let vals = path.states[..k].iter().map(|&s| values[s as usize]).collect();
    (starts, vals)
}

/// `sup_{0 ≤ s < t ≤ T, t - s < δ} |Z_t - Z_s|` on a jump path, by a sliding
/// window over segments: segments `i < j` are reachable iff
/// `τ_j - τ_{i+1} < δ` and `τ_j ≤ T`.
pub fn path_modulus(path: &Path, values: &[f64], horizon: f64, delta: f64) -> f64 {
    let (tau, v) = segments(path, values, horizon);
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best: f64 = 0.0;
    let mut lo = 0;
    for j in 1..v.len() {
        let i = j - 1;
        while maxq.back().is_some_and(|&b| v[b] <= v[i]) {
            maxq.pop_back();
        }
        maxq.push_back(i);
        while minq.back().is_some_and(|&b| v[b] >= v[i]) {
            minq.pop_back();
        }
        minq.push_back(i);
        while !(tau[j] - tau[lo + 1] < delta) {
            lo += 1;
        }
        while maxq.front().is_some_and(|&f| f < lo) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&f| f < lo) {
            minq.pop_front();
        }
        let hi_v = v[*maxq.front().expect("window holds j - 1")];
        let lo_v = v[*minq.front().expect("window holds j - 1")];
        best = best.max(hi_v - v[j]).max(v[j] - lo_v);
    }
    best
}

/// Double loop over all segment pairs with the same reachability rule.
pub fn path_modulus_brute(path: &Path, values: &[f64], horizon: f64, delta: f64) -> f64 {
    let (tau, v) = segments(path, values, horizon);
    let mut best: f64 = 0.0;
    for j in 1..v.len() {
        for i in 0..j {
            if tau[j] - tau[i + 1] < delta {
                best = best.max((v[j] - v[i]).abs());
            }
        }
    }
    best
}

/// Fraction of paths whose δ-modulus on `[0, T]` reaches `ρ`.
pub fn modulus_statistic(ens: &PathEnsemble, horizon: f64, delta: f64, rho: f64) -> Result<f64> {
    check_modulus_args(horizon, delta, rho)?;
    if horizon > ens.horizon {
        return Err(Error::HorizonExceeded { requested: horizon, available: ens.horizon });
    }
    if ens.is_empty() {
        return Err(Error::EmptySample);
    }
    let hits = ens.paths.par_iter().filter(|p| path_modulus(p, &ens.state_values, horizon, delta) >= rho).count();
    Ok(hits as f64 / ens.len() as f64)
}

pub fn modulus_statistic_brute(ens: &PathEnsemble, horizon: f64, delta: f64, rho: f64) -> Result<f64> {
    check_modulus_args(horizon, delta, rho)?;
    if ens.is_empty() {
        return Err(Error::EmptySample);
    }
    let hits = ens.paths.iter().filter(|p| path_modulus_brute(p, &ens.state_values, horizon, delta) >= rho).count();
    Ok(hits as f64 / ens.len() as f64)
}

fn check_modulus_args(horizon: f64, delta: f64, rho: f64) -> Result<()> {
    if !(horizon > 0.0 && delta > 0.0 && rho > 0.0) {
        return Err(Error::InvalidArgument(format!("T = {horizon}, δ = {delta}, ρ = {rho} must be positive")));
    }
    Ok(())
}

pub const BROWNIAN_SUBSTEPS: usize = 64;

/// Monte-Carlo estimate of
/// `P(sup_{0 ≤ s < t ≤ CT, t - s < Cδ} |B_t - B_s| ≥ ρ)` on a grid of step
/// `Cδ/64`.
pub fn brownian_modulus_bound(c: f64, horizon: f64, delta: f64, rho: f64, n_mc: usize, seed: u64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("C = {c} must be positive and finite")));
    }
    check_modulus_args(horizon, delta, rho)?;
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be positive".into()));
    }
    let h = c * delta / BROWNIAN_SUBSTEPS as f64;
    let steps = ((c * horizon) / h).ceil() as usize;
    let sd = h.sqrt();
    let hits = (0..n_mc as u64)
        .into_par_iter()
        .filter(|&k| {
            let mut rng = path_rng(seed, k);
            let mut maxq: VecDeque<(usize, f64)> = VecDeque::new();
            let mut minq: VecDeque<(usize, f64)> = VecDeque::new();
            let mut b = 0.0;
            for idx in 0..=steps {
                if idx > 0 {
                    let z: f64 = rng.sample(StandardNormal);
                    b += sd * z;
                }
                // pairs closer than Cδ are at most 63 steps apart
                while maxq.front().is_some_and(|&(i, _)| i + BROWNIAN_SUBSTEPS <= idx) {
                    maxq.pop_front();
                }
                while minq.front().is_some_and(|&(i, _)| i + BROWNIAN_SUBSTEPS <= idx) {
                    minq.pop_front();
                }
                if let (Some(&(_, hi)), Some(&(_, lo))) = (maxq.front(), minq.front()) {
                    if hi - b >= rho || b - lo >= rho {
                        return true;
                    }
                }
                while maxq.back().is_some_and(|&(_, v)| v <= b) {
                    maxq.pop_back();
                }
                maxq.push_back((idx, b));
                while minq.back().is_some_and(|&(_, v)| v >= b) {
                    minq.pop_back();
                }
                minq.push_back((idx, b));
            }
            false
        })
        .count();
    Ok(hits as f64 / n_mc as f64)
}

/// `C = sup ds̊/dm` over the cells of `(lo, hi)` cut by the knots of `s0`
/// and the breaks of `m`; atoms are ignored.
pub fn sup_phi(s0: &ScaleFunction, m: &SpeedMeasure, lo: f64, hi: f64) -> f64 {
    let mut pts: Vec<f64> = s0.knot_xs().chain(m.interior_points(lo, hi)).filter(|&x| x > lo && x < hi).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let slope = s0.slope_at(mid);
            let rho = m.density_at(mid);
            if slope == 0.0 {
                0.0
            } else if rho == 0.0 {
                f64::INFINITY
            } else {
                slope / rho
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub delta: f64,
    pub rho: f64,
    pub empirical_prob: Vec<f64>,
    pub n_paths: Vec<usize>,
    pub brownian_bound: f64,
    pub n_mc: usize,
    #[serde(rename = "C")]
    pub c: f64,
}

impl ModulusReport {
    /// `2·bound + 3·se` for each ensemble, with `se` the binomial standard
    /// error of the empirical probability plus twice that of the bound.
    pub fn dominating_values(&self) -> Vec<f64> {
        let b = self.brownian_bound;
        let se_b = (b * (1.0 - b) / self.n_mc as f64).sqrt();
        self.empirical_prob
            .iter()
            .zip(&self.n_paths)
            .map(|(&p, &n)| {
                let se = (p * (1.0 - p) / n as f64).sqrt() + 2.0 * se_b;
                2.0 * b + 3.0 * se
            })
            .collect()
    }

    pub fn dominated(&self) -> Vec<bool> {
        self.empirical_prob.iter().zip(self.dominating_values()).map(|(p, d)| *p <= d).collect()
    }
}

pub fn modulus_report(
    family_ens: &[PathEnsemble],
    c: f64,
    horizon: f64,
    delta: f64,
    rho: f64,
    n_mc: usize,
    seed: u64,
) -> Result<ModulusReport> {
    let empirical_prob = family_ens.iter().map(|e| modulus_statistic(e, horizon, delta, rho)).collect::<Result<_>>()?;
    Ok(ModulusReport {
        horizon,
        delta,
        rho,
        empirical_prob,
        n_paths: family_ens.iter().map(|e| e.len()).collect(),
        brownian_bound: brownian_modulus_bound(c, horizon, delta, rho, n_mc, seed)?,
        n_mc,
        c,
    })
}

pub fn modulus_reports_csv(reports: &[ModulusReport], labels: &[u32]) -> String {
    let mut out = String::from("n,statistic,parameters,value,threshold,pass\n");
    for r in reports {
        for (k, ((p, d), ok)) in r.empirical_prob.iter().zip(r.dominating_values()).zip(r.dominated()).enumerate() {
            let n = labels.get(k).copied().unwrap_or(k as u32 + 1);
            out.push_str(&format!(
                "{n},modulus,T={};delta={};rho={};C={};bound={:.6},{p:.6},{d:.6},{ok}\n",
                r.horizon, r.delta, r.rho, r.c, r.brownian_bound
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub a_grid: Vec<f64>,
    /// `masses[law][A] = μ({|x| ≤ A})`.
    pub masses: Vec<Vec<f64>>,
    /// Minimum over laws at the largest `A`.
    pub liminf_proxy: f64,
}

pub fn initial_tightness(laws: &[InitialLaw], a_grid: &[f64], m: &SpeedMeasure) -> Result<TightnessReport> {
    if a_grid.windows(2).any(|w| !(w[0] < w[1])) || a_grid.iter().any(|&a| !(a >= 0.0)) {
        return Err(Error::InvalidArgument("A grid must be nonnegative and increasing".into()));
    }
    let masses: Vec<Vec<f64>> = laws
        .iter()
        .map(|law| {
            a_grid
                .iter()
                .map(|&a| match law {
                    InitialLaw::PointMass { x0 } => f64::from(u8::from(x0.abs() <= a)),
                    InitialLaw::Density { .. } => {
                        law.mass_between(m, -a, a) + m.atom_mass_closed(a, a) * law.density_at(a).unwrap_or(0.0)
                    }
                })
                .collect()
        })
        .collect();
    let liminf_proxy = masses.iter().filter_map(|row| row.last().copied()).fold(f64::INFINITY, f64::min);
    Ok(TightnessReport { a_grid: a_grid.to_vec(), masses, liminf_proxy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Report {
    pub l1_gaps: Vec<f64>,
    pub l2_gaps: Vec<f64>,
}

/// `∫ |g_n - g| dm` and `(∫ (g_n - g)² dm)^{1/2}`, integrated exactly over the
/// common refinement of the step densities and of `m`.
pub fn h2_check(laws: &[InitialLaw], limit: &InitialLaw, m: &SpeedMeasure) -> Result<H2Report> {
    let breaks_of = |law: &InitialLaw| -> Result<Vec<f64>> {
        match law {
            InitialLaw::PointMass { .. } => Err(Error::InvalidLaw("H2 needs densities, got a point mass".into())),
            InitialLaw::Density { breaks, .. } => Ok(breaks.clone()),
        }
    };
    let limit_breaks = breaks_of(limit)?;
    let mut l1_gaps = Vec::with_capacity(laws.len());
    let mut l2_gaps = Vec::with_capacity(laws.len());
    for law in laws {
        let mut pts = breaks_of(law)?;
        pts.extend(&limit_breaks);
        pts.extend(m.breaks());
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let (lo, hi) = (pts[0], pts[pts.len() - 1]);
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        for w in pts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let gap = law.density_at(mid).unwrap_or(0.0) - limit.density_at(mid).unwrap_or(0.0);
            if gap != 0.0 {
                let mass = m.density_mass(w[0], w[1]);
                l1 += gap.abs() * mass;
                l2 += gap * gap * mass;
            }
        }
        for &(x, wt) in m.atoms() {
            if x >= lo && x <= hi {
                let gap = law.density_at(x).unwrap_or(0.0) - limit.density_at(x).unwrap_or(0.0);
                l1 += gap.abs() * wt;
                l2 += gap * gap * wt;
            }
        }
        l1_gaps.push(l1);
        l2_gaps.push(l2.sqrt());
    }
    Ok(H2Report { l1_gaps, l2_gaps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_basic_cases() {
        let x = [0.1, 0.5, 0.7];
        assert_eq!(ks_two_sample(&x, &x).unwrap().stat, 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.1], &[1.0, 2.0]).unwrap().stat, 1.0);
        assert_eq!(ks_two_sample(&[], &x).unwrap_err(), Error::EmptySample);
        let r = ks_two_sample(&[1.0; 4], &[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert_abs_diff_eq!(r.stat, 0.5);
        assert_abs_diff_eq!(r.critical_5pct, 1.358 * (8.0f64 / 16.0).sqrt());
    }

    #[test]
    fn ks_uniform_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() + 0.2).collect();
        let r = ks_two_sample(&x, &y).unwrap();
        assert!((r.stat - 0.2).abs() <= 0.02, "{}", r.stat);
    }

    fn path(times: Vec<f64>, states: Vec<u32>, horizon: f64) -> Path {
        Path { times, states, horizon, absorbed_at: None }
    }

    #[test]
    fn modulus_simple_paths() {
        let values = [0.0, 1.0, 2.0];
        let still = path(vec![0.0], vec![1], 1.0);
        assert_eq!(path_modulus(&still, &values, 1.0, 0.1), 0.0);
        let jump = path(vec![0.0, 0.5, 0.52], vec![0, 1, 2], 1.0);
        assert_eq!(path_modulus(&jump, &values, 1.0, 0.05), 2.0);
        assert_eq!(path_modulus(&jump, &values, 1.0, 0.01), 1.0);
        assert_eq!(path_modulus(&jump, &values, 0.51, 0.05), 1.0);
        for delta in [0.005, 0.02, 0.03, 0.5] {
            assert_eq!(path_modulus(&jump, &values, 1.0, delta), path_modulus_brute(&jump, &values, 1.0, delta));
        }
        let ens = PathEnsemble {
            paths: vec![jump],
            seed: 0,
            form_id: "x".into(),
            initial_law: InitialLaw::PointMass { x0: 0.0 },
            state_values: values.to_vec(),
            horizon: 1.0,
        };
        assert_eq!(modulus_statistic(&ens, 1.0, 0.05, 1.0).unwrap(), 1.0);
        assert!(modulus_statistic(&ens, 2.0, 0.05, 1.0).is_err());
    }

    #[test]
    fn brownian_bound_properties() {
        let far = brownian_modulus_bound(1.0, 1.0, 0.1, 10.0, 500, 1).unwrap();
        assert_eq!(far, 0.0);
        let a = brownian_modulus_bound(1.0, 1.0, 0.02, 0.5, 2000, 3).unwrap();
        let b = brownian_modulus_bound(1.0, 1.0, 0.05, 0.5, 2000, 3).unwrap();
        assert!(a <= b);
        // δ = T: range of B on [0, CT] against 4 P(B_{CT} ≥ ρ/2)
        let (c, t, rho) = (1.0, 1.0, 2.0);
        let p = brownian_modulus_bound(c, t, t, rho, 4000, 9).unwrap();
        let normal = statrs::distribution::Normal::new(0.0, (c * t).sqrt()).unwrap();
        let envelope = 4.0 * (1.0 - statrs::distribution::ContinuousCDF::cdf(&normal, rho / 2.0));
        assert!(p <= envelope, "{p} vs {envelope}");
        assert!(p > 0.0);
    }

    #[test]
    fn sup_phi_ignores_atoms() {
        let s = ScaleFunction::from_knots(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.5)], 0.5).unwrap();
        let m = SpeedMeasure::step(vec![0.0, 0.25, 1.0], vec![1.0, 4.0]).unwrap().with_atoms(vec![(0.1, 3.0)]).unwrap();
        assert_abs_diff_eq!(sup_phi(&s, &m, 0.0, 1.0), 2.0);
    }

    #[test]
    fn tightness_and_h2() {
        let m = SpeedMeasure::uniform(-5.0, 5.0, 1.0).unwrap();
        let pm = InitialLaw::PointMass { x0: 0.7 };
        let g = InitialLaw::Density { breaks: vec![0.0, 1.0], values: vec![1.0] };
        let r = initial_tightness(&[pm.clone(), g.clone()], &[0.5, 1.0, 2.0], &m).unwrap();
        assert_eq!(r.masses[0], vec![0.0, 1.0, 1.0]);
        assert_eq!(r.masses[1], vec![0.5, 1.0, 1.0]);
        assert_eq!(r.liminf_proxy, 1.0);
        let gauss = InitialLaw::Density { breaks: vec![-2.0, -1.0, 0.0, 1.0, 2.0], values: vec![0.05, 0.45, 0.4, 0.1] };
        let r = initial_tightness(&[gauss], &[1.0, 1.5], &m).unwrap();
        assert_abs_diff_eq!(r.masses[0][0], 0.85, epsilon = 1e-15);
        assert_abs_diff_eq!(r.masses[0][1], 0.45 + 0.4 + 0.5 * (0.05 + 0.1), epsilon = 1e-15);

        let same = h2_check(&[g.clone(), g.clone()], &g, &m).unwrap();
        assert_eq!(same.l1_gaps, vec![0.0, 0.0]);
        assert!(h2_check(&[pm], &g, &m).is_err());
    }
}
