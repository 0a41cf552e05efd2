//! Exact simulation of the birth–death chain generated by a discrete form,
//! spatial transforms of path ensembles, and the quadratic-variation
//! diagnostic.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form_assembly::DiscreteForm;
use crate::scale_measure::{ScaleFunction, SpeedMeasure};

/// Right-continuous jump path: `states[k]` is occupied on
/// `[times[k], times[k+1])`, the last one up to `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<u32>,
    pub horizon: f64,
    /// Time at which the path entered a state with zero exit rate.
    pub absorbed_at: Option<f64>,
}

impl Path {
    pub fn x0(&self) -> u32 {
        self.states[0]
    }

    pub fn n_jumps(&self) -> usize {
        self.states.len() - 1
    }

    /// State occupied at time `t`.
    pub fn state_at(&self, t: f64) -> Result<u32> {
        if t > self.horizon {
            return Err(Error::HorizonExceeded { requested: t, available: self.horizon });
        }
        let k = self.times.partition_point(|&s| s <= t);
        Ok(self.states[k.max(1) - 1])
    }
}

/// Starts `rng` on the independent substream of `path_index`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Jump rates left/right of every state.
fn rates(form: &DiscreteForm) -> Vec<(f64, f64)> {
    (0..form.n_states())
        .map(|i| if form.pinned[i] { (0.0, 0.0) } else { (form.sub_diagonal[i], form.super_diagonal[i]) })
        .collect()
}

fn run_chain(table: &[(f64, f64)], x0: usize, horizon: f64, rng: &mut impl Rng) -> Path {
    let mut times = vec![0.0];
    let mut states = vec![x0 as u32];
    let mut t = 0.0;
    let mut i = x0;
    let mut absorbed_at = None;
    loop {
        let (left, right) = table[i];
        let total = left + right;
        if total <= 0.0 {
            absorbed_at = Some(t);
            break;
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        t += hold;
        if t > horizon {
            break;
        }
        i = if rng.random::<f64>() * total < right { i + 1 } else { i - 1 };
        times.push(t);
        states.push(i as u32);
    }
    Path { times, states, horizon, absorbed_at }
}

/// One path from state `x0` on `[0, horizon]`, drawn from substream
/// `stream` of `seed`.
pub fn simulate_path(form: &DiscreteForm, x0: usize, horizon: f64, seed: u64, stream: u64) -> Result<Path> {
    if x0 >= form.n_states() {
        return Err(Error::InvalidArgument(format!("start state {x0} outside 0..{}", form.n_states())));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    Ok(run_chain(&rates(form), x0, horizon, &mut path_rng(seed, stream)))
}

/// `μ(dx) = g(x) m(dx)` with a step density `g`, or a point mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    PointMass {
        x0: f64,
    },
    /// `g = values[k]` on `(breaks[k], breaks[k+1])`, zero outside.
    Density {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
}

impl InitialLaw {
    /// Uniform law for `m` on `(lo, hi)`.
    pub fn uniform(m: &SpeedMeasure, lo: f64, hi: f64) -> Result<Self> {
        let mass = m.mass_open(lo, hi) + m.atom_mass_closed(lo, lo) + m.atom_mass_closed(hi, hi);
        if !(mass > 0.0) {
            return Err(Error::InvalidLaw(format!("m gives no mass to ({lo}, {hi})")));
        }
        Ok(InitialLaw::Density { breaks: vec![lo, hi], values: vec![1.0 / mass] })
    }

    pub fn density_at(&self, x: f64) -> Option<f64> {
        match self {
            InitialLaw::PointMass { .. } => None,
            InitialLaw::Density { breaks, values } => {
                if x < breaks[0] || x > breaks[breaks.len() - 1] {
                    return Some(0.0);
                }
                let k = breaks.partition_point(|&b| b <= x);
                Some(values[k.clamp(1, values.len()) - 1])
            }
        }
    }

    /// `μ((lo, hi))` plus atoms of `m` in `[lo, hi)`.
    pub fn mass_between(&self, m: &SpeedMeasure, lo: f64, hi: f64) -> f64 {
        match self {
            InitialLaw::PointMass { x0 } => f64::from(u8::from(*x0 >= lo && *x0 < hi)),
            InitialLaw::Density { breaks, values } => {
                let mut total = 0.0;
                for (k, &g) in values.iter().enumerate() {
                    let a = lo.max(breaks[k]);
                    let b = hi.min(breaks[k + 1]);
                    if a < b && g > 0.0 {
                        total += g * m.density_mass(a, b);
                    }
                }
                for &(x, w) in m.atoms() {
                    if x >= lo && x < hi {
                        total += w * self.density_at(x).unwrap_or(0.0);
                    }
                }
                total
            }
        }
    }

    /// Checks nonnegativity and `∫ g dm = 1` within `1e-10`.
    pub fn validate(&self, m: &SpeedMeasure) -> Result<()> {
        match self {
            InitialLaw::PointMass { x0 } if x0.is_finite() => Ok(()),
            InitialLaw::PointMass { x0 } => Err(Error::InvalidLaw(format!("point mass at {x0}"))),
            InitialLaw::Density { breaks, values } => {
                if breaks.len() != values.len() + 1 || values.is_empty() {
                    return Err(Error::InvalidLaw("breaks/values length mismatch".into()));
                }
                if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
                    return Err(Error::InvalidLaw("breaks must be finite and increasing".into()));
                }
                if values.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
                    return Err(Error::InvalidLaw("density must be finite and nonnegative".into()));
                }
                let total = self.mass_between(m, breaks[0], f64::INFINITY);
                if (total - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidLaw(format!("∫ g dm = {total}, expected 1")));
                }
                Ok(())
            }
        }
    }

    /// Probability of starting in each state of `form`; cells are split at
    /// midpoints between grid points.
    pub fn state_probabilities(&self, form: &DiscreteForm, m: &SpeedMeasure) -> Result<Vec<f64>> {
        let pts = &form.grid.points;
        let n = pts.len();
        let mut probs = vec![0.0; form.n_states()];
        match self {
            InitialLaw::PointMass { x0 } => {
                if *x0 < pts[0] || *x0 > pts[n - 1] {
                    return Err(Error::InvalidLaw(format!("point mass at {x0} outside the grid")));
                }
                let i = pts.partition_point(|&p| p < *x0);
                let i = if i == n || (i > 0 && x0 - pts[i - 1] < pts[i] - x0) { i - 1 } else { i };
                probs[form.state_of_point[i]] = 1.0;
            }
            InitialLaw::Density { .. } => {
                for i in 0..n {
                    let lo = if i == 0 { pts[0] } else { 0.5 * (pts[i - 1] + pts[i]) };
                    let hi = if i + 1 == n { pts[n - 1] } else { 0.5 * (pts[i] + pts[i + 1]) };
                    let mut p = self.mass_between(m, lo, hi);
                    if i + 1 == n {
                        p += m.atom_mass_closed(hi, hi) * self.density_at(hi).unwrap_or(0.0);
                    }
                    probs[form.state_of_point[i]] += p;
                }
                let total: f64 = probs.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::InvalidLaw("law puts no mass on the grid".into()));
                }
                for p in probs.iter_mut() {
                    *p /= total;
                }
            }
        }
        Ok(probs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub paths: Vec<Path>,
    pub seed: u64,
    pub form_id: String,
    pub initial_law: InitialLaw,
    /// Value attached to each state; paths are read through this table.
    pub state_values: Vec<f64>,
    pub horizon: f64,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Sample of `Z_t` over the ensemble.
    pub fn values_at(&self, t: f64) -> Result<Vec<f64>> {
        self.paths.iter().map(|p| p.state_at(t).map(|s| self.state_values[s as usize])).collect()
    }

    pub fn header_json(&self) -> String {
        serde_json::json!({
            "seed": self.seed,
            "form_id": self.form_id,
            "law": self.initial_law,
            "horizon": self.horizon,
            "n_paths": self.paths.len(),
        })
        .to_string()
    }

    /// `path_id,t,state_value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path_id,t,state_value\n");
        for (id, p) in self.paths.iter().enumerate() {
            for (t, s) in p.times.iter().zip(&p.states) {
                out.push_str(&format!("{id},{t:.12e},{:.12e}\n", self.state_values[*s as usize]));
            }
        }
        out
    }
}

/// Paths start from `law`'s state probabilities; path `k` uses substream `k`
/// of `seed`, so the ensemble does not depend on thread scheduling.
pub fn simulate_ensemble(
    form: &DiscreteForm,
    m: &SpeedMeasure,
    law: &InitialLaw,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    form_id: &str,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be positive".into()));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    law.validate(m)?;
    let start = initial_sampler(form, m, law)?;
    let table = rates(form);
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k);
            let x0 = start.draw(&mut rng);
            run_chain(&table, x0, horizon, &mut rng)
        })
        .collect();
    Ok(PathEnsemble {
        paths,
        seed,
        form_id: form_id.to_string(),
        initial_law: law.clone(),
        state_values: form.positions.clone(),
        horizon,
    })
}

/// Draws initial states of a law on a form.
#[derive(Debug, Clone)]
pub enum InitialSampler {
    Fixed(usize),
    Weighted(WeightedIndex<f64>),
}

impl InitialSampler {
    pub fn draw(&self, rng: &mut impl Rng) -> usize {
        match self {
            InitialSampler::Fixed(i) => *i,
            InitialSampler::Weighted(w) => w.sample(rng),
        }
    }
}

pub fn initial_sampler(form: &DiscreteForm, m: &SpeedMeasure, law: &InitialLaw) -> Result<InitialSampler> {
    let probs = law.state_probabilities(form, m)?;
    Ok(match law {
        InitialLaw::PointMass { .. } => InitialSampler::Fixed(probs.iter().position(|&p| p == 1.0).unwrap_or(0)),
        InitialLaw::Density { .. } => {
            InitialSampler::Weighted(WeightedIndex::new(&probs).map_err(|e| Error::InvalidLaw(e.to_string()))?)
        }
    })
}

/// Maps state values through a strictly increasing scale.
pub fn transform_ensemble(ens: &PathEnsemble, s0: &ScaleFunction) -> Result<PathEnsemble> {
    let values: Vec<f64> = ens.state_values.iter().map(|&x| s0.eval(x)).collect();
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::NonStrictTransform);
    }
    Ok(PathEnsemble { state_values: values, ..ens.clone() })
}

/// Maps state values through any nondecreasing scale; flat stretches of the
/// scale identify states.
pub fn project_ensemble(ens: &PathEnsemble, s0: &ScaleFunction) -> PathEnsemble {
    let values = ens.state_values.iter().map(|&x| s0.eval(x)).collect();
    PathEnsemble { state_values: values, ..ens.clone() }
}

/// Expected quadratic-variation rate `Σ_j L_ij (f_j - f_i)²` of `f` at each
/// state; for `f = s̊` this is `ds̊/dm` at grid resolution.
pub fn qv_rates(form: &DiscreteForm, f: &[f64]) -> Result<Vec<f64>> {
    let k = form.n_states();
    if f.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: f.len() });
    }
    Ok((0..k)
        .map(|i| {
            if form.pinned[i] {
                return 0.0;
            }
            let mut r = 0.0;
            if i > 0 {
                r += form.sub_diagonal[i] * (f[i - 1] - f[i]).powi(2);
            }
            if i + 1 < k {
                r += form.super_diagonal[i] * (f[i + 1] - f[i]).powi(2);
            }
            r
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QVReport {
    pub realized_qv: f64,
    pub phi_integral: f64,
    pub rel_error: f64,
}

/// Realized `Σ (Δf)²` over jumps in `[0, T]` against `∫_0^T φ(Z_s) ds`.
pub fn quadratic_variation_report(path: &Path, f: &[f64], phi: &[f64], horizon: f64) -> Result<QVReport> {
    if horizon > path.horizon {
        return Err(Error::HorizonExceeded { requested: horizon, available: path.horizon });
    }
    if f.len() != phi.len() {
        return Err(Error::DimensionMismatch { expected: f.len(), got: phi.len() });
    }
    let mut realized = 0.0;
    let mut integral = 0.0;
    for k in 0..path.states.len() {
        let start = path.times[k];
        if start > horizon {
            break;
        }
        let end = path.times.get(k + 1).copied().unwrap_or(path.horizon).min(horizon);
        let s = path.states[k] as usize;
        integral += (end - start) * phi[s];
        if k > 0 {
            let prev = path.states[k - 1] as usize;
            realized += (f[s] - f[prev]).powi(2);
        }
    }
    let rel_error = (realized - integral).abs() / integral.max(f64::EPSILON);
    Ok(QVReport { realized_qv: realized, phi_integral: integral, rel_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form_assembly::{assemble_form, build_grid, Boundary};
    use crate::scale_measure::DomainSpec;
    use approx::assert_abs_diff_eq;

    fn setup(n: usize) -> (DiscreteForm, SpeedMeasure) {
        let d = DomainSpec::bounded(0.0, 1.0).unwrap();
        let s = ScaleFunction::identity(0.0, 1.0, 0.5).unwrap();
        let m = SpeedMeasure::uniform(0.0, 1.0, 1.0).unwrap();
        (assemble_form(build_grid(&d, &s, &m, n).unwrap(), Boundary::NEUMANN).unwrap(), m)
    }

    #[test]
    fn paths_stay_on_the_grid_and_cover_the_horizon() {
        let (form, _) = setup(10);
        for k in 0..20 {
            let p = simulate_path(&form, 5, 2.0, 7, k).unwrap();
            assert!(p.states.iter().all(|&s| (s as usize) < form.n_states()));
            assert!(p.times.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(p.times[0], 0.0);
            assert!(*p.times.last().unwrap() <= 2.0);
            assert!(p.absorbed_at.is_none());
            assert!(p.states.windows(2).all(|w| (w[0] as i64 - w[1] as i64).abs() == 1));
        }
        assert!(simulate_path(&form, 99, 1.0, 0, 0).is_err());
        assert!(simulate_path(&form, 0, 0.0, 0, 0).is_err());
    }

    #[test]
    fn dirichlet_end_traps_paths() {
        let d = DomainSpec::bounded(0.0, 1.0).unwrap();
        let s = ScaleFunction::identity(0.0, 1.0, 0.5).unwrap();
        let m = SpeedMeasure::uniform(0.0, 1.0, 1.0).unwrap();
        let form = assemble_form(build_grid(&d, &s, &m, 4).unwrap(), Boundary::DIRICHLET).unwrap();
        let p = simulate_path(&form, 1, 100.0, 3, 0).unwrap();
        let t = p.absorbed_at.expect("absorbed");
        assert!(t < 100.0);
        let last = *p.states.last().unwrap();
        assert!(last == 0 || last == 4);
    }

    #[test]
    fn mean_holding_time() {
        let (form, _) = setup(8);
        let i = 4u32;
        let rate = -form.diagonal[i as usize];
        let p = simulate_path(&form, 4, 4000.0, 11, 0).unwrap();
        let holds: Vec<f64> =
            (0..p.n_jumps()).filter(|&k| p.states[k] == i).map(|k| p.times[k + 1] - p.times[k]).take(10_000).collect();
        assert_eq!(holds.len(), 10_000);
        let mean = holds.iter().sum::<f64>() / holds.len() as f64;
        assert!((mean * rate - 1.0).abs() < 0.03, "{}", mean * rate);
    }

    #[test]
    fn point_mass_and_determinism() {
        let (form, m) = setup(10);
        let law = InitialLaw::PointMass { x0: 0.3 };
        let a = simulate_ensemble(&form, &m, &law, 0.5, 50, 42, "unit").unwrap();
        assert!(a.paths.iter().all(|p| p.x0() == 3));
        let b = simulate_ensemble(&form, &m, &law, 0.5, 50, 42, "unit").unwrap();
        assert_eq!(a, b);
        assert!(simulate_ensemble(&form, &m, &law, 0.5, 0, 42, "unit").is_err());
    }

    #[test]
    fn law_normalization() {
        let m = SpeedMeasure::uniform(0.0, 1.0, 2.0).unwrap();
        let law = InitialLaw::uniform(&m, 0.0, 1.0).unwrap();
        law.validate(&m).unwrap();
        let bad = InitialLaw::Density { breaks: vec![0.0, 1.0], values: vec![1.0] };
        assert!(bad.validate(&m).is_err());
        let (form, m1) = setup(4);
        let probs = InitialLaw::uniform(&m1, 0.0, 1.0).unwrap().state_probabilities(&form, &m1).unwrap();
        assert_eq!(probs, vec![0.125, 0.25, 0.25, 0.25, 0.125]);
    }

    #[test]
    fn transforms() {
        let (form, m) = setup(10);
        let ens = simulate_ensemble(&form, &m, &InitialLaw::PointMass { x0: 0.5 }, 0.2, 5, 1, "u").unwrap();
        let id = ScaleFunction::identity(0.0, 1.0, 0.0).unwrap();
        assert_eq!(transform_ensemble(&ens, &id).unwrap(), ens);
        let s0 = ScaleFunction::from_knots(vec![(0.0, 0.0), (0.5, 0.1), (1.0, 1.0)], 0.0).unwrap();
        let there = transform_ensemble(&ens, &s0).unwrap();
        let inv: Vec<f64> = there.state_values.iter().map(|&y| s0.inverse(y)).collect();
        for (a, b) in inv.iter().zip(&ens.state_values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let flat = ScaleFunction::from_knots(vec![(0.0, 0.0), (0.5, 0.0), (1.0, 1.0)], 0.0).unwrap();
        assert_eq!(transform_ensemble(&ens, &flat).unwrap_err(), Error::NonStrictTransform);
        let proj = project_ensemble(&ens, &flat);
        assert_eq!(proj.paths, ens.paths);
        assert_eq!(proj.state_values[2], 0.0);
    }

    #[test]
    fn qv_report_edge_cases() {
        let still = Path { times: vec![0.0], states: vec![2], horizon: 1.0, absorbed_at: None };
        let f = vec![0.0, 0.1, 0.2, 0.3];
        let r = quadratic_variation_report(&still, &f, &[2.5; 4], 1.0).unwrap();
        assert_eq!(r.realized_qv, 0.0);
        assert_eq!(r.phi_integral, 2.5);
        assert!(quadratic_variation_report(&still, &f, &[1.0; 4], 2.0).is_err());
        let (form, _) = setup(20);
        let rates = qv_rates(&form, &form.positions).unwrap();
        for r in rates {
            assert_abs_diff_eq!(r, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn csv_and_header() {
        let (form, m) = setup(5);
        let ens = simulate_ensemble(&form, &m, &InitialLaw::PointMass { x0: 0.4 }, 0.1, 3, 9, "five").unwrap();
        let csv = ens.to_csv();
        assert!(csv.starts_with("path_id,t,state_value\n"));
        let header: serde_json::Value = serde_json::from_str(&ens.header_json()).unwrap();
        assert_eq!(header["seed"], 9);
        assert_eq!(header["law"]["kind"], "point_mass");
    }
}
