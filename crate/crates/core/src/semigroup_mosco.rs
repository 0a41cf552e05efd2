//! Semigroups `T_t = exp(t L)` of discrete forms, Mosco certificates through
//! strong convergence of semigroups, the freeze check for families whose
//! limit scale vanishes, and the core-approximation energies of the
//! increasing case.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form_assembly::{DiscreteForm, FormFamily};
use crate::scale_measure::{Direction, ScaleFunction, SpeedMeasure};

/// Largest state count accepted by [`Scheme::ExactSmall`].
pub const EXACT_SMALL_LIMIT: usize = 64;

pub const DEFAULT_MAX_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Crank–Nicolson with `dt = min(max_dt, t/100)`, started by four
    /// implicit-Euler half steps to damp stiff modes.
    CrankNicolson,
    /// Dense symmetric eigendecomposition; at most 64 states.
    ExactSmall,
}

/// Factored symmetric tridiagonal system solved by the Thomas algorithm.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    pivots: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[i]` couples row `i` to `i-1`, `upper[i]` couples row `i` to `i+1`.
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut pivots = Vec::with_capacity(n);
        let mut ratio = vec![0.0; n];
        for i in 0..n {
            let p = if i == 0 { diag[0] } else { diag[i] - lower[i] * ratio[i - 1] };
            if p == 0.0 || !p.is_finite() {
                return Err(Error::Numerical(format!("zero pivot at row {i}")));
            }
            pivots.push(p);
            ratio[i] = upper[i] / p;
        }
        Ok(Self { lower: lower.to_vec(), pivots, upper: ratio })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] /= self.pivots[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / self.pivots[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }
}

#[derive(Debug, Clone)]
pub struct SemigroupEvolver {
    pub form: DiscreteForm,
    pub max_dt: f64,
    pub scheme: Scheme,
}

impl SemigroupEvolver {
    pub fn new(form: DiscreteForm, scheme: Scheme) -> Self {
        Self { form, max_dt: DEFAULT_MAX_DT, scheme }
    }

    pub fn with_max_dt(mut self, max_dt: f64) -> Self {
        self.max_dt = max_dt;
        self
    }

    /// `T_t f` on the states of the form; pinned states return zero for `t > 0`.
    pub fn evolve(&self, f: &[f64], t: f64) -> Result<Vec<f64>> {
        evolve_form(&self.form, f, t, self.scheme, self.max_dt)
    }
}

pub fn evolve(ev: &SemigroupEvolver, f: &[f64], t: f64) -> Result<Vec<f64>> {
    ev.evolve(f, t)
}

fn evolve_form(form: &DiscreteForm, f: &[f64], t: f64, scheme: Scheme, max_dt: f64) -> Result<Vec<f64>> {
    let k = form.n_states();
    if f.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: f.len() });
    }
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial function has non-finite entries".into()));
    }
    if t == 0.0 {
        return Ok(f.to_vec());
    }
    match scheme {
        Scheme::CrankNicolson => crank_nicolson(form, f, t, max_dt),
        Scheme::ExactSmall => exact_small(form, f, t),
    }
}

/// Stiffness entries `K_ii`, `K_{i,i±1}` restricted to free states, with
/// pinned rows replaced by the identity.
fn stiffness(form: &DiscreteForm) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = form.n_states();
    let mut lower = vec![0.0; k];
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    for i in 0..k {
        if form.pinned[i] {
            continue;
        }
        if i > 0 {
            diag[i] += form.conductances[i - 1];
            if !form.pinned[i - 1] {
                lower[i] = -form.conductances[i - 1];
            }
        }
        if i + 1 < k {
            diag[i] += form.conductances[i];
            if !form.pinned[i + 1] {
                upper[i] = -form.conductances[i];
            }
        }
    }
    (lower, diag, upper)
}

fn crank_nicolson(form: &DiscreteForm, f: &[f64], t: f64, max_dt: f64) -> Result<Vec<f64>> {
    let k = form.n_states();
    let steps = (t / max_dt.min(t / 100.0)).round().max(1.0) as usize;
    let dt = t / steps as f64;
    let h = 0.5 * dt;
    let (kl, kd, ku) = stiffness(form);
    let m = &form.masses;

    let mut lower = vec![0.0; k];
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    for i in 0..k {
        if form.pinned[i] {
            diag[i] = 1.0;
        } else {
            lower[i] = h * kl[i];
            diag[i] = m[i] + h * kd[i];
            upper[i] = h * ku[i];
        }
    }
    let system = Tridiagonal::factor(&lower, &diag, &upper)?;

    let mut u: Vec<f64> = f.iter().zip(&form.pinned).map(|(&v, &p)| if p { 0.0 } else { v }).collect();
    let mut rhs = vec![0.0; k];
    let implicit_half_steps = if steps >= 2 { 4 } else { 2 };
    for _ in 0..implicit_half_steps {
        for i in 0..k {
            rhs[i] = if form.pinned[i] { 0.0 } else { m[i] * u[i] };
        }
        system.solve_in_place(&mut rhs);
        std::mem::swap(&mut u, &mut rhs);
    }
    for _ in 0..steps.saturating_sub(2) {
        for i in 0..k {
            if form.pinned[i] {
                rhs[i] = 0.0;
                continue;
            }
            let mut ku_i = kd[i] * u[i];
            if i > 0 {
                ku_i += kl[i] * u[i - 1];
            }
            if i + 1 < k {
                ku_i += ku[i] * u[i + 1];
            }
            rhs[i] = m[i] * u[i] - h * ku_i;
        }
        system.solve_in_place(&mut rhs);
        std::mem::swap(&mut u, &mut rhs);
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Crank–Nicolson produced non-finite values".into()));
    }
    Ok(u)
}

fn exact_small(form: &DiscreteForm, f: &[f64], t: f64) -> Result<Vec<f64>> {
    let k = form.n_states();
    let free: Vec<usize> = (0..k).filter(|&i| !form.pinned[i]).collect();
    if free.len() > EXACT_SMALL_LIMIT {
        return Err(Error::TooManyStates(free.len()));
    }
    let mut out = vec![0.0; k];
    if free.is_empty() {
        return Ok(out);
    }
    let (kl, kd, ku) = stiffness(form);
    let r = free.len();
    let sq: Vec<f64> = free.iter().map(|&i| form.masses[i].sqrt()).collect();
    // A = -M^{-1/2} K M^{-1/2} on the free states
    let mut a = DMatrix::<f64>::zeros(r, r);
    for (p, &i) in free.iter().enumerate() {
        a[(p, p)] = -kd[i] / (sq[p] * sq[p]);
        if p + 1 < r && free[p + 1] == i + 1 {
            let v = -ku[i] / (sq[p] * sq[p + 1]);
            a[(p, p + 1)] = v;
            a[(p + 1, p)] = -kl[i + 1] / (sq[p] * sq[p + 1]);
        }
    }
    let eig = SymmetricEigen::new(a);
    let g = DVector::from_iterator(r, free.iter().zip(&sq).map(|(&i, &s)| s * f[i]));
    let coeff = eig.eigenvectors.transpose() * g;
    let scaled = DVector::from_iterator(r, coeff.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c * (t * l).exp()));
    let w = &eig.eigenvectors * scaled;
    for (p, &i) in free.iter().enumerate() {
        out[i] = w[p] / sq[p];
    }
    Ok(out)
}

/// `(Σ m_i (u_i - v_i)²)^{1/2}`.
pub fn l2m_distance(masses: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != masses.len() {
        return Err(Error::DimensionMismatch { expected: masses.len(), got: u.len() });
    }
    if v.len() != masses.len() {
        return Err(Error::DimensionMismatch { expected: masses.len(), got: v.len() });
    }
    Ok(masses.iter().zip(u).zip(v).map(|((m, a), b)| m * (a - b) * (a - b)).sum::<f64>().sqrt())
}

pub fn l2m_norm(masses: &[f64], u: &[f64]) -> Result<f64> {
    l2m_distance(masses, u, &vec![0.0; u.len()])
}

/// A test function given by its values on the common grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub values: Vec<f64>,
}

/// Eight hats, three sine modes and two indicators smoothed over `ramp`.
pub fn standard_dictionary(points: &[f64], ramp: f64) -> Vec<TestFunction> {
    let lo = points[0];
    let hi = points[points.len() - 1];
    let w = hi - lo;
    let mut dict = Vec::with_capacity(13);
    for k in 0..8 {
        let c = lo + (k as f64 + 0.5) * w / 8.0;
        let r = w / 8.0;
        dict.push(TestFunction {
            id: format!("hat{k}"),
            values: points.iter().map(|&x| (1.0 - (x - c).abs() / r).max(0.0)).collect(),
        });
    }
    for k in 1..=3 {
        dict.push(TestFunction {
            id: format!("sin{k}"),
            values: points.iter().map(|&x| (k as f64 * std::f64::consts::PI * (x - lo) / w).sin()).collect(),
        });
    }
    for (k, (a, b)) in [(0.25, 0.5), (0.5, 0.75)].into_iter().enumerate() {
        let (a, b) = (lo + a * w, lo + b * w);
        dict.push(TestFunction {
            id: format!("ind{k}"),
            values: points.iter().map(|&x| smoothed_indicator(x, a, b, ramp)).collect(),
        });
    }
    dict
}

fn smoothed_indicator(x: f64, a: f64, b: f64, ramp: f64) -> f64 {
    let up = ((x - a) / ramp + 0.5).clamp(0.0, 1.0);
    let down = ((b - x) / ramp + 0.5).clamp(0.0, 1.0);
    up.min(down)
}

pub const STANDARD_TIMES: [f64; 4] = [0.05, 0.1, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoscoReport {
    /// Family index of each row of `distances`.
    pub labels: Vec<u32>,
    pub test_ids: Vec<String>,
    pub times: Vec<f64>,
    /// `distances[n][f][t]`.
    pub distances: Vec<Vec<Vec<f64>>>,
    pub monotone_ok: bool,
    pub final_max: f64,
}

impl MoscoReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,test_id,t,distance\n");
        for (n, per_f) in self.labels.iter().zip(&self.distances) {
            for (id, per_t) in self.test_ids.iter().zip(per_f) {
                for (t, d) in self.times.iter().zip(per_t) {
                    out.push_str(&format!("{n},{id},{t},{d:.12e}\n"));
                }
            }
        }
        out.push_str(&format!("summary,monotone_ok={},final_max,{:.12e}\n", self.monotone_ok, self.final_max));
        out
    }
}

/// Relative slack allowed when checking that distances do not increase.
const MONOTONE_SLACK: f64 = 1e-9;

/// Each `(f, t)` slice must be nonincreasing in `n` once the first index is
/// skipped.
pub fn monotone_after_burn_in(series: &[f64]) -> bool {
    series.windows(2).skip(1).all(|w| w[1] <= w[0] * (1.0 + MONOTONE_SLACK) + 1e-12)
}

/// Moves grid-point values onto the form, evolves, and lifts back.
pub fn evolve_points(form: &DiscreteForm, values: &[f64], t: f64, scheme: Scheme, max_dt: f64) -> Result<Vec<f64>> {
    let projected = form.project(values)?;
    form.lift(&evolve_form(form, &projected, t, scheme, max_dt)?)
}

pub fn mosco_certificate(
    family: &[DiscreteForm],
    limit: &DiscreteForm,
    dictionary: &[TestFunction],
    times: &[f64],
    scheme: Scheme,
) -> Result<MoscoReport> {
    let points = &limit.grid.points;
    for form in family {
        if form.grid.points != *points {
            return Err(Error::IncompatibleGrids(format!(
                "{} grid points vs {} in the limit form",
                form.grid.len(),
                points.len()
            )));
        }
    }
    for f in dictionary {
        if f.values.len() != points.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: f.values.len() });
        }
    }
    let masses = &limit.grid.cell_masses;
    let reference: Vec<Vec<Vec<f64>>> = dictionary
        .par_iter()
        .map(|f| times.iter().map(|&t| evolve_points(limit, &f.values, t, scheme, DEFAULT_MAX_DT)).collect())
        .collect::<Vec<Result<Vec<_>>>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> =
        (0..family.len()).flat_map(|n| (0..dictionary.len()).map(move |j| (n, j))).collect();
    let flat: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(n, j)| {
            times
                .iter()
                .enumerate()
                .map(|(ti, &t)| {
                    let u = evolve_points(&family[n], &dictionary[j].values, t, scheme, DEFAULT_MAX_DT)?;
                    l2m_distance(masses, &u, &reference[j][ti])
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut distances = vec![Vec::with_capacity(dictionary.len()); family.len()];
    for ((n, _), row) in cells.into_iter().zip(flat) {
        distances[n].push(row);
    }
    let mut monotone_ok = true;
    for j in 0..dictionary.len() {
        for ti in 0..times.len() {
            let series: Vec<f64> = distances.iter().map(|d| d[j][ti]).collect();
            monotone_ok &= monotone_after_burn_in(&series);
        }
    }
    let final_max = distances.last().map(|d| d.iter().flatten().fold(0.0, |a: f64, &b| a.max(b))).unwrap_or(0.0);
    Ok(MoscoReport {
        labels: (1..=family.len() as u32).collect(),
        test_ids: dictionary.iter().map(|f| f.id.clone()).collect(),
        times: times.to_vec(),
        distances,
        monotone_ok,
        final_max,
    })
}

/// `d_n = ‖T_t^n u - u‖` along a decreasing family, `u` given on grid points.
pub fn freeze_check(family: &FormFamily, u: &[f64], t: f64) -> Result<Vec<f64>> {
    if family.family.direction != Direction::Decreasing {
        return Err(Error::DirectionMismatch {
            expected: Direction::Decreasing.to_string(),
            found: family.family.direction.to_string(),
        });
    }
    family
        .forms
        .par_iter()
        .map(|form| {
            let v = evolve_points(form, u, t, Scheme::CrankNicolson, DEFAULT_MAX_DT)?;
            l2m_distance(&form.grid.cell_masses, &v, u)
        })
        .collect()
}

/// `φ(y) = (1 - ((y - c)/r)²)^p` on `|y - c| < r`, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
    pub power: i32,
}

impl Bump {
    pub fn new(center: f64, radius: f64, power: i32) -> Result<Self> {
        if !(radius > 0.0) || power < 2 || !center.is_finite() {
            return Err(Error::InvalidArgument("bump needs radius > 0 and power >= 2".into()));
        }
        Ok(Self { center, radius, power })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    pub fn value(&self, y: f64) -> f64 {
        let z = (y - self.center) / self.radius;
        if z.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - z * z).powi(self.power)
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        let z = (y - self.center) / self.radius;
        if z.abs() >= 1.0 {
            0.0
        } else {
            let p = self.power as f64;
            p * (1.0 - z * z).powi(self.power - 1) * (-2.0 * z / self.radius)
        }
    }

    /// `max |φ'|`, attained where `z² = 1/(2p - 1)`.
    pub fn derivative_sup(&self) -> f64 {
        let z = (1.0 / (2.0 * self.power as f64 - 1.0)).sqrt();
        self.derivative(self.center - z * self.radius).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreApproximation {
    pub l2_gap: f64,
    #[serde(rename = "Phi")]
    pub phi: f64,
    #[serde(rename = "Psi")]
    pub psi: f64,
}

const GAUSS_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GAUSS_WEIGHTS: [f64; 5] =
    [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
const SUBCELLS: usize = 32;

fn quadrature(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / SUBCELLS as f64;
    let mut total = 0.0;
    for j in 0..SUBCELLS {
        let mid = a + (j as f64 + 0.5) * h;
        for (x, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            total += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * total
}

/// Energies of the approximating sequence `u_n = φ∘s_n` toward `u = φ∘s_∞`:
///
/// * `l2_gap = ∫ (φ∘s_n - φ∘s_∞)² dm`
/// * `Φ = ∫ (φ'∘s_n)² (1_{G_n} - 1_G)² ds`
/// * `Ψ = ∫ (φ'∘s_n - φ'∘s_∞)² ds_∞`
///
/// with `1_{G_n} = ds_n/ds` and `1_G = ds_∞/ds`. Integrals run over the knot
/// span of `s`.
pub fn core_approximation_energy(
    phi: &Bump,
    s_n: &ScaleFunction,
    s_inf: &ScaleFunction,
    s: &ScaleFunction,
    m: &SpeedMeasure,
) -> Result<CoreApproximation> {
    let (klo, khi) = phi.support();
    for (name, sc) in [("s_n", s_n), ("s_inf", s_inf)] {
        let (ilo, ihi) = sc.image();
        if !(klo > ilo && khi < ihi) {
            return Err(Error::SupportViolation(format!(
                "bump support [{klo}, {khi}] not inside the image ({ilo}, {ihi}) of {name}"
            )));
        }
    }
    let (lo, hi) = s.support();
    let mut pts: Vec<f64> = s
        .knot_xs()
        .chain(s_n.knot_xs())
        .chain(s_inf.knot_xs())
        .chain(m.interior_points(lo, hi))
        .filter(|&x| x >= lo && x <= hi)
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mut l2_gap = 0.0;
    let mut big_phi = 0.0;
    let mut psi = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let rho = m.density_at(mid);
        let sig = s.slope_at(mid);
        let sig_n = s_n.slope_at(mid);
        let sig_inf = s_inf.slope_at(mid);
        if rho > 0.0 {
            l2_gap += rho * quadrature(a, b, |x| (phi.value(s_n.eval(x)) - phi.value(s_inf.eval(x))).powi(2));
        }
        if sig > 0.0 {
            let jump = (sig_n - sig_inf) / sig;
            if jump != 0.0 {
                big_phi += jump * jump * sig * quadrature(a, b, |x| phi.derivative(s_n.eval(x)).powi(2));
            }
        }
        if sig_inf > 0.0 {
            psi +=
                sig_inf * quadrature(a, b, |x| (phi.derivative(s_n.eval(x)) - phi.derivative(s_inf.eval(x))).powi(2));
        }
    }
    for &(x, w) in m.atoms() {
        if x >= lo && x <= hi {
            l2_gap += w * (phi.value(s_n.eval(x)) - phi.value(s_inf.eval(x))).powi(2);
        }
    }
    Ok(CoreApproximation { l2_gap, phi: big_phi, psi })
}
