//! Finite-volume discretization of `E(u, v) = ½ ∫ du/ds dv/ds ds` on
//! `L²(m)`, including the wide-sense limit forms, plus the Feller test
//! integral used to classify boundaries.
//!
//! Grid points carry cell masses `m_i = m((x_{i-½}, x_{i+½}))` (half cells at
//! the two ends) and scale gaps `Δs_i = s(x_{i+1}) - s(x_i)`. Runs of points
//! joined by zero gaps are merged into one sticky state whose mass is the sum
//! of its members and whose conductances are the outer ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale_measure::{derive_subscale, CharacteristicFamily, DomainSpec, ScaleFunction, SpeedMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub points: Vec<f64>,
    pub cell_masses: Vec<f64>,
    pub scale_gaps: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>, cell_masses: Vec<f64>, scale_gaps: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::GridTooSmall(format!("{n} points")));
        }
        if cell_masses.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: cell_masses.len() });
        }
        if scale_gaps.len() != n - 1 {
            return Err(Error::DimensionMismatch { expected: n - 1, got: scale_gaps.len() });
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("grid points must increase strictly".into()));
        }
        if let Some(i) = cell_masses.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidMeasure(format!("cell {i} has mass {}", cell_masses[i])));
        }
        if scale_gaps.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidScale("scale gaps must be finite and nonnegative".into()));
        }
        Ok(Self { points, cell_masses, scale_gaps })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same points and masses, gaps recomputed for another scale.
    pub fn with_scale(&self, s: &ScaleFunction) -> Grid {
        let values: Vec<f64> = self.points.iter().map(|&x| s.eval(x)).collect();
        let scale_gaps = values.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        Grid { points: self.points.clone(), cell_masses: self.cell_masses.clone(), scale_gaps }
    }

    pub fn total_mass(&self) -> f64 {
        self.cell_masses.iter().sum()
    }
}

/// Uniform grid of `n_cells + 1` points on the window, refined by every knot of
/// `s` and every atom of `m` that falls inside it.
pub fn build_grid(domain: &DomainSpec, s: &ScaleFunction, m: &SpeedMeasure, n_cells: usize) -> Result<Grid> {
    build_grid_with(domain, s, m, n_cells, &[])
}

/// As [`build_grid`], with additional mandatory points (e.g. every endpoint of
/// the characteristic sets of a family sharing the grid).
pub fn build_grid_with(
    domain: &DomainSpec,
    s: &ScaleFunction,
    m: &SpeedMeasure,
    n_cells: usize,
    extra: &[f64],
) -> Result<Grid> {
    if n_cells < 3 {
        return Err(Error::GridTooSmall(format!("N = {n_cells}, need at least 3")));
    }
    let (lo, hi) = domain.window;
    let (slo, shi) = s.support();
    if slo > lo || shi < hi {
        return Err(Error::DomainMismatch(format!("scale knots span [{slo}, {shi}], window is [{lo}, {hi}]")));
    }
    let mut mandatory: Vec<f64> = s
        .knot_xs()
        .chain(m.atoms().iter().map(|a| a.0))
        .chain(extra.iter().copied())
        .filter(|&x| x > lo && x < hi)
        .collect();
    mandatory.sort_by(f64::total_cmp);
    mandatory.dedup();
    // uniform points within rounding distance of a mandatory point are dropped
    let tol = 1e-12 * (hi - lo);
    let near = |x: f64| {
        let i = mandatory.partition_point(|&p| p < x);
        (i < mandatory.len() && mandatory[i] - x <= tol) || (i > 0 && x - mandatory[i - 1] <= tol)
    };
    let mut points: Vec<f64> = (0..=n_cells)
        .map(|i| lo + (hi - lo) * i as f64 / n_cells as f64)
        .enumerate()
        .filter(|&(i, x)| i == 0 || i == n_cells || !near(x))
        .map(|(_, x)| x)
        .collect();
    points.extend(mandatory.iter().copied().filter(|&x| x - lo > tol && hi - x > tol));
    points.sort_by(f64::total_cmp);
    points.dedup();

    let n = points.len();
    let mut masses = Vec::with_capacity(n);
    for i in 0..n {
        let left = if i == 0 { points[0] } else { 0.5 * (points[i - 1] + points[i]) };
        let right = if i + 1 == n { points[n - 1] } else { 0.5 * (points[i] + points[i + 1]) };
        masses.push(m.density_mass(left, right));
    }
    for &(x, w) in m.atoms() {
        if x < lo || x > hi {
            continue;
        }
        let i = points.partition_point(|&p| p < x);
        let i = if i == n || (i > 0 && x - points[i - 1] < points[i] - x) { i - 1 } else { i };
        masses[i] += w;
    }
    let values: Vec<f64> = points.iter().map(|&x| s.eval(x)).collect();
    let gaps = values.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    Grid::new(points, masses, gaps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Reflecting: no flux through the endpoint.
    Neumann,
    /// Killing: the endpoint state is pinned to zero.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
}

impl Boundary {
    pub const NEUMANN: Boundary = Boundary { left: BoundaryCondition::Neumann, right: BoundaryCondition::Neumann };
    pub const DIRICHLET: Boundary =
        Boundary { left: BoundaryCondition::Dirichlet, right: BoundaryCondition::Dirichlet };
}

impl Default for Boundary {
    fn default() -> Self {
        Self::NEUMANN
    }
}

/// Tridiagonal generator `L = ½ (d/dm)(d/ds)` on the merged states of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteForm {
    pub grid: Grid,
    pub boundary: Boundary,
    /// Inclusive range of grid indices forming each state.
    pub merged_groups: Vec<(usize, usize)>,
    /// State index of every grid point.
    pub state_of_point: Vec<usize>,
    pub masses: Vec<f64>,
    /// Scale gap between consecutive states.
    pub gaps: Vec<f64>,
    pub conductances: Vec<f64>,
    pub pinned: Vec<bool>,
    /// Mass-weighted location of each state.
    pub positions: Vec<f64>,
    pub sub_diagonal: Vec<f64>,
    pub diagonal: Vec<f64>,
    pub super_diagonal: Vec<f64>,
}

pub fn assemble_form(grid: Grid, boundary: Boundary) -> Result<DiscreteForm> {
    if grid.scale_gaps.iter().all(|&g| g == 0.0) {
        return Err(Error::DegenerateScale);
    }
    Ok(assemble_unchecked(grid, boundary))
}

/// Wide-sense form with a flat scale: the whole grid is one sticky state, so
/// the semigroup is the `m`-average (zero when either end is Dirichlet).
pub fn collapsed_form(grid: &Grid, boundary: Boundary) -> DiscreteForm {
    let flat = Grid { scale_gaps: vec![0.0; grid.len() - 1], ..grid.clone() };
    assemble_unchecked(flat, boundary)
}

fn assemble_unchecked(grid: Grid, boundary: Boundary) -> DiscreteForm {
    let n = grid.len();
    let mut groups = Vec::new();
    let mut gaps = Vec::new();
    let mut start = 0;
    for (i, &g) in grid.scale_gaps.iter().enumerate() {
        if g > 0.0 {
            groups.push((start, i));
            gaps.push(g);
            start = i + 1;
        }
    }
    groups.push((start, n - 1));

    let k = groups.len();
    let mut state_of_point = vec![0; n];
    let mut masses = Vec::with_capacity(k);
    let mut positions = Vec::with_capacity(k);
    for (s, &(a, b)) in groups.iter().enumerate() {
        let mass: f64 = grid.cell_masses[a..=b].iter().sum();
        let moment: f64 = (a..=b).map(|i| grid.cell_masses[i] * grid.points[i]).sum();
        masses.push(mass);
        positions.push(moment / mass);
        state_of_point[a..=b].fill(s);
    }
    let conductances: Vec<f64> = gaps.iter().map(|g| 0.5 / g).collect();
    let mut pinned = vec![false; k];
    if boundary.left == BoundaryCondition::Dirichlet {
        pinned[0] = true;
    }
    if boundary.right == BoundaryCondition::Dirichlet {
        pinned[k - 1] = true;
    }

    let mut sub = vec![0.0; k];
    let mut diag = vec![0.0; k];
    let mut sup = vec![0.0; k];
    for i in 0..k {
        if pinned[i] {
            continue;
        }
        if i > 0 {
            sub[i] = conductances[i - 1] / masses[i];
        }
        if i + 1 < k {
            sup[i] = conductances[i] / masses[i];
        }
        diag[i] = -(sub[i] + sup[i]);
    }

    DiscreteForm {
        grid,
        boundary,
        merged_groups: groups,
        state_of_point,
        masses,
        gaps,
        conductances,
        pinned,
        positions,
        sub_diagonal: sub,
        diagonal: diag,
        super_diagonal: sup,
    }
}

impl DiscreteForm {
    pub fn n_states(&self) -> usize {
        self.masses.len()
    }

    /// `L u` on states; pinned rows are zero.
    pub fn apply_generator(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_states(), u.len())?;
        let k = self.n_states();
        Ok((0..k)
            .map(|i| {
                let mut acc = self.diagonal[i] * u[i];
                if i > 0 {
                    acc += self.sub_diagonal[i] * u[i - 1];
                }
                if i + 1 < k {
                    acc += self.super_diagonal[i] * u[i + 1];
                }
                acc
            })
            .collect())
    }

    /// Mass-weighted average of a grid-point function over each state: the
    /// `L²(m)`-orthogonal projection onto functions constant on merged groups.
    pub fn project(&self, point_values: &[f64]) -> Result<Vec<f64>> {
        check_len(self.grid.len(), point_values.len())?;
        let mut out: Vec<f64> = self
            .merged_groups
            .iter()
            .zip(&self.masses)
            .map(|(&(a, b), &mass)| (a..=b).map(|i| self.grid.cell_masses[i] * point_values[i]).sum::<f64>() / mass)
            .collect();
        for (v, &p) in out.iter_mut().zip(&self.pinned) {
            if p {
                *v = 0.0;
            }
        }
        Ok(out)
    }

    /// Extends a state function to grid points, constant on each group.
    pub fn lift(&self, state_values: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_states(), state_values.len())?;
        Ok(self.state_of_point.iter().map(|&s| state_values[s]).collect())
    }

    /// Evaluates `f` at the state positions.
    pub fn state_function(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.positions.iter().zip(&self.pinned).map(|(&x, &p)| if p { 0.0 } else { f(x) }).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("form serializes")
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `½ Σ (u_{i+1} - u_i)(v_{i+1} - v_i) / Δs_i` over consecutive states.
pub fn energy(form: &DiscreteForm, u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(form.n_states(), u.len())?;
    check_len(form.n_states(), v.len())?;
    Ok(form.gaps.iter().enumerate().map(|(i, &g)| 0.5 * (u[i + 1] - u[i]) * (v[i + 1] - v[i]) / g).sum())
}

/// Forms of a whole characteristic family assembled on one common grid.
#[derive(Debug, Clone)]
pub struct FormFamily {
    pub family: CharacteristicFamily,
    pub scales: Vec<ScaleFunction>,
    pub limit_scale: ScaleFunction,
    pub forms: Vec<DiscreteForm>,
    /// `None` when the limit scale is flat on the whole window.
    pub limit_form: Option<DiscreteForm>,
}

pub fn assemble_family(
    domain: &DomainSpec,
    s: &ScaleFunction,
    m: &SpeedMeasure,
    family: &CharacteristicFamily,
    n_cells: usize,
    boundary: Boundary,
    base_point: f64,
) -> Result<FormFamily> {
    let scales = family.sets.iter().map(|g| derive_subscale(s, g, base_point)).collect::<Result<Vec<_>>>()?;
    let limit_scale = derive_subscale(s, &family.limit, base_point)?;
    let grid = build_grid_with(domain, s, m, n_cells, &family.endpoints())?;
    let forms = scales.iter().map(|sn| assemble_form(grid.with_scale(sn), boundary)).collect::<Result<Vec<_>>>()?;
    let limit_form = match assemble_form(grid.with_scale(&limit_scale), boundary) {
        Ok(f) => Some(f),
        Err(Error::DegenerateScale) => None,
        Err(e) => return Err(e),
    };
    Ok(FormFamily { family: family.clone(), scales, limit_scale, forms, limit_form })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryClass {
    pub endpoint: Side,
    pub approachable: bool,
    #[serde(with = "extended_real")]
    pub test_integral: f64,
}

mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Num(v) => v,
            Repr::Str(s) if s == "inf" => f64::INFINITY,
            Repr::Str(_) => f64::NAN,
        })
    }
}

/// Partial sums beyond this threshold, with nondecreasing increments, certify
/// divergence toward an infinite endpoint.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Feller test integral `∫_a^c m((x, c)) ds(x)` (left) or
/// `∫_c^b m((c, x)) ds(x)` (right).
///
/// Finite endpoints are integrated exactly piece by piece. Infinite endpoints
/// are approached through `expansion_steps` geometrically growing cells.
pub fn classify_boundary(
    domain: &DomainSpec,
    s: &ScaleFunction,
    m: &SpeedMeasure,
    endpoint: Side,
    c: f64,
    expansion_steps: usize,
) -> Result<BoundaryClass> {
    if !(c > domain.a && c < domain.b) {
        return Err(Error::DomainMismatch(format!("c = {c} not inside the domain")));
    }
    let end = match endpoint {
        Side::Left => domain.a,
        Side::Right => domain.b,
    };
    let partial = |far: f64| match endpoint {
        Side::Left => left_test_integral(s, m, far, c),
        Side::Right => right_test_integral(s, m, c, far),
    };
    let test_integral = if end.is_finite() {
        partial(end)
    } else {
        let base = domain.width().max((c - domain.lo()).abs()).max((domain.hi() - c).abs()).max(1.0);
        let sign = if endpoint == Side::Left { -1.0 } else { 1.0 };
        let mut prev_sum = 0.0;
        let mut prev_inc = 0.0;
        let mut monotone = true;
        let mut value = 0.0;
        let mut diverged = false;
        for k in 0..expansion_steps {
            let far = c + sign * base * 2f64.powi(k as i32);
            let sum = partial(far);
            let inc = sum - prev_sum;
            if k > 0 && inc < prev_inc {
                monotone = false;
            }
            prev_sum = sum;
            prev_inc = inc;
            value = sum;
            if !sum.is_finite() || (sum > DIVERGENCE_THRESHOLD && monotone) {
                diverged = true;
                break;
            }
        }
        if diverged {
            f64::INFINITY
        } else {
            value
        }
    };
    Ok(BoundaryClass { endpoint, approachable: test_integral < f64::INFINITY, test_integral })
}

fn pieces(s: &ScaleFunction, m: &SpeedMeasure, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts: Vec<f64> =
        s.knot_xs().chain(m.interior_points(lo, hi)).filter(|&x| x > lo && x < hi).chain([lo, hi]).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn left_test_integral(s: &ScaleFunction, m: &SpeedMeasure, lo: f64, c: f64) -> f64 {
    let pts = pieces(s, m, lo, c);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let mid = 0.5 * (p + q);
        let slope = s.slope_at(mid);
        let rho = m.density_at(mid);
        // m((x, c)) = ρ (q - x) + m([q, c)) for x in (p, q)
        let tail = m.density_mass(q, c) + m.atoms().iter().filter(|a| a.0 >= q && a.0 < c).map(|a| a.1).sum::<f64>();
        total += slope * (0.5 * rho * (q - p) * (q - p) + tail * (q - p));
    }
    total
}

fn right_test_integral(s: &ScaleFunction, m: &SpeedMeasure, c: f64, hi: f64) -> f64 {
    let pts = pieces(s, m, c, hi);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let mid = 0.5 * (p + q);
        let slope = s.slope_at(mid);
        let rho = m.density_at(mid);
        // m((c, x)) = m((c, p]) + ρ (x - p) for x in (p, q)
        let head = m.density_mass(c, p) + m.atoms().iter().filter(|a| a.0 > c && a.0 <= p).map(|a| a.1).sum::<f64>();
        total += slope * (head * (q - p) + 0.5 * rho * (q - p) * (q - p));
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn unit_setup(n: usize) -> (DomainSpec, ScaleFunction, SpeedMeasure, Grid) {
        let d = DomainSpec::bounded(0.0, 1.0).unwrap();
        let s = ScaleFunction::identity(0.0, 1.0, 0.5).unwrap();
        let m = SpeedMeasure::uniform(0.0, 1.0, 1.0).unwrap();
        let g = build_grid(&d, &s, &m, n).unwrap();
        (d, s, m, g)
    }

    #[test]
    fn uniform_cell_masses_with_half_end_cells() {
        let (_, _, _, g) = unit_setup(4);
        assert_eq!(g.points, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.cell_masses, vec![0.125, 0.25, 0.25, 0.25, 0.125]);
        assert_abs_diff_eq!(g.total_mass(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn atom_lands_in_its_cell() {
        let d = DomainSpec::bounded(0.0, 1.0).unwrap();
        let s = ScaleFunction::identity(0.0, 1.0, 0.5).unwrap();
        let m = SpeedMeasure::uniform(0.0, 1.0, 1.0).unwrap().with_atoms(vec![(0.5, 2.0)]).unwrap();
        let g = build_grid(&d, &s, &m, 4).unwrap();
        assert_eq!(g.cell_masses[2], 2.25);
    }

    #[test]
    fn grid_contains_knots_and_rejects_tiny_n() {
        let d = DomainSpec::bounded(0.0, 1.0).unwrap();
        let s = ScaleFunction::from_knots(vec![(0.0, 0.0), (0.3, 0.1), (0.77, 0.5), (1.0, 1.0)], 0.5).unwrap();
        let m = SpeedMeasure::uniform(0.0, 1.0, 1.0).unwrap();
        let g = build_grid(&d, &s, &m, 10).unwrap();
        for x in s.knot_xs() {
            assert!(g.points.contains(&x));
        }
        assert!(matches!(build_grid(&d, &s, &m, 2), Err(Error::GridTooSmall(_))));
    }

    #[test]
    fn stencil_reproduces_half_second_derivative() {
        let (_, _, _, g) = unit_setup(50);
        let form = assemble_form(g, Boundary::NEUMANN).unwrap();
        let u: Vec<f64> = form.positions.iter().map(|x| x * x).collect();
        let lu = form.apply_generator(&u).unwrap();
        for v in &lu[1..lu.len() - 1] {
            assert_relative_eq!(*v, 1.0, max_relative = 1e-9);
        }
        let h = 1.0 / 50.0;
        assert_relative_eq!(form.super_diagonal[10], 1.0 / (2.0 * h * h), max_relative = 1e-9);
        assert_relative_eq!(form.diagonal[10], -1.0 / (h * h), max_relative = 1e-9);
    }

    #[test]
    fn rows_sum_to_zero_and_detailed_balance() {
        let d = DomainSpec::bounded(0.0, 1.0).unwrap();
        let s = ScaleFunction::from_knots(vec![(0.0, 0.0), (0.4, 0.1), (0.6, 0.1), (1.0, 2.0)], 0.5).unwrap();
        let m = SpeedMeasure::step(vec![0.0, 0.3, 1.0], vec![2.0, 0.5]).unwrap();
        let form = assemble_form(build_grid(&d, &s, &m, 20).unwrap(), Boundary::NEUMANN).unwrap();
        for i in 0..form.n_states() {
            assert_abs_diff_eq!(form.sub_diagonal[i] + form.diagonal[i] + form.super_diagonal[i], 0.0, epsilon = 1e-9);
        }
        for i in 0..form.n_states() - 1 {
            assert_relative_eq!(
                form.masses[i] * form.super_diagonal[i],
                form.masses[i + 1] * form.sub_diagonal[i + 1],
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn flat_stretch_merges_into_one_state() {
        let d = DomainSpec::bounded(0.0, 1.0).unwrap();
        let s = ScaleFunction::from_knots(vec![(0.0, 0.0), (0.4, 0.4), (0.6, 0.4), (1.0, 0.8)], 0.5).unwrap();
        let m = SpeedMeasure::uniform(0.0, 1.0, 1.0).unwrap();
        let grid = build_grid(&d, &s, &m, 10).unwrap();
        let total = grid.total_mass();
        let form = assemble_form(grid, Boundary::NEUMANN).unwrap();
        assert_eq!(form.n_states(), 9);
        let sticky = form.state_of_point[5];
        assert_eq!(form.merged_groups[sticky], (4, 6));
        assert_abs_diff_eq!(form.masses[sticky], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(form.masses.iter().sum::<f64>(), total, epsilon = 1e-14);
        assert_relative_eq!(form.conductances[sticky - 1], 0.5 / 0.1, max_relative = 1e-12);
        assert_relative_eq!(form.conductances[sticky], 0.5 / 0.1, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_scale_is_rejected() {
        let g = Grid::new(vec![0.0, 0.5, 1.0], vec![0.25, 0.5, 0.25], vec![0.0, 0.0]).unwrap();
        assert_eq!(assemble_form(g, Boundary::NEUMANN).unwrap_err(), Error::DegenerateScale);
    }

    #[test]
    fn collapsed_form_is_one_sticky_state() {
        let (_, _, _, g) = unit_setup(8);
        let form = collapsed_form(&g, Boundary::NEUMANN);
        assert_eq!(form.n_states(), 1);
        assert_abs_diff_eq!(form.masses[0], 1.0, epsilon = 1e-15);
        assert_eq!(form.apply_generator(&[2.0]).unwrap(), vec![0.0]);
        let u: Vec<f64> = g.points.iter().map(|x| x * x).collect();
        let mean: f64 = u.iter().zip(&g.cell_masses).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(form.project(&u).unwrap()[0], mean, epsilon = 1e-15);
        assert!(collapsed_form(&g, Boundary::DIRICHLET).pinned[0]);
    }

    #[test]
    fn energy_closed_forms() {
        let (_, _, _, g) = unit_setup(40);
        let form = assemble_form(g, Boundary::NEUMANN).unwrap();
        let c = vec![3.0; form.n_states()];
        assert_eq!(energy(&form, &c, &c).unwrap(), 0.0);
        let x = form.positions.clone();
        assert_relative_eq!(energy(&form, &x, &x).unwrap(), 0.5, max_relative = 1e-12);
        assert!(energy(&form, &x, &x[1..]).is_err());
    }

    #[test]
    fn dirichlet_pins_end_states() {
        let (_, _, _, g) = unit_setup(10);
        let form = assemble_form(g, Boundary::DIRICHLET).unwrap();
        assert!(form.pinned[0] && form.pinned[10]);
        assert_eq!(form.diagonal[0], 0.0);
        assert!(form.sub_diagonal[1] > 0.0);
        let p = form.project(&[1.0; 11]).unwrap();
        assert_eq!(p[0], 0.0);
        assert_eq!(p[5], 1.0);
    }

    #[test]
    fn json_round_trip() {
        let (_, _, _, g) = unit_setup(5);
        let form = assemble_form(g, Boundary::NEUMANN).unwrap();
        let back: DiscreteForm = serde_json::from_str(&form.to_json()).unwrap();
        assert_eq!(back, form);
    }

    #[test]
    fn finite_endpoint_test_integral() {
        let d = DomainSpec::bounded(0.0, 1.0).unwrap();
        let s = ScaleFunction::identity(0.0, 1.0, 0.5).unwrap();
        let m = SpeedMeasure::uniform(0.0, 1.0, 1.0).unwrap();
        assert!(classify_boundary(&d, &s, &m, Side::Left, 1.0, 64).is_err());
        let c = 0.999_999;
        let bc2 = classify_boundary(&d, &s, &m, Side::Left, c, 64).unwrap();
        assert_relative_eq!(bc2.test_integral, c * c / 2.0, max_relative = 1e-12);
        assert!(bc2.approachable);
        let right = classify_boundary(&d, &s, &m, Side::Right, 0.25, 64).unwrap();
        assert_relative_eq!(right.test_integral, 0.75 * 0.75 / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn infinite_endpoint_diverges_even_with_atoms() {
        let d = DomainSpec::new(f64::NEG_INFINITY, 1.0, (-1.0, 1.0)).unwrap();
        let s = ScaleFunction::identity(-1.0, 1.0, 0.0).unwrap();
        let m = SpeedMeasure::uniform(-1.0, 1.0, 1.0).unwrap();
        let bc = classify_boundary(&d, &s, &m, Side::Left, 0.5, 64).unwrap();
        assert!(!bc.approachable);
        assert_eq!(bc.test_integral, f64::INFINITY);
        let m2 = m.clone().with_atoms(vec![(-0.5, 3.0)]).unwrap();
        assert!(!classify_boundary(&d, &s, &m2, Side::Left, 0.5, 64).unwrap().approachable);
        let json = serde_json::to_string(&bc).unwrap();
        assert!(json.contains("\"inf\""));
    }

    #[test]
    fn vanishing_tail_density_is_approachable() {
        let d = DomainSpec::new(0.0, f64::INFINITY, (0.0, 2.0)).unwrap();
        let s = ScaleFunction::identity(0.0, 2.0, 1.0).unwrap();
        let m = SpeedMeasure::step(vec![0.0, 2.0, 3.0], vec![1.0, 0.0]).unwrap();
        // scale is linear forever but m((c, x)) stays bounded: the integral still diverges
        assert!(!classify_boundary(&d, &s, &m, Side::Right, 1.0, 64).unwrap().approachable);
        // flat scale beyond the window: finite
        let s_flat = ScaleFunction::from_knots(vec![(0.0, 0.0), (2.0, 2.0), (2.5, 2.0)], 1.0).unwrap();
        let bc = classify_boundary(&d, &s_flat, &m, Side::Right, 1.0, 64).unwrap();
        assert!(bc.approachable, "{bc:?}");
    }

    proptest! {
        #[test]
        fn unit_contraction_never_raises_energy(u in prop::collection::vec(-2.0f64..3.0, 21)) {
            let d = DomainSpec::bounded(0.0, 1.0).unwrap();
            let s = ScaleFunction::from_knots(vec![(0.0, 0.0), (0.5, 0.05), (1.0, 1.0)], 0.5).unwrap();
            let m = SpeedMeasure::uniform(0.0, 1.0, 1.0).unwrap();
            let form = assemble_form(build_grid(&d, &s, &m, 20).unwrap(), Boundary::NEUMANN).unwrap();
            let u = &u[..form.n_states()];
            let c: Vec<f64> = u.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            prop_assert!(energy(&form, &c, &c).unwrap() <= energy(&form, u, u).unwrap() + 1e-12);
            prop_assert!(energy(&form, u, u).unwrap() >= 0.0);
        }
    }
}
