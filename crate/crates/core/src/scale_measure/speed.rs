use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed measure `m = ρ(x) dx + Σ w_j δ_{x_j}` with a step density.
///
/// `breaks` delimit the density cells; the end cells are extended to
/// infinity so masses of arbitrary bounded intervals stay computable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedMeasure {
    breaks: Vec<f64>,
    density: Vec<f64>,
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
}

impl SpeedMeasure {
    pub fn step(breaks: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 || density.len() + 1 != breaks.len() {
            return Err(Error::InvalidMeasure(format!("{} breaks for {} density cells", breaks.len(), density.len())));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidMeasure("breaks must be finite and increasing".into()));
        }
        if density.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidMeasure("density must be finite and nonnegative".into()));
        }
        Ok(Self { breaks, density, atoms: Vec::new() })
    }

    pub fn uniform(lo: f64, hi: f64, density: f64) -> Result<Self> {
        Self::step(vec![lo, hi], vec![density])
    }

    pub fn with_atoms(mut self, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|&(x, w)| !x.is_finite() || !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure("atoms need finite location and positive mass".into()));
        }
        self.atoms = atoms;
        self.atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(self)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density_at(&self, x: f64) -> f64 {
        let i = self.breaks.partition_point(|&b| b <= x);
        self.density[i.clamp(1, self.density.len()) - 1]
    }

    /// Density (absolutely continuous) part of `m((lo, hi))`; may be infinite
    /// for unbounded intervals.
    pub fn density_mass(&self, lo: f64, hi: f64) -> f64 {
        if !(lo < hi) {
            return 0.0;
        }
        let b = &self.breaks;
        let n = self.density.len();
        let mut total = 0.0;
        // cell k spans (edge(k), edge(k+1)) with edges -inf, b[1], …, b[n-1], +inf
        for k in 0..n {
            let cl = if k == 0 { f64::NEG_INFINITY } else { b[k] };
            let cr = if k + 1 == n { f64::INFINITY } else { b[k + 1] };
            let a = lo.max(cl);
            let c = hi.min(cr);
            if a < c && self.density[k] > 0.0 {
                total += self.density[k] * (c - a);
            }
        }
        total
    }

    /// Atom mass located in the closed interval `[lo, hi]`.
    pub fn atom_mass_closed(&self, lo: f64, hi: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 >= lo && a.0 <= hi).map(|a| a.1).sum()
    }

    /// `m((lo, hi))` for the open interval.
    pub fn mass_open(&self, lo: f64, hi: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 > lo && a.0 < hi).map(|a| a.1).sum();
        self.density_mass(lo, hi) + atoms
    }

    /// Breakpoints and atom locations strictly inside `(lo, hi)`.
    pub fn interior_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.breaks.iter().copied().chain(self.atoms.iter().map(|a| a.0)).filter(|&x| x > lo && x < hi).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn masses_in_closed_form() {
        let m = SpeedMeasure::step(vec![0.0, 0.5, 1.0], vec![1.0, 3.0]).unwrap().with_atoms(vec![(0.25, 2.0)]).unwrap();
        assert_abs_diff_eq!(m.mass_open(0.0, 1.0), 0.5 + 1.5 + 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.mass_open(0.25, 1.0), 0.25 + 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.mass_open(0.4, 0.6), 0.1 + 0.3, epsilon = 1e-15);
        // end cells extend past the breaks
        assert_abs_diff_eq!(m.density_mass(-1.0, 0.0), 1.0, epsilon = 1e-15);
        assert_eq!(m.density_mass(f64::NEG_INFINITY, 0.0), f64::INFINITY);
        assert_eq!(m.density_at(0.75), 3.0);
        assert_eq!(m.density_at(7.0), 3.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SpeedMeasure::step(vec![0.0, 1.0], vec![-1.0]).is_err());
        assert!(SpeedMeasure::step(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(SpeedMeasure::uniform(0.0, 1.0, 1.0).unwrap().with_atoms(vec![(0.5, 0.0)]).is_err());
    }
}
