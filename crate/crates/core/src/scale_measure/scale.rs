use serde::{Deserialize, Serialize};

use super::intervals::IntervalUnion;
use crate::error::{Error, Result};

/// Continuous nondecreasing piecewise-linear scale function, normalized so
/// that `s(e) = 0` at its base point `e`.
///
/// Outside the outermost knots the function is extended linearly with the end
/// slopes; boundary tests toward infinite endpoints rely on that extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFunction {
    knots: Vec<(f64, f64)>,
    base_point: f64,
    strict: bool,
}

impl ScaleFunction {
    /// Validates the knots, inserts `base_point` as a knot when needed and
    /// shifts the values so the function vanishes there.
    pub fn from_knots(mut knots: Vec<(f64, f64)>, base_point: f64) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidScale("need at least two knots".into()));
        }
        for w in knots.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err(Error::InvalidScale(format!("knot abscissae not increasing at {}", w[1].0)));
            }
            if !(w[0].1 <= w[1].1) {
                return Err(Error::InvalidScale(format!("scale decreases at {}", w[1].0)));
            }
        }
        if knots.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidScale("knots must be finite".into()));
        }
        let (x0, xn) = (knots[0].0, knots[knots.len() - 1].0);
        if !(base_point >= x0 && base_point <= xn) {
            return Err(Error::InvalidScale(format!("base point {base_point} outside [{x0}, {xn}]")));
        }
        let idx = knots.partition_point(|&(x, _)| x < base_point);
        if knots[idx].0 != base_point {
            let y = interpolate(&knots, base_point);
            knots.insert(idx, (base_point, y));
        }
        let shift = knots[idx].1;
        for k in knots.iter_mut() {
            k.1 -= shift;
        }
        knots[idx].1 = 0.0;
        let strict = knots.windows(2).all(|w| w[0].1 < w[1].1);
        Ok(Self { knots, base_point, strict })
    }

    /// Natural scale `s(x) = x - e` on `[lo, hi]`.
    pub fn identity(lo: f64, hi: f64, base_point: f64) -> Result<Self> {
        Self::from_knots(vec![(lo, lo), (hi, hi)], base_point)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn knot_xs(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.iter().map(|k| k.0)
    }

    pub fn base_point(&self) -> f64 {
        self.base_point
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    /// Closed interval spanned by the knots.
    pub fn support(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    /// Image `s(I)` of the knot span.
    pub fn image(&self) -> (f64, f64) {
        (self.knots[0].1, self.knots[self.knots.len() - 1].1)
    }

    pub fn covers(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x >= lo && x <= hi
    }

    pub fn eval(&self, x: f64) -> f64 {
        interpolate(&self.knots, x)
    }

    /// Slope of the linear piece containing `x` (right-continuous at knots).
    pub fn slope_at(&self, x: f64) -> f64 {
        let k = &self.knots;
        let i = k.partition_point(|&(kx, _)| kx <= x).clamp(1, k.len() - 1);
        (k[i].1 - k[i - 1].1) / (k[i].0 - k[i - 1].0)
    }

    pub fn left_slope(&self) -> f64 {
        let k = &self.knots;
        (k[1].1 - k[0].1) / (k[1].0 - k[0].0)
    }

    pub fn right_slope(&self) -> f64 {
        let k = &self.knots;
        let n = k.len();
        (k[n - 1].1 - k[n - 2].1) / (k[n - 1].0 - k[n - 2].0)
    }

    /// Generalized inverse: the smallest `x` with `s(x) >= y`, clamped to the
    /// knot span.
    pub fn inverse(&self, y: f64) -> f64 {
        let k = &self.knots;
        let i = k.partition_point(|&(_, ky)| ky < y);
        if i == 0 {
            return k[0].0;
        }
        if i == k.len() {
            return k[k.len() - 1].0;
        }
        let (x0, y0) = k[i - 1];
        let (x1, y1) = k[i];
        if y1 == y0 {
            return x0;
        }
        x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    }

    /// The same function with additional knots inserted.
    pub fn refined(&self, xs: impl IntoIterator<Item = f64>) -> Self {
        let mut all: Vec<f64> = self.knot_xs().chain(xs).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        let knots = all.into_iter().map(|x| (x, self.eval(x))).collect();
        let strict = self.strict;
        Self { knots, base_point: self.base_point, strict }
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let i = knots.partition_point(|&(kx, _)| kx < x);
    if i < knots.len() && knots[i].0 == x {
        return knots[i].1;
    }
    let i = i.clamp(1, knots.len() - 1);
    let (x0, y0) = knots[i - 1];
    let (x1, y1) = knots[i];
    y0 + (x - x0) * (y1 - y0) / (x1 - x0)
}

/// `ds(A) = Σ (s(hi) - s(lo))` over the members of `A`.
pub fn stieltjes_measure(s: &ScaleFunction, set: &IntervalUnion) -> Result<f64> {
    let (lo, hi) = s.support();
    let mut total = 0.0;
    for &(a, b) in set.intervals() {
        if a < lo || b > hi {
            return Err(Error::DomainMismatch(format!("interval ({a}, {b}) not inside [{lo}, {hi}]")));
        }
        total += s.eval(b) - s.eval(a);
    }
    Ok(total)
}

/// Scale of the regular subspace with characteristic set `G`:
/// `s̃(x) = ∫_e^x 1_G ds`. Knots are inserted at every boundary of `G`, so the
/// result is flat exactly off `G` at knot resolution.
pub fn derive_subscale(s: &ScaleFunction, g: &IntervalUnion, base_point: f64) -> Result<ScaleFunction> {
    let (lo, hi) = s.support();
    if !(base_point >= lo && base_point <= hi) {
        return Err(Error::DomainMismatch(format!("base point {base_point} outside [{lo}, {hi}]")));
    }
    let mut xs: Vec<f64> =
        s.knot_xs().chain(g.endpoints().filter(|&x| x > lo && x < hi)).chain(std::iter::once(base_point)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let mut acc = 0.0;
    let mut knots = Vec::with_capacity(xs.len());
    knots.push((xs[0], 0.0));
    for w in xs.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let inc = if g.contains(mid) { s.eval(w[1]) - s.eval(w[0]) } else { 0.0 };
        acc += inc;
        knots.push((w[1], acc));
    }
    ScaleFunction::from_knots(knots, base_point)
}
