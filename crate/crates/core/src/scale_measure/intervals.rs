use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State space `(a, b)` of the diffusion together with the finite window used
/// for desk-scale truncation.
///
/// Either endpoint may be infinite. When an endpoint is finite the window is
/// allowed to reach it, since that is where boundary conditions are imposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub a: f64,
    pub b: f64,
    pub window: (f64, f64),
}

impl DomainSpec {
    pub fn new(a: f64, b: f64, window: (f64, f64)) -> Result<Self> {
        let d = Self { a, b, window };
        d.validate()?;
        Ok(d)
    }

    /// Finite domain whose window is the whole interval.
    pub fn bounded(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, (a, b))
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.window;
        if self.a.is_nan() || self.b.is_nan() || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidDomain("window must be finite".into()));
        }
        let left_ok = if self.a.is_finite() { self.a <= lo } else { self.a < lo };
        let right_ok = if self.b.is_finite() { hi <= self.b } else { hi < self.b };
        if !(left_ok && lo < hi && right_ok) {
            return Err(Error::InvalidDomain(format!(
                "need a < window.lo < window.hi < b, got a={}, window=({lo}, {hi}), b={}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    pub fn lo(&self) -> f64 {
        self.window.0
    }

    pub fn hi(&self) -> f64 {
        self.window.1
    }

    pub fn width(&self) -> f64 {
        self.window.1 - self.window.0
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.window.0 + self.window.1)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.window.0 && x <= self.window.1
    }

    pub fn window_set(&self) -> IntervalUnion {
        IntervalUnion::single(self.window.0, self.window.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetOp {
    Union,
    Intersect,
    Diff,
}

/// Finite union of disjoint open intervals, kept in canonical form: sorted,
/// nonempty members, and a gap of positive length between neighbours.
///
/// Sets that differ by finitely many points share one representative, so
/// `(0, 0.5) ∪ (0.5, 1)` normalizes to `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "Vec<[f64; 2]>", try_from = "Vec<[f64; 2]>")]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(lo: f64, hi: f64) -> Self {
        Self::from_pairs(vec![(lo, hi)])
    }

    /// Builds the canonical representative of the union of `pairs`. Pairs with
    /// `lo >= hi` are empty and dropped.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.retain(|&(lo, hi)| lo < hi);
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (lo, hi) in pairs {
            match out.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        Self { intervals: out }
    }

    pub fn try_from_pairs(pairs: Vec<(f64, f64)>) -> Result<Self> {
        for &(lo, hi) in &pairs {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidInterval { lo, hi });
            }
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    /// Membership in the open set.
    pub fn contains(&self, x: f64) -> bool {
        let idx = self.intervals.partition_point(|&(lo, _)| lo < x);
        idx > 0 && x < self.intervals[idx - 1].1
    }

    pub fn lebesgue(&self) -> f64 {
        self.intervals.iter().map(|&(lo, hi)| hi - lo).sum()
    }

    pub fn endpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.intervals.iter().flat_map(|&(lo, hi)| [lo, hi])
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut pairs = self.intervals.clone();
        pairs.extend_from_slice(&other.intervals);
        Self::from_pairs(pairs)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if lo < hi {
                out.push((lo, hi));
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_pairs(out)
    }

    /// Complement inside `(lo, hi)`, with isolated points discarded.
    pub fn complement_within(&self, lo: f64, hi: f64) -> Self {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut cursor = lo;
        for &(a, b) in &self.intervals {
            if b <= lo || a >= hi {
                continue;
            }
            if a > cursor {
                out.push((cursor, a.min(hi)));
            }
            cursor = cursor.max(b);
        }
        if cursor < hi {
            out.push((cursor, hi));
        }
        Self::from_pairs(out)
    }

    pub fn difference(&self, other: &Self) -> Self {
        let Some(lo) = self.intervals.first().map(|p| p.0) else {
            return Self::empty();
        };
        let hi = self.intervals.last().map(|p| p.1).unwrap_or(lo);
        self.intersect(&other.complement_within(lo, hi))
    }

    pub fn clip(&self, lo: f64, hi: f64) -> Self {
        self.intersect(&Self::single(lo, hi))
    }

    /// Inclusion up to the canonical normalization.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.difference(other).is_empty()
    }

    /// True when every member lies inside the closed window.
    pub fn within(&self, domain: &DomainSpec) -> bool {
        self.intervals.iter().all(|&(lo, hi)| lo >= domain.lo() && hi <= domain.hi())
    }
}

impl From<IntervalUnion> for Vec<[f64; 2]> {
    fn from(u: IntervalUnion) -> Self {
        u.intervals.into_iter().map(|(a, b)| [a, b]).collect()
    }
}

impl TryFrom<Vec<[f64; 2]>> for IntervalUnion {
    type Error = Error;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Self::try_from_pairs(v.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

/// Set operation on two interval unions, both clipped to the window first.
pub fn set_op(lhs: &IntervalUnion, rhs: &IntervalUnion, kind: SetOp, window: &DomainSpec) -> IntervalUnion {
    let (lo, hi) = window.window;
    let l = lhs.clip(lo, hi);
    let r = rhs.clip(lo, hi);
    match kind {
        SetOp::Union => l.union(&r),
        SetOp::Intersect => l.intersect(&r),
        SetOp::Diff => l.intersect(&r.complement_within(lo, hi)),
    }
}
