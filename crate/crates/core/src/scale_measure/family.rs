use serde::{Deserialize, Serialize};

use super::intervals::{DomainSpec, IntervalUnion};
use super::scale::{derive_subscale, stieltjes_measure, ScaleFunction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Decreasing,
    Increasing,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Decreasing => "decreasing",
            Direction::Increasing => "increasing",
        })
    }
}

/// Monotone sequence of characteristic sets `G_n` with its limit set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicFamily {
    /// Sequence index attached to each set (the `n` in `G_n`).
    pub indices: Vec<u32>,
    pub sets: Vec<IntervalUnion>,
    pub direction: Direction,
    pub limit: IntervalUnion,
}

impl CharacteristicFamily {
    /// Checks nesting and uses the finite intersection (decreasing) or union
    /// (increasing) as the limit.
    pub fn new(indices: Vec<u32>, sets: Vec<IntervalUnion>, direction: Direction) -> Result<Self> {
        check_nesting(&sets, direction)?;
        let limit = match direction {
            Direction::Decreasing => sets.iter().skip(1).fold(sets[0].clone(), |acc, g| acc.intersect(g)),
            Direction::Increasing => sets.iter().skip(1).fold(sets[0].clone(), |acc, g| acc.union(g)),
        };
        Ok(Self { indices, sets, direction, limit })
    }

    /// Family with an explicitly supplied asymptotic limit, which must bound
    /// every member from the correct side.
    pub fn with_limit(
        indices: Vec<u32>,
        sets: Vec<IntervalUnion>,
        direction: Direction,
        limit: IntervalUnion,
    ) -> Result<Self> {
        check_nesting(&sets, direction)?;
        for (i, g) in sets.iter().enumerate() {
            let ok = match direction {
                Direction::Decreasing => limit.is_subset_of(g),
                Direction::Increasing => g.is_subset_of(&limit),
            };
            if !ok {
                return Err(Error::NotNested { index: i });
            }
        }
        Ok(Self { indices, sets, direction, limit })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Every interval endpoint appearing in the family or its limit.
    pub fn endpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> =
            self.sets.iter().chain(std::iter::once(&self.limit)).flat_map(|g| g.endpoints()).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

/// Returns the first index whose successor breaks the required nesting.
pub fn check_nesting(sets: &[IntervalUnion], direction: Direction) -> Result<()> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("family needs at least one set".into()));
    }
    for (i, w) in sets.windows(2).enumerate() {
        let ok = match direction {
            Direction::Decreasing => w[1].is_subset_of(&w[0]),
            Direction::Increasing => w[0].is_subset_of(&w[1]),
        };
        if !ok {
            return Err(Error::NotNested { index: i + 1 });
        }
    }
    Ok(())
}

/// The first `count` dyadic rationals of the window in breadth-first depth
/// order: midpoint, then quarter points, then eighths, …
pub fn dyadic_rationals(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut depth = 1u32;
    while out.len() < count {
        let denom = 2f64.powi(depth as i32);
        let mut j = 1u64;
        while (j as f64) < denom && out.len() < count {
            out.push(lo + (hi - lo) * (j as f64) / denom);
            j += 2;
        }
        depth += 1;
    }
    out
}

/// Truncated rational-cover family: `G_n = ∪_{k≤K} (r_k - 1/(2^{k+1} n), r_k + 1/(2^{k+1} n))`
/// intersected with the window, for each `n` in `n_list`.
///
/// Intervals whose radius falls below the floating-point spacing at `r_k`
/// collapse to empty sets and are dropped by normalization.
pub fn example26_family(window: &DomainSpec, k_count: usize, n_list: &[u32]) -> Result<CharacteristicFamily> {
    if k_count == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_list must be positive and strictly increasing".into()));
    }
    let rationals = dyadic_rationals(window.lo(), window.hi(), k_count);
    let sets = n_list
        .iter()
        .map(|&n| {
            let pairs = rationals
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    let radius = 0.5f64.powi(i as i32 + 2) / n as f64;
                    (r - radius, r + radius)
                })
                .collect();
            IntervalUnion::from_pairs(pairs).clip(window.lo(), window.hi())
        })
        .collect();
    CharacteristicFamily::new(n_list.to_vec(), sets, Direction::Decreasing)
}

/// `G_n = window ∖ [center, center + width/n]`; increasing in `n` with limit
/// the full window (the removed point is a null set).
pub fn single_removed_interval_family(
    window: &DomainSpec,
    center: f64,
    width: f64,
    n_list: &[u32],
) -> Result<CharacteristicFamily> {
    if !(width > 0.0) || !window.contains(center) || !window.contains(center + width) {
        return Err(Error::InvalidArgument("removed interval must lie in the window".into()));
    }
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_list must be positive and strictly increasing".into()));
    }
    let full = window.window_set();
    let sets =
        n_list.iter().map(|&n| full.difference(&IntervalUnion::single(center, center + width / n as f64))).collect();
    CharacteristicFamily::with_limit(n_list.to_vec(), sets, Direction::Increasing, full)
}

/// `G_n = window ∖ [lo + width/n, hi]`: the removed block grows toward
/// `[lo, hi]`, so the sets decrease to `window ∖ [lo, hi]`.
pub fn growing_removed_interval_family(
    window: &DomainSpec,
    lo: f64,
    hi: f64,
    width: f64,
    n_list: &[u32],
) -> Result<CharacteristicFamily> {
    if !(lo < hi) || !window.contains(lo) || !window.contains(hi) || !(width > 0.0) || lo + width >= hi {
        return Err(Error::InvalidArgument("need window ⊇ [lo, hi] and lo + width < hi".into()));
    }
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_list must be positive and strictly increasing".into()));
    }
    let full = window.window_set();
    let sets = n_list.iter().map(|&n| full.difference(&IntervalUnion::single(lo + width / n as f64, hi))).collect();
    let limit = full.difference(&IntervalUnion::single(lo, hi));
    CharacteristicFamily::with_limit(n_list.to_vec(), sets, Direction::Decreasing, limit)
}

/// Values `s_n(x)` along an increasing family together with `s_∞(x)`.
pub fn pointwise_scale_limit(
    family: &CharacteristicFamily,
    s: &ScaleFunction,
    base_point: f64,
    x: f64,
) -> Result<(Vec<f64>, f64)> {
    if family.direction != Direction::Increasing {
        return Err(Error::DirectionMismatch {
            expected: Direction::Increasing.to_string(),
            found: family.direction.to_string(),
        });
    }
    if !s.covers(x) {
        return Err(Error::DomainMismatch(format!("x = {x} outside the scale support")));
    }
    let values = family
        .sets
        .iter()
        .map(|g| derive_subscale(s, g, base_point).map(|sn| sn.eval(x)))
        .collect::<Result<Vec<_>>>()?;
    let limit = derive_subscale(s, &family.limit, base_point)?.eval(x);
    Ok((values, limit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicReport {
    pub ok: bool,
    pub worst_cell: (f64, f64),
    pub worst_mass: f64,
}

/// Certifies `ds(G ∩ cell) > 0` on every cell of width `resolution` tiling
/// the support of `s` (the last cell may be shorter).
pub fn is_characteristic(g: &IntervalUnion, s: &ScaleFunction, resolution: f64) -> Result<CharacteristicReport> {
    let (lo, hi) = s.support();
    if !(resolution > 0.0 && resolution < hi - lo) {
        return Err(Error::InvalidArgument(format!("resolution {resolution} must be in (0, {})", hi - lo)));
    }
    let cells = ((hi - lo) / resolution).ceil() as usize;
    let mut worst = (f64::INFINITY, (lo, hi));
    for c in 0..cells {
        let a = lo + c as f64 * resolution;
        let b = (lo + (c + 1) as f64 * resolution).min(hi);
        let mass = stieltjes_measure(s, &g.clip(a, b))?;
        if mass < worst.0 {
            worst = (mass, (a, b));
        }
    }
    Ok(CharacteristicReport { ok: worst.0 > 0.0, worst_cell: worst.1, worst_mass: worst.0 })
}
