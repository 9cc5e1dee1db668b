//! Sorted unions of disjoint closed intervals on the real line, and the
//! per-constraint solvers that produce them.

use serde::Serialize;

/// Coefficients at or below this magnitude are treated as zero when solving
/// `p + q z + r z^2 >= 0`.
pub const COEFF_EPS: f64 = 1e-12;

/// A finite union of sorted, pairwise disjoint intervals `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TruncationRegion {
    intervals: Vec<(f64, f64)>,
}

impl TruncationRegion {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(lo: f64, hi: f64) -> Self {
        Self::from_intervals([(lo, hi)], 0.0)
    }

    /// Normalizes arbitrary intervals: drops empty or degenerate ones, sorts, and
    /// merges neighbours whose gap is at most `merge_gap`.
    pub fn from_intervals<I>(intervals: I, merge_gap: f64) -> Self
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut raw: Vec<(f64, f64)> = intervals
            .into_iter()
            .filter(|&(lo, hi)| lo <= hi && !lo.is_nan() && !hi.is_nan())
            .collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (lo, hi) in raw {
            match merged.last_mut() {
                Some(last) if lo - last.1 <= merge_gap => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        merged.retain(|&(lo, hi)| lo < hi);
        Self { intervals: merged }
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

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    pub fn contains(&self, z: f64, tol: f64) -> bool {
        self.intervals
            .iter()
            .any(|&(lo, hi)| z >= lo - tol && z <= hi + tol)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a_lo, a_hi) = self.intervals[i];
            let (b_lo, b_hi) = other.intervals[j];
            let lo = a_lo.max(b_lo);
            let hi = a_hi.min(b_hi);
            if lo < hi {
                out.push((lo, hi));
            }
            if a_hi < b_hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self { intervals: out }
    }

    pub fn clip(&self, lo: f64, hi: f64) -> Self {
        self.intersect(&Self::single(lo, hi))
    }

    /// Lebesgue measure of the symmetric difference.
    pub fn symmetric_difference_length(&self, other: &Self) -> f64 {
        let common = self.intersect(other).total_length();
        (self.total_length() - common) + (other.total_length() - common)
    }

    /// True when every interval of `self` lies inside `other` up to `tol` at the ends.
    pub fn is_subset_of(&self, other: &Self, tol: f64) -> bool {
        self.intervals.iter().all(|&(lo, hi)| {
            other
                .intervals
                .iter()
                .any(|&(o_lo, o_hi)| lo >= o_lo - tol && hi <= o_hi + tol)
        })
    }
}

/// Maximal interval around `z` on which `p + q z + r z^2 >= 0`.
///
/// When `z` itself violates the constraint by rounding, the returned interval is
/// widened to include `z`; the caller certified feasibility at `z` by other means.
pub fn quadratic_interval_around(p: f64, q: f64, r: f64, z: f64) -> (f64, f64) {
    let (lo, hi) = if r.abs() <= COEFF_EPS {
        linear_interval(p, q)
    } else {
        let disc = q * q - 4.0 * p * r;
        if disc < 0.0 {
            if r > 0.0 {
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                (z, z)
            }
        } else {
            let sq = disc.sqrt();
            let t = -0.5 * (q + q.signum() * sq);
            let (mut z1, mut z2) = if t == 0.0 {
                let root = -q / (2.0 * r);
                (root, root)
            } else {
                (t / r, p / t)
            };
            if z1 > z2 {
                std::mem::swap(&mut z1, &mut z2);
            }
            if r > 0.0 {
                if z <= 0.5 * (z1 + z2) {
                    (f64::NEG_INFINITY, z1)
                } else {
                    (z2, f64::INFINITY)
                }
            } else {
                (z1, z2)
            }
        }
    };
    (lo.min(z), hi.max(z))
}

/// `{z : p + q z >= 0}` as an interval, with the coefficient thresholds applied.
fn linear_interval(p: f64, q: f64) -> (f64, f64) {
    if q.abs() <= COEFF_EPS {
        if p >= -COEFF_EPS {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (f64::INFINITY, f64::NEG_INFINITY)
        }
    } else if q > 0.0 {
        (-p / q, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, -p / q)
    }
}

/// Running intersection of half-lines `offset + slope * z >= 0`.
#[derive(Debug, Clone, Copy)]
pub struct HalfLines {
    lo: f64,
    hi: f64,
}

impl Default for HalfLines {
    fn default() -> Self {
        Self::new()
    }
}

impl HalfLines {
    pub fn new() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn add(&mut self, offset: f64, slope: f64) {
        // Exact zero test here: these slopes come from dense linear algebra and a
        // tiny slope still carries a genuine (far away) boundary.
        if slope > 0.0 {
            self.lo = self.lo.max(-offset / slope);
        } else if slope < 0.0 {
            self.hi = self.hi.min(-offset / slope);
        }
    }

    /// Exact intersection; `lo > hi` when empty.
    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn around(&self, z: f64) -> (f64, f64) {
        (self.lo.min(z), self.hi.max(z))
    }
}
