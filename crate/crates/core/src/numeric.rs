//! Compensated accumulation and weighted moments.
//!
//! Every reduction in the crate goes through [`CompensatedSum`] (Neumaier's
//! variant of Kahan summation) so results do not depend on how atoms are
//! grouped.

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Merges another accumulator (e.g. from a different shard).
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl core::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Standard deviations below this are treated as zero when factoring a
/// covariance into correlation times standard deviations.
pub const DEGENERATE_SD: f64 = 1e-12;

/// Weighted first and second moments of a pair of variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub mass: f64,
    pub mean_left: f64,
    pub mean_right: f64,
    pub var_left: f64,
    pub var_right: f64,
    pub cov: f64,
}

impl PairMoments {
    pub fn sd_left(&self) -> f64 {
        sqrt(self.var_left.max(0.0))
    }

    pub fn sd_right(&self) -> f64 {
        sqrt(self.var_right.max(0.0))
    }

    /// Correlation, or `None` when either standard deviation is degenerate.
    pub fn correlation(&self) -> Option<f64> {
        let (a, b) = (self.sd_left(), self.sd_right());
        if a < DEGENERATE_SD || b < DEGENERATE_SD {
            None
        } else {
            Some((self.cov / (a * b)).clamp(-1.0, 1.0))
        }
    }
}

/// Two-pass weighted moments over `(weight, left, right)` triples.
///
/// Weights are normalized by their total; a zero total yields `None`.
pub fn pair_moments(samples: &[(f64, f64, f64)]) -> Option<PairMoments> {
    let mass = sum(samples.iter().map(|s| s.0));
    if !(mass > 0.0) {
        return None;
    }
    let mean_left = sum(samples.iter().map(|s| s.0 * s.1)) / mass;
    let mean_right = sum(samples.iter().map(|s| s.0 * s.2)) / mass;
    let mut vl = CompensatedSum::new();
    let mut vr = CompensatedSum::new();
    let mut cv = CompensatedSum::new();
    for &(w, l, r) in samples {
        let dl = l - mean_left;
        let dr = r - mean_right;
        vl.add(w * dl * dl);
        vr.add(w * dr * dr);
        cv.add(w * dl * dr);
    }
    Some(PairMoments {
        mass,
        mean_left,
        mean_right,
        var_left: vl.value() / mass,
        var_right: vr.value() / mass,
        cov: cv.value() / mass,
    })
}
