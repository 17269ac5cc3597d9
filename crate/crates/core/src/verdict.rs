//! Three-valued diagnostic verdicts.

use core::fmt;

/// Outcome of a numerical consistency check.
///
/// Band checks use the threshold `tau = 3 se + c eps`: `|mean| <= tau` is
/// consistent, `|mean| > tau + 3 se` is inconsistent, anything in between
/// is inconclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Consistent,
    Inconclusive,
    Inconsistent,
}

impl Verdict {
    pub fn from_band(mean: f64, se: f64, eps_slack: f64) -> Self {
        let tau = 3.0 * se + eps_slack;
        let m = libm::fabs(mean);
        if !m.is_finite() {
            Verdict::Inconsistent
        } else if m <= tau {
            Verdict::Consistent
        } else if m <= tau + 3.0 * se {
            Verdict::Inconclusive
        } else {
            Verdict::Inconsistent
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        }
    }

    /// The worse of two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        self.max(other)
    }

    pub fn all<I: IntoIterator<Item = Verdict>>(it: I) -> Verdict {
        it.into_iter().fold(Verdict::Consistent, Verdict::and)
    }

    pub fn is_consistent(self) -> bool {
        self == Verdict::Consistent
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Inconsistent => "inconsistent",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_thresholds() {
        assert_eq!(Verdict::from_band(0.02, 0.01, 0.0), Verdict::Consistent);
        assert_eq!(Verdict::from_band(-0.05, 0.01, 0.0), Verdict::Inconclusive);
        assert_eq!(Verdict::from_band(0.07, 0.01, 0.0), Verdict::Inconsistent);
        assert_eq!(Verdict::from_band(0.07, 0.01, 0.05), Verdict::Consistent);
        assert_eq!(Verdict::from_band(f64::NAN, 0.01, 0.0), Verdict::Inconsistent);
    }

    #[test]
    fn combine_is_worst() {
        use Verdict::*;
        assert_eq!(Verdict::all([Consistent, Inconclusive, Consistent]), Inconclusive);
        assert_eq!(Consistent.and(Inconsistent), Inconsistent);
        assert_eq!(Verdict::all([]), Consistent);
    }
}
