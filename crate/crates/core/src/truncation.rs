//! Truncation functions: bounded, equal to the identity near 0.

use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Truncation function `k`.
///
/// * `Indicator { radius }`: `k(x) = x 1_{|x| <= radius}` (discontinuous).
/// * `Ramp { identity_radius, support_radius }`: identity on `|x| <= a0`,
///   linear decay to 0 at `|x| = a1`, zero beyond (continuous).
/// * `Clamp { radius }`: `k(x) = max(-a, min(a, x))`, bounded but without
///   compact support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationFn {
    Indicator { radius: f64 },
    Ramp { identity_radius: f64, support_radius: f64 },
    Clamp { radius: f64 },
}

impl TruncationFn {
    pub fn indicator(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("identity_radius", "must be positive and finite"));
        }
        Ok(Self::Indicator { radius })
    }

    pub fn ramp(identity_radius: f64, support_radius: f64) -> Result<Self> {
        if !(identity_radius > 0.0 && support_radius > identity_radius && support_radius.is_finite()) {
            return Err(invalid("support_radius", "need 0 < identity_radius < support_radius < inf"));
        }
        Ok(Self::Ramp { identity_radius, support_radius })
    }

    pub fn clamp(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("identity_radius", "must be positive and finite"));
        }
        Ok(Self::Clamp { radius })
    }

    /// From the two radii of the triplet JSON schema: equal radii give an
    /// indicator, a finite larger support a ramp, infinite support a clamp.
    pub fn from_radii(identity_radius: f64, support_radius: f64) -> Result<Self> {
        if support_radius.is_infinite() {
            Self::clamp(identity_radius)
        } else if support_radius == identity_radius {
            Self::indicator(identity_radius)
        } else {
            Self::ramp(identity_radius, support_radius)
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let ax = libm::fabs(x);
        match *self {
            Self::Indicator { radius } => {
                if ax <= radius {
                    x
                } else {
                    0.0
                }
            }
            Self::Ramp { identity_radius: a0, support_radius: a1 } => {
                if ax <= a0 {
                    x
                } else if ax < a1 {
                    libm::copysign(a0 * (a1 - ax) / (a1 - a0), x)
                } else {
                    0.0
                }
            }
            Self::Clamp { radius } => x.clamp(-radius, radius),
        }
    }

    /// `k(x) / x`, with the value 1 at `x = 0`.
    #[inline]
    pub fn ratio(&self, x: f64) -> f64 {
        if libm::fabs(x) <= self.identity_radius() {
            1.0
        } else {
            self.eval(x) / x
        }
    }

    pub fn identity_radius(&self) -> f64 {
        match *self {
            Self::Indicator { radius } | Self::Clamp { radius } => radius,
            Self::Ramp { identity_radius, .. } => identity_radius,
        }
    }

    pub fn support_radius(&self) -> f64 {
        match *self {
            Self::Indicator { radius } => radius,
            Self::Ramp { support_radius, .. } => support_radius,
            Self::Clamp { .. } => f64::INFINITY,
        }
    }

    /// `sup |k|`.
    pub fn bound(&self) -> f64 {
        self.identity_radius()
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Self::Indicator { .. })
    }

    /// Points where `k` is not smooth; quadrature splits there.
    pub fn breakpoints(&self) -> Vec<f64> {
        let a0 = self.identity_radius();
        let a1 = self.support_radius();
        let mut v = alloc::vec![-a0, a0];
        if a1.is_finite() && a1 != a0 {
            v.extend([-a1, a1]);
        }
        v
    }

    /// Numerical check of the defining properties on a probe grid.
    pub fn check(&self) -> Result<()> {
        let a0 = self.identity_radius();
        let reach = if self.support_radius().is_finite() { self.support_radius() } else { 4.0 * a0 };
        let n = 2001;
        for i in 0..n {
            let x = -2.0 * reach + 4.0 * reach * i as f64 / (n - 1) as f64;
            let k = self.eval(x);
            if libm::fabs(x) <= a0 && k != x {
                return Err(invalid("truncation", "k(x) != x inside the identity radius"));
            }
            if libm::fabs(k) > self.bound() {
                return Err(invalid("truncation", "|k| exceeds its declared bound"));
            }
            if libm::fabs(x) > self.support_radius() && k != 0.0 {
                return Err(invalid("truncation", "k nonzero outside its support"));
            }
        }
        Ok(())
    }
}
