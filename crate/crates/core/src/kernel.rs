//! Jump-size laws and state-dependent jump kernels `lambda(t,x) q(x, dz)`.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::func::Coef;
use crate::quad::Quadrature;

/// Law of a real random variable with a sampler and an integration rule.
#[derive(Debug, Clone, PartialEq)]
pub enum SizeLaw {
    PointMass(f64),
    /// Finite discrete law; `probs` sum to one.
    Atoms { values: Vec<f64>, probs: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Cauchy { loc: f64, scale: f64 },
    Beta { a: f64, b: f64 },
}

impl SizeLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            SizeLaw::PointMass(v) if !v.is_finite() => Err(invalid("law", "point mass must be finite")),
            SizeLaw::Atoms { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(invalid("law.atoms", "values and probs must be nonempty and of equal length"));
                }
                if probs.iter().any(|p| !(*p >= 0.0)) || libm::fabs(probs.iter().sum::<f64>() - 1.0) > 1e-12 {
                    return Err(invalid("law.probs", "must be nonnegative and sum to 1"));
                }
                Ok(())
            }
            SizeLaw::Uniform { lo, hi } if !(lo < hi) => Err(invalid("law.uniform", "need lo < hi")),
            SizeLaw::Normal { sd, .. } if !(*sd > 0.0) => Err(invalid("law.normal.sd", "must be positive")),
            SizeLaw::Cauchy { scale, .. } if !(*scale > 0.0) => {
                Err(invalid("law.cauchy.scale", "must be positive"))
            }
            SizeLaw::Beta { a, b } if !(*a > 0.0 && *b > 0.0) => {
                Err(invalid("law.beta", "shape parameters must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SizeLaw::PointMass(v) => *v,
            SizeLaw::Atoms { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                values[values.len() - 1]
            }
            SizeLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            SizeLaw::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            SizeLaw::Cauchy { loc, scale } => {
                let u: f64 = rng.random();
                loc + scale * libm::tan(PI * (u - 0.5))
            }
            SizeLaw::Beta { a, b } => Beta::new(*a, *b).expect("validated shapes").sample(rng),
        }
    }

    /// `E[g(Z)]`; `breaks` are points where `g` may be non-smooth.
    pub fn expect<G: FnMut(f64) -> f64>(&self, mut g: G, breaks: &[f64], quad: &Quadrature) -> Result<f64> {
        match self {
            SizeLaw::PointMass(v) => Ok(g(*v)),
            SizeLaw::Atoms { values, probs } => Ok(values.iter().zip(probs).map(|(v, p)| p * g(*v)).sum()),
            SizeLaw::Uniform { lo, hi } => {
                let r = quad.integrate_with_breaks(&mut g, *lo, *hi, breaks)?;
                Ok(r.value / (hi - lo))
            }
            SizeLaw::Normal { mean, sd } => {
                let c = 1.0 / (sd * libm::sqrt(2.0 * PI));
                let r = quad.integrate_with_breaks(
                    |z| {
                        let u = (z - mean) / sd;
                        g(z) * c * libm::exp(-0.5 * u * u)
                    },
                    mean - 12.0 * sd,
                    mean + 12.0 * sd,
                    breaks,
                )?;
                Ok(r.value)
            }
            SizeLaw::Cauchy { loc, scale } => {
                let tb: Vec<f64> = breaks.iter().map(|b| libm::atan((b - loc) / scale)).collect();
                let r = quad.integrate_with_breaks(
                    |th| g(loc + scale * libm::tan(th)) / PI,
                    -FRAC_PI_2,
                    FRAC_PI_2,
                    &tb,
                )?;
                Ok(r.value)
            }
            SizeLaw::Beta { a, b } => {
                let lnb = libm::lgamma(*a) + libm::lgamma(*b) - libm::lgamma(a + b);
                let r = quad.integrate_with_breaks(
                    |z| g(z) * libm::exp((a - 1.0) * libm::log(z) + (b - 1.0) * libm::log1p(-z) - lnb),
                    0.0,
                    1.0,
                    breaks,
                )?;
                Ok(r.value)
            }
        }
    }

    /// Mean, when it exists.
    pub fn mean(&self) -> Option<f64> {
        Some(match self {
            SizeLaw::PointMass(v) => *v,
            SizeLaw::Atoms { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
            SizeLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            SizeLaw::Normal { mean, .. } => *mean,
            SizeLaw::Cauchy { .. } => return None,
            SizeLaw::Beta { a, b } => a / (a + b),
        })
    }
}

/// Jump-size kernel given the pre-jump state `y`.
#[derive(Debug, Clone, PartialEq)]
pub enum SizeKernel {
    /// Size drawn from a fixed law, independent of the state.
    Size(SizeLaw),
    /// New state drawn from a law; the size is `new - y`.
    PostJump(SizeLaw),
    /// New state `1 - y`.
    Reflect,
}

impl SizeKernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            SizeKernel::Size(l) | SizeKernel::PostJump(l) => l.validate(),
            SizeKernel::Reflect => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, y: f64, rng: &mut R) -> f64 {
        match self {
            SizeKernel::Size(l) => l.sample(rng),
            SizeKernel::PostJump(l) => l.sample(rng) - y,
            SizeKernel::Reflect => 1.0 - 2.0 * y,
        }
    }

    /// `int g(z) q(y, dz)` over jump sizes `z`.
    pub fn expect<G: FnMut(f64) -> f64>(
        &self,
        y: f64,
        mut g: G,
        breaks: &[f64],
        quad: &Quadrature,
    ) -> Result<f64> {
        match self {
            SizeKernel::Size(l) => l.expect(g, breaks, quad),
            SizeKernel::PostJump(l) => {
                let shifted: Vec<f64> = breaks.iter().map(|b| b + y).collect();
                l.expect(|z| g(z - y), &shifted, quad)
            }
            SizeKernel::Reflect => Ok(g(1.0 - 2.0 * y)),
        }
    }
}

/// Jump compensator generator `nu(dt, dz) = lambda(t, X_{t-}) q(X_{t-}, dz) dt`.
#[derive(Clone)]
pub struct JumpModel {
    pub intensity: Coef,
    /// Dominating rate used for thinning.
    pub bound: f64,
    pub sizes: SizeKernel,
    pub quad: Quadrature,
}

impl core::fmt::Debug for JumpModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("JumpModel").field("bound", &self.bound).field("sizes", &self.sizes).finish()
    }
}

impl JumpModel {
    pub fn new(intensity: Coef, bound: f64, sizes: SizeKernel) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(invalid("rate_bound", "must be finite and nonnegative"));
        }
        sizes.validate()?;
        Ok(Self { intensity, bound, sizes, quad: Quadrature::default() })
    }

    /// Constant intensity `rate` with state-independent sizes.
    pub fn constant(rate: f64, law: SizeLaw) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(invalid("rate", "must be finite and nonnegative"));
        }
        Self::new(crate::func::constant(rate), rate, SizeKernel::Size(law))
    }

    pub fn rate(&self, t: f64, x: f64) -> f64 {
        (self.intensity)(t, x)
    }

    /// `lambda(t, y) * int g(z) q(y, dz)`.
    pub fn integrate<G: FnMut(f64) -> f64>(&self, t: f64, y: f64, g: G, breaks: &[f64]) -> Result<f64> {
        let lam = self.rate(t, y);
        if lam == 0.0 {
            return Ok(0.0);
        }
        Ok(lam * self.sizes.expect(y, g, breaks, &self.quad)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_rng;

    #[test]
    fn expectations_closed_form() {
        let q = Quadrature::default();
        let n = SizeLaw::Normal { mean: 0.5, sd: 2.0 };
        assert!((n.expect(|z| z * z, &[], &q).unwrap() - 4.25).abs() < 1e-9);
        let u = SizeLaw::Uniform { lo: -1.0, hi: 3.0 };
        assert!((u.expect(|z| z, &[], &q).unwrap() - 1.0).abs() < 1e-12);
        let c = SizeLaw::Cauchy { loc: 0.0, scale: 1.0 };
        // P(|C| <= 1) = 1/2
        let p = c.expect(|z| (libm::fabs(z) <= 1.0) as u8 as f64, &[-1.0, 1.0], &q).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        let b = SizeLaw::Beta { a: 2.0, b: 3.0 };
        assert!((b.expect(|z| z, &[], &q).unwrap() - 0.4).abs() < 1e-10);
        let a = SizeLaw::Atoms { values: alloc::vec![-2.0, 2.0], probs: alloc::vec![0.5, 0.5] };
        assert_eq!(a.expect(|z| z, &[], &q).unwrap(), 0.0);
    }

    #[test]
    fn post_jump_kernel_shifts() {
        let q = Quadrature::default();
        let k = SizeKernel::PostJump(SizeLaw::PointMass(0.5));
        assert_eq!(k.expect(0.2, |z| z, &[], &q).unwrap(), 0.3);
        assert_eq!(SizeKernel::Reflect.expect(0.2, |z| z, &[], &q).unwrap(), 0.6);
        let mut rng = path_rng(1);
        assert_eq!(k.sample(0.2, &mut rng), 0.3);
    }

    #[test]
    fn sampler_means() {
        let mut rng = path_rng(3);
        let law = SizeLaw::Beta { a: 2.0, b: 5.0 };
        let n = 20_000;
        let m = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - 2.0 / 7.0).abs() < 0.01);
        assert!(SizeLaw::Uniform { lo: 1.0, hi: 1.0 }.validate().is_err());
    }
}
