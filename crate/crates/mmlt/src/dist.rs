//! Student-t density machinery, likelihood, and sampling.
//!
//! `nu = f64::INFINITY` is an explicit Gaussian variant everywhere: the
//! Gaussian branch of every formula is coded separately rather than relying on
//! a large-nu approximation.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const LN_PI: f64 = 1.1447298858494002;
pub const LN_2PI: f64 = 1.8378770664093453;

/// Location/scale/dof specification of a Student-t (or Gaussian) density.
/// `tau` is the squared scale; `nu = INFINITY` means N(mu, tau).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TSpec {
    pub mu: f64,
    pub tau: f64,
    pub nu: f64,
}

impl TSpec {
    pub fn new(mu: f64, tau: f64, nu: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Validation(format!("mu must be finite, got {mu}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Validation(format!("tau must be finite and > 0, got {tau}")));
        }
        if !(nu > 0.0) {
            return Err(Error::Validation(format!("nu must be > 0, got {nu}")));
        }
        Ok(Self { mu, tau, nu })
    }

    pub fn standard(nu: f64) -> Self {
        Self { mu: 0.0, tau: 1.0, nu }
    }

    pub fn is_gaussian(&self) -> bool {
        self.nu.is_infinite()
    }
}

/// Log-density at `y`. Gaussian branch for `nu = INFINITY`.
pub fn t_logpdf(y: f64, spec: &TSpec) -> f64 {
    let z2 = (y - spec.mu) * (y - spec.mu) / spec.tau;
    if spec.is_gaussian() {
        -0.5 * (LN_2PI + spec.tau.ln()) - 0.5 * z2
    } else {
        let nu = spec.nu;
        ln_gamma(0.5 * (nu + 1.0))
            - ln_gamma(0.5 * nu)
            - 0.5 * (LN_PI + nu.ln() + spec.tau.ln())
            - 0.5 * (nu + 1.0) * (z2 / nu).ln_1p()
    }
}

/// Negative log-likelihood of independent observations `y` with means `mu`,
/// common squared scale `tau`, and dof `nu` (INFINITY = Gaussian).
pub fn neg_log_likelihood(y: &[f64], mu: &[f64], tau: f64, nu: f64) -> Result<f64> {
    if y.len() != mu.len() {
        return Err(Error::Validation(format!(
            "length mismatch: y has {}, mu has {}",
            y.len(),
            mu.len()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::Validation(format!("tau must be > 0, got {tau}")));
    }
    let n = y.len() as f64;
    if nu.is_infinite() {
        let ss: f64 = y.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(0.5 * n * (LN_2PI + tau.ln()) + 0.5 * ss / tau)
    } else {
        let const_term =
            -ln_gamma(0.5 * (nu + 1.0)) + ln_gamma(0.5 * nu) + 0.5 * (LN_PI + nu.ln() + tau.ln());
        let s: f64 = y
            .iter()
            .zip(mu)
            .map(|(a, b)| ((a - b) * (a - b) / (nu * tau)).ln_1p())
            .sum();
        Ok(n * const_term + 0.5 * (nu + 1.0) * s)
    }
}

/// Draw `n` i.i.d. samples via the normal/gamma scale-mixture representation:
/// x = mu + sqrt(tau) * z / sqrt(w), w ~ Gamma(nu/2, scale 2/nu).
pub fn sample_t<R: Rng + ?Sized>(n: usize, spec: &TSpec, rng: &mut R) -> Vec<f64> {
    let s = spec.tau.sqrt();
    if spec.is_gaussian() {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                spec.mu + s * z
            })
            .collect()
    } else {
        let g = Gamma::new(0.5 * spec.nu, 2.0 / spec.nu).expect("valid gamma");
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                let w: f64 = g.sample(rng);
                spec.mu + s * z / w.sqrt()
            })
            .collect()
    }
}
