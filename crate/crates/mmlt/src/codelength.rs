//! Message-length formulas: quantization constants, Fisher determinant,
//! assertion/detail components, structure codes, and model totals.
//!
//! All codelengths are in nits (natural log).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{Dataset, ModelStructure, Scheme, TParams};
use crate::dist::{neg_log_likelihood, LN_PI};
use crate::error::{Error, Result};

/// psi(1), the digamma function at 1 (negative Euler–Mascheroni constant).
pub const PSI_ONE: f64 = -0.5772156649015329;

/// Hyperparameter K: the radius of the hyperellipsoid bounding the
/// coefficient prior, equal to the maximum allowable fitted sum of squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperK(pub f64);

impl HyperK {
    pub fn new(k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::Validation(format!("K must be finite and >= 0, got {k}")));
        }
        Ok(Self(k))
    }
}

/// How the model index gamma is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureCodingScheme {
    pub scheme: Scheme,
    pub q: usize,
}

impl StructureCodingScheme {
    pub fn new(scheme: Scheme, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::Validation("structure coding needs q >= 1".into()));
        }
        Ok(Self { scheme, q })
    }
}

/// Assertion/detail decomposition of one model's message length.
///
/// `hyper_k` is kept at 0 in model totals: the code for stating K is
/// (1/2) log n regardless of the model, so it shifts every candidate equally
/// and is excluded from reported model totals.
/// The constant itself is available from [`hyper_k_length`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CodelengthBreakdown {
    pub assertion_beta: f64,
    pub assertion_scale: f64,
    pub detail: f64,
    pub hyper_k: f64,
    pub structure: f64,
    pub total: f64,
}

impl CodelengthBreakdown {
    fn assemble(assertion_beta: f64, assertion_scale: f64, detail: f64, structure: f64) -> Self {
        Self {
            assertion_beta,
            assertion_scale,
            detail,
            hyper_k: 0.0,
            structure,
            total: assertion_beta + assertion_scale + detail + structure,
        }
    }
}

/// log of kappa_k^k, the k-th power of the approximate normalized second
/// moment of an optimal k-dimensional quantizing lattice:
/// kappa_k^k = 2^{-k} k pi^{1-k} e^{2 psi(1) - k}.
pub fn ln_kappa_pow(k: usize) -> f64 {
    let kf = k as f64;
    -kf * std::f64::consts::LN_2 + kf.ln() + (1.0 - kf) * LN_PI + 2.0 * PSI_ONE - kf
}

/// kappa_k^k itself.
pub fn kappa_pow(k: usize) -> f64 {
    ln_kappa_pow(k).exp()
}

/// Stable 0.5*log(1 + exp(x)).
fn half_softplus(x: f64) -> f64 {
    if x > 30.0 {
        0.5 * (x + (-x).exp().ln_1p())
    } else {
        0.5 * x.exp().ln_1p()
    }
}

/// log determinant of the expected Fisher information for (beta0, beta, tau):
/// n^2 nu (nu+1)^{p+1} |X'X| / (2 (nu+3)^{p+2} tau^{p+3}), with the Gaussian
/// branch n^2 |X'X| / (2 tau^{p+3}) at nu = INFINITY.
pub fn fisher_logdet(n: usize, p: usize, tau: f64, nu: f64, xtx_logdet: f64) -> f64 {
    let nf = n as f64;
    let base = 2.0 * nf.ln() + xtx_logdet
        - std::f64::consts::LN_2
        - (p as f64 + 3.0) * tau.ln();
    if nu.is_infinite() {
        base
    } else {
        base + nu.ln() + (p as f64 + 1.0) * (nu + 1.0).ln() - (p as f64 + 2.0) * (nu + 3.0).ln()
    }
}

/// log of the tau-free part of the assertion bracket for beta:
/// log{ Gamma(p/2+1)^{-2} [kappa_p pi K (nu+1)/(nu+3)]^p }.
/// Subtract p*log(tau) before exponentiating to recover the full bracket.
pub(crate) fn ln_beta_bracket(p: usize, k: HyperK, nu: f64) -> f64 {
    let pf = p as f64;
    let r = if nu.is_infinite() { 1.0 } else { (nu + 1.0) / (nu + 3.0) };
    -2.0 * ln_gamma(0.5 * pf + 1.0) + ln_kappa_pow(p) + pf * (std::f64::consts::PI * k.0 * r).ln()
}

/// Assertion length of the regression coefficients given K:
/// ½ log{1 + Gamma(p/2+1)^{-2} [kappa_p pi K (nu+1) / (tau (nu+3))]^p }.
/// Evaluated in the log domain so large p or large K/tau cannot overflow.
pub fn assertion_beta(p: usize, k: HyperK, tau: f64, nu: f64) -> f64 {
    if p == 0 || k.0 == 0.0 {
        return 0.0;
    }
    half_softplus(ln_beta_bracket(p, k, nu) - p as f64 * tau.ln())
}

/// Assertion length of the intercept and scale:
/// log tau + ½ log[n^2 nu (nu+1) / (2 tau^3 (nu+3)^2)] + ½ log kappa_2^2,
/// with the nu-ratio -> 1 in the Gaussian limit.
pub fn assertion_scale(n: usize, tau: f64, nu: f64) -> f64 {
    let nf = n as f64;
    let ln_r2 = if nu.is_infinite() {
        0.0
    } else {
        nu.ln() + (nu + 1.0).ln() - 2.0 * (nu + 3.0).ln()
    };
    tau.ln()
        + 0.5 * (2.0 * nf.ln() + ln_r2 - std::f64::consts::LN_2 - 3.0 * tau.ln())
        + 0.5 * ln_kappa_pow(2)
}

/// Detail length: negative log-likelihood plus the quantization correction
/// (p+2)/2 for the p+2 continuous parameters.
pub fn detail_length(y: &[f64], mu: &[f64], tau: f64, nu: f64, p: usize) -> Result<f64> {
    Ok(neg_log_likelihood(y, mu, tau, nu)? + 0.5 * (p as f64 + 2.0))
}

/// Codelength for stating the hyperparameter K: ½ log n.
pub fn hyper_k_length(n: usize) -> f64 {
    0.5 * (n as f64).ln()
}

/// Codelength for naming the model structure: log(q+1) for nested selection,
/// log C(q,p) + log(q+1) for all-subsets selection.
pub fn structure_length(coding: &StructureCodingScheme, p: usize) -> Result<f64> {
    if p > coding.q {
        return Err(Error::Validation(format!("p={p} exceeds q={}", coding.q)));
    }
    let qf = coding.q as f64;
    match coding.scheme {
        Scheme::Nested => Ok((qf + 1.0).ln()),
        Scheme::AllSubsets => {
            let pf = p as f64;
            let ln_choose = ln_gamma(qf + 1.0) - ln_gamma(pf + 1.0) - ln_gamma(qf - pf + 1.0);
            Ok(ln_choose + (qf + 1.0).ln())
        }
    }
}

/// Complete message length of (y, theta | gamma) plus the structure code, as
/// an assertion/detail breakdown.
pub fn total_message_length(
    dataset: &Dataset,
    structure: &ModelStructure,
    params: &TParams,
    k: HyperK,
    coding: &StructureCodingScheme,
) -> Result<CodelengthBreakdown> {
    let p = structure.p();
    if params.p() != p {
        return Err(Error::Validation("parameter/structure dimension mismatch".into()));
    }
    if !(params.tau > 0.0) {
        return Err(Error::Validation(format!("tau must be > 0, got {}", params.tau)));
    }
    let xs = dataset.submatrix(structure)?;
    let mut mu = vec![params.beta0; dataset.n];
    for (kk, b) in params.beta.iter().enumerate() {
        for i in 0..dataset.n {
            mu[i] += b * xs[(i, kk)];
        }
    }
    let y: Vec<f64> = dataset.y.iter().copied().collect();
    let ab = assertion_beta(p, k, params.tau, params.nu);
    let asc = assertion_scale(dataset.n, params.tau, params.nu);
    let det = detail_length(&y, &mu, params.tau, params.nu, p)?;
    let st = structure_length(coding, p)?;
    Ok(CodelengthBreakdown::assemble(ab, asc, det, st))
}

/// Gaussian-limit message length from sufficient statistics, transcribing the
/// closed-form criterion
/// n/2 log(2 pi tau) + RSS/(2 tau) - ½ log tau + log n + p/2
///   + ½ log{1 + Gamma(p/2+1)^{-2} (kappa_p pi K / tau)^p} - ½ log(4 pi)
///   + psi(1) + I(gamma).
pub fn gaussian_message_length_parts(
    n: usize,
    p: usize,
    rss: f64,
    tau: f64,
    k: HyperK,
    structure_len: f64,
) -> CodelengthBreakdown {
    let nf = n as f64;
    let ab = assertion_beta(p, k, tau, f64::INFINITY);
    let asc = -0.5 * tau.ln() + nf.ln() - 0.5 * (4.0 * std::f64::consts::PI).ln() + PSI_ONE - 1.0;
    let det = 0.5 * nf * (2.0 * std::f64::consts::PI * tau).ln() + 0.5 * rss / tau
        + 0.5 * (p as f64 + 2.0);
    CodelengthBreakdown::assemble(ab, asc, det, structure_len)
}

/// Gaussian specialization of [`total_message_length`]; requires nu = INFINITY.
pub fn gaussian_message_length(
    dataset: &Dataset,
    structure: &ModelStructure,
    params: &TParams,
    k: HyperK,
    coding: &StructureCodingScheme,
) -> Result<CodelengthBreakdown> {
    if !params.nu.is_infinite() {
        return Err(Error::Validation(format!(
            "gaussian message length requires nu = INFINITY, got {}",
            params.nu
        )));
    }
    let p = structure.p();
    if params.p() != p {
        return Err(Error::Validation("parameter/structure dimension mismatch".into()));
    }
    let xs = dataset.submatrix(structure)?;
    let mut rss = 0.0;
    for i in 0..dataset.n {
        let mut mi = params.beta0;
        for (kk, b) in params.beta.iter().enumerate() {
            mi += b * xs[(i, kk)];
        }
        let r = dataset.y[i] - mi;
        rss += r * r;
    }
    let st = structure_length(coding, p)?;
    Ok(gaussian_message_length_parts(dataset.n, p, rss, params.tau, k, st))
}
