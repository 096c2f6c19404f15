//! Maximum-likelihood and MML parameter estimation for a fixed structure and
//! degrees of freedom, via the EM scale-mixture algorithm: weighted least
//! squares for (beta0, beta), 1-D convex minimization for tau, and
//! hyperparameter K estimation.

use nalgebra::{DMatrix, DVector};

use crate::codelength::{
    assertion_beta, assertion_scale, detail_length, ln_beta_bracket, HyperK,
};
use crate::data::{Dataset, ModelStructure, TParams};
use crate::dist::neg_log_likelihood;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct EMConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub tau_bracket_factor: f64,
    /// Iterate K <- beta'(X'X)beta with the MML coefficients to a fixed point
    /// (starting from the maximum-likelihood K) instead of stopping after the
    /// one-shot ML estimate.
    pub refine_k: bool,
    pub k_rel_tol: f64,
    pub max_k_refinements: usize,
}

impl Default for EMConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
            tau_bracket_factor: 1e6,
            refine_k: true,
            k_rel_tol: 1e-8,
            max_k_refinements: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: TParams,
    pub k: HyperK,
    /// Message length of (y, theta | gamma) in nits for MML fits (structure
    /// code excluded; the caller adds it), or the NLL for ML fits.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per-iteration EM objective (marginal message-length objective for MML
    /// fits, NLL for ML fits); non-increasing by the EM majorization argument.
    pub objective_trace: Vec<f64>,
}

/// Weighted least squares with intercept: minimizes sum w_i (y_i - b0 - x_i'b)^2
/// via a Cholesky factorization of the weighted normal equations.
pub fn wls_fit(xs: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let n = xs.nrows();
    let p = xs.ncols();
    if y.len() != n || w.len() != n {
        return Err(Error::Validation("wls dimension mismatch".into()));
    }
    if w.iter().any(|&wi| !(wi > 0.0)) {
        return Err(Error::Validation("weights must be positive".into()));
    }
    let d = p + 1;
    let mut a = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    for i in 0..n {
        let wi = w[i];
        a[(0, 0)] += wi;
        b[0] += wi * y[i];
        for j in 0..p {
            let xij = xs[(i, j)];
            a[(0, j + 1)] += wi * xij;
            b[j + 1] += wi * xij * y[i];
            for kcol in j..p {
                a[(j + 1, kcol + 1)] += wi * xij * xs[(i, kcol)];
            }
        }
    }
    for j in 0..d {
        for kcol in 0..j {
            a[(j, kcol)] = a[(kcol, j)];
        }
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::SingularDesign(format!("weighted normal equations ({d}x{d}) not positive definite")))?;
    let sol = chol.solve(&b);
    Ok((sol[0], sol.rows(1, p).into_owned()))
}

/// EM conditional expectations of the mixing weights:
/// w_i = (nu+1)/(nu + delta_i^2), delta_i^2 = (y_i - mu_i)^2 / tau.
/// All 1 in the Gaussian limit.
pub fn em_weights(y: &DVector<f64>, mu: &DVector<f64>, tau: f64, nu: f64) -> DVector<f64> {
    if nu.is_infinite() {
        return DVector::from_element(y.len(), 1.0);
    }
    DVector::from_iterator(
        y.len(),
        y.iter().zip(mu.iter()).map(|(&yi, &mi)| {
            let d2 = (yi - mi) * (yi - mi) / tau;
            (nu + 1.0) / (nu + d2)
        }),
    )
}

/// K estimate beta'(X'X)beta = ||X beta||^2 for the given design columns.
pub fn estimate_k(xs: &DMatrix<f64>, beta: &DVector<f64>) -> HyperK {
    if beta.is_empty() {
        return HyperK(0.0);
    }
    HyperK((xs * beta).norm_squared())
}

/// Minimize ½ log(1 + B/tau^p) + ((n-1)/2) log tau + wss/(2 tau) over tau > 0.
/// `b` is the tau-free bracket content; see `optimize_tau_ln` for the
/// log-domain variant used when B would overflow.
pub fn optimize_tau(wss: f64, n: usize, p: usize, b: f64) -> Result<f64> {
    let ln_b = if b == 0.0 { f64::NEG_INFINITY } else { b.ln() };
    optimize_tau_ln(wss, n, p, ln_b, EMConfig::default().tau_bracket_factor)
}

fn half_softplus(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > 30.0 {
        0.5 * (x + (-x).exp().ln_1p())
    } else {
        0.5 * x.exp().ln_1p()
    }
}

/// Log-domain tau optimizer: `ln_b` is log(B) (NEG_INFINITY for B = 0).
/// The objective is strictly convex in log tau, so we bisect its exact
/// derivative over a bracket around wss/n, expanded geometrically if the
/// stationary point lands outside.
pub fn optimize_tau_ln(wss: f64, n: usize, p: usize, ln_b: f64, bracket_factor: f64) -> Result<f64> {
    if !(wss > 0.0) {
        return Err(Error::PerfectFit);
    }
    if n < 3 {
        return Err(Error::Validation("tau optimization needs n >= 3".into()));
    }
    let nf = n as f64;
    if p == 0 || ln_b == f64::NEG_INFINITY {
        // the bracket term is constant: closed-form minimum wss/(n-1)
        return Ok(wss / (nf - 1.0));
    }
    let pf = p as f64;
    // d/dl of ½ softplus(ln_b - p l) + ((n-1)/2) l + ½ wss e^{-l}
    let dg = |l: f64| {
        let x = ln_b - pf * l;
        let sig = if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        };
        -0.5 * pf * sig + 0.5 * (nf - 1.0) - 0.5 * wss * (-l).exp()
    };
    let center = (wss / nf).ln();
    let f = bracket_factor.ln();
    let mut lo = center - f;
    let mut hi = center + f;
    for _ in 0..40 {
        if dg(lo) > 0.0 {
            hi = lo;
            lo -= f;
        } else if dg(hi) < 0.0 {
            lo = hi;
            hi += f;
        } else {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if dg(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-14 {
                    break;
                }
            }
            return Ok((0.5 * (lo + hi)).exp());
        }
    }
    Err(Error::Numerical("tau bracket expansion failed".into()))
}

struct EmState {
    beta0: f64,
    beta: DVector<f64>,
    tau: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn ols(xc: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, DVector<f64>, f64)> {
    let w = DVector::from_element(y.len(), 1.0);
    let (b0, beta) = wls_fit(xc, y, &w)?;
    let mu = DVector::from_element(y.len(), b0) + xc * &beta;
    let rss = (y - &mu).norm_squared();
    Ok((b0, beta, rss))
}

/// One EM pass minimizing the marginal message-length objective at fixed K:
/// ½log(1 + B/tau^p) + ((n-1)/2) log tau + data-fit term.
fn mml_em(
    xc: &DMatrix<f64>,
    y: &DVector<f64>,
    nu: f64,
    k: HyperK,
    init: (f64, DVector<f64>, f64),
    config: &EMConfig,
) -> Result<EmState> {
    let n = y.len();
    let nf = n as f64;
    let p = xc.ncols();
    let pf = p as f64;
    let ln_b = if p == 0 || k.0 == 0.0 {
        f64::NEG_INFINITY
    } else {
        ln_beta_bracket(p, k, nu)
    };
    let objective = |mu: &DVector<f64>, tau: f64| -> f64 {
        let pen = half_softplus(ln_b - pf * tau.ln()) + 0.5 * (nf - 1.0) * tau.ln();
        let fit = if nu.is_infinite() {
            0.5 * (y - mu).norm_squared() / tau
        } else {
            0.5 * (nu + 1.0)
                * y.iter()
                    .zip(mu.iter())
                    .map(|(&yi, &mi)| ((yi - mi) * (yi - mi) / (nu * tau)).ln_1p())
                    .sum::<f64>()
        };
        pen + fit
    };
    let (mut beta0, mut beta, mut tau) = init;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut mu = DVector::from_element(n, beta0) + xc * &beta;
    for t in 1..=config.max_iter {
        iterations = t;
        let w = em_weights(y, &mu, tau, nu);
        let (b0_new, beta_new) = wls_fit(xc, y, &w)?;
        beta0 = b0_new;
        beta = beta_new;
        mu = DVector::from_element(n, beta0) + xc * &beta;
        let mut wss = 0.0;
        for i in 0..n {
            let r = y[i] - mu[i];
            wss += w[i] * r * r;
        }
        if wss <= f64::MIN_POSITIVE * nf {
            return Err(Error::PerfectFit);
        }
        tau = optimize_tau_ln(wss, n, p, ln_b, config.tau_bracket_factor)?;
        let obj = objective(&mu, tau);
        if let Some(&prev) = trace.last() {
            if (prev - obj).abs() / prev.abs().max(1.0) < config.rel_tol {
                trace.push(obj);
                converged = true;
                break;
            }
        }
        trace.push(obj);
    }
    Ok(EmState { beta0, beta, tau, trace, iterations, converged })
}

/// EM pass for the maximum-likelihood estimate (tau update wss/n, NLL objective).
fn ml_em(
    xc: &DMatrix<f64>,
    y: &DVector<f64>,
    nu: f64,
    init: (f64, DVector<f64>, f64),
    config: &EMConfig,
) -> Result<EmState> {
    let n = y.len();
    let nf = n as f64;
    let (mut beta0, mut beta, mut tau) = init;
    let yv: Vec<f64> = y.iter().copied().collect();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut mu = DVector::from_element(n, beta0) + xc * &beta;
    for t in 1..=config.max_iter {
        iterations = t;
        let w = em_weights(y, &mu, tau, nu);
        let (b0_new, beta_new) = wls_fit(xc, y, &w)?;
        beta0 = b0_new;
        beta = beta_new;
        mu = DVector::from_element(n, beta0) + xc * &beta;
        let mut wss = 0.0;
        for i in 0..n {
            let r = y[i] - mu[i];
            wss += w[i] * r * r;
        }
        if wss <= f64::MIN_POSITIVE * nf {
            return Err(Error::PerfectFit);
        }
        tau = wss / nf;
        let mv: Vec<f64> = mu.iter().copied().collect();
        let obj = neg_log_likelihood(&yv, &mv, tau, nu)?;
        if let Some(&prev) = trace.last() {
            if (prev - obj).abs() / prev.abs().max(1.0) < config.rel_tol {
                trace.push(obj);
                converged = true;
                break;
            }
        }
        trace.push(obj);
        if nu.is_infinite() {
            // unit weights: OLS solves the problem in one M-step
            converged = true;
            break;
        }
    }
    Ok(EmState { beta0, beta, tau, trace, iterations, converged })
}

fn check_dims(dataset: &Dataset, structure: &ModelStructure) -> Result<()> {
    if dataset.n <= structure.p() + 2 {
        return Err(Error::Validation(format!(
            "need n > p + 2 (n = {}, p = {})",
            dataset.n,
            structure.p()
        )));
    }
    Ok(())
}

fn codelength_objective(
    dataset: &Dataset,
    xc: &DMatrix<f64>,
    st: &EmState,
    nu: f64,
    k: HyperK,
    p: usize,
) -> Result<f64> {
    let mu = DVector::from_element(dataset.n, st.beta0) + xc * &st.beta;
    let y: Vec<f64> = dataset.y.iter().copied().collect();
    let mv: Vec<f64> = mu.iter().copied().collect();
    Ok(assertion_beta(p, k, st.tau, nu)
        + assertion_scale(dataset.n, st.tau, nu)
        + detail_length(&y, &mv, st.tau, nu, p)?)
}

/// Maximum-likelihood fit of a fixed structure at fixed nu (EM for finite nu,
/// OLS in the Gaussian limit). `objective` is the NLL at the estimate.
pub fn ml_fit(dataset: &Dataset, structure: &ModelStructure, nu: f64, config: &EMConfig) -> Result<FitResult> {
    check_dims(dataset, structure)?;
    let xc = dataset.submatrix(structure)?;
    let y = dataset.y.clone();
    let (b0, beta, rss) = ols(&xc, &y)?;
    let tau0 = rss / dataset.n as f64;
    if tau0 <= 0.0 {
        return Err(Error::PerfectFit);
    }
    let st = ml_em(&xc, &y, nu, (b0, beta, tau0), config)?;
    let xraw = dataset.raw_submatrix(structure)?;
    let k = estimate_k(&xraw, &st.beta);
    Ok(FitResult {
        params: TParams {
            beta0: st.beta0,
            beta: st.beta.iter().copied().collect(),
            tau: st.tau,
            nu,
        },
        k,
        objective: *st.trace.last().unwrap(),
        iterations: st.iterations,
        converged: st.converged,
        objective_trace: st.trace,
    })
}

/// MML fit of a fixed structure at fixed nu.
///
/// Initialized at the Gaussian OLS estimates. K is first set from the
/// maximum-likelihood coefficients of the same structure/nu (using the
/// uncentered design Gram, so the intercept contribution of the raw columns
/// is part of the allowable fitted sum of squares) and, when
/// `config.refine_k`, iterated to a fixed point against the MML coefficients.
/// `objective` is the message length of (y, theta | gamma); structure and
/// hyperparameter codes are added by the caller.
pub fn mml_fit(dataset: &Dataset, structure: &ModelStructure, nu: f64, config: &EMConfig) -> Result<FitResult> {
    check_dims(dataset, structure)?;
    let p = structure.p();
    let xc = dataset.submatrix(structure)?;
    let xraw = dataset.raw_submatrix(structure)?;
    let y = dataset.y.clone();
    let (b0, beta, rss) = ols(&xc, &y)?;
    let tau0 = rss / dataset.n as f64;
    if tau0 <= 0.0 {
        return Err(Error::PerfectFit);
    }
    let init = (b0, beta.clone(), tau0);

    let mut k = if p == 0 {
        HyperK(0.0)
    } else {
        let ml = ml_em(&xc, &y, nu, init.clone(), config)?;
        estimate_k(&xraw, &ml.beta)
    };
    let mut st = mml_em(&xc, &y, nu, k, init, config)?;
    let mut total_iters = st.iterations;
    let mut trace = st.trace.clone();
    if config.refine_k && p > 0 {
        for _ in 0..config.max_k_refinements {
            let k_new = estimate_k(&xraw, &st.beta);
            if (k_new.0 - k.0).abs() / k.0.max(f64::MIN_POSITIVE) < config.k_rel_tol {
                k = k_new;
                break;
            }
            k = k_new;
            let warm = (st.beta0, st.beta.clone(), st.tau);
            st = mml_em(&xc, &y, nu, k, warm, config)?;
            total_iters += st.iterations;
            trace = st.trace.clone();
        }
    }
    let objective = codelength_objective(dataset, &xc, &st, nu, k, p)?;
    Ok(FitResult {
        params: TParams {
            beta0: st.beta0,
            beta: st.beta.iter().copied().collect(),
            tau: st.tau,
            nu,
        },
        k,
        objective,
        iterations: total_iters,
        converged: st.converged,
        objective_trace: trace,
    })
}
