//! Numeric KL/JS divergence between Student-t densities and construction of a
//! JS-equidistant degrees-of-freedom grid.

use crate::dist::{t_logpdf, TSpec};
use crate::error::{Error, Result};

// 15-point Kronrod nodes (positive half) and weights, with the embedded
// 7-point Gauss weights at the shared nodes.
const XK: [f64; 8] = [
    0.000000000000000,
    0.207784955007898,
    0.405845151377397,
    0.586087235467691,
    0.741531185599394,
    0.864864423359769,
    0.949107912342759,
    0.991455371120813,
];
const WK: [f64; 8] = [
    0.209482141084728,
    0.204432940075298,
    0.190350578064785,
    0.169004726639267,
    0.140653259715525,
    0.104790010322250,
    0.063092092629979,
    0.022935322010529,
];
// Gauss weights for the even-index Kronrod nodes (0, 2, 4, 6).
const WG: [f64; 4] = [
    0.417959183673469,
    0.381830050505119,
    0.279705391489277,
    0.129484966168870,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let f0 = f(c);
    let mut k = WK[0] * f0;
    let mut g = WG[0] * f0;
    for i in 1..8 {
        let x = h * XK[i];
        let s = f(c - x) + f(c + x);
        k += WK[i] * s;
        if i % 2 == 0 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over [a, b].
pub fn adaptive_quad(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (v0, e0) = gk15(&f, a, b);
    // worklist of (error, a, b, value)
    let mut segs = vec![(e0, a, b, v0)];
    let mut total_err = e0;
    let mut total = v0;
    for _ in 0..4000 {
        if total_err <= tol {
            return Ok(total);
        }
        // split the segment with the largest error estimate
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.partial_cmp(&y.1 .0).unwrap())
            .unwrap();
        let (e, sa, sb, sv) = segs.swap_remove(idx);
        let mid = 0.5 * (sa + sb);
        let (v1, e1) = gk15(&f, sa, mid);
        let (v2, e2) = gk15(&f, mid, sb);
        total += v1 + v2 - sv;
        total_err += e1 + e2 - e;
        segs.push((e1, sa, mid, v1));
        segs.push((e2, mid, sb, v2));
    }
    Err(Error::Numerical(format!(
        "quadrature failed to converge: error estimate {total_err:.3e} > tol {tol:.3e} \
         after {} segments",
        segs.len()
    )))
}

/// True when KL(p||q) diverges analytically: a Gaussian code cannot cover the
/// polynomial tails of a t distribution with nu <= 2 (infinite second moment
/// under p makes the quadratic Gaussian term integrate to infinity).
fn kl_is_infinite(p: &TSpec, q: &TSpec) -> bool {
    q.is_gaussian() && !p.is_gaussian() && p.nu <= 2.0
}

/// KL divergence KL(p || q) = ∫ p(x) log[p(x)/q(x)] dx by adaptive quadrature
/// over the tan-transformed real line. Returns +inf for the analytically
/// divergent heavy-tail-vs-Gaussian case.
pub fn kl_divergence(p: &TSpec, q: &TSpec) -> Result<f64> {
    TSpec::new(p.mu, p.tau, p.nu)?;
    TSpec::new(q.mu, q.tau, q.nu)?;
    if kl_is_infinite(p, q) {
        return Ok(f64::INFINITY);
    }
    // x = loc + s*tan(theta) maps (-pi/2, pi/2) onto the real line; the
    // substitution handles the heavy Cauchy tails that defeat naive truncation
    let loc = p.mu;
    let s = p.tau.sqrt() + q.tau.sqrt();
    let integrand = move |theta: f64| {
        let t = theta.tan();
        let x = loc + s * t;
        if !x.is_finite() {
            return 0.0;
        }
        let lp = t_logpdf(x, p);
        let pd = lp.exp();
        if pd == 0.0 {
            return 0.0;
        }
        let lq = t_logpdf(x, q);
        // dx = s * sec^2(theta) dtheta = s * (1 + tan^2)
        pd * (lp - lq) * s * (1.0 + t * t)
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let v = adaptive_quad(integrand, -half_pi, half_pi, 5e-9)?;
    Ok(v.max(0.0))
}

/// Symmetrized (Jeffreys) Jensen–Shannon divergence:
/// ½ KL(p||q) + ½ KL(q||p).
pub fn js_divergence(p: &TSpec, q: &TSpec) -> Result<f64> {
    let a = kl_divergence(p, q)?;
    let b = kl_divergence(q, p)?;
    Ok(0.5 * a + 0.5 * b)
}

/// A set of dof candidates with equal JS divergence between consecutive
/// standard-t members.
#[derive(Debug, Clone)]
pub struct DofGrid {
    /// Ascending nu values; the last may be INFINITY.
    pub values: Vec<f64>,
    /// Common JS gap between consecutive members.
    pub js_step: f64,
}

fn js_standard(a: f64, b: f64) -> Result<f64> {
    js_divergence(&TSpec::standard(a), &TSpec::standard(b))
}

/// Solve js(t_a, t_b) = c for b > a by bracketing + bisection.
/// Returns None when c exceeds the limit js(t_a, t_inf).
fn solve_next(a: f64, c: f64) -> Result<Option<f64>> {
    let f = |b: f64| -> Result<f64> { Ok(js_standard(a, b)? - c) };
    let lo0 = a * 1.0001;
    if f(lo0)? > 0.0 {
        // c below the resolution of the bracket start; treat as solved at lo
        return Ok(Some(lo0));
    }
    let mut hi = a * 1.3;
    while f(hi)? < 0.0 {
        hi *= 1.6;
        if hi > 1e9 {
            return Ok(None);
        }
    }
    let mut lo = (hi / 1.6).max(lo0);
    if f(lo)? > 0.0 {
        lo = lo0;
    }
    // bisection to high relative precision on b
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) / mid < 1e-9 {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Signed residual js(a_{m-1}, inf) - c after chaining m-2 interior solves,
/// or None when some interior step is unsolvable (c too large).
fn grid_residual(c: f64, m: usize, nu_min: f64) -> Result<Option<f64>> {
    let mut a = nu_min;
    for _ in 0..(m - 2) {
        match solve_next(a, c)? {
            Some(next) => a = next,
            None => return Ok(None),
        }
    }
    let tail = js_standard(a, f64::INFINITY)?;
    if tail.is_infinite() {
        // a_{m-1} still <= 2: the final gap is larger than any finite c
        return Ok(Some(f64::INFINITY));
    }
    Ok(Some(tail - c))
}

/// Build an m-point dof grid on [nu_min, inf] whose consecutive standard-t JS
/// gaps share a common value c, found by outer bisection on c with nested
/// root-finding for each interior value.
pub fn build_dof_grid(m: usize, nu_min: f64) -> Result<DofGrid> {
    if m < 2 {
        return Err(Error::Validation("dof grid needs m >= 2".into()));
    }
    if !(nu_min > 0.0 && nu_min.is_finite()) {
        return Err(Error::Validation("nu_min must be positive and finite".into()));
    }
    if m == 2 {
        let step = js_standard(nu_min, f64::INFINITY)?;
        return Ok(DofGrid { values: vec![nu_min, f64::INFINITY], js_step: step });
    }
    // JS(t_a, t_b) must increase in b for fixed a; assert on a coarse probe
    {
        let j1 = js_standard(nu_min, nu_min * 1.5)?;
        let j2 = js_standard(nu_min, nu_min * 3.0)?;
        if !(j2 > j1) {
            return Err(Error::Numerical("JS not monotone in second argument".into()));
        }
    }
    // bracket c: residual is decreasing in c; small c gives positive residual
    let mut lo = 1e-6;
    let mut hi = 0.05;
    loop {
        match grid_residual(hi, m, nu_min)? {
            Some(r) if r < 0.0 => break,
            None => break,
            _ => {
                hi *= 2.0;
                if hi > 1e4 {
                    return Err(Error::Numerical("dof grid bisection failed to bracket".into()));
                }
            }
        }
    }
    let mut c = 0.5 * (lo + hi);
    for _ in 0..100 {
        c = 0.5 * (lo + hi);
        if (hi - lo) / c < 1e-5 {
            break;
        }
        match grid_residual(c, m, nu_min)? {
            Some(r) if r > 0.0 => lo = c,
            _ => hi = c,
        }
    }
    let mut values = vec![nu_min];
    let mut a = nu_min;
    for _ in 0..(m - 2) {
        a = solve_next(a, c)?
            .ok_or_else(|| Error::Numerical("dof grid interior solve failed".into()))?;
        values.push(a);
    }
    values.push(f64::INFINITY);
    Ok(DofGrid { values, js_step: c })
}
