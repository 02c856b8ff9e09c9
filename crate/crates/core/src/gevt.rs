//! Extreme-value machinery: the generalized extreme value CDF, a
//! reverse-Weibull maximum-likelihood fitter for block maxima, and the
//! finite right endpoint used as the local Lipschitz estimate.
//!
//! The fitted family is the full location-scale GEV
//! `G(g) = exp(-(1 + ξ (g-u)/σ)^(-1/ξ))` constrained to ξ < 0 (the branch
//! with a finite right endpoint). The endpoint of the raw variable is
//! `u - σ/ξ`, which reduces to the standardized endpoint `-1/ξ` when
//! `u = 0, σ = 1`. The estimate of the maximum gradient norm defaults to the
//! location-scale endpoint, because only that form scales with the data:
//! multiplying all maxima by α must multiply the estimate by α. The
//! standardized `-1/ξ̂` form is kept selectable for comparison; note it is
//! not anchored to the data scale and may fall below the observed maximum.
//!
//! Fitting is maximum likelihood: Nelder-Mead on transformed parameters
//! `(ln(-ξ), u, ln σ)` from a moment-based start, then Newton polish with
//! the analytic gradient until the log-likelihood gradient drops below 1e-6
//! (or a 500-iteration budget runs out, which signals the fallback path).

use serde::Serialize;

use crate::error::{Error, Result};

/// Per-batch maxima of sampled gradient norms.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMaxima {
    values: Vec<f64>,
}

impl BlockMaxima {
    /// Requires at least 3 finite, nonnegative values (one per batch).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidConfig(format!(
                "need at least 3 block maxima, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "block maxima must be finite and nonnegative".into(),
            ));
        }
        Ok(BlockMaxima { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

/// Fitted reverse-Weibull parameters and the derived right endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeibullFit {
    /// Shape ξ < 0.
    pub shape: f64,
    /// Location u.
    pub location: f64,
    /// Scale σ > 0.
    pub scale: f64,
    pub log_likelihood: f64,
    /// Right endpoint `u - σ/ξ` of the fitted distribution.
    pub endpoint: f64,
}

/// Conditions under which the fit is abandoned and the pipeline falls back
/// to the sample maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFallback {
    /// Sample carries no spread (or too few points) to identify a shape.
    Degenerate,
    /// The optimizer did not reach the gradient tolerance in budget.
    NonConvergence,
}

impl std::fmt::Display for FitFallback {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitFallback::Degenerate => write!(f, "degenerate sample"),
            FitFallback::NonConvergence => write!(f, "fit did not converge"),
        }
    }
}

/// Which endpoint the Lipschitz estimate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EndpointVariant {
    /// `u - σ/ξ`, the endpoint of the fitted raw variable (default).
    #[default]
    LocationScale,
    /// The standardized `-1/ξ̂`, kept for comparison runs.
    Standardized,
}

/// GEV cumulative distribution function with shape ξ, location u, scale σ.
///
/// Covers all three branches: Gumbel (ξ = 0), Frechet (ξ > 0) and reverse
/// Weibull (ξ < 0); only the Weibull branch feeds the Lipschitz estimate.
pub fn gev_cdf(g: f64, shape: f64, location: f64, scale: f64) -> Result<f64> {
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::NonPositiveScale(scale));
    }
    let z = (g - location) / scale;
    if shape == 0.0 {
        return Ok((-(-z).exp()).exp());
    }
    let w = 1.0 + shape * z;
    if w <= 0.0 {
        // Outside the support: above the right endpoint for ξ < 0 (CDF 1),
        // below the left endpoint for ξ > 0 (CDF 0).
        return Ok(if shape < 0.0 { 1.0 } else { 0.0 });
    }
    Ok((-w.powf(-1.0 / shape)).exp())
}

// Points with 1 + ξz below this margin count as outside the support. The
// margin matters for ξ < -1, where the raw likelihood grows without bound
// as the endpoint collapses onto the sample maximum; keeping a floor steers
// the optimizer to the regular interior optimum instead of that spike.
const SUPPORT_FLOOR: f64 = 1e-6;

/// Log-likelihood of a GEV sample; `None` when a point leaves the support.
fn log_likelihood(values: &[f64], shape: f64, location: f64, scale: f64) -> Option<f64> {
    if !scale.is_finite()
        || scale <= 0.0
        || !shape.is_finite()
        || !location.is_finite()
        || shape >= 0.0
    {
        return None;
    }
    let mut total = 0.0;
    for &g in values {
        let z = (g - location) / scale;
        let w = 1.0 + shape * z;
        if w <= SUPPORT_FLOOR {
            return None;
        }
        let ln_w = w.ln();
        let t = (-ln_w / shape).exp();
        total += -scale.ln() - (1.0 + 1.0 / shape) * ln_w - t;
    }
    total.is_finite().then_some(total)
}

/// Analytic gradient of the log-likelihood in (ξ, u, σ).
fn log_likelihood_gradient(
    values: &[f64],
    shape: f64,
    location: f64,
    scale: f64,
) -> Option<[f64; 3]> {
    if !scale.is_finite() || scale <= 0.0 || shape.is_nan() || shape >= 0.0 {
        return None;
    }
    let mut d_shape = 0.0;
    let mut d_location = 0.0;
    let mut d_scale = 0.0;
    for &g in values {
        let z = (g - location) / scale;
        let w = 1.0 + shape * z;
        if w <= SUPPORT_FLOOR {
            return None;
        }
        let ln_w = w.ln();
        let t = (-ln_w / shape).exp();
        d_location += (shape + 1.0 - t) / w / scale;
        d_scale += (-1.0 + z * (shape + 1.0 - t) / w) / scale;
        d_shape += (1.0 - t) * ln_w / (shape * shape) - (z / w) * (1.0 + 1.0 / shape - t / shape);
    }
    let grad = [d_shape, d_location, d_scale];
    grad.iter().all(|v| v.is_finite()).then_some(grad)
}

// Transformed coordinates used by the optimizer: ξ = -exp(a), σ = exp(b)
// keep the constraints ξ < 0, σ > 0 unconditional.
fn unpack(theta: &[f64; 3]) -> (f64, f64, f64) {
    (-theta[0].exp(), theta[1], theta[2].exp())
}

fn objective(values: &[f64], theta: &[f64; 3]) -> f64 {
    if theta[0].abs() > 30.0 || theta[2].abs() > 300.0 {
        return f64::INFINITY;
    }
    let (shape, location, scale) = unpack(theta);
    match log_likelihood(values, shape, location, scale) {
        Some(ll) => -ll,
        None => f64::INFINITY,
    }
}

const GRADIENT_TOL: f64 = 1e-6;
const ITERATION_BUDGET: usize = 500;
const NELDER_MEAD_BUDGET: usize = 400;

/// Maximum-likelihood reverse-Weibull fit of a block-maxima sample.
///
/// Values may be any finite reals (the location-scale family lives on ℝ);
/// the pipeline feeds nonnegative gradient norms. Degenerate samples (fewer
/// than 3 points, or spread below 1e-12 of scale) and non-convergent
/// optimizations signal the fallback path instead of producing a fit.
pub fn fit_reverse_weibull(values: &[f64]) -> std::result::Result<WeibullFit, FitFallback> {
    if values.len() < 3 || values.iter().any(|v| !v.is_finite()) {
        return Err(FitFallback::Degenerate);
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let magnitude = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if magnitude == 0.0 || (hi - lo) <= 1e-12 * magnitude.max(1.0) {
        return Err(FitFallback::Degenerate);
    }

    // Fit on data normalized by its largest magnitude; this makes the
    // optimizer scale-free, so the final estimate is scale-equivariant.
    let normalized: Vec<f64> = values.iter().map(|v| v / magnitude).collect();
    let n = normalized.len() as f64;
    let norm_max = hi / magnitude;
    let mean = normalized.iter().sum::<f64>() / n;
    let std_dev = (normalized.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std_dev == 0.0 {
        return Err(FitFallback::Degenerate);
    }

    // Moment-based start: u at the sample max, σ at the sample spread,
    // ξ at -0.5.
    let start = [(0.5f64).ln(), norm_max, std_dev.ln()];
    let steps = [0.3, 0.5 * std_dev, 0.3];
    let (mut theta, nm_iterations) = nelder_mead(
        &|t| objective(&normalized, t),
        start,
        steps,
        NELDER_MEAD_BUDGET,
    );

    let mut used = nm_iterations;
    newton_polish(&normalized, &mut theta, &mut used);

    let (shape, location, scale) = unpack(&theta);
    let Some(ll_normalized) = log_likelihood(&normalized, shape, location, scale) else {
        return Err(FitFallback::NonConvergence);
    };

    // Convergence is judged on the original data scale.
    let location_raw = location * magnitude;
    let scale_raw = scale * magnitude;
    match log_likelihood_gradient(values, shape, location_raw, scale_raw) {
        Some(grad) if grad.iter().all(|g| g.abs() < GRADIENT_TOL) => {}
        _ => return Err(FitFallback::NonConvergence),
    }

    let endpoint = location_raw - scale_raw / shape;
    if !endpoint.is_finite() || endpoint < hi - 1e-9 * magnitude.max(1.0) {
        return Err(FitFallback::NonConvergence);
    }
    Ok(WeibullFit {
        shape,
        location: location_raw,
        scale: scale_raw,
        log_likelihood: ll_normalized - n * magnitude.ln(),
        endpoint,
    })
}

/// Newton ascent on the transformed parameters using the analytic gradient
/// and a finite-difference Hessian, with backtracking.
fn newton_polish(values: &[f64], theta: &mut [f64; 3], used: &mut usize) {
    let grad_t = |t: &[f64; 3]| -> Option<[f64; 3]> {
        let (shape, location, scale) = unpack(t);
        let g = log_likelihood_gradient(values, shape, location, scale)?;
        // Chain rule: dξ/da = ξ, dσ/db = σ.
        Some([g[0] * shape, g[1], g[2] * scale])
    };

    while *used < ITERATION_BUDGET {
        *used += 1;
        let Some(g) = grad_t(theta) else { return };
        if g.iter().all(|v| v.abs() < GRADIENT_TOL * 1e-3) {
            return;
        }
        // Central-difference Hessian of the log-likelihood; shrink the step
        // when a probe lands outside the support.
        let mut hessian = [[0.0f64; 3]; 3];
        for i in 0..3 {
            let mut h = 1e-6 * (1.0 + theta[i].abs());
            let mut row = None;
            for _ in 0..6 {
                let mut up = *theta;
                up[i] += h;
                let mut down = *theta;
                down[i] -= h;
                if let (Some(gu), Some(gd)) = (grad_t(&up), grad_t(&down)) {
                    row = Some(std::array::from_fn::<f64, 3, _>(|j| {
                        (gu[j] - gd[j]) / (2.0 * h)
                    }));
                    break;
                }
                h *= 0.25;
            }
            let Some(row) = row else { return };
            hessian[i] = row;
        }
        // Symmetrize and solve H δ = -g.
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let avg = 0.5 * (hessian[i][j] + hessian[j][i]);
            hessian[i][j] = avg;
            hessian[j][i] = avg;
        }
        let Some(mut delta) = solve3(&hessian, &[-g[0], -g[1], -g[2]]) else {
            return;
        };
        let current = objective(values, theta);
        let mut improved = false;
        for _ in 0..30 {
            let candidate = [
                theta[0] + delta[0],
                theta[1] + delta[1],
                theta[2] + delta[2],
            ];
            if objective(values, &candidate) < current {
                *theta = candidate;
                improved = true;
                break;
            }
            for d in &mut delta {
                *d *= 0.5;
            }
        }
        if !improved {
            return;
        }
    }
}

/// 3x3 linear solve by Gaussian elimination with partial pivoting.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..3 {
        let pivot =
            (col..3).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in (col + 1)..3 {
            let factor = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (cell, p) in m[row].iter_mut().zip(pivot_row).skip(col) {
                *cell -= factor * p;
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut sum = rhs[row];
        for k in (row + 1)..3 {
            sum -= m[row][k] * x[k];
        }
        x[row] = sum / m[row][row];
        if !x[row].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Standard Nelder-Mead minimization; returns the best vertex and the
/// number of iterations consumed.
fn nelder_mead(
    f: &dyn Fn(&[f64; 3]) -> f64,
    start: [f64; 3],
    steps: [f64; 3],
    budget: usize,
) -> ([f64; 3], usize) {
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, f(&start)));
    for i in 0..3 {
        let mut v = start;
        v[i] += steps[i];
        simplex.push((v, f(&v)));
    }
    let mut iterations = 0;
    while iterations < budget {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[3].1;
        if (worst - best).abs() < 1e-12 * (1.0 + best.abs()) && worst.is_finite() {
            break;
        }
        let mut centroid = [0.0; 3];
        for (v, _) in &simplex[..3] {
            for k in 0..3 {
                centroid[k] += v[k] / 3.0;
            }
        }
        let worst_v = simplex[3].0;
        let reflect = |alpha: f64| {
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = centroid[k] + alpha * (centroid[k] - worst_v[k]);
            }
            p
        };
        let r = reflect(1.0);
        let fr = f(&r);
        if fr < simplex[0].1 {
            let e = reflect(2.0);
            let fe = f(&e);
            simplex[3] = if fe < fr { (e, fe) } else { (r, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (r, fr);
        } else {
            let c = reflect(-0.5);
            let fc = f(&c);
            if fc < simplex[3].1 {
                simplex[3] = (c, fc);
            } else {
                let best_v = simplex[0].0;
                for (v, fv) in simplex.iter_mut().skip(1) {
                    for k in 0..3 {
                        v[k] = best_v[k] + 0.5 * (v[k] - best_v[k]);
                    }
                    *fv = f(v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    (simplex[0].0, iterations)
}

/// Local Lipschitz estimate from a fit outcome; total by construction.
///
/// A valid fit yields the selected endpoint; any fallback yields the sample
/// maximum, so the estimate never drops below the observed evidence (the
/// `Standardized` variant excepted, by design).
pub fn lipschitz_estimate(
    fit: &std::result::Result<WeibullFit, FitFallback>,
    maxima: &BlockMaxima,
    variant: EndpointVariant,
) -> f64 {
    match fit {
        Ok(fit) => match variant {
            EndpointVariant::LocationScale => fit.endpoint,
            EndpointVariant::Standardized => -1.0 / fit.shape,
        },
        Err(_) => maxima.max(),
    }
}
