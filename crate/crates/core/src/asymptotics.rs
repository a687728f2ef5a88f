//! Large-sample bias/variance formulas and equivalent-kernel verification.
//!
//! For the estimator with penalty weight ρ and smoothing parameter λ, the
//! leading terms at an interior point t are
//!
//! ```text
//! bias(t)     = λ (−1)^{m−1} r(t) { ρ(t) f₀^{(m)}(t) }^{(m)}
//! variance(t) = L₀ r(t)^{1−1/(2m)} ρ(t)^{−1/(2m)} / ( n λ^{1/(2m)} )
//! ```
//!
//! with `r = σ²/q`. This module evaluates those formulas, integrates them
//! into the IMSE, evaluates the penalty-design functional Π(ρ) whose
//! segment-wise minimizer the adaptive pipeline implements, and checks the
//! finite-sample hat matrix against the closed-form equivalent kernel.

use std::sync::Arc;

use serde::Serialize;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::kernels;
use crate::quad;
use crate::rkhs::{self, PiecewisePenalty, MAX_RKHS_ORDER};
use crate::rng;
use crate::solver::PenaltySystem;

/// Shared real-valued function on `[0, 1]`.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Minimum distance from the endpoints for pointwise asymptotic formulas.
pub const INTERIOR_MARGIN: f64 = 0.05;

/// Central-difference step for derivative fallbacks.
const FD_STEP: f64 = 1e-4;

// =====================================================================
// TruthSpec
// =====================================================================

/// The data-generating truth: regression function, optional analytic
/// derivatives, noise scale σ(·), and design density q(·).
#[derive(Clone)]
pub struct TruthSpec {
    f0: RealFn,
    fm: Option<RealFn>,
    f2m: Option<RealFn>,
    sigma: RealFn,
    q: RealFn,
}

impl std::fmt::Debug for TruthSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TruthSpec")
            .field("fm", &self.fm.is_some())
            .field("f2m", &self.f2m.is_some())
            .finish_non_exhaustive()
    }
}

impl TruthSpec {
    /// Builds a truth with the given design density, which must be positive
    /// and integrate to 1 within 1e-6.
    pub fn new(
        f0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        q: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let spec = TruthSpec {
            f0: Arc::new(f0),
            fm: None,
            f2m: None,
            sigma: Arc::new(sigma),
            q: Arc::new(q),
        };
        for i in 0..=400 {
            let t = i as f64 / 400.0;
            let qv = (spec.q)(t);
            if !(qv.is_finite() && qv > 0.0) {
                return Err(Error::invalid(format!("design density q({t}) = {qv}")));
            }
            let sv = (spec.sigma)(t);
            if !(sv.is_finite() && sv >= 0.0) {
                return Err(Error::invalid(format!("noise scale sigma({t}) = {sv}")));
            }
        }
        let mass = quad::simpson(|t| (spec.q)(t), 0.0, 1.0, 2001);
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "design density integrates to {mass}, not 1"
            )));
        }
        Ok(spec)
    }

    /// Uniform design density.
    pub fn uniform(
        f0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        TruthSpec::new(f0, sigma, |_| 1.0)
    }

    /// Attaches an analytic m-th derivative of f₀.
    pub fn with_fm(mut self, fm: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.fm = Some(Arc::new(fm));
        self
    }

    /// Attaches an analytic 2m-th derivative of f₀.
    pub fn with_f2m(mut self, f2m: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.f2m = Some(Arc::new(f2m));
        self
    }

    pub fn f0(&self, t: f64) -> f64 {
        (self.f0)(t)
    }

    pub fn sigma(&self, t: f64) -> f64 {
        (self.sigma)(t)
    }

    pub fn q(&self, t: f64) -> f64 {
        (self.q)(t)
    }

    /// The variance-to-density ratio `r = σ²/q`.
    pub fn r(&self, t: f64) -> f64 {
        let s = self.sigma(t);
        s * s / self.q(t)
    }

    /// `f₀^{(2m)}(t)`: analytic when attached, otherwise central finite
    /// differences (of the attached `f₀^{(m)}` when available, else of f₀).
    ///
    /// The fixed step makes the fallback accurate only up to third-order
    /// differences; attach analytic derivatives for `2m ≥ 4`.
    fn f2m_at(&self, t: f64, m: usize) -> f64 {
        if let Some(f2m) = &self.f2m {
            return f2m(t);
        }
        if let Some(fm) = &self.fm {
            return fd_derivative(fm.as_ref(), t, m);
        }
        fd_derivative(self.f0.as_ref(), t, 2 * m)
    }
}

/// Central finite difference of the given order with step [`FD_STEP`].
fn fd_derivative(f: &(dyn Fn(f64) -> f64 + Send + Sync), t: f64, order: usize) -> f64 {
    let h = FD_STEP;
    let mut acc = 0.0;
    let mut coeff = 1.0;
    for j in 0..=order {
        let x = t + (order as f64 / 2.0 - j as f64) * h;
        acc += coeff * f(x);
        // next alternating binomial coefficient (−1)^j C(order, j)
        coeff *= -((order - j) as f64) / (j + 1) as f64;
    }
    acc / h.powi(order as i32)
}

// =====================================================================
// Pointwise formulas
// =====================================================================

fn check_order(m: usize) -> Result<()> {
    if m == 0 || 2 * m > MAX_RKHS_ORDER {
        return Err(Error::UnsupportedOrder { m });
    }
    Ok(())
}

fn check_point(t: f64, penalty: &PiecewisePenalty, m: usize) -> Result<()> {
    if !(INTERIOR_MARGIN..=1.0 - INTERIOR_MARGIN).contains(&t) {
        return Err(Error::invalid(format!(
            "t = {t} must be at least {INTERIOR_MARGIN} from the endpoints"
        )));
    }
    // The derivative of ρf₀^{(m)} does not exist at a penalty knot, and the
    // fallback difference stencil must not straddle one.
    let stencil = m as f64 * FD_STEP;
    for &tau in penalty.knots() {
        if (t - tau).abs() <= stencil {
            return Err(Error::invalid(format!(
                "t = {t} is at (or within the difference stencil of) the penalty knot {tau}"
            )));
        }
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("lambda = {lambda} must be positive")));
    }
    Ok(())
}

fn bias_unchecked(t: f64, lambda: f64, penalty: &PiecewisePenalty, truth: &TruthSpec, m: usize) -> f64 {
    // ρ piecewise constant ⇒ {ρ f₀^{(m)}}^{(m)} = ρ(t)·f₀^{(2m)}(t) within
    // a segment.
    let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
    lambda * sign * truth.r(t) * penalty.value_at(t) * truth.f2m_at(t, m)
}

fn variance_unchecked(
    t: f64,
    n: usize,
    lambda: f64,
    penalty: &PiecewisePenalty,
    truth: &TruthSpec,
    m: usize,
    l0: f64,
) -> f64 {
    let expo = 1.0 - 1.0 / (2 * m) as f64;
    l0 * truth.r(t).powf(expo) * penalty.value_at(t).powf(-1.0 / (2 * m) as f64)
        / (n as f64 * lambda.powf(1.0 / (2 * m) as f64))
}

/// Leading-order bias of the estimator at an interior point.
pub fn asymptotic_bias(
    t: f64,
    lambda: f64,
    penalty: &PiecewisePenalty,
    truth: &TruthSpec,
    m: usize,
) -> Result<f64> {
    check_order(m)?;
    check_lambda(lambda)?;
    check_point(t, penalty, m)?;
    Ok(bias_unchecked(t, lambda, penalty, truth, m))
}

/// Leading-order variance of the estimator at an interior point.
pub fn asymptotic_variance(
    t: f64,
    n: usize,
    lambda: f64,
    penalty: &PiecewisePenalty,
    truth: &TruthSpec,
    m: usize,
) -> Result<f64> {
    check_order(m)?;
    check_lambda(lambda)?;
    check_point(t, penalty, m)?;
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    Ok(variance_unchecked(t, n, lambda, penalty, truth, m, kernels::l0(m)?))
}

/// Pointwise asymptotic report at `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    pub t: f64,
    pub bias: f64,
    pub variance: f64,
    /// Exactly `bias² + variance`.
    pub mse: f64,
    /// `β = λ^{−1/(2m)}`, the equivalent-kernel inverse bandwidth.
    pub beta: f64,
}

/// Evaluates bias, variance, and their sum at an interior point.
pub fn asymptotic_report(
    t: f64,
    n: usize,
    lambda: f64,
    penalty: &PiecewisePenalty,
    truth: &TruthSpec,
    m: usize,
) -> Result<AsymptoticsReport> {
    let bias = asymptotic_bias(t, lambda, penalty, truth, m)?;
    let variance = asymptotic_variance(t, n, lambda, penalty, truth, m)?;
    Ok(AsymptoticsReport {
        t,
        bias,
        variance,
        mse: bias * bias + variance,
        beta: lambda.powf(-1.0 / (2 * m) as f64),
    })
}

// =====================================================================
// Integrated criteria
// =====================================================================

/// Integrated asymptotic MSE: composite Simpson of `bias² + variance` over
/// `[0, 1]`, excluding 1e-3 neighborhoods of the penalty knots where the
/// bias formula is undefined.
pub fn imse(
    lambda: f64,
    penalty: &PiecewisePenalty,
    truth: &TruthSpec,
    n: usize,
    m: usize,
) -> Result<f64> {
    check_order(m)?;
    check_lambda(lambda)?;
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let l0 = kernels::l0(m)?;
    let mut total = 0.0;
    for (lo, hi) in knot_clipped_segments(penalty, 1e-3) {
        total += quad::simpson(
            |t| {
                let b = bias_unchecked(t, lambda, penalty, truth, m);
                b * b + variance_unchecked(t, n, lambda, penalty, truth, m, l0)
            },
            lo,
            hi,
            201,
        );
    }
    Ok(total)
}

/// Penalty-segment intervals with `margin` clipped off around each knot.
fn knot_clipped_segments(penalty: &PiecewisePenalty, margin: f64) -> Vec<(f64, f64)> {
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(penalty.knots());
    bounds.push(1.0);
    bounds
        .windows(2)
        .map(|w| {
            let lo = if w[0] == 0.0 { 0.0 } else { w[0] + margin };
            let hi = if w[1] == 1.0 { 1.0 } else { w[1] - margin };
            (lo, hi)
        })
        .filter(|&(lo, hi)| hi > lo)
        .collect()
}

/// The penalty-design functional
/// `Π(ρ) = ∫ r² [ρ f₀^{(2m)}]² + L₀ ∫ r^{1−1/(2m)} ρ^{−1/(2m)}`,
/// integrated segment-wise (knot non-differentiability ignored). Its
/// segment-wise minimizer is the closed form the adaptive pipeline uses.
pub fn pi_functional(penalty: &PiecewisePenalty, truth: &TruthSpec, m: usize) -> Result<f64> {
    check_order(m)?;
    let l0 = kernels::l0(m)?;
    let expo = 1.0 - 1.0 / (2 * m) as f64;
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(penalty.knots());
    bounds.push(1.0);
    let mut total = 0.0;
    for w in bounds.windows(2) {
        let rho = penalty.value_at(0.5 * (w[0] + w[1]));
        total += quad::simpson(
            |t| {
                let r = truth.r(t);
                let d = rho * truth.f2m_at(t, m);
                r * r * d * d + l0 * r.powf(expo) * rho.powf(-1.0 / (2 * m) as f64)
            },
            w[0],
            w[1],
            201,
        );
    }
    Ok(total)
}

// =====================================================================
// Equivalent-kernel verification
// =====================================================================

/// Outcome of comparing a hat-matrix row with the equivalent kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCheck {
    /// Design point the hat row was taken at (nearest to the requested t0).
    pub t0: f64,
    /// Design abscissae.
    pub t: Vec<f64>,
    /// Row of the hat matrix at t0.
    pub hat_weights: Vec<f64>,
    /// `J(t0, t_i) / (n·q(t_i))` with q ≡ 1 (uniform-design comparison).
    pub kernel_weights: Vec<f64>,
    /// Relative L2 distance between the two weight vectors.
    pub discrepancy: f64,
    /// `β = λ^{−1/(2m)}`.
    pub beta: f64,
    /// False when β < 5: the asymptotic regime is not reached and the
    /// discrepancy is not meaningful.
    pub asymptotic_regime: bool,
}

/// Compares the finite-sample smoother weights at the design point nearest
/// `t0` against the closed-form equivalent kernel `J(t0, ·)/(n·q)` for a
/// uniform design (q ≡ 1, unit weights).
pub fn verify_equivalent_kernel(
    design: &Design,
    lambda: f64,
    penalty: &PiecewisePenalty,
    m: usize,
    t0: f64,
) -> Result<KernelCheck> {
    check_order(m)?;
    check_lambda(lambda)?;
    if !(INTERIOR_MARGIN..=1.0 - INTERIOR_MARGIN).contains(&t0) {
        return Err(Error::invalid(format!(
            "t0 = {t0} must be at least {INTERIOR_MARGIN} from the endpoints"
        )));
    }
    let t = design.t();
    let n = t.len();
    let i0 = nearest_index(t, t0);
    let t0 = t[i0];

    let ctx = rkhs::gram_matrix(design, penalty, m)?;
    let system = PenaltySystem::new(design, &ctx)?;
    let hat = system.hat_matrix(lambda)?;
    let hat_weights: Vec<f64> = (0..n).map(|j| hat[(i0, j)]).collect();

    let beta = lambda.powf(-1.0 / (2 * m) as f64);
    let grid: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
    let warp = kernels::warp(penalty, |_| 1.0, m, &grid)?;
    let mut kernel_weights = Vec::with_capacity(n);
    for &ti in t {
        kernel_weights.push(kernels::eval_j(t0, ti, beta, &warp, m)? / n as f64);
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for (a, k) in hat_weights.iter().zip(&kernel_weights) {
        num += (a - k) * (a - k);
        den += k * k;
    }
    if den == 0.0 {
        return Err(Error::Degenerate("kernel weight vector vanished".into()));
    }
    Ok(KernelCheck {
        t0,
        t: t.to_vec(),
        hat_weights,
        kernel_weights,
        discrepancy: (num / den).sqrt(),
        beta,
        asymptotic_regime: beta >= 5.0,
    })
}

fn nearest_index(t: &[f64], t0: f64) -> usize {
    let mut best = 0;
    for (i, &ti) in t.iter().enumerate() {
        if (ti - t0).abs() < (t[best] - t0).abs() {
            best = i;
        }
    }
    best
}

/// Effective bandwidth of the smoother at the design point nearest `t0`:
/// the square-rooted second moment of the hat-row weights around t0.
pub fn effective_bandwidth(
    design: &Design,
    lambda: f64,
    penalty: &PiecewisePenalty,
    m: usize,
    t0: f64,
) -> Result<f64> {
    check_order(m)?;
    check_lambda(lambda)?;
    let t = design.t();
    let i0 = nearest_index(t, t0);
    let t0 = t[i0];
    let ctx = rkhs::gram_matrix(design, penalty, m)?;
    let system = PenaltySystem::new(design, &ctx)?;
    let hat = system.hat_matrix(lambda)?;
    let mut mass = 0.0;
    let mut moment = 0.0;
    for (j, &tj) in t.iter().enumerate() {
        let w = hat[(i0, j)];
        mass += w;
        moment += w * (tj - t0) * (tj - t0);
    }
    if !(mass > 0.0 && moment > 0.0) {
        return Err(Error::Degenerate(format!(
            "hat row mass {mass} / moment {moment} not positive"
        )));
    }
    Ok((moment / mass).sqrt())
}

// =====================================================================
// Monte Carlo validation
// =====================================================================

/// Monte Carlo bias and variance of `f̂(t0)` at the design point nearest
/// `t0`, over an equispaced design `t_i = i/n` with fresh noise per
/// replicate. One penalty system is factorized once and reused.
pub fn empirical_bias_variance(
    truth: &TruthSpec,
    penalty: &PiecewisePenalty,
    m: usize,
    lambda: f64,
    n: usize,
    replicates: usize,
    seed: u64,
    t0: f64,
) -> Result<(f64, f64)> {
    check_order(m)?;
    check_lambda(lambda)?;
    if replicates < 100 {
        return Err(Error::invalid(format!(
            "need at least 100 replicates, got {replicates}"
        )));
    }
    let t: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let truth_vals: Vec<f64> = t.iter().map(|&ti| truth.f0(ti)).collect();
    let sigmas: Vec<f64> = t.iter().map(|&ti| truth.sigma(ti)).collect();
    let i0 = nearest_index(&t, t0);
    let design = Design::new(t, truth_vals.clone(), None)?;
    let ctx = rkhs::gram_matrix(&design, penalty, m)?;
    let system = PenaltySystem::new(&design, &ctx)?;

    let mut estimates = Vec::with_capacity(replicates);
    let mut y = vec![0.0; n];
    for rep in 0..replicates {
        for i in 0..n {
            y[i] = truth_vals[i] + sigmas[i] * rng::standard_normal(seed, rep as u64, i as u64);
        }
        estimates.push(system.apply_smoother(lambda, &y)?[i0]);
    }
    let mean = estimates.iter().sum::<f64>() / replicates as f64;
    let var = estimates
        .iter()
        .map(|&e| (e - mean) * (e - mean))
        .sum::<f64>()
        / (replicates - 1) as f64;
    Ok((mean - truth_vals[i0], var))
}

// =====================================================================
// Tests
// =====================================================================
