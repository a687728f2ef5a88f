//! Data-driven construction of the spatially varying penalty.
//!
//! The pipeline estimates everything the segment-wise optimal penalty needs
//! and then model-selects over the amount of adaptivity:
//!
//! 1. `estimate_variance` — pilot fit, smoothed squared residuals → σ̂²(·),
//!    whose reciprocal becomes the fitting weights;
//! 2. `select_knots` — candidate penalty knots where the conditional
//!    distribution of y given t changes the most (kernel density contrast);
//! 3. `estimate_f2m` — order-2m pilot fit differentiated 2m times → f̂^{(2m)};
//! 4. `optimal_rho` — the closed-form segment-wise minimizer
//!    ρ_j = [L₀ ∫ r^{1−1/(2m)} / (4m ∫ r² (f^{(2m)})²)]^{2m/(4m+1)},
//!    r = σ²/q;
//! 5. `power_up` — contrast exaggeration ρ_j ↦ ρ_j^γ at fixed geometric mean;
//! 6. `gaic` — marginal-likelihood score with a 2·S complexity charge,
//!    minimized over the (S, γ) grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::kernels;
use crate::quad;
use crate::rkhs::{PiecewisePenalty, MAX_RKHS_ORDER};
use crate::solver::{self, LambdaGrid, SelectionCriterion, SplineFit};

/// Number of points in every estimated curve grid on `[0, 1]`.
pub const CURVE_GRID_POINTS: usize = 201;

fn curve_grid() -> Vec<f64> {
    (0..CURVE_GRID_POINTS)
        .map(|i| i as f64 / (CURVE_GRID_POINTS - 1) as f64)
        .collect()
}

// =====================================================================
// Curve
// =====================================================================

/// A function tabulated on a sorted grid, evaluated by linear interpolation
/// (clamped at the ends).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Curve {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::invalid("curve needs equal-length nonempty grids"));
        }
        for pair in x.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::invalid("curve grid must be strictly increasing"));
            }
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("curve values must be finite"));
        }
        Ok(Curve { x, y })
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn eval(&self, x: f64) -> f64 {
        quad::interp_linear(&self.x, &self.y, x)
    }
}

// =====================================================================
// Small statistics helpers
// =====================================================================

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}

fn rule_of_thumb_bandwidth(xs: &[f64]) -> f64 {
    (1.06 * sample_sd(xs) * (xs.len() as f64).powf(-0.2)).max(1e-9)
}

fn gauss(u: f64) -> f64 {
    (-0.5 * u * u).exp()
}

/// Local-linear kernel regression of `ys` on `xs`, evaluated on `grid`.
fn local_linear(xs: &[f64], ys: &[f64], grid: &[f64], h: f64) -> Vec<f64> {
    grid.iter()
        .map(|&g| {
            let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&x, &y) in xs.iter().zip(ys) {
                let k = gauss((x - g) / h);
                let dx = x - g;
                s0 += k;
                s1 += k * dx;
                s2 += k * dx * dx;
                t0 += k * y;
                t1 += k * dx * y;
            }
            let det = s0 * s2 - s1 * s1;
            if det.abs() > 1e-12 * (s0 * s2).abs().max(1e-300) {
                (s2 * t0 - s1 * t1) / det
            } else {
                t0 / s0 // fall back to a local constant when x-spread vanishes
            }
        })
        .collect()
}

/// Gaussian kernel density of the abscissae on `grid`.
fn design_density(t: &[f64], grid: &[f64]) -> Vec<f64> {
    let h = rule_of_thumb_bandwidth(t);
    let norm = t.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt();
    grid.iter()
        .map(|&g| t.iter().map(|&ti| gauss((g - ti) / h)).sum::<f64>() / norm)
        .collect()
}

// =====================================================================
// Variance estimation
// =====================================================================

/// Estimates the noise variance function σ²(t) on the curve grid.
///
/// Pilot uniform-penalty spline (order 2, unweighted, GCV λ), then squared
/// residuals smoothed by local-linear regression. `bandwidth = None` uses
/// the rule of thumb `1.06·sd(t)·n^{-1/5}`. The output is floored at
/// `max(1e-8, 1e-4·median)` so reciprocal weights stay finite.
pub fn estimate_variance(design: &Design, bandwidth: Option<f64>) -> Result<Curve> {
    let n = design.len();
    if n < 20 {
        return Err(Error::invalid(format!(
            "variance estimation needs at least 20 observations, got {n}"
        )));
    }
    if let Some(h) = bandwidth {
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::invalid(format!("bandwidth {h} must be positive")));
        }
    }
    let unweighted = Design::new(design.t().to_vec(), design.y().to_vec(), None)?;
    let pilot = solver::fit_auto(
        &unweighted,
        &PiecewisePenalty::uniform(),
        2,
        SelectionCriterion::Gcv,
        &LambdaGrid::default(),
    )?;
    let sq: Vec<f64> = design
        .y()
        .iter()
        .zip(pilot.fitted())
        .map(|(&y, &f)| (y - f) * (y - f))
        .collect();
    let h = bandwidth.unwrap_or_else(|| rule_of_thumb_bandwidth(design.t()));
    // Reflect the data about both endpoints: one-sided windows make the
    // local-linear slope (hence the boundary values) wildly unstable under
    // the χ²-type noise of squared residuals.
    let mut ax = Vec::with_capacity(3 * n);
    let mut ay = Vec::with_capacity(3 * n);
    for (&x, &v) in design.t().iter().zip(&sq) {
        ax.push(x);
        ay.push(v);
        ax.push(-x);
        ay.push(v);
        ax.push(2.0 - x);
        ay.push(v);
    }
    let grid = curve_grid();
    let smoothed = local_linear(&ax, &ay, &grid, h);
    let floor = (1e-4 * quad::median(&smoothed)).max(1e-8);
    let floored = smoothed.into_iter().map(|v| v.max(floor)).collect();
    Curve::new(grid, floored)
}

// =====================================================================
// Knot selection
// =====================================================================

/// Candidate penalty knots ranked by conditional-density change.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnotSelection {
    /// Chosen knots, ascending.
    pub knots: Vec<f64>,
    /// Set when the response was constant and no density contrast exists.
    pub degenerate: bool,
}

/// Ranks interior grid boundaries `k/grid_size` by how much the conditional
/// density of y given t changes across them, with a minimum separation of
/// two grid cells greedily enforced. Returns `(cell index, position, score)`
/// in pick order, plus the degeneracy flag.
fn ranked_knot_candidates(
    design: &Design,
    grid_size: usize,
) -> Result<(Vec<(usize, f64, f64)>, bool)> {
    let n = design.len();
    if n < 10 {
        return Err(Error::invalid(format!(
            "knot selection needs at least 10 observations, got {n}"
        )));
    }
    if grid_size < 3 {
        return Err(Error::invalid("density grid needs at least 3 cells"));
    }
    let t = design.t();
    let y = design.y();
    let sd_y = sample_sd(y);
    if sd_y == 0.0 {
        return Ok((Vec::new(), true));
    }
    let h_t = rule_of_thumb_bandwidth(t);
    let h_y = rule_of_thumb_bandwidth(y);

    // Evaluation grid for the response axis.
    const YG: usize = 201;
    let y_lo = y.iter().cloned().fold(f64::MAX, f64::min) - 3.0 * h_y;
    let y_hi = y.iter().cloned().fold(f64::MIN, f64::max) + 3.0 * h_y;
    let dy = (y_hi - y_lo) / (YG - 1) as f64;

    let g = grid_size;
    let mut kt = vec![vec![0.0f64; n]; g + 1];
    for (j, row) in kt.iter_mut().enumerate() {
        let s = j as f64 / g as f64;
        for (i, &ti) in t.iter().enumerate() {
            row[i] = gauss((s - ti) / h_t);
        }
    }
    let mut ky = vec![vec![0.0f64; n]; YG];
    for (gi, row) in ky.iter_mut().enumerate() {
        let yv = y_lo + dy * gi as f64;
        for (i, &yi) in y.iter().enumerate() {
            row[i] = gauss((yv - yi) / h_y);
        }
    }
    // cond[j][gi] ≈ density of y at grid point gi conditional on t = j/g.
    let norm = h_y * (2.0 * std::f64::consts::PI).sqrt();
    let cond: Vec<Vec<f64>> = kt
        .iter()
        .map(|ktj| {
            let mass: f64 = ktj.iter().sum();
            ky.iter()
                .map(|kyg| {
                    let joint: f64 = ktj.iter().zip(kyg).map(|(a, b)| a * b).sum();
                    joint / (mass * norm)
                })
                .collect()
        })
        .collect();

    // Score boundary k/g by the L1 distance between the conditional
    // densities on its two sides.
    let mut cands: Vec<(usize, f64, f64)> = (1..g)
        .map(|k| {
            let l1: f64 = (0..YG)
                .map(|gi| (cond[k - 1][gi] - cond[k + 1][gi]).abs())
                .sum::<f64>()
                * dy;
            (k, k as f64 / g as f64, l1)
        })
        .collect();
    // Highest score first; leftmost position breaks exact ties.
    cands.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .expect("finite scores")
            .then(a.0.cmp(&b.0))
    });
    let mut picked: Vec<(usize, f64, f64)> = Vec::new();
    for (k, pos, score) in cands {
        if picked.iter().all(|&(ks, _, _)| k.abs_diff(ks) >= 2) {
            picked.push((k, pos, score));
        }
    }
    Ok((picked, false))
}

/// Selects up to `s` penalty knots on the `k/grid_size` boundary grid.
pub fn select_knots(design: &Design, s: usize, grid_size: usize) -> Result<KnotSelection> {
    if s >= grid_size {
        return Err(Error::invalid(format!(
            "requested {s} knots on a {grid_size}-cell grid; need s < grid_size"
        )));
    }
    let (ranked, degenerate) = ranked_knot_candidates(design, grid_size)?;
    let mut knots: Vec<f64> = ranked.iter().take(s).map(|&(_, pos, _)| pos).collect();
    knots.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
    Ok(KnotSelection { knots, degenerate })
}

// =====================================================================
// Curvature estimation
// =====================================================================

/// Estimates f^{(2m)} by differentiating a weighted pilot fit of penalty
/// order `p = 2m` (so the representer is piecewise polynomial of degree
/// `4m−1` and the 2m-th derivative exists between design points).
///
/// Derivatives are taken analytically through the kernel expansion and
/// evaluated at design-interval midpoints — the representer's highest
/// derivatives kink at the design points themselves. The returned curve is
/// tabulated on that midpoint grid so narrow curvature spikes survive.
pub fn estimate_f2m(design: &Design, weights: &[f64], m: usize) -> Result<Curve> {
    if m == 0 || 2 * m > MAX_RKHS_ORDER {
        return Err(Error::UnsupportedOrder { m });
    }
    let n = design.len();
    if n < 4 * m {
        return Err(Error::invalid(format!(
            "curvature estimation needs at least 4m = {} observations, got {n}",
            4 * m
        )));
    }
    let weighted = design.reweighted(weights.to_vec())?;
    let pilot = solver::fit_auto(
        &weighted,
        &PiecewisePenalty::uniform(),
        2 * m,
        SelectionCriterion::Gcv,
        &LambdaGrid::default(),
    )?;
    let t = design.t();
    let mids: Vec<f64> = t.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut vals = Vec::with_capacity(mids.len());
    for &x in &mids {
        vals.push(pilot.predict_deriv(x, 2 * m)?);
    }
    // Keep the native midpoint grid: resampling onto a coarser uniform grid
    // can drop narrow curvature spikes that fall between grid points.
    Curve::new(mids, vals)
}

// =====================================================================
// Optimal penalty values
// =====================================================================

/// Segment integrals of the pointwise IMSE trade-off over `[lo, hi]`:
/// `A = ∫ r² (f^{(2m)})²` and `B = L0 ∫ r^{1−1/(2m)}`, by composite Simpson
/// on the interpolated curves. The segment objective is
/// `g(ρ) = ρ²·A + ρ^{−1/(2m)}·B`.
pub fn segment_integrals(
    lo: f64,
    hi: f64,
    r_curve: &Curve,
    f2m_curve: &Curve,
    m: usize,
    l0: f64,
) -> Result<(f64, f64)> {
    if !(hi > lo) {
        return Err(Error::invalid("segment must have positive length"));
    }
    let expo = 1.0 - 1.0 / (2 * m) as f64;
    let a = quad::simpson(
        |u| {
            let r = r_curve.eval(u);
            let d = f2m_curve.eval(u);
            r * r * d * d
        },
        lo,
        hi,
        129,
    );
    let b = l0 * quad::simpson(|u| r_curve.eval(u).powf(expo), lo, hi, 129);
    Ok((a, b))
}

/// Closed-form segment-wise optimal penalty for the given knots:
/// `ρ_j = [B_j / (4m·A_j)]^{2m/(4m+1)}`, the minimizer of the segment
/// objective, with the denominator floored to keep ρ finite where the
/// curvature estimate vanishes.
pub fn optimal_rho(
    knots: &[f64],
    r_curve: &Curve,
    f2m_curve: &Curve,
    m: usize,
    l0: f64,
) -> Result<PiecewisePenalty> {
    if m == 0 || m > MAX_RKHS_ORDER / 2 {
        return Err(Error::UnsupportedOrder { m });
    }
    if !(l0.is_finite() && l0 > 0.0) {
        return Err(Error::invalid(format!("kernel constant L0 = {l0} invalid")));
    }
    let mut boundaries = vec![0.0];
    boundaries.extend_from_slice(knots);
    boundaries.push(1.0);
    for pair in boundaries.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::invalid("knots must be strictly increasing in (0,1)"));
        }
    }

    // Median of the denominator integrand over the whole interval sets the
    // floor scale (the optimal ρ is unbounded where f^{(2m)} → 0).
    let den_samples: Vec<f64> = r_curve
        .xs()
        .iter()
        .map(|&u| {
            let r = r_curve.eval(u);
            let d = f2m_curve.eval(u);
            r * r * d * d
        })
        .collect();
    let med = quad::median(&den_samples);

    let exponent = 2.0 * m as f64 / (4.0 * m as f64 + 1.0);
    let mut values = Vec::with_capacity(boundaries.len() - 1);
    for (j, pair) in boundaries.windows(2).enumerate() {
        let (lo, hi) = (pair[0], pair[1]);
        if !r_curve.xs().iter().any(|&x| x >= lo && x <= hi) {
            return Err(Error::GridTooCoarse {
                segment: j,
                lo,
                hi,
            });
        }
        let (a, b) = segment_integrals(lo, hi, r_curve, f2m_curve, m, l0)?;
        let eps = if med > 0.0 {
            1e-8 * (hi - lo) * med
        } else {
            1e-8 * (hi - lo)
        };
        let denom = 4.0 * m as f64 * a.max(eps);
        values.push((b / denom).powf(exponent));
    }
    PiecewisePenalty::new(knots.to_vec(), values, 1.0)
}

// =====================================================================
// Power-up
// =====================================================================

/// Raises the penalty contrast: each value becomes `(ρ_j / ḡ)^γ` where `ḡ`
/// is the geometric mean of the segment values, so scale stays with λ and
/// only contrast changes.
pub fn power_up(penalty: &PiecewisePenalty, gamma: f64) -> Result<PiecewisePenalty> {
    if !gamma.is_finite() || gamma < 1.0 {
        return Err(Error::invalid(format!("gamma = {gamma} must be >= 1")));
    }
    let vals = penalty.values();
    let powered: Vec<f64> = if vals.windows(2).all(|w| w[0] == w[1]) {
        // Constant penalty: normalization is exactly 1 regardless of γ.
        vec![1.0; vals.len()]
    } else {
        let gm = (vals.iter().map(|v| v.ln()).sum::<f64>() / vals.len() as f64).exp();
        vals.iter().map(|v| (v / gm).powf(gamma)).collect()
    };
    PiecewisePenalty::new(penalty.knots().to_vec(), powered, gamma)
}

// =====================================================================
// GAIC
// =====================================================================

/// Marginal-likelihood model score with a complexity charge for the number
/// of penalty segments: `(n − m)·ln(GML) + 2·S`, which is the GML profile
/// deviance up to an additive constant.
pub fn gaic(fit: &SplineFit, s: usize) -> Result<f64> {
    let gml = fit.gml_value().ok_or_else(|| {
        Error::Degenerate("fit carries no GML score; use a criterion-aware constructor".into())
    })?;
    if !gml.is_finite() || gml <= 0.0 {
        return Err(Error::Degenerate(format!("GML score {gml} is unusable")));
    }
    let dof = (fit.abscissae().len() - fit.order()) as f64;
    Ok(dof * gml.ln() + 2.0 * s as f64)
}

// =====================================================================
// Full pipeline
// =====================================================================

/// Configuration of the adaptive pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    /// Penalty order of the final fit.
    pub m: usize,
    /// Candidate interior-knot counts.
    pub s_grid: Vec<usize>,
    /// Candidate power-up exponents (each ≥ 1).
    pub gamma_grid: Vec<f64>,
    /// Cells in the knot-selection density grid.
    pub density_grid_size: usize,
    /// λ search grid used by every criterion-based selection in the pipeline.
    pub lambda_grid: LambdaGrid,
    /// Bandwidth for variance smoothing; `None` = rule of thumb.
    pub variance_bandwidth: Option<f64>,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            m: 1,
            s_grid: vec![0, 2, 4, 8],
            gamma_grid: vec![1.0, 2.0, 4.0],
            density_grid_size: 100,
            lambda_grid: LambdaGrid::default(),
            variance_bandwidth: None,
        }
    }
}

/// One evaluated cell of the (S, γ) model grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaicEntry {
    pub s: usize,
    pub gamma: f64,
    pub score: f64,
    pub lambda: f64,
}

/// Result of the adaptive pipeline.
#[derive(Debug, Clone)]
pub struct AdaptResult {
    /// The selected spatially varying penalty.
    pub penalty: PiecewisePenalty,
    /// Final weighted fit under the selected penalty.
    pub fit: SplineFit,
    /// Estimated σ²(·) on the curve grid.
    pub variance_curve: Curve,
    /// Estimated f^{(2m)}(·) on the design-interval midpoint grid.
    pub f2m_curve: Curve,
    /// Scores of every (S, γ) cell, sorted by (S, γ).
    pub gaic_table: Vec<GaicEntry>,
    pub selected_s: usize,
    pub selected_gamma: f64,
    /// Set when knot selection found no density contrast (constant y).
    pub knots_degenerate: bool,
}

fn validated_grids(config: &AdaptConfig) -> Result<(Vec<usize>, Vec<f64>)> {
    if config.m == 0 || 2 * config.m > MAX_RKHS_ORDER {
        return Err(Error::UnsupportedOrder { m: config.m });
    }
    if config.s_grid.is_empty() || config.gamma_grid.is_empty() {
        return Err(Error::invalid("S and gamma grids must be nonempty"));
    }
    let mut s_grid = config.s_grid.clone();
    s_grid.sort_unstable();
    s_grid.dedup();
    if *s_grid.last().expect("nonempty") >= config.density_grid_size {
        return Err(Error::invalid(format!(
            "largest S = {} must be below density_grid_size = {}",
            s_grid.last().expect("nonempty"),
            config.density_grid_size
        )));
    }
    let mut gamma_grid = config.gamma_grid.clone();
    for &g in &gamma_grid {
        if !g.is_finite() || g < 1.0 {
            return Err(Error::invalid(format!("gamma = {g} must be >= 1")));
        }
    }
    gamma_grid.sort_by(|a, b| a.partial_cmp(b).expect("finite gammas"));
    gamma_grid.dedup();
    Ok((s_grid, gamma_grid))
}

/// Runs the full adaptive pipeline and returns the GAIC-selected fit.
///
/// Grid cells are independent and evaluated in parallel; the reduction is
/// ordered, so results are identical regardless of thread count. Ties in
/// the GAIC table go to smaller S, then smaller γ.
pub fn adapt_fit(design: &Design, config: &AdaptConfig) -> Result<AdaptResult> {
    let (s_grid, gamma_grid) = validated_grids(config)?;
    let m = config.m;

    let variance_curve =
        estimate_variance(design, config.variance_bandwidth).map_err(Error::stage("variance"))?;
    let weights: Vec<f64> = design
        .t()
        .iter()
        .map(|&ti| 1.0 / variance_curve.eval(ti))
        .collect();
    let weighted = design
        .reweighted(weights.clone())
        .map_err(Error::stage("variance"))?;

    let f2m_curve = estimate_f2m(design, &weights, m).map_err(Error::stage("curvature"))?;

    // r = σ²/q; equispaced designs use q ≡ 1 exactly.
    let r_curve = if design.is_equispaced() {
        variance_curve.clone()
    } else {
        let q = design_density(design.t(), &curve_grid());
        let r: Vec<f64> = variance_curve
            .ys()
            .iter()
            .zip(&q)
            .map(|(&v, &qi)| v / qi)
            .collect();
        Curve::new(curve_grid(), r).map_err(Error::stage("variance"))?
    };

    let (ranked, knots_degenerate) =
        ranked_knot_candidates(design, config.density_grid_size).map_err(Error::stage("knots"))?;
    let l0 = kernels::l0(m).map_err(Error::stage("penalty"))?;

    // Base penalties per S (γ only changes contrast afterwards).
    let mut cells: Vec<(usize, f64, PiecewisePenalty)> = Vec::new();
    for &s in &s_grid {
        let mut knots: Vec<f64> = ranked.iter().take(s).map(|&(_, pos, _)| pos).collect();
        knots.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
        let base =
            optimal_rho(&knots, &r_curve, &f2m_curve, m, l0).map_err(Error::stage("penalty"))?;
        for &gamma in &gamma_grid {
            cells.push((s, gamma, base.clone()));
        }
    }

    let evaluated: Vec<(GaicEntry, PiecewisePenalty, SplineFit)> = cells
        .into_par_iter()
        .map(|(s, gamma, base)| {
            let penalty = power_up(&base, gamma).map_err(Error::stage("power-up"))?;
            let fit = solver::fit_auto(
                &weighted,
                &penalty,
                m,
                SelectionCriterion::Gcv,
                &config.lambda_grid,
            )
            .map_err(Error::stage("fit"))?;
            let score = gaic(&fit, s).map_err(Error::stage("gaic"))?;
            let entry = GaicEntry {
                s,
                gamma,
                score,
                lambda: fit.lambda(),
            };
            Ok((entry, penalty, fit))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, (entry, _, _)) in evaluated.iter().enumerate() {
        if entry.score < evaluated[best].0.score {
            best = i;
        }
    }
    let gaic_table: Vec<GaicEntry> = evaluated.iter().map(|(e, _, _)| e.clone()).collect();
    let (entry, penalty, fit) = evaluated.into_iter().nth(best).expect("nonempty grid");

    let report = solver::check_optimality(&weighted, &fit).map_err(Error::stage("optimality"))?;
    if !report.passed {
        return Err(Error::Pipeline {
            stage: "optimality",
            source: Box::new(Error::Degenerate(format!(
                "selected fit violates the stationarity conditions (max moment {:.3e} > {:.3e})",
                report.max_abs_moment(),
                report.threshold
            ))),
        });
    }

    Ok(AdaptResult {
        penalty,
        fit,
        variance_curve,
        f2m_curve,
        gaic_table,
        selected_s: entry.s,
        selected_gamma: entry.gamma,
        knots_degenerate,
    })
}

// =====================================================================
// Tests
// =====================================================================
