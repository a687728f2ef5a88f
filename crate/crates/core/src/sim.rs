//! Monte Carlo benchmark harness for the smoothing methods.
//!
//! Reproduces the benchmark layout of the motivating study: two scenarios
//! (a Heaviside jump and a "Mexican hat" bump), three methods — uniform
//! smoothing spline (SS), an equal-knot piecewise penalty selected by GCV
//! (EQK), and the full adaptive pipeline (ADSS) — scored by integrated
//! squared error and pointwise absolute errors, with every method seeing
//! identical noise realizations per replicate.
//!
//! All randomness comes from counter-based streams keyed by
//! `(seed, replicate, index)`, so results are byte-identical regardless of
//! thread count or scheduling.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::adapt::{self, AdaptConfig, Curve};
use crate::asymptotics::RealFn;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::quad;
use crate::rkhs::{self, PiecewisePenalty};
use crate::rng;
use crate::solver::{self, LambdaGrid, SelectionCriterion, SplineFit};

/// Points at which pointwise absolute errors are reported.
pub const PAE_POINTS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// Grid points used for the ISE integral in benchmark tables.
///
/// 101 points (0.01 spacing) samples between design points (0.005 apart at
/// n = 200) without sampling inside any single design gap, so the
/// unavoidable one-gap transition ramp that every order-1 fit makes at a
/// discontinuity does not dominate the method comparison. Callers who want
/// a finer continuum approximation can evaluate [`ise`] directly with a
/// larger grid.
pub const ISE_GRID: usize = 101;

// =====================================================================
// Scenarios
// =====================================================================

/// Heaviside jump truth: `5·1[t ≥ 0.5]`.
pub fn heaviside_f0(t: f64) -> f64 {
    if t >= 0.5 {
        5.0
    } else {
        0.0
    }
}

/// Mexican-hat truth: `−1 + 1.5t + 0.2·φ_{0.02}(t − 0.6)` where `φ_s` is
/// the normal density with standard deviation `s`.
pub fn mexican_hat_f0(t: f64) -> f64 {
    let s = 0.02;
    let x = (t - 0.6) / s;
    let phi = (-0.5 * x * x).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    -1.0 + 1.5 * t + 0.2 * phi
}

/// A benchmark scenario: truth, sample size, noise scale, and the
/// replication plan.
#[derive(Clone)]
pub struct ScenarioSpec {
    name: String,
    n: usize,
    sigma: f64,
    replicates: usize,
    seed: u64,
    f0: RealFn,
}

impl std::fmt::Debug for ScenarioSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScenarioSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("sigma", &self.sigma)
            .field("replicates", &self.replicates)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl ScenarioSpec {
    /// Heaviside benchmark: n = 200, σ = 0.7.
    pub fn heaviside(replicates: usize, seed: u64) -> Result<Self> {
        ScenarioSpec::custom("heaviside", 200, 0.7, replicates, seed, heaviside_f0)
    }

    /// Mexican-hat benchmark: n = 200, σ = 0.25.
    pub fn mexican_hat(replicates: usize, seed: u64) -> Result<Self> {
        ScenarioSpec::custom("mexican_hat", 200, 0.25, replicates, seed, mexican_hat_f0)
    }

    pub fn custom(
        name: impl Into<String>,
        n: usize,
        sigma: f64,
        replicates: usize,
        seed: u64,
        f0: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::invalid("scenario name must be nonempty"));
        }
        if n < 10 {
            return Err(Error::invalid(format!("scenario needs n >= 10, got {n}")));
        }
        if replicates == 0 {
            return Err(Error::invalid("scenario needs at least one replicate"));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma = {sigma} must be >= 0")));
        }
        Ok(ScenarioSpec {
            name,
            n,
            sigma,
            replicates,
            seed,
            f0: Arc::new(f0),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn f0(&self, t: f64) -> f64 {
        (self.f0)(t)
    }
}

/// Generates the data for one replicate: `t_i = i/n`,
/// `y_i = f₀(t_i) + σ·ε_i` with the noise drawn from the counter stream
/// keyed by `(seed, replicate, i)`.
pub fn gen_scenario(spec: &ScenarioSpec, replicate: usize) -> Result<Design> {
    if replicate >= spec.replicates {
        return Err(Error::invalid(format!(
            "replicate {replicate} out of range (plan has {})",
            spec.replicates
        )));
    }
    let n = spec.n;
    let t: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let y: Vec<f64> = t
        .iter()
        .enumerate()
        .map(|(i, &ti)| {
            spec.f0(ti) + spec.sigma * rng::standard_normal(spec.seed, replicate as u64, i as u64)
        })
        .collect();
    Design::new(t, y, None)
}

// =====================================================================
// Metrics
// =====================================================================

/// Integrated squared error `∫₀¹ (f̂ − f₀)²` by composite Simpson on an
/// equispaced grid of at least 101 points.
pub fn ise(fit: &SplineFit, truth: impl Fn(f64) -> f64, grid_size: usize) -> Result<f64> {
    if grid_size < 101 {
        return Err(Error::invalid(format!(
            "ISE grid needs at least 101 points, got {grid_size}"
        )));
    }
    let points = if grid_size % 2 == 0 {
        grid_size + 1
    } else {
        grid_size
    };
    let mut values = Vec::with_capacity(points);
    for i in 0..points {
        let t = i as f64 / (points - 1) as f64;
        let d = fit.predict(t)? - truth(t);
        values.push(d * d);
    }
    Ok(quad::simpson_tabulated(&values, 1.0 / (points - 1) as f64))
}

/// Pointwise absolute error `|f̂(t) − f₀(t)|`.
pub fn pae(fit: &SplineFit, truth: impl Fn(f64) -> f64, t: f64) -> Result<f64> {
    Ok((fit.predict(t)? - truth(t)).abs())
}

// =====================================================================
// Methods
// =====================================================================

/// The compared estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    /// Uniform-penalty cubic smoothing spline, GCV λ.
    Ss,
    /// Equal-knot piecewise penalty (5 knots at k/6), segment contrasts
    /// picked by a GCV coordinate sweep.
    Eqk,
    /// The full adaptive pipeline.
    Adss,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ss => "SS",
            Method::Eqk => "EQK",
            Method::Adss => "ADSS",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ss" => Ok(Method::Ss),
            "eqk" => Ok(Method::Eqk),
            "adss" => Ok(Method::Adss),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (expected ss, eqk, or adss)"
            ))),
        }
    }
}

/// Uniform cubic smoothing spline with GCV-selected λ.
pub fn fit_ss(design: &Design, grid: &LambdaGrid) -> Result<SplineFit> {
    solver::fit_auto(
        design,
        &PiecewisePenalty::uniform(),
        2,
        SelectionCriterion::Gcv,
        grid,
    )
}

/// Candidate segment contrasts for the EQK coordinate sweep.
const EQK_CONTRASTS: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Equal-knot piecewise-penalty fit: 5 knots at k/6, each segment's value
/// swept over a log-contrast grid by GCV at the uniform fit's λ, values
/// normalized to unit geometric mean, then λ re-selected by GCV.
pub fn fit_eqk(design: &Design, grid: &LambdaGrid) -> Result<SplineFit> {
    let m = 2;
    let knots: Vec<f64> = (1..=5).map(|k| k as f64 / 6.0).collect();
    let mut values = vec![1.0; 6];

    let uniform = PiecewisePenalty::new(knots.clone(), values.clone(), 1.0)?;
    let ctx = rkhs::gram_matrix(design, &uniform, m)?;
    let system = solver::PenaltySystem::new(design, &ctx)?;
    let lambda0 = solver::select_lambda(&system, SelectionCriterion::Gcv, grid)?;

    for j in 0..values.len() {
        let mut best = (f64::INFINITY, values[j]);
        for &c in &EQK_CONTRASTS {
            let mut v = values.clone();
            v[j] = c;
            let p = PiecewisePenalty::new(knots.clone(), v, 1.0)?;
            let ctx = rkhs::gram_matrix(design, &p, m)?;
            let sys = solver::PenaltySystem::new(design, &ctx)?;
            let score = sys.criterion(lambda0, SelectionCriterion::Gcv);
            if score.is_finite() && score < best.0 {
                best = (score, c);
            }
        }
        values[j] = best.1;
    }

    let ln_mean = values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64;
    let gm = ln_mean.exp();
    for v in &mut values {
        *v /= gm;
    }
    let penalty = PiecewisePenalty::new(knots, values, 1.0)?;
    solver::fit_auto(design, &penalty, m, SelectionCriterion::Gcv, grid)
}

fn fit_method(design: &Design, method: Method, config: &AdaptConfig) -> Result<SplineFit> {
    match method {
        Method::Ss => fit_ss(design, &config.lambda_grid),
        Method::Eqk => fit_eqk(design, &config.lambda_grid),
        Method::Adss => Ok(adapt::adapt_fit(design, config)?.fit),
    }
}

// =====================================================================
// Benchmark driver
// =====================================================================

/// Metrics of one successful replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateMetrics {
    pub replicate: usize,
    pub ise: f64,
    /// Pointwise absolute errors at [`PAE_POINTS`].
    pub pae: [f64; 4],
}

/// All per-replicate outcomes of one method.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    /// Successful fits, ascending replicate index, parallel to `metrics`.
    pub fits: Vec<(usize, SplineFit)>,
    pub metrics: Vec<ReplicateMetrics>,
    /// Failed replicates with their error messages.
    pub failures: Vec<(usize, String)>,
}

/// One row of the summary table: mean and standard deviation per metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub method: Method,
    pub successes: usize,
    pub failures: usize,
    pub ise_mean: f64,
    pub ise_sd: f64,
    pub pae_mean: [f64; 4],
    pub pae_sd: [f64; 4],
}

/// Benchmark summary across methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkTable {
    pub scenario: String,
    pub n: usize,
    pub sigma: f64,
    pub replicates: usize,
    pub seed: u64,
    pub rows: Vec<TableRow>,
}

/// Full benchmark output: summary table plus every per-replicate result.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub table: BenchmarkTable,
    pub methods: Vec<MethodRun>,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let k = values.clone().count();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let ss = values.map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (k - 1) as f64).sqrt())
}

/// Runs every requested method on every replicate, sharing the data within
/// a replicate across methods. Replicates run in parallel; the reduction
/// is ordered. A method whose failures exceed 5% of the plan aborts the
/// whole run.
pub fn run_benchmark(
    spec: &ScenarioSpec,
    methods: &[Method],
    config: &AdaptConfig,
) -> Result<BenchmarkRun> {
    if methods.is_empty() {
        return Err(Error::invalid("no methods requested"));
    }
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            return Err(Error::invalid(format!("method {m} requested twice")));
        }
    }

    type RepOutcome = Vec<std::result::Result<(SplineFit, ReplicateMetrics), String>>;
    let per_replicate: Vec<RepOutcome> = (0..spec.replicates)
        .into_par_iter()
        .map(|rep| -> Result<RepOutcome> {
            let design = gen_scenario(spec, rep)?;
            let truth = |t: f64| spec.f0(t);
            Ok(methods
                .iter()
                .map(|&method| {
                    let fit = fit_method(&design, method, config).map_err(|e| e.to_string())?;
                    let ise = ise(&fit, truth, ISE_GRID).map_err(|e| e.to_string())?;
                    let mut paes = [0.0; 4];
                    for (slot, &t) in paes.iter_mut().zip(&PAE_POINTS) {
                        *slot = pae(&fit, truth, t).map_err(|e| e.to_string())?;
                    }
                    Ok((
                        fit,
                        ReplicateMetrics {
                            replicate: rep,
                            ise,
                            pae: paes,
                        },
                    ))
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut method_runs: Vec<MethodRun> = methods
        .iter()
        .map(|&method| MethodRun {
            method,
            fits: Vec::new(),
            metrics: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for (rep, outcomes) in per_replicate.into_iter().enumerate() {
        for (slot, outcome) in method_runs.iter_mut().zip(outcomes) {
            match outcome {
                Ok((fit, metrics)) => {
                    slot.fits.push((rep, fit));
                    slot.metrics.push(metrics);
                }
                Err(msg) => slot.failures.push((rep, msg)),
            }
        }
    }

    let limit = spec.replicates as f64 * 0.05;
    for run in &method_runs {
        if run.failures.len() as f64 > limit {
            return Err(Error::TooManyFailures {
                failed: run.failures.len(),
                total: spec.replicates,
                first: format!(
                    "{}: replicate {}: {}",
                    run.method, run.failures[0].0, run.failures[0].1
                ),
            });
        }
    }

    let rows = method_runs
        .iter()
        .map(|run| {
            let (ise_mean, ise_sd) = mean_sd(run.metrics.iter().map(|m| m.ise).collect::<Vec<_>>().into_iter());
            let mut pae_mean = [0.0; 4];
            let mut pae_sd = [0.0; 4];
            for k in 0..4 {
                let (mu, sd) =
                    mean_sd(run.metrics.iter().map(|m| m.pae[k]).collect::<Vec<_>>().into_iter());
                pae_mean[k] = mu;
                pae_sd[k] = sd;
            }
            TableRow {
                method: run.method,
                successes: run.metrics.len(),
                failures: run.failures.len(),
                ise_mean,
                ise_sd,
                pae_mean,
                pae_sd,
            }
        })
        .collect();

    Ok(BenchmarkRun {
        table: BenchmarkTable {
            scenario: spec.name.clone(),
            n: spec.n,
            sigma: spec.sigma,
            replicates: spec.replicates,
            seed: spec.seed,
            rows,
        },
        methods: method_runs,
    })
}

// =====================================================================
// Replicate extraction
// =====================================================================

fn find_method<'a>(run: &'a BenchmarkRun, method: Method) -> Result<&'a MethodRun> {
    run.methods
        .iter()
        .find(|r| r.method == method)
        .ok_or_else(|| Error::invalid(format!("method {method} not present in this run")))
}

/// Replicate index realizing the median ISE: the rank-⌈R/2⌉ value among
/// the R successful replicates, ties resolved to the lowest replicate
/// index attaining that value.
pub fn median_replicate(run: &BenchmarkRun, method: Method) -> Result<usize> {
    let mrun = find_method(run, method)?;
    let r = mrun.metrics.len();
    if r == 0 {
        return Err(Error::Degenerate("no successful replicates".into()));
    }
    let mut ises: Vec<f64> = mrun.metrics.iter().map(|m| m.ise).collect();
    ises.sort_by(|a, b| a.partial_cmp(b).expect("finite ISE"));
    let median = ises[r.div_ceil(2) - 1];
    Ok(mrun
        .metrics
        .iter()
        .find(|m| m.ise == median)
        .expect("median value came from this list")
        .replicate)
}

/// Pointwise empirical quantile curves of the fitted functions across the
/// successful replicates, one curve per requested probability
/// (linear-interpolated order statistics).
pub fn quantile_bands(
    run: &BenchmarkRun,
    method: Method,
    grid: &[f64],
    probs: &[f64],
) -> Result<Vec<Curve>> {
    let mrun = find_method(run, method)?;
    let r = mrun.fits.len();
    if r == 0 {
        return Err(Error::Degenerate("no successful replicates".into()));
    }
    if grid.len() < 2 {
        return Err(Error::invalid("band grid needs at least two points"));
    }
    if probs.is_empty() {
        return Err(Error::invalid("no probabilities requested"));
    }
    for &p in probs {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!(
                "quantile probability {p} must lie in (0, 1)"
            )));
        }
    }

    // values[g] = sorted fitted values at grid point g across replicates
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(r); grid.len()];
    for (_, fit) in &mrun.fits {
        for (g, &x) in grid.iter().enumerate() {
            columns[g].push(fit.predict(x)?);
        }
    }
    for col in &mut columns {
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite fitted values"));
    }

    let mut bands = Vec::with_capacity(probs.len());
    for &p in probs {
        let h = p * (r - 1) as f64;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        let ys: Vec<f64> = columns
            .iter()
            .map(|col| {
                if lo + 1 < r {
                    col[lo] + frac * (col[lo + 1] - col[lo])
                } else {
                    col[lo]
                }
            })
            .collect();
        bands.push(Curve::new(grid.to_vec(), ys)?);
    }
    Ok(bands)
}

// =====================================================================
// Tests
// =====================================================================
