//! Implementations of the five subcommands.

use std::fs;
use std::path::Path;

use adaspline_core::adapt::{self, AdaptConfig};
use adaspline_core::asymptotics;
use adaspline_core::kernels;
use adaspline_core::rkhs;
use adaspline_core::sim::{self, Method, ScenarioSpec};
use adaspline_core::solver::{self, check_optimality, OptimalityReport};
use adaspline_core::{Design, LambdaGrid, PiecewisePenalty, SelectionCriterion, SplineFit};
use anyhow::{bail, Context, Result};
use serde_json::json;

use crate::io::{self, fmt, num, opt_num, CsvOut};
use crate::{AdaptFitArgs, FitArgs, KernelTableArgs, SimulateArgs, VerifyKernelArgs};

/// Loads and re-validates a penalty JSON (`{"tau": [...], "values": [...],
/// "gamma": x}`); rebuilding through the constructor enforces the
/// invariants that raw deserialization would bypass.
fn load_penalty(path: Option<&Path>) -> Result<PiecewisePenalty> {
    let Some(path) = path else {
        return Ok(PiecewisePenalty::uniform());
    };
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    let raw: PiecewisePenalty = serde_json::from_str(&text)
        .with_context(|| format!("{}: invalid penalty JSON", path.display()))?;
    PiecewisePenalty::new(raw.knots().to_vec(), raw.values().to_vec(), raw.gamma())
        .with_context(|| format!("{}: invalid penalty", path.display()))
}

fn penalty_json(p: &PiecewisePenalty) -> serde_json::Value {
    serde_json::to_value(p).expect("penalty serializes")
}

fn optimality_json(report: &OptimalityReport) -> serde_json::Value {
    json!({
        "moments": report.moments.iter().map(|&m| num(m)).collect::<Vec<_>>(),
        "max_abs_moment": num(report.max_abs_moment()),
        "threshold": num(report.threshold),
        "passed": report.passed,
    })
}

fn rescale_json(info: Option<io::RescaleInfo>) -> serde_json::Value {
    info.map_or(serde_json::Value::Null, |r| {
        json!({"t_min": num(r.t_min), "t_max": num(r.t_max)})
    })
}

fn coefficients_json(fit: &SplineFit) -> serde_json::Value {
    json!({
        "c": fit.kernel_coefficients().iter().map(|&v| num(v)).collect::<Vec<_>>(),
        "d": fit.null_coefficients().iter().map(|&v| num(v)).collect::<Vec<_>>(),
    })
}

fn lambda_grid_json(grid: &LambdaGrid) -> serde_json::Value {
    json!({
        "min": num(grid.min),
        "max": num(grid.max),
        "count": grid.count,
        "golden_iters": grid.golden_iters,
    })
}

pub fn parse_criterion(name: &str) -> Result<SelectionCriterion> {
    match name.to_ascii_lowercase().as_str() {
        "gcv" => Ok(SelectionCriterion::Gcv),
        "gml" => Ok(SelectionCriterion::Gml),
        other => bail!("unknown criterion '{other}' (expected gcv or gml)"),
    }
}

fn equispaced_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| i as f64 / (points - 1) as f64)
        .collect()
}

// =====================================================================
// fit
// =====================================================================

pub fn run_fit(
    args: &FitArgs,
    fixed_lambda: Option<f64>,
    criterion: Option<SelectionCriterion>,
) -> Result<()> {
    let loaded = io::read_design(&args.input, args.rescale)?;
    let design = &loaded.design;
    let penalty = load_penalty(args.penalty.as_deref())?;
    let grid = LambdaGrid::default();

    let ctx = rkhs::gram_matrix(design, &penalty, args.m)?;
    let system = solver::PenaltySystem::new(design, &ctx)?;
    let (fit, edf, gcv, gml, criterion_name) = match (fixed_lambda, criterion) {
        (Some(lambda), _) => {
            let fit = solver::fit_with_gram(design, &ctx, lambda)?;
            (
                fit,
                system.edf(lambda),
                system.criterion(lambda, SelectionCriterion::Gcv),
                system.criterion(lambda, SelectionCriterion::Gml),
                serde_json::Value::Null,
            )
        }
        (None, crit) => {
            let crit = crit.unwrap_or(SelectionCriterion::Gcv);
            let fit = solver::fit_auto_with(design, &ctx, &system, crit, &grid)?;
            let (edf, gcv, gml) = (
                fit.edf().expect("auto fit has edf"),
                fit.gcv_value().expect("auto fit has gcv"),
                fit.gml_value().expect("auto fit has gml"),
            );
            (fit, edf, gcv, gml, json!(format!("{crit:?}").to_lowercase()))
        }
    };
    let report = check_optimality(design, &fit)?;

    let config = json!({
        "input": args.input.display().to_string(),
        "m": args.m,
        "lambda": fixed_lambda.map_or(json!("auto"), num),
        "criterion": criterion_name,
        "penalty_file": args.penalty.as_ref().map(|p| p.display().to_string()),
        "rescale": args.rescale,
        "grid_points": args.grid_points,
        "lambda_grid": lambda_grid_json(&grid),
    });

    let grid_path = args
        .grid_out
        .clone()
        .unwrap_or_else(|| io::sibling(&args.out, "_grid.csv"));
    write_prediction_grid(&grid_path, "fit", &config, &fit, args.grid_points)?;

    io::write_json(
        &args.out,
        &json!({
            "version": io::VERSION,
            "command": "fit",
            "config": config,
            "seed": serde_json::Value::Null,
            "rescale": rescale_json(loaded.rescale),
            "n": design.len(),
            "m": args.m,
            "penalty": penalty_json(fit.penalty()),
            "lambda": num(fit.lambda()),
            "edf": num(edf),
            "hat_trace": num(edf),
            "gcv": num(gcv),
            "gml": num(gml),
            "weighted_rss": num(fit.weighted_rss()),
            "roughness": num(fit.roughness()),
            "objective": num(fit.objective()),
            "coefficients": coefficients_json(&fit),
            "optimality": optimality_json(&report),
            "prediction_grid": grid_path.display().to_string(),
        }),
    )
}

fn write_prediction_grid(
    path: &Path,
    command: &str,
    config: &serde_json::Value,
    fit: &SplineFit,
    points: usize,
) -> Result<()> {
    if points < 2 {
        bail!("prediction grid needs at least 2 points, got {points}");
    }
    let mut csv = CsvOut::new(command, config);
    csv.header(&["t", "fit"]);
    for t in equispaced_grid(points) {
        let v = fit.predict(t)?;
        csv.row(&[fmt(t), fmt(v)]);
    }
    csv.write(path)
}

// =====================================================================
// adapt-fit
// =====================================================================

pub fn run_adapt_fit(args: &AdaptFitArgs) -> Result<()> {
    let loaded = io::read_design(&args.input, args.rescale)?;
    let design = &loaded.design;
    let config = AdaptConfig {
        m: args.m,
        s_grid: args.s_grid.clone(),
        gamma_grid: args.gamma_grid.clone(),
        density_grid_size: args.density_grid,
        lambda_grid: LambdaGrid::default(),
        variance_bandwidth: args.variance_bandwidth,
    };
    let result = adapt::adapt_fit(design, &config)?;

    // The pipeline fits on the variance-reweighted design; the optimality
    // moments must be evaluated under the same weights.
    let weights: Vec<f64> = design
        .t()
        .iter()
        .map(|&ti| 1.0 / result.variance_curve.eval(ti))
        .collect();
    let weighted = design.reweighted(weights)?;
    let report = check_optimality(&weighted, &result.fit)?;

    let config_echo = json!({
        "input": args.input.display().to_string(),
        "m": args.m,
        "s_grid": args.s_grid,
        "gamma_grid": args.gamma_grid.iter().map(|&g| num(g)).collect::<Vec<_>>(),
        "density_grid_size": args.density_grid,
        "variance_bandwidth": args.variance_bandwidth.map_or(serde_json::Value::Null, num),
        "rescale": args.rescale,
        "lambda_grid": lambda_grid_json(&config.lambda_grid),
    });

    let curves_path = args
        .grid_out
        .clone()
        .unwrap_or_else(|| io::sibling(&args.out, "_curves.csv"));
    let mut csv = CsvOut::new("adapt-fit", &config_echo);
    csv.header(&["t", "fit", "variance", "f2m", "rho"]);
    for (&t, &var) in result
        .variance_curve
        .xs()
        .iter()
        .zip(result.variance_curve.ys())
    {
        csv.row(&[
            fmt(t),
            fmt(result.fit.predict(t)?),
            fmt(var),
            fmt(result.f2m_curve.eval(t)),
            fmt(result.penalty.value_at(t)),
        ]);
    }
    csv.write(&curves_path)?;

    io::write_json(
        &args.out,
        &json!({
            "version": io::VERSION,
            "command": "adapt-fit",
            "config": config_echo,
            "seed": serde_json::Value::Null,
            "rescale": rescale_json(loaded.rescale),
            "n": design.len(),
            "m": args.m,
            "selected": {"s": result.selected_s, "gamma": num(result.selected_gamma)},
            "penalty": penalty_json(&result.penalty),
            "lambda": num(result.fit.lambda()),
            "edf": opt_num(result.fit.edf()),
            "gcv": opt_num(result.fit.gcv_value()),
            "gml": opt_num(result.fit.gml_value()),
            "knots_degenerate": result.knots_degenerate,
            "gaic_table": result.gaic_table.iter().map(|e| json!({
                "s": e.s,
                "gamma": num(e.gamma),
                "score": num(e.score),
                "lambda": num(e.lambda),
            })).collect::<Vec<_>>(),
            "coefficients": coefficients_json(&result.fit),
            "optimality": optimality_json(&report),
            "curves": curves_path.display().to_string(),
        }),
    )
}

// =====================================================================
// simulate
// =====================================================================

pub fn run_simulate(args: &SimulateArgs, methods: &[Method]) -> Result<()> {
    let (default_sigma, f0): (f64, fn(f64) -> f64) = match args.scenario.as_str() {
        "heaviside" => (0.7, sim::heaviside_f0),
        "mexican_hat" | "mexican-hat" => (0.25, sim::mexican_hat_f0),
        other => bail!("unknown scenario '{other}' (expected heaviside or mexican_hat)"),
    };
    let n = args.n.unwrap_or(200);
    let sigma = args.sigma.unwrap_or(default_sigma);
    let spec = ScenarioSpec::custom(
        args.scenario.replace('-', "_"),
        n,
        sigma,
        args.replicates,
        args.seed,
        f0,
    )?;
    let adapt_config = AdaptConfig::default();
    let run = sim::run_benchmark(&spec, methods, &adapt_config)?;

    let config = json!({
        "scenario": spec.name(),
        "n": spec.n(),
        "sigma": num(spec.sigma()),
        "replicates": spec.replicates(),
        "seed": spec.seed(),
        "methods": methods.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
    });

    let mut table = CsvOut::new("simulate", &config);
    table.header(&[
        "scenario",
        "method",
        "replicates",
        "successes",
        "failures",
        "ise_mean",
        "ise_sd",
        "pae02_mean",
        "pae02_sd",
        "pae04_mean",
        "pae04_sd",
        "pae06_mean",
        "pae06_sd",
        "pae08_mean",
        "pae08_sd",
    ]);
    for row in &run.table.rows {
        let mut cells = vec![
            spec.name().to_owned(),
            row.method.to_string(),
            spec.replicates().to_string(),
            row.successes.to_string(),
            row.failures.to_string(),
            fmt(row.ise_mean),
            fmt(row.ise_sd),
        ];
        for k in 0..4 {
            cells.push(fmt(row.pae_mean[k]));
            cells.push(fmt(row.pae_sd[k]));
        }
        table.row(&cells);
    }
    table.write(&args.out)?;

    if let Some(path) = &args.replicate_out {
        let mut csv = CsvOut::new("simulate", &config);
        csv.header(&[
            "scenario", "method", "replicate", "ise", "pae02", "pae04", "pae06", "pae08",
        ]);
        for mrun in &run.methods {
            for metric in &mrun.metrics {
                let mut cells = vec![
                    spec.name().to_owned(),
                    mrun.method.to_string(),
                    metric.replicate.to_string(),
                    fmt(metric.ise),
                ];
                cells.extend(metric.pae.iter().map(|&p| fmt(p)));
                csv.row(&cells);
            }
        }
        csv.write(path)?;
    }

    if let Some(path) = &args.bands {
        let grid = equispaced_grid(201);
        let probs = [0.025, 0.5, 0.975];
        let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
        for &method in methods {
            let bands = sim::quantile_bands(&run, method, &grid, &probs)?;
            for (band, tag) in bands.iter().zip(["q025", "q500", "q975"]) {
                let name = format!("{}_{tag}", method.to_string().to_lowercase());
                columns.push((name, band.ys().to_vec()));
            }
        }
        let mut csv = CsvOut::new("simulate", &config);
        let mut header = vec!["t".to_owned()];
        header.extend(columns.iter().map(|(name, _)| name.clone()));
        csv.header(&header.iter().map(String::as_str).collect::<Vec<_>>());
        for (g, &t) in grid.iter().enumerate() {
            let mut cells = vec![fmt(t)];
            cells.extend(columns.iter().map(|(_, ys)| fmt(ys[g])));
            csv.row(&cells);
        }
        csv.write(path)?;
    }

    if let Some(path) = &args.median {
        // The adaptive fit is the headline estimator; fall back to the
        // first requested method when it is absent.
        let method = if methods.contains(&Method::Adss) {
            Method::Adss
        } else {
            methods[0]
        };
        let rep = sim::median_replicate(&run, method)?;
        let data = sim::gen_scenario(&spec, rep)?;
        let mut csv = CsvOut::new("simulate", &config);
        csv.comment(&format!("median-ISE replicate of {method}: {rep}"));
        csv.header(&["t", "y"]);
        for (&t, &y) in data.t().iter().zip(data.y()) {
            csv.row(&[fmt(t), fmt(y)]);
        }
        csv.write(path)?;
    }

    Ok(())
}

// =====================================================================
// kernel-table
// =====================================================================

pub fn run_kernel_table(args: &KernelTableArgs) -> Result<()> {
    if args.grid < 2 {
        bail!("--grid needs at least 2 points, got {}", args.grid);
    }
    if !(args.beta.is_finite() && args.beta > 0.0) {
        bail!("--beta must be positive, got {}", args.beta);
    }
    let penalty = load_penalty(args.penalty.as_deref())?;
    let config = json!({
        "m": args.m,
        "beta": num(args.beta),
        "grid": args.grid,
        "penalty_file": args.penalty.as_ref().map(|p| p.display().to_string()),
    });

    if let Some(path) = &args.out_l {
        // The standardized kernel decays like e^{-c|t|} with c ≥ sin(π/8),
        // so |t| ≤ 20 covers everything visibly nonzero.
        let mut csv = CsvOut::new("kernel-table", &config);
        csv.header(&["t", "l"]);
        for i in 0..args.grid {
            let t = -20.0 + 40.0 * i as f64 / (args.grid - 1) as f64;
            csv.row(&[fmt(t), fmt(kernels::eval_l(args.m, t)?)]);
        }
        csv.write(path)?;
    }

    if let Some(path) = &args.out_j {
        let warp_grid = equispaced_grid(2001);
        let warp = kernels::warp(&penalty, |_| 1.0, args.m, &warp_grid)?;
        let axis = equispaced_grid(args.grid);
        let mut csv = CsvOut::new("kernel-table", &config);
        csv.header(&["t", "s", "j"]);
        for &t in &axis {
            for &s in &axis {
                csv.row(&[
                    fmt(t),
                    fmt(s),
                    fmt(kernels::eval_j(t, s, args.beta, &warp, args.m)?),
                ]);
            }
        }
        csv.write(path)?;
    }

    Ok(())
}

// =====================================================================
// verify-kernel
// =====================================================================

pub fn run_verify_kernel(args: &VerifyKernelArgs) -> Result<()> {
    let penalty = load_penalty(args.penalty.as_deref())?;
    let t: Vec<f64> = (1..=args.n).map(|i| i as f64 / args.n as f64).collect();
    // The hat matrix does not depend on y; zeros suffice.
    let design = Design::new(t, vec![0.0; args.n], None)?;
    let check = asymptotics::verify_equivalent_kernel(&design, args.lambda, &penalty, args.m, args.t0)?;

    let config = json!({
        "m": args.m,
        "n": args.n,
        "lambda": num(args.lambda),
        "t0": num(args.t0),
        "penalty_file": args.penalty.as_ref().map(|p| p.display().to_string()),
    });
    let mut csv = CsvOut::new("verify-kernel", &config);
    csv.comment(&format!("t0 snapped to design point: {}", fmt(check.t0)));
    csv.comment(&format!("beta: {}", fmt(check.beta)));
    csv.comment(&format!("discrepancy: {}", fmt(check.discrepancy)));
    csv.comment(&format!("asymptotic_regime: {}", check.asymptotic_regime));
    csv.header(&["t", "hat_weight", "kernel_weight"]);
    for i in 0..check.t.len() {
        csv.row(&[
            fmt(check.t[i]),
            fmt(check.hat_weights[i]),
            fmt(check.kernel_weights[i]),
        ]);
    }
    csv.write(&args.out)
}
