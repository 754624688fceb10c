//! The five pipelines behind the subcommands. Each one rebuilds what it
//! needs from the configuration (solves are cheap at the default
//! three-sweep settings); only `plot` insists on existing artifacts,
//! since its job is to render a previous run.

use std::path::{Path, PathBuf};

use regrowth::{
    check_assumptions, drift_check, empirical_distribution, residual_profile, simulate_chain,
    solve_value_function, stationary_distribution, AssumptionReport, GriddedFunction, IncomeGrid,
    ModelSpec, QuadratureRule, SolveReport,
};

use crate::config::RunConfig;
use crate::error::AppError;
use crate::output::{fmt_f64, read_csv, say, say_err, ArtifactSet, Metadata};
use crate::plot::{render_chart, Series, BASELINE_COLOR, SERIES_COLORS};

fn metadata(config: &RunConfig) -> Metadata {
    Metadata {
        config_hash: config.hash(),
        seed: config.simulation.seed,
        grid: config.grid_label(),
    }
}

fn out_dir(config: &RunConfig) -> PathBuf {
    PathBuf::from(&config.output.directory)
}

/// Gating violations; D3 (irreducibility) is reported but not gating.
fn violations(report: &AssumptionReport) -> Vec<String> {
    let mut list = Vec::new();
    if !report.contraction_holds() {
        list.push(format!(
            "contraction: alpha*beta = {} is not below 1 (raise r)",
            fmt_f64(report.alpha_beta)
        ));
    }
    if !report.d1_value.is_finite() {
        list.push("vanishing marginal product: E[1/xi] diverges".to_string());
    }
    if !report.mean_growth_holds() {
        list.push(format!(
            "mean growth: lambda2 = {} must lie in (0,1) with finite kappa2 = {}",
            fmt_f64(report.lambda2),
            fmt_f64(report.kappa2)
        ));
    }
    list
}

/// The assumption gate shared by solve/euler/simulate.
fn gate(spec: &ModelSpec, force: bool) -> Result<(), AppError> {
    let report = check_assumptions(spec).map_err(|e| AppError::Assumption(vec![e.to_string()]))?;
    let list = violations(&report);
    if list.is_empty() {
        return Ok(());
    }
    if force {
        say_err!("warning: proceeding despite assumption violations (--force):");
        for item in &list {
            say_err!("  {item}");
        }
        return Ok(());
    }
    Err(AppError::Assumption(list))
}

fn run_solve(
    config: &RunConfig,
    spec: &ModelSpec,
    grid: &IncomeGrid,
    rule: &QuadratureRule,
) -> Result<(GriddedFunction, GriddedFunction, SolveReport), AppError> {
    Ok(solve_value_function(
        spec,
        grid,
        config.numerics.y_count,
        rule,
        &config.stop(),
    )?)
}

fn value_rows(v: &GriddedFunction) -> Vec<String> {
    let mut rows = Vec::new();
    for theta in 0..v.n_regimes() {
        for (i, &x) in v.grid().nodes().iter().enumerate() {
            rows.push(format!(
                "{},{},{}",
                fmt_f64(x),
                theta + 1,
                fmt_f64(v.get(i, theta))
            ));
        }
    }
    rows
}

/// Policy table rows: investment, its share of income (blank at x = 0),
/// consumption, and a flag for nodes whose investment is quantized onto
/// the menu boundary (within one menu step of 0 or x).
fn policy_rows(policy: &GriddedFunction, y_count: usize) -> Vec<String> {
    let mut rows = Vec::new();
    for theta in 0..policy.n_regimes() {
        for (i, &x) in policy.grid().nodes().iter().enumerate() {
            let y = policy.get(i, theta);
            let c = x - y;
            if x == 0.0 {
                rows.push(format!("0,{},0,,0,1", theta + 1));
                continue;
            }
            let step = x / (y_count - 1) as f64;
            let boundary = y <= step + 1e-12 * x || y >= x - step - 1e-12 * x;
            rows.push(format!(
                "{},{},{},{},{},{}",
                fmt_f64(x),
                theta + 1,
                fmt_f64(y),
                fmt_f64(y / x),
                fmt_f64(c),
                u8::from(boundary)
            ));
        }
    }
    rows
}

fn report_rows(report: &SolveReport) -> Vec<String> {
    (0..report.iterations)
        .map(|k| {
            let ratio = if k == 0 {
                String::new()
            } else {
                fmt_f64(report.contraction_ratios[k - 1])
            };
            format!("{},{},{ratio}", k + 1, fmt_f64(report.sup_w_deltas[k]))
        })
        .collect()
}

pub fn check(config: &RunConfig) -> Result<(), AppError> {
    let spec = config.spec()?;
    let report = check_assumptions(&spec).map_err(|e| AppError::Assumption(vec![e.to_string()]))?;

    say!("assumption constants:");
    let table: [(&str, String); 8] = [
        ("d", fmt_f64(report.d)),
        ("x_bar", fmt_f64(report.x_bar)),
        ("alpha", fmt_f64(report.alpha)),
        ("alpha_beta", fmt_f64(report.alpha_beta)),
        ("d1_value", fmt_f64(report.d1_value)),
        ("lambda2", fmt_f64(report.lambda2)),
        ("kappa2", fmt_f64(report.kappa2)),
        ("irreducible", report.d3_irreducible.to_string()),
    ];
    for (name, value) in &table {
        say!("  {name:<12} {value}");
    }

    let mut artifacts = ArtifactSet::new(&out_dir(config), metadata(config))?;
    let mut rows: Vec<String> = table
        .iter()
        .map(|(name, value)| format!("{name},{value}"))
        .collect();
    rows.push(format!("contraction_holds,{}", report.contraction_holds()));
    rows.push(format!("mean_growth_holds,{}", report.mean_growth_holds()));
    artifacts.write_csv("assumptions.csv", &[], "metric,value", &rows)?;
    say!("wrote {}", artifacts.path_of("assumptions.csv").display());

    if !report.d3_irreducible {
        say!("note: regime chain is not irreducible (reported, not gating)");
    }
    let list = violations(&report);
    if list.is_empty() {
        say!(
            "all gating assumptions hold (alpha*beta = {})",
            fmt_f64(report.alpha_beta)
        );
        Ok(())
    } else {
        Err(AppError::Assumption(list))
    }
}

pub fn solve(config: &RunConfig, force: bool) -> Result<(), AppError> {
    let spec = config.spec()?;
    gate(&spec, force)?;
    let grid = config.grid()?;
    let rule = config.rule()?;

    let (value, policy, report) = run_solve(config, &spec, &grid, &rule)?;
    let baseline_spec = spec.single_regime_baseline();
    let (base_value, base_policy, _) = run_solve(config, &baseline_spec, &grid, &rule)?;

    let mut artifacts = ArtifactSet::new(&out_dir(config), metadata(config))?;
    let y_count = config.numerics.y_count;
    artifacts.write_csv("value.csv", &[], "x,regime,value", &value_rows(&value))?;
    artifacts.write_csv(
        "policy.csv",
        &[],
        "x,regime,phi_star,invest_ratio,c_star,boundary",
        &policy_rows(&policy, y_count),
    )?;
    artifacts.write_csv(
        "report.csv",
        &[
            format!("converged: {}", report.converged),
            format!("iterations: {}", report.iterations),
        ],
        "iteration,sup_w_delta,contraction_ratio",
        &report_rows(&report),
    )?;
    artifacts.write_csv(
        "value_baseline.csv",
        &[],
        "x,regime,value",
        &value_rows(&base_value),
    )?;
    artifacts.write_csv(
        "policy_baseline.csv",
        &[],
        "x,regime,phi_star,invest_ratio,c_star,boundary",
        &policy_rows(&base_policy, y_count),
    )?;

    say!(
        "solve: {} iterations, converged = {}, last sup-w delta = {}",
        report.iterations,
        report.converged,
        fmt_f64(*report.sup_w_deltas.last().unwrap_or(&f64::NAN))
    );
    for name in [
        "value.csv",
        "policy.csv",
        "report.csv",
        "value_baseline.csv",
        "policy_baseline.csv",
    ] {
        say!("wrote {}", artifacts.path_of(name).display());
    }
    Ok(())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

pub fn euler(config: &RunConfig, force: bool) -> Result<(), AppError> {
    let spec = config.spec()?;
    gate(&spec, force)?;
    let grid = config.grid()?;
    let rule = config.rule()?;
    let (value, policy, _) = run_solve(config, &spec, &grid, &rule)?;

    let mut rows = residual_profile(&value, &policy, &spec, config.numerics.y_count, &rule)?;
    rows.sort_by(|a, b| (a.regime, a.x).partial_cmp(&(b.regime, b.x)).unwrap());

    let csv_rows: Vec<String> = rows
        .iter()
        .map(|row| {
            format!(
                "{},{},{},{},{}",
                fmt_f64(row.x),
                row.regime + 1,
                row.residual.map(fmt_f64).unwrap_or_default(),
                row.relative.map(fmt_f64).unwrap_or_default(),
                u8::from(row.excluded)
            )
        })
        .collect();
    let mut artifacts = ArtifactSet::new(&out_dir(config), metadata(config))?;
    artifacts.write_csv(
        "residuals.csv",
        &[],
        "x,regime,residual,relative_residual,excluded",
        &csv_rows,
    )?;

    let mut relatives: Vec<f64> = rows.iter().filter_map(|row| row.relative).collect();
    relatives.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let excluded = rows.iter().filter(|row| row.excluded).count();
    say!(
        "euler residuals: {} interior nodes, {} excluded",
        relatives.len(),
        excluded
    );
    say!(
        "relative residual quantiles: p50 = {}, p90 = {}, max = {}",
        fmt_f64(quantile(&relatives, 0.5)),
        fmt_f64(quantile(&relatives, 0.9)),
        fmt_f64(quantile(&relatives, 1.0)),
    );
    say!("wrote {}", artifacts.path_of("residuals.csv").display());
    Ok(())
}

pub fn simulate(config: &RunConfig, force: bool) -> Result<(), AppError> {
    let spec = config.spec()?;
    gate(&spec, force)?;
    let grid = config.grid()?;
    let rule = config.rule()?;
    let (value, policy, _) = run_solve(config, &spec, &grid, &rule)?;

    let sim = config.sim_config();
    let path = simulate_chain(&policy, &spec, &sim)?;
    let dist = empirical_distribution(&path, sim.burn_in, config.simulation.bins)?;
    let drift = drift_check(
        &value,
        &policy,
        &spec,
        &grid,
        &rule,
        config.numerics.y_count,
    )?;
    let stationary = stationary_distribution(&spec.chain)?;

    let mut artifacts = ArtifactSet::new(&out_dir(config), metadata(config))?;

    let regime_rows: Vec<String> = dist
        .regime_marginals
        .iter()
        .enumerate()
        .map(|(theta, &freq)| {
            format!(
                "{},{},{}",
                theta + 1,
                fmt_f64(freq),
                fmt_f64(stationary.get(theta).copied().unwrap_or(0.0))
            )
        })
        .collect();
    artifacts.write_csv(
        "regimes.csv",
        &[format!("samples: {}", dist.total)],
        "regime,frequency,stationary_probability",
        &regime_rows,
    )?;

    let mut histogram_rows = Vec::new();
    for (theta, counts) in dist.histograms.iter().enumerate() {
        for (bin, &count) in counts.iter().enumerate() {
            histogram_rows.push(format!(
                "{},{},{},{count}",
                theta + 1,
                fmt_f64(dist.bin_edges[bin]),
                fmt_f64(dist.bin_edges[bin + 1]),
            ));
        }
    }
    artifacts.write_csv(
        "histogram.csv",
        &[format!("samples: {}", dist.total)],
        "regime,bin_lo,bin_hi,count",
        &histogram_rows,
    )?;

    artifacts.write_csv(
        "drift.csv",
        &[],
        "lambda_hat,kappa_hat,satisfied,worst_x,worst_regime",
        &[format!(
            "{},{},{},{},{}",
            fmt_f64(drift.lambda_hat),
            fmt_f64(drift.kappa_hat),
            drift.satisfied,
            fmt_f64(drift.worst_node.0),
            drift.worst_node.1 + 1
        )],
    )?;

    if config.output.write_path {
        let path_rows: Vec<String> = path
            .iter()
            .enumerate()
            .map(|(k, &(x, theta))| format!("{k},{},{}", fmt_f64(x), theta + 1))
            .collect();
        artifacts.write_csv("path.csv", &[], "step,x,regime", &path_rows)?;
    }

    say!("simulated {} steps (burn-in {})", sim.horizon, sim.burn_in);
    for (theta, &freq) in dist.regime_marginals.iter().enumerate() {
        say!(
            "  regime {}: frequency {} (stationary {})",
            theta + 1,
            fmt_f64(freq),
            fmt_f64(stationary.get(theta).copied().unwrap_or(0.0))
        );
    }
    say!(
        "drift: lambda_hat = {}, kappa_hat = {}, satisfied = {}, worst node x = {} regime {}",
        fmt_f64(drift.lambda_hat),
        fmt_f64(drift.kappa_hat),
        drift.satisfied,
        fmt_f64(drift.worst_node.0),
        drift.worst_node.1 + 1
    );
    let mut names = vec!["regimes.csv", "histogram.csv", "drift.csv"];
    if config.output.write_path {
        names.push("path.csv");
    }
    for name in names {
        say!("wrote {}", artifacts.path_of(name).display());
    }
    Ok(())
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize, AppError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| AppError::Config(format!("{}: missing column {name:?}", path.display())))
}

/// Reads (x, regime, column) triples from an artifact, skipping blank
/// values, and groups them into one series per regime.
fn table_series(
    path: &Path,
    value_column: &str,
    label: impl Fn(usize) -> String,
    color: impl Fn(usize) -> &'static str,
    dashed: bool,
) -> Result<Vec<Series>, AppError> {
    let (header, rows) = read_csv(path)?;
    let x_idx = column(&header, "x", path)?;
    let regime_idx = column(&header, "regime", path)?;
    let value_idx = column(&header, value_column, path)?;
    let mut by_regime: std::collections::BTreeMap<usize, Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    for row in &rows {
        let raw = &row[value_idx];
        if raw.is_empty() {
            continue;
        }
        let parse = |field: &str| -> Result<f64, AppError> {
            field.parse::<f64>().map_err(|_| {
                AppError::Config(format!(
                    "{}: cannot parse {field:?} as a number",
                    path.display()
                ))
            })
        };
        let regime: usize = row[regime_idx].parse().map_err(|_| {
            AppError::Config(format!(
                "{}: cannot parse regime {:?}",
                path.display(),
                row[regime_idx]
            ))
        })?;
        by_regime
            .entry(regime)
            .or_default()
            .push((parse(&row[x_idx])?, parse(raw)?));
    }
    Ok(by_regime
        .into_iter()
        .map(|(regime, mut points)| {
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            Series {
                label: label(regime),
                points,
                color: color(regime),
                dashed,
            }
        })
        .collect())
}

pub fn plot(config: &RunConfig) -> Result<(), AppError> {
    let dir = out_dir(config);
    let regime_label = |r: usize| format!("regime {r}");
    let regime_color = |r: usize| SERIES_COLORS[(r - 1) % SERIES_COLORS.len()];
    let baseline_label = |_: usize| "baseline".to_string();
    let baseline_color = |_: usize| BASELINE_COLOR;

    let mut value_series = table_series(
        &dir.join("value.csv"),
        "value",
        regime_label,
        regime_color,
        false,
    )?;
    value_series.extend(table_series(
        &dir.join("value_baseline.csv"),
        "value",
        baseline_label,
        baseline_color,
        true,
    )?);
    let mut ratio_series = table_series(
        &dir.join("policy.csv"),
        "invest_ratio",
        regime_label,
        regime_color,
        false,
    )?;
    ratio_series.extend(table_series(
        &dir.join("policy_baseline.csv"),
        "invest_ratio",
        baseline_label,
        baseline_color,
        true,
    )?);

    let mut artifacts = ArtifactSet::new(&dir, metadata(config))?;
    artifacts.write_svg(
        "value.svg",
        &render_chart(
            "Value function by regime",
            "income x",
            "value V(x)",
            &value_series,
        ),
    )?;
    artifacts.write_svg(
        "invest_ratio.svg",
        &render_chart(
            "Optimal investment ratio by regime",
            "income x",
            "investment ratio phi*(x)/x",
            &ratio_series,
        ),
    )?;
    say!("wrote {}", artifacts.path_of("value.svg").display());
    say!("wrote {}", artifacts.path_of("invest_ratio.svg").display());
    Ok(())
}
