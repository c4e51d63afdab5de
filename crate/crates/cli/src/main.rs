mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info};
use mdeid::library::{describe_term, TermDescriptor};
use mdeid::pipeline::{
    algorithm_comparison, empirical_orders, resolution_study, with_cached_splines, ResolutionRecord, SplineCache,
};
use mdeid::solvers::mms_convergence;
use mdeid::{run_site, AnalyticMde, ExperimentReport, PipelineConfig};

use config::{CompareConfig, MmsConfig, StudyConfig};
use output::{opt, sci, RunManifest, Table};

#[derive(Parser)]
#[command(
    name = "mdeid",
    version,
    about = "Identify modified differential equations from simulation data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one identification pipeline.
    Run(CommonArgs),
    /// Compare sparse-regression algorithms across initial-condition and puffer settings.
    Compare(CommonArgs),
    /// Repeat a pipeline over a grid of resolutions and estimate empirical orders.
    Study(CommonArgs),
    /// Manufactured-solution convergence study of a solver.
    Mms(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON configuration file.
    config: PathBuf,
    /// Output directory; defaults to `$SITE_OUT_DIR/<name>` or `results/<name>`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Overrides the swarm seed of the training initial condition.
    #[arg(long)]
    seed: Option<u64>,
    /// Reuses the optimised initial conditions stored in a `splines.json` file.
    #[arg(long)]
    splines: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(short, long)]
    jobs: Option<usize>,
}

fn output_dir(args: &CommonArgs, name: &str) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    let root = std::env::var_os("SITE_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"));
    root.join(name)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Run(a) => ("run", a),
        Command::Compare(a) => ("compare", a),
        Command::Study(a) => ("study", a),
        Command::Mms(a) => ("mms", a),
    };
    match execute(name, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns `Ok(false)` when some requested runs failed but outputs were written.
fn execute(command: &str, args: &CommonArgs) -> Result<bool> {
    if let Some(j) = args.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    let manifest_for = |name: &str, hash: Option<String>| -> Result<RunManifest> {
        let m = RunManifest {
            command: command.to_string(),
            config_path: args.config.clone(),
            output_dir: output_dir(args, name),
            seed_override: args.seed,
            jobs: args.jobs,
            timestamp: chrono::Utc::now().to_rfc3339(),
            revision: output::revision(),
            config_hash: hash,
            status: "running".into(),
            outputs: Vec::new(),
            failures: Vec::new(),
        };
        m.save()?;
        Ok(m)
    };
    match command {
        "run" => {
            let cfg = pipeline_config(config::load(&args.config)?, args)?;
            let mut m = manifest_for(&config::stem(&cfg.name, &args.config), Some(cfg.hash()))?;
            finish(&mut m, |m| cmd_run(&cfg, m))
        }
        "compare" => {
            let mut c: CompareConfig = config::load(&args.config)?;
            c.pipeline = pipeline_config(c.pipeline, args)?;
            let mut m = manifest_for(&config::stem(&c.pipeline.name, &args.config), Some(c.pipeline.hash()))?;
            finish(&mut m, |m| cmd_compare(&c, m))
        }
        "study" => {
            let mut s: StudyConfig = config::load(&args.config)?;
            s.pipeline = pipeline_config(s.pipeline, args)?;
            if s.nx.len() < 2 {
                bail!("{}: a study needs at least two nx values", args.config.display());
            }
            if let Some(n) = s.order_nx.iter().find(|n| !s.nx.contains(n)) {
                bail!("{}: order_nx value {n} is not in nx", args.config.display());
            }
            let mut m = manifest_for(&config::stem(&s.pipeline.name, &args.config), Some(s.pipeline.hash()))?;
            finish(&mut m, |m| cmd_study(&s, m))
        }
        "mms" => {
            let c: MmsConfig = config::load(&args.config)?;
            let mut m = manifest_for(&config::stem(&c.name, &args.config), None)?;
            finish(&mut m, |m| cmd_mms(&c, m))
        }
        _ => unreachable!(),
    }
}

fn pipeline_config(mut cfg: PipelineConfig, args: &CommonArgs) -> Result<PipelineConfig> {
    if let Some(seed) = args.seed {
        cfg.swarm.seed = seed;
        cfg.training_spline = None;
    }
    if let Some(path) = &args.splines {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("cannot read spline cache {}", path.display()))?;
        SplineCache::from_json(&text)?
            .apply(&mut cfg)
            .with_context(|| format!("{}: unusable spline cache", path.display()))?;
    }
    cfg.validate()
        .with_context(|| format!("{}: invalid pipeline config", args.config.display()))?;
    Ok(cfg)
}

/// Runs a command body and records its outcome in the manifest.
fn finish(m: &mut RunManifest, body: impl FnOnce(&mut RunManifest) -> Result<()>) -> Result<bool> {
    let result = body(m);
    m.status = match (&result, m.failures.is_empty()) {
        (Err(e), _) => {
            m.failures.push(format!("{e:#}"));
            "failed".into()
        }
        (Ok(()), true) => "completed".into(),
        (Ok(()), false) => "partial".into(),
    };
    m.save()?;
    result?;
    info!("outputs written to {}", m.output_dir.display());
    Ok(m.failures.is_empty())
}

fn save_table(m: &mut RunManifest, name: &str, table: Table) -> Result<()> {
    table.save(&m.output_dir.join(name))?;
    m.outputs.push(name.to_string());
    Ok(())
}

fn save_json<T: serde::Serialize>(m: &mut RunManifest, name: &str, value: &T) -> Result<()> {
    output::write_json(&m.output_dir.join(name), value)?;
    m.outputs.push(name.to_string());
    Ok(())
}

fn cmd_run(cfg: &PipelineConfig, m: &mut RunManifest) -> Result<()> {
    let report = run_site(cfg)?;
    save_json(m, "report.json", &report)?;
    let cache = SplineCache {
        ic_hash: cfg.ic_hash(),
        training: report.training_spline.clone(),
        test: report.test_spline.clone(),
    };
    save_json(m, "splines.json", &cache)?;
    save_table(m, "coefficients.csv", coefficient_table(&report, &BTreeMap::new())?)?;
    save_table(m, "models.csv", models_table(&report)?)?;
    save_table(m, "pso_trace.csv", trace_table(&report)?)?;
    Ok(())
}

/// Analytic terms first, then any incorrect terms of the selected model.
fn coefficient_table(report: &ExperimentReport, orders: &BTreeMap<String, Option<f64>>) -> Result<Table> {
    let mut t = Table::new(&[
        "term",
        "analytic",
        "predicted",
        "abs_error",
        "rel_error",
        "empirical_order",
        "theoretical_order",
        "identified",
    ])?;
    let truth = AnalyticMde::for_scheme(&report.config.scheme, report.grid.dx, report.grid.dt)?;
    for a in &truth.terms {
        let name = describe_term(&a.term);
        let sel = report.selected_terms.iter().find(|s| s.term == name);
        t.row([
            name.clone(),
            sci(a.coefficient),
            opt(sel.map(|s| s.predicted)),
            opt(sel.and_then(|s| s.abs_error)),
            opt(sel.and_then(|s| s.rel_error)),
            opt(orders.get(&name).copied().flatten()),
            a.dx_order.to_string(),
            sel.is_some().to_string(),
        ])?;
    }
    for s in report.selected_terms.iter().filter(|s| s.analytic.is_none()) {
        t.row([
            s.term.clone(),
            String::new(),
            sci(s.predicted),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            "true".into(),
        ])?;
    }
    Ok(t)
}

fn models_table(report: &ExperimentReport) -> Result<Table> {
    let mut t = Table::new(&[
        "index",
        "algorithm",
        "hyperparameters",
        "refit_ols",
        "converged",
        "term_count",
        "correct",
        "incorrect",
        "valid",
        "bic",
        "test_residual_sq",
        "training_residual",
        "mre",
        "mae",
        "selected",
        "optimal",
        "terms",
    ])?;
    for (i, c) in report.candidates.iter().enumerate() {
        t.row([
            i.to_string(),
            c.algorithm.name().to_string(),
            serde_json::to_string(&c.hyperparameters)?,
            c.refit_ols.to_string(),
            c.converged.to_string(),
            c.term_count().to_string(),
            c.correct.to_string(),
            c.incorrect.to_string(),
            c.valid.to_string(),
            sci(c.bic),
            sci(c.test_residual_sq),
            sci(c.training_residual),
            opt(c.mre),
            opt(c.mae),
            (i == report.selected).to_string(),
            (Some(i) == report.optimal).to_string(),
            c.terms.join(" "),
        ])?;
    }
    Ok(t)
}

fn trace_table(report: &ExperimentReport) -> Result<Table> {
    let mut t = Table::new(&["iteration", "training_rms_vif", "test_rms_vif"])?;
    let train = report
        .training_spline
        .as_ref()
        .map(|a| a.trace.as_slice())
        .unwrap_or(&[]);
    let test = report.test_spline.trace.as_slice();
    for i in 0..train.len().max(test.len()) {
        t.row([i.to_string(), opt(train.get(i).copied()), opt(test.get(i).copied())])?;
    }
    Ok(t)
}

fn cmd_compare(c: &CompareConfig, m: &mut RunManifest) -> Result<()> {
    let records = algorithm_comparison(&c.pipeline, &c.algorithms, &c.ic_modes, &c.puffer)?;
    let mut t = Table::new(&[
        "algorithm",
        "ic_mode",
        "puffer",
        "term_count",
        "correct",
        "incorrect",
        "mre",
        "mae",
        "flag",
        "refit_ols",
        "terms",
    ])?;
    for r in &records {
        t.row([
            r.algorithm.name().to_string(),
            r.ic_mode.name().to_string(),
            r.puffer.to_string(),
            r.term_count.to_string(),
            r.correct.to_string(),
            r.incorrect.to_string(),
            opt(r.mre),
            opt(r.mae),
            if r.valid { "valid" } else { "invalid" }.to_string(),
            r.refit_ols.to_string(),
            r.terms.join(" "),
        ])?;
    }
    save_table(m, "comparison.csv", t)?;
    save_json(m, "comparison.json", &records)?;
    Ok(())
}

fn cmd_study(s: &StudyConfig, m: &mut RunManifest) -> Result<()> {
    let nt_list = s.nt_list();
    // Splines are optimised once here so the base-resolution table reuses them.
    let base = with_cached_splines(&s.pipeline)?;
    let cache = SplineCache::build(&base)?;
    save_json(m, "splines.json", &cache)?;
    let records = resolution_study(&base, &s.nx, &nt_list)?;
    for r in &records {
        if let Some(f) = &r.failure {
            m.failures.push(format!("nx={} nt={}: {f}", r.nx, r.nt));
        }
    }
    save_json(m, "study.json", &records)?;
    save_table(m, "resolution.csv", resolution_table(&records)?)?;

    let mut orders_table = Table::new(&["nt", "term", "theoretical_order", "empirical_order", "pairwise_orders"])?;
    let mut base_orders = BTreeMap::new();
    for &nt in &nt_list {
        let order_nx = s.order_nx_list();
        let rows: Vec<ResolutionRecord> = records
            .iter()
            .filter(|r| r.nt == nt && order_nx.contains(&r.nx))
            .cloned()
            .collect();
        let Some(any) = rows.iter().find(|r| r.failure.is_none()) else {
            continue;
        };
        let truth = AnalyticMde::for_scheme(&s.pipeline.scheme, any.dx, any.dt)?;
        let terms: Vec<TermDescriptor> = truth.terms.iter().map(|t| t.term.clone()).collect();
        let orders = empirical_orders(&rows, &terms, s.orders_from_optimal)?;
        for a in &truth.terms {
            let name = describe_term(&a.term);
            let est = orders.get(&name);
            orders_table.row([
                nt.to_string(),
                name.clone(),
                a.dx_order.to_string(),
                opt(est.and_then(|e| e.order)),
                est.map(|e| e.pairwise.iter().map(|p| opt(*p)).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default(),
            ])?;
            if nt == s.pipeline.grid.nt {
                base_orders.insert(name, est.and_then(|e| e.order));
            }
        }
    }
    save_table(m, "orders.csv", orders_table)?;

    // Table layout at the base resolution, when the study includes it.
    if s.nx.contains(&s.pipeline.grid.nx) && nt_list.contains(&s.pipeline.grid.nt) {
        let report = run_site(&base)?;
        save_table(m, "coefficients.csv", coefficient_table(&report, &base_orders)?)?;
    }
    Ok(())
}

fn resolution_table(records: &[ResolutionRecord]) -> Result<Table> {
    let mut t = Table::new(&[
        "nx",
        "nt",
        "dx",
        "dt",
        "choice",
        "term_count",
        "correct",
        "incorrect",
        "mre",
        "mae",
        "bic_matches_optimal",
        "terms",
        "failure",
    ])?;
    for r in records {
        for (choice, summary) in [("bic", &r.bic), ("optimal", &r.optimal)] {
            let (k, c, i, mre, mae, terms) = match summary {
                Some(s) => (
                    s.term_count.to_string(),
                    s.correct.to_string(),
                    s.incorrect.to_string(),
                    opt(s.mre),
                    opt(s.mae),
                    s.terms.join(" "),
                ),
                None => Default::default(),
            };
            t.row([
                r.nx.to_string(),
                r.nt.to_string(),
                sci(r.dx),
                sci(r.dt),
                choice.to_string(),
                k,
                c,
                i,
                mre,
                mae,
                r.bic_matches_optimal().to_string(),
                terms,
                r.failure.clone().unwrap_or_default(),
            ])?;
        }
    }
    Ok(t)
}

fn cmd_mms(c: &MmsConfig, m: &mut RunManifest) -> Result<()> {
    let records = mms_convergence(c.scheme, &c.resolutions, c.cfl, c.t_test)?;
    let mut t = Table::new(&["nx", "steps", "dt", "l2", "linf", "order_l2", "order_linf", "failure"])?;
    for r in &records {
        if let Some(f) = &r.failure {
            m.failures.push(format!("nx={}: {f}", r.nx));
        }
        t.row([
            r.nx.to_string(),
            r.steps.to_string(),
            sci(r.dt),
            opt(r.l2),
            opt(r.linf),
            opt(r.order_l2),
            opt(r.order_linf),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    save_table(m, "convergence.csv", t)?;
    Ok(())
}
