//! `gsem`: fit, effects, bootstrap, sensitivity and simulation commands.
//!
//! Exit codes: 0 on success, 1 on a numerical or data failure (with an
//! error JSON on stdout), 2 on a usage error.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gsem::estimands::{estimate_effects, odds_ratios, EffectQuery};
use gsem::estimation::{fit, Dataset, GsemFit, ModelSpec};
use gsem::inference::{bootstrap, BootKind};
use gsem::io::load_csv;
use gsem::marginals::Family;
use gsem::optimizer::SimplexConfig;
use gsem::sensitivity::{sensitivity_scan, BootstrapSpec};
use gsem::simgen::{run_study, write_study_csv, StudyConfig};
use serde_json::{json, Value};

use config::{preset, AnalysisConfig, UsageError, PRESETS};

#[derive(Parser)]
#[command(name = "gsem", version, about = "Causal mediation analysis with Gaussian-copula structural equation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the marginal models and the path coefficients.
    Fit(DataArgs),
    /// Fit, then estimate natural direct and indirect effects.
    Effects(DataArgs),
    /// Fit, then compute bootstrap percentile intervals.
    Bootstrap(DataArgs),
    /// Re-estimate effects over a grid of mediator-outcome error correlations.
    Sensitivity(DataArgs),
    /// Run a simulation study on a named preset.
    Simulate(SimArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Flat JSON configuration; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    data: Option<String>,
    /// Exposure column.
    #[arg(long)]
    x: Option<String>,
    /// Mediator column.
    #[arg(long)]
    m: Option<String>,
    /// Outcome column.
    #[arg(long)]
    y: Option<String>,
    /// Covariates of all three margins, comma separated (intercept added).
    #[arg(long, value_delimiter = ',')]
    w1: Option<Vec<String>>,
    /// Additional covariates of the mediator and outcome, comma separated.
    #[arg(long, value_delimiter = ',')]
    w2: Option<Vec<String>>,
    /// gaussian, bernoulli or poisson.
    #[arg(long = "family-x")]
    family_x: Option<String>,
    #[arg(long = "family-m")]
    family_m: Option<String>,
    #[arg(long = "family-y")]
    family_y: Option<String>,
    /// Reference exposure level.
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
    /// Contrast exposure level.
    #[arg(long, allow_negative_numbers = true)]
    x1: Option<f64>,
    /// Covariate values after the intercept (W1 then W2); defaults to column means.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    profile: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "mc-draws")]
    mc_draws: Option<usize>,
    /// parametric or nonparametric.
    #[arg(long = "boot-kind")]
    boot_kind: Option<String>,
    #[arg(long = "boot-b")]
    boot_b: Option<usize>,
    /// Comma-separated error correlations for `sensitivity`.
    #[arg(long = "rho-grid", value_delimiter = ',', allow_negative_numbers = true)]
    rho_grid: Option<Vec<f64>>,
    /// Output JSON path; stdout when absent.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name.
    #[arg(long, help = format!("Preset: {PRESETS}"))]
    setting: Option<String>,
    /// Sample size per simulated dataset.
    #[arg(long)]
    n: Option<usize>,
    /// Number of simulated datasets (at least 50).
    #[arg(long = "n-sims")]
    n_sims: Option<usize>,
    /// Bootstrap replicates per dataset; 0 skips coverage.
    #[arg(long = "boot-b")]
    boot_b: Option<usize>,
    /// parametric or nonparametric; both when absent.
    #[arg(long = "boot-kind")]
    boot_kind: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "mc-draws")]
    mc_draws: Option<usize>,
    /// Also write the summary table as CSV.
    #[arg(long)]
    csv: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

enum Failure {
    Usage(String),
    Numeric(gsem::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<gsem::Error> for Failure {
    fn from(e: gsem::Error) -> Self {
        Failure::Numeric(e)
    }
}

type CmdResult = Result<(Value, Option<String>), Failure>;

fn with_file(config: &Option<PathBuf>, flags: AnalysisConfig) -> Result<AnalysisConfig, UsageError> {
    let base = match config {
        Some(p) => AnalysisConfig::from_file(p)?,
        None => AnalysisConfig::default(),
    };
    Ok(base.merged(flags))
}

impl DataArgs {
    fn into_config(self) -> Result<AnalysisConfig, UsageError> {
        let flags = AnalysisConfig {
            data: self.data,
            x: self.x,
            m: self.m,
            y: self.y,
            w1: self.w1,
            w2: self.w2,
            family_x: self.family_x,
            family_m: self.family_m,
            family_y: self.family_y,
            x0: self.x0,
            x1: self.x1,
            profile: self.profile,
            seed: self.seed,
            mc_draws: self.mc_draws,
            boot_kind: self.boot_kind,
            boot_b: self.boot_b,
            rho_grid: self.rho_grid,
            out: self.out,
            ..Default::default()
        };
        with_file(&self.config, flags)
    }
}

/// Data, model and effect query shared by the data-driven commands.
struct Analysis {
    cfg: AnalysisConfig,
    data: Dataset,
    spec: ModelSpec,
    query: EffectQuery,
}

fn prepare(cfg: AnalysisConfig) -> Result<Analysis, Failure> {
    let path = cfg.data_path()?.to_string();
    let roles = cfg.roles()?;
    let families = cfg.families()?;
    let levels = cfg.exposure_levels()?;
    let cfg = cfg.resolved()?;
    let data = load_csv(&path, &roles, families)?;
    let w = match &cfg.profile {
        Some(p) => {
            let expected = data.w1.ncols() + data.w2.ncols() - 1;
            if p.len() != expected {
                return Err(Failure::Usage(format!("profile has {} values, expected {expected}", p.len())));
            }
            std::iter::once(1.0).chain(p.iter().copied()).collect()
        }
        None => data.mean_profile(),
    };
    let cfg = AnalysisConfig { profile: Some(w[1..].to_vec()), ..cfg };
    let mut query = EffectQuery::new(w).with_draws(cfg.mc_draws()).with_seed(cfg.seed());
    if let Some((a, b)) = levels {
        query = query.with_x(a, b);
    }
    let spec = ModelSpec::new(families[0], families[1], families[2]);
    Ok(Analysis { cfg, data, spec, query })
}

fn fitted(a: &Analysis) -> Result<GsemFit, Failure> {
    Ok(fit(&a.data, &a.spec, &SimplexConfig::default())?)
}

fn cmd_fit(cfg: AnalysisConfig) -> CmdResult {
    let a = prepare(cfg)?;
    let f = fitted(&a)?;
    Ok((json!({ "command": "fit", "config": a.cfg, "fit": f }), a.cfg.out.clone()))
}

fn cmd_effects(cfg: AnalysisConfig) -> CmdResult {
    let a = prepare(cfg)?;
    let f = fitted(&a)?;
    let q = a.query.resolve(&f)?;
    let effects = estimate_effects(&f, &q)?;
    let or = if f.fit_y.family == Family::BernoulliLogit { Some(odds_ratios(&f, &q)?) } else { None };
    Ok((
        json!({ "command": "effects", "config": a.cfg, "query": q, "fit": f, "effects": effects, "odds_ratios": or }),
        a.cfg.out.clone(),
    ))
}

fn column_stats(replicates: &[Vec<f64>], k: usize) -> (f64, f64) {
    let n = replicates.len() as f64;
    let mean = replicates.iter().map(|r| r[k]).sum::<f64>() / n;
    let var = replicates.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn cmd_bootstrap(cfg: AnalysisConfig) -> CmdResult {
    let kind = cfg.boot_kind()?;
    let a = prepare(cfg)?;
    let b = a.cfg.boot_b();
    let cfg = AnalysisConfig { boot_b: Some(b), boot_kind: Some(kind_name(kind).into()), ..a.cfg.clone() };
    let f = fitted(&a)?;
    let q = a.query.resolve(&f)?;
    let r = bootstrap(&a.data, &f, &q, b, kind, cfg.seed())?;
    let summary: Vec<Value> = r
        .targets
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let (mean, sd) = column_stats(&r.replicates, k);
            json!({
                "target": t,
                "estimate": r.point[k],
                "ci_lower": r.ci_lower[k],
                "ci_upper": r.ci_upper[k],
                "replicate_mean": mean,
                "replicate_sd": sd,
            })
        })
        .collect();
    Ok((
        json!({
            "command": "bootstrap",
            "config": cfg,
            "query": q,
            "fit": f,
            "bootstrap": {
                "kind": r.kind,
                "b": r.b,
                "seed": r.seed,
                "n_failed": r.n_failed,
                "warning": r.warning,
                "targets": summary,
            },
        }),
        cfg.out.clone(),
    ))
}

fn kind_name(k: BootKind) -> &'static str {
    match k {
        BootKind::Parametric => "parametric",
        BootKind::Nonparametric => "nonparametric",
    }
}

fn cmd_sensitivity(cfg: AnalysisConfig) -> CmdResult {
    let explicit_boot = cfg.boot_b;
    let grid = cfg.rho_grid();
    let a = prepare(cfg)?;
    let cfg = AnalysisConfig { rho_grid: Some(grid.clone()), ..a.cfg.clone() };
    let boot = explicit_boot.map(|b| BootstrapSpec { b, seed: cfg.seed() });
    let scan = sensitivity_scan(&a.data, &a.spec, &a.query, &grid, &SimplexConfig::default(), boot)?;
    Ok((json!({ "command": "sensitivity", "config": cfg, "sensitivity": scan }), cfg.out.clone()))
}

fn cmd_simulate(args: SimArgs) -> CmdResult {
    let flags = AnalysisConfig {
        setting: args.setting,
        n: args.n,
        n_sims: args.n_sims,
        boot_b: args.boot_b,
        boot_kind: args.boot_kind,
        seed: args.seed,
        mc_draws: args.mc_draws,
        csv: args.csv,
        out: args.out,
        ..Default::default()
    };
    let cfg = with_file(&args.config, flags)?;
    let name = cfg.setting.clone().ok_or_else(|| UsageError(format!("missing required setting `setting` ({PRESETS})")))?;
    let n = cfg.n.unwrap_or(1000);
    let seed = cfg.seed();
    let setting = preset(&name, n, seed)?;
    let boot_kinds = match &cfg.boot_kind {
        Some(_) => vec![cfg.boot_kind()?],
        None => vec![BootKind::Parametric, BootKind::Nonparametric],
    };
    let study = StudyConfig {
        n_sims: cfg.n_sims.unwrap_or(200),
        b_boot: cfg.boot_b.unwrap_or(0),
        boot_kinds,
        mc_draws: cfg.mc_draws(),
        ..Default::default()
    };
    let cfg = AnalysisConfig {
        n: Some(n),
        n_sims: Some(study.n_sims),
        boot_b: Some(study.b_boot),
        seed: Some(seed),
        mc_draws: Some(study.mc_draws),
        ..cfg
    };
    let res = run_study(std::slice::from_ref(&setting), &study)?;
    let rows: Vec<_> = res.iter().flat_map(|r| r.rows.clone()).collect();
    if let Some(path) = &cfg.csv {
        let file = std::fs::File::create(path).map_err(gsem::Error::from)?;
        write_study_csv(&rows, file)?;
    }
    Ok((
        json!({ "command": "simulate", "config": cfg, "setting": setting, "study": study, "rows": rows }),
        cfg.out.clone(),
    ))
}

fn emit(value: &Value, out: Option<&str>) -> Result<(), gsem::Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| gsem::Error::Io(e.to_string()))? + "\n";
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => a.into_config().map_err(Failure::from).and_then(cmd_fit),
        Command::Effects(a) => a.into_config().map_err(Failure::from).and_then(cmd_effects),
        Command::Bootstrap(a) => a.into_config().map_err(Failure::from).and_then(cmd_bootstrap),
        Command::Sensitivity(a) => a.into_config().map_err(Failure::from).and_then(cmd_sensitivity),
        Command::Simulate(a) => cmd_simulate(a),
    };
    let failure = match result {
        Ok((value, out)) => match emit(&value, out.as_deref()) {
            Ok(()) => return ExitCode::SUCCESS,
            Err(e) => Failure::Numeric(e),
        },
        Err(f) => f,
    };
    match failure {
        Failure::Usage(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Failure::Numeric(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            println!("{}", serde_json::to_string_pretty(&body).expect("error JSON serializes"));
            ExitCode::from(1)
        }
    }
}
