//! `lbdie` command-line driver.
//!
//! Exit status: 0 when every check passes, 1 on a failed check or numerical
//! error, 2 on an invalid configuration.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lbdie_core::localizers::LocalizingFunction;

use commands::Report;
use config::{CommandName, CutoffSpec, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Numerical(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lbdie", version, about = "Localized boundary-domain integral equations for anisotropic elliptic systems")]
struct Cli {
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: output.dir from the configuration, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON run configuration.
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Certify σ_χ > 0 for a cutoff: `chi1k k=3 eps=0.5`, `chi2 eps=1`, or the config's cutoff.
    CheckLocalizer {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Cutoff kind followed by key=value parameters.
        spec: Vec<String>,
    },
    /// Symmetry and ellipticity bounds of the coefficient tensor; β and μ at symbol.point.
    SymbolCheck(ConfigArg),
    /// Wiener-Hopf factorization of the frozen boundary symbol.
    Factorize(ConfigArg),
    /// Šapiro-Lopatinskii determinant over tangential directions.
    SlCheck(ConfigArg),
    /// FFT model half-space solves with residuals.
    Halfspace(ConfigArg),
    /// Third and gradient Green identities for the manufactured solution.
    VerifyIdentities(ConfigArg),
    /// Assemble and solve the LBDIE system at each level.
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        /// Write every operator block in coordinate format.
        #[arg(long)]
        dump_operators: bool,
    },
    /// Execute the `commands` list of the configuration.
    Run(ConfigArg),
}

fn parse_cutoff(spec: &[String]) -> Result<CutoffSpec, CliError> {
    let (kind, params) = spec.split_first().ok_or_else(|| CliError::Config("missing cutoff kind".into()))?;
    let mut k = None;
    let mut eps = None;
    for p in params {
        let (key, value) = p
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got `{p}`")))?;
        let bad = || CliError::Config(format!("invalid value for {key}: `{value}`"));
        match key {
            "k" => k = Some(value.parse::<u32>().map_err(|_| bad())?),
            "eps" => eps = Some(value.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(CliError::Config(format!("unknown cutoff parameter `{key}`"))),
        }
    }
    let eps = eps.ok_or_else(|| CliError::Config("cutoff needs eps=<value>".into()))?;
    match kind.as_str() {
        "chi1k" => Ok(CutoffSpec::Chi1k { k: k.ok_or_else(|| CliError::Config("chi1k needs k=<value>".into()))?, eps }),
        "chi2" if k.is_none() => Ok(CutoffSpec::Chi2 { eps }),
        "chi2" => Err(CliError::Config("chi2 takes no k".into())),
        other => Err(CliError::Config(format!("unknown cutoff kind `{other}`"))),
    }
}

fn localizer_of(cfg: Option<&RunConfig>, spec: &[String]) -> Result<LocalizingFunction, CliError> {
    if !spec.is_empty() {
        return parse_cutoff(spec)?.localizer();
    }
    let cfg = cfg.ok_or_else(|| CliError::Config("give a cutoff spec or --config".into()))?;
    match &cfg.cutoff {
        Some(c) => c.localizer(),
        None => cfg.localizer(&cfg.domain()?),
    }
}

fn dispatch(name: CommandName, cfg: &RunConfig, dir: &Path, dump: bool) -> Result<Report, CliError> {
    match name {
        CommandName::CheckLocalizer => commands::check_localizer(&localizer_of(Some(cfg), &[])?, &cfg.localizer, dir),
        CommandName::SymbolCheck => commands::symbol_check(cfg, dir),
        CommandName::Factorize => commands::factorize_cmd(cfg, dir),
        CommandName::SlCheck => commands::sl_check_cmd(cfg, dir),
        CommandName::Halfspace => commands::halfspace_cmd(cfg, dir),
        CommandName::VerifyIdentities => commands::verify_identities(cfg, dir),
        CommandName::Solve => commands::solve(cfg, dir, dump),
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let mut reports: Vec<(&str, Report)> = Vec::new();
    match &cli.command {
        Command::CheckLocalizer { config, spec } => {
            let cfg = config.as_deref().map(|p| load(p, cli.seed)).transpose()?;
            let chi = localizer_of(cfg.as_ref(), spec)?;
            let settings = cfg.as_ref().map(|c| c.localizer.clone()).unwrap_or_default();
            let dir = out_dir(cli, cfg.as_ref());
            reports.push(("check-localizer", commands::check_localizer(&chi, &settings, &dir)?));
        }
        Command::Run(c) => {
            let cfg = load(&c.config, cli.seed)?;
            if cfg.commands.is_empty() {
                return Err(CliError::Config("`commands` is empty; nothing to run".into()));
            }
            let dir = out_dir(cli, Some(&cfg));
            for &name in &cfg.commands {
                reports.push((command_label(name), dispatch(name, &cfg, &dir, false)?));
            }
        }
        other => {
            let (name, path, dump) = match other {
                Command::SymbolCheck(c) => (CommandName::SymbolCheck, &c.config, false),
                Command::Factorize(c) => (CommandName::Factorize, &c.config, false),
                Command::SlCheck(c) => (CommandName::SlCheck, &c.config, false),
                Command::Halfspace(c) => (CommandName::Halfspace, &c.config, false),
                Command::VerifyIdentities(c) => (CommandName::VerifyIdentities, &c.config, false),
                Command::Solve { config, dump_operators } => (CommandName::Solve, &config.config, *dump_operators),
                Command::CheckLocalizer { .. } | Command::Run(_) => unreachable!("handled above"),
            };
            let cfg = load(path, cli.seed)?;
            let dir = out_dir(cli, Some(&cfg));
            reports.push((command_label(name), dispatch(name, &cfg, &dir, dump)?));
        }
    }
    let mut all = true;
    for (name, r) in &reports {
        for line in &r.lines {
            println!("{line}");
        }
        println!("{name}: {}", if r.passed { "PASS" } else { "FAIL" });
        all &= r.passed;
    }
    Ok(all)
}

fn command_label(name: CommandName) -> &'static str {
    match name {
        CommandName::CheckLocalizer => "check-localizer",
        CommandName::SymbolCheck => "symbol-check",
        CommandName::Factorize => "factorize",
        CommandName::SlCheck => "sl-check",
        CommandName::Halfspace => "halfspace",
        CommandName::VerifyIdentities => "verify-identities",
        CommandName::Solve => "solve",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(threads) = std::env::var("LBDIE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("LBDIE_THREADS ignored: {e}");
        }
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
