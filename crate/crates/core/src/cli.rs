//! Command-line front end.
//!
//! [`run`] parses arguments, writes to the supplied streams and returns the
//! process exit code: 0 on success, 1 for usage and configuration errors,
//! 2 for malformed data.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channels::{two_atom_probability, ErrorKind};
use crate::dataio::{
    format_sweep_csv, load_config, parse_table_file, write_table_file, ConditionalTable,
    CsvOptions, Orientation, RunConfig,
};
use crate::entropy::{evaluate, feedback_balance_residual, HeatSource};
use crate::error::{Error, Result};
use crate::protocol::{branch_probability, sigma_histogram, sigma_of_trajectory, Mode};
use crate::statespace::{GibbsSpec, SystemDims};
use crate::sweep::{run_analysis, run_sweep};
use crate::validation::{run_validation, ValidationSettings};

#[derive(Debug, Parser)]
#[command(
    name = "demon-ep",
    version,
    about = "Entropy production of an autonomous Maxwell demon"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// `key = value` run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "ideal|physical")]
    pub mode: Option<Mode>,
    /// Keep only this imperfection; implies physical mode.
    #[arg(long, global = true, value_name = "NAME")]
    pub single_error: Option<ErrorKind>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Clamp backward probabilities from below in the divergences.
    #[arg(long, global = true, value_name = "X")]
    pub floor: Option<f64>,
    /// Compute only the estimators that need no backward statistics.
    #[arg(long, global = true)]
    pub forward_only: bool,
    /// Output file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "atomic|cavity")]
    pub heat_source: Option<HeatSource>,
    /// Run the backward protocol without imperfections.
    #[arg(long, global = true)]
    pub ideal_backward: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every grid point and write a CSV.
    Sweep {
        /// Add the large-δβ̃ limiting line as a column.
        #[arg(long)]
        asymptote: bool,
    },
    /// Report one temperature point in detail.
    Simulate {
        #[arg(long, allow_hyphen_values = true)]
        dbeta: f64,
        /// Also write forward.dat and backward.dat here.
        #[arg(long, value_name = "DIR")]
        tables_out: Option<PathBuf>,
    },
    /// Evaluate the estimators from conditional tables.
    Analyze {
        #[arg(long, value_name = "FILE")]
        forward: PathBuf,
        #[arg(long, value_name = "FILE")]
        backward: Option<PathBuf>,
        #[arg(long)]
        asymptote: bool,
    },
    /// Run the invariant suite.
    Validate {
        /// Random circuits in the Σ2 = Σ6 check.
        #[arg(long, default_value_t = 1000)]
        seeds: usize,
        #[arg(long, hide = true)]
        inject_defect: bool,
    },
}

/// Config file overlaid with the command-line flags.
pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = load_config(g.config.as_deref())?;
    if let Some(m) = g.mode {
        cfg.mode = m;
    }
    if let Some(kind) = g.single_error {
        cfg.mode = Mode::Physical;
        cfg.active_errors = Some(vec![kind]);
    }
    if g.floor.is_some() {
        cfg.floor = g.floor;
    }
    if g.out.is_some() {
        cfg.output = g.out.clone();
    }
    if let Some(h) = g.heat_source {
        cfg.heat_source = h;
    }
    if g.ideal_backward {
        cfg.backward_errors = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &RunConfig, text: &str, out: &mut dyn Write) -> Result<()> {
    match &cfg.output {
        Some(path) => fs::write(path, text).map_err(|source| Error::File {
            path: path.clone(),
            source,
        }),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidConfig("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.10}")
    } else {
        format!("{x}")
    }
}

/// Text report for a single δβ̃.
pub fn simulate_report(cfg: &RunConfig, dbeta: f64, tables_out: Option<&Path>) -> Result<String> {
    let sim = cfg.simulation()?;
    let gibbs = GibbsSpec::from_dbeta(cfg.beta_c()?, dbeta)?;
    let (fwd, bwd) = sim.tables(&gibbs)?;
    let res = evaluate(&fwd, Some(&bwd), &cfg.estimator_options())?;
    let pk = branch_probability(&fwd)?;
    let taps = sim.circuit()?.oracle(&gibbs)?;
    let hist = sigma_histogram(&fwd, &bwd, cfg.sigma_tol)?;
    let model = sim.model();

    let mut r = String::new();
    let _ = writeln!(
        r,
        "mode {}  dbeta_tilde {}  beta_C {:.10}",
        sim.mode(),
        dbeta,
        gibbs.beta_c()
    );
    for (k, p) in pk.probs().iter().enumerate() {
        let _ = writeln!(r, "p(k={k}) = {p:.4}");
    }
    let _ = writeln!(
        r,
        "\n{:<18}{:>16}{:>16}{:>16}",
        "(n_Q,k,n_C,m_Q,m_C)", "p", "p_b", "sigma"
    );
    for (t, p) in fwd.iter() {
        let pb = bwd.get(&t);
        if p == 0.0 && pb == 0.0 {
            continue;
        }
        let sigma = if p > 0.0 {
            sigma_of_trajectory(&t, &gibbs, &pk).map_or("-".into(), num)
        } else {
            "-".into()
        };
        let _ = writeln!(
            r,
            "{:<18}{:>16.10}{:>16.10}{:>16}",
            t.to_string(),
            p,
            pb,
            sigma
        );
    }
    let _ = writeln!(r, "\n{:>16}{:>16}{:>16}", "sigma", "p(sigma)", "p_b(sigma)");
    for b in &hist.bins {
        let _ = writeln!(
            r,
            "{:>16.10}{:>16.10}{:>16.10}",
            b.sigma, b.forward, b.backward
        );
    }
    let _ = writeln!(
        r,
        "backward mass on unreached trajectories {:.10}",
        hist.unreached_backward
    );
    let _ = writeln!(r);
    for (i, v) in res.sigmas() {
        let _ = writeln!(r, "Sigma{i} = {}", num(v));
    }
    let _ = writeln!(r, "heat_C = {}", num(res.heat_c));
    let _ = writeln!(r, "<I> = {}", num(res.mean_info));
    let _ = writeln!(r, "asymptote = {}", num(res.asymptote));
    if !res.flags.is_empty() {
        let _ = writeln!(r, "flags: {}", res.flags.join(";"));
    }
    let residual = feedback_balance_residual(&taps.post_readout, &taps.post_feedback, &gibbs)?;
    let _ = writeln!(r, "feedback information balance residual = {residual:.3e}");
    let p2 = two_atom_probability(model.nbar_atoms, model.detect_eff)?;
    let _ = writeln!(r, "two-atom probability = {p2:.2}");

    if let Some(dir) = tables_out {
        fs::create_dir_all(dir).map_err(|source| Error::File {
            path: dir.to_path_buf(),
            source,
        })?;
        let (fc, bc) = sim.conditionals()?;
        write_table_file(
            &ConditionalTable::from_conditionals(&fc),
            &dir.join("forward.dat"),
        )?;
        write_table_file(
            &ConditionalTable::from_conditionals(&bc),
            &dir.join("backward.dat"),
        )?;
    }
    Ok(r)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    let cfg = resolve_config(&cli.global)?;
    let jobs = cli.global.jobs;
    let forward_only = cli.global.forward_only;
    match cli.command {
        Command::Sweep { asymptote } => {
            let sim = cfg.simulation()?;
            let (beta_c, grid, opts) = (cfg.beta_c()?, cfg.grid()?, cfg.estimator_options());
            let rows = with_pool(jobs, || run_sweep(&sim, beta_c, &grid, &opts, forward_only))??;
            let csv = format_sweep_csv(
                &rows,
                CsvOptions {
                    forward_only,
                    asymptote,
                },
            )?;
            emit(&cfg, &csv, out)?;
            Ok(0)
        }
        Command::Simulate { dbeta, tables_out } => {
            let report = simulate_report(&cfg, dbeta, tables_out.as_deref())?;
            emit(&cfg, &report, out)?;
            Ok(0)
        }
        Command::Analyze {
            forward,
            backward,
            asymptote,
        } => {
            let dims = SystemDims::default();
            let fwd = parse_table_file(&forward, Orientation::ForwardRowsInitial)?
                .to_conditionals(dims)?;
            let bwd = match (&backward, forward_only) {
                (Some(path), false) => Some(
                    parse_table_file(path, Orientation::BackwardRowsFinal)?
                        .to_conditionals(dims)?,
                ),
                (Some(_), true) => None,
                (None, _) => {
                    log::info!("no backward table; computing forward estimators only");
                    None
                }
            };
            let (beta_c, grid, opts) = (cfg.beta_c()?, cfg.grid()?, cfg.estimator_options());
            let rows = with_pool(jobs, || {
                run_analysis(&fwd, bwd.as_ref(), beta_c, &grid, &opts)
            })??;
            let csv = format_sweep_csv(
                &rows,
                CsvOptions {
                    forward_only: bwd.is_none(),
                    asymptote,
                },
            )?;
            emit(&cfg, &csv, out)?;
            Ok(0)
        }
        Command::Validate {
            seeds,
            inject_defect,
        } => {
            let mut settings = ValidationSettings::new(cfg.beta_c()?, cfg.grid()?);
            settings.seeds = seeds.max(1);
            settings.inject_defect = inject_defect;
            settings.model = match &cfg.active_errors {
                Some(kinds) => cfg.model.only(kinds),
                None => cfg.model.clone(),
            };
            let checks = with_pool(jobs, || run_validation(&settings))??;
            let mut report = String::new();
            for c in &checks {
                let _ = writeln!(
                    report,
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            let _ = writeln!(
                report,
                "{} of {} checks passed",
                checks.len() - failed,
                checks.len()
            );
            emit(&cfg, &report, out)?;
            Ok(u8::from(failed > 0))
        }
    }
}

/// Runs one invocation and returns its exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            return match e.kind() {
                K::DisplayHelp
                | K::DisplayVersion
                | K::DisplayHelpOnMissingArgumentOrSubcommand
                    if e.exit_code() == 0 =>
                {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
