//! Flag parsing and dispatch. Every experiment subcommand shares the same
//! flag set; `run <kind>` is the config-file-friendly spelling of the same
//! thing. Exit codes: 0 success, 2 usage, 3 resource cap, 4 property failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{resolve, Experiment, PartialConfig, RunConfig};
use crate::io::{console_summary, write_artifacts, Provenance};
use crate::{runner, verify, CliError};

#[derive(Parser)]
#[command(
    name = "medimax",
    version,
    about = "Median maximal operators, weak-type scans, and Hajlasz capacities on finite grids"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run an experiment named by kind or by the config file.
    Run(RunArgs),
    /// Basis density check: how often small sets miss their target ratio.
    Density(ExpArgs),
    /// Convergence of medians to point values for a Lipschitz sample.
    Lebesgue(ExpArgs),
    /// Weak-type comparison constant scan over a corpus.
    Weaktype(ExpArgs),
    /// Lp ratio check against the layer-cake bound.
    Lpbound(ExpArgs),
    /// Maximal superlevel decay along a shrinking input sequence.
    Continuity(ExpArgs),
    /// Largest observed maximal values over a corpus.
    Finiteness(ExpArgs),
    /// Minimal-gradient norm of each corpus input on a small space.
    #[command(name = "hajlasz-norm")]
    HajlaszNorm(ExpArgs),
    /// Capacity of a target set with its minimizing witness.
    Capacity(ExpArgs),
    /// Capacity law battery: subadditivity, monotone limits, weak type.
    Captests(ExpArgs),
    /// Run a property suite and print the pass/fail matrix.
    Verify(VerifyArgs),
}

#[derive(Args, Default)]
pub struct RunArgs {
    /// Experiment kind; optional when the config file names one.
    pub kind: Option<String>,
    #[command(flatten)]
    pub exp: ExpArgs,
}

#[derive(Args, Default)]
pub struct ExpArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid shape, like 4096 or 256x256.
    #[arg(long)]
    pub grid: Option<String>,
    /// Physical length of the longest grid axis.
    #[arg(long)]
    pub span: Option<f64>,
    /// Set family: balls, intervals1d, cubes, axis_rects, rotated_rects,
    /// dyadic; prefix refined: for the countable refinement.
    #[arg(long)]
    pub family: Option<String>,
    /// Angle count for rotated_rects.
    #[arg(long)]
    pub angles: Option<u32>,
    /// Eccentricity cap for rectangle families.
    #[arg(long)]
    pub eccentricity: Option<u32>,
    /// Coarsest dyadic scale exponent (diameter 2^-k_min).
    #[arg(long)]
    pub k_min: Option<i32>,
    /// Finest dyadic scale exponent.
    #[arg(long)]
    pub k_max: Option<i32>,
    /// Median parameter in (0, 1).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Exponent p; repeat for several (lpbound checks each).
    #[arg(long = "p", action = clap::ArgAction::Append)]
    pub p: Option<Vec<f64>>,
    /// Sequence exponent q for mpq and npq families.
    #[arg(long)]
    pub q: Option<f64>,
    /// Smoothness s in (0, 1].
    #[arg(long)]
    pub s: Option<f64>,
    /// Norm family: mp, mpq, or npq.
    #[arg(long)]
    pub fam: Option<String>,
    /// Fixed superlevel threshold; omitted means an automatic grid.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weak-type constant override for lpbound.
    #[arg(long)]
    pub c_est: Option<f64>,
    /// Tolerance knob; meaning depends on the experiment.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Finiteness threshold; omitted means the corpus maximum.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Corpus atoms joined by +: canonical, lipschitz, indicators:<n>,
    /// standard:<n>, fan:<angles>,<len>,<width>.
    #[arg(long)]
    pub corpus: Option<String>,
    /// Sample point count for per-point scans.
    #[arg(long)]
    pub points: Option<usize>,
    /// Sequence or battery length.
    #[arg(long)]
    pub count: Option<usize>,
    /// Per-point set enumeration budget.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Raster cell budget for the rotated-rectangle engine.
    #[arg(long)]
    pub paint_budget: Option<u64>,
    /// Capacity pinning radius; omitted means half the minimal gap.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Capacity target: center, point:<idx>, or indices:<i,j,...>.
    #[arg(long)]
    pub target: Option<String>,
    /// Seed for every randomized choice in the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for report.json and tables/.
    #[arg(long)]
    pub out: Option<String>,
}

impl ExpArgs {
    fn as_partial(&self) -> PartialConfig {
        PartialConfig {
            experiment: None,
            grid: self.grid.clone(),
            span: self.span,
            family: self.family.clone(),
            angles: self.angles,
            eccentricity: self.eccentricity,
            k_min: self.k_min,
            k_max: self.k_max,
            gamma: self.gamma,
            p: self.p.clone(),
            q: self.q,
            s: self.s,
            fam: self.fam.clone(),
            lambda: self.lambda,
            c_est: self.c_est,
            tol: self.tol,
            threshold: self.threshold,
            corpus: self.corpus.clone(),
            points: self.points,
            count: self.count,
            budget: self.budget,
            paint_budget: self.paint_budget,
            rho: self.rho,
            target: self.target.clone(),
            seed: self.seed,
            out: self.out.clone(),
        }
    }
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Suite name: all, median, maximal, or hajlasz.
    #[arg(default_value = "all")]
    pub suite: String,
    /// Seed for the randomized instances.
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
}

/// Merge config file and flags into a resolved run description.
fn resolve_args(kind: Option<&str>, exp: &ExpArgs) -> Result<RunConfig, CliError> {
    let file = match &exp.config {
        Some(path) => PartialConfig::from_file(path)?,
        None => PartialConfig::default(),
    };
    let merged = file.overridden_by(&exp.as_partial());
    let kind = match kind {
        Some(k) => Experiment::parse(k)?,
        None => match &merged.experiment {
            Some(name) => Experiment::parse(name)?,
            None => {
                return Err(CliError::Usage(
                    "no experiment named: pass a kind (like `run weaktype`) or a config file \
                     with an \"experiment\" entry"
                        .to_string(),
                ))
            }
        },
    };
    resolve(kind, &merged)
}

fn run_experiment(kind: Option<&str>, exp: &ExpArgs) -> Result<(), CliError> {
    let config = resolve_args(kind, exp)?;
    let reports = runner::execute(&config)?;
    let canonical = config.canonical_json();
    let provenance = Provenance::new(&canonical, config.seed);
    let written = write_artifacts(
        std::path::Path::new(&config.out),
        &canonical,
        &provenance,
        &reports,
    )?;
    println!("{}", console_summary(&reports));
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let checks = verify::run_suite(&args.suite, args.seed)?;
    let mut failed = Vec::new();
    for c in &checks {
        if c.pass {
            println!("PASS  {}", c.anchor);
        } else {
            println!("FAIL  {}: {}", c.anchor, c.detail);
            failed.push(c.anchor.to_string());
        }
    }
    println!(
        "{} checks, {} failed (suite {}, seed {})",
        checks.len(),
        failed.len(),
        args.suite,
        args.seed
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Property(failed))
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(args) => run_experiment(args.kind.as_deref(), &args.exp),
        Command::Density(e) => run_experiment(Some("density"), e),
        Command::Lebesgue(e) => run_experiment(Some("lebesgue"), e),
        Command::Weaktype(e) => run_experiment(Some("weaktype"), e),
        Command::Lpbound(e) => run_experiment(Some("lpbound"), e),
        Command::Continuity(e) => run_experiment(Some("continuity"), e),
        Command::Finiteness(e) => run_experiment(Some("finiteness"), e),
        Command::HajlaszNorm(e) => run_experiment(Some("hajlasz-norm"), e),
        Command::Capacity(e) => run_experiment(Some("capacity"), e),
        Command::Captests(e) => run_experiment(Some("captests"), e),
        Command::Verify(args) => run_verify(args),
    }
}

/// Entry point returning the process exit code. On failure the last stderr
/// line is a machine-readable error JSON object.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::Usage(e.to_string());
            eprintln!("{}", err.to_json());
            return err.code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.code()
        }
    }
}
