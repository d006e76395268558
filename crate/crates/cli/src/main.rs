use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vmc_core::bounds::{bound_report, BoundInputs, Concentration};
use vmc_core::experiment::{run_pipeline, RunConfig, CSV_HEADER};
use vmc_core::VmcError;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vmc",
    version,
    about = "Tensor-train surrogates for parametric diffusion problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample, solve, reconstruct and write the error curve as CSV.
    Run(RunArgs),
    /// Evaluate generalization and sample-size bounds.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long = "M")]
    modes: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long = "mesh-n")]
    mesh_n: Option<usize>,
    /// Comma-separated training sizes, e.g. 250,500,1000.
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    #[arg(long = "max-rank")]
    max_rank: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "ref-samples")]
    ref_samples: Option<usize>,
    #[arg(long = "test-samples")]
    test_samples: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, VmcError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_json_file(path).map_err(|e| match e {
                VmcError::Io(m) => VmcError::InvalidArgument(m),
                other => other,
            })?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.problem {
            c.problem = v;
        }
        if let Some(v) = self.modes {
            c.modes = v;
        }
        if let Some(v) = self.degree {
            c.degree = v;
        }
        if let Some(v) = self.mesh_n {
            c.mesh_n = v;
        }
        if let Some(v) = self.samples {
            c.samples = v;
        }
        if let Some(v) = self.max_rank {
            c.max_rank = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.ref_samples {
            c.ref_samples = v;
        }
        if let Some(v) = self.test_samples {
            c.test_samples = v;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    radius: f64,
    #[arg(long = "C1")]
    c1: f64,
    #[arg(long = "C2")]
    c2: f64,
    #[arg(long = "Gamma")]
    big_gamma: f64,
    #[arg(long = "gamma")]
    small_gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long = "N")]
    n: u64,
    /// Also report the smallest N reaching `--pfail`.
    #[arg(long, requires = "pfail")]
    invert: bool,
    #[arg(long)]
    pfail: Option<f64>,
    #[arg(long, default_value = "hoeffding")]
    concentration: Concentration,
    /// Best-approximation error for the norm and quasi-optimality bounds.
    #[arg(long = "e-best", default_value_t = 0.0)]
    e_best: f64,
    /// Slack parameter of the quasi-optimality bound.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
}

fn run(args: RunArgs) -> Result<(), VmcError> {
    let config = args.resolve()?;
    let to_stdout = config.out.is_none();
    let output = run_pipeline(&config)?;
    if to_stdout {
        println!("{}", CSV_HEADER.join(","));
        for r in &output.records {
            println!("{}", r.csv_fields().join(","));
        }
    }
    for (r, rep) in output.records.iter().zip(&output.reports) {
        eprintln!(
            "N={} sweeps={} stop={:?} ranks={:?}",
            r.n, rep.sweeps, rep.stop_reason, rep.ranks
        );
    }
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<(), VmcError> {
    let inputs = BoundInputs {
        c1: args.c1,
        c2: args.c2,
        big_gamma: args.big_gamma,
        small_gamma: args.small_gamma,
        dim: args.dim,
        radius: args.radius,
        sigma2: args.sigma2,
        eps: args.eps,
        n: args.n,
        e_best: args.e_best,
    };
    let p_fail = if args.invert { args.pfail } else { None };
    let report = bound_report(&inputs, args.concentration, args.a, p_fail)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| VmcError::Io(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bounds(a) => bounds(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERICAL
            })
        }
    }
}
