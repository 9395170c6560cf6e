use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subdiff_cli::experiments::{self, write_contraction_csv, write_reference_file, write_weights};
use subdiff_cli::{ExampleKind, ExperimentConfig, ReferenceMode};
use subdiff_core::Result;

#[derive(Parser)]
#[command(name = "subdiff", version, about = "Convergence studies for time-fractional subdiffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Smooth source, zero initial data; fixed iteration counts.
    Example1(StudyArgs),
    /// Discontinuous initial data; logarithmic iteration schedules.
    Example2(StudyArgs),
    /// Measured contraction constants of the multigrid inner solvers.
    Contraction(StudyArgs),
    /// Convolution quadrature weights and their magnitude bound.
    WeightsDump {
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long = "N", default_value_t = 100)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct StudyArgs {
    /// key=value settings, overridden by flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    example: Option<String>,
    #[arg(long)]
    alpha: Vec<f64>,
    #[arg(long = "N")]
    n: Vec<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long = "cA")]
    c_a: Option<f64>,
    #[arg(long, value_parser = ["jacobi", "gs"])]
    smoother: Option<String>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    nu1: Option<usize>,
    #[arg(long)]
    nu2: Option<usize>,
    /// Table row; repeat for several rows.
    #[arg(long)]
    schedule: Vec<String>,
    #[arg(long)]
    startup_exact: Option<usize>,
    #[arg(long = "ref-N")]
    ref_n: Option<usize>,
    /// Final-time reference values as `alpha,node,value` CSV.
    #[arg(long)]
    ref_file: Option<PathBuf>,
    /// Also write the computed reference states to this file.
    #[arg(long)]
    dump_ref: Option<PathBuf>,
    /// K=128 with N_ref=5120.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "md"])]
    format: Option<String>,
}

impl StudyArgs {
    fn config(&self, example: ExampleKind) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::new(example);
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        if let Some(e) = &self.example {
            c.set("example", e)?;
        }
        if self.paper_scale {
            c.apply_full_scale();
        }
        let join = |v: &[String], sep: &str| v.join(sep);
        if !self.alpha.is_empty() {
            c.alphas = self.alpha.clone();
        }
        if !self.n.is_empty() {
            c.steps = self.n.clone();
        }
        if !self.schedule.is_empty() {
            c.set("schedule", &join(&self.schedule, ";"))?;
        }
        let scalars: [(&str, Option<String>); 12] = [
            ("K", self.k.map(|v| v.to_string())),
            ("cA", self.c_a.map(|v| v.to_string())),
            ("smoother", self.smoother.clone()),
            ("omega", self.omega.map(|v| v.to_string())),
            ("nu1", self.nu1.map(|v| v.to_string())),
            ("nu2", self.nu2.map(|v| v.to_string())),
            ("startup-exact", self.startup_exact.map(|v| v.to_string())),
            ("ref-N", self.ref_n.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("trials", self.trials.map(|v| v.to_string())),
            ("cycles", self.cycles.map(|v| v.to_string())),
            ("format", self.format.clone()),
        ];
        for (key, value) in scalars {
            if let Some(v) = value {
                c.set(key, &v)?;
            }
        }
        if let Some(p) = &self.ref_file {
            c.reference = ReferenceMode::External(p.clone());
        }
        c.validate_study()?;
        Ok(c)
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn study(args: &StudyArgs, example: ExampleKind) -> Result<()> {
    let config = args.config(example)?;
    let table = experiments::run_table(&config)?;
    if let Some(path) = &args.dump_ref {
        let system = experiments::fem_system(config.k, config.diffusivity)?;
        let states = config
            .alphas
            .iter()
            .map(|&a| Ok((a, experiments::reference_state(&config, a, &system)?)))
            .collect::<Result<Vec<_>>>()?;
        write_reference_file(&states, BufWriter::new(File::create(path)?))?;
    }
    let mut out = output(&args.out)?;
    table.write(config.format, &mut out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Example1(args) => study(&args, ExampleKind::One),
        Command::Example2(args) => study(&args, ExampleKind::Two),
        Command::Contraction(args) => {
            let config = args.config(ExampleKind::One)?;
            let rows = experiments::run_contraction_sweep(&config)?;
            let mut out = output(&args.out)?;
            write_contraction_csv(config.seed, &rows, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::WeightsDump { alpha, n, out } => {
            let mut w = output(&out)?;
            write_weights(alpha, n, &mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("subdiff: {e}");
            ExitCode::from(subdiff_cli::exit_code(&e))
        }
    }
}
