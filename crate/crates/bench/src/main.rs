use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lss::ObjectiveId;
use lss_bench::experiment::read_traces;
use lss_bench::{
    compare, emit_plot_data, plot_csv, run_experiment, write_outputs, BenchError, ExperimentSpec,
    Method, PlotKind,
};

#[derive(Parser)]
#[command(
    name = "lss-bench",
    version,
    about = "Run and compare LSS and SA on the toy landscapes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write per-run traces plus summary.csv.
    Run(Common),
    /// Compare LSS with SA at the configured step fractions under one budget.
    Bench(Common),
    /// Emit long-format plot data (series,x,y).
    Plotdata {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Read traces from a `run` output directory instead of re-running.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Parse and check a config file, then print the resolved settings.
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (`run`, `bench`) or file (`plotdata`); stdout if omitted for plotdata.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    /// Seed of the first run; run r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lss,
    Sa,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Hitting,
    Concentration,
    Decay,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec, BenchError> {
        let mut spec = match &self.config {
            Some(p) => ExperimentSpec::load(p)?,
            None => ExperimentSpec::default(),
        };
        if let Some(r) = self.runs {
            spec.runs = r;
        }
        if let Some(s) = self.seed {
            spec.seed_base = s;
        }
        if let Some(b) = self.budget {
            spec.budget = b;
        }
        if let Some(d) = self.dim {
            if d == 0 {
                return Err(BenchError::config("--dim must be positive"));
            }
            spec.objective = match spec.objective {
                ObjectiveId::Toy { .. } => ObjectiveId::Toy { dim: d },
            };
        }
        if let Some(m) = self.method {
            spec.method = match m {
                MethodArg::Lss => Method::Lss,
                MethodArg::Sa => Method::Sa,
            };
        }
        spec.validate()?;
        Ok(spec)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("lss-out"))
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), BenchError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| BenchError::Io {
            path: parent.into(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| BenchError::Io {
        path: path.into(),
        source,
    })
}

fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run(common) => {
            let spec = common.spec()?;
            let records = run_experiment(&spec)?;
            let dir = common.out_dir();
            write_outputs(&spec, &records, &dir)?;
            let finals: Vec<f64> = records.iter().map(|r| r.summary.final_m).collect();
            println!(
                "{}: {} runs on {}, median final M {:.6}; wrote {}",
                spec.label(),
                records.len(),
                spec.objective,
                lss_bench::median(&finals),
                dir.display()
            );
        }
        Command::Bench(common) => {
            let spec = common.spec()?;
            let specs = spec.bench_specs();
            let table = compare(&specs, spec.budget)?;
            let dir = common.out_dir();
            for (s, recs) in specs.iter().zip(&table.records) {
                write_outputs(s, recs, &dir.join(s.label()))?;
            }
            write_file(&dir.join("comparison.csv"), &table.to_csv())?;
            print!("{}", table.to_text());
        }
        Command::Plotdata { common, kind, from } => {
            let spec = common.spec()?;
            let kind = match kind {
                KindArg::Hitting => PlotKind::Hitting,
                KindArg::Concentration => PlotKind::Concentration,
                KindArg::Decay => PlotKind::Decay,
            };
            let traces = match from {
                Some(dir) => read_traces(&dir)?,
                None => run_experiment(&spec)?
                    .into_iter()
                    .map(|r| r.trace)
                    .collect(),
            };
            let rows = emit_plot_data(&traces, kind, &spec.level_sets, spec.objective.dim())?;
            let csv = plot_csv(&rows, kind);
            match &common.out {
                Some(path) => write_file(path, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::ValidateConfig(common) => {
            let spec = common.spec()?;
            println!("# config OK");
            print!("{}", spec.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
