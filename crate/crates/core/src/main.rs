use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use thermotier::harness::{ingest_csv, IngestOptions};
use thermotier::harness::{
    load_dataset, read_report_csv, summarize_report_rows, sweep, write_run_outputs, ExperimentConfig, ExperimentReport,
    Policy, Prepared,
};
use thermotier::workload::write_workload;
use thermotier::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "thermotier",
    version,
    about = "Temperature-driven cloud-edge-end storage simulator"
)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TSCABINET, TSCABINET_NO_FORECAST, TITLE or LRU.
    #[arg(long, global = true)]
    policy: Option<String>,
    /// Total CLOUD + EDGE points; a comma-separated list for `sweep`.
    #[arg(long, global = true)]
    capacity: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a CSV (or the synthetic dataset) and summarize it.
    Ingest { path: Option<PathBuf> },
    /// Write the query stream of the configured workload.
    GenerateWorkload,
    /// Simulate one policy.
    Run,
    /// Simulate every policy (or `--policy`) over increasing capacities.
    Sweep,
    /// Summarize a report CSV.
    Report { csv: PathBuf },
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        config.apply_text(&text)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(p) = &cli.policy {
        config.policy = p.parse()?;
    }
    if let Some(c) = &cli.capacity {
        if !matches!(cli.command, Some(Command::Sweep)) {
            config.set("capacity", c)?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn parse_capacities(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|c| {
            c.trim()
                .parse()
                .map_err(|_| config_error(format!("bad capacity `{c}`")))
        })
        .collect()
}

fn open_out(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn execute(cli: &Cli) -> Result<()> {
    let config = effective_config(cli)?;
    if cli.print_config {
        print!("{}", config.to_text());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(config_error(
            "no command given (ingest, generate-workload, run, sweep, report)",
        ));
    };
    let stdout = io::stdout();
    match command {
        Command::Ingest { path } => {
            let dataset = match path {
                Some(p) => ingest_csv(p, &IngestOptions::default())?,
                None => load_dataset(&config)?,
            };
            let domain = dataset.domain();
            let mut out = stdout.lock();
            writeln!(out, "rows       {}", dataset.rows)?;
            writeln!(out, "malformed  {}", dataset.malformed)?;
            writeln!(out, "series     {}", dataset.series_count())?;
            writeln!(out, "points     {}", dataset.points.len())?;
            writeln!(out, "fields     {}", dataset.schema.field_keys.join(","))?;
            if let Some(d) = domain {
                writeln!(out, "time range {} .. {}", d.start, d.end)?;
            }
            if let Some(p) = &cli.out {
                let mut w = open_out(p)?;
                dataset.write_csv(&mut w)?;
                w.flush()?;
            }
        }
        Command::GenerateWorkload => {
            let prep = Prepared::new(&config)?;
            match &cli.out {
                Some(p) => {
                    let mut w = open_out(p)?;
                    write_workload(&mut w, &prep.queries)?;
                    w.flush()?;
                    println!("{} queries from {} templates", prep.queries.len(), prep.templates.len());
                }
                None => write_workload(stdout.lock(), &prep.queries)?,
            }
        }
        Command::Run => {
            let prep = Prepared::new(&config)?;
            let capacity = prep.default_capacity();
            let mut log = Vec::new();
            let report = prep.run(
                config.policy,
                capacity,
                cli.out.is_some().then_some(&mut log as &mut dyn Write),
            )?;
            if let Some(dir) = &cli.out {
                write_run_outputs(dir, &report, &log)?;
            }
            print!("{}", ExperimentReport { runs: vec![report] }.summary());
        }
        Command::Sweep => {
            let prep = Prepared::new(&config)?;
            let capacities = match &cli.capacity {
                Some(list) => parse_capacities(list)?,
                None => [0.05, 0.1, 0.15, 0.2, 0.25]
                    .iter()
                    .map(|f| (f * prep.dataset_points as f64).round() as u64)
                    .collect(),
            };
            let policies: Vec<Policy> = match &cli.policy {
                Some(_) => vec![config.policy],
                None => Policy::ALL.to_vec(),
            };
            let report = sweep(&prep, &capacities, &policies)?;
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                report.write_csv(File::create(dir.join("report.csv"))?)?;
            }
            print!("{}", report.summary());
        }
        Command::Report { csv } => {
            let file = File::open(csv).map_err(|e| config_error(format!("cannot open {}: {e}", csv.display())))?;
            print!("{}", summarize_report_rows(&read_report_csv(file)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
