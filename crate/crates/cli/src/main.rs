//! `mbq`: exact analysis, learning runs, n-sweeps and reports.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mbq::harness::{
    aggregate, analyze, read_records, run_experiment, sweep, write_records, ExperimentConfig, RawConfig, RunRecord,
    WINDOW_FRACTION,
};

#[derive(Parser, Debug)]
#[command(name = "mbq", version, about = "Multi-step Q-learning with linear features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Contraction constants, fixed points, error bounds and ODE checks for a tabular config.
    Analyze {
        #[command(flatten)]
        config: ConfigArgs,
        /// Depths to analyse; defaults to the config's `n`.
        #[arg(long = "n-list", value_delimiter = ',')]
        n_list: Vec<usize>,
        /// Where to write the CSV rendering.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every seed of a config and write the metric CSV.
    Learn {
        #[command(flatten)]
        config: ConfigArgs,
        /// Overrides the config's `out`; stdout when neither is set.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// `learn` once per depth, rows tagged with `n`.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long = "n-list", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run CSVs across seeds, grouped by depth.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Where to write the long-format summary CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// `key=value`, applied after the file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut raw =
            RawConfig::from_file(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        for s in &self.set {
            raw.apply_override(s)?;
        }
        let mut config = raw
            .resolve()
            .with_context(|| format!("invalid config {}", self.config.display()))?;
        config.seed_base = seed_base()?;
        Ok(config)
    }
}

fn seed_base() -> anyhow::Result<u64> {
    match std::env::var("MBQ_SEED_BASE") {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("MBQ_SEED_BASE must be a non-negative integer, got `{v}`")),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => bail!("MBQ_SEED_BASE: {e}"),
    }
}

fn create(path: &Path) -> anyhow::Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn emit_records(out: Option<&Path>, records: &[RunRecord]) -> anyhow::Result<()> {
    match out {
        Some(p) => write_records(create(p)?, records)?,
        None => write_records(io::stdout().lock(), records)?,
    }
    let mut err = io::stderr().lock();
    for r in records {
        let n = r.n.map(|n| format!("n={n} ")).unwrap_or_default();
        writeln!(err, "{n}seed={} status={} steps={}", r.seed, r.status.name(), r.steps)?;
    }
    Ok(())
}

fn run_analyze(config: &ExperimentConfig, n_list: &[usize], out: Option<&Path>) -> anyhow::Result<()> {
    let depths = if n_list.is_empty() {
        vec![config.n]
    } else {
        n_list.to_vec()
    };
    let report = analyze(config, &depths)?;
    print!("{}", report.render_text());
    if let Some(p) = out {
        report.write_csv(create(p)?)?;
    }
    Ok(())
}

struct Curve {
    sum: f64,
    sum_sq: f64,
    count: usize,
}

/// Reads every CSV and groups records by depth. All inputs must share one
/// schema: either every file carries `n` or none does.
fn load_groups(paths: &[PathBuf]) -> anyhow::Result<BTreeMap<Option<usize>, Vec<RunRecord>>> {
    let mut groups: BTreeMap<Option<usize>, Vec<RunRecord>> = BTreeMap::new();
    let mut tagged: Option<(bool, &Path)> = None;
    for p in paths {
        let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let records = read_records(BufReader::new(file), &p.display().to_string())?;
        let has_n = records.iter().any(|r| r.n.is_some());
        match tagged {
            Some((t, first)) if t != has_n => bail!(
                "schema mismatch: {} {} an `n` column but {} {}",
                first.display(),
                if t { "has" } else { "lacks" },
                p.display(),
                if has_n { "has one" } else { "does not" }
            ),
            _ => tagged = Some((has_n, p)),
        }
        for r in records {
            groups.entry(r.n).or_default().push(r);
        }
    }
    Ok(groups)
}

fn run_report(paths: &[PathBuf], out: Option<&Path>) -> anyhow::Result<()> {
    let groups = load_groups(paths)?;
    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "{:>4}  {:<16}  {:>14}  {:>12}  {:>5}",
        "n", "metric", "mean", "std", "seeds"
    )?;
    let mut csv = match out {
        Some(p) => {
            let mut w = csv::Writer::from_writer(create(p)?);
            w.write_record(["n", "kind", "step", "metric", "mean", "std", "seeds"])?;
            Some(w)
        }
        None => None,
    };
    for (n, records) in &groups {
        let label = n.map(|n| n.to_string()).unwrap_or_default();
        let horizon = records
            .iter()
            .flat_map(|r| r.rows.iter().map(|m| m.step))
            .max()
            .unwrap_or(0);
        let summary = aggregate(records, WINDOW_FRACTION).with_context(|| match n {
            Some(n) => format!("aggregating the n = {n} group"),
            None => "aggregating runs".to_string(),
        })?;
        for s in &summary {
            writeln!(
                stdout,
                "{:>4}  {:<16}  {:>14.6}  {:>12.6}  {:>5}",
                if label.is_empty() { "-" } else { &label },
                s.metric,
                s.mean,
                s.std,
                s.seeds
            )?;
            if let Some(w) = csv.as_mut() {
                w.write_record([
                    label.clone(),
                    "terminal".into(),
                    horizon.to_string(),
                    s.metric.clone(),
                    format!("{:?}", s.mean),
                    format!("{:?}", s.std),
                    s.seeds.to_string(),
                ])?;
            }
        }
        if let Some(w) = csv.as_mut() {
            let mut curves: BTreeMap<(String, usize), Curve> = BTreeMap::new();
            for r in records {
                for m in &r.rows {
                    let c = curves.entry((m.metric.clone(), m.step)).or_insert(Curve {
                        sum: 0.0,
                        sum_sq: 0.0,
                        count: 0,
                    });
                    c.sum += m.value;
                    c.sum_sq += m.value * m.value;
                    c.count += 1;
                }
            }
            for ((metric, step), c) in curves {
                let mean = c.sum / c.count as f64;
                let std = (c.sum_sq / c.count as f64 - mean * mean).max(0.0).sqrt();
                w.write_record([
                    label.clone(),
                    "curve".into(),
                    step.to_string(),
                    metric,
                    format!("{mean:?}"),
                    format!("{std:?}"),
                    c.count.to_string(),
                ])?;
            }
        }
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Analyze { config, n_list, out } => run_analyze(&config.load()?, &n_list, out.as_deref()),
        Command::Learn { config, out } => {
            let config = config.load()?;
            let records = run_experiment(&config)?;
            emit_records(out.as_deref().or(config.out.as_deref()), &records)
        }
        Command::Sweep { config, n_list, out } => {
            let config = config.load()?;
            let records = sweep(&config, &n_list)?;
            emit_records(out.as_deref().or(config.out.as_deref()), &records)
        }
        Command::Report { csv, out } => run_report(&csv, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
