use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bignn::harness::config::{ExperimentKind, ExperimentSpec};
use bignn::harness::ingest::{load_csv, RealDataset};
use bignn::harness::results::{fit_results, load_results, save_results, summarize, write_fit_summary};
use bignn::harness::runner::{
    gamma_trends, run_denoise_bench, run_real, run_sim1, run_sim2, summarize_real, with_threads,
};
use bignn::harness::MetricsReport;
use bignn::metrics::classify_all;
use bignn::{
    load_model, pretrain_with, save_model, BigNnModel, Error, KRule, Result, RngStream,
    SubsampleSource,
};

#[derive(Parser)]
#[command(name = "bignn", version, about = "Divide-and-conquer kNN classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON experiment spec; keys override the preset
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Results CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Rate-rule bigNN over the (gamma, N) grid
    Sim1(RunArgs),
    /// Fixed-k bigNN over the (gamma, N) grid
    Sim2(RunArgs),
    /// bigNN against denoised bigNN
    DenoiseBench(RunArgs),
    /// Oracle kNN against bigNN on a CSV dataset
    Real {
        #[command(flatten)]
        run: RunArgs,
        /// Dataset CSV (label in the last column); overrides the config
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fit log-rate models to a results CSV
    FitRate {
        results: PathBuf,
        #[arg(long, default_value = "bignn")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on a labeled CSV and save it as JSON
    Train {
        data: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        gamma: f64,
        /// Fixed local k; otherwise the rate rule with --alpha
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        /// Also pretrain a denoised model with this theta
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 9)]
        repeats: usize,
        #[arg(long)]
        merge: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Classify a CSV of query points with a saved model
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Query CSV (features only, optional header)
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load_spec(args: &RunArgs, kind: ExperimentKind) -> Result<ExperimentSpec> {
    let preset = args.preset.as_deref().unwrap_or(kind.default_preset());
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::from_file(path, preset)?,
        None => ExperimentSpec::preset(preset)?,
    };
    if spec.kind != kind {
        return Err(Error::config(format!(
            "preset/config describes a {:?} experiment, not {kind:?}",
            spec.kind
        )));
    }
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(out) = &args.out {
        spec.output = Some(out.clone());
    }
    Ok(spec)
}

fn output_path(spec: &ExperimentSpec, fallback: &str) -> PathBuf {
    spec.output.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn finish(rows: &[MetricsReport], path: &Path) -> Result<()> {
    save_results(path, rows)?;
    eprintln!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn print_fits(rows: &[MetricsReport], method: &str) -> Result<()> {
    let fits = fit_results(rows, method)?;
    write_fit_summary(std::io::stdout().lock(), &fits)
}

fn run_experiment(args: &RunArgs, kind: ExperimentKind, data: Option<&PathBuf>) -> Result<()> {
    let mut spec = load_spec(args, kind)?;
    if let Some(path) = data {
        spec.dataset = Some(RealDataset::new(path));
    }
    spec.validate()?;
    let rows = with_threads(args.threads, || match kind {
        ExperimentKind::Sim1 => run_sim1(&spec),
        ExperimentKind::Sim2 => run_sim2(&spec),
        ExperimentKind::DenoiseBench => run_denoise_bench(&spec),
        ExperimentKind::Real => run_real(&spec),
    })??;
    let fallback = match kind {
        ExperimentKind::Sim1 => "sim1_results.csv",
        ExperimentKind::Sim2 => "sim2_results.csv",
        ExperimentKind::DenoiseBench => "denoise_results.csv",
        ExperimentKind::Real => "real_results.csv",
    };
    finish(&rows, &output_path(&spec, fallback))?;

    match kind {
        ExperimentKind::Sim1 => {
            print_fits(&rows, "bignn")?;
            if let Some(alpha) = spec.alpha {
                let target = -alpha * (1.0 + spec.beta) / (2.0 * alpha + 1.0);
                println!("# target regret slope {target:.4} (alpha {alpha}, beta {})", spec.beta);
            }
        }
        ExperimentKind::Sim2 => {
            println!("N,gamma_slope,spearman,p_value");
            for t in gamma_trends(&rows, "bignn")? {
                let slope = t.slope.map(|s| format!("{s:.6}")).unwrap_or_else(|| "NA".into());
                println!("{},{slope},{:.6},{:.6}", t.n, t.spearman, t.p_value);
            }
        }
        ExperimentKind::DenoiseBench => {
            println!("method,N,gamma,theta,I,mean_regret,mean_predict_ms");
            for c in summarize(&rows) {
                println!(
                    "{},{},{},{},{},{:.6},{:.3}",
                    c.method,
                    c.n,
                    c.gamma,
                    c.theta.map(|t| t.to_string()).unwrap_or_default(),
                    c.repeats.map(|i| i.to_string()).unwrap_or_default(),
                    c.mean_regret.unwrap_or(f64::NAN),
                    c.mean_predict_ms
                );
            }
        }
        ExperimentKind::Real => {
            println!("gamma,oracle_risk,bignn_risk,oracle_cis,bignn_cis,speedup");
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            for s in summarize_real(&rows)? {
                println!(
                    "{},{:.6},{:.6},{},{},{:.2}",
                    s.gamma,
                    s.oracle_risk,
                    s.bignn_risk,
                    fmt(s.oracle_cis),
                    fmt(s.bignn_cis),
                    s.speedup
                );
            }
        }
    }
    Ok(())
}

fn fit_rate_cmd(results: &Path, method: &str, out: Option<&PathBuf>) -> Result<()> {
    let rows = load_results(results)?;
    let fits = fit_results(&rows, method)?;
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            write_fit_summary(file, &fits)
        }
        None => write_fit_summary(std::io::stdout().lock(), &fits),
    }
}

/// Reads a features-only CSV; a first row that does not parse as numbers is a header.
fn read_queries(path: &Path, dim: usize) -> Result<bignn::Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut features = Vec::new();
    let mut seen = 0;
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Vec<Option<f64>> = cells.iter().map(|c| c.parse().ok()).collect();
        if seen == 0 && parsed.iter().all(Option::is_none) {
            seen += 1;
            continue;
        }
        seen += 1;
        if cells.len() != dim {
            return Err(Error::data(format!(
                "{}: line {} has {} columns, model expects {dim}",
                path.display(),
                line_no + 1,
                cells.len()
            )));
        }
        for (col, (cell, v)) in cells.iter().zip(parsed).enumerate() {
            let v = v.filter(|x| x.is_finite()).ok_or_else(|| {
                Error::data(format!(
                    "{}: line {}, column {}: {cell:?} is not a finite number",
                    path.display(),
                    line_no + 1,
                    col + 1
                ))
            })?;
            features.push(v);
        }
    }
    let n = features.len() / dim;
    bignn::Dataset::new(dim, features, vec![0; n])
}

fn predict_cmd(model: &Path, input: &Path, out: Option<&PathBuf>, threads: Option<usize>) -> Result<()> {
    let model = load_model(model)?;
    let queries = read_queries(input, model.dim())?;
    let labels = with_threads(threads, || classify_all(&model, &queries))??;
    let mut text = String::from("label\n");
    for l in labels {
        text.push_str(&format!("{l}\n"));
    }
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    data: &Path,
    gamma: f64,
    k: Option<usize>,
    alpha: f64,
    theta: Option<f64>,
    repeats: usize,
    merge: bool,
    seed: u64,
    out: &Path,
    threads: Option<usize>,
) -> Result<()> {
    let dataset = load_csv(&RealDataset::new(data))?;
    let rule = match k {
        Some(k) => KRule::Fixed { k },
        None => KRule::Theorem { alpha, k_o: 1.0 },
    };
    with_threads(threads, || {
        let mut rng = RngStream::new(seed, "train", 0);
        let model = BigNnModel::train(&dataset, gamma, rule, &mut rng)
            .map_err(|e| match e {
                Error::Parameter(m) => Error::Config(m),
                other => other,
            })?;
        let source = if merge { SubsampleSource::MergeTraining } else { SubsampleSource::Fresh };
        let denoised = theta
            .map(|t| {
                let mut rng = RngStream::new(seed, "pretrain", 0);
                pretrain_with(&model, &dataset, t, repeats, source, &mut rng)
            })
            .transpose()?;
        save_model(out, &model, denoised.as_ref())?;
        eprintln!(
            "trained s={} k={} on {} points; wrote {}",
            model.s(),
            model.k_local(),
            dataset.len(),
            out.display()
        );
        Ok(())
    })?
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sim1(args) => run_experiment(&args, ExperimentKind::Sim1, None),
        Command::Sim2(args) => run_experiment(&args, ExperimentKind::Sim2, None),
        Command::DenoiseBench(args) => run_experiment(&args, ExperimentKind::DenoiseBench, None),
        Command::Real { run, data } => run_experiment(&run, ExperimentKind::Real, data.as_ref()),
        Command::FitRate { results, method, out } => fit_rate_cmd(&results, &method, out.as_ref()),
        Command::Train { data, gamma, k, alpha, theta, repeats, merge, seed, out, threads } => {
            train_cmd(&data, gamma, k, alpha, theta, repeats, merge, seed, &out, threads)
        }
        Command::Predict { model, input, out, threads } => predict_cmd(&model, &input, out.as_ref(), threads),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
