use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sfda::bench::{
    bench_markdown, run_bench, summarize_bench, write_bench_csv, BenchConfig, BenchMethod,
    BenchScenario,
};
use sfda::classifier::classify_batch;
use sfda::dataset::read_feature_rows;
use sfda::diagnostics::{
    build_theory, consistency_experiment, identity_report, write_trend_table, TrendConfig,
    TrendGenerator,
};
use sfda::features::{featurize, read_multichannel_csv, FeatureConfig, WaveletFamily};
use sfda::model_io::{read_model, write_model};
use sfda::model_selection::{cross_validate, write_cv_table, TuningGrid};
use sfda::simgen::{simulate, SimModel, SimScenario, TrueCovariance};
use sfda::{
    fit, DiscriminantModel, ErrorKind, FitParams, Kappa, LabeledDataset, Result, SfdaError, Variant,
};

#[derive(Parser)]
#[command(name = "sfda", version, about = "Sparse Fisher discriminant analysis")]
struct Cli {
    /// Worker thread cap; defaults to all cores.
    #[arg(long, global = true, env = "SFDA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model with fixed tuning parameters.
    Fit(FitArgs),
    /// Classify the rows of a CSV file with a saved model.
    Predict(PredictArgs),
    /// Cross-validate a tuning grid and optionally fit the selected model.
    Cv(CvArgs),
    /// Generate a simulated train/test split.
    Simulate(SimulateArgs),
    /// Run replicated simulation benchmarks.
    Bench(BenchArgs),
    /// Turn multichannel curves into wavelet features.
    Featurize(FeaturizeArgs),
    /// Run the consistency experiment and report population identities.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Labeled training CSV.
    #[arg(long)]
    train: PathBuf,
    /// Output model file (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    tau: f64,
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    /// Threshold as a fraction of ‖B̂α̂‖₁.
    #[arg(long, default_value_t = 0.0, conflicts_with = "kappa_absolute")]
    kappa: f64,
    /// Absolute threshold level.
    #[arg(long)]
    kappa_absolute: Option<f64>,
    #[arg(long, default_value = "thresholded")]
    variant: Variant,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV in the training layout; the label column is ignored.
    #[arg(long)]
    input: PathBuf,
    /// Output CSV with columns `row,predicted`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    train: PathBuf,
    /// Output CSV with one row per grid point.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the fold assignment.
    #[arg(long)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Threshold levels as fractions of ‖B̂α̂‖₁.
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value = "thresholded")]
    variant: Variant,
    /// Write the selected parameters as JSON.
    #[arg(long)]
    params_out: Option<PathBuf>,
    /// Fit the selected parameters on the full training set and save the model.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: SimModel,
    #[arg(long)]
    sigma2: f64,
    #[arg(long)]
    seed: u64,
    /// Seed for the class means; defaults to `--seed`.
    #[arg(long)]
    mean_seed: Option<u64>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n_total: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    /// Directory receiving train.csv, test.csv and truth.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, requires = "sigma2")]
    model: Option<SimModel>,
    #[arg(long, requires = "model")]
    sigma2: Option<f64>,
    /// Additional scenarios as `model:sigma2`, e.g. `sim3:3`.
    #[arg(long = "scenario", value_parser = parse_scenario)]
    scenarios: Vec<BenchScenario>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    /// Comma-separated subset of sfda-threshold, sfda-unthresholded,
    /// nearest-centroid, ridge-lda.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<BenchMethod>>,
    /// Markdown table; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// CSV rows of `label, channel 1 values, channel 2 values, ...`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    channels: usize,
    #[arg(long, default_value_t = 64)]
    coeffs: usize,
    #[arg(long, default_value = "haar")]
    wavelet: WaveletFamily,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Seed for the class means of the generator.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, value_delimiter = ',', default_value = "100,400,1600")]
    n: Vec<usize>,
    /// Number of replicate seeds per sample size.
    #[arg(long, default_value_t = 20)]
    reps: u64,
    #[arg(long, default_value_t = 1.0)]
    tau_scale: f64,
    #[arg(long, default_value_t = 0.3)]
    lambda: f64,
    #[arg(long, default_value_t = 0.01)]
    kappa: f64,
    /// Trend table CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scenario(s: &str) -> std::result::Result<BenchScenario, String> {
    let (model, sigma2) = s
        .split_once(':')
        .ok_or_else(|| format!("expected model:sigma2, got {s:?}"))?;
    Ok(BenchScenario {
        model: model.parse().map_err(|e: SfdaError| e.to_string())?,
        sigma2: sigma2
            .parse()
            .map_err(|_| format!("bad noise level {sigma2:?}"))?,
    })
}

/// Tracks files written by a command so they can be removed on failure.
#[derive(Default)]
struct Outputs {
    paths: Vec<PathBuf>,
}

impl Outputs {
    fn create(&mut self, path: &Path) -> Result<BufWriter<File>> {
        let file = File::create(path)
            .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        self.paths.push(path.to_path_buf());
        Ok(BufWriter::new(file))
    }

    fn discard(&self) {
        for p in &self.paths {
            let _ = fs::remove_file(p);
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn distinct(input: &Path, output: &Path) -> Result<()> {
    let same = match (fs::canonicalize(input), fs::canonicalize(output)) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == output,
    };
    if same {
        return Err(SfdaError::InvalidParameter(format!(
            "output {} would overwrite an input",
            output.display()
        )));
    }
    Ok(())
}

fn write_json<T: Serialize>(out: &mut Outputs, path: &Path, value: &T) -> Result<()> {
    let mut w = out.create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn save(out: &mut Outputs, path: &Path, model: &DiscriminantModel) -> Result<()> {
    let mut w = out.create(path)?;
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run_fit(a: &FitArgs, out: &mut Outputs) -> Result<()> {
    distinct(&a.train, &a.out)?;
    let data = LabeledDataset::read_csv(open(&a.train)?)?;
    let kappa = match a.kappa_absolute {
        Some(k) => Kappa::Absolute(k),
        None => Kappa::Relative(a.kappa),
    };
    let model = fit(&data, &FitParams::new(a.tau, a.lambda, kappa, a.variant)?)?;
    save(out, &a.out, &model)?;
    eprintln!(
        "fitted {} components on {} observations; {} nonzero coefficients",
        model.k() - 1,
        data.n(),
        model.support_size()
    );
    Ok(())
}

fn run_predict(a: &PredictArgs, out: &mut Outputs) -> Result<()> {
    distinct(&a.input, &a.out)?;
    distinct(&a.model, &a.out)?;
    let model = read_model(open(&a.model)?)?;
    let x = read_feature_rows(open(&a.input)?)?;
    let pred = classify_batch(&model, &x)?;
    let mut w = out.create(&a.out)?;
    writeln!(w, "row,predicted")?;
    for (i, label) in pred.iter().enumerate() {
        writeln!(w, "{i},{label}")?;
    }
    w.flush()?;
    Ok(())
}

fn run_cv(a: &CvArgs, out: &mut Outputs) -> Result<()> {
    for p in std::iter::once(&a.out)
        .chain(&a.params_out)
        .chain(&a.model_out)
    {
        distinct(&a.train, p)?;
    }
    let data = LabeledDataset::read_csv(open(&a.train)?)?;
    let defaults = TuningGrid::default();
    let grid = TuningGrid {
        taus: a.taus.clone().unwrap_or(defaults.taus),
        lambdas: a.lambdas.clone().unwrap_or(defaults.lambdas),
        kappa_factors: a.kappas.clone().unwrap_or(defaults.kappa_factors),
        folds: a.folds,
        seed: a.seed,
    };
    let (params, table) = cross_validate(&data, &grid, a.variant)?;
    let mut w = out.create(&a.out)?;
    write_cv_table(&table, &mut w)?;
    w.flush()?;
    if let Some(path) = &a.params_out {
        write_json(out, path, &params)?;
    }
    if let Some(path) = &a.model_out {
        let model = fit(&data, &params)?;
        save(out, path, &model)?;
    }
    let kappa = match params.kappa {
        Kappa::Absolute(k) | Kappa::Relative(k) => k,
    };
    println!(
        "selected tau={} lambda={} kappa={}",
        params.penalty.tau, params.penalty.lambda, kappa
    );
    Ok(())
}

#[derive(Serialize)]
struct TruthDocument<'a> {
    scenario: &'a SimScenario,
    signal_features: &'a [usize],
    notes: &'a str,
    covariance: &'static str,
    true_means: Vec<Vec<f64>>,
}

fn run_simulate(a: &SimulateArgs, out: &mut Outputs) -> Result<()> {
    let mut scn = SimScenario::new(a.model, a.sigma2, a.seed);
    scn.mean_seed = a.mean_seed.unwrap_or(a.seed);
    if let Some(p) = a.p {
        scn.p = p;
    }
    if let Some(n) = a.n_total {
        scn.n_total = n;
    }
    if let Some(n) = a.n_train {
        scn.n_train = n;
    }
    scn.validate()?;
    let (train, test, truth) = simulate(&scn)?;
    fs::create_dir_all(&a.out_dir)?;
    for (name, data) in [("train.csv", &train), ("test.csv", &test)] {
        let mut w = out.create(&a.out_dir.join(name))?;
        data.write_csv(&mut w)?;
        w.flush()?;
    }
    let doc = TruthDocument {
        scenario: &scn,
        signal_features: &truth.signal_features,
        notes: &truth.notes,
        covariance: match truth.true_cov {
            TrueCovariance::Common(_) => "common",
            TrueCovariance::PerClass(_) => "per-class",
        },
        true_means: truth
            .true_means
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
    };
    write_json(out, &a.out_dir.join("truth.json"), &doc)
}

fn run_bench_cmd(a: &BenchArgs, out: &mut Outputs) -> Result<()> {
    let mut scenarios = Vec::new();
    if let (Some(model), Some(sigma2)) = (a.model, a.sigma2) {
        scenarios.push(BenchScenario { model, sigma2 });
    }
    scenarios.extend(a.scenarios.iter().copied());
    if scenarios.is_empty() {
        return Err(SfdaError::InvalidParameter(
            "give --model with --sigma2, or at least one --scenario".into(),
        ));
    }
    let mut cfg = BenchConfig::new(scenarios, a.reps, a.seed);
    if let Some(methods) = &a.methods {
        cfg.methods = methods.clone();
    }
    let rows = summarize_bench(&run_bench(&cfg)?);
    let table = bench_markdown(&rows);
    match &a.out {
        Some(path) => {
            let mut w = out.create(path)?;
            w.write_all(table.as_bytes())?;
            w.flush()?;
        }
        None => print!("{table}"),
    }
    if let Some(path) = &a.csv {
        let mut w = out.create(path)?;
        write_bench_csv(&rows, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn run_featurize(a: &FeaturizeArgs, out: &mut Outputs) -> Result<()> {
    distinct(&a.input, &a.out)?;
    let records = read_multichannel_csv(open(&a.input)?, a.channels)?;
    let cfg = FeatureConfig {
        n_coeffs: a.coeffs,
        family: a.wavelet,
    };
    let mut w = out.create(&a.out)?;
    let width = a.channels * a.coeffs;
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((1..=width).map(|j| format!("f{j}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (label, rec) in &records {
        let feats = featurize(rec, &cfg)?;
        write!(w, "{label}")?;
        for v in feats {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    eprintln!(
        "wrote {} records with {} features ({:?} wavelet)",
        records.len(),
        width,
        a.wavelet
    );
    Ok(())
}

fn run_diagnose(a: &DiagnoseArgs, out: &mut Outputs) -> Result<()> {
    let generator = TrendGenerator {
        p: a.p,
        sigma2: a.sigma2,
        mean_seed: a.seed,
    };
    let (means, sigma) = generator.truth()?;
    let ctx = build_theory(&sigma, &means)?;
    let ids = identity_report(&ctx)?;
    println!("gamma_orthonormality={:e}", ids.gamma_orthonormality);
    println!("eigen_residual={:e}", ids.eigen_residual);
    println!("metric_residual={:e}", ids.metric_residual);
    println!("lambda_p={}", ctx.lambda_p);
    let cfg = TrendConfig {
        generator,
        n_list: a.n.clone(),
        seeds: (0..a.reps).collect(),
        tau_scale: a.tau_scale,
        lambda: a.lambda,
        kappa_factor: a.kappa,
    };
    let rows = consistency_experiment(&cfg)?;
    match &a.out {
        Some(path) => {
            let mut w = out.create(path)?;
            write_trend_table(&rows, &mut w)?;
            w.flush()?;
        }
        None => write_trend_table(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: &Cli, out: &mut Outputs) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(SfdaError::InvalidParameter(
                "--threads must be positive".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SfdaError::InvalidParameter(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Fit(a) => run_fit(a, out),
        Command::Predict(a) => run_predict(a, out),
        Command::Cv(a) => run_cv(a, out),
        Command::Simulate(a) => run_simulate(a, out),
        Command::Bench(a) => run_bench_cmd(a, out),
        Command::Featurize(a) => run_featurize(a, out),
        Command::Diagnose(a) => run_diagnose(a, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = Outputs::default();
    match run(&cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            out.discard();
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Convergence => 3,
                ErrorKind::Io => 4,
            })
        }
    }
}
