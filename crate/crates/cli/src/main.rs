use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use env_logger::Env;
use log::{info, warn};

use miscale::analytic::{gen_ising, gen_repetitive, IsingParams, RepetitiveParams};
use miscale::audit::{audit, ingest_splits, log_lag_grid, TextUnit};
use miscale::benchmark::{benchmark_estimator, write_benchmark_csv, BenchmarkConfig};
use miscale::copula::{CopulaSampler, CovarianceMode, ToeplitzCovariance};
use miscale::estimation::{auto_mi_curve, auto_mi_curve_with_errors, Estimator, MiCurve};
use miscale::fit::{compare_models, fit_exponential, fit_powerlaw, DEFAULT_THRESHOLD};
use miscale::format::sig;
use miscale::linear_rnn::{mi_curve_linear_rnn, poles, sample_linear_rnn, LinearRnnParams};
use miscale::sequence::Corpus;
use miscale::Error;

#[derive(Parser, Debug)]
#[command(
    name = "miscale",
    version,
    about = "Mutual-information scaling toolkit"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Binary sequences from a thresholded power-law Gaussian copula
    GenerateCopula(CopulaArgs),
    /// Binary pairs `01`/`10` with a lag-independent MI
    GenerateRepetitive(RepetitiveArgs),
    /// Nearest-neighbour Ising chain
    GenerateIsing(IsingArgs),
    /// Auto-MI curve of a corpus file
    EstimateMi(EstimateArgs),
    /// Exponential / power-law fits of an MI curve
    Fit(FitArgs),
    /// Generate, estimate and refit copula corpora for a list of powers
    BenchmarkEstimator(BenchmarkArgs),
    /// Exact MI curve and pole analysis of a linear RNN
    LinrnnAnalyze(LinrnnAnalyzeArgs),
    /// Monte Carlo output sequences of a linear RNN
    LinrnnSample(LinrnnSampleArgs),
    /// Character-level MI profiles of text splits
    AuditDataset(AuditArgs),
}

#[derive(Args, Debug)]
struct CopulaArgs {
    #[arg(long, default_value_t = 0.1)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.4)]
    power: f64,
    #[arg(long, default_value_t = 512)]
    length: usize,
    #[arg(long, default_value_t = 10000)]
    sequences: usize,
    /// `approx` or `exact`
    #[arg(long, default_value = "approx")]
    mode: CovarianceMode,
    #[arg(long)]
    seed: u64,
    /// Output corpus file (default: stdout)
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RepetitiveArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 1_000_000)]
    length: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IsingArgs {
    /// βJ; negative values align neighbours
    #[arg(long = "beta-j", allow_negative_numbers = true)]
    beta_j: f64,
    #[arg(long, default_value_t = 1_000_000)]
    length: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct LagArgs {
    /// Explicit lags: comma-separated values or ranges, e.g. `1-16,32,64`
    #[arg(long, conflicts_with = "lag_grid")]
    lags: Option<String>,
    /// Log-spaced lags `MIN:MAX:POINTS_PER_DECADE`
    #[arg(long)]
    lag_grid: Option<String>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Corpus file
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    lags: LagArgs,
    /// `grassberger` or `plugin`
    #[arg(long, default_value = "grassberger")]
    estimator: Estimator,
    /// Also write `tau,se` jackknife standard errors with this many blocks
    #[arg(long, requires = "se_out")]
    jackknife_blocks: Option<usize>,
    #[arg(long)]
    se_out: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// MI curve CSV
    #[arg(long, short)]
    input: PathBuf,
    /// `exponential`, `powerlaw` or `compare`
    #[arg(long, default_value = "compare")]
    model: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    min_lag: Option<u64>,
    #[arg(long)]
    max_lag: Option<u64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Comma-separated powers in (0, 2)
    #[arg(long, default_value = "0.2,0.5,1.0")]
    gammas: String,
    #[arg(long, default_value_t = 2000)]
    sequences: usize,
    #[arg(long, default_value_t = 1000)]
    length: usize,
    #[arg(long, default_value_t = 0.1)]
    amplitude: f64,
    #[arg(long, default_value = "exact")]
    mode: CovarianceMode,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Sequence groups for the jackknife interval on the fitted power
    #[arg(long, default_value_t = 20)]
    jackknife_groups: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LinrnnAnalyzeArgs {
    /// Key-value parameter file
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 200)]
    t_max: usize,
    /// MI curve CSV (default: not written)
    #[arg(long)]
    curve_out: Option<PathBuf>,
    /// Pole report (default: stdout)
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LinrnnSampleArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 1000)]
    sequences: usize,
    #[arg(long, default_value_t = 100)]
    t_max: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Extra split as `LABEL=PATH`; repeatable
    #[arg(long = "split")]
    splits: Vec<String>,
    /// `char` (Unicode scalar values) or `byte`
    #[arg(long, default_value = "char")]
    unit: TextUnit,
    #[arg(long, default_value = "grassberger")]
    estimator: Estimator,
    #[command(flatten)]
    lags: LagArgs,
    /// Directory for `report.txt` and one `<label>_mi.csv` per split
    #[arg(long)]
    out_dir: PathBuf,
}

/// A failure with its process exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parameter { .. } => 2,
            Error::Numerical(_) => 4,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::from(Error::from(e))
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn open_input(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Failure {
        code: 3,
        message: format!("cannot open {}: {e}", path.display()),
    })
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| Failure {
                code: 3,
                message: format!("cannot create {}: {e}", p.display()),
            })?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_lag_list(spec: &str) -> CliResult<Vec<u64>> {
    let mut lags = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || usage(format!("invalid lag `{part}`"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) =
                    (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                lags.extend(a..=b);
            }
            None => lags.push(part.parse().map_err(|_| bad())?),
        }
    }
    if lags.is_empty() {
        return Err(usage("no lags given"));
    }
    Ok(lags)
}

fn parse_grid(spec: &str) -> CliResult<Vec<u64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || {
        usage(format!(
            "lag grid must be MIN:MAX:POINTS_PER_DECADE, got `{spec}`"
        ))
    };
    if parts.len() != 3 {
        return Err(bad());
    }
    let min: u64 = parts[0].parse().map_err(|_| bad())?;
    let max: u64 = parts[1].parse().map_err(|_| bad())?;
    let ppd: u32 = parts[2].parse().map_err(|_| bad())?;
    Ok(log_lag_grid(min, max, ppd)?)
}

impl LagArgs {
    /// Explicit lags, a grid, or a default grid up to `default_max`.
    fn resolve(&self, default_max: u64) -> CliResult<Vec<u64>> {
        match (&self.lags, &self.lag_grid) {
            (Some(list), _) => parse_lag_list(list),
            (None, Some(grid)) => parse_grid(grid),
            (None, None) if default_max >= 2 => Ok(log_lag_grid(1, default_max, 10)?),
            (None, None) => Ok(vec![1]),
        }
    }
}

fn write_corpus(corpus: &Corpus, out: Option<&Path>) -> CliResult<()> {
    let mut w = output(out)?;
    corpus.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

fn generate_copula(args: CopulaArgs) -> CliResult<()> {
    let cov = ToeplitzCovariance::power_law(args.amplitude, args.power, args.length, args.mode)?;
    let sampler = CopulaSampler::new(&cov)?;
    match sampler.repair() {
        Some(r) => warn!(
            "PSD repair triggered: min eigenvalue {:e}, {} eigenvalues clipped",
            r.min_eigenvalue, r.clipped
        ),
        None => info!("PSD repair not needed (Cholesky succeeded)"),
    }
    let corpus = sampler.sample(args.sequences, args.seed)?;
    write_corpus(&corpus, args.out.as_deref())
}

fn generate_repetitive(args: RepetitiveArgs) -> CliResult<()> {
    let seq = gen_repetitive(
        RepetitiveParams {
            p: args.p,
            length: args.length,
        },
        args.seed,
    )?;
    write_corpus(&Corpus::single(seq, "repetitive"), args.out.as_deref())
}

fn generate_ising(args: IsingArgs) -> CliResult<()> {
    let seq = gen_ising(
        IsingParams {
            coupling: args.beta_j,
            length: args.length,
        },
        args.seed,
    )?;
    write_corpus(&Corpus::single(seq, "ising"), args.out.as_deref())
}

fn write_curve(curve: &MiCurve, out: Option<&Path>) -> CliResult<()> {
    let mut w = output(out)?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn estimate_mi(args: EstimateArgs) -> CliResult<()> {
    let label = args.input.display().to_string();
    let corpus = Corpus::read_from(open_input(&args.input)?, label)?;
    let default_max = (corpus.max_len() as u64).saturating_sub(1).min(1000);
    let lags = args.lags.resolve(default_max)?;
    let curve = match (args.jackknife_blocks, &args.se_out) {
        (Some(blocks), Some(se_path)) => {
            let (curve, errors) =
                auto_mi_curve_with_errors(&corpus, &lags, args.estimator, blocks)?;
            let mut w = output(Some(se_path))?;
            writeln!(w, "tau,se")?;
            for (p, se) in curve.points().iter().zip(&errors) {
                writeln!(w, "{},{}", p.lag, sig(*se, 10))?;
            }
            w.flush()?;
            curve
        }
        (None, Some(_)) => return Err(usage("--se-out requires --jackknife-blocks")),
        _ => auto_mi_curve(&corpus, &lags, args.estimator)?,
    };
    write_curve(&curve, args.out.as_deref())
}

fn fit(args: FitArgs) -> CliResult<()> {
    let mut curve = MiCurve::read_csv(open_input(&args.input)?)?;
    if args.min_lag.is_some() || args.max_lag.is_some() {
        curve = curve.restrict(args.min_lag.unwrap_or(1), args.max_lag.unwrap_or(u64::MAX));
    }
    let mut w = output(args.out.as_deref())?;
    match args.model.as_str() {
        "exponential" => write!(
            w,
            "{}",
            fit_exponential(&curve, args.threshold)?.to_key_value()
        )?,
        "powerlaw" => write!(
            w,
            "{}",
            fit_powerlaw(&curve, args.threshold)?.to_key_value()
        )?,
        "compare" => {
            let cmp = compare_models(&curve, args.threshold)?;
            writeln!(w, "choice={}", cmp.choice)?;
            for line in cmp.exponential.to_key_value().lines() {
                writeln!(w, "exponential.{line}")?;
            }
            for line in cmp.powerlaw.to_key_value().lines() {
                writeln!(w, "powerlaw.{line}")?;
            }
        }
        other => return Err(usage(format!("unknown model `{other}`"))),
    }
    w.flush()?;
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> CliResult<()> {
    let gammas = args
        .gammas
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| usage(format!("invalid power `{s}`")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if gammas.is_empty() {
        return Err(usage("--gammas must list at least one power"));
    }
    let mut config = BenchmarkConfig::new(gammas, args.seed);
    config.n_seqs = args.sequences;
    config.length = args.length;
    config.amplitude = args.amplitude;
    config.mode = args.mode;
    config.threshold = args.threshold;
    config.jackknife_groups = args.jackknife_groups;
    let rows = benchmark_estimator(&config)?;
    let mut w = output(args.out.as_deref())?;
    write_benchmark_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn read_params(path: &Path) -> CliResult<LinearRnnParams> {
    Ok(LinearRnnParams::read_from(open_input(path)?)?)
}

fn linrnn_analyze(args: LinrnnAnalyzeArgs) -> CliResult<()> {
    let params = read_params(&args.params)?;
    let report = poles(&params)?;
    let curve = mi_curve_linear_rnn(&params, args.t_max)?;
    if let Some(path) = &args.curve_out {
        write_curve(&curve.curve, Some(path))?;
    }
    let mut w = output(args.out.as_deref())?;
    write!(w, "{}", report.to_key_value())?;
    if let Some(msg) = &curve.warning {
        writeln!(w, "warning={msg}")?;
    }
    w.flush()?;
    Ok(())
}

fn linrnn_sample(args: LinrnnSampleArgs) -> CliResult<()> {
    let params = read_params(&args.params)?;
    let samples = sample_linear_rnn(&params, args.sequences, args.t_max, args.seed)?;
    let mut w = output(args.out.as_deref())?;
    samples.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn audit_dataset(args: AuditArgs) -> CliResult<()> {
    let mut named: Vec<(String, PathBuf)> = vec![("train".into(), args.train.clone())];
    if let Some(valid) = &args.valid {
        named.push(("valid".into(), valid.clone()));
    }
    for spec in &args.splits {
        let (label, path) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--split expects LABEL=PATH, got `{spec}`")))?;
        if label.is_empty() || named.iter().any(|(l, _)| l == label) {
            return Err(usage(format!("split label `{label}` is empty or repeated")));
        }
        named.push((label.to_string(), PathBuf::from(path)));
    }
    if named.len() < 2 {
        return Err(usage("audit needs --valid or at least one --split"));
    }
    let texts = named
        .iter()
        .map(|(_, p)| {
            fs::read(p).map_err(|e| Failure {
                code: 3,
                message: format!("cannot read {}: {e}", p.display()),
            })
        })
        .collect::<CliResult<Vec<Vec<u8>>>>()?;
    let labelled: Vec<(&str, &[u8])> = named
        .iter()
        .zip(&texts)
        .map(|((l, _), t)| (l.as_str(), t.as_slice()))
        .collect();
    let (splits, vocab) = ingest_splits(&labelled, args.unit)?;
    info!("vocabulary: {} symbols ({})", vocab.len(), args.unit);
    let default_max = splits
        .iter()
        .map(|(_, s)| s.len() as u64)
        .max()
        .unwrap_or(2)
        .saturating_sub(1)
        .min(1000);
    let lags = args.lags.resolve(default_max)?;
    let others: Vec<(&str, &_)> = splits[1..].iter().map(|(l, s)| (l.as_str(), s)).collect();
    let report = audit(
        (splits[0].0.as_str(), &splits[0].1),
        &others,
        &lags,
        args.estimator,
    )?;
    fs::create_dir_all(&args.out_dir)?;
    for split in &report.splits {
        write_curve(
            &split.curve,
            Some(&args.out_dir.join(format!("{}_mi.csv", split.label))),
        )?;
    }
    fs::write(args.out_dir.join("report.txt"), report.to_key_value())?;
    if report.flag {
        warn!(
            "non-uniform splits: divergence {} at lag {} of `{}`",
            sig(report.divergence, 6),
            report.divergence_at.1,
            report.divergence_at.0
        );
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                code: 4,
                message: e.to_string(),
            })?;
    }
    match cli.command {
        Command::GenerateCopula(a) => generate_copula(a),
        Command::GenerateRepetitive(a) => generate_repetitive(a),
        Command::GenerateIsing(a) => generate_ising(a),
        Command::EstimateMi(a) => estimate_mi(a),
        Command::Fit(a) => fit(a),
        Command::BenchmarkEstimator(a) => benchmark(a),
        Command::LinrnnAnalyze(a) => linrnn_analyze(a),
        Command::LinrnnSample(a) => linrnn_sample(a),
        Command::AuditDataset(a) => audit_dataset(a),
    }
}

fn main() -> ExitCode {
    env_logger::init_from_env(Env::default().filter_or("MISCALE_LOG", "info"));
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
