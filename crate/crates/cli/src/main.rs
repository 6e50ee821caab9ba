//! Command line driver: dataset preparation, training, feature extraction,
//! decoding and leave-one-subject-out evaluation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eegfuse::data::{import_csv, preprocess_store, synth_dataset, Corpus, PreprocConfig, Store, SynthSpec};
use eegfuse::eval::{
    decode_prepared, encode_segments, fold_from_table, loocv_folds_for, paper_table, run_experiment, sweep, write_predictions,
    write_timing_csv, DecoderKind, EvalReport, ExperimentConfig, ExperimentOutput, FeatureSource, Normalization, PreparedFolds,
    SweepGrid,
};
use eegfuse::features::{bands_below_nyquist, extract_all, FeatureTable};
use eegfuse::model::{Checkpoint, Segment, Variant};
use eegfuse::trainer::{fit_observed, TrainConfig};
use eegfuse::{Error, Result, Scalar};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "eegfuse", version, about = "Unsupervised EEG feature learning and hypergraph decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus with a planted class signal.
    Synth(SynthArgs),
    /// Filter, re-reference, resample and re-segment an existing store.
    Preprocess(PreprocessArgs),
    /// Build a store from a directory of per-trial CSV files.
    ImportCsv(ImportArgs),
    /// Train one network and save a checkpoint.
    Train(TrainArgs),
    /// Write per-segment features of a store.
    Extract(ExtractArgs),
    /// Decode one held-out subject from a feature file.
    Decode(DecodeArgs),
    /// Full leave-one-subject-out evaluation.
    Evaluate(EvaluateArgs),
    /// Repeat the evaluation over input size, κ or η.
    Sweep(SweepArgs),
    /// Render saved reports as a comparison table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DTypeArg {
    F32,
    F64,
}

/// Settings shared by every command that trains or decodes. Values in a
/// `--config` JSON file take precedence over flags.
#[derive(Args, Clone)]
struct Shared {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "cnn_rnn_gan")]
    variant: String,
    #[arg(long, default_value = "fusenet")]
    features: String,
    #[arg(long, default_value = "hypergraph")]
    decoder: String,
    #[arg(long, default_value_t = 5)]
    kappa: usize,
    #[arg(long, default_value_t = 10.0)]
    eta: f64,
    /// Code size; the BiGRU runs at half this width per direction.
    #[arg(long, default_value_t = 64)]
    latent: usize,
    /// Weight of the L1 reconstruction term in the generator loss.
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    vote_per_trial: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Temporal filters of the first convolution.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long, value_parser = ["none", "global", "per-subject"])]
    normalization: Option<String>,
    /// Label dimensions to decode (repeatable); all when absent.
    #[arg(long = "dimension")]
    dimensions: Vec<String>,
    #[arg(long)]
    macro_f1: bool,
    #[arg(long)]
    shuffle_labels: bool,
    #[arg(long, value_enum, default_value = "f32")]
    dtype: DTypeArg,
    /// JSON experiment configuration; its fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    subjects: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 30)]
    segments: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 64)]
    rate: usize,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FilterArgs {
    /// High-pass edge in Hz.
    #[arg(long, default_value_t = 4.0)]
    low_hz: f64,
    /// Low-pass edge in Hz.
    #[arg(long, default_value_t = 45.0)]
    high_hz: f64,
    #[arg(long)]
    notch_hz: Option<f64>,
    #[arg(long)]
    no_bandpass: bool,
    #[arg(long)]
    no_car: bool,
    #[arg(long)]
    target_rate: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    segment_seconds: f64,
    #[arg(long, default_value_t = 6)]
    filter_order: usize,
}

impl FilterArgs {
    fn config(&self) -> PreprocConfig {
        PreprocConfig {
            low_hz: (!self.no_bandpass).then_some(self.low_hz),
            high_hz: (!self.no_bandpass).then_some(self.high_hz),
            notch_hz: self.notch_hz,
            common_average: !self.no_car,
            target_rate: self.target_rate,
            segment_seconds: self.segment_seconds,
            filter_order: self.filter_order,
        }
    }
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Args)]
struct ImportArgs {
    /// Directory of `<subject>/<trial>.csv` files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    rate: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    shared: Shared,
    /// Leave this subject out of the training data.
    #[arg(long)]
    exclude_subject: Option<String>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    shared: Shared,
    /// Checkpoint directory; required for fusenet features.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    shared: Shared,
    /// `features.csv` as written by `extract`.
    #[arg(long)]
    features_file: PathBuf,
    #[arg(long)]
    test_subject: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long, value_delimiter = ',')]
    sweep_kappa: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    sweep_eta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    sweep_timepoints: Vec<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Csv,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files; each becomes one table row.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Row labels, one per input; file stems by default.
    #[arg(long = "name")]
    names: Vec<String>,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl Shared {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut train = TrainConfig { variant: self.variant.parse::<Variant>()?, lambda_l1: self.lambda, seed: self.seed, ..TrainConfig::default() };
        train.arch.latent = self.latent;
        train.arch.gru_hidden = self.latent / 2;
        if let Some(e) = self.epochs {
            train.max_epochs = e;
        }
        if let Some(b) = self.batch_size {
            train.batch_size = b;
        }
        if let Some(w) = self.width {
            train.arch.f1 = w;
        }
        let mut cfg = ExperimentConfig {
            features: self.features.parse::<FeatureSource>()?,
            decoder: self.decoder.parse::<DecoderKind>()?,
            train,
            seed: self.seed,
            vote_per_trial: self.vote_per_trial,
            macro_f1: self.macro_f1,
            jobs: self.jobs,
            shuffle_labels: self.shuffle_labels,
            dimensions: self.dimensions.clone(),
            ..ExperimentConfig::default()
        };
        cfg.decode.kappa = self.kappa;
        cfg.decode.eta = self.eta;
        cfg.decode.latent = self.latent;
        if let Some(n) = &self.normalization {
            cfg.normalization = serde_json::from_value::<Normalization>(Value::String(n.clone())).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            let over: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Parse { path: path.clone(), line: e.line(), column: e.column(), msg: e.to_string() })?;
            let mut merged = serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?;
            merge(&mut merged, over);
            cfg = serde_json::from_value(merged).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })
}

fn load<S: Scalar>(manifest: &Path) -> Result<(Store, Corpus<S>)> {
    let store = Store::open(manifest)?;
    let corpus = store.load_corpus::<S>()?;
    Ok((store, corpus))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        subjects: a.subjects,
        trials: a.trials,
        segments: a.segments,
        classes: a.classes,
        channels: a.channels,
        rate: a.rate,
        amplitude: a.amplitude,
        noise: a.noise,
        seed: a.seed,
        ..SynthSpec::default()
    };
    let store = synth_dataset(&spec, &a.out)?;
    println!("wrote {} segments to {}", store.manifest.total_segments(), store.manifest_path().display());
    Ok(())
}

fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let store = preprocess_store(&Store::open(&a.manifest)?, &a.filter.config(), &a.out)?;
    println!("wrote {} segments to {}", store.manifest.total_segments(), store.manifest_path().display());
    Ok(())
}

fn import(a: &ImportArgs) -> Result<()> {
    let store = import_csv(&a.input, &a.labels, a.rate, &a.filter.config(), &a.out)?;
    println!("wrote {} segments to {}", store.manifest.total_segments(), store.manifest_path().display());
    Ok(())
}

fn train<S: Scalar>(a: &TrainArgs) -> Result<()> {
    let cfg = a.shared.experiment()?;
    let (_, corpus) = load::<S>(&a.shared.manifest)?;
    if let Some(s) = &a.exclude_subject {
        if corpus.segments.iter().all(|x| &x.id.subject != s) {
            return Err(Error::Config(format!("no subject {s:?} to exclude")));
        }
    }
    let segments: Vec<Segment<S>> = corpus
        .segments
        .into_iter()
        .filter(|s| a.exclude_subject.as_deref() != Some(s.id.subject.as_str()))
        .collect();
    create_dir(&a.shared.out)?;
    let started = Instant::now();
    let fitted = fit_observed(&segments, &cfg.train, |r| {
        let d = r.loss_d.map_or(String::new(), |v| format!(" loss_d {v:.5}"));
        eprintln!("epoch {:>4} loss_g {:.5}{d} mse_val {:.5} ({:.1}s)", r.epoch, r.loss_g, r.mse_val, r.seconds);
    })?;
    fitted.history.write_csv(&a.shared.out.join("history.csv"))?;
    let ckpt = Checkpoint {
        generator: fitted.generator,
        discriminator: fitted.discriminator,
        epoch: fitted.best_epoch,
        lambda: cfg.train.lambda_l1,
        history: fitted.history.records.clone(),
    };
    let dir = a.shared.out.join("checkpoint");
    ckpt.save(&dir)?;
    println!("best epoch {} of {}; checkpoint in {} ({:.1}s)", fitted.best_epoch, fitted.history.records.len(), dir.display(), started.elapsed().as_secs_f64());
    Ok(())
}

fn extract<S: Scalar>(a: &ExtractArgs) -> Result<()> {
    let cfg = a.shared.experiment()?;
    let (store, corpus) = load::<S>(&a.shared.manifest)?;
    let refs: Vec<&Segment<S>> = corpus.segments.iter().collect();
    let rows: Vec<Vec<f64>> = match cfg.features {
        FeatureSource::Fusenet => {
            let dir = a.checkpoint.as_ref().ok_or_else(|| Error::Config("fusenet features need --checkpoint".into()))?;
            let ckpt = Checkpoint::<S>::load(dir)?;
            encode_segments(&ckpt.generator, &refs)?
        }
        source => {
            let rate = store.manifest.sampling_rate;
            extract_all(source.family(), &refs, rate, &bands_below_nyquist(rate))?
                .into_iter()
                .map(|r| r.into_iter().map(|v| v.as_f64()).collect())
                .collect()
        }
    };
    let table = FeatureTable::new(corpus.segments.iter().map(|s| s.id.clone()).collect(), rows)?;
    create_dir(&a.shared.out)?;
    table.write_csv(&a.shared.out.join("features.csv"))?;
    table.write_tensor(&a.shared.out.join("features.eft"))?;
    println!("wrote {} x {} {} features to {}", table.rows.len(), table.dim(), cfg.features.name(), a.shared.out.display());
    Ok(())
}

fn decode(a: &DecodeArgs) -> Result<ExperimentOutput> {
    let cfg = a.shared.experiment()?;
    let (_, corpus) = load::<f32>(&a.shared.manifest)?;
    let table = FeatureTable::read_csv(&a.features_file)?;
    let plans = loocv_folds_for(corpus.segments.iter().map(|s| s.id.subject.as_str()), cfg.seed)?;
    let fold = plans
        .iter()
        .position(|p| p.test_subject == a.test_subject)
        .ok_or_else(|| Error::Config(format!("no subject {:?} in {}", a.test_subject, a.shared.manifest.display())))?;
    let ff = fold_from_table(&corpus, &table, fold, &plans[fold], &cfg)?;
    let prepared = PreparedFolds { plans: vec![plans[fold].clone()], features: vec![Ok(ff)] };
    let out = decode_prepared(&corpus, &prepared, &cfg)?;
    create_dir(&a.shared.out)?;
    write_predictions(&a.shared.out.join("predictions.csv"), &out.predictions)?;
    out.report.write_csv(&a.shared.out.join("report.csv"))?;
    for r in &out.report.rows {
        match (r.p_acc, r.p_f, r.nmi) {
            (Some(acc), Some(f), Some(n)) => println!("{} {}: P_acc {acc:.2}% P_f {f:.2}% NMI {n:.4}", r.subject, r.dimension),
            _ => println!("{} {}: {}", r.subject, r.dimension, r.status),
        }
    }
    Ok(out)
}

fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<()> {
    create_dir(dir)?;
    out.report.write_csv(&dir.join("report.csv"))?;
    out.report.write_json(&dir.join("report.json"))?;
    write_predictions(&dir.join("predictions.csv"), &out.predictions)
}

fn print_summary(label: &str, out: &ExperimentOutput) {
    println!("{}", paper_table(&[(label.to_string(), &out.report)]));
    for (fold, e) in &out.failures {
        eprintln!("fold {fold} failed: {e}");
    }
}

fn evaluate<S: Scalar>(a: &EvaluateArgs) -> Result<ExperimentOutput> {
    let cfg = a.shared.experiment()?;
    let (store, corpus) = load::<S>(&a.shared.manifest)?;
    let out = run_experiment(&corpus, store.manifest.sampling_rate, &cfg)?;
    write_outputs(&a.shared.out, &out)?;
    let label = format!("{}+{}", cfg.features.name(), cfg.decoder.name());
    print_summary(&label, &out);
    Ok(out)
}

fn run_sweep<S: Scalar>(a: &SweepArgs) -> Result<Vec<ExperimentOutput>> {
    let cfg = a.shared.experiment()?;
    let (store, corpus) = load::<S>(&a.shared.manifest)?;
    let grid = SweepGrid { timepoints: a.sweep_timepoints.clone(), kappa: a.sweep_kappa.clone(), eta: a.sweep_eta.clone() };
    let result = sweep(&corpus, store.manifest.sampling_rate, &cfg, &grid)?;
    create_dir(&a.shared.out)?;
    write_timing_csv(&a.shared.out.join("timing.csv"), &result.timing)?;
    let mut outputs = Vec::new();
    for point in result.points {
        let name = format!("{}_{}", point.axis.name(), point.value);
        write_outputs(&a.shared.out.join(&name), &point.output)?;
        let acc = point.output.report.mean_p_acc().map_or("n/a".into(), |v| format!("{v:.2}%"));
        println!("{name}: mean P_acc {acc}, decode {:.3}s", point.output.report.decode_seconds());
        outputs.push(point.output);
    }
    Ok(outputs)
}

fn report(a: &ReportArgs) -> Result<()> {
    let reports = a.inputs.iter().map(|p| EvalReport::read_json(p)).collect::<Result<Vec<_>>>()?;
    if !a.names.is_empty() && a.names.len() != a.inputs.len() {
        return Err(Error::Config(format!("{} names for {} inputs", a.names.len(), a.inputs.len())));
    }
    let names: Vec<String> = if a.names.is_empty() {
        a.inputs
            .iter()
            .zip(&reports)
            .map(|(p, r)| {
                let stem = p.parent().and_then(|d| d.file_name()).map(|s| s.to_string_lossy().into_owned());
                stem.unwrap_or_else(|| format!("{}+{}", r.meta.features, r.meta.decoder))
            })
            .collect()
    } else {
        a.names.clone()
    };
    let text = match a.format {
        ReportFormat::Table => paper_table(&names.iter().cloned().zip(reports.iter()).collect::<Vec<_>>()),
        ReportFormat::Json => {
            let rows: Vec<Value> = names
                .iter()
                .zip(&reports)
                .map(|(n, r)| serde_json::json!({ "name": n, "meta": r.meta, "summary": r.summary() }))
                .collect();
            serde_json::to_string_pretty(&rows).map_err(|e| Error::Validation(e.to_string()))?
        }
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            let merged = EvalReport { meta: Default::default(), rows: reports.iter().flat_map(|r| r.rows.clone()).collect() };
            merged.write_csv_to(&mut buf)?;
            String::from_utf8(buf).map_err(|e| Error::Validation(e.to_string()))?
        }
    };
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io { path: p.clone(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Exit status for a finished run: the code of the first failed fold.
fn outcome(failures: &[(usize, Error)]) -> Result<()> {
    match failures.first() {
        Some((fold, e)) => {
            eprintln!("{} fold(s) failed; first: fold {fold}", failures.len());
            std::process::exit(e.exit_code())
        }
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Preprocess(a) => preprocess(&a),
        Command::ImportCsv(a) => import(&a),
        Command::Train(a) => match a.shared.dtype {
            DTypeArg::F32 => train::<f32>(&a),
            DTypeArg::F64 => train::<f64>(&a),
        },
        Command::Extract(a) => match a.shared.dtype {
            DTypeArg::F32 => extract::<f32>(&a),
            DTypeArg::F64 => extract::<f64>(&a),
        },
        Command::Decode(a) => outcome(&decode(&a)?.failures),
        Command::Evaluate(a) => {
            let out = match a.shared.dtype {
                DTypeArg::F32 => evaluate::<f32>(&a)?,
                DTypeArg::F64 => evaluate::<f64>(&a)?,
            };
            outcome(&out.failures)
        }
        Command::Sweep(a) => {
            let outs = match a.shared.dtype {
                DTypeArg::F32 => run_sweep::<f32>(&a)?,
                DTypeArg::F64 => run_sweep::<f64>(&a)?,
            };
            let failures: Vec<(usize, Error)> = outs.into_iter().flat_map(|o| o.failures).collect();
            outcome(&failures)
        }
        Command::Report(a) => report(&a),
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
