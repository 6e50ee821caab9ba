use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, f1_score, macro_f1, nmi};
use super::protocol::{fold_indices, leakage_guard, loocv_folds_for, FoldPlan};
use super::report::{EvalReport, PredictionRow, ReportMeta, ReportRow};
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::features::{bands_below_nyquist, extract_all, pca_kmeans_baseline, simple_graph_baseline, FeatureFamily, FeatureTable, Pca};
use crate::hypergraph::{decode_fold, subsample_training, ClusterResult, DecodeConfig, LabeledFeatures};
use crate::model::{Generator, Segment, SegmentId};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::trainer::{fit, TrainConfig};

/// Segments encoded per generator call during extraction.
const EXTRACT_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    /// Latent codes of a generator trained on the fold's candidates.
    Fusenet,
    Time,
    Psd,
    De,
}

impl FeatureSource {
    pub const ALL: [FeatureSource; 4] = [FeatureSource::Fusenet, FeatureSource::Time, FeatureSource::Psd, FeatureSource::De];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSource::Fusenet => "fusenet",
            FeatureSource::Time => "time",
            FeatureSource::Psd => "psd",
            FeatureSource::De => "de",
        }
    }

    pub fn family(self) -> FeatureFamily {
        match self {
            FeatureSource::Fusenet => FeatureFamily::Eegfusenet,
            FeatureSource::Time => FeatureFamily::TimeDomain,
            FeatureSource::Psd => FeatureFamily::BandPower,
            FeatureSource::De => FeatureFamily::DifferentialEntropy,
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown feature source {s:?}; expected fusenet, time, psd or de")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    Hypergraph,
    SimpleGraph,
    PcaKmeans,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 3] = [DecoderKind::Hypergraph, DecoderKind::SimpleGraph, DecoderKind::PcaKmeans];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Hypergraph => "hypergraph",
            DecoderKind::SimpleGraph => "simple-graph",
            DecoderKind::PcaKmeans => "pca-kmeans",
        }
    }

    pub fn run(self, train: &LabeledFeatures<f64>, test: &[Vec<f64>], config: &DecodeConfig) -> Result<ClusterResult> {
        match self {
            DecoderKind::Hypergraph => decode_fold(train, test, config),
            DecoderKind::SimpleGraph => simple_graph_baseline(train, test, config),
            DecoderKind::PcaKmeans => pca_kmeans_baseline(train, test, config),
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s || v.name().replace('-', "_") == s)
            .ok_or_else(|| Error::config(format!("unknown decoder {s:?}; expected hypergraph, simple-graph or pca-kmeans")))
    }
}

/// Feature standardization applied before decoding. Statistics never use labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    None,
    /// z-score with the mean and spread of the fold's candidate features.
    Global,
    /// z-score every subject with its own mean and spread.
    #[default]
    PerSubject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub features: FeatureSource,
    pub decoder: DecoderKind,
    /// Network settings; its `seed` is replaced by the fold seed.
    pub train: TrainConfig,
    /// Decoder settings; `n_classes` comes from each label dimension and
    /// `seed` is replaced by the fold seed.
    pub decode: DecodeConfig,
    /// Fold `i` uses seed `seed + i` for training, subsampling and clustering.
    pub seed: u64,
    pub normalization: Normalization,
    pub vote_per_trial: bool,
    /// Report macro F1 instead of the F1 of `positive_class`.
    pub macro_f1: bool,
    pub positive_class: usize,
    pub jobs: usize,
    /// Permutes the training labels of every fold (control condition).
    pub shuffle_labels: bool,
    /// Label dimensions to decode; all when empty.
    pub dimensions: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            features: FeatureSource::Fusenet,
            decoder: DecoderKind::Hypergraph,
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            seed: 0,
            normalization: Normalization::default(),
            vote_per_trial: false,
            macro_f1: false,
            positive_class: 1,
            jobs: 1,
            shuffle_labels: false,
            dimensions: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        DecodeConfig { n_classes: 2, ..self.decode.clone() }.validate()?;
        if self.jobs == 0 {
            return Err(Error::config("jobs must be at least 1"));
        }
        Ok(())
    }

    pub fn meta(&self) -> ReportMeta {
        ReportMeta {
            features: self.features.name().into(),
            decoder: self.decoder.name().into(),
            variant: self.train.variant.name().into(),
            kappa: self.decode.kappa,
            eta: self.decode.eta,
            latent: self.decode.latent,
            seed: self.seed,
            vote_per_trial: self.vote_per_trial,
            shuffled_labels: self.shuffle_labels,
        }
    }
}

/// Report plus per-segment predictions and the errors of failed folds.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub report: EvalReport,
    pub predictions: Vec<PredictionRow>,
    pub failures: Vec<(usize, Error)>,
}

/// Features of one fold, before decoding.
#[derive(Debug, Clone)]
pub struct FoldFeatures {
    pub fold: usize,
    pub plan: FoldPlan,
    /// Corpus indices of the training candidates and of the test subject.
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub train: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    pub train_seconds: f64,
    pub extract_seconds: f64,
}

/// Latent codes of `segments`, one row each, in batches.
pub fn encode_segments<S: Scalar>(generator: &Generator<S>, segments: &[&Segment<S>]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(segments.len());
    for chunk in segments.chunks(EXTRACT_BATCH) {
        let parts: Vec<Tensor<S>> = chunk.iter().map(|s| s.data.clone()).collect();
        let codes = generator.encode_batch(&Tensor::stack(&parts)?)?;
        let l = codes.shape()[1];
        out.extend(codes.data().chunks(l).map(|r| r.iter().map(|v| v.as_f64()).collect::<Vec<f64>>()));
    }
    Ok(out)
}

fn zscore_with(rows: &mut [Vec<f64>], idx: &[usize], stats_from: &[usize]) {
    let Some(&first) = stats_from.first() else { return };
    let d = rows[first].len();
    let n = stats_from.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in stats_from {
        mean.iter_mut().zip(&rows[i]).for_each(|(m, v)| *m += v / n);
    }
    let mut sd = vec![0.0; d];
    for &i in stats_from {
        sd.iter_mut().zip(rows[i].iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
    }
    let sd: Vec<f64> = sd.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
    for &i in idx {
        for ((v, m), s) in rows[i].iter_mut().zip(&mean).zip(&sd) {
            *v = (*v - m) / s;
        }
    }
}

/// Standardizes rows in place; `subjects[i]` names the subject of row `i`,
/// and the first `n_train` rows are the candidates.
fn normalize(rows: &mut [Vec<f64>], subjects: &[&str], n_train: usize, mode: Normalization) {
    match mode {
        Normalization::None => {}
        Normalization::Global => {
            let all: Vec<usize> = (0..rows.len()).collect();
            let train: Vec<usize> = (0..n_train).collect();
            zscore_with(rows, &all, &train);
        }
        Normalization::PerSubject => {
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, s) in subjects.iter().enumerate() {
                groups.entry(s).or_default().push(i);
            }
            for idx in groups.values() {
                zscore_with(rows, idx, idx);
            }
        }
    }
}

/// Fits the feature source on the fold's candidates and extracts features
/// for candidates and test segments.
pub(crate) fn fold_features<S: Scalar>(
    corpus: &Corpus<S>,
    rate: f64,
    fold: usize,
    plan: &FoldPlan,
    config: &ExperimentConfig,
) -> Result<FoldFeatures> {
    let (train_idx, test_idx) = fold_indices(plan, &corpus.segments);
    if test_idx.is_empty() {
        return Err(Error::contract(format!("subject {} has no segments", plan.test_subject)));
    }
    leakage_guard(plan, &corpus.segments, &train_idx, "feature fitting")?;
    let train_refs: Vec<&Segment<S>> = train_idx.iter().map(|&i| &corpus.segments[i]).collect();
    let test_refs: Vec<&Segment<S>> = test_idx.iter().map(|&i| &corpus.segments[i]).collect();

    let started = Instant::now();
    let (mut rows, train_seconds, extract_seconds) = match config.features {
        FeatureSource::Fusenet => {
            let owned: Vec<Segment<S>> = train_refs.iter().map(|s| (*s).clone()).collect();
            let train_cfg = TrainConfig { seed: plan.seed, ..config.train.clone() };
            let fitted = fit(&owned, &train_cfg)?;
            let train_seconds = started.elapsed().as_secs_f64();
            let started = Instant::now();
            let mut rows = encode_segments(&fitted.generator, &train_refs)?;
            rows.extend(encode_segments(&fitted.generator, &test_refs)?);
            (rows, train_seconds, started.elapsed().as_secs_f64())
        }
        source => {
            let bands = bands_below_nyquist(rate);
            let to_f64 = |v: Vec<Vec<S>>| -> Vec<Vec<f64>> { v.into_iter().map(|r| r.into_iter().map(|x| x.as_f64()).collect()).collect() };
            let raw_train = to_f64(extract_all(source.family(), &train_refs, rate, &bands)?);
            let raw_test = to_f64(extract_all(source.family(), &test_refs, rate, &bands)?);
            let extracted = started.elapsed().as_secs_f64();
            // The projection is the only fitted part of a hand-crafted source.
            let started = Instant::now();
            let pca = Pca::fit(&raw_train, config.decode.latent)?;
            let fit_seconds = started.elapsed().as_secs_f64();
            let mut rows = pca.transform_all(&raw_train)?;
            rows.extend(pca.transform_all(&raw_test)?);
            (rows, fit_seconds, extracted)
        }
    };
    if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite { index: i });
    }
    let subjects: Vec<&str> = train_idx.iter().chain(&test_idx).map(|&i| corpus.segments[i].id.subject.as_str()).collect();
    normalize(&mut rows, &subjects, train_idx.len(), config.normalization);
    let test = rows.split_off(train_idx.len());
    Ok(FoldFeatures { fold, plan: plan.clone(), train_idx, test_idx, train: rows, test, train_seconds, extract_seconds })
}

/// Builds a fold from precomputed per-segment features (for example an
/// extracted feature table). Rows are matched to corpus segments by id;
/// hand-crafted rows are mapped to `config.decode.latent` columns with a PCA
/// fitted on the candidates, then standardized like [`fold_features`].
pub fn fold_from_table<S>(
    corpus: &Corpus<S>,
    table: &FeatureTable,
    fold: usize,
    plan: &FoldPlan,
    config: &ExperimentConfig,
) -> Result<FoldFeatures> {
    let by_id: std::collections::HashMap<&SegmentId, usize> = table.ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let (train_idx, test_idx) = fold_indices(plan, &corpus.segments);
    if test_idx.is_empty() {
        return Err(Error::contract(format!("subject {} has no segments", plan.test_subject)));
    }
    leakage_guard(plan, &corpus.segments, &train_idx, "feature table")?;
    let lookup = |i: &usize| -> Result<Vec<f64>> {
        let id = &corpus.segments[*i].id;
        by_id.get(id).map(|&r| table.rows[r].clone()).ok_or_else(|| Error::Validation(format!("feature table has no row for {id:?}")))
    };
    let mut train = train_idx.iter().map(lookup).collect::<Result<Vec<_>>>()?;
    let mut test = test_idx.iter().map(lookup).collect::<Result<Vec<_>>>()?;
    if config.features != FeatureSource::Fusenet {
        let pca = Pca::fit(&train, config.decode.latent)?;
        train = pca.transform_all(&train)?;
        test = pca.transform_all(&test)?;
    }
    let n_train = train.len();
    let mut rows = train;
    rows.append(&mut test);
    let subjects: Vec<&str> = train_idx.iter().chain(&test_idx).map(|&i| corpus.segments[i].id.subject.as_str()).collect();
    normalize(&mut rows, &subjects, n_train, config.normalization);
    let test = rows.split_off(n_train);
    Ok(FoldFeatures { fold, plan: plan.clone(), train_idx, test_idx, train: rows, test, train_seconds: 0.0, extract_seconds: 0.0 })
}

/// Majority vote over the segments of each test trial; ties go to the smaller class.
fn vote_per_trial<S>(corpus: &Corpus<S>, test_idx: &[usize], predictions: &mut [usize]) {
    let mut tallies: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&i, &p) in test_idx.iter().zip(predictions.iter()) {
        *tallies.entry(corpus.segments[i].id.trial.as_str()).or_default().entry(p).or_default() += 1;
    }
    let winner: BTreeMap<&str, usize> = tallies
        .into_iter()
        .map(|(t, counts)| (t, counts.iter().max_by_key(|(&c, &n)| (n, std::cmp::Reverse(c))).map(|(&c, _)| c).unwrap()))
        .collect();
    for (&i, p) in test_idx.iter().zip(predictions.iter_mut()) {
        *p = winner[corpus.segments[i].id.trial.as_str()];
    }
}

fn dimension_indices<S>(corpus: &Corpus<S>, config: &ExperimentConfig) -> Result<Vec<usize>> {
    if config.dimensions.is_empty() {
        Ok((0..corpus.dimensions.len()).collect())
    } else {
        config.dimensions.iter().map(|d| corpus.dimension_index(d)).collect()
    }
}

/// Subsamples candidates, decodes every selected dimension and scores it.
pub(crate) fn decode_rows<S>(
    corpus: &Corpus<S>,
    ff: &FoldFeatures,
    config: &ExperimentConfig,
) -> Result<(Vec<ReportRow>, Vec<PredictionRow>)> {
    let mut rows = Vec::new();
    let mut preds = Vec::new();
    for d in dimension_indices(corpus, config)? {
        let dim = &corpus.dimensions[d];
        let started = Instant::now();
        let picked = subsample_training(ff.train.len(), config.decode.eta, ff.plan.seed)?;
        let used: Vec<usize> = picked.iter().map(|&i| ff.train_idx[i]).collect();
        leakage_guard(&ff.plan, &corpus.segments, &used, "training subsample")?;
        let mut labels: Vec<usize> = used.iter().map(|&i| corpus.labels[d][i]).collect();
        if config.shuffle_labels {
            labels.shuffle(&mut ChaCha8Rng::seed_from_u64(ff.plan.seed ^ 0x5bd1_e995));
        }
        let train = LabeledFeatures::new(picked.iter().map(|&i| ff.train[i].clone()).collect(), labels)?;
        let decode_cfg = DecodeConfig { n_classes: dim.classes, seed: ff.plan.seed, ..config.decode.clone() };
        let mut predicted = config.decoder.run(&train, &ff.test, &decode_cfg)?.predictions;
        let decode_seconds = started.elapsed().as_secs_f64();
        if config.vote_per_trial {
            vote_per_trial(corpus, &ff.test_idx, &mut predicted);
        }
        let truth: Vec<usize> = ff.test_idx.iter().map(|&i| corpus.labels[d][i]).collect();
        let p_f = if config.macro_f1 { macro_f1(&predicted, &truth, dim.classes)? } else { f1_score(&predicted, &truth, config.positive_class)? };
        rows.push(ReportRow {
            fold: ff.fold,
            subject: ff.plan.test_subject.clone(),
            dimension: dim.name.clone(),
            p_acc: Some(accuracy(&predicted, &truth)?),
            p_f: Some(p_f),
            nmi: Some(nmi(&predicted, &truth)?),
            n_test: truth.len(),
            train_seconds: ff.train_seconds,
            extract_seconds: ff.extract_seconds,
            decode_seconds,
            status: "ok".into(),
        });
        for ((&i, &p), &t) in ff.test_idx.iter().zip(&predicted).zip(&truth) {
            let id = &corpus.segments[i].id;
            preds.push(PredictionRow {
                subject: id.subject.clone(),
                trial: id.trial.clone(),
                segment: id.index,
                dimension: dim.name.clone(),
                predicted: p,
                truth: t,
            });
        }
    }
    Ok((rows, preds))
}

pub(crate) fn failed_rows<S>(corpus: &Corpus<S>, fold: usize, plan: &FoldPlan, config: &ExperimentConfig, err: &Error) -> Vec<ReportRow> {
    let n_test = corpus.segments.iter().filter(|s| s.id.subject == plan.test_subject).count();
    dimension_indices(corpus, config)
        .unwrap_or_default()
        .into_iter()
        .map(|d| ReportRow {
            fold,
            subject: plan.test_subject.clone(),
            dimension: corpus.dimensions[d].name.clone(),
            p_acc: None,
            p_f: None,
            nmi: None,
            n_test,
            train_seconds: 0.0,
            extract_seconds: 0.0,
            decode_seconds: 0.0,
            status: format!("failed: {err}"),
        })
        .collect()
}

pub(crate) fn plans<S>(corpus: &Corpus<S>, seed: u64) -> Result<Vec<FoldPlan>> {
    loocv_folds_for(corpus.segments.iter().map(|s| s.id.subject.as_str()), seed)
}

pub(crate) fn in_pool<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(work))
}

/// Computes the features of every fold in parallel. A leakage trap aborts
/// the run; other fold errors are returned per fold.
pub(crate) fn all_fold_features<S: Scalar>(
    corpus: &Corpus<S>,
    rate: f64,
    plans: &[FoldPlan],
    config: &ExperimentConfig,
) -> Result<Vec<Result<FoldFeatures>>> {
    let results: Vec<Result<FoldFeatures>> =
        in_pool(config.jobs, || plans.par_iter().enumerate().map(|(i, p)| fold_features(corpus, rate, i, p, config)).collect())?;
    if let Some(Err(Error::Leakage(msg))) = results.iter().find(|r| matches!(r, Err(Error::Leakage(_)))) {
        return Err(Error::Leakage(msg.clone()));
    }
    Ok(results)
}

pub(crate) fn assemble<S: Sync>(
    corpus: &Corpus<S>,
    plans: &[FoldPlan],
    features: &[Result<FoldFeatures>],
    config: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    let decoded: Vec<Result<(Vec<ReportRow>, Vec<PredictionRow>)>> = in_pool(config.jobs, || {
        features
            .par_iter()
            .map(|ff| match ff {
                Ok(ff) => decode_rows(corpus, ff, config),
                Err(e) => Err(Error::contract(e.to_string())),
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    let mut failures = Vec::new();
    for (fold, (plan, (ff, dec))) in plans.iter().zip(features.iter().zip(decoded)).enumerate() {
        match (ff, dec) {
            (Ok(_), Ok((r, p))) => {
                rows.extend(r);
                predictions.extend(p);
            }
            (Err(e), _) => {
                rows.extend(failed_rows(corpus, fold, plan, config, e));
                failures.push((fold, clone_error(e)));
            }
            (Ok(_), Err(Error::Leakage(msg))) => return Err(Error::Leakage(msg)),
            (Ok(_), Err(e)) => {
                rows.extend(failed_rows(corpus, fold, plan, config, &e));
                failures.push((fold, e));
            }
        }
    }
    Ok(ExperimentOutput { report: EvalReport { meta: config.meta(), rows }, predictions, failures })
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::Divergence { epoch, batch, what } => Error::Divergence { epoch: *epoch, batch: *batch, what },
        Error::Config(m) => Error::Config(m.clone()),
        Error::Contract(m) => Error::Contract(m.clone()),
        Error::NonFinite { index } => Error::NonFinite { index: *index },
        other => Error::Validation(other.to_string()),
    }
}

/// Leave-one-subject-out run: per fold, fit the feature source on the
/// candidate subjects, extract, subsample η% of the candidates, decode each
/// label dimension and score the held-out subject.
pub fn run_experiment<S: Scalar>(corpus: &Corpus<S>, rate: f64, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let prepared = prepare_folds(corpus, rate, config)?;
    decode_prepared(corpus, &prepared, config)
}

/// Fold plans and fitted features, reusable across decoder settings.
#[derive(Debug)]
pub struct PreparedFolds {
    pub plans: Vec<FoldPlan>,
    pub features: Vec<Result<FoldFeatures>>,
}

/// The feature half of [`run_experiment`].
pub fn prepare_folds<S: Scalar>(corpus: &Corpus<S>, rate: f64, config: &ExperimentConfig) -> Result<PreparedFolds> {
    config.validate()?;
    let plans = plans(corpus, config.seed)?;
    let features = all_fold_features(corpus, rate, &plans, config)?;
    Ok(PreparedFolds { plans, features })
}

/// The decoding half of [`run_experiment`]. Only the decoding fields of
/// `config` (decoder, decode settings, voting, scoring, label shuffling)
/// should differ from the ones the folds were prepared with.
pub fn decode_prepared<S: Sync>(corpus: &Corpus<S>, prepared: &PreparedFolds, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    assemble(corpus, &prepared.plans, &prepared.features, config)
}
