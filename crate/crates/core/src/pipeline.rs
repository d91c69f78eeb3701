//! End-to-end orchestration: corpus preparation, training regimes,
//! conversion and evaluation reports.
//!
//! Everything here is deterministic given the seed. Per-utterance work runs
//! on the rayon pool; results are collected in input order so `--jobs` never
//! changes output bytes.

use crate::align::{iterative_align, trim_silence, AlignedPairSet, ParallelUtterance};
use crate::audio_io::{read_wav, resample, Waveform};
use crate::corpus::Utterance;
use crate::dnn::{convert_dnn, train_dnn, DnnHyperparams};
use crate::dsp::{dsp_convert_features, DspRecipeConfig};
use crate::error::{Error, Result};
use crate::formats::ModelFile;
use crate::gmm::{build_joint_vectors, convert_gmm, train_gmm};
use crate::metrics::{mcd, spectral_tilt, voicing_score};
use crate::spectral::{analyze_with, AnalysisConfig, Cepstrogram, LogSpectrum, MelBasis};
use crate::vocoder::{synthesize_with, SynthesisConfig};
use rayon::prelude::*;
use std::path::Path;

/// Frames of context kept on each side when trimming silence.
pub const TRIM_MARGIN: usize = 5;

/// Which conversion model to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gmm,
    Dnn,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gmm" => Ok(ModelKind::Gmm),
            "dnn" => Ok(ModelKind::Dnn),
            other => Err(Error::Config(format!("unknown model kind '{}'", other))),
        }
    }
}

/// Training settings shared by both model kinds.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub kind: ModelKind,
    /// GMM mixture count.
    pub mixtures: usize,
    /// GMM EM relative log-likelihood stopping tolerance.
    pub tol: f64,
    /// GMM EM iteration cap.
    pub max_iter: usize,
    pub hyperparams: DnnHyperparams,
    /// DTW refinement rounds (1 = single pass).
    pub align_rounds: usize,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            kind: ModelKind::Dnn,
            mixtures: 4,
            tol: 1e-3,
            max_iter: 100,
            hyperparams: DnnHyperparams::default(),
            align_rounds: 2,
            seed: 0,
        }
    }
}

/// Read a wav, resample to the analysis rate, and analyze.
pub fn load_and_analyze(path: &Path, basis: &MelBasis) -> Result<Cepstrogram> {
    let w = read_wav(path)?;
    let w = resample(&w, basis.config().sample_rate)?;
    analyze_with(&w, basis)
}

/// Analyze and silence-trim both sides of each utterance.
pub fn build_parallel_corpus(
    utts: &[Utterance],
    basis: &MelBasis,
) -> Result<Vec<ParallelUtterance>> {
    utts.par_iter()
        .map(|u| {
            let (source, _) = trim_silence(&load_and_analyze(&u.normal_path, basis)?, TRIM_MARGIN)?;
            let (target, _) =
                trim_silence(&load_and_analyze(&u.whisper_path, basis)?, TRIM_MARGIN)?;
            Ok(ParallelUtterance {
                id: u.id.clone(),
                source,
                target,
            })
        })
        .collect()
}

/// Align a prepared corpus, refining the path with an interim DNN.
pub fn align_corpus(
    corpus: &[ParallelUtterance],
    rounds: usize,
    seed: u64,
    config: &AnalysisConfig,
) -> Result<AlignedPairSet> {
    let interim_hp = DnnHyperparams {
        hidden_sizes: vec![64],
        epochs: 5,
        seed,
        ..DnnHyperparams::default()
    };
    let cfg = config.clone();
    iterative_align(corpus, rounds, move |pairs| {
        let model = train_dnn(pairs, &interim_hp, None, "interim", &cfg)?;
        Ok(move |c: &Cepstrogram| convert_dnn(&model, c))
    })
}

/// Train a conversion model on a selected utterance list.
///
/// `validation` (if given) is aligned once and used for DNN checkpointing.
pub fn train_from_selection(
    selection: &[Utterance],
    validation: Option<&[Utterance]>,
    settings: &TrainSettings,
    basis: &MelBasis,
    trained_on: &str,
) -> Result<ModelFile> {
    let config = basis.config();
    let corpus = build_parallel_corpus(selection, basis)?;
    let pairs = align_corpus(&corpus, settings.align_rounds, settings.seed, config)?;
    match settings.kind {
        ModelKind::Gmm => {
            let joint = build_joint_vectors(&pairs)?;
            let model = train_gmm(
                &joint,
                settings.mixtures,
                settings.tol,
                settings.max_iter,
                settings.seed,
                trained_on,
                config,
            )?;
            Ok(ModelFile::Gmm(model))
        }
        ModelKind::Dnn => {
            let val_pairs = match validation {
                Some(v) if !v.is_empty() => {
                    let vc = build_parallel_corpus(v, basis)?;
                    Some(align_corpus(&vc, 1, settings.seed, config)?)
                }
                _ => None,
            };
            let mut hp = settings.hyperparams.clone();
            hp.seed = settings.seed;
            let model = train_dnn(&pairs, &hp, val_pairs.as_ref(), trained_on, config)?;
            Ok(ModelFile::Dnn(model))
        }
    }
}

/// Convert features with either model kind, refusing a feature-config
/// mismatch.
pub fn convert_with_model(model: &ModelFile, src: &Cepstrogram) -> Result<Cepstrogram> {
    let mc = model.config();
    if mc.order != src.config.order
        || mc.sample_rate != src.config.sample_rate
        || mc.warp_alpha != src.config.warp_alpha
    {
        return Err(Error::Config(format!(
            "model feature config (order {}, {} Hz) does not match input (order {}, {} Hz)",
            mc.order, mc.sample_rate, src.config.order, src.config.sample_rate
        )));
    }
    match model {
        ModelFile::Gmm(m) => convert_gmm(m, src),
        ModelFile::Dnn(m) => convert_dnn(m, src),
    }
}

/// Systems the evaluator can score.
pub enum SystemSpec {
    /// Copy-synthesis of the whisper recording (the vocoder ceiling).
    Oracle,
    /// The rule-based signal-processing recipe.
    Dsp(DspRecipeConfig),
    /// A trained model file.
    Model(String, Box<ModelFile>),
}

impl SystemSpec {
    pub fn name(&self) -> &str {
        match self {
            SystemSpec::Oracle => "Oracle",
            SystemSpec::Dsp(_) => "DSP",
            SystemSpec::Model(name, _) => name,
        }
    }
}

/// One evaluated utterance x system.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub utterance: String,
    pub system: String,
    pub mcd_db: f64,
    pub voicing: f64,
    pub tilt_db_per_octave: f64,
}

/// Evaluation rows plus per-system aggregates.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// One row per utterance x system.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("utterance,system,mcd_db,voicing,tilt_db_per_octave\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                r.utterance, r.system, r.mcd_db, r.voicing, r.tilt_db_per_octave
            ));
        }
        out
    }

    /// Per-system mean and standard deviation of each metric.
    pub fn aggregates(&self) -> Vec<(String, [f64; 3], [f64; 3])> {
        let mut systems: Vec<String> = Vec::new();
        for r in &self.rows {
            if !systems.contains(&r.system) {
                systems.push(r.system.clone());
            }
        }
        systems
            .into_iter()
            .map(|sys| {
                let vals: Vec<[f64; 3]> = self
                    .rows
                    .iter()
                    .filter(|r| r.system == sys)
                    .map(|r| [r.mcd_db, r.voicing, r.tilt_db_per_octave])
                    .collect();
                let n = vals.len() as f64;
                let mut mean = [0.0; 3];
                let mut std = [0.0; 3];
                for m in 0..3 {
                    mean[m] = vals.iter().map(|v| v[m]).sum::<f64>() / n;
                    std[m] =
                        (vals.iter().map(|v| (v[m] - mean[m]).powi(2)).sum::<f64>() / n).sqrt();
                }
                (sys, mean, std)
            })
            .collect()
    }

    /// Markdown aggregate table, systems as columns.
    pub fn to_markdown(&self) -> String {
        let aggs = self.aggregates();
        let mut out = String::from("| metric |");
        for (sys, _, _) in &aggs {
            out.push_str(&format!(" {} |", sys));
        }
        out.push_str("\n|---|");
        for _ in &aggs {
            out.push_str("---|");
        }
        out.push('\n');
        let metrics = ["MCD (dB)", "voicing", "tilt (dB/oct)"];
        for (m, name) in metrics.iter().enumerate() {
            out.push_str(&format!("| {} |", name));
            for (_, mean, std) in &aggs {
                out.push_str(&format!(" {:.2} ± {:.2} |", mean[m], std[m]));
            }
            out.push('\n');
        }
        out
    }
}

/// Mean log spectral envelope over an utterance's frames.
pub fn mean_envelope(cep: &Cepstrogram, basis: &MelBasis) -> Result<LogSpectrum> {
    let t = cep.num_frames();
    if t == 0 {
        return Err(Error::Empty("no frames".into()));
    }
    let mut acc = basis.cepstrum_to_envelope(&cep.frame(0))?;
    for i in 1..t {
        let env = basis.cepstrum_to_envelope(&cep.frame(i))?;
        acc.bins += env.bins;
    }
    acc.bins /= t as f64;
    Ok(acc)
}

/// Score one system on one utterance: convert the normal recording (or
/// copy-synthesize the whisper for Oracle), then measure MCD against the
/// whisper target along a DTW path, voicing of the synthesized audio, and
/// the spectral tilt of the mean output envelope.
fn evaluate_one(
    u: &Utterance,
    system: &SystemSpec,
    basis: &MelBasis,
    syn: &SynthesisConfig,
) -> Result<EvalRow> {
    let (whisper, _) = trim_silence(&load_and_analyze(&u.whisper_path, basis)?, TRIM_MARGIN)?;
    let converted = match system {
        SystemSpec::Oracle => whisper.clone(),
        SystemSpec::Dsp(recipe) => {
            let (normal, _) = trim_silence(&load_and_analyze(&u.normal_path, basis)?, TRIM_MARGIN)?;
            dsp_convert_features(&normal, basis, recipe)?
        }
        SystemSpec::Model(_, model) => {
            let (normal, _) = trim_silence(&load_and_analyze(&u.normal_path, basis)?, TRIM_MARGIN)?;
            convert_with_model(model, &normal)?
        }
    };
    let audio = synthesize_with(&converted, syn, basis)?;
    let mcd_db = match system {
        // the Oracle round-trips through audio; score the re-analysis
        SystemSpec::Oracle => {
            let re = analyze_with(&audio, basis)?;
            let n = re.num_frames().min(whisper.num_frames());
            let re_cut = Cepstrogram {
                frames: re.frames.rows(0, n).into_owned(),
                config: re.config.clone(),
            };
            let wh_cut = Cepstrogram {
                frames: whisper.frames.rows(0, n).into_owned(),
                config: whisper.config.clone(),
            };
            mcd(&re_cut, &wh_cut, None)?
        }
        _ => {
            let path = crate::align::dtw(&converted, &whisper)?;
            mcd(&converted, &whisper, Some(&path))?
        }
    };
    let voicing = voicing_score(&audio)?;
    let tilt = spectral_tilt(&mean_envelope(&converted, basis)?);
    Ok(EvalRow {
        utterance: u.id.clone(),
        system: system.name().to_string(),
        mcd_db,
        voicing,
        tilt_db_per_octave: tilt,
    })
}

/// Evaluate every system on every given utterance (typically the test
/// partition). Rows are ordered by utterance, then system.
pub fn evaluate_systems(
    utts: &[Utterance],
    systems: &[SystemSpec],
    basis: &MelBasis,
    syn: &SynthesisConfig,
) -> Result<EvalReport> {
    if utts.is_empty() {
        return Err(Error::Empty("no utterances to evaluate".into()));
    }
    let rows: Result<Vec<Vec<EvalRow>>> = utts
        .par_iter()
        .map(|u| {
            systems
                .iter()
                .map(|s| evaluate_one(u, s, basis, syn))
                .collect::<Result<Vec<_>>>()
        })
        .collect();
    Ok(EvalReport {
        rows: rows?.into_iter().flatten().collect(),
    })
}

/// Full wav-to-wav conversion with a trained model.
pub fn convert_waveform(
    model: &ModelFile,
    input: &Waveform,
    basis: &MelBasis,
    syn: &SynthesisConfig,
) -> Result<Waveform> {
    let resampled = resample(input, basis.config().sample_rate)?;
    let cep = analyze_with(&resampled, basis)?;
    let converted = convert_with_model(model, &cep)?;
    synthesize_with(&converted, syn, basis)
}
