//! Command-line surface for the whisper-conversion toolkit.
//!
//! Subcommands: analyze, synthesize, oracle, dsp-convert, align, train,
//! convert, evaluate, make-manifest. All randomness flows from `--seed`;
//! `--jobs 1` is the determinism reference (parallel runs collect results in
//! input order, so outputs do not depend on the worker count).

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use whispervc::align::{dtw, trim_silence};
use whispervc::audio_io::{read_wav, resample, write_wav};
use whispervc::corpus::{
    load_manifest, manifest_from_tree, select_training_set, split, write_split_csv, Partition,
    SelectionMode,
};
use whispervc::dnn::DnnHyperparams;
use whispervc::dsp::{dsp_convert, DspRecipeConfig};
use whispervc::formats::{load_model, read_mcep, write_dnnv, write_gmmv, write_mcep};
use whispervc::pipeline::{
    convert_waveform, evaluate_systems, train_from_selection, ModelKind, SystemSpec, TrainSettings,
    TRIM_MARGIN,
};
use whispervc::spectral::{analyze_with, AnalysisConfig, MelBasis};
use whispervc::vocoder::{copy_synthesis, synthesize_with, SynthesisConfig};
use whispervc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "whispervc",
    about = "Normal-to-whispered speech conversion toolkit",
    version = concat!(
        env!("CARGO_PKG_VERSION"),
        " (schemas: MCEP v1, ALGN v1, GMMV v1, DNNV v1)"
    )
)]
struct Cli {
    /// Seed for all randomness (noise excitation, shuffles, initialization).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for per-utterance work; 1 is the determinism reference.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

/// Feature-analysis overrides shared by the audio-facing subcommands.
#[derive(Args, Clone)]
struct AnalysisArgs {
    /// Cepstral order (coefficients per frame).
    #[arg(long)]
    order: Option<usize>,
    /// Analysis/synthesis sample rate in Hz.
    #[arg(long)]
    sample_rate: Option<u32>,
}

impl AnalysisArgs {
    fn build(&self) -> Result<AnalysisConfig> {
        let mut cfg = AnalysisConfig::default();
        if let Some(order) = self.order {
            cfg.order = order;
        }
        if let Some(rate) = self.sample_rate {
            cfg.sample_rate = rate;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract a mel-cepstral feature file from a wav.
    Analyze {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Render a feature file back to audio.
    Synthesize {
        input: PathBuf,
        output: PathBuf,
        /// Output gain factor.
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
    },
    /// Copy-synthesis: analyze and immediately resynthesize (quality ceiling).
    Oracle {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Rule-based normal-to-whisper conversion.
    DspConvert {
        input: PathBuf,
        output: PathBuf,
        /// JSON file overriding the recipe (f0_ref, broaden_width_hz, anchors).
        #[arg(long)]
        recipe: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Align two recordings; writes a CSV path (src_idx, tgt_idx, local_cost).
    Align {
        source: PathBuf,
        target: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Train a conversion model on a manifest selection.
    Train {
        /// Corpus manifest (JSON).
        #[arg(long)]
        manifest: PathBuf,
        /// gmm or dnn.
        #[arg(long)]
        model: String,
        /// sd, all, excl, male or female.
        #[arg(long)]
        mode: String,
        /// Target speaker (required for sd/excl).
        #[arg(long)]
        target: Option<String>,
        /// Restrict training to one dataset name.
        #[arg(long)]
        dataset: Option<String>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        /// Also write the split assignment as CSV here.
        #[arg(long)]
        split_csv: Option<PathBuf>,
        /// GMM mixture count.
        #[arg(long, default_value_t = 4)]
        mixtures: usize,
        /// DNN training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// DTW refinement rounds.
        #[arg(long, default_value_t = 2)]
        align_rounds: usize,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Convert a wav with a trained model.
    Convert {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Score systems on the test partition of a manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated systems: oracle, dsp, or name=model-file.
        #[arg(long)]
        systems: String,
        /// Evaluation report CSV.
        #[arg(long)]
        out_csv: PathBuf,
        /// Markdown aggregate table.
        #[arg(long)]
        out_md: Option<PathBuf>,
        /// Restrict evaluation to one speaker's test utterances.
        #[arg(long)]
        speaker: Option<String>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Build a manifest from a speaker/{NORMAL,WHISPER}/*.wav tree.
    MakeManifest {
        root: PathBuf,
        dataset: String,
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be >= 1");
        return ExitCode::from(1);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .ok(); // already-built pool (e.g. in tests) is fine
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Analyze {
            input,
            output,
            analysis,
        } => {
            let cfg = analysis.build()?;
            let basis = MelBasis::new(&cfg)?;
            let w = resample(&read_wav(&input)?, cfg.sample_rate)?;
            let cep = analyze_with(&w, &basis)?;
            write_mcep(&cep, &output)
        }
        Command::Synthesize {
            input,
            output,
            gain,
        } => {
            let cep = read_mcep(&input)?;
            let syn = SynthesisConfig { seed, gain };
            let w = synthesize_with(&cep, &syn, &MelBasis::new(&cep.config)?)?;
            write_wav(&w, &output)
        }
        Command::Oracle {
            input,
            output,
            analysis,
        } => {
            let cfg = analysis.build()?;
            let w = resample(&read_wav(&input)?, cfg.sample_rate)?;
            let syn = SynthesisConfig {
                seed,
                ..SynthesisConfig::default()
            };
            let out = copy_synthesis(&w, &cfg, &syn)?;
            write_wav(&out, &output)
        }
        Command::DspConvert {
            input,
            output,
            recipe,
            analysis,
        } => {
            let cfg = analysis.build()?;
            let recipe = match recipe {
                Some(path) => {
                    serde_json::from_str::<DspRecipeConfig>(&std::fs::read_to_string(&path)?)
                        .map_err(|e| Error::Config(format!("recipe {}: {}", path.display(), e)))?
                }
                None => DspRecipeConfig::default(),
            };
            let w = resample(&read_wav(&input)?, cfg.sample_rate)?;
            let syn = SynthesisConfig {
                seed,
                ..SynthesisConfig::default()
            };
            let out = dsp_convert(&w, &cfg, &syn, &recipe)?;
            write_wav(&out, &output)
        }
        Command::Align {
            source,
            target,
            output,
            analysis,
        } => {
            let cfg = analysis.build()?;
            let basis = MelBasis::new(&cfg)?;
            let src = analyze_with(&resample(&read_wav(&source)?, cfg.sample_rate)?, &basis)?;
            let tgt = analyze_with(&resample(&read_wav(&target)?, cfg.sample_rate)?, &basis)?;
            let (src, _) = trim_silence(&src, TRIM_MARGIN)?;
            let (tgt, _) = trim_silence(&tgt, TRIM_MARGIN)?;
            let path = dtw(&src, &tgt)?;
            let mut csv = String::from("src_idx,tgt_idx,local_cost\n");
            for &(i, j) in &path.pairs {
                let mut cost = 0.0;
                for d in 1..cfg.order {
                    let diff = src.frames[(i, d)] - tgt.frames[(j, d)];
                    cost += diff * diff;
                }
                csv.push_str(&format!("{},{},{:.6}\n", i, j, cost.sqrt()));
            }
            std::fs::write(&output, csv)?;
            Ok(())
        }
        Command::Train {
            manifest,
            model,
            mode,
            target,
            dataset,
            out,
            split_csv,
            mixtures,
            epochs,
            align_rounds,
            analysis,
        } => {
            let cfg = analysis.build()?;
            let kind: ModelKind = model.parse()?;
            let mode: SelectionMode = mode.parse()?;
            let m = load_manifest(&manifest)?;
            let assignment = split(&m, (0.8, 0.1, 0.1), seed)?;
            if let Some(path) = split_csv {
                write_split_csv(&assignment, &path)?;
            }
            let selection =
                select_training_set(&m, &assignment, mode, target.as_deref(), dataset.as_deref())?;
            // validation partition restricted to the selected speakers
            let selected_speakers: std::collections::BTreeSet<&str> =
                selection.iter().map(|u| u.speaker.as_str()).collect();
            let validation: Vec<_> = m
                .utterances
                .iter()
                .filter(|u| assignment.assignments.get(&u.id) == Some(&Partition::Validation))
                .filter(|u| selected_speakers.contains(u.speaker.as_str()))
                .cloned()
                .collect();

            let mut hp = DnnHyperparams::default();
            if let Some(e) = epochs {
                hp.epochs = e;
            }
            let settings = TrainSettings {
                kind,
                mixtures,
                hyperparams: hp,
                align_rounds,
                seed,
                ..TrainSettings::default()
            };
            let mut speakers: Vec<&str> = selected_speakers.into_iter().collect();
            speakers.sort();
            let trained_on = format!(
                "mode={:?} target={} dataset={} speakers=[{}] utterances={}",
                mode,
                target.as_deref().unwrap_or("-"),
                dataset.as_deref().unwrap_or("-"),
                speakers.join(","),
                selection.len()
            );
            let basis = MelBasis::new(&cfg)?;
            let model = train_from_selection(
                &selection,
                Some(&validation),
                &settings,
                &basis,
                &trained_on,
            )?;
            match &model {
                whispervc::formats::ModelFile::Gmm(g) => write_gmmv(g, &out),
                whispervc::formats::ModelFile::Dnn(d) => write_dnnv(d, &out),
            }
        }
        Command::Convert {
            model,
            input,
            output,
        } => {
            let model = load_model(&model)?;
            let basis = MelBasis::new(model.config())?;
            let w = read_wav(&input)?;
            let syn = SynthesisConfig {
                seed,
                ..SynthesisConfig::default()
            };
            let out = convert_waveform(&model, &w, &basis, &syn)?;
            write_wav(&out, &output)
        }
        Command::Evaluate {
            manifest,
            systems,
            out_csv,
            out_md,
            speaker,
            analysis,
        } => {
            let cfg = analysis.build()?;
            let m = load_manifest(&manifest)?;
            let assignment = split(&m, (0.8, 0.1, 0.1), seed)?;
            let test: Vec<_> = m
                .utterances
                .iter()
                .filter(|u| assignment.assignments.get(&u.id) == Some(&Partition::Test))
                .filter(|u| speaker.as_deref().is_none_or(|s| u.speaker == s))
                .cloned()
                .collect();

            let mut specs = Vec::new();
            for item in systems.split(',').filter(|s| !s.is_empty()) {
                match item.to_ascii_lowercase().as_str() {
                    "oracle" => specs.push(SystemSpec::Oracle),
                    "dsp" => specs.push(SystemSpec::Dsp(DspRecipeConfig::default())),
                    _ => {
                        let (name, path) = item.split_once('=').ok_or_else(|| {
                            Error::Config(format!(
                                "system '{}' is not oracle, dsp, or name=model-file",
                                item
                            ))
                        })?;
                        specs.push(SystemSpec::Model(
                            name.to_string(),
                            Box::new(load_model(std::path::Path::new(path))?),
                        ));
                    }
                }
            }
            if specs.is_empty() {
                return Err(Error::Config("no systems to evaluate".into()));
            }
            let basis = MelBasis::new(&cfg)?;
            let syn = SynthesisConfig {
                seed,
                ..SynthesisConfig::default()
            };
            let report = evaluate_systems(&test, &specs, &basis, &syn)?;
            std::fs::write(&out_csv, report.to_csv())?;
            if let Some(md) = out_md {
                std::fs::write(&md, report.to_markdown())?;
            }
            Ok(())
        }
        Command::MakeManifest {
            root,
            dataset,
            output,
        } => {
            let m = manifest_from_tree(&root, &dataset)?;
            let json =
                serde_json::to_string_pretty(&m).map_err(|e| Error::Internal(e.to_string()))?;
            std::fs::write(&output, json)?;
            Ok(())
        }
    }
}
