//! Manifest-driven corpus handling.
//!
//! - JSON manifest of parallel normal/whisper recordings
//! - deterministic per-speaker 80/10/10 splits (largest-remainder rounding)
//! - training-set selection regimes: SD, All, Excl, Male, Female
//! - helper to build a manifest from a `speaker/{NORMAL,WHISPER}/*.wav` tree

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Speaker gender, used by the Male/Female selection regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

/// One parallel normal/whisper recording pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub gender: Gender,
    #[serde(default)]
    pub locale: String,
    #[serde(default)]
    pub dataset: String,
    pub normal_path: PathBuf,
    pub whisper_path: PathBuf,
}

/// A validated utterance inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub utterances: Vec<Utterance>,
}

/// Train / validation / test partition label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

/// Deterministic utterance-id -> partition map.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub assignments: BTreeMap<String, Partition>,
    pub seed: u64,
}

/// Training-set selection regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Only the evaluated speaker.
    Sd,
    /// Every training speaker.
    All,
    /// Every training speaker except the evaluated one.
    Excl,
    Male,
    Female,
}

impl std::str::FromStr for SelectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sd" => Ok(SelectionMode::Sd),
            "all" => Ok(SelectionMode::All),
            "excl" => Ok(SelectionMode::Excl),
            "male" => Ok(SelectionMode::Male),
            "female" => Ok(SelectionMode::Female),
            other => Err(Error::Config(format!("unknown selection mode '{}'", other))),
        }
    }
}

/// Load and validate a manifest: unique ids, non-empty, all audio present.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    let mut m: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {}", path.display(), e)))?;
    // relative paths are resolved against the manifest's directory
    if let Some(base) = path.parent() {
        for u in &mut m.utterances {
            if u.normal_path.is_relative() {
                u.normal_path = base.join(&u.normal_path);
            }
            if u.whisper_path.is_relative() {
                u.whisper_path = base.join(&u.whisper_path);
            }
        }
    }
    validate_manifest(&m)?;
    Ok(m)
}

fn validate_manifest(m: &Manifest) -> Result<()> {
    if m.utterances.is_empty() {
        return Err(Error::Manifest("manifest has no utterances".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for u in &m.utterances {
        if !seen.insert(&u.id) {
            return Err(Error::Manifest(format!(
                "duplicate utterance id '{}'",
                u.id
            )));
        }
    }
    let mut missing = Vec::new();
    for u in &m.utterances {
        if !u.normal_path.exists() {
            missing.push(format!("{} ({})", u.id, u.normal_path.display()));
        }
        if !u.whisper_path.exists() {
            missing.push(format!("{} ({})", u.id, u.whisper_path.display()));
        }
    }
    if !missing.is_empty() {
        return Err(Error::Manifest(format!(
            "missing audio files: {}",
            missing.join(", ")
        )));
    }
    Ok(())
}

/// Build a manifest from a `speaker/{NORMAL,WHISPER}/*.wav` tree by matching
/// file stems. Gender is inferred from the speaker directory's first letter
/// ('m'/'f', case-insensitive); other prefixes are an error.
pub fn manifest_from_tree(root: &Path, dataset: &str) -> Result<Manifest> {
    let mut utterances = Vec::new();
    let mut speakers: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    speakers.sort();
    for spk_dir in speakers {
        let speaker = spk_dir
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let gender = match speaker.chars().next().map(|c| c.to_ascii_lowercase()) {
            Some('m') => Gender::Male,
            Some('f') => Gender::Female,
            _ => {
                return Err(Error::Manifest(format!(
                    "cannot infer gender for speaker '{}' (expected m*/f* name)",
                    speaker
                )))
            }
        };
        let normal_dir = spk_dir.join("NORMAL");
        let whisper_dir = spk_dir.join("WHISPER");
        if !normal_dir.is_dir() || !whisper_dir.is_dir() {
            continue;
        }
        let mut stems: Vec<String> = std::fs::read_dir(&normal_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "wav"))
            .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(String::from))
            .collect();
        stems.sort();
        for stem in stems {
            let whisper = whisper_dir.join(format!("{}.wav", stem));
            if !whisper.exists() {
                continue;
            }
            utterances.push(Utterance {
                id: format!("{}_{}", speaker, stem),
                speaker: speaker.clone(),
                gender,
                locale: String::new(),
                dataset: dataset.to_string(),
                normal_path: normal_dir.join(format!("{}.wav", stem)),
                whisper_path: whisper,
            });
        }
    }
    let m = Manifest {
        dataset: dataset.to_string(),
        utterances,
    };
    validate_manifest(&m)?;
    Ok(m)
}

/// Largest-remainder apportionment of `n` items over the three partitions.
fn apportion(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let targets = [
        n as f64 * ratios.0,
        n as f64 * ratios.1,
        n as f64 * ratios.2,
    ];
    let mut counts = [
        targets[0].floor() as usize,
        targets[1].floor() as usize,
        targets[2].floor() as usize,
    ];
    let mut leftover = n - counts.iter().sum::<usize>();
    // hand out remaining items by descending fractional remainder,
    // ties broken train > validation > test
    let mut order: Vec<usize> = vec![0, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = targets[a] - targets[a].floor();
        let rb = targets[b] - targets[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    counts
}

/// Per-speaker seeded shuffle, then contiguous slicing by ratio.
pub fn split(m: &Manifest, ratios: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
    if (ratios.0 + ratios.1 + ratios.2 - 1.0).abs() > 1e-9 {
        return Err(Error::Config("split ratios must sum to 1".into()));
    }
    let mut by_speaker: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for u in &m.utterances {
        by_speaker.entry(&u.speaker).or_default().push(&u.id);
    }
    let mut assignments = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (speaker, mut ids) in by_speaker {
        if ids.len() < 3 {
            return Err(Error::Manifest(format!(
                "speaker '{}' has {} utterances, need at least 3 to split",
                speaker,
                ids.len()
            )));
        }
        ids.sort(); // manifest-order independence
        ids.shuffle(&mut rng);
        let counts = apportion(ids.len(), ratios);
        let mut at = 0;
        for (part, &count) in [Partition::Train, Partition::Validation, Partition::Test]
            .iter()
            .zip(&counts)
        {
            for id in &ids[at..at + count] {
                assignments.insert(id.to_string(), *part);
            }
            at += count;
        }
    }
    Ok(SplitAssignment { assignments, seed })
}

/// Persist a split as `id,partition` CSV (sorted by id).
pub fn write_split_csv(s: &SplitAssignment, path: &Path) -> Result<()> {
    let mut out = String::from("id,partition\n");
    for (id, part) in &s.assignments {
        out.push_str(id);
        out.push(',');
        out.push_str(part.as_str());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Train-partition utterances filtered by regime and optional dataset.
pub fn select_training_set(
    m: &Manifest,
    s: &SplitAssignment,
    mode: SelectionMode,
    target_speaker: Option<&str>,
    dataset_filter: Option<&str>,
) -> Result<Vec<Utterance>> {
    let target = match mode {
        SelectionMode::Sd | SelectionMode::Excl => Some(target_speaker.ok_or_else(|| {
            Error::Selection("SD and Excl modes require a target speaker".into())
        })?),
        _ => None,
    };
    let selected: Vec<Utterance> = m
        .utterances
        .iter()
        .filter(|u| s.assignments.get(&u.id) == Some(&Partition::Train))
        .filter(|u| dataset_filter.is_none_or(|d| u.dataset == d))
        .filter(|u| match mode {
            SelectionMode::Sd => u.speaker == target.unwrap(),
            SelectionMode::All => true,
            SelectionMode::Excl => u.speaker != target.unwrap(),
            SelectionMode::Male => u.gender == Gender::Male,
            SelectionMode::Female => u.gender == Gender::Female,
        })
        .cloned()
        .collect();
    if selected.is_empty() {
        return Err(Error::Selection(format!(
            "no training utterances match mode {:?}",
            mode
        )));
    }
    Ok(selected)
}
