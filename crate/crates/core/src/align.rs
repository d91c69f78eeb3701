//! DTW alignment of parallel utterances and iterative refinement.
//!
//! The frame distance is Euclidean over c1..c79: energy (c0) differs
//! systematically between normal and whispered recordings and would dominate
//! the alignment otherwise.

use crate::error::{Error, Result};
use crate::spectral::Cepstrogram;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Monotone frame pairing between a source and a target Cepstrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPath {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Per-utterance provenance of aligned rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UttProvenance {
    pub id: String,
    pub pairs: Vec<(u32, u32)>,
}

/// Concatenated aligned frame pairs: N x (order source + order target).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPairSet {
    pub rows: DMatrix<f64>,
    pub provenance: Vec<UttProvenance>,
    pub order: usize,
}

impl AlignedPairSet {
    pub fn num_rows(&self) -> usize {
        self.rows.nrows()
    }

    /// Row ranges per utterance, in provenance order.
    pub fn utterance_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::with_capacity(self.provenance.len());
        let mut start = 0;
        for p in &self.provenance {
            spans.push((start, start + p.pairs.len()));
            start += p.pairs.len();
        }
        spans
    }
}

/// Default silence threshold below the utterance's c0 maximum (-40 dB in
/// amplitude, i.e. ln(100) in natural-log units).
pub const SILENCE_DROP: f64 = 4.605170185988091;

/// Remove leading/trailing silence, keeping `margin_frames` of context.
///
/// Frames whose c0 falls more than 40 dB below the utterance maximum count
/// as silence. Returns the trimmed Cepstrogram and the offset of its first
/// frame in the input.
pub fn trim_silence(c: &Cepstrogram, margin_frames: usize) -> Result<(Cepstrogram, usize)> {
    let t = c.num_frames();
    if t == 0 {
        return Err(Error::Empty("cannot trim an empty cepstrogram".into()));
    }
    let max_c0 = (0..t)
        .map(|i| c.frames[(i, 0)])
        .fold(f64::NEG_INFINITY, f64::max);
    if max_c0 <= crate::spectral::LOG_FLOOR + 1e-6 {
        return Err(Error::Empty("utterance is entirely silent".into()));
    }
    let threshold = max_c0 - SILENCE_DROP;
    let first = (0..t).find(|&i| c.frames[(i, 0)] >= threshold);
    let last = (0..t).rev().find(|&i| c.frames[(i, 0)] >= threshold);
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Empty("utterance is entirely silent".into())),
    };
    let start = first.saturating_sub(margin_frames);
    let end = (last + 1 + margin_frames).min(t);
    let trimmed = Cepstrogram {
        frames: c.frames.rows(start, end - start).into_owned(),
        config: c.config.clone(),
    };
    Ok((trimmed, start))
}

fn frame_distance(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let order = a.ncols();
    let mut acc = 0.0;
    for d in 1..order {
        let diff = a[(i, d)] - b[(j, d)];
        acc += diff * diff;
    }
    acc.sqrt()
}

/// Minimal-cost monotone alignment with steps (1,1), (1,0), (0,1).
///
/// Ties during backtracking prefer (1,1), then (1,0), then (0,1).
pub fn dtw(src: &Cepstrogram, tgt: &Cepstrogram) -> Result<AlignmentPath> {
    let ts = src.num_frames();
    let tt = tgt.num_frames();
    if ts == 0 || tt == 0 {
        return Err(Error::Empty("DTW requires non-empty inputs".into()));
    }
    if src.config.order != tgt.config.order {
        return Err(Error::Dimension("cepstral orders differ".into()));
    }

    let mut cost = vec![f64::INFINITY; ts * tt];
    let idx = |i: usize, j: usize| i * tt + j;

    for i in 0..ts {
        for j in 0..tt {
            let d = frame_distance(&src.frames, i, &tgt.frames, j);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut m = f64::INFINITY;
                if i > 0 && j > 0 {
                    m = m.min(cost[idx(i - 1, j - 1)]);
                }
                if i > 0 {
                    m = m.min(cost[idx(i - 1, j)]);
                }
                if j > 0 {
                    m = m.min(cost[idx(i, j - 1)]);
                }
                m
            };
            cost[idx(i, j)] = d + best;
        }
    }

    let mut pairs = vec![(ts - 1, tt - 1)];
    let (mut i, mut j) = (ts - 1, tt - 1);
    while i > 0 || j > 0 {
        let mut choices: Vec<((usize, usize), f64)> = Vec::with_capacity(3);
        if i > 0 && j > 0 {
            choices.push(((i - 1, j - 1), cost[idx(i - 1, j - 1)]));
        }
        if i > 0 {
            choices.push(((i - 1, j), cost[idx(i - 1, j)]));
        }
        if j > 0 {
            choices.push(((i, j - 1), cost[idx(i, j - 1)]));
        }
        // order above already encodes the tie preference; strict < keeps it
        let mut best = choices[0];
        for &c in &choices[1..] {
            if c.1 < best.1 {
                best = c;
            }
        }
        i = best.0 .0;
        j = best.0 .1;
        pairs.push((i, j));
    }
    pairs.reverse();

    Ok(AlignmentPath {
        total_cost: cost[idx(ts - 1, tt - 1)],
        pairs,
    })
}

/// Stack aligned frame pairs of one utterance along a path.
pub fn extract_pairs(
    id: &str,
    src: &Cepstrogram,
    tgt: &Cepstrogram,
    path: &AlignmentPath,
) -> AlignedPairSet {
    let order = src.config.order;
    let n = path.pairs.len();
    let mut rows = DMatrix::zeros(n, 2 * order);
    for (r, &(i, j)) in path.pairs.iter().enumerate() {
        for d in 0..order {
            rows[(r, d)] = src.frames[(i, d)];
            rows[(r, order + d)] = tgt.frames[(j, d)];
        }
    }
    AlignedPairSet {
        rows,
        provenance: vec![UttProvenance {
            id: id.to_string(),
            pairs: path
                .pairs
                .iter()
                .map(|&(i, j)| (i as u32, j as u32))
                .collect(),
        }],
        order,
    }
}

/// Concatenate pair sets (same order) preserving utterance provenance.
pub fn concat_pair_sets(sets: &[AlignedPairSet]) -> Result<AlignedPairSet> {
    if sets.is_empty() {
        return Err(Error::Empty("no aligned utterances".into()));
    }
    let order = sets[0].order;
    let total: usize = sets.iter().map(|s| s.num_rows()).sum();
    let mut rows = DMatrix::zeros(total, 2 * order);
    let mut provenance = Vec::new();
    let mut at = 0;
    for s in sets {
        rows.rows_mut(at, s.num_rows()).copy_from(&s.rows);
        at += s.num_rows();
        provenance.extend(s.provenance.iter().cloned());
    }
    Ok(AlignedPairSet {
        rows,
        provenance,
        order,
    })
}

/// One parallel utterance ready for alignment.
pub struct ParallelUtterance {
    pub id: String,
    pub source: Cepstrogram,
    pub target: Cepstrogram,
}

/// Align a corpus with iterative refinement.
///
/// Round 1 aligns raw source to target. Each later round trains an interim
/// conversion model on the current pairs, converts every source utterance,
/// re-runs DTW between converted source and target, and re-extracts pairs
/// from the original source frames along the new path.
pub fn iterative_align<F, C>(
    corpus: &[ParallelUtterance],
    rounds: usize,
    trainer: F,
) -> Result<AlignedPairSet>
where
    F: Fn(&AlignedPairSet) -> Result<C>,
    C: Fn(&Cepstrogram) -> Result<Cepstrogram>,
{
    if corpus.is_empty() {
        return Err(Error::Empty("alignment corpus is empty".into()));
    }
    if rounds == 0 {
        return Err(Error::Config("rounds must be >= 1".into()));
    }

    let mut sets = Vec::with_capacity(corpus.len());
    for utt in corpus {
        let path = dtw(&utt.source, &utt.target)?;
        sets.push(extract_pairs(&utt.id, &utt.source, &utt.target, &path));
    }
    let mut pairs = concat_pair_sets(&sets)?;

    for _ in 1..rounds {
        let convert = trainer(&pairs)?;
        let mut sets = Vec::with_capacity(corpus.len());
        for utt in corpus {
            let converted = convert(&utt.source)?;
            let path = dtw(&converted, &utt.target)?;
            sets.push(extract_pairs(&utt.id, &utt.source, &utt.target, &path));
        }
        pairs = concat_pair_sets(&sets)?;
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::AnalysisConfig;

    fn small_cfg(order: usize) -> AnalysisConfig {
        AnalysisConfig {
            order,
            ..AnalysisConfig::default()
        }
    }

    fn cep(rows: Vec<Vec<f64>>) -> Cepstrogram {
        let order = rows[0].len();
        let t = rows.len();
        let frames = DMatrix::from_fn(t, order, |i, j| rows[i][j]);
        Cepstrogram {
            frames,
            config: small_cfg(order),
        }
    }

    /// Exhaustive minimal-cost search over all monotone paths (oracle).
    fn brute_force_cost(src: &Cepstrogram, tgt: &Cepstrogram) -> f64 {
        fn rec(
            src: &Cepstrogram,
            tgt: &Cepstrogram,
            i: usize,
            j: usize,
            memo: &mut std::collections::HashMap<(usize, usize), f64>,
        ) -> f64 {
            if let Some(&v) = memo.get(&(i, j)) {
                return v;
            }
            let d = {
                let order = src.config.order;
                let mut acc = 0.0;
                for k in 1..order {
                    let diff = src.frames[(i, k)] - tgt.frames[(j, k)];
                    acc += diff * diff;
                }
                acc.sqrt()
            };
            let v = if i == 0 && j == 0 {
                d
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(rec(src, tgt, i - 1, j - 1, memo));
                }
                if i > 0 {
                    best = best.min(rec(src, tgt, i - 1, j, memo));
                }
                if j > 0 {
                    best = best.min(rec(src, tgt, i, j - 1, memo));
                }
                d + best
            };
            memo.insert((i, j), v);
            v
        }
        let mut memo = std::collections::HashMap::new();
        rec(
            src,
            tgt,
            src.num_frames() - 1,
            tgt.num_frames() - 1,
            &mut memo,
        )
    }

    fn random_cep(t: usize, order: usize, seed: u64) -> Cepstrogram {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let frames = DMatrix::from_fn(t, order, |_, _| rng.gen_range(-1.0..1.0));
        Cepstrogram {
            frames,
            config: small_cfg(order),
        }
    }

    #[test]
    fn identical_inputs_align_diagonally_with_zero_cost() {
        let a = random_cep(8, 5, 1);
        let p = dtw(&a, &a).unwrap();
        assert_eq!(p.total_cost, 0.0);
        assert_eq!(p.pairs, (0..8).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn duplicated_target_frames_cost_zero() {
        let src = random_cep(5, 4, 2);
        let mut rows = Vec::new();
        for i in 0..5 {
            let row: Vec<f64> = (0..4).map(|d| src.frames[(i, d)]).collect();
            rows.push(row.clone());
            rows.push(row);
        }
        let tgt = cep(rows);
        let p = dtw(&src, &tgt).unwrap();
        assert!(p.total_cost < 1e-12);
        assert!(p.pairs.first() == Some(&(0, 0)));
        assert!(p.pairs.last() == Some(&(4, 9)));
    }

    #[test]
    fn dtw_matches_exhaustive_search_on_small_instances() {
        for seed in 0..30 {
            let ts = 2 + (seed as usize % 5);
            let tt = 2 + ((seed as usize * 7) % 5);
            let src = random_cep(ts, 4, seed);
            let tgt = random_cep(tt, 4, seed + 1000);
            let p = dtw(&src, &tgt).unwrap();
            let oracle = brute_force_cost(&src, &tgt);
            assert!((p.total_cost - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn path_invariants_hold() {
        let src = random_cep(12, 4, 3);
        let tgt = random_cep(9, 4, 4);
        let p = dtw(&src, &tgt).unwrap();
        assert_eq!(p.pairs[0], (0, 0));
        assert_eq!(*p.pairs.last().unwrap(), (11, 8));
        assert!(p.pairs.len() < 12 + 9);
        assert!(p.pairs.len() >= 12);
        for w in p.pairs.windows(2) {
            let di = w[1].0 as isize - w[0].0 as isize;
            let dj = w[1].1 as isize - w[0].1 as isize;
            assert!(matches!((di, dj), (1, 0) | (0, 1) | (1, 1)));
        }
    }

    #[test]
    fn dtw_cost_is_symmetric() {
        let a = random_cep(10, 4, 5);
        let b = random_cep(7, 4, 6);
        let ab = dtw(&a, &b).unwrap();
        let ba = dtw(&b, &a).unwrap();
        assert!((ab.total_cost - ba.total_cost).abs() < 1e-9);
    }

    #[test]
    fn empty_input_is_error() {
        let a = random_cep(5, 4, 7);
        let empty = Cepstrogram {
            frames: DMatrix::zeros(0, 4),
            config: small_cfg(4),
        };
        assert!(dtw(&a, &empty).is_err());
        assert!(dtw(&empty, &a).is_err());
    }

    #[test]
    fn trim_keeps_loud_utterance_untouched() {
        let mut rows = Vec::new();
        for i in 0..20 {
            rows.push(vec![-1.0 + 0.01 * i as f64, 0.0, 0.0, 0.0]);
        }
        let c = cep(rows);
        let (t, offset) = trim_silence(&c, 5).unwrap();
        assert_eq!(offset, 0);
        assert_eq!(t.num_frames(), 20);
    }

    #[test]
    fn trim_removes_silent_edges_with_margin() {
        let mut rows = Vec::new();
        for _ in 0..100 {
            rows.push(vec![-10.0, 0.0, 0.0, 0.0]);
        }
        for _ in 0..200 {
            rows.push(vec![0.0, 0.0, 0.0, 0.0]);
        }
        for _ in 0..100 {
            rows.push(vec![-10.0, 0.0, 0.0, 0.0]);
        }
        let c = cep(rows);
        let (t, offset) = trim_silence(&c, 5).unwrap();
        assert_eq!(offset, 95);
        assert_eq!(t.num_frames(), 210); // [95, 305)
    }

    #[test]
    fn all_silence_trim_is_error() {
        let rows = vec![vec![crate::spectral::LOG_FLOOR, 0.0, 0.0, 0.0]; 10];
        let c = cep(rows);
        assert!(matches!(trim_silence(&c, 5), Err(Error::Empty(_))));
    }

    #[test]
    fn single_loud_frame_keeps_margin() {
        let mut rows = vec![vec![0.0, 0.0, 0.0, 0.0]];
        for _ in 0..10 {
            rows.push(vec![-10.0, 0.0, 0.0, 0.0]);
        }
        let c = cep(rows);
        let (t, offset) = trim_silence(&c, 0).unwrap();
        assert_eq!(offset, 0);
        assert_eq!(t.num_frames(), 1);
    }

    #[test]
    fn pair_row_count_equals_sum_of_path_lengths() {
        let utts: Vec<ParallelUtterance> = (0..3)
            .map(|k| ParallelUtterance {
                id: format!("u{}", k),
                source: random_cep(6 + k, 4, 100 + k as u64),
                target: random_cep(5 + k, 4, 200 + k as u64),
            })
            .collect();
        let expected: usize = utts
            .iter()
            .map(|u| dtw(&u.source, &u.target).unwrap().pairs.len())
            .sum();
        let pairs = iterative_align(&utts, 1, |_| Ok(|c: &Cepstrogram| Ok(c.clone()))).unwrap();
        assert_eq!(pairs.num_rows(), expected);
    }

    #[test]
    fn identity_corpus_gives_identity_pairs_any_rounds() {
        let utts: Vec<ParallelUtterance> = (0..2)
            .map(|k| {
                let c = random_cep(8, 4, 300 + k as u64);
                ParallelUtterance {
                    id: format!("u{}", k),
                    source: c.clone(),
                    target: c,
                }
            })
            .collect();
        let pairs = iterative_align(&utts, 3, |_| Ok(|c: &Cepstrogram| Ok(c.clone()))).unwrap();
        for p in &pairs.provenance {
            for (k, &(i, j)) in p.pairs.iter().enumerate() {
                assert_eq!(i as usize, k);
                assert_eq!(j as usize, k);
            }
        }
    }
}
