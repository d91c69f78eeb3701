//! Objective metrics: mel-cepstral distortion, voicing score, spectral tilt.

use crate::align::AlignmentPath;
use crate::audio_io::Waveform;
use crate::error::{Error, Result};
use crate::spectral::{Cepstrogram, LogSpectrum};

/// dB scale factor of the mel-cepstral distortion definition, 10/ln(10).
const MCD_SCALE: f64 = 4.342944819032518;

/// Mean mel-cepstral distortion in dB over paired frames; c0 is excluded.
///
/// With `path = None` frames are paired by index (lengths must match).
pub fn mcd(a: &Cepstrogram, b: &Cepstrogram, path: Option<&AlignmentPath>) -> Result<f64> {
    if a.config.order != b.config.order {
        return Err(Error::Dimension("cepstral orders differ".into()));
    }
    let order = a.config.order;
    let pairs: Vec<(usize, usize)> = match path {
        Some(p) => p.pairs.clone(),
        None => {
            if a.num_frames() != b.num_frames() {
                return Err(Error::Dimension(
                    "frame counts differ and no alignment path given".into(),
                ));
            }
            (0..a.num_frames()).map(|i| (i, i)).collect()
        }
    };
    if pairs.is_empty() {
        return Err(Error::Empty("no paired frames".into()));
    }
    let mut total = 0.0;
    for &(i, j) in &pairs {
        let mut acc = 0.0;
        for d in 1..order {
            let diff = a.frames[(i, d)] - b.frames[(j, d)];
            acc += diff * diff;
        }
        total += MCD_SCALE * (2.0 * acc).sqrt();
    }
    Ok(total / pairs.len() as f64)
}

/// Degree of periodicity in [0, 1].
///
/// Mean over 50%-overlapped 40 ms frames of the maximum normalized
/// autocorrelation in the 60-400 Hz lag range; frames gated to the top half
/// by energy. Voiced speech scores high, whisper and noise low.
pub fn voicing_score(w: &Waveform) -> Result<f64> {
    let rate = w.sample_rate as f64;
    if w.samples.len() as f64 / rate < 0.1 {
        return Err(Error::Empty("need at least 100 ms of audio".into()));
    }
    let frame = (0.040 * rate).round() as usize;
    let hop = frame / 2;
    let lag_min = (rate / 400.0).round() as usize;
    let lag_max = ((rate / 60.0).round() as usize).min(frame - 1);

    let mut frames: Vec<(f64, f64)> = Vec::new(); // (energy, peak autocorr)
    let mut start = 0;
    while start + frame <= w.samples.len() {
        let x = &w.samples[start..start + frame];
        let mean = x.iter().sum::<f64>() / frame as f64;
        let r0: f64 = x.iter().map(|s| (s - mean) * (s - mean)).sum();
        let mut peak = 0.0f64;
        if r0 > 1e-20 {
            for lag in lag_min..=lag_max {
                // normalized cross-correlation over the overlapping region,
                // so the shrinking overlap does not bias the peak down
                let mut r = 0.0;
                let mut e0 = 0.0;
                let mut el = 0.0;
                for i in 0..frame - lag {
                    let a = x[i] - mean;
                    let b = x[i + lag] - mean;
                    r += a * b;
                    e0 += a * a;
                    el += b * b;
                }
                if e0 > 1e-20 && el > 1e-20 {
                    peak = peak.max(r / (e0 * el).sqrt());
                }
            }
        }
        frames.push((r0, peak));
        start += hop;
    }
    if frames.is_empty() {
        return Err(Error::Empty("no analysis frames".into()));
    }

    // near-silent frames (padding) carry no periodicity evidence at all;
    // exclude them before taking the top half by energy
    let max_energy = frames.iter().map(|f| f.0).fold(0.0f64, f64::max);
    if max_energy <= 1e-20 {
        return Ok(0.0);
    }
    let active: Vec<(f64, f64)> = frames
        .iter()
        .cloned()
        .filter(|f| f.0 >= 1e-4 * max_energy)
        .collect();
    let mut energies: Vec<f64> = active.iter().map(|f| f.0).collect();
    energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cutoff = energies[energies.len() / 2];
    let kept: Vec<f64> = active
        .iter()
        .filter(|f| f.0 >= cutoff)
        .map(|f| f.1)
        .collect();
    Ok((kept.iter().sum::<f64>() / kept.len() as f64).clamp(0.0, 1.0))
}

/// Least-squares slope of the log spectrum in dB per octave over 100 Hz - 8 kHz.
pub fn spectral_tilt(s: &LogSpectrum) -> f64 {
    let bins = s.bins.len();
    let bin_hz = s.sample_rate as f64 / 2.0 / (bins - 1) as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..bins {
        let f = k as f64 * bin_hz;
        if (100.0..=8000.0).contains(&f) {
            xs.push(f.log2());
            ys.push(20.0 / std::f64::consts::LN_10 * s.bins[k]);
        }
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}
