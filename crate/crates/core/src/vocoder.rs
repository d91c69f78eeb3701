//! Noise-excited mel-cepstral synthesis.
//!
//! Every frame shapes white Gaussian noise by the frame's spectral envelope
//! in the FFT domain (noise phase retained) and the shaped frames are
//! recombined by Hann weighted overlap-add. All synthesis targets are
//! unvoiced, so there is no pulse excitation path.

use crate::audio_io::Waveform;
use crate::error::Result;
use crate::spectral::{hann_window, Cepstrogram, MelBasis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

/// Half of the Euler-Mascheroni constant. The analysis envelope is a fit to
/// the *log* periodogram, whose mean sits e^(-gamma/2) below the log of the
/// mean power for Rayleigh-distributed bins; synthesis adds the offset back
/// so copy-synthesis preserves level.
const HALF_EULER_GAMMA: f64 = 0.5772156649015329 / 2.0;

/// Synthesis parameters: noise generator seed and output gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub seed: u64,
    pub gain: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig { seed: 0, gain: 1.0 }
    }
}

/// Synthesize audio from a Cepstrogram. Output length is T * hop samples;
/// bit-identical for identical inputs and seed.
pub fn synthesize(c: &Cepstrogram, cfg: &SynthesisConfig) -> Result<Waveform> {
    let basis = MelBasis::new(&c.config)?;
    synthesize_with(c, cfg, &basis)
}

/// Synthesize with a prebuilt basis.
#[allow(clippy::needless_range_loop)] // bins are mirrored by index arithmetic
pub fn synthesize_with(
    c: &Cepstrogram,
    cfg: &SynthesisConfig,
    basis: &MelBasis,
) -> Result<Waveform> {
    let acfg = &c.config;
    let fft_size = acfg.fft_size;
    let bins = acfg.num_bins();
    let frame_len = acfg.frame_len;
    let hop = acfg.hop;
    let num_frames = c.num_frames();
    let out_len = num_frames * hop;

    let window = hann_window(frame_len);
    let win_sq_sum: f64 = window.iter().map(|w| w * w).sum();
    // analysis magnitude carries the window energy; divide it back out
    let analysis_scale = 1.0 / win_sq_sum.sqrt();

    let planner = &mut FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_size);
    let ifft = planner.plan_fft_inverse(fft_size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut acc = vec![0.0f64; out_len];
    let mut wsum = vec![0.0f64; out_len];
    let half = frame_len / 2;
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];

    for t in 0..num_frames {
        let env = basis.cepstrum_to_envelope(&c.frame(t))?;
        for item in buf.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *item = Complex::new(n, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..fft_size {
            // mirror the half-spectrum gain onto the conjugate bins
            let bin = if k < bins { k } else { fft_size - k };
            let gain = (env.bins[bin] + HALF_EULER_GAMMA).exp() * analysis_scale;
            buf[k] *= gain;
        }
        ifft.process(&mut buf);
        let inv_n = 1.0 / fft_size as f64;

        let center = (t * hop) as isize;
        for i in 0..frame_len {
            let pos = center - half as isize + i as isize;
            if pos < 0 || pos as usize >= out_len {
                continue;
            }
            let w = window[i];
            acc[pos as usize] += buf[i].re * inv_n * w;
            wsum[pos as usize] += w * w;
        }
    }

    let mut samples: Vec<f64> = acc
        .iter()
        .zip(&wsum)
        .map(|(&a, &ws)| if ws > 1e-12 { a / ws.sqrt() } else { 0.0 })
        .collect();

    // peak-normalize to 0.95 only when the signal would clip
    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    let scale = if peak * cfg.gain > 1.0 {
        0.95 / peak
    } else {
        cfg.gain
    };
    if scale != 1.0 {
        for s in samples.iter_mut() {
            *s *= scale;
        }
    }

    Ok(Waveform::new(samples, acfg.sample_rate))
}

/// Analyze a recording and resynthesize it unchanged (the vocoder's quality
/// ceiling, used as the Oracle system).
pub fn copy_synthesis(
    w: &Waveform,
    cfg_a: &crate::spectral::AnalysisConfig,
    cfg_s: &SynthesisConfig,
) -> Result<Waveform> {
    let basis = MelBasis::new(cfg_a)?;
    let c = crate::spectral::analyze_with(w, &basis)?;
    synthesize_with(&c, cfg_s, &basis)
}
