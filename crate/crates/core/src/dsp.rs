//! Rule-based whisper conversion.
//!
//! Three per-frame edits of the log spectral envelope, followed by unvoiced
//! resynthesis: 1) subtract a fixed glottal-pulse spectrum template,
//! 2) shift the first formant up ~100 Hz by piecewise-linear frequency
//! warping, 3) broaden formants with a 400 Hz triangular moving average.

use crate::audio_io::Waveform;
use crate::error::{Error, Result};
use crate::spectral::{analyze_with, AnalysisConfig, LogSpectrum, MelBasis};
use crate::vocoder::{synthesize_with, SynthesisConfig};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Log-magnitude spectrum of a typical glottal pulse, peak-normalized to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GlottalTemplate {
    pub bins: DVector<f64>,
}

/// Piecewise-linear frequency map given as (input Hz -> output Hz) anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpAnchors {
    pub breakpoints: Vec<(f64, f64)>,
}

impl WarpAnchors {
    /// F1 shifted +100 Hz in the 400-900 Hz band, identity at and above
    /// 1400 Hz so F2/F3 stay put.
    pub fn default_for(nyquist: f64) -> Self {
        WarpAnchors {
            breakpoints: vec![
                (0.0, 0.0),
                (300.0, 350.0),
                (400.0, 500.0),
                (900.0, 1000.0),
                (1400.0, 1400.0),
                (nyquist, nyquist),
            ],
        }
    }

    pub fn identity(nyquist: f64) -> Self {
        WarpAnchors {
            breakpoints: vec![(0.0, 0.0), (nyquist, nyquist)],
        }
    }

    pub fn validate(&self, nyquist: f64) -> Result<()> {
        let bp = &self.breakpoints;
        if bp.len() < 2 {
            return Err(Error::Config("need at least two warp anchors".into()));
        }
        if bp[0] != (0.0, 0.0) {
            return Err(Error::Config("first warp anchor must be (0, 0)".into()));
        }
        let last = bp[bp.len() - 1];
        if (last.0 - nyquist).abs() > 1e-6 || (last.1 - nyquist).abs() > 1e-6 {
            return Err(Error::Config(
                "last warp anchor must be (Nyquist, Nyquist)".into(),
            ));
        }
        for w in bp.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(Error::Config(
                    "warp anchors must be strictly increasing in both coordinates".into(),
                ));
            }
        }
        Ok(())
    }

    /// Inverse map: output Hz -> input Hz.
    fn inverse(&self, f_out: f64) -> f64 {
        let bp = &self.breakpoints;
        for w in bp.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            if f_out <= y1 || w[1] == bp[bp.len() - 1] {
                return x0 + (f_out - y0) * (x1 - x0) / (y1 - y0);
            }
        }
        f_out
    }
}

/// Tunable parameters of the recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DspRecipeConfig {
    pub f0_ref: f64,
    pub broaden_width_hz: f64,
    pub anchors: Option<WarpAnchors>,
}

impl Default for DspRecipeConfig {
    fn default() -> Self {
        DspRecipeConfig {
            f0_ref: 150.0,
            broaden_width_hz: 400.0,
            anchors: None,
        }
    }
}

// LF model shape parameters, fixed at a modal configuration.
const LF_RA: f64 = 0.01;
const LF_RK: f64 = 0.34;
const LF_RG: f64 = 1.0;

/// One period of the LF glottal flow derivative, in normalized time t in
/// [0, 1) with Ee = 1 at t = te.
fn lf_waveform(num_samples: usize) -> Vec<f64> {
    let tp = 1.0 / (2.0 * LF_RG);
    let te = tp * (1.0 + LF_RK);
    let ta = LF_RA;
    let tc = 1.0;
    let omega_g = std::f64::consts::PI / tp;

    // return-phase decay from the LF closure condition
    let mut eps = 1.0 / ta;
    for _ in 0..50 {
        let g = eps * ta - 1.0 + (-eps * (tc - te)).exp();
        let gp = ta - (tc - te) * (-eps * (tc - te)).exp();
        let step = g / gp;
        eps -= step;
        if step.abs() < 1e-12 * eps.abs() {
            break;
        }
    }

    let sample = |alpha: f64| -> Vec<f64> {
        let e0 = -1.0 / ((alpha * te).exp() * (omega_g * te).sin());
        (0..num_samples)
            .map(|i| {
                let t = i as f64 / num_samples as f64;
                if t < te {
                    e0 * (alpha * t).exp() * (omega_g * t).sin()
                } else {
                    -(1.0 / (eps * ta)) * ((-eps * (t - te)).exp() - (-eps * (tc - te)).exp())
                }
            })
            .collect()
    };

    // growth factor alpha from the zero-net-flow (area balance) condition,
    // solved by bisection on the sampled period
    let area = |alpha: f64| sample(alpha).iter().sum::<f64>();
    let (mut lo, mut hi) = (-50.0, 50.0);
    let (a_lo, a_hi) = (area(lo), area(hi));
    if a_lo.signum() == a_hi.signum() {
        // modal parameters always bracket in practice; fall back to alpha = 0
        return sample(0.0);
    }
    let rising = a_hi > a_lo;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let a = area(mid);
        if (a > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    sample(0.5 * (lo + hi))
}

/// Smoothed, peak-normalized log-magnitude spectrum of one LF pulse period
/// at `f0_ref` Hz.
pub fn glottal_template(cfg: &AnalysisConfig, f0_ref: f64) -> Result<GlottalTemplate> {
    if !(50.0..=400.0).contains(&f0_ref) {
        return Err(Error::Config(format!(
            "f0_ref {} outside [50, 400] Hz",
            f0_ref
        )));
    }
    cfg.validate()?;
    if (cfg.sample_rate as f64 / f0_ref).round() as usize > cfg.fft_size {
        return Err(Error::Config("glottal period exceeds FFT size".into()));
    }
    // Sample the pulse at 8x the analysis rate and transform with an 8x
    // longer FFT: bin spacing is unchanged, but the spectrum approximates
    // the continuous-time one, so near-Nyquist bins no longer jump when the
    // period's fractional sample position moves with f0.
    const OS: usize = 8;
    let period = (cfg.sample_rate as f64 * OS as f64 / f0_ref).round() as usize;
    let pulse = lf_waveform(period);

    use rustfft::{num_complex::Complex, FftPlanner};
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size * OS];
    for (i, &v) in pulse.iter().enumerate() {
        buf[i] = Complex::new(v, 0.0);
    }
    FftPlanner::new()
        .plan_fft_forward(cfg.fft_size * OS)
        .process(&mut buf);
    // smooth the magnitude before taking the log: the pulse spectrum has
    // deep nulls whose positions shift with f0, and averaging in the linear
    // domain fills them in so the template is stable under small f0 changes
    let magnitude = LogSpectrum {
        bins: DVector::from_fn(cfg.num_bins(), |k, _| buf[k].norm()),
        sample_rate: cfg.sample_rate,
    };
    let smoothed = broaden_formants(&magnitude, 400.0)?;
    let bins = smoothed.bins.map(|v| v.max(1e-10).ln());
    let max = bins.max();
    Ok(GlottalTemplate {
        bins: bins.add_scalar(-max),
    })
}

/// Step 1: subtract the glottal template from a log envelope.
pub fn remove_glottal_shaping(s: &LogSpectrum, t: &GlottalTemplate) -> Result<LogSpectrum> {
    if s.bins.len() != t.bins.len() {
        return Err(Error::Dimension(format!(
            "envelope has {} bins, template {}",
            s.bins.len(),
            t.bins.len()
        )));
    }
    Ok(LogSpectrum {
        bins: &s.bins - &t.bins,
        sample_rate: s.sample_rate,
    })
}

/// Step 2: warp the envelope's frequency axis by the anchor map.
pub fn warp_formant1(s: &LogSpectrum, anchors: &WarpAnchors) -> Result<LogSpectrum> {
    let bins = s.bins.len();
    let nyquist = s.sample_rate as f64 / 2.0;
    anchors.validate(nyquist)?;
    let bin_hz = nyquist / (bins - 1) as f64;
    let mut out = DVector::zeros(bins);
    for k in 0..bins {
        let f_out = k as f64 * bin_hz;
        let f_in = anchors.inverse(f_out).clamp(0.0, nyquist);
        let pos = f_in / bin_hz;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(bins - 1);
        let frac = pos - lo as f64;
        out[k] = s.bins[lo] * (1.0 - frac) + s.bins[hi] * frac;
    }
    Ok(LogSpectrum {
        bins: out,
        sample_rate: s.sample_rate,
    })
}

/// Step 3: triangular moving average of total width `width_hz` (unit area,
/// edges handled by replication).
pub fn broaden_formants(s: &LogSpectrum, width_hz: f64) -> Result<LogSpectrum> {
    if width_hz <= 0.0 {
        return Err(Error::Config("broadening width must be positive".into()));
    }
    let bins = s.bins.len();
    let bin_hz = s.sample_rate as f64 / 2.0 / (bins - 1) as f64;
    let half = ((width_hz / 2.0) / bin_hz).round() as isize;
    if half == 0 {
        return Ok(s.clone());
    }
    let mut weights = Vec::with_capacity((2 * half + 1) as usize);
    for j in -half..=half {
        weights.push((half + 1 - j.abs()) as f64);
    }
    let wsum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= wsum;
    }
    let mut out = DVector::zeros(bins);
    for k in 0..bins as isize {
        let mut acc = 0.0;
        for (wi, j) in (-half..=half).enumerate() {
            let idx = (k + j).clamp(0, bins as isize - 1) as usize;
            acc += weights[wi] * s.bins[idx];
        }
        out[k as usize] = acc;
    }
    Ok(LogSpectrum {
        bins: out,
        sample_rate: s.sample_rate,
    })
}

/// Full recipe: analyze, edit every frame's envelope (steps 1-3, c0 kept
/// from the input frame), resynthesize with noise excitation.
pub fn dsp_convert(
    w: &Waveform,
    cfg_a: &AnalysisConfig,
    cfg_s: &SynthesisConfig,
    recipe: &DspRecipeConfig,
) -> Result<Waveform> {
    let basis = MelBasis::new(cfg_a)?;
    let cep = analyze_with(w, &basis)?;
    let converted = dsp_convert_features(&cep, &basis, recipe)?;
    synthesize_with(&converted, cfg_s, &basis)
}

/// Feature-domain recipe (steps 1-3) without synthesis.
pub fn dsp_convert_features(
    cep: &crate::spectral::Cepstrogram,
    basis: &MelBasis,
    recipe: &DspRecipeConfig,
) -> Result<crate::spectral::Cepstrogram> {
    let cfg_a = basis.config();
    let template = glottal_template(cfg_a, recipe.f0_ref)?;
    let nyquist = cfg_a.sample_rate as f64 / 2.0;
    let anchors = recipe
        .anchors
        .clone()
        .unwrap_or_else(|| WarpAnchors::default_for(nyquist));
    anchors.validate(nyquist)?;

    let mut frames = cep.frames.clone();
    for t in 0..cep.num_frames() {
        let c = cep.frame(t);
        let env = basis.cepstrum_to_envelope(&c)?;
        let step1 = remove_glottal_shaping(&env, &template)?;
        let step2 = warp_formant1(&step1, &anchors)?;
        let step3 = broaden_formants(&step2, recipe.broaden_width_hz)?;
        let mut c_out = basis.envelope_to_cepstrum(&step3)?;
        c_out[0] = c[0]; // loudness is not one of the three edits
        frames.row_mut(t).copy_from(&c_out.transpose());
    }
    Ok(crate::spectral::Cepstrogram {
        frames,
        config: cfg_a.clone(),
    })
}
