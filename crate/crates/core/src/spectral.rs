//! Mel-cepstral analysis: waveform -> 80-coefficient warped cepstra and back
//! to log spectral envelopes.
//!
//! The frequency axis is warped by the first-order all-pass map
//! `w~ = w + 2*atan(a*sin w / (1 - a*cos w))`. A frame's cepstrum is the
//! least-squares fit of the warped cosine series to the log magnitude
//! spectrum on the uniform FFT grid, which makes envelope reconstruction an
//! exact inverse on order-limited envelopes.

use crate::audio_io::Waveform;
use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

/// Log-magnitude floor applied before cepstral fitting (ln of 1e-10).
pub const LOG_FLOOR: f64 = -23.025850929940457;

/// Frame analysis parameters. Defaults follow the toolkit's 24 kHz setup:
/// 50 ms Hanning windows, 5 ms hop, 80 coefficients, warp factor 0.466.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub order: usize,
    pub warp_alpha: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            sample_rate: 24000,
            frame_len: 1200,
            hop: 120,
            fft_size: 2048,
            order: 80,
            warp_alpha: 0.466,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if self.frame_len > self.fft_size {
            return Err(Error::Config("frame_len must not exceed fft_size".into()));
        }
        if self.hop == 0 || self.frame_len == 0 || self.order == 0 {
            return Err(Error::Config(
                "hop, frame_len and order must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.warp_alpha) {
            return Err(Error::Config("warp_alpha must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Number of spectrum bins (fft_size/2 + 1).
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Width of one FFT bin in Hz.
    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.fft_size as f64
    }
}

/// Time sequence of mel-cepstral frames (T x order, natural-log domain).
#[derive(Debug, Clone, PartialEq)]
pub struct Cepstrogram {
    pub frames: DMatrix<f64>,
    pub config: AnalysisConfig,
}

impl Cepstrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn frame(&self, t: usize) -> DVector<f64> {
        self.frames.row(t).transpose()
    }
}

/// Real log-magnitude spectrum on the uniform half grid (natural log).
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpectrum {
    pub bins: DVector<f64>,
    pub sample_rate: u32,
}

/// All-pass warped frequency: `w~ = w + 2*atan(a*sin w / (1 - a*cos w))`.
pub fn warp_frequency(omega: f64, alpha: f64) -> f64 {
    omega + 2.0 * (alpha * omega.sin() / (1.0 - alpha * omega.cos())).atan()
}

/// Precomputed warped-cosine basis and its normal-equation factorization.
///
/// `phi[k][d] = cos(d * w~(w_k))` with `w_k` the uniform FFT half-grid.
pub struct MelBasis {
    config: AnalysisConfig,
    phi: DMatrix<f64>,
    normal: Cholesky<f64, Dyn>,
}

impl MelBasis {
    pub fn new(config: &AnalysisConfig) -> Result<Self> {
        config.validate()?;
        let bins = config.num_bins();
        let order = config.order;
        let mut phi = DMatrix::zeros(bins, order);
        for k in 0..bins {
            let omega = std::f64::consts::PI * k as f64 / (bins - 1) as f64;
            let warped = warp_frequency(omega, config.warp_alpha);
            for d in 0..order {
                phi[(k, d)] = (d as f64 * warped).cos();
            }
        }
        let gram = phi.transpose() * &phi;
        let normal = Cholesky::new(gram)
            .ok_or_else(|| Error::Internal("warped cosine basis is rank-deficient".into()))?;
        Ok(MelBasis {
            config: config.clone(),
            phi,
            normal,
        })
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.config
    }

    /// Least-squares fit of the warped cosine series to a log spectrum.
    pub fn envelope_to_cepstrum(&self, s: &LogSpectrum) -> Result<DVector<f64>> {
        if s.bins.len() != self.config.num_bins() {
            return Err(Error::Dimension(format!(
                "expected {} spectrum bins, got {}",
                self.config.num_bins(),
                s.bins.len()
            )));
        }
        let rhs = self.phi.transpose() * &s.bins;
        Ok(self.normal.solve(&rhs))
    }

    /// Evaluate the warped cosine series on the uniform FFT grid.
    pub fn cepstrum_to_envelope(&self, c: &DVector<f64>) -> Result<LogSpectrum> {
        if c.len() != self.config.order {
            return Err(Error::Dimension(format!(
                "expected {} cepstral coefficients, got {}",
                self.config.order,
                c.len()
            )));
        }
        Ok(LogSpectrum {
            bins: &self.phi * c,
            sample_rate: self.config.sample_rate,
        })
    }
}

/// Convenience wrapper around [`MelBasis::envelope_to_cepstrum`].
pub fn envelope_to_cepstrum(s: &LogSpectrum, cfg: &AnalysisConfig) -> Result<DVector<f64>> {
    MelBasis::new(cfg)?.envelope_to_cepstrum(s)
}

/// Convenience wrapper around [`MelBasis::cepstrum_to_envelope`].
pub fn cepstrum_to_envelope(c: &DVector<f64>, cfg: &AnalysisConfig) -> Result<LogSpectrum> {
    MelBasis::new(cfg)?.cepstrum_to_envelope(c)
}

/// Sample at `pos` with reflection at the signal edges.
fn reflect_sample(x: &[f64], pos: isize) -> f64 {
    let n = x.len() as isize;
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return x[0];
    }
    let mut p = pos;
    // reflect without repeating the edge sample, period 2(n-1)
    let period = 2 * (n - 1);
    p = p.rem_euclid(period);
    if p >= n {
        p = period - p;
    }
    x[p as usize]
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Per-frame log magnitude spectra of a waveform (centered frames, reflect
/// padding, Hann window, floor at ln(1e-10)).
pub fn log_spectrogram(w: &Waveform, cfg: &AnalysisConfig) -> Result<Vec<LogSpectrum>> {
    cfg.validate()?;
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::Config(format!(
            "waveform rate {} does not match analysis rate {}",
            w.sample_rate, cfg.sample_rate
        )));
    }
    let num_frames = w.samples.len().div_ceil(cfg.hop);
    let window = hann_window(cfg.frame_len);
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let bins = cfg.num_bins();
    let half = cfg.frame_len as isize / 2;

    let mut out = Vec::with_capacity(num_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    for t in 0..num_frames {
        let center = (t * cfg.hop) as isize;
        for (i, item) in buf.iter_mut().enumerate().take(cfg.fft_size) {
            *item = if i < cfg.frame_len {
                let pos = center - half + i as isize;
                Complex::new(reflect_sample(&w.samples, pos) * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let mut logmag = DVector::zeros(bins);
        for k in 0..bins {
            logmag[k] = buf[k].norm().max(1e-10).ln();
        }
        out.push(LogSpectrum {
            bins: logmag,
            sample_rate: cfg.sample_rate,
        });
    }
    Ok(out)
}

/// Analyze a waveform into a Cepstrogram. Frame count is ceil(len / hop).
pub fn analyze(w: &Waveform, cfg: &AnalysisConfig) -> Result<Cepstrogram> {
    let basis = MelBasis::new(cfg)?;
    analyze_with(w, &basis)
}

/// Analyze with a prebuilt basis (saves the basis setup across utterances).
pub fn analyze_with(w: &Waveform, basis: &MelBasis) -> Result<Cepstrogram> {
    let cfg = basis.config();
    let spectra = log_spectrogram(w, cfg)?;
    let mut frames = DMatrix::zeros(spectra.len(), cfg.order);
    for (t, s) in spectra.iter().enumerate() {
        let c = basis.envelope_to_cepstrum(s)?;
        frames.row_mut(t).copy_from(&c.transpose());
    }
    Ok(Cepstrogram {
        frames,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> AnalysisConfig {
        AnalysisConfig::default()
    }

    #[test]
    fn one_second_is_200_frames() {
        let w = Waveform::new(vec![0.0; 24000], 24000);
        let c = analyze(&w, &cfg()).unwrap();
        assert_eq!(c.num_frames(), 200);
    }

    #[test]
    fn frame_count_depends_only_on_length() {
        let silent = Waveform::new(vec![0.0; 10001], 24000);
        let noisy = Waveform::new(
            (0..10001)
                .map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5)
                .collect(),
            24000,
        );
        let a = analyze(&silent, &cfg()).unwrap();
        let b = analyze(&noisy, &cfg()).unwrap();
        assert_eq!(a.num_frames(), b.num_frames());
        assert_eq!(a.num_frames(), 10001usize.div_ceil(120));
    }

    #[test]
    fn impulse_frame_is_flat_spectrum() {
        // impulse at a frame center: magnitude spectrum is constant A
        let mut samples = vec![0.0; 24000];
        let amp = 0.5;
        samples[1200] = amp; // center of frame t=10
        let w = Waveform::new(samples, 24000);
        let c = analyze(&w, &cfg()).unwrap();
        let frame = c.frame(10);
        assert_abs_diff_eq!(frame[0], amp.ln(), epsilon = 1e-9);
        for d in 1..80 {
            assert!(frame[d].abs() < 1e-6, "c{} = {}", d, frame[d]);
        }
    }

    #[test]
    fn silence_hits_log_floor() {
        let w = Waveform::new(vec![0.0; 2400], 24000);
        let c = analyze(&w, &cfg()).unwrap();
        for t in 0..c.num_frames() {
            let frame = c.frame(t);
            assert_abs_diff_eq!(frame[0], LOG_FLOOR, epsilon = 1e-9);
            for d in 1..80 {
                assert!(frame[d].abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sample_rate_mismatch_rejected() {
        let w = Waveform::new(vec![0.0; 100], 16000);
        assert!(matches!(analyze(&w, &cfg()), Err(Error::Config(_))));
    }

    #[test]
    fn constant_cepstrum_gives_constant_envelope() {
        let mut c = DVector::zeros(80);
        c[0] = 2.0f64.ln();
        let env = cepstrum_to_envelope(&c, &cfg()).unwrap();
        for k in 0..env.bins.len() {
            assert_abs_diff_eq!(env.bins[k], 2.0f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_envelope_gives_constant_cepstrum() {
        let cfg = cfg();
        let env = LogSpectrum {
            bins: DVector::from_element(cfg.num_bins(), 3.0f64.ln()),
            sample_rate: cfg.sample_rate,
        };
        let c = envelope_to_cepstrum(&env, &cfg).unwrap();
        assert_abs_diff_eq!(c[0], 3.0f64.ln(), epsilon = 1e-9);
        for d in 1..80 {
            assert!(c[d].abs() < 1e-9);
        }
    }

    #[test]
    fn roundtrip_exact_on_order_limited_envelopes() {
        use rand::{Rng, SeedableRng};
        let cfg = cfg();
        let basis = MelBasis::new(&cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let c: DVector<f64> = DVector::from_fn(80, |_, _| rng.gen_range(-1.0..1.0));
        let env = basis.cepstrum_to_envelope(&c).unwrap();
        let back = basis.envelope_to_cepstrum(&env).unwrap();
        for d in 0..80 {
            assert_abs_diff_eq!(back[d], c[d], epsilon = 1e-6);
        }
    }

    #[test]
    fn single_cosine_tilts_envelope() {
        let mut c = DVector::zeros(80);
        c[1] = 0.5;
        let env = cepstrum_to_envelope(&c, &cfg()).unwrap();
        let n = env.bins.len();
        assert!(env.bins[0] > 0.0);
        assert!(env.bins[n - 1] < 0.0);
        // monotone along the warped axis since cos is monotone on [0, pi]
        for k in 1..n {
            assert!(env.bins[k] <= env.bins[k - 1] + 1e-12);
        }
    }

    #[test]
    fn gain_shifts_only_c0() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..4800).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let scaled: Vec<f64> = samples.iter().map(|s| s * 2.0).collect();
        let a = analyze(&Waveform::new(samples, 24000), &cfg()).unwrap();
        let b = analyze(&Waveform::new(scaled, 24000), &cfg()).unwrap();
        for t in 0..a.num_frames() {
            assert_abs_diff_eq!(
                b.frames[(t, 0)] - a.frames[(t, 0)],
                2.0f64.ln(),
                epsilon = 1e-6
            );
            for d in 1..80 {
                assert_abs_diff_eq!(b.frames[(t, d)], a.frames[(t, d)], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn warp_map_monotone_and_fixes_endpoints() {
        let alpha = 0.466;
        assert_abs_diff_eq!(warp_frequency(0.0, alpha), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            warp_frequency(std::f64::consts::PI, alpha),
            std::f64::consts::PI,
            epsilon = 1e-12
        );
        let mut prev = 0.0;
        for i in 1..=1000 {
            let w = std::f64::consts::PI * i as f64 / 1000.0;
            let wt = warp_frequency(w, alpha);
            assert!(wt > prev);
            prev = wt;
        }
    }

    #[test]
    fn zero_alpha_reduces_to_plain_cosine_basis() {
        let cfg = AnalysisConfig {
            warp_alpha: 0.0,
            ..AnalysisConfig::default()
        };
        let basis = MelBasis::new(&cfg).unwrap();
        // an envelope that is a plain cosine in omega must come back as c1
        let bins = DVector::from_fn(cfg.num_bins(), |k, _| {
            (std::f64::consts::PI * k as f64 / (cfg.num_bins() - 1) as f64).cos()
        });
        let c = basis
            .envelope_to_cepstrum(&LogSpectrum {
                bins,
                sample_rate: cfg.sample_rate,
            })
            .unwrap();
        assert_abs_diff_eq!(c[1], 1.0, epsilon = 1e-9);
        for d in 0..80 {
            if d != 1 {
                assert!(c[d].abs() < 1e-9);
            }
        }
    }
}
