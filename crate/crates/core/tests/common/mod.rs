//! Synthetic parallel corpus for integration tests.
//!
//! "Normal" utterances are pulse-train-excited formant sequences (strongly
//! periodic, glottal-style spectral tilt). Their "whispered" counterparts
//! use noise excitation with the first formant shifted up, broader formant
//! bandwidths, a flatter tilt, and per-segment duration changes so alignment
//! is non-trivial. Everything is deterministic per (speaker, utterance).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use whispervc::audio_io::Waveform;

pub const RATE: u32 = 24000;

#[derive(Debug, Clone)]
pub struct Speaker {
    pub id: String,
    pub f0: f64,
}

pub fn speakers() -> Vec<Speaker> {
    vec![
        Speaker {
            id: "m001".into(),
            f0: 115.0,
        },
        Speaker {
            id: "m002".into(),
            f0: 132.0,
        },
        Speaker {
            id: "f003".into(),
            f0: 195.0,
        },
        Speaker {
            id: "f004".into(),
            f0: 214.0,
        },
    ]
}

#[derive(Debug, Clone)]
struct Segment {
    f1: f64,
    f2: f64,
    f3: f64,
    dur_s: f64,
    amp: f64,
}

fn utt_seed(speaker: &Speaker, utt: usize) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in speaker.id.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x100000001b3);
    }
    h ^ (utt as u64).wrapping_mul(0x9e3779b97f4a7c15)
}

fn segments(speaker: &Speaker, utt: usize) -> Vec<Segment> {
    let mut rng = ChaCha8Rng::seed_from_u64(utt_seed(speaker, utt));
    let n = rng.gen_range(3..=4);
    (0..n)
        .map(|_| Segment {
            f1: rng.gen_range(350.0..750.0),
            f2: rng.gen_range(1100.0..1900.0),
            f3: rng.gen_range(2400.0..2900.0),
            dur_s: rng.gen_range(0.18..0.28),
            amp: rng.gen_range(0.6..1.0),
        })
        .collect()
}

/// Two-pole resonator applied in place.
fn resonate(x: &mut [f64], freq: f64, bandwidth: f64, rate: f64) {
    let r = (-std::f64::consts::PI * bandwidth / rate).exp();
    let theta = 2.0 * std::f64::consts::PI * freq / rate;
    let a1 = 2.0 * r * theta.cos();
    let a2 = -r * r;
    let mut y1 = 0.0;
    let mut y2 = 0.0;
    for v in x.iter_mut() {
        let y = *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

fn edge_ramp(x: &mut [f64], ramp: usize) {
    let n = x.len();
    for i in 0..ramp.min(n) {
        let g = i as f64 / ramp as f64;
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
}

fn peak_normalize(x: &mut [f64], peak: f64) {
    let m = x.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    if m > 0.0 {
        for v in x.iter_mut() {
            *v *= peak / m;
        }
    }
}

fn silence(dur_s: f64) -> Vec<f64> {
    vec![0.0; (dur_s * RATE as f64) as usize]
}

/// Periodic voiced rendition of the utterance.
pub fn normal_wave(speaker: &Speaker, utt: usize) -> Waveform {
    let rate = RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(utt_seed(speaker, utt) ^ 0xa5a5);
    let mut samples = silence(0.06);
    for seg in segments(speaker, utt) {
        let n = (seg.dur_s * rate) as usize;
        // pulse train with mild period jitter, plus faint aspiration noise
        let mut x = vec![0.0f64; n];
        let mut phase = 0.0f64;
        for v in x.iter_mut() {
            phase += speaker.f0 * (1.0 + 0.002 * rng.gen_range(-1.0..1.0f64)) / rate;
            if phase >= 1.0 {
                phase -= 1.0;
                *v = 1.0;
            }
            let noise: f64 = StandardNormal.sample(&mut rng);
            *v += 0.002 * noise;
        }
        // glottal-style tilt: leaky integrator (~ -6 dB/octave)
        let mut acc = 0.0;
        for v in x.iter_mut() {
            acc = 0.97 * acc + *v;
            *v = acc;
        }
        resonate(&mut x, seg.f1, 80.0, rate);
        resonate(&mut x, seg.f2, 110.0, rate);
        resonate(&mut x, seg.f3, 150.0, rate);
        peak_normalize(&mut x, seg.amp);
        // broadband aspiration floor (roughly -14 dB below the voiced part)
        for v in x.iter_mut() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *v += 0.04 * seg.amp * noise;
        }
        edge_ramp(&mut x, 240);
        samples.extend(x);
    }
    samples.extend(silence(0.06));
    peak_normalize(&mut samples, 0.5);
    Waveform::new(samples, RATE)
}

/// Aperiodic whispered rendition: F1 up ~120 Hz, triple bandwidths, flatter
/// tilt, per-segment tempo change.
pub fn whisper_wave(speaker: &Speaker, utt: usize) -> Waveform {
    let rate = RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(utt_seed(speaker, utt) ^ 0x5a5a);
    let mut samples = silence(0.06);
    for seg in segments(speaker, utt) {
        let tempo = rng.gen_range(0.85..1.2);
        let n = (seg.dur_s * tempo * rate) as usize;
        let mut x: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v
            })
            .collect();
        // a much weaker tilt than the voiced source
        let mut acc = 0.0;
        for v in x.iter_mut() {
            acc = 0.5 * acc + *v;
            *v = acc;
        }
        resonate(&mut x, seg.f1 + 120.0, 240.0, rate);
        resonate(&mut x, seg.f2, 330.0, rate);
        resonate(&mut x, seg.f3, 450.0, rate);
        peak_normalize(&mut x, 0.7 * seg.amp);
        // whisper carries a strong broadband aspiration component
        for v in x.iter_mut() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *v += 0.18 * seg.amp * noise;
        }
        edge_ramp(&mut x, 240);
        samples.extend(x);
    }
    samples.extend(silence(0.06));
    peak_normalize(&mut samples, 0.35);
    Waveform::new(samples, RATE)
}
