//! Simulated dialogue-like mixtures: fixed-duration examples whose frames
//! contain zero, one, or two active speakers with configurable
//! probabilities, rendered from synthetic harmonic voices at 8 kHz.
//!
//! Two voices in one example have disjoint fundamental ranges so the
//! separation task stays learnable at desk scale without a speech corpus.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wav::{read_wav, write_wav, WavFormat};

#[derive(Debug, Clone)]
pub struct DialogueSpec {
    pub duration_s: u32,
    pub frame_s: u32,
    /// P(zero speakers), P(one), P(two) per frame.
    pub activity_probs: [f64; 3],
    pub sample_rate: u32,
    /// Per-utterance gain jitter, uniform in +-this many dB.
    pub gain_jitter_db: f64,
    pub crossfade_ms: f64,
    pub seed: u64,
}

impl Default for DialogueSpec {
    fn default() -> Self {
        DialogueSpec {
            duration_s: 30,
            frame_s: 5,
            activity_probs: [0.25, 0.5, 0.25],
            sample_rate: 8000,
            gain_jitter_db: 2.5,
            crossfade_ms: 50.0,
            seed: 0,
        }
    }
}

impl DialogueSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.activity_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArg(format!("activity probabilities sum to {sum}, not 1")));
        }
        if self.frame_s == 0 || self.duration_s == 0 || self.duration_s % self.frame_s != 0 {
            return Err(Error::InvalidArg(format!(
                "duration ({}s) must be a positive multiple of the frame length ({}s)",
                self.duration_s, self.frame_s
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidArg("sample rate must be positive".into()));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        (self.duration_s / self.frame_s) as usize
    }

    pub fn frame_samples(&self) -> usize {
        (self.frame_s * self.sample_rate) as usize
    }

    pub fn total_samples(&self) -> usize {
        (self.duration_s * self.sample_rate) as usize
    }
}

/// Synthetic voice: drifting-fundamental harmonic complex plus
/// resonator-filtered noise.
#[derive(Debug, Clone)]
pub struct SpeakerVoice {
    pub f0_lo: f64,
    pub f0_hi: f64,
    /// Harmonic k gets amplitude k^-rolloff.
    pub rolloff: f64,
    pub formant_hz: f64,
    pub formant_bw_hz: f64,
    /// Noise RMS as a fraction of the harmonic RMS.
    pub noise_mix: f64,
}

impl SpeakerVoice {
    /// Low-pitched voice with randomized timbre; f0 stays below 180 Hz.
    pub fn low(rng: &mut impl Rng) -> Self {
        let f0_lo = rng.gen_range(85.0..110.0);
        SpeakerVoice {
            f0_lo,
            f0_hi: (f0_lo + rng.gen_range(30.0..55.0)).min(180.0),
            rolloff: rng.gen_range(0.8..1.4),
            formant_hz: rng.gen_range(400.0..800.0),
            formant_bw_hz: rng.gen_range(80.0..200.0),
            noise_mix: rng.gen_range(0.03..0.12),
        }
    }

    /// High-pitched voice; f0 stays above 200 Hz, disjoint from [`Self::low`].
    pub fn high(rng: &mut impl Rng) -> Self {
        let f0_lo = rng.gen_range(200.0..260.0);
        SpeakerVoice {
            f0_lo,
            f0_hi: f0_lo + rng.gen_range(40.0..80.0),
            rolloff: rng.gen_range(0.8..1.4),
            formant_hz: rng.gen_range(900.0..1600.0),
            formant_bw_hz: rng.gen_range(100.0..250.0),
            noise_mix: rng.gen_range(0.03..0.12),
        }
    }
}

/// One rendered example. The mixture is the exact sample-wise sum of the
/// two streams, each stream is zero outside its active frames, and both
/// streams carry energy.
#[derive(Debug, Clone)]
pub struct DialogueExample {
    pub mixture: Vec<f32>,
    pub streams: [Vec<f32>; 2],
    /// Per frame: is speaker 0 / speaker 1 active.
    pub activity: Vec<[bool; 2]>,
    /// Linear per-frame gain applied to each speaker (0 when inactive).
    pub frame_gains: Vec<[f32; 2]>,
    pub seed: u64,
}

/// One activity draw without the degeneracy guard (used by the
/// distribution tests).
pub fn sample_activity_raw(spec: &DialogueSpec, rng: &mut impl Rng) -> Vec<[bool; 2]> {
    let [p0, p1, _] = spec.activity_probs;
    (0..spec.frames())
        .map(|_| {
            let u: f64 = rng.gen();
            if u < p0 {
                [false, false]
            } else if u < p0 + p1 {
                if rng.gen::<bool>() {
                    [true, false]
                } else {
                    [false, true]
                }
            } else {
                [true, true]
            }
        })
        .collect()
}

/// Per-frame speaker-count draw; grids where either speaker never speaks
/// are resampled so every stream has energy.
pub fn sample_activity(spec: &DialogueSpec, rng: &mut impl Rng) -> Vec<[bool; 2]> {
    loop {
        let grid = sample_activity_raw(spec, rng);
        let s0 = grid.iter().any(|f| f[0]);
        let s1 = grid.iter().any(|f| f[1]);
        if s0 && s1 {
            return grid;
        }
    }
}

/// Harmonic complex with a slowly drifting fundamental inside the voice's
/// range plus resonator-filtered noise, RMS-normalized to -20 dBFS.
pub fn synth_source(
    voice: &SpeakerVoice,
    samples: usize,
    sample_rate: u32,
    rng: &mut impl Rng,
) -> Vec<f32> {
    let fs = sample_rate as f64;
    let nyquist = fs / 2.0;
    let center = 0.5 * (voice.f0_lo + voice.f0_hi);
    let swing = 0.5 * (voice.f0_hi - voice.f0_lo);
    let drift_hz = rng.gen_range(0.15..0.45);
    let drift_phase = rng.gen_range(0.0..std::f64::consts::TAU);

    let kmax = ((0.95 * nyquist / voice.f0_hi).floor() as usize).clamp(1, 40);
    let mut phases: Vec<f64> = (0..kmax).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let amps: Vec<f64> = (1..=kmax).map(|k| (k as f64).powf(-voice.rolloff)).collect();

    let mut tonal = vec![0.0f64; samples];
    for (t, out) in tonal.iter_mut().enumerate() {
        let f0 = center + swing * (std::f64::consts::TAU * drift_hz * t as f64 / fs + drift_phase).sin();
        let base = std::f64::consts::TAU * f0 / fs;
        let mut acc = 0.0;
        for (k, phase) in phases.iter_mut().enumerate() {
            *phase += base * (k + 1) as f64;
            acc += amps[k] * phase.sin();
        }
        *out = acc;
    }

    // Two-pole resonator shapes the noise component.
    let r = (1.0 - std::f64::consts::PI * voice.formant_bw_hz / fs).clamp(0.5, 0.999);
    let theta = std::f64::consts::TAU * voice.formant_hz / fs;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let mut noise = vec![0.0f64; samples];
    let (mut y1, mut y2) = (0.0f64, 0.0f64);
    for slot in noise.iter_mut() {
        let x: f64 = rng.gen_range(-1.0..1.0);
        let y = x + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *slot = y;
    }

    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let tonal_rms = rms(&tonal).max(1e-12);
    let noise_rms = rms(&noise).max(1e-12);
    let noise_scale = voice.noise_mix * tonal_rms / noise_rms;
    let mut out: Vec<f64> =
        tonal.iter().zip(&noise).map(|(t, n)| t + noise_scale * n).collect();

    // -20 dBFS target.
    let scale = 0.1 / rms(&out).max(1e-12);
    for v in out.iter_mut() {
        *v *= scale;
    }
    out.into_iter().map(|v| v as f32).collect()
}

/// Renders one example: every maximal run of active frames becomes a fresh
/// utterance with its own gain, faded in and out with raised-cosine ramps
/// inside the run.
pub fn render_example(spec: &DialogueSpec, rng: &mut impl Rng) -> Result<DialogueExample> {
    spec.validate()?;
    let activity = sample_activity(spec, rng);
    let voices = [SpeakerVoice::low(rng), SpeakerVoice::high(rng)];
    let frames = spec.frames();
    let frame_samples = spec.frame_samples();
    let total = spec.total_samples();
    let fade = ((spec.crossfade_ms / 1000.0) * spec.sample_rate as f64).round() as usize;

    let mut streams = [vec![0.0f32; total], vec![0.0f32; total]];
    let mut frame_gains = vec![[0.0f32; 2]; frames];

    for speaker in 0..2 {
        let mut frame = 0;
        while frame < frames {
            if !activity[frame][speaker] {
                frame += 1;
                continue;
            }
            let run_start = frame;
            while frame < frames && activity[frame][speaker] {
                frame += 1;
            }
            let run_len = frame - run_start;
            let n = run_len * frame_samples;
            let gain_db = rng.gen_range(-spec.gain_jitter_db..spec.gain_jitter_db);
            let gain = 10f32.powf(gain_db as f32 / 20.0);
            let source = synth_source(&voices[speaker], n, spec.sample_rate, rng);
            let offset = run_start * frame_samples;
            let fade = fade.min(n / 2);
            for (i, &s) in source.iter().enumerate() {
                let env = if i < fade {
                    raised_cosine(i, fade)
                } else if i >= n - fade {
                    raised_cosine(n - 1 - i, fade)
                } else {
                    1.0
                };
                streams[speaker][offset + i] = gain * env * s;
            }
            for f in run_start..frame {
                frame_gains[f][speaker] = gain;
            }
        }
    }

    // Headroom guard: rescale both streams if the sum would clip, then
    // rebuild the mixture as an exact sum.
    let mut mixture: Vec<f32> =
        streams[0].iter().zip(&streams[1]).map(|(a, b)| a + b).collect();
    let peak = mixture.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
    if peak > 0.98 {
        let scale = 0.98 / peak;
        for stream in streams.iter_mut() {
            for v in stream.iter_mut() {
                *v *= scale;
            }
        }
        mixture = streams[0].iter().zip(&streams[1]).map(|(a, b)| a + b).collect();
    }

    Ok(DialogueExample { mixture, streams, activity, frame_gains, seed: spec.seed })
}

fn raised_cosine(i: usize, fade: usize) -> f32 {
    if fade == 0 {
        return 1.0;
    }
    let x = (i as f32 + 0.5) / fade as f32;
    0.5 - 0.5 * (std::f32::consts::PI * x).cos()
}

/// One line of the dataset manifest (JSON object per line). Paths are
/// relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub mixture_path: String,
    pub source_paths: [String; 2],
    pub duration_s: f64,
    pub seed: u64,
    pub activity_grid: Vec<[bool; 2]>,
}

/// Stable per-example seed derived from the dataset seed (SplitMix64 step).
pub fn example_seed(dataset_seed: u64, index: u64) -> u64 {
    let mut z = dataset_seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Writes `count` examples (mixture + two stream WAVs each) and a manifest;
/// fully reproducible from the spec seed. A failed example removes its
/// partial files before the error propagates.
pub fn gen_dataset(
    spec: &DialogueSpec,
    count: usize,
    out_dir: &Path,
    format: WavFormat,
) -> Result<Vec<ManifestEntry>> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let manifest_path = out_dir.join("manifest.jsonl");
    let mut manifest = fs::File::create(&manifest_path)?;
    let mut entries = Vec::with_capacity(count);
    for index in 0..count {
        let entry = match write_example(spec, index, out_dir, format) {
            Ok(entry) => entry,
            Err(err) => {
                for name in example_file_names(index) {
                    let _ = fs::remove_file(out_dir.join(name));
                }
                return Err(err);
            }
        };
        let line = serde_json::to_string(&entry)
            .map_err(|e| Error::Manifest(format!("serializing entry {index}: {e}")))?;
        writeln!(manifest, "{line}")?;
        entries.push(entry);
    }
    Ok(entries)
}

fn example_file_names(index: usize) -> [String; 3] {
    [
        format!("ex{index:05}_mixture.wav"),
        format!("ex{index:05}_s1.wav"),
        format!("ex{index:05}_s2.wav"),
    ]
}

fn write_example(
    spec: &DialogueSpec,
    index: usize,
    out_dir: &Path,
    format: WavFormat,
) -> Result<ManifestEntry> {
    let seed = example_seed(spec.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut local = spec.clone();
    local.seed = seed;
    let example = render_example(&local, &mut rng)?;
    let names = example_file_names(index);
    write_wav(&out_dir.join(&names[0]), &example.mixture, spec.sample_rate, format)?;
    write_wav(&out_dir.join(&names[1]), &example.streams[0], spec.sample_rate, format)?;
    write_wav(&out_dir.join(&names[2]), &example.streams[1], spec.sample_rate, format)?;
    Ok(ManifestEntry {
        id: format!("ex{index:05}"),
        mixture_path: names[0].clone(),
        source_paths: [names[1].clone(), names[2].clone()],
        duration_s: spec.duration_s as f64,
        seed,
        activity_grid: example.activity,
    })
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| {
            Error::Manifest(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::Manifest(format!("{}: no entries", path.display())));
    }
    Ok(entries)
}

/// A manifest entry with its audio loaded; `refs[i]` aligns with
/// `source_paths[i]`.
#[derive(Debug, Clone)]
pub struct LoadedExample {
    pub id: String,
    pub duration_s: f64,
    pub mixture: Vec<f32>,
    pub references: Vec<Vec<f32>>,
}

/// Loads every referenced WAV; paths resolve against the manifest's parent
/// directory. Errors list the offending entry.
pub fn load_manifest_audio(manifest_path: &Path) -> Result<Vec<LoadedExample>> {
    let entries = read_manifest(manifest_path)?;
    let base = manifest_path.parent().map(PathBuf::from).unwrap_or_default();
    let mut out = Vec::with_capacity(entries.len());
    for entry in &entries {
        let resolve = |rel: &str| {
            let p = base.join(rel);
            read_wav(&p).map(|(samples, _)| samples).map_err(|e| {
                Error::Manifest(format!("entry '{}': {e}", entry.id))
            })
        };
        let mixture = resolve(&entry.mixture_path)?;
        let references =
            vec![resolve(&entry.source_paths[0])?, resolve(&entry.source_paths[1])?];
        out.push(LoadedExample {
            id: entry.id.clone(),
            duration_s: entry.duration_s,
            mixture,
            references,
        });
    }
    Ok(out)
}

/// Frame-wise speaker activity recovered from stream energies; used to
/// verify rendering against the sampled grid.
pub fn activity_from_streams(
    streams: &[Vec<f32>; 2],
    spec: &DialogueSpec,
) -> Vec<[bool; 2]> {
    let fs = spec.frame_samples();
    let frames = spec.frames();
    (0..frames)
        .map(|f| {
            let mut active = [false; 2];
            for (s, stream) in streams.iter().enumerate() {
                let energy: f64 =
                    stream[f * fs..(f + 1) * fs].iter().map(|&v| (v as f64) * (v as f64)).sum();
                active[s] = energy > 1e-8;
            }
            active
        })
        .collect()
}

/// Frequencies of 0/1/2-speaker frames over many raw grids, plus the
/// chi-square statistic against the spec probabilities (2 degrees of
/// freedom, so p = exp(-chi2/2)).
pub fn activity_statistics(spec: &DialogueSpec, grids: usize, rng: &mut impl Rng) -> ([f64; 3], f64) {
    let mut counts = [0usize; 3];
    for _ in 0..grids {
        for frame in sample_activity_raw(spec, rng) {
            counts[frame.iter().filter(|&&a| a).count()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let freqs = [
        counts[0] as f64 / total as f64,
        counts[1] as f64 / total as f64,
        counts[2] as f64 / total as f64,
    ];
    let mut chi2 = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        let expected = spec.activity_probs[i] * total as f64;
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    let p_value = (-chi2 / 2.0).exp();
    (freqs, p_value)
}

/// Groups loaded examples by duration for reporting.
pub fn group_by_duration(examples: &[LoadedExample]) -> BTreeMap<String, usize> {
    let mut groups = BTreeMap::new();
    for ex in examples {
        *groups.entry(format!("{}", ex.duration_s)).or_insert(0) += 1;
    }
    groups
}
