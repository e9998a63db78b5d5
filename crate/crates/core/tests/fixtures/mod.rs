//! Deterministic synthetic audio and corpora.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use neurofeat::audio_io::write_wav_i16;
use neurofeat::evaluation::{load_manifest, DatasetManifest};

pub const SR: u32 = 16_000;

fn tone(n: usize, hz: f64, amp: f64) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (2.0 * PI * hz * i as f64 / SR as f64).sin())
        .collect()
}

fn noise(n: usize, amp: f64, seed: u64) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n).map(|_| amp * rng.gen_range(-1.0..1.0)).collect()
}

/// Twenty named test signals: tones, chirps, noise, mixtures, edge cases.
pub fn test_signals() -> Vec<(String, Vec<f64>)> {
    let n = 4000;
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, hz) in [110.0, 440.0, 1000.0, 2500.0, 5000.0, 7600.0].into_iter().enumerate() {
        out.push((format!("tone{hz}"), tone(n + 37 * i, hz, 0.5)));
    }
    for (i, amp) in [0.01, 0.3, 0.9].into_iter().enumerate() {
        out.push((format!("noise{amp}"), noise(n, amp, 11 + i as u64)));
    }
    let chirp = |f0: f64, f1: f64| -> Vec<f64> {
        let dur = n as f64 / SR as f64;
        (0..n)
            .map(|i| {
                let t = i as f64 / SR as f64;
                0.4 * (2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * dur))).sin()
            })
            .collect()
    };
    out.push(("chirp_up".into(), chirp(100.0, 7000.0)));
    out.push(("chirp_down".into(), chirp(6000.0, 200.0)));
    let mix: Vec<f64> = tone(n, 300.0, 0.3)
        .iter()
        .zip(noise(n, 0.05, 99))
        .zip(tone(n, 3300.0, 0.1))
        .map(|((a, b), c)| a + b + c)
        .collect();
    out.push(("mixture".into(), mix));
    let am: Vec<f64> = tone(n, 800.0, 0.6)
        .iter()
        .enumerate()
        .map(|(i, v)| v * (0.5 + 0.5 * (2.0 * PI * 4.0 * i as f64 / SR as f64).sin()))
        .collect();
    out.push(("am".into(), am));
    let mut impulse = vec![0.0; 2000];
    impulse[1000] = 1.0;
    out.push(("impulse".into(), impulse));
    out.push(("silence".into(), vec![0.0; 1600]));
    out.push(("dc".into(), vec![0.25; 1600]));
    out.push(("short".into(), noise(100, 0.5, 5)));
    out.push(("single".into(), vec![0.7]));
    out.push(("odd_length".into(), tone(1601, 1234.5, 0.2)));
    out.push((
        "square".into(),
        tone(n, 250.0, 1.0).iter().map(|v| 0.5 * v.signum()).collect(),
    ));
    out
}

/// Voiced-like utterance: harmonic source at a speaker-dependent pitch,
/// vibrato, amplitude envelope and additive noise, all varied per utterance.
pub fn utterance(speaker: usize, index: usize) -> Vec<f32> {
    let mut rng = StdRng::seed_from_u64(1000 * speaker as u64 + index as u64);
    let n = rng.gen_range(8000..14000);
    let f0 = 90.0 + 30.0 * speaker as f64 + rng.gen_range(-20.0..40.0);
    let harmonics = rng.gen_range(3..9);
    let tilt: f64 = rng.gen_range(0.3..0.9);
    let vib_rate = rng.gen_range(2.0..7.0);
    let vib_depth = rng.gen_range(0.0..0.05);
    let env_rate = rng.gen_range(1.0..6.0);
    let amp = rng.gen_range(0.1..0.6);
    let noise_amp = rng.gen_range(0.001..0.05);
    let formant = rng.gen_range(500.0..3000.0);
    let mut phase = 0.0;
    (0..n)
        .map(|i| {
            let t = i as f64 / SR as f64;
            let f = f0 * (1.0 + vib_depth * (2.0 * PI * vib_rate * t).sin());
            phase += 2.0 * PI * f / SR as f64;
            let mut s = 0.0;
            for h in 1..=harmonics {
                let hf = f * h as f64;
                let boost = 1.0 + 2.0 * (-((hf - formant) / 400.0).powi(2)).exp();
                s += tilt.powi(h) * boost * (h as f64 * phase).sin();
            }
            let env = 0.6 + 0.4 * (2.0 * PI * env_rate * t).sin();
            (amp * env * s / harmonics as f64 + noise_amp * rng.gen_range(-1.0..1.0)) as f32
        })
        .collect()
}

pub fn speaker_id(s: usize) -> String {
    format!("Ses0{}{}", s / 2 + 1, if s.is_multiple_of(2) { "F" } else { "M" })
}

/// Writes `speakers × per_speaker` utterances under `dir/wav` and a
/// manifest whose targets come from `targets(row)` in generation order.
pub fn write_corpus(
    dir: &Path,
    speakers: usize,
    per_speaker: usize,
    mut targets: impl FnMut(usize) -> (f64, f64),
) -> DatasetManifest {
    fs::create_dir_all(dir.join("wav")).unwrap();
    let mut text = String::from("utterance_id,session,speaker_id,wav_path,valence,arousal\n");
    let mut row = 0;
    for s in 0..speakers {
        for u in 0..per_speaker {
            let id = format!("{}_{u:03}", speaker_id(s));
            let rel = format!("wav/{id}.wav");
            write_wav_i16(dir.join(&rel), &utterance(s, u), SR).unwrap();
            let (v, a) = targets(row);
            writeln!(text, "{id},{},{},{rel},{v:?},{a:?}", s / 2 + 1, speaker_id(s)).unwrap();
            row += 1;
        }
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, text).unwrap();
    load_manifest(&path).unwrap()
}

/// Rewrites the manifest at `dir/manifest.csv` with new targets keyed by
/// utterance id.
pub fn retarget(dir: &Path, m: &DatasetManifest, target: impl Fn(&str) -> (f64, f64)) -> DatasetManifest {
    let mut text = String::from("utterance_id,session,speaker_id,wav_path,valence,arousal\n");
    for r in &m.records {
        let (v, a) = target(&r.utterance_id);
        writeln!(
            text,
            "{},{},{},{},{v:?},{a:?}",
            r.utterance_id,
            r.session,
            r.speaker_id,
            r.wav_path.display()
        )
        .unwrap();
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, text).unwrap();
    load_manifest(&path).unwrap()
}

pub mod planted {
    use std::path::Path;

    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    use neurofeat::evaluation::{run_loso, DatasetManifest, EvaluationReport, LosoConfig};
    use neurofeat::features::{Dimension, FeatureMatrix, LayerSelector, Pooling};
    use neurofeat::gcu_net::ModelConfig;
    use neurofeat::mfcc::MfccConfig;
    use neurofeat::pipeline::Extractor;
    use neurofeat::weight_io::synth_weights;

    pub const SPEAKERS: usize = 6;
    pub const PER_SPEAKER: usize = 10;
    pub const SIGMA: f64 = 0.01;
    pub const WEIGHTS: [f64; 5] = [0.4, -0.3, 0.35, -0.25, 0.3];
    /// Keeps planted targets inside the 1..5 rating scale.
    pub const TARGET_SCALE: f64 = 0.4;
    /// Features kept per fold.
    pub const K: usize = 10;

    pub struct Outcome {
        pub features: FeatureMatrix,
        pub manifest: DatasetManifest,
        pub planted: Vec<usize>,
        pub report: EvaluationReport,
    }

    fn standardized(col: &[f64]) -> Vec<f64> {
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        col.iter().map(|v| (v - mean) / sd).collect()
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
    }

    /// Five columns forming the most isolated coherent group: an anchor
    /// plus its strongest neighbours whose correlation signs agree with the
    /// weight signs, scored by the gap between the weakest correlation inside
    /// the group and the strongest correlation to any outside column.
    pub fn choose_columns(fm: &FeatureMatrix) -> Vec<usize> {
        let d = fm.n_cols();
        let z: Vec<Vec<f64>> = (0..d).map(|j| standardized(&fm.column(j))).collect();
        let c = |a: usize, b: usize| corr(&z[a], &z[b]);
        let sign = |p: usize| WEIGHTS[p].signum();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for anchor in 0..d {
            if z[anchor].iter().any(|v| !v.is_finite()) {
                continue;
            }
            let mut neighbours: Vec<(usize, f64)> = (0..d)
                .filter(|&j| j != anchor && z[j].iter().all(|v| v.is_finite()))
                .map(|j| (j, c(anchor, j)))
                .collect();
            neighbours.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
            let mut group = vec![anchor];
            for &(j, _) in &neighbours {
                let p = group.len();
                if p == WEIGHTS.len() {
                    break;
                }
                if group
                    .iter()
                    .enumerate()
                    .all(|(q, &g)| sign(p) * sign(q) * c(j, g) > 0.0)
                {
                    group.push(j);
                }
            }
            if group.len() < WEIGHTS.len() {
                continue;
            }
            let inner = group
                .iter()
                .flat_map(|&a| group.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
                .map(|(a, b)| c(a, b).abs())
                .fold(1.0, f64::min);
            let outer = group
                .iter()
                .flat_map(|&a| (0..d).filter(|j| !group.contains(j)).map(move |j| (a, j)))
                .map(|(a, j)| c(a, j).abs())
                .filter(|v| v.is_finite())
                .fold(0.0, f64::max);
            if best.as_ref().is_none_or(|(score, _)| inner - outer > *score) {
                best = Some((inner - outer, group));
            }
        }
        best.expect("no coherent group").1
    }

    /// Generates audio, extracts features with seed-42 synthetic weights,
    /// plants targets and runs LOSO with `k` features per fold.
    pub fn run(dir: &Path, k: usize) -> Outcome {
        let cfg = ModelConfig::default();
        let raw = super::write_corpus(dir, SPEAKERS, PER_SPEAKER, |_| (3.0, 3.0));
        let extractor = Extractor::new(
            cfg.clone(),
            synth_weights(&cfg, 42),
            MfccConfig::default(),
            Pooling::Mean,
        )
        .unwrap();
        let features = extractor.extract_manifest(&raw).unwrap();
        let planted = choose_columns(&features);
        let z: Vec<Vec<f64>> = planted.iter().map(|&j| standardized(&features.column(j))).collect();
        let mut rng = StdRng::seed_from_u64(7);
        let noise = Normal::new(0.0, SIGMA).unwrap();
        let targets: Vec<(f64, f64)> = (0..features.n_rows())
            .map(|i| {
                let lin = |w: &[f64]| 3.0 + TARGET_SCALE * w.iter().zip(&z).map(|(w, zp)| w * zp[i]).sum::<f64>();
                let reversed: Vec<f64> = WEIGHTS.iter().rev().copied().collect();
                (
                    lin(&reversed) + noise.sample(&mut rng),
                    lin(&WEIGHTS) + noise.sample(&mut rng),
                )
            })
            .collect();
        let manifest = super::retarget(dir, &raw, |id| targets[features.row_index(id).unwrap()]);
        let features = {
            // rows carry targets too; refresh them from the new manifest
            let mut fm = FeatureMatrix::neural(features.name(), features.layout().unwrap());
            for (i, r) in manifest.records.iter().enumerate() {
                let meta = neurofeat::features::RowMeta {
                    utterance_id: r.utterance_id.clone(),
                    speaker_id: r.speaker_id.clone(),
                    session: r.session,
                    valence: r.valence,
                    arousal: r.arousal,
                };
                fm.push_row(meta, features.row(i)).unwrap();
            }
            fm
        };
        let loso = LosoConfig {
            k,
            layers: LayerSelector::All,
            dims: Dimension::ALL.to_vec(),
            max_spread: None,
        };
        let report = run_loso(&features, &manifest, &loso).unwrap();
        Outcome {
            features,
            manifest,
            planted,
            report,
        }
    }
}
