mod fixtures;
mod oracles;

use std::time::Instant;

use neurofeat::audio_io::AudioBuffer;
use neurofeat::mfcc::{compute_mfcc, MfccConfig};
use oracles::{mfcc_reference, MfccParams};

fn buffer(samples: &[f64]) -> AudioBuffer {
    AudioBuffer::new(samples.iter().map(|&v| v as f32).collect(), fixtures::SR, "mem").unwrap()
}

fn assert_close(name: &str, got: &neurofeat::mfcc::MfccSequence, want: &[Vec<f64>]) {
    assert_eq!(got.n_mfcc(), want.len(), "{name}");
    assert_eq!(got.n_frames(), want[0].len(), "{name}");
    for (q, row) in want.iter().enumerate() {
        for (t, &w) in row.iter().enumerate() {
            let g = got.get(q, t);
            assert!(
                (g - w).abs() <= 1e-5 * w.abs().max(1.0),
                "{name}: coeff {q} frame {t}: {g} vs {w}"
            );
        }
    }
}

#[test]
fn default_config_matches_reference() {
    let signals = fixtures::test_signals();
    assert_eq!(signals.len(), 20);
    let cfg = MfccConfig::default();
    let params = MfccParams::default();
    let mut elapsed = 0.0;
    for (name, x) in &signals {
        // the reference sees exactly the f32 samples the library does
        let x: Vec<f64> = x.iter().map(|&v| v as f32 as f64).collect();
        let buf = buffer(&x);
        let start = Instant::now();
        let got = compute_mfcc(&buf, &cfg).unwrap();
        elapsed += start.elapsed().as_secs_f64();
        assert_close(name, &got, &mfcc_reference(&x, &params));
    }
    assert!(elapsed < 10.0, "compute_mfcc took {elapsed:.2}s");
}

#[test]
fn non_default_config_matches_reference() {
    let cfg = MfccConfig {
        frame_len: 256,
        hop_len: 100,
        n_mels: 26,
        n_mfcc: 13,
        fmin_hz: 80.0,
        fmax_hz: Some(7000.0),
        log_floor: 1e-6,
        ..MfccConfig::default()
    };
    let params = MfccParams {
        frame_len: 256,
        hop: 100,
        n_mels: 26,
        n_mfcc: 13,
        fmin: 80.0,
        fmax: 7000.0,
        floor: 1e-6,
        ..MfccParams::default()
    };
    for (name, x) in fixtures::test_signals().iter().step_by(3) {
        let x: Vec<f64> = x.iter().map(|&v| v as f32 as f64).collect();
        let got = compute_mfcc(&buffer(&x), &cfg).unwrap();
        assert_close(name, &got, &mfcc_reference(&x, &params));
    }
}
