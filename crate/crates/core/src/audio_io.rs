//! Mono PCM WAV loading.
//!
//! Only RIFF/WAVE files carrying a single channel of 16-bit integer or
//! 32-bit float PCM are accepted. Resampling is not done here; callers
//! check the rate with [`validate_rate`].

use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader};

use crate::error::{Error, Result};

/// Pipeline sample rate unless configured otherwise.
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 16_000;

/// int16 full scale. Maps `i16::MIN` to exactly -1.0.
const I16_SCALE: f32 = 32768.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate_hz: u32,
    source_path: String,
}

impl AudioBuffer {
    /// Builds a buffer from in-memory samples, enforcing the same invariants
    /// as [`load_wav`].
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32, source_path: impl Into<String>) -> Result<Self> {
        let source_path = source_path.into();
        if samples.is_empty() {
            return Err(Error::EmptyAudio(PathBuf::from(&source_path)));
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::UnsupportedEncoding {
                path: PathBuf::from(&source_path),
                detail: format!("sample {bad} outside [-1, 1]"),
            });
        }
        Ok(AudioBuffer {
            samples,
            sample_rate_hz,
            source_path,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let unsupported = |detail: String| Error::UnsupportedEncoding {
        path: path.to_path_buf(),
        detail,
    };
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => unsupported(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(unsupported(format!("{} channels, mono required", spec.channels)));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / I16_SCALE))
            .collect::<Result<_, _>>()
            .map_err(|e| unsupported(e.to_string()))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| unsupported(e.to_string()))?,
        (fmt, bits) => {
            return Err(unsupported(format!("{bits}-bit {fmt:?} samples")));
        }
    };
    if samples.is_empty() {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    AudioBuffer::new(samples, spec.sample_rate, path.display().to_string())
}

pub fn validate_rate(buf: &AudioBuffer, expected_hz: u32) -> Result<()> {
    if buf.sample_rate_hz == expected_hz {
        Ok(())
    } else {
        Err(Error::SampleRateMismatch {
            actual: buf.sample_rate_hz,
            expected: expected_hz,
        })
    }
}

/// Writes a mono 16-bit PCM file. Samples are clamped to [-1, 1] and scaled
/// by 32767 on the positive side so that 1.0 does not wrap.
pub fn write_wav_i16(path: impl AsRef<Path>, samples: &[f32], sample_rate_hz: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * I16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Hand-rolled RIFF writer, independent of the decoder under test.
    fn raw_wav(channels: u16, rate: u32, bits: u16, format_tag: u16, data: &[u8]) -> Vec<u8> {
        let block_align = channels * bits / 8;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format_tag.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * block_align as u32).to_le_bytes());
        out.extend_from_slice(&block_align.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    fn i16_bytes(v: &[i16]) -> Vec<u8> {
        v.iter().flat_map(|s| s.to_le_bytes()).collect()
    }

    fn write_tmp(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".wav").tempfile().unwrap();
        f.write_all(bytes).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn int16_normalization() {
        let f = write_tmp(&raw_wav(1, 16000, 16, 1, &i16_bytes(&[0, 16384, -32768])));
        let buf = load_wav(f.path()).unwrap();
        assert_eq!(buf.samples(), &[0.0, 0.5, -1.0]);
        assert_eq!(buf.sample_rate_hz(), 16000);
    }

    #[test]
    fn one_second_header_round_trip() {
        let data: Vec<i16> = (0..16000).map(|i| ((i * 37) % 2000 - 1000) as i16).collect();
        let f = write_tmp(&raw_wav(1, 16000, 16, 1, &i16_bytes(&data)));
        let buf = load_wav(f.path()).unwrap();
        assert_eq!(buf.samples().len(), 16000);
        assert_eq!(buf.sample_rate_hz(), 16000);
        assert!((buf.duration_s() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn float32_accepted() {
        let data: Vec<u8> = [0.25f32, -0.75].iter().flat_map(|s| s.to_le_bytes()).collect();
        let f = write_tmp(&raw_wav(1, 22050, 32, 3, &data));
        let buf = load_wav(f.path()).unwrap();
        assert_eq!(buf.samples(), &[0.25, -0.75]);
    }

    #[test]
    fn stereo_rejected() {
        let f = write_tmp(&raw_wav(2, 16000, 16, 1, &i16_bytes(&[1, 2, 3, 4])));
        assert!(matches!(load_wav(f.path()), Err(Error::UnsupportedEncoding { .. })));
    }

    #[test]
    fn eight_bit_rejected() {
        let f = write_tmp(&raw_wav(1, 16000, 8, 1, &[128, 129]));
        assert!(matches!(load_wav(f.path()), Err(Error::UnsupportedEncoding { .. })));
    }

    #[test]
    fn empty_and_missing() {
        let f = write_tmp(&raw_wav(1, 16000, 16, 1, &[]));
        assert!(matches!(load_wav(f.path()), Err(Error::EmptyAudio(_))));
        assert!(matches!(load_wav("/nonexistent/x.wav"), Err(Error::MissingFile(_))));
    }

    #[test]
    fn rate_validation() {
        let mk = |hz| AudioBuffer::new(vec![0.0; 4], hz, "mem").unwrap();
        assert!(validate_rate(&mk(16000), 16000).is_ok());
        assert!(matches!(
            validate_rate(&mk(44100), 16000),
            Err(Error::SampleRateMismatch {
                actual: 44100,
                expected: 16000
            })
        ));
        assert!(matches!(
            validate_rate(&mk(16000), 22050),
            Err(Error::SampleRateMismatch {
                actual: 16000,
                expected: 22050
            })
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn write_then_load_within_one_lsb(raw in proptest::collection::vec(-1.0f32..=1.0, 1..400)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.wav");
            write_wav_i16(&path, &raw, 16000).unwrap();
            let buf = load_wav(&path).unwrap();
            proptest::prop_assert_eq!(buf.samples().len(), raw.len());
            for (a, b) in buf.samples().iter().zip(&raw) {
                proptest::prop_assert!((a - b).abs() <= 1.0 / 32768.0);
                proptest::prop_assert!(a.abs() <= 1.0);
            }
        }
    }
}
