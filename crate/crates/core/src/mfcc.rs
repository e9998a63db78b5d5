//! MFCC frontend: centered framing, Hann window, power spectrum, triangular
//! mel filterbank, natural-log compression and orthonormal DCT-II.
//!
//! Everything runs in `f64`. The filterbank, window and DCT basis are built
//! once per [`MfccExtractor`] and shared read-only.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::{validate_rate, AudioBuffer, DEFAULT_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    pub sample_rate_hz: u32,
    pub frame_len: usize,
    pub hop_len: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin_hz: f64,
    /// `None` means Nyquist.
    pub fmax_hz: Option<f64>,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            frame_len: 512,
            hop_len: 160,
            n_mels: 40,
            n_mfcc: 20,
            fmin_hz: 0.0,
            fmax_hz: None,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn fft_size(&self) -> usize {
        self.frame_len
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size() / 2 + 1
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / 2.0
    }

    pub fn fmax(&self) -> f64 {
        self.fmax_hz.unwrap_or_else(|| self.nyquist_hz())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.sample_rate_hz == 0 {
            return bad("sample_rate_hz must be positive".into());
        }
        if !self.frame_len.is_power_of_two() || self.frame_len < 2 {
            return bad(format!("frame_len {} must be a power of two >= 2", self.frame_len));
        }
        if self.hop_len == 0 || self.hop_len > self.frame_len {
            return bad(format!("hop_len {} must be in 1..={}", self.hop_len, self.frame_len));
        }
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return bad(format!("n_mfcc {} must be in 1..={}", self.n_mfcc, self.n_mels));
        }
        let fmax = self.fmax();
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < fmax && fmax <= self.nyquist_hz()) {
            return bad(format!(
                "need 0 <= fmin ({}) < fmax ({fmax}) <= {}",
                self.fmin_hz,
                self.nyquist_hz()
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad(format!("log_floor {} must be positive", self.log_floor));
        }
        Ok(())
    }
}

/// `n_mfcc × T` cepstral matrix, coefficient-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccSequence {
    coeffs: Vec<f64>,
    n_mfcc: usize,
    frame_times_s: Vec<f64>,
    utterance_id: String,
}

impl MfccSequence {
    pub fn new(
        coeffs: Vec<f64>,
        n_mfcc: usize,
        frame_times_s: Vec<f64>,
        utterance_id: impl Into<String>,
    ) -> Result<Self> {
        let frames = frame_times_s.len();
        if frames == 0 || n_mfcc == 0 {
            return Err(Error::AudioTooShort);
        }
        if coeffs.len() != n_mfcc * frames {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for {n_mfcc} x {frames}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NumericalFailure("non-finite MFCC".into()));
        }
        Ok(MfccSequence {
            coeffs,
            n_mfcc,
            frame_times_s,
            utterance_id: utterance_id.into(),
        })
    }

    pub fn n_mfcc(&self) -> usize {
        self.n_mfcc
    }

    pub fn n_frames(&self) -> usize {
        self.frame_times_s.len()
    }

    pub fn frame_times_s(&self) -> &[f64] {
        &self.frame_times_s
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    /// Row-major `n_mfcc × T`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn row(&self, coeff: usize) -> &[f64] {
        let t = self.n_frames();
        &self.coeffs[coeff * t..(coeff + 1) * t]
    }

    pub fn get(&self, coeff: usize, frame: usize) -> f64 {
        self.coeffs[coeff * self.n_frames() + frame]
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

pub fn frame_count(len: usize, hop_len: usize) -> usize {
    if len == 0 {
        0
    } else {
        1 + (len - 1) / hop_len
    }
}

/// Index into a signal of length `n` with numpy-style "reflect" padding
/// (edge sample not repeated), folding repeatedly for long pads.
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Center-aligned frames, `T × frame_len` row-major. The signal is
/// reflection-padded by `frame_len / 2` on both sides.
pub fn frame_signal(samples: &[f64], frame_len: usize, hop_len: usize) -> Result<Vec<Vec<f64>>> {
    if frame_len == 0 || hop_len == 0 {
        return Err(Error::InvalidConfig("frame_len and hop_len must be positive".into()));
    }
    if samples.is_empty() {
        return Err(Error::AudioTooShort);
    }
    let pad = (frame_len / 2) as isize;
    let n = samples.len();
    let frames = (0..frame_count(n, hop_len))
        .map(|t| {
            let start = (t * hop_len) as isize - pad;
            (0..frame_len as isize)
                .map(|j| samples[reflect_index(start + j, n)])
                .collect()
        })
        .collect();
    Ok(frames)
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// `|DFT(window ⊙ frame)|²` for bins `0..=fft_size/2`.
pub fn power_spectrum(frame: &[f64], window: &[f64]) -> Result<Vec<f64>> {
    if frame.len() != window.len() {
        return Err(Error::ShapeMismatch(format!(
            "frame length {} vs window length {}",
            frame.len(),
            window.len()
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(frame.len());
    let mut scratch = Vec::new();
    Ok(power_spectrum_with(&*fft, frame, window, &mut scratch))
}

fn power_spectrum_with(fft: &dyn Fft<f64>, frame: &[f64], window: &[f64], buf: &mut Vec<Complex<f64>>) -> Vec<f64> {
    buf.clear();
    buf.extend(frame.iter().zip(window).map(|(x, w)| Complex::new(x * w, 0.0)));
    fft.process(buf);
    buf[..frame.len() / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Dense `n_mels × n_bins` filterbank.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    n_mels: usize,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn filter(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.filter(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Triangular filters with unit peak, centers equally spaced on the HTK
/// mel scale between `fmin` and `fmax`. No area normalization.
pub fn mel_filterbank(cfg: &MfccConfig) -> Result<MelFilterbank> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let (lo, hi) = (hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax()));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate_hz as f64 / cfg.fft_size() as f64;
    let mut weights = vec![0.0; cfg.n_mels * n_bins];
    for m in 0..cfg.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            *w = rising.min(falling).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::DegenerateFilter { index: m });
        }
    }
    Ok(MelFilterbank {
        weights,
        n_mels: cfg.n_mels,
        n_bins,
    })
}

fn dct_scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// `n_out × n` orthonormal DCT-II basis, row-major.
fn dct_basis(n: usize, n_out: usize) -> Vec<f64> {
    let mut basis = Vec::with_capacity(n * n_out);
    for k in 0..n_out {
        let s = dct_scale(k, n);
        basis.extend((0..n).map(|j| s * (PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64).cos()));
    }
    basis
}

/// First `n_out` orthonormal DCT-II coefficients of `v`.
pub fn dct_ii_ortho(v: &[f64], n_out: usize) -> Result<Vec<f64>> {
    if n_out > v.len() {
        return Err(Error::InvalidConfig(format!(
            "n_out {n_out} > input length {}",
            v.len()
        )));
    }
    let basis = dct_basis(v.len(), n_out);
    Ok(basis
        .chunks_exact(v.len())
        .map(|row| row.iter().zip(v).map(|(b, x)| b * x).sum())
        .collect())
}

/// Inverse of the full-length orthonormal DCT-II (the orthonormal DCT-III).
pub fn idct_ii_ortho(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    (0..n)
        .map(|j| {
            (0..n)
                .map(|k| dct_scale(k, n) * c[k] * (PI * k as f64 * (2 * j + 1) as f64 / (2 * n) as f64).cos())
                .sum()
        })
        .collect()
}

/// Reusable MFCC pipeline with precomputed window, filterbank, DCT basis
/// and FFT plan.
pub struct MfccExtractor {
    cfg: MfccConfig,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    dct: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        let filterbank = mel_filterbank(&cfg)?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size());
        Ok(MfccExtractor {
            window: hann_window(cfg.frame_len),
            dct: dct_basis(cfg.n_mels, cfg.n_mfcc),
            filterbank,
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn compute(&self, buf: &AudioBuffer, utterance_id: &str) -> Result<MfccSequence> {
        validate_rate(buf, self.cfg.sample_rate_hz)?;
        let samples: Vec<f64> = buf.samples().iter().map(|&s| s as f64).collect();
        let frames = frame_signal(&samples, self.cfg.frame_len, self.cfg.hop_len)?;
        if frames.is_empty() {
            return Err(Error::AudioTooShort);
        }
        let t_count = frames.len();
        let n_mels = self.cfg.n_mels;
        let mut coeffs = vec![0.0; self.cfg.n_mfcc * t_count];
        let mut scratch = Vec::with_capacity(self.cfg.fft_size());
        for (t, frame) in frames.iter().enumerate() {
            let power = power_spectrum_with(&*self.fft, frame, &self.window, &mut scratch);
            let log_mel: Vec<f64> = self
                .filterbank
                .apply(&power)
                .into_iter()
                .map(|e| e.max(self.cfg.log_floor).ln())
                .collect();
            for (k, basis) in self.dct.chunks_exact(n_mels).enumerate() {
                coeffs[k * t_count + t] = basis.iter().zip(&log_mel).map(|(b, x)| b * x).sum();
            }
        }
        let sr = self.cfg.sample_rate_hz as f64;
        let times = (0..t_count).map(|t| (t * self.cfg.hop_len) as f64 / sr).collect();
        MfccSequence::new(coeffs, self.cfg.n_mfcc, times, utterance_id)
    }
}

/// One-shot convenience wrapper around [`MfccExtractor`].
pub fn compute_mfcc(buf: &AudioBuffer, cfg: &MfccConfig) -> Result<MfccSequence> {
    MfccExtractor::new(cfg.clone())?.compute(buf, buf.source_path())
}

const MFCC_MAGIC: &[u8; 4] = b"MFC1";

/// Dumps `seq` as `MFC1` + u32 n_mfcc + u32 T + row-major f32, little-endian.
pub fn write_mfcc_dump(seq: &MfccSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(12 + 4 * seq.coeffs.len());
    out.extend_from_slice(MFCC_MAGIC);
    out.extend_from_slice(&(seq.n_mfcc as u32).to_le_bytes());
    out.extend_from_slice(&(seq.n_frames() as u32).to_le_bytes());
    for &c in &seq.coeffs {
        out.extend_from_slice(&(c as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an `MFC1` dump back as `(n_mfcc, T, row-major values)`.
pub fn read_mfcc_dump(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 {
        return Err(Error::TruncatedFile {
            expected: 12,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MFCC_MAGIC {
        return Err(Error::BadMagic {
            expected: *MFCC_MAGIC,
            found: magic,
        });
    }
    let n_mfcc = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + 4 * n_mfcc * frames;
    if bytes.len() != expected {
        return Err(Error::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    let values = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n_mfcc, frames, values))
}
