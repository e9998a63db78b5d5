//! Inference-only forward pass of the dilated gated-convolution stack.
//!
//! Each layer computes `z = tanh(conv_f(x)) * sigmoid(conv_g(x))` with a
//! non-causal, zero-padded dilated convolution, then updates the residual
//! stream `x <- x + conv1x1(z)`. The post-gate `z` of every layer is what
//! gets recorded.
//!
//! Accumulation order is fixed: every output sample starts from its bias,
//! then adds input channels in index order and, within a channel, kernel
//! taps in index order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mfcc::MfccSequence;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_mfcc: usize,
    pub channels: usize,
    pub n_blocks: usize,
    pub layers_per_block: usize,
    pub kernel_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_mfcc: 20,
            channels: 128,
            n_blocks: 3,
            layers_per_block: 5,
            kernel_size: 7,
        }
    }
}

impl ModelConfig {
    pub fn total_layers(&self) -> usize {
        self.n_blocks * self.layers_per_block
    }

    /// Number of gated units, i.e. the neural feature dimension.
    pub fn total_units(&self) -> usize {
        self.total_layers() * self.channels
    }

    /// Dilations within one block: 1, 2, 4, ...
    pub fn dilations_per_block(&self) -> Vec<usize> {
        (0..self.layers_per_block).map(|i| 1 << i).collect()
    }

    pub fn dilation(&self, layer: usize) -> usize {
        1 << (layer % self.layers_per_block)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_mfcc == 0 || self.channels == 0 || self.n_blocks == 0 || self.layers_per_block == 0 {
            return bad(format!("all model dimensions must be positive: {self:?}"));
        }
        if self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel_size {} must be odd", self.kernel_size));
        }
        if self.layers_per_block > 24 {
            return bad(format!(
                "layers_per_block {} too deep for 2^i dilations",
                self.layers_per_block
            ));
        }
        Ok(())
    }
}

/// Dense 1-D convolution weights, `out × in × kernel` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_size: usize,
}

impl Conv1d {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel_size: usize) -> Self {
        Conv1d {
            weight: vec![0.0; out_channels * in_channels * kernel_size],
            bias: vec![0.0; out_channels],
            out_channels,
            in_channels,
            kernel_size,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_size
    }

    #[inline]
    pub fn w(&self, o: usize, i: usize, k: usize) -> f32 {
        self.weight[(o * self.in_channels + i) * self.kernel_size + k]
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.weight.len() != self.out_channels * self.in_channels * self.kernel_size
            || self.bias.len() != self.out_channels
        {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {} weights / {} biases for {}x{}x{}",
                self.weight.len(),
                self.bias.len(),
                self.out_channels,
                self.in_channels,
                self.kernel_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub filter: Conv1d,
    pub gate: Conv1d,
    pub residual: Conv1d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub input_proj: Conv1d,
    pub layers: Vec<LayerWeights>,
}

impl WeightSet {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let c = cfg.channels;
        WeightSet {
            input_proj: Conv1d::zeros(c, cfg.n_mfcc, 1),
            layers: (0..cfg.total_layers())
                .map(|_| LayerWeights {
                    filter: Conv1d::zeros(c, c, cfg.kernel_size),
                    gate: Conv1d::zeros(c, c, cfg.kernel_size),
                    residual: Conv1d::zeros(c, c, 1),
                })
                .collect(),
        }
    }

    /// All tensors in file order: input projection, then per layer
    /// filter, gate, residual.
    pub fn convs(&self) -> impl Iterator<Item = &Conv1d> {
        std::iter::once(&self.input_proj).chain(self.layers.iter().flat_map(|l| [&l.filter, &l.gate, &l.residual]))
    }

    pub fn convs_mut(&mut self) -> impl Iterator<Item = &mut Conv1d> {
        std::iter::once(&mut self.input_proj).chain(
            self.layers
                .iter_mut()
                .flat_map(|l| [&mut l.filter, &mut l.gate, &mut l.residual]),
        )
    }

    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let c = cfg.channels;
        let mismatch = |m: String| Err(Error::ConfigWeightMismatch(m));
        let dims = |conv: &Conv1d| (conv.out_channels, conv.in_channels, conv.kernel_size);
        if dims(&self.input_proj) != (c, cfg.n_mfcc, 1) {
            return mismatch(format!("input projection {:?}", dims(&self.input_proj)));
        }
        if self.layers.len() != cfg.total_layers() {
            return mismatch(format!(
                "{} layers, config has {}",
                self.layers.len(),
                cfg.total_layers()
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, conv, want) in [
                ("filter", &layer.filter, (c, c, cfg.kernel_size)),
                ("gate", &layer.gate, (c, c, cfg.kernel_size)),
                ("residual", &layer.residual, (c, c, 1)),
            ] {
                if dims(conv) != want {
                    return mismatch(format!("layer {l} {name} {:?}, expected {want:?}", dims(conv)));
                }
            }
        }
        for conv in self.convs() {
            conv.check("tensor")?;
            if conv.weight.iter().chain(&conv.bias).any(|v| !v.is_finite()) {
                return mismatch("non-finite weight".into());
            }
        }
        Ok(())
    }
}

/// Channel-major `channels × frames` signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub data: Vec<f32>,
    pub channels: usize,
    pub frames: usize,
}

impl Signal {
    pub fn new(data: Vec<f32>, channels: usize, frames: usize) -> Result<Self> {
        if data.len() != channels * frames {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {channels} x {frames}",
                data.len()
            )));
        }
        Ok(Signal { data, channels, frames })
    }

    pub fn row(&self, c: usize) -> &[f32] {
        &self.data[c * self.frames..(c + 1) * self.frames]
    }

    pub fn get(&self, c: usize, t: usize) -> f32 {
        self.data[c * self.frames + t]
    }
}

/// "Same"-length dilated convolution with symmetric zero padding of
/// `dilation * (k - 1) / 2` on each side.
pub fn dilated_conv(x: &Signal, conv: &Conv1d, dilation: usize) -> Result<Signal> {
    conv.check("conv")?;
    if conv.in_channels != x.channels {
        return Err(Error::ShapeMismatch(format!(
            "conv expects {} input channels, signal has {}",
            conv.in_channels, x.channels
        )));
    }
    if dilation == 0 || conv.kernel_size.is_multiple_of(2) {
        return Err(Error::ShapeMismatch(format!(
            "dilation {dilation} / kernel {} (need d >= 1, odd k)",
            conv.kernel_size
        )));
    }
    let t_len = x.frames;
    let half = (conv.kernel_size / 2) as isize;
    let mut out = vec![0.0f32; conv.out_channels * t_len];
    for (o, out_row) in out.chunks_exact_mut(t_len.max(1)).enumerate().take(conv.out_channels) {
        out_row.fill(conv.bias[o]);
        for i in 0..conv.in_channels {
            let in_row = x.row(i);
            for k in 0..conv.kernel_size {
                let w = conv.w(o, i, k);
                let shift = (k as isize - half) * dilation as isize;
                // output t reads input t + shift; keep both in range
                let t0 = (-shift).max(0) as usize;
                let t1 = (t_len as isize - shift.max(0)).max(0) as usize;
                if t0 >= t1 {
                    continue;
                }
                let src = &in_row[(t0 as isize + shift) as usize..(t1 as isize + shift) as usize];
                for (y, &v) in out_row[t0..t1].iter_mut().zip(src) {
                    *y += w * v;
                }
            }
        }
    }
    Signal::new(out, conv.out_channels, t_len)
}

#[inline]
fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Largest `f32` below 1. `tanh` rounds to exactly ±1 in single precision
/// once its argument passes ~9; the gated product is kept strictly inside.
const GATE_LIMIT: f32 = 1.0 - f32::EPSILON / 2.0;

#[inline]
fn gate(filter: f32, gate: f32) -> f32 {
    (filter.tanh() * sigmoid(gate)).clamp(-GATE_LIMIT, GATE_LIMIT)
}

/// One gated unit layer: returns `(z, x_next)`.
pub fn gcu_block_forward(x: &Signal, layer: &LayerWeights, dilation: usize) -> Result<(Signal, Signal)> {
    let f = dilated_conv(x, &layer.filter, dilation)?;
    let g = dilated_conv(x, &layer.gate, dilation)?;
    let z_data = f.data.iter().zip(&g.data).map(|(&a, &b)| gate(a, b)).collect();
    let z = Signal::new(z_data, f.channels, f.frames)?;
    let r = dilated_conv(&z, &layer.residual, 1)?;
    if r.channels != x.channels {
        return Err(Error::ShapeMismatch(format!(
            "residual projection yields {} channels, stream has {}",
            r.channels, x.channels
        )));
    }
    let next = x.data.iter().zip(&r.data).map(|(a, b)| a + b).collect();
    Ok((z, Signal::new(next, x.channels, x.frames)?))
}

/// Gated activations of every layer, `L × C × T` layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    values: Vec<f32>,
    layers: usize,
    channels: usize,
    frames: usize,
    utterance_id: String,
}

impl ActivationTensor {
    pub fn new(
        values: Vec<f32>,
        layers: usize,
        channels: usize,
        frames: usize,
        utterance_id: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != layers * channels * frames {
            return Err(Error::ShapeMismatch(format!(
                "{} activations for {layers} x {channels} x {frames}",
                values.len()
            )));
        }
        Ok(ActivationTensor {
            values,
            layers,
            channels,
            frames,
            utterance_id: utterance_id.into(),
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Time series of one unit.
    pub fn unit(&self, layer: usize, channel: usize) -> &[f32] {
        let start = (layer * self.channels + channel) * self.frames;
        &self.values[start..start + self.frames]
    }

    pub fn get(&self, layer: usize, channel: usize, t: usize) -> f32 {
        self.unit(layer, channel)[t]
    }
}

/// MFCC matrix as an `f32` network input.
pub fn mfcc_signal(mfcc: &MfccSequence) -> Signal {
    Signal {
        data: mfcc.coeffs().iter().map(|&c| c as f32).collect(),
        channels: mfcc.n_mfcc(),
        frames: mfcc.n_frames(),
    }
}

pub fn forward_collect(cfg: &ModelConfig, w: &WeightSet, mfcc: &MfccSequence) -> Result<ActivationTensor> {
    cfg.validate()?;
    if mfcc.n_mfcc() != cfg.n_mfcc {
        return Err(Error::ConfigWeightMismatch(format!(
            "input has {} coefficients, model expects {}",
            mfcc.n_mfcc(),
            cfg.n_mfcc
        )));
    }
    w.check_against(cfg)?;
    let input = mfcc_signal(mfcc);
    let mut x = dilated_conv(&input, &w.input_proj, 1)?;
    let frames = x.frames;
    let mut values = Vec::with_capacity(cfg.total_units() * frames);
    for (l, layer) in w.layers.iter().enumerate() {
        let (z, next) = gcu_block_forward(&x, layer, cfg.dilation(l))?;
        if z.data.iter().chain(&next.data).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation { layer: l });
        }
        values.extend_from_slice(&z.data);
        x = next;
    }
    ActivationTensor::new(values, cfg.total_layers(), cfg.channels, frames, mfcc.utterance_id())
}
