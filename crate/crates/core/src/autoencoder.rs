//! Sparse 1-D residual convolutional autoencoder.
//!
//! The encoder is a stack of residual blocks; each block computes
//!
//! ```text
//! out = shortcut(x) + conv2(relu(conv1(x) + b1)) + b2
//! ```
//!
//! where `conv1` carries the block's stride and `shortcut` is the identity
//! when shapes match and a 1×1 strided convolution otherwise. The decoder
//! mirrors the encoder with transposed convolutions in `conv1` and the
//! shortcut, so reconstructions have the input's shape. Block outputs are
//! linear: the latent code is a pre-activation, and the final decoder layer
//! can produce the negative values of z-scored features.
//!
//! The training loss is the mean half squared reconstruction error plus
//! `β·Σ_j KL(ρ ‖ ρ̂_j)`, with `ρ̂_j` the sigmoid of latent channel `j`'s mean
//! over the batch and time, plus weight decay on every kernel.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{conv1d_output_len, sigmoid, Graph, Var};
use crate::optim::{clip_global_norm, Adam};
use crate::tensor::Tensor;

/// ρ̂ is kept inside `[RHO_HAT_FLOOR, 1 − RHO_HAT_FLOOR]` before taking logs.
pub const RHO_HAT_FLOOR: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub channels: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub input_channels: usize,
    pub input_len: usize,
    /// encoder blocks, input side first; the decoder mirrors them
    pub blocks: Vec<BlockSpec>,
    pub kernel_size: usize,
    /// β
    pub sparsity_weight: f64,
    /// ρ
    pub sparsity_target: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// global gradient-norm clip applied before each update
    pub clip_threshold: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            input_channels: 17,
            input_len: 20,
            blocks: vec![
                BlockSpec { channels: 32, stride: 2 },
                BlockSpec { channels: 16, stride: 2 },
            ],
            kernel_size: 3,
            sparsity_weight: 1e-3,
            sparsity_target: 0.05,
            weight_decay: 1e-4,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            clip_threshold: 5.0,
            seed: 0,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.input_channels == 0 || self.input_len == 0 {
            return bad("input shape must be positive".into());
        }
        if self.blocks.is_empty() || self.blocks.iter().any(|b| b.channels == 0 || b.stride == 0) {
            return bad("encoder needs at least one block with positive channels and stride".into());
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return bad(format!("kernel size {} must be odd", self.kernel_size));
        }
        if !(self.sparsity_weight >= 0.0) {
            return bad("sparsity weight must be >= 0".into());
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return bad("sparsity target must lie in (0, 1)".into());
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be >= 0".into());
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !(self.clip_threshold > 0.0) {
            return bad("batch size, learning rate and clip threshold must be positive".into());
        }
        let mut len = self.input_len;
        for b in &self.blocks {
            len = conv1d_output_len(len, self.kernel_size, b.stride, self.kernel_size / 2)
                .ok_or_else(|| Error::Parameter(format!("input length {} too short for the encoder", self.input_len)))?;
        }
        Ok(())
    }

    /// Sequence lengths at the input and after each encoder block.
    pub fn lengths(&self) -> Vec<usize> {
        let mut out = vec![self.input_len];
        for b in &self.blocks {
            let last = *out.last().expect("non-empty");
            out.push((last - 1) / b.stride + 1);
        }
        out
    }

    pub fn latent_shape(&self) -> [usize; 2] {
        let c = self.blocks.last().map_or(self.input_channels, |b| b.channels);
        [c, *self.lengths().last().expect("non-empty")]
    }
}

#[derive(Clone, Debug, PartialEq)]
struct BlockLayout {
    transpose: bool,
    stride: usize,
    output_padding: usize,
    conv1: usize,
    bias1: usize,
    conv2: usize,
    bias2: usize,
    shortcut: Option<usize>,
}

/// Parameter slots and block wiring derived from a config.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    kernel: usize,
    encoder: Vec<BlockLayout>,
    decoder: Vec<BlockLayout>,
    /// (name, shape, uniform init bound) per parameter slot; biases have no bound
    slots: Vec<(String, Vec<usize>, Option<f64>)>,
}

impl Architecture {
    pub fn new(config: &AutoencoderConfig) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_size;
        let mut slots = Vec::new();
        let mut slot = |name: String, shape: Vec<usize>, bound: Option<f64>| {
            slots.push((name, shape, bound));
            slots.len() - 1
        };
        // kernels feeding a ReLU get gain 2, linear ones gain 1
        let relu = |fan_in: usize| Some((6.0 / fan_in.max(1) as f64).sqrt());
        let linear = |fan_in: usize| Some((3.0 / fan_in.max(1) as f64).sqrt());
        let channels: Vec<usize> = std::iter::once(config.input_channels)
            .chain(config.blocks.iter().map(|b| b.channels))
            .collect();
        let lengths = config.lengths();
        let mut encoder = Vec::new();
        for (i, b) in config.blocks.iter().enumerate() {
            let (cin, cout) = (channels[i], b.channels);
            let conv1 = slot(format!("enc{i}.conv1"), vec![cout, cin, k], relu(cin * k));
            let bias1 = slot(format!("enc{i}.bias1"), vec![cout], None);
            let conv2 = slot(format!("enc{i}.conv2"), vec![cout, cout, k], linear(cout * k));
            let bias2 = slot(format!("enc{i}.bias2"), vec![cout], None);
            let shortcut = (cin != cout || b.stride != 1)
                .then(|| slot(format!("enc{i}.shortcut"), vec![cout, cin, 1], linear(cin)));
            encoder.push(BlockLayout {
                transpose: false,
                stride: b.stride,
                output_padding: 0,
                conv1,
                bias1,
                conv2,
                bias2,
                shortcut,
            });
        }
        let mut decoder = Vec::new();
        for (d, i) in (0..config.blocks.len()).rev().enumerate() {
            let b = config.blocks[i];
            let (cin, cout) = (channels[i + 1], channels[i]);
            let (tin, tout) = (lengths[i + 1], lengths[i]);
            // both the k-wide branch and the 1×1 shortcut produce (tin − 1)·stride + 1 before padding
            let output_padding = tout - ((tin - 1) * b.stride + 1);
            // a transposed convolution sums about k/stride taps per output
            let conv1 = slot(format!("dec{d}.conv1"), vec![cin, cout, k], relu(cin * k / b.stride));
            let bias1 = slot(format!("dec{d}.bias1"), vec![cout], None);
            let conv2 = slot(format!("dec{d}.conv2"), vec![cout, cout, k], linear(cout * k));
            let bias2 = slot(format!("dec{d}.bias2"), vec![cout], None);
            let shortcut = (cin != cout || b.stride != 1)
                .then(|| slot(format!("dec{d}.shortcut"), vec![cin, cout, 1], linear(cin)));
            decoder.push(BlockLayout {
                transpose: true,
                stride: b.stride,
                output_padding,
                conv1,
                bias1,
                conv2,
                bias2,
                shortcut,
            });
        }
        Ok(Self {
            kernel: k,
            encoder,
            decoder,
            slots,
        })
    }

    pub fn param_count(&self) -> usize {
        self.slots.len()
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn param_shapes(&self) -> impl Iterator<Item = &[usize]> {
        self.slots.iter().map(|(_, s, _)| s.as_slice())
    }

    /// Number of leading parameter slots that belong to the encoder.
    pub fn encoder_param_count(&self) -> usize {
        self.decoder.first().map_or(self.slots.len(), |b| b.conv1)
    }

    /// Fan-in scaled uniform kernels (He-style: `sqrt(6 / fan_in)` before a ReLU, `sqrt(3 / fan_in)` otherwise), zero biases.
    pub fn init_params(&self, seed: u64) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.slots
            .iter()
            .map(|(_, shape, bound)| match bound {
                Some(b) => Tensor::uniform(shape, *b, &mut rng),
                None => Tensor::zeros(shape),
            })
            .collect()
    }

    fn block(&self, g: &mut Graph, p: &[Var], b: &BlockLayout, x: Var) -> Result<Var> {
        let pad = self.kernel / 2;
        let h = if b.transpose {
            g.conv1d_transpose_padded(x, p[b.conv1], b.stride, pad, b.output_padding)?
        } else {
            g.conv1d(x, p[b.conv1], b.stride, pad)?
        };
        let h = g.add_bias(h, p[b.bias1])?;
        let h = g.relu(h)?;
        let r = g.conv1d(h, p[b.conv2], 1, pad)?;
        let r = g.add_bias(r, p[b.bias2])?;
        let s = match (b.shortcut, b.transpose) {
            (None, _) => x,
            (Some(sc), false) => g.conv1d(x, p[sc], b.stride, 0)?,
            (Some(sc), true) => g.conv1d_transpose_padded(x, p[sc], b.stride, 0, b.output_padding)?,
        };
        g.add(r, s)
    }

    /// Encoder forward pass; `params` may be only the encoder slots.
    pub fn encode(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        self.encoder.iter().try_fold(x, |h, b| self.block(g, params, b, h))
    }

    pub fn decode(&self, g: &mut Graph, params: &[Var], latent: Var) -> Result<Var> {
        self.decoder.iter().try_fold(latent, |h, b| self.block(g, params, b, h))
    }

    fn kernel_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| s.2.is_some()).map(|(i, _)| i)
    }
}

/// `(1/N)·Σ_n ½‖x⁽ⁿ⁾ − y⁽ⁿ⁾‖²`.
pub fn reconstruction_error(g: &mut Graph, originals: &[Var], rebuilt: &[Var]) -> Result<Var> {
    if originals.is_empty() || originals.len() != rebuilt.len() {
        return Err(Error::dim("reconstruction needs equally many non-zero originals and rebuilds"));
    }
    let mut terms = Vec::with_capacity(originals.len());
    for (&x, &y) in originals.iter().zip(rebuilt) {
        let d = g.sub(x, y)?;
        terms.push(g.sum_squares(d)?);
    }
    let stacked = g.concat(&terms)?;
    let total = g.sum(stacked)?;
    g.scale(total, 0.5 / originals.len() as f64)
}

/// Mean of each latent channel over the batch and time; the hidden units' mean inputs.
pub fn latent_channel_means(g: &mut Graph, latents: &[Var]) -> Result<Var> {
    let first = *latents.first().ok_or_else(|| Error::dim("empty batch"))?;
    let mut acc = g.mean_last(first)?;
    for &l in &latents[1..] {
        let m = g.mean_last(l)?;
        acc = g.add(acc, m)?;
    }
    g.scale(acc, 1.0 / latents.len() as f64)
}

/// `Σ_j KL(ρ ‖ ρ̂_j)` with `ρ̂_j = σ(mean_inputs_j)`, clamped away from 0 and 1.
pub fn sparse_penalty(g: &mut Graph, mean_inputs: Var, rho: f64) -> Result<Var> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!("sparsity target {rho} outside (0, 1)")));
    }
    let s = g.value(mean_inputs).len() as f64;
    let rho_hat = g.sigmoid(mean_inputs)?;
    let rho_hat = g.clamp(rho_hat, RHO_HAT_FLOOR, 1.0 - RHO_HAT_FLOOR)?;
    let log_on = g.ln(rho_hat)?;
    let off = g.affine(rho_hat, -1.0, 1.0)?;
    let log_off = g.ln(off)?;
    let a = g.scale(log_on, -rho)?;
    let b = g.scale(log_off, -(1.0 - rho))?;
    let terms = g.add(a, b)?;
    let total = g.sum(terms)?;
    let constant = s * (rho * rho.ln() + (1.0 - rho) * (1.0 - rho).ln());
    g.affine(total, 1.0, constant)
}

/// Closed-form `Σ_j KL(ρ ‖ ρ̂_j)` on plain numbers.
pub fn kl_sparsity(rho: f64, rho_hat: &[f64]) -> f64 {
    rho_hat
        .iter()
        .map(|&q| {
            let q = q.clamp(RHO_HAT_FLOOR, 1.0 - RHO_HAT_FLOOR);
            rho * (rho / q).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - q)).ln()
        })
        .sum()
}

/// Scalar parts of one batch loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub reconstruction: f64,
    pub sparsity: f64,
    pub decay: f64,
}

/// Builds the full training loss for `batch` on `g`; returns the loss node and its parts.
pub fn batch_loss(
    arch: &Architecture,
    config: &AutoencoderConfig,
    g: &mut Graph,
    params: &[Var],
    batch: &[&Tensor],
) -> Result<(Var, LossParts)> {
    let mut originals = Vec::with_capacity(batch.len());
    let mut rebuilt = Vec::with_capacity(batch.len());
    let mut latents = Vec::with_capacity(batch.len());
    for x in batch {
        let xv = g.constant((*x).clone());
        let z = arch.encode(g, params, xv)?;
        let y = arch.decode(g, params, z)?;
        originals.push(xv);
        latents.push(z);
        rebuilt.push(y);
    }
    let recon = reconstruction_error(g, &originals, &rebuilt)?;
    let means = latent_channel_means(g, &latents)?;
    let sparse = sparse_penalty(g, means, config.sparsity_target)?;
    let weighted = g.scale(sparse, config.sparsity_weight)?;
    let mut total = g.add(recon, weighted)?;
    let mut decay_value = 0.0;
    if config.weight_decay > 0.0 {
        let squares = arch
            .kernel_slots()
            .map(|i| g.sum_squares(params[i]))
            .collect::<Result<Vec<_>>>()?;
        let stacked = g.concat(&squares)?;
        let sum = g.sum(stacked)?;
        let decay = g.scale(sum, config.weight_decay)?;
        decay_value = g.value(decay).item();
        total = g.add(total, decay)?;
    }
    let parts = LossParts {
        total: g.value(total).item(),
        reconstruction: g.value(recon).item(),
        sparsity: g.value(sparse).item(),
        decay: decay_value,
    };
    Ok((total, parts))
}

/// Autoencoder parameters together with the config that shapes them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedAutoencoder {
    pub config: AutoencoderConfig,
    pub params: Vec<Tensor>,
    /// mean batch loss per epoch
    pub loss_history: Vec<f64>,
    arch: Architecture,
}

impl TrainedAutoencoder {
    /// Freshly initialised, untrained model.
    pub fn initialise(config: &AutoencoderConfig) -> Result<Self> {
        let arch = Architecture::new(config)?;
        Ok(Self {
            params: arch.init_params(config.seed),
            config: config.clone(),
            loss_history: Vec::new(),
            arch,
        })
    }

    pub fn from_parts(config: AutoencoderConfig, params: Vec<Tensor>, loss_history: Vec<f64>) -> Result<Self> {
        let arch = Architecture::new(&config)?;
        if params.len() != arch.param_count()
            || params.iter().zip(arch.param_shapes()).any(|(p, s)| p.shape() != s)
        {
            return Err(Error::Format("autoencoder parameters do not match the config".into()));
        }
        Ok(Self {
            config,
            params,
            loss_history,
            arch,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn encoder_params(&self) -> &[Tensor] {
        &self.params[..self.arch.encoder_param_count()]
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = [self.config.input_channels, self.config.input_len];
        if x.shape() != want {
            return Err(Error::dim(format!("expected window {want:?}, got {:?}", x.shape())));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let p: Vec<Var> = self.encoder_params().iter().map(|t| g.constant(t.clone())).collect();
        let xv = g.constant(x.clone());
        let z = self.arch.encode(&mut g, &p, xv)?;
        Ok(g.value(z).clone())
    }

    pub fn decode(&self, latent: &Tensor) -> Result<Tensor> {
        let want = self.config.latent_shape();
        if latent.shape() != want {
            return Err(Error::dim(format!("expected latent {want:?}, got {:?}", latent.shape())));
        }
        let mut g = Graph::new();
        let p: Vec<Var> = self.params.iter().map(|t| g.constant(t.clone())).collect();
        let zv = g.constant(latent.clone());
        let y = self.arch.decode(&mut g, &p, zv)?;
        Ok(g.value(y).clone())
    }

    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.decode(&self.encode(x)?)
    }

    /// Loss parts of the current parameters over `data` as one batch.
    pub fn evaluate(&self, data: &[&Tensor]) -> Result<LossParts> {
        let mut g = Graph::new();
        let p: Vec<Var> = self.params.iter().map(|t| g.constant(t.clone())).collect();
        Ok(batch_loss(&self.arch, &self.config, &mut g, &p, data)?.1)
    }

    /// ρ̂ per latent channel over `data`.
    pub fn mean_activation(&self, data: &[&Tensor]) -> Result<Vec<f64>> {
        let [c, _] = self.config.latent_shape();
        let mut sums = vec![0.0; c];
        for x in data {
            let z = self.encode(x)?;
            for (s, row) in sums.iter_mut().zip(z.data().chunks(z.shape()[1])) {
                *s += row.iter().sum::<f64>() / row.len() as f64;
            }
        }
        Ok(sums.iter().map(|s| sigmoid(s / data.len() as f64)).collect())
    }
}

/// Trains a fresh autoencoder on `windows` with mini-batch Adam.
pub fn train(windows: &[&Tensor], config: &AutoencoderConfig) -> Result<TrainedAutoencoder> {
    let mut model = TrainedAutoencoder::initialise(config)?;
    train_from(&mut model, windows)?;
    Ok(model)
}

/// Continues training `model` for `model.config.epochs` epochs.
pub fn train_from(model: &mut TrainedAutoencoder, windows: &[&Tensor]) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::InsufficientData("autoencoder training set is empty".into()));
    }
    for w in windows {
        model.check_input(w)?;
    }
    let config = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_a0e0);
    let mut opt = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let diverged = |message: String| Error::Diverged {
                epoch,
                batch: bi,
                message,
            };
            let batch: Vec<&Tensor> = chunk.iter().map(|&i| windows[i]).collect();
            let mut g = Graph::new();
            let p: Vec<Var> = model.params.iter().map(|t| g.param(t.clone())).collect();
            let (loss, parts) = batch_loss(&model.arch, &config, &mut g, &p, &batch).map_err(|e| match e {
                Error::Numeric(m) => diverged(m),
                other => other,
            })?;
            if !parts.total.is_finite() {
                return Err(diverged("non-finite loss".into()));
            }
            g.backward(loss)?;
            let mut grads: Vec<Tensor> = p
                .iter()
                .zip(&model.params)
                .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
                .collect();
            clip_global_norm(&mut grads, config.clip_threshold)?;
            let mut refs: Vec<&mut Tensor> = model.params.iter_mut().collect();
            opt.step(&mut refs, &grads)?;
            epoch_loss += parts.total;
            batches += 1;
        }
        model.loss_history.push(epoch_loss / batches as f64);
    }
    Ok(())
}
