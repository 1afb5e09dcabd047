//! LSTM one-step-ahead forecaster over latent sequences.
//!
//! Gates act on the concatenation `z = [x_t, h_{t−1}]`:
//!
//! ```text
//! g = tanh(W_g z + b_g)    i = σ(W_i z + b_i)
//! f = σ(W_f z + b_f)       o = σ(W_o z + b_o)
//! c_t = i∘g + f∘c_{t−1}    h_t = o∘tanh(c_t)
//! ```
//!
//! A latent code of shape `D × T` is read as a length-`T` sequence whose step
//! `j` is latent column `j`; a linear head maps the final `h_T` to a scalar.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{Architecture, TrainedAutoencoder};
use crate::dataset::{ChannelStats, Sample, TargetMode, CLOSE_CHANNEL};
use crate::error::{Error, Result};
use crate::graph::{sigmoid, Graph, Var};
use crate::optim::{clip_global_norm, Adam};
use crate::parallel::Execution;
use crate::tensor::Tensor;

pub use crate::optim::clip_gradient;

/// Gate order used for every per-gate array: g, i, f, o.
pub const GATES: [&str; 4] = ["g", "i", "f", "o"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParameters {
    pub input_size: usize,
    pub hidden: usize,
    /// `H × (D + H)` each, gate order g, i, f, o
    pub weights: [Tensor; 4],
    /// length `H` each
    pub biases: [Tensor; 4],
}

impl LstmParameters {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, input_size + hidden]);
        let b = || Tensor::zeros(&[hidden]);
        Self {
            input_size,
            hidden,
            weights: [w(), w(), w(), w()],
            biases: [b(), b(), b(), b()],
        }
    }

    /// Weights uniform in `±1/sqrt(H)`, zero biases.
    pub fn init(input_size: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(input_size, hidden);
        for w in &mut p.weights {
            *w = Tensor::uniform(&[hidden, input_size + hidden], bound, rng);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let (h, d) = (self.hidden, self.input_size);
        if h == 0 || d == 0 {
            return Err(Error::Parameter("LSTM sizes must be positive".into()));
        }
        for k in 0..4 {
            if self.weights[k].shape() != [h, d + h] || self.biases[k].shape() != [h] {
                return Err(Error::dim(format!("gate {} parameters do not match H={h}, D={d}", GATES[k])));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            c: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }
}

/// Gate activations of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmGates {
    pub g: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
}

pub fn lstm_step(params: &LstmParameters, state: &LstmState, x: &[f64]) -> Result<LstmState> {
    Ok(lstm_step_gates(params, state, x)?.0)
}

/// One step, also returning the gate activations.
pub fn lstm_step_gates(params: &LstmParameters, state: &LstmState, x: &[f64]) -> Result<(LstmState, LstmGates)> {
    let (d, h) = (params.input_size, params.hidden);
    if x.len() != d {
        return Err(Error::dim(format!("step input has length {}, expected {d}", x.len())));
    }
    if state.c.len() != h || state.h.len() != h {
        return Err(Error::dim(format!("state length does not match hidden size {h}")));
    }
    let z: Vec<f64> = x.iter().chain(&state.h).copied().collect();
    let pre = |k: usize| -> Vec<f64> {
        let w = params.weights[k].data();
        let b = params.biases[k].data();
        (0..h)
            .map(|r| {
                let row = &w[r * (d + h)..(r + 1) * (d + h)];
                row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + b[r]
            })
            .collect()
    };
    let g: Vec<f64> = pre(0).into_iter().map(f64::tanh).collect();
    let i: Vec<f64> = pre(1).into_iter().map(sigmoid).collect();
    let f: Vec<f64> = pre(2).into_iter().map(sigmoid).collect();
    let o: Vec<f64> = pre(3).into_iter().map(sigmoid).collect();
    let c: Vec<f64> = (0..h).map(|r| i[r] * g[r] + f[r] * state.c[r]).collect();
    let hn: Vec<f64> = (0..h).map(|r| o[r] * c[r].tanh()).collect();
    if c.iter().chain(&hn).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("LSTM step produced non-finite state".into()));
    }
    Ok((LstmState { c, h: hn }, LstmGates { g, i, f, o }))
}

/// Graph handles of an LSTM's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub weights: [Var; 4],
    pub biases: [Var; 4],
}

/// One step on the graph; `c`, `h` and `x` are vectors.
pub fn lstm_step_graph(g: &mut Graph, p: &LstmVars, c: Var, h: Var, x: Var) -> Result<(Var, Var)> {
    let z = g.concat(&[x, h])?;
    let mut acts = [c; 4];
    for k in 0..4 {
        let a = g.matvec(p.weights[k], z)?;
        let a = g.add(a, p.biases[k])?;
        acts[k] = if k == 0 { g.tanh(a)? } else { g.sigmoid(a)? };
    }
    let [gate_g, gate_i, gate_f, gate_o] = acts;
    let ig = g.mul(gate_i, gate_g)?;
    let fc = g.mul(gate_f, c)?;
    let c_next = g.add(ig, fc)?;
    let tc = g.tanh(c_next)?;
    let h_next = g.mul(gate_o, tc)?;
    Ok((c_next, h_next))
}

/// LSTM plus linear head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub lstm: LstmParameters,
    /// `1 × H`
    pub head_weight: Tensor,
    /// length 1
    pub head_bias: Tensor,
}

impl Forecaster {
    pub fn init(input_size: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm = LstmParameters::init(input_size, hidden, &mut rng);
        let head_weight = Tensor::uniform(&[1, hidden], 1.0 / (hidden as f64).sqrt(), &mut rng);
        Self {
            lstm,
            head_weight,
            head_bias: Tensor::zeros(&[1]),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.lstm.weights.iter().chain(&self.lstm.biases).collect();
        v.push(&self.head_weight);
        v.push(&self.head_bias);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.lstm.weights.iter_mut().chain(self.lstm.biases.iter_mut()).collect();
        v.push(&mut self.head_weight);
        v.push(&mut self.head_bias);
        v
    }

    /// Registers every tensor on `g` (as parameters when `trainable`) in [`Forecaster::tensors`] order.
    pub fn register(&self, g: &mut Graph, trainable: bool) -> ForecasterVars {
        let vars: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        ForecasterVars::from_slice(&vars)
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm.validate()?;
        if self.head_weight.shape() != [1, self.lstm.hidden] || self.head_bias.shape() != [1] {
            return Err(Error::dim("head does not match hidden size"));
        }
        Ok(())
    }

    fn check_sequence(&self, latent: &Tensor) -> Result<()> {
        if latent.rank() != 2 || latent.shape()[0] != self.lstm.input_size || latent.shape()[1] == 0 {
            return Err(Error::dim(format!(
                "expected a {} × T latent sequence with T ≥ 1, got {:?}",
                self.lstm.input_size,
                latent.shape()
            )));
        }
        Ok(())
    }

    /// Final state after running the sequence from a zero state.
    pub fn final_state(&self, latent: &Tensor) -> Result<LstmState> {
        self.check_sequence(latent)?;
        let (d, t) = (latent.shape()[0], latent.shape()[1]);
        let mut state = LstmState::zeros(self.lstm.hidden);
        let mut x = vec![0.0; d];
        for j in 0..t {
            for (r, xr) in x.iter_mut().enumerate() {
                *xr = latent.data()[r * t + j];
            }
            state = lstm_step(&self.lstm, &state, &x)?;
        }
        Ok(state)
    }

    pub fn head(&self, h: &[f64]) -> f64 {
        self.head_weight.data().iter().zip(h).map(|(a, b)| a * b).sum::<f64>() + self.head_bias.data()[0]
    }

    pub fn forward_sequence(&self, latent: &Tensor) -> Result<f64> {
        let state = self.final_state(latent)?;
        Ok(self.head(&state.h))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ForecasterVars {
    pub lstm: LstmVars,
    pub head_weight: Var,
    pub head_bias: Var,
}

impl ForecasterVars {
    /// From ten handles in [`Forecaster::tensors`] order.
    pub fn from_slice(v: &[Var]) -> Self {
        Self {
            lstm: LstmVars {
                weights: [v[0], v[1], v[2], v[3]],
                biases: [v[4], v[5], v[6], v[7]],
            },
            head_weight: v[8],
            head_bias: v[9],
        }
    }
}

/// Head output for a `D × T` latent node, starting from a zero state.
pub fn sequence_prediction_graph(g: &mut Graph, p: &ForecasterVars, latent: Var) -> Result<Var> {
    let shape = g.shape(latent).to_vec();
    if shape.len() != 2 || shape[1] == 0 {
        return Err(Error::dim(format!("latent sequence must be D × T with T ≥ 1, got {shape:?}")));
    }
    let (d, t) = (shape[0], shape[1]);
    let hidden = g.shape(p.lstm.biases[0])[0];
    let mut c = g.constant(Tensor::zeros(&[hidden]));
    let mut h = g.constant(Tensor::zeros(&[hidden]));
    for j in 0..t {
        let col = g.slice(latent, 1, j, j + 1)?;
        let x = g.reshape(col, &[d])?;
        (c, h) = lstm_step_graph(g, &p.lstm, c, h, x)?;
    }
    let y = g.matvec(p.head_weight, h)?;
    g.add(y, p.head_bias)
}

pub fn reconstruct_price(prev_close: f64, predicted_roc: f64) -> Result<f64> {
    if !(prev_close > 0.0) {
        return Err(Error::Parameter(format!("previous close {prev_close} must be positive")));
    }
    Ok(prev_close * (1.0 + predicted_roc))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// global gradient-norm bound applied to every update
    pub clip_threshold: f64,
    pub max_epochs: usize,
    /// epochs without a validation improvement before stopping
    pub patience: usize,
    pub batch_size: usize,
    /// train the encoder together with the LSTM instead of freezing it
    pub joint_fine_tune: bool,
    /// end with the best monitored epoch's parameters rather than the last epoch's
    pub restore_best: bool,
    pub seed: u64,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            learning_rate: 1e-3,
            clip_threshold: 5.0,
            max_epochs: 500,
            patience: 20,
            batch_size: 32,
            joint_fine_tune: false,
            restore_best: true,
            seed: 0,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Parameter("hidden size, batch size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_threshold > 0.0) {
            return Err(Error::Parameter("learning rate and clip threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// mean squared error over the training set after each epoch
    pub train_loss: Vec<f64>,
    /// same on the monitoring set; empty when none was given
    pub validation_loss: Vec<f64>,
    /// 0-based epoch whose parameters were kept
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
    /// gradient norm before clipping, per update
    pub gradient_norms: Vec<f64>,
}

/// Encoder whose parameters are trained together with the forecaster.
pub struct TrainableEncoder<'a> {
    pub arch: &'a Architecture,
    /// the encoder's leading parameter slots
    pub params: &'a mut Vec<Tensor>,
}

/// `(input, target)`: a `D × T` latent when the encoder is frozen, a raw window otherwise.
pub type Example<'a> = (&'a Tensor, f64);

fn prediction_graph(
    g: &mut Graph,
    encoder: Option<(&Architecture, &[Var])>,
    vars: &ForecasterVars,
    input: &Tensor,
) -> Result<Var> {
    let x = g.constant(input.clone());
    let latent = match encoder {
        Some((arch, ev)) => arch.encode(g, ev, x)?,
        None => x,
    };
    sequence_prediction_graph(g, vars, latent)
}

fn mean_squared_error(
    model: &Forecaster,
    encoder: Option<(&Architecture, &[Tensor])>,
    data: &[Example<'_>],
    execution: Execution,
) -> Result<f64> {
    let errors = execution.map(data.to_vec(), |(input, target)| -> Result<f64> {
        let pred = match encoder {
            None => model.forward_sequence(input)?,
            Some((arch, params)) => {
                let mut g = Graph::new();
                let ev: Vec<Var> = params.iter().map(|t| g.constant(t.clone())).collect();
                let vars = model.register(&mut g, false);
                let y = prediction_graph(&mut g, Some((arch, &ev)), &vars, input)?;
                g.value(y).item()
            }
        };
        Ok((pred - target).powi(2))
    });
    let mut sum = 0.0;
    for e in errors {
        sum += e?;
    }
    Ok(sum / data.len() as f64)
}

/// Mini-batch Adam on the mean squared error with global-norm clipping and
/// early stopping on `validation` (or on the training loss when it is empty).
///
/// With `restore_best`, `model` (and the encoder, when given) end up holding the
/// parameters of the best epoch.
pub fn train_forecaster(
    model: &mut Forecaster,
    mut encoder: Option<TrainableEncoder<'_>>,
    train: &[Example<'_>],
    validation: &[Example<'_>],
    config: &ForecasterConfig,
    execution: Execution,
) -> Result<TrainingLog> {
    config.validate()?;
    model.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("forecaster training set is empty".into()));
    }
    let n_enc = encoder.as_ref().map_or(0, |e| e.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0157_0f0e);
    let mut opt = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainingLog {
        best_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best = (model.clone(), encoder.as_ref().map(|e| e.params.clone()));
    let mut since_best = 0;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let diverged = |message: String| Error::Diverged {
                epoch,
                batch: bi,
                message,
            };
            let enc_ref = encoder.as_ref().map(|e| (e.arch, e.params.as_slice()));
            let per_sample = execution.map(chunk.to_vec(), |idx| -> Result<(f64, Vec<Tensor>)> {
                let (input, target) = train[idx];
                let mut g = Graph::new();
                let ev: Vec<Var> = enc_ref
                    .map(|(_, p)| p.iter().map(|t| g.param(t.clone())).collect())
                    .unwrap_or_default();
                let vars = model.register(&mut g, true);
                let pred = prediction_graph(&mut g, enc_ref.map(|(a, _)| (a, ev.as_slice())), &vars, input)?;
                let y = g.constant(Tensor::scalar(target));
                let d = g.sub(pred, y)?;
                let loss = g.sum_squares(d)?;
                g.backward(loss)?;
                let all_vars = ev.iter().copied().chain(
                    [vars.lstm.weights, vars.lstm.biases].concat().into_iter().chain([vars.head_weight, vars.head_bias]),
                );
                let grads = all_vars
                    .map(|v| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(g.shape(v))))
                    .collect();
                Ok((g.value(loss).item(), grads))
            });
            let scale = 1.0 / chunk.len() as f64;
            let mut total: Option<Vec<Tensor>> = None;
            for r in per_sample {
                let (loss, grads) = r.map_err(|e| match e {
                    Error::Numeric(m) => diverged(m),
                    other => other,
                })?;
                if !loss.is_finite() {
                    return Err(diverged("non-finite loss".into()));
                }
                match total.as_mut() {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let mut grads = total.expect("non-empty batch");
            for t in &mut grads {
                t.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            let norm = clip_global_norm(&mut grads, config.clip_threshold)?;
            if !norm.is_finite() {
                return Err(diverged("non-finite gradient".into()));
            }
            log.gradient_norms.push(norm);
            let mut refs: Vec<&mut Tensor> = Vec::with_capacity(grads.len());
            if let Some(e) = encoder.as_mut() {
                refs.extend(e.params.iter_mut());
            }
            refs.extend(model.tensors_mut());
            debug_assert_eq!(refs.len(), n_enc + 10);
            opt.step(&mut refs, &grads)?;
        }

        let enc_ref = encoder.as_ref().map(|e| (e.arch, e.params.as_slice()));
        let train_loss = mean_squared_error(model, enc_ref, train, execution)?;
        let monitored = if validation.is_empty() {
            train_loss
        } else {
            let v = mean_squared_error(model, enc_ref, validation, execution)?;
            log.validation_loss.push(v);
            v
        };
        log.train_loss.push(train_loss);
        if !monitored.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                message: "non-finite epoch loss".into(),
            });
        }
        if monitored < log.best_loss {
            log.best_loss = monitored;
            log.best_epoch = epoch;
            best = (model.clone(), encoder.as_ref().map(|e| e.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log.stopped_early = epoch + 1 < config.max_epochs;
                break;
            }
        }
    }
    if config.restore_best {
        *model = best.0;
        if let (Some(e), Some(p)) = (encoder.as_mut(), best.1) {
            *e.params = p;
        }
    }
    Ok(log)
}

/// Everything needed to turn a feature window into a price forecast.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastModelBundle {
    pub autoencoder: TrainedAutoencoder,
    pub forecaster: Forecaster,
    pub mode: TargetMode,
    /// per-channel feature statistics from the training range
    pub normalization: Vec<ChannelStats>,
    /// standardisation of the training targets; the network predicts standardised targets
    pub target_stats: ChannelStats,
    pub clip_threshold: f64,
}

impl ForecastModelBundle {
    pub fn validate(&self) -> Result<()> {
        self.forecaster.validate()?;
        let [d, _] = self.autoencoder.config.latent_shape();
        if self.forecaster.lstm.input_size != d {
            return Err(Error::dim("forecaster input size does not match the latent channels"));
        }
        if self.normalization.len() != self.autoencoder.config.input_channels {
            return Err(Error::dim("normalization statistics do not match the input channels"));
        }
        Ok(())
    }

    /// Model output mapped back to target units (normalized close or raw rate of change).
    pub fn predict_target(&self, window: &Tensor) -> Result<f64> {
        let latent = self.autoencoder.encode(window)?;
        let z = self.forecaster.forward_sequence(&latent)?;
        Ok(self.target_stats.invert(z))
    }

    /// Price forecast for the sample's target date.
    pub fn predict_price(&self, sample: &Sample) -> Result<f64> {
        let t = self.predict_target(&sample.input)?;
        match self.mode {
            TargetMode::Absolute => Ok(self.normalization[CLOSE_CHANNEL].invert(t)),
            TargetMode::Roc => reconstruct_price(sample.prev_close, t),
        }
    }
}

/// Centre and spread of training targets; a constant target keeps scale 1.
pub fn target_statistics(targets: &[f64]) -> ChannelStats {
    let n = targets.len().max(1) as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let degenerate = !(std > 1e-12);
    ChannelStats {
        center: mean,
        scale: if degenerate { 1.0 } else { std },
        degenerate,
    }
}
