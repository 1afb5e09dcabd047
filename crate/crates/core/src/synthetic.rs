//! Noisy sine-bias regression: de-noise-then-predict versus a fused network.
//!
//! Each sample is `y = sin(x + 2πb)` on the grid `x_k = −2π + 4πk/m`, with
//! Gaussian noise and a few Gaussian bumps `λ·Σ c_i·exp(−(x − b_ri)²)` added.
//! The label is `b`. Two regressors are compared on the same data:
//!
//! * fused: a convolutional encoder feeding an LSTM head, trained end to end;
//! * decoupled: the same encoder trained first as an autoencoder, frozen, and
//!   followed by an LSTM trained on its latent sequences.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, AutoencoderConfig, BlockSpec, TrainedAutoencoder};
use crate::error::{Error, Result};
use crate::forecaster::{train_forecaster, Forecaster, ForecasterConfig, TrainableEncoder};
use crate::parallel::Execution;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// μ
    pub gaussian_mean: f64,
    /// δ
    pub gaussian_std: f64,
    /// λ
    pub peak_scale: f64,
    /// n
    pub peak_count: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gaussian_mean: 0.0,
            gaussian_std: 0.1,
            peak_scale: 0.3,
            peak_count: 3,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            gaussian_mean: 0.0,
            gaussian_std: 0.0,
            peak_scale: 0.0,
            peak_count: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SineTaskConfig {
    /// sequence length m
    pub length: usize,
    pub count: usize,
    /// leading share of samples used for training
    pub train_fraction: f64,
    /// labels are drawn from `U(−label_range, label_range)`
    pub label_range: f64,
    pub noise: NoiseConfig,
}

impl Default for SineTaskConfig {
    fn default() -> Self {
        Self {
            length: 64,
            count: 2000,
            train_fraction: 0.8,
            label_range: 1.0,
            noise: NoiseConfig::default(),
        }
    }
}

impl SineTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if self.length < 4 {
            return bad("sequence length must be at least 4");
        }
        if self.count == 0 {
            return bad("sample count must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train fraction must lie in (0, 1)");
        }
        if !(self.label_range > 0.0 && self.label_range <= 1.0) {
            return bad("label range must lie in (0, 1]");
        }
        let n = &self.noise;
        if !n.gaussian_mean.is_finite() || !(n.gaussian_std >= 0.0) || !(n.peak_scale >= 0.0) {
            return bad("noise parameters must be finite with non-negative spread and scale");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineSample {
    pub label: f64,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
}

impl SineSample {
    /// `1 × m` network input.
    pub fn input(&self) -> Tensor {
        Tensor::new(vec![1, self.noisy.len()], self.noisy.clone()).expect("consistent length")
    }
}

/// `x_k = −2π + 4πk/m` for `k = 0..m`.
pub fn grid(m: usize) -> Vec<f64> {
    (0..m).map(|k| -2.0 * PI + 4.0 * PI * k as f64 / m as f64).collect()
}

pub fn generate_task(config: &SineTaskConfig, seed: u64) -> Result<Vec<SineSample>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = grid(config.length);
    let noise = &config.noise;
    let gauss = Normal::new(noise.gaussian_mean, noise.gaussian_std)
        .map_err(|e| Error::Parameter(format!("gaussian noise: {e}")))?;
    let coin = Bernoulli::new(0.5).expect("valid probability");
    let r = config.label_range;
    Ok((0..config.count)
        .map(|_| {
            let label = rng.random_range(-r..=r);
            let clean: Vec<f64> = xs.iter().map(|x| (x + 2.0 * PI * label).sin()).collect();
            let peaks: Vec<(bool, f64)> = (0..noise.peak_count)
                .map(|_| (coin.sample(&mut rng), rng.random_range(-1.0..=1.0)))
                .collect();
            let noisy = xs
                .iter()
                .zip(&clean)
                .map(|(x, y)| {
                    let bumps: f64 = peaks
                        .iter()
                        .filter(|(on, _)| *on)
                        .map(|(_, b)| (-(x - b) * (x - b)).exp())
                        .sum();
                    let g = if noise.gaussian_std > 0.0 { gauss.sample(&mut rng) } else { noise.gaussian_mean };
                    y + g + noise.peak_scale * bumps
                })
                .collect();
            SineSample { label, clean, noisy }
        })
        .collect())
}

/// Denoised reconstruction and its distances to the clean and noisy curves.
#[derive(Clone, Debug, PartialEq)]
pub struct Rebuild {
    pub denoised: Vec<f64>,
    pub rms_to_clean: f64,
    pub rms_to_noisy: f64,
    /// distance of the noisy input itself from the clean curve
    pub noisy_rms_to_clean: f64,
}

pub fn rms_distance(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn rebuild_curve(model: &TrainedAutoencoder, sample: &SineSample) -> Result<Rebuild> {
    let denoised = model.reconstruct(&sample.input())?.into_data();
    Ok(Rebuild {
        rms_to_clean: rms_distance(&denoised, &sample.clean),
        rms_to_noisy: rms_distance(&denoised, &sample.noisy),
        noisy_rms_to_clean: rms_distance(&sample.noisy, &sample.clean),
        denoised,
    })
}

/// Mean squared first difference of the taps; lower is smoother.
pub fn kernel_smoothness(taps: &[f64]) -> Result<f64> {
    if taps.len() < 2 {
        return Err(Error::Parameter("a kernel needs at least two taps".into()));
    }
    let sum: f64 = taps.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(sum / (taps.len() - 1) as f64)
}

/// Average smoothness over every `(out, in)` tap row of a `C_out × C_in × k` kernel.
pub fn mean_kernel_smoothness(kernel: &Tensor) -> Result<f64> {
    let k = *kernel.shape().last().ok_or_else(|| Error::dim("empty kernel"))?;
    let rows: Vec<f64> = kernel.data().chunks(k).map(kernel_smoothness).collect::<Result<_>>()?;
    Ok(rows.iter().sum::<f64>() / rows.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonConfig {
    pub task: SineTaskConfig,
    /// encoder shared by both models; its decoder is only used by the decoupled one
    pub autoencoder: AutoencoderConfig,
    /// LSTM head and regression training of both models
    pub forecaster: ForecasterConfig,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            task: SineTaskConfig::default(),
            autoencoder: AutoencoderConfig {
                input_channels: 1,
                input_len: 64,
                blocks: vec![
                    BlockSpec { channels: 4, stride: 2 },
                    BlockSpec { channels: 4, stride: 2 },
                    BlockSpec { channels: 2, stride: 2 },
                ],
                kernel_size: 5,
                epochs: 30,
                batch_size: 32,
                learning_rate: 5e-3,
                ..Default::default()
            },
            forecaster: ForecasterConfig {
                hidden: 16,
                learning_rate: 5e-3,
                max_epochs: 40,
                patience: 40,
                batch_size: 32,
                restore_best: false,
                ..Default::default()
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurves {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

impl LossCurves {
    /// `test − train` per epoch.
    pub fn gap(&self) -> Vec<f64> {
        self.test.iter().zip(&self.train).map(|(t, r)| t - r).collect()
    }

    pub fn min_test(&self) -> f64 {
        self.test.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Epoch of the lowest training loss (first one on ties).
    pub fn best_train_epoch(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.train.iter().enumerate() {
            if *v < self.train[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub seed: u64,
    pub fused: LossCurves,
    pub decoupled: LossCurves,
    pub autoencoder_loss: Vec<f64>,
    /// first encoder convolution after training, per model
    pub fused_kernel: Tensor,
    pub decoupled_kernel: Tensor,
    pub fused_smoothness: f64,
    pub decoupled_smoothness: f64,
    /// median over test samples
    pub median_rebuild_rms_to_clean: f64,
    pub median_noisy_rms_to_clean: f64,
}

impl ComparisonResult {
    /// Decoupled and fused loss gaps at the fused model's best-train epoch.
    pub fn gaps_at_fused_best(&self) -> (f64, f64) {
        let e = self.fused.best_train_epoch();
        (self.decoupled.gap()[e], self.fused.gap()[e])
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn diverged_at(e: Error, what: &str) -> Error {
    match e {
        Error::Diverged { epoch, batch, message } => Error::Diverged {
            epoch,
            batch,
            message: format!("{what}: {message}"),
        },
        other => other,
    }
}

/// Trains both models on one generated task.
pub fn run_comparison(config: &ComparisonConfig, seed: u64, execution: Execution) -> Result<ComparisonResult> {
    let ae_cfg = AutoencoderConfig {
        input_channels: 1,
        input_len: config.task.length,
        seed: seed.wrapping_add(1),
        ..config.autoencoder.clone()
    };
    let fc_cfg = ForecasterConfig {
        seed: seed.wrapping_add(2),
        ..config.forecaster.clone()
    };
    let samples = generate_task(&config.task, seed)?;
    let n_train = ((samples.len() as f64) * config.task.train_fraction).round() as usize;
    let n_train = n_train.clamp(1, samples.len().saturating_sub(1).max(1));
    let (train, test) = samples.split_at(n_train);
    if test.is_empty() {
        return Err(Error::InsufficientData("the task leaves no test samples".into()));
    }
    let train_in: Vec<Tensor> = train.iter().map(SineSample::input).collect();
    let test_in: Vec<Tensor> = test.iter().map(SineSample::input).collect();

    // decoupled: autoencoder first, then an LSTM on frozen latents
    let ae = autoencoder::train(&train_in.iter().collect::<Vec<_>>(), &ae_cfg).map_err(|e| diverged_at(e, "autoencoder"))?;
    let encode_all = |xs: &[Tensor]| xs.iter().map(|x| ae.encode(x)).collect::<Result<Vec<_>>>();
    let (train_lat, test_lat) = (encode_all(&train_in)?, encode_all(&test_in)?);
    let [d, _] = ae_cfg.latent_shape();
    let train_ex: Vec<(&Tensor, f64)> = train_lat.iter().zip(train).map(|(x, s)| (x, s.label)).collect();
    let test_ex: Vec<(&Tensor, f64)> = test_lat.iter().zip(test).map(|(x, s)| (x, s.label)).collect();
    let mut decoupled = Forecaster::init(d, fc_cfg.hidden, fc_cfg.seed);
    let dec_log = train_forecaster(&mut decoupled, None, &train_ex, &test_ex, &fc_cfg, execution)
        .map_err(|e| diverged_at(e, "decoupled"))?;

    // fused: the same encoder from the same initialisation, trained end to end
    let arch = ae.architecture();
    let mut enc_params: Vec<Tensor> = arch.init_params(ae_cfg.seed)[..arch.encoder_param_count()].to_vec();
    let mut fused = Forecaster::init(d, fc_cfg.hidden, fc_cfg.seed);
    let train_raw: Vec<(&Tensor, f64)> = train_in.iter().zip(train).map(|(x, s)| (x, s.label)).collect();
    let test_raw: Vec<(&Tensor, f64)> = test_in.iter().zip(test).map(|(x, s)| (x, s.label)).collect();
    let fused_log = train_forecaster(
        &mut fused,
        Some(TrainableEncoder {
            arch,
            params: &mut enc_params,
        }),
        &train_raw,
        &test_raw,
        &fc_cfg,
        execution,
    )
    .map_err(|e| diverged_at(e, "fused"))?;

    let rebuilds = test.iter().map(|s| rebuild_curve(&ae, s)).collect::<Result<Vec<_>>>()?;
    let fused_kernel = enc_params[0].clone();
    let decoupled_kernel = ae.params[0].clone();
    Ok(ComparisonResult {
        seed,
        fused: LossCurves {
            train: fused_log.train_loss,
            test: fused_log.validation_loss,
        },
        decoupled: LossCurves {
            train: dec_log.train_loss,
            test: dec_log.validation_loss,
        },
        autoencoder_loss: ae.loss_history.clone(),
        fused_smoothness: mean_kernel_smoothness(&fused_kernel)?,
        decoupled_smoothness: mean_kernel_smoothness(&decoupled_kernel)?,
        fused_kernel,
        decoupled_kernel,
        median_rebuild_rms_to_clean: median(&rebuilds.iter().map(|r| r.rms_to_clean).collect::<Vec<_>>()),
        median_noisy_rms_to_clean: median(&rebuilds.iter().map(|r| r.noisy_rms_to_clean).collect::<Vec<_>>()),
    })
}

/// Medians over seeds of the quantities the comparison is judged on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub seeds: Vec<u64>,
    pub median_min_test_fused: f64,
    pub median_min_test_decoupled: f64,
    pub median_gap_fused: f64,
    pub median_gap_decoupled: f64,
    pub median_rebuild_rms_to_clean: f64,
    pub median_noisy_rms_to_clean: f64,
    pub median_smoothness_fused: f64,
    pub median_smoothness_decoupled: f64,
}

impl ComparisonSummary {
    pub fn from_results(results: &[ComparisonResult]) -> Self {
        let med = |f: &dyn Fn(&ComparisonResult) -> f64| median(&results.iter().map(f).collect::<Vec<_>>());
        Self {
            seeds: results.iter().map(|r| r.seed).collect(),
            median_min_test_fused: med(&|r| r.fused.min_test()),
            median_min_test_decoupled: med(&|r| r.decoupled.min_test()),
            median_gap_fused: med(&|r| r.gaps_at_fused_best().1),
            median_gap_decoupled: med(&|r| r.gaps_at_fused_best().0),
            median_rebuild_rms_to_clean: med(&|r| r.median_rebuild_rms_to_clean),
            median_noisy_rms_to_clean: med(&|r| r.median_noisy_rms_to_clean),
            median_smoothness_fused: med(&|r| r.fused_smoothness),
            median_smoothness_decoupled: med(&|r| r.decoupled_smoothness),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv write failed: {e}"))
}

/// `epoch,train_fused,test_fused,train_decoupled,test_decoupled`.
pub fn write_loss_curves<W: Write>(out: W, result: &ComparisonResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_fused", "test_fused", "train_decoupled", "test_decoupled"])
        .map_err(csv_err)?;
    let n = result.fused.train.len().max(result.decoupled.train.len());
    let get = |v: &[f64], i: usize| v.get(i).map_or_else(String::new, f64::to_string);
    for i in 0..n {
        w.write_record([
            (i + 1).to_string(),
            get(&result.fused.train, i),
            get(&result.fused.test, i),
            get(&result.decoupled.train, i),
            get(&result.decoupled.test, i),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("csv flush failed: {e}")))
}

/// `model,out_channel,in_channel,tap,weight` for both first-layer kernels.
pub fn write_kernels<W: Write>(out: W, result: &ComparisonResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "out_channel", "in_channel", "tap", "weight"]).map_err(csv_err)?;
    for (name, kernel) in [("fused", &result.fused_kernel), ("decoupled", &result.decoupled_kernel)] {
        let s = kernel.shape();
        let (cin, k) = (s[1], s[2]);
        for (idx, v) in kernel.data().iter().enumerate() {
            w.write_record([
                name.to_string(),
                (idx / (cin * k)).to_string(),
                ((idx / k) % cin).to_string(),
                (idx % k).to_string(),
                v.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Data(format!("csv flush failed: {e}")))
}
