use c1d_forecast::autoencoder::{Architecture, AutoencoderConfig, BlockSpec};
use c1d_forecast::forecaster::{
    clip_gradient, lstm_step, lstm_step_gates, lstm_step_graph, reconstruct_price, sequence_prediction_graph,
    train_forecaster, Forecaster, ForecasterConfig, LstmParameters, LstmState, LstmVars, TrainableEncoder,
};
use c1d_forecast::gradcheck::grad_check_many;
use c1d_forecast::{Error, Execution, Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_lstm(d: usize, h: usize, seed: u64) -> LstmParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LstmParameters::init(d, h, &mut rng);
    for b in &mut p.biases {
        *b = Tensor::uniform(&[h], 0.5, &mut rng);
    }
    p
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn graph_step_matches_direct_step() {
    let p = random_lstm(3, 4, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let state = LstmState {
        c: random_vec(4, &mut rng),
        h: random_vec(4, &mut rng),
    };
    let x = random_vec(3, &mut rng);
    let direct = lstm_step(&p, &state, &x).unwrap();

    let mut g = Graph::new();
    let vars = LstmVars {
        weights: p.weights.clone().map(|t| g.constant(t)),
        biases: p.biases.clone().map(|t| g.constant(t)),
    };
    let c = g.constant(Tensor::vector(state.c.clone()));
    let h = g.constant(Tensor::vector(state.h.clone()));
    let xv = g.constant(Tensor::vector(x));
    let (c2, h2) = lstm_step_graph(&mut g, &vars, c, h, xv).unwrap();
    for (a, b) in g.value(c2).data().iter().zip(&direct.c) {
        assert!((a - b).abs() < 1e-14);
    }
    for (a, b) in g.value(h2).data().iter().zip(&direct.h) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn zero_head_predicts_its_bias() {
    let mut f = Forecaster::init(3, 5, 4);
    f.head_weight.data_mut().fill(0.0);
    f.head_bias = Tensor::vector(vec![0.75]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seq = Tensor::new(vec![3, 6], random_vec(18, &mut rng)).unwrap();
    assert_eq!(f.forward_sequence(&seq).unwrap(), 0.75);
}

#[test]
fn single_step_sequence_is_step_plus_head() {
    let f = Forecaster::init(2, 3, 6);
    let seq = Tensor::new(vec![2, 1], vec![0.4, -0.7]).unwrap();
    let s = lstm_step(&f.lstm, &LstmState::zeros(3), &[0.4, -0.7]).unwrap();
    assert_eq!(f.forward_sequence(&seq).unwrap(), f.head(&s.h));
    assert_eq!(f.forward_sequence(&seq).unwrap(), f.forward_sequence(&seq).unwrap());
}

#[test]
fn graph_sequence_matches_direct_sequence() {
    let f = Forecaster::init(4, 6, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let seq = Tensor::new(vec![4, 5], random_vec(20, &mut rng)).unwrap();
    let mut g = Graph::new();
    let vars = f.register(&mut g, false);
    let l = g.constant(seq.clone());
    let y = sequence_prediction_graph(&mut g, &vars, l).unwrap();
    assert!((g.value(y).item() - f.forward_sequence(&seq).unwrap()).abs() < 1e-13);
    assert!(matches!(f.forward_sequence(&Tensor::zeros(&[3, 5])), Err(Error::Dimension(_))));
}

proptest! {
    #[test]
    fn gates_stay_in_range(seed in 0u64..1000, scale in 0.1f64..30.0) {
        let p = random_lstm(3, 4, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let state = LstmState { c: random_vec(4, &mut rng), h: random_vec(4, &mut rng) };
        let x: Vec<f64> = random_vec(3, &mut rng).into_iter().map(|v| v * scale).collect();
        let (next, gates) = lstm_step_gates(&p, &state, &x).unwrap();
        for v in gates.i.iter().chain(&gates.f).chain(&gates.o) {
            prop_assert!((0.0..=1.0).contains(v));
        }
        prop_assert!(gates.g.iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert!(next.h.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn clipping_never_grows_or_turns(g in prop::collection::vec(-100.0f64..100.0, 1..40), t in 1e-3f64..50.0) {
        let c = clip_gradient(&g, t).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm(&c) <= t * (1.0 + 1e-12) || norm(&c) <= norm(&g));
        prop_assert!(norm(&c) <= norm(&g) * (1.0 + 1e-12));
        if norm(&g) > 0.0 {
            let cos = g.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() / (norm(&g) * norm(&c));
            prop_assert!((cos - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn clipping_examples() {
    let g = vec![2.0 * 0.6, 2.0 * 0.8];
    let c = clip_gradient(&g, 1.0).unwrap();
    assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
    let small = vec![0.3, 0.4];
    assert_eq!(clip_gradient(&small, 1.0).unwrap(), small);
    assert!(clip_gradient(&small, 0.0).is_err());
}

#[test]
fn memory_highway_preserves_cell() {
    let mut p = random_lstm(2, 3, 9);
    p.weights[1].data_mut().fill(0.0);
    p.weights[2].data_mut().fill(0.0);
    p.biases[1] = Tensor::vector(vec![-800.0; 3]);
    p.biases[2] = Tensor::vector(vec![800.0; 3]);
    let c0 = vec![0.9, -2.5, 17.0];
    let mut state = LstmState {
        c: c0.clone(),
        h: vec![0.0; 3],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let x = random_vec(2, &mut rng);
        state = lstm_step(&p, &state, &x).unwrap();
        assert_eq!(state.c, c0);
    }
}

#[test]
fn unrolled_gradient_matches_finite_differences() {
    for (len, seed) in [(1usize, 11u64), (5, 12), (10, 13)] {
        let p = random_lstm(3, 4, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let xs: Vec<Tensor> = (0..len).map(|_| Tensor::vector(random_vec(3, &mut rng))).collect();
        let point: Vec<Tensor> = p.weights.iter().chain(&p.biases).cloned().collect();
        let report = grad_check_many(
            |g, v| {
                let vars = LstmVars {
                    weights: [v[0], v[1], v[2], v[3]],
                    biases: [v[4], v[5], v[6], v[7]],
                };
                let mut c = g.constant(Tensor::zeros(&[4]));
                let mut h = g.constant(Tensor::zeros(&[4]));
                for x in &xs {
                    let xv = g.constant(x.clone());
                    (c, h) = lstm_step_graph(g, &vars, c, h, xv)?;
                }
                g.sum_squares(h)
            },
            &point,
            1e-6,
            Execution::default(),
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "length {len}: {report:?}");
    }
}

/// Sequences `2 × T` from a stationary AR(1); the target is a fixed linear read-out.
fn ar1_examples(n: usize, t: usize, seed: u64) -> Vec<(Tensor, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.6).unwrap();
    let total = n + t;
    let mut x = vec![0.0f64; total];
    for i in 1..total {
        x[i] = 0.8 * x[i - 1] + noise.sample(&mut rng);
    }
    (0..n)
        .map(|s| {
            let win = &x[s..s + t];
            let mut data: Vec<f64> = win.to_vec();
            data.extend(win.iter().map(|v| 0.5 * v));
            let target = 0.5 * win[t - 1] + 0.3 * win[t - 2];
            (Tensor::new(vec![2, t], data).unwrap(), target)
        })
        .collect()
}

fn as_examples(v: &[(Tensor, f64)]) -> Vec<(&Tensor, f64)> {
    v.iter().map(|(t, y)| (t, *y)).collect()
}

#[test]
fn ar1_readout_is_learnable() {
    let data = ar1_examples(400, 5, 21);
    let (train, val) = data.split_at(320);
    let mut f = Forecaster::init(2, 8, 22);
    let cfg = ForecasterConfig {
        hidden: 8,
        learning_rate: 1e-2,
        max_epochs: 150,
        patience: 20,
        batch_size: 16,
        seed: 23,
        ..Default::default()
    };
    let log = train_forecaster(&mut f, None, &as_examples(train), &as_examples(val), &cfg, Execution::default()).unwrap();
    let targets: Vec<f64> = val.iter().map(|(_, y)| *y).collect();
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / targets.len() as f64;
    assert!(log.best_loss < 0.1 * var, "val mse {} vs variance {var}", log.best_loss);

    // kept parameters are those of the best validation epoch
    let min = log.validation_loss.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(log.best_loss, min);
    assert_eq!(log.validation_loss[log.best_epoch], min);
    let mse = val.iter().map(|(x, y)| (f.forward_sequence(x).unwrap() - y).powi(2)).sum::<f64>() / val.len() as f64;
    assert!((mse - min).abs() < 1e-12);
}

#[test]
fn early_stopping_halts_after_patience() {
    let data = ar1_examples(60, 4, 31);
    let (train, val) = data.split_at(40);
    let mut f = Forecaster::init(2, 4, 32);
    let cfg = ForecasterConfig {
        hidden: 4,
        learning_rate: 0.3,
        max_epochs: 400,
        patience: 3,
        seed: 33,
        ..Default::default()
    };
    let log = train_forecaster(&mut f, None, &as_examples(train), &as_examples(val), &cfg, Execution::default()).unwrap();
    assert!(log.stopped_early);
    assert_eq!(log.validation_loss.len(), log.best_epoch + 1 + cfg.patience);
}

#[test]
fn tight_clipping_slows_parameter_movement() {
    let data = ar1_examples(64, 5, 41);
    let examples = as_examples(&data);
    let lr = 1e-2;
    let run = |threshold: f64| {
        let mut f = Forecaster::init(2, 6, 42);
        let start = f.clone();
        let cfg = ForecasterConfig {
            hidden: 6,
            learning_rate: lr,
            clip_threshold: threshold,
            max_epochs: 1,
            batch_size: 64,
            seed: 43,
            ..Default::default()
        };
        let log = train_forecaster(&mut f, None, &examples, &[], &cfg, Execution::default()).unwrap();
        let moves: Vec<f64> = start
            .tensors()
            .iter()
            .zip(f.tensors())
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
            .collect();
        (moves, log.gradient_norms[0])
    };
    let (clipped, norm) = run(1e-6);
    let (free, _) = run(1e9);
    assert!(norm > 1e-6);
    assert!(clipped.iter().all(|&m| m <= lr * (1.0 + 1e-9)));
    for (c, u) in clipped.iter().zip(&free) {
        assert!(c <= &(u + 1e-15));
    }
    assert!(clipped.iter().sum::<f64>() < free.iter().sum::<f64>());
}

#[test]
fn training_is_identical_across_execution_modes() {
    let data = ar1_examples(80, 5, 51);
    let (train, val) = data.split_at(64);
    let cfg = ForecasterConfig {
        hidden: 5,
        max_epochs: 5,
        seed: 52,
        ..Default::default()
    };
    let mut a = Forecaster::init(2, 5, 53);
    let mut b = a.clone();
    let la = train_forecaster(&mut a, None, &as_examples(train), &as_examples(val), &cfg, Execution::Parallel).unwrap();
    let lb = train_forecaster(&mut b, None, &as_examples(train), &as_examples(val), &cfg, Execution::Sequential).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a, b);
}

#[test]
fn joint_fine_tuning_moves_the_encoder() {
    let ae = AutoencoderConfig {
        input_channels: 2,
        input_len: 8,
        blocks: vec![BlockSpec { channels: 3, stride: 2 }],
        ..Default::default()
    };
    let arch = Architecture::new(&ae).unwrap();
    let mut enc: Vec<Tensor> = arch.init_params(61)[..arch.encoder_param_count()].to_vec();
    let before = enc.clone();
    let data = ar1_examples(40, 8, 62);
    let mut f = Forecaster::init(3, 4, 63);
    let cfg = ForecasterConfig {
        hidden: 4,
        learning_rate: 1e-2,
        max_epochs: 10,
        joint_fine_tune: true,
        seed: 64,
        ..Default::default()
    };
    let log = train_forecaster(
        &mut f,
        Some(TrainableEncoder {
            arch: &arch,
            params: &mut enc,
        }),
        &as_examples(&data),
        &[],
        &cfg,
        Execution::default(),
    )
    .unwrap();
    assert_ne!(enc, before);
    assert!(log.best_loss < log.train_loss[0] || log.best_epoch == 0);
}

#[test]
fn empty_training_set_is_rejected() {
    let mut f = Forecaster::init(2, 3, 1);
    let r = train_forecaster(&mut f, None, &[], &[], &ForecasterConfig::default(), Execution::default());
    assert!(matches!(r, Err(Error::InsufficientData(_))));
}

#[test]
fn reconstructed_roc_targets_recover_prices() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..1000 {
        let prev: f64 = rng.random_range(1.0..5000.0);
        let next: f64 = prev * rng.random_range(0.8..1.2);
        let roc = (next - prev) / prev;
        let back = reconstruct_price(prev, roc).unwrap();
        assert!((back - next).abs() <= 1e-12 * next);
    }
}
