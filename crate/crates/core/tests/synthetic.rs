use c1d_forecast::autoencoder::{self, AutoencoderConfig};
use c1d_forecast::synthetic::{
    generate_task, grid, kernel_smoothness, rebuild_curve, run_comparison, write_kernels, write_loss_curves,
    ComparisonConfig, ComparisonSummary, NoiseConfig, SineTaskConfig,
};
use c1d_forecast::{Error, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn task(noise: NoiseConfig, count: usize) -> SineTaskConfig {
    SineTaskConfig {
        count,
        noise,
        ..Default::default()
    }
}

#[test]
fn noiseless_samples_are_clean_sines() {
    let data = generate_task(&task(NoiseConfig::noiseless(), 50), 1).unwrap();
    let xs = grid(64);
    for s in &data {
        assert!(s.label.abs() <= 1.0);
        assert_eq!(s.noisy, s.clean);
        for (x, y) in xs.iter().zip(&s.clean) {
            assert_eq!(*y, (x + 2.0 * std::f64::consts::PI * s.label).sin());
            assert!(y.abs() <= 1.0);
        }
    }
}

#[test]
fn full_label_range_is_ambiguous_up_to_one_period() {
    let data = generate_task(&task(NoiseConfig::noiseless(), 200), 5).unwrap();
    let xs = grid(64);
    let mut best_loss = 0.0;
    for s in &data {
        let twin = if s.label >= 0.0 { s.label - 1.0 } else { s.label + 1.0 };
        for (x, y) in xs.iter().zip(&s.clean) {
            assert!((y - (x + 2.0 * std::f64::consts::PI * twin).sin()).abs() < 1e-12);
        }
        // the best any curve-based regressor can do is the midpoint of the twins
        let guess = s.label.rem_euclid(1.0) - 0.5;
        best_loss += (s.label - guess).powi(2);
    }
    assert!((best_loss / data.len() as f64 - 0.25).abs() < 1e-12);
}

#[test]
fn gaussian_noise_has_configured_spread() {
    let noise = NoiseConfig {
        gaussian_std: 0.1,
        peak_scale: 0.0,
        ..Default::default()
    };
    let data = generate_task(&task(noise, 1000), 2).unwrap();
    let resid: Vec<f64> = data.iter().flat_map(|s| s.noisy.iter().zip(&s.clean).map(|(n, c)| n - c)).collect();
    let mean = resid.iter().sum::<f64>() / resid.len() as f64;
    let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (resid.len() - 1) as f64).sqrt();
    assert!((sd - 0.1).abs() < 0.02, "sample std {sd}");
}

#[test]
fn peaks_are_non_negative_bumps() {
    let noise = NoiseConfig {
        gaussian_std: 0.0,
        peak_scale: 0.3,
        peak_count: 3,
        ..Default::default()
    };
    let data = generate_task(&task(noise, 200), 3).unwrap();
    let mut any = false;
    for s in &data {
        for (n, c) in s.noisy.iter().zip(&s.clean) {
            let d = n - c;
            assert!((0.0..=0.9 + 1e-12).contains(&d));
            any |= d > 0.1;
        }
    }
    assert!(any);
}

#[test]
fn generation_is_seeded() {
    let cfg = SineTaskConfig::default();
    assert_eq!(generate_task(&cfg, 5).unwrap(), generate_task(&cfg, 5).unwrap());
    assert_ne!(generate_task(&cfg, 5).unwrap(), generate_task(&cfg, 6).unwrap());
}

#[test]
fn invalid_task_configs() {
    for bad in [
        SineTaskConfig { length: 3, ..Default::default() },
        SineTaskConfig { count: 0, ..Default::default() },
        SineTaskConfig { train_fraction: 1.0, ..Default::default() },
        SineTaskConfig {
            noise: NoiseConfig { gaussian_std: -1.0, ..Default::default() },
            ..Default::default()
        },
    ] {
        assert!(matches!(generate_task(&bad, 0), Err(Error::Parameter(_))));
    }
}

#[test]
fn smoothness_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = rng.random_range(2..12);
        let taps: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut acc = 0.0;
        for i in 1..n {
            acc += (taps[i] - taps[i - 1]) * (taps[i] - taps[i - 1]);
        }
        assert!((kernel_smoothness(&taps).unwrap() - acc / (n - 1) as f64).abs() < 1e-12);
    }
}

fn noiseless_config() -> ComparisonConfig {
    let mut cfg = ComparisonConfig::default();
    cfg.task.noise = NoiseConfig::noiseless();
    // b and b ± 1 give the same curve, so only a sub-period label range is learnable exactly
    cfg.task.label_range = 0.25;
    cfg.task.count = 600;
    cfg.forecaster.max_epochs = 25;
    cfg.forecaster.patience = 25;
    cfg
}

#[test]
fn noiseless_task_is_solved_by_both_models() {
    let r = run_comparison(&noiseless_config(), 11, Execution::default()).unwrap();
    assert!(r.fused.min_test() < 1e-2, "fused {}", r.fused.min_test());
    assert!(r.decoupled.min_test() < 1e-2, "decoupled {}", r.decoupled.min_test());
    assert!(r.median_rebuild_rms_to_clean < 0.1, "rebuild {}", r.median_rebuild_rms_to_clean);
    assert_eq!(r.median_noisy_rms_to_clean, 0.0);
}

#[test]
fn rebuild_metrics_match_loop_oracle() {
    let cfg = noiseless_config();
    let data = generate_task(&SineTaskConfig { count: 40, ..cfg.task.clone() }, 12).unwrap();
    let inputs: Vec<_> = data.iter().map(|s| s.input()).collect();
    let ae = autoencoder::train(
        &inputs.iter().collect::<Vec<_>>(),
        &AutoencoderConfig {
            epochs: 3,
            ..cfg.autoencoder.clone()
        },
    )
    .unwrap();
    for s in &data[..5] {
        let r = rebuild_curve(&ae, s).unwrap();
        assert_eq!(r.denoised, ae.reconstruct(&s.input()).unwrap().into_data());
        let mut a = 0.0;
        let mut b = 0.0;
        for k in 0..s.clean.len() {
            a += (r.denoised[k] - s.clean[k]).powi(2);
            b += (r.denoised[k] - s.noisy[k]).powi(2);
        }
        assert!((r.rms_to_clean - (a / 64.0).sqrt()).abs() < 1e-12);
        assert!((r.rms_to_noisy - (b / 64.0).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn comparison_is_reproducible_and_exports() {
    let mut cfg = ComparisonConfig::default();
    cfg.task.count = 120;
    cfg.autoencoder.epochs = 3;
    cfg.forecaster.max_epochs = 3;
    let a = run_comparison(&cfg, 13, Execution::Parallel).unwrap();
    let b = run_comparison(&cfg, 13, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.fused.train.len(), 3);
    assert_eq!(a.decoupled.gap().len(), 3);
    for (g, (t, r)) in a.fused.gap().iter().zip(a.fused.test.iter().zip(&a.fused.train)) {
        assert_eq!(*g, t - r);
    }

    let mut buf = Vec::new();
    write_loss_curves(&mut buf, &a).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "epoch,train_fused,test_fused,train_decoupled,test_decoupled");
    assert_eq!(text.lines().count(), 4);
    let mut buf = Vec::new();
    write_kernels(&mut buf, &a).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * a.fused_kernel.len());

    let s = ComparisonSummary::from_results(&[a.clone(), b]);
    assert_eq!(s.median_min_test_fused, a.fused.min_test());
}
