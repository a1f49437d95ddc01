use prodtraffic::eval::{kl_real_generated, SyntheticSpec, COMPARISON_BINS, MIN_GENERATED};
use prodtraffic::generative::{fit_model, DataMode, ModelKind, TrainConfig};
use prodtraffic::ingest::split_dataset;
use prodtraffic::ProductionState::Running;
use prodtraffic::TrafficSample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mixture(n: usize) -> Vec<TrafficSample> {
    let spec = SyntheticSpec::factory_shaped();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| TrafficSample {
            interarrival_ms: spec.sample_interarrival(Running, &mut rng),
            size_bytes: 64,
            state: Running,
        })
        .collect()
}

// A down-weighted KL term keeps the latent code informative, so the VAE
// reproduces all three modes.
#[test]
fn small_kl_weight_recovers_mixture() {
    let split = split_dataset(&mixture(10_000), 0.7, 0).unwrap();
    let test: Vec<f64> = split.test.iter().map(|s| s.interarrival_ms).collect();
    let kl_at = |kl_weight: f64| {
        let cfg = TrainConfig {
            epochs: 100,
            kl_weight,
            ..TrainConfig::default()
        };
        let (m, h) = fit_model(ModelKind::Vae, DataMode::OneD, &split.train, Some(Running), &cfg).unwrap();
        assert!(h.all_finite());
        let g = m
            .sample_interarrivals(Some(Running), MIN_GENERATED, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        kl_real_generated(&test, &g, COMPARISON_BINS).unwrap()
    };
    let weighted = kl_at(0.01);
    assert!(weighted <= 0.5, "{weighted}");
    let unit = kl_at(1.0);
    assert!(unit > weighted, "{unit} vs {weighted}");
}
