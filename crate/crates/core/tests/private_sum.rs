use pkd::noise::NoiseParams;
use pkd::protocol::{run_private_sum, select_decryptors, MessageLog, PlaintextBackend};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
fn noisy_sums_are_unbiased() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let backend = PlaintextBackend::new(2);
    let params = NoiseParams::new(0.5, 30, 1).unwrap();
    let bits: Vec<bool> = (0..30).map(|_| rng.random_bool(0.4)).collect();
    let truth = bits.iter().filter(|&&b| b).count() as f64;
    let decryptors = select_decryptors(&backend, 30, &mut rng).unwrap();
    let errors: Vec<f64> = (0..2000)
        .map(|_| {
            let mut log = MessageLog::new(30);
            run_private_sum(&bits, &params, &backend, &decryptors, &mut log, &mut rng).unwrap() as f64 - truth
        })
        .collect();
    let mean = pkd::stats::mean(&errors);
    let se = pkd::stats::std_dev(&errors) / (errors.len() as f64).sqrt();
    assert!(mean.abs() < 3.0 * se, "mean error {mean}, se {se}");
    // sample variance close to the closed form
    let var = pkd::stats::std_dev(&errors).powi(2);
    let want = params.total_noise_variance();
    assert!((var - want).abs() < 0.15 * want, "{var} vs {want}");
}

#[test]
fn each_sum_is_one_message_per_worker_and_decryptor() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let backend = PlaintextBackend::new(3);
    let params = NoiseParams::new(1.0, 10, 2).unwrap();
    let decryptors = select_decryptors(&backend, 10, &mut rng).unwrap();
    let mut log = MessageLog::new(10);
    run_private_sum(&[true; 10], &params, &backend, &decryptors, &mut log, &mut rng).unwrap();
    assert_eq!(log.to_platform(), 13);
    assert_eq!(log.by_platform(), 3);
}
