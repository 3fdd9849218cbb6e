//! Distributed private sums and the private median (PrivMed).
//!
//! A private sum runs in three phases: every worker encrypts its bit plus a
//! noise share and uploads it; the platform folds the ciphertexts with
//! homomorphic addition; `T` decryptors partially decrypt the aggregate and
//! the platform recombines. A perturbed histogram is `l` such sums run side by
//! side, and the median is read off the histogram assuming uniform mass inside
//! each bin.
//!
//! The cryptographic path is abstracted behind [`SumBackend`] so that quality
//! experiments can swap in [`PlaintextBackend`], which produces the same noise
//! distribution and the same message accounting without any encryption.

mod log;
mod median;

pub use log::MessageLog;
pub use median::{estimate_median, PerturbedHistogram};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::crypto::{Ciphertext, CryptoError, KeyMaterial};
use crate::noise::{aggregate_noise, noise_share, NoiseError, NoiseParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("invalid protocol input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// One worker's contribution to a histogram query: a `1` in `bin`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinAssignment {
    pub worker_index: usize,
    pub bin_index: usize,
}

/// Executes perturbed histogram queries over the whole worker population.
pub trait SumBackend: Sync {
    /// Runs `bins` parallel private sums. Each listed worker contributes `1`
    /// to its bin; every other worker contributes `0` to all bins. All
    /// `params.num_workers()` workers add a fresh noise share to every bin.
    fn histogram(
        &self,
        members: &[BinAssignment],
        bins: usize,
        params: &NoiseParams,
        decryptors: &[usize],
        log: &mut MessageLog,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<i64>>;

    /// Number of partial decryptions needed per sum.
    fn threshold(&self) -> usize;

    /// Key-share index held by `worker`, used to keep decryptors distinct.
    fn share_of(&self, worker: usize) -> u32;

    /// `false` only for oracle backends that return exact counts.
    fn adds_noise(&self) -> bool {
        true
    }
}

fn check_inputs(members: &[BinAssignment], bins: usize, params: &NoiseParams, decryptors: &[usize], t: usize) -> Result<()> {
    if bins == 0 {
        return Err(ProtocolError::InvalidInput("histogram needs at least one bin".into()));
    }
    if decryptors.len() < t {
        return Err(ProtocolError::Crypto(CryptoError::InsufficientShares { needed: t, got: decryptors.len() }));
    }
    if t <= params.collusion_tau() {
        return Err(ProtocolError::InvalidInput(format!(
            "threshold T = {t} must exceed tau = {}",
            params.collusion_tau()
        )));
    }
    let n = params.num_workers();
    if let Some(m) = members.iter().find(|m| m.worker_index >= n || m.bin_index >= bins) {
        return Err(ProtocolError::InvalidInput(format!("assignment {m:?} out of range")));
    }
    if let Some(d) = decryptors.iter().find(|&&d| d >= n) {
        return Err(ProtocolError::InvalidInput(format!("decryptor {d} is not a worker")));
    }
    Ok(())
}

/// Paillier-backed execution: every worker encrypts, the platform folds and
/// `T` workers partially decrypt.
pub struct EncryptedBackend<'k> {
    keys: &'k KeyMaterial,
}

impl<'k> EncryptedBackend<'k> {
    pub fn new(keys: &'k KeyMaterial) -> Self {
        Self { keys }
    }
}

impl SumBackend for EncryptedBackend<'_> {
    fn histogram(
        &self,
        members: &[BinAssignment],
        bins: usize,
        params: &NoiseParams,
        decryptors: &[usize],
        log: &mut MessageLog,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<i64>> {
        let t = self.threshold();
        check_inputs(members, bins, params, decryptors, t)?;
        let pk = &self.keys.public;
        let n = params.num_workers();

        let mut own_bin = vec![None; n];
        for m in members {
            own_bin[m.worker_index] = Some(m.bin_index);
        }

        // worker side: encrypt b_{i,j} + ν_{i,j} for every bin; platform folds
        let mut aggregates: Vec<Ciphertext> = vec![pk.zero_ciphertext(); bins];
        for bin in own_bin.iter() {
            for (j, agg) in aggregates.iter_mut().enumerate() {
                let bit = i64::from(*bin == Some(j));
                let c = pk.encrypt_signed(bit + noise_share(params, rng), rng);
                *agg = pk.add(agg, &c);
            }
        }

        let chosen = &decryptors[..t];
        let mut out = Vec::with_capacity(bins);
        for agg in &aggregates {
            log.record_uploads();
            let mut partials = Vec::with_capacity(t);
            for &w in chosen {
                let share = self
                    .keys
                    .share(self.share_of(w))
                    .ok_or(CryptoError::UnknownShare(self.share_of(w)))?;
                partials.push(pk.partial_decrypt(share, agg));
                log.record_decryption_round_trip(w);
            }
            let m = pk.combine(&partials)?;
            out.push(pk.to_signed(&m)?);
        }
        Ok(out)
    }

    fn threshold(&self) -> usize {
        self.keys.public.threshold()
    }

    fn share_of(&self, worker: usize) -> u32 {
        (worker % self.keys.shares.len()) as u32 + 1
    }
}

/// Plaintext stand-in for quality experiments.
///
/// Produces true bin counts plus the sum of `|P|` noise shares (drawn in one
/// step, see [`aggregate_noise`]), and logs exactly the messages the encrypted
/// protocol would send.
#[derive(Clone, Debug)]
pub struct PlaintextBackend {
    threshold: usize,
    noise: bool,
}

impl PlaintextBackend {
    pub fn new(threshold: usize) -> Self {
        Self { threshold, noise: true }
    }

    /// Exact counts; used to check estimators in isolation from noise.
    pub fn noiseless(threshold: usize) -> Self {
        Self { threshold, noise: false }
    }
}

impl SumBackend for PlaintextBackend {
    fn histogram(
        &self,
        members: &[BinAssignment],
        bins: usize,
        params: &NoiseParams,
        decryptors: &[usize],
        log: &mut MessageLog,
        rng: &mut dyn rand::RngCore,
    ) -> Result<Vec<i64>> {
        check_inputs(members, bins, params, decryptors, self.threshold)?;
        let mut counts = vec![0i64; bins];
        for m in members {
            counts[m.bin_index] += 1;
        }
        for c in counts.iter_mut() {
            if self.noise {
                *c += aggregate_noise(params, params.num_workers(), rng);
            }
            log.record_uploads();
            for &w in &decryptors[..self.threshold] {
                log.record_decryption_round_trip(w);
            }
        }
        Ok(counts)
    }

    fn threshold(&self) -> usize {
        self.threshold
    }

    fn share_of(&self, worker: usize) -> u32 {
        worker as u32 + 1
    }

    fn adds_noise(&self) -> bool {
        self.noise
    }
}

/// Picks the first `T` workers of a seeded shuffle whose key-shares are
/// pairwise distinct.
pub fn select_decryptors<B: SumBackend + ?Sized, R: Rng + ?Sized>(
    backend: &B,
    num_workers: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let t = backend.threshold();
    let mut order: Vec<usize> = (0..num_workers).collect();
    order.shuffle(rng);
    let mut seen = std::collections::HashSet::new();
    let chosen: Vec<usize> = order
        .into_iter()
        .filter(|&w| seen.insert(backend.share_of(w)))
        .take(t)
        .collect();
    if chosen.len() < t {
        return Err(ProtocolError::Crypto(CryptoError::InsufficientShares { needed: t, got: chosen.len() }));
    }
    Ok(chosen)
}

/// Private sum of one bit per worker (a one-bin histogram).
pub fn run_private_sum<B: SumBackend + ?Sized>(
    worker_bits: &[bool],
    params: &NoiseParams,
    backend: &B,
    decryptors: &[usize],
    log: &mut MessageLog,
    rng: &mut dyn rand::RngCore,
) -> Result<i64> {
    if worker_bits.len() != params.num_workers() {
        return Err(ProtocolError::InvalidInput(format!(
            "{} bits for {} workers",
            worker_bits.len(),
            params.num_workers()
        )));
    }
    let members: Vec<BinAssignment> = worker_bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(w, _)| BinAssignment { worker_index: w, bin_index: 0 })
        .collect();
    Ok(backend.histogram(&members, 1, params, decryptors, log, rng)?[0])
}

/// Bin of `value` among `bins` equal-width ranges over `[lo, hi)`, the last
/// range closed at `hi`.
pub fn bin_of(value: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let w = (hi - lo) / bins as f64;
    let k = ((value - lo) / w).floor();
    if k < 0.0 {
        0
    } else {
        (k as usize).min(bins - 1)
    }
}

/// PrivMed over a subset of workers: only `members` (worker index, local
/// value) place a `1` in a bin, but the whole population takes part.
#[allow(clippy::too_many_arguments)]
pub fn priv_med_members<B: SumBackend + ?Sized>(
    members: &[(usize, f64)],
    domain: (f64, f64),
    bins: usize,
    params: &NoiseParams,
    backend: &B,
    decryptors: &[usize],
    log: &mut MessageLog,
    rng: &mut dyn rand::RngCore,
) -> Result<(f64, PerturbedHistogram)> {
    let (lo, hi) = domain;
    if !(lo < hi) {
        return Err(ProtocolError::InvalidInput(format!("empty domain [{lo}, {hi})")));
    }
    if let Some((w, v)) = members.iter().find(|(_, v)| !(lo..=hi).contains(v)) {
        return Err(ProtocolError::InvalidInput(format!("worker {w} value {v} outside [{lo}, {hi}]")));
    }
    let assignments: Vec<BinAssignment> = members
        .iter()
        .map(|&(w, v)| BinAssignment { worker_index: w, bin_index: bin_of(v, lo, hi, bins) })
        .collect();
    let counts = backend.histogram(&assignments, bins, params, decryptors, log, rng)?;
    let hist = PerturbedHistogram::new(counts, domain, params.epsilon_portion());
    Ok((estimate_median(&hist), hist))
}

/// PrivMed where every worker holds a value in `domain`.
#[allow(clippy::too_many_arguments)]
pub fn run_priv_med<B: SumBackend + ?Sized>(
    worker_values: &[f64],
    domain: (f64, f64),
    bins: usize,
    params: &NoiseParams,
    backend: &B,
    decryptors: &[usize],
    log: &mut MessageLog,
    rng: &mut dyn rand::RngCore,
) -> Result<(f64, PerturbedHistogram)> {
    if worker_values.len() != params.num_workers() {
        return Err(ProtocolError::InvalidInput(format!(
            "{} values for {} workers",
            worker_values.len(),
            params.num_workers()
        )));
    }
    let members: Vec<(usize, f64)> = worker_values.iter().copied().enumerate().collect();
    priv_med_members(&members, domain, bins, params, backend, decryptors, log, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn material(workers: usize, t: usize, seed: u64) -> KeyMaterial {
        let (public, shares, _) = keygen(512, workers, t, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        KeyMaterial { public, shares }
    }

    #[test]
    fn encrypted_sum_without_noise_is_exact() {
        let keys = material(6, 2, 1);
        let backend = EncryptedBackend::new(&keys);
        let params = NoiseParams::new(100.0, 6, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let decryptors = select_decryptors(&backend, 6, &mut rng).unwrap();
        let mut log = MessageLog::new(6);
        let bits = [true, false, true, true, false, true];
        assert_eq!(run_private_sum(&bits, &params, &backend, &decryptors, &mut log, &mut rng).unwrap(), 4);
        assert_eq!(run_private_sum(&[false; 6], &params, &backend, &decryptors, &mut log, &mut rng).unwrap(), 0);
        // two sums of (|P| + T) messages each
        assert_eq!(log.to_platform(), 2 * 8);
        assert_eq!(log.by_platform(), 2 * 2);
    }

    #[test]
    fn encrypted_and_plaintext_agree_noiselessly() {
        let keys = material(5, 3, 3);
        let enc = EncryptedBackend::new(&keys);
        let plain = PlaintextBackend::noiseless(3);
        let params = NoiseParams::new(200.0, 5, 2).unwrap();
        let members = [
            BinAssignment { worker_index: 0, bin_index: 2 },
            BinAssignment { worker_index: 3, bin_index: 2 },
            BinAssignment { worker_index: 4, bin_index: 0 },
        ];
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let decryptors = select_decryptors(&enc, 5, &mut rng).unwrap();
        let (mut l1, mut l2) = (MessageLog::new(5), MessageLog::new(5));
        let a = enc.histogram(&members, 3, &params, &decryptors, &mut l1, &mut rng).unwrap();
        let b = plain.histogram(&members, 3, &params, &decryptors, &mut l2, &mut rng).unwrap();
        assert_eq!(a, vec![1, 0, 2]);
        assert_eq!(a, b);
        assert_eq!(l1, l2);
    }

    #[test]
    fn threshold_must_exceed_tau() {
        let plain = PlaintextBackend::new(1);
        let params = NoiseParams::new(1.0, 4, 1).unwrap();
        let mut log = MessageLog::new(4);
        let err = plain.histogram(&[], 1, &params, &[0], &mut log, &mut ChaCha20Rng::seed_from_u64(0));
        assert!(matches!(err, Err(ProtocolError::InvalidInput(_))));
    }

    #[test]
    fn too_few_decryptors() {
        let plain = PlaintextBackend::new(3);
        let params = NoiseParams::new(1.0, 4, 1).unwrap();
        let mut log = MessageLog::new(4);
        let err = plain.histogram(&[], 1, &params, &[0, 1], &mut log, &mut ChaCha20Rng::seed_from_u64(0));
        assert!(matches!(err, Err(ProtocolError::Crypto(CryptoError::InsufficientShares { .. }))));
    }

    #[test]
    fn decryptors_have_distinct_shares() {
        let keys = material(3, 3, 5);
        let backend = EncryptedBackend::new(&keys);
        // 9 workers share 3 key-shares round-robin
        let d = select_decryptors(&backend, 9, &mut ChaCha20Rng::seed_from_u64(6)).unwrap();
        let mut shares: Vec<u32> = d.iter().map(|&w| backend.share_of(w)).collect();
        shares.sort();
        assert_eq!(shares, vec![1, 2, 3]);
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin_of(0.0, 0.0, 1.0, 10), 0);
        assert_eq!(bin_of(0.1, 0.0, 1.0, 10), 1);
        assert_eq!(bin_of(0.99, 0.0, 1.0, 10), 9);
        assert_eq!(bin_of(1.0, 0.0, 1.0, 10), 9);
        assert_eq!(bin_of(0.25, 0.0, 1.0, 10), 2);
    }

    #[test]
    fn priv_med_all_at_quarter() {
        let backend = PlaintextBackend::new(2);
        let params = NoiseParams::new(100.0, 50, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let decryptors = select_decryptors(&backend, 50, &mut rng).unwrap();
        let mut log = MessageLog::new(50);
        let values = vec![0.25; 50];
        let (m, hist) = run_priv_med(&values, (0.0, 1.0), 10, &params, &backend, &decryptors, &mut log, &mut rng).unwrap();
        assert!((m - 0.25).abs() < 1e-12);
        assert_eq!(hist.bins()[2], 50);
    }

    #[test]
    fn priv_med_message_accounting() {
        let backend = PlaintextBackend::new(2);
        let params = NoiseParams::new(1.0, 4, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let decryptors = select_decryptors(&backend, 4, &mut rng).unwrap();
        let mut log = MessageLog::new(4);
        run_priv_med(&[0.1, 0.2, 0.3, 0.4], (0.0, 1.0), 10, &params, &backend, &decryptors, &mut log, &mut rng).unwrap();
        assert_eq!(log.to_platform(), (4 + 2) * 10);
        assert_eq!(log.by_platform(), 2 * 10);
    }

    #[test]
    fn priv_med_rejects_out_of_domain() {
        let backend = PlaintextBackend::new(2);
        let params = NoiseParams::new(1.0, 2, 1).unwrap();
        let mut log = MessageLog::new(2);
        let err = run_priv_med(&[0.5, 1.5], (0.0, 1.0), 4, &params, &backend, &[0, 1], &mut log, &mut ChaCha20Rng::seed_from_u64(0));
        assert!(matches!(err, Err(ProtocolError::InvalidInput(_))));
    }
}
