use serde::{Deserialize, Serialize};

/// Counts of encrypted messages exchanged between workers and the platform.
///
/// Every worker uploads exactly one ciphertext per private sum, so uploads are
/// tracked as one shared counter; partial decryptions are tracked per worker.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageLog {
    enc_msgs_to_platform: u64,
    enc_msgs_by_platform: u64,
    uploads_per_worker: u64,
    partials_per_worker: Vec<u64>,
}

impl MessageLog {
    pub fn new(num_workers: usize) -> Self {
        Self { partials_per_worker: vec![0; num_workers], ..Self::default() }
    }

    pub fn num_workers(&self) -> usize {
        self.partials_per_worker.len()
    }

    /// One private sum in which every worker uploads one ciphertext.
    pub(crate) fn record_uploads(&mut self) {
        self.enc_msgs_to_platform += self.partials_per_worker.len() as u64;
        self.uploads_per_worker += 1;
    }

    /// Platform sends the aggregate to one decryptor, which answers with a
    /// partial decryption.
    pub(crate) fn record_decryption_round_trip(&mut self, worker: usize) {
        self.enc_msgs_by_platform += 1;
        self.enc_msgs_to_platform += 1;
        self.partials_per_worker[worker] += 1;
    }

    pub fn to_platform(&self) -> u64 {
        self.enc_msgs_to_platform
    }

    pub fn by_platform(&self) -> u64 {
        self.enc_msgs_by_platform
    }

    pub fn sent_by_worker(&self, worker: usize) -> u64 {
        self.uploads_per_worker + self.partials_per_worker[worker]
    }

    pub fn per_worker_average(&self) -> f64 {
        if self.partials_per_worker.is_empty() {
            return 0.0;
        }
        let total: u64 = (0..self.num_workers()).map(|w| self.sent_by_worker(w)).sum();
        total as f64 / self.num_workers() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_accumulate() {
        let mut log = MessageLog::new(3);
        log.record_uploads();
        log.record_decryption_round_trip(1);
        assert_eq!(log.to_platform(), 4);
        assert_eq!(log.by_platform(), 1);
        assert_eq!(log.sent_by_worker(0), 1);
        assert_eq!(log.sent_by_worker(1), 2);
        assert!((log.per_worker_average() - 4.0 / 3.0).abs() < 1e-12);
    }
}
