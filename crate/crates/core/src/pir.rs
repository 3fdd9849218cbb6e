//! Computational private information retrieval over an additively
//! homomorphic cryptosystem.
//!
//! The library is a matrix of `y`-bit integers, one row per item. A query is
//! an encrypted selection vector; the server answers with one ciphertext per
//! column, `r_j = ∏_i c_i^{L[i][j]}`, which decrypts to row `index`.

use std::time::Instant;

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{read_ciphertexts, write_ciphertexts, Ciphertext, CryptoError, PrivateKey, PublicKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PirError {
    #[error("the library needs at least one item")]
    EmptyLibrary,
    #[error("chunk width {chunk_bits} with {items} items can overflow a {plaintext_bits}-bit plaintext")]
    ChunkTooWide { chunk_bits: u64, items: usize, plaintext_bits: u64 },
    #[error("index {index} out of range for {n} items")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("decrypted chunk {0} exceeds the chunk width")]
    Decode(usize),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

pub type Result<T> = std::result::Result<T, PirError>;

fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

/// Widest chunk that cannot overflow: `plaintext_bits − ⌈log₂ n⌉ − 1`.
pub fn default_chunk_bits(pk: &PublicKey, n_items: usize) -> u64 {
    pk.plaintext_bits() - ceil_log2(n_items) - 1
}

/// Server-side library, immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct PirLibrary {
    items: Vec<Vec<u8>>,
    item_len: usize,
    chunk_bits: u64,
    matrix: Vec<Vec<BigUint>>,
}

/// What a client must know to query the library and decode answers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryManifest {
    pub items: usize,
    pub item_len_bytes: usize,
    pub chunk_bits: u64,
    pub chunks_per_item: usize,
}

/// Zero-pads every bucket to the longest one and cuts it into big-endian
/// `chunk_bits`-bit integers (the last chunk is zero-filled on the right).
pub fn build_library(buckets: &[Vec<u8>], chunk_bits: u64, plaintext_bits: u64) -> Result<PirLibrary> {
    if buckets.is_empty() {
        return Err(PirError::EmptyLibrary);
    }
    if chunk_bits == 0 || chunk_bits + ceil_log2(buckets.len()) >= plaintext_bits {
        return Err(PirError::ChunkTooWide { chunk_bits, items: buckets.len(), plaintext_bits });
    }
    let item_len = buckets.iter().map(Vec::len).max().unwrap_or(0);
    let items: Vec<Vec<u8>> = buckets
        .iter()
        .map(|b| {
            let mut item = b.clone();
            item.resize(item_len, 0);
            item
        })
        .collect();
    let matrix = items.iter().map(|item| chunk(item, chunk_bits)).collect();
    Ok(PirLibrary { items, item_len, chunk_bits, matrix })
}

/// Big-endian split of `bytes` into `y`-bit integers.
pub fn chunk(bytes: &[u8], y: u64) -> Vec<BigUint> {
    let total = bytes.len() as u64 * 8;
    let n_chunks = total.div_ceil(y);
    let out_bytes = y.div_ceil(8) as usize;
    let lead = out_bytes as u64 * 8 - y;
    (0..n_chunks)
        .map(|j| {
            let mut buf = vec![0u8; out_bytes];
            for k in 0..y {
                let src = j * y + k;
                if src >= total {
                    break;
                }
                if bytes[(src / 8) as usize] >> (7 - src % 8) & 1 == 1 {
                    let dst = lead + k;
                    buf[(dst / 8) as usize] |= 1 << (7 - dst % 8);
                }
            }
            BigUint::from_bytes_be(&buf)
        })
        .collect()
}

/// Inverse of [`chunk`], truncated to `len` bytes.
pub fn dechunk(chunks: &[BigUint], y: u64, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    let total = len as u64 * 8;
    let width = y.div_ceil(8) as usize;
    let lead = width as u64 * 8 - y;
    for (j, c) in chunks.iter().enumerate() {
        let raw = c.to_bytes_be();
        let mut buf = vec![0u8; width.saturating_sub(raw.len())];
        buf.extend_from_slice(&raw[raw.len().saturating_sub(width)..]);
        for k in 0..y {
            let dst = j as u64 * y + k;
            if dst >= total {
                break;
            }
            let src = lead + k;
            if buf[(src / 8) as usize] >> (7 - src % 8) & 1 == 1 {
                out[(dst / 8) as usize] |= 1 << (7 - dst % 8);
            }
        }
    }
    out
}

impl PirLibrary {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_len(&self) -> usize {
        self.item_len
    }

    pub fn chunk_bits(&self) -> u64 {
        self.chunk_bits
    }

    pub fn chunks_per_item(&self) -> usize {
        self.matrix.first().map_or(0, Vec::len)
    }

    pub fn item(&self, index: usize) -> &[u8] {
        &self.items[index]
    }

    pub fn matrix(&self) -> &[Vec<BigUint>] {
        &self.matrix
    }

    /// Total padded size in bytes.
    pub fn size_bytes(&self) -> usize {
        self.items.len() * self.item_len
    }

    pub fn manifest(&self) -> LibraryManifest {
        LibraryManifest {
            items: self.len(),
            item_len_bytes: self.item_len,
            chunk_bits: self.chunk_bits,
            chunks_per_item: self.chunks_per_item(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PirQuery {
    pub ciphertexts: Vec<Ciphertext>,
    pub client_pk: PublicKey,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PirResponse {
    pub ciphertexts: Vec<Ciphertext>,
}

impl PirQuery {
    pub fn to_wire(&self) -> Vec<u8> {
        write_ciphertexts(&self.ciphertexts)
    }

    pub fn from_wire(bytes: &[u8], client_pk: PublicKey) -> Result<Self> {
        Ok(Self { ciphertexts: read_ciphertexts(bytes)?, client_pk })
    }
}

impl PirResponse {
    pub fn to_wire(&self) -> Vec<u8> {
        write_ciphertexts(&self.ciphertexts)
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self> {
        Ok(Self { ciphertexts: read_ciphertexts(bytes)? })
    }
}

/// Encrypted selection vector `e_index` of length `n`.
pub fn make_query<R: RngCore + ?Sized>(client_pk: &PublicKey, index: usize, n: usize, rng: &mut R) -> Result<PirQuery> {
    if index >= n {
        return Err(PirError::IndexOutOfRange { index, n });
    }
    let zero = BigUint::ZERO;
    let one = BigUint::from(1u32);
    let ciphertexts = (0..n).map(|i| client_pk.encrypt(if i == index { &one } else { &zero }, rng)).collect();
    Ok(PirQuery { ciphertexts, client_pk: client_pk.clone() })
}

fn check_dims(query: &PirQuery, lib: &PirLibrary) -> Result<()> {
    if query.ciphertexts.len() != lib.len() {
        return Err(PirError::DimensionMismatch { expected: lib.len(), got: query.ciphertexts.len() });
    }
    if lib.chunk_bits + ceil_log2(lib.len()) >= query.client_pk.plaintext_bits() {
        return Err(PirError::ChunkTooWide {
            chunk_bits: lib.chunk_bits,
            items: lib.len(),
            plaintext_bits: query.client_pk.plaintext_bits(),
        });
    }
    Ok(())
}

fn answer_column(query: &PirQuery, lib: &PirLibrary, j: usize) -> Ciphertext {
    let pk = &query.client_pk;
    query
        .ciphertexts
        .iter()
        .zip(&lib.matrix)
        .fold(pk.zero_ciphertext(), |acc, (c, row)| pk.add(&acc, &pk.scalar_mul(c, &row[j])))
}

/// Homomorphic dot product of the query with every library column; columns
/// are answered in parallel.
pub fn answer(query: &PirQuery, lib: &PirLibrary) -> Result<PirResponse> {
    check_dims(query, lib)?;
    let ciphertexts = (0..lib.chunks_per_item()).into_par_iter().map(|j| answer_column(query, lib, j)).collect();
    Ok(PirResponse { ciphertexts })
}

/// Single-threaded [`answer`], for timing.
pub fn answer_sequential(query: &PirQuery, lib: &PirLibrary) -> Result<PirResponse> {
    check_dims(query, lib)?;
    let ciphertexts = (0..lib.chunks_per_item()).map(|j| answer_column(query, lib, j)).collect();
    Ok(PirResponse { ciphertexts })
}

/// Decrypts every response chunk and reassembles the item.
pub fn decode(client_key: &PrivateKey, response: &PirResponse, chunk_bits: u64, item_len_bytes: usize) -> Result<Vec<u8>> {
    let expected = (item_len_bytes as u64 * 8).div_ceil(chunk_bits) as usize;
    if response.ciphertexts.len() != expected {
        return Err(PirError::DimensionMismatch { expected, got: response.ciphertexts.len() });
    }
    let chunks = response
        .ciphertexts
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let m = client_key.decrypt(c);
            if m.bits() > chunk_bits {
                Err(PirError::Decode(j))
            } else {
                Ok(m)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(dechunk(&chunks, chunk_bits, item_len_bytes))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub library_bytes: usize,
    pub items: usize,
    pub seconds: f64,
}

/// Fastest sequential answer time over `trials` random queries, for
/// libraries of `num_items` random items totalling each of `library_sizes`
/// bytes. Interference from other load only adds time, so the minimum is
/// the least noisy estimate. After one untimed pass, each round visits the
/// sizes in a fresh random order so that slow drifts in machine load spread
/// over all sizes instead of biasing one.
pub fn bench_answer<R: Rng + ?Sized>(
    client_pk: &PublicKey,
    library_sizes: &[usize],
    num_items: usize,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<BenchPoint>> {
    if num_items == 0 {
        return Err(PirError::EmptyLibrary);
    }
    let y = default_chunk_bits(client_pk, num_items);
    let libs = library_sizes
        .iter()
        .map(|&size| {
            let item_len = (size / num_items).max(1);
            let buckets: Vec<Vec<u8>> = (0..num_items)
                .map(|_| {
                    let mut b = vec![0u8; item_len];
                    rng.fill_bytes(&mut b);
                    b
                })
                .collect();
            build_library(&buckets, y, client_pk.plaintext_bits())
        })
        .collect::<Result<Vec<_>>>()?;
    let warmup = make_query(client_pk, 0, num_items, rng)?;
    for lib in &libs {
        answer_sequential(&warmup, lib)?;
    }
    let mut times = vec![f64::INFINITY; libs.len()];
    let mut order: Vec<usize> = (0..libs.len()).collect();
    for _ in 0..trials.max(1) {
        order.shuffle(rng);
        for &i in &order {
            let query = make_query(client_pk, rng.random_range(0..num_items), num_items, rng)?;
            let start = Instant::now();
            answer_sequential(&query, &libs[i])?;
            times[i] = times[i].min(start.elapsed().as_secs_f64());
        }
    }
    Ok(libs
        .iter()
        .zip(times)
        .map(|(lib, seconds)| BenchPoint { library_bytes: lib.size_bytes(), items: num_items, seconds })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::client_keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn padding_to_longest() {
        let lib = build_library(&[vec![1; 3], vec![2; 7], vec![3; 7]], 64, 511).unwrap();
        assert_eq!(lib.item_len(), 7);
        assert_eq!(lib.item(0), &[1, 1, 1, 0, 0, 0, 0]);
        assert!(matches!(build_library(&[], 64, 511), Err(PirError::EmptyLibrary)));
    }

    #[test]
    fn big_endian_chunks() {
        let chunks = chunk(&[0x01, 0x02, 0x03, 0x04], 16);
        assert_eq!(chunks, vec![BigUint::from(0x0102u32), BigUint::from(0x0304u32)]);
        // 12-bit chunks of 0xABCDEF → 0xABC, 0xDEF
        assert_eq!(chunk(&[0xAB, 0xCD, 0xEF], 12), vec![BigUint::from(0xABCu32), BigUint::from(0xDEFu32)]);
        // trailing partial chunk is left-aligned: 0xFF with y = 5 → 11111, 111(00)
        assert_eq!(chunk(&[0xFF], 5), vec![BigUint::from(31u32), BigUint::from(28u32)]);
    }

    #[test]
    fn chunk_width_bound() {
        assert!(build_library(&vec![vec![0]; 4], 509, 511).is_err());
        assert!(build_library(&vec![vec![0]; 4], 508, 511).is_ok());
    }

    #[test]
    fn retrieval_of_every_index() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (pk, sk) = client_keygen(512, &mut rng).unwrap();
        let items: Vec<Vec<u8>> = (0..4)
            .map(|_| {
                let mut b = vec![0u8; 64];
                rng.fill_bytes(&mut b);
                b
            })
            .collect();
        let lib = build_library(&items, default_chunk_bits(&pk, 4), pk.plaintext_bits()).unwrap();
        for (i, item) in items.iter().enumerate() {
            let q = make_query(&pk, i, 4, &mut rng).unwrap();
            let r = answer(&q, &lib).unwrap();
            assert_eq!(&decode(&sk, &r, lib.chunk_bits(), 64).unwrap(), item);
        }
    }

    #[test]
    fn query_is_selection_vector() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (pk, sk) = client_keygen(512, &mut rng).unwrap();
        let q = make_query(&pk, 2, 5, &mut rng).unwrap();
        let bits: Vec<BigUint> = q.ciphertexts.iter().map(|c| sk.decrypt(c)).collect();
        let expect: Vec<BigUint> = (0..5).map(|i| BigUint::from((i == 2) as u32)).collect();
        assert_eq!(bits, expect);
        assert!(matches!(make_query(&pk, 5, 5, &mut rng), Err(PirError::IndexOutOfRange { .. })));
    }

    proptest::proptest! {
        #[test]
        fn chunk_roundtrip(bytes in proptest::collection::vec(proptest::num::u8::ANY, 0..200), y in 1u64..300) {
            let c = chunk(&bytes, y);
            proptest::prop_assert!(c.iter().all(|v| v.bits() <= y));
            proptest::prop_assert_eq!(dechunk(&c, y, bytes.len()), bytes);
        }
    }
}
