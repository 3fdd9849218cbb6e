//! Additively homomorphic encryption with dealer-based threshold decryption.
//!
//! The scheme is Paillier with generator `g = n + 1`. The dealer splits a
//! decryption exponent `d` (with `d ≡ 0 mod λ` and `d ≡ 1 mod n`) using Shamir
//! sharing over `Z_{nλ}`. Each key-share holder raises a ciphertext to
//! `2Δ·s_i` where `Δ = n_K!`, and any `T` such partial decryptions recombine
//! with integer Lagrange coefficients scaled by `Δ`, so no inversion modulo the
//! secret group order is ever needed.
//!
//! Plaintexts live in `Z_n`. Signed values (noise shares are signed) are
//! encoded as residues and decoded back through [`PublicKey::to_signed`].

mod encoding;
mod prime;

pub use encoding::{read_ciphertexts, write_ciphertexts, KeyFileKind};

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::RngCore;
use thiserror::Error;

pub(crate) use prime::random_below;

/// Key sizes accepted by [`keygen`].
pub const SUPPORTED_KEY_BITS: [u64; 3] = [512, 1024, 2048];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("invalid key parameters: {0}")]
    InvalidParameters(String),
    #[error("insufficient decryption shares: need {needed} distinct, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("share index {0} is outside the key material")]
    UnknownShare(u32),
    #[error("plaintext does not fit the requested integer type")]
    PlaintextOverflow,
    #[error("malformed key or ciphertext encoding: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CryptoError>;

/// Public encryption key plus the constants needed to recombine partial
/// decryptions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    generator: BigUint,
    threshold: usize,
    n_shares: usize,
    /// `n_shares!`
    delta: BigUint,
    /// `(4Δ²)^-1 mod n`
    combine_inverse: BigUint,
}

impl PublicKey {
    pub(crate) fn from_parts(n: BigUint, threshold: usize, n_shares: usize) -> Result<Self> {
        if threshold == 0 || threshold > n_shares {
            return Err(CryptoError::InvalidParameters(format!(
                "threshold {threshold} with {n_shares} shares"
            )));
        }
        if n.bits() < 64 || n.is_even() {
            return Err(CryptoError::InvalidParameters("modulus too small or even".into()));
        }
        let delta = factorial(n_shares);
        let four_delta_sq = (&delta * &delta) << 2u32;
        let combine_inverse = (four_delta_sq % &n).modinv(&n).ok_or_else(|| {
            CryptoError::InvalidParameters("4Δ² is not invertible modulo n".into())
        })?;
        Ok(Self {
            n_squared: &n * &n,
            generator: &n + 1u32,
            n,
            threshold,
            n_shares,
            delta,
            combine_inverse,
        })
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn ciphertext_modulus(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn generator(&self) -> &BigUint {
        &self.generator
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn n_shares(&self) -> usize {
        self.n_shares
    }

    /// Bit length `b` such that every integer below `2^b` is a valid plaintext.
    pub fn plaintext_bits(&self) -> u64 {
        self.n.bits() - 1
    }

    /// Maps a signed integer into `Z_n` (negatives become `n - |v|`).
    pub fn encode_signed(&self, value: i64) -> BigUint {
        let magnitude = BigUint::from(value.unsigned_abs());
        if value < 0 {
            &self.n - (magnitude % &self.n)
        } else {
            magnitude % &self.n
        }
    }

    /// Inverse of [`encode_signed`](Self::encode_signed): residues above `n/2`
    /// decode as negative.
    pub fn to_signed_big(&self, plaintext: &BigUint) -> BigInt {
        let half = &self.n >> 1u32;
        if plaintext > &half {
            -BigInt::from_biguint(Sign::Plus, &self.n - plaintext)
        } else {
            BigInt::from_biguint(Sign::Plus, plaintext.clone())
        }
    }

    pub fn to_signed(&self, plaintext: &BigUint) -> Result<i64> {
        self.to_signed_big(plaintext).to_i64().ok_or(CryptoError::PlaintextOverflow)
    }

    /// Encrypts `m mod n` with fresh randomness from `rng`.
    pub fn encrypt<R: RngCore + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Ciphertext {
        let r = loop {
            let r = random_below(rng, &self.n);
            if !r.is_zero() {
                break r;
            }
        };
        // g^m = 1 + m·n (mod n²) for g = n + 1
        let gm = (BigUint::one() + (m % &self.n) * &self.n) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ciphertext((gm * rn) % &self.n_squared)
    }

    pub fn encrypt_signed<R: RngCore + ?Sized>(&self, value: i64, rng: &mut R) -> Ciphertext {
        self.encrypt(&self.encode_signed(value), rng)
    }

    /// Homomorphic addition.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        Ciphertext((&a.0 * &b.0) % &self.n_squared)
    }

    /// Homomorphic multiplication by a public non-negative scalar.
    pub fn scalar_mul(&self, c: &Ciphertext, k: &BigUint) -> Ciphertext {
        Ciphertext(c.0.modpow(k, &self.n_squared))
    }

    /// Encryption of zero with randomness 1; the neutral element of [`add`](Self::add).
    pub fn zero_ciphertext(&self) -> Ciphertext {
        Ciphertext(BigUint::one())
    }

    /// Partial decryption `c^(2Δ·s_i) mod n²` by one key-share.
    pub fn partial_decrypt(&self, share: &KeyShare, c: &Ciphertext) -> PartialDecryption {
        let exponent = (&self.delta * &share.value) << 1u32;
        PartialDecryption {
            share_index: share.index,
            value: c.0.modpow(&exponent, &self.n_squared),
        }
    }

    /// Recombines at least `threshold` partial decryptions of the same
    /// ciphertext into the plaintext in `Z_n`.
    ///
    /// Only the first `threshold` distinct share indices (in ascending order)
    /// are used, so the result is independent of any surplus partials.
    pub fn combine(&self, partials: &[PartialDecryption]) -> Result<BigUint> {
        let mut distinct: BTreeMap<u32, &BigUint> = BTreeMap::new();
        for p in partials {
            if p.share_index == 0 || p.share_index as usize > self.n_shares {
                return Err(CryptoError::UnknownShare(p.share_index));
            }
            distinct.entry(p.share_index).or_insert(&p.value);
        }
        if distinct.len() < self.threshold {
            return Err(CryptoError::InsufficientShares {
                needed: self.threshold,
                got: distinct.len(),
            });
        }
        let chosen: Vec<(u32, &BigUint)> = distinct.into_iter().take(self.threshold).collect();
        let indices: Vec<i64> = chosen.iter().map(|(i, _)| *i as i64).collect();

        let mut acc = BigUint::one();
        for (i, value) in &chosen {
            let mu = self.lagrange_at_zero(*i as i64, &indices);
            let exponent = mu.magnitude() << 1u32;
            let base = if mu.is_negative() {
                value.modinv(&self.n_squared).ok_or_else(|| {
                    CryptoError::Format("partial decryption not invertible".into())
                })?
            } else {
                (*value).clone()
            };
            acc = (acc * base.modpow(&exponent, &self.n_squared)) % &self.n_squared;
        }
        let l = l_function(&acc, &self.n);
        Ok((l * &self.combine_inverse) % &self.n)
    }

    /// `Δ · Π_{j≠i} j / (j − i)`, an exact integer.
    fn lagrange_at_zero(&self, i: i64, indices: &[i64]) -> BigInt {
        let mut num = BigInt::from_biguint(Sign::Plus, self.delta.clone());
        let mut den = BigInt::one();
        for &j in indices.iter().filter(|&&j| j != i) {
            num *= j;
            den *= j - i;
        }
        let (q, r) = num.div_rem(&den);
        debug_assert!(r.is_zero());
        q
    }
}

/// One dealer-issued share of the decryption exponent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyShare {
    index: u32,
    value: BigUint,
}

impl KeyShare {
    pub(crate) fn new(index: u32, value: BigUint) -> Self {
        Self { index, value }
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }
}

/// Full (non-threshold) Paillier private key.
///
/// For threshold key material it is only returned by [`keygen`] so tests can
/// cross-check recombination; PIR clients generate their own single-party
/// key and use it to decode responses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrivateKey {
    p: BigUint,
    q: BigUint,
    n: BigUint,
}

impl PrivateKey {
    pub(crate) fn from_primes(p: BigUint, q: BigUint) -> Self {
        let n = &p * &q;
        Self { p, q, n }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub(crate) fn primes(&self) -> (&BigUint, &BigUint) {
        (&self.p, &self.q)
    }

    /// CRT decryption.
    pub fn decrypt(&self, c: &Ciphertext) -> BigUint {
        let pp = &self.p * &self.p;
        let qq = &self.q * &self.q;
        let mp = crt_half(&c.0, &self.p, &pp, &self.n);
        let mq = crt_half(&c.0, &self.q, &qq, &self.n);
        // m = mq + q·((mp − mq)·q⁻¹ mod p)
        let q_inv = (&self.q % &self.p).modinv(&self.p).expect("p and q are distinct primes");
        let diff = (&mp + &self.p - (&mq % &self.p)) % &self.p;
        let h = (diff * q_inv) % &self.p;
        (mq + h * &self.q) % &self.n
    }
}

fn crt_half(c: &BigUint, p: &BigUint, pp: &BigUint, n: &BigUint) -> BigUint {
    let p_minus_one = p - 1u32;
    let lp = l_function(&c.modpow(&p_minus_one, pp), p);
    // h_p = L_p(g^(p−1) mod p²)^-1 mod p with g = n + 1
    let g = (n + 1u32) % pp;
    let hp = l_function(&g.modpow(&p_minus_one, pp), p)
        .modinv(p)
        .expect("L_p(g^(p-1)) is invertible for g = n + 1");
    (lp * hp) % p
}

fn l_function(u: &BigUint, n: &BigUint) -> BigUint {
    (u - 1u32) / n
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ciphertext(BigUint);

impl Ciphertext {
    pub fn from_value(value: BigUint) -> Self {
        Self(value)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialDecryption {
    pub share_index: u32,
    pub value: BigUint,
}

/// Everything the protocol participants hold: the public key and the
/// key-shares handed out by the dealer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMaterial {
    pub public: PublicKey,
    pub shares: Vec<KeyShare>,
}

impl KeyMaterial {
    pub fn share(&self, index: u32) -> Option<&KeyShare> {
        self.shares.iter().find(|s| s.index == index)
    }
}

/// Dealer key generation: a `security_bits`-bit modulus and `n_shares`
/// key-shares, any `threshold` of which decrypt.
pub fn keygen<R: RngCore + ?Sized>(
    security_bits: u64,
    n_shares: usize,
    threshold: usize,
    rng: &mut R,
) -> Result<(PublicKey, Vec<KeyShare>, PrivateKey)> {
    if !SUPPORTED_KEY_BITS.contains(&security_bits) {
        return Err(CryptoError::InvalidParameters(format!(
            "unsupported key size {security_bits}, expected one of {SUPPORTED_KEY_BITS:?}"
        )));
    }
    if threshold == 0 || threshold > n_shares {
        return Err(CryptoError::InvalidParameters(format!(
            "threshold {threshold} must be in 1..={n_shares}"
        )));
    }
    if u32::try_from(n_shares).is_err() {
        return Err(CryptoError::InvalidParameters("too many shares".into()));
    }

    let half = security_bits / 2;
    let (p, q) = loop {
        let p = prime::random_prime(rng, half);
        let q = prime::random_prime(rng, half);
        if p == q {
            continue;
        }
        let n = &p * &q;
        let phi = (&p - 1u32) * (&q - 1u32);
        if n.gcd(&phi).is_one() && (n.bits() == security_bits) {
            break (p, q);
        }
    };
    let n = &p * &q;
    let lambda = (&p - 1u32).lcm(&(&q - 1u32));

    // d ≡ 0 (mod λ), d ≡ 1 (mod n)
    let lambda_inv = (&lambda % &n).modinv(&n).expect("gcd(λ, n) = 1");
    let d = &lambda * lambda_inv;
    let share_modulus = &n * &lambda;

    let coefficients: Vec<BigUint> = (1..threshold).map(|_| random_below(rng, &share_modulus)).collect();
    let shares = (1..=n_shares as u32)
        .map(|i| {
            let x = BigUint::from(i);
            // Horner evaluation of d + a_1 x + … + a_{T−1} x^{T−1}
            let mut value = BigUint::zero();
            for a in coefficients.iter().rev() {
                value = (value * &x + a) % &share_modulus;
            }
            value = (value * &x + &d) % &share_modulus;
            KeyShare::new(i, value)
        })
        .collect();

    let public = PublicKey::from_parts(n, threshold, n_shares)?;
    Ok((public, shares, PrivateKey::from_primes(p, q)))
}

/// Single-party keypair (one share, threshold one), as a PIR client would use.
pub fn client_keygen<R: RngCore + ?Sized>(
    security_bits: u64,
    rng: &mut R,
) -> Result<(PublicKey, PrivateKey)> {
    let (pk, _, sk) = keygen(security_bits, 1, 1, rng)?;
    Ok((pk, sk))
}

fn factorial(n: usize) -> BigUint {
    (1..=n as u64).fold(BigUint::one(), |acc, k| acc * k)
}
