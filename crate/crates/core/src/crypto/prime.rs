//! Probable-prime generation for key material.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Miller-Rabin rounds; error probability below 2^-80 for random candidates.
const MR_ROUNDS: usize = 40;

/// Uniform integer with exactly `bits` random bits (top bit may be zero).
pub(crate) fn random_bits<R: RngCore + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    let bytes = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; bytes];
    rng.fill_bytes(&mut buf);
    let excess = (bytes as u64 * 8) - bits;
    if excess > 0 {
        buf[0] &= 0xffu8 >> excess;
    }
    BigUint::from_bytes_be(&buf)
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub(crate) fn random_below<R: RngCore + ?Sized>(rng: &mut R, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero(), "empty range");
    let bits = bound.bits();
    loop {
        let candidate = random_bits(rng, bits);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Random prime with exactly `bits` bits and its two top bits set, so that the
/// product of two such primes has exactly `2 * bits` bits.
pub(crate) fn random_prime<R: RngCore + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    assert!(bits >= 16, "prime too small");
    let top = BigUint::one() << (bits - 1);
    let second = BigUint::one() << (bits - 2);
    loop {
        let mut candidate = random_bits(rng, bits) | &top | &second | BigUint::one();
        // walk forward over odd numbers for a while before drawing afresh
        for _ in 0..512 {
            if candidate.bits() != bits {
                break;
            }
            if is_probable_prime(&candidate, rng) {
                return candidate;
            }
            candidate += 2u32;
        }
    }
}

pub(crate) fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    if n < &BigUint::from(2u32) {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    if n.is_even() {
        return false;
    }

    let one = BigUint::one();
    let n_minus_one = n - &one;
    let shift = n_minus_one.trailing_zeros().unwrap_or(0);
    let odd = &n_minus_one >> shift;
    let two = BigUint::from(2u32);
    let base_bound = n - 3u32;

    'witness: for _ in 0..MR_ROUNDS {
        let a = random_below(rng, &base_bound) + &two;
        let mut x = a.modpow(&odd, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..shift {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn small_numbers_classified() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let primes: Vec<u32> = (2..200)
            .filter(|n| (2..*n).take_while(|d| d * d <= *n).all(|d| n % d != 0))
            .collect();
        for n in 0u32..200 {
            let expect = primes.contains(&n);
            assert_eq!(is_probable_prime(&BigUint::from(n), &mut rng), expect, "n = {n}");
        }
    }

    #[test]
    fn carmichael_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for n in [561u32, 1105, 1729, 2465, 2821, 6601, 8911] {
            assert!(!is_probable_prime(&BigUint::from(n), &mut rng));
        }
    }

    #[test]
    fn generated_prime_has_requested_size() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let p = random_prime(&mut rng, 128);
        assert_eq!(p.bits(), 128);
        assert!(p.bit(126));
        // Fermat check with an independent base
        let two = BigUint::from(2u32);
        assert_eq!(two.modpow(&(&p - 1u32), &p), BigUint::one());
    }

    #[test]
    fn random_below_stays_in_range() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let bound = BigUint::from(1000u32);
        for _ in 0..1000 {
            assert!(random_below(&mut rng, &bound) < bound);
        }
    }
}
