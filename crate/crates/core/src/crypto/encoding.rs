//! Key files and the ciphertext wire format.
//!
//! Key files are line-oriented text:
//!
//! ```text
//! PKD-KEY v1 <kind>
//! <field> = <value>
//! ...
//! ```
//!
//! Big integers are lowercase hex. Ciphertext sequences are binary: a
//! big-endian `u32` count followed by `u32`-length-prefixed big-endian
//! magnitudes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::Num;

use super::{Ciphertext, CryptoError, KeyShare, PrivateKey, PublicKey, Result};

const MAGIC: &str = "PKD-KEY";
const VERSION: &str = "v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyFileKind {
    Public,
    Share,
    Private,
}

impl KeyFileKind {
    fn tag(self) -> &'static str {
        match self {
            KeyFileKind::Public => "public",
            KeyFileKind::Share => "share",
            KeyFileKind::Private => "private",
        }
    }
}

fn header(kind: KeyFileKind) -> String {
    format!("{MAGIC} {VERSION} {}\n", kind.tag())
}

fn hex(v: &BigUint) -> String {
    v.to_str_radix(16)
}

fn parse(text: &str, expected: KeyFileKind) -> Result<BTreeMap<String, String>> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| CryptoError::Format("empty key file".into()))?;
    let parts: Vec<&str> = first.split_whitespace().collect();
    match parts.as_slice() {
        [MAGIC, VERSION, kind] if *kind == expected.tag() => {}
        [MAGIC, v, _] if *v != VERSION => {
            return Err(CryptoError::Format(format!("unsupported key file version {v}")))
        }
        _ => return Err(CryptoError::Format(format!("bad header {first:?}, expected {}", expected.tag()))),
    }
    let mut fields = BTreeMap::new();
    for line in lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CryptoError::Format(format!("expected `key = value`, got {line:?}")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(fields)
}

fn field<'a>(fields: &'a BTreeMap<String, String>, name: &str) -> Result<&'a str> {
    fields
        .get(name)
        .map(String::as_str)
        .ok_or_else(|| CryptoError::Format(format!("missing field `{name}`")))
}

fn big(fields: &BTreeMap<String, String>, name: &str) -> Result<BigUint> {
    BigUint::from_str_radix(field(fields, name)?, 16)
        .map_err(|e| CryptoError::Format(format!("field `{name}`: {e}")))
}

fn int<T: std::str::FromStr>(fields: &BTreeMap<String, String>, name: &str) -> Result<T> {
    field(fields, name)?
        .parse()
        .map_err(|_| CryptoError::Format(format!("field `{name}` is not an integer")))
}

impl PublicKey {
    pub fn to_text(&self) -> String {
        let mut s = header(KeyFileKind::Public);
        writeln!(s, "n = {}", hex(&self.n)).unwrap();
        writeln!(s, "generator = {}", hex(&self.generator)).unwrap();
        writeln!(s, "threshold = {}", self.threshold).unwrap();
        writeln!(s, "shares = {}", self.n_shares).unwrap();
        writeln!(s, "delta = {}", hex(&self.delta)).unwrap();
        writeln!(s, "combine_inverse = {}", hex(&self.combine_inverse)).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fields = parse(text, KeyFileKind::Public)?;
        let pk = PublicKey::from_parts(big(&fields, "n")?, int(&fields, "threshold")?, int(&fields, "shares")?)?;
        // derived values are redundant; reject files that disagree with them
        if big(&fields, "generator")? != pk.generator
            || big(&fields, "delta")? != pk.delta
            || big(&fields, "combine_inverse")? != pk.combine_inverse
        {
            return Err(CryptoError::Format("derived constants do not match modulus".into()));
        }
        Ok(pk)
    }
}

impl KeyShare {
    pub fn to_text(&self) -> String {
        let mut s = header(KeyFileKind::Share);
        writeln!(s, "index = {}", self.index).unwrap();
        writeln!(s, "value = {}", hex(&self.value)).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fields = parse(text, KeyFileKind::Share)?;
        let index: u32 = int(&fields, "index")?;
        if index == 0 {
            return Err(CryptoError::Format("share index must be positive".into()));
        }
        Ok(KeyShare::new(index, big(&fields, "value")?))
    }
}

impl PrivateKey {
    pub fn to_text(&self) -> String {
        let mut s = header(KeyFileKind::Private);
        let (p, q) = self.primes();
        writeln!(s, "p = {}", hex(p)).unwrap();
        writeln!(s, "q = {}", hex(q)).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fields = parse(text, KeyFileKind::Private)?;
        Ok(PrivateKey::from_primes(big(&fields, "p")?, big(&fields, "q")?))
    }
}

/// Serializes ciphertexts as a length-prefixed binary sequence.
pub fn write_ciphertexts(cts: &[Ciphertext]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(cts.len() as u32).to_be_bytes());
    for c in cts {
        let bytes = c.value().to_bytes_be();
        out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn read_ciphertexts(mut bytes: &[u8]) -> Result<Vec<Ciphertext>> {
    fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
        if bytes.len() < n {
            return Err(CryptoError::Format("truncated ciphertext sequence".into()));
        }
        let (head, tail) = bytes.split_at(n);
        *bytes = tail;
        Ok(head)
    }
    let count = u32::from_be_bytes(take(&mut bytes, 4)?.try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = u32::from_be_bytes(take(&mut bytes, 4)?.try_into().unwrap()) as usize;
        out.push(Ciphertext::from_value(BigUint::from_bytes_be(take(&mut bytes, len)?)));
    }
    if !bytes.is_empty() {
        return Err(CryptoError::Format("trailing bytes after ciphertext sequence".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::keygen;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn key_files_reload_identically() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let (pk, shares, sk) = keygen(512, 3, 2, &mut rng).unwrap();
        assert_eq!(PublicKey::from_text(&pk.to_text()).unwrap(), pk);
        for s in &shares {
            assert_eq!(KeyShare::from_text(&s.to_text()).unwrap(), *s);
        }
        assert_eq!(PrivateKey::from_text(&sk.to_text()).unwrap(), sk);
    }

    #[test]
    fn wrong_kind_or_version_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let (pk, shares, _) = keygen(512, 2, 2, &mut rng).unwrap();
        assert!(KeyShare::from_text(&pk.to_text()).is_err());
        assert!(PublicKey::from_text(&shares[0].to_text()).is_err());
        let v2 = pk.to_text().replacen("v1", "v2", 1);
        assert!(matches!(PublicKey::from_text(&v2), Err(CryptoError::Format(m)) if m.contains("version")));
    }

    #[test]
    fn ciphertext_wire_roundtrip() {
        let cts = vec![
            Ciphertext::from_value(BigUint::from(0u32)),
            Ciphertext::from_value(BigUint::from(u64::MAX) << 300u32),
        ];
        let bytes = write_ciphertexts(&cts);
        assert_eq!(read_ciphertexts(&bytes).unwrap(), cts);
        assert!(read_ciphertexts(&bytes[..bytes.len() - 1]).is_err());
    }
}
