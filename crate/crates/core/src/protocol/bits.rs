use bitvec::prelude::*;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};

/// Packed bit sequence used for data, key and ciphertext.
pub type BitString = BitVec<u32, Lsb0>;

/// `len` uniformly random bits.
pub fn random_bits<R: RngCore + ?Sized>(rng: &mut R, len: usize) -> BitString {
    let words: Vec<u32> = (0..len.div_ceil(32)).map(|_| rng.random()).collect();
    let mut v = BitString::from_vec(words);
    v.truncate(len);
    v
}

/// Parses a string of `0`/`1` characters.
pub fn parse_bits(s: &str) -> Result<BitString> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Parse(format!("invalid bit `{other}`"))),
        })
        .collect()
}

/// One-time pad: bitwise XOR of equal-length sequences.
pub fn otp(data: &BitSlice<u32, Lsb0>, key: &BitSlice<u32, Lsb0>) -> Result<BitString> {
    if data.len() != key.len() {
        return Err(Error::Argument(format!(
            "one-time pad needs equal lengths (data {}, key {})",
            data.len(),
            key.len()
        )));
    }
    let mut out = data.to_bitvec();
    out ^= key;
    Ok(out)
}

/// Key bits split into decoded (`available`) and not-yet-usable
/// (`pending`) material. Pending bits become available at the end of the
/// super-block in which they were generated.
#[derive(Debug, Clone, Default)]
pub struct KeyBuffer {
    pending: BitString,
    available: BitString,
    cursor: usize,
}

impl KeyBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn available(&self) -> usize {
        self.available.len() - self.cursor
    }

    pub fn deposit(&mut self, bits: &BitSlice<u32, Lsb0>) {
        self.pending.extend_from_bitslice(bits);
    }

    /// Removes the next `n` available bits, or `None` (and removes nothing)
    /// if fewer are available.
    pub fn take(&mut self, n: usize) -> Option<&BitSlice<u32, Lsb0>> {
        if n > self.available() {
            return None;
        }
        let start = self.cursor;
        self.cursor += n;
        Some(&self.available[start..start + n])
    }

    /// Super-block boundary: pending key material becomes usable.
    pub fn promote(&mut self) {
        let mut next = self.available[self.cursor..].to_bitvec();
        next.extend_from_bitslice(&self.pending);
        self.available = next;
        self.cursor = 0;
        self.pending.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngSeed;
    use proptest::prelude::*;

    fn b(s: &str) -> BitString {
        parse_bits(s).unwrap()
    }

    #[test]
    fn otp_examples() {
        assert_eq!(otp(&b("1010"), &b("0000")).unwrap(), b("1010"));
        assert_eq!(otp(&b("1010"), &b("1010")).unwrap(), b("0000"));
        assert_eq!(otp(&b("1100"), &b("1010")).unwrap(), b("0110"));
    }

    #[test]
    fn otp_length_mismatch() {
        assert!(otp(&b("101"), &b("10")).is_err());
        assert!(parse_bits("10x").is_err());
    }

    #[test]
    fn random_bits_have_the_requested_length() {
        let mut rng = RngSeed::new(1, 0).rng();
        for n in [0, 1, 63, 64, 65, 1000] {
            assert_eq!(random_bits(&mut rng, n).len(), n);
        }
        let many = random_bits(&mut rng, 100_000);
        let ones = many.count_ones() as f64;
        assert!((ones / 1e5 - 0.5).abs() < 4.0 * (0.25f64 / 1e5).sqrt());
    }

    #[test]
    fn key_buffer_lifecycle() {
        let mut rng = RngSeed::new(2, 0).rng();
        let mut kb = KeyBuffer::new();
        let k1 = random_bits(&mut rng, 100);
        kb.deposit(&k1);
        assert_eq!((kb.pending(), kb.available()), (100, 0));
        assert!(kb.take(1).is_none());
        kb.promote();
        assert_eq!((kb.pending(), kb.available()), (0, 100));
        assert_eq!(kb.take(30).unwrap(), &k1[..30]);
        let k2 = random_bits(&mut rng, 10);
        kb.deposit(&k2);
        assert!(kb.take(71).is_none());
        assert_eq!(kb.available(), 70);
        kb.promote();
        assert_eq!(kb.available(), 80);
        assert_eq!(kb.take(70).unwrap(), &k1[30..]);
        assert_eq!(kb.take(10).unwrap(), &k2[..]);
        assert_eq!(kb.available(), 0);
    }

    proptest! {
        #[test]
        fn otp_is_an_involution(seed in any::<u64>(), len in 0usize..600, skew in 0usize..64) {
            let mut rng = RngSeed::new(seed, 0).rng();
            let d = random_bits(&mut rng, len);
            // misaligned key slice, as taken from the buffer
            let k = random_bits(&mut rng, len + skew);
            let k = &k[skew..];
            let c = otp(&d, k).unwrap();
            prop_assert_eq!(otp(&c, k).unwrap(), d);
        }
    }
}
