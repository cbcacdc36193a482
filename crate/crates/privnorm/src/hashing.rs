//! k-wise independent polynomial hashing over a Mersenne prime, plus the
//! nested universe subsampler that defines the substreams S_0 ⊇ S_1 ⊇ ... ⊇ S_s.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// 2^61 - 1. Larger than any supported universe size.
pub const MERSENNE_P: u64 = (1u64 << 61) - 1;

/// Reduce a u128 modulo 2^61 - 1.
#[inline]
fn mod_mersenne(x: u128) -> u64 {
    let mut r = ((x & (MERSENNE_P as u128)) + (x >> 61)) as u128;
    r = (r & (MERSENNE_P as u128)) + (r >> 61);
    let mut r = r as u64;
    while r >= MERSENNE_P {
        r -= MERSENNE_P;
    }
    r
}

/// A degree-k polynomial hash: k-wise independent over the random choice of
/// coefficients in [0, p).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KWiseHash {
    /// Independence degree (number of coefficients), at least 2.
    pub degree: usize,
    /// Prime modulus; must exceed the universe size.
    pub modulus: u64,
    /// Coefficients a_0 .. a_{k-1}, each in [0, modulus).
    pub coeffs: Vec<u64>,
    /// Output range: values are mapped into [0, range).
    pub range: u64,
}

impl KWiseHash {
    /// Draw a fresh degree-k hash into [0, range) from a seeded RNG stream.
    pub fn new(degree: usize, range: u64, seed: u64) -> Self {
        assert!(degree >= 2, "degree must be >= 2");
        assert!(range >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..degree).map(|_| rng.gen_range(0..MERSENNE_P)).collect();
        KWiseHash { degree, modulus: MERSENNE_P, coeffs, range }
    }

    /// Build from explicit coefficients (tests use small moduli).
    pub fn from_coeffs(coeffs: Vec<u64>, modulus: u64, range: u64) -> Self {
        assert!(coeffs.len() >= 2);
        assert!(coeffs.iter().all(|&c| c < modulus));
        KWiseHash { degree: coeffs.len(), modulus, coeffs, range }
    }

    /// Evaluate the polynomial at x; deterministic given the coefficients.
    pub fn eval(&self, x: u64) -> u64 {
        let val = if self.modulus == MERSENNE_P {
            let x = if x >= MERSENNE_P { x - MERSENNE_P } else { x };
            let mut acc: u64 = 0;
            for &c in self.coeffs.iter().rev() {
                acc = mod_mersenne(acc as u128 * x as u128 + c as u128);
            }
            acc
        } else {
            let x = x % self.modulus;
            let mut acc: u128 = 0;
            for &c in self.coeffs.iter().rev() {
                acc = (acc * x as u128 + c as u128) % self.modulus as u128;
            }
            acc as u64
        };
        val % self.range
    }

    pub fn write_to(&self, out: &mut impl std::io::Write) -> Result<()> {
        out.write_all(&(self.degree as u32).to_le_bytes())?;
        out.write_all(&self.modulus.to_le_bytes())?;
        out.write_all(&self.range.to_le_bytes())?;
        for &c in &self.coeffs {
            out.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(inp: &mut impl std::io::Read) -> Result<Self> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        inp.read_exact(&mut b4)?;
        let degree = u32::from_le_bytes(b4) as usize;
        inp.read_exact(&mut b8)?;
        let modulus = u64::from_le_bytes(b8);
        inp.read_exact(&mut b8)?;
        let range = u64::from_le_bytes(b8);
        if !(2..=1024).contains(&degree) || modulus < 2 || range < 1 {
            return Err(Error::Parse("corrupt hash header".into()));
        }
        let mut coeffs = Vec::with_capacity(degree);
        for _ in 0..degree {
            inp.read_exact(&mut b8)?;
            let c = u64::from_le_bytes(b8);
            if c >= modulus {
                return Err(Error::Parse("corrupt hash coefficient".into()));
            }
            coeffs.push(c);
        }
        Ok(KWiseHash { degree, modulus, coeffs, range })
    }

    /// Evaluate as a sign in {-1, +1}.
    pub fn eval_sign(&self, x: u64) -> i64 {
        debug_assert_eq!(self.range, 2);
        if self.eval(x) == 0 {
            1
        } else {
            -1
        }
    }
}

/// Range used by the subsampler hash; membership at level j inspects the j
/// lowest-order bits, so this bounds the deepest usable level.
const SUBSAMPLE_BITS: u32 = 30;

/// Nested universe subsampler: item x belongs to substream S_j iff the j
/// lowest-order bits of its hash value are all zero, so Pr[x in S_j] = 2^-j
/// and membership is nested across j.
#[derive(Debug, Clone)]
pub struct Subsampler {
    hash: KWiseHash,
    /// Deepest subsampling level.
    pub s: u32,
}

impl Subsampler {
    pub fn new(degree: usize, s: u32, seed: u64) -> Self {
        assert!(s <= SUBSAMPLE_BITS);
        Subsampler { hash: KWiseHash::new(degree.max(2), 1u64 << SUBSAMPLE_BITS, seed), s }
    }

    /// Deepest level j <= s such that x is a member of S_j. Every item is a
    /// member of S_0.
    pub fn max_level(&self, x: u64) -> u32 {
        let v = self.hash.eval(x);
        let tz = if v == 0 { SUBSAMPLE_BITS } else { v.trailing_zeros() };
        tz.min(self.s)
    }

    /// Membership of x in substream S_j.
    pub fn member(&self, j: u32, x: u64) -> Result<bool> {
        if j > self.s {
            return Err(Error::InvalidParameter(format!(
                "subsample level {j} exceeds maximum {}",
                self.s
            )));
        }
        Ok(j <= self.max_level(x))
    }
}
