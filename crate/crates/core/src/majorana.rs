//! Hermitian Majorana monomials.
//!
//! A monomial over `2N` generators is indexed by a bit vector `b` and equals
//! `i^r(b) m_1^b_1 ... m_2N^b_2N` with `r(b) = 1` exactly when
//! `|b| mod 4` is 2 or 3. That choice makes every stored monomial Hermitian,
//! so the propagated expansion keeps real coefficients.
//!
//! Generators are indexed from 0 in the API and printed 1-based (`m{1,2}`).

use std::cmp::Ordering;
use std::fmt;

use crate::basis::{BasisElement, BasisKind};
use crate::error::{Error, Result};
use crate::phase::Phase;

const WORDS: usize = 4;

/// Largest supported generator count (128 fermionic modes).
pub const MAX_GENERATORS: usize = 64 * WORDS;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct MajoranaMonomial {
    n: u16,
    bits: [u64; WORDS],
}

/// `r(b)` for a monomial of the given length.
#[inline]
pub fn hermitian_phase_exponent(length: u32) -> u32 {
    ((length % 4) >= 2) as u32
}

impl MajoranaMonomial {
    pub fn identity(n_generators: usize) -> Result<Self> {
        if n_generators == 0 || n_generators % 2 != 0 || n_generators > MAX_GENERATORS {
            return Err(Error::InvalidSize {
                size: n_generators,
                reason: "generator count must be even and in 2..=256",
            });
        }
        Ok(Self {
            n: n_generators as u16,
            bits: [0; WORDS],
        })
    }

    /// Monomial containing the given 0-based generators.
    pub fn from_indices(n_generators: usize, indices: &[usize]) -> Result<Self> {
        let mut m = Self::identity(n_generators)?;
        for &p in indices {
            if p >= n_generators {
                return Err(Error::InvalidSize {
                    size: p,
                    reason: "generator index out of range",
                });
            }
            let (w, b) = (p / 64, p % 64);
            if (m.bits[w] >> b) & 1 == 1 {
                return Err(Error::Parse(format!("generator {} repeated", p + 1)));
            }
            m.bits[w] |= 1 << b;
        }
        Ok(m)
    }

    /// Single generator `m_p` (0-based).
    pub fn generator(n_generators: usize, p: usize) -> Result<Self> {
        Self::from_indices(n_generators, &[p])
    }

    pub fn n_generators(&self) -> usize {
        self.n as usize
    }

    pub fn n_modes(&self) -> usize {
        self.n as usize / 2
    }

    pub fn bits(&self) -> [u64; WORDS] {
        self.bits
    }

    pub fn contains(&self, p: usize) -> bool {
        p < self.n_generators() && (self.bits[p / 64] >> (p % 64)) & 1 == 1
    }

    /// 0-based generator indices in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.n_generators()).filter(|&p| self.contains(p)).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.bits == [0; WORDS]
    }

    pub fn length(&self) -> u32 {
        self.bits.iter().map(|w| w.count_ones()).sum()
    }

    pub fn phase_exponent(&self) -> u32 {
        hermitian_phase_exponent(self.length())
    }

    fn check_size(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::SizeMismatch {
                left: self.n as usize,
                right: other.n as usize,
            });
        }
        Ok(())
    }

    pub fn commutes(&self, other: &Self) -> Result<bool> {
        self.check_size(other)?;
        Ok(self.commutes_unchecked(other))
    }

    pub fn mul(&self, other: &Self) -> Result<(MajoranaMonomial, Phase)> {
        self.check_size(other)?;
        Ok(self.mul_unchecked(other))
    }

    #[inline]
    pub fn commutes_unchecked(&self, other: &Self) -> bool {
        let la = self.length();
        let lb = other.length();
        let overlap: u32 = (0..WORDS)
            .map(|w| (self.bits[w] & other.bits[w]).count_ones())
            .sum();
        (la * lb + overlap) % 2 == 0
    }

    #[inline]
    pub fn mul_unchecked(&self, other: &Self) -> (MajoranaMonomial, Phase) {
        // Reordering m^a m^b into increasing index order costs one sign per
        // pair (p in a, q in b) with p > q. The parity of that count is the
        // parity of |a ∩ {p : odd number of b-generators below p}|, which
        // is a prefix-xor scan over the words of b.
        let mut swaps = 0u32;
        let mut carry = 0u64;
        let mut out = *self;
        for w in 0..WORDS {
            let b = other.bits[w];
            let mut y = b;
            y ^= y << 1;
            y ^= y << 2;
            y ^= y << 4;
            y ^= y << 8;
            y ^= y << 16;
            y ^= y << 32;
            // Exclusive prefix parity, corrected by the parity of lower words.
            let below = (y ^ b) ^ carry;
            swaps += (self.bits[w] & below).count_ones();
            carry = if (y >> 63) & 1 == 1 { !carry } else { carry };
            out.bits[w] = self.bits[w] ^ b;
        }
        let ra = self.phase_exponent() as i32;
        let rb = other.phase_exponent() as i32;
        let rc = out.phase_exponent() as i32;
        let k = ra + rb - rc + 2 * (swaps as i32 & 1);
        (out, Phase::from_exponent(k))
    }

    /// Parses `m{1,2,5,6}` (1-based) or `I`.
    pub fn parse(n_generators: usize, text: &str) -> Result<Self> {
        let t = text.trim();
        if t == "I" || t == "m{}" {
            return Self::identity(n_generators);
        }
        let inner = t
            .strip_prefix("m{")
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| Error::Parse(format!("expected m{{...}}, got {t:?}")))?;
        let mut idx = Vec::new();
        for part in inner.split(',') {
            let k: usize = part
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad generator index {part:?}")))?;
            if k == 0 {
                return Err(Error::Parse("generator indices are 1-based".into()));
            }
            idx.push(k - 1);
        }
        Self::from_indices(n_generators, &idx)
    }
}

impl Ord for MajoranaMonomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then_with(|| self.bits.iter().rev().cmp(other.bits.iter().rev()))
    }
}

impl PartialOrd for MajoranaMonomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MajoranaMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return f.write_str("I");
        }
        let idx: Vec<String> = self.indices().iter().map(|p| (p + 1).to_string()).collect();
        write!(f, "m{{{}}}", idx.join(","))
    }
}

impl fmt::Debug for MajoranaMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MajoranaMonomial({}/{})", self, self.n)
    }
}

impl BasisElement for MajoranaMonomial {
    const KIND: BasisKind = BasisKind::Majorana;

    fn identity(size: usize) -> Self {
        MajoranaMonomial::identity(size).expect("valid generator count")
    }

    fn size(&self) -> usize {
        self.n_generators()
    }

    fn is_identity(&self) -> bool {
        MajoranaMonomial::is_identity(self)
    }

    fn weight(&self) -> u32 {
        self.length()
    }

    fn commutes_with(&self, other: &Self) -> bool {
        self.commutes_unchecked(other)
    }

    fn product(&self, other: &Self) -> (Self, Phase) {
        self.mul_unchecked(other)
    }

    fn parse_sized(size: usize, text: &str) -> Result<Self> {
        MajoranaMonomial::parse(size, text)
    }

    fn packed_bits(&self) -> [u64; 4] {
        self.bits
    }

    fn from_packed_bits(size: usize, bits: [u64; 4]) -> Self {
        MajoranaMonomial {
            n: size as u16,
            bits,
        }
    }
}
