//! Bit-packed Pauli strings.
//!
//! Site `j` is encoded by the bit pair `(x_j, z_j)`: `(0,0) = I`, `(1,0) = X`,
//! `(1,1) = Y`, `(0,1) = Z`. Both bit vectors live in two machine words, so
//! products, commutation checks and weights are a handful of word operations.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::basis::{BasisElement, BasisKind};
use crate::error::{Error, Result};
use crate::phase::Phase;

const WORDS: usize = 2;

/// Largest supported qubit count.
pub const MAX_QUBITS: usize = 64 * WORDS;

/// Single-qubit Pauli operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// An n-qubit Pauli string without phase.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: u16,
    x: [u64; WORDS],
    z: [u64; WORDS],
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::InvalidSize {
                size: n_qubits,
                reason: "qubit count must be in 1..=128",
            });
        }
        Ok(Self {
            n: n_qubits as u16,
            x: [0; WORDS],
            z: [0; WORDS],
        })
    }

    /// Builds a string from `(site, operator)` pairs; unspecified sites are identity.
    pub fn from_sites(n_qubits: usize, sites: &[(usize, Pauli)]) -> Result<Self> {
        let mut p = Self::identity(n_qubits)?;
        for &(site, op) in sites {
            if site >= n_qubits {
                return Err(Error::InvalidSize {
                    size: site,
                    reason: "site index out of range",
                });
            }
            p.set(site, op);
        }
        Ok(p)
    }

    /// Builds a string from raw bit vectors (bit `j` of word `j / 64`).
    pub fn from_bits(n_qubits: usize, x: [u64; WORDS], z: [u64; WORDS]) -> Result<Self> {
        let mut p = Self::identity(n_qubits)?;
        let mask = Self::mask(n_qubits);
        for w in 0..WORDS {
            if x[w] & !mask[w] != 0 || z[w] & !mask[w] != 0 {
                return Err(Error::InvalidSize {
                    size: n_qubits,
                    reason: "bits set beyond qubit count",
                });
            }
            p.x[w] = x[w];
            p.z[w] = z[w];
        }
        Ok(p)
    }

    fn mask(n: usize) -> [u64; WORDS] {
        let mut m = [0u64; WORDS];
        for (w, word) in m.iter_mut().enumerate() {
            let lo = w * 64;
            if n >= lo + 64 {
                *word = u64::MAX;
            } else if n > lo {
                *word = (1u64 << (n - lo)) - 1;
            }
        }
        m
    }

    pub fn n_qubits(&self) -> usize {
        self.n as usize
    }

    pub fn x_bits(&self) -> [u64; WORDS] {
        self.x
    }

    pub fn z_bits(&self) -> [u64; WORDS] {
        self.z
    }

    pub fn get(&self, site: usize) -> Pauli {
        let (w, b) = (site / 64, site % 64);
        Pauli::from_bits((self.x[w] >> b) & 1 == 1, (self.z[w] >> b) & 1 == 1)
    }

    pub fn set(&mut self, site: usize, op: Pauli) {
        let (w, b) = (site / 64, site % 64);
        let (x, z) = op.bits();
        self.x[w] = (self.x[w] & !(1 << b)) | ((x as u64) << b);
        self.z[w] = (self.z[w] & !(1 << b)) | ((z as u64) << b);
    }

    pub fn is_identity(&self) -> bool {
        self.x == [0; WORDS] && self.z == [0; WORDS]
    }

    /// Number of non-identity sites.
    pub fn weight(&self) -> u32 {
        (0..WORDS).map(|w| (self.x[w] | self.z[w]).count_ones()).sum()
    }

    /// Number of `Y` factors.
    pub fn y_count(&self) -> u32 {
        (0..WORDS).map(|w| (self.x[w] & self.z[w]).count_ones()).sum()
    }

    /// Sites that are not the identity, in increasing order.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n_qubits()).filter(|&j| self.get(j) != Pauli::I).collect()
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

    pub fn mul(&self, other: &Self) -> Result<(PauliString, Phase)> {
        self.check_size(other)?;
        Ok(self.mul_unchecked(other))
    }

    #[inline]
    pub fn commutes_unchecked(&self, other: &Self) -> bool {
        let mut parity = 0u32;
        for w in 0..WORDS {
            parity ^= ((self.x[w] & other.z[w]) ^ (self.z[w] & other.x[w])).count_ones();
        }
        parity & 1 == 0
    }

    #[inline]
    pub fn mul_unchecked(&self, other: &Self) -> (PauliString, Phase) {
        // Per-site products: XY = iZ, YZ = iX, ZX = iY and the reversed
        // orders give -i; everything else is phase-free.
        let mut plus = 0i32;
        let mut minus = 0i32;
        let mut out = *self;
        for w in 0..WORDS {
            let (x1, z1, x2, z2) = (self.x[w], self.z[w], other.x[w], other.z[w]);
            let (px, py, pz) = (x1 & !z1, x1 & z1, !x1 & z1);
            let (qx, qy, qz) = (x2 & !z2, x2 & z2, !x2 & z2);
            plus += ((px & qy) | (py & qz) | (pz & qx)).count_ones() as i32;
            minus += ((py & qx) | (pz & qy) | (px & qz)).count_ones() as i32;
            out.x[w] = x1 ^ x2;
            out.z[w] = z1 ^ z2;
        }
        (out, Phase::from_exponent(plus - minus))
    }
}

impl Ord for PauliString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then_with(|| self.z.iter().rev().cmp(other.z.iter().rev()))
            .then_with(|| self.x.iter().rev().cmp(other.x.iter().rev()))
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.n_qubits() {
            write!(f, "{}", self.get(j).to_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString({self})")
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        let mut p = PauliString::identity(chars.len())?;
        for (j, c) in chars.into_iter().enumerate() {
            let op = Pauli::from_char(c)
                .ok_or_else(|| Error::Parse(format!("invalid Pauli character {c:?} in {s:?}")))?;
            p.set(j, op);
        }
        Ok(p)
    }
}

impl BasisElement for PauliString {
    const KIND: BasisKind = BasisKind::Pauli;

    fn identity(size: usize) -> Self {
        PauliString::identity(size).expect("valid qubit count")
    }

    fn size(&self) -> usize {
        self.n_qubits()
    }

    fn is_identity(&self) -> bool {
        PauliString::is_identity(self)
    }

    fn weight(&self) -> u32 {
        PauliString::weight(self)
    }

    fn commutes_with(&self, other: &Self) -> bool {
        self.commutes_unchecked(other)
    }

    fn product(&self, other: &Self) -> (Self, Phase) {
        self.mul_unchecked(other)
    }

    fn packed_bits(&self) -> [u64; 4] {
        [self.x[0], self.x[1], self.z[0], self.z[1]]
    }

    fn from_packed_bits(size: usize, bits: [u64; 4]) -> Self {
        PauliString {
            n: size as u16,
            x: [bits[0], bits[1]],
            z: [bits[2], bits[3]],
        }
    }

    fn parse_sized(size: usize, text: &str) -> Result<Self> {
        let p: PauliString = text.parse()?;
        if p.n_qubits() != size {
            return Err(Error::SizeMismatch {
                left: size,
                right: p.n_qubits(),
            });
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn product_examples() {
        assert_eq!(ps("XI").mul(&ps("YI")).unwrap(), (ps("ZI"), Phase::PlusI));
        let p = ps("XYZI");
        assert_eq!(p.mul(&ps("IIII")).unwrap(), (p, Phase::PlusOne));
        assert_eq!(ps("XX").mul(&ps("YY")).unwrap(), (ps("ZZ"), Phase::MinusOne));
    }

    #[test]
    fn commutation_examples() {
        assert!(!ps("X").commutes(&ps("Y")).unwrap());
        assert!(ps("XIZI").commutes(&ps("IYIX")).unwrap());
        assert!(ps("XX").commutes(&ps("YY")).unwrap());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(ps("IIII").weight(), 0);
        assert_eq!(ps("XIZ").weight(), 2);
        assert_eq!(ps("YYY").weight(), 3);
    }

    #[test]
    fn size_mismatch_is_an_error() {
        assert!(matches!(
            ps("XX").mul(&ps("XXX")),
            Err(Error::SizeMismatch { left: 2, right: 3 })
        ));
        assert!(ps("XX").commutes(&ps("X")).is_err());
    }

    #[test]
    fn parse_rejects_bad_characters() {
        assert!("XQZ".parse::<PauliString>().is_err());
        assert!("xyz".parse::<PauliString>().is_err());
        assert!("".parse::<PauliString>().is_err());
        assert_eq!(ps("IXYZ").to_string(), "IXYZ");
    }

    #[test]
    fn sites_beyond_first_word() {
        let a = PauliString::from_sites(100, &[(3, Pauli::X), (70, Pauli::Y)]).unwrap();
        let b = PauliString::from_sites(100, &[(70, Pauli::Z), (99, Pauli::Z)]).unwrap();
        assert_eq!(a.weight(), 2);
        assert!(!a.commutes(&b).unwrap());
        let (r, ph) = a.mul(&b).unwrap();
        assert_eq!(ph, Phase::PlusI);
        assert_eq!(r.get(70), Pauli::X);
        assert_eq!(r.weight(), 3);
        assert_eq!(r.support(), vec![3, 70, 99]);
    }

    #[test]
    fn ordering_is_z_major() {
        // Same z bits: decided by x.
        assert!(ps("XI") < ps("IX"));
        // Any z bit outranks x bits.
        assert!(ps("XX") < ps("IZ"));
    }

    fn arb_string(n: usize) -> impl Strategy<Value = PauliString> {
        proptest::collection::vec(0u8..4, n).prop_map(move |ops| {
            let sites: Vec<(usize, Pauli)> = ops
                .iter()
                .enumerate()
                .map(|(j, &o)| (j, [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][o as usize]))
                .collect();
            PauliString::from_sites(n, &sites).unwrap()
        })
    }

    fn arb_pair() -> impl Strategy<Value = (PauliString, PauliString)> {
        (1usize..90).prop_flat_map(|n| (arb_string(n), arb_string(n)))
    }

    proptest! {
        #[test]
        fn swapped_product_differs_only_by_commutation_sign((p, q) in arb_pair()) {
            let (r1, f1) = p.mul(&q).unwrap();
            let (r2, f2) = q.mul(&p).unwrap();
            prop_assert_eq!(r1, r2);
            if p.commutes(&q).unwrap() {
                prop_assert_eq!(f1, f2);
                prop_assert!(f1.is_real());
            } else {
                prop_assert_eq!(f1, -f2);
            }
        }

        #[test]
        fn squares_to_identity(p in (1usize..=128).prop_flat_map(arb_string)) {
            let (r, f) = p.mul(&p).unwrap();
            prop_assert!(r.is_identity());
            prop_assert_eq!(f, Phase::PlusOne);
        }

        #[test]
        fn weight_is_subadditive((p, q) in arb_pair()) {
            let (r, _) = p.mul(&q).unwrap();
            prop_assert!(r.weight() <= p.weight() + q.weight());
        }

        #[test]
        fn text_roundtrip(p in (1usize..40).prop_flat_map(arb_string)) {
            prop_assert_eq!(p.to_string().parse::<PauliString>().unwrap(), p);
        }
    }
}
