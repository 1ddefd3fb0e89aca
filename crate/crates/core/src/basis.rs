//! Common interface over the two operator bases the propagator works in.

use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::phase::Phase;

/// Which operator basis a state or Hamiltonian is expanded in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Pauli,
    Majorana,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisKind::Pauli => f.write_str("pauli"),
            BasisKind::Majorana => f.write_str("majorana"),
        }
    }
}

/// A Hermitian, self-inverse basis operator (Pauli string or Majorana monomial).
///
/// Any two elements either commute or anticommute, and the product of two
/// commuting elements is another element times a real sign. The `*_unchecked`
/// style methods here assume equal sizes; callers validate once up front.
pub trait BasisElement:
    Copy + Eq + Ord + Hash + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const KIND: BasisKind;

    fn identity(size: usize) -> Self;

    /// Qubit count for Pauli strings, generator count for Majorana monomials.
    fn size(&self) -> usize;

    fn is_identity(&self) -> bool;

    /// Pauli weight or Majorana length.
    fn weight(&self) -> u32;

    fn commutes_with(&self, other: &Self) -> bool;

    /// `self * other = phase * result`.
    fn product(&self, other: &Self) -> (Self, Phase);

    fn parse_sized(size: usize, text: &str) -> Result<Self>;

    /// Packed GF(2) vector; the product of two elements packs to the XOR.
    fn packed_bits(&self) -> [u64; 4];

    /// Inverse of [`BasisElement::packed_bits`]. Bits beyond `size` must be clear.
    fn from_packed_bits(size: usize, bits: [u64; 4]) -> Self;
}
