//! Expectation values and derived quantities read off a propagated state.
//!
//! For a state `Σ α_P P` the expectation of a basis element is `α_P / α_I`;
//! terms missing from a truncated state contribute nothing.

use std::collections::BTreeMap;
use std::io::Write;

use crate::basis::BasisElement;
use crate::error::{Error, Result};
use crate::majorana::MajoranaMonomial;
use crate::models::{fmt17, mode_index, mode_parity, HexTriangularLattice, Spin};
use crate::operator_map::StateView;
use crate::pauli::{Pauli, PauliString};
use crate::propagation::HamiltonianTerm;

/// Real linear combination of basis elements plus an identity part.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableExpansion<B> {
    pub identity: f64,
    pub terms: Vec<(B, f64)>,
}

impl<B: BasisElement> ObservableExpansion<B> {
    pub fn new(identity: f64, terms: Vec<(B, f64)>) -> Result<Self> {
        if !identity.is_finite() || terms.iter().any(|(_, c)| !c.is_finite()) {
            return Err(Error::NonFinite("observable coefficient"));
        }
        Ok(Self { identity, terms })
    }

    pub fn single(element: B) -> Self {
        if element.is_identity() {
            Self {
                identity: 1.0,
                terms: Vec::new(),
            }
        } else {
            Self {
                identity: 0.0,
                terms: vec![(element, 1.0)],
            }
        }
    }

    pub fn from_hamiltonian(terms: &[HamiltonianTerm<B>], identity_offset: f64) -> Self {
        Self {
            identity: identity_offset,
            terms: terms.iter().map(|t| (t.element, t.coefficient)).collect(),
        }
    }

    /// `‖o‖₁`, the sum of absolute coefficients.
    pub fn one_norm(&self) -> f64 {
        self.identity.abs() + self.terms.iter().map(|(_, c)| c.abs()).sum::<f64>()
    }
}

/// `o_I + Σ o_P α_P / α_I`.
pub fn expectation<B: BasisElement, S: StateView<B>>(
    state: &S,
    obs: &ObservableExpansion<B>,
) -> Result<f64> {
    let mut acc = 0.0;
    for (p, c) in &obs.terms {
        if p.size() != state.size() {
            return Err(Error::SizeMismatch {
                left: state.size(),
                right: p.size(),
            });
        }
        acc += if p.is_identity() {
            c * state.identity_coeff()
        } else {
            c * state.coefficient(p)
        };
    }
    let norm = state.identity_coeff();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Diverged(norm));
    }
    Ok(obs.identity + acc / norm)
}

/// `(⟨H⟩ + identity_offset) / n_sites`.
pub fn energy_density<B: BasisElement, S: StateView<B>>(
    state: &S,
    hamiltonian: &[HamiltonianTerm<B>],
    identity_offset: f64,
    n_sites: usize,
) -> Result<f64> {
    if n_sites == 0 {
        return Err(Error::Domain("n_sites must be positive".into()));
    }
    Ok(energy(state, hamiltonian, identity_offset)? / n_sites as f64)
}

/// `⟨H⟩ + identity_offset`.
pub fn energy<B: BasisElement, S: StateView<B>>(
    state: &S,
    hamiltonian: &[HamiltonianTerm<B>],
    identity_offset: f64,
) -> Result<f64> {
    expectation(state, &ObservableExpansion::from_hamiltonian(hamiltonian, identity_offset))
}

/// `ln Tr(e^{-βH})` up to truncation: `n_modes·ln 2` plus the accumulated
/// normalization factor. `n_modes` is the qubit count or half the number
/// of Majorana generators.
pub fn log_partition<B: BasisElement, S: StateView<B>>(state: &S, n_modes: usize) -> f64 {
    n_modes as f64 * std::f64::consts::LN_2 + state.accumulated_log_factor()
}

/// `Z_i Z_j` for `i != j`.
pub fn zz(n_qubits: usize, i: usize, j: usize) -> Result<PauliString> {
    if i == j {
        return Err(Error::Domain(format!("ZZ needs two distinct sites, got {i} twice")));
    }
    PauliString::from_sites(n_qubits, &[(i, Pauli::Z), (j, Pauli::Z)])
}

/// `⟨Z_i Z_j⟩` for every pair `i < j`, row-major.
pub fn all_zz<S: StateView<PauliString>>(state: &S) -> Result<Vec<((usize, usize), f64)>> {
    let n_qubits = state.size();
    let mut out = Vec::new();
    for i in 0..n_qubits {
        for j in i + 1..n_qubits {
            let v = expectation(state, &ObservableExpansion::single(zz(n_qubits, i, j)?))?;
            out.push(((i, j), v));
        }
    }
    Ok(out)
}

/// `Z_j = n_{j↑} - n_{j↓} = (M_{j↑} - M_{j↓}) / 2`.
pub fn site_spin_z(n_generators: usize, site: usize) -> Result<ObservableExpansion<MajoranaMonomial>> {
    if 4 * (site + 1) > n_generators {
        return Err(Error::Domain(format!("site {site} outside {n_generators} generators")));
    }
    let up = mode_parity(n_generators, mode_index(site, Spin::Up))?;
    let down = mode_parity(n_generators, mode_index(site, Spin::Down))?;
    ObservableExpansion::new(0.0, vec![(up, 0.5), (down, -0.5)])
}

/// Product of two expansions; every pair of elements must commute so that
/// the product stays a real combination.
pub fn product<B: BasisElement>(
    a: &ObservableExpansion<B>,
    b: &ObservableExpansion<B>,
) -> Result<ObservableExpansion<B>> {
    let mut identity = a.identity * b.identity;
    let mut acc: BTreeMap<B, f64> = BTreeMap::new();
    for (p, c) in &a.terms {
        *acc.entry(*p).or_default() += c * b.identity;
    }
    for (q, d) in &b.terms {
        *acc.entry(*q).or_default() += a.identity * d;
    }
    for (p, c) in &a.terms {
        for (q, d) in &b.terms {
            let (r, phase) = p.product(q);
            let sign = phase.real_sign().ok_or_else(|| {
                Error::Domain(format!("{p} and {q} anticommute; product is not Hermitian"))
            })?;
            if r.is_identity() {
                identity += sign * c * d;
            } else {
                *acc.entry(r).or_default() += sign * c * d;
            }
        }
    }
    ObservableExpansion::new(identity, acc.into_iter().filter(|(_, c)| *c != 0.0).collect())
}

/// `C_ZZ = ⟨Z_r Z_i⟩ - ⟨Z_r⟩⟨Z_i⟩` on a Fermi-Hubbard state.
pub fn spin_correlation_czz<S: StateView<MajoranaMonomial>>(
    state: &S,
    lattice: &HexTriangularLattice,
    r: usize,
    i: usize,
) -> Result<f64> {
    let n = lattice.n_sites();
    if r >= n || i >= n {
        return Err(Error::Domain(format!("sites ({r}, {i}) outside lattice of {n}")));
    }
    if state.size() != 4 * n {
        return Err(Error::SizeMismatch {
            left: state.size(),
            right: 4 * n,
        });
    }
    let zr = site_spin_z(state.size(), r)?;
    let zi = site_spin_z(state.size(), i)?;
    let both = expectation(state, &product(&zr, &zi)?)?;
    Ok(both - expectation(state, &zr)? * expectation(state, &zi)?)
}

/// `C_ZZ` between `center` and every site.
pub fn czz_profile<S: StateView<MajoranaMonomial>>(
    state: &S,
    lattice: &HexTriangularLattice,
    center: usize,
) -> Result<Vec<f64>> {
    (0..lattice.n_sites())
        .map(|i| spin_correlation_czz(state, lattice, center, i))
        .collect()
}

/// Rows `site,x,y,czz` aligned with the lattice export.
pub fn write_correlation_csv<W: Write>(
    out: W,
    lattice: &HexTriangularLattice,
    czz: &[f64],
) -> Result<()> {
    if czz.len() != lattice.n_sites() {
        return Err(Error::SizeMismatch {
            left: lattice.n_sites(),
            right: czz.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["site", "x", "y", "czz"])?;
    for (k, ((x, y), c)) in lattice.sites.iter().zip(czz).enumerate() {
        w.write_record([k.to_string(), fmt17(*x), fmt17(*y), fmt17(*c)])?;
    }
    w.flush()?;
    Ok(())
}
