//! Hamiltonian and lattice builders.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::basis::BasisElement;
use crate::error::{Error, Result};
use crate::majorana::MajoranaMonomial;
use crate::pauli::{Pauli, PauliString};
use crate::propagation::{stream_rng, HamiltonianTerm};

const XYZ: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

fn two_site(n: usize, i: usize, a: Pauli, j: usize, b: Pauli) -> Result<PauliString> {
    PauliString::from_sites(n, &[(i, a), (j, b)])
}

/// Open-chain J1-J2 Heisenberg model. All nearest-neighbor terms come first
/// (bond by bond, XX YY ZZ), then the next-nearest ones.
pub fn build_j1j2(n: usize, j1: f64, j2: f64) -> Result<Vec<HamiltonianTerm<PauliString>>> {
    if n < 3 {
        return Err(Error::Model(format!("J1-J2 chain needs n >= 3, got {n}")));
    }
    let mut out = Vec::with_capacity(3 * (n - 1) + 3 * (n - 2));
    for (dist, coupling) in [(1, j1), (2, j2)] {
        if coupling == 0.0 {
            continue;
        }
        for i in 0..n - dist {
            for p in XYZ {
                out.push(HamiltonianTerm::new(two_site(n, i, p, i + dist, p)?, coupling)?);
            }
        }
    }
    Ok(out)
}

/// Plain open Heisenberg chain with unit couplings.
pub fn build_heisenberg_chain(n: usize) -> Result<Vec<HamiltonianTerm<PauliString>>> {
    if n < 2 {
        return Err(Error::Model(format!("Heisenberg chain needs n >= 2, got {n}")));
    }
    let mut out = Vec::with_capacity(3 * (n - 1));
    for i in 0..n - 1 {
        for p in XYZ {
            out.push(HamiltonianTerm::new(two_site(n, i, p, i + 1, p)?, 1.0)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    AllToAll,
    NearestNeighbor,
    Heisenberg1d,
}

/// Distinct weight-2 Pauli strings with ±1 coefficients.
///
/// `all_to_all` picks any pair of qubits, `nearest_neighbor` only open-chain
/// bonds. `heisenberg_1d` is the deterministic chain and requires
/// `n_terms == 3(n-1)`.
pub fn build_random_2local(
    n: usize,
    n_terms: usize,
    geometry: Geometry,
    seed: u64,
) -> Result<Vec<HamiltonianTerm<PauliString>>> {
    if n < 2 {
        return Err(Error::Model(format!("need n >= 2, got {n}")));
    }
    let capacity = match geometry {
        Geometry::AllToAll => 9 * n * (n - 1) / 2,
        Geometry::NearestNeighbor => 9 * (n - 1),
        Geometry::Heisenberg1d => 3 * (n - 1),
    };
    if geometry == Geometry::Heisenberg1d {
        if n_terms != capacity {
            return Err(Error::Model(format!(
                "heisenberg_1d on {n} sites has exactly {capacity} terms, requested {n_terms}"
            )));
        }
        return build_heisenberg_chain(n);
    }
    if n_terms == 0 || n_terms > capacity {
        return Err(Error::Model(format!(
            "cannot draw {n_terms} distinct terms; {geometry:?} on {n} sites allows 1..={capacity}"
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let mut seen = FxHashSet::default();
    let mut out = Vec::with_capacity(n_terms);
    while out.len() < n_terms {
        let (i, j) = match geometry {
            Geometry::AllToAll => {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i.min(j), i.max(j))
            }
            _ => {
                let i = rng.random_range(0..n - 1);
                (i, i + 1)
            }
        };
        let a = XYZ[rng.random_range(0..3)];
        let b = XYZ[rng.random_range(0..3)];
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let p = two_site(n, i, a, j, b)?;
        if seen.insert(p) {
            out.push(HamiltonianTerm::new(p, sign)?);
        }
    }
    Ok(out)
}

/// Hexagonal patch of the triangular lattice, in axial coordinates `(q, r)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HexTriangularLattice {
    pub rings: usize,
    pub axial: Vec<(i64, i64)>,
    /// Cartesian positions with unit bond length.
    pub sites: Vec<(f64, f64)>,
    /// Nearest-neighbor pairs `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub center_index: usize,
}

impl HexTriangularLattice {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn degree(&self, site: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == site || b == site)
            .count()
    }

    /// Site rows `site,x,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["site", "x", "y"])?;
        for (i, (x, y)) in self.sites.iter().enumerate() {
            w.write_record([i.to_string(), fmt17(*x), fmt17(*y)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Edge rows `i,j`.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j"])?;
        for (a, b) in &self.edges {
            w.write_record([a.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// 17 significant digits, round-trippable.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Sites with hex distance `<= rings` from the origin, ordered by ring and
/// then by `(q, r)`, so the center is site 0.
pub fn build_hex_lattice(rings: usize) -> HexTriangularLattice {
    let r = rings as i64;
    let mut axial = Vec::new();
    for q in -r..=r {
        for s in (-r).max(-q - r)..=r.min(-q + r) {
            axial.push((q, s));
        }
    }
    let dist = |&(q, s): &(i64, i64)| q.abs().max(s.abs()).max((q + s).abs());
    axial.sort_by_key(|c| (dist(c), c.0, c.1));
    let index: BTreeMap<(i64, i64), usize> =
        axial.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let sites = axial
        .iter()
        .map(|&(q, s)| (q as f64 + s as f64 / 2.0, s as f64 * 3f64.sqrt() / 2.0))
        .collect();
    let mut edges = Vec::new();
    for (i, &(q, s)) in axial.iter().enumerate() {
        for (dq, ds) in [(1, 0), (0, 1), (-1, 1)] {
            if let Some(&j) = index.get(&(q + dq, s + ds)) {
                edges.push((i.min(j), i.max(j)));
            }
        }
    }
    edges.sort_unstable();
    HexTriangularLattice {
        rings,
        axial,
        sites,
        edges,
        center_index: 0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spin {
    Up = 0,
    Down = 1,
}

/// Fermionic mode of `(site, spin)`: site-major, up before down.
pub fn mode_index(site: usize, spin: Spin) -> usize {
    2 * site + spin as usize
}

/// `i m_{2k} m_{2k+1}`, so that `n_k = (1 + M_k)/2`.
pub fn mode_parity(n_generators: usize, mode: usize) -> Result<MajoranaMonomial> {
    MajoranaMonomial::from_indices(n_generators, &[2 * mode, 2 * mode + 1])
}

/// Fermi-Hubbard Hamiltonian in Majorana form.
#[derive(Clone, Debug)]
pub struct FermiHubbard {
    pub lattice: HexTriangularLattice,
    pub n_generators: usize,
    pub terms: Vec<HamiltonianTerm<MajoranaMonomial>>,
    /// Scalar part of the Hamiltonian, not propagated.
    pub identity_offset: f64,
    /// Positions of hopping terms inside `terms`.
    pub hopping_positions: Vec<usize>,
}

/// Hopping first (edge by edge, up then down), then the on-site terms.
/// Identical monomials are merged and exact zeros dropped, so at `μ = U/2`
/// the length-2 on-site monomials vanish.
pub fn build_fermi_hubbard_tri(
    lattice: &HexTriangularLattice,
    t: f64,
    u: f64,
    mu: f64,
) -> Result<FermiHubbard> {
    let n_sites = lattice.n_sites();
    if n_sites == 0 {
        return Err(Error::Model("empty lattice".into()));
    }
    for (name, v) in [("t", t), ("U", u), ("mu", mu)] {
        if !v.is_finite() {
            return Err(Error::Model(format!("{name} must be finite")));
        }
    }
    let ng = 4 * n_sites;
    let mut terms = Vec::new();
    let mut hopping_positions = Vec::new();
    // c†_i c_j + h.c. = (M{a_i, b_j} - M{b_i, a_j}) / 2 with a = m_{2k}, b = m_{2k+1}
    if t != 0.0 {
        for &(i, j) in &lattice.edges {
            for spin in [Spin::Up, Spin::Down] {
                let (ki, kj) = (mode_index(i, spin), mode_index(j, spin));
                let ab = MajoranaMonomial::from_indices(ng, &[2 * ki, 2 * kj + 1])?;
                let ba = MajoranaMonomial::from_indices(ng, &[2 * ki + 1, 2 * kj])?;
                hopping_positions.push(terms.len());
                terms.push(HamiltonianTerm::new(ab, -t / 2.0)?);
                hopping_positions.push(terms.len());
                terms.push(HamiltonianTerm::new(ba, t / 2.0)?);
            }
        }
    }
    // U n↑n↓ - μ(n↑ + n↓) = (U/4 - μ) + (U/4 - μ/2)(M↑ + M↓) + (U/4) M↑M↓
    let mut identity_offset = 0.0;
    let pair = u / 4.0 - mu / 2.0;
    for site in 0..n_sites {
        identity_offset += u / 4.0 - mu;
        let up = mode_parity(ng, mode_index(site, Spin::Up))?;
        let down = mode_parity(ng, mode_index(site, Spin::Down))?;
        if pair != 0.0 {
            terms.push(HamiltonianTerm::new(up, pair)?);
            terms.push(HamiltonianTerm::new(down, pair)?);
        }
        if u != 0.0 {
            let (quad, phase) = up.product(&down);
            let sign = phase.real_sign().expect("disjoint even monomials commute");
            terms.push(HamiltonianTerm::new(quad, sign * u / 4.0)?);
        }
    }
    Ok(FermiHubbard {
        lattice: lattice.clone(),
        n_generators: ng,
        terms,
        identity_offset,
        hopping_positions,
    })
}

/// Serializable model selector used by experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    J1j2 {
        n_sites: usize,
        #[serde(default = "default_j1")]
        j1: f64,
        #[serde(default = "default_j2")]
        j2: f64,
    },
    Heisenberg1d {
        n_sites: usize,
    },
    RandomAllToAll {
        n_sites: usize,
        n_terms: usize,
        #[serde(default)]
        seed: u64,
    },
    RandomNn {
        n_sites: usize,
        n_terms: usize,
        #[serde(default)]
        seed: u64,
    },
    FermiHubbardTri {
        rings: usize,
        #[serde(default = "default_t")]
        t: f64,
        #[serde(default = "default_u")]
        u: f64,
        /// Defaults to `U/2`.
        #[serde(default)]
        mu: Option<f64>,
    },
}

fn default_j1() -> f64 {
    1.0
}
fn default_j2() -> f64 {
    0.5
}
fn default_t() -> f64 {
    1.0
}
fn default_u() -> f64 {
    8.0
}

/// A built model in either basis.
#[derive(Clone, Debug)]
pub enum BuiltModel {
    Pauli {
        n_qubits: usize,
        terms: Vec<HamiltonianTerm<PauliString>>,
    },
    Majorana(FermiHubbard),
}

impl BuiltModel {
    pub fn n_sites(&self) -> usize {
        match self {
            BuiltModel::Pauli { n_qubits, .. } => *n_qubits,
            BuiltModel::Majorana(fh) => fh.lattice.n_sites(),
        }
    }

    pub fn identity_offset(&self) -> f64 {
        match self {
            BuiltModel::Pauli { .. } => 0.0,
            BuiltModel::Majorana(fh) => fh.identity_offset,
        }
    }

    pub fn n_terms(&self) -> usize {
        match self {
            BuiltModel::Pauli { terms, .. } => terms.len(),
            BuiltModel::Majorana(fh) => fh.terms.len(),
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<BuiltModel> {
        Ok(match *self {
            ModelSpec::J1j2 { n_sites, j1, j2 } => BuiltModel::Pauli {
                n_qubits: n_sites,
                terms: build_j1j2(n_sites, j1, j2)?,
            },
            ModelSpec::Heisenberg1d { n_sites } => BuiltModel::Pauli {
                n_qubits: n_sites,
                terms: build_heisenberg_chain(n_sites)?,
            },
            ModelSpec::RandomAllToAll {
                n_sites,
                n_terms,
                seed,
            } => BuiltModel::Pauli {
                n_qubits: n_sites,
                terms: build_random_2local(n_sites, n_terms, Geometry::AllToAll, seed)?,
            },
            ModelSpec::RandomNn {
                n_sites,
                n_terms,
                seed,
            } => BuiltModel::Pauli {
                n_qubits: n_sites,
                terms: build_random_2local(n_sites, n_terms, Geometry::NearestNeighbor, seed)?,
            },
            ModelSpec::FermiHubbardTri { rings, t, u, mu } => {
                let lattice = build_hex_lattice(rings);
                BuiltModel::Majorana(build_fermi_hubbard_tri(
                    &lattice,
                    t,
                    u,
                    mu.unwrap_or(u / 2.0),
                )?)
            }
        })
    }
}
