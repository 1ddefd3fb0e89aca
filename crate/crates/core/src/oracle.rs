//! Dense-matrix reference values for small systems.
//!
//! Every Pauli string maps a computational basis state `|b⟩` to
//! `i^{#Y} (-1)^{|b ∧ z|} |b ⊕ x⟩`, so a Hamiltonian only couples states in
//! the same coset of the span of its x-patterns. The product-formula oracle
//! works block by block over those cosets; exact diagonalization splits
//! further into the connected sectors of H. Neither builds the full
//! `2^n × 2^n` matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::majorana::MajoranaMonomial;
use crate::pauli::{Pauli, PauliString};
use crate::phase::Phase;

/// Largest invariant block either oracle will handle.
pub const MAX_BLOCK_DIM: usize = 4096;
/// Largest register (the block map has `2^n` entries).
pub const MAX_DENSE_QUBITS: usize = 20;

/// Jordan-Wigner image of a Hermitian Majorana monomial: generator `2k` maps
/// to `Z_0…Z_{k-1} X_k`, generator `2k+1` to `Z_0…Z_{k-1} Y_k`. Returns the
/// Pauli string and the real sign in front of it.
pub fn jw_map(m: &MajoranaMonomial) -> (PauliString, f64) {
    let n_qubits = m.n_modes();
    let mut acc = PauliString::identity(n_qubits).expect("mode count within Pauli range");
    let mut phase = Phase::from_exponent(m.phase_exponent() as i32);
    for p in m.indices() {
        let k = p / 2;
        let mut g = PauliString::identity(n_qubits).expect("mode count within Pauli range");
        for j in 0..k {
            g.set(j, Pauli::Z);
        }
        g.set(k, if p % 2 == 0 { Pauli::X } else { Pauli::Y });
        let (next, ph) = acc.mul_unchecked(&g);
        acc = next;
        phase *= ph;
    }
    let sign = phase
        .real_sign()
        .expect("Hermitian monomial maps to a Hermitian Pauli string");
    (acc, sign)
}

/// `Σ c_j P_j` after Jordan-Wigner.
pub fn jw_expansion(terms: &[(MajoranaMonomial, f64)]) -> Vec<(PauliString, f64)> {
    terms
        .iter()
        .map(|(m, c)| {
            let (p, s) = jw_map(m);
            (p, s * c)
        })
        .collect()
}

/// Full `2^n × 2^n` matrix of a Pauli string. Only for tests and tiny systems.
pub fn pauli_dense_matrix(p: &PauliString) -> DMatrix<Complex64> {
    let n = p.n_qubits();
    let d = 1usize << n;
    let (x, z, ph) = action(p);
    let mut m = DMatrix::zeros(d, d);
    for b in 0..d as u64 {
        m[((b ^ x) as usize, b as usize)] = sign_of(b, z) * ph;
    }
    m
}

fn action(p: &PauliString) -> (u64, u64, Complex64) {
    let x = p.x_bits()[0];
    let z = p.z_bits()[0];
    let ph = Phase::from_exponent(p.y_count() as i32).to_complex();
    (x, z, ph)
}

#[inline]
fn sign_of(b: u64, z: u64) -> f64 {
    if (b & z).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Cosets of the GF(2) span of the generators' x-patterns.
#[derive(Clone, Debug)]
pub struct BlockStructure {
    pub n_qubits: usize,
    /// Reduced basis of the span, pivots descending.
    basis: Vec<u64>,
    /// `blocks[k]` lists the basis states of block `k`, ascending.
    pub blocks: Vec<Vec<u64>>,
    /// Block and in-block index of every basis state.
    location: Vec<(u32, u32)>,
}

impl BlockStructure {
    pub fn new(n_qubits: usize, x_patterns: impl IntoIterator<Item = u64>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_DENSE_QUBITS {
            return Err(Error::TooLarge(format!(
                "dense oracle supports 1..={MAX_DENSE_QUBITS} qubits, got {n_qubits}"
            )));
        }
        let mut basis: Vec<u64> = Vec::new();
        for mut v in x_patterns {
            for &b in &basis {
                v = v.min(v ^ b);
            }
            if v != 0 {
                // keep the basis fully reduced with distinct leading bits
                let lead = 63 - v.leading_zeros();
                for b in basis.iter_mut() {
                    if *b >> lead & 1 == 1 {
                        *b ^= v;
                    }
                }
                basis.push(v);
                basis.sort_unstable_by(|a, b| b.cmp(a));
            }
        }
        let dim = 1usize << basis.len();
        if dim > MAX_BLOCK_DIM {
            return Err(Error::TooLarge(format!(
                "invariant block of dimension {dim} exceeds {MAX_BLOCK_DIM}"
            )));
        }
        let total = 1usize << n_qubits;
        let pivots: u64 = basis.iter().map(|b| 1u64 << (63 - b.leading_zeros())).fold(0, |a, p| a | p);
        let span: Vec<u64> = (0..dim)
            .map(|mask| {
                basis
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .fold(0u64, |acc, (_, b)| acc ^ b)
            })
            .collect();
        let mut blocks = Vec::with_capacity(total / dim);
        let mut location = vec![(0u32, 0u32); total];
        for rep in 0..total as u64 {
            if rep & pivots != 0 {
                continue;
            }
            let mut members: Vec<u64> = span.iter().map(|s| rep ^ s).collect();
            members.sort_unstable();
            for (i, &m) in members.iter().enumerate() {
                location[m as usize] = (blocks.len() as u32, i as u32);
            }
            blocks.push(members);
        }
        Ok(Self {
            n_qubits,
            basis,
            blocks,
            location,
        })
    }

    pub fn span_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn block_dim(&self) -> usize {
        1 << self.basis.len()
    }

    /// Whether `x` lies in the span, i.e. the operator keeps blocks invariant.
    pub fn preserves_blocks(&self, x: u64) -> bool {
        let mut v = x;
        for &b in &self.basis {
            v = v.min(v ^ b);
        }
        v == 0
    }

    fn index_in_block(&self, b: u64) -> usize {
        self.location[b as usize].1 as usize
    }
}

fn check_sizes<'a>(n: usize, ps: impl IntoIterator<Item = &'a PauliString>) -> Result<()> {
    for p in ps {
        if p.n_qubits() != n {
            return Err(Error::SizeMismatch {
                left: n,
                right: p.n_qubits(),
            });
        }
    }
    Ok(())
}

/// Exact thermal values for one inverse temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalValues {
    pub beta: f64,
    /// `Tr(P e^{-βH}) / Tr(e^{-βH})` per requested observable.
    pub expectations: Vec<f64>,
    pub log_partition: f64,
}

/// Sectors of the basis left invariant by `Σ λ_m P_m`: connected components
/// of the graph whose edges are the nonzero off-diagonal matrix elements,
/// after amplitudes reaching the same state are summed. Conserved
/// quantities such as particle number split the register without being
/// named.
struct Sectors {
    members: Vec<Vec<u64>>,
    /// Sector and in-sector index of every basis state.
    location: Vec<(u32, u32)>,
}

fn find(parent: &mut [u32], mut a: u32) -> u32 {
    while parent[a as usize] != a {
        let up = parent[parent[a as usize] as usize];
        parent[a as usize] = up;
        a = up;
    }
    a
}

fn invariant_sectors(n_qubits: usize, ops: &[(u64, u64, Complex64, f64)]) -> Result<Sectors> {
    let total = 1usize << n_qubits;
    let scale = ops.iter().map(|o| o.3.abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut parent: Vec<u32> = (0..total as u32).collect();
    let mut row: Vec<(u64, Complex64)> = Vec::with_capacity(ops.len());
    for b in 0..total as u64 {
        row.clear();
        row.extend(
            ops.iter()
                .filter(|o| o.0 != 0)
                .map(|&(x, z, ph, l)| (b ^ x, ph * sign_of(b, z) * l)),
        );
        row.sort_unstable_by_key(|e| e.0);
        let mut k = 0;
        while k < row.len() {
            let target = row[k].0;
            let mut amp = Complex64::new(0.0, 0.0);
            while k < row.len() && row[k].0 == target {
                amp += row[k].1;
                k += 1;
            }
            if amp.norm() > tol {
                let (ra, rb) = (find(&mut parent, b as u32), find(&mut parent, target as u32));
                if ra != rb {
                    parent[ra.max(rb) as usize] = ra.min(rb);
                }
            }
        }
    }
    let mut index_of_root = vec![u32::MAX; total];
    let mut members: Vec<Vec<u64>> = Vec::new();
    let mut location = vec![(0u32, 0u32); total];
    for b in 0..total {
        let r = find(&mut parent, b as u32) as usize;
        if index_of_root[r] == u32::MAX {
            index_of_root[r] = members.len() as u32;
            members.push(Vec::new());
        }
        let s = index_of_root[r];
        location[b] = (s, members[s as usize].len() as u32);
        members[s as usize].push(b as u64);
    }
    if let Some(big) = members.iter().map(Vec::len).max().filter(|&m| m > MAX_BLOCK_DIM) {
        return Err(Error::TooLarge(format!(
            "invariant sector of dimension {big} exceeds {MAX_BLOCK_DIM}"
        )));
    }
    Ok(Sectors { members, location })
}

/// `⟨P⟩_β` for every observable and every β by exact diagonalization of
/// `H = Σ λ_m P_m` (plus a scalar offset, which only shifts the log
/// partition function), one invariant sector at a time.
pub fn dense_thermal_expectation(
    n_qubits: usize,
    hamiltonian: &[(PauliString, f64)],
    offset: f64,
    observables: &[PauliString],
    betas: &[f64],
) -> Result<Vec<ThermalValues>> {
    if n_qubits == 0 || n_qubits > MAX_DENSE_QUBITS {
        return Err(Error::TooLarge(format!(
            "dense oracle supports 1..={MAX_DENSE_QUBITS} qubits, got {n_qubits}"
        )));
    }
    check_sizes(n_qubits, hamiltonian.iter().map(|(p, _)| p))?;
    check_sizes(n_qubits, observables)?;
    if let Some(&beta) = betas.iter().find(|b| !b.is_finite() || **b < 0.0) {
        return Err(Error::Domain(format!("beta must be finite and >= 0, got {beta}")));
    }
    let ham: Vec<(u64, u64, Complex64, f64)> = hamiltonian
        .iter()
        .map(|(p, l)| {
            let (x, z, ph) = action(p);
            (x, z, ph, *l)
        })
        .collect();
    let sectors = invariant_sectors(n_qubits, &ham)?;
    let ops: Vec<(u64, u64, Complex64)> = observables.iter().map(action).collect();

    // per sector: eigenvalues and observable diagonals in the eigenbasis
    let mut spectra: Vec<(Vec<f64>, Vec<Vec<f64>>)> = Vec::with_capacity(sectors.members.len());
    for (s, members) in sectors.members.iter().enumerate() {
        let d = members.len();
        let local = |b: u64| -> Option<usize> {
            let (sec, i) = sectors.location[b as usize];
            (sec as usize == s).then_some(i as usize)
        };
        let mut h = DMatrix::<Complex64>::zeros(d, d);
        for &(x, z, ph, lambda) in &ham {
            for (j, &b) in members.iter().enumerate() {
                // amplitudes leaving the sector sum to zero
                if let Some(i) = local(b ^ x) {
                    h[(i, j)] += ph * sign_of(b, z) * lambda;
                }
            }
        }
        let eig = SymmetricEigen::new(h);
        let vecs = &eig.eigenvectors;
        let mut diag = vec![vec![0.0; d]; ops.len()];
        for (o, &(x, z, ph)) in ops.iter().enumerate() {
            let pairs: Vec<(usize, usize, f64)> = members
                .iter()
                .enumerate()
                .filter_map(|(j, &b)| local(b ^ x).map(|i| (i, j, sign_of(b, z))))
                .collect();
            if pairs.is_empty() {
                continue;
            }
            for k in 0..d {
                let col = vecs.column(k);
                let mut acc = Complex64::new(0.0, 0.0);
                for &(i, j, sg) in &pairs {
                    acc += col[i].conj() * ph * sg * col[j];
                }
                diag[o][k] = acc.re;
            }
        }
        spectra.push((eig.eigenvalues.iter().copied().collect(), diag));
    }
    let emin = spectra
        .iter()
        .flat_map(|(e, _)| e.iter().copied())
        .fold(f64::INFINITY, f64::min);

    let mut out = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut z = 0.0;
        let mut num = vec![0.0; ops.len()];
        for (energies, diag) in &spectra {
            for (k, &e) in energies.iter().enumerate() {
                let w = (-beta * (e - emin)).exp();
                z += w;
                for (o, row) in diag.iter().enumerate() {
                    num[o] += w * row[k];
                }
            }
        }
        out.push(ThermalValues {
            beta,
            expectations: num.iter().map(|v| v / z).collect(),
            log_partition: z.ln() - beta * (emin + offset),
        });
    }
    Ok(out)
}

/// Values of the product-formula state at one checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct SandwichValues {
    pub gates_applied: usize,
    pub expectations: Vec<f64>,
    /// `ln Tr(A)` for the unnormalized sandwich `A`.
    pub log_trace: f64,
}

/// Normalized expectations of the sandwich state
/// `A_k = E_k ⋯ E_1 · I · E_1 ⋯ E_k` with `E_g = e^{-θ_g P_g / 2}`,
/// evaluated after the first `k` gates for every `k` in `checkpoints`.
///
/// Writing `A_k = R_k† R_k` with `R_k = E_1 ⋯ E_k`, each basis row of `R_k`
/// is advanced gate by gate, so memory stays at one block-sized vector.
pub fn dense_product_formula_expectation(
    n_qubits: usize,
    gates: &[(PauliString, f64)],
    observables: &[PauliString],
    checkpoints: &[usize],
) -> Result<Vec<SandwichValues>> {
    check_sizes(n_qubits, gates.iter().map(|(p, _)| p))?;
    check_sizes(n_qubits, observables)?;
    if let Some(&bad) = checkpoints.iter().find(|&&c| c > gates.len()) {
        return Err(Error::Domain(format!(
            "checkpoint {bad} beyond {} gates",
            gates.len()
        )));
    }
    if gates.iter().any(|(_, a)| !a.is_finite()) {
        return Err(Error::NonFinite("gate angle"));
    }
    let blocks = BlockStructure::new(n_qubits, gates.iter().map(|(p, _)| p.x_bits()[0]))?;
    let d = blocks.block_dim();
    let ops: Vec<(u64, u64, Complex64)> = observables.iter().map(action).collect();
    let inside: Vec<bool> = ops.iter().map(|&(x, _, _)| blocks.preserves_blocks(x)).collect();
    let gate_ops: Vec<(u64, u64, Complex64, f64, f64)> = gates
        .iter()
        .map(|(p, theta)| {
            let (x, z, ph) = action(p);
            (x, z, ph, (theta / 2.0).cosh(), (theta / 2.0).sinh())
        })
        .collect();

    let mut order: Vec<usize> = (0..checkpoints.len()).collect();
    order.sort_by_key(|&i| checkpoints[i]);
    let mut traces = vec![0.0f64; checkpoints.len()];
    let mut sums = vec![vec![0.0f64; ops.len()]; checkpoints.len()];

    let mut v = vec![Complex64::new(0.0, 0.0); d];
    let mut w = vec![Complex64::new(0.0, 0.0); d];
    for members in &blocks.blocks {
        // sign and target index of each gate on this block
        let tables: Vec<(Vec<u32>, Vec<f64>)> = gate_ops
            .iter()
            .map(|&(x, z, _, _, _)| {
                members
                    .iter()
                    .map(|&b| (blocks.index_in_block(b ^ x) as u32, sign_of(b, z)))
                    .unzip()
            })
            .collect();
        let obs_tables: Vec<(Vec<u32>, Vec<f64>)> = ops
            .iter()
            .map(|&(x, z, _)| {
                if blocks.preserves_blocks(x) {
                    members
                        .iter()
                        .map(|&b| (blocks.index_in_block(b ^ x) as u32, sign_of(b, z)))
                        .unzip()
                } else {
                    (Vec::new(), Vec::new())
                }
            })
            .collect();
        for row in 0..d {
            v.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            v[row] = Complex64::new(1.0, 0.0);
            let mut applied = 0usize;
            let mut next = 0usize;
            loop {
                while next < order.len() && checkpoints[order[next]] == applied {
                    let slot = order[next];
                    traces[slot] += v.iter().map(|c| c.norm_sqr()).sum::<f64>();
                    for (o, &(_, _, ph)) in ops.iter().enumerate() {
                        if !inside[o] {
                            continue;
                        }
                        let (target, sign) = &obs_tables[o];
                        // v O v† = Σ_b v[b ⊕ x] ⟨b ⊕ x|P|b⟩ conj(v[b])
                        let mut acc = Complex64::new(0.0, 0.0);
                        for j in 0..d {
                            acc += v[target[j] as usize] * sign[j] * v[j].conj();
                        }
                        sums[slot][o] += (acc * ph).re;
                    }
                    next += 1;
                }
                if next == order.len() || applied == gates.len() {
                    break;
                }
                // v ← v E with E = c I - s P: (vP)[j] = v[i] ⟨i|P|j⟩, i = j ⊕ x
                let (_, _, ph, c, s) = gate_ops[applied];
                let (target, sign) = &tables[applied];
                for j in 0..d {
                    let i = target[j] as usize;
                    w[j] = v[j] * c - v[i] * ph * sign[j] * s;
                }
                std::mem::swap(&mut v, &mut w);
                applied += 1;
            }
        }
    }
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(slot, &k)| SandwichValues {
            gates_applied: k,
            expectations: sums[slot].iter().map(|s| s / traces[slot]).collect(),
            log_trace: traces[slot].ln(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisElement;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn jw_generators() {
        let m = |idx: &[usize]| MajoranaMonomial::from_indices(6, idx).unwrap();
        assert_eq!(jw_map(&m(&[0])), (ps("XII"), 1.0));
        assert_eq!(jw_map(&m(&[1])), (ps("YII"), 1.0));
        assert_eq!(jw_map(&m(&[4])), (ps("ZZX"), 1.0));
        assert_eq!(jw_map(&m(&[5])), (ps("ZZY"), 1.0));
        // i m0 m1 = i X Y = -Z
        assert_eq!(jw_map(&m(&[0, 1])), (ps("ZII"), -1.0));
        // i (X I)(Z Y) = i (-iY)(Y)
        assert_eq!(jw_map(&m(&[0, 3])), (ps("YYI"), 1.0));
        assert_eq!(jw_map(&MajoranaMonomial::identity(6).unwrap()), (ps("III"), 1.0));
    }

    #[test]
    fn jw_preserves_products() {
        let a = MajoranaMonomial::from_indices(8, &[0, 3, 5, 6]).unwrap();
        let b = MajoranaMonomial::from_indices(8, &[1, 3, 4, 7]).unwrap();
        let (ab, ph) = a.product(&b);
        let (pa, sa) = jw_map(&a);
        let (pb, sb) = jw_map(&b);
        let (pab, sab) = jw_map(&ab);
        let (prod, ph2) = pa.mul_unchecked(&pb);
        assert_eq!(prod, pab);
        assert_eq!(
            ph.to_complex() * sab,
            ph2.to_complex() * sa * sb
        );
    }

    #[test]
    fn blocks_partition_the_register() {
        let b = BlockStructure::new(4, [0b0011, 0b0110, 0b0101]).unwrap();
        assert_eq!(b.span_dim(), 2);
        assert_eq!(b.blocks.len(), 4);
        let mut all: Vec<u64> = b.blocks.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..16).collect::<Vec<_>>());
        assert!(b.preserves_blocks(0b0101));
        assert!(!b.preserves_blocks(0b1000));
        assert!(BlockStructure::new(21, [1]).is_err());
        assert!(BlockStructure::new(13, (0..13).map(|k| 1u64 << k)).is_err());
    }

    #[test]
    fn single_qubit_thermal() {
        let v = dense_thermal_expectation(1, &[(ps("Z"), 1.0)], 0.0, &[ps("Z"), ps("X")], &[0.0, 0.5])
            .unwrap();
        assert_eq!(v[0].expectations, vec![0.0, 0.0]);
        assert!((v[1].expectations[0] + 0.5f64.tanh()).abs() < 1e-14);
        assert!((v[1].log_partition - (2.0 * 0.5f64.cosh()).ln()).abs() < 1e-14);
    }

    #[test]
    fn sandwich_single_gate() {
        // e^{-θZ/2} e^{-θZ/2} = e^{-θZ}
        let v = dense_product_formula_expectation(1, &[(ps("Z"), 0.3)], &[ps("Z")], &[1, 0]).unwrap();
        assert!((v[0].expectations[0] + 0.3f64.tanh()).abs() < 1e-15);
        assert!((v[0].log_trace - (2.0 * 0.3f64.cosh()).ln()).abs() < 1e-15);
        assert_eq!(v[1].expectations[0], 0.0);
        assert!((v[1].log_trace - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sandwich_matches_full_matrices() {
        let gates = vec![
            (ps("XYI"), 0.2),
            (ps("IZZ"), -0.4),
            (ps("YIX"), 0.3),
            (ps("ZXI"), 0.1),
        ];
        let obs = [ps("ZZI"), ps("XYI"), ps("IYX"), ps("ZIZ")];
        let got = dense_product_formula_expectation(3, &gates, &obs, &[4]).unwrap();
        let d = 8;
        let id = DMatrix::<Complex64>::identity(d, d);
        let mut a = id.clone();
        for (p, theta) in &gates {
            let e = &id * Complex64::from((theta / 2.0).cosh())
                - pauli_dense_matrix(p) * Complex64::from((theta / 2.0).sinh());
            a = &e * a * &e;
        }
        let tr = a.trace().re;
        for (o, p) in obs.iter().enumerate() {
            let want = (pauli_dense_matrix(p) * &a).trace().re / tr;
            assert!((got[0].expectations[o] - want).abs() < 1e-14, "{p}");
        }
        assert!((got[0].log_trace - tr.ln()).abs() < 1e-14);
    }

    #[test]
    fn thermal_matches_full_matrix_exponential() {
        let h = vec![(ps("XXI"), 1.0), (ps("IYY"), -0.5), (ps("ZIZ"), 0.7), (ps("XIY"), 0.3)];
        let obs = [ps("ZIZ"), ps("XXI"), ps("YZX")];
        let beta = 0.8;
        let got = dense_thermal_expectation(3, &h, 0.0, &obs, &[beta]).unwrap();
        let mut hm = DMatrix::<Complex64>::zeros(8, 8);
        for (p, l) in &h {
            hm += pauli_dense_matrix(p) * Complex64::from(*l);
        }
        let eig = SymmetricEigen::new(hm);
        let mut rho = DMatrix::<Complex64>::zeros(8, 8);
        for k in 0..8 {
            let v = eig.eigenvectors.column(k);
            rho += v * v.adjoint() * Complex64::from((-beta * eig.eigenvalues[k]).exp());
        }
        let z = rho.trace().re;
        for (o, p) in obs.iter().enumerate() {
            let want = (pauli_dense_matrix(p) * &rho).trace().re / z;
            assert!((got[0].expectations[o] - want).abs() < 1e-12, "{p}");
        }
        assert!((got[0].log_partition - z.ln()).abs() < 1e-12);
    }

    #[test]
    fn sectors_follow_conserved_number() {
        // XX + YY hopping conserves the number of ones; the terms alone do not
        let h = vec![(ps("XXI"), 0.5), (ps("YYI"), 0.5), (ps("IXX"), 0.5), (ps("IYY"), 0.5), (ps("ZII"), 0.3)];
        let ops: Vec<_> = h.iter().map(|(p, l)| {
            let (x, z, ph) = action(p);
            (x, z, ph, *l)
        }).collect();
        let s = invariant_sectors(3, &ops).unwrap();
        let mut dims: Vec<usize> = s.members.iter().map(Vec::len).collect();
        dims.sort();
        assert_eq!(dims, vec![1, 1, 3, 3]);

        let obs = [ps("ZIZ"), ps("XXI"), ps("XYI"), ps("XII")];
        let beta = 0.6;
        let got = dense_thermal_expectation(3, &h, 0.0, &obs, &[beta]).unwrap();
        let mut hm = DMatrix::<Complex64>::zeros(8, 8);
        for (p, l) in &h {
            hm += pauli_dense_matrix(p) * Complex64::from(*l);
        }
        let eig = SymmetricEigen::new(hm);
        let mut rho = DMatrix::<Complex64>::zeros(8, 8);
        for k in 0..8 {
            let v = eig.eigenvectors.column(k);
            rho += v * v.adjoint() * Complex64::from((-beta * eig.eigenvalues[k]).exp());
        }
        let z = rho.trace().re;
        for (o, p) in obs.iter().enumerate() {
            let want = (pauli_dense_matrix(p) * &rho).trace().re / z;
            assert!((got[0].expectations[o] - want).abs() < 1e-12, "{p}");
        }
    }

    #[test]
    fn oracle_errors() {
        assert!(dense_product_formula_expectation(2, &[(ps("ZZ"), 0.1)], &[ps("Z")], &[1]).is_err());
        assert!(dense_product_formula_expectation(1, &[(ps("Z"), 0.1)], &[ps("Z")], &[2]).is_err());
        assert!(dense_thermal_expectation(1, &[(ps("Z"), 1.0)], 0.0, &[ps("Z")], &[-1.0]).is_err());
    }
}
