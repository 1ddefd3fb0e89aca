//! Empirical backflow: how often one sampled two-local gate that commutes with
//! a reference string lowers its weight through the sinh branch.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::fmt17;
use crate::pauli::{Pauli, PauliString};
use crate::propagation::{stream_rng, HamiltonianTerm};

const NON_IDENTITY: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

/// Where the `w` non-identity sites of the reference string sit on the chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// A centred block of adjacent sites.
    #[default]
    Contiguous,
    /// Sites spread as far apart as the chain allows, ends included.
    Dispersed,
}

/// Distribution of the single gate applied to the reference string.
#[derive(Clone, Debug, PartialEq)]
pub enum GateEnsemble {
    /// Every weight-2 Pauli on every pair of qubits, equally likely.
    UniformAllToAll,
    /// Every weight-2 Pauli on every open-chain edge, equally likely.
    UniformNearestNeighbor,
    /// qDRIFT sampling from a Hamiltonian, probability `|λ|/Λ`.
    Hamiltonian(Vec<HamiltonianTerm<PauliString>>),
}

/// Reference string of weight `w` with X, Y, Z cycling over its support.
pub fn reference_string(n: usize, w: usize, placement: Placement) -> Result<PauliString> {
    if w > n {
        return Err(Error::Domain(format!("weight {w} exceeds {n} qubits")));
    }
    let sites: Vec<usize> = match placement {
        Placement::Contiguous => {
            let start = (n - w) / 2;
            (start..start + w).collect()
        }
        Placement::Dispersed if w <= 1 => (0..w).map(|_| (n - 1) / 2).collect(),
        Placement::Dispersed => (0..w).map(|k| (k * (n - 1) + (w - 1) / 2) / (w - 1)).collect(),
    };
    let ops: Vec<(usize, Pauli)> =
        sites.iter().enumerate().map(|(k, &s)| (s, NON_IDENTITY[k % 3])).collect();
    PauliString::from_sites(n, &ops)
}

fn ensemble_gates(n: usize, ensemble: &GateEnsemble) -> Result<Vec<(PauliString, f64)>> {
    let two_site = |edges: Vec<(usize, usize)>| -> Result<Vec<(PauliString, f64)>> {
        let mut out = Vec::with_capacity(edges.len() * 9);
        for (i, j) in edges {
            for a in NON_IDENTITY {
                for b in NON_IDENTITY {
                    out.push((PauliString::from_sites(n, &[(i, a), (j, b)])?, 1.0));
                }
            }
        }
        Ok(out)
    };
    let gates = match ensemble {
        GateEnsemble::UniformAllToAll => {
            two_site((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect())?
        }
        GateEnsemble::UniformNearestNeighbor => two_site((1..n).map(|i| (i - 1, i)).collect())?,
        GateEnsemble::Hamiltonian(terms) => {
            let mut out = Vec::with_capacity(terms.len());
            for t in terms {
                if t.element.n_qubits() != n {
                    return Err(Error::SizeMismatch { left: t.element.n_qubits(), right: n });
                }
                out.push((t.element, t.coefficient.abs()));
            }
            out
        }
    };
    if gates.is_empty() {
        return Err(Error::Domain(format!("ensemble has no gates on {n} qubits")));
    }
    Ok(gates)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BackflowEstimate {
    pub estimate: f64,
    /// Binomial standard error; zero in exhaustive mode.
    pub stderr: f64,
    /// Commuting draws (Monte Carlo) or commuting probability mass (exhaustive).
    pub commuting: f64,
    pub decaying: f64,
}

/// `None` when the gate anticommutes; otherwise whether the weight drops.
fn classify(reference: &PauliString, gate: &PauliString) -> Option<bool> {
    if !reference.commutes_unchecked(gate) {
        return None;
    }
    let (product, _) = gate.mul_unchecked(reference);
    Some(product.weight() < reference.weight())
}

/// Exact `Pr(decay | commute)` by enumerating every gate of the ensemble.
pub fn exhaustive_backflow(reference: &PauliString, ensemble: &GateEnsemble) -> Result<BackflowEstimate> {
    let gates = ensemble_gates(reference.n_qubits(), ensemble)?;
    let (mut commuting, mut decaying) = (0.0, 0.0);
    for (g, weight) in &gates {
        if let Some(decay) = classify(reference, g) {
            commuting += weight;
            if decay {
                decaying += weight;
            }
        }
    }
    if commuting == 0.0 {
        return Err(Error::Domain("no gate in the ensemble commutes with the reference".into()));
    }
    Ok(BackflowEstimate { estimate: decaying / commuting, stderr: 0.0, commuting, decaying })
}

/// Monte-Carlo estimate of `Pr(decay | commute)` from `samples` gate draws.
pub fn empirical_backflow(
    reference: &PauliString,
    ensemble: &GateEnsemble,
    samples: usize,
    seed: u64,
    stream: u64,
) -> Result<BackflowEstimate> {
    let gates = ensemble_gates(reference.n_qubits(), ensemble)?;
    let weights: Vec<f64> = gates.iter().map(|g| g.1).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = stream_rng(seed, stream);
    let (mut commuting, mut decaying) = (0u64, 0u64);
    for _ in 0..samples {
        let g = &gates[dist.sample(&mut rng)].0;
        if let Some(decay) = classify(reference, g) {
            commuting += 1;
            decaying += decay as u64;
        }
    }
    if commuting == 0 {
        return Err(Error::Domain(format!("zero commuting events in {samples} samples")));
    }
    let c = commuting as f64;
    let p = decaying as f64 / c;
    Ok(BackflowEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / c).sqrt(),
        commuting: c,
        decaying: decaying as f64,
    })
}

/// One row of a backflow scan. `analytic` is `None` outside the formula's domain.
#[derive(Clone, Debug, PartialEq)]
pub struct BackflowRow {
    pub w: usize,
    pub n: usize,
    pub analytic: Option<f64>,
    pub empirical: f64,
    pub stderr: f64,
}

pub fn write_backflow_csv<W: Write>(rows: &[BackflowRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["w", "n", "analytic", "empirical", "stderr"])?;
    for r in rows {
        wtr.write_record([
            r.w.to_string(),
            r.n.to_string(),
            r.analytic.map(fmt17).unwrap_or_default(),
            fmt17(r.empirical),
            fmt17(r.stderr),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
