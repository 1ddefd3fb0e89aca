//! Imaginary-time gates, product-formula schedules and the thermal driver.
//!
//! A gate with generator `G` and angle `θ` acts on the state by the
//! symmetric sandwich `e^{-θG/2} (·) e^{-θG/2}`. Terms that anticommute with
//! `G` pass through; a commuting term `Q` becomes `cosh θ · Q - sinh θ · GQ`.
//! Starting from the identity, this builds `e^{-βH/2} I e^{-βH/2}` gate by gate.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisElement;
use crate::error::{Error, Result};
use crate::operator_map::{OperatorMap, Term, TermStats, TruncationPolicy};

/// `λ · element`, one summand of a Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianTerm<B> {
    pub element: B,
    pub coefficient: f64,
}

impl<B: BasisElement> HamiltonianTerm<B> {
    pub fn new(element: B, coefficient: f64) -> Result<Self> {
        if !coefficient.is_finite() {
            return Err(Error::NonFinite("Hamiltonian coefficient"));
        }
        if coefficient == 0.0 {
            return Err(Error::Model(format!("zero coefficient on {element}")));
        }
        if element.is_identity() {
            return Err(Error::IdentityGenerator);
        }
        Ok(Self {
            element,
            coefficient,
        })
    }
}

/// `Λ = Σ |λ_m|`.
pub fn one_norm<B>(terms: &[HamiltonianTerm<B>]) -> f64 {
    terms.iter().map(|t| t.coefficient.abs()).sum()
}

/// Deterministic RNG for stream `stream` of the master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleSource {
    Trotter,
    Qdrift,
}

/// Intra-layer ordering of a Trotter schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TermOrder {
    /// Construction order of the term list.
    #[default]
    Fixed,
    /// Each layer independently permutes the terms at `positions` among
    /// themselves (all terms when `positions` is `None`).
    ShuffleEachLayer {
        seed: u64,
        #[serde(default)]
        positions: Option<Vec<usize>>,
    },
}

/// One imaginary-time gate: term index into the Hamiltonian and angle `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub term: usize,
    pub angle: f64,
}

/// Ordered imaginary-time gates together with the inverse temperature each
/// prefix represents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSchedule {
    pub source: ScheduleSource,
    pub seed: Option<u64>,
    pub tau: f64,
    pub beta: f64,
    pub gates: Vec<Gate>,
    /// `beta_after[g]`: inverse temperature reached once gates `0..=g` ran.
    pub beta_after: Vec<f64>,
}

impl GateSchedule {
    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Inverse temperature after the first `count` gates.
    pub fn beta_at(&self, count: usize) -> f64 {
        if count == 0 {
            0.0
        } else {
            self.beta_after[count - 1]
        }
    }

    /// Gate counts at which the represented β changes (plus 0). Trotter
    /// schedules only advance at layer ends.
    pub fn boundaries(&self) -> Vec<usize> {
        let mut out = vec![0];
        let mut last = 0.0;
        for (g, &b) in self.beta_after.iter().enumerate() {
            if b > last {
                out.push(g + 1);
                last = b;
            }
        }
        out
    }

    /// Snaps each requested β to the nearest boundary gate count.
    pub fn snap_checkpoints(&self, betas: &[f64]) -> Vec<usize> {
        let bounds = self.boundaries();
        betas
            .iter()
            .map(|&beta| {
                *bounds
                    .iter()
                    .min_by(|&&a, &&b| {
                        (self.beta_at(a) - beta)
                            .abs()
                            .total_cmp(&(self.beta_at(b) - beta).abs())
                    })
                    .expect("boundaries always contain 0")
            })
            .collect()
    }

    /// Term indices in gate order.
    pub fn indices(&self) -> Vec<usize> {
        self.gates.iter().map(|g| g.term).collect()
    }

    pub fn validate_for<B>(&self, terms: &[HamiltonianTerm<B>]) -> Result<()> {
        for (i, g) in self.gates.iter().enumerate() {
            if g.term >= terms.len() {
                return Err(Error::Schedule(format!(
                    "gate {i} references term {} of {}",
                    g.term,
                    terms.len()
                )));
            }
            if !g.angle.is_finite() {
                return Err(Error::Schedule(format!("gate {i} has non-finite angle")));
            }
        }
        if self.beta_after.len() != self.gates.len() {
            return Err(Error::Schedule("beta_after length mismatch".into()));
        }
        Ok(())
    }
}

fn check_beta_tau(beta: f64, tau: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Schedule(format!("beta must be finite and >= 0, got {beta}")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Schedule(format!("tau must be finite and > 0, got {tau}")));
    }
    Ok(())
}

/// First-order Trotter: `L = β/τ` rounds over all terms, angle `τ·λ_m`.
pub fn build_trotter_schedule<B>(
    terms: &[HamiltonianTerm<B>],
    beta: f64,
    tau: f64,
    order: &TermOrder,
) -> Result<GateSchedule> {
    check_beta_tau(beta, tau)?;
    if terms.is_empty() {
        return Err(Error::Schedule("empty Hamiltonian".into()));
    }
    let ratio = beta / tau;
    let layers = ratio.round();
    if (ratio - layers).abs() > 1e-9 {
        return Err(Error::Schedule(format!(
            "beta/tau = {ratio} is not an integer number of layers"
        )));
    }
    let layers = layers as usize;
    let m = terms.len();
    let mut base: Vec<usize> = (0..m).collect();
    let (mut rng, positions) = match order {
        TermOrder::Fixed => (None, Vec::new()),
        TermOrder::ShuffleEachLayer { seed, positions } => {
            let pos = positions.clone().unwrap_or_else(|| (0..m).collect());
            if let Some(&bad) = pos.iter().find(|&&p| p >= m) {
                return Err(Error::Schedule(format!("shuffle position {bad} out of range")));
            }
            (Some(stream_rng(*seed, 0)), pos)
        }
    };
    let mut gates = Vec::with_capacity(layers * m);
    let mut beta_after = Vec::with_capacity(layers * m);
    for layer in 0..layers {
        if let Some(rng) = rng.as_mut() {
            let mut vals: Vec<usize> = positions.iter().map(|&p| base[p]).collect();
            vals.shuffle(rng);
            for (&p, v) in positions.iter().zip(vals) {
                base[p] = v;
            }
        }
        for (k, &idx) in base.iter().enumerate() {
            gates.push(Gate {
                term: idx,
                angle: tau * terms[idx].coefficient,
            });
            beta_after.push(if k + 1 == m {
                tau * (layer + 1) as f64
            } else {
                tau * layer as f64
            });
        }
    }
    Ok(GateSchedule {
        source: ScheduleSource::Trotter,
        seed: match order {
            TermOrder::Fixed => None,
            TermOrder::ShuffleEachLayer { seed, .. } => Some(*seed),
        },
        tau,
        beta,
        gates,
        beta_after,
    })
}

/// qDRIFT: `round(Λβ/τ)` gates, index `m` drawn with probability `|λ_m|/Λ`,
/// angle `τ·sign(λ_m)`. Each gate advances β by `τ/Λ`.
pub fn build_qdrift_schedule<B>(
    terms: &[HamiltonianTerm<B>],
    beta: f64,
    tau: f64,
    seed: u64,
    stream: u64,
) -> Result<GateSchedule> {
    check_beta_tau(beta, tau)?;
    if terms.is_empty() {
        return Err(Error::Schedule("empty Hamiltonian".into()));
    }
    let lambda = one_norm(terms);
    let count = (lambda * beta / tau).round() as usize;
    let weights: Vec<f64> = terms.iter().map(|t| t.coefficient.abs()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Schedule(e.to_string()))?;
    let mut rng = stream_rng(seed, stream);
    let step = tau / lambda;
    let mut gates = Vec::with_capacity(count);
    let mut beta_after = Vec::with_capacity(count);
    for g in 0..count {
        let idx = dist.sample(&mut rng);
        gates.push(Gate {
            term: idx,
            angle: tau * terms[idx].coefficient.signum(),
        });
        beta_after.push(step * (g + 1) as f64);
    }
    Ok(GateSchedule {
        source: ScheduleSource::Qdrift,
        seed: Some(seed),
        tau,
        beta,
        gates,
        beta_after,
    })
}

/// Applies `e^{-θG/2} (·) e^{-θG/2}` to the state in place.
///
/// Commuting terms come in pairs `{Q, GQ}` that mix only with each other,
/// so every pair is updated once and no second map is built.
pub fn apply_imaginary_gate<B: BasisElement>(
    state: &mut OperatorMap<B>,
    generator: &B,
    angle: f64,
) -> Result<()> {
    if generator.size() != state.size() {
        return Err(Error::SizeMismatch {
            left: state.size(),
            right: generator.size(),
        });
    }
    if generator.is_identity() {
        return Err(Error::IdentityGenerator);
    }
    if !angle.is_finite() {
        return Err(Error::NonFinite("gate angle"));
    }
    if angle == 0.0 {
        return Ok(());
    }
    let (c, s) = (angle.cosh(), angle.sinh());
    let (identity, terms) = state.parts_mut();

    let commuting: Vec<B> = terms
        .keys()
        .filter(|q| generator.commutes_with(q) && *q != generator)
        .copied()
        .collect();

    // The identity pairs with the generator itself: G·I = G.
    let a = *identity;
    match terms.get_mut(generator) {
        Some(t) => {
            let b = t.coeff;
            t.coeff = c * b - s * a;
            t.sinh_count = t.sinh_count.min(1);
            *identity = c * a - s * b;
        }
        None => {
            terms.insert(
                *generator,
                Term {
                    coeff: -s * a,
                    sinh_count: 1,
                },
            );
            *identity = c * a;
        }
    }

    for q in commuting {
        let (r, phase) = generator.product(&q);
        let sign = phase
            .real_sign()
            .expect("product of commuting basis elements has a real phase");
        let tq = terms[&q];
        match terms.get(&r).copied() {
            Some(tr) => {
                if r < q {
                    continue;
                }
                terms.insert(
                    q,
                    Term {
                        coeff: c * tq.coeff - s * sign * tr.coeff,
                        sinh_count: tq.sinh_count.min(tr.sinh_count.saturating_add(1)),
                    },
                );
                terms.insert(
                    r,
                    Term {
                        coeff: c * tr.coeff - s * sign * tq.coeff,
                        sinh_count: tr.sinh_count.min(tq.sinh_count.saturating_add(1)),
                    },
                );
            }
            None => {
                terms.insert(
                    q,
                    Term {
                        coeff: c * tq.coeff,
                        sinh_count: tq.sinh_count,
                    },
                );
                terms.insert(
                    r,
                    Term {
                        coeff: -s * sign * tq.coeff,
                        sinh_count: tq.sinh_count.saturating_add(1),
                    },
                );
            }
        }
    }
    Ok(())
}

/// Knobs for [`propagate_thermal`] beyond the truncation policy.
#[derive(Clone, Debug, Default)]
pub struct PropagationOptions {
    /// Abort with [`Error::TermLimit`] when the state grows past this many terms.
    pub max_terms: Option<usize>,
}

/// What the driver reports at each checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckpointRecord {
    /// Requested inverse temperature.
    pub requested_beta: f64,
    /// β of the gate boundary actually reached.
    pub beta: f64,
    pub gates_applied: usize,
    pub stats: TermStats,
    pub accumulated_log_factor: f64,
    pub removed_total: usize,
}

/// Evolves `{I: 1}` through `schedule`, normalizing and truncating after
/// every gate. `observe` is called with each checkpoint record and the state
/// at that point; checkpoints are reported in increasing gate order.
pub fn propagate_thermal<B, F>(
    size: usize,
    terms: &[HamiltonianTerm<B>],
    schedule: &GateSchedule,
    policy: &TruncationPolicy,
    checkpoints: &[f64],
    options: &PropagationOptions,
    mut observe: F,
) -> Result<Vec<CheckpointRecord>>
where
    B: BasisElement,
    F: FnMut(&CheckpointRecord, &OperatorMap<B>),
{
    policy.validate()?;
    schedule.validate_for(terms)?;
    for t in terms {
        if t.element.size() != size {
            return Err(Error::SizeMismatch {
                left: size,
                right: t.element.size(),
            });
        }
    }
    let snapped = schedule.snap_checkpoints(checkpoints);
    let mut order: Vec<usize> = (0..checkpoints.len()).collect();
    order.sort_by_key(|&i| (snapped[i], i));

    let mut state = OperatorMap::<B>::identity(size);
    let mut removed_total = 0usize;
    let mut records = Vec::with_capacity(checkpoints.len());
    let mut next = 0usize;

    let mut emit = |state: &OperatorMap<B>, applied: usize, removed: usize, next: &mut usize| {
        while *next < order.len() && snapped[order[*next]] == applied {
            let i = order[*next];
            let rec = CheckpointRecord {
                requested_beta: checkpoints[i],
                beta: schedule.beta_at(applied),
                gates_applied: applied,
                stats: state.term_stats(),
                accumulated_log_factor: state.accumulated_log_factor(),
                removed_total: removed,
            };
            observe(&rec, state);
            records.push(rec);
            *next += 1;
        }
    };

    emit(&state, 0, 0, &mut next);
    for (g, gate) in schedule.gates.iter().enumerate() {
        if next >= order.len() {
            break;
        }
        apply_imaginary_gate(&mut state, &terms[gate.term].element, gate.angle)?;
        removed_total += state.normalize_and_truncate(policy)?;
        if let Some(cap) = options.max_terms {
            if state.len() > cap {
                return Err(Error::TermLimit {
                    count: state.len(),
                    cap,
                });
            }
        }
        emit(&state, g + 1, removed_total, &mut next);
    }
    Ok(records)
}

/// Runs the full schedule and returns the final state.
pub fn propagate_to_end<B: BasisElement>(
    size: usize,
    terms: &[HamiltonianTerm<B>],
    schedule: &GateSchedule,
    policy: &TruncationPolicy,
) -> Result<OperatorMap<B>> {
    policy.validate()?;
    schedule.validate_for(terms)?;
    let mut state = OperatorMap::<B>::identity(size);
    for gate in &schedule.gates {
        apply_imaginary_gate(&mut state, &terms[gate.term].element, gate.angle)?;
        state.normalize_and_truncate(policy)?;
    }
    Ok(state)
}
