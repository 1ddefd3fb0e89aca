//! Closed-form truncation error bounds and backflow probabilities.
//!
//! These are evaluators only. Where a formula has a domain restriction the
//! functions return [`Error::Domain`] instead of clamping.

use serde::{Deserialize, Serialize};

use crate::basis::BasisElement;
use crate::error::{Error, Result};
use crate::propagation::HamiltonianTerm;

/// Inputs shared by the weight and Trotter truncation bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundInputs {
    pub beta_lambda: f64,
    pub k: u32,
    /// Minimum number of weight-reducing updates back to the observable.
    pub m: u32,
    pub pbf: f64,
    pub obs_one_norm: f64,
    pub beta: f64,
    /// Number of Hamiltonian terms.
    #[serde(rename = "M")]
    pub n_terms: u32,
    pub degree: u32,
    pub term_weight: u32,
    pub c1: f64,
    pub c2: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        BoundInputs {
            beta_lambda: 0.0,
            k: 1,
            m: 1,
            pbf: 0.0,
            obs_one_norm: 1.0,
            beta: 0.0,
            n_terms: 0,
            degree: 0,
            term_weight: 2,
            c1: 1.0,
            c2: 1.0,
        }
    }
}

/// Small-angle (sinh-count) truncation bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallAngleBound {
    /// Error of the normalized representation before dividing by the partition function.
    pub epsilon: f64,
    /// `2ε/(1−ε)`, or `f64::INFINITY` once `ε ≥ 1`.
    pub normalized: f64,
}

pub fn thm1_small_angle_bound(beta_lambda: f64, k: u32) -> Result<SmallAngleBound> {
    if k == 0 {
        return Err(Error::Domain("small-angle bound needs k >= 1".into()));
    }
    if !(beta_lambda >= 0.0) || !beta_lambda.is_finite() {
        return Err(Error::Domain(format!("beta*Lambda must be finite and >= 0, got {beta_lambda}")));
    }
    let kf = k as f64;
    let epsilon = if beta_lambda == 0.0 {
        0.0
    } else {
        // log space keeps large k from underflowing before the product
        let ln = beta_lambda / 2.0 + kf * (std::f64::consts::E * beta_lambda / (2.0 * kf)).ln();
        ln.exp()
    };
    let normalized = if epsilon < 1.0 { 2.0 * epsilon / (1.0 - epsilon) } else { f64::INFINITY };
    Ok(SmallAngleBound { epsilon, normalized })
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

fn check_weight(w: u32, n: u32) -> Result<()> {
    if w > n {
        return Err(Error::Domain(format!("weight {w} exceeds system size {n}")));
    }
    Ok(())
}

/// All-to-all backflow probability in the form stated by the appendix lemma,
/// `C(w,2) / (9 C(n,2) - 4w(3n-2w-1))`.
///
/// The lemma's intermediate anticommutation count sums to `2w(3n-2w-1)`, so
/// this expression overestimates the exact conditional probability; see
/// [`pbf_all_to_all_exact`]. It is kept because it is the published bound.
pub fn pbf_all_to_all(w: u32, n: u32) -> Result<f64> {
    pbf_all_to_all_max_divergence(w, n, 0.0)
}

/// [`pbf_all_to_all`] for a sampling distribution within max-divergence `alpha`
/// of uniform: `e^α C(w,2) / (9 C(n,2) - e^α 4w(3n-2w-1))`.
pub fn pbf_all_to_all_max_divergence(w: u32, n: u32, alpha: f64) -> Result<f64> {
    all_to_all_ratio(w, n, alpha, 4.0)
}

/// Exact `Pr(decay | commute)` for one uniformly drawn all-to-all weight-2 gate.
pub fn pbf_all_to_all_exact(w: u32, n: u32) -> Result<f64> {
    all_to_all_ratio(w, n, 0.0, 2.0)
}

fn all_to_all_ratio(w: u32, n: u32, alpha: f64, anti_factor: f64) -> Result<f64> {
    check_weight(w, n)?;
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Domain(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let scale = alpha.exp();
    let (wf, nf) = (w as f64, n as f64);
    let den = 9.0 * choose2(n as u64) - scale * anti_factor * wf * (3.0 * nf - 2.0 * wf - 1.0);
    if den <= 0.0 {
        return Err(Error::Domain(format!(
            "all-to-all backflow denominator {den} <= 0 at w={w}, n={n}"
        )));
    }
    Ok(scale * choose2(w as u64) / den)
}

/// Nearest-neighbour chain bound `(w-1) / (9M - 12w)` with `M` edges.
pub fn pbf_nn(w: u32, m_edges: u32) -> Result<f64> {
    pbf_nn_max_divergence(w, m_edges, 0.0)
}

/// `e^α (w-1) / (9M - e^α 12w)`.
pub fn pbf_nn_max_divergence(w: u32, m_edges: u32, alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Domain(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let scale = alpha.exp();
    let den = 9.0 * m_edges as f64 - scale * 12.0 * w as f64;
    if den <= 0.0 {
        return Err(Error::Domain(format!(
            "nearest-neighbour backflow denominator {den} <= 0 at w={w}, M={m_edges}"
        )));
    }
    Ok(scale * w.saturating_sub(1) as f64 / den)
}

/// Weight-truncation bound under qDRIFT: `‖o‖₁ e^{βΛ/2} (e βΛ pbf / 2m)^m`.
pub fn thm2_weight_bound(inputs: &BoundInputs) -> Result<f64> {
    let BoundInputs { beta_lambda, m, pbf, obs_one_norm, .. } = *inputs;
    if m == 0 {
        return Err(Error::Domain("weight bound needs m >= 1".into()));
    }
    if !(0.0..=1.0).contains(&pbf) {
        return Err(Error::Domain(format!("pbf must lie in [0, 1], got {pbf}")));
    }
    let base = std::f64::consts::E * beta_lambda * pbf / 2.0;
    let mf = m as f64;
    if mf <= base {
        return Err(Error::Domain(format!(
            "weight bound requires m > e*beta*Lambda*pbf/2 = {base}, got m={m}"
        )));
    }
    Ok(obs_one_norm * (beta_lambda / 2.0).exp() * (base / mf).powi(m as i32))
}

/// Trotter weight-truncation bound `‖o‖₁ exp(c1 β M) (c2 β ℓ w)^{k/w}`.
///
/// The constants are not fixed by the analysis; callers choose them.
pub fn thm3_trotter_bound(inputs: &BoundInputs) -> f64 {
    let b = inputs;
    let exponent = b.k as f64 / b.term_weight.max(1) as f64;
    let base = b.c2 * b.beta * b.degree as f64 * b.term_weight as f64;
    b.obs_one_norm * (b.c1 * b.beta * b.n_terms as f64).exp() * base.powf(exponent)
}

/// `Σ_{m<m'} ‖[h_m, h_m']‖`, which for basis-element terms is `2|λλ'|` per
/// anticommuting pair.
pub fn trotter_commutator_sum<B: BasisElement>(terms: &[HamiltonianTerm<B>]) -> f64 {
    let mut total = 0.0;
    for (i, a) in terms.iter().enumerate() {
        for b in &terms[i + 1..] {
            if !a.element.commutes_with(&b.element) {
                total += 2.0 * (a.coefficient * b.coefficient).abs();
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::PauliString;
    use approx::assert_relative_eq;

    #[test]
    fn small_angle_examples() {
        let b = thm1_small_angle_bound(1.0, 5).unwrap();
        assert_relative_eq!(b.epsilon, 0.5f64.exp() * (std::f64::consts::E / 10.0).powi(5), max_relative = 1e-12);
        assert_relative_eq!(b.epsilon, 2.449e-3, max_relative = 1e-3);
        assert_relative_eq!(b.normalized, 2.0 * b.epsilon / (1.0 - b.epsilon));
        assert_eq!(thm1_small_angle_bound(0.0, 3).unwrap().epsilon, 0.0);
        assert!(thm1_small_angle_bound(1.0, 0).is_err());
        let big = thm1_small_angle_bound(10.0, 1).unwrap();
        assert!(big.epsilon > 1.0 && big.normalized.is_infinite());
    }

    #[test]
    fn small_angle_decreases_past_threshold() {
        let bl = 3.0;
        let start = (std::f64::consts::E * bl / 2.0).ceil() as u32;
        let mut prev = f64::INFINITY;
        for k in start..start + 20 {
            let e = thm1_small_angle_bound(bl, k).unwrap().epsilon;
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn all_to_all_examples() {
        assert_relative_eq!(pbf_all_to_all(4, 10).unwrap(), 6.0 / 69.0, max_relative = 1e-14);
        assert_eq!(pbf_all_to_all(0, 10).unwrap(), 0.0);
        assert_eq!(pbf_all_to_all(1, 10).unwrap(), 0.0);
        assert!(matches!(pbf_all_to_all(2, 4), Err(Error::Domain(_))));
        assert_relative_eq!(pbf_all_to_all_exact(4, 10).unwrap(), 6.0 / 237.0, max_relative = 1e-14);
    }

    #[test]
    fn divergence_knob_matches_random_corollary() {
        // e^α = 4 gives 4 C(w,2) / (9 C(n,2) - 16 w(3n-2w-1))
        let (w, n) = (2u32, 40u32);
        let expect = 4.0 * 1.0 / (9.0 * 780.0 - 16.0 * 2.0 * (120.0 - 4.0 - 1.0));
        let got = pbf_all_to_all_max_divergence(w, n, 4f64.ln()).unwrap();
        assert_relative_eq!(got, expect, max_relative = 1e-12);
        let nn = pbf_nn_max_divergence(3, 30, 4f64.ln()).unwrap();
        assert_relative_eq!(nn, 4.0 * 2.0 / (270.0 - 144.0), max_relative = 1e-12);
    }

    #[test]
    fn nn_examples() {
        assert_eq!(pbf_nn(1, 9).unwrap(), 0.0);
        assert_relative_eq!(pbf_nn(3, 9).unwrap(), 2.0 / 45.0, max_relative = 1e-14);
        assert!(pbf_nn(7, 9).is_err());
    }

    #[test]
    fn weight_bound_examples() {
        let mut inp = BoundInputs { beta_lambda: 1.0, pbf: 0.1, m: 3, ..Default::default() };
        let v = thm2_weight_bound(&inp).unwrap();
        assert_relative_eq!(v, 0.5f64.exp() * (std::f64::consts::E * 0.1 / 6.0).powi(3));
        assert_relative_eq!(v, 1.5331e-4, max_relative = 1e-3);
        inp.pbf = 0.0;
        assert_eq!(thm2_weight_bound(&inp).unwrap(), 0.0);
        let bad = BoundInputs { beta_lambda: 10.0, pbf: 1.0, m: 3, ..Default::default() };
        assert!(thm2_weight_bound(&bad).is_err());
    }

    #[test]
    fn weight_bound_tightens_with_m() {
        let mut prev = f64::INFINITY;
        for m in 2..12 {
            let inp = BoundInputs { beta_lambda: 1.0, pbf: 0.5, m, ..Default::default() };
            let v = thm2_weight_bound(&inp).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn trotter_bound_examples() {
        let inp = BoundInputs {
            beta: 0.01,
            n_terms: 30,
            degree: 4,
            term_weight: 2,
            k: 6,
            ..Default::default()
        };
        let v = thm3_trotter_bound(&inp);
        assert_relative_eq!(v, 0.3f64.exp() * 0.08f64.powi(3), max_relative = 1e-12);
        assert_relative_eq!(v, 6.911e-4, max_relative = 1e-3);
        let half = thm3_trotter_bound(&BoundInputs { c2: 0.5, ..inp.clone() });
        assert_relative_eq!(half / v, 2f64.powi(-3), max_relative = 1e-12);
        assert_eq!(thm3_trotter_bound(&BoundInputs { beta: 0.0, ..inp }), 0.0);
    }

    #[test]
    fn bounds_monotone_in_beta() {
        let mut prev = (0.0, 0.0, 0.0);
        for i in 1..20 {
            let bl = 0.1 * i as f64;
            let t1 = thm1_small_angle_bound(bl, 8).unwrap().epsilon;
            let t2 = thm2_weight_bound(&BoundInputs { beta_lambda: bl, pbf: 0.2, m: 4, ..Default::default() })
                .unwrap();
            let t3 = thm3_trotter_bound(&BoundInputs {
                beta: bl / 10.0,
                n_terms: 10,
                degree: 3,
                k: 4,
                ..Default::default()
            });
            assert!(t1 > prev.0 && t2 > prev.1 && t3 > prev.2);
            prev = (t1, t2, t3);
        }
    }

    #[test]
    fn commutator_sum_examples() {
        let p = |s: &str| s.parse::<PauliString>().unwrap();
        let xz = vec![
            HamiltonianTerm::new(p("X"), 1.0).unwrap(),
            HamiltonianTerm::new(p("Z"), 1.0).unwrap(),
        ];
        assert_eq!(trotter_commutator_sum(&xz), 2.0);
        let comm = vec![
            HamiltonianTerm::new(p("XX"), 1.0).unwrap(),
            HamiltonianTerm::new(p("ZZ"), 0.7).unwrap(),
        ];
        assert_eq!(trotter_commutator_sum(&comm), 0.0);
        let scaled: Vec<_> = xz
            .iter()
            .map(|t| HamiltonianTerm::new(t.element, 3.0 * t.coefficient).unwrap())
            .collect();
        assert_relative_eq!(trotter_commutator_sum(&scaled), 9.0 * 2.0);
    }
}
