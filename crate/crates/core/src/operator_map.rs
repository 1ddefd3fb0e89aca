//! Sparse real-coefficient expansion of the evolving (unnormalized) state.
//!
//! The identity coefficient is kept outside the term map. It is the
//! normalization anchor and is never truncated.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisElement, BasisKind};
use crate::error::{Error, Result};

/// Coefficient plus the smallest number of sinh factors over the paths
/// that were merged into it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub sinh_count: u32,
}

/// Which terms a truncation pass discards. The coefficient threshold is
/// relative to the identity coefficient, i.e. applied after normalization.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationPolicy {
    #[serde(default)]
    pub coeff_threshold: f64,
    #[serde(default)]
    pub max_weight: Option<u32>,
    #[serde(default)]
    pub max_sinh_count: Option<u32>,
}

impl TruncationPolicy {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn coefficient(threshold: f64) -> Self {
        Self {
            coeff_threshold: threshold,
            ..Self::default()
        }
    }

    pub fn weight(max_weight: u32) -> Self {
        Self {
            max_weight: Some(max_weight),
            ..Self::default()
        }
    }

    pub fn sinh_count(max: u32) -> Self {
        Self {
            max_sinh_count: Some(max),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coeff_threshold >= 0.0 && self.coeff_threshold < 1.0) {
            return Err(Error::Config {
                path: "truncation.coeff_threshold".into(),
                reason: format!("must lie in [0, 1), got {}", self.coeff_threshold),
            });
        }
        if self.max_weight == Some(0) {
            return Err(Error::Config {
                path: "truncation.max_weight".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.max_sinh_count == Some(0) {
            return Err(Error::Config {
                path: "truncation.max_sinh_count".into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        self.coeff_threshold == 0.0 && self.max_weight.is_none() && self.max_sinh_count.is_none()
    }

    #[inline]
    fn keeps<B: BasisElement>(&self, element: &B, term: &Term) -> bool {
        term.coeff != 0.0
            && term.coeff.abs() >= self.coeff_threshold
            && self.max_weight.is_none_or(|k| element.weight() <= k)
            && self.max_sinh_count.is_none_or(|k| term.sinh_count <= k)
    }
}

/// Summary of a state's size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermStats {
    /// Number of stored terms, identity included.
    pub term_count: usize,
    /// `weight_histogram[w]` counts terms of weight (or length) `w`.
    pub weight_histogram: Vec<usize>,
    pub max_abs_coeff: f64,
}

/// Read access shared by the sparse map and the complete-basis array.
pub trait StateView<B: BasisElement> {
    fn size(&self) -> usize;
    fn identity_coeff(&self) -> f64;
    /// Stored coefficient, 0 when absent.
    fn coefficient(&self, element: &B) -> f64;
    fn accumulated_log_factor(&self) -> f64;
}

impl<B: BasisElement> StateView<B> for OperatorMap<B> {
    fn size(&self) -> usize {
        self.size
    }

    fn identity_coeff(&self) -> f64 {
        self.identity_coeff
    }

    fn coefficient(&self, element: &B) -> f64 {
        OperatorMap::coefficient(self, element)
    }

    fn accumulated_log_factor(&self) -> f64 {
        self.log_factor
    }
}

/// `α_I · I + Σ α_B · B` over a Pauli or Majorana basis.
#[derive(Clone, Debug)]
pub struct OperatorMap<B: BasisElement> {
    size: usize,
    identity_coeff: f64,
    terms: FxHashMap<B, Term>,
    log_factor: f64,
}

impl<B: BasisElement> OperatorMap<B> {
    /// The identity operator `{I: 1}`: the infinite-temperature state.
    pub fn identity(size: usize) -> Self {
        // validates the size
        let _ = B::identity(size);
        Self {
            size,
            identity_coeff: 1.0,
            terms: FxHashMap::default(),
            log_factor: 0.0,
        }
    }

    pub fn basis(&self) -> BasisKind {
        B::KIND
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn identity_coeff(&self) -> f64 {
        self.identity_coeff
    }

    /// Sum of log renormalization factors divided out so far.
    pub fn accumulated_log_factor(&self) -> f64 {
        self.log_factor
    }

    /// Stored terms including the identity.
    pub fn len(&self) -> usize {
        self.terms.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coefficient(&self, element: &B) -> f64 {
        if element.is_identity() {
            self.identity_coeff
        } else {
            self.terms.get(element).map_or(0.0, |t| t.coeff)
        }
    }

    pub fn term(&self, element: &B) -> Option<Term> {
        if element.is_identity() {
            Some(Term {
                coeff: self.identity_coeff,
                sinh_count: 0,
            })
        } else {
            self.terms.get(element).copied()
        }
    }

    /// Non-identity terms in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (&B, &Term)> {
        self.terms.iter()
    }

    fn check_element(&self, element: &B) -> Result<()> {
        if element.size() != self.size {
            return Err(Error::SizeMismatch {
                left: self.size,
                right: element.size(),
            });
        }
        Ok(())
    }

    /// Adds `delta` to the coefficient of `element`. Zeros produced by
    /// cancellation stay until the next truncation pass.
    pub fn merge_add(&mut self, element: B, delta: f64) -> Result<()> {
        self.merge_add_counted(element, delta, 0)
    }

    /// Like [`merge_add`](Self::merge_add) with an explicit sinh count; the
    /// stored count becomes the minimum over merged contributions.
    pub fn merge_add_counted(&mut self, element: B, delta: f64, sinh_count: u32) -> Result<()> {
        if !delta.is_finite() {
            return Err(Error::NonFinite("merge_add delta"));
        }
        self.check_element(&element)?;
        if element.is_identity() {
            self.identity_coeff += delta;
        } else {
            let t = self.terms.entry(element).or_insert(Term {
                coeff: 0.0,
                sinh_count,
            });
            t.coeff += delta;
            t.sinh_count = t.sinh_count.min(sinh_count);
        }
        Ok(())
    }

    fn check_identity(&self) -> Result<f64> {
        let f = self.identity_coeff;
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::Diverged(f));
        }
        Ok(f)
    }

    /// Divides every coefficient by the identity coefficient and records its log.
    pub fn normalize_by_identity(&mut self) -> Result<()> {
        let f = self.check_identity()?;
        let inv = 1.0 / f;
        for t in self.terms.values_mut() {
            t.coeff *= inv;
        }
        self.identity_coeff = 1.0;
        self.log_factor += f.ln();
        Ok(())
    }

    /// Removes terms the policy rejects (and exact zeros). Returns the count removed.
    pub fn apply_truncation(&mut self, policy: &TruncationPolicy) -> usize {
        let before = self.terms.len();
        self.terms.retain(|b, t| policy.keeps(b, t));
        before - self.terms.len()
    }

    /// Normalization followed by truncation, fused into a single sweep.
    pub fn normalize_and_truncate(&mut self, policy: &TruncationPolicy) -> Result<usize> {
        let f = self.check_identity()?;
        let inv = 1.0 / f;
        let before = self.terms.len();
        self.terms.retain(|b, t| {
            t.coeff *= inv;
            policy.keeps(b, t)
        });
        self.identity_coeff = 1.0;
        self.log_factor += f.ln();
        Ok(before - self.terms.len())
    }

    pub fn term_stats(&self) -> TermStats {
        let mut hist = vec![1usize];
        let mut max_abs = self.identity_coeff.abs();
        for (b, t) in &self.terms {
            let w = b.weight() as usize;
            if hist.len() <= w {
                hist.resize(w + 1, 0);
            }
            hist[w] += 1;
            max_abs = max_abs.max(t.coeff.abs());
        }
        TermStats {
            term_count: self.len(),
            weight_histogram: hist,
            max_abs_coeff: max_abs,
        }
    }

    /// Multiplies every coefficient (identity included) by `factor` without
    /// touching the log factor.
    pub fn scale(&mut self, factor: f64) {
        self.identity_coeff *= factor;
        for t in self.terms.values_mut() {
            t.coeff *= factor;
        }
    }

    // Access for the gate kernel, which updates terms pairwise in place.
    pub(crate) fn parts_mut(&mut self) -> (&mut f64, &mut FxHashMap<B, Term>) {
        (&mut self.identity_coeff, &mut self.terms)
    }

    /// Writes the snapshot text format: a header line followed by rows
    /// `element,coefficient` sorted by element, identity first.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# basis={} size={} log_factor={:.16e}",
            B::KIND,
            self.size,
            self.log_factor
        )?;
        writeln!(out, "{},{:.16e}", B::identity(self.size), self.identity_coeff)?;
        let sorted: BTreeMap<&B, f64> = self.terms.iter().map(|(b, t)| (b, t.coeff)).collect();
        for (b, c) in sorted {
            writeln!(out, "{b},{c:.16e}")?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty snapshot".into()))??;
        let mut basis = None;
        let mut size = None;
        let mut log_factor = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            match field.split_once('=') {
                Some(("basis", v)) => basis = Some(v.to_string()),
                Some(("size", v)) => size = v.parse::<usize>().ok(),
                Some(("log_factor", v)) => log_factor = v.parse::<f64>().ok(),
                _ => return Err(Error::Parse(format!("bad header field {field:?}"))),
            }
        }
        let (basis, size, log_factor) = match (basis, size, log_factor) {
            (Some(b), Some(s), Some(l)) => (b, s, l),
            _ => return Err(Error::Parse(format!("incomplete header {header:?}"))),
        };
        if basis != B::KIND.to_string() {
            return Err(Error::Parse(format!(
                "snapshot basis {basis} does not match {}",
                B::KIND
            )));
        }
        let mut map = Self::identity(size);
        map.identity_coeff = 0.0;
        map.log_factor = log_factor;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (elem, coeff) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::Parse(format!("bad snapshot row {line:?}")))?;
            let b = B::parse_sized(size, elem)?;
            let c: f64 = coeff
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad coefficient {coeff:?}")))?;
            map.merge_add(b, c)?;
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::majorana::MajoranaMonomial;
    use crate::pauli::PauliString;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn merge_add_examples() {
        let mut m = OperatorMap::<PauliString>::identity(1);
        m.merge_add(ps("Z"), -0.3).unwrap();
        assert_eq!(m.coefficient(&ps("Z")), -0.3);
        assert_eq!(m.coefficient(&ps("I")), 1.0);

        m.merge_add(ps("Z"), 0.3).unwrap();
        assert_eq!(m.coefficient(&ps("Z")), 0.0);
        // still stored until a truncation pass
        assert_eq!(m.len(), 2);
        assert_eq!(m.apply_truncation(&TruncationPolicy::none()), 1);
        assert_eq!(m.len(), 1);

        m.merge_add(ps("I"), 0.5).unwrap();
        assert_eq!(m.identity_coeff(), 1.5);
    }

    #[test]
    fn merge_add_rejects_bad_input() {
        let mut m = OperatorMap::<PauliString>::identity(2);
        assert!(matches!(m.merge_add(ps("ZZ"), f64::NAN), Err(Error::NonFinite(_))));
        assert!(matches!(m.merge_add(ps("Z"), 1.0), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn normalize_examples() {
        let mut m = OperatorMap::<PauliString>::identity(1);
        m.merge_add(ps("I"), 1.0).unwrap();
        m.merge_add(ps("Z"), 1.0).unwrap();
        m.normalize_by_identity().unwrap();
        assert_eq!(m.identity_coeff(), 1.0);
        assert_eq!(m.coefficient(&ps("Z")), 0.5);
        assert!((m.accumulated_log_factor() - 2f64.ln()).abs() < 1e-15);

        let mut m = OperatorMap::<PauliString>::identity(1);
        m.scale(0.3f64.cosh());
        m.merge_add(ps("Z"), -(0.3f64.sinh())).unwrap();
        m.normalize_by_identity().unwrap();
        assert!((m.coefficient(&ps("Z")) + 0.291_312_612_451_590_7).abs() < 1e-15);
        assert!((m.coefficient(&ps("Z")) + 0.3f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_nonpositive_identity() {
        let mut m = OperatorMap::<PauliString>::identity(1);
        m.merge_add(ps("I"), -1.0).unwrap();
        assert!(matches!(m.normalize_by_identity(), Err(Error::Diverged(_))));
        m.merge_add(ps("I"), -1.0).unwrap();
        assert!(m.normalize_by_identity().is_err());
    }

    #[test]
    fn truncation_examples() {
        let mut m = OperatorMap::<PauliString>::identity(1);
        m.merge_add(ps("Z"), 0.4).unwrap();
        m.merge_add(ps("X"), 0.6).unwrap();
        let removed = m.apply_truncation(&TruncationPolicy::coefficient(0.5));
        assert_eq!(removed, 1);
        assert_eq!(m.coefficient(&ps("X")), 0.6);
        assert_eq!(m.coefficient(&ps("Z")), 0.0);

        let mut m = OperatorMap::<PauliString>::identity(2);
        m.merge_add(ps("XX"), 0.3).unwrap();
        m.merge_add(ps("ZI"), 0.2).unwrap();
        m.apply_truncation(&TruncationPolicy::weight(1));
        assert_eq!(m.len(), 2);
        assert_eq!(m.coefficient(&ps("ZI")), 0.2);
    }

    #[test]
    fn truncation_is_idempotent_and_keeps_identity() {
        let mut m = OperatorMap::<PauliString>::identity(3);
        for (s, c) in [("XXI", 0.1), ("ZZZ", 0.7), ("IYI", 1e-4), ("XYZ", -0.02)] {
            m.merge_add(ps(s), c).unwrap();
        }
        let policy = TruncationPolicy {
            coeff_threshold: 0.01,
            max_weight: Some(2),
            max_sinh_count: None,
        };
        assert_eq!(m.apply_truncation(&policy), 3);
        assert_eq!(m.apply_truncation(&policy), 0);
        assert_eq!(m.identity_coeff(), 1.0);
        assert_eq!(m.coefficient(&ps("XXI")), 0.1);
    }

    #[test]
    fn sweep_thresholds_are_accepted() {
        for k in 9..=18 {
            TruncationPolicy::coefficient(2f64.powi(-k)).validate().unwrap();
        }
        assert!(TruncationPolicy::coefficient(1.0).validate().is_err());
        assert!(TruncationPolicy::weight(0).validate().is_err());
    }

    #[test]
    fn sinh_count_merges_to_minimum() {
        let mut m = OperatorMap::<PauliString>::identity(1);
        m.merge_add_counted(ps("Z"), 0.1, 3).unwrap();
        m.merge_add_counted(ps("Z"), 0.1, 1).unwrap();
        m.merge_add_counted(ps("Z"), 0.1, 5).unwrap();
        assert_eq!(m.term(&ps("Z")).unwrap().sinh_count, 1);
        assert_eq!(m.apply_truncation(&TruncationPolicy::sinh_count(1)), 0);
        m.merge_add_counted(ps("X"), 0.1, 2).unwrap();
        assert_eq!(m.apply_truncation(&TruncationPolicy::sinh_count(1)), 1);
    }

    #[test]
    fn stats_examples() {
        let mut m = OperatorMap::<PauliString>::identity(1);
        let s = m.term_stats();
        assert_eq!(s.term_count, 1);
        assert_eq!(s.weight_histogram, vec![1]);
        m.merge_add(ps("Z"), -0.3).unwrap();
        let s = m.term_stats();
        assert_eq!(s.term_count, 2);
        assert_eq!(s.weight_histogram, vec![1, 1]);
        assert_eq!(s.max_abs_coeff, 1.0);
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut m = OperatorMap::<MajoranaMonomial>::identity(8);
        m.merge_add(MajoranaMonomial::from_indices(8, &[0, 1]).unwrap(), 0.1).unwrap();
        m.merge_add(MajoranaMonomial::from_indices(8, &[2, 3, 6, 7]).unwrap(), -1.0 / 3.0)
            .unwrap();
        m.merge_add(MajoranaMonomial::from_indices(8, &[0, 1]).unwrap(), 1.0).unwrap();
        m.normalize_by_identity().unwrap();
        let mut buf = Vec::new();
        m.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# basis=majorana size=8 log_factor="));
        assert!(text.contains("m{3,4,7,8},-3.3333333333333331e-1"));
        let back = OperatorMap::<MajoranaMonomial>::read_snapshot(&buf[..]).unwrap();
        assert_eq!(back.len(), m.len());
        for (b, t) in m.iter() {
            assert_eq!(back.coefficient(b), t.coeff);
        }
        assert_eq!(back.accumulated_log_factor(), m.accumulated_log_factor());
        assert!(OperatorMap::<PauliString>::read_snapshot(&buf[..]).is_err());
    }
}
