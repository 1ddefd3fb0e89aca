//! Untruncated propagation on a flat coefficient array.
//!
//! Starting from the identity, every element the propagation can reach lies
//! in the GF(2) span of the Hamiltonian terms' packed bits. When that span is
//! small enough, storing one coefficient per span element is far cheaper
//! than a hash map: a span of dimension 26 (the 7-site Hubbard cluster)
//! needs 512 MiB here against several GiB of map entries.
//!
//! Commutation with a fixed generator is linear in the span coordinates, so
//! each gate is one sweep over the array with a parity test per slot.

use crate::basis::BasisElement;
use crate::error::{Error, Result};
use crate::operator_map::{StateView, TermStats};
use crate::propagation::{CheckpointRecord, GateSchedule, HamiltonianTerm};

/// Largest span dimension accepted (2^27 coefficients, 1 GiB).
pub const MAX_SPAN_DIM: usize = 27;

type Bits = [u64; 4];

fn xor(a: Bits, b: Bits) -> Bits {
    [a[0] ^ b[0], a[1] ^ b[1], a[2] ^ b[2], a[3] ^ b[3]]
}

fn bit(v: &Bits, p: u32) -> bool {
    v[(p / 64) as usize] >> (p % 64) & 1 == 1
}

fn leading(v: &Bits) -> Option<u32> {
    (0..4)
        .rev()
        .find(|&w| v[w] != 0)
        .map(|w| 64 * w as u32 + 63 - v[w].leading_zeros())
}

fn ones(v: &Bits) -> u32 {
    v.iter().map(|w| w.count_ones()).sum()
}

/// Real sign of `G·Q` for a fixed generator `G` and commuting `Q`, from
/// popcounts of packed bits. Same conventions as the basis `product`.
enum SignKernel {
    /// `P = i^{|x∧z|} X^x Z^z`, so the exponent of `i` is
    /// `|x_g∧z_g| + |x_q∧z_q| - |x_r∧z_r| + 2|z_g∧x_q|`.
    Pauli { g: Bits, g_xz: u32 },
    /// `M_b = i^{r(|b|)} γ^b`: the exponent is `r_g + r_q - r_{g⊕q}` plus
    /// twice the reordering parity, which is linear in `q`.
    Majorana { g: Bits, g_r: u32, above: Bits },
}

fn majorana_r(len: u32) -> u32 {
    ((len % 4) >= 2) as u32
}

impl SignKernel {
    fn new<B: BasisElement>(generator: &B) -> Self {
        let g = generator.packed_bits();
        match B::KIND {
            crate::basis::BasisKind::Pauli => SignKernel::Pauli {
                g,
                g_xz: (g[0] & g[2]).count_ones() + (g[1] & g[3]).count_ones(),
            },
            crate::basis::BasisKind::Majorana => {
                // positions with an odd number of generator bits strictly above
                let mut above = [0u64; 4];
                let mut parity = false;
                for p in (0..256u32).rev() {
                    if parity {
                        above[(p / 64) as usize] |= 1 << (p % 64);
                    }
                    if bit(&g, p) {
                        parity = !parity;
                    }
                }
                SignKernel::Majorana {
                    g,
                    g_r: majorana_r(ones(&g)),
                    above,
                }
            }
        }
    }

    #[inline]
    fn sign(&self, q: &Bits) -> f64 {
        let e = match self {
            SignKernel::Pauli { g, g_xz } => {
                let q_xz = (q[0] & q[2]).count_ones() + (q[1] & q[3]).count_ones();
                let r = xor(*g, *q);
                let r_xz = (r[0] & r[2]).count_ones() + (r[1] & r[3]).count_ones();
                let cross = (g[2] & q[0]).count_ones() + (g[3] & q[1]).count_ones();
                g_xz + q_xz + 2 * cross + 4 - (r_xz % 4)
            }
            SignKernel::Majorana { g, g_r, above } => {
                let swaps = (0..4).map(|w| (q[w] & above[w]).count_ones()).sum::<u32>();
                g_r + majorana_r(ones(q)) + 2 * swaps + 4 - majorana_r(ones(&xor(*g, *q)))
            }
        };
        debug_assert!(e % 2 == 0, "commuting product has a real phase");
        if e % 4 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Coefficients over every element of a span, identity at coordinate 0.
#[derive(Clone, Debug)]
pub struct SpanState<B: BasisElement> {
    size: usize,
    /// Reduced basis: `basis[i]` is the only vector with bit `pivots[i]` set.
    basis: Vec<Bits>,
    pivots: Vec<u32>,
    lo_bits: usize,
    lo_table: Vec<Bits>,
    hi_table: Vec<Bits>,
    coeffs: Vec<f64>,
    log_factor: f64,
    _basis: std::marker::PhantomData<B>,
}

impl<B: BasisElement> SpanState<B> {
    /// Identity state over the span of `generators`.
    pub fn new(size: usize, generators: &[B]) -> Result<Self> {
        let _ = B::identity(size);
        let mut basis: Vec<Bits> = Vec::new();
        let mut pivots: Vec<u32> = Vec::new();
        for g in generators {
            if g.size() != size {
                return Err(Error::SizeMismatch {
                    left: size,
                    right: g.size(),
                });
            }
            let mut v = g.packed_bits();
            for (b, &p) in basis.iter().zip(&pivots) {
                if bit(&v, p) {
                    v = xor(v, *b);
                }
            }
            let Some(p) = leading(&v) else { continue };
            for b in basis.iter_mut() {
                if bit(b, p) {
                    *b = xor(*b, v);
                }
            }
            basis.push(v);
            pivots.push(p);
            if basis.len() > MAX_SPAN_DIM {
                return Err(Error::TooLarge(format!(
                    "span dimension exceeds {MAX_SPAN_DIM}"
                )));
            }
        }
        let dim = basis.len();
        let lo_bits = dim / 2;
        let table = |range: std::ops::Range<usize>| -> Vec<Bits> {
            let k = range.len();
            (0..1usize << k)
                .map(|mask| {
                    range
                        .clone()
                        .enumerate()
                        .filter(|(j, _)| mask >> j & 1 == 1)
                        .fold([0; 4], |acc, (_, i)| xor(acc, basis[i]))
                })
                .collect()
        };
        let lo_table = table(0..lo_bits);
        let hi_table = table(lo_bits..dim);
        let mut coeffs = vec![0.0; 1usize << dim];
        coeffs[0] = 1.0;
        Ok(Self {
            size,
            basis,
            pivots,
            lo_bits,
            lo_table,
            hi_table,
            coeffs,
            log_factor: 0.0,
            _basis: std::marker::PhantomData,
        })
    }

    /// For a Hamiltonian's terms.
    pub fn for_hamiltonian(size: usize, terms: &[HamiltonianTerm<B>]) -> Result<Self> {
        let gens: Vec<B> = terms.iter().map(|t| t.element).collect();
        Self::new(size, &gens)
    }

    pub fn span_dim(&self) -> usize {
        self.basis.len()
    }

    /// Span coordinate of `element`, if it lies in the span.
    pub fn coordinate(&self, element: &B) -> Option<usize> {
        let bits = element.packed_bits();
        let mut c = 0usize;
        let mut rest = bits;
        for (i, (b, &p)) in self.basis.iter().zip(&self.pivots).enumerate() {
            if bit(&bits, p) {
                c |= 1 << i;
                rest = xor(rest, *b);
            }
        }
        (rest == [0; 4]).then_some(c)
    }

    pub fn element(&self, coordinate: usize) -> B {
        let lo = coordinate & ((1 << self.lo_bits) - 1);
        let hi = coordinate >> self.lo_bits;
        B::from_packed_bits(self.size, xor(self.lo_table[lo], self.hi_table[hi]))
    }

    /// Number of nonzero coefficients, identity included.
    pub fn nonzero_count(&self) -> usize {
        self.coeffs.iter().filter(|c| **c != 0.0).count()
    }

    pub fn term_stats(&self) -> TermStats {
        let mut hist = vec![0usize];
        let mut max_abs = 0.0f64;
        for (c, &v) in self.coeffs.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let w = self.element(c).weight() as usize;
            if hist.len() <= w {
                hist.resize(w + 1, 0);
            }
            hist[w] += 1;
            max_abs = max_abs.max(v.abs());
        }
        TermStats {
            term_count: hist.iter().sum(),
            weight_histogram: hist,
            max_abs_coeff: max_abs / self.coeffs[0],
        }
    }

    /// Gate followed by normalization by the identity coefficient, with the
    /// same cosh/sinh pair rule as the sparse kernel.
    ///
    /// Normalization is deferred: the array holds the state up to a positive
    /// scale (`coeffs[0]`), so anticommuting slots are never touched and each
    /// commuting pair is visited once.
    pub fn apply_gate_normalized(&mut self, generator: &B, angle: f64) -> Result<()> {
        if generator.size() != self.size {
            return Err(Error::SizeMismatch {
                left: self.size,
                right: generator.size(),
            });
        }
        if generator.is_identity() {
            return Err(Error::IdentityGenerator);
        }
        if !angle.is_finite() {
            return Err(Error::NonFinite("gate angle"));
        }
        let g = self
            .coordinate(generator)
            .ok_or_else(|| Error::Domain(format!("generator {generator} outside the span")))?;
        // odd parity of (coordinate & anti) <=> anticommutes with the generator
        let anti: usize = (0..self.basis.len())
            .filter(|&i| !self.element(1 << i).commutes_with(generator))
            .fold(0, |acc, i| acc | 1 << i);
        let (c, s) = (angle.cosh(), angle.sinh());
        let kernel = SignKernel::new(generator);
        let lo_mask = (1usize << self.lo_bits) - 1;
        let before = self.coeffs[0];
        // slots with bit `j` clear hold exactly one member of each {Q, GQ}
        let j = g.trailing_zeros();
        let low = (1usize << j) - 1;
        for h in 0..self.coeffs.len() / 2 {
            let q = ((h & !low) << 1) | (h & low);
            if (q & anti).count_ones() & 1 == 1 {
                continue;
            }
            let r = q ^ g;
            let (a, b) = (self.coeffs[q], self.coeffs[r]);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let bits = xor(self.lo_table[q & lo_mask], self.hi_table[q >> self.lo_bits]);
            let ss = s * kernel.sign(&bits);
            self.coeffs[q] = c * a - ss * b;
            self.coeffs[r] = c * b - ss * a;
        }
        let ratio = self.coeffs[0] / before;
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::Diverged(ratio));
        }
        self.log_factor += ratio.ln();
        let scale = self.coeffs[0];
        if !(1e-100..=1e100).contains(&scale) {
            let inv = 1.0 / scale;
            self.coeffs.iter_mut().for_each(|v| *v *= inv);
        }
        Ok(())
    }
}

impl<B: BasisElement> StateView<B> for SpanState<B> {
    fn size(&self) -> usize {
        self.size
    }

    fn identity_coeff(&self) -> f64 {
        1.0
    }

    fn coefficient(&self, element: &B) -> f64 {
        if element.size() != self.size {
            return 0.0;
        }
        self.coordinate(element).map_or(0.0, |c| self.coeffs[c] / self.coeffs[0])
    }

    fn accumulated_log_factor(&self) -> f64 {
        self.log_factor
    }
}

/// Untruncated counterpart of
/// [`propagate_thermal`](crate::propagation::propagate_thermal) on a
/// [`SpanState`]. Checkpoints snap the same way.
pub fn propagate_complete<B, F>(
    size: usize,
    terms: &[HamiltonianTerm<B>],
    schedule: &GateSchedule,
    checkpoints: &[f64],
    mut observe: F,
) -> Result<Vec<CheckpointRecord>>
where
    B: BasisElement,
    F: FnMut(&CheckpointRecord, &SpanState<B>),
{
    schedule.validate_for(terms)?;
    let mut state = SpanState::for_hamiltonian(size, terms)?;
    let snapped = schedule.snap_checkpoints(checkpoints);
    let mut order: Vec<usize> = (0..checkpoints.len()).collect();
    order.sort_by_key(|&i| (snapped[i], i));
    let mut records = Vec::with_capacity(checkpoints.len());
    let mut next = 0usize;
    let mut applied = 0usize;
    loop {
        while next < order.len() && snapped[order[next]] == applied {
            let i = order[next];
            let rec = CheckpointRecord {
                requested_beta: checkpoints[i],
                beta: schedule.beta_at(applied),
                gates_applied: applied,
                stats: state.term_stats(),
                accumulated_log_factor: state.log_factor,
                removed_total: 0,
            };
            observe(&rec, &state);
            records.push(rec);
            next += 1;
        }
        if next >= order.len() || applied == schedule.len() {
            break;
        }
        let gate = schedule.gates[applied];
        state.apply_gate_normalized(&terms[gate.term].element, gate.angle)?;
        applied += 1;
    }
    Ok(records)
}
