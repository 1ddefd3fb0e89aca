//! Thermal (Gibbs) state simulation by imaginary-time propagation in the
//! Pauli and Majorana operator bases.

pub mod backflow;
pub mod basis;
pub mod bounds;
pub mod complete_basis;
pub mod error;
pub mod experiment;
pub mod majorana;
pub mod observables;
pub mod operator_map;
pub mod oracle;
pub mod pauli;
pub mod phase;
pub mod models;
pub mod propagation;

pub use basis::{BasisElement, BasisKind};
pub use error::{Error, Result};
pub use majorana::MajoranaMonomial;
pub use operator_map::{OperatorMap, StateView, Term, TermStats, TruncationPolicy};
pub use pauli::{Pauli, PauliString};
pub use phase::Phase;
pub use propagation::{
    apply_imaginary_gate, build_qdrift_schedule, build_trotter_schedule, propagate_thermal,
    GateSchedule, HamiltonianTerm,
};
