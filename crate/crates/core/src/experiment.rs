//! Configuration-driven experiments and their CSV tables.
//!
//! Every config is a JSON document. Parsing reports the field path of the
//! first error, and [`ExperimentConfig::resolved`] fills in every default so
//! the exact configuration can be echoed next to the results.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backflow::{
    empirical_backflow, exhaustive_backflow, reference_string, BackflowRow, GateEnsemble,
    Placement,
};
use crate::basis::BasisElement;
use crate::bounds::{pbf_all_to_all_max_divergence, pbf_nn_max_divergence};
use crate::complete_basis::propagate_complete;
use crate::error::{Error, Result};
use crate::majorana::MajoranaMonomial;
use crate::models::{fmt17, BuiltModel, FermiHubbard, HexTriangularLattice, ModelSpec};
use crate::observables::{all_zz, czz_profile, energy, zz};
use crate::operator_map::{StateView, TruncationPolicy};
use crate::oracle::{dense_product_formula_expectation, dense_thermal_expectation, jw_map};
use crate::pauli::PauliString;
use crate::propagation::{
    build_qdrift_schedule, build_trotter_schedule, propagate_thermal, CheckpointRecord,
    GateSchedule, HamiltonianTerm, PropagationOptions, TermOrder,
};

/// Largest qubit (or fermionic mode) count the dense cross-checks accept.
pub const MAX_ORACLE_MODES: usize = 14;

/// Parses a JSON config, reporting the path of the offending field.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        reason: e.inner().to_string(),
    })
}

pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config(&text)
}

fn config_err(path: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Trotter,
    Qdrift,
}

impl SchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Trotter => "trotter",
            SchedulerKind::Qdrift => "qdrift",
        }
    }
}

/// Term order inside each Trotter layer. Shuffles are seeded by the replica seed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSpec {
    #[default]
    Fixed,
    ShuffleAll,
    /// Shuffle only the hopping terms of a Fermi-Hubbard model.
    ShuffleHopping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    pub tau: f64,
    pub beta_max: f64,
    /// Defaults to `[beta_max]`.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub order: OrderSpec,
}

impl SchedulerConfig {
    fn validate(&self, path: &str) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(config_err(&format!("{path}.tau"), format!("must be > 0, got {}", self.tau)));
        }
        if !(self.beta_max.is_finite() && self.beta_max >= 0.0) {
            return Err(config_err(
                &format!("{path}.beta_max"),
                format!("must be >= 0, got {}", self.beta_max),
            ));
        }
        if self.kind == SchedulerKind::Trotter {
            let r = self.beta_max / self.tau;
            if (r - r.round()).abs() > 1e-9 {
                return Err(config_err(
                    &format!("{path}.beta_max"),
                    format!("must be a multiple of tau for trotter, got beta_max/tau = {r}"),
                ));
            }
        } else if self.order != OrderSpec::Fixed {
            return Err(config_err(&format!("{path}.order"), "only trotter schedules take an order"));
        }
        for (i, &b) in self.checkpoints.iter().enumerate() {
            if !(b.is_finite() && (0.0..=self.beta_max + 1e-12).contains(&b)) {
                return Err(config_err(
                    &format!("{path}.checkpoints[{i}]"),
                    format!("must lie in [0, beta_max], got {b}"),
                ));
            }
        }
        Ok(())
    }

    fn resolve(&mut self) {
        if self.checkpoints.is_empty() {
            self.checkpoints = vec![self.beta_max];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableName {
    Energy,
    EnergyDensity,
    CzzMap,
    LogPartition,
    TermCount,
}

/// Storage used for the propagated state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Hash map of retained terms; supports every truncation policy.
    #[default]
    Sparse,
    /// Dense array over the span of the Hamiltonian terms; untruncated only.
    Complete,
}

fn default_observables() -> Vec<ObservableName> {
    vec![
        ObservableName::Energy,
        ObservableName::EnergyDensity,
        ObservableName::LogPartition,
        ObservableName::TermCount,
    ]
}

fn default_replicas() -> usize {
    1
}

fn default_max_terms() -> usize {
    30_000_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    /// Several truncation cells in one run; replaces `truncation` when non-empty.
    #[serde(default)]
    pub truncation_sweep: Vec<TruncationPolicy>,
    #[serde(default = "default_observables")]
    pub observables: Vec<ObservableName>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<String>,
    /// Memory guard: abort once a state holds more terms than this.
    #[serde(default = "default_max_terms")]
    pub max_terms: usize,
    #[serde(default)]
    pub backend: Backend,
}

impl ExperimentConfig {
    pub fn cells(&self) -> Vec<TruncationPolicy> {
        if self.truncation_sweep.is_empty() {
            vec![self.truncation.clone()]
        } else {
            self.truncation_sweep.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scheduler.validate("scheduler")?;
        if self.replicas == 0 {
            return Err(config_err("replicas", "must be at least 1"));
        }
        if self.scheduler.kind == SchedulerKind::Trotter
            && self.replicas != 1
            && self.scheduler.order == OrderSpec::Fixed
        {
            return Err(config_err("replicas", "a fixed-order trotter schedule takes exactly 1 replica"));
        }
        for (i, p) in self.cells().iter().enumerate() {
            let path = if self.truncation_sweep.is_empty() {
                "truncation".to_string()
            } else {
                format!("truncation_sweep[{i}]")
            };
            p.validate().map_err(|e| match e {
                Error::Config { path: inner, reason } => {
                    config_err(&format!("{path}{}", inner.trim_start_matches("truncation")), reason)
                }
                other => other,
            })?;
            if self.backend == Backend::Complete && !p.is_none() {
                return Err(config_err(&path, "the complete backend cannot truncate"));
            }
        }
        let fermionic = matches!(self.model, ModelSpec::FermiHubbardTri { .. });
        if self.observables.contains(&ObservableName::CzzMap) && !fermionic {
            return Err(config_err("observables", "czz_map needs a fermi_hubbard_tri model"));
        }
        if self.scheduler.order == OrderSpec::ShuffleHopping && !fermionic {
            return Err(config_err("scheduler.order", "shuffle_hopping needs a fermi_hubbard_tri model"));
        }
        if self.max_terms == 0 {
            return Err(config_err("max_terms", "must be positive"));
        }
        Ok(())
    }

    /// Validated copy with every default made explicit.
    pub fn resolved(&self) -> Result<Self> {
        self.validate()?;
        let mut c = self.clone();
        c.scheduler.resolve();
        if c.truncation_sweep.is_empty() {
            c.truncation_sweep = vec![c.truncation.clone()];
        }
        c.observables.sort();
        c.observables.dedup();
        Ok(c)
    }
}

fn build_model(spec: &ModelSpec) -> Result<BuiltModel> {
    spec.build().map_err(|e| match e {
        Error::Model(reason) | Error::Domain(reason) => config_err("model", reason),
        other => config_err("model", other.to_string()),
    })
}

fn term_order(order: OrderSpec, seed: u64, model: &BuiltModel) -> TermOrder {
    match (order, model) {
        (OrderSpec::Fixed, _) => TermOrder::Fixed,
        (OrderSpec::ShuffleAll, _) => TermOrder::ShuffleEachLayer { seed, positions: None },
        (OrderSpec::ShuffleHopping, BuiltModel::Majorana(fh)) => TermOrder::ShuffleEachLayer {
            seed,
            positions: Some(fh.hopping_positions.clone()),
        },
        (OrderSpec::ShuffleHopping, BuiltModel::Pauli { .. }) => {
            TermOrder::ShuffleEachLayer { seed, positions: None }
        }
    }
}

fn schedule_for<B>(
    terms: &[HamiltonianTerm<B>],
    sched: &SchedulerConfig,
    model: &BuiltModel,
    seed: u64,
) -> Result<GateSchedule> {
    match sched.kind {
        SchedulerKind::Trotter => build_trotter_schedule(
            terms,
            sched.beta_max,
            sched.tau,
            &term_order(sched.order, seed, model),
        ),
        SchedulerKind::Qdrift => build_qdrift_schedule(terms, sched.beta_max, sched.tau, seed, 0),
    }
}

fn replica_seed(seed: u64, replica: usize) -> u64 {
    seed.wrapping_add(replica as u64)
}

/// One CSV row of [`run_experiment`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub cell: usize,
    pub replica: usize,
    pub seed: u64,
    pub requested_beta: f64,
    pub beta: f64,
    pub energy: Option<f64>,
    pub energy_density: Option<f64>,
    pub n_terms: Option<usize>,
    pub log_partition: Option<f64>,
    pub accumulated_log_factor: f64,
    pub wall_ms: f64,
    pub truncation: TruncationPolicy,
}

/// Centre-site spin correlation map at one checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CzzSnapshot {
    pub cell: usize,
    pub replica: usize,
    pub seed: u64,
    pub checkpoint: usize,
    pub beta: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub rows: Vec<RunRow>,
    pub czz: Vec<CzzSnapshot>,
    pub lattice: Option<HexTriangularLattice>,
}

struct Job<'a> {
    cell: usize,
    replica: usize,
    policy: &'a TruncationPolicy,
}

/// Per-checkpoint readings shared by both bases.
struct Reading {
    record: CheckpointRecord,
    energy: f64,
    czz: Option<Vec<f64>>,
    wall_ms: f64,
}

#[allow(clippy::too_many_arguments)]
fn propagate_readings<B: BasisElement>(
    size: usize,
    terms: &[HamiltonianTerm<B>],
    offset: f64,
    schedule: &GateSchedule,
    policy: &TruncationPolicy,
    checkpoints: &[f64],
    backend: Backend,
    max_terms: usize,
    czz: Option<&dyn Fn(&dyn StateViewDyn<B>) -> Result<Vec<f64>>>,
) -> Result<Vec<Reading>> {
    let start = Instant::now();
    let mut out: Vec<Reading> = Vec::new();
    let mut failure: Option<Error> = None;
    let mut observe = |rec: &CheckpointRecord, state: &dyn StateViewDyn<B>| {
        if failure.is_some() {
            return;
        }
        let e = energy(&DynView(state), terms, offset);
        let c = czz.map(|f| f(state)).transpose();
        match (e, c) {
            (Ok(energy), Ok(czz)) => out.push(Reading {
                record: rec.clone(),
                energy,
                czz,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            }),
            (Err(e), _) | (_, Err(e)) => failure = Some(e),
        }
    };
    match backend {
        Backend::Sparse => {
            let opts = PropagationOptions { max_terms: Some(max_terms) };
            propagate_thermal(size, terms, schedule, policy, checkpoints, &opts, |r, s| {
                observe(r, s)
            })?;
        }
        Backend::Complete => {
            propagate_complete(size, terms, schedule, checkpoints, |r, s| observe(r, s))?;
        }
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Object-safe view so both state types can be observed through one closure.
pub trait StateViewDyn<B: BasisElement> {
    fn size_dyn(&self) -> usize;
    fn identity_dyn(&self) -> f64;
    fn coefficient_dyn(&self, element: &B) -> f64;
    fn log_factor_dyn(&self) -> f64;
}

impl<B: BasisElement, S: StateView<B>> StateViewDyn<B> for S {
    fn size_dyn(&self) -> usize {
        self.size()
    }
    fn identity_dyn(&self) -> f64 {
        self.identity_coeff()
    }
    fn coefficient_dyn(&self, element: &B) -> f64 {
        self.coefficient(element)
    }
    fn log_factor_dyn(&self) -> f64 {
        self.accumulated_log_factor()
    }
}

/// Adapter back from the object-safe view to [`StateView`].
pub struct DynView<'a, B: BasisElement>(pub &'a dyn StateViewDyn<B>);

impl<B: BasisElement> StateView<B> for DynView<'_, B> {
    fn size(&self) -> usize {
        self.0.size_dyn()
    }
    fn identity_coeff(&self) -> f64 {
        self.0.identity_dyn()
    }
    fn coefficient(&self, element: &B) -> f64 {
        self.0.coefficient_dyn(element)
    }
    fn accumulated_log_factor(&self) -> f64 {
        self.0.log_factor_dyn()
    }
}

fn fh_czz(fh: &FermiHubbard) -> impl Fn(&dyn StateViewDyn<MajoranaMonomial>) -> Result<Vec<f64>> + '_ {
    move |s| czz_profile(&DynView(s), &fh.lattice, fh.lattice.center_index)
}

/// Runs every (truncation cell, replica) pair and returns rows sorted by
/// cell, replica and checkpoint order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    let config = config.resolved()?;
    let model = build_model(&config.model)?;
    let cells = config.cells();
    let jobs: Vec<Job> = cells
        .iter()
        .enumerate()
        .flat_map(|(cell, policy)| (0..config.replicas).map(move |replica| Job { cell, replica, policy }))
        .collect();
    let want_czz = config.observables.contains(&ObservableName::CzzMap);
    let sched = &config.scheduler;

    let results: Vec<Result<(Vec<RunRow>, Vec<CzzSnapshot>)>> = jobs
        .par_iter()
        .map(|job| {
            let seed = replica_seed(config.seed, job.replica);
            let (readings, n_modes) = match &model {
                BuiltModel::Pauli { n_qubits, terms } => {
                    let s = schedule_for(terms, sched, &model, seed)?;
                    let r = propagate_readings(
                        *n_qubits,
                        terms,
                        0.0,
                        &s,
                        job.policy,
                        &sched.checkpoints,
                        config.backend,
                        config.max_terms,
                        None,
                    )?;
                    (r, *n_qubits)
                }
                BuiltModel::Majorana(fh) => {
                    let s = schedule_for(&fh.terms, sched, &model, seed)?;
                    let f = fh_czz(fh);
                    let r = propagate_readings(
                        fh.n_generators,
                        &fh.terms,
                        fh.identity_offset,
                        &s,
                        job.policy,
                        &sched.checkpoints,
                        config.backend,
                        config.max_terms,
                        want_czz.then_some(&f as &dyn Fn(&dyn StateViewDyn<MajoranaMonomial>) -> Result<Vec<f64>>),
                    )?;
                    (r, fh.n_generators / 2)
                }
            };
            let has = |o| config.observables.contains(&o);
            let n_sites = model.n_sites() as f64;
            let offset = model.identity_offset();
            let mut rows = Vec::new();
            let mut maps = Vec::new();
            for (k, r) in readings.into_iter().enumerate() {
                rows.push(RunRow {
                    cell: job.cell,
                    replica: job.replica,
                    seed,
                    requested_beta: r.record.requested_beta,
                    beta: r.record.beta,
                    energy: has(ObservableName::Energy).then_some(r.energy),
                    energy_density: has(ObservableName::EnergyDensity).then_some(r.energy / n_sites),
                    n_terms: has(ObservableName::TermCount).then_some(r.record.stats.term_count),
                    // the scalar part of H shifts ln Z by -β·offset
                    log_partition: has(ObservableName::LogPartition).then_some(
                        n_modes as f64 * std::f64::consts::LN_2 + r.record.accumulated_log_factor
                            - r.record.beta * offset,
                    ),
                    accumulated_log_factor: r.record.accumulated_log_factor,
                    wall_ms: r.wall_ms,
                    truncation: job.policy.clone(),
                });
                if let Some(values) = r.czz {
                    maps.push(CzzSnapshot {
                        cell: job.cell,
                        replica: job.replica,
                        seed,
                        checkpoint: k,
                        beta: r.record.beta,
                        values,
                    });
                }
            }
            Ok((rows, maps))
        })
        .collect();

    let mut rows = Vec::new();
    let mut czz = Vec::new();
    for r in results {
        let (a, b) = r?;
        rows.extend(a);
        czz.extend(b);
    }
    // rayon keeps input order on collect; sorting again documents the contract
    rows.sort_by(|a, b| (a.cell, a.replica).cmp(&(b.cell, b.replica)));
    czz.sort_by(|a, b| (a.cell, a.replica, a.checkpoint).cmp(&(b.cell, b.replica, b.checkpoint)));
    let lattice = match model {
        BuiltModel::Majorana(fh) => Some(fh.lattice),
        BuiltModel::Pauli { .. } => None,
    };
    Ok(RunResult { config, rows, czz, lattice })
}

pub const RUN_COLUMNS: [&str; 11] = [
    "beta",
    "energy",
    "energy_density",
    "n_terms",
    "log_partition",
    "wall_ms",
    "seed",
    "replica",
    "coeff_threshold",
    "max_weight",
    "max_sinh_count",
];

fn opt_f(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_default()
}

fn opt_u<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_run_csv<W: Write>(rows: &[RunRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_COLUMNS)?;
    for r in rows {
        w.write_record([
            fmt17(r.beta),
            opt_f(r.energy),
            opt_f(r.energy_density),
            opt_u(r.n_terms),
            opt_f(r.log_partition),
            format!("{:.3}", r.wall_ms),
            r.seed.to_string(),
            r.replica.to_string(),
            fmt17(r.truncation.coeff_threshold),
            opt_u(r.truncation.max_weight),
            opt_u(r.truncation.max_sinh_count),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Two or more schedulers run against the same model and β grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub model: ModelSpec,
    pub schedulers: Vec<SchedulerConfig>,
    pub truncations: Vec<TruncationPolicy>,
    /// Replicas for randomized schedules; fixed-order Trotter always runs once.
    #[serde(default = "default_compare_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<String>,
    #[serde(default = "default_max_terms")]
    pub max_terms: usize,
}

fn default_compare_replicas() -> usize {
    50
}

impl CompareConfig {
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        if c.schedulers.is_empty() {
            return Err(config_err("schedulers", "need at least one scheduler"));
        }
        for (i, s) in c.schedulers.iter_mut().enumerate() {
            s.validate(&format!("schedulers[{i}]"))?;
            s.resolve();
        }
        let grid = (&c.schedulers[0].checkpoints, c.schedulers[0].beta_max);
        for (i, s) in c.schedulers.iter().enumerate().skip(1) {
            if (&s.checkpoints, s.beta_max) != grid {
                return Err(config_err(
                    &format!("schedulers[{i}].checkpoints"),
                    "all schedulers must share beta_max and the checkpoint grid",
                ));
            }
        }
        if c.truncations.is_empty() {
            return Err(config_err("truncations", "need at least one truncation setting"));
        }
        for (i, t) in c.truncations.iter().enumerate() {
            t.validate().map_err(|e| config_err(&format!("truncations[{i}]"), e.to_string()))?;
        }
        if c.replicas == 0 {
            return Err(config_err("replicas", "must be at least 1"));
        }
        Ok(c)
    }
}

/// Mean relative energy error of one (scheduler, truncation, β) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub scheduler: SchedulerKind,
    pub truncation: TruncationPolicy,
    pub beta: f64,
    pub mean_rel_error: f64,
    pub stderr_rel_error: f64,
    pub mean_n_terms: f64,
    pub replicas: usize,
}

/// Energy of the untruncated product-formula state at each gate count, from
/// the dense oracle.
fn oracle_energies(model: &BuiltModel, schedule: &GateSchedule, at: &[usize]) -> Result<Vec<f64>> {
    match model {
        BuiltModel::Pauli { n_qubits, terms } => {
            let gates: Vec<(PauliString, f64)> =
                schedule.gates.iter().map(|g| (terms[g.term].element, g.angle)).collect();
            let obs: Vec<PauliString> = terms.iter().map(|t| t.element).collect();
            let vals = dense_product_formula_expectation(*n_qubits, &gates, &obs, at)?;
            Ok(vals
                .iter()
                .map(|v| terms.iter().zip(&v.expectations).map(|(t, e)| t.coefficient * e).sum())
                .collect())
        }
        BuiltModel::Majorana(fh) => {
            let n = fh.n_generators / 2;
            let mapped: Vec<(PauliString, f64)> = fh.terms.iter().map(|t| jw_map(&t.element)).collect();
            let gates: Vec<(PauliString, f64)> = schedule
                .gates
                .iter()
                .map(|g| (mapped[g.term].0, mapped[g.term].1 * g.angle))
                .collect();
            let obs: Vec<PauliString> = mapped.iter().map(|m| m.0).collect();
            let vals = dense_product_formula_expectation(n, &gates, &obs, at)?;
            Ok(vals
                .iter()
                .map(|v| {
                    fh.identity_offset
                        + fh.terms
                            .iter()
                            .zip(&mapped)
                            .zip(&v.expectations)
                            .map(|((t, m), e)| t.coefficient * m.1 * e)
                            .sum::<f64>()
                })
                .collect())
        }
    }
}

fn model_modes(model: &BuiltModel) -> usize {
    match model {
        BuiltModel::Pauli { n_qubits, .. } => *n_qubits,
        BuiltModel::Majorana(fh) => fh.n_generators / 2,
    }
}

/// Truncated-vs-untruncated comparison across schedulers. The untruncated
/// reference for each replica is the dense product-formula state along the
/// very same gate sequence, so only truncation error is measured.
pub fn compare_schedulers(config: &CompareConfig) -> Result<Vec<CompareRow>> {
    let config = config.resolved()?;
    let model = build_model(&config.model)?;
    if model_modes(&model) > MAX_ORACLE_MODES {
        return Err(Error::TooLarge(format!(
            "{} modes exceeds the oracle cap {MAX_ORACLE_MODES}",
            model_modes(&model)
        )));
    }
    let mut rows = Vec::new();
    for sched in &config.schedulers {
        let replicas = if sched.kind == SchedulerKind::Trotter && sched.order == OrderSpec::Fixed {
            1
        } else {
            config.replicas
        };
        let betas = &sched.checkpoints;
        // per replica: (truncation, checkpoint) -> (rel error, n_terms)
        let per_replica: Vec<Result<Vec<Vec<(f64, usize)>>>> = (0..replicas)
            .into_par_iter()
            .map(|rep| {
                let seed = replica_seed(config.seed, rep);
                let (schedule, at) = match &model {
                    BuiltModel::Pauli { terms, .. } => {
                        let s = schedule_for(terms, sched, &model, seed)?;
                        let at = s.snap_checkpoints(betas);
                        (s, at)
                    }
                    BuiltModel::Majorana(fh) => {
                        let s = schedule_for(&fh.terms, sched, &model, seed)?;
                        let at = s.snap_checkpoints(betas);
                        (s, at)
                    }
                };
                let reference = oracle_energies(&model, &schedule, &at)?;
                let mut cells = Vec::with_capacity(config.truncations.len());
                for policy in &config.truncations {
                    let readings = match &model {
                        BuiltModel::Pauli { n_qubits, terms } => propagate_readings(
                            *n_qubits,
                            terms,
                            0.0,
                            &schedule,
                            policy,
                            betas,
                            Backend::Sparse,
                            config.max_terms,
                            None,
                        )?,
                        BuiltModel::Majorana(fh) => propagate_readings(
                            fh.n_generators,
                            &fh.terms,
                            fh.identity_offset,
                            &schedule,
                            policy,
                            betas,
                            Backend::Sparse,
                            config.max_terms,
                            None,
                        )?,
                    };
                    // readings come back in gate order; map them to the config order
                    let mut by_beta = vec![(0.0, 0usize); betas.len()];
                    for r in readings {
                        let i = betas
                            .iter()
                            .position(|&b| b == r.record.requested_beta)
                            .expect("checkpoint echoed back");
                        let e_ref = reference[i];
                        let err = if e_ref.abs() > 0.0 {
                            (r.energy - e_ref).abs() / e_ref.abs()
                        } else {
                            (r.energy - e_ref).abs()
                        };
                        by_beta[i] = (err, r.record.stats.term_count);
                    }
                    cells.push(by_beta);
                }
                Ok(cells)
            })
            .collect();
        let per_replica: Vec<Vec<Vec<(f64, usize)>>> = per_replica.into_iter().collect::<Result<_>>()?;
        for (ti, policy) in config.truncations.iter().enumerate() {
            for (bi, &beta) in betas.iter().enumerate() {
                let errs: Vec<f64> = per_replica.iter().map(|r| r[ti][bi].0).collect();
                let counts: Vec<f64> = per_replica.iter().map(|r| r[ti][bi].1 as f64).collect();
                let n = errs.len() as f64;
                let mean = errs.iter().sum::<f64>() / n;
                let var = if errs.len() > 1 {
                    errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                rows.push(CompareRow {
                    scheduler: sched.kind,
                    truncation: policy.clone(),
                    beta,
                    mean_rel_error: mean,
                    stderr_rel_error: (var / n).sqrt(),
                    mean_n_terms: counts.iter().sum::<f64>() / n,
                    replicas: errs.len(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scheduler",
        "coeff_threshold",
        "max_weight",
        "max_sinh_count",
        "beta",
        "mean_rel_error",
        "stderr_rel_error",
        "mean_n_terms",
        "replicas",
    ])?;
    for r in rows {
        w.write_record([
            r.scheduler.name().to_string(),
            fmt17(r.truncation.coeff_threshold),
            opt_u(r.truncation.max_weight),
            opt_u(r.truncation.max_sinh_count),
            fmt17(r.beta),
            fmt17(r.mean_rel_error),
            fmt17(r.stderr_rel_error),
            fmt17(r.mean_n_terms),
            r.replicas.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A weight-truncation cell against coefficient truncation interpolated to
/// the same mean retained-term count.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedCount {
    pub scheduler: SchedulerKind,
    pub beta: f64,
    pub max_weight: u32,
    pub n_terms: f64,
    pub weight_error: f64,
    pub coefficient_error: f64,
}

/// Pairs every weight-only cell with the coefficient-only curve at equal
/// retained count (log-log interpolation; linear where an error is zero).
/// Cells whose count falls outside the coefficient curve are skipped.
pub fn matched_count_comparison(rows: &[CompareRow]) -> Vec<MatchedCount> {
    let is_coeff = |t: &TruncationPolicy| {
        t.coeff_threshold > 0.0 && t.max_weight.is_none() && t.max_sinh_count.is_none()
    };
    let mut out = Vec::new();
    for w in rows {
        let Some(k) = w.truncation.max_weight else { continue };
        if w.truncation.coeff_threshold != 0.0 || w.truncation.max_sinh_count.is_some() {
            continue;
        }
        let mut curve: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.scheduler == w.scheduler && r.beta == w.beta && is_coeff(&r.truncation))
            .map(|r| (r.mean_n_terms, r.mean_rel_error))
            .collect();
        curve.sort_by(|a, b| a.0.total_cmp(&b.0));
        let x = w.mean_n_terms;
        let Some(hi) = curve.iter().position(|p| p.0 >= x) else { continue };
        let coefficient_error = if curve[hi].0 == x {
            curve[hi].1
        } else if hi == 0 {
            continue;
        } else {
            let (a, b) = (curve[hi - 1], curve[hi]);
            if a.1 > 0.0 && b.1 > 0.0 {
                let t = (x.ln() - a.0.ln()) / (b.0.ln() - a.0.ln());
                (a.1.ln() + t * (b.1.ln() - a.1.ln())).exp()
            } else {
                let t = (x - a.0) / (b.0 - a.0);
                a.1 + t * (b.1 - a.1)
            }
        };
        out.push(MatchedCount {
            scheduler: w.scheduler,
            beta: w.beta,
            max_weight: k,
            n_terms: x,
            weight_error: w.mean_rel_error,
            coefficient_error,
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackflowGeometry {
    AllToAll,
    NearestNeighbor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackflowScanConfig {
    pub geometry: BackflowGeometry,
    pub n_values: Vec<usize>,
    pub w_values: Vec<usize>,
    /// Monte-Carlo draws per row; 0 enumerates every gate instead.
    #[serde(default)]
    pub samples: usize,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub seed: u64,
    /// Max-divergence allowance `α` applied to the analytic column.
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub output_path: Option<String>,
}

/// Analytic against empirical backflow per `(n, w)`. Rows outside the
/// analytic formula's domain keep an empty analytic cell.
pub fn backflow_scan(config: &BackflowScanConfig) -> Result<Vec<BackflowRow>> {
    if config.n_values.is_empty() || config.w_values.is_empty() {
        return Err(config_err("n_values", "n_values and w_values must be non-empty"));
    }
    if !(config.alpha.is_finite() && config.alpha >= 0.0) {
        return Err(config_err("alpha", "must be finite and >= 0"));
    }
    let ensemble = match config.geometry {
        BackflowGeometry::AllToAll => GateEnsemble::UniformAllToAll,
        BackflowGeometry::NearestNeighbor => GateEnsemble::UniformNearestNeighbor,
    };
    let mut cells = Vec::new();
    for (ni, &n) in config.n_values.iter().enumerate() {
        if n < 2 || n > 128 {
            return Err(config_err(&format!("n_values[{ni}]"), format!("must lie in 2..=128, got {n}")));
        }
        for (wi, &w) in config.w_values.iter().enumerate() {
            if w > n {
                return Err(config_err(&format!("w_values[{wi}]"), format!("weight {w} exceeds n={n}")));
            }
            cells.push((n, w));
        }
    }
    cells
        .par_iter()
        .enumerate()
        .map(|(k, &(n, w))| {
            let analytic = match config.geometry {
                BackflowGeometry::AllToAll => pbf_all_to_all_max_divergence(w as u32, n as u32, config.alpha),
                BackflowGeometry::NearestNeighbor => {
                    pbf_nn_max_divergence(w as u32, n as u32 - 1, config.alpha)
                }
            }
            .ok();
            let reference = reference_string(n, w, config.placement)?;
            let est = if config.samples == 0 {
                exhaustive_backflow(&reference, &ensemble)?
            } else {
                empirical_backflow(&reference, &ensemble, config.samples, config.seed, k as u64)?
            };
            Ok(BackflowRow {
                w,
                n,
                analytic,
                empirical: est.estimate,
                stderr: est.stderr,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheckConfig {
    pub model: ModelSpec,
    pub beta: f64,
    pub tau: f64,
    #[serde(default)]
    pub order: OrderSpec,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to 1e-8.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Also propagate at τ/2 and τ/4 and check first-order convergence to the
    /// exact thermal energy. Defaults to on for spin models only.
    #[serde(default)]
    pub scaling: Option<bool>,
    /// Defaults to `complete` for fermionic models and `sparse` otherwise.
    #[serde(default)]
    pub backend: Option<Backend>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub taus: Vec<f64>,
    /// `|E_τ − E_exact|` for each τ.
    pub deviations: Vec<f64>,
    /// Consecutive deviation ratios; first order means about 2.
    pub ratios: Vec<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub n_gates: usize,
    pub n_observables: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub energy_propagated: f64,
    pub energy_product_formula: f64,
    pub energy_exact: f64,
    pub log_partition_propagated: f64,
    pub log_partition_product_formula: f64,
    pub log_partition_exact: f64,
    pub min_accumulated_log_factor: f64,
    pub scaling: Option<ScalingReport>,
}

/// Ratio window for a halving of τ under a first-order formula.
pub const SCALING_WINDOW: (f64, f64) = (1.5, 3.0);

/// Untruncated propagation against both dense oracles.
pub fn oracle_check(config: &OracleCheckConfig) -> Result<OracleReport> {
    let model = build_model(&config.model)?;
    let modes = model_modes(&model);
    if modes > MAX_ORACLE_MODES {
        return Err(Error::TooLarge(format!("{modes} modes exceeds the oracle cap {MAX_ORACLE_MODES}")));
    }
    let fermionic = matches!(model, BuiltModel::Majorana(_));
    let tolerance = config.tolerance.unwrap_or(1e-8);
    let backend = config.backend.unwrap_or(if fermionic { Backend::Complete } else { Backend::Sparse });
    let scaling = config.scaling.unwrap_or(!fermionic);
    let sched = SchedulerConfig {
        kind: SchedulerKind::Trotter,
        tau: config.tau,
        beta_max: config.beta,
        checkpoints: vec![config.beta],
        order: config.order,
    };
    sched.validate("")?;

    // (energy, extra observables, log factor) from propagation at step τ
    let propagate = |tau: f64| -> Result<(GateSchedule, f64, Vec<f64>, f64)> {
        let sc = SchedulerConfig { tau, ..sched.clone() };
        match &model {
            BuiltModel::Pauli { n_qubits, terms } => {
                let s = schedule_for(terms, &sc, &model, config.seed)?;
                let mut extra = Vec::new();
                let mut e = 0.0;
                let mut lf = 0.0;
                let mut fail = None;
                let obs = |rec: &CheckpointRecord, st: &dyn StateViewDyn<PauliString>| {
                    let v = DynView(st);
                    match (energy(&v, terms, 0.0), all_zz(&v)) {
                        (Ok(en), Ok(z)) => {
                            e = en;
                            extra = terms
                                .iter()
                                .map(|t| v.coefficient(&t.element) / v.identity_coeff())
                                .chain(z.into_iter().map(|(_, x)| x))
                                .collect();
                            lf = rec.accumulated_log_factor;
                        }
                        (Err(er), _) | (_, Err(er)) => fail = Some(er),
                    }
                };
                run_backend(*n_qubits, terms, &s, backend, &[config.beta], obs)?;
                if let Some(er) = fail {
                    return Err(er);
                }
                Ok((s, e, extra, lf))
            }
            BuiltModel::Majorana(fh) => {
                let s = schedule_for(&fh.terms, &sc, &model, config.seed)?;
                let mut extra = Vec::new();
                let mut e = 0.0;
                let mut lf = 0.0;
                let mut fail = None;
                let obs = |rec: &CheckpointRecord, st: &dyn StateViewDyn<MajoranaMonomial>| {
                    let v = DynView(st);
                    match (energy(&v, &fh.terms, fh.identity_offset), fh_czz(fh)(st)) {
                        (Ok(en), Ok(c)) => {
                            e = en;
                            extra = fh
                                .terms
                                .iter()
                                .map(|t| v.coefficient(&t.element) / v.identity_coeff())
                                .chain(c)
                                .collect();
                            lf = rec.accumulated_log_factor;
                        }
                        (Err(er), _) | (_, Err(er)) => fail = Some(er),
                    }
                };
                run_backend(fh.n_generators, &fh.terms, &s, backend, &[config.beta], obs)?;
                if let Some(er) = fail {
                    return Err(er);
                }
                Ok((s, e, extra, lf))
            }
        }
    };

    let (schedule, e_prop, extra_prop, lf) = propagate(config.tau)?;
    let (e_pf, extra_pf, log_pf) = product_formula_values(&model, &schedule)?;
    let (e_exact, log_exact) = exact_thermal(&model, config.beta)?;
    let shift = -config.beta * model.identity_offset();
    let log_pf = log_pf + shift;
    let mut max_dev = (e_prop - e_pf).abs();
    for (a, b) in extra_prop.iter().zip(&extra_pf) {
        max_dev = max_dev.max((a - b).abs());
    }
    let log_prop = modes as f64 * std::f64::consts::LN_2 + lf + shift;
    max_dev = max_dev.max((log_prop - log_pf).abs());

    let scaling = if scaling {
        let taus = vec![config.tau, config.tau / 2.0, config.tau / 4.0];
        let mut deviations = vec![(e_prop - e_exact).abs()];
        for &t in &taus[1..] {
            deviations.push((propagate(t)?.1 - e_exact).abs());
        }
        let ratios: Vec<f64> = deviations.windows(2).map(|w| w[0] / w[1]).collect();
        let pass = ratios.iter().all(|r| (SCALING_WINDOW.0..=SCALING_WINDOW.1).contains(r));
        Some(ScalingReport { taus, deviations, ratios, pass })
    } else {
        None
    };
    Ok(OracleReport {
        n_gates: schedule.len(),
        n_observables: extra_prop.len() + 1,
        max_deviation: max_dev,
        tolerance,
        pass: max_dev <= tolerance && lf >= -1e-12,
        energy_propagated: e_prop,
        energy_product_formula: e_pf,
        energy_exact: e_exact,
        log_partition_propagated: log_prop,
        log_partition_product_formula: log_pf,
        log_partition_exact: log_exact,
        min_accumulated_log_factor: lf,
        scaling,
    })
}

fn run_backend<B, F>(
    size: usize,
    terms: &[HamiltonianTerm<B>],
    schedule: &GateSchedule,
    backend: Backend,
    checkpoints: &[f64],
    mut observe: F,
) -> Result<()>
where
    B: BasisElement,
    F: FnMut(&CheckpointRecord, &dyn StateViewDyn<B>),
{
    match backend {
        Backend::Sparse => {
            propagate_thermal(
                size,
                terms,
                schedule,
                &TruncationPolicy::none(),
                checkpoints,
                &PropagationOptions::default(),
                |r, s| observe(r, s),
            )?;
        }
        Backend::Complete => {
            propagate_complete(size, terms, schedule, checkpoints, |r, s| observe(r, s))?;
        }
    }
    Ok(())
}

/// Energy, the same extra observables as the propagated side, and `ln Tr A`
/// of the dense product-formula state at the end of `schedule`.
fn product_formula_values(model: &BuiltModel, schedule: &GateSchedule) -> Result<(f64, Vec<f64>, f64)> {
    let end = [schedule.len()];
    match model {
        BuiltModel::Pauli { n_qubits, terms } => {
            let n = *n_qubits;
            let gates: Vec<(PauliString, f64)> =
                schedule.gates.iter().map(|g| (terms[g.term].element, g.angle)).collect();
            let mut obs: Vec<PauliString> = terms.iter().map(|t| t.element).collect();
            for i in 0..n {
                for j in i + 1..n {
                    obs.push(zz(n, i, j)?);
                }
            }
            let v = dense_product_formula_expectation(n, &gates, &obs, &end)?.remove(0);
            let e = terms.iter().zip(&v.expectations).map(|(t, x)| t.coefficient * x).sum();
            Ok((e, v.expectations, v.log_trace))
        }
        BuiltModel::Majorana(fh) => {
            let n = fh.n_generators / 2;
            let mapped: Vec<(PauliString, f64)> = fh.terms.iter().map(|t| jw_map(&t.element)).collect();
            let gates: Vec<(PauliString, f64)> = schedule
                .gates
                .iter()
                .map(|g| (mapped[g.term].0, mapped[g.term].1 * g.angle))
                .collect();
            // C_ZZ needs ⟨Z_r⟩, ⟨Z_i⟩ and ⟨Z_r Z_i⟩, all linear in mode parities
            let lat = &fh.lattice;
            let center = lat.center_index;
            let zc = crate::observables::site_spin_z(fh.n_generators, center)?;
            let mut pieces = Vec::new();
            for i in 0..lat.n_sites() {
                let zi = crate::observables::site_spin_z(fh.n_generators, i)?;
                pieces.push((crate::observables::product(&zc, &zi)?, zi));
            }
            let mut obs: Vec<PauliString> = mapped.iter().map(|m| m.0).collect();
            for (a, b) in &pieces {
                for (m, _) in a.terms.iter().chain(&b.terms).chain(&zc.terms) {
                    obs.push(jw_map(m).0);
                }
            }
            obs.sort();
            obs.dedup();
            let v = dense_product_formula_expectation(n, &gates, &obs, &end)?.remove(0);
            let val = |m: &MajoranaMonomial| {
                let (p, s) = jw_map(m);
                s * v.expectations[obs.binary_search(&p).expect("observable requested")]
            };
            let ev = |x: &crate::observables::ObservableExpansion<MajoranaMonomial>| {
                x.identity + x.terms.iter().map(|(m, c)| c * val(m)).sum::<f64>()
            };
            let term_vals: Vec<f64> = fh.terms.iter().map(|t| val(&t.element)).collect();
            let e = fh.identity_offset
                + fh.terms.iter().zip(&term_vals).map(|(t, x)| t.coefficient * x).sum::<f64>();
            let zr = ev(&zc);
            let czz = pieces.iter().map(|(a, b)| ev(a) - zr * ev(b));
            Ok((e, term_vals.iter().copied().chain(czz).collect(), v.log_trace))
        }
    }
}

/// Exact thermal energy and `ln Z` at `beta`.
fn exact_thermal(model: &BuiltModel, beta: f64) -> Result<(f64, f64)> {
    let (n, ham, offset): (usize, Vec<(PauliString, f64)>, f64) = match model {
        BuiltModel::Pauli { n_qubits, terms } => {
            (*n_qubits, terms.iter().map(|t| (t.element, t.coefficient)).collect(), 0.0)
        }
        BuiltModel::Majorana(fh) => (
            fh.n_generators / 2,
            fh.terms
                .iter()
                .map(|t| {
                    let (p, s) = jw_map(&t.element);
                    (p, s * t.coefficient)
                })
                .collect(),
            fh.identity_offset,
        ),
    };
    let obs: Vec<PauliString> = ham.iter().map(|h| h.0).collect();
    let v = dense_thermal_expectation(n, &ham, offset, &obs, &[beta])?.remove(0);
    let e = offset + ham.iter().zip(&v.expectations).map(|(h, x)| h.1 * x).sum::<f64>();
    Ok((e, v.log_partition))
}

/// Exact thermal energy of any buildable model, for sweeps and references.
pub fn exact_thermal_energy(spec: &ModelSpec, beta: f64) -> Result<f64> {
    Ok(exact_thermal(&build_model(spec)?, beta)?.0)
}

/// Writes the lattice, its edges and one correlation map per snapshot next
/// to `stem`: `<stem>.lattice.csv`, `<stem>.edges.csv` and
/// `<stem>.czz.c<cell>.r<replica>.k<checkpoint>.csv`.
pub fn write_czz_files(stem: &Path, lattice: &HexTriangularLattice, maps: &[CzzSnapshot]) -> Result<Vec<String>> {
    let with = |suffix: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(suffix);
        std::path::PathBuf::from(s)
    };
    let mut written = Vec::new();
    let p = with(".lattice.csv");
    lattice.write_csv(std::fs::File::create(&p)?)?;
    written.push(p.display().to_string());
    let p = with(".edges.csv");
    lattice.write_edges_csv(std::fs::File::create(&p)?)?;
    written.push(p.display().to_string());
    for m in maps {
        let p = with(&format!(".czz.c{}.r{}.k{}.csv", m.cell, m.replica, m.checkpoint));
        crate::observables::write_correlation_csv(std::fs::File::create(&p)?, lattice, &m.values)?;
        written.push(p.display().to_string());
    }
    Ok(written)
}
