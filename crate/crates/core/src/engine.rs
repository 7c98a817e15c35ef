//! Dual block-coordinate ascent for the distributed projection problem.
//!
//! The state keeps one dual vector `z_i` per vertex, one dual vector `v_e`
//! per edge (oriented from the smaller to the larger endpoint), and the
//! per-vertex primal images
//!
//! ```text
//! x_i = anchor − z_i − Σ_{e ∋ i} sign_i(e)·v_e
//! ```
//!
//! A vertex step jointly minimizes the dual objective over `z_i` (one exact
//! projection); an edge step minimizes over `v_e` (averaging the two
//! endpoint images). Members of a decoupled block touch disjoint coordinates,
//! so the joint block minimizer is computed member by member in any order.
//! The step functions receive only the slices they may touch, which encodes
//! the locality a message-passing deployment would have.

use thiserror::Error;

use crate::convex_sets::{ConvexSet, ProjectionError};
use crate::diagnostics::{StopReason, Trace, TraceMeta, TraceRecord};
use crate::instances::Instance;
use crate::topology::{Block, BlockMember, Schedule, ScheduleViolation};
use crate::vecops;

/// Slack multiplier for monotonicity checks: each exact block minimization
/// may only increase the dual value by rounding noise.
pub const MONOTONICITY_SLACK: f64 = 1e-12;

/// Relative drift of the incrementally maintained primal images (against a
/// from-scratch recomputation) above which a trace warning is emitted.
pub const DRIFT_WARN_REL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("state/instance dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Schedule(#[from] ScheduleViolation),
    #[error("block references unknown vertex {0}")]
    UnknownVertex(usize),
    #[error("block references unknown edge ({0}, {1})")]
    UnknownEdge(usize, usize),
    #[error("block is coupled: coordinate {0} touched twice")]
    CoupledBlock(usize),
    #[error("debug cross-check failed: {0}")]
    DebugCheck(String),
}

/// Dual variables plus maintained primal images and cached support values.
///
/// Invariants (maintained by construction, re-checked in debug runs):
/// - `primal_image(i)` matches a from-scratch recomputation to `1e-12`
///   relative;
/// - `support_value(i)` equals `δ*_{C_i}(z_i)`, through the attaining-point
///   identity `⟨z_i, x_i⟩` once vertex `i` has stepped;
/// - `Σ_i x_i + Σ_i z_i = |V|·anchor` (edge contributions cancel pairwise).
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    m: usize,
    anchor: Vec<f64>,
    vertex_dual: Vec<Vec<f64>>,
    edge_dual: Vec<Vec<f64>>,
    primal: Vec<Vec<f64>>,
    support: Vec<f64>,
}

impl DualState {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_dual.len()
    }

    pub fn vertex_duals(&self) -> &[Vec<f64>] {
        &self.vertex_dual
    }

    pub fn edge_duals(&self) -> &[Vec<f64>] {
        &self.edge_dual
    }

    pub fn primal_images(&self) -> &[Vec<f64>] {
        &self.primal
    }

    pub fn primal_image(&self, i: usize) -> &[f64] {
        &self.primal[i]
    }

    /// Cached support-function values `δ*_{C_i}(z_i)`.
    pub fn support_values(&self) -> &[f64] {
        &self.support
    }

    /// Dual objective `F(z) = Σ_i δ*_{C_i}(z_i) + ½ Σ_i ‖x_i‖²`.
    pub(crate) fn f_value(&self) -> f64 {
        let support: f64 = self.support.iter().sum();
        if support == f64::INFINITY {
            return f64::INFINITY;
        }
        support + 0.5 * self.primal.iter().map(|x| vecops::norm_sq(x)).sum::<f64>()
    }
}

/// Builds a state from zero duals, or re-derives the primal images and
/// support values from the duals of `warm`.
pub fn init_state(instance: &Instance, warm: Option<&DualState>) -> Result<DualState, EngineError> {
    check_instance_dims(instance)?;
    let n = instance.n_vertices();
    let n_edges = instance.graph.edges().len();
    match warm {
        None => DualState::from_duals(
            instance,
            vec![vec![0.0; instance.m]; n],
            vec![vec![0.0; instance.m]; n_edges],
        ),
        Some(state) => {
            DualState::from_duals(instance, state.vertex_dual.clone(), state.edge_dual.clone())
        }
    }
}

impl DualState {
    /// Builds a consistent state from explicit dual variables, e.g. to warm
    /// start from duals saved by an earlier run. Primal images and support
    /// values are re-derived, so any attained-value cache is discarded.
    pub fn from_duals(
        instance: &Instance,
        vertex_dual: Vec<Vec<f64>>,
        edge_dual: Vec<Vec<f64>>,
    ) -> Result<DualState, EngineError> {
        check_instance_dims(instance)?;
        let n = instance.n_vertices();
        let n_edges = instance.graph.edges().len();
        let dims_ok = vertex_dual.len() == n
            && edge_dual.len() == n_edges
            && vertex_dual.iter().chain(&edge_dual).all(|z| z.len() == instance.m);
        if !dims_ok {
            return Err(EngineError::Dimension(format!(
                "duals have |V|={}, |E|={}; instance needs m={}, |V|={}, |E|={}",
                vertex_dual.len(),
                edge_dual.len(),
                instance.m,
                n,
                n_edges
            )));
        }
        let primal = recompute_primal(instance, &vertex_dual, &edge_dual);
        // Analytic support values; a vertex step replaces them with the exact
        // attained value ⟨z_i, x_i⟩. For zero duals both are 0.
        let support = instance
            .sets
            .iter()
            .zip(&vertex_dual)
            .map(|(set, z)| set.support(z))
            .collect();
        Ok(DualState {
            m: instance.m,
            anchor: instance.anchor.clone(),
            vertex_dual,
            edge_dual,
            primal,
            support,
        })
    }
}

fn check_instance_dims(instance: &Instance) -> Result<(), EngineError> {
    if instance.m == 0 || instance.anchor.len() != instance.m {
        return Err(EngineError::Dimension(format!(
            "anchor has {} entries for m={}",
            instance.anchor.len(),
            instance.m
        )));
    }
    if instance.sets.len() != instance.n_vertices() {
        return Err(EngineError::Dimension(format!(
            "{} sets for {} vertices",
            instance.sets.len(),
            instance.n_vertices()
        )));
    }
    if let Some(set) = instance.sets.iter().find(|s| s.dim() != instance.m) {
        return Err(EngineError::Dimension(format!(
            "set of dimension {} in an m={} instance",
            set.dim(),
            instance.m
        )));
    }
    Ok(())
}

pub(crate) fn recompute_primal(
    instance: &Instance,
    vertex_dual: &[Vec<f64>],
    edge_dual: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let incidence = instance.graph.incidence();
    vertex_dual
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let mut x = vecops::sub(&instance.anchor, z);
            for &(e, sign) in &incidence[i] {
                vecops::add_scaled(&mut x, -sign, &edge_dual[e]);
            }
            x
        })
        .collect()
}

/// Exact minimization of the dual objective in `z_i`: project `x_i + z_i`
/// onto `C_i` and split it into the new image and the new dual. Returns the
/// squared movement of `x_i`.
fn vertex_update(
    set: &ConvexSet,
    x: &mut Vec<f64>,
    z: &mut Vec<f64>,
    support: &mut f64,
) -> Result<f64, ProjectionError> {
    let s: Vec<f64> = x.iter().zip(z.iter()).map(|(a, b)| a + b).collect();
    let pr = set.project(&s)?;
    let moved_sq = vecops::dist_sq(&pr.point, x);
    *x = pr.point;
    *z = pr.normal;
    *support = pr.support_value;
    Ok(moved_sq)
}

/// Exact minimization in `v_e`: strip the edge dual from both endpoint
/// images and average. `x_i` belongs to the smaller endpoint. Returns the
/// squared movement of `(x_i, x_j)`.
fn edge_update(x_i: &mut [f64], x_j: &mut [f64], v: &mut [f64]) -> f64 {
    let mut moved_sq = 0.0;
    for k in 0..v.len() {
        let r_i = x_i[k] + v[k];
        let r_j = x_j[k] - v[k];
        let avg = 0.5 * (r_i + r_j);
        v[k] = 0.5 * (r_i - r_j);
        moved_sq += (avg - x_i[k]).powi(2) + (avg - x_j[k]).powi(2);
        x_i[k] = avg;
        x_j[k] = avg;
    }
    moved_sq
}

/// A block step report; `moved` is the Euclidean norm of the primal-image
/// change across the touched vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub block: Block,
    pub f_before: f64,
    pub f_after: f64,
    pub moved: f64,
}

/// Applies one decoupled block: the joint dual minimizer over its members.
pub fn run_block(
    state: &mut DualState,
    instance: &Instance,
    block: &Block,
) -> Result<StepReport, EngineError> {
    let f_before = state.f_value();
    let moved_sq = apply_block(state, instance, block)?;
    let f_after = state.f_value();
    Ok(StepReport { block: block.clone(), f_before, f_after, moved: moved_sq.sqrt() })
}

fn apply_block(state: &mut DualState, instance: &Instance, block: &Block) -> Result<f64, EngineError> {
    if let Some(first_clash) = coupled_coordinate(block) {
        return Err(EngineError::CoupledBlock(first_clash));
    }
    let n = state.n_vertices();
    let mut moved_sq = 0.0;
    for member in &block.members {
        match *member {
            BlockMember::Vertex(i) => {
                if i >= n {
                    return Err(EngineError::UnknownVertex(i));
                }
                moved_sq += vertex_update(
                    &instance.sets[i],
                    &mut state.primal[i],
                    &mut state.vertex_dual[i],
                    &mut state.support[i],
                )?;
            }
            BlockMember::Edge(i, j) => {
                let idx = instance
                    .graph
                    .edge_index(i, j)
                    .ok_or(EngineError::UnknownEdge(i, j))?;
                let (lo, hi) = instance.graph.edges()[idx];
                let [x_lo, x_hi] = state
                    .primal
                    .get_disjoint_mut([lo, hi])
                    .expect("canonical edges have distinct endpoints");
                moved_sq += edge_update(x_lo, x_hi, &mut state.edge_dual[idx]);
            }
        }
    }
    Ok(moved_sq)
}

fn coupled_coordinate(block: &Block) -> Option<usize> {
    let mut seen = std::collections::BTreeSet::new();
    for member in &block.members {
        for c in member.touched() {
            if !seen.insert(c) {
                return Some(c);
            }
        }
    }
    None
}

/// Single-vertex step.
pub fn vertex_step(state: &mut DualState, instance: &Instance, i: usize) -> Result<StepReport, EngineError> {
    run_block(state, instance, &Block::new(vec![BlockMember::Vertex(i)]))
}

/// Single-edge step.
pub fn edge_step(
    state: &mut DualState,
    instance: &Instance,
    i: usize,
    j: usize,
) -> Result<StepReport, EngineError> {
    run_block(state, instance, &Block::new(vec![BlockMember::Edge(i.min(j), i.max(j))]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_cycles: usize,
    /// Certified-gap threshold: stop once `2F ≤ gap_eps²` on normalized
    /// instances (the bound `max_i ‖x_i‖ ≤ √(2F)` is then below `gap_eps`).
    pub gap_eps: f64,
    /// Plateau fallback for instances without a normalized certificate.
    pub plateau_cycles: usize,
    pub plateau_rel: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { max_cycles: 10_000, gap_eps: 1e-8, plateau_cycles: 10, plateau_rel: 1e-15 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Re-derives every maintained quantity from scratch after each block and
    /// fails loudly on disagreement.
    pub debug: bool,
}

#[derive(Debug)]
pub struct RunOutput {
    pub state: DualState,
    pub trace: Trace,
}

/// Runs the schedule until a stop rule fires, recording a trace entry per
/// block and per cycle boundary. Cycle `n` uses `schedule.cycles[(n-1) % len]`,
/// so a short schedule repeats.
pub fn run(
    instance: &Instance,
    schedule: &Schedule,
    stop: &StopRule,
    opts: &RunOptions,
) -> Result<RunOutput, EngineError> {
    run_from(init_state(instance, None)?, instance, schedule, stop, opts)
}

/// Same as [`run`] but continues from an existing state, e.g. to extend a
/// run whose cycle budget expired. Trace cycle numbering restarts at 1; the
/// state must come from the same instance.
pub fn run_from(
    mut state: DualState,
    instance: &Instance,
    schedule: &Schedule,
    stop: &StopRule,
    opts: &RunOptions,
) -> Result<RunOutput, EngineError> {
    crate::topology::validate_schedule(&instance.graph, schedule)?;
    if state.m != instance.m
        || state.vertex_dual.len() != instance.n_vertices()
        || state.edge_dual.len() != instance.graph.edges().len()
        || state.anchor != instance.anchor
    {
        return Err(EngineError::Dimension(
            "state does not match the instance it is resumed on".to_string(),
        ));
    }
    let normalized = instance.is_normalized();
    let x_star = instance.certificate.as_ref().map(|c| c.x_star.clone());

    let mut trace = Trace {
        records: Vec::new(),
        meta: TraceMeta {
            seed: instance.seed_info.as_ref().map(|s| s.seed),
            policy: schedule.policy.clone(),
            stop_reason: None,
            cycles: 0,
            warnings: Some(Vec::new()),
        },
    };
    let mut boundary_f = Vec::new();

    // Per-vertex distance vectors are kept only at cycle boundaries; block
    // records carry just the maximum, matching what the file format stores.
    let record = |state: &DualState, n: usize, w: usize, f: f64, moved: f64| -> TraceRecord {
        let gap = normalized.then(|| certified_gap(f, half_image_norm_sq(state)));
        let dist_max = x_star.as_ref().map(|xs| {
            state
                .primal
                .iter()
                .fold(0.0f64, |m, x| m.max(vecops::dist(x, xs)))
        });
        let per_vertex_distance = if w == 0 {
            x_star
                .as_ref()
                .map(|xs| state.primal.iter().map(|x| vecops::dist(x, xs)).collect::<Vec<f64>>())
        } else {
            None
        };
        TraceRecord { n, w, f, gap, per_vertex_distance, dist_max, moved }
    };

    let f0 = state.f_value();
    trace.records.push(record(&state, 1, 0, f0, 0.0));
    boundary_f.push(f0);

    let mut stop_reason = None;
    if normalized && gap_fires(f0, half_image_norm_sq(&state), stop.gap_eps) {
        stop_reason = Some(StopReason::GapCertified);
    }

    let mut n = 0;
    while stop_reason.is_none() && n < stop.max_cycles {
        n += 1;
        let cycle = &schedule.cycles[(n - 1) % schedule.cycles.len()];
        for (w, block) in cycle.iter().enumerate() {
            let report = run_block(&mut state, instance, block)?;
            if opts.debug {
                debug_checks(&state, instance, &report)?;
            }
            trace
                .records
                .push(record(&state, n, w + 1, report.f_after, report.moved));
        }

        // Periodic exact recomputation bounds incremental drift; adopting the
        // recomputed images keeps later cycles anchored to the duals.
        let fresh = recompute_primal(instance, &state.vertex_dual, &state.edge_dual);
        let scale = 1.0 + vecops::max_abs(&state.anchor);
        let drift = state
            .primal
            .iter()
            .zip(&fresh)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .fold(0.0f64, |mx, (u, v)| mx.max((u - v).abs()))
            })
            .fold(0.0f64, f64::max)
            / scale;
        if drift > DRIFT_WARN_REL {
            if let Some(warnings) = &mut trace.meta.warnings {
                warnings.push(format!("cycle {n}: primal drift {drift:.3e} forced a hard recompute"));
            }
        }
        state.primal = fresh;

        let f = state.f_value();
        trace.records.push(record(&state, n + 1, 0, f, 0.0));
        boundary_f.push(f);

        if normalized {
            if gap_fires(f, half_image_norm_sq(&state), stop.gap_eps) {
                stop_reason = Some(StopReason::GapCertified);
            }
        } else if boundary_f.len() > stop.plateau_cycles {
            let f_old = boundary_f[boundary_f.len() - 1 - stop.plateau_cycles];
            if f_old - f < stop.plateau_rel * (1.0 + f_old.abs()) {
                stop_reason = Some(StopReason::Plateau);
            }
        }
    }

    trace.meta.cycles = n;
    trace.meta.stop_reason = Some(stop_reason.unwrap_or(StopReason::MaxCycles));
    Ok(RunOutput { state, trace })
}

fn half_image_norm_sq(state: &DualState) -> f64 {
    0.5 * state.primal.iter().map(|x| vecops::norm_sq(x)).sum::<f64>()
}

/// Certified distance bound on normalized instances.
///
/// Mathematically `F ≥ ½Σ‖x_i‖²` (every support value is nonnegative when
/// the sets contain the origin), so `√(2F)` dominates `max_i ‖x_i‖`. The
/// computed `F` loses that property once it reaches cancellation noise
/// (support terms of magnitude ~‖z‖·ε can push it slightly negative while
/// the images are still ~1e-8); the half-norm term has no cancellation, so
/// taking the max restores the exact-arithmetic inequality.
pub(crate) fn certified_gap(f: f64, half_norm_sq: f64) -> f64 {
    (2.0 * f.max(half_norm_sq)).sqrt()
}

fn gap_fires(f: f64, half_norm_sq: f64, eps: f64) -> bool {
    2.0 * f.max(half_norm_sq) <= eps * eps
}

fn debug_checks(state: &DualState, instance: &Instance, report: &StepReport) -> Result<(), EngineError> {
    if report.f_after > report.f_before + MONOTONICITY_SLACK * (1.0 + report.f_before.abs()) {
        return Err(EngineError::DebugCheck(format!(
            "dual value rose across block {:?}: {} -> {}",
            report.block, report.f_before, report.f_after
        )));
    }
    let fresh = recompute_primal(instance, &state.vertex_dual, &state.edge_dual);
    let scale = 1.0 + vecops::max_abs(&state.anchor);
    for (i, (a, b)) in state.primal.iter().zip(&fresh).enumerate() {
        let diff = a.iter().zip(b).fold(0.0f64, |mx, (u, v)| mx.max((u - v).abs()));
        if diff > 1e-10 * scale {
            return Err(EngineError::DebugCheck(format!(
                "maintained primal image {i} drifted {diff:.3e} from its duals"
            )));
        }
    }
    for (i, (set, z)) in instance.sets.iter().zip(&state.vertex_dual).enumerate() {
        let analytic = set.support(z);
        let cached = state.support[i];
        if !analytic.is_finite() || (analytic - cached).abs() > 1e-9 * (1.0 + cached.abs()) {
            return Err(EngineError::DebugCheck(format!(
                "support cache at vertex {i} is {cached}, analytic value is {analytic}"
            )));
        }
    }
    Ok(())
}
