//! Traces, certificates and convergence diagnostics.
//!
//! A trace is the per-step history of a run: one record per block step plus
//! one record per cycle boundary (`w = 0`). Boundary records carry the dual
//! value after a full cycle, which is the sequence the linear-rate fit and
//! the monotonicity audit consume.
//!
//! On a normalized instance (optimum at the origin) the dual value is a
//! certificate: `max_i ‖x_i‖ ≤ √(2·F(z))`, so driving `F` to zero certifies
//! convergence without knowing the optimum.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::DualState;
use crate::instances::Instance;
use crate::vecops;

/// Additive slack when checking `dist_max ≤ gap` on recorded traces.
pub const GAP_SLACK: f64 = 1e-10;

/// Relative slack per transition when checking that the dual value never
/// increases along a trace.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Minimum number of usable boundary points for a rate fit.
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("gap certificate requires a normalized instance (optimum at the origin)")]
    NotNormalized,
    #[error("rate fit needs at least {need} usable boundary points, got {got}")]
    TooFewPoints { got: usize, need: usize },
    #[error("rate fit tail must lie in (0, 1], got {0}")]
    BadTail(f64),
    #[error("trace line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `√(2F)` fell below the requested gap threshold.
    GapCertified,
    /// The dual value stopped decreasing (non-normalized instances).
    Plateau,
    /// The cycle budget ran out before any certificate fired.
    MaxCycles,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::GapCertified => "gap_certified",
            StopReason::Plateau => "plateau",
            StopReason::MaxCycles => "max_cycles",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One trace entry. Cycle boundaries use `w = 0` (the state before cycle `n`
/// starts); block `w ≥ 1` of cycle `n` reports the state just after it ran.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub n: usize,
    pub w: usize,
    /// Dual objective value.
    pub f: f64,
    /// Certified bound `√(2·max(f, ½Σ‖x_i‖²))`; only on normalized instances.
    /// The two arguments agree exactly in real arithmetic; the max guards
    /// against cancellation noise in the support sum near convergence.
    pub gap: Option<f64>,
    /// `‖x_i − x*‖` per vertex; present on in-process boundary records of
    /// certified instances (files and block records keep just the maximum).
    pub per_vertex_distance: Option<Vec<f64>>,
    /// `max_i ‖x_i − x*‖`; survives a round trip through JSONL.
    pub dist_max: Option<f64>,
    /// Norm of the primal-image change produced by this step.
    pub moved: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceMeta {
    pub seed: Option<u64>,
    pub policy: String,
    pub stop_reason: Option<StopReason>,
    pub cycles: usize,
    /// `Some` for in-process traces (possibly empty); `None` once a trace has
    /// been reloaded from disk, where warnings are not persisted.
    pub warnings: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub meta: TraceMeta,
}

/// Serialized line shape: keys `n, w, f, gap, dist_max, moved`, with `null`
/// for absent or non-finite values.
#[derive(Serialize, Deserialize)]
struct LineRecord {
    n: usize,
    w: usize,
    f: Option<f64>,
    gap: Option<f64>,
    dist_max: Option<f64>,
    moved: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Trace {
    /// Boundary records (`w = 0`) in trace order.
    pub fn boundary_records(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.w == 0)
    }

    pub fn final_f(&self) -> Option<f64> {
        self.records.last().map(|r| r.f)
    }

    /// Writes one JSON object per record.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<(), DiagnosticsError> {
        for r in &self.records {
            let line = LineRecord {
                n: r.n,
                w: r.w,
                f: finite(r.f),
                gap: r.gap.and_then(finite),
                dist_max: r.dist_max.and_then(finite),
                moved: finite(r.moved),
            };
            serde_json::to_writer(&mut *out, &line)
                .map_err(|e| DiagnosticsError::Parse { line: 0, source: e })?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a JSONL trace. Run metadata is not stored in the file, so the
    /// result has `warnings: None` and no stop reason; audits on such traces
    /// skip the warning check instead of passing it vacuously.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Trace, DiagnosticsError> {
        let mut records = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LineRecord = serde_json::from_str(&line)
                .map_err(|e| DiagnosticsError::Parse { line: idx + 1, source: e })?;
            records.push(TraceRecord {
                n: rec.n,
                w: rec.w,
                f: rec.f.unwrap_or(f64::NAN),
                gap: rec.gap,
                per_vertex_distance: None,
                dist_max: rec.dist_max,
                moved: rec.moved.unwrap_or(f64::NAN),
            });
        }
        Ok(Trace {
            records,
            meta: TraceMeta { warnings: None, ..TraceMeta::default() },
        })
    }
}

/// Dual objective evaluated from the dual variables alone: primal images are
/// rebuilt from scratch and support values come from the set descriptions,
/// independent of anything the engine cached.
pub fn dual_value(state: &DualState, instance: &Instance) -> f64 {
    let primal = crate::engine::recompute_primal(instance, state.vertex_duals(), state.edge_duals());
    let support: f64 = instance
        .sets
        .iter()
        .zip(state.vertex_duals())
        .map(|(set, z)| set.support(z))
        .sum();
    if support == f64::INFINITY {
        return f64::INFINITY;
    }
    support + 0.5 * primal.iter().map(|x| vecops::norm_sq(x)).sum::<f64>()
}

/// Certified distance bound `max_i ‖x_i − x*‖ ≤ √(2F)`, valid only when the
/// instance is normalized so that `x* = 0`. The dual value is floored at its
/// provable lower bound `½Σ‖x_i‖²` to keep the certificate valid when the
/// computed supports cancel to rounding noise.
pub fn gap_bound(state: &DualState, instance: &Instance) -> Result<f64, DiagnosticsError> {
    if !instance.is_normalized() {
        return Err(DiagnosticsError::NotNormalized);
    }
    let primal = crate::engine::recompute_primal(instance, state.vertex_duals(), state.edge_duals());
    let half: f64 = 0.5 * primal.iter().map(|x| vecops::norm_sq(x)).sum::<f64>();
    let support: f64 = instance
        .sets
        .iter()
        .zip(state.vertex_duals())
        .map(|(set, z)| set.support(z))
        .sum();
    let f = if support == f64::INFINITY { f64::INFINITY } else { support + half };
    Ok(crate::engine::certified_gap(f, half))
}

/// Least-squares fit of `ln F` against the cycle index over the tail of the
/// boundary sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// `exp(log_slope)`: the per-cycle contraction factor.
    pub rate: f64,
    pub log_slope: f64,
    pub r_squared: f64,
    /// First and last cycle index in the fitted window.
    pub window: (usize, usize),
    pub n_points: usize,
    /// Worst single-cycle ratio `F_{n+1}/F_n` inside the window.
    pub one_cycle_ratio: f64,
    /// Worst two-cycle ratio `F_{n+2}/F_n` inside the window (`NaN` if the
    /// window has fewer than three points).
    pub two_cycle_ratio: f64,
}

/// Fits a linear rate to the boundary dual values.
///
/// Points are usable while they sit above a floor of `100·ε·F₁` (values at
/// rounding level carry no rate information); the fit uses the trailing
/// `tail` fraction of the usable points, never fewer than two.
pub fn fit_rate(trace: &Trace, tail: f64) -> Result<RateFit, DiagnosticsError> {
    if !(tail > 0.0 && tail <= 1.0) {
        return Err(DiagnosticsError::BadTail(tail));
    }
    let boundary: Vec<(usize, f64)> = trace
        .boundary_records()
        .filter(|r| r.f.is_finite())
        .map(|r| (r.n, r.f))
        .collect();
    let floor = boundary
        .first()
        .map(|&(_, f1)| 100.0 * f64::EPSILON * f1.max(0.0))
        .unwrap_or(0.0);
    let usable: Vec<(usize, f64)> = boundary.into_iter().filter(|&(_, f)| f > floor).collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(DiagnosticsError::TooFewPoints { got: usable.len(), need: MIN_FIT_POINTS });
    }
    let count = ((tail * usable.len() as f64).ceil() as usize).clamp(2, usable.len());
    let window = &usable[usable.len() - count..];

    let xs: Vec<f64> = window.iter().map(|&(n, _)| n as f64).collect();
    let ys: Vec<f64> = window.iter().map(|&(_, f)| f.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };

    let one_cycle_ratio = window
        .windows(2)
        .map(|p| p[1].1 / p[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    let two_cycle_ratio = if window.len() >= 3 {
        window
            .windows(3)
            .map(|p| p[2].1 / p[0].1)
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::NAN
    };

    Ok(RateFit {
        rate: slope.exp(),
        log_slope: slope,
        r_squared,
        window: (window[0].0, window[window.len() - 1].0),
        n_points: window.len(),
        one_cycle_ratio,
        two_cycle_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditStatus {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for AuditStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuditStatus::Pass => "PASS",
            AuditStatus::Fail => "FAIL",
            AuditStatus::Skipped => "SKIPPED",
        })
    }
}

#[derive(Debug, Clone)]
pub struct AuditCheck {
    pub name: &'static str,
    pub status: AuditStatus,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    /// True when no check failed (skipped checks do not fail an audit).
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != AuditStatus::Fail)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for check in &self.checks {
            writeln!(f, "{:<24} {:<8} {}", check.name, check.status, check.detail)?;
        }
        write!(f, "audit: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Consistency checks every honest trace must satisfy:
/// descent of the dual value across each step, domination of the measured
/// distance by the certified gap, and absence of drift warnings.
pub fn audit(trace: &Trace) -> AuditReport {
    let mut checks = Vec::new();

    let mut transitions = 0usize;
    let mut violation = None;
    for (k, pair) in trace.records.windows(2).enumerate() {
        let (prev, next) = (&pair[0], &pair[1]);
        if !prev.f.is_finite() || !next.f.is_finite() {
            continue;
        }
        transitions += 1;
        if next.f > prev.f + MONOTONE_SLACK * (1.0 + prev.f.abs()) {
            violation = Some((k, prev.f, next.f));
            break;
        }
    }
    checks.push(match violation {
        None => AuditCheck {
            name: "monotone_dual_value",
            status: AuditStatus::Pass,
            detail: format!("{transitions} transitions checked"),
        },
        Some((k, before, after)) => AuditCheck {
            name: "monotone_dual_value",
            status: AuditStatus::Fail,
            detail: format!("record {} -> {}: f rose from {before} to {after}", k, k + 1),
        },
    });

    let mut certified = 0usize;
    let mut gap_violation = None;
    for (k, r) in trace.records.iter().enumerate() {
        if let (Some(gap), Some(dist)) = (r.gap, r.dist_max) {
            certified += 1;
            if dist > gap + GAP_SLACK {
                gap_violation = Some((k, gap, dist));
                break;
            }
        }
    }
    checks.push(if certified == 0 {
        AuditCheck {
            name: "gap_dominates_distance",
            status: AuditStatus::Skipped,
            detail: "no records carry both a gap and a distance".into(),
        }
    } else {
        match gap_violation {
            None => AuditCheck {
                name: "gap_dominates_distance",
                status: AuditStatus::Pass,
                detail: format!("{certified} certified records checked"),
            },
            Some((k, gap, dist)) => AuditCheck {
                name: "gap_dominates_distance",
                status: AuditStatus::Fail,
                detail: format!("record {k}: distance {dist} exceeds certified gap {gap}"),
            },
        }
    });

    checks.push(match &trace.meta.warnings {
        None => AuditCheck {
            name: "drift_warnings",
            status: AuditStatus::Skipped,
            detail: "trace was loaded from a file; run warnings are not persisted".into(),
        },
        Some(w) if w.is_empty() => AuditCheck {
            name: "drift_warnings",
            status: AuditStatus::Pass,
            detail: "no warnings emitted".into(),
        },
        Some(w) => AuditCheck {
            name: "drift_warnings",
            status: AuditStatus::Fail,
            detail: w.join("; "),
        },
    });

    AuditReport { checks }
}

/// One-row summary in CSV form (`seed,policy,cycles,final_f,rate,r2,stop_reason`).
/// Fit failures surface as `nan` rather than an error: a summary must always
/// be writable.
pub fn summary_csv(trace: &Trace, fit_tail: f64) -> String {
    let (rate, r2) = match fit_rate(trace, fit_tail) {
        Ok(fit) => (fit.rate, fit.r_squared),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let seed = trace.meta.seed.map(|s| s.to_string()).unwrap_or_default();
    let stop = trace
        .meta
        .stop_reason
        .map(|r| r.name().to_string())
        .unwrap_or_else(|| "unknown".into());
    format!(
        "seed,policy,cycles,final_f,rate,r2,stop_reason\n{},{},{},{},{},{},{}\n",
        seed,
        trace.meta.policy,
        trace.meta.cycles,
        trace.final_f().unwrap_or(f64::NAN),
        rate,
        r2,
        stop
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boundary_trace(fs: &[f64]) -> Trace {
        Trace {
            records: fs
                .iter()
                .enumerate()
                .map(|(k, &f)| TraceRecord {
                    n: k + 1,
                    w: 0,
                    f,
                    gap: None,
                    per_vertex_distance: None,
                    dist_max: None,
                    moved: 0.0,
                })
                .collect(),
            meta: TraceMeta { warnings: Some(Vec::new()), ..TraceMeta::default() },
        }
    }

    #[test]
    fn jsonl_round_trip_preserves_records() {
        let trace = Trace {
            records: vec![
                TraceRecord {
                    n: 1,
                    w: 0,
                    f: 2.5,
                    gap: Some((2.0 * 2.5f64).sqrt()),
                    per_vertex_distance: Some(vec![0.5, 1.25]),
                    dist_max: Some(1.25),
                    moved: 0.0,
                },
                TraceRecord {
                    n: 1,
                    w: 1,
                    f: 1.25,
                    gap: None,
                    per_vertex_distance: None,
                    dist_max: None,
                    moved: 0.75,
                },
            ],
            meta: TraceMeta {
                seed: Some(7),
                policy: "cyclic_v_first".into(),
                stop_reason: Some(StopReason::GapCertified),
                cycles: 1,
                warnings: Some(Vec::new()),
            },
        };
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().starts_with("{\"n\":1,\"w\":0,\"f\":2.5,"));
        assert!(text.lines().nth(1).unwrap().contains("\"gap\":null"));

        let back = Trace::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.records.len(), 2);
        assert_eq!(back.records[0].f, 2.5);
        assert_eq!(back.records[0].dist_max, Some(1.25));
        assert_eq!(back.records[0].per_vertex_distance, None);
        assert_eq!(back.records[1].gap, None);
        assert_eq!(back.meta.warnings, None);
    }

    #[test]
    fn non_finite_values_serialize_as_null() {
        let mut trace = boundary_trace(&[1.0]);
        trace.records[0].f = f64::INFINITY;
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"f\":null"));
        let back = Trace::read_jsonl(buf.as_slice()).unwrap();
        assert!(back.records[0].f.is_nan());
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let data = "{\"n\":1,\"w\":0,\"f\":1.0,\"gap\":null,\"dist_max\":null,\"moved\":0.0}\nnot json\n";
        let err = Trace::read_jsonl(data.as_bytes()).unwrap_err();
        match err {
            DiagnosticsError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn exact_geometric_sequence_fits_its_ratio() {
        let fs: Vec<f64> = (1..=40).map(|n| 0.5f64.powi(n)).collect();
        let fit = fit_rate(&boundary_trace(&fs), 0.5).unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.window, (21, 40));
        assert_eq!(fit.n_points, 20);
        assert!((fit.one_cycle_ratio - 0.5).abs() < 1e-12);
        assert!((fit.two_cycle_ratio - 0.25).abs() < 1e-12);
    }

    #[test]
    fn full_tail_uses_every_usable_point() {
        let fs: Vec<f64> = (1..=12).map(|n| 0.9f64.powi(n)).collect();
        let fit = fit_rate(&boundary_trace(&fs), 1.0).unwrap();
        assert_eq!(fit.window, (1, 12));
        assert_eq!(fit.n_points, 12);
    }

    #[test]
    fn points_at_rounding_level_are_dropped() {
        let mut fs: Vec<f64> = (1..=30).map(|n| 0.5f64.powi(n)).collect();
        fs.extend(std::iter::repeat(1e-20).take(10));
        let fit = fit_rate(&boundary_trace(&fs), 1.0).unwrap();
        // 0.5^30 ≈ 9.3e-10 still sits above the 100·ε floor; the 1e-20 tail
        // does not.
        assert_eq!(fit.window, (1, 30));
        assert!((fit.rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let fs: Vec<f64> = (1..=5).map(|n| 0.5f64.powi(n)).collect();
        match fit_rate(&boundary_trace(&fs), 1.0) {
            Err(DiagnosticsError::TooFewPoints { got: 5, need }) => {
                assert_eq!(need, MIN_FIT_POINTS)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_tail_is_an_error() {
        let fs: Vec<f64> = (1..=20).map(|n| 0.5f64.powi(n)).collect();
        assert!(matches!(fit_rate(&boundary_trace(&fs), 0.0), Err(DiagnosticsError::BadTail(_))));
        assert!(matches!(fit_rate(&boundary_trace(&fs), 1.5), Err(DiagnosticsError::BadTail(_))));
    }

    #[test]
    fn constant_sequence_has_unit_rate_and_perfect_fit() {
        let fit = fit_rate(&boundary_trace(&[0.25; 15]), 1.0).unwrap();
        assert_eq!(fit.rate, 1.0);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn audit_flags_a_dual_increase() {
        let trace = boundary_trace(&[1.0, 0.5, 0.7]);
        let report = audit(&trace);
        assert!(!report.passed());
        let check = report.checks.iter().find(|c| c.name == "monotone_dual_value").unwrap();
        assert_eq!(check.status, AuditStatus::Fail);
        assert!(check.detail.contains("0.7"));
    }

    #[test]
    fn audit_accepts_rounding_noise() {
        let f0 = 1.0;
        let trace = boundary_trace(&[f0, f0 + 1e-13 * (1.0 + f0)]);
        assert!(audit(&trace).passed());
    }

    #[test]
    fn audit_checks_gap_domination() {
        let mut trace = boundary_trace(&[1.0, 0.5]);
        trace.records[0].gap = Some(1.0);
        trace.records[0].dist_max = Some(0.5);
        assert!(audit(&trace).passed());
        trace.records[0].dist_max = Some(1.5);
        let report = audit(&trace);
        assert!(!report.passed());
        assert!(report.checks.iter().any(|c| c.name == "gap_dominates_distance"
            && c.status == AuditStatus::Fail));
    }

    #[test]
    fn audit_skips_what_it_cannot_see() {
        let mut trace = boundary_trace(&[1.0, 0.5]);
        trace.meta.warnings = None;
        let report = audit(&trace);
        assert!(report.passed());
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "drift_warnings" && c.status == AuditStatus::Skipped));
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "gap_dominates_distance" && c.status == AuditStatus::Skipped));
    }

    #[test]
    fn audit_fails_on_recorded_warnings() {
        let mut trace = boundary_trace(&[1.0, 0.5]);
        trace.meta.warnings = Some(vec!["cycle 3: primal drift 2e-7 forced a hard recompute".into()]);
        let report = audit(&trace);
        assert!(!report.passed());
    }

    #[test]
    fn summary_has_fixed_header_and_one_row() {
        let mut trace = boundary_trace(&(1..=20).map(|n| 0.5f64.powi(n)).collect::<Vec<_>>());
        trace.meta.seed = Some(42);
        trace.meta.policy = "singleton_cyclic".into();
        trace.meta.stop_reason = Some(StopReason::MaxCycles);
        trace.meta.cycles = 19;
        let csv = summary_csv(&trace, 0.5);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("seed,policy,cycles,final_f,rate,r2,stop_reason"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("42,singleton_cyclic,19,"));
        assert!(row.ends_with(",max_cycles"));
        assert_eq!(lines.next(), None);
    }
}
