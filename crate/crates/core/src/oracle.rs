//! Centralized reference solver: classical Dykstra iteration on one machine.
//!
//! This is an independent implementation of the same projection problem the
//! distributed engine solves, used to cross-check solutions: it keeps a
//! single point and one correction vector per set, sweeping the sets in
//! order. The invariant `point + Σ_l corrections_l = anchor` holds exactly
//! throughout, so at convergence the corrections are normal-cone
//! certificates for the centralized problem and, scaled by the number of
//! sets, multipliers for the per-vertex formulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::convex_sets::{ConvexSet, ProjectionError, DEFAULT_FEAS_TOL};
use crate::vecops;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no sets to intersect")]
    NoSets,
    #[error("set {index} has dimension {set_dim}, anchor has {anchor_dim}")]
    Dimension { index: usize, set_dim: usize, anchor_dim: usize },
    #[error("candidate violates set {index} by {distance}")]
    Infeasible { index: usize, distance: f64 },
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub max_iter: usize,
    /// Convergence threshold on the point displacement across one full sweep.
    pub tol: f64,
    /// Probe count for `certify`.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings { max_iter: 100_000, tol: 1e-10, n_samples: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub point: Vec<f64>,
    /// Per-set Dykstra corrections; `anchor − point = Σ corrections` exactly.
    pub corrections: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Point displacement over the last completed sweep.
    pub displacement: f64,
    pub converged: bool,
}

impl OracleResult {
    /// Multipliers for the vertex-per-set formulation, where each of the `n`
    /// vertices contributes its own half-squared-distance term: scaling the
    /// corrections by `n` makes their sum equal `n·(anchor − point)`.
    pub fn certificate_multipliers(&self) -> Vec<Vec<f64>> {
        let n = self.corrections.len() as f64;
        self.corrections
            .iter()
            .map(|p| p.iter().map(|v| n * v).collect())
            .collect()
    }
}

fn check_dims(sets: &[ConvexSet], anchor: &[f64]) -> Result<(), OracleError> {
    if sets.is_empty() {
        return Err(OracleError::NoSets);
    }
    for (index, set) in sets.iter().enumerate() {
        if set.dim() != anchor.len() {
            return Err(OracleError::Dimension {
                index,
                set_dim: set.dim(),
                anchor_dim: anchor.len(),
            });
        }
    }
    Ok(())
}

/// Projects `anchor` onto the intersection of `sets` by cyclic Dykstra
/// sweeps. Non-convergence within the budget is reported through the
/// `converged` flag, not as an error: the partial point is still useful.
pub fn centralized_dykstra(
    sets: &[ConvexSet],
    anchor: &[f64],
    settings: &OracleSettings,
) -> Result<OracleResult, OracleError> {
    check_dims(sets, anchor)?;
    let mut point = anchor.to_vec();
    let mut corrections = vec![vec![0.0; anchor.len()]; sets.len()];
    let mut iterations = 0;
    let mut displacement = f64::INFINITY;
    while iterations < settings.max_iter {
        iterations += 1;
        let sweep_start = point.clone();
        for (set, p) in sets.iter().zip(&mut corrections) {
            let s: Vec<f64> = point.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
            let pr = set.project(&s)?;
            for k in 0..s.len() {
                p[k] = s[k] - pr.point[k];
            }
            point = pr.point;
        }
        displacement = vecops::dist(&point, &sweep_start);
        if displacement <= settings.tol {
            return Ok(OracleResult { point, corrections, iterations, displacement, converged: true });
        }
    }
    Ok(OracleResult { point, corrections, iterations, displacement, converged: false })
}

/// Optimality score for a feasible candidate projection of `anchor`.
///
/// The candidate is the true projection iff `⟨anchor − c, y − c⟩ ≤ 0` for
/// every `y` in the intersection. Feasible probes are manufactured by
/// projecting Gaussian perturbations of the candidate back into the
/// intersection; the score is the worst (clamped at zero) inner product
/// over the probes. A clear positive score refutes optimality; a zero score
/// is supporting evidence.
pub fn certify(
    sets: &[ConvexSet],
    anchor: &[f64],
    candidate: &[f64],
    settings: &OracleSettings,
) -> Result<f64, OracleError> {
    check_dims(sets, anchor)?;
    let scale = 1.0 + vecops::norm(candidate);
    for (index, set) in sets.iter().enumerate() {
        let pr = set.project(candidate)?;
        let distance = vecops::dist(&pr.point, candidate);
        if distance > DEFAULT_FEAS_TOL * scale {
            return Err(OracleError::Infeasible { index, distance });
        }
    }
    let pull = vecops::sub(anchor, candidate);
    let mut worst: f64 = 0.0;
    for sample in 0..settings.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_add(sample as u64));
        let probe: Vec<f64> = candidate
            .iter()
            .map(|&c| c + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let feasible = centralized_dykstra(sets, &probe, settings)?.point;
        let step = vecops::sub(&feasible, candidate);
        worst = worst.max(vecops::dot(&pull, &step));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadrant_sets() -> Vec<ConvexSet> {
        vec![
            ConvexSet::halfspace(vec![1.0, 0.0], 0.0).unwrap(),
            ConvexSet::halfspace(vec![0.0, 1.0], 0.0).unwrap(),
        ]
    }

    #[test]
    fn two_halfspaces_project_to_the_corner() {
        let result = centralized_dykstra(&quadrant_sets(), &[1.0, 1.0], &OracleSettings::default()).unwrap();
        assert!(result.converged);
        assert!(vecops::dist(&result.point, &[0.0, 0.0]) < 1e-12);
        assert!(vecops::dist(&result.corrections[0], &[1.0, 0.0]) < 1e-12);
        assert!(vecops::dist(&result.corrections[1], &[0.0, 1.0]) < 1e-12);
    }

    #[test]
    fn corrections_sum_to_anchor_minus_point() {
        let sets = vec![
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
            ConvexSet::halfspace(vec![1.0, 0.0], 0.0).unwrap(),
        ];
        let anchor = [2.0, 0.0];
        let result = centralized_dykstra(&sets, &anchor, &OracleSettings::default()).unwrap();
        assert!(result.converged);
        // The ball caps the norm at 1 and the halfspace kills the first
        // coordinate; the only point satisfying both at minimal distance to
        // (2, 0) is the origin.
        assert!(vecops::dist(&result.point, &[0.0, 0.0]) < 1e-7);
        let mut total = vec![0.0; 2];
        for p in &result.corrections {
            vecops::add_scaled(&mut total, 1.0, p);
        }
        let expected = vecops::sub(&anchor, &result.point);
        assert!(vecops::dist(&total, &expected) < 1e-14);
    }

    #[test]
    fn box_and_ball_with_inactive_ball() {
        let sets = vec![
            ConvexSet::box_bounds(vec![-1.0, -1.0], vec![0.0, 0.5]).unwrap(),
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
        ];
        let result = centralized_dykstra(&sets, &[1.0, 0.8], &OracleSettings::default()).unwrap();
        assert!(result.converged);
        assert!(vecops::dist(&result.point, &[0.0, 0.5]) < 1e-10);
    }

    #[test]
    fn scaled_multipliers_sum_correctly() {
        let sets = quadrant_sets();
        let anchor = [1.0, 1.0];
        let result = centralized_dykstra(&sets, &anchor, &OracleSettings::default()).unwrap();
        let mult = result.certificate_multipliers();
        let mut total = vec![0.0; 2];
        for z in &mult {
            vecops::add_scaled(&mut total, 1.0, z);
        }
        let expected: Vec<f64> = anchor
            .iter()
            .zip(&result.point)
            .map(|(a, x)| 2.0 * (a - x))
            .collect();
        assert!(vecops::dist(&total, &expected) < 1e-12);
    }

    #[test]
    fn budget_exhaustion_is_reported_not_hidden() {
        let sets = vec![
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
            ConvexSet::halfspace(vec![1.0, 0.0], 0.0).unwrap(),
        ];
        let result = centralized_dykstra(
            &sets,
            &[2.0, 0.0],
            &OracleSettings { max_iter: 1, ..Default::default() },
        )
        .unwrap();
        assert!(!result.converged);
        assert_eq!(result.iterations, 1);
        assert!(result.displacement > OracleSettings::default().tol);
    }

    #[test]
    fn certify_accepts_the_optimum_and_rejects_others() {
        let sets = vec![
            ConvexSet::box_bounds(vec![-1.0, -1.0], vec![0.0, 0.5]).unwrap(),
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
        ];
        let anchor = [1.0, 0.8];
        let settings = OracleSettings::default();
        let optimum = [0.0, 0.5];
        let score = certify(&sets, &anchor, &optimum, &settings).unwrap();
        assert!(score <= 1e-8, "optimum scored {score}");

        let suboptimal = [-0.5, 0.0];
        let score = certify(&sets, &anchor, &suboptimal, &settings).unwrap();
        assert!(score > 0.1, "suboptimal point scored only {score}");
    }

    #[test]
    fn certify_rejects_infeasible_candidates() {
        let sets = quadrant_sets();
        let err = certify(&sets, &[1.0, 1.0], &[0.5, 0.0], &OracleSettings::default()).unwrap_err();
        assert!(matches!(err, OracleError::Infeasible { index: 0, .. }));
    }

    #[test]
    fn certify_is_deterministic_in_the_seed() {
        let sets = vec![
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
            ConvexSet::halfspace(vec![1.0, 1.0], 0.5).unwrap(),
        ];
        let anchor = [1.5, -0.2];
        let settings = OracleSettings::default();
        let point = centralized_dykstra(&sets, &anchor, &settings).unwrap().point;
        let a = certify(&sets, &anchor, &point, &settings).unwrap();
        let b = certify(&sets, &anchor, &point, &settings).unwrap();
        assert_eq!(a, b);
    }
}
