//! Closed convex sets with exact projections, support functions and
//! normal-cone residuals.
//!
//! Every operation is exact up to floating point: halfspaces, balls and boxes
//! have closed-form projections, and polyhedra are projected by enumerating
//! active sets of the KKT system, which is exact for the small row counts
//! (`k ≤ 32`, practical `k ≤ 12`) this crate targets.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecops;

/// Default tolerance for feasibility and KKT sign checks.
pub const DEFAULT_FEAS_TOL: f64 = 1e-9;

/// Relative angular tolerance used to decide whether a dual vector lies in
/// the cone where a support function is finite.
pub const COLLINEARITY_RTOL: f64 = 1e-9;

/// Hard cap on polyhedron rows; active-set enumeration is exponential in the
/// row count.
pub const MAX_POLYHEDRON_ROWS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("halfspace normal must be nonzero")]
    ZeroNormal,
    #[error("ball radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("box bound {index}: lower {lower} exceeds upper {upper}")]
    EmptyBoxInterval { index: usize, lower: f64, upper: f64 },
    #[error("box bound {index} is not a valid interval endpoint: {value}")]
    BadBoxBound { index: usize, value: f64 },
    #[error("polyhedron needs between 1 and {MAX_POLYHEDRON_ROWS} rows, got {0}")]
    BadRowCount(usize),
    #[error("polyhedron row {row} has {got} entries, expected {expected}")]
    RowDimension { row: usize, got: usize, expected: usize },
    #[error("polyhedron has no feasible point")]
    EmptyPolyhedron,
    #[error("set contains a non-finite entry")]
    NonFinite,
    #[error("dimension mismatch: set has dimension {set_dim}, point has {point_dim}")]
    Dimension { set_dim: usize, point_dim: usize },
    #[error("projection failed: {0}")]
    Projection(#[from] ProjectionError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    /// The active set at the accepted projection candidate is numerically
    /// rank-deficient; the instance is ill posed.
    #[error("degenerate active set at projection candidate: rows {active:?}")]
    DegenerateActiveSet { active: Vec<usize> },
    /// No KKT-consistent candidate exists; only possible for an empty
    /// polyhedron, which construction-time validation rejects.
    #[error("no feasible projection candidate (empty polyhedron?)")]
    NoCandidate,
}

/// Result of projecting a point `s` onto a set.
///
/// By construction `point + normal = s` and `normal` lies in the normal cone
/// of the set at `point`, so `support_value = ⟨normal, point⟩` is the exact
/// value of the support function at `normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub support_value: f64,
}

/// A closed convex set in `R^m`.
///
/// The JSON form tags each variant with `"variant"`; box bounds use `null`
/// for an absent (infinite) endpoint:
///
/// ```json
/// {"variant": "halfspace", "normal": [1.0, 0.0], "offset": 0.0}
/// {"variant": "ball", "center": [0.0, 0.0], "radius": 1.0}
/// {"variant": "box", "lower": [0.0, null], "upper": [1.0, 2.0]}
/// {"variant": "polyhedron", "rows": [[1.0, 1.0]], "rhs": [0.5]}
/// {"variant": "whole_space", "dim": 2}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ConvexSet {
    WholeSpace {
        dim: usize,
    },
    /// `{x : ⟨normal, x⟩ ≤ offset}`
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{x : lower ≤ x ≤ upper}` componentwise; bounds may be infinite.
    Box {
        #[serde(with = "lower_bounds")]
        lower: Vec<f64>,
        #[serde(with = "upper_bounds")]
        upper: Vec<f64>,
    },
    /// `{x : rows · x ≤ rhs}`, at most [`MAX_POLYHEDRON_ROWS`] rows.
    Polyhedron {
        rows: Vec<Vec<f64>>,
        rhs: Vec<f64>,
    },
}

mod lower_bounds {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opts: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        opts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opts = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opts.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

mod upper_bounds {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opts: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        opts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opts = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opts.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

impl ConvexSet {
    pub fn whole_space(dim: usize) -> Self {
        ConvexSet::WholeSpace { dim }
    }

    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self, SetError> {
        let set = ConvexSet::Halfspace { normal, offset };
        set.validate()?;
        Ok(set)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, SetError> {
        let set = ConvexSet::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn box_bounds(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SetError> {
        let set = ConvexSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    /// Builds `{x : rows·x ≤ rhs}`; nonemptiness is certified by projecting
    /// the origin with the active-set enumerator.
    pub fn polyhedron(rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self, SetError> {
        let set = ConvexSet::Polyhedron { rows, rhs };
        set.validate()?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::WholeSpace { dim } => *dim,
            ConvexSet::Halfspace { normal, .. } => normal.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::Polyhedron { rows, .. } => rows.first().map_or(0, |r| r.len()),
        }
    }

    /// Checks the structural invariants of the set description.
    pub fn validate(&self) -> Result<(), SetError> {
        match self {
            ConvexSet::WholeSpace { .. } => Ok(()),
            ConvexSet::Halfspace { normal, offset } => {
                if normal.iter().any(|x| !x.is_finite()) || !offset.is_finite() {
                    return Err(SetError::NonFinite);
                }
                if vecops::norm(normal) == 0.0 {
                    return Err(SetError::ZeroNormal);
                }
                Ok(())
            }
            ConvexSet::Ball { center, radius } => {
                if center.iter().any(|x| !x.is_finite()) || !radius.is_finite() {
                    return Err(SetError::NonFinite);
                }
                if *radius <= 0.0 {
                    return Err(SetError::NonPositiveRadius(*radius));
                }
                Ok(())
            }
            ConvexSet::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(SetError::Dimension { set_dim: lower.len(), point_dim: upper.len() });
                }
                for (k, (&l, &u)) in lower.iter().zip(upper).enumerate() {
                    if l.is_nan() || l == f64::INFINITY {
                        return Err(SetError::BadBoxBound { index: k, value: l });
                    }
                    if u.is_nan() || u == f64::NEG_INFINITY {
                        return Err(SetError::BadBoxBound { index: k, value: u });
                    }
                    if l > u {
                        return Err(SetError::EmptyBoxInterval { index: k, lower: l, upper: u });
                    }
                }
                Ok(())
            }
            ConvexSet::Polyhedron { rows, rhs } => {
                if rows.is_empty() || rows.len() > MAX_POLYHEDRON_ROWS || rows.len() != rhs.len() {
                    return Err(SetError::BadRowCount(rows.len()));
                }
                let m = rows[0].len();
                for (r, row) in rows.iter().enumerate() {
                    if row.len() != m {
                        return Err(SetError::RowDimension { row: r, got: row.len(), expected: m });
                    }
                    if row.iter().any(|x| !x.is_finite()) || !rhs[r].is_finite() {
                        return Err(SetError::NonFinite);
                    }
                }
                // Nonemptiness certificate: the enumerator either produces a
                // feasible point (possibly with a degenerate active set, which
                // still proves nonemptiness) or exhausts all candidates.
                let origin = vec![0.0; m];
                match poly_project_raw(rows, rhs, &origin, DEFAULT_FEAS_TOL) {
                    Some(_) => Ok(()),
                    None => Err(SetError::EmptyPolyhedron),
                }
            }
        }
    }

    /// Projects `s` onto the set.
    ///
    /// The returned `normal = s − point` lies in the normal cone at `point`,
    /// and `support_value = ⟨normal, point⟩` equals the support function at
    /// `normal` because the supremum is attained at `point`.
    pub fn project(&self, s: &[f64]) -> Result<ProjectionResult, ProjectionError> {
        debug_assert_eq!(self.dim(), s.len(), "projection input has the wrong dimension");
        let point = match self {
            ConvexSet::WholeSpace { .. } => s.to_vec(),
            ConvexSet::Halfspace { normal, offset } => {
                let slack = vecops::dot(normal, s) - offset;
                if slack <= 0.0 {
                    s.to_vec()
                } else {
                    let t = slack / vecops::norm_sq(normal);
                    let mut p = s.to_vec();
                    vecops::add_scaled(&mut p, -t, normal);
                    p
                }
            }
            ConvexSet::Ball { center, radius } => {
                let d = vecops::sub(s, center);
                let dist = vecops::norm(&d);
                if dist <= *radius {
                    s.to_vec()
                } else {
                    let scale = radius / dist;
                    center.iter().zip(&d).map(|(c, dk)| c + scale * dk).collect()
                }
            }
            ConvexSet::Box { lower, upper } => s
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&sk, (&l, &u))| sk.clamp(l, u))
                .collect(),
            ConvexSet::Polyhedron { rows, rhs } => {
                let accepted = poly_project_raw(rows, rhs, s, DEFAULT_FEAS_TOL)
                    .ok_or(ProjectionError::NoCandidate)?;
                // A rank-deficient active set at the accepted candidate means
                // the multipliers are not unique: flag the instance instead of
                // silently picking one.
                let active = active_rows(rows, rhs, &accepted.point);
                if active.len() > rank_of_rows(rows, &active) {
                    return Err(ProjectionError::DegenerateActiveSet { active });
                }
                accepted.point
            }
        };
        let normal = vecops::sub(s, &point);
        let support_value = vecops::dot(&normal, &point);
        Ok(ProjectionResult { point, normal, support_value })
    }

    /// Support function `δ*(z) = sup {⟨z, x⟩ : x ∈ set}`; `+∞` when the
    /// supremum is unbounded.
    pub fn support(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(self.dim(), z.len(), "support input has the wrong dimension");
        match self {
            ConvexSet::WholeSpace { .. } => {
                if z.iter().all(|&v| v == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                let zn = vecops::norm(z);
                if zn == 0.0 {
                    return 0.0;
                }
                let t = vecops::dot(z, normal) / vecops::norm_sq(normal);
                let mut resid = z.to_vec();
                vecops::add_scaled(&mut resid, -t, normal);
                if t >= 0.0 && vecops::norm(&resid) <= COLLINEARITY_RTOL * zn {
                    t * offset
                } else {
                    f64::INFINITY
                }
            }
            ConvexSet::Ball { center, radius } => vecops::dot(z, center) + radius * vecops::norm(z),
            ConvexSet::Box { lower, upper } => {
                let mut total = 0.0;
                for (&zk, (&l, &u)) in z.iter().zip(lower.iter().zip(upper)) {
                    if zk == 0.0 {
                        continue;
                    }
                    let term = if zk > 0.0 { zk * u } else { zk * l };
                    if term == f64::INFINITY {
                        return f64::INFINITY;
                    }
                    total += term;
                }
                total
            }
            ConvexSet::Polyhedron { rows, rhs } => poly_support(rows, rhs, z),
        }
    }

    /// `‖P(x + z) − x‖`: zero exactly when `x ∈ set` and `z` lies in the
    /// normal cone at `x`.
    pub fn normal_residual(&self, x: &[f64], z: &[f64]) -> Result<f64, ProjectionError> {
        let s: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
        let pr = self.project(&s)?;
        Ok(vecops::dist(&pr.point, x))
    }

    /// Translates the set by `-shift` (replaces the set with `{x − shift : x ∈ set}`).
    pub fn translate_by_neg(&self, shift: &[f64]) -> ConvexSet {
        match self {
            ConvexSet::WholeSpace { dim } => ConvexSet::WholeSpace { dim: *dim },
            ConvexSet::Halfspace { normal, offset } => ConvexSet::Halfspace {
                normal: normal.clone(),
                offset: offset - vecops::dot(normal, shift),
            },
            ConvexSet::Ball { center, radius } => ConvexSet::Ball {
                center: vecops::sub(center, shift),
                radius: *radius,
            },
            ConvexSet::Box { lower, upper } => ConvexSet::Box {
                lower: lower.iter().zip(shift).map(|(l, s)| l - s).collect(),
                upper: upper.iter().zip(shift).map(|(u, s)| u - s).collect(),
            },
            ConvexSet::Polyhedron { rows, rhs } => ConvexSet::Polyhedron {
                rows: rows.clone(),
                rhs: rhs.iter().zip(rows).map(|(b, row)| b - vecops::dot(row, shift)).collect(),
            },
        }
    }
}

struct PolyCandidate {
    point: Vec<f64>,
}

/// Exhaustive active-set projection onto `{x : rows·x ≤ rhs}`.
///
/// Subsets of rows are enumerated by increasing cardinality up to `m`; by
/// conic Carathéodory the projection's normal is a nonnegative combination of
/// a linearly independent subset of active rows, so a full-rank subset always
/// certifies the projection when the polyhedron is nonempty.
fn poly_project_raw(rows: &[Vec<f64>], rhs: &[f64], s: &[f64], tol: f64) -> Option<PolyCandidate> {
    let k = rows.len();
    let m = s.len();
    let row_norms: Vec<f64> = rows.iter().map(|r| vecops::norm(r)).collect();

    let feasible = |x: &[f64]| {
        rows.iter().zip(rhs).zip(&row_norms).all(|((row, &b), &rn)| {
            vecops::dot(row, x) - b <= tol * (1.0 + b.abs() + rn * vecops::norm(x))
        })
    };

    if feasible(s) {
        return Some(PolyCandidate { point: s.to_vec() });
    }

    for size in 1..=k.min(m) {
        for subset in (0..k).combinations(size) {
            let a_s = DMatrix::from_fn(size, m, |r, c| rows[subset[r]][c]);
            let gram = &a_s * a_s.transpose();
            let Some(chol) = gram.cholesky() else { continue };
            let resid = DVector::from_fn(size, |r, _| {
                vecops::dot(&rows[subset[r]], s) - rhs[subset[r]]
            });
            let lambda = chol.solve(&resid);
            let lambda_scale = 1.0 + lambda.amax();
            if lambda.iter().any(|&l| l < -tol * lambda_scale) {
                continue;
            }
            let correction = a_s.transpose() * &lambda;
            let x: Vec<f64> = (0..m).map(|c| s[c] - correction[c]).collect();
            if feasible(&x) {
                return Some(PolyCandidate { point: x });
            }
        }
    }
    None
}

/// Rows active at `x` up to a fixed relative tolerance.
fn active_rows(rows: &[Vec<f64>], rhs: &[f64], x: &[f64]) -> Vec<usize> {
    let xn = vecops::norm(x);
    rows.iter()
        .zip(rhs)
        .enumerate()
        .filter(|(_, (row, &b))| {
            let scale = 1.0 + b.abs() + vecops::norm(row) * xn;
            (vecops::dot(row, x) - b).abs() <= 1e-7 * scale
        })
        .map(|(r, _)| r)
        .collect()
}

fn rank_of_rows(rows: &[Vec<f64>], which: &[usize]) -> usize {
    if which.is_empty() {
        return 0;
    }
    let m = rows[0].len();
    let a = DMatrix::from_fn(which.len(), m, |r, c| rows[which[r]][c]);
    let svd = a.svd(false, false);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > 1e-12 * sigma_max).count()
}

/// Support function of a polyhedron: the LP dual `min {⟨rhs_S, λ⟩ : A_Sᵀλ = z, λ ≥ 0}`
/// restricted to linearly independent row subsets. Returns `+∞` when `z`
/// lies outside the cone generated by the rows (the supremum is unbounded on
/// a nonempty polyhedron).
fn poly_support(rows: &[Vec<f64>], rhs: &[f64], z: &[f64]) -> f64 {
    let k = rows.len();
    let m = z.len();
    let zn = vecops::norm(z);
    if zn == 0.0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for size in 1..=k.min(m) {
        for subset in (0..k).combinations(size) {
            let a_s = DMatrix::from_fn(size, m, |r, c| rows[subset[r]][c]);
            let gram = &a_s * a_s.transpose();
            let Some(chol) = gram.cholesky() else { continue };
            let az = DVector::from_fn(size, |r, _| vecops::dot(&rows[subset[r]], z));
            let lambda = chol.solve(&az);
            let lambda_scale = 1.0 + lambda.amax();
            if lambda.iter().any(|&l| l < -DEFAULT_FEAS_TOL * lambda_scale) {
                continue;
            }
            let recon = a_s.transpose() * &lambda;
            let resid_sq: f64 = (0..m).map(|c| (recon[c] - z[c]).powi(2)).sum();
            if resid_sq.sqrt() > COLLINEARITY_RTOL * zn {
                continue;
            }
            let value: f64 = subset.iter().zip(lambda.iter()).map(|(&r, &l)| rhs[r] * l).sum();
            if value < best {
                best = value;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hs(normal: Vec<f64>, offset: f64) -> ConvexSet {
        ConvexSet::halfspace(normal, offset).unwrap()
    }

    #[test]
    fn halfspace_projection_outside() {
        let set = hs(vec![1.0, 0.0], 0.0);
        let pr = set.project(&[2.0, 3.0]).unwrap();
        assert_eq!(pr.point, vec![0.0, 3.0]);
        assert_eq!(pr.normal, vec![2.0, 0.0]);
        assert_eq!(pr.support_value, 0.0);
    }

    #[test]
    fn halfspace_projection_inside_is_identity() {
        let set = hs(vec![1.0, 0.0], 0.0);
        let pr = set.project(&[-1.0, 2.0]).unwrap();
        assert_eq!(pr.point, vec![-1.0, 2.0]);
        assert_eq!(pr.normal, vec![0.0, 0.0]);
        assert_eq!(pr.support_value, 0.0);
    }

    #[test]
    fn ball_projection_outside() {
        let set = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let pr = set.project(&[2.0, 0.0]).unwrap();
        assert_eq!(pr.point, vec![1.0, 0.0]);
        assert_eq!(pr.normal, vec![1.0, 0.0]);
        assert!((pr.support_value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn box_projection_clamps() {
        let set = ConvexSet::box_bounds(vec![0.0, f64::NEG_INFINITY], vec![1.0, 2.0]).unwrap();
        let pr = set.project(&[-0.5, 5.0]).unwrap();
        assert_eq!(pr.point, vec![0.0, 2.0]);
        assert_eq!(pr.normal, vec![-0.5, 3.0]);
    }

    #[test]
    fn unit_square_projection() {
        let set = ConvexSet::polyhedron(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![1.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let pr = set.project(&[2.0, 0.5]).unwrap();
        assert!(vecops::dist(&pr.point, &[1.0, 0.5]) < 1e-12);
        assert!(vecops::dist(&pr.normal, &[1.0, 0.0]) < 1e-12);
        assert!((pr.support_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn halfspace_support_on_ray() {
        let set = hs(vec![1.0, 0.0], 2.0);
        assert!((set.support(&[3.0, 0.0]) - 6.0).abs() < 1e-12);
        assert_eq!(set.support(&[1.0, 0.5]), f64::INFINITY);
        assert_eq!(set.support(&[-1.0, 0.0]), f64::INFINITY);
        assert_eq!(set.support(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn ball_support_closed_form() {
        let set = ConvexSet::ball(vec![1.0, -1.0], 2.0).unwrap();
        let z = [3.0, 4.0];
        // ⟨z, c⟩ + ρ‖z‖ = (3 - 4) + 2·5
        assert!((set.support(&z) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn box_support_with_infinite_bounds() {
        let set = ConvexSet::box_bounds(vec![0.0, -3.0], vec![1.0, f64::INFINITY]).unwrap();
        assert!((set.support(&[1.0, -2.0]) - 7.0).abs() < 1e-12);
        assert_eq!(set.support(&[0.0, 1.0]), f64::INFINITY);
        assert_eq!(set.support(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn whole_space_support() {
        let set = ConvexSet::whole_space(3);
        assert_eq!(set.support(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(set.support(&[0.0, 1e-12, 0.0]), f64::INFINITY);
    }

    #[test]
    fn polyhedron_support_vertex_and_unbounded() {
        // Triangle x ≤ 1, y ≤ 1, -x - y ≤ 0.
        let set = ConvexSet::polyhedron(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]],
            vec![1.0, 1.0, 0.0],
        )
        .unwrap();
        // max x + y over the triangle = 2 at (1, 1).
        assert!((set.support(&[1.0, 1.0]) - 2.0).abs() < 1e-12);

        // One halfspace as a polyhedron: finite only along its normal ray.
        let half = ConvexSet::polyhedron(vec![vec![1.0, 0.0]], vec![0.5]).unwrap();
        assert!((half.support(&[2.0, 0.0]) - 1.0).abs() < 1e-12);
        assert_eq!(half.support(&[0.0, 1.0]), f64::INFINITY);
    }

    #[test]
    fn normal_residual_examples() {
        let set = hs(vec![1.0, 0.0], 0.0);
        // z in the normal cone at a boundary point: residual 0.
        let r = set.normal_residual(&[0.0, 3.0], &[2.0, 0.0]).unwrap();
        assert!(r < 1e-15);
        // z points inward: x + z stays feasible and projects to itself.
        let r = set.normal_residual(&[0.0, 3.0], &[-1.0, 0.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn projection_idempotent() {
        let sets = vec![
            hs(vec![1.0, 2.0], 0.5),
            ConvexSet::ball(vec![0.3, -0.4], 0.9).unwrap(),
            ConvexSet::box_bounds(vec![-1.0, 0.0], vec![0.5, f64::INFINITY]).unwrap(),
            ConvexSet::polyhedron(vec![vec![1.0, 1.0], vec![-1.0, 0.5]], vec![0.2, 0.4]).unwrap(),
            ConvexSet::whole_space(2),
        ];
        for set in &sets {
            for s in [[2.0, 3.0], [-1.5, 0.2], [0.1, -0.9]] {
                let p1 = set.project(&s).unwrap().point;
                let p2 = set.project(&p1).unwrap().point;
                assert!(vecops::dist(&p1, &p2) <= 1e-12, "{set:?}");
            }
        }
    }

    #[test]
    fn empty_polyhedron_rejected() {
        let err = ConvexSet::polyhedron(vec![vec![1.0], vec![-1.0]], vec![-1.0, -1.0]).unwrap_err();
        assert_eq!(err, SetError::EmptyPolyhedron);
    }

    #[test]
    fn degenerate_active_set_reported() {
        // Duplicated row: both copies are active at the projection, and the
        // pair is rank one.
        let set = ConvexSet::Polyhedron {
            rows: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            rhs: vec![0.0, 0.0],
        };
        let err = set.project(&[1.0, 0.0]).unwrap_err();
        match err {
            ProjectionError::DegenerateActiveSet { active } => assert_eq!(active, vec![0, 1]),
            other => panic!("expected degenerate active set, got {other:?}"),
        }
    }

    #[test]
    fn polyhedron_agrees_with_grid_search() {
        // Triangle in R²; dense grid over [-1, 1]² with step 1e-3.
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]];
        let rhs = vec![0.5, 0.5, 0.5];
        let set = ConvexSet::polyhedron(rows.clone(), rhs.clone()).unwrap();
        for s in [[0.9, 0.8], [-0.9, 0.9], [0.2, -0.95]] {
            let exact = set.project(&s).unwrap().point;
            let mut best = (f64::INFINITY, vec![0.0, 0.0]);
            let step = 1e-3_f64;
            let n = (2.0 / step).round() as i64;
            for ix in 0..=n {
                let x = -1.0 + ix as f64 * step;
                for iy in 0..=n {
                    let y = -1.0 + iy as f64 * step;
                    let p = [x, y];
                    let feas = rows
                        .iter()
                        .zip(&rhs)
                        .all(|(row, &b)| vecops::dot(row, &p) <= b + 1e-12);
                    if feas {
                        let d = vecops::dist_sq(&p, &s);
                        if d < best.0 {
                            best = (d, p.to_vec());
                        }
                    }
                }
            }
            assert!(vecops::dist(&best.1, &exact) <= 2e-3, "s = {s:?}");
        }
    }

    #[test]
    fn moreau_support_consistency() {
        let sets = vec![
            hs(vec![0.6, -0.8], 0.3),
            ConvexSet::ball(vec![0.5, 0.5], 1.2).unwrap(),
            ConvexSet::box_bounds(vec![-0.5, f64::NEG_INFINITY], vec![0.5, 1.0]).unwrap(),
            ConvexSet::polyhedron(vec![vec![1.0, 1.0], vec![1.0, -1.0]], vec![0.3, 0.4]).unwrap(),
            ConvexSet::whole_space(2),
        ];
        for set in &sets {
            for s in [[2.0, 1.0], [-1.0, 3.0], [0.0, -2.5], [0.2, 0.1]] {
                let pr = set.project(&s).unwrap();
                let sup = set.support(&pr.normal);
                assert!(sup.is_finite(), "support must be finite at a returned normal: {set:?}");
                assert!(
                    (sup - pr.support_value).abs() <= 1e-9 * (1.0 + pr.support_value.abs()),
                    "{set:?}: {sup} vs {}",
                    pr.support_value
                );
            }
        }
    }

    #[test]
    fn json_round_trip_with_infinite_bounds() {
        let set = ConvexSet::box_bounds(vec![0.1, f64::NEG_INFINITY], vec![1.0, f64::INFINITY]).unwrap();
        let text = serde_json::to_string(&set).unwrap();
        assert!(text.contains("null"));
        let back: ConvexSet = serde_json::from_str(&text).unwrap();
        assert_eq!(set, back);

        let hs = ConvexSet::halfspace(vec![1.0, 0.25], -0.75).unwrap();
        let text = serde_json::to_string(&hs).unwrap();
        let back: ConvexSet = serde_json::from_str(&text).unwrap();
        assert_eq!(hs, back);
    }
}
