//! Problem instances: a graph, one convex set per vertex, a shared anchor,
//! and (optionally) an optimality certificate.
//!
//! The solved problem is
//!
//! ```text
//! min_x Σ_i [ δ_{C_i}(x) + ½‖x − anchor‖² ]
//! ```
//!
//! i.e. the projection of `anchor` onto `∩_i C_i`. Per-vertex anchors reduce
//! to this form through [`reduce_anchors`], which also returns the constant
//! objective shift the reduction introduces.
//!
//! A certificate `(x_star, multipliers)` proves optimality through the KKT
//! conditions: `x_star` feasible, `multipliers[i]` in the normal cone of
//! `C_i` at `x_star`, and `Σ_i multipliers[i] = |V|·(anchor − x_star)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convex_sets::{ConvexSet, SetError, DEFAULT_FEAS_TOL};
use crate::topology::{Graph, GraphError};
use crate::vecops;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("set at vertex {vertex}: {source}")]
    Set { vertex: usize, source: SetError },
    #[error("instance dimension must be at least 1")]
    ZeroDimension,
    #[error("anchor has {got} entries, expected {expected}")]
    AnchorDimension { got: usize, expected: usize },
    #[error("expected one set per vertex ({vertices}), got {sets}")]
    SetCount { vertices: usize, sets: usize },
    #[error("set at vertex {vertex} has dimension {got}, expected {expected}")]
    SetDimension { vertex: usize, got: usize, expected: usize },
    #[error("certificate invalid: {0}")]
    BadCertificate(String),
    #[error("{name} range [{lo}, {hi}]: {reason}")]
    BadGenRange { name: &'static str, lo: f64, hi: f64, reason: &'static str },
    #[error("anchor list is empty")]
    NoAnchors,
    #[error("anchor {index} has {got} entries, expected {expected}")]
    RaggedAnchors { index: usize, got: usize, expected: usize },
    #[error("non-finite value in instance data")]
    NonFinite,
    #[error("unknown instance kind {0:?} (expected balls, halfspaces, boxes, mixed or consensus)")]
    UnknownKind(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// KKT optimality certificate; see the module docs for the exact conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub x_star: Vec<f64>,
    pub multipliers: Vec<Vec<f64>>,
}

/// Provenance stamp for generated instances; lets `gen` reproduce the file
/// byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub kind: String,
    pub seed: u64,
    pub t_range: [f64; 2],
    pub rho_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub m: usize,
    pub graph: Graph,
    pub anchor: Vec<f64>,
    pub sets: Vec<ConvexSet>,
    pub certificate: Option<Certificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_info: Option<SeedInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Balls,
    Halfspaces,
    Boxes,
    Mixed,
    Consensus,
}

impl InstanceKind {
    pub fn name(&self) -> &'static str {
        match self {
            InstanceKind::Balls => "balls",
            InstanceKind::Halfspaces => "halfspaces",
            InstanceKind::Boxes => "boxes",
            InstanceKind::Mixed => "mixed",
            InstanceKind::Consensus => "consensus",
        }
    }
}

impl std::str::FromStr for InstanceKind {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "balls" => Ok(InstanceKind::Balls),
            "halfspaces" => Ok(InstanceKind::Halfspaces),
            "boxes" => Ok(InstanceKind::Boxes),
            "mixed" => Ok(InstanceKind::Mixed),
            "consensus" => Ok(InstanceKind::Consensus),
            other => Err(InstanceError::UnknownKind(other.to_string())),
        }
    }
}

/// Ranges for the generator's multiplier lengths and ball radii.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub t_range: [f64; 2],
    pub rho_range: [f64; 2],
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { t_range: [0.5, 2.0], rho_range: [0.5, 2.0] }
    }
}

impl Instance {
    pub fn n_vertices(&self) -> usize {
        self.graph.n_vertices()
    }

    /// An instance is normalized when its certified optimum is exactly the
    /// origin; only then does the dual value certify distances.
    pub fn is_normalized(&self) -> bool {
        self.certificate
            .as_ref()
            .is_some_and(|c| c.x_star.iter().all(|&v| v == 0.0))
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        self.validate_with_tol(DEFAULT_FEAS_TOL)
    }

    pub fn validate_with_tol(&self, tol: f64) -> Result<(), InstanceError> {
        if self.m == 0 {
            return Err(InstanceError::ZeroDimension);
        }
        self.graph.validate()?;
        if self.anchor.len() != self.m {
            return Err(InstanceError::AnchorDimension { got: self.anchor.len(), expected: self.m });
        }
        if self.anchor.iter().any(|v| !v.is_finite()) {
            return Err(InstanceError::NonFinite);
        }
        let n = self.n_vertices();
        if self.sets.len() != n {
            return Err(InstanceError::SetCount { vertices: n, sets: self.sets.len() });
        }
        for (i, set) in self.sets.iter().enumerate() {
            set.validate().map_err(|source| InstanceError::Set { vertex: i, source })?;
            if set.dim() != self.m {
                return Err(InstanceError::SetDimension { vertex: i, got: set.dim(), expected: self.m });
            }
        }
        if let Some(cert) = &self.certificate {
            self.validate_certificate(cert, tol)?;
        }
        Ok(())
    }

    fn validate_certificate(&self, cert: &Certificate, tol: f64) -> Result<(), InstanceError> {
        let n = self.n_vertices();
        if cert.x_star.len() != self.m {
            return Err(InstanceError::BadCertificate(format!(
                "x_star has {} entries, expected {}",
                cert.x_star.len(),
                self.m
            )));
        }
        if cert.multipliers.len() != n {
            return Err(InstanceError::BadCertificate(format!(
                "{} multipliers for {} vertices",
                cert.multipliers.len(),
                n
            )));
        }
        let mut sum = vec![0.0; self.m];
        for (i, (set, z)) in self.sets.iter().zip(&cert.multipliers).enumerate() {
            if z.len() != self.m {
                return Err(InstanceError::BadCertificate(format!(
                    "multiplier {i} has {} entries, expected {}",
                    z.len(),
                    self.m
                )));
            }
            let feas = set
                .project(&cert.x_star)
                .map_err(|e| InstanceError::BadCertificate(format!("projection at vertex {i}: {e}")))?;
            let feas_dist = vecops::dist(&feas.point, &cert.x_star);
            if feas_dist > tol {
                return Err(InstanceError::BadCertificate(format!(
                    "x_star is {feas_dist:.3e} away from set {i}"
                )));
            }
            let resid = set
                .normal_residual(&cert.x_star, z)
                .map_err(|e| InstanceError::BadCertificate(format!("normal residual at vertex {i}: {e}")))?;
            if resid > tol {
                return Err(InstanceError::BadCertificate(format!(
                    "multiplier {i} has normal-cone residual {resid:.3e}"
                )));
            }
            vecops::add_scaled(&mut sum, 1.0, z);
        }
        // KKT stationarity: Σ z_i = |V|·(anchor − x_star).
        let expected: Vec<f64> = self
            .anchor
            .iter()
            .zip(&cert.x_star)
            .map(|(a, x)| n as f64 * (a - x))
            .collect();
        let gap = vecops::dist(&sum, &expected);
        if gap > tol * (1.0 + vecops::norm(&expected)) {
            return Err(InstanceError::BadCertificate(format!(
                "multiplier sum misses |V|·(anchor − x_star) by {gap:.3e}"
            )));
        }
        Ok(())
    }

    /// Translates the whole instance by `−x_star`, moving the target optimum
    /// to the origin; the certificate (if any) is translated with it.
    pub fn normalize(&self, x_star: &[f64]) -> Instance {
        Instance {
            m: self.m,
            graph: self.graph.clone(),
            anchor: vecops::sub(&self.anchor, x_star),
            sets: self.sets.iter().map(|s| s.translate_by_neg(x_star)).collect(),
            certificate: self.certificate.as_ref().map(|c| Certificate {
                x_star: vecops::sub(&c.x_star, x_star),
                multipliers: c.multipliers.clone(),
            }),
            seed_info: self.seed_info.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("instance serialization");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Instance, InstanceError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Averages per-vertex anchors into the single shared anchor and returns the
/// constant objective shift: `Σ_i ½‖x − x̄_i‖² = |V|·½‖x − a‖² + shift` with
/// `a` the mean and `shift = Σ_i (½‖x̄_i‖² − ½‖a‖²)`.
pub fn reduce_anchors(anchors: &[Vec<f64>]) -> Result<(Vec<f64>, f64), InstanceError> {
    let Some(first) = anchors.first() else {
        return Err(InstanceError::NoAnchors);
    };
    let m = first.len();
    let mut mean = vec![0.0; m];
    for (i, anchor) in anchors.iter().enumerate() {
        if anchor.len() != m {
            return Err(InstanceError::RaggedAnchors { index: i, got: anchor.len(), expected: m });
        }
        vecops::add_scaled(&mut mean, 1.0, anchor);
    }
    for v in &mut mean {
        *v /= anchors.len() as f64;
    }
    let mean_sq = vecops::norm_sq(&mean);
    let shift = anchors
        .iter()
        .map(|a| 0.5 * vecops::norm_sq(a) - 0.5 * mean_sq)
        .sum();
    Ok((mean, shift))
}

fn unit_sphere_sample(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let n = vecops::norm(&g);
        if n > 1e-6 {
            return g.iter().map(|v| v / n).collect();
        }
    }
}

/// Builds a set of the requested variant whose boundary passes through the
/// origin with outward normal derived from `g_hat`, and returns the actual
/// outward unit normal used (boxes snap it to the nearest axis).
fn boundary_set(variant: InstanceKind, g_hat: &[f64], rho: f64) -> (ConvexSet, Vec<f64>) {
    let m = g_hat.len();
    match variant {
        InstanceKind::Halfspaces => (
            ConvexSet::Halfspace { normal: g_hat.to_vec(), offset: 0.0 },
            g_hat.to_vec(),
        ),
        InstanceKind::Balls => {
            let center: Vec<f64> = g_hat.iter().map(|g| -rho * g).collect();
            (ConvexSet::Ball { center, radius: rho }, g_hat.to_vec())
        }
        InstanceKind::Boxes => {
            let axis = (0..m)
                .max_by(|&a, &b| g_hat[a].abs().partial_cmp(&g_hat[b].abs()).unwrap())
                .unwrap();
            let positive = g_hat[axis] >= 0.0;
            let mut lower = vec![f64::NEG_INFINITY; m];
            let mut upper = vec![f64::INFINITY; m];
            let mut normal = vec![0.0; m];
            if positive {
                upper[axis] = 0.0;
                normal[axis] = 1.0;
            } else {
                lower[axis] = 0.0;
                normal[axis] = -1.0;
            }
            (ConvexSet::Box { lower, upper }, normal)
        }
        _ => unreachable!("boundary_set only handles halfspaces, balls and boxes"),
    }
}

/// Generates a seeded instance with a known optimum.
///
/// For the geometric kinds the optimum is the origin: every set touches the
/// origin with outward unit normal `n_i`, the certificate multiplier is
/// `z_i = t_i·n_i`, and the anchor is the mean of the multipliers, which
/// makes the KKT system hold exactly. `consensus` instead places a
/// [`ConvexSet::WholeSpace`] at every vertex with a seeded anchor; its
/// optimum is the anchor itself with zero multipliers.
fn check_gen_range(
    name: &'static str,
    range: [f64; 2],
    strictly_positive: bool,
) -> Result<(), InstanceError> {
    let [lo, hi] = range;
    let reason = if !(lo.is_finite() && hi.is_finite()) {
        Some("bounds must be finite")
    } else if lo > hi {
        Some("lower bound exceeds upper bound")
    } else if strictly_positive && lo <= 0.0 {
        Some("bounds must be positive")
    } else if lo < 0.0 {
        Some("bounds must be nonnegative")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(InstanceError::BadGenRange { name, lo, hi, reason }),
        None => Ok(()),
    }
}

pub fn generate(
    kind: InstanceKind,
    m: usize,
    graph: Graph,
    seed: u64,
    params: GenParams,
) -> Result<Instance, InstanceError> {
    if m == 0 {
        return Err(InstanceError::ZeroDimension);
    }
    check_gen_range("dual magnitude", params.t_range, false)?;
    check_gen_range("ball radius", params.rho_range, true)?;
    let n = graph.n_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seed_info = Some(SeedInfo {
        kind: kind.name().to_string(),
        seed,
        t_range: params.t_range,
        rho_range: params.rho_range,
    });

    if kind == InstanceKind::Consensus {
        let anchor: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        return Ok(Instance {
            m,
            graph,
            anchor: anchor.clone(),
            sets: (0..n).map(|_| ConvexSet::whole_space(m)).collect(),
            certificate: Some(Certificate {
                x_star: anchor,
                multipliers: vec![vec![0.0; m]; n],
            }),
            seed_info,
        });
    }

    let mut sets = Vec::with_capacity(n);
    let mut multipliers = Vec::with_capacity(n);
    for _ in 0..n {
        let variant = match kind {
            InstanceKind::Mixed => match rng.random_range(0..3u8) {
                0 => InstanceKind::Halfspaces,
                1 => InstanceKind::Balls,
                _ => InstanceKind::Boxes,
            },
            k => k,
        };
        let g_hat = unit_sphere_sample(&mut rng, m);
        let t: f64 = rng.random_range(params.t_range[0]..=params.t_range[1]);
        let rho = if variant == InstanceKind::Balls {
            rng.random_range(params.rho_range[0]..=params.rho_range[1])
        } else {
            0.0
        };
        let (set, normal) = boundary_set(variant, &g_hat, rho);
        sets.push(set);
        multipliers.push(normal.iter().map(|v| t * v).collect::<Vec<f64>>());
    }

    let mut anchor = vec![0.0; m];
    for z in &multipliers {
        vecops::add_scaled(&mut anchor, 1.0, z);
    }
    for v in &mut anchor {
        *v /= n as f64;
    }

    Ok(Instance {
        m,
        graph,
        anchor,
        sets,
        certificate: Some(Certificate { x_star: vec![0.0; m], multipliers }),
        seed_info,
    })
}
