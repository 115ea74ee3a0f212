//! Functional maps between spectral bases: estimation, ZoomOut refinement,
//! function transfer and diagonal-dominance scoring.

mod nearest;
mod score;
mod solve;
mod transfer;
mod zoomout;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use nearest::{nearest_rows, BRUTE_FORCE_LIMIT};
pub use score::{gaussian_weights, matching_score, select_match, MatchCandidate, MatchScore, Selection};
pub use solve::{descriptor_operators, solve_fmap, solve_fmap_coupled, DescriptorOperators, MapWeights};
pub use transfer::{FunctionKind, FunctionTransfer, SurfaceFunction};
pub use zoomout::{assignment_cost, fmap_from_pointwise, pointwise_from_fmap, zoomout_refine, zoomout_step};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FmapError {
    #[error("normal equations for row {row} are singular ({detail})")]
    RankDeficiency { row: usize, detail: String },

    #[error("basis has {available} eigenpairs, {requested} requested")]
    BasisTooSmall { requested: usize, available: usize },

    #[error("function has {found} values, source shape has {expected} vertices")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("scene contains no candidate objects")]
    EmptyScene,

    #[error("invalid surface function: {0}")]
    InvalidFunction(String),
}

/// Map settings; defaults follow the reference configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FmapParams {
    pub k_init: usize,
    pub k_final: usize,
    pub step: usize,
    /// Weight of the descriptor-preservation term.
    pub alpha_descr: f64,
    /// Weight of the Laplacian-commutativity term.
    pub alpha_lap: f64,
    /// Weight of the descriptor-commutativity term; 0 gives the row-wise solve.
    pub alpha_comm: f64,
    /// Every `descr_stride`-th descriptor enters the commutativity term.
    pub descr_stride: usize,
}

impl Default for FmapParams {
    fn default() -> Self {
        Self { k_init: 85, k_final: 200, step: 5, alpha_descr: 1.0, alpha_lap: 1e-2, alpha_comm: 1e-1, descr_stride: 5 }
    }
}

/// Coefficient matrix `C` (k₂ × k₁) taking source spectral coefficients to
/// target ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap {
    c: Mat<f64>,
    pub source_id: String,
    pub target_id: String,
    pub k_init: usize,
    pub k_final: usize,
}

impl FunctionalMap {
    pub fn new(c: Mat<f64>, source_id: impl Into<String>, target_id: impl Into<String>) -> Self {
        let k = c.nrows().min(c.ncols());
        Self { c, source_id: source_id.into(), target_id: target_id.into(), k_init: k, k_final: k }
    }

    pub fn identity(k: usize, source_id: impl Into<String>, target_id: impl Into<String>) -> Self {
        Self::new(Mat::identity(k, k), source_id, target_id)
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.c.as_ref()
    }

    /// Target basis size.
    pub fn k_target(&self) -> usize {
        self.c.nrows()
    }

    /// Source basis size.
    pub fn k_source(&self) -> usize {
        self.c.ncols()
    }

    /// Top-left `k × k` block.
    pub fn truncated(&self, k: usize) -> Self {
        assert!(k <= self.k_source() && k <= self.k_target());
        Self {
            c: self.c.as_ref().submatrix(0, 0, k, k).to_owned(),
            source_id: self.source_id.clone(),
            target_id: self.target_id.clone(),
            k_init: k,
            k_final: k,
        }
    }

    /// Nearest map with orthonormal rows or columns (Frobenius norm): `U Vᵀ`
    /// from the thin SVD of `C`. Blocks that least squares averaged to zero
    /// over a symmetry become one consistent rotation.
    pub fn orthogonalized(&self) -> Result<Self, FmapError> {
        let svd = self.c.thin_svd().map_err(|e| FmapError::RankDeficiency { row: 0, detail: format!("svd failed: {e:?}") })?;
        Ok(Self { c: svd.U() * svd.V().transpose(), ..self.clone() })
    }

    /// `(off-diagonal Frobenius², diagonal Σ c_ii²)`.
    pub fn diagonal_mass(&self) -> (f64, f64) {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..self.c.nrows() {
            for j in 0..self.c.ncols() {
                let v = self.c[(i, j)].powi(2);
                if i == j {
                    diag += v;
                } else {
                    off += v;
                }
            }
        }
        (off, diag)
    }

    /// `‖C F − H‖_F`.
    pub fn residual(&self, f: MatRef<'_, f64>, h: MatRef<'_, f64>) -> f64 {
        let cf = self.c.as_ref() * f;
        let mut s = 0.0;
        for i in 0..cf.nrows() {
            for j in 0..cf.ncols() {
                s += (cf[(i, j)] - h[(i, j)]).powi(2);
            }
        }
        s.sqrt()
    }
}

/// Per-target-vertex index of the corresponding source vertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointToPointMap {
    pub assignment: Vec<usize>,
}

impl PointToPointMap {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Fraction of entries with `assignment[i] == i`.
    pub fn identity_fraction(&self) -> f64 {
        let hits = self.assignment.iter().enumerate().filter(|(i, &j)| *i == j).count();
        hits as f64 / self.assignment.len().max(1) as f64
    }
}

#[derive(Serialize, Deserialize)]
struct FunctionalMapJson {
    source_id: String,
    target_id: String,
    k_init: usize,
    k_final: usize,
    rows: usize,
    cols: usize,
    /// Row-major entries.
    c: Vec<f64>,
}

impl Serialize for FunctionalMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let (rows, cols) = (self.c.nrows(), self.c.ncols());
        FunctionalMapJson {
            source_id: self.source_id.clone(),
            target_id: self.target_id.clone(),
            k_init: self.k_init,
            k_final: self.k_final,
            rows,
            cols,
            c: (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| self.c[(i, j)]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FunctionalMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = FunctionalMapJson::deserialize(d)?;
        if raw.c.len() != raw.rows * raw.cols {
            return Err(serde::de::Error::custom(format!(
                "matrix has {} entries, expected {}×{}",
                raw.c.len(),
                raw.rows,
                raw.cols
            )));
        }
        if raw.c.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("non-finite map entry"));
        }
        Ok(Self {
            c: Mat::from_fn(raw.rows, raw.cols, |i, j| raw.c[i * raw.cols + j]),
            source_id: raw.source_id,
            target_id: raw.target_id,
            k_init: raw.k_init,
            k_final: raw.k_final,
        })
    }
}
