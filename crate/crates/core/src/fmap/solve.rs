use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatRef, Side};

use super::{FmapError, FmapParams, FunctionalMap};
use crate::mesh::SpectralBasis;

const CG_TOLERANCE: f64 = 1e-10;
const CG_MAX_ITERS: usize = 5000;

/// Weights of the map energy
/// `α₁‖CF − H‖² + α₂ Σ μ_rj c_rj² + α₃ Σ_d ‖C A_d − B_d C‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapWeights {
    pub alpha_descr: f64,
    pub alpha_lap: f64,
    pub alpha_comm: f64,
}

impl From<&FmapParams> for MapWeights {
    fn from(p: &FmapParams) -> Self {
        Self { alpha_descr: p.alpha_descr, alpha_lap: p.alpha_lap, alpha_comm: p.alpha_comm }
    }
}

/// Multiplication operators `Φᵀ M diag(d) Φ` of a shape's descriptors in its
/// truncated basis.
#[derive(Debug, Clone)]
pub struct DescriptorOperators {
    ops: Vec<Mat<f64>>,
    k: usize,
}

impl DescriptorOperators {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Operators for every `stride`-th descriptor column, in the first `k`
/// basis functions.
pub fn descriptor_operators(basis: &SpectralBasis, descriptors: MatRef<'_, f64>, k: usize, stride: usize) -> Result<DescriptorOperators, FmapError> {
    if k > basis.k() {
        return Err(FmapError::BasisTooSmall { requested: k, available: basis.k() });
    }
    if descriptors.nrows() != basis.vertex_count() {
        return Err(FmapError::ShapeMismatch { expected: basis.vertex_count(), found: descriptors.nrows() });
    }
    let phi = basis.leading(k);
    let mass = basis.mass();
    let ops = (0..descriptors.ncols())
        .step_by(stride.max(1))
        .map(|c| {
            let weighted = Mat::from_fn(phi.nrows(), k, |i, j| mass[i] * descriptors[(i, c)] * phi[(i, j)]);
            let mut op = phi.transpose() * &weighted;
            symmetrize(&mut op);
            op
        })
        .collect();
    Ok(DescriptorOperators { ops, k })
}

fn symmetrize(m: &mut Mat<f64>) {
    for i in 0..m.nrows() {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Squared eigenvalue differences `(λ₁_j − λ₂_r)²`, scaled to unit Frobenius
/// norm so the weight does not depend on the shapes' scale.
fn laplacian_mask(src: &SpectralBasis, tgt: &SpectralBasis, k1: usize, k2: usize) -> Mat<f64> {
    let l1 = &src.eigenvalues()[..k1];
    let l2 = &tgt.eigenvalues()[..k2];
    let mask = Mat::from_fn(k2, k1, |r, j| (l1[j] - l2[r]).powi(2));
    let norm = mask.norm_l2();
    if norm > 0.0 {
        Mat::from_fn(k2, k1, |r, j| mask[(r, j)] / norm)
    } else {
        mask
    }
}

fn check_inputs(src: &SpectralBasis, f: MatRef<'_, f64>, tgt: &SpectralBasis, h: MatRef<'_, f64>) -> Result<(usize, usize), FmapError> {
    let (k1, k2) = (f.nrows(), h.nrows());
    if f.ncols() != h.ncols() {
        return Err(FmapError::DimensionMismatch(format!("F has {} descriptors, H has {}", f.ncols(), h.ncols())));
    }
    if k1 < 2 || k2 < 2 {
        return Err(FmapError::DimensionMismatch(format!("basis sizes {k1}, {k2} below 2")));
    }
    if k1 > src.k() {
        return Err(FmapError::BasisTooSmall { requested: k1, available: src.k() });
    }
    if k2 > tgt.k() {
        return Err(FmapError::BasisTooSmall { requested: k2, available: tgt.k() });
    }
    Ok((k1, k2))
}

/// Factors `α₁FFᵀ + diag(extra_r)` for one row; `None` if not positive definite.
fn row_factor(gram: &Mat<f64>, alpha_descr: f64, extra: impl Fn(usize) -> f64) -> Result<Llt<f64>, String> {
    let k1 = gram.nrows();
    let a = Mat::from_fn(k1, k1, |i, j| alpha_descr * gram[(i, j)] + if i == j { extra(j) } else { 0.0 });
    let llt = a.llt(Side::Lower).map_err(|e| format!("{e:?}"))?;
    let l = llt.L();
    let diag: Vec<f64> = (0..k1).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-14 * max) {
        return Err(format!("pivot ratio {:.2e}", min / max));
    }
    Ok(llt)
}

/// Minimizes `α₁‖CF − H‖² + α₂‖CΛ₁ − Λ₂C‖²` one row at a time.
///
/// `F` (k₁ × d) and `H` (k₂ × d) are spectral coefficients of matching
/// descriptors. Row `r` solves `c_r (α₁FFᵀ + α₂ diag μ_r) = α₁ h_r Fᵀ`.
pub fn solve_fmap(
    src: &SpectralBasis,
    f: MatRef<'_, f64>,
    tgt: &SpectralBasis,
    h: MatRef<'_, f64>,
    alpha_descr: f64,
    alpha_lap: f64,
) -> Result<FunctionalMap, FmapError> {
    let (k1, k2) = check_inputs(src, f, tgt, h)?;
    let mask = laplacian_mask(src, tgt, k1, k2);
    let gram = f * f.transpose();
    let rhs = h * f.transpose();
    let mut c = Mat::<f64>::zeros(k2, k1);
    for r in 0..k2 {
        let llt = row_factor(&gram, alpha_descr, |j| alpha_lap * mask[(r, j)]).map_err(|detail| FmapError::RankDeficiency { row: r, detail })?;
        let b = Mat::from_fn(k1, 1, |j, _| alpha_descr * rhs[(r, j)]);
        let x = llt.solve(&b);
        for j in 0..k1 {
            c[(r, j)] = x[(j, 0)];
        }
    }
    finish(c, src, tgt)
}

/// Full energy including descriptor commutativity `α₃ Σ_d ‖C A_d − B_d C‖²`,
/// which couples the rows. Solved by conjugate gradients on the normal
/// equations, preconditioned with the per-row systems.
pub fn solve_fmap_coupled(
    src: &SpectralBasis,
    f: MatRef<'_, f64>,
    src_ops: &DescriptorOperators,
    tgt: &SpectralBasis,
    h: MatRef<'_, f64>,
    tgt_ops: &DescriptorOperators,
    weights: &MapWeights,
) -> Result<FunctionalMap, FmapError> {
    if weights.alpha_comm == 0.0 {
        return solve_fmap(src, f, tgt, h, weights.alpha_descr, weights.alpha_lap);
    }
    let (k1, k2) = check_inputs(src, f, tgt, h)?;
    if src_ops.k != k1 || tgt_ops.k != k2 || src_ops.len() != tgt_ops.len() {
        return Err(FmapError::DimensionMismatch(format!(
            "descriptor operators {}×{} (k={}) vs {}×{} (k={}) for a {k2}×{k1} map",
            src_ops.len(),
            src_ops.k,
            src_ops.k,
            tgt_ops.len(),
            tgt_ops.k,
            tgt_ops.k
        )));
    }
    let MapWeights { alpha_descr, alpha_lap, alpha_comm } = *weights;
    let mask = laplacian_mask(src, tgt, k1, k2);
    let gram = f * f.transpose();
    let pairs: Vec<(&Mat<f64>, &Mat<f64>)> = src_ops.ops.iter().zip(&tgt_ops.ops).collect();

    // diagonal of the commutativity Hessian: (A²)_jj + (B²)_rr − 2 A_jj B_rr
    let mut comm_diag = Mat::<f64>::zeros(k2, k1);
    for (a, b) in &pairs {
        let a2: Vec<f64> = (0..k1).map(|j| (0..k1).map(|i| a[(i, j)].powi(2)).sum()).collect();
        let b2: Vec<f64> = (0..k2).map(|r| (0..k2).map(|i| b[(i, r)].powi(2)).sum()).collect();
        for r in 0..k2 {
            for j in 0..k1 {
                comm_diag[(r, j)] += a2[j] + b2[r] - 2.0 * a[(j, j)] * b[(r, r)];
            }
        }
    }
    let ridge = 1e-12 * (0..k1).map(|i| gram[(i, i)]).sum::<f64>().max(1e-300);
    let mut precond = Vec::with_capacity(k2);
    for r in 0..k2 {
        let extra = |j: usize| alpha_lap * mask[(r, j)] + alpha_comm * comm_diag[(r, j)].max(0.0) + ridge;
        precond.push(row_factor(&gram, alpha_descr, extra).map_err(|detail| FmapError::RankDeficiency { row: r, detail })?);
    }

    let apply = |c: &Mat<f64>| -> Mat<f64> {
        let mut out = c * &gram;
        for r in 0..k2 {
            for j in 0..k1 {
                out[(r, j)] = alpha_descr * out[(r, j)] + alpha_lap * mask[(r, j)] * c[(r, j)];
            }
        }
        for (a, b) in &pairs {
            let e = c * *a - *b * c;
            let g = &e * *a - *b * &e;
            for r in 0..k2 {
                for j in 0..k1 {
                    out[(r, j)] += alpha_comm * g[(r, j)];
                }
            }
        }
        out
    };
    let precondition = |res: &Mat<f64>| -> Mat<f64> {
        let mut z = Mat::<f64>::zeros(k2, k1);
        for (r, llt) in precond.iter().enumerate() {
            let row = Mat::from_fn(k1, 1, |j, _| res[(r, j)]);
            let x = llt.solve(&row);
            for j in 0..k1 {
                z[(r, j)] = x[(j, 0)];
            }
        }
        z
    };
    let dot = |x: &Mat<f64>, y: &Mat<f64>| -> f64 {
        let mut s = 0.0;
        for j in 0..k1 {
            for r in 0..k2 {
                s += x[(r, j)] * y[(r, j)];
            }
        }
        s
    };

    let b = {
        let mut b = h * f.transpose();
        for j in 0..k1 {
            for r in 0..k2 {
                b[(r, j)] *= alpha_descr;
            }
        }
        b
    };
    let b_norm = dot(&b, &b).sqrt();
    let mut x = Mat::<f64>::zeros(k2, k1);
    if b_norm == 0.0 {
        return finish(x, src, tgt);
    }
    let mut res = b.clone();
    let mut z = precondition(&res);
    let mut p = z.clone();
    let mut rz = dot(&res, &z);
    for _ in 0..CG_MAX_ITERS {
        let ap = apply(&p);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(FmapError::RankDeficiency { row: 0, detail: format!("conjugate gradient breakdown (pᵀAp = {curvature:.3e})") });
        }
        let step = rz / curvature;
        for j in 0..k1 {
            for r in 0..k2 {
                x[(r, j)] += step * p[(r, j)];
                res[(r, j)] -= step * ap[(r, j)];
            }
        }
        if dot(&res, &res).sqrt() <= CG_TOLERANCE * b_norm {
            return finish(x, src, tgt);
        }
        z = precondition(&res);
        let rz_next = dot(&res, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for j in 0..k1 {
            for r in 0..k2 {
                p[(r, j)] = z[(r, j)] + beta * p[(r, j)];
            }
        }
    }
    Err(FmapError::RankDeficiency { row: 0, detail: format!("conjugate gradients did not converge in {CG_MAX_ITERS} iterations") })
}

fn finish(c: Mat<f64>, src: &SpectralBasis, tgt: &SpectralBasis) -> Result<FunctionalMap, FmapError> {
    if !c.as_ref().is_all_finite() {
        return Err(FmapError::RankDeficiency { row: 0, detail: "non-finite solution".into() });
    }
    Ok(FunctionalMap::new(c, src.mesh_id(), tgt.mesh_id()))
}
