//! Wave Kernel Signature descriptors and their spectral coefficients.

use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::SpectralBasis;

#[derive(Error, Debug)]
pub enum DescriptorError {
    #[error("spectrum too narrow for WKS: log-energy range {range:.3e} with σ = {sigma:.3e}")]
    DegenerateSpectrum { range: f64, sigma: f64 },

    #[error("dimension mismatch: expected {expected} rows, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid WKS parameter: {0}")]
    InvalidParameter(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Wks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WksParams {
    pub num_energies: usize,
    pub variance_scale: f64,
}

impl Default for WksParams {
    fn default() -> Self {
        Self { num_energies: 100, variance_scale: 6.0 }
    }
}

/// Per-vertex descriptor values, one column per energy sample.
#[derive(Debug, Clone)]
pub struct DescriptorSet {
    pub values: Mat<f64>,
    pub energies: Vec<f64>,
    pub kind: DescriptorKind,
}

impl DescriptorSet {
    pub fn vertex_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Applies a vertex permutation: row `i` of the result is row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        Self {
            values: Mat::from_fn(perm.len(), self.len(), |i, j| self.values[(perm[i], j)]),
            energies: self.energies.clone(),
            kind: self.kind,
        }
    }

    /// Writes one line per vertex: index followed by its `d` values.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DescriptorError> {
        write!(out, "vertex")?;
        for e in &self.energies {
            write!(out, ",e{e:.6}")?;
        }
        writeln!(out)?;
        for i in 0..self.vertex_count() {
            write!(out, "{i}")?;
            for j in 0..self.len() {
                write!(out, ",{:?}", self.values[(i, j)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Wave Kernel Signature over the non-zero part of the spectrum.
///
/// Energies are spread uniformly over `[log λ₂ + 2σ, log λ_k − 2σ]` with
/// `σ = variance_scale · (log λ_k − log λ₂) / num_energies`; every column
/// is rescaled to unit mass-weighted norm.
pub fn wks(basis: &SpectralBasis, params: &WksParams) -> Result<DescriptorSet, DescriptorError> {
    if params.num_energies == 0 {
        return Err(DescriptorError::InvalidParameter("num_energies must be positive"));
    }
    if !(params.variance_scale > 0.0) {
        return Err(DescriptorError::InvalidParameter("variance_scale must be positive"));
    }
    let evals = basis.eigenvalues();
    // λ₁ = 0 is the kernel; use the eigenpairs after it.
    let first = evals.iter().position(|&l| l > 1e-8 * evals.last().copied().unwrap_or(0.0)).unwrap_or(evals.len());
    let usable: Vec<usize> = (first.max(1)..evals.len()).collect();
    if usable.len() < 2 {
        return Err(DescriptorError::DegenerateSpectrum { range: 0.0, sigma: 0.0 });
    }
    let log_l: Vec<f64> = usable.iter().map(|&i| evals[i].ln()).collect();
    let lo = log_l[0];
    let hi = log_l[log_l.len() - 1];
    let range = hi - lo;
    let sigma = params.variance_scale * range / params.num_energies as f64;
    let (e_min, e_max) = (lo + 2.0 * sigma, hi - 2.0 * sigma);
    if !(range > 1e-9) || e_max <= e_min {
        return Err(DescriptorError::DegenerateSpectrum { range, sigma });
    }
    let d = params.num_energies;
    let energies: Vec<f64> = if d == 1 {
        vec![0.5 * (e_min + e_max)]
    } else {
        (0..d).map(|t| e_min + (e_max - e_min) * t as f64 / (d - 1) as f64).collect()
    };

    // filter weights, normalized per energy
    let two_s2 = 2.0 * sigma * sigma;
    let mut weights = Mat::<f64>::zeros(usable.len(), d);
    for (c, &e) in energies.iter().enumerate() {
        let mut total = 0.0;
        for (r, &ll) in log_l.iter().enumerate() {
            let w = (-(e - ll).powi(2) / two_s2).exp();
            weights[(r, c)] = w;
            total += w;
        }
        for r in 0..usable.len() {
            weights[(r, c)] /= total;
        }
    }

    let phi = basis.eigenfunctions();
    let n = basis.vertex_count();
    let squared = Mat::from_fn(n, usable.len(), |i, r| phi[(i, usable[r])].powi(2));
    let mut values = &squared * &weights;

    let mass = basis.mass();
    for c in 0..d {
        let norm = (0..n).map(|i| mass[i] * values[(i, c)].powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..n {
                values[(i, c)] /= norm;
            }
        }
    }
    Ok(DescriptorSet { values, energies, kind: DescriptorKind::Wks })
}

/// Spectral coefficients `Φᵀ M values` (k × d).
pub fn project_descriptors(basis: &SpectralBasis, desc: &DescriptorSet) -> Result<Mat<f64>, DescriptorError> {
    project(basis, desc.values.as_ref())
}

/// `Φᵀ M F` for any per-vertex matrix `F`.
pub fn project(basis: &SpectralBasis, values: faer::MatRef<'_, f64>) -> Result<Mat<f64>, DescriptorError> {
    let n = basis.vertex_count();
    if values.nrows() != n {
        return Err(DescriptorError::DimensionMismatch { expected: n, found: values.nrows() });
    }
    let mass = basis.mass();
    let weighted = Mat::from_fn(n, values.ncols(), |i, j| mass[i] * values[(i, j)]);
    Ok(basis.eigenfunctions().transpose() * &weighted)
}

/// `Φ · coeffs`.
pub fn reconstruct(basis: &SpectralBasis, coeffs: faer::MatRef<'_, f64>) -> Mat<f64> {
    basis.leading(coeffs.nrows()) * coeffs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::spectral_basis;
    use crate::shapes;

    #[test]
    fn phi_column_projects_to_unit_vector() {
        let mesh = shapes::torus(0.1, 0.04, 24, 12);
        let basis = spectral_basis(&mesh, 10).unwrap();
        let f = basis.eigenfunctions().subcols(2, 1).to_owned();
        let c = project(&basis, f.as_ref()).unwrap();
        for i in 0..10 {
            let want = if i == 2 { 1.0 } else { 0.0 };
            assert!((c[(i, 0)] - want).abs() < 1e-6);
        }
        let ones = Mat::from_fn(basis.vertex_count(), 1, |_, _| 1.0);
        let c = project(&basis, ones.as_ref()).unwrap();
        for i in 1..10 {
            assert!(c[(i, 0)].abs() < 1e-6);
        }
        assert!(c[(0, 0)].abs() > 1e-3);
    }

    #[test]
    fn wks_shape_and_positivity() {
        let mesh = shapes::torus(0.1, 0.04, 24, 12);
        let basis = spectral_basis(&mesh, 30).unwrap();
        let desc = wks(&basis, &WksParams::default()).unwrap();
        assert_eq!(desc.len(), 100);
        assert_eq!(desc.values.ncols(), 100);
        assert_eq!(desc.vertex_count(), mesh.vertex_count());
        for j in 0..desc.len() {
            for i in 0..desc.vertex_count() {
                let v = desc.values[(i, j)];
                assert!(v.is_finite() && v >= 0.0);
            }
        }
        assert!(desc.energies.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn degenerate_spectrum() {
        let mesh = shapes::icosphere(1.0, 2);
        // {0, λ, λ, λ}: the log-range collapses
        let basis = spectral_basis(&mesh, 4).unwrap();
        assert!(matches!(wks(&basis, &WksParams::default()), Err(DescriptorError::DegenerateSpectrum { .. })));
        let basis = spectral_basis(&mesh, 2).unwrap();
        assert!(matches!(wks(&basis, &WksParams::default()), Err(DescriptorError::DegenerateSpectrum { .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let mesh = shapes::icosphere(1.0, 1);
        let basis = spectral_basis(&mesh, 5).unwrap();
        let bad = Mat::<f64>::zeros(3, 2);
        assert!(matches!(project(&basis, bad.as_ref()), Err(DescriptorError::DimensionMismatch { expected: 42, found: 3 })));
    }

    #[test]
    fn csv_export() {
        let desc = DescriptorSet {
            values: Mat::from_fn(2, 2, |i, j| (i * 2 + j) as f64),
            energies: vec![1.0, 2.0],
            kind: DescriptorKind::Wks,
        };
        let mut buf = Vec::new();
        desc.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "vertex,e1.000000,e2.000000\n0,0.0,1.0\n1,2.0,3.0\n");
    }
}
