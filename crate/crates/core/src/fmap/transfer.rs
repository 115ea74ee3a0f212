use faer::linalg::solvers::{Qr, SolveLstsq};
use faer::Mat;
use serde::{Deserialize, Serialize};

use super::{FmapError, FunctionalMap};
use crate::mesh::SpectralBasis;

/// Values above this become 1 when a binary function is re-binarized.
pub const EIF_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionKind {
    /// Robot interaction, values in `[0, 1]`.
    Rif,
    /// Environment interaction, values in `{0, 1}`.
    Eif,
    Generic,
}

/// A scalar per vertex of one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFunction {
    pub mesh_id: String,
    pub kind: FunctionKind,
    pub values: Vec<f64>,
}

impl SurfaceFunction {
    /// Checks the value range implied by `kind`.
    pub fn new(mesh_id: impl Into<String>, kind: FunctionKind, values: Vec<f64>) -> Result<Self, FmapError> {
        let f = Self { mesh_id: mesh_id.into(), kind, values };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), FmapError> {
        let bad = match self.kind {
            FunctionKind::Rif => self.values.iter().position(|v| !(0.0..=1.0).contains(v)),
            FunctionKind::Eif => self.values.iter().position(|&v| v != 0.0 && v != 1.0),
            FunctionKind::Generic => self.values.iter().position(|v| !v.is_finite()),
        };
        match bad {
            Some(i) => Err(FmapError::InvalidFunction(format!("{:?} value {} at vertex {i}", self.kind, self.values[i]))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Vertices with value above `cutoff`.
    pub fn support(&self, cutoff: f64) -> Vec<usize> {
        self.values.iter().enumerate().filter(|(_, &v)| v > cutoff).map(|(i, _)| i).collect()
    }

    /// Index of the largest value (first on ties).
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, v) in self.values.iter().enumerate() {
            if best.is_none_or(|b| *v > self.values[b]) {
                best = Some(i);
            }
        }
        best
    }
}

/// `g = Φ_tgt C Φ_src⁺ f` with the least-squares factorization of `Φ_src`
/// kept for repeated use.
pub struct FunctionTransfer<'a> {
    map: &'a FunctionalMap,
    qr: Qr<f64>,
    target_phi: faer::MatRef<'a, f64>,
    source_vertices: usize,
    target_id: String,
}

impl<'a> FunctionTransfer<'a> {
    pub fn new(map: &'a FunctionalMap, src: &'a SpectralBasis, tgt: &'a SpectralBasis) -> Result<Self, FmapError> {
        let (k2, k1) = (map.k_target(), map.k_source());
        if k1 > src.k() {
            return Err(FmapError::BasisTooSmall { requested: k1, available: src.k() });
        }
        if k2 > tgt.k() {
            return Err(FmapError::BasisTooSmall { requested: k2, available: tgt.k() });
        }
        Ok(Self {
            map,
            qr: src.leading(k1).qr(),
            target_phi: tgt.leading(k2),
            source_vertices: src.vertex_count(),
            target_id: tgt.mesh_id().to_string(),
        })
    }

    /// Linear transfer without any kind-specific post-processing.
    pub fn apply_raw(&self, values: &[f64]) -> Result<Vec<f64>, FmapError> {
        if values.len() != self.source_vertices {
            return Err(FmapError::ShapeMismatch { expected: self.source_vertices, found: values.len() });
        }
        let f = Mat::from_fn(values.len(), 1, |i, _| values[i]);
        let coeffs = self.qr.solve_lstsq(&f);
        let g = self.target_phi * (self.map.matrix() * &coeffs);
        Ok((0..g.nrows()).map(|i| g[(i, 0)]).collect())
    }

    /// Transfers `f`, then clamps RIF values to `[0, 1]` and thresholds EIF
    /// values at 0.5.
    pub fn apply(&self, f: &SurfaceFunction) -> Result<SurfaceFunction, FmapError> {
        let mut values = self.apply_raw(&f.values)?;
        match f.kind {
            FunctionKind::Rif => values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0)),
            FunctionKind::Eif => values.iter_mut().for_each(|v| *v = if *v > EIF_THRESHOLD { 1.0 } else { 0.0 }),
            FunctionKind::Generic => {}
        }
        Ok(SurfaceFunction { mesh_id: self.target_id.clone(), kind: f.kind, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::spectral_basis;
    use crate::shapes;

    #[test]
    fn zero_maps_to_zero_and_basis_function_is_fixed() {
        let mesh = shapes::torus(0.1, 0.04, 24, 12);
        let b = spectral_basis(&mesh, 12).unwrap();
        let map = FunctionalMap::identity(12, "t", "t");
        let t = FunctionTransfer::new(&map, &b, &b).unwrap();
        let zero = vec![0.0; b.vertex_count()];
        assert!(t.apply_raw(&zero).unwrap().iter().all(|&v| v == 0.0));
        let phi2: Vec<f64> = (0..b.vertex_count()).map(|i| b.eigenfunctions()[(i, 2)]).collect();
        let g = t.apply_raw(&phi2).unwrap();
        for (a, b) in g.iter().zip(&phi2) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn length_mismatch() {
        let mesh = shapes::torus(0.1, 0.04, 24, 12);
        let b = spectral_basis(&mesh, 6).unwrap();
        let map = FunctionalMap::identity(6, "t", "t");
        let t = FunctionTransfer::new(&map, &b, &b).unwrap();
        let f = SurfaceFunction::new("t", FunctionKind::Generic, vec![1.0; 3]).unwrap();
        assert!(matches!(t.apply(&f), Err(FmapError::ShapeMismatch { found: 3, .. })));
    }

    #[test]
    fn kind_post_processing() {
        let mesh = shapes::torus(0.1, 0.04, 24, 12);
        let b = spectral_basis(&mesh, 30).unwrap();
        let map = FunctionalMap::identity(30, "t", "t");
        let t = FunctionTransfer::new(&map, &b, &b).unwrap();
        let n = b.vertex_count();
        let step: Vec<f64> = (0..n).map(|i| if mesh.vertices()[i].x > 0.0 { 1.0 } else { 0.0 }).collect();
        let eif = t.apply(&SurfaceFunction::new("t", FunctionKind::Eif, step.clone()).unwrap()).unwrap();
        eif.validate().unwrap();
        let rif = t.apply(&SurfaceFunction::new("t", FunctionKind::Rif, step).unwrap()).unwrap();
        rif.validate().unwrap();
        let agree = eif.values.iter().zip(mesh.vertices()).filter(|(v, p)| (**v == 1.0) == (p.x > 0.0)).count();
        assert!(agree as f64 > 0.9 * n as f64);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(SurfaceFunction::new("m", FunctionKind::Rif, vec![0.5, 1.5]).is_err());
        assert!(SurfaceFunction::new("m", FunctionKind::Eif, vec![0.0, 0.5]).is_err());
        let f = SurfaceFunction::new("m", FunctionKind::Rif, vec![0.2, 0.9, 0.9]).unwrap();
        assert_eq!(f.argmax(), Some(1));
        assert_eq!(f.support(0.5), vec![1, 2]);
    }
}
