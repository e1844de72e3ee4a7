use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::phase_space::{j_matrix, max_abs};
use crate::{PhasePoint, SymplecticMap};

/// Gaussian state given by its first two moments (ħ = 1, vacuum variance
/// 1/2 per quadrature).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    mean: PhasePoint,
    cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: PhasePoint, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.dim();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: cov.nrows().max(cov.ncols()) });
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite covariance entry".into()));
        }
        let asymmetry = max_abs(&(&cov - cov.transpose()));
        if asymmetry > 1e-12 * max_abs(&cov).max(1.0) {
            return Err(Error::Asymmetric { asymmetry });
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let min_eigenvalue = uncertainty_min_eigenvalue(&cov);
        if min_eigenvalue < -1e-9 {
            return Err(Error::Uncertainty { min_eigenvalue });
        }
        Ok(Self { mean, cov })
    }

    pub fn vacuum(modes: usize) -> Self {
        Self { mean: PhasePoint::zeros(modes), cov: DMatrix::identity(2 * modes, 2 * modes) * 0.5 }
    }

    /// Product of thermal states with mean photon number `nbar` per mode.
    pub fn thermal(modes: usize, nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0) {
            return Err(Error::InvalidInput("mean photon number must be nonnegative".into()));
        }
        Ok(Self {
            mean: PhasePoint::zeros(modes),
            cov: DMatrix::identity(2 * modes, 2 * modes) * (nbar + 0.5),
        })
    }

    /// Vacuum squeezed in the position quadrature of every mode by `r`:
    /// cov = diag(e^{−2r}/2 …, e^{2r}/2 …).
    pub fn squeezed_vacuum(modes: usize, r: f64) -> Self {
        Self::vacuum(modes).transformed(&squeezer(modes, r))
    }

    /// Two-mode squeezed vacuum with correlated positions and
    /// anti-correlated momenta.
    pub fn two_mode_squeezed(r: f64) -> Self {
        Self::vacuum(2).transformed(&two_mode_squeezer(r))
    }

    pub fn mean(&self) -> &PhasePoint {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn modes(&self) -> usize {
        self.mean.modes()
    }

    pub(crate) fn transformed(&self, s: &SymplecticMap) -> Self {
        let mean = s.apply(&self.mean).expect("dimensions checked by caller");
        let cov = s.matrix() * &self.cov * s.matrix().transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        Self { mean, cov }
    }
}

/// Smallest eigenvalue of the Hermitian matrix V + (i/2)J, computed from its
/// real symmetric embedding [[V, −J/2], [J/2, V]].
pub fn uncertainty_min_eigenvalue(cov: &DMatrix<f64>) -> f64 {
    let n = cov.nrows();
    let half_j = j_matrix::<f64>(n / 2) * 0.5;
    let emb = DMatrix::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => cov[(i, j)],
        (false, false) => cov[(i - n, j - n)],
        (true, false) => -half_j[(i, j - n)],
        (false, true) => half_j[(i - n, j)],
    });
    SymmetricEigen::new(emb).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// diag(e^{−r}, e^{r}) on every mode.
pub fn squeezer(modes: usize, r: f64) -> SymplecticMap {
    let m = DMatrix::from_fn(2 * modes, 2 * modes, |i, j| {
        if i != j {
            0.0
        } else if i < modes {
            (-r).exp()
        } else {
            r.exp()
        }
    });
    SymplecticMap::new(m, None).expect("squeezer is symplectic")
}

pub fn two_mode_squeezer(r: f64) -> SymplecticMap {
    let (c, s) = (r.cosh(), r.sinh());
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        c,   s,   0.0, 0.0,
        s,   c,   0.0, 0.0,
        0.0, 0.0, c,   -s,
        0.0, 0.0, -s,  c,
    ]);
    SymplecticMap::new(m, None).expect("two-mode squeezer is symplectic")
}

/// Planar rotation of every mode's (q, p) plane by `theta`.
pub fn phase_rotation(modes: usize, theta: f64) -> SymplecticMap {
    let (c, s) = (theta.cos(), theta.sin());
    let m = DMatrix::from_fn(2 * modes, 2 * modes, |i, j| {
        let (bi, ri) = (i / modes, i % modes);
        let (bj, cj) = (j / modes, j % modes);
        if ri != cj {
            return 0.0;
        }
        match (bi, bj) {
            (0, 0) | (1, 1) => c,
            (0, 1) => -s,
            _ => s,
        }
    });
    SymplecticMap::new(m, None).expect("rotation is symplectic")
}

/// Moments transform as mean → S·mean + d, cov → S·cov·Sᵀ.
pub fn apply_symplectic_gaussian(state: &GaussianState, s: &SymplecticMap) -> Result<GaussianState> {
    if s.modes() != state.modes() {
        return Err(Error::DimensionMismatch { expected: state.mean.dim(), found: s.matrix().nrows() });
    }
    Ok(state.transformed(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_is_accepted_and_quarter_identity_rejected() {
        assert!(GaussianState::new(PhasePoint::zeros(1), DMatrix::identity(2, 2) * 0.5).is_ok());
        let err = GaussianState::new(PhasePoint::zeros(1), DMatrix::identity(2, 2) * 0.25).unwrap_err();
        match err {
            Error::Uncertainty { min_eigenvalue } => assert!((min_eigenvalue + 0.25).abs() < 1e-12),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn displaced_vacuum_is_legal() {
        let d = PhasePoint::new(vec![1.5, -2.0]).unwrap();
        assert!(GaussianState::new(d, DMatrix::identity(2, 2) * 0.5).is_ok());
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(GaussianState::new(PhasePoint::zeros(1), cov), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn squeezing_covariance() {
        let r = 0.8;
        let st = apply_symplectic_gaussian(&GaussianState::vacuum(1), &squeezer(1, r)).unwrap();
        assert!((st.cov()[(0, 0)] - (-2.0 * r).exp() / 2.0).abs() < 1e-14);
        assert!((st.cov()[(1, 1)] - (2.0 * r).exp() / 2.0).abs() < 1e-14);
        assert!(st.cov()[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn identity_and_rotation_leave_vacuum_unchanged() {
        let v = GaussianState::vacuum(2);
        assert_eq!(apply_symplectic_gaussian(&v, &SymplecticMap::identity(2)).unwrap(), v);
        let rot = apply_symplectic_gaussian(&v, &phase_rotation(2, 0.9)).unwrap();
        assert!(max_abs(&(rot.cov() - v.cov())) < 1e-15);
    }

    #[test]
    fn composition_matches_product() {
        let s1 = crate::phase_space::random_symplectic::<f64>(2, 1).unwrap();
        let s2 = crate::phase_space::random_symplectic::<f64>(2, 2)
            .unwrap()
            .with_displacement(PhasePoint::new(vec![0.1, 0.2, -0.3, 0.4]).unwrap())
            .unwrap();
        let st = GaussianState::thermal(2, 0.3).unwrap();
        let seq = apply_symplectic_gaussian(&apply_symplectic_gaussian(&st, &s2).unwrap(), &s1).unwrap();
        let once = apply_symplectic_gaussian(&st, &s1.compose(&s2).unwrap()).unwrap();
        assert!(max_abs(&(seq.cov() - once.cov())) < 1e-9);
        for (a, b) in seq.mean().coords().iter().zip(once.mean().coords()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(apply_symplectic_gaussian(&GaussianState::vacuum(1), &SymplecticMap::identity(2)).is_err());
    }
}
