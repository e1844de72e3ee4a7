//! Quantum states on two backbones: Gaussian moments and truncated Fock
//! density matrices.

mod fock;
mod gaussian;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub use fock::{
    apply_gate_fock, cat_fock, coherent_fock, cz_unitary, fock_number_state, mix_fock, squeezed_vacuum_fock,
    thermal_fock, CatParity, FockDensityMatrix, FockGate,
};
pub use gaussian::{
    apply_symplectic_gaussian, phase_rotation, squeezer, two_mode_squeezer, uncertainty_min_eigenvalue,
    GaussianState,
};

use crate::error::{Error, Result};
use crate::PhasePoint;

#[derive(Clone, Debug, PartialEq)]
pub enum StateHandle {
    Gaussian(GaussianState),
    Fock(FockDensityMatrix),
}

impl StateHandle {
    pub fn modes(&self) -> usize {
        match self {
            StateHandle::Gaussian(g) => g.modes(),
            StateHandle::Fock(f) => f.modes(),
        }
    }

    pub fn backbone(&self) -> &'static str {
        match self {
            StateHandle::Gaussian(_) => "gaussian",
            StateHandle::Fock(_) => "fock",
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianState> {
        match self {
            StateHandle::Gaussian(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_fock(&self) -> Option<&FockDensityMatrix> {
        match self {
            StateHandle::Fock(f) => Some(f),
            _ => None,
        }
    }

    /// ρ_self ⊗ ρ_other. Both operands must share a backbone.
    pub fn tensor(&self, other: &StateHandle) -> Result<StateHandle> {
        match (self, other) {
            (StateHandle::Fock(a), StateHandle::Fock(b)) => Ok(StateHandle::Fock(a.tensor(b))),
            (StateHandle::Gaussian(a), StateHandle::Gaussian(b)) => {
                let (ma, mb) = (a.modes(), b.modes());
                let m = ma + mb;
                let mut mean = Vec::with_capacity(2 * m);
                mean.extend_from_slice(a.mean().q());
                mean.extend_from_slice(b.mean().q());
                mean.extend_from_slice(a.mean().p());
                mean.extend_from_slice(b.mean().p());
                // map block-local axis to global axis
                let ga = |i: usize| if i < ma { i } else { m + i - ma };
                let gb = |i: usize| if i < mb { ma + i } else { m + ma + i - mb };
                let mut cov = DMatrix::zeros(2 * m, 2 * m);
                for i in 0..2 * ma {
                    for j in 0..2 * ma {
                        cov[(ga(i), ga(j))] = a.cov()[(i, j)];
                    }
                }
                for i in 0..2 * mb {
                    for j in 0..2 * mb {
                        cov[(gb(i), gb(j))] = b.cov()[(i, j)];
                    }
                }
                make_gaussian(PhasePoint::new(mean)?, cov)
            }
            _ => Err(Error::BackboneMismatch("cannot tensor a Gaussian state with a Fock state".into())),
        }
    }
}

impl From<GaussianState> for StateHandle {
    fn from(g: GaussianState) -> Self {
        StateHandle::Gaussian(g)
    }
}

impl From<FockDensityMatrix> for StateHandle {
    fn from(f: FockDensityMatrix) -> Self {
        StateHandle::Fock(f)
    }
}

pub fn make_gaussian(mean: PhasePoint, cov: DMatrix<f64>) -> Result<StateHandle> {
    GaussianState::new(mean, cov).map(StateHandle::Gaussian)
}

pub fn make_fock(occupations: &[usize], cutoffs: &[usize]) -> Result<StateHandle> {
    fock_number_state(occupations, cutoffs).map(StateHandle::Fock)
}

pub fn make_cat(alpha: f64, parity: CatParity, cutoff: usize) -> Result<StateHandle> {
    cat_fock(alpha, parity, cutoff).map(StateHandle::Fock)
}

/// Convex mixture; Fock backbone only, since Gaussian states are not closed
/// under mixing.
pub fn mix(states: &[StateHandle], weights: &[f64]) -> Result<StateHandle> {
    let fock: Vec<&FockDensityMatrix> = states
        .iter()
        .map(|s| s.as_fock().ok_or_else(|| Error::BackboneMismatch("mixtures are only defined on the Fock backbone".into())))
        .collect::<Result<_>>()?;
    mix_fock(&fock, weights).map(StateHandle::Fock)
}

#[derive(Serialize, Deserialize)]
struct ComplexMatrixJson {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum StateJson {
    Gaussian { modes: usize, mean: Vec<f64>, cov: Vec<Vec<f64>> },
    Fock { cutoffs: Vec<usize>, matrix: ComplexMatrixJson },
}

fn square_from_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput(format!("{what} must be a {n}×{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl StateHandle {
    pub fn to_json(&self) -> Result<String> {
        let js = match self {
            StateHandle::Gaussian(g) => StateJson::Gaussian {
                modes: g.modes(),
                mean: g.mean().coords().to_vec(),
                cov: rows_of(g.cov()),
            },
            StateHandle::Fock(f) => StateJson::Fock {
                cutoffs: f.cutoffs().to_vec(),
                matrix: ComplexMatrixJson {
                    re: rows_of(&f.matrix().map(|z| z.re)),
                    im: rows_of(&f.matrix().map(|z| z.im)),
                },
            },
        };
        Ok(serde_json::to_string_pretty(&js)?)
    }

    /// Parses and fully validates a state file.
    pub fn from_json(text: &str) -> Result<Self> {
        match serde_json::from_str::<StateJson>(text)? {
            StateJson::Gaussian { modes, mean, cov } => {
                if mean.len() != 2 * modes {
                    return Err(Error::DimensionMismatch { expected: 2 * modes, found: mean.len() });
                }
                let cov = square_from_rows(&cov, 2 * modes, "cov")?;
                make_gaussian(PhasePoint::new(mean)?, cov)
            }
            StateJson::Fock { cutoffs, matrix } => {
                let n: usize = cutoffs.iter().product();
                let re = square_from_rows(&matrix.re, n, "matrix.re")?;
                let im = square_from_rows(&matrix.im, n, "matrix.im")?;
                let m = DMatrix::from_fn(n, n, |i, j| C64::new(re[(i, j)], im[(i, j)]));
                FockDensityMatrix::new(cutoffs, m).map(StateHandle::Fock)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let g = StateHandle::Gaussian(GaussianState::two_mode_squeezed(0.3));
        assert_eq!(StateHandle::from_json(&g.to_json().unwrap()).unwrap(), g);
        let f = make_cat(1.0, CatParity::Odd, 16).unwrap();
        let back = StateHandle::from_json(&f.to_json().unwrap()).unwrap();
        assert!((back.as_fock().unwrap().matrix() - f.as_fock().unwrap().matrix()).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn json_field_names() {
        let v: serde_json::Value =
            serde_json::from_str(&make_fock(&[0], &[2]).unwrap().to_json().unwrap()).unwrap();
        assert_eq!(v["type"], "fock");
        assert!(v["matrix"]["re"].is_array() && v["matrix"]["im"].is_array());
        let v: serde_json::Value =
            serde_json::from_str(&StateHandle::Gaussian(GaussianState::vacuum(1)).to_json().unwrap()).unwrap();
        assert_eq!(v["type"], "gaussian");
        assert_eq!(v["modes"], 1);
    }

    #[test]
    fn invalid_json_state_rejected() {
        let txt = r#"{"type":"gaussian","modes":1,"mean":[0,0],"cov":[[0.25,0],[0,0.25]]}"#;
        assert!(matches!(StateHandle::from_json(txt), Err(Error::Uncertainty { .. })));
        let txt = r#"{"type":"fock","cutoffs":[2],"matrix":{"re":[[1,0],[0,1]],"im":[[0,0],[0,0]]}}"#;
        assert!(matches!(StateHandle::from_json(txt), Err(Error::InvalidDensityMatrix(_))));
    }

    #[test]
    fn gaussian_tensor_interleaves_blocks() {
        let a = StateHandle::Gaussian(GaussianState::squeezed_vacuum(1, 0.4));
        let b = StateHandle::Gaussian(GaussianState::thermal(1, 2.0).unwrap());
        let ab = a.tensor(&b).unwrap();
        let c = ab.as_gaussian().unwrap().cov();
        assert!((c[(0, 0)] - (-0.8f64).exp() / 2.0).abs() < 1e-14);
        assert!((c[(1, 1)] - 2.5).abs() < 1e-14);
        assert!((c[(2, 2)] - 0.8f64.exp() / 2.0).abs() < 1e-14);
        assert!(matches!(a.tensor(&make_fock(&[0], &[2]).unwrap()), Err(Error::BackboneMismatch(_))));
    }

    #[test]
    fn mix_identity_and_backbone_guard() {
        let v = make_fock(&[0], &[4]).unwrap();
        assert_eq!(mix(std::slice::from_ref(&v), &[1.0]).unwrap(), v);
        let g = StateHandle::Gaussian(GaussianState::vacuum(1));
        assert!(matches!(mix(&[g], &[1.0]), Err(Error::BackboneMismatch(_))));
    }
}
