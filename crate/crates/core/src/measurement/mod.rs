//! Outcome statistics of quadrature measurements: single labels, Lagrangian
//! contexts, and the spectral measure of a displacement operator.

mod binned;
mod fock_route;

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub use binned::{default_edges, gauss_legendre, uniform_edges, BinnedPdf};
pub(crate) use binned::{bin_index, check_edges};
use fock_route::{binned_marginal_kernels, outcome_masses, reduce_label, Route};

use crate::error::{Error, Result};
use crate::phase_space::{j_matrix, rotation_to_axis};
use crate::states::GaussianState;
use crate::wigner::{transform_state, FockWignerEvaluator};
use crate::{LagrangianSubspace, PhasePoint, StateHandle};

/// A nonzero phase-space vector `x`, standing for the observable
/// `x̂ = Σ x_{q_k} q̂_k + Σ x_{p_k} p̂_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhasePoint", into = "PhasePoint")]
pub struct QuadratureLabel(PhasePoint);

impl TryFrom<PhasePoint> for QuadratureLabel {
    type Error = Error;
    fn try_from(x: PhasePoint) -> Result<Self> {
        Self::new(x)
    }
}

impl From<QuadratureLabel> for PhasePoint {
    fn from(l: QuadratureLabel) -> Self {
        l.0
    }
}

impl QuadratureLabel {
    pub fn new(x: PhasePoint) -> Result<Self> {
        if x.is_zero() {
            return Err(Error::ZeroVector);
        }
        Ok(Self(x))
    }

    pub fn vector(&self) -> &PhasePoint {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.modes()
    }
}

/// Smallest captured probability accepted by [`quadrature_pdf`].
pub const COVERAGE_THRESHOLD: f64 = 0.999;

fn check_label(state: &StateHandle, x: &QuadratureLabel) -> Result<()> {
    if x.modes() != state.modes() {
        return Err(Error::DimensionMismatch { expected: 2 * state.modes(), found: x.vector().dim() });
    }
    Ok(())
}

fn normal_bins(mean: f64, var: f64, edges: &[f64]) -> Vec<f64> {
    let s = (2.0 * var).sqrt();
    let cdf = |e: f64| 0.5 * (1.0 + libm::erf((e - mean) / s));
    edges.windows(2).map(|w| (cdf(w[1]) - cdf(w[0])).max(0.0)).collect()
}

fn covered(edges: Vec<f64>, masses: Vec<f64>) -> Result<BinnedPdf> {
    let total: f64 = masses.iter().sum();
    if total < COVERAGE_THRESHOLD {
        return Err(Error::Coverage { mass: total, expected: 1.0 });
    }
    BinnedPdf::new(edges, masses)
}

/// Outcome distribution of `x̂`, obtained by marginalizing the Wigner
/// function: rotate `x` onto the first axis with an orthogonal symplectic
/// map, transform the state accordingly and integrate out the remaining
/// coordinates. Fails with a coverage error if less than 0.999 of the
/// probability falls inside the edges.
pub fn quadrature_pdf(state: &StateHandle, x: &QuadratureLabel, edges: &[f64]) -> Result<BinnedPdf> {
    check_label(state, x)?;
    check_edges(edges)?;
    let masses = match state {
        StateHandle::Gaussian(_) => {
            let s = rotation_to_axis(x.vector())?;
            let rotated = transform_state(state, &s)?;
            let g = rotated.as_gaussian().expect("Gaussian stays Gaussian");
            // marginal of z_1 is N(mean_1, cov_11); the outcome is ‖x‖ z_1
            let r = x.vector().norm();
            normal_bins(r * g.mean().coords()[0], r * r * g.cov()[(0, 0)], edges)
        }
        StateHandle::Fock(f) => {
            let red = reduce_label(f, x.vector(), Route::Wigner)?;
            outcome_masses(&red, edges, Route::Wigner)?
        }
    };
    covered(edges.to_vec(), masses)
}

/// The same distribution as [`quadrature_pdf`] computed without Wigner
/// functions: from the moments `(x·μ, xᵀVx)` on the Gaussian backbone, and
/// from Hermite-function wavefunctions after phase shifts on the Fock
/// backbone.
pub fn born_quadrature_pdf_oracle(state: &StateHandle, x: &QuadratureLabel, edges: &[f64]) -> Result<BinnedPdf> {
    check_label(state, x)?;
    check_edges(edges)?;
    let masses = match state {
        StateHandle::Gaussian(g) => {
            let v = x.vector().to_vector();
            let mean = v.dot(&g.mean().to_vector());
            let var = (v.transpose() * g.cov() * &v)[(0, 0)];
            normal_bins(mean, var, edges)
        }
        StateHandle::Fock(f) => {
            let red = reduce_label(f, x.vector(), Route::Born)?;
            outcome_masses(&red, edges, Route::Born)?
        }
    };
    BinnedPdf::new(edges.to_vec(), masses)
}

/// Joint outcome distribution of the basis quadratures of a context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextRepresentation {
    GaussianJoint { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Row-major masses over the product of per-axis bins.
    GridJoint { edges: Vec<Vec<f64>>, masses: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalContextModel {
    pub context: LagrangianSubspace,
    pub representation: ContextRepresentation,
}

#[derive(Serialize)]
struct ContextJson<'a> {
    context: Vec<Vec<f64>>,
    #[serde(flatten)]
    representation: &'a ContextRepresentation,
}

/// Nodes per axis of the product Gauss–Legendre rule used to bin a Gaussian
/// joint distribution.
const BOX_RULE_ORDER: usize = 10;

impl EmpiricalContextModel {
    pub fn modes(&self) -> usize {
        self.context.modes()
    }

    pub fn to_json(&self) -> Result<String> {
        let context = self.context.rows().iter().map(|r| r.coords().to_vec()).collect();
        Ok(serde_json::to_string_pretty(&ContextJson { context, representation: &self.representation })?)
    }

    /// Masses on the product of the given per-axis bins (row-major).
    pub fn binned(&self, edges: &[Vec<f64>]) -> Result<Vec<f64>> {
        let m = self.modes();
        if edges.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: edges.len() });
        }
        for e in edges {
            check_edges(e)?;
        }
        match &self.representation {
            ContextRepresentation::GridJoint { edges: own, masses } => {
                let same = own.len() == edges.len()
                    && own.iter().zip(edges).all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12));
                if !same {
                    return Err(Error::InvalidInput("requested bins differ from the model's histogram bins".into()));
                }
                Ok(masses.clone())
            }
            ContextRepresentation::GaussianJoint { mean, cov } => gaussian_box_masses(mean, cov, edges),
        }
    }

    /// Distribution of the `axis`-th basis quadrature.
    pub fn marginal(&self, axis: usize, edges: &[f64]) -> Result<BinnedPdf> {
        let m = self.modes();
        if axis >= m {
            return Err(Error::IndexOutOfRange { index: axis + 1, modes: m });
        }
        match &self.representation {
            ContextRepresentation::GaussianJoint { mean, cov } => {
                BinnedPdf::new(edges.to_vec(), normal_bins(mean[axis], cov[axis][axis], edges))
            }
            ContextRepresentation::GridJoint { edges: own, masses } => {
                let same = own[axis].len() == edges.len() && own[axis].iter().zip(edges).all(|(x, y)| (x - y).abs() <= 1e-12);
                if !same {
                    return Err(Error::InvalidInput("marginal bins must match the histogram bins".into()));
                }
                let counts: Vec<usize> = own.iter().map(|e| e.len() - 1).collect();
                let inner: usize = counts[axis + 1..].iter().product();
                let mut out = vec![0.0; counts[axis]];
                for (flat, v) in masses.iter().enumerate() {
                    out[(flat / inner) % counts[axis]] += v;
                }
                BinnedPdf::new(edges.to_vec(), out)
            }
        }
    }

    /// Total-variation distance between the two models on common bins.
    pub fn tv_distance(&self, other: &Self, edges: &[Vec<f64>]) -> Result<f64> {
        let a = self.binned(edges)?;
        let b = other.binned(edges)?;
        Ok(0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>())
    }
}

fn gaussian_box_masses(mean: &[f64], cov: &[Vec<f64>], edges: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = mean.len();
    let v = DMatrix::from_fn(m, m, |i, j| cov[i][j]);
    let chol = nalgebra::Cholesky::new(v).ok_or_else(|| Error::InvalidInput("joint covariance is singular".into()))?;
    let det: f64 = chol.l().diagonal().iter().map(|d| d * d).product();
    let inv = chol.inverse();
    let norm = 1.0 / (TAU.powf(m as f64 / 2.0) * det.sqrt());
    let (gx, gw) = gauss_legendre(BOX_RULE_ORDER);
    let counts: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
    let total: usize = counts.iter().product();
    let nodes_per_box = BOX_RULE_ORDER.pow(m as u32);
    use rayon::prelude::*;
    let masses = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut idx = vec![0; m];
            let mut rest = flat;
            for k in (0..m).rev() {
                idx[k] = rest % counts[k];
                rest /= counts[k];
            }
            let mut sum = 0.0;
            let mut z = vec![0.0; m];
            for node in 0..nodes_per_box {
                let mut w = 1.0;
                let mut r = node;
                for k in 0..m {
                    let g = r % BOX_RULE_ORDER;
                    r /= BOX_RULE_ORDER;
                    let (lo, hi) = (edges[k][idx[k]], edges[k][idx[k] + 1]);
                    z[k] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx[g] - mean[k];
                    w *= 0.5 * (hi - lo) * gw[g];
                }
                let mut quad = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        quad += z[i] * inv[(i, j)] * z[j];
                    }
                }
                sum += w * (-0.5 * quad).exp();
            }
            sum * norm
        })
        .collect();
    Ok(masses)
}

/// Joint distribution of the basis quadratures (rows of the canonical basis)
/// of a Lagrangian context.
///
/// Gaussian backbone: exact moments `(Bμ, BVBᵀ)`. Fock backbone: histogram
/// over `edges` (one edge list per basis row), supported when every basis
/// row lives on a single mode, distinct modes for distinct rows.
pub fn context_distribution(state: &StateHandle, l: &LagrangianSubspace, edges: &[Vec<f64>]) -> Result<EmpiricalContextModel> {
    let m = state.modes();
    if l.modes() != m {
        return Err(Error::DimensionMismatch { expected: m, found: l.modes() });
    }
    let b = l.basis();
    let representation = match state {
        StateHandle::Gaussian(g) => gaussian_joint(g, b),
        StateHandle::Fock(_) => {
            if edges.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: edges.len() });
            }
            for e in edges {
                check_edges(e)?;
            }
            // row → mode assignment
            let mut mode_of_row = vec![usize::MAX; m];
            for (i, slot) in mode_of_row.iter_mut().enumerate() {
                let support: Vec<usize> =
                    (0..m).filter(|&k| b[(i, k)] != 0.0 || b[(i, m + k)] != 0.0).collect();
                if support.len() != 1 {
                    return Err(Error::Unsupported(
                        "Fock-backbone contexts need every basis quadrature on a single mode".into(),
                    ));
                }
                *slot = support[0];
            }
            let mut row_of_mode = vec![usize::MAX; m];
            for (i, &k) in mode_of_row.iter().enumerate() {
                if row_of_mode[k] != usize::MAX {
                    return Err(Error::Unsupported("two basis quadratures act on the same mode".into()));
                }
                row_of_mode[k] = i;
            }
            // rotate every mode so that its row becomes r_k q_k
            let mut label = vec![0.0; 2 * m];
            let mut weights = vec![0.0; m];
            for k in 0..m {
                let i = row_of_mode[k];
                label[k] = b[(i, k)];
                label[m + k] = b[(i, m + k)];
                weights[k] = b[(i, k)].hypot(b[(i, m + k)]);
            }
            let rot = {
                let mut mat = DMatrix::identity(2 * m, 2 * m);
                for k in 0..m {
                    let s = rotation_to_axis(&PhasePoint::new(vec![label[k], label[m + k]])?)?;
                    let s = s.matrix();
                    mat[(k, k)] = s[(0, 0)];
                    mat[(k, m + k)] = s[(0, 1)];
                    mat[(m + k, k)] = s[(1, 0)];
                    mat[(m + k, m + k)] = s[(1, 1)];
                }
                crate::SymplecticMap::new(mat, None)?
            };
            let rotated = transform_state(state, &rot)?;
            let rf = rotated.as_fock().expect("Fock stays Fock");
            let tables: Vec<Vec<C64>> =
                (0..m).map(|k| binned_marginal_kernels(rf.cutoffs()[k], weights[k], &edges[row_of_mode[k]])).collect();
            let counts: Vec<usize> = (0..m).map(|k| edges[row_of_mode[k]].len() - 1).collect();
            let ev = FockWignerEvaluator::new(rf);
            let cut = rf.cutoffs().to_vec();
            let mode_major = ev.contract(&counts, |k, a, _, out| {
                let cc = cut[k] * cut[k];
                out.copy_from_slice(&tables[k][a * cc..(a + 1) * cc]);
            });
            // mode-major → row-major over basis rows
            let row_counts: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
            let mut row_strides = vec![1usize; m];
            for i in (0..m.saturating_sub(1)).rev() {
                row_strides[i] = row_strides[i + 1] * row_counts[i + 1];
            }
            let mut masses = vec![0.0; mode_major.len()];
            for (flat, v) in mode_major.iter().enumerate() {
                let mut rest = flat;
                let mut pos = 0;
                for k in (0..m).rev() {
                    let d = rest % counts[k];
                    rest /= counts[k];
                    pos += d * row_strides[row_of_mode[k]];
                }
                masses[pos] = v.re.max(0.0);
            }
            ContextRepresentation::GridJoint { edges: edges.to_vec(), masses }
        }
    };
    Ok(EmpiricalContextModel { context: l.clone(), representation })
}

fn gaussian_joint(g: &GaussianState, b: &DMatrix<f64>) -> ContextRepresentation {
    let mean = b * g.mean().to_vector();
    let cov = b * g.cov() * b.transpose();
    let m = b.nrows();
    ContextRepresentation::GaussianJoint {
        mean: mean.iter().copied().collect(),
        cov: (0..m).map(|i| (0..m).map(|j| 0.5 * (cov[(i, j)] + cov[(j, i)])).collect()).collect(),
    }
}

/// Largest number of preimage bins the displacement distribution will build.
const MAX_PREIMAGE_BINS: usize = 400_000;

/// Spectral distribution of the displacement operator `D(d)` over phases in
/// `[0, 2π)`, split into `circle_bins` equal arcs.
///
/// `D(d) = exp(i r ℓ̂)` with `ℓ = Jd/‖d‖` and `r = ‖d‖`, so the phase is
/// `r·t mod 2π` for the outcome `t` of the quadrature `ℓ̂`; its distribution is
/// obtained from [`quadrature_pdf`] on the preimage bins.
pub fn displacement_pvm_distribution(state: &StateHandle, d: &PhasePoint, circle_bins: usize) -> Result<BinnedPdf> {
    if circle_bins < 2 {
        return Err(Error::InvalidInput("need at least two circle bins".into()));
    }
    let m = state.modes();
    if d.modes() != m {
        return Err(Error::DimensionMismatch { expected: 2 * m, found: d.dim() });
    }
    let circle = uniform_edges(0.0, TAU, circle_bins);
    if d.is_zero() {
        let mut masses = vec![0.0; circle_bins];
        masses[0] = 1.0;
        return BinnedPdf::new(circle, masses);
    }
    let r = d.norm();
    let jd = j_matrix::<f64>(m) * d.to_vector();
    let label = QuadratureLabel::new(PhasePoint::from_vector(&(jd / r))?)?;
    let extent = outcome_extent(state, &label);
    let k_lo = (-extent * r / TAU).floor() as i64;
    let k_hi = (extent * r / TAU).ceil() as i64;
    let periods = (k_hi - k_lo) as usize;
    if periods * circle_bins > MAX_PREIMAGE_BINS {
        return Err(Error::Unsupported(format!("displacement norm {r} needs too many preimage bins")));
    }
    let mut edges = Vec::with_capacity(periods * circle_bins + 1);
    for k in k_lo..k_hi {
        for j in 0..circle_bins {
            edges.push(TAU * (k as f64 + j as f64 / circle_bins as f64) / r);
        }
    }
    edges.push(TAU * k_hi as f64 / r);
    let line = quadrature_pdf(state, &label, &edges)?;
    let mut masses = vec![0.0; circle_bins];
    for (i, mass) in line.masses().iter().enumerate() {
        masses[i % circle_bins] += mass;
    }
    BinnedPdf::new(circle, masses)
}

/// A half-width outside which the outcome of a unit-norm label carries
/// negligible probability.
pub(crate) fn outcome_extent(state: &StateHandle, x: &QuadratureLabel) -> f64 {
    match state {
        StateHandle::Gaussian(g) => {
            let v = x.vector().to_vector();
            let mean = v.dot(&g.mean().to_vector());
            let var = (v.transpose() * g.cov() * &v)[(0, 0)];
            mean.abs() + 12.0 * var.sqrt() * x.vector().norm().max(1.0)
        }
        StateHandle::Fock(f) => {
            let cmax = f.cutoffs().iter().copied().max().unwrap_or(1);
            let per_mode = (2.0 * cmax as f64 + 1.0).sqrt() + 6.0;
            per_mode * (f.modes() as f64).sqrt() * x.vector().norm()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{make_fock, squeezed_vacuum_fock};

    fn label(v: &[f64]) -> QuadratureLabel {
        QuadratureLabel::new(PhasePoint::new(v.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn vacuum_density_at_origin() {
        let edges = uniform_edges(-8.0, 8.0, 1601);
        let want = 1.0 / std::f64::consts::PI.sqrt();
        for st in [StateHandle::Gaussian(GaussianState::vacuum(1)), make_fock(&[0], &[4]).unwrap()] {
            let pdf = quadrature_pdf(&st, &label(&[1.0, 0.0]), &edges).unwrap();
            assert!((pdf.density_at(0.0) - want).abs() < 1e-4, "{}", st.backbone());
        }
    }

    #[test]
    fn one_photon_has_a_node_at_zero() {
        let edges = uniform_edges(-8.0, 8.0, 1601);
        let st = make_fock(&[1], &[4]).unwrap();
        let pdf = quadrature_pdf(&st, &label(&[1.0, 0.0]), &edges).unwrap();
        assert!(pdf.density_at(0.0) < 1e-5);
    }

    #[test]
    fn scaled_label_variance() {
        let st = StateHandle::Gaussian(GaussianState::vacuum(1));
        let pdf = quadrature_pdf(&st, &label(&[2.0, 0.0]), &uniform_edges(-10.0, 10.0, 2001)).unwrap();
        assert!((pdf.variance() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn coverage_failure() {
        let st = StateHandle::Gaussian(GaussianState::vacuum(1));
        assert!(matches!(
            quadrature_pdf(&st, &label(&[1.0, 0.0]), &uniform_edges(-1.0, 1.0, 20)),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn routes_agree_on_squeezed_fock_state() {
        let st: StateHandle = squeezed_vacuum_fock(0.5, 30).unwrap().into();
        let edges = default_edges();
        for x in [[1.0, 0.0], [0.3, -0.8], [0.0, 1.5]] {
            let a = quadrature_pdf(&st, &label(&x), &edges).unwrap();
            let b = born_quadrature_pdf_oracle(&st, &label(&x), &edges).unwrap();
            assert!(a.tv_distance(&b).unwrap() < 1e-6);
        }
    }

    #[test]
    fn two_mode_fock_label_matches_gaussian() {
        let fock: StateHandle = make_fock(&[0, 0], &[1, 1]).unwrap();
        let gauss = StateHandle::Gaussian(GaussianState::vacuum(2));
        let x = label(&[0.6, -1.1, 0.4, 0.9]);
        let edges = default_edges();
        let g = quadrature_pdf(&gauss, &x, &edges).unwrap();
        let f = quadrature_pdf(&fock, &x, &edges).unwrap();
        let b = born_quadrature_pdf_oracle(&fock, &x, &edges).unwrap();
        assert!(g.tv_distance(&f).unwrap() < 1e-3);
        assert!(g.tv_distance(&b).unwrap() < 1e-3);
    }

    #[test]
    fn fock_context_matches_gaussian_joint() {
        let fock: StateHandle = make_fock(&[0, 0], &[2, 2]).unwrap();
        let gauss = StateHandle::Gaussian(GaussianState::vacuum(2));
        let rows = [PhasePoint::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap(), PhasePoint::new(vec![0.0, 0.0, 0.0, 2.0]).unwrap()];
        let l = LagrangianSubspace::from_rows(&rows).unwrap();
        let edges = vec![uniform_edges(-6.0, 6.0, 12), uniform_edges(-6.0, 6.0, 12)];
        let a = context_distribution(&fock, &l, &edges).unwrap();
        let b = context_distribution(&gauss, &l, &edges).unwrap();
        assert!(a.tv_distance(&b, &edges).unwrap() < 1e-6);
        let mixing = LagrangianSubspace::from_rows(&[
            PhasePoint::new(vec![1.0, 1.0, 0.0, 0.0]).unwrap(),
            PhasePoint::new(vec![0.0, 0.0, 1.0, -1.0]).unwrap(),
        ])
        .unwrap();
        assert!(matches!(context_distribution(&fock, &mixing, &edges), Err(Error::Unsupported(_))));
    }

    #[test]
    fn displacement_identity_and_total_mass() {
        let st = StateHandle::Gaussian(GaussianState::vacuum(1));
        let z = displacement_pvm_distribution(&st, &PhasePoint::zeros(1), 8).unwrap();
        assert_eq!(z.masses()[0], 1.0);
        let d = displacement_pvm_distribution(&st, &PhasePoint::new(vec![0.3, 1.2]).unwrap(), 64).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-9);
    }
}
