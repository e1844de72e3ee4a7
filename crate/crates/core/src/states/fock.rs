use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock_basis::{alpha_from_qp, coherent_amplitudes, glauber_matrix, position_matrix};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Multimode density matrix in a truncated number basis. The basis index is
/// row-major over modes, mode 0 slowest, so that `ρ_a ⊗ ρ_b` has index
/// `i_a·dim_b + i_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct FockDensityMatrix {
    cutoffs: Vec<usize>,
    matrix: DMatrix<C64>,
}

/// Strides of the row-major multi-index.
#[derive(Clone, Debug)]
pub(crate) struct ModeIndexer {
    pub cutoffs: Vec<usize>,
    pub strides: Vec<usize>,
}

impl ModeIndexer {
    pub fn new(cutoffs: &[usize]) -> Self {
        let mut strides = vec![1; cutoffs.len()];
        for k in (0..cutoffs.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * cutoffs[k + 1];
        }
        Self { cutoffs: cutoffs.to_vec(), strides }
    }

    #[inline]
    pub fn digit(&self, i: usize, k: usize) -> usize {
        (i / self.strides[k]) % self.cutoffs[k]
    }

    pub fn dim(&self) -> usize {
        self.cutoffs.iter().product()
    }
}

impl FockDensityMatrix {
    /// Validates Hermiticity (1e-10), unit trace (1e-9) and positivity
    /// (eigenvalues ≥ −1e-8).
    pub fn new(cutoffs: Vec<usize>, matrix: DMatrix<C64>) -> Result<Self> {
        let st = Self::from_parts(cutoffs, matrix)?;
        st.validate()?;
        Ok(st)
    }

    pub(crate) fn from_parts(cutoffs: Vec<usize>, matrix: DMatrix<C64>) -> Result<Self> {
        if cutoffs.is_empty() || cutoffs.contains(&0) {
            return Err(Error::InvalidInput("cutoffs must be positive, one per mode".into()));
        }
        let dim: usize = cutoffs.iter().product();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: matrix.nrows() });
        }
        Ok(Self { cutoffs, matrix })
    }

    /// |ψ⟩⟨ψ| for a normalized amplitude vector.
    pub fn pure(cutoffs: Vec<usize>, amplitudes: &[C64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDensityMatrix(format!("state vector norm² {norm} ≠ 1")));
        }
        let n = amplitudes.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| amplitudes[i] * amplitudes[j].conj());
        Self::from_parts(cutoffs, matrix)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        let mut herm: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                herm = herm.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        if herm > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!("not Hermitian (max deviation {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} ≠ 1")));
        }
        // Cholesky of ρ + 1e-8·1 exists iff every eigenvalue exceeds −1e-8.
        let shifted = (m + m.adjoint()) * C64::new(0.5, 0.0)
            + DMatrix::<C64>::identity(m.nrows(), m.ncols()) * C64::new(1e-8, 0.0);
        if Cholesky::new(shifted).is_none() {
            return Err(Error::InvalidDensityMatrix("negative eigenvalue below −1e-8".into()));
        }
        Ok(())
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub(crate) fn indexer(&self) -> ModeIndexer {
        ModeIndexer::new(&self.cutoffs)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// ⟨n̂_k⟩ for mode `k` (0-based).
    pub fn mean_photon_number(&self, mode: usize) -> f64 {
        let ix = self.indexer();
        (0..self.dim()).map(|i| self.matrix[(i, i)].re * ix.digit(i, mode) as f64).sum()
    }

    /// Smallest eigenvalue (dense Hermitian eigensolve).
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// ρ_self ⊗ ρ_other with the modes of `other` appended.
    pub fn tensor(&self, other: &Self) -> Self {
        let cutoffs = self.cutoffs.iter().chain(&other.cutoffs).copied().collect();
        Self { cutoffs, matrix: self.matrix.kronecker(&other.matrix) }
    }

    /// Reduced state on the modes in `keep` (0-based, any order; the output
    /// keeps them in the given order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidInput("partial trace must keep at least one mode".into()));
        }
        for (n, &k) in keep.iter().enumerate() {
            if k >= self.modes() || keep[..n].contains(&k) {
                return Err(Error::IndexOutOfRange { index: k + 1, modes: self.modes() });
            }
        }
        let ix = self.indexer();
        let kept: Vec<usize> = keep.iter().map(|&k| self.cutoffs[k]).collect();
        let kix = ModeIndexer::new(&kept);
        let traced: Vec<usize> = (0..self.modes()).filter(|k| !keep.contains(k)).collect();
        let dk = kix.dim();
        let mut out = DMatrix::from_element(dk, dk, ZERO);
        let local = |i: usize| keep.iter().enumerate().map(|(n, &k)| ix.digit(i, k) * kix.strides[n]).sum::<usize>();
        let env = |i: usize| traced.iter().map(|&k| ix.digit(i, k) * ix.strides[k]).sum::<usize>();
        let locs: Vec<usize> = (0..self.dim()).map(local).collect();
        let envs: Vec<usize> = (0..self.dim()).map(env).collect();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if envs[i] == envs[j] {
                    out[(locs[i], locs[j])] += self.matrix[(i, j)];
                }
            }
        }
        Ok(Self { cutoffs: kept, matrix: out })
    }

    /// `(U ⊗ 1) ρ (U ⊗ 1)†` with `U` acting on `modes` (row-major over those
    /// modes in the given order).
    pub fn conjugate_local(&self, modes: &[usize], u: &DMatrix<C64>) -> Result<Self> {
        let ix = self.indexer();
        for &k in modes {
            if k >= self.modes() {
                return Err(Error::IndexOutOfRange { index: k + 1, modes: self.modes() });
            }
        }
        let local_cut: Vec<usize> = modes.iter().map(|&k| self.cutoffs[k]).collect();
        let lix = ModeIndexer::new(&local_cut);
        let dl = lix.dim();
        if u.nrows() != dl || u.ncols() != dl {
            return Err(Error::DimensionMismatch { expected: dl, found: u.nrows() });
        }
        let dim = self.dim();
        let loc: Vec<usize> =
            (0..dim).map(|i| modes.iter().enumerate().map(|(n, &k)| ix.digit(i, k) * lix.strides[n]).sum()).collect();
        // full index of (environment of i, local index b)
        let base: Vec<usize> = (0..dim)
            .map(|i| i - modes.iter().map(|&k| ix.digit(i, k) * ix.strides[k]).sum::<usize>())
            .collect();
        let local_offset: Vec<usize> = (0..dl)
            .map(|b| modes.iter().enumerate().map(|(n, &k)| lix.digit(b, n) * ix.strides[k]).sum())
            .collect();
        let rho = &self.matrix;
        let mut tmp = DMatrix::from_element(dim, dim, ZERO);
        for i in 0..dim {
            let (a, e) = (loc[i], base[i]);
            for b in 0..dl {
                let ub = u[(a, b)];
                if ub == ZERO {
                    continue;
                }
                let src = e + local_offset[b];
                for j in 0..dim {
                    tmp[(i, j)] += ub * rho[(src, j)];
                }
            }
        }
        let mut out = DMatrix::from_element(dim, dim, ZERO);
        for j in 0..dim {
            let (a, e) = (loc[j], base[j]);
            for b in 0..dl {
                let ub = u[(a, b)].conj();
                if ub == ZERO {
                    continue;
                }
                let src = e + local_offset[b];
                for i in 0..dim {
                    out[(i, j)] += tmp[(i, src)] * ub;
                }
            }
        }
        Ok(Self { cutoffs: self.cutoffs.clone(), matrix: out })
    }

    /// Multiplies ρ_ij by e^{iθ(n_k(i) − n_k(j))}.
    pub(crate) fn rotated(&self, mode: usize, theta: f64) -> Self {
        let ix = self.indexer();
        let dim = self.dim();
        let phase: Vec<C64> = (0..dim).map(|i| C64::from_polar(1.0, theta * ix.digit(i, mode) as f64)).collect();
        let matrix = DMatrix::from_fn(dim, dim, |i, j| self.matrix[(i, j)] * phase[i] * phase[j].conj());
        Self { cutoffs: self.cutoffs.clone(), matrix }
    }
}

/// Product number state |n_1 … n_M⟩⟨n_1 … n_M|.
pub fn fock_number_state(occupations: &[usize], cutoffs: &[usize]) -> Result<FockDensityMatrix> {
    if occupations.len() != cutoffs.len() || occupations.is_empty() {
        return Err(Error::DimensionMismatch { expected: cutoffs.len(), found: occupations.len() });
    }
    for (k, (&n, &c)) in occupations.iter().zip(cutoffs).enumerate() {
        if n >= c {
            return Err(Error::OccupationOutOfRange { mode: k + 1, occupation: n, cutoff: c });
        }
    }
    let ix = ModeIndexer::new(cutoffs);
    let idx: usize = occupations.iter().zip(&ix.strides).map(|(n, s)| n * s).sum();
    let dim = ix.dim();
    let mut m = DMatrix::from_element(dim, dim, ZERO);
    m[(idx, idx)] = C64::new(1.0, 0.0);
    FockDensityMatrix::from_parts(cutoffs.to_vec(), m)
}

fn check_retained_norm(cutoff: usize, norm: f64) -> Result<()> {
    if norm < 1.0 - 1e-8 {
        return Err(Error::InsufficientCutoff { cutoff, norm });
    }
    Ok(())
}

fn normalized(v: Vec<C64>) -> Vec<C64> {
    let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

/// Coherent state |α⟩, renormalized after truncation.
pub fn coherent_fock(alpha: C64, cutoff: usize) -> Result<FockDensityMatrix> {
    let amps = coherent_amplitudes(alpha, cutoff);
    check_retained_norm(cutoff, amps.iter().map(|z| z.norm_sqr()).sum())?;
    FockDensityMatrix::pure(vec![cutoff], &normalized(amps))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CatParity {
    Even,
    Odd,
}

/// Normalized (|α⟩ ± |−α⟩) for real α.
pub fn cat_fock(alpha: f64, parity: CatParity, cutoff: usize) -> Result<FockDensityMatrix> {
    let amps = coherent_amplitudes(C64::new(alpha, 0.0), cutoff);
    check_retained_norm(cutoff, amps.iter().map(|z| z.norm_sqr()).sum())?;
    let keep = match parity {
        CatParity::Even => 0,
        CatParity::Odd => 1,
    };
    let v: Vec<C64> = amps.iter().enumerate().map(|(n, a)| if n % 2 == keep { a * 2.0 } else { ZERO }).collect();
    if v.iter().all(|z| *z == ZERO) {
        return Err(Error::InvalidInput("cat state has vanishing amplitude".into()));
    }
    FockDensityMatrix::pure(vec![cutoff], &normalized(v))
}

/// Squeezed vacuum with position variance e^{−2r}/2:
/// (cosh r)^{−1/2} Σ_n (−tanh r)^n √((2n)!)/(2^n n!) |2n⟩.
pub fn squeezed_vacuum_fock(r: f64, cutoff: usize) -> Result<FockDensityMatrix> {
    let t = -r.tanh();
    let mut v = vec![ZERO; cutoff];
    let mut c = 1.0 / r.cosh().sqrt();
    for n in 0.. {
        if 2 * n >= cutoff {
            break;
        }
        v[2 * n] = C64::new(c, 0.0);
        // c_{n+1}/c_n = t·√((2n+1)(2n+2))/(2(n+1))
        let nf = n as f64;
        c *= t * ((2.0 * nf + 1.0) * (2.0 * nf + 2.0)).sqrt() / (2.0 * (nf + 1.0));
    }
    check_retained_norm(cutoff, v.iter().map(|z| z.norm_sqr()).sum())?;
    FockDensityMatrix::pure(vec![cutoff], &normalized(v))
}

/// Single-mode thermal state with geometric weights n̄^n/(1+n̄)^{n+1},
/// renormalized after truncation.
pub fn thermal_fock(nbar: f64, cutoff: usize) -> Result<FockDensityMatrix> {
    if !(nbar >= 0.0) {
        return Err(Error::InvalidInput("mean photon number must be nonnegative".into()));
    }
    let w: Vec<f64> = (0..cutoff).map(|n| nbar.powi(n as i32) / (1.0 + nbar).powi(n as i32 + 1)).collect();
    let total: f64 = w.iter().sum();
    check_retained_norm(cutoff, total)?;
    let mut m = DMatrix::from_element(cutoff, cutoff, ZERO);
    for (n, wn) in w.iter().enumerate() {
        m[(n, n)] = C64::new(wn / total, 0.0);
    }
    FockDensityMatrix::from_parts(vec![cutoff], m)
}

/// Convex combination of Fock density matrices of equal shape.
pub fn mix_fock(states: &[&FockDensityMatrix], weights: &[f64]) -> Result<FockDensityMatrix> {
    if states.is_empty() || states.len() != weights.len() {
        return Err(Error::InvalidInput("need one weight per state".into()));
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::WeightSum { sum });
    }
    let cut = states[0].cutoffs();
    if states.iter().any(|s| s.cutoffs() != cut) {
        return Err(Error::BackboneMismatch("mixture components have different cutoffs".into()));
    }
    let mut m = DMatrix::from_element(states[0].dim(), states[0].dim(), ZERO);
    for (s, w) in states.iter().zip(weights) {
        m += s.matrix() * C64::new(*w, 0.0);
    }
    FockDensityMatrix::from_parts(cut.to_vec(), m)
}

/// Gates acting on the Fock backbone. Mode indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FockGate {
    /// Phase shift e^{iθ n̂} (the e^{iθ/2} global phase is dropped).
    Rot { mode: usize, theta: f64 },
    /// Displacement D(q, p) with α = (q + ip)/√2.
    Disp { mode: usize, q: f64, p: f64 },
    /// e^{i g q̂_k q̂_l}.
    Cz { k: usize, l: usize, g: f64 },
}

/// e^{i g q̂⊗q̂} on a `ck × cl` truncation, exactly unitary there.
pub fn cz_unitary(ck: usize, cl: usize, g: f64) -> DMatrix<C64> {
    let h = position_matrix(ck).kronecker(&position_matrix(cl));
    let eig = SymmetricEigen::new(h);
    let v = eig.eigenvectors.map(|x| C64::new(x, 0.0));
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, g * l)));
    &v * phases * v.adjoint()
}

/// ρ → UρU†. Fails with a truncation error if the trace drifts by more
/// than 1e-6.
pub fn apply_gate_fock(state: &FockDensityMatrix, gate: FockGate) -> Result<FockDensityMatrix> {
    let m = state.modes();
    let check = |k: usize| {
        if k >= m {
            Err(Error::IndexOutOfRange { index: k + 1, modes: m })
        } else {
            Ok(())
        }
    };
    let out = match gate {
        FockGate::Rot { mode, theta } => {
            check(mode)?;
            state.rotated(mode, theta)
        }
        FockGate::Disp { mode, q, p } => {
            check(mode)?;
            let c = state.cutoffs()[mode];
            let d = DMatrix::from_row_slice(c, c, &glauber_matrix(alpha_from_qp(q, p), c));
            state.conjugate_local(&[mode], &d)?
        }
        FockGate::Cz { k, l, g } => {
            check(k)?;
            check(l)?;
            if k == l {
                return Err(Error::InvalidInput("CZ needs two distinct modes".into()));
            }
            let u = cz_unitary(state.cutoffs()[k], state.cutoffs()[l], g);
            state.conjugate_local(&[k, l], &u)?
        }
    };
    let trace = out.trace();
    if (trace - 1.0).abs() > 1e-6 {
        return Err(Error::Truncation { trace });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_state_basics() {
        let s = fock_number_state(&[1], &[12]).unwrap();
        assert!((s.trace() - 1.0).abs() < 1e-15);
        assert!((s.purity() - 1.0).abs() < 1e-12);
        assert!(s.validate().is_ok());
        assert!(matches!(fock_number_state(&[12], &[12]), Err(Error::OccupationOutOfRange { .. })));
    }

    #[test]
    fn cat_limits() {
        let cat = cat_fock(1e-6, CatParity::Even, 10).unwrap();
        assert!(cat.matrix()[(0, 0)].re > 1.0 - 1e-9);
        let cat = cat_fock(2.0, CatParity::Even, 30).unwrap();
        assert!((cat.trace() - 1.0).abs() < 1e-9);
        assert!(matches!(cat_fock(2.0, CatParity::Even, 10), Err(Error::InsufficientCutoff { .. })));
    }

    #[test]
    fn odd_cat_photon_number_matches_series() {
        // Independent series: weights |α|^{2n}/n! on odd n.
        let a2: f64 = 4.0;
        let (mut num, mut den, mut term) = (0.0, 0.0, 1.0);
        for n in 0..200 {
            if n > 0 {
                term *= a2 / n as f64;
            }
            if n % 2 == 1 {
                num += n as f64 * term;
                den += term;
            }
        }
        let cat = cat_fock(2.0, CatParity::Odd, 40).unwrap();
        assert!((cat.mean_photon_number(0) - num / den).abs() < 1e-9);
        assert!((num / den - a2 / a2.tanh()).abs() < 1e-9);
    }

    #[test]
    fn thermal_mix_has_right_photon_number() {
        let cutoff = 40;
        let nbar: f64 = 1.0;
        let comps: Vec<FockDensityMatrix> = (0..cutoff).map(|n| fock_number_state(&[n], &[cutoff]).unwrap()).collect();
        let mut w: Vec<f64> = (0..cutoff).map(|n| nbar.powi(n as i32) / (1.0 + nbar).powi(n as i32 + 1)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let refs: Vec<&FockDensityMatrix> = comps.iter().collect();
        let th = mix_fock(&refs, &w).unwrap();
        assert!((th.mean_photon_number(0) - 1.0).abs() < 1e-4);
        assert!(matches!(mix_fock(&refs[..2], &[0.5, 0.6]), Err(Error::WeightSum { .. })));
    }

    #[test]
    fn rotation_leaves_number_states_alone() {
        let s = fock_number_state(&[3], &[8]).unwrap();
        let r = apply_gate_fock(&s, FockGate::Rot { mode: 0, theta: 0.77 }).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn displacement_of_vacuum() {
        let v = fock_number_state(&[0], &[30]).unwrap();
        // α = 1 ⇒ q = √2, p = 0
        let d = apply_gate_fock(&v, FockGate::Disp { mode: 0, q: 2f64.sqrt(), p: 0.0 }).unwrap();
        assert!((d.mean_photon_number(0) - 1.0).abs() < 1e-6);
        let small = fock_number_state(&[0], &[5]).unwrap();
        assert!(matches!(
            apply_gate_fock(&small, FockGate::Disp { mode: 0, q: 3.0, p: 0.0 }),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn cz_is_unitary_on_the_retained_block() {
        let u = cz_unitary(12, 12, 1.0);
        let r = u.adjoint() * &u - DMatrix::<C64>::identity(144, 144);
        assert!(r.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-6);
    }

    #[test]
    fn squeezed_vacuum_position_variance() {
        let r = 0.5;
        let s = squeezed_vacuum_fock(r, 40).unwrap();
        let q = position_matrix(40).map(|x| C64::new(x, 0.0));
        let var = (s.matrix() * &q * &q).trace().re;
        assert!((var - (-2.0 * r).exp() / 2.0).abs() < 1e-9);
    }

    #[test]
    fn partial_trace_of_product() {
        let a = fock_number_state(&[1], &[3]).unwrap();
        let b = cat_fock(1.0, CatParity::Even, 14).unwrap();
        let ab = a.tensor(&b);
        assert!((ab.partial_trace(&[1]).unwrap().matrix() - b.matrix()).iter().all(|z| z.norm() < 1e-14));
        assert!((ab.partial_trace(&[0]).unwrap().matrix() - a.matrix()).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn local_conjugation_matches_kronecker() {
        let a = cat_fock(0.8, CatParity::Odd, 14).unwrap();
        let b = coherent_fock(C64::new(0.3, 0.2), 8).unwrap();
        let ab = a.tensor(&b);
        let u = DMatrix::from_row_slice(8, 8, &glauber_matrix(C64::new(0.1, -0.2), 8));
        let full = DMatrix::<C64>::identity(14, 14).kronecker(&u);
        let want = &full * ab.matrix() * full.adjoint();
        let got = ab.conjugate_local(&[1], &u).unwrap();
        assert!((got.matrix() - want).iter().all(|z| z.norm() < 1e-14));
    }
}
