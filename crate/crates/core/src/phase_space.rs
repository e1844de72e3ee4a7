//! Symplectic linear algebra on ℝ^{2M}.
//!
//! Coordinates are always ordered `(q_1..q_M, p_1..p_M)`, so that the
//! symplectic form is `Ω(x, y) = x·Jy` with `J = [[0, 1], [-1, 0]]` in
//! M×M blocks. Every other module inherits this ordering.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A point of phase space. Doubles as a quadrature label and as a hidden
/// variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct PhasePoint<T: Real> {
    coords: Vec<T>,
}

impl<T: Real> TryFrom<Vec<T>> for PhasePoint<T> {
    type Error = Error;

    fn try_from(coords: Vec<T>) -> Result<Self> {
        Self::new(coords)
    }
}

impl<T: Real> From<PhasePoint<T>> for Vec<T> {
    fn from(p: PhasePoint<T>) -> Self {
        p.coords
    }
}

impl<T: Real> PhasePoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() || !coords.len().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "phase-space vectors need an even, positive length (got {})",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite phase-space coordinate".into()));
        }
        Ok(Self { coords })
    }

    /// Builds a point from separate position and momentum parts.
    pub fn from_qp(q: &[T], p: &[T]) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: q.len(), found: p.len() });
        }
        Self::new(q.iter().chain(p).copied().collect())
    }

    pub fn zeros(modes: usize) -> Self {
        assert!(modes >= 1, "at least one mode");
        Self { coords: vec![T::zero(); 2 * modes] }
    }

    /// Unit vector `e_k` along the position of mode `k` (0-based).
    pub fn e(modes: usize, k: usize) -> Self {
        let mut p = Self::zeros(modes);
        p.coords[k] = T::one();
        p
    }

    /// Unit vector `f_k` along the momentum of mode `k` (0-based).
    pub fn f(modes: usize, k: usize) -> Self {
        let mut p = Self::zeros(modes);
        p.coords[modes + k] = T::one();
        p
    }

    #[inline]
    pub fn modes(&self) -> usize {
        self.coords.len() / 2
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn q(&self) -> &[T] {
        &self.coords[..self.modes()]
    }

    pub fn p(&self) -> &[T] {
        &self.coords[self.modes()..]
    }

    /// Position and momentum coordinate of a single mode.
    pub fn mode_pair(&self, k: usize) -> (T, T) {
        (self.coords[k], self.coords[self.modes() + k])
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        check_same_dim(self, other)?;
        Ok(self.coords.iter().zip(&other.coords).fold(T::zero(), |acc, (a, b)| acc + *a * *b))
    }

    pub fn norm(&self) -> T {
        self.coords.iter().fold(T::zero(), |acc, c| acc + *c * *c).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { coords: self.coords.iter().map(|c| *c * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same_dim(self, other)?;
        Ok(Self { coords: self.coords.iter().zip(&other.coords).map(|(a, b)| *a + *b).collect() })
    }

    pub fn to_vector(&self) -> nalgebra::DVector<T> {
        nalgebra::DVector::from_column_slice(&self.coords)
    }

    pub fn from_vector(v: &nalgebra::DVector<T>) -> Result<Self> {
        Self::new(v.iter().copied().collect())
    }

    pub fn cast<U: Real>(&self) -> PhasePoint<U> {
        PhasePoint { coords: self.coords.iter().map(|c| U::lit(Real::to_f64(*c))).collect() }
    }
}

fn check_same_dim<T: Real>(x: &PhasePoint<T>, y: &PhasePoint<T>) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: y.dim() });
    }
    Ok(())
}

/// `Ω(x, y) = x·Jy = Σ_k (q^x_k p^y_k − p^x_k q^y_k)`.
pub fn symplectic_form<T: Real>(x: &PhasePoint<T>, y: &PhasePoint<T>) -> Result<T> {
    check_same_dim(x, y)?;
    Ok(omega_slices(x.coords(), y.coords()))
}

pub(crate) fn omega_slices<T: Real>(x: &[T], y: &[T]) -> T {
    let m = x.len() / 2;
    (0..m).fold(T::zero(), |acc, k| acc + x[k] * y[m + k] - x[m + k] * y[k])
}

/// The 2M×2M matrix J.
pub fn j_matrix<T: Real>(modes: usize) -> DMatrix<T> {
    let n = 2 * modes;
    DMatrix::from_fn(n, n, |i, j| {
        if j == i + modes {
            T::one()
        } else if i == j + modes {
            -T::one()
        } else {
            T::zero()
        }
    })
}

/// Max-abs entry of SᵀJS − J.
pub fn symplectic_residual<T: Real>(s: &DMatrix<T>) -> T {
    let modes = s.nrows() / 2;
    let j = j_matrix::<T>(modes);
    let r = s.transpose() * &j * s - j;
    max_abs(&r)
}

/// Max-abs entry of SᵀS − I.
pub fn orthogonality_residual<T: Real>(s: &DMatrix<T>) -> T {
    let r = s.transpose() * s - DMatrix::<T>::identity(s.nrows(), s.ncols());
    max_abs(&r)
}

pub(crate) fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// An affine symplectic map `x ↦ Sx + d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticMap<T: Real> {
    matrix: DMatrix<T>,
    displacement: Option<PhasePoint<T>>,
}

impl<T: Real> SymplecticMap<T> {
    pub fn new(matrix: DMatrix<T>, displacement: Option<PhasePoint<T>>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 || !matrix.nrows().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "symplectic matrix must be square with even size, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if let Some(d) = &displacement {
            if d.dim() != matrix.nrows() {
                return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: d.dim() });
            }
        }
        let residual = symplectic_residual(&matrix);
        // entries of large maps carry proportionally larger rounding
        let scale = T::one().max(max_abs(&matrix) * max_abs(&matrix));
        if !(residual <= T::structural_tol() * scale) {
            return Err(Error::NotSymplectic { residual: Real::to_f64(residual) });
        }
        Ok(Self { matrix, displacement })
    }

    pub fn identity(modes: usize) -> Self {
        Self { matrix: DMatrix::identity(2 * modes, 2 * modes), displacement: None }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn displacement(&self) -> Option<&PhasePoint<T>> {
        self.displacement.as_ref()
    }

    pub fn modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn with_displacement(mut self, d: PhasePoint<T>) -> Result<Self> {
        if d.dim() != self.matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows(), found: d.dim() });
        }
        self.displacement = Some(d);
        Ok(self)
    }

    /// `x ↦ Sx + d`.
    pub fn apply(&self, x: &PhasePoint<T>) -> Result<PhasePoint<T>> {
        if x.dim() != self.matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows(), found: x.dim() });
        }
        let mut y = &self.matrix * x.to_vector();
        if let Some(d) = &self.displacement {
            for (yi, di) in y.iter_mut().zip(d.coords()) {
                *yi += *di;
            }
        }
        PhasePoint::from_vector(&y)
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.modes() != other.modes() {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows(), found: other.matrix.nrows() });
        }
        let matrix = &self.matrix * &other.matrix;
        let displacement = match (&self.displacement, &other.displacement) {
            (None, None) => None,
            _ => {
                let d2 = other.displacement.clone().unwrap_or_else(|| PhasePoint::zeros(self.modes()));
                let mut d = &self.matrix * d2.to_vector();
                if let Some(d1) = &self.displacement {
                    for (a, b) in d.iter_mut().zip(d1.coords()) {
                        *a += *b;
                    }
                }
                Some(PhasePoint::from_vector(&d)?)
            }
        };
        Ok(Self { matrix, displacement })
    }

    /// Inverse map. Uses S⁻¹ = −J Sᵀ J, exact for symplectic S.
    pub fn inverse(&self) -> Self {
        let j = j_matrix::<T>(self.modes());
        let inv = -(&j * self.matrix.transpose() * &j);
        let displacement = self.displacement.as_ref().map(|d| {
            let v = -(&inv * d.to_vector());
            PhasePoint { coords: v.iter().copied().collect() }
        });
        Self { matrix: inv, displacement }
    }

    pub fn symplectic_residual(&self) -> T {
        symplectic_residual(&self.matrix)
    }

    pub fn cast<U: Real>(&self) -> SymplecticMap<U> {
        SymplecticMap {
            matrix: self.matrix.map(|v| U::lit(Real::to_f64(v))),
            displacement: self.displacement.as_ref().map(|d| d.cast()),
        }
    }
}

/// Reduced row-echelon form with unit pivots. Returns the matrix and its
/// rank; rows below the rank are zero.
pub fn rref<T: Real>(m: &DMatrix<T>, tol: T) -> (DMatrix<T>, usize) {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let scale = T::one().max(max_abs(&a));
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (best, val) = (r..rows)
            .map(|i| (i, a[(i, c)].abs()))
            .fold((r, T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol * scale {
            for i in r..rows {
                a[(i, c)] = T::zero();
            }
            continue;
        }
        a.swap_rows(r, best);
        let pivot = a[(r, c)];
        for j in 0..cols {
            a[(r, j)] /= pivot;
        }
        a[(r, c)] = T::one();
        for i in 0..rows {
            if i != r {
                let f = a[(i, c)];
                if !f.is_zero() {
                    for j in 0..cols {
                        let v = a[(r, j)];
                        a[(i, j)] -= f * v;
                    }
                    a[(i, c)] = T::zero();
                }
            }
        }
        r += 1;
    }
    (a, r)
}

/// A Lagrangian subspace stored by its canonical (RREF) basis.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianSubspace<T: Real> {
    basis: DMatrix<T>,
}

impl<T: Real> LagrangianSubspace<T> {
    /// Validates that the rows of `basis` span a Lagrangian subspace and
    /// stores its canonical form.
    pub fn new(basis: DMatrix<T>) -> Result<Self> {
        check_lagrangian_shape(&basis)?;
        let tol = T::structural_tol();
        let modes = basis.nrows();
        let (canon, rank) = rref(&basis, tol);
        if rank != modes {
            return Err(Error::NotLagrangian(format!("rank {rank} < {modes}")));
        }
        let iso = max_isotropy_violation(&canon);
        if iso > tol * T::one().max(max_abs(&canon) * max_abs(&canon)) {
            return Err(Error::NotLagrangian(format!("Ω does not vanish on the rows (max |Ω| = {iso})")));
        }
        Ok(Self { basis: canon })
    }

    pub fn from_rows(rows: &[PhasePoint<T>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidInput("empty basis".into()));
        };
        let n = first.dim();
        if rows.iter().any(|r| r.dim() != n) {
            return Err(Error::InvalidInput("basis rows of different lengths".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), n, |i, j| rows[i].coords()[j]))
    }

    /// The position plane span{e_1, …, e_M}.
    pub fn position_plane(modes: usize) -> Self {
        Self { basis: DMatrix::from_fn(modes, 2 * modes, |i, j| if i == j { T::one() } else { T::zero() }) }
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn modes(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rows(&self) -> Vec<PhasePoint<T>> {
        (0..self.basis.nrows())
            .map(|i| PhasePoint { coords: self.basis.row(i).iter().copied().collect() })
            .collect()
    }

    /// Distance from `x` to the subspace (Euclidean norm of the residual).
    pub fn membership_residual(&self, x: &PhasePoint<T>) -> Result<T> {
        if x.dim() != self.basis.ncols() {
            return Err(Error::DimensionMismatch { expected: self.basis.ncols(), found: x.dim() });
        }
        let ortho = orthonormal_rows(&self.basis);
        let mut r: Vec<T> = x.coords().to_vec();
        for row in &ortho {
            let c = row.iter().zip(&r).fold(T::zero(), |a, (u, v)| a + *u * *v);
            for (ri, ui) in r.iter_mut().zip(row) {
                *ri -= c * *ui;
            }
        }
        Ok(r.iter().fold(T::zero(), |a, v| a + *v * *v).sqrt())
    }

    pub fn contains(&self, x: &PhasePoint<T>) -> Result<bool> {
        Ok(self.membership_residual(x)? <= T::structural_tol() * T::one().max(x.norm()))
    }

    /// Canonical forms agree within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        self.basis.shape() == other.basis.shape()
            && self.basis.iter().zip(other.basis.iter()).all(|(a, b)| (*a - *b).abs() <= tol)
    }
}

fn orthonormal_rows<T: Real>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::new();
    for i in 0..m.nrows() {
        let mut v: Vec<T> = m.row(i).iter().copied().collect();
        for _ in 0..2 {
            for u in &out {
                let c = u.iter().zip(&v).fold(T::zero(), |a, (x, y)| a + *x * *y);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * *ui;
                }
            }
        }
        let n = v.iter().fold(T::zero(), |a, x| a + *x * *x).sqrt();
        if n > T::structural_tol() {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

fn check_lagrangian_shape<T: Real>(b: &DMatrix<T>) -> Result<()> {
    if b.nrows() == 0 || b.ncols() != 2 * b.nrows() {
        return Err(Error::DimensionMismatch { expected: 2 * b.nrows(), found: b.ncols() });
    }
    Ok(())
}

fn max_isotropy_violation<T: Real>(b: &DMatrix<T>) -> T {
    let rows: Vec<Vec<T>> = (0..b.nrows()).map(|i| b.row(i).iter().copied().collect()).collect();
    let mut worst = T::zero();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            worst = worst.max(omega_slices(&rows[i], &rows[j]).abs());
        }
    }
    worst
}

/// True iff the M rows of `b` (an M×2M matrix) have rank M and Ω vanishes
/// on every pair of rows.
pub fn is_lagrangian<T: Real>(b: &DMatrix<T>) -> Result<bool> {
    check_lagrangian_shape(b)?;
    let tol = T::structural_tol();
    let (_, rank) = rref(b, tol);
    if rank != b.nrows() {
        return Ok(false);
    }
    let scale = T::one().max(max_abs(b) * max_abs(b));
    Ok(max_isotropy_violation(b) <= tol * scale)
}

/// A deterministic Lagrangian subspace containing `x`: the image of the
/// position plane under [`rotation_to_axis`].
pub fn complete_to_lagrangian<T: Real>(x: &PhasePoint<T>) -> Result<LagrangianSubspace<T>> {
    let s = rotation_to_axis(x)?;
    let m = x.modes();
    let basis = DMatrix::from_fn(m, 2 * m, |i, j| s.matrix()[(j, i)]);
    LagrangianSubspace::new(basis)
}

/// An orthogonal symplectic S with ‖x‖·S e_1 = x.
///
/// Orthogonal ∩ symplectic is the unitary group U(M) acting as
/// `[[Re U, −Im U], [Im U, Re U]]`; the first column of U is
/// `(x_q + i x_p)/‖x‖` and the rest is completed by Gram–Schmidt against
/// the canonical vectors, taking the largest residual first (lowest index
/// on ties).
pub fn rotation_to_axis<T: Real>(x: &PhasePoint<T>) -> Result<SymplecticMap<T>> {
    let norm = x.norm();
    if norm.is_zero() {
        return Err(Error::ZeroVector);
    }
    let m = x.modes();
    // columns of U as (re, im) vectors
    let mut cols: Vec<(Vec<T>, Vec<T>)> = Vec::with_capacity(m);
    cols.push((x.q().iter().map(|v| *v / norm).collect(), x.p().iter().map(|v| *v / norm).collect()));
    let mut used = vec![false; m];
    while cols.len() < m {
        let mut best: Option<(usize, T, (Vec<T>, Vec<T>))> = None;
        for k in 0..m {
            if used[k] {
                continue;
            }
            let mut re = vec![T::zero(); m];
            let im = vec![T::zero(); m];
            re[k] = T::one();
            let v = complex_project_out(&cols, (re, im));
            let n = cnorm(&v);
            if best.as_ref().is_none_or(|b| n > b.1) {
                best = Some((k, n, v));
            }
        }
        let (k, n, v) = best.expect("an unused canonical vector remains");
        used[k] = true;
        cols.push((v.0.iter().map(|a| *a / n).collect(), v.1.iter().map(|a| *a / n).collect()));
    }
    let s = DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        let (bi, ri) = (i / m, i % m);
        let (bj, cj) = (j / m, j % m);
        let (re, im) = (&cols[cj].0[ri], &cols[cj].1[ri]);
        match (bi, bj) {
            (0, 0) | (1, 1) => *re,
            (0, 1) => -*im,
            _ => *im,
        }
    });
    Ok(SymplecticMap { matrix: s, displacement: None })
}

fn cnorm<T: Real>(v: &(Vec<T>, Vec<T>)) -> T {
    v.0.iter().chain(&v.1).fold(T::zero(), |a, x| a + *x * *x).sqrt()
}

/// Removes the components of `v` along the orthonormal complex vectors in
/// `basis` (classical Gram–Schmidt, applied twice).
fn complex_project_out<T: Real>(basis: &[(Vec<T>, Vec<T>)], mut v: (Vec<T>, Vec<T>)) -> (Vec<T>, Vec<T>) {
    for _ in 0..2 {
        for (ur, ui) in basis {
            // c = ⟨u, v⟩ = Σ conj(u) v
            let mut cr = T::zero();
            let mut ci = T::zero();
            for i in 0..ur.len() {
                cr += ur[i] * v.0[i] + ui[i] * v.1[i];
                ci += ur[i] * v.1[i] - ui[i] * v.0[i];
            }
            for i in 0..ur.len() {
                v.0[i] -= cr * ur[i] - ci * ui[i];
                v.1[i] -= cr * ui[i] + ci * ur[i];
            }
        }
    }
    v
}

/// Random orthogonal symplectic matrix from a Haar-ish random unitary.
fn random_orthosymplectic(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut cols: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(m);
    while cols.len() < m {
        let re: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let im: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let v = complex_project_out(&cols, (re, im));
        let n = cnorm(&v);
        if n > 1e-3 {
            cols.push((v.0.iter().map(|a| a / n).collect(), v.1.iter().map(|a| a / n).collect()));
        }
    }
    DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        let (bi, ri) = (i / m, i % m);
        let (bj, cj) = (j / m, j % m);
        let (re, im) = (cols[cj].0[ri], cols[cj].1[ri]);
        match (bi, bj) {
            (0, 0) | (1, 1) => re,
            (0, 1) => -im,
            _ => im,
        }
    })
}

/// Pseudo-random symplectic matrix, reproducible from `seed`. Built as a
/// product of exact symplectic factors (orthosymplectic, single-mode
/// squeezers, a symmetric shear).
pub fn random_symplectic<T: Real>(modes: usize, seed: u64) -> Result<SymplecticMap<T>> {
    if modes < 1 {
        return Err(Error::InvalidInput("random_symplectic needs at least one mode".into()));
    }
    let m = modes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o1 = random_orthosymplectic(m, &mut rng);
    let squeeze: Vec<f64> = (0..m).map(|_| rng.random_range(-0.6..0.6)).collect();
    let z = DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        if i != j {
            0.0
        } else if i < m {
            (-squeeze[i]).exp()
        } else {
            squeeze[i - m].exp()
        }
    });
    let o2 = random_orthosymplectic(m, &mut rng);
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v: f64 = rng.random_range(-0.3..0.3);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let shear = DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        if i == j {
            1.0
        } else if i >= m && j < m {
            a[(i - m, j)]
        } else {
            0.0
        }
    });
    let s = o1 * z * o2 * shear;
    Ok(SymplecticMap { matrix: s.map(T::lit), displacement: None })
}
