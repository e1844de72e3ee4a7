//! Characteristic and Wigner functions.
//!
//! Normalization: `W(x) = (2π)^{M/2} · W_std(x)` where `W_std` is the
//! textbook Wigner function of unit total mass. With this choice
//! `(2π)^{−M/2} ∫ W dp = |ψ(q)|²`, which is the anchor checked by
//! [`normalization_self_test`]. In terms of the characteristic function
//! `Φ(y) = Tr(ρ D(−y))` this reads
//! `W(x) = (2π)^{−3M/2} ∫ Φ(y) e^{−i y·Jx} dy`.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock_basis::{alpha_from_qp, glauber_into, hermite_functions};
use crate::phase_space::{j_matrix, max_abs};
use crate::states::{apply_gate_fock, apply_symplectic_gaussian, FockDensityMatrix, FockGate, GaussianState};
use crate::{PhasePoint, StateHandle, SymplecticMap};

/// Total Wigner mass `(2π)^{M/2}`.
pub fn convention_mass(modes: usize) -> f64 {
    TAU.powf(modes as f64 / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidInput(format!("axis range {min}:{max} must satisfy min < max")));
        }
        if count < 2 {
            return Err(Error::InvalidInput("axis needs at least 2 points".into()));
        }
        Ok(Self { min, max, count })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.point(i)).collect()
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.count).map(|i| if i == 0 || i + 1 == self.count { 0.5 * h } else { h }).collect()
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    /// `min:max:count`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidInput(format!("axis `{s}` is not of the form min:max:count")));
        }
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number `{t}` in axis `{s}`")));
        let count = parts[2].trim().parse::<usize>().map_err(|_| Error::InvalidInput(format!("bad count in axis `{s}`")))?;
        Axis::new(num(parts[0])?, num(parts[1])?, count)
    }
}

/// Rectangular grid over the 2M phase-space axes, in coordinate order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || !axes.len().is_multiple_of(2) {
            return Err(Error::InvalidInput("a grid needs an even, positive number of axes".into()));
        }
        for a in &axes {
            Axis::new(a.min, a.max, a.count)?;
        }
        Ok(Self { axes })
    }

    /// The same axis on all 2M coordinates.
    pub fn broadcast(modes: usize, axis: Axis) -> Result<Self> {
        Self::new(vec![axis; 2 * modes])
    }

    /// One axis broadcast to every coordinate, or one per coordinate.
    pub fn from_axes(modes: usize, axes: &[Axis]) -> Result<Self> {
        match axes.len() {
            1 => Self::broadcast(modes, axes[0]),
            n if n == 2 * modes => Self::new(axes.to_vec()),
            n => Err(Error::DimensionMismatch { expected: 2 * modes, found: n }),
        }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn modes(&self) -> usize {
        self.axes.len() / 2
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of a flat row-major position.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for k in (0..self.axes.len()).rev() {
            idx[k] = flat % self.axes[k].count;
            flat /= self.axes[k].count;
        }
        idx
    }

    pub fn point(&self, flat: usize) -> PhasePoint {
        let idx = self.unravel(flat);
        PhasePoint::new(idx.iter().zip(&self.axes).map(|(&i, a)| a.point(i)).collect()).expect("finite grid point")
    }

    /// Product trapezoid weight at a flat position.
    pub fn weight(&self, flat: usize) -> f64 {
        let idx = self.unravel(flat);
        idx.iter()
            .zip(&self.axes)
            .map(|(&i, a)| if i == 0 || i + 1 == a.count { 0.5 * a.step() } else { a.step() })
            .product()
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step()).product()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub spec: GridSpec,
    /// Row-major over axes in coordinate order.
    pub values: Vec<f64>,
    pub convention_mass: f64,
}

impl WignerGrid {
    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.spec, |i| self.values[i])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ W dp` on the grid of the q axes (row-major over q_1..q_M).
    pub fn p_marginal(&self) -> Vec<f64> {
        let m = self.spec.modes();
        let q_len: usize = self.spec.axes[..m].iter().map(|a| a.count).product();
        let p_spec_axes = self.spec.axes[m..].to_vec();
        let block = self.values.len() / q_len;
        let p_spec = GridSpec { axes: p_spec_axes };
        let w: Vec<f64> = (0..block).map(|i| p_spec.weight(i)).collect();
        (0..q_len)
            .map(|j| self.values[j * block..(j + 1) * block].iter().zip(&w).map(|(v, w)| v * w).sum())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let d = self.spec.axes.len();
        let mut out = String::with_capacity(self.values.len() * 24 * (d + 1));
        let header: Vec<String> = (1..=d).map(|k| format!("axis_{k}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",W\n");
        for (flat, v) in self.values.iter().enumerate() {
            for c in self.spec.point(flat).coords() {
                let _ = write!(out, "{c:.16e},");
            }
            let _ = writeln!(out, "{v:.16e}");
        }
        out
    }
}

fn trapezoid(spec: &GridSpec, f: impl Fn(usize) -> f64) -> f64 {
    // Sequential sum in index order keeps the result independent of scheduling.
    let weights: Vec<Vec<f64>> = spec.axes.iter().map(|a| a.weights()).collect();
    let last = spec.axes.len() - 1;
    let inner = spec.axes[last].count;
    let outer = spec.len() / inner;
    let mut total = 0.0;
    for o in 0..outer {
        let idx = spec.unravel(o * inner);
        let w: f64 = idx[..last].iter().enumerate().map(|(k, &i)| weights[k][i]).product();
        let s: f64 = (0..inner).map(|i| f(o * inner + i) * weights[last][i]).sum();
        total += w * s;
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativityReport {
    pub min_value: f64,
    pub argmin: PhasePoint,
    /// `∫ max(−W, 0) dx / (2π)^{M/2}`.
    pub negativity_volume: f64,
    /// `∫ W dx / (2π)^{M/2}`; 1 for a well-covered state.
    pub total_mass: f64,
}

pub fn negativity_report(grid: &WignerGrid) -> NegativityReport {
    let (mut argmin, mut min_value) = (0, f64::INFINITY);
    for (i, &v) in grid.values.iter().enumerate() {
        if v < min_value {
            min_value = v;
            argmin = i;
        }
    }
    let mass = grid.convention_mass;
    NegativityReport {
        min_value,
        argmin: grid.spec.point(argmin),
        negativity_volume: trapezoid(&grid.spec, |i| (-grid.values[i]).max(0.0)) / mass,
        total_mass: grid.integral() / mass,
    }
}

/// Threshold below which a grid minimum counts as genuine negativity:
/// `1e-6 · max|W|`.
pub fn negativity_tolerance(grid: &WignerGrid) -> f64 {
    1e-6 * grid.max_abs()
}

fn check_dim(state: &StateHandle, x: &PhasePoint) -> Result<()> {
    if x.modes() != state.modes() {
        return Err(Error::DimensionMismatch { expected: 2 * state.modes(), found: x.dim() });
    }
    Ok(())
}

/// Largest `|α|` for which the Glauber recurrences stay inside the normal
/// double range (`e^{−|α|²/2}` does not underflow).
const GLAUBER_ALPHA_LIMIT: f64 = 35.0;

/// `Φ_ρ(x) = Tr(ρ D(−x))`.
pub fn characteristic_function(state: &StateHandle, x: &PhasePoint) -> Result<C64> {
    check_dim(state, x)?;
    match state {
        StateHandle::Gaussian(g) => Ok(gaussian_characteristic(g, x)),
        StateHandle::Fock(f) => fock_characteristic(f, x),
    }
}

fn gaussian_characteristic(g: &GaussianState, x: &PhasePoint) -> C64 {
    let m = g.modes();
    let jx = j_matrix::<f64>(m) * x.to_vector();
    let lin = jx.dot(&g.mean().to_vector());
    let quad = (jx.transpose() * g.cov() * &jx)[(0, 0)];
    C64::from_polar((-0.5 * quad).exp(), -lin)
}

fn fock_characteristic(f: &FockDensityMatrix, x: &PhasePoint) -> Result<C64> {
    let ix = f.indexer();
    let mats: Vec<Vec<C64>> = (0..f.modes())
        .map(|k| {
            let (q, p) = x.mode_pair(k);
            let a = alpha_from_qp(-q, -p);
            if a.norm() > GLAUBER_ALPHA_LIMIT {
                return Err(Error::Unsupported(format!(
                    "displacement |α| = {:.1} beyond the stable range {GLAUBER_ALPHA_LIMIT}",
                    a.norm()
                )));
            }
            let c = f.cutoffs()[k];
            let mut d = vec![C64::new(0.0, 0.0); c * c];
            glauber_into(a, c, &mut d);
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let rho = f.matrix();
    let dim = f.dim();
    let mut total = C64::new(0.0, 0.0);
    for j in 0..dim {
        for i in 0..dim {
            let r = rho[(i, j)];
            if r.re == 0.0 && r.im == 0.0 {
                continue;
            }
            // ⟨j|D|i⟩ factorizes over modes
            let mut d = C64::new(1.0, 0.0);
            for (k, mk) in mats.iter().enumerate() {
                let c = f.cutoffs()[k];
                d *= mk[ix.digit(j, k) * c + ix.digit(i, k)];
            }
            total += r * d;
        }
    }
    Ok(total)
}

/// Closed-form Gaussian Wigner function `(2π)^{M/2} N(x; μ, V)`.
#[derive(Clone, Debug)]
pub(crate) struct GaussianWigner {
    mean: Vec<f64>,
    inv: DMatrix<f64>,
    prefactor: f64,
}

impl GaussianWigner {
    pub fn new(g: &GaussianState) -> Result<Self> {
        let m = g.modes();
        let chol = nalgebra::Cholesky::new(g.cov().clone())
            .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?;
        let det: f64 = chol.l().diagonal().iter().map(|d| d * d).product();
        Ok(Self {
            mean: g.mean().coords().to_vec(),
            inv: chol.inverse(),
            prefactor: 1.0 / (TAU.powf(m as f64 / 2.0) * det.sqrt()),
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.mean.len();
        let mut quad = 0.0;
        for i in 0..n {
            let di = x[i] - self.mean[i];
            let mut row = 0.0;
            for j in 0..n {
                row += self.inv[(i, j)] * (x[j] - self.mean[j]);
            }
            quad += di * row;
        }
        self.prefactor * (-0.5 * quad).exp()
    }
}

/// Separable evaluation of the displaced-parity form
/// `W(x) = (2/π)^{M/2} Re Σ ρ_ij Π_k (−1)^{m_k} ⟨n_k|D(2α_k)|m_k⟩`
/// on product point sets, contracting one mode at a time over the nonzero
/// pattern of ρ.
pub(crate) struct FockWignerEvaluator {
    cutoffs: Vec<usize>,
    first: Vec<C64>,
    stages: Vec<Stage>,
}

struct Stage {
    m: Vec<u32>,
    n: Vec<u32>,
    out: Vec<u32>,
    out_len: usize,
}

/// Per-mode kernel `κ[m][n] = (−1)^m ⟨n|D(2α)|m⟩`, row-major in (m, n).
fn parity_kernel(q: f64, p: f64, c: usize, scratch: &mut [C64], out: &mut [C64]) {
    glauber_into(alpha_from_qp(q, p) * 2.0, c, scratch);
    for m in 0..c {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for n in 0..c {
            out[m * c + n] = scratch[n * c + m] * sign;
        }
    }
}

/// Momentum grid on which the displaced-parity kernel of a mode with the
/// given cutoff is integrated out: `±(√(2c+1) + 6)` with step ≤ 0.1.
pub(crate) fn marginal_p_axis(cutoff: usize) -> Axis {
    let l = (2.0 * cutoff as f64 + 1.0).sqrt() + 6.0;
    let n = (2.0 * l / 0.1).ceil() as usize + 1;
    Axis { min: -l, max: l, count: n }
}

/// `(1/π) ∫ κ(q, p) dp` by the trapezoid rule on `p_axis`. Contracting it with
/// ρ gives the position density `(2π)^{−M/2} ∫ W dp` of a single mode.
pub(crate) fn momentum_marginal_kernel(q: f64, c: usize, p_axis: &Axis, scratch: &mut [C64], out: &mut [C64]) {
    let cc = c * c;
    out[..cc].iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
    let mut tmp = vec![C64::new(0.0, 0.0); cc];
    for (p, w) in p_axis.points().into_iter().zip(p_axis.weights()) {
        parity_kernel(q, p, c, scratch, &mut tmp);
        let w = w / PI;
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t * w;
        }
    }
}

/// Above this many complex entries, per-mode kernel tables are recomputed
/// on the fly instead of stored.
const KERNEL_TABLE_LIMIT: usize = 1 << 24;

impl FockWignerEvaluator {
    pub fn new(f: &FockDensityMatrix) -> Self {
        let ix = f.indexer();
        let modes = f.modes();
        let rho = f.matrix();
        let dim = f.dim();
        // keys are (i_rest, j_rest) over the modes not yet contracted
        let mut keys: Vec<(usize, usize)> = Vec::new();
        let mut first = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                let v = rho[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    keys.push((i, j));
                    first.push(v);
                }
            }
        }
        let mut stages = Vec::with_capacity(modes);
        for k in 0..modes {
            let s = ix.strides[k];
            let mut map: HashMap<(usize, usize), u32> = HashMap::new();
            let mut next: Vec<(usize, usize)> = Vec::new();
            let mut st = Stage { m: vec![], n: vec![], out: vec![], out_len: 0 };
            for &(i, j) in &keys {
                st.m.push((i / s) as u32);
                st.n.push((j / s) as u32);
                let key = (i % s, j % s);
                let o = *map.entry(key).or_insert_with(|| {
                    next.push(key);
                    (next.len() - 1) as u32
                });
                st.out.push(o);
            }
            st.out_len = next.len();
            stages.push(st);
            keys = next;
        }
        Self { cutoffs: f.cutoffs().to_vec(), first, stages }
    }

    fn modes(&self) -> usize {
        self.cutoffs.len()
    }

    /// Values (complex, before taking the real part) on the product of the
    /// per-mode point lists, in mode-major order: mode 0 slowest.
    pub fn eval_product(&self, points: &[Vec<(f64, f64)>]) -> Vec<C64> {
        assert_eq!(points.len(), self.modes());
        let scale = (2.0 / PI).powf(self.modes() as f64 / 2.0);
        let counts: Vec<usize> = points.iter().map(|p| p.len()).collect();
        let cutoffs = &self.cutoffs;
        let mut out = self.contract(&counts, |k, a, scratch, kern| {
            let (q, p) = points[k][a];
            parity_kernel(q, p, cutoffs[k], scratch, kern)
        });
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    /// `Σ_ij ρ_ij Π_k K_k(a_k)[m_k][n_k]` for every tuple `(a_0, …, a_{M−1})`
    /// with `a_k < counts[k]`, mode-major. `kernel(k, a, scratch, out)` writes
    /// the row-major `c_k × c_k` kernel of mode `k` at point `a` into `out`.
    pub fn contract<K>(&self, counts: &[usize], kernel: K) -> Vec<C64>
    where
        K: Fn(usize, usize, &mut [C64], &mut [C64]) + Sync,
    {
        let m = self.modes();
        assert_eq!(counts.len(), m);
        let tables: Vec<Option<Vec<C64>>> = (0..m)
            .map(|k| {
                let cc = self.cutoffs[k] * self.cutoffs[k];
                if k == 0 || counts[k] * cc > KERNEL_TABLE_LIMIT {
                    return None;
                }
                let mut t = vec![C64::new(0.0, 0.0); counts[k] * cc];
                t.par_chunks_mut(cc).enumerate().for_each(|(a, chunk)| {
                    let mut scratch = vec![C64::new(0.0, 0.0); cc];
                    kernel(k, a, &mut scratch, chunk);
                });
                Some(t)
            })
            .collect();
        let c0 = self.cutoffs[0];
        let blocks: Vec<Vec<C64>> = (0..counts[0])
            .into_par_iter()
            .map(|a| {
                let mut scratch = vec![C64::new(0.0, 0.0); c0 * c0];
                let mut kern = vec![C64::new(0.0, 0.0); c0 * c0];
                kernel(0, a, &mut scratch, &mut kern);
                let st = &self.stages[0];
                let mut buf = vec![C64::new(0.0, 0.0); st.out_len];
                for e in 0..self.first.len() {
                    buf[st.out[e] as usize] += self.first[e] * kern[st.m[e] as usize * c0 + st.n[e] as usize];
                }
                let mut out = Vec::new();
                self.descend(1, &buf, counts, &kernel, &tables, &mut out);
                out
            })
            .collect();
        blocks.concat()
    }

    fn descend<K>(
        &self,
        k: usize,
        vals: &[C64],
        counts: &[usize],
        kernel: &K,
        tables: &[Option<Vec<C64>>],
        out: &mut Vec<C64>,
    ) where
        K: Fn(usize, usize, &mut [C64], &mut [C64]),
    {
        if k == self.modes() {
            out.push(vals.first().copied().unwrap_or_default());
            return;
        }
        let st = &self.stages[k];
        let c = self.cutoffs[k];
        let cc = c * c;
        let mut scratch = vec![C64::new(0.0, 0.0); cc];
        let mut local = vec![C64::new(0.0, 0.0); cc];
        let mut buf = vec![C64::new(0.0, 0.0); st.out_len];
        for a in 0..counts[k] {
            let kern: &[C64] = match &tables[k] {
                Some(t) => &t[a * cc..(a + 1) * cc],
                None => {
                    kernel(k, a, &mut scratch, &mut local);
                    &local
                }
            };
            buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
            for e in 0..vals.len() {
                buf[st.out[e] as usize] += vals[e] * kern[st.m[e] as usize * c + st.n[e] as usize];
            }
            if k + 1 == self.modes() {
                out.push(buf.first().copied().unwrap_or_default());
            } else {
                self.descend(k + 1, &buf, counts, kernel, tables, out);
            }
        }
    }

    pub fn eval_point(&self, x: &PhasePoint) -> C64 {
        let pts: Vec<Vec<(f64, f64)>> = (0..self.modes()).map(|k| vec![x.mode_pair(k)]).collect();
        self.eval_product(&pts)[0]
    }
}

/// Complex value of the Fock-backbone Wigner evaluation before the real
/// part is taken; its imaginary part measures Hermiticity loss.
pub fn wigner_point_complex(state: &FockDensityMatrix, x: &PhasePoint) -> Result<C64> {
    if x.modes() != state.modes() {
        return Err(Error::DimensionMismatch { expected: 2 * state.modes(), found: x.dim() });
    }
    Ok(FockWignerEvaluator::new(state).eval_point(x))
}

pub fn wigner_point(state: &StateHandle, x: &PhasePoint) -> Result<f64> {
    check_dim(state, x)?;
    match state {
        StateHandle::Gaussian(g) => Ok(GaussianWigner::new(g)?.eval(x.coords())),
        StateHandle::Fock(f) => Ok(FockWignerEvaluator::new(f).eval_point(x).re),
    }
}

/// Evaluates W on a grid without the coverage check.
pub fn wigner_grid_unchecked(state: &StateHandle, spec: &GridSpec) -> Result<WignerGrid> {
    let m = state.modes();
    if spec.modes() != m {
        return Err(Error::DimensionMismatch { expected: 2 * m, found: spec.axes().len() });
    }
    let values = match state {
        StateHandle::Gaussian(g) => {
            let gw = GaussianWigner::new(g)?;
            let inner = spec.axes[2 * m - 1].count;
            let outer = spec.len() / inner;
            (0..outer)
                .into_par_iter()
                .flat_map_iter(|o| {
                    let mut x = spec.point(o * inner).coords().to_vec();
                    let last = spec.axes[2 * m - 1];
                    let gw = &gw;
                    (0..inner).map(move |i| {
                        x[2 * m - 1] = last.point(i);
                        gw.eval(&x)
                    })
                })
                .collect()
        }
        StateHandle::Fock(f) => {
            let ev = FockWignerEvaluator::new(f);
            let per_mode: Vec<Vec<(f64, f64)>> = (0..m)
                .map(|k| {
                    let (qa, pa) = (spec.axes[k], spec.axes[m + k]);
                    let mut v = Vec::with_capacity(qa.count * pa.count);
                    for iq in 0..qa.count {
                        for ip in 0..pa.count {
                            v.push((qa.point(iq), pa.point(ip)));
                        }
                    }
                    v
                })
                .collect();
            let mode_major = ev.eval_product(&per_mode);
            reorder_mode_major(spec, &mode_major)
        }
    };
    Ok(WignerGrid { spec: spec.clone(), values, convention_mass: convention_mass(m) })
}

/// Mode-major `(q_0,p_0),(q_1,p_1),…` order to axis order `q_0..,p_0..`.
fn reorder_mode_major(spec: &GridSpec, vals: &[C64]) -> Vec<f64> {
    let m = spec.modes();
    let counts: Vec<usize> = spec.axes.iter().map(|a| a.count).collect();
    let mut axis_strides = vec![1usize; 2 * m];
    for k in (0..2 * m - 1).rev() {
        axis_strides[k] = axis_strides[k + 1] * counts[k + 1];
    }
    let mut out = vec![0.0; vals.len()];
    // mode-major digits: for mode k, (iq_k, ip_k) with ip fastest
    let mut digits = vec![0usize; 2 * m];
    for v in vals {
        let pos: usize = (0..m).map(|k| digits[2 * k] * axis_strides[k] + digits[2 * k + 1] * axis_strides[m + k]).sum();
        out[pos] = v.re;
        // increment mode-major odometer
        for d in (0..2 * m).rev() {
            let k = d / 2;
            let lim = if d % 2 == 0 { counts[k] } else { counts[m + k] };
            digits[d] += 1;
            if digits[d] < lim {
                break;
            }
            digits[d] = 0;
        }
    }
    out
}

/// W on a grid; fails with a coverage error if the trapezoid mass deviates
/// from `(2π)^{M/2}` by more than 1%.
pub fn wigner_grid(state: &StateHandle, spec: &GridSpec) -> Result<WignerGrid> {
    let grid = wigner_grid_unchecked(state, spec)?;
    let mass = grid.integral();
    if (mass / grid.convention_mass - 1.0).abs() > 0.01 || !grid.values.iter().all(|v| v.is_finite()) {
        return Err(Error::Coverage { mass: mass / grid.convention_mass, expected: 1.0 });
    }
    Ok(grid)
}

/// `max_x |W_{τ(S)ρτ(S)*}(x) − W_ρ(Sx)|` over the sample points.
///
/// For Gaussian states τ(S) acts on moments through the inverse map; for
/// Fock states S must be a per-mode rotation (optionally with a
/// displacement), realized by phase shifts and a displacement.
pub fn symplectic_covariance_check(state: &StateHandle, s: &SymplecticMap, sample_points: &[PhasePoint]) -> Result<f64> {
    let m = state.modes();
    if s.modes() != m {
        return Err(Error::DimensionMismatch { expected: 2 * m, found: s.matrix().nrows() });
    }
    let transformed = transform_state(state, s)?;
    let mut worst: f64 = 0.0;
    let orig = WignerEval::new(state)?;
    let new = WignerEval::new(&transformed)?;
    for x in sample_points {
        check_dim(state, x)?;
        let sx = s.apply(x)?;
        worst = worst.max((new.eval(x) - orig.eval(&sx)).abs());
    }
    Ok(worst)
}

/// The state whose Wigner function is `x ↦ W_ρ(Sx + d)`.
pub fn transform_state(state: &StateHandle, s: &SymplecticMap) -> Result<StateHandle> {
    match state {
        StateHandle::Gaussian(g) => Ok(StateHandle::Gaussian(apply_symplectic_gaussian(g, &s.inverse())?)),
        StateHandle::Fock(f) => {
            let thetas = per_mode_rotation_angles(s.matrix())
                .ok_or_else(|| Error::Unrealizable("only per-mode phase-space rotations act on the Fock backbone".into()))?;
            let m = f.modes();
            let mut cur = f.clone();
            if let Some(d) = s.displacement() {
                for k in 0..m {
                    let (q, p) = d.mode_pair(k);
                    if q != 0.0 || p != 0.0 {
                        cur = apply_gate_fock(&cur, FockGate::Disp { mode: k, q: -q, p: -p })?;
                    }
                }
            }
            for (k, th) in thetas.into_iter().enumerate() {
                if th != 0.0 {
                    cur = apply_gate_fock(&cur, FockGate::Rot { mode: k, theta: th })?;
                }
            }
            Ok(StateHandle::Fock(cur))
        }
    }
}

/// If `S` acts on each (q_k, p_k) plane as `[[cos θ, sin θ], [−sin θ, cos θ]]`
/// and mixes no modes, the angles θ_k.
pub(crate) fn per_mode_rotation_angles(s: &DMatrix<f64>) -> Option<Vec<f64>> {
    let m = s.nrows() / 2;
    let tol = 1e-10;
    let mut expected = DMatrix::zeros(2 * m, 2 * m);
    let mut thetas = Vec::with_capacity(m);
    for k in 0..m {
        let th = s[(k, m + k)].atan2(s[(k, k)]);
        let (c, sn) = (th.cos(), th.sin());
        expected[(k, k)] = c;
        expected[(k, m + k)] = sn;
        expected[(m + k, k)] = -sn;
        expected[(m + k, m + k)] = c;
        thetas.push(th);
    }
    (max_abs(&(s - expected)) <= tol).then_some(thetas)
}

/// Point evaluator with per-state setup done once.
pub(crate) enum WignerEval {
    Gaussian(GaussianWigner),
    Fock(FockWignerEvaluator),
}

impl WignerEval {
    pub fn new(state: &StateHandle) -> Result<Self> {
        Ok(match state {
            StateHandle::Gaussian(g) => WignerEval::Gaussian(GaussianWigner::new(g)?),
            StateHandle::Fock(f) => WignerEval::Fock(FockWignerEvaluator::new(f)),
        })
    }

    pub fn eval(&self, x: &PhasePoint) -> f64 {
        match self {
            WignerEval::Gaussian(g) => g.eval(x.coords()),
            WignerEval::Fock(f) => f.eval_point(x).re,
        }
    }
}

/// Direct quadrature of `W(x) = (2π)^{−3M/2} ∫ Φ(y) e^{−i y·Jx} dy` over
/// the cube `[−extent, extent]^{2M}` with the given step (trapezoid rule).
///
/// Slow: intended as an oracle for one or two modes. Fails with
/// diagnostics if `|Φ|` on the cube boundary exceeds `1e-8`.
pub fn wigner_fourier_oracle(state: &StateHandle, x: &PhasePoint, extent: f64, step: f64) -> Result<f64> {
    check_dim(state, x)?;
    let axis = Axis::new(-extent, extent, ((2.0 * extent / step).round() as usize).max(1) + 1)?;
    let spec = GridSpec::broadcast(state.modes(), axis)?;
    let m = state.modes();
    let jx = (j_matrix::<f64>(m) * x.to_vector()).iter().copied().collect::<Vec<_>>();
    let phis: Vec<C64> = (0..spec.len())
        .into_par_iter()
        .map(|i| characteristic_function(state, &spec.point(i)))
        .collect::<Result<_>>()?;
    let boundary = boundary_max(&spec, &phis);
    if boundary > 1e-8 {
        return Err(Error::NonConvergence { extent, step: axis.step(), boundary });
    }
    let mut acc = C64::new(0.0, 0.0);
    for (i, phi) in phis.iter().enumerate() {
        let y = spec.point(i);
        let ph: f64 = y.coords().iter().zip(&jx).map(|(a, b)| a * b).sum();
        acc += phi * C64::from_polar(spec.weight(i), -ph);
    }
    Ok(acc.re / TAU.powf(1.5 * m as f64))
}

/// Single-mode Wigner grid from the characteristic function by separable
/// direct Fourier sums. Same convergence diagnostics as
/// [`wigner_fourier_oracle`].
pub fn wigner_fourier_grid_1mode(
    phi: impl Fn(f64, f64) -> C64 + Sync,
    out: &GridSpec,
    extent: f64,
    step: f64,
) -> Result<WignerGrid> {
    if out.modes() != 1 {
        return Err(Error::Unsupported("separable Fourier grid is implemented for one mode".into()));
    }
    let ya = Axis::new(-extent, extent, ((2.0 * extent / step).round() as usize).max(1) + 1)?;
    let ys = ya.points();
    let yw = ya.weights();
    let n = ys.len();
    let table: Vec<C64> = (0..n * n).into_par_iter().map(|i| phi(ys[i / n], ys[i % n])).collect();
    let boundary = (0..n)
        .flat_map(|i| [table[i], table[(n - 1) * n + i], table[i * n], table[i * n + n - 1]])
        .fold(0.0, |m: f64, z| m.max(z.norm()));
    if boundary > 1e-8 {
        return Err(Error::NonConvergence { extent, step: ya.step(), boundary });
    }
    let (qa, pa) = (out.axes[0], out.axes[1]);
    let xq = qa.points();
    let xp = pa.points();
    // y·Jx = y_q x_p − y_p x_q; first contract y_p against x_q
    let g: Vec<C64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|a| {
            let row = &table[a * n..(a + 1) * n];
            let (ys, yw) = (&ys, &yw);
            xq.iter()
                .map(move |&q| (0..n).map(|b| row[b] * C64::from_polar(yw[b], ys[b] * q)).sum::<C64>())
                .collect::<Vec<_>>()
        })
        .collect();
    let nq = xq.len();
    let values: Vec<f64> = (0..nq * xp.len())
        .into_par_iter()
        .map(|idx| {
            let (iq, ip) = (idx / xp.len(), idx % xp.len());
            let s: C64 = (0..n).map(|a| g[a * nq + iq] * C64::from_polar(yw[a], -ys[a] * xp[ip])).sum();
            s.re / TAU.powf(1.5)
        })
        .collect();
    Ok(WignerGrid { spec: out.clone(), values, convention_mass: convention_mass(1) })
}

fn boundary_max(spec: &GridSpec, vals: &[C64]) -> f64 {
    (0..spec.len())
        .filter(|&i| spec.unravel(i).iter().zip(spec.axes()).any(|(&d, a)| d == 0 || d + 1 == a.count))
        .fold(0.0, |m: f64, i| m.max(vals[i].norm()))
}

/// Checks the marginal anchor: on a vacuum grid, `(2π)^{−1/2} ∫ W dp`
/// reproduces `e^{−q²}/√π` and the total mass is `√(2π)`, on both
/// backbones.
pub fn normalization_self_test() -> Result<()> {
    let spec = GridSpec::broadcast(1, Axis::new(-7.0, 7.0, 141)?)?;
    let states = [
        StateHandle::Gaussian(GaussianState::vacuum(1)),
        crate::states::make_fock(&[0], &[1])?,
    ];
    for st in &states {
        let grid = wigner_grid_unchecked(st, &spec)?;
        let mass = grid.integral() / grid.convention_mass;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::SelfTest(format!("{} vacuum mass {mass}", st.backbone())));
        }
        let marg = grid.p_marginal();
        for (q, v) in spec.axes()[0].points().iter().zip(&marg) {
            let psi = hermite_functions(*q, 1)[0];
            if (v / grid.convention_mass - psi * psi).abs() > 1e-6 {
                return Err(Error::SelfTest(format!("{} vacuum marginal off at q = {q}", st.backbone())));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{cat_fock, make_fock, CatParity};

    fn pt(v: &[f64]) -> PhasePoint {
        PhasePoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn vacuum_origin_value_on_both_backbones() {
        let want = TAU.sqrt() / PI;
        let g = StateHandle::Gaussian(GaussianState::vacuum(1));
        let f = make_fock(&[0], &[5]).unwrap();
        assert!((wigner_point(&g, &pt(&[0.0, 0.0])).unwrap() - want).abs() < 1e-12);
        assert!((wigner_point(&f, &pt(&[0.0, 0.0])).unwrap() - want).abs() < 1e-12);
        let one = make_fock(&[1], &[12]).unwrap();
        assert!((wigner_point(&one, &pt(&[0.0, 0.0])).unwrap() + want).abs() < 1e-12);
        assert!(wigner_point(&g, &pt(&[8.0, 0.0])).unwrap().abs() < 1e-10);
    }

    #[test]
    fn self_test_passes() {
        normalization_self_test().unwrap();
    }

    #[test]
    fn characteristic_at_origin_and_vacuum_decay() {
        let st = cat_fock(1.2, CatParity::Odd, 20).unwrap().into();
        assert!((characteristic_function(&st, &pt(&[0.0, 0.0])).unwrap() - 1.0).norm() < 1e-12);
        let vac = StateHandle::Gaussian(GaussianState::vacuum(1));
        let x = pt(&[1.0, 0.0]);
        let want = (-0.25f64).exp();
        assert!((characteristic_function(&vac, &x).unwrap().norm() - want).abs() < 1e-12);
        let fv = make_fock(&[0], &[30]).unwrap();
        assert!((characteristic_function(&fv, &x).unwrap() - characteristic_function(&vac, &x).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn coherent_characteristic_matches_gaussian_form() {
        let (q0, p0) = (0.7, -0.4);
        let coh: StateHandle = crate::states::coherent_fock(alpha_from_qp(q0, p0), 40).unwrap().into();
        let g = StateHandle::Gaussian(GaussianState::new(pt(&[q0, p0]), DMatrix::identity(2, 2) * 0.5).unwrap());
        for y in [[0.3, 0.9], [-1.1, 0.2], [1.5, -1.5]] {
            let a = characteristic_function(&coh, &pt(&y)).unwrap();
            let b = characteristic_function(&g, &pt(&y)).unwrap();
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
            let wa = wigner_point(&coh, &pt(&y)).unwrap();
            let wb = wigner_point(&g, &pt(&y)).unwrap();
            assert!((wa - wb).abs() < 1e-10);
        }
    }

    #[test]
    fn fourier_oracle_matches_parity_form() {
        let st: StateHandle = make_fock(&[1], &[6]).unwrap();
        for x in [[0.0, 0.0], [0.5, -0.3], [1.2, 0.4]] {
            let slow = wigner_fourier_oracle(&st, &pt(&x), 11.0, 0.1).unwrap();
            let fast = wigner_point(&st, &pt(&x)).unwrap();
            assert!((slow - fast).abs() < 1e-8, "{slow} vs {fast}");
        }
        assert!(matches!(wigner_fourier_oracle(&st, &pt(&[0.0, 0.0]), 2.0, 0.1), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn separable_fourier_grid_matches_point_oracle() {
        let st: StateHandle = cat_fock(1.0, CatParity::Even, 20).unwrap().into();
        let spec = GridSpec::broadcast(1, Axis::new(-2.0, 2.0, 5).unwrap()).unwrap();
        let f = st.as_fock().unwrap().clone();
        let phi = |yq: f64, yp: f64| fock_characteristic(&f, &pt(&[yq, yp])).unwrap();
        let grid = wigner_fourier_grid_1mode(phi, &spec, 13.0, 0.1).unwrap();
        for (i, v) in grid.values.iter().enumerate() {
            let w = wigner_point(&st, &spec.point(i)).unwrap();
            assert!((v - w).abs() < 1e-8);
        }
    }

    #[test]
    fn grid_mass_and_coverage() {
        let st: StateHandle = make_fock(&[1], &[12]).unwrap();
        let spec = GridSpec::broadcast(1, Axis::new(-6.0, 6.0, 121).unwrap()).unwrap();
        let grid = wigner_grid(&st, &spec).unwrap();
        assert!((grid.integral() / grid.convention_mass - 1.0).abs() < 1e-6);
        let tight = GridSpec::broadcast(1, Axis::new(-1.0, 1.0, 21).unwrap()).unwrap();
        assert!(matches!(wigner_grid(&st, &tight), Err(Error::Coverage { .. })));
    }

    #[test]
    fn multimode_grid_ordering_matches_points() {
        let a = cat_fock(0.9, CatParity::Odd, 12).unwrap();
        let b = crate::states::coherent_fock(C64::new(0.3, -0.5), 12).unwrap();
        let st: StateHandle = a.tensor(&b).into();
        let axes = vec![
            Axis::new(-1.0, 1.0, 3).unwrap(),
            Axis::new(-2.0, 2.0, 4).unwrap(),
            Axis::new(-1.5, 0.5, 5).unwrap(),
            Axis::new(0.0, 1.0, 2).unwrap(),
        ];
        let spec = GridSpec::new(axes).unwrap();
        let grid = wigner_grid_unchecked(&st, &spec).unwrap();
        for i in 0..spec.len() {
            let x = spec.point(i);
            let w = wigner_point(&st, &x).unwrap();
            // product state: W = W_a W_b / (2π)^{1/2}·... compare against direct evaluation
            assert!((grid.values[i] - w).abs() < 1e-12);
            let wa = wigner_point(&a.clone().into(), &pt(&[x.coords()[0], x.coords()[2]])).unwrap();
            let wb = wigner_point(&b.clone().into(), &pt(&[x.coords()[1], x.coords()[3]])).unwrap();
            assert!((w - wa * wb).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_covariance_on_fock() {
        let st: StateHandle = cat_fock(1.1, CatParity::Even, 24).unwrap().into();
        let s = crate::states::phase_rotation(1, 0.7);
        let pts: Vec<PhasePoint> = (0..20).map(|i| pt(&[0.3 * i as f64 - 3.0, 0.1 * i as f64 - 1.0])).collect();
        assert!(symplectic_covariance_check(&st, &s, &pts).unwrap() < 1e-10);
        let sq = crate::states::squeezer(1, 0.3);
        assert!(matches!(symplectic_covariance_check(&st, &sq, &pts), Err(Error::Unrealizable(_))));
    }

    #[test]
    fn negativity_of_one_photon() {
        let st: StateHandle = make_fock(&[1], &[12]).unwrap();
        let spec = GridSpec::broadcast(1, Axis::new(-6.0, 6.0, 241).unwrap()).unwrap();
        let rep = negativity_report(&wigner_grid(&st, &spec).unwrap());
        assert!(rep.min_value < -0.5);
        assert!(rep.argmin.norm() < 1e-9);
        // ∫_{r<1/√2} negative part = 2e^{−1/2} − 1
        assert!((rep.negativity_volume - (2.0 * (-0.5f64).exp() - 1.0)).abs() < 1e-3);
    }

    #[test]
    fn csv_layout() {
        let st = StateHandle::Gaussian(GaussianState::vacuum(1));
        let spec = GridSpec::broadcast(1, Axis::new(-1.0, 1.0, 2).unwrap()).unwrap();
        let csv = wigner_grid_unchecked(&st, &spec).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "axis_1,axis_2,W");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("-1.0000000000000000e0,1.0000000000000000e0,"));
    }

    #[test]
    fn axis_parsing() {
        let a: Axis = "-6:6:241".parse().unwrap();
        assert_eq!(a, Axis { min: -6.0, max: 6.0, count: 241 });
        assert!("6:-6:10".parse::<Axis>().is_err());
        assert!("1:2".parse::<Axis>().is_err());
    }
}
