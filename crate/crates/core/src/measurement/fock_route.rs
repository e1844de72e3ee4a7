//! Quadrature statistics on the Fock backbone.
//!
//! A label `x` is handled mode by mode: each active mode is rotated so that
//! its share of `x̂` becomes `r_k q̂_k`, the inactive modes are traced out,
//! and the outcome `Σ r_k q_k` is integrated against the joint position
//! density of the remaining modes. Up to two active modes are supported.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::binned::BinQuadrature;
use crate::error::{Error, Result};
use crate::fock_basis::hermite_functions;
use crate::phase_space::{rotation_to_axis, SymplecticMap as Sm};
use crate::states::{apply_gate_fock, FockDensityMatrix, FockGate};
use crate::wigner::{marginal_p_axis, momentum_marginal_kernel, transform_state, Axis, FockWignerEvaluator};
use crate::{PhasePoint, StateHandle};

/// Which independent route evaluates the position density.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Route {
    /// `(2π)^{−M/2} ∫ W dp` from the displaced-parity Wigner kernel.
    Wigner,
    /// `⟨q|ρ|q⟩` from Hermite-function wavefunctions.
    Born,
}

pub(crate) struct ReducedLabel {
    pub state: FockDensityMatrix,
    /// Coefficient `r_k > 0` of `q_k` for each kept mode, in kept order.
    pub weights: Vec<f64>,
}

fn block_rotation(x: &PhasePoint) -> Result<(Sm<f64>, Vec<usize>, Vec<f64>)> {
    let m = x.modes();
    let mut mat = nalgebra::DMatrix::identity(2 * m, 2 * m);
    let mut active = Vec::new();
    let mut weights = Vec::new();
    for k in 0..m {
        let (a, b) = x.mode_pair(k);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let s = rotation_to_axis(&PhasePoint::new(vec![a, b])?)?;
        let s = s.matrix();
        mat[(k, k)] = s[(0, 0)];
        mat[(k, m + k)] = s[(0, 1)];
        mat[(m + k, k)] = s[(1, 0)];
        mat[(m + k, m + k)] = s[(1, 1)];
        active.push(k);
        weights.push(a.hypot(b));
    }
    Ok((Sm::new(mat, None)?, active, weights))
}

/// Rotation + partial trace. The Wigner route realizes the rotation from
/// `rotation_to_axis` through symplectic covariance; the Born route applies
/// the phase shifts `e^{−iφ_k n̂_k}` directly.
pub(crate) fn reduce_label(f: &FockDensityMatrix, x: &PhasePoint, route: Route) -> Result<ReducedLabel> {
    if x.modes() != f.modes() {
        return Err(Error::DimensionMismatch { expected: 2 * f.modes(), found: x.dim() });
    }
    let (s, active, weights) = block_rotation(x)?;
    if active.is_empty() {
        return Err(Error::ZeroVector);
    }
    let rotated = match route {
        Route::Wigner => match transform_state(&StateHandle::Fock(f.clone()), &s)? {
            StateHandle::Fock(r) => r,
            StateHandle::Gaussian(_) => unreachable!("Fock input stays on the Fock backbone"),
        },
        Route::Born => {
            let mut cur = f.clone();
            for &k in &active {
                let (a, b) = x.mode_pair(k);
                cur = apply_gate_fock(&cur, FockGate::Rot { mode: k, theta: -b.atan2(a) })?;
            }
            cur
        }
    };
    let state = if active.len() == f.modes() { rotated } else { rotated.partial_trace(&active)? };
    Ok(ReducedLabel { state, weights })
}

/// Position density of a single-mode state at the given points.
fn density_1mode(f: &FockDensityMatrix, qs: &[f64], route: Route) -> Vec<f64> {
    let c = f.cutoffs()[0];
    match route {
        Route::Wigner => {
            let ev = FockWignerEvaluator::new(f);
            let p_axis = marginal_p_axis(c);
            ev.contract(&[qs.len()], |_, a, scratch, out| momentum_marginal_kernel(qs[a], c, &p_axis, scratch, out))
                .into_iter()
                .map(|z| z.re)
                .collect()
        }
        Route::Born => {
            let rho = f.matrix();
            qs.par_iter()
                .map(|&q| {
                    let psi = hermite_functions(q, c);
                    let mut s = 0.0;
                    for m in 0..c {
                        for n in 0..c {
                            s += (rho[(m, n)] * psi[m] * psi[n]).re;
                        }
                    }
                    s
                })
                .collect()
        }
    }
}

/// Joint position density of a two-mode state on `qa × qb`, row-major.
fn density_2mode(f: &FockDensityMatrix, qa: &[f64], qb: &[f64], route: Route) -> Vec<f64> {
    let (ca, cb) = (f.cutoffs()[0], f.cutoffs()[1]);
    match route {
        Route::Wigner => {
            let ev = FockWignerEvaluator::new(f);
            let (pa, pb) = (marginal_p_axis(ca), marginal_p_axis(cb));
            ev.contract(&[qa.len(), qb.len()], |k, a, scratch, out| {
                if k == 0 {
                    momentum_marginal_kernel(qa[a], ca, &pa, scratch, out)
                } else {
                    momentum_marginal_kernel(qb[a], cb, &pb, scratch, out)
                }
            })
            .into_iter()
            .map(|z| z.re)
            .collect()
        }
        Route::Born => {
            let rho = f.matrix();
            let psib: Vec<Vec<f64>> = qb.iter().map(|&q| hermite_functions(q, cb)).collect();
            qa.par_iter()
                .flat_map_iter(|&q| {
                    let psia = hermite_functions(q, ca);
                    // reduced operator on mode b at this q_a
                    let mut red = vec![C64::new(0.0, 0.0); cb * cb];
                    for m in 0..ca {
                        for n in 0..ca {
                            let w = psia[m] * psia[n];
                            if w == 0.0 {
                                continue;
                            }
                            for i in 0..cb {
                                for j in 0..cb {
                                    red[i * cb + j] += rho[(m * cb + i, n * cb + j)] * w;
                                }
                            }
                        }
                    }
                    let psib = &psib;
                    (0..qb.len()).map(move |jb| {
                        let v = &psib[jb];
                        let mut s = 0.0;
                        for i in 0..cb {
                            for j in 0..cb {
                                s += (red[i * cb + j] * v[i] * v[j]).re;
                            }
                        }
                        s
                    })
                })
                .collect()
        }
    }
}

/// Half-width of the position window outside which the density of a mode
/// with this cutoff is negligible.
fn position_extent(cutoff: usize) -> f64 {
    (2.0 * cutoff as f64 + 1.0).sqrt() + 5.0
}

/// Grid step for the two-mode hyperplane integral.
const PLANE_STEP: f64 = 0.03;

/// Bin masses of `Σ r_k q_k` for a reduced state with one or two modes.
pub(crate) fn outcome_masses(red: &ReducedLabel, edges: &[f64], route: Route) -> Result<Vec<f64>> {
    match red.weights.len() {
        1 => {
            let r = red.weights[0];
            let scaled: Vec<f64> = edges.iter().map(|e| e / r).collect();
            let quad = BinQuadrature::new(&scaled, 3, 0.1);
            let dens = density_1mode(&red.state, &quad.nodes, route);
            Ok(quad.integrate(&dens))
        }
        2 => {
            // integrate over the mode with the smaller weight, solve for the other
            let (a, b) = if red.weights[0] <= red.weights[1] { (0, 1) } else { (1, 0) };
            let (ra, rb) = (red.weights[a], red.weights[b]);
            let axis_for = |k: usize| {
                let l = position_extent(red.state.cutoffs()[k]);
                Axis { min: -l, max: l, count: (2.0 * l / PLANE_STEP).ceil() as usize + 1 }
            };
            let (ax0, ax1) = (axis_for(0), axis_for(1));
            let p = density_2mode(&red.state, &ax0.points(), &ax1.points(), route);
            let (n0, n1) = (ax0.count, ax1.count);
            // P as a function (outer index over mode a, inner over mode b)
            let (axa, axb) = if a == 0 { (ax0, ax1) } else { (ax1, ax0) };
            let at = |ia: usize, ib: usize| if a == 0 { p[ia * n1 + ib] } else { p[ib * n1 + ia] };
            let (na, nb) = if a == 0 { (n0, n1) } else { (n1, n0) };
            let hb = axb.step();
            let qa = axa.points();
            let wa = axa.weights();
            let mut masses = vec![0.0; edges.len() - 1];
            let mut cum = vec![0.0; nb];
            let mut row = vec![0.0; nb];
            for ia in 0..na {
                for (ib, r) in row.iter_mut().enumerate() {
                    *r = at(ia, ib);
                }
                cum[0] = 0.0;
                for ib in 1..nb {
                    cum[ib] = cum[ib - 1] + 0.5 * hb * (row[ib - 1] + row[ib]);
                }
                // ∫_{−∞}^{u} of the piecewise-linear interpolant
                let cdf = |u: f64| -> f64 {
                    let t = (u - axb.min) / hb;
                    if t <= 0.0 {
                        return 0.0;
                    }
                    if t >= (nb - 1) as f64 {
                        return cum[nb - 1];
                    }
                    let j = t.floor() as usize;
                    let s = t - j as f64;
                    cum[j] + hb * (row[j] * s + 0.5 * (row[j + 1] - row[j]) * s * s)
                };
                let vals: Vec<f64> = edges.iter().map(|e| cdf((e - ra * qa[ia]) / rb)).collect();
                for (m, w) in masses.iter_mut().zip(vals.windows(2)) {
                    *m += wa[ia] * (w[1] - w[0]);
                }
            }
            Ok(masses)
        }
        n => Err(Error::Unsupported(format!(
            "Fock-backbone quadratures are supported on at most two active modes (label has {n})"
        ))),
    }
}

/// Bin-integrated momentum-marginal kernels of one mode: for each bin of
/// `t = r q`, `∫_{bin} K(q) dq`, each a row-major `c × c` block.
pub(crate) fn binned_marginal_kernels(cutoff: usize, r: f64, edges: &[f64]) -> Vec<C64> {
    let scaled: Vec<f64> = edges.iter().map(|e| e / r).collect();
    let quad = BinQuadrature::new(&scaled, 3, 0.1);
    let cc = cutoff * cutoff;
    let p_axis = marginal_p_axis(cutoff);
    let node_kernels: Vec<Vec<C64>> = quad
        .nodes
        .par_iter()
        .map(|&q| {
            let mut scratch = vec![C64::new(0.0, 0.0); cc];
            let mut out = vec![C64::new(0.0, 0.0); cc];
            momentum_marginal_kernel(q, cutoff, &p_axis, &mut scratch, &mut out);
            out
        })
        .collect();
    let mut table = vec![C64::new(0.0, 0.0); quad.ranges.len() * cc];
    for (b, range) in quad.ranges.iter().enumerate() {
        for i in range.clone() {
            let w = quad.weights[i];
            for (t, k) in table[b * cc..(b + 1) * cc].iter_mut().zip(&node_kernels[i]) {
                *t += k * w;
            }
        }
    }
    table
}
