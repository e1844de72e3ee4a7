//! Noncontextual hidden-variable models built from nonnegative Wigner
//! functions.
//!
//! The hidden variable is a phase-space point `y` drawn from
//! `W(y) dy / (2π)^{M/2}` (the `(2π)^{−M/2}` of the deterministic kernels is
//! folded into the density so that it has unit mass). Each draw is the
//! linear assignment `x ↦ y·x`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{bin_index, check_edges, BinnedPdf, ContextRepresentation, EmpiricalContextModel, QuadratureLabel};
use crate::states::GaussianState;
use crate::wigner::{negativity_report, negativity_tolerance, wigner_grid, GridSpec, NegativityReport, WignerGrid};
use crate::{LagrangianSubspace, PhasePoint, StateHandle};

/// Samples per RNG substream. Substream `i` is keyed by `(seed, i)`, so
/// results do not depend on how chunks are scheduled.
pub const SAMPLE_CHUNK: usize = 4096;

/// Sampling table for a clipped, piecewise-constant grid density.
#[derive(Clone, Debug)]
pub struct GridDensity {
    pub grid: WignerGrid,
    /// Cumulative normalized cell masses in flat grid order.
    cdf: Vec<f64>,
    /// `∫ max(W, 0) dx / (2π)^{M/2}` before normalization.
    pub raw_mass: f64,
}

impl GridDensity {
    fn new(grid: WignerGrid) -> Result<Self> {
        let mut cdf = Vec::with_capacity(grid.values.len());
        let mut acc = 0.0;
        for (i, v) in grid.values.iter().enumerate() {
            acc += v.max(0.0) * grid.spec.weight(i);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidInput("grid density has no positive mass".into()));
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        let raw_mass = acc / grid.convention_mass;
        Ok(Self { grid, cdf, raw_mass })
    }

    /// One draw: pick a cell by inverse CDF, then a uniform point in it. The
    /// cell of node `i` spans `±h/2` around it, cut at the grid boundary,
    /// matching the trapezoid weights.
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let u: f64 = rng.random();
        let flat = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let idx = self.grid.spec.unravel(flat);
        for ((o, &i), a) in out.iter_mut().zip(&idx).zip(self.grid.spec.axes()) {
            let h = a.step();
            let x = a.point(i);
            let lo = (x - 0.5 * h).max(a.min);
            let hi = (x + 0.5 * h).min(a.max);
            *o = lo + (hi - lo) * rng.random::<f64>();
        }
    }
}

#[derive(Clone, Debug)]
pub enum Sampler {
    GaussianDensity { mean: DVector<f64>, cov: DMatrix<f64>, chol: DMatrix<f64> },
    GridDensity(GridDensity),
}

/// `⟨ℝ^{2M}, W dx/(2π)^{M/2}, δ_{y·(–)}⟩`.
#[derive(Clone, Debug)]
pub struct HiddenVariableModel {
    pub sampler: Sampler,
    pub modes: usize,
}

impl HiddenVariableModel {
    fn gaussian(g: &GaussianState) -> Result<Self> {
        let cov = g.cov().clone();
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?
            .l();
        Ok(Self {
            sampler: Sampler::GaussianDensity { mean: g.mean().to_vector(), cov, chol },
            modes: g.modes(),
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match &self.sampler {
            Sampler::GaussianDensity { mean, chol, .. } => {
                let z: Vec<f64> = (0..out.len()).map(|_| rng.sample(StandardNormal)).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = mean[i] + (0..=i).map(|j| chol[(i, j)] * z[j]).sum::<f64>();
                }
            }
            Sampler::GridDensity(g) => g.sample(rng, out),
        }
    }

    /// `count` draws, row-major with `2M` coordinates per row.
    pub fn sample_points(&self, seed: u64, count: usize) -> Vec<f64> {
        let d = 2 * self.modes;
        let mut out = vec![0.0; count * d];
        out.par_chunks_mut(SAMPLE_CHUNK * d).enumerate().for_each(|(chunk, block)| {
            let mut rng = substream(seed, chunk as u64);
            for row in block.chunks_mut(d) {
                self.draw(&mut rng, row);
            }
        });
        out
    }
}

/// RNG for substream `index` of `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Global value assignment `x ↦ y·x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearAssignment {
    pub point: PhasePoint,
}

impl LinearAssignment {
    pub fn eval(&self, x: &PhasePoint) -> Result<f64> {
        self.point.dot(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// M ≥ 2: the sign of W decides contextuality.
    Full,
    /// M = 1: only the negativity test is reported; there is no
    /// contextuality claim for a single mode.
    NegativityCriterionOnly,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Noncontextual(Box<HiddenVariableModel>),
    Contextual(NegativityReport),
}

#[derive(Clone, Debug)]
pub struct VerdictReport {
    pub verdict: Verdict,
    pub report: NegativityReport,
    pub tolerance: f64,
    pub grid: GridSpec,
    pub scope: Scope,
}

#[derive(Serialize)]
struct VerdictJson<'a> {
    verdict: &'static str,
    min_wigner: f64,
    negativity_volume: f64,
    grid: &'a GridSpec,
    tolerance: f64,
    scope: Scope,
}

impl VerdictReport {
    pub fn is_contextual(&self) -> bool {
        matches!(self.verdict, Verdict::Contextual(_))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&VerdictJson {
            verdict: if self.is_contextual() { "contextual" } else { "noncontextual" },
            min_wigner: self.report.min_value,
            negativity_volume: self.report.negativity_volume,
            grid: &self.grid,
            tolerance: self.tolerance,
            scope: self.scope,
        })?)
    }
}

fn check_spec(state: &StateHandle, spec: &GridSpec) -> Result<()> {
    if spec.modes() != state.modes() {
        return Err(Error::DimensionMismatch { expected: 2 * state.modes(), found: spec.axes().len() });
    }
    Ok(())
}

fn model_from_grid(state: &StateHandle, grid: WignerGrid) -> Result<HiddenVariableModel> {
    match state {
        StateHandle::Gaussian(g) => HiddenVariableModel::gaussian(g),
        StateHandle::Fock(f) => Ok(HiddenVariableModel { modes: f.modes(), sampler: Sampler::GridDensity(GridDensity::new(grid)?) }),
    }
}

/// Noncontextual iff `min W ≥ −tol` on the grid. `tol` defaults to
/// `1e-6 · max|W|`.
pub fn verdict(state: &StateHandle, spec: &GridSpec, tol: Option<f64>) -> Result<VerdictReport> {
    check_spec(state, spec)?;
    let grid = wigner_grid(state, spec)?;
    let report = negativity_report(&grid);
    let tolerance = tol.unwrap_or_else(|| negativity_tolerance(&grid));
    let scope = if state.modes() >= 2 { Scope::Full } else { Scope::NegativityCriterionOnly };
    let verdict = if report.min_value >= -tolerance {
        Verdict::Noncontextual(Box::new(model_from_grid(state, grid)?))
    } else {
        Verdict::Contextual(report.clone())
    };
    Ok(VerdictReport { verdict, report, tolerance, grid: spec.clone(), scope })
}

/// The hidden-variable model of a nonnegative state. Gaussian states use
/// their exact moments (the grid only needs to match in dimension); Fock
/// states are sampled from the clipped grid density.
pub fn build_hvm(state: &StateHandle, spec: &GridSpec) -> Result<HiddenVariableModel> {
    check_spec(state, spec)?;
    if let StateHandle::Gaussian(g) = state {
        return HiddenVariableModel::gaussian(g);
    }
    let grid = wigner_grid(state, spec)?;
    let report = negativity_report(&grid);
    if report.min_value < -negativity_tolerance(&grid) {
        return Err(Error::NegativeWigner(Box::new(report)));
    }
    model_from_grid(state, grid)
}

pub fn sample_assignment(hvm: &HiddenVariableModel, seed: u64, count: usize) -> Vec<LinearAssignment> {
    hvm.sample_points(seed, count)
        .chunks(2 * hvm.modes)
        .map(|row| LinearAssignment { point: PhasePoint::new(row.to_vec()).expect("finite sample") })
        .collect()
}

/// CSV `y_1,…,y_2M`, one assignment per row.
pub fn assignments_to_csv(modes: usize, assignments: &[LinearAssignment]) -> String {
    let header: Vec<String> = (1..=2 * modes).map(|k| format!("y_{k}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for a in assignments {
        let row: Vec<String> = a.point.coords().iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn check_modes(hvm: &HiddenVariableModel, modes: usize) -> Result<()> {
    if modes != hvm.modes {
        return Err(Error::DimensionMismatch { expected: 2 * hvm.modes, found: 2 * modes });
    }
    Ok(())
}

/// Histogram of `y·x` over `count` draws.
pub fn empirical_label(hvm: &HiddenVariableModel, x: &QuadratureLabel, edges: &[f64], seed: u64, count: usize) -> Result<BinnedPdf> {
    check_modes(hvm, x.modes())?;
    let v = x.vector().coords();
    let values: Vec<f64> = hvm
        .sample_points(seed, count)
        .chunks(2 * hvm.modes)
        .map(|y| y.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect();
    BinnedPdf::from_samples(edges.to_vec(), &values)
}

/// Joint histogram of the basis-row evaluations of a context.
pub fn empirical_context(
    hvm: &HiddenVariableModel,
    l: &LagrangianSubspace,
    edges: &[Vec<f64>],
    seed: u64,
    count: usize,
) -> Result<EmpiricalContextModel> {
    let m = l.modes();
    check_modes(hvm, m)?;
    if edges.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: edges.len() });
    }
    for e in edges {
        check_edges(e)?;
    }
    let rows = l.rows();
    let counts: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
    let mut hist = vec![0usize; counts.iter().product()];
    'draws: for y in hvm.sample_points(seed, count).chunks(2 * m) {
        let mut flat = 0;
        for (k, row) in rows.iter().enumerate() {
            let t: f64 = y.iter().zip(row.coords()).map(|(a, b)| a * b).sum();
            match bin_index(&edges[k], t) {
                Some(b) => flat = flat * counts[k] + b,
                None => continue 'draws,
            }
        }
        hist[flat] += 1;
    }
    let n = count.max(1) as f64;
    Ok(EmpiricalContextModel {
        context: l.clone(),
        representation: ContextRepresentation::GridJoint {
            edges: edges.to_vec(),
            masses: hist.into_iter().map(|c| c as f64 / n).collect(),
        },
    })
}
