use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome probabilities on a partition of the real line into bins
/// `[edges[i], edges[i+1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedPdf {
    edges: Vec<f64>,
    masses: Vec<f64>,
}

/// Masses above this negative value are treated as quadrature noise and
/// clipped to zero.
const NEGATIVE_MASS_NOISE: f64 = -1e-9;

pub(crate) fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidInput("need at least two bin edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("bin edges must be finite and strictly increasing".into()));
    }
    Ok(())
}

impl BinnedPdf {
    pub fn new(edges: Vec<f64>, mut masses: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        if masses.len() + 1 != edges.len() {
            return Err(Error::DimensionMismatch { expected: edges.len() - 1, found: masses.len() });
        }
        for m in masses.iter_mut() {
            if !m.is_finite() || *m < NEGATIVE_MASS_NOISE {
                return Err(Error::InvalidInput(format!("bin mass {m} is not a probability")));
            }
            *m = m.max(0.0);
        }
        let total: f64 = masses.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidInput(format!("bin masses sum to {total} > 1")));
        }
        Ok(Self { edges, masses })
    }

    /// Histogram of samples, normalized by the sample count (not by the
    /// number of samples that land inside the edges).
    pub fn from_samples(edges: Vec<f64>, samples: &[f64]) -> Result<Self> {
        check_edges(&edges)?;
        let mut counts = vec![0usize; edges.len() - 1];
        for &s in samples {
            if let Some(b) = bin_index(&edges, s) {
                counts[b] += 1;
            }
        }
        let n = samples.len().max(1) as f64;
        Self::new(edges, counts.into_iter().map(|c| c as f64 / n).collect())
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mass divided by width of the bin containing `x`, or 0 outside.
    pub fn density_at(&self, x: f64) -> f64 {
        bin_index(&self.edges, x).map_or(0.0, |b| self.masses[b] / (self.edges[b + 1] - self.edges[b]))
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Mean using bin midpoints.
    pub fn mean(&self) -> f64 {
        self.centers().iter().zip(&self.masses).map(|(c, m)| c * m).sum::<f64>() / self.total()
    }

    /// Variance using bin midpoints.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.centers().iter().zip(&self.masses).map(|(c, m)| (c - mu).powi(2) * m).sum::<f64>() / self.total()
    }

    fn same_edges(&self, other: &Self) -> Result<()> {
        let same = self.edges.len() == other.edges.len()
            && self.edges.iter().zip(&other.edges).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if same {
            Ok(())
        } else {
            Err(Error::InvalidInput("distributions are binned on different edges".into()))
        }
    }

    /// `½ Σ |a_i − b_i|`.
    pub fn tv_distance(&self, other: &Self) -> Result<f64> {
        self.same_edges(other)?;
        Ok(0.5 * self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// Largest difference of the cumulative distributions at the bin edges.
    pub fn ks_distance(&self, other: &Self) -> Result<f64> {
        self.same_edges(other)?;
        let (mut ca, mut cb, mut worst) = (0.0f64, 0.0f64, 0.0f64);
        for (a, b) in self.masses.iter().zip(&other.masses) {
            ca += a;
            cb += b;
            worst = worst.max((ca - cb).abs());
        }
        Ok(worst)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,mass\n");
        for (w, m) in self.edges.windows(2).zip(&self.masses) {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", w[0], w[1], m);
        }
        out
    }
}

pub(crate) fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    if !(x >= edges[0] && x < edges[edges.len() - 1]) {
        return None;
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// `n` uniform bins over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| if i == n { hi } else { lo + (hi - lo) * i as f64 / n as f64 }).collect()
}

/// 201 uniform bins over [−8, 8].
pub fn default_edges() -> Vec<f64> {
    uniform_edges(-8.0, 8.0, 201)
}

/// Gauss–Legendre nodes and weights on [−1, 1] (Newton iteration on the
/// Legendre recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Quadrature nodes covering each bin: the bin is cut into pieces of width at
/// most `max_width`, each carrying an `order`-point Gauss–Legendre rule.
/// Returns per-bin ranges into the node list.
pub(crate) struct BinQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub ranges: Vec<std::ops::Range<usize>>,
}

impl BinQuadrature {
    pub fn new(edges: &[f64], order: usize, max_width: f64) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut ranges = Vec::with_capacity(edges.len() - 1);
        for w in edges.windows(2) {
            let start = nodes.len();
            let pieces = ((w[1] - w[0]) / max_width).ceil().max(1.0) as usize;
            let h = (w[1] - w[0]) / pieces as f64;
            for k in 0..pieces {
                let mid = w[0] + (k as f64 + 0.5) * h;
                for (x, wt) in gx.iter().zip(&gw) {
                    nodes.push(mid + 0.5 * h * x);
                    weights.push(0.5 * h * wt);
                }
            }
            ranges.push(start..nodes.len());
        }
        Self { nodes, weights, ranges }
    }

    /// Bin integrals of a density given at the nodes.
    pub fn integrate(&self, values: &[f64]) -> Vec<f64> {
        self.ranges
            .iter()
            .map(|r| r.clone().map(|i| values[i] * self.weights[i]).sum())
            .collect()
    }
}
