//! Quadrature expressions and their compilation into phase shifts, CZ
//! couplings and one homodyne measurement.
//!
//! Gate conventions (Heisenberg picture, ħ = 1):
//! - `Rot(k, θ)` is `e^{iθ n̂_k}`: `q̂_k → cos θ q̂_k − sin θ p̂_k`,
//!   `p̂_k → sin θ q̂_k + cos θ p̂_k`.
//! - `CZ(k, l, g)` is `e^{i g q̂_k q̂_l}`: `p̂_k → p̂_k + g q̂_l`,
//!   `p̂_l → p̂_l + g q̂_k`.
//! - `homodyne(k, φ)` reads `cos φ q̂_k + sin φ p̂_k`.
//!
//! Mode indices in expressions and plans are 1-based.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hvm::{substream, SAMPLE_CHUNK};
use crate::measurement::{outcome_extent, quadrature_pdf, uniform_edges, BinnedPdf, QuadratureLabel};
use crate::{PhasePoint, StateHandle};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    Q,
    P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coefficient: f64,
    pub quadrature: Quadrature,
    /// 1-based mode index.
    pub mode: usize,
    /// Character offset of the term in the source text.
    pub position: usize,
}

/// A parsed sum of terms `c·q_k` / `c·p_k`, before like terms are combined.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadExpr {
    pub terms: Vec<Term>,
}

struct Lexer {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Lexer {
    fn new(src: &str) -> Self {
        Self { chars: src.chars().enumerate().collect(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.chars.len(), |c| c.0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { position: self.offset(), message: message.into() })
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let start = self.pos;
        while self.pos < self.chars.len() && f(self.chars[self.pos].1) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().map(|c| c.1).collect()
    }

    /// `digits [. digits] [e [±] digits]` or `. digits …`
    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.offset();
        let mut s = self.take_while(|c| c.is_ascii_digit());
        if self.chars.get(self.pos).map(|c| c.1) == Some('.') {
            self.pos += 1;
            s.push('.');
            s.push_str(&self.take_while(|c| c.is_ascii_digit()));
        }
        if matches!(self.chars.get(self.pos).map(|c| c.1), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            let mut exp = String::from("e");
            if let Some(sign @ ('+' | '-')) = self.chars.get(self.pos).map(|c| c.1) {
                exp.push(sign);
                self.pos += 1;
            }
            let digits = self.take_while(|c| c.is_ascii_digit());
            if digits.is_empty() {
                self.pos = save;
            } else {
                s.push_str(&exp);
                s.push_str(&digits);
            }
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Parse { position: start, message: format!("invalid number `{s}`") }),
        }
    }
}

impl QuadExpr {
    /// Grammar (whitespace-insensitive):
    /// `expr := ['+'|'-'] term (('+'|'-') term)*`,
    /// `term := [number ['*']] ('q'|'p') ['_'] index`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lx = Lexer::new(text);
        let mut terms = Vec::new();
        let mut sign = 1.0;
        match lx.peek() {
            Some('-') => {
                sign = -1.0;
                lx.pos += 1;
            }
            Some('+') => lx.pos += 1,
            None => return lx.err("empty expression"),
            _ => {}
        }
        loop {
            terms.push(Self::term(&mut lx, sign)?);
            match lx.peek() {
                None => break,
                Some('+') => sign = 1.0,
                Some('-') => sign = -1.0,
                Some(c) => return lx.err(format!("expected `+` or `-`, found `{c}`")),
            }
            lx.pos += 1;
        }
        Ok(Self { terms })
    }

    fn term(lx: &mut Lexer, mut sign: f64) -> Result<Term> {
        // unary minus directly in front of a term
        while lx.peek() == Some('-') {
            sign = -sign;
            lx.pos += 1;
        }
        let position = { lx.skip_ws(); lx.offset() };
        let mut coefficient = 1.0;
        if matches!(lx.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            coefficient = lx.number()?;
            if lx.peek() == Some('*') {
                lx.pos += 1;
            }
        }
        let quadrature = match lx.peek() {
            Some('q' | 'Q') => Quadrature::Q,
            Some('p' | 'P') => Quadrature::P,
            Some(c) => return lx.err(format!("expected `q` or `p`, found `{c}`")),
            None => return lx.err("expected `q` or `p`, found end of input"),
        };
        lx.pos += 1;
        if lx.chars.get(lx.pos).map(|c| c.1) == Some('_') {
            lx.pos += 1;
        }
        let at = lx.offset();
        let digits = lx.take_while(|c| c.is_ascii_digit());
        if digits.is_empty() {
            return Err(Error::Parse { position: at, message: "expected a mode index".into() });
        }
        let mode = digits
            .parse::<usize>()
            .map_err(|_| Error::Parse { position: at, message: format!("mode index `{digits}` too large") })?;
        Ok(Term { coefficient: sign * coefficient, quadrature, mode, position })
    }

    /// Coefficient vector `(q_1..q_M, p_1..p_M)` with like terms combined.
    pub fn to_label(&self, modes: usize) -> Result<QuadratureLabel> {
        let mut v = vec![0.0; 2 * modes];
        for t in &self.terms {
            if t.mode == 0 || t.mode > modes {
                return Err(Error::IndexOutOfRange { index: t.mode, modes });
            }
            let slot = match t.quadrature {
                Quadrature::Q => t.mode - 1,
                Quadrature::P => modes + t.mode - 1,
            };
            v[slot] += t.coefficient;
        }
        QuadratureLabel::new(PhasePoint::new(v)?)
    }
}

pub fn parse_quadrature_expr(text: &str, modes: usize) -> Result<QuadratureLabel> {
    QuadExpr::parse(text)?.to_label(modes)
}

/// Prints a label in the expression grammar; parsing the output gives back
/// the same vector (floats use the shortest round-trip representation).
pub struct LabelExpr<'a>(pub &'a QuadratureLabel);

impl fmt::Display for LabelExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0.vector();
        let m = v.modes();
        let mut first = true;
        for (k, c) in v.coords().iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let name = if k < m { format!("q{}", k + 1) } else { format!("p{}", k - m + 1) };
            let sep = match (first, c.is_sign_negative()) {
                (true, false) => "",
                (true, true) => "-",
                (false, false) => " + ",
                (false, true) => " - ",
            };
            let a = c.abs();
            if a == 1.0 {
                write!(f, "{sep}{name}")?;
            } else {
                write!(f, "{sep}{a:?}*{name}")?;
            }
            first = false;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Rot { mode: usize, theta: f64 },
    Cz { k: usize, l: usize, g: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Homodyne {
    pub mode: usize,
    pub phi: f64,
}

/// Gates in application order followed by one homodyne measurement. The
/// homodyne reading divided by `scale` is the outcome of the target
/// quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitPlan {
    pub gates: Vec<Gate>,
    pub homodyne: Homodyne,
    pub scale: f64,
}

impl CircuitPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        if !(plan.scale.is_finite() && plan.scale > 0.0) {
            return Err(Error::InvalidInput(format!("plan scale {} must be positive", plan.scale)));
        }
        Ok(plan)
    }

    fn check(&self, modes: usize) -> Result<()> {
        let ok = |k: usize| if k == 0 || k > modes { Err(Error::IndexOutOfRange { index: k, modes }) } else { Ok(()) };
        ok(self.homodyne.mode)?;
        for g in &self.gates {
            match *g {
                Gate::Rot { mode, .. } => ok(mode)?,
                Gate::Cz { k, l, .. } => {
                    ok(k)?;
                    ok(l)?;
                    if k == l {
                        return Err(Error::InvalidInput(format!("CZ needs two distinct modes (got {k}, {l})")));
                    }
                }
            }
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidInput(format!("plan scale {} must be positive", self.scale)));
        }
        Ok(())
    }

    /// The input-side label of the homodyne observable (not divided by
    /// `scale`).
    pub fn pullback(&self, modes: usize) -> Result<PhasePoint> {
        self.check(modes)?;
        let m = modes;
        let mut u = vec![0.0; 2 * m];
        let t = self.homodyne.mode - 1;
        u[t] = self.homodyne.phi.cos();
        u[m + t] = self.homodyne.phi.sin();
        for g in self.gates.iter().rev() {
            match *g {
                Gate::Rot { mode, theta } => {
                    let k = mode - 1;
                    let (c, s) = (theta.cos(), theta.sin());
                    let (uq, up) = (u[k], u[m + k]);
                    u[k] = c * uq + s * up;
                    u[m + k] = -s * uq + c * up;
                }
                Gate::Cz { k, l, g } => {
                    let (k, l) = (k - 1, l - 1);
                    let (upk, upl) = (u[m + k], u[m + l]);
                    u[l] += g * upk;
                    u[k] += g * upl;
                }
            }
        }
        PhasePoint::new(u)
    }
}

/// Circuit whose homodyne reading is `scale · x̂`.
///
/// Target = lowest active mode `t`; each active mode's contribution is
/// `r_k (cos φ_k q̂_k + sin φ_k p̂_k)`. With a single active mode the
/// homodyne phase is `φ_t`. Otherwise every auxiliary mode is turned so its
/// contribution is a position quadrature, the target so its own sits in
/// momentum, and `CZ(t, k, r_k / r_t)` adds `(r_k / r_t) q̂_k` into `p̂_t`,
/// which is then read at `φ = π/2`.
pub fn compile_measurement(x: &QuadratureLabel) -> Result<CircuitPlan> {
    let v = x.vector();
    let m = v.modes();
    let active: Vec<(usize, f64, f64)> = (0..m)
        .filter_map(|k| {
            let (a, b) = v.mode_pair(k);
            (a != 0.0 || b != 0.0).then(|| (k, a.hypot(b), b.atan2(a)))
        })
        .collect();
    let &(t, rt, phit) = active.first().ok_or(Error::ZeroVector)?;
    if active.len() == 1 {
        return Ok(CircuitPlan { gates: vec![], homodyne: Homodyne { mode: t + 1, phi: phit }, scale: 1.0 / rt });
    }
    let mut gates = Vec::new();
    for &(k, _, phi) in &active[1..] {
        if phi != 0.0 {
            gates.push(Gate::Rot { mode: k + 1, theta: -phi });
        }
    }
    let theta_t = FRAC_PI_2 - phit;
    if theta_t != 0.0 {
        gates.push(Gate::Rot { mode: t + 1, theta: theta_t });
    }
    for &(k, rk, _) in &active[1..] {
        gates.push(Gate::Cz { k: t + 1, l: k + 1, g: rk / rt });
    }
    Ok(CircuitPlan { gates, homodyne: Homodyne { mode: t + 1, phi: FRAC_PI_2 }, scale: 1.0 / rt })
}

/// `(pullback / scale, scale)`: the quadrature label the plan measures.
pub fn heisenberg_verify(plan: &CircuitPlan, modes: usize) -> Result<(PhasePoint, f64)> {
    let u = plan.pullback(modes)?;
    Ok((u.scaled(1.0 / plan.scale), plan.scale))
}

/// Bins used to tabulate the outcome distribution for inverse-CDF sampling.
const SIMULATION_BINS_GAUSSIAN: usize = 20_000;
const SIMULATION_BINS_FOCK: usize = 4_000;

/// Homodyne shots of the plan on `state`, divided by `scale`.
///
/// Running the gates and reading the homodyne is equivalent (by the
/// Heisenberg pullback) to measuring the pulled-back label on the input;
/// shots are drawn by inverse CDF from its tabulated distribution, linear
/// within each bin, with one RNG substream per chunk of shots.
pub fn simulate_homodyne(state: &StateHandle, plan: &CircuitPlan, shots: usize, seed: u64) -> Result<Vec<f64>> {
    let u = plan.pullback(state.modes())?;
    let label = QuadratureLabel::new(u)?;
    let extent = outcome_extent(state, &label);
    let bins = match state {
        StateHandle::Gaussian(_) => SIMULATION_BINS_GAUSSIAN,
        StateHandle::Fock(_) => SIMULATION_BINS_FOCK,
    };
    let pdf = quadrature_pdf(state, &label, &uniform_edges(-extent, extent, bins))?;
    let sampler = InverseCdf::new(&pdf);
    let mut out = vec![0.0; shots];
    out.par_chunks_mut(SAMPLE_CHUNK).enumerate().for_each(|(chunk, block)| {
        let mut rng = substream(seed, chunk as u64);
        for o in block {
            *o = sampler.draw(rng.random()) / plan.scale;
        }
    });
    Ok(out)
}

struct InverseCdf<'a> {
    edges: &'a [f64],
    cdf: Vec<f64>,
}

impl<'a> InverseCdf<'a> {
    fn new(pdf: &'a BinnedPdf) -> Self {
        let total = pdf.total();
        let mut cdf = Vec::with_capacity(pdf.len() + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for m in pdf.masses() {
            acc += m;
            cdf.push(acc / total);
        }
        Self { edges: pdf.edges(), cdf }
    }

    fn draw(&self, u: f64) -> f64 {
        let n = self.edges.len() - 1;
        let b = (self.cdf.partition_point(|&c| c <= u).max(1) - 1).min(n - 1);
        let (c0, c1) = (self.cdf[b], self.cdf[b + 1]);
        let s = if c1 > c0 { ((u - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.5 };
        self.edges[b] + s * (self.edges[b + 1] - self.edges[b])
    }
}

/// One sample per line.
pub fn samples_to_csv(samples: &[f64]) -> String {
    let mut out = String::with_capacity(samples.len() * 24);
    for s in samples {
        out.push_str(&format!("{s:.16e}\n"));
    }
    out
}
