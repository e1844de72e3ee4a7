//! Number-basis matrix elements shared by the Fock backbone.

use num_complex::Complex64 as C64;

/// `α = (q + ip)/√2`, linking displacement coordinates to ladder operators.
#[inline]
pub fn alpha_from_qp(q: f64, p: f64) -> C64 {
    C64::new(q, p) * std::f64::consts::FRAC_1_SQRT_2
}

/// Truncated Glauber matrix `⟨m|D(β)|n⟩` for `m, n < dim`, row-major.
///
/// These are the exact matrix elements of the untruncated operator, built
/// by the recurrences `⟨m|D|n⟩ = (β⟨m−1|D|n⟩ + √n ⟨m−1|D|n−1⟩)/√m` and
/// `⟨0|D|n⟩ = −β̄ ⟨0|D|n−1⟩/√n`.
pub fn glauber_matrix(beta: C64, dim: usize) -> Vec<C64> {
    let mut d = vec![C64::new(0.0, 0.0); dim * dim];
    glauber_into(beta, dim, &mut d);
    d
}

pub(crate) fn glauber_into(beta: C64, dim: usize, d: &mut [C64]) {
    debug_assert_eq!(d.len(), dim * dim);
    if dim == 0 {
        return;
    }
    let sqrt: Vec<f64> = (0..dim).map(|k| (k as f64).sqrt()).collect();
    let nb = -beta.conj();
    d[0] = C64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
    for n in 1..dim {
        d[n] = nb * d[n - 1] / sqrt[n];
    }
    for m in 1..dim {
        let (prev, cur) = d.split_at_mut(m * dim);
        let prev = &prev[(m - 1) * dim..];
        let cur = &mut cur[..dim];
        let inv = 1.0 / sqrt[m];
        cur[0] = beta * prev[0] * inv;
        for n in 1..dim {
            cur[n] = (beta * prev[n] + prev[n - 1] * sqrt[n]) * inv;
        }
    }
}

/// Harmonic-oscillator eigenfunctions ψ_0(q)..ψ_{n−1}(q) (ħ = 1, unit
/// frequency), so that |ψ_0(q)|² = e^{−q²}/√π.
pub fn hermite_functions(q: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * q * q).exp();
    if n > 1 {
        out[1] = std::f64::consts::SQRT_2 * q * out[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * q * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
    out
}

/// Number-basis amplitudes of the coherent state |α⟩, truncated.
pub fn coherent_amplitudes(alpha: C64, dim: usize) -> Vec<C64> {
    let mut c = vec![C64::new(0.0, 0.0); dim];
    if dim == 0 {
        return c;
    }
    c[0] = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 1..dim {
        c[n] = c[n - 1] * alpha / (n as f64).sqrt();
    }
    c
}

/// Truncated position operator `q̂ = (a + a†)/√2`.
pub fn position_matrix(dim: usize) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(dim, dim, |i, j| {
        if j == i + 1 {
            (j as f64 / 2.0).sqrt()
        } else if i == j + 1 {
            (i as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Closed form via associated Laguerre polynomials.
    fn glauber_closed(beta: C64, m: usize, n: usize) -> C64 {
        let x = beta.norm_sqr();
        let (lo, hi) = if m >= n { (n, m) } else { (m, n) };
        let k = hi - lo;
        let mut lag = 0.0;
        for j in 0..=lo {
            let binom = factorial(lo + k) / (factorial(lo - j) * factorial(k + j));
            lag += binom * (-x).powi(j as i32) / factorial(j);
        }
        let pref = (factorial(lo) / factorial(hi)).sqrt() * (-0.5 * x).exp() * lag;
        if m >= n {
            beta.powu(k as u32) * pref
        } else {
            (-beta.conj()).powu(k as u32) * pref
        }
    }

    #[test]
    fn glauber_matches_laguerre_form() {
        let beta = C64::new(0.7, -0.4);
        let d = glauber_matrix(beta, 8);
        for m in 0..8 {
            for n in 0..8 {
                let want = glauber_closed(beta, m, n);
                assert!((d[m * 8 + n] - want).norm() < 1e-12, "{m},{n}");
            }
        }
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        let h = 0.01;
        let mut gram = [[0.0; 5]; 5];
        for i in -1200..=1200 {
            let q = i as f64 * h;
            let psi = hermite_functions(q, 5);
            for a in 0..5 {
                for b in 0..5 {
                    gram[a][b] += psi[a] * psi[b] * h;
                }
            }
        }
        for a in 0..5 {
            for b in 0..5 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a][b] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn coherent_state_is_normalized() {
        let c = coherent_amplitudes(C64::new(1.5, 0.5), 60);
        let n: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
