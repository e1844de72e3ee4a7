use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wigner_ctx::fock_basis::{alpha_from_qp, glauber_matrix, hermite_functions};
use wigner_ctx::measurement::{quadrature_pdf, uniform_edges, QuadratureLabel};
use wigner_ctx::phase_space::{random_symplectic, symplectic_form};
use wigner_ctx::states::{apply_symplectic_gaussian, make_fock, squeezed_vacuum_fock, GaussianState};
use wigner_ctx::{PhasePoint, StateHandle, SymplecticMap};

const CUTOFF: usize = 40;
const BLOCK: usize = CUTOFF / 2;

fn matmul(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    let mut c = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn displacement(x: &PhasePoint) -> Vec<C64> {
    let (q, p) = x.mode_pair(0);
    glauber_matrix(alpha_from_qp(q, p), CUTOFF)
}

fn random_pair(rng: &mut ChaCha8Rng) -> (PhasePoint, PhasePoint) {
    let mut draw = || {
        let r = rng.random_range(0.0..1.0f64);
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        PhasePoint::new(vec![r * t.cos(), r * t.sin()]).unwrap()
    };
    (draw(), draw())
}

/// max over the lower block of |D(x)D(y) − phase·D(y)D(x)|
fn commutator_residual(x: &PhasePoint, y: &PhasePoint, sign: f64) -> f64 {
    let (dx, dy) = (displacement(x), displacement(y));
    let xy = matmul(&dx, &dy, CUTOFF);
    let yx = matmul(&dy, &dx, CUTOFF);
    let phase = C64::from_polar(1.0, sign * symplectic_form(x, y).unwrap());
    let mut worst: f64 = 0.0;
    for i in 0..BLOCK {
        for j in 0..BLOCK {
            worst = worst.max((xy[i * CUTOFF + j] - phase * yx[i * CUTOFF + j]).norm());
        }
    }
    worst
}

#[test]
fn truncated_displacements_obey_the_weyl_relation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let (x, y) = random_pair(&mut rng);
        let r = commutator_residual(&x, &y, -1.0);
        assert!(r < 1e-5, "residual {r}");
    }
}

#[test]
fn opposite_phase_is_visibly_wrong() {
    let x = PhasePoint::new(vec![1.0, 0.0]).unwrap();
    let y = PhasePoint::new(vec![0.0, 1.0]).unwrap();
    // |e^{−iΩ} − e^{iΩ}| = 2|sin Ω| with Ω = 1; entries of D(y)D(x) are O(1)
    assert!(commutator_residual(&x, &y, 1.0) > 0.1);
}

/// `D(q,p) = e^{−iqp/2} X(q) Z(p)` acting on wavefunctions, with
/// `X(s)ψ(t) = ψ(t − s)` and `Z(s)ψ(t) = e^{ist}ψ(t)`. Applied to a
/// closure; composition is exact, so no truncation enters.
fn weyl_displace(q: f64, p: f64, psi: impl Fn(f64) -> C64) -> impl Fn(f64) -> C64 {
    move |t| C64::from_polar(1.0, -q * p / 2.0) * C64::from_polar(1.0, p * (t - q)) * psi(t - q)
}

#[test]
fn wavefunction_displacements_confirm_the_sign() {
    let psi = |t: f64| C64::new(hermite_functions(t, 3)[2], 0.3 * hermite_functions(t, 2)[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let (x, y) = random_pair(&mut rng);
        let ((q1, p1), (q2, p2)) = (x.mode_pair(0), y.mode_pair(0));
        let xy = weyl_displace(q1, p1, weyl_displace(q2, p2, psi));
        let yx = weyl_displace(q2, p2, weyl_displace(q1, p1, psi));
        let omega = symplectic_form(&x, &y).unwrap();
        for t in [-2.0, -0.7, 0.0, 0.4, 1.3, 2.5] {
            let minus = (xy(t) - C64::from_polar(1.0, -omega) * yx(t)).norm();
            assert!(minus < 1e-12, "e^(−iΩ): {minus}");
        }
    }
}

fn sup_density_gap(a: &StateHandle, b: &StateHandle) -> f64 {
    let edges = uniform_edges(-6.0, 6.0, 240);
    let h = edges[1] - edges[0];
    let mut worst: f64 = 0.0;
    for label in [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, -0.8]] {
        let x = QuadratureLabel::new(PhasePoint::new(label).unwrap()).unwrap();
        let pa = quadrature_pdf(a, &x, &edges).unwrap();
        let pb = quadrature_pdf(b, &x, &edges).unwrap();
        for (u, v) in pa.masses().iter().zip(pb.masses()) {
            worst = worst.max((u - v).abs() / h);
        }
    }
    worst
}

#[test]
fn backbones_agree_on_vacuum_and_squeezed_vacuum() {
    let vac_g: StateHandle = GaussianState::vacuum(1).into();
    let vac_f = make_fock(&[0], &[12]).unwrap();
    assert!(sup_density_gap(&vac_g, &vac_f) < 1e-4);
    let sq_g: StateHandle = GaussianState::squeezed_vacuum(1, 0.5).into();
    let sq_f: StateHandle = squeezed_vacuum_fock(0.5, 40).unwrap().into();
    let gap = sup_density_gap(&sq_g, &sq_f);
    assert!(gap < 1e-4, "{gap}");
}

#[test]
fn gaussian_action_is_a_homomorphism() {
    for m in 1..=3 {
        let g = GaussianState::thermal(m, 0.4).unwrap();
        let s1: SymplecticMap = random_symplectic(m, 1).unwrap();
        let s2: SymplecticMap = random_symplectic(m, 2).unwrap();
        let seq = apply_symplectic_gaussian(&apply_symplectic_gaussian(&g, &s2).unwrap(), &s1).unwrap();
        let once = apply_symplectic_gaussian(&g, &s1.compose(&s2).unwrap()).unwrap();
        assert!((seq.cov() - once.cov()).abs().max() < 1e-9);
        assert!((seq.mean().to_vector() - once.mean().to_vector()).abs().max() < 1e-9);
    }
}
