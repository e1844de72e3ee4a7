use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wigner_ctx::fock_basis::{alpha_from_qp, hermite_functions};
use wigner_ctx::phase_space::random_symplectic;
use wigner_ctx::states::{
    cat_fock, coherent_fock, make_fock, mix_fock, squeezed_vacuum_fock, thermal_fock, CatParity, FockGate, GaussianState,
};
use wigner_ctx::wigner::{
    negativity_report, symplectic_covariance_check, wigner_fourier_grid_1mode, wigner_grid, wigner_grid_unchecked,
    wigner_point, wigner_point_complex, Axis, GridSpec,
};
use wigner_ctx::{PhasePoint, StateHandle, SymplecticMap};

fn standard_spec(modes: usize) -> GridSpec {
    GridSpec::broadcast(modes, Axis::new(-6.0, 6.0, 241).unwrap()).unwrap()
}

fn pt(v: &[f64]) -> PhasePoint {
    PhasePoint::new(v.to_vec()).unwrap()
}

/// |ψ(q)|² of the even/odd cat with real amplitude `alpha`, from coherent
/// wavefunctions `π^{−1/4} e^{−(q ∓ √2 α)²/2}`.
fn cat_density(alpha: f64, sign: f64, q: f64) -> f64 {
    let a = std::f64::consts::SQRT_2 * alpha;
    let g = |c: f64| (-(q - c).powi(2) / 2.0).exp();
    let norm = 2.0 + 2.0 * sign * (-a * a).exp();
    (g(a) + sign * g(-a)).powi(2) / (PI.sqrt() * norm)
}

fn squeezed_density(r: f64, q: f64) -> f64 {
    let var = (-2.0 * r).exp() / 2.0;
    (-q * q / (2.0 * var)).exp() / (TAU * var).sqrt()
}

fn max_marginal_error(state: &StateHandle, density: impl Fn(f64) -> f64) -> f64 {
    let spec = standard_spec(1);
    let grid = wigner_grid(state, &spec).unwrap();
    let marg = grid.p_marginal();
    spec.axes()[0]
        .points()
        .iter()
        .zip(&marg)
        .map(|(&q, m)| (m / TAU.sqrt() - density(q)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn shipped_states_are_normalized() {
    let states: Vec<(&str, StateHandle)> = vec![
        ("vacuum/gaussian", GaussianState::vacuum(1).into()),
        ("vacuum/fock", make_fock(&[0], &[10]).unwrap()),
        ("one photon", make_fock(&[1], &[12]).unwrap()),
        ("two photons", make_fock(&[2], &[12]).unwrap()),
        ("squeezed/gaussian", GaussianState::squeezed_vacuum(1, 0.5).into()),
        ("squeezed/fock", squeezed_vacuum_fock(0.5, 40).unwrap().into()),
        ("thermal", thermal_fock(1.0, 40).unwrap().into()),
        ("even cat", cat_fock(2.0, CatParity::Even, 30).unwrap().into()),
        ("odd cat", cat_fock(2.0, CatParity::Odd, 30).unwrap().into()),
    ];
    for (name, st) in states {
        let grid = wigner_grid(&st, &standard_spec(1)).unwrap();
        let mass = grid.integral() / grid.convention_mass;
        assert!((mass - 1.0).abs() < 1e-3, "{name}: {mass}");
    }
}

#[test]
fn momentum_marginals_reproduce_wavefunctions() {
    let vac: StateHandle = GaussianState::vacuum(1).into();
    assert!(max_marginal_error(&vac, |q| hermite_functions(q, 1)[0].powi(2)) < 1e-3);
    let one = make_fock(&[1], &[12]).unwrap();
    // ψ_1(q) = √2 q e^{−q²/2} / π^{1/4}, written out independently
    let psi1 = |q: f64| std::f64::consts::SQRT_2 * q * (-q * q / 2.0).exp() / PI.powf(0.25);
    assert!(max_marginal_error(&one, |q| psi1(q).powi(2)) < 1e-3);
    let sq: StateHandle = squeezed_vacuum_fock(0.5, 40).unwrap().into();
    assert!(max_marginal_error(&sq, |q| squeezed_density(0.5, q)) < 1e-3);
    let cat: StateHandle = cat_fock(2.0, CatParity::Even, 30).unwrap().into();
    assert!(max_marginal_error(&cat, |q| cat_density(2.0, 1.0, q)) < 1e-3);
}

#[test]
fn vacuum_backbones_agree_pointwise() {
    let g: StateHandle = GaussianState::vacuum(1).into();
    let f = make_fock(&[0], &[16]).unwrap();
    let spec = GridSpec::broadcast(1, Axis::new(-5.0, 5.0, 51).unwrap()).unwrap();
    let a = wigner_grid_unchecked(&g, &spec).unwrap();
    let b = wigner_grid_unchecked(&f, &spec).unwrap();
    let worst = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
    assert!(wigner_point(&g, &pt(&[8.0, 0.0])).unwrap().abs() < 1e-10);
}

#[test]
fn fock_wigner_values_are_real() {
    let a = cat_fock(1.3, CatParity::Odd, 24).unwrap();
    let b = coherent_fock(C64::new(0.4, -0.9), 24).unwrap();
    let rho = mix_fock(&[&a, &b], &[0.35, 0.65]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let x = pt(&[rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]);
        assert!(wigner_point_complex(&rho, &x).unwrap().im.abs() < 1e-8);
    }
}

fn sample_points(modes: usize, n: usize, seed: u64) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| PhasePoint::new((0..2 * modes).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()).collect()
}

#[test]
fn symplectic_covariance_on_both_backbones() {
    let g: StateHandle = GaussianState::squeezed_vacuum(2, 0.4).into();
    for seed in 0..5 {
        let s: SymplecticMap = random_symplectic(2, seed).unwrap();
        let err = symplectic_covariance_check(&g, &s, &sample_points(2, 100, seed)).unwrap();
        assert!(err < 1e-8, "seed {seed}: {err}");
    }
    let one = make_fock(&[1], &[16]).unwrap();
    let c = 0.7f64.cos();
    let s = 0.7f64.sin();
    let rot = SymplecticMap::new(nalgebra::DMatrix::from_row_slice(2, 2, &[c, s, -s, c]), None).unwrap();
    assert!(symplectic_covariance_check(&one, &rot, &sample_points(1, 100, 1)).unwrap() < 1e-5);
    // a non-rotation cannot act on the Fock backbone
    let shear = SymplecticMap::new(nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]), None).unwrap();
    assert!(symplectic_covariance_check(&one, &shear, &sample_points(1, 3, 1)).is_err());
}

#[test]
fn coarse_two_mode_vacuum_mass() {
    let st: StateHandle = GaussianState::vacuum(2).into();
    let spec = GridSpec::broadcast(2, Axis::new(-6.0, 6.0, 41).unwrap()).unwrap();
    let grid = wigner_grid(&st, &spec).unwrap();
    assert!((grid.integral() / TAU - 1.0).abs() < 0.02);
}

/// `⟨β₁|D(γ)|β₂⟩ = e^{(γβ̄₂ − γ̄β₂)/2} ⟨β₁|β₂ + γ⟩`, `⟨a|b⟩ = e^{−|a|²/2 − |b|²/2 + āb}`.
fn coherent_displacement_element(b1: C64, g: C64, b2: C64) -> C64 {
    let phase = ((g * b2.conj() - g.conj() * b2) / 2.0).exp();
    let c = b2 + g;
    phase * (-b1.norm_sqr() / 2.0 - c.norm_sqr() / 2.0 + b1.conj() * c).exp()
}

/// Characteristic function `⟨ψ|D(−y)|ψ⟩` of the cat `N(|α⟩ ± |−α⟩)`,
/// summed in closed form over the four coherent-state terms.
fn cat_characteristic(alpha: f64, sign: f64, yq: f64, yp: f64) -> C64 {
    let g = -alpha_from_qp(yq, yp);
    let a = C64::new(alpha, 0.0);
    let n2 = 1.0 / (2.0 + 2.0 * sign * (-2.0 * alpha * alpha).exp());
    let mut s = C64::new(0.0, 0.0);
    for (s1, w1) in [(1.0, 1.0), (-1.0, sign)] {
        for (s2, w2) in [(1.0, 1.0), (-1.0, sign)] {
            s += w1 * w2 * coherent_displacement_element(a * s1, g, a * s2);
        }
    }
    s * n2
}

#[test]
fn cat_grid_matches_fourier_oracle() {
    let cat: StateHandle = cat_fock(2.0, CatParity::Even, 30).unwrap().into();
    let spec = GridSpec::broadcast(1, Axis::new(-6.0, 6.0, 121).unwrap()).unwrap();
    let fast = wigner_grid(&cat, &spec).unwrap();
    let slow = wigner_fourier_grid_1mode(|q, p| cat_characteristic(2.0, 1.0, q, p), &spec, 16.0, 0.1).unwrap();
    let worst = fast.values.iter().zip(&slow.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
    let (a, b) = (negativity_report(&fast), negativity_report(&slow));
    assert!((a.negativity_volume - b.negativity_volume).abs() < 1e-6);
    assert!(a.negativity_volume > 0.0 && a.min_value < 0.0);
}

#[test]
fn displaced_one_photon_covariance() {
    // Rot + Disp is realizable on the Fock backbone
    let one = make_fock(&[1], &[30]).unwrap();
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let map = SymplecticMap::new(nalgebra::DMatrix::from_row_slice(2, 2, &[c, s, -s, c]), Some(pt(&[0.4, -0.2]))).unwrap();
    assert!(symplectic_covariance_check(&one, &map, &sample_points(1, 50, 4)).unwrap() < 1e-5);
    let _ = FockGate::Rot { mode: 0, theta: 0.0 };
}
