mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rpmd_core::normal_modes::{free_energy, propagate_free, sinc};
use rpmd_core::{build_basis, build_propagator, RingPolymerState};

fn laplacian(p: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(p, p);
    if p == 1 {
        return l;
    }
    for j in 0..p {
        l[(j, j)] += 2.0;
        l[(j, (j + 1) % p)] -= 1.0;
        l[(j, (j + p - 1) % p)] -= 1.0;
    }
    l
}

fn u_matrix(p: usize, alpha: f64) -> DMatrix<f64> {
    let basis = build_basis(p, alpha).unwrap();
    DMatrix::from_row_slice(p, p, basis.u())
}

#[test]
fn basis_is_orthogonal_up_to_32_beads() {
    for p in 1..=32 {
        let u = u_matrix(p, p as f64);
        let defect = (u.transpose() * &u - DMatrix::identity(p, p)).abs().max();
        assert!(defect <= 1e-12, "P = {p}: {defect:e}");
    }
}

#[test]
fn frequencies_match_laplacian_eigenvalues() {
    for p in 1..=32 {
        let alpha = 1.7 * p as f64;
        let basis = build_basis(p, alpha).unwrap();
        let stiffness = laplacian(p) * (alpha * alpha);
        // squared frequencies: the square root would amplify round-off at the zero mode
        let mut oracle: Vec<f64> = SymmetricEigen::new(stiffness.clone()).eigenvalues.iter().copied().collect();
        let mut ours: Vec<f64> = basis.omega().iter().map(|w| w * w).collect();
        oracle.sort_by(f64::total_cmp);
        ours.sort_by(f64::total_cmp);
        let scale = 4.0 * alpha * alpha;
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * scale, "P = {p}: {a} vs {b}");
        }
        let u = u_matrix(p, alpha);
        for k in 0..p {
            let col = u.column(k);
            let residual = (&stiffness * col - col * basis.omega()[k].powi(2)).abs().max();
            assert!(residual <= 1e-10 * scale, "P = {p}, mode {k}: {residual:e}");
        }
    }
}

#[test]
fn propagator_diagonals_in_mode_space() {
    let (p, alpha, h) = (6, 6.0, 0.13);
    let basis = build_basis(p, alpha).unwrap();
    let cache = build_propagator(&basis, h).unwrap();
    let u = u_matrix(p, alpha);
    let modes = |m: &[f64]| u.transpose() * DMatrix::from_row_slice(p, p, m) * &u;
    let (a, b, c, d) = (modes(&cache.a_hat), modes(&cache.b_hat), modes(&cache.c_hat), modes(&cache.d_moll));
    for k in 0..p {
        let w = basis.omega()[k];
        let expect = if k == 0 {
            [1.0, h, 0.0, 1.0]
        } else {
            [(w * h).cos(), (w * h).sin() / w, -w * (w * h).sin(), sinc(w * h)]
        };
        for (m, e) in [&a, &b, &c, &d].into_iter().zip(expect) {
            assert!((m[(k, k)] - e).abs() < 1e-12);
        }
        for j in 0..p {
            if j != k {
                for m in [&a, &b, &c, &d] {
                    assert!(m[(j, k)].abs() < 1e-12);
                }
            }
        }
    }
}

/// Exact flow of one dof from the matrix exponential of the linear system
/// `x' = p / m`, `p' = -m alpha^2 L x`.
fn exponential_flow(x: &[f64], mom: &[f64], m: f64, alpha: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let p = x.len();
    let mut gen = DMatrix::zeros(2 * p, 2 * p);
    let l = laplacian(p) * (-m * alpha * alpha);
    for i in 0..p {
        gen[(i, p + i)] = 1.0 / m;
        for j in 0..p {
            gen[(p + i, j)] = l[(i, j)];
        }
    }
    let z = nalgebra::DVector::from_iterator(2 * p, x.iter().chain(mom).copied());
    let out = (gen * t).exp() * z;
    (out.rows(0, p).iter().copied().collect(), out.rows(p, p).iter().copied().collect())
}

#[test]
fn free_flow_matches_matrix_exponential() {
    let masses = [1.008, 15.999, 1.0];
    for (i, &p) in [2usize, 4, 8, 16].iter().enumerate() {
        let alpha = p as f64;
        for seed in 0..3 {
            let start = common::random_state(masses.len(), p, 100 * i as u64 + seed);
            let cache = build_propagator(&build_basis(p, alpha).unwrap(), 0.05).unwrap();
            let mut s = start.clone();
            for _ in 0..20 {
                propagate_free(&mut s, &cache, &masses).unwrap();
            }
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for (dof, &m) in masses.iter().enumerate() {
                let rows = dof * p..(dof + 1) * p;
                let (x, q) =
                    exponential_flow(&start.positions[rows.clone()], &start.momenta[rows.clone()], m, alpha, 1.0);
                for (k, idx) in rows.enumerate() {
                    worst = worst.max((s.positions[idx] - x[k]).abs()).max((s.momenta[idx] - q[k]).abs());
                    scale = scale.max(x[k].abs()).max(q[k].abs());
                }
            }
            assert!(worst / scale <= 1e-8, "P = {p}: relative error {:e}", worst / scale);
            assert!((s.time - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn free_flow_conserves_energy_over_many_steps() {
    let masses = [1.008, 15.999];
    for p in [2usize, 4, 8, 16] {
        let alpha = p as f64;
        let mut s = common::random_state(masses.len(), p, p as u64);
        let cache = build_propagator(&build_basis(p, alpha).unwrap(), 0.075).unwrap();
        let energy = |st: &RingPolymerState| {
            let (k, sp) = free_energy(st, &masses, alpha);
            k + sp
        };
        let e0 = energy(&s);
        for _ in 0..10_000 {
            propagate_free(&mut s, &cache, &masses).unwrap();
        }
        let rel = (energy(&s) - e0).abs() / e0;
        assert!(rel <= 1e-10, "P = {p}: {rel:e}");
    }
}

#[test]
fn mollifier_satisfies_filter_condition() {
    let mut x: f64 = 0.0;
    while x <= 20.0 {
        assert!(sinc(x).abs() <= sinc(x / 2.0).abs() + 1e-15, "h w = {x}");
        x += 1e-3;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn orthogonality_holds(p in 1usize..=40, alpha in 0.1f64..50.0) {
        let u = u_matrix(p, alpha);
        prop_assert!((u.transpose() * &u - DMatrix::identity(p, p)).abs().max() <= 1e-12);
    }

    #[test]
    fn free_flow_is_reversible(p in 1usize..=12, h in 0.001f64..0.5, seed in 0u64..1000) {
        let masses = [2.0, 0.7];
        let start = common::random_state(2, p, seed);
        let cache = build_propagator(&build_basis(p, p as f64).unwrap(), h).unwrap();
        let mut s = start.clone();
        for _ in 0..5 {
            propagate_free(&mut s, &cache, &masses).unwrap();
        }
        s.flip_momenta();
        for _ in 0..5 {
            propagate_free(&mut s, &cache, &masses).unwrap();
        }
        s.flip_momenta();
        prop_assert!(s.max_abs_diff(&start) <= 1e-10);
    }

    #[test]
    fn mode_transform_round_trips(p in 1usize..=24, seed in 0u64..1000) {
        let basis = build_basis(p, 1.0).unwrap();
        let v = common::normals(&mut common::rng(seed), p);
        let back = basis.to_beads(&basis.to_modes(&v));
        for (a, b) in v.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
