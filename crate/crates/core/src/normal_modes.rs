//! Normal-mode basis of the free ring polymer and its exact propagator.
//!
//! The cyclic spring coupling of `P` beads is diagonalized by a real
//! trigonometric basis. Column `k` of `U` (bead index `j` runs down the
//! column) is
//!
//! * `k = 0`: `1/sqrt(P)` (centroid),
//! * `0 < 2k < P`: `sqrt(2/P) cos(2 pi k j / P)`,
//! * `2k = P`: `(-1)^j / sqrt(P)`,
//! * `2k > P`: `sqrt(2/P) sin(2 pi k j / P)`,
//!
//! with frequency `omega[k] = 2 alpha sin(k pi / P)`. Columns `k` and `P - k`
//! share a frequency, so each cosine mode is paired with the sine mode of the
//! same wavenumber. All bead-space operators built here are `U f(omega) U^T`
//! and therefore symmetric circulant matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::state::RingPolymerState;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalModeBasis {
    n_beads: usize,
    alpha: f64,
    /// Row-major `P x P`; `u[j * P + k]` is bead `j` of mode `k`.
    u: Vec<f64>,
    omega: Vec<f64>,
}

pub fn build_basis(n_beads: usize, alpha: f64) -> Result<NormalModeBasis> {
    if n_beads == 0 {
        return Err(Error::Validation { field: "beads", reason: "must be at least 1" });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Validation { field: "alpha", reason: "must be positive" });
    }
    let p = n_beads;
    let pf = p as f64;
    let mut u = vec![0.0; p * p];
    for j in 0..p {
        for k in 0..p {
            let phase = 2.0 * PI * (k * j % p) as f64 / pf;
            u[j * p + k] = if k == 0 {
                1.0 / libm::sqrt(pf)
            } else if 2 * k < p {
                libm::sqrt(2.0 / pf) * libm::cos(phase)
            } else if 2 * k == p {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign / libm::sqrt(pf)
            } else {
                libm::sqrt(2.0 / pf) * libm::sin(phase)
            };
        }
    }
    let omega = (0..p).map(|k| 2.0 * alpha * libm::sin(k as f64 * PI / pf)).collect();
    Ok(NormalModeBasis { n_beads, alpha, u, omega })
}

impl NormalModeBasis {
    pub fn n_beads(&self) -> usize {
        self.n_beads
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Row-major transform matrix.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// `U diag(values) U^T`, row-major.
    pub fn conjugate_diagonal(&self, values: &[f64]) -> Vec<f64> {
        let p = self.n_beads;
        let mut out = vec![0.0; p * p];
        for i in 0..p {
            for l in 0..p {
                out[i * p + l] = (0..p).map(|k| self.u[i * p + k] * values[k] * self.u[l * p + k]).sum();
            }
        }
        out
    }

    /// Bead coordinates to normal-mode coordinates, `U^T x`.
    pub fn to_modes(&self, beads: &[f64]) -> Vec<f64> {
        let p = self.n_beads;
        (0..p).map(|k| (0..p).map(|j| self.u[j * p + k] * beads[j]).sum()).collect()
    }

    /// Normal-mode coordinates back to beads, `U x~`.
    pub fn to_beads(&self, modes: &[f64]) -> Vec<f64> {
        let p = self.n_beads;
        (0..p).map(|j| (0..p).map(|k| self.u[j * p + k] * modes[k]).sum()).collect()
    }
}

/// `sin(x) / x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if libm::fabs(x) < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        libm::sin(x) / x
    }
}

/// Bead-space matrices of the exact free flow over one step `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorCache {
    n_beads: usize,
    h: f64,
    pub a_hat: Vec<f64>,
    pub b_hat: Vec<f64>,
    pub c_hat: Vec<f64>,
    /// Averaging operator `U D(h) U^T` used for mollified forces.
    pub d_moll: Vec<f64>,
}

/// Mass-independent propagator for step `h`.
///
/// Mode-space diagonals: `A = cos(w h)`, `B = sin(w h) / w`, `C = -w sin(w h)`
/// and the mollifier `D = sinc(w h)`. The centroid is a free particle
/// (`A = 1`, `B = h`, `C = 0`, `D = 1`).
pub fn build_propagator(basis: &NormalModeBasis, h: f64) -> Result<PropagatorCache> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Validation { field: "h", reason: "must be positive and finite" });
    }
    let omega = basis.omega();
    let mut a = Vec::with_capacity(omega.len());
    let mut b = Vec::with_capacity(omega.len());
    let mut c = Vec::with_capacity(omega.len());
    let mut d = Vec::with_capacity(omega.len());
    for (k, &w) in omega.iter().enumerate() {
        if k == 0 || w == 0.0 {
            a.push(1.0);
            b.push(h);
            c.push(0.0);
            d.push(1.0);
        } else {
            let (s, co) = (libm::sin(w * h), libm::cos(w * h));
            a.push(co);
            b.push(h * sinc(w * h));
            c.push(-w * s);
            d.push(sinc(w * h));
        }
    }
    Ok(PropagatorCache {
        n_beads: basis.n_beads(),
        h,
        a_hat: basis.conjugate_diagonal(&a),
        b_hat: basis.conjugate_diagonal(&b),
        c_hat: basis.conjugate_diagonal(&c),
        d_moll: basis.conjugate_diagonal(&d),
    })
}

#[inline]
pub(crate) fn mat_vec(mat: &[f64], v: &[f64], out: &mut [f64]) {
    let p = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &mat[i * p..(i + 1) * p];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

impl PropagatorCache {
    pub fn n_beads(&self) -> usize {
        self.n_beads
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Multiplies a per-bead vector by `B^(h)`.
    pub fn apply_bhat(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        mat_vec(&self.b_hat, v, &mut out);
        out
    }

    /// Applies the averaging operator to every dof row of `values` in place.
    pub fn mollify_in_place(&self, values: &mut [f64]) {
        let p = self.n_beads;
        let mut out = vec![0.0; p];
        for row in values.chunks_exact_mut(p) {
            mat_vec(&self.d_moll, row, &mut out);
            row.copy_from_slice(&out);
        }
    }

    /// Test hook: flips the sign of `C^`, breaking energy exactness.
    #[doc(hidden)]
    pub fn inject_chat_sign_error(&mut self) {
        for c in &mut self.c_hat {
            *c = -*c;
        }
    }
}

/// Averaged positions `U D(h) U^T x_j` for every degree of freedom.
pub fn mollify_positions(state: &RingPolymerState, cache: &PropagatorCache) -> Result<Vec<f64>> {
    if state.n_beads() != cache.n_beads() {
        return Err(Error::Dimension { expected: cache.n_beads(), found: state.n_beads() });
    }
    let mut out = state.positions.clone();
    cache.mollify_in_place(&mut out);
    Ok(out)
}

/// Exact free ring-polymer flow over the cache's step, in place:
/// `x <- A^ x + B^ p / m`, `p <- m C^ x + A^ p` using the old `x` in both.
pub fn propagate_free(state: &mut RingPolymerState, cache: &PropagatorCache, masses: &[f64]) -> Result<()> {
    if masses.len() != state.n_dof() {
        return Err(Error::Dimension { expected: state.n_dof(), found: masses.len() });
    }
    if state.n_beads() != cache.n_beads() {
        return Err(Error::Dimension { expected: cache.n_beads(), found: state.n_beads() });
    }
    propagate_rows(&mut state.positions, &mut state.momenta, cache, masses);
    state.time += cache.h;
    Ok(())
}

pub(crate) fn propagate_rows(positions: &mut [f64], momenta: &mut [f64], cache: &PropagatorCache, masses: &[f64]) {
    let p = cache.n_beads;
    let mut ax = vec![0.0; p];
    let mut bp = vec![0.0; p];
    let mut cx = vec![0.0; p];
    let mut ap = vec![0.0; p];
    for ((x, mom), &m) in positions.chunks_exact_mut(p).zip(momenta.chunks_exact_mut(p)).zip(masses) {
        mat_vec(&cache.a_hat, x, &mut ax);
        mat_vec(&cache.b_hat, mom, &mut bp);
        mat_vec(&cache.c_hat, x, &mut cx);
        mat_vec(&cache.a_hat, mom, &mut ap);
        for k in 0..p {
            x[k] = ax[k] + bp[k] / m;
            mom[k] = m * cx[k] + ap[k];
        }
    }
}

/// Kinetic and spring energy of the free ring polymer.
pub fn free_energy(state: &RingPolymerState, masses: &[f64], alpha: f64) -> (f64, f64) {
    let p = state.n_beads();
    let mut kinetic = 0.0;
    let mut spring = 0.0;
    for (dof, &m) in masses.iter().enumerate() {
        let x = &state.positions[dof * p..(dof + 1) * p];
        let mom = &state.momenta[dof * p..(dof + 1) * p];
        kinetic += mom.iter().map(|v| v * v).sum::<f64>() / (2.0 * m);
        if p > 1 {
            let s: f64 = (0..p)
                .map(|k| {
                    let d = x[k] - x[(k + p - 1) % p];
                    d * d
                })
                .sum();
            spring += 0.5 * m * alpha * alpha * s;
        }
    }
    (kinetic, spring)
}

/// Adds the explicit spring force `-m alpha^2 (2 x_k - x_{k-1} - x_{k+1})`.
pub fn add_spring_forces(positions: &[f64], n_beads: usize, masses: &[f64], alpha: f64, forces: &mut [f64]) {
    let p = n_beads;
    if p < 2 {
        return;
    }
    for (dof, &m) in masses.iter().enumerate() {
        let x = &positions[dof * p..(dof + 1) * p];
        let f = &mut forces[dof * p..(dof + 1) * p];
        let k_spring = m * alpha * alpha;
        for k in 0..p {
            f[k] -= k_spring * (2.0 * x[k] - x[(k + p - 1) % p] - x[(k + 1) % p]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Circulant form of `U diag(f(omega)) U^T`: entry `(j, l)` equals
    /// `(1/P) sum_k f_k cos(2 pi k (j - l) / P)` over Fourier wavenumbers.
    fn circulant_oracle(p: usize, alpha: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; p * p];
        for j in 0..p {
            for l in 0..p {
                let mut s = 0.0;
                for k in 0..p {
                    let w = 2.0 * alpha * (k as f64 * PI / p as f64).sin();
                    s += f(w) * (2.0 * PI * k as f64 * (j as f64 - l as f64) / p as f64).cos();
                }
                out[j * p + l] = s / p as f64;
            }
        }
        out
    }

    #[test]
    fn single_bead_basis() {
        let b = build_basis(1, 3.0).unwrap();
        assert_eq!(b.u(), &[1.0]);
        assert_eq!(b.omega(), &[0.0]);
    }

    #[test]
    fn two_bead_frequencies() {
        let b = build_basis(2, 2.0).unwrap();
        assert_eq!(b.omega()[0], 0.0);
        assert!((b.omega()[1] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn zero_beads_rejected() {
        assert!(build_basis(0, 1.0).is_err());
        assert!(build_basis(4, 0.0).is_err());
    }

    #[test]
    fn orthogonality() {
        for p in 1..=33 {
            let b = build_basis(p, 1.0).unwrap();
            let u = b.u();
            for a in 0..p {
                for c in 0..p {
                    let dot: f64 = (0..p).map(|j| u[j * p + a] * u[j * p + c]).sum();
                    let expected = if a == c { 1.0 } else { 0.0 };
                    assert!((dot - expected).abs() < 1e-12, "P={p} ({a},{c}) {dot}");
                }
            }
        }
    }

    #[test]
    fn matrices_match_circulant_oracle() {
        let (p, alpha, h) = (2, 2.0, 0.1);
        let basis = build_basis(p, alpha).unwrap();
        let cache = build_propagator(&basis, h).unwrap();
        let oracle = circulant_oracle(p, alpha, |w| (w * h).cos());
        // P = 2: A^ = 1/2 [[1 + cos 0.4, 1 - cos 0.4], [1 - cos 0.4, 1 + cos 0.4]]
        let c4 = 0.4f64.cos();
        assert!((cache.a_hat[0] - 0.5 * (1.0 + c4)).abs() < 1e-15);
        assert!((cache.a_hat[1] - 0.5 * (1.0 - c4)).abs() < 1e-15);
        for (a, b) in cache.a_hat.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-14);
        }
        for p in [3, 4, 7, 16] {
            let basis = build_basis(p, 1.7).unwrap();
            let cache = build_propagator(&basis, 0.3).unwrap();
            let b_oracle = circulant_oracle(p, 1.7, |w| if w == 0.0 { 0.3 } else { (w * 0.3).sin() / w });
            let c_oracle = circulant_oracle(p, 1.7, |w| -w * (w * 0.3).sin());
            for (a, b) in cache.b_hat.iter().zip(&b_oracle) {
                assert!((a - b).abs() < 1e-13);
            }
            for (a, b) in cache.c_hat.iter().zip(&c_oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn propagator_matrices_are_symmetric() {
        let basis = build_basis(8, 8.0).unwrap();
        let cache = build_propagator(&basis, 0.075).unwrap();
        for m in [&cache.a_hat, &cache.b_hat, &cache.c_hat, &cache.d_moll] {
            for i in 0..8 {
                for j in 0..8 {
                    assert!((m[i * 8 + j] - m[j * 8 + i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn small_step_limit() {
        let basis = build_basis(6, 6.0).unwrap();
        let h = 1e-8;
        let cache = build_propagator(&basis, h).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((cache.a_hat[i * 6 + j] - id).abs() < 1e-6);
                assert!((cache.b_hat[i * 6 + j] - h * id).abs() < 1e-6);
                assert!(cache.c_hat[i * 6 + j].abs() < 1e-6);
            }
        }
        assert!(build_propagator(&basis, 0.0).is_err());
    }

    #[test]
    fn single_bead_is_free_particle() {
        let basis = build_basis(1, 1.0).unwrap();
        let cache = build_propagator(&basis, 0.7).unwrap();
        let mut s = RingPolymerState::from_parts(2, 1, vec![1.0, -2.0], vec![3.0, 0.5]).unwrap();
        propagate_free(&mut s, &cache, &[2.0, 4.0]).unwrap();
        assert!((s.positions[0] - (1.0 + 0.7 * 3.0 / 2.0)).abs() < 1e-15);
        assert!((s.positions[1] - (-2.0 + 0.7 * 0.5 / 4.0)).abs() < 1e-15);
        assert_eq!(s.momenta, vec![3.0, 0.5]);
    }

    #[test]
    fn mollifier_damps_nonzero_mode() {
        let (alpha, h) = (2.0, 0.5);
        let basis = build_basis(2, alpha).unwrap();
        let cache = build_propagator(&basis, h).unwrap();
        // [1, -1] is the pure k = 1 mode with omega = 4.
        let s = RingPolymerState::from_parts(1, 2, vec![1.0, -1.0], vec![0.0; 2]).unwrap();
        let out = mollify_positions(&s, &cache).unwrap();
        let damp = (4.0f64 * 0.5).sin() / 2.0;
        assert!((damp - 0.4546487134128409).abs() < 1e-15);
        assert!((out[0] - damp).abs() < 1e-14);
        assert!((out[1] + damp).abs() < 1e-14);
        // centroid is untouched
        let s = RingPolymerState::from_parts(1, 2, vec![0.3, 0.3], vec![0.0; 2]).unwrap();
        let out = mollify_positions(&s, &cache).unwrap();
        assert!((out[0] - 0.3).abs() < 1e-15 && (out[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn bhat_on_constant_vector() {
        let basis = build_basis(5, 5.0).unwrap();
        let cache = build_propagator(&basis, 0.05).unwrap();
        let out = cache.apply_bhat(&[2.0; 5]);
        for v in out {
            assert!((v - 0.1).abs() < 1e-14);
        }
        let single = build_propagator(&build_basis(1, 1.0).unwrap(), 0.2).unwrap();
        assert_eq!(single.apply_bhat(&[3.0]), vec![3.0 * 0.2]);
    }

    #[test]
    fn sinc_filter_bound() {
        // |sinc(x)| <= |sinc(x/2)| on [0, 20]
        let n = 20000;
        for i in 0..=n {
            let x = 20.0 * i as f64 / n as f64;
            assert!(sinc(x).abs() <= sinc(x / 2.0).abs() + 1e-15, "x = {x}");
        }
    }

    #[test]
    fn spring_forces_are_energy_gradient() {
        let p = 5;
        let alpha = 3.0;
        let masses = [1.3, 0.7];
        let x: Vec<f64> = (0..2 * p).map(|i| ((i * 7) % 5) as f64 * 0.1 - 0.2).collect();
        let mut f = vec![0.0; 2 * p];
        add_spring_forces(&x, p, &masses, alpha, &mut f);
        let energy = |x: &[f64]| {
            let s = RingPolymerState::from_parts(2, p, x.to_vec(), vec![0.0; 2 * p]).unwrap();
            free_energy(&s, &masses, alpha).1
        };
        for i in 0..2 * p {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = -(energy(&xp) - energy(&xm)) / 2e-6;
            assert!((fd - f[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn two_bead_spring_energy() {
        let s = RingPolymerState::from_parts(1, 2, vec![0.0, 0.3], vec![0.0; 2]).unwrap();
        let (_, spring) = free_energy(&s, &[2.0], 4.0);
        // two wrap terms, each (m alpha^2 / 2) d^2
        assert!((spring - 2.0 * (2.0 * 16.0 / 2.0) * 0.09).abs() < 1e-12);
    }
}
