#![allow(dead_code)]

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rpmd_core::constraints::Tolerances;
use rpmd_core::{
    build_water_topology, initialize_state, ConstraintSet, ForceFieldSpec, Integrator, Potential, PotentialPart,
    ReducedUnits, RingPolymerState, SchemeConfig, SpcePotential, Topology, WaterModel,
};

pub const TIGHT: Tolerances = Tolerances { tol_g: 1e-12, tol_f: 1e-12, max_iter: 200 };

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Unconstrained state with Gaussian positions and momenta.
pub fn random_state(n_dof: usize, n_beads: usize, seed: u64) -> RingPolymerState {
    let mut r = rng(seed);
    let x = normals(&mut r, n_dof * n_beads);
    let p = normals(&mut r, n_dof * n_beads);
    RingPolymerState::from_parts(n_dof, n_beads, x, p).unwrap()
}

pub fn water(n_molecules: usize, cell_edge: f64, n_beads: usize, seed: u64) -> (Topology, RingPolymerState) {
    let top = build_water_topology(n_molecules, cell_edge, &WaterModel::default()).unwrap();
    let state = initialize_state(&top, n_beads, &ReducedUnits::default(), 1.0, seed).unwrap();
    (top, state)
}

/// Spreads the beads of every site around its initial point, keeping each
/// bead's molecule rigid by rotating copies of the molecule.
pub fn spread_beads(top: &Topology, state: &mut RingPolymerState, amplitude: f64, seed: u64) {
    let mut r = rng(seed);
    let p = state.n_beads();
    for mol in 0..top.n_molecules {
        for k in 0..p {
            let shift = normals(&mut r, 3);
            for local in 0..3 {
                let site = mol * 3 + local;
                for (s, d) in shift.iter().enumerate() {
                    state.positions[(3 * site + s) * p + k] += amplitude * d;
                }
            }
        }
    }
}

pub fn water_integrator(
    top: &Topology,
    n_beads: usize,
    config: SchemeConfig,
    spec: ForceFieldSpec,
) -> Integrator<SpcePotential, SpcePotential> {
    let fast = SpcePotential::new(top, spec, PotentialPart::Fast).unwrap();
    let slow = SpcePotential::new(top, spec, PotentialPart::Slow).unwrap();
    Integrator::new(
        config,
        n_beads,
        ReducedUnits::default().alpha(n_beads),
        top.dof_masses(),
        ConstraintSet::from_topology(top),
        TIGHT,
        fast,
        slow,
    )
    .unwrap()
}

pub fn toy_integrator<F: Potential, S: Potential>(
    n_dof: usize,
    n_beads: usize,
    config: SchemeConfig,
    fast: F,
    slow: S,
) -> Integrator<F, S> {
    Integrator::new(config, n_beads, n_beads as f64, vec![1.5; n_dof], ConstraintSet::empty(), TIGHT, fast, slow)
        .unwrap()
}

/// Central-difference gradient check; returns the worst error relative to
/// `max(|f|, 1)`.
pub fn fd_force_error(energy: impl Fn(&[f64]) -> f64, forces: &[f64], x: &[f64], step: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + step;
        let ep = energy(&y);
        y[i] = x[i] - step;
        let em = energy(&y);
        y[i] = x[i];
        let fd = -(ep - em) / (2.0 * step);
        worst = worst.max((fd - forces[i]).abs() / forces[i].abs().max(1.0));
    }
    worst
}

/// Rigid two-molecule configuration with random orientations at O-O
/// distance `r_oo` along a random direction, inside a large cell.
pub fn two_molecules(r_oo: f64, n_beads: usize, seed: u64) -> (Topology, RingPolymerState) {
    let top = build_water_topology(2, 40.0, &WaterModel::default()).unwrap();
    let mut state = initialize_state(&top, n_beads, &ReducedUnits::default(), 1.0, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let dir = normals(&mut r, 3);
    let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let p = n_beads;
    let o0: Vec<f64> = (0..3).map(|s| state.positions[s * p]).collect();
    let o1: Vec<f64> = (0..3).map(|s| state.positions[(9 + s) * p]).collect();
    for s in 0..3 {
        let shift = o0[s] + r_oo * dir[s] / n - o1[s];
        for site in 3..6 {
            for k in 0..p {
                state.positions[(3 * site + s) * p + k] += shift;
            }
        }
    }
    (top, state)
}

/// Anharmonic test potential `sum a x^2 / 2 + b x^4 / 4` per dof and bead,
/// plus a coupling `c x_0 x_1` between the first two dofs.
#[derive(Debug, Clone, Copy)]
pub struct Anharmonic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Potential for Anharmonic {
    fn accumulate(&self, positions: &[f64], n_beads: usize, forces: &mut [f64]) -> rpmd_core::Result<f64> {
        let mut e = 0.0;
        for (i, &x) in positions.iter().enumerate() {
            e += 0.5 * self.a * x * x + 0.25 * self.b * x.powi(4);
            forces[i] -= self.a * x + self.b * x.powi(3);
        }
        if positions.len() >= 2 * n_beads {
            for k in 0..n_beads {
                let (x0, x1) = (positions[k], positions[n_beads + k]);
                e += self.c * x0 * x1;
                forces[k] -= self.c * x1;
                forces[n_beads + k] -= self.c * x0;
            }
        }
        Ok(e)
    }
}
