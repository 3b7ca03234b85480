//! System topology, units and the ring-polymer phase-space state.
//!
//! Layout: a state holds `n_dof` Cartesian degrees of freedom for each of
//! `n_beads` replicas. Arrays are dof-major, so the `P` bead values of one
//! degree of freedom are contiguous (`index = dof * n_beads + bead`). Site `i`
//! owns degrees of freedom `3i..3i+3`.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constraints::{project_momenta, ConstraintSet};
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

/// Closest admissible O-O distance for initial placement.
pub const MIN_PLACEMENT_DISTANCE: f64 = 1.5;

/// Unit system with `hbar` fixed to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedUnits {
    pub hbar: f64,
    pub beta: f64,
}

impl Default for ReducedUnits {
    fn default() -> Self {
        Self { hbar: 1.0, beta: 1.0 }
    }
}

impl ReducedUnits {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Validation { field: "beta", reason: "must be positive and finite" });
        }
        Ok(Self { hbar: 1.0, beta })
    }

    /// `beta / P`.
    pub fn beta_p(&self, n_beads: usize) -> f64 {
        self.beta / n_beads as f64
    }

    /// Spring frequency scale `P / (beta hbar)`.
    pub fn alpha(&self, n_beads: usize) -> f64 {
        n_beads as f64 / (self.beta * self.hbar)
    }
}

/// Rigid three-site water parameters. Defaults are SPC/E.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterModel {
    pub r_oh: f64,
    /// H-O-H angle in degrees.
    pub angle_hoh: f64,
    pub mass_o: f64,
    pub mass_h: f64,
    pub charge_o: f64,
    pub charge_h: f64,
}

impl Default for WaterModel {
    fn default() -> Self {
        Self { r_oh: 1.0, angle_hoh: 109.47, mass_o: 15.999, mass_h: 1.008, charge_o: -0.8476, charge_h: 0.4238 }
    }
}

impl WaterModel {
    /// H-H distance from the law of cosines on the isosceles triangle.
    pub fn l_hh(&self) -> f64 {
        2.0 * self.r_oh * libm::sin(self.angle_hoh.to_radians() / 2.0)
    }
}

/// A bond-length constraint between two sites of one molecule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintPair {
    pub site_a: usize,
    pub site_b: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n_molecules: usize,
    pub sites_per_molecule: usize,
    pub site_masses: Vec<f64>,
    pub site_charges: Vec<f64>,
    /// Per-molecule constraint list using molecule-local site indices.
    pub constraint_pairs: Vec<ConstraintPair>,
    pub cell_edge: f64,
}

/// Builds an `n_molecules` rigid-water topology. Sites are ordered O, H1, H2
/// and the constraints form the ring O-H1, H1-H2, H2-O.
pub fn build_water_topology(n_molecules: usize, cell_edge: f64, model: &WaterModel) -> Result<Topology> {
    if n_molecules == 0 {
        return Err(Error::Validation { field: "n_molecules", reason: "must be at least 1" });
    }
    if !(cell_edge > 0.0) {
        return Err(Error::Validation { field: "cell_edge", reason: "must be positive" });
    }
    if !(model.r_oh > 0.0) {
        return Err(Error::Validation { field: "r_oh", reason: "must be positive" });
    }
    // 180 degrees is accepted as the collinear limit.
    if !(model.angle_hoh > 0.0 && model.angle_hoh <= 180.0) {
        return Err(Error::Validation { field: "angle_hoh", reason: "must lie in (0, 180]" });
    }
    if !(model.mass_o > 0.0) {
        return Err(Error::Validation { field: "mass_o", reason: "must be positive" });
    }
    if !(model.mass_h > 0.0) {
        return Err(Error::Validation { field: "mass_h", reason: "must be positive" });
    }
    let l_hh = model.l_hh();
    let topology = Topology {
        n_molecules,
        sites_per_molecule: 3,
        site_masses: vec![model.mass_o, model.mass_h, model.mass_h],
        site_charges: vec![model.charge_o, model.charge_h, model.charge_h],
        constraint_pairs: vec![
            ConstraintPair { site_a: 0, site_b: 1, length: model.r_oh },
            ConstraintPair { site_a: 1, site_b: 2, length: l_hh },
            ConstraintPair { site_a: 2, site_b: 0, length: model.r_oh },
        ],
        cell_edge,
    };
    topology.validate()?;
    Ok(topology)
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        let n = self.sites_per_molecule;
        if self.site_masses.len() != n {
            return Err(Error::Dimension { expected: n, found: self.site_masses.len() });
        }
        if self.site_charges.len() != n {
            return Err(Error::Dimension { expected: n, found: self.site_charges.len() });
        }
        for pair in &self.constraint_pairs {
            if !(pair.length > 0.0) {
                return Err(Error::Validation { field: "constraint length", reason: "must be positive" });
            }
            if pair.site_a == pair.site_b || pair.site_a >= n || pair.site_b >= n {
                return Err(Error::Validation {
                    field: "constraint sites",
                    reason: "must be distinct and within the molecule",
                });
            }
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.n_molecules * self.sites_per_molecule
    }

    pub fn n_dof(&self) -> usize {
        3 * self.n_sites()
    }

    pub fn site_mass(&self, site: usize) -> f64 {
        self.site_masses[site % self.sites_per_molecule]
    }

    pub fn site_charge(&self, site: usize) -> f64 {
        self.site_charges[site % self.sites_per_molecule]
    }

    /// Mass of every Cartesian degree of freedom.
    pub fn dof_masses(&self) -> Vec<f64> {
        (0..self.n_dof()).map(|dof| self.site_mass(dof / 3)).collect()
    }

    /// Total mass of one molecule.
    pub fn molecule_mass(&self) -> f64 {
        self.site_masses.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingPolymerState {
    n_dof: usize,
    n_beads: usize,
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
    pub time: f64,
}

impl RingPolymerState {
    pub fn zeros(n_dof: usize, n_beads: usize) -> Self {
        Self { n_dof, n_beads, positions: vec![0.0; n_dof * n_beads], momenta: vec![0.0; n_dof * n_beads], time: 0.0 }
    }

    pub fn from_parts(n_dof: usize, n_beads: usize, positions: Vec<f64>, momenta: Vec<f64>) -> Result<Self> {
        let len = n_dof * n_beads;
        for v in [&positions, &momenta] {
            if v.len() != len {
                return Err(Error::Dimension { expected: len, found: v.len() });
            }
        }
        Ok(Self { n_dof, n_beads, positions, momenta, time: 0.0 })
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn n_beads(&self) -> usize {
        self.n_beads
    }

    #[inline]
    pub fn index(&self, dof: usize, bead: usize) -> usize {
        dof * self.n_beads + bead
    }

    pub fn site_position(&self, site: usize, bead: usize) -> Vec3 {
        site_vector(&self.positions, self.n_beads, site, bead)
    }

    pub fn site_momentum(&self, site: usize, bead: usize) -> Vec3 {
        site_vector(&self.momenta, self.n_beads, site, bead)
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.momenta).all(|v| v.is_finite())
    }

    /// Negates all momenta (time-reversal involution).
    pub fn flip_momenta(&mut self) {
        for p in &mut self.momenta {
            *p = -*p;
        }
    }

    /// Largest absolute difference over positions and momenta.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.positions
            .iter()
            .zip(&other.positions)
            .chain(self.momenta.iter().zip(&other.momenta))
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn site_vector(values: &[f64], n_beads: usize, site: usize, bead: usize) -> Vec3 {
    let base = 3 * site * n_beads + bead;
    [values[base], values[base + n_beads], values[base + 2 * n_beads]]
}

#[inline]
pub(crate) fn add_site_vector(values: &mut [f64], n_beads: usize, site: usize, bead: usize, v: Vec3) {
    let base = 3 * site * n_beads + bead;
    values[base] += v[0];
    values[base + n_beads] += v[1];
    values[base + 2 * n_beads] += v[2];
}

/// Places molecules on a cubic sub-lattice with random rigid orientations,
/// collapses every bead of a site onto one point and draws thermal momenta.
///
/// Momentum components are Gaussian with variance `temperature * m / beta_P`,
/// then projected onto the velocity-constraint tangent space with the
/// per-bead total linear momentum removed. The result depends only on the
/// arguments; the same seed yields a bit-identical state.
pub fn initialize_state(
    topology: &Topology,
    n_beads: usize,
    units: &ReducedUnits,
    temperature: f64,
    seed: u64,
) -> Result<RingPolymerState> {
    if n_beads == 0 {
        return Err(Error::Validation { field: "beads", reason: "must be at least 1" });
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::Validation { field: "temperature", reason: "must be non-negative" });
    }
    topology.validate()?;
    if topology.sites_per_molecule != 3 {
        return Err(Error::Validation { field: "sites_per_molecule", reason: "placement supports 3-site water" });
    }

    let n_side = cube_side(topology.n_molecules);
    let spacing = topology.cell_edge / n_side as f64;
    if spacing < MIN_PLACEMENT_DISTANCE {
        return Err(Error::Placement { min_distance: spacing, threshold: MIN_PLACEMENT_DISTANCE });
    }

    let r_oh = topology.constraint_pairs[0].length;
    let l_hh = topology.constraint_pairs[1].length;
    let half_angle = libm::asin((l_hh / (2.0 * r_oh)).min(1.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = RingPolymerState::zeros(topology.n_dof(), n_beads);

    for mol in 0..topology.n_molecules {
        let (ix, iy, iz) = (mol % n_side, (mol / n_side) % n_side, mol / (n_side * n_side));
        let oxygen = [(ix as f64 + 0.5) * spacing, (iy as f64 + 0.5) * spacing, (iz as f64 + 0.5) * spacing];
        let (u, v) = random_frame(&mut rng);
        let (c, s) = (libm::cos(half_angle), libm::sin(half_angle));
        let h1 = geom::add(oxygen, geom::scale(geom::add(geom::scale(u, c), geom::scale(v, s)), r_oh));
        let h2 = geom::add(oxygen, geom::scale(geom::sub(geom::scale(u, c), geom::scale(v, s)), r_oh));
        for (local, pos) in [oxygen, h1, h2].into_iter().enumerate() {
            let site = 3 * mol + local;
            for bead in 0..n_beads {
                let base = 3 * site * n_beads + bead;
                state.positions[base] = pos[0];
                state.positions[base + n_beads] = pos[1];
                state.positions[base + 2 * n_beads] = pos[2];
            }
        }
    }

    if temperature > 0.0 {
        let masses = topology.dof_masses();
        let beta_p = units.beta_p(n_beads);
        for (dof, &m) in masses.iter().enumerate() {
            let sigma = libm::sqrt(temperature * m / beta_p);
            for bead in 0..n_beads {
                let z: f64 = StandardNormal.sample(&mut rng);
                state.momenta[dof * n_beads + bead] = sigma * z;
            }
        }
        let constraints = ConstraintSet::from_topology(topology);
        project_momenta(&mut state, &constraints, &masses)?;
    }
    Ok(state)
}

fn cube_side(n: usize) -> usize {
    let mut side = 1;
    while side * side * side < n {
        side += 1;
    }
    side
}

/// Orthonormal pair `(u, v)` with `u` uniformly distributed on the sphere.
fn random_frame(rng: &mut ChaCha8Rng) -> (Vec3, Vec3) {
    let mut gaussian = || -> Vec3 {
        [StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)]
    };
    let u = loop {
        let g = gaussian();
        let n = geom::norm(g);
        if n > 1e-6 {
            break geom::scale(g, 1.0 / n);
        }
    };
    let v = loop {
        let g = gaussian();
        let w = geom::sub(g, geom::scale(u, geom::dot(g, u)));
        let n = geom::norm(w);
        if n > 1e-6 {
            break geom::scale(w, 1.0 / n);
        }
    };
    (u, v)
}
