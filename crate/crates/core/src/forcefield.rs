//! SPC/E intermolecular potential with a smooth fast/slow split.
//!
//! Pair terms are `Q Q' / r` between all site pairs of two molecules and
//! `A / r^12 - B / r^6` between oxygens (site 0). The Coulomb prefactor is
//! folded into the charges. A cubic switch `S(r)` assigns `V S` to the fast
//! part and `V (1 - S)` to the slow part, so the two always sum to the full
//! pair energy.
//!
//! Each bead interacts only with the same bead of other molecules.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::state::{add_site_vector, site_vector, Topology};

/// Sites closer than this are reported as overlapping.
pub const OVERLAP_DISTANCE: f64 = 1e-6;

/// A potential acting independently on every bead.
pub trait Potential {
    /// Adds `-grad V` to `forces` (same layout as `positions`) and returns
    /// `V` summed over beads.
    fn accumulate(&self, positions: &[f64], n_beads: usize, forces: &mut [f64]) -> Result<f64>;

    /// True when the potential is identically zero, so callers may skip it.
    fn is_zero(&self) -> bool {
        false
    }

    /// Energy and forces into a fresh array.
    fn evaluate(&self, positions: &[f64], n_beads: usize) -> Result<(f64, Vec<f64>)> {
        let mut forces = vec![0.0; positions.len()];
        let energy = self.accumulate(positions, n_beads, &mut forces)?;
        Ok((energy, forces))
    }
}

/// `V = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPotential;

impl Potential for NoPotential {
    fn accumulate(&self, _: &[f64], _: usize, _: &mut [f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn is_zero(&self) -> bool {
        true
    }
}

impl<T: Potential + ?Sized> Potential for &T {
    fn accumulate(&self, positions: &[f64], n_beads: usize, forces: &mut [f64]) -> Result<f64> {
        (**self).accumulate(positions, n_beads, forces)
    }

    fn is_zero(&self) -> bool {
        (**self).is_zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationMode {
    /// Direct displacements, no periodic images.
    None,
    /// Each molecule pair interacts through the image nearest in O-O distance.
    NearestImage,
    /// Nearest image, and molecule pairs with O-O distance beyond `r_cut`
    /// are dropped.
    Cutoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialPart {
    Full,
    Fast,
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairKind {
    /// Product of the two site charges.
    Coulomb {
        qq: f64,
    },
    LennardJones,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceFieldSpec {
    pub lj_a: f64,
    pub lj_b: f64,
    pub r_cut: f64,
    /// Healing length of the switch.
    pub delta_r: f64,
    /// When false the fast part is empty and the slow part is the full
    /// potential.
    pub split_enabled: bool,
    pub truncation: TruncationMode,
    /// Replaces the smooth switch by the indicator split
    /// `fast = V 1[r <= r_h]`, `slow = V 1[r > r_h]`.
    pub nonsmooth_split_radius: Option<f64>,
}

impl Default for ForceFieldSpec {
    fn default() -> Self {
        Self {
            lj_a: 2.633e6,
            lj_b: 2.617e3,
            r_cut: 8.0,
            delta_r: 4.5,
            split_enabled: false,
            truncation: TruncationMode::None,
            nonsmooth_split_radius: None,
        }
    }
}

impl ForceFieldSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lj_a > 0.0) {
            return Err(Error::Validation { field: "lj_a", reason: "must be positive" });
        }
        if !(self.lj_b > 0.0) {
            return Err(Error::Validation { field: "lj_b", reason: "must be positive" });
        }
        if !(self.r_cut > 0.0) {
            return Err(Error::Validation { field: "r_cut", reason: "must be positive" });
        }
        if !(self.delta_r > 0.0 && self.delta_r <= self.r_cut) {
            return Err(Error::Validation { field: "delta_r", reason: "must lie in (0, r_cut]" });
        }
        if let Some(rh) = self.nonsmooth_split_radius {
            if !(rh > 0.0) {
                return Err(Error::Validation { field: "nonsmooth_split_radius", reason: "must be positive" });
            }
        }
        Ok(())
    }

    /// Weight of `part` at distance `r` and its radial derivative.
    fn weight(&self, r: f64, part: PotentialPart) -> (f64, f64) {
        match part {
            PotentialPart::Full => (1.0, 0.0),
            _ if self.nonsmooth_split_radius.is_some() => {
                let inside = r <= self.nonsmooth_split_radius.unwrap_or(0.0);
                match (part, inside) {
                    (PotentialPart::Fast, true) | (PotentialPart::Slow, false) => (1.0, 0.0),
                    _ => (0.0, 0.0),
                }
            }
            PotentialPart::Fast if !self.split_enabled => (0.0, 0.0),
            PotentialPart::Slow if !self.split_enabled => (1.0, 0.0),
            PotentialPart::Fast => switch_with_derivative(r, self.r_cut, self.delta_r),
            PotentialPart::Slow => {
                let (s, ds) = switch_with_derivative(r, self.r_cut, self.delta_r);
                (1.0 - s, -ds)
            }
        }
    }
}

/// Cubic switch: 1 below `r_cut - delta_r`, `1 + R^2 (2R - 3)` across the
/// healing interval, 0 beyond `r_cut`. C1 at both ends.
pub fn switch(r: f64, r_cut: f64, delta_r: f64) -> f64 {
    switch_with_derivative(r, r_cut, delta_r).0
}

fn switch_with_derivative(r: f64, r_cut: f64, delta_r: f64) -> (f64, f64) {
    let r_on = r_cut - delta_r;
    if r < r_on {
        (1.0, 0.0)
    } else if r > r_cut {
        (0.0, 0.0)
    } else {
        let x = (r - r_on) / delta_r;
        (1.0 + x * x * (2.0 * x - 3.0), 6.0 * x * (x - 1.0) / delta_r)
    }
}

/// Energy of one site pair and the force on the first site; the second site
/// receives the opposite force. `r_vec` points from the second site to the
/// first.
pub fn pair_energy_force(
    r_vec: Vec3,
    kind: PairKind,
    spec: &ForceFieldSpec,
    part: PotentialPart,
) -> Result<(f64, Vec3)> {
    let r = geom::norm(r_vec);
    if r == 0.0 {
        return Err(Error::ZeroDistance);
    }
    let (v, dv) = match kind {
        PairKind::Coulomb { qq } => (qq / r, -qq / (r * r)),
        PairKind::LennardJones => {
            let inv6 = 1.0 / (r * r * r * r * r * r);
            let inv12 = inv6 * inv6;
            (spec.lj_a * inv12 - spec.lj_b * inv6, (-12.0 * spec.lj_a * inv12 + 6.0 * spec.lj_b * inv6) / r)
        }
    };
    let (w, dw) = spec.weight(r, part);
    let energy = v * w;
    let de_dr = dv * w + v * dw;
    Ok((energy, geom::scale(r_vec, -de_dr / r)))
}

/// SPC/E potential over a water topology. Site 0 of each molecule carries
/// the Lennard-Jones interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpcePotential {
    spec: ForceFieldSpec,
    n_molecules: usize,
    sites_per_molecule: usize,
    charges: Vec<f64>,
    cell_edge: f64,
    part: PotentialPart,
}

impl SpcePotential {
    pub fn new(topology: &Topology, spec: ForceFieldSpec, part: PotentialPart) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            n_molecules: topology.n_molecules,
            sites_per_molecule: topology.sites_per_molecule,
            charges: topology.site_charges.clone(),
            cell_edge: topology.cell_edge,
            part,
        })
    }

    pub fn spec(&self) -> &ForceFieldSpec {
        &self.spec
    }

    pub fn part(&self) -> PotentialPart {
        self.part
    }

    pub fn with_part(&self, part: PotentialPart) -> Self {
        Self { part, ..self.clone() }
    }
}

impl Potential for SpcePotential {
    fn is_zero(&self) -> bool {
        self.n_molecules < 2
            || (self.part == PotentialPart::Fast
                && !self.spec.split_enabled
                && self.spec.nonsmooth_split_radius.is_none())
    }

    fn accumulate(&self, positions: &[f64], n_beads: usize, forces: &mut [f64]) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let n = self.sites_per_molecule;
        let mut energy = 0.0;
        for bead in 0..n_beads {
            for mi in 0..self.n_molecules {
                for mj in mi + 1..self.n_molecules {
                    let (oi, oj) = (mi * n, mj * n);
                    let d_oo =
                        geom::sub(site_vector(positions, n_beads, oi, bead), site_vector(positions, n_beads, oj, bead));
                    let shift = match self.spec.truncation {
                        TruncationMode::None => [0.0; 3],
                        TruncationMode::NearestImage | TruncationMode::Cutoff => {
                            geom::sub(geom::minimum_image(d_oo, self.cell_edge), d_oo)
                        }
                    };
                    if self.spec.truncation == TruncationMode::Cutoff
                        && geom::norm(geom::add(d_oo, shift)) > self.spec.r_cut
                    {
                        continue;
                    }
                    for a in 0..n {
                        let ra = site_vector(positions, n_beads, oi + a, bead);
                        for b in 0..n {
                            let rb = site_vector(positions, n_beads, oj + b, bead);
                            let r_vec = geom::add(geom::sub(ra, rb), shift);
                            let dist = geom::norm(r_vec);
                            if dist < OVERLAP_DISTANCE {
                                return Err(Error::Overlap { site_a: oi + a, site_b: oj + b, bead, distance: dist });
                            }
                            let qq = self.charges[a] * self.charges[b];
                            let (mut e, mut f) =
                                pair_energy_force(r_vec, PairKind::Coulomb { qq }, &self.spec, self.part)?;
                            if a == 0 && b == 0 {
                                let (e_lj, f_lj) =
                                    pair_energy_force(r_vec, PairKind::LennardJones, &self.spec, self.part)?;
                                e += e_lj;
                                f = geom::add(f, f_lj);
                            }
                            energy += e;
                            add_site_vector(forces, n_beads, oi + a, bead, f);
                            add_site_vector(forces, n_beads, oj + b, bead, geom::scale(f, -1.0));
                        }
                    }
                }
            }
        }
        Ok(energy)
    }
}

/// Sum of two potentials.
#[derive(Debug, Clone, Copy)]
pub struct SumPotential<A, B>(pub A, pub B);

impl<A: Potential, B: Potential> Potential for SumPotential<A, B> {
    fn accumulate(&self, positions: &[f64], n_beads: usize, forces: &mut [f64]) -> Result<f64> {
        Ok(self.0.accumulate(positions, n_beads, forces)? + self.1.accumulate(positions, n_beads, forces)?)
    }

    fn is_zero(&self) -> bool {
        self.0.is_zero() && self.1.is_zero()
    }
}

/// Independent harmonic wells `k/2 (x - x0)^2` on every coordinate of every
/// bead. Useful as a smooth test potential.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicWell {
    /// Per-dof stiffness.
    pub stiffness: Vec<f64>,
    /// Per-dof rest position.
    pub center: Vec<f64>,
}

impl Potential for HarmonicWell {
    fn accumulate(&self, positions: &[f64], n_beads: usize, forces: &mut [f64]) -> Result<f64> {
        let mut energy = 0.0;
        for (dof, (&k, &c)) in self.stiffness.iter().zip(&self.center).enumerate() {
            for bead in 0..n_beads {
                let i = dof * n_beads + bead;
                let d = positions[i] - c;
                energy += 0.5 * k * d * d;
                forces[i] -= k * d;
            }
        }
        Ok(energy)
    }
}
