//! Bond-length constraints on every bead.
//!
//! Two solver families live here:
//!
//! * the normal-mode solvers used by the trigonometric integrators, where a
//!   constraint impulse applied before the exact free flight moves the
//!   positions through `B^(h)` and so couples all beads of a molecule. The
//!   position multipliers of one molecule solve a dense `(M P) x (M P)`
//!   linearized system per Newton iteration;
//! * classic per-bead SHAKE / RATTLE (Gauss-Seidel over constraints) for the
//!   velocity-Verlet baseline.
//!
//! Residual arrays are laid out `[group][pair][bead]`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::normal_modes::{mat_vec, PropagatorCache};
use crate::state::{add_site_vector, site_vector, ConstraintPair, RingPolymerState, Topology};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Bound on `| |r_ab|^2 - l^2 |`.
    pub tol_g: f64,
    /// Bound on `| (v_a - v_b) . r_ab |`.
    pub tol_f: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol_g: 1e-10, tol_f: 1e-10, max_iter: 100 }
    }
}

/// Constraints of one rigid molecule. `pairs` index into `sites`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGroup {
    pub sites: Vec<usize>,
    pub pairs: Vec<ConstraintPair>,
}

impl ConstraintGroup {
    /// +1 if `local` is the first site of `pair`, -1 if the second, else 0.
    #[inline]
    fn incidence(pair: &ConstraintPair, local: usize) -> f64 {
        if pair.site_a == local {
            1.0
        } else if pair.site_b == local {
            -1.0
        } else {
            0.0
        }
    }

    /// Coefficient of multiplier `other` in the relative displacement of
    /// `pair`: the inverse reduced mass on the diagonal, `+-1/m` through a
    /// shared site.
    fn coupling(&self, pair: &ConstraintPair, other: &ConstraintPair, inv_mass: &[f64]) -> f64 {
        Self::incidence(other, pair.site_a) * inv_mass[pair.site_a]
            - Self::incidence(other, pair.site_b) * inv_mass[pair.site_b]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub groups: Vec<ConstraintGroup>,
}

impl ConstraintSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_topology(topology: &Topology) -> Self {
        let n = topology.sites_per_molecule;
        let groups = (0..topology.n_molecules)
            .map(|mol| ConstraintGroup {
                sites: (mol * n..(mol + 1) * n).collect(),
                pairs: topology.constraint_pairs.clone(),
            })
            .collect();
        Self { groups }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.iter().all(|g| g.pairs.is_empty())
    }

    pub fn n_pairs(&self) -> usize {
        self.groups.iter().map(|g| g.pairs.len()).sum()
    }
}

/// Outcome of one constraint solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub max_residual: f64,
    pub converged: bool,
}

impl SolveReport {
    fn merge(self, other: SolveReport) -> SolveReport {
        SolveReport {
            iterations: self.iterations.max(other.iterations),
            max_residual: self.max_residual.max(other.max_residual),
            converged: self.converged && other.converged,
        }
    }
}

/// Lagrange multipliers of one step, `[group][pair][bead]`.
///
/// `lambda_c` uses the convention that the position-constraint kick on site
/// `a` of pair `(a, b)` is `-h lambda r_ab(t_n)`; `lambda_cv` likewise for the
/// velocity kick with `r_ab(t_{n+1})`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultiplierSet {
    pub lambda_c: Vec<f64>,
    pub lambda_cv: Vec<f64>,
}

/// `|r_a - r_b|^2 - l^2` for every constraint and bead. No periodic wrapping.
pub fn residual_g(state: &RingPolymerState, constraints: &ConstraintSet) -> Vec<f64> {
    residual_g_raw(&state.positions, state.n_beads(), constraints)
}

pub(crate) fn residual_g_raw(positions: &[f64], n_beads: usize, constraints: &ConstraintSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(constraints.n_pairs() * n_beads);
    for group in &constraints.groups {
        for pair in &group.pairs {
            for bead in 0..n_beads {
                let d = pair_vector(positions, n_beads, group, pair, bead);
                out.push(geom::norm2(d) - pair.length * pair.length);
            }
        }
    }
    out
}

/// `(v_a - v_b) . (r_a - r_b)` for every constraint and bead.
pub fn residual_f(state: &RingPolymerState, constraints: &ConstraintSet, masses: &[f64]) -> Vec<f64> {
    residual_f_raw(&state.positions, &state.momenta, state.n_beads(), constraints, masses)
}

pub(crate) fn residual_f_raw(
    positions: &[f64],
    momenta: &[f64],
    n_beads: usize,
    constraints: &ConstraintSet,
    masses: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(constraints.n_pairs() * n_beads);
    for group in &constraints.groups {
        for pair in &group.pairs {
            let (sa, sb) = (group.sites[pair.site_a], group.sites[pair.site_b]);
            for bead in 0..n_beads {
                let d = pair_vector(positions, n_beads, group, pair, bead);
                let va = geom::scale(site_vector(momenta, n_beads, sa, bead), 1.0 / masses[3 * sa]);
                let vb = geom::scale(site_vector(momenta, n_beads, sb, bead), 1.0 / masses[3 * sb]);
                out.push(geom::dot(geom::sub(va, vb), d));
            }
        }
    }
    out
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
}

#[inline]
fn pair_vector(positions: &[f64], n_beads: usize, group: &ConstraintGroup, pair: &ConstraintPair, bead: usize) -> Vec3 {
    geom::sub(
        site_vector(positions, n_beads, group.sites[pair.site_a], bead),
        site_vector(positions, n_beads, group.sites[pair.site_b], bead),
    )
}

fn inverse_site_masses(group: &ConstraintGroup, masses: &[f64]) -> Vec<f64> {
    group.sites.iter().map(|&s| 1.0 / masses[3 * s]).collect()
}

fn lu_solve(matrix: DMatrix<f64>, rhs: DVector<f64>, group: usize) -> Result<DVector<f64>> {
    let solution = matrix.lu().solve(&rhs).ok_or(Error::Singular { group })?;
    if solution.iter().all(|v| v.is_finite()) {
        Ok(solution)
    } else {
        Err(Error::Singular { group })
    }
}

/// Result of the bead-coupled position solve for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPositionSolution {
    /// Momentum-kick multipliers `gamma`, `[pair][bead]`: site `a` of a pair
    /// receives `+gamma r_ab(t_n)`, site `b` the opposite.
    pub gamma: Vec<f64>,
    pub report: SolveReport,
}

/// Newton iteration for the position multipliers of one molecule.
///
/// `trial` holds the unconstrained free-flight positions of the whole system
/// and is corrected in place for this group's sites; `reference` holds the
/// `t_n` positions at which the constraint gradients are evaluated. The
/// correction of site `q`, component `s` is
/// `B^ (sum_c eps_cq gamma_c o r_c,s(t_n)) / m_q`. Each iteration solves the
/// system linearized in the multiplier increment, with blocks
/// `coupling(c, c') * sum_s 2 diag(r~_c,s) B^ diag(r_c',s(t_n))`.
#[allow(clippy::too_many_arguments)]
pub fn solve_position_multipliers(
    group_index: usize,
    group: &ConstraintGroup,
    cache: &PropagatorCache,
    masses: &[f64],
    trial: &mut [f64],
    reference: &[f64],
    tol_g: f64,
    max_iter: usize,
) -> Result<GroupPositionSolution> {
    let p = cache.n_beads();
    let n_pairs = group.pairs.len();
    let n_sites = group.sites.len();
    let dim = n_pairs * p;
    let inv_mass = inverse_site_masses(group, masses);

    // d_ref[(c * 3 + s) * p + k]
    let mut d_ref = vec![0.0; n_pairs * 3 * p];
    for (c, pair) in group.pairs.iter().enumerate() {
        for k in 0..p {
            let d = pair_vector(reference, p, group, pair, k);
            for s in 0..3 {
                d_ref[(c * 3 + s) * p + k] = d[s];
            }
        }
    }
    // cur[(q * 3 + s) * p + k]
    let mut cur = vec![0.0; n_sites * 3 * p];
    for (q, &site) in group.sites.iter().enumerate() {
        cur[q * 3 * p..(q + 1) * 3 * p].copy_from_slice(&trial[3 * site * p..3 * (site + 1) * p]);
    }

    let mut gamma = vec![0.0; dim];
    let mut d_cur = vec![0.0; n_pairs * 3 * p];
    let mut residual = vec![0.0; dim];
    let mut work = vec![0.0; p];
    let mut moved = vec![0.0; p];
    let mut iterations = 0;
    let max_residual = loop {
        let mut max_r: f64 = 0.0;
        for (c, pair) in group.pairs.iter().enumerate() {
            for k in 0..p {
                let mut r2 = 0.0;
                for s in 0..3 {
                    let d = cur[(pair.site_a * 3 + s) * p + k] - cur[(pair.site_b * 3 + s) * p + k];
                    d_cur[(c * 3 + s) * p + k] = d;
                    r2 += d * d;
                }
                let r = r2 - pair.length * pair.length;
                residual[c * p + k] = r;
                max_r = max_r.max(libm::fabs(r));
            }
        }
        if !max_r.is_finite() {
            return Err(Error::NonConvergence { group: group_index, iterations, max_residual: max_r });
        }
        if max_r < tol_g {
            break max_r;
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence { group: group_index, iterations, max_residual: max_r });
        }

        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for (c, pair) in group.pairs.iter().enumerate() {
            for (c2, other) in group.pairs.iter().enumerate() {
                let coef = group.coupling(pair, other, &inv_mass);
                if coef == 0.0 {
                    continue;
                }
                for k in 0..p {
                    for k2 in 0..p {
                        let b = cache.b_hat[k * p + k2];
                        let mut acc = 0.0;
                        for s in 0..3 {
                            acc += d_cur[(c * 3 + s) * p + k] * d_ref[(c2 * 3 + s) * p + k2];
                        }
                        jac[(c * p + k, c2 * p + k2)] = 2.0 * coef * b * acc;
                    }
                }
            }
        }
        let rhs = DVector::from_iterator(dim, residual.iter().map(|r| -r));
        let delta = lu_solve(jac, rhs, group_index)?;

        for (g, d) in gamma.iter_mut().zip(delta.iter()) {
            *g += d;
        }
        for q in 0..n_sites {
            for s in 0..3 {
                work.iter_mut().for_each(|w| *w = 0.0);
                for (c, pair) in group.pairs.iter().enumerate() {
                    let eps = ConstraintGroup::incidence(pair, q);
                    if eps == 0.0 {
                        continue;
                    }
                    for k in 0..p {
                        work[k] += eps * delta[c * p + k] * d_ref[(c * 3 + s) * p + k];
                    }
                }
                mat_vec(&cache.b_hat, &work, &mut moved);
                for k in 0..p {
                    cur[(q * 3 + s) * p + k] += moved[k] * inv_mass[q];
                }
            }
        }
        iterations += 1;
    };

    for (q, &site) in group.sites.iter().enumerate() {
        trial[3 * site * p..3 * (site + 1) * p].copy_from_slice(&cur[q * 3 * p..(q + 1) * 3 * p]);
    }
    Ok(GroupPositionSolution { gamma, report: SolveReport { iterations, max_residual, converged: true } })
}

/// Runs the bead-coupled position solve over all groups.
///
/// Corrects `trial` in place and adds the constraint kick (the momentum
/// change that produces the correction through the free flight) to
/// `impulse`. Returns `lambda_c` and the merged report.
pub fn solve_positions(
    constraints: &ConstraintSet,
    cache: &PropagatorCache,
    masses: &[f64],
    trial: &mut [f64],
    reference: &[f64],
    impulse: &mut [f64],
    tolerances: &Tolerances,
) -> Result<(Vec<f64>, SolveReport)> {
    let p = cache.n_beads();
    let mut report = SolveReport { iterations: 0, max_residual: 0.0, converged: true };
    let mut lambda = Vec::with_capacity(constraints.n_pairs() * p);
    for (gi, group) in constraints.groups.iter().enumerate() {
        let sol = solve_position_multipliers(
            gi,
            group,
            cache,
            masses,
            trial,
            reference,
            tolerances.tol_g,
            tolerances.max_iter,
        )?;
        for (c, pair) in group.pairs.iter().enumerate() {
            let (sa, sb) = (group.sites[pair.site_a], group.sites[pair.site_b]);
            for k in 0..p {
                let g = sol.gamma[c * p + k];
                let d = pair_vector(reference, p, group, pair, k);
                add_site_vector(impulse, p, sa, k, geom::scale(d, g));
                add_site_vector(impulse, p, sb, k, geom::scale(d, -g));
                lambda.push(-g / cache.h());
            }
        }
        report = report.merge(sol.report);
    }
    Ok((lambda, report))
}

/// Direct solve of the velocity multipliers of one group, in place.
///
/// The velocity kick `sigma_c r_c(t_{n+1})` does not pass through the free
/// flight, so the system is block-diagonal in the beads: one `M x M` solve
/// per bead with entries `coupling(c, c') r_c . r_c'`. Returns `sigma`,
/// `[pair][bead]`.
pub fn solve_velocity_multipliers(
    group_index: usize,
    group: &ConstraintGroup,
    masses: &[f64],
    positions: &[f64],
    momenta: &mut [f64],
    n_beads: usize,
) -> Result<Vec<f64>> {
    let m = group.pairs.len();
    let inv_mass = inverse_site_masses(group, masses);
    let mut sigma = vec![0.0; m * n_beads];
    let mut dirs = vec![[0.0; 3]; m];
    for k in 0..n_beads {
        for (c, pair) in group.pairs.iter().enumerate() {
            dirs[c] = pair_vector(positions, n_beads, group, pair, k);
        }
        let mut rhs = DVector::<f64>::zeros(m);
        let mut mat = DMatrix::<f64>::zeros(m, m);
        for (c, pair) in group.pairs.iter().enumerate() {
            let (sa, sb) = (group.sites[pair.site_a], group.sites[pair.site_b]);
            let va = geom::scale(site_vector(momenta, n_beads, sa, k), inv_mass[pair.site_a]);
            let vb = geom::scale(site_vector(momenta, n_beads, sb, k), inv_mass[pair.site_b]);
            rhs[c] = -geom::dot(geom::sub(va, vb), dirs[c]);
            for (c2, other) in group.pairs.iter().enumerate() {
                mat[(c, c2)] = group.coupling(pair, other, &inv_mass) * geom::dot(dirs[c], dirs[c2]);
            }
        }
        if rhs.iter().all(|v| *v == 0.0) {
            continue;
        }
        let sol = lu_solve(mat, rhs, group_index)?;
        for (c, pair) in group.pairs.iter().enumerate() {
            let kick = geom::scale(dirs[c], sol[c]);
            add_site_vector(momenta, n_beads, group.sites[pair.site_a], k, kick);
            add_site_vector(momenta, n_beads, group.sites[pair.site_b], k, geom::scale(kick, -1.0));
            sigma[c * n_beads + k] = sol[c];
        }
    }
    Ok(sigma)
}

/// Velocity projection of the whole system. Returns `lambda_cv`.
pub fn solve_velocities(
    constraints: &ConstraintSet,
    masses: &[f64],
    positions: &[f64],
    momenta: &mut [f64],
    n_beads: usize,
    h: f64,
) -> Result<Vec<f64>> {
    let mut lambda = Vec::with_capacity(constraints.n_pairs() * n_beads);
    for (gi, group) in constraints.groups.iter().enumerate() {
        let sigma = solve_velocity_multipliers(gi, group, masses, positions, momenta, n_beads)?;
        lambda.extend(sigma.iter().map(|s| -s / h));
    }
    Ok(lambda)
}

/// Projects momenta onto the velocity-constraint tangent space and removes
/// the total linear momentum of each bead. Idempotent.
pub fn project_momenta(state: &mut RingPolymerState, constraints: &ConstraintSet, masses: &[f64]) -> Result<()> {
    let p = state.n_beads();
    for (gi, group) in constraints.groups.iter().enumerate() {
        solve_velocity_multipliers(gi, group, masses, &state.positions, &mut state.momenta, p)?;
    }
    let n_sites = state.n_dof() / 3;
    let total_mass: f64 = (0..n_sites).map(|s| masses[3 * s]).sum();
    for k in 0..p {
        let mut total = [0.0; 3];
        for s in 0..n_sites {
            total = geom::add(total, site_vector(&state.momenta, p, s, k));
        }
        for s in 0..n_sites {
            let shift = geom::scale(total, -masses[3 * s] / total_mass);
            add_site_vector(&mut state.momenta, p, s, k, shift);
        }
    }
    Ok(())
}

/// Classic SHAKE: per-bead Gauss-Seidel sweeps over the constraints, moving
/// the `trial` positions along the `reference` bond vectors. Corrects `trial`
/// in place.
pub fn classic_shake(
    constraints: &ConstraintSet,
    masses: &[f64],
    trial: &mut [f64],
    reference: &[f64],
    n_beads: usize,
    tol_g: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let mut report = SolveReport { iterations: 0, max_residual: 0.0, converged: true };
    for (gi, group) in constraints.groups.iter().enumerate() {
        let inv_mass = inverse_site_masses(group, masses);
        for k in 0..n_beads {
            let mut sweeps = 0;
            loop {
                let mut worst: f64 = 0.0;
                for pair in &group.pairs {
                    let d = pair_vector(trial, n_beads, group, pair, k);
                    worst = worst.max(libm::fabs(geom::norm2(d) - pair.length * pair.length));
                }
                if worst < tol_g {
                    report.max_residual = report.max_residual.max(worst);
                    break;
                }
                if sweeps >= max_iter || !worst.is_finite() {
                    return Err(Error::NonConvergence { group: gi, iterations: sweeps, max_residual: worst });
                }
                for pair in &group.pairs {
                    let d = pair_vector(trial, n_beads, group, pair, k);
                    let diff = geom::norm2(d) - pair.length * pair.length;
                    let d0 = pair_vector(reference, n_beads, group, pair, k);
                    let inv_mu = inv_mass[pair.site_a] + inv_mass[pair.site_b];
                    let denom = 2.0 * inv_mu * geom::dot(d, d0);
                    if denom == 0.0 {
                        return Err(Error::Singular { group: gi });
                    }
                    let g = -diff / denom;
                    add_site_vector(
                        trial,
                        n_beads,
                        group.sites[pair.site_a],
                        k,
                        geom::scale(d0, g * inv_mass[pair.site_a]),
                    );
                    add_site_vector(
                        trial,
                        n_beads,
                        group.sites[pair.site_b],
                        k,
                        geom::scale(d0, -g * inv_mass[pair.site_b]),
                    );
                }
                sweeps += 1;
            }
            report.iterations = report.iterations.max(sweeps);
        }
    }
    Ok(report)
}

/// Classic RATTLE velocity stage: per-bead Gauss-Seidel sweeps until every
/// `|(v_a - v_b) . r_ab| < tol_f`.
pub fn classic_rattle_project(
    constraints: &ConstraintSet,
    masses: &[f64],
    positions: &[f64],
    momenta: &mut [f64],
    n_beads: usize,
    tol_f: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let mut report = SolveReport { iterations: 0, max_residual: 0.0, converged: true };
    for (gi, group) in constraints.groups.iter().enumerate() {
        let inv_mass = inverse_site_masses(group, masses);
        for k in 0..n_beads {
            let mut sweeps = 0;
            loop {
                let mut worst: f64 = 0.0;
                for pair in &group.pairs {
                    worst = worst
                        .max(libm::fabs(relative_velocity_dot(group, pair, positions, momenta, n_beads, k, &inv_mass)));
                }
                if worst < tol_f {
                    report.max_residual = report.max_residual.max(worst);
                    break;
                }
                if sweeps >= max_iter || !worst.is_finite() {
                    return Err(Error::NonConvergence { group: gi, iterations: sweeps, max_residual: worst });
                }
                for pair in &group.pairs {
                    let f = relative_velocity_dot(group, pair, positions, momenta, n_beads, k, &inv_mass);
                    let d = pair_vector(positions, n_beads, group, pair, k);
                    let inv_mu = inv_mass[pair.site_a] + inv_mass[pair.site_b];
                    let denom = inv_mu * geom::norm2(d);
                    if denom == 0.0 {
                        return Err(Error::Singular { group: gi });
                    }
                    let g = -f / denom;
                    add_site_vector(momenta, n_beads, group.sites[pair.site_a], k, geom::scale(d, g));
                    add_site_vector(momenta, n_beads, group.sites[pair.site_b], k, geom::scale(d, -g));
                }
                sweeps += 1;
            }
            report.iterations = report.iterations.max(sweeps);
        }
    }
    Ok(report)
}

fn relative_velocity_dot(
    group: &ConstraintGroup,
    pair: &ConstraintPair,
    positions: &[f64],
    momenta: &[f64],
    n_beads: usize,
    bead: usize,
    inv_mass: &[f64],
) -> f64 {
    let d = pair_vector(positions, n_beads, group, pair, bead);
    let va = geom::scale(site_vector(momenta, n_beads, group.sites[pair.site_a], bead), inv_mass[pair.site_a]);
    let vb = geom::scale(site_vector(momenta, n_beads, group.sites[pair.site_b], bead), inv_mass[pair.site_b]);
    geom::dot(geom::sub(va, vb), d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal_modes::{build_basis, build_propagator};
    use crate::state::{build_water_topology, initialize_state, ReducedUnits, WaterModel};

    fn water(n: usize, p: usize, seed: u64) -> (Topology, RingPolymerState) {
        let top = build_water_topology(n, 3.1 * (n as f64).cbrt().ceil(), &WaterModel::default()).unwrap();
        let s = initialize_state(&top, p, &ReducedUnits::default(), 1.0, seed).unwrap();
        (top, s)
    }

    #[test]
    fn stretched_bond_residual() {
        let top = build_water_topology(1, 10.0, &WaterModel::default()).unwrap();
        let mut s = initialize_state(&top, 1, &ReducedUnits::default(), 0.0, 0).unwrap();
        // move H1 radially so that |O-H1| = 1.1
        let o = s.site_position(0, 0);
        let h = s.site_position(1, 0);
        let dir = geom::sub(h, o);
        let new_h = geom::add(o, geom::scale(dir, 1.1));
        s.positions[3..6].copy_from_slice(&new_h);
        let cs = ConstraintSet::from_topology(&top);
        let g = residual_g(&s, &cs);
        assert!((g[0] - 0.21).abs() < 1e-12);
    }

    #[test]
    fn residual_is_local_to_bead() {
        let (top, mut s) = water(1, 3, 1);
        let cs = ConstraintSet::from_topology(&top);
        let idx = s.index(3, 1); // H1 x, bead 1
        s.positions[idx] += 0.05;
        let g = residual_g(&s, &cs);
        for (i, r) in g.iter().enumerate() {
            let (pair, bead) = (i / 3, i % 3);
            if bead == 1 && pair < 2 {
                assert!(r.abs() > 1e-4);
            } else {
                assert!(r.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn radial_velocity_residual() {
        let top = build_water_topology(1, 10.0, &WaterModel::default()).unwrap();
        let mut s = initialize_state(&top, 1, &ReducedUnits::default(), 0.0, 0).unwrap();
        let cs = ConstraintSet::from_topology(&top);
        let masses = top.dof_masses();
        assert!(residual_f(&s, &cs, &masses).iter().all(|&f| f == 0.0));
        // H1 moving along the bond at speed 0.5
        let dir = geom::sub(s.site_position(1, 0), s.site_position(0, 0));
        for (m, d) in s.momenta[3..6].iter_mut().zip(dir) {
            *m = 0.5 * d * masses[3];
        }
        let f = residual_f(&s, &cs, &masses);
        // (v_O - v_H) . (r_O - r_H) = v l for bond length 1
        assert!((f[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn satisfied_trial_is_untouched() {
        let (top, s) = water(2, 4, 2);
        let cs = ConstraintSet::from_topology(&top);
        let cache = build_propagator(&build_basis(4, 4.0).unwrap(), 0.05).unwrap();
        let mut trial = s.positions.clone();
        let sol = solve_position_multipliers(
            0,
            &cs.groups[0],
            &cache,
            &top.dof_masses(),
            &mut trial,
            &s.positions,
            1e-10,
            100,
        )
        .unwrap();
        assert_eq!(sol.report.iterations, 0);
        assert!(sol.gamma.iter().all(|&g| g == 0.0));
        assert_eq!(trial, s.positions);
    }

    #[test]
    fn collapsed_molecule_is_singular() {
        let top = build_water_topology(1, 10.0, &WaterModel::default()).unwrap();
        let cs = ConstraintSet::from_topology(&top);
        let masses = top.dof_masses();
        let reference = vec![0.0; 9];
        let mut trial = vec![0.1, 0.0, 0.0, 0.9, 0.0, 0.0, 0.0, 0.7, 0.0];
        let cache = build_propagator(&build_basis(1, 1.0).unwrap(), 0.1).unwrap();
        let err = solve_position_multipliers(0, &cs.groups[0], &cache, &masses, &mut trial, &reference, 1e-10, 50)
            .unwrap_err();
        assert!(err.is_constraint_failure());
    }

    #[test]
    fn velocity_projection_satisfies_hidden_constraint() {
        let (top, mut s) = water(3, 5, 4);
        let cs = ConstraintSet::from_topology(&top);
        let masses = top.dof_masses();
        for (i, p) in s.momenta.iter_mut().enumerate() {
            *p += ((i * 37 % 11) as f64 - 5.0) * 0.3;
        }
        assert!(max_abs(&residual_f(&s, &cs, &masses)) > 1e-3);
        let mut mom = s.momenta.clone();
        solve_velocities(&cs, &masses, &s.positions, &mut mom, 5, 0.1).unwrap();
        s.momenta = mom;
        assert!(max_abs(&residual_f(&s, &cs, &masses)) <= 1e-10);
        // already satisfied -> zero multipliers
        let mut mom = s.momenta.clone();
        let sigma = solve_velocities(&cs, &masses, &s.positions, &mut mom, 5, 0.1).unwrap();
        assert!(sigma.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn projection_is_idempotent() {
        let (top, mut s) = water(4, 3, 5);
        let cs = ConstraintSet::from_topology(&top);
        let masses = top.dof_masses();
        for (i, p) in s.momenta.iter_mut().enumerate() {
            *p += (i % 7) as f64 * 0.2;
        }
        project_momenta(&mut s, &cs, &masses).unwrap();
        let once = s.clone();
        project_momenta(&mut s, &cs, &masses).unwrap();
        assert!(once.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn two_body_shake_closed_form() {
        // one constraint between two point masses
        let cs = ConstraintSet {
            groups: vec![ConstraintGroup {
                sites: vec![0, 1],
                pairs: vec![ConstraintPair { site_a: 0, site_b: 1, length: 1.0 }],
            }],
        };
        let (ma, mb) = (2.0, 0.5);
        let masses = [ma, ma, ma, mb, mb, mb];
        let reference = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let mut trial = [0.1, 0.05, -0.02, 1.3, 0.2, 0.1];
        let d_t = [0.1 - 1.3, 0.05 - 0.2, -0.02 - 0.1];
        let d_0 = [-1.0, 0.0, 0.0];
        classic_shake(&cs, &masses, &mut trial, &reference, 1, 1e-14, 200).unwrap();
        // |d_t + t d_0|^2 = 1 with t = g (1/ma + 1/mb); root nearest zero
        let a = geom::norm2(d_0);
        let b = geom::dot(d_t, d_0);
        let c = geom::norm2(d_t) - 1.0;
        let disc = (b * b - a * c).sqrt();
        let (t1, t2) = ((-b + disc) / a, (-b - disc) / a);
        let t = if t1.abs() < t2.abs() { t1 } else { t2 };
        let g = t / (1.0 / ma + 1.0 / mb);
        let expected_a = [0.1 + g * d_0[0] / ma, 0.05, -0.02];
        let expected_b = [1.3 - g * d_0[0] / mb, 0.2, 0.1];
        for s in 0..3 {
            assert!((trial[s] - expected_a[s]).abs() < 1e-12);
            assert!((trial[3 + s] - expected_b[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_body_rattle_closed_form() {
        let cs = ConstraintSet {
            groups: vec![ConstraintGroup {
                sites: vec![0, 1],
                pairs: vec![ConstraintPair { site_a: 0, site_b: 1, length: 1.0 }],
            }],
        };
        let (ma, mb) = (3.0, 1.0);
        let masses = [ma, ma, ma, mb, mb, mb];
        let positions = [0.0, 0.0, 0.0, 0.6, 0.8, 0.0];
        let mut momenta = [0.3, -0.6, 0.9, 1.0, 0.5, -0.25];
        let original = momenta;
        classic_rattle_project(&cs, &masses, &positions, &mut momenta, 1, 1e-14, 100).unwrap();
        // closed form: g = -((v_a - v_b) . d) / ((1/ma + 1/mb) |d|^2)
        let d = [-0.6, -0.8, 0.0];
        let rel = [
            original[0] / ma - original[3] / mb,
            original[1] / ma - original[4] / mb,
            original[2] / ma - original[5] / mb,
        ];
        let g = -geom::dot(rel, d) / ((1.0 / ma + 1.0 / mb) * 1.0);
        for s in 0..3 {
            assert!((momenta[s] - (original[s] + g * d[s])).abs() < 1e-12);
            assert!((momenta[3 + s] - (original[3 + s] - g * d[s])).abs() < 1e-12);
        }
    }

    #[test]
    fn classic_shake_water_converges() {
        let (top, s) = water(1, 1, 9);
        let cs = ConstraintSet::from_topology(&top);
        let mut trial = s.positions.clone();
        for (i, x) in trial.iter_mut().enumerate() {
            *x += ((i * 13 % 7) as f64 - 3.0) * 1e-3;
        }
        let report = classic_shake(&cs, &top.dof_masses(), &mut trial, &s.positions, 1, 1e-10, 50).unwrap();
        assert!(report.iterations <= 50);
        let after = residual_g_raw(&trial, 1, &cs);
        assert!(max_abs(&after) < 1e-10);
    }
}
