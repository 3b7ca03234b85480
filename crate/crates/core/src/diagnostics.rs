//! Ring-polymer energy, energy traces and stability metrics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::forcefield::Potential;
use crate::normal_modes::free_energy;
use crate::state::RingPolymerState;

/// Components of the ring-polymer Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Energies {
    pub kinetic: f64,
    pub spring: f64,
    pub potential: f64,
}

impl Energies {
    pub fn total(&self) -> f64 {
        self.kinetic + self.spring + self.potential
    }

    pub fn nan() -> Self {
        Self { kinetic: f64::NAN, spring: f64::NAN, potential: f64::NAN }
    }
}

/// Kinetic energy, cyclic spring energy and the per-bead potential summed
/// over beads.
pub fn hamiltonian<V: Potential>(
    state: &RingPolymerState,
    masses: &[f64],
    alpha: f64,
    potential: &V,
) -> Result<Energies> {
    if masses.len() != state.n_dof() {
        return Err(Error::Dimension { expected: state.n_dof(), found: masses.len() });
    }
    let (kinetic, spring) = free_energy(state, masses, alpha);
    let potential = if potential.is_zero() { 0.0 } else { potential.evaluate(&state.positions, state.n_beads())?.0 };
    Ok(Energies { kinetic, spring, potential })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub kinetic: f64,
    pub spring: f64,
    pub potential: f64,
    pub total: f64,
    /// Largest `| |r_ab|^2 - l^2 |` over constraints and beads.
    pub max_g: f64,
    /// Largest `| (v_a - v_b) . r_ab |` over constraints and beads.
    pub max_f: f64,
}

impl TraceRow {
    pub fn new(step: usize, time: f64, energies: Energies, max_g: f64, max_f: f64) -> Self {
        Self {
            step,
            time,
            kinetic: energies.kinetic,
            spring: energies.spring,
            potential: energies.potential,
            total: energies.total(),
            max_g,
            max_f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceMeta {
    pub scheme: String,
    pub h: f64,
    pub delta_h: f64,
    pub seed: u64,
    pub scenario: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyTrace {
    pub meta: TraceMeta,
    rows: Vec<TraceRow>,
}

impl EnergyTrace {
    pub fn new(meta: TraceMeta) -> Self {
        Self { meta, rows: Vec::new() }
    }

    /// Builds a trace from rows, checking that step indices increase.
    pub fn from_rows(meta: TraceMeta, rows: Vec<TraceRow>) -> Result<Self> {
        let mut trace = Self::new(meta);
        for row in rows {
            trace.push(row)?;
        }
        Ok(trace)
    }

    pub fn push(&mut self, row: TraceRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.step <= last.step {
                return Err(Error::Validation { field: "step", reason: "trace steps must be strictly increasing" });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest `|E(i) - E(0)|` over the trace.
    pub fn max_energy_error(&self) -> f64 {
        match self.rows.first() {
            Some(first) => self.rows.iter().map(|r| libm::fabs(r.total - first.total)).fold(0.0, f64::max),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMetrics {
    /// Least-squares slope of the total energy against time.
    pub slope: f64,
    /// `slope / K` with `K` the trace mean of the kinetic energy.
    pub drift: f64,
    /// Mean squared residual of the linear fit.
    pub noise: f64,
    /// Mean of `|E(i) - E(0)|` over the rows after the first.
    pub delta_e: f64,
    /// `delta_e / K`.
    pub delta_e_r: f64,
    pub mean_kinetic: f64,
}

/// Drift, noise and mean energy deviation of a trace. Ratios to `K` are NaN
/// when the mean kinetic energy vanishes.
pub fn compute_metrics(trace: &EnergyTrace) -> Result<StabilityMetrics> {
    let rows = trace.rows();
    if rows.len() < 2 {
        return Err(Error::TraceTooShort(rows.len()));
    }
    let n = rows.len() as f64;
    let t_mean = rows.iter().map(|r| r.time).sum::<f64>() / n;
    let e_mean = rows.iter().map(|r| r.total).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut ste = 0.0;
    for r in rows {
        let dt = r.time - t_mean;
        stt += dt * dt;
        ste += dt * (r.total - e_mean);
    }
    if !(stt > 0.0) {
        return Err(Error::Validation { field: "time", reason: "trace times must not all coincide" });
    }
    let slope = ste / stt;
    let noise = rows
        .iter()
        .map(|r| {
            let res = r.total - e_mean - slope * (r.time - t_mean);
            res * res
        })
        .sum::<f64>()
        / n;
    let e0 = rows[0].total;
    let delta_e = rows[1..].iter().map(|r| libm::fabs(r.total - e0)).sum::<f64>() / (n - 1.0);
    let mean_kinetic = rows.iter().map(|r| r.kinetic).sum::<f64>() / n;
    let ratio = |v: f64| if mean_kinetic != 0.0 { v / mean_kinetic } else { f64::NAN };
    Ok(StabilityMetrics { slope, drift: ratio(slope), noise, delta_e, delta_e_r: ratio(delta_e), mean_kinetic })
}

/// Runs `n_steps` forward, flips momenta, runs `n_steps` again and flips
/// back. Returns the largest deviation from the starting phase point.
pub fn reversibility_defect(
    mut step: impl FnMut(&mut RingPolymerState) -> Result<()>,
    state: &RingPolymerState,
    n_steps: usize,
) -> Result<f64> {
    let mut s = state.clone();
    for _ in 0..n_steps {
        step(&mut s)?;
    }
    s.flip_momenta();
    for _ in 0..n_steps {
        step(&mut s)?;
    }
    s.flip_momenta();
    Ok(s.max_abs_diff(state))
}

/// `max |J^T S J - S|` for the one-step map on a flat phase vector
/// `z = (x, p)`, with `J` from central differences of step `fd_step` and
/// `S` the canonical structure matrix `[[0, I], [-I, 0]]`.
pub fn symplecticity_defect(mut map: impl FnMut(&[f64]) -> Result<Vec<f64>>, z0: &[f64], fd_step: f64) -> Result<f64> {
    let dim = z0.len();
    if !dim.is_multiple_of(2) {
        return Err(Error::Dimension { expected: dim + 1, found: dim });
    }
    let half = dim / 2;
    // column j of the Jacobian
    let mut jac = vec![0.0; dim * dim];
    let mut z = z0.to_vec();
    for j in 0..dim {
        z[j] = z0[j] + fd_step;
        let plus = map(&z)?;
        z[j] = z0[j] - fd_step;
        let minus = map(&z)?;
        z[j] = z0[j];
        if plus.len() != dim || minus.len() != dim {
            return Err(Error::Dimension { expected: dim, found: plus.len() });
        }
        for i in 0..dim {
            jac[i * dim + j] = (plus[i] - minus[i]) / (2.0 * fd_step);
        }
    }
    let structure = |i: usize, k: usize| -> f64 {
        if i < half && k == i + half {
            1.0
        } else if i >= half && k + half == i {
            -1.0
        } else {
            0.0
        }
    };
    // (J^T S J)_{ab} = sum_{i,k} J_{ia} S_{ik} J_{kb}; S has one entry per row
    let mut defect: f64 = 0.0;
    for a in 0..dim {
        for b in 0..dim {
            let mut s = 0.0;
            for i in 0..half {
                s += jac[i * dim + a] * jac[(i + half) * dim + b] - jac[(i + half) * dim + a] * jac[i * dim + b];
            }
            defect = defect.max(libm::fabs(s - structure(a, b)));
        }
    }
    Ok(defect)
}
