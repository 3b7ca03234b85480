//! Time steppers for the constrained ring polymer.
//!
//! The trigonometric schemes treat the spring term exactly through the
//! normal-mode propagator and kick with the potential:
//!
//! * `ImpulseR`: half kick, constrained free flight, half kick, velocity
//!   projection;
//! * `MollyR`: as `ImpulseR` with forces `A F(A x)` from the averaging
//!   operator `A`;
//! * `Mts`: slow half kicks around `m` constrained inner steps driven by the
//!   fast force, then a velocity projection.
//!
//! The baselines integrate the springs as explicit forces:
//!
//! * `Rattle`: velocity Verlet with classic SHAKE / RATTLE;
//! * `RattleI`: slow half kicks around `m` inner `Rattle` steps.
//!
//! A stepper whose constraints fail to converge, whose sites overlap or
//! whose state turns non-finite returns a failed outcome and leaves the state
//! untouched.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::constraints::{
    classic_rattle_project, classic_shake, max_abs, residual_f_raw, residual_g_raw, solve_positions, solve_velocities,
    ConstraintSet, MultiplierSet, SolveReport, Tolerances,
};
use crate::diagnostics::{Energies, EnergyTrace, TraceMeta, TraceRow};
use crate::error::{Error, Result};
use crate::forcefield::Potential;
use crate::normal_modes::{
    add_spring_forces, build_basis, build_propagator, free_energy, propagate_rows, PropagatorCache,
};
use crate::state::RingPolymerState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    ImpulseR,
    MollyR,
    Mts,
    Rattle,
    RattleI,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::ImpulseR, Scheme::MollyR, Scheme::Mts, Scheme::Rattle, Scheme::RattleI];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ImpulseR => "impulse_r",
            Scheme::MollyR => "molly_r",
            Scheme::Mts => "mts",
            Scheme::Rattle => "rattle",
            Scheme::RattleI => "rattle_i",
        }
    }

    /// Schemes with an inner step `delta_h`.
    pub fn is_multi_step(self) -> bool {
        matches!(self, Scheme::Mts | Scheme::RattleI)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL.into_iter().find(|scheme| scheme.name() == s).ok_or(Error::Validation {
            field: "scheme",
            reason: "expected impulse_r, molly_r, mts, rattle or rattle_i",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Outer step.
    pub h: f64,
    /// Inner step of `Mts` and `RattleI`; ignored otherwise.
    pub delta_h: f64,
    /// `Mts` only: kick with the mollified slow force.
    pub mollify: bool,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, h: f64) -> Self {
        Self { scheme, h, delta_h: h, mollify: false }
    }

    pub fn with_inner(scheme: Scheme, h: f64, delta_h: f64) -> Self {
        Self { scheme, h, delta_h, mollify: false }
    }

    /// Number of inner steps per outer step, 1 for single-step schemes.
    pub fn inner_steps(&self) -> Result<usize> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Validation { field: "h", reason: "must be positive and finite" });
        }
        if !self.scheme.is_multi_step() {
            return Ok(1);
        }
        if !(self.delta_h > 0.0 && self.delta_h <= self.h) {
            return Err(Error::Validation { field: "delta_h", reason: "must lie in (0, h]" });
        }
        let ratio = self.h / self.delta_h;
        let m = libm::round(ratio);
        if libm::fabs(ratio - m) > 1e-9 * ratio {
            return Err(Error::Validation { field: "delta_h", reason: "h must be an integer multiple of delta_h" });
        }
        Ok(m as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.inner_steps().map(|_| ())
    }
}

/// Result of one outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Energies of the state after the step (NaN on failure).
    pub energies: Energies,
    /// Worst position solve over all inner steps.
    pub position_report: SolveReport,
    /// Velocity residual after the step.
    pub velocity_report: SolveReport,
    /// Multipliers of the last constrained trigonometric sub-step; empty for
    /// the explicit-spring schemes.
    pub multipliers: MultiplierSet,
    pub failure: Option<Error>,
}

impl StepOutcome {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// A step that ended a run early.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    /// Index of the step that failed (1-based; the state after step
    /// `step - 1` is the last good one).
    pub step: usize,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: EnergyTrace,
    pub steps_completed: usize,
    pub failure: Option<RunFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kick {
    Both,
    BothMollified,
    Fast,
    Slow,
    SlowMollified,
}

/// Last evaluation of one force, keyed by the exact positions.
#[derive(Debug, Clone, Default)]
struct ForceCache {
    key: Vec<f64>,
    forces: Vec<f64>,
    energy: f64,
    valid: bool,
}

impl ForceCache {
    fn lookup(
        &mut self,
        positions: &[f64],
        compute: impl FnOnce() -> Result<(f64, Vec<f64>)>,
    ) -> Result<(f64, &[f64])> {
        if !(self.valid && self.key == positions) {
            self.valid = false;
            let (energy, forces) = compute()?;
            self.key.clear();
            self.key.extend_from_slice(positions);
            self.forces = forces;
            self.energy = energy;
            self.valid = true;
        }
        Ok((self.energy, &self.forces))
    }
}

#[derive(Debug, Clone, Default)]
struct StepAccum {
    position: Option<SolveReport>,
    multipliers: MultiplierSet,
}

impl StepAccum {
    fn add_position(&mut self, report: SolveReport) {
        self.position = Some(match self.position {
            Some(prev) => SolveReport {
                iterations: prev.iterations.max(report.iterations),
                max_residual: prev.max_residual.max(report.max_residual),
                converged: prev.converged && report.converged,
            },
            None => report,
        });
    }
}

/// Stepper for one system: masses, constraints, the fast/slow potential pair
/// and the propagators of the outer and inner step.
///
/// With no fast/slow split, pass the full potential as `slow` and a zero
/// potential as `fast`. The single-step schemes kick with the sum.
#[derive(Debug, Clone)]
pub struct Integrator<F, S> {
    config: SchemeConfig,
    inner_steps: usize,
    n_beads: usize,
    alpha: f64,
    masses: Vec<f64>,
    constraints: ConstraintSet,
    tolerances: Tolerances,
    outer: PropagatorCache,
    inner: PropagatorCache,
    fast: F,
    slow: S,
    fast_cache: ForceCache,
    slow_cache: ForceCache,
    fast_moll_cache: ForceCache,
    slow_moll_cache: ForceCache,
}

impl<F: Potential, S: Potential> Integrator<F, S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        config: SchemeConfig,
        n_beads: usize,
        alpha: f64,
        masses: Vec<f64>,
        constraints: ConstraintSet,
        tolerances: Tolerances,
        fast: F,
        slow: S,
    ) -> Result<Self> {
        let inner_steps = config.inner_steps()?;
        if !(tolerances.tol_g > 0.0 && tolerances.tol_f > 0.0 && tolerances.max_iter > 0) {
            return Err(Error::Validation { field: "tolerances", reason: "tolerances and max_iter must be positive" });
        }
        let basis = build_basis(n_beads, alpha)?;
        let outer = build_propagator(&basis, config.h)?;
        let inner = if config.scheme.is_multi_step() {
            build_propagator(&basis, config.h / inner_steps as f64)?
        } else {
            outer.clone()
        };
        Ok(Self {
            config,
            inner_steps,
            n_beads,
            alpha,
            masses,
            constraints,
            tolerances,
            outer,
            inner,
            fast,
            slow,
            fast_cache: ForceCache::default(),
            slow_cache: ForceCache::default(),
            fast_moll_cache: ForceCache::default(),
            slow_moll_cache: ForceCache::default(),
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }

    pub fn outer_propagator(&self) -> &PropagatorCache {
        &self.outer
    }

    /// Test hook: corrupts both propagators (see
    /// [`PropagatorCache::inject_chat_sign_error`]).
    #[doc(hidden)]
    pub fn inject_chat_sign_error(&mut self) {
        self.outer.inject_chat_sign_error();
        self.inner.inject_chat_sign_error();
    }

    /// Energies of `state` with the unmollified fast + slow potential.
    pub fn energies(&mut self, state: &RingPolymerState) -> Result<Energies> {
        let (kinetic, spring) = free_energy(state, &self.masses, self.alpha);
        let potential = self.potential_energy(&state.positions)?;
        Ok(Energies { kinetic, spring, potential })
    }

    fn potential_energy(&mut self, positions: &[f64]) -> Result<f64> {
        let mut e = 0.0;
        if !self.fast.is_zero() {
            e += Self::plain(&mut self.fast_cache, &self.fast, positions, self.n_beads)?.0;
        }
        if !self.slow.is_zero() {
            e += Self::plain(&mut self.slow_cache, &self.slow, positions, self.n_beads)?.0;
        }
        Ok(e)
    }

    fn plain<'c, V: Potential>(
        cache: &'c mut ForceCache,
        pot: &V,
        positions: &[f64],
        p: usize,
    ) -> Result<(f64, &'c [f64])> {
        cache.lookup(positions, || pot.evaluate(positions, p))
    }

    fn mollified<'c, V: Potential>(
        cache: &'c mut ForceCache,
        pot: &V,
        averaging: &PropagatorCache,
        positions: &[f64],
        p: usize,
    ) -> Result<(f64, &'c [f64])> {
        cache.lookup(positions, || {
            let mut averaged = positions.to_vec();
            averaging.mollify_in_place(&mut averaged);
            let (e, mut f) = pot.evaluate(&averaged, p)?;
            averaging.mollify_in_place(&mut f);
            Ok((e, f))
        })
    }

    /// Adds `scale * F(positions)` of the selected force to `momenta`.
    fn kick(&mut self, kick: Kick, positions: &[f64], momenta: &mut [f64], scale: f64) -> Result<()> {
        let p = self.n_beads;
        let (use_fast, use_slow, moll) = match kick {
            Kick::Both => (true, true, false),
            Kick::BothMollified => (true, true, true),
            Kick::Fast => (true, false, false),
            Kick::Slow => (false, true, false),
            Kick::SlowMollified => (false, true, true),
        };
        if use_fast && !self.fast.is_zero() {
            let (_, f) = if moll {
                Self::mollified(&mut self.fast_moll_cache, &self.fast, &self.outer, positions, p)?
            } else {
                Self::plain(&mut self.fast_cache, &self.fast, positions, p)?
            };
            axpy(momenta, scale, f);
        }
        if use_slow && !self.slow.is_zero() {
            let (_, f) = if moll {
                Self::mollified(&mut self.slow_moll_cache, &self.slow, &self.outer, positions, p)?
            } else {
                Self::plain(&mut self.slow_cache, &self.slow, positions, p)?
            };
            axpy(momenta, scale, f);
        }
        Ok(())
    }

    /// Kick, constrained exact free flight, kick, velocity projection.
    fn trig_substep(
        &mut self,
        state: &mut RingPolymerState,
        use_inner: bool,
        kick: Kick,
        acc: &mut StepAccum,
    ) -> Result<()> {
        let p = self.n_beads;
        let h = if use_inner { self.inner.h() } else { self.outer.h() };
        self.kick(kick, &state.positions.clone(), &mut state.momenta, 0.5 * h)?;

        let cache = if use_inner { &self.inner } else { &self.outer };
        let mut lambda_c = Vec::new();
        if !self.constraints.is_empty() {
            let reference = state.positions.clone();
            let mut trial = state.positions.clone();
            let mut free_momenta = state.momenta.clone();
            propagate_rows(&mut trial, &mut free_momenta, cache, &self.masses);
            let mut impulse = vec![0.0; trial.len()];
            let (lambda, report) = solve_positions(
                &self.constraints,
                cache,
                &self.masses,
                &mut trial,
                &reference,
                &mut impulse,
                &self.tolerances,
            )?;
            axpy(&mut state.momenta, 1.0, &impulse);
            acc.add_position(report);
            lambda_c = lambda;
        }
        propagate_rows(&mut state.positions, &mut state.momenta, cache, &self.masses);
        state.time += h;

        self.kick(kick, &state.positions.clone(), &mut state.momenta, 0.5 * h)?;
        let lambda_cv = solve_velocities(&self.constraints, &self.masses, &state.positions, &mut state.momenta, p, h)?;
        acc.multipliers = MultiplierSet { lambda_c, lambda_cv };
        Ok(())
    }

    /// Velocity Verlet with explicit springs and classic SHAKE / RATTLE.
    fn rattle_substep(&mut self, state: &mut RingPolymerState, h: f64, kick: Kick, acc: &mut StepAccum) -> Result<()> {
        let p = self.n_beads;
        self.spring_kick(state, kick, 0.5 * h)?;

        let reference = state.positions.clone();
        let mut free = state.positions.clone();
        for (i, x) in free.iter_mut().enumerate() {
            *x += h * state.momenta[i] / self.masses[i / p];
        }
        let mut corrected = free.clone();
        if !self.constraints.is_empty() {
            let report = classic_shake(
                &self.constraints,
                &self.masses,
                &mut corrected,
                &reference,
                p,
                self.tolerances.tol_g,
                self.tolerances.max_iter,
            )?;
            acc.add_position(report);
            for (i, mom) in state.momenta.iter_mut().enumerate() {
                *mom += self.masses[i / p] * (corrected[i] - free[i]) / h;
            }
        }
        state.positions = corrected;
        state.time += h;

        self.spring_kick(state, kick, 0.5 * h)?;
        if !self.constraints.is_empty() {
            classic_rattle_project(
                &self.constraints,
                &self.masses,
                &state.positions,
                &mut state.momenta,
                p,
                self.tolerances.tol_f,
                self.tolerances.max_iter,
            )?;
        }
        Ok(())
    }

    fn spring_kick(&mut self, state: &mut RingPolymerState, kick: Kick, scale: f64) -> Result<()> {
        let mut springs = vec![0.0; state.positions.len()];
        add_spring_forces(&state.positions, self.n_beads, &self.masses, self.alpha, &mut springs);
        axpy(&mut state.momenta, scale, &springs);
        self.kick(kick, &state.positions.clone(), &mut state.momenta, scale)
    }

    fn project_velocities(&mut self, state: &mut RingPolymerState, classic: bool) -> Result<()> {
        if self.constraints.is_empty() {
            return Ok(());
        }
        let p = self.n_beads;
        if classic {
            classic_rattle_project(
                &self.constraints,
                &self.masses,
                &state.positions,
                &mut state.momenta,
                p,
                self.tolerances.tol_f,
                self.tolerances.max_iter,
            )?;
        } else {
            solve_velocities(&self.constraints, &self.masses, &state.positions, &mut state.momenta, p, self.outer.h())?;
        }
        Ok(())
    }

    fn advance(&mut self, state: &mut RingPolymerState, acc: &mut StepAccum) -> Result<()> {
        let h = self.config.h;
        match self.config.scheme {
            Scheme::ImpulseR => self.trig_substep(state, false, Kick::Both, acc),
            Scheme::MollyR => self.trig_substep(state, false, Kick::BothMollified, acc),
            Scheme::Mts => {
                let slow = if self.config.mollify { Kick::SlowMollified } else { Kick::Slow };
                self.kick(slow, &state.positions.clone(), &mut state.momenta, 0.5 * h)?;
                for _ in 0..self.inner_steps {
                    self.trig_substep(state, true, Kick::Fast, acc)?;
                }
                self.kick(slow, &state.positions.clone(), &mut state.momenta, 0.5 * h)?;
                self.project_velocities(state, false)
            }
            Scheme::Rattle => self.rattle_substep(state, h, Kick::Both, acc),
            Scheme::RattleI => {
                let dh = self.inner.h();
                self.kick(Kick::Slow, &state.positions.clone(), &mut state.momenta, 0.5 * h)?;
                for _ in 0..self.inner_steps {
                    self.rattle_substep(state, dh, Kick::Fast, acc)?;
                }
                self.kick(Kick::Slow, &state.positions.clone(), &mut state.momenta, 0.5 * h)?;
                self.project_velocities(state, true)
            }
        }
    }

    /// One outer step in place. Trajectory failures are reported in the
    /// outcome with `state` restored; only invalid input is an `Err`.
    pub fn step(&mut self, state: &mut RingPolymerState) -> Result<StepOutcome> {
        let len = self.masses.len() * self.n_beads;
        if state.n_beads() != self.n_beads {
            return Err(Error::Dimension { expected: self.n_beads, found: state.n_beads() });
        }
        if state.positions.len() != len {
            return Err(Error::Dimension { expected: len, found: state.positions.len() });
        }
        let backup = state.clone();
        let mut acc = StepAccum::default();
        let result = self
            .advance(state, &mut acc)
            .and_then(|_| if state.is_finite() { Ok(()) } else { Err(Error::NonFinite) })
            .and_then(|_| self.energies(state));
        match result {
            Ok(energies) => {
                let p = self.n_beads;
                let max_f =
                    max_abs(&residual_f_raw(&state.positions, &state.momenta, p, &self.constraints, &self.masses));
                Ok(StepOutcome {
                    energies,
                    position_report: acc.position.unwrap_or(SolveReport {
                        iterations: 0,
                        max_residual: 0.0,
                        converged: true,
                    }),
                    velocity_report: SolveReport {
                        iterations: 1,
                        max_residual: max_f,
                        converged: max_f <= self.tolerances.tol_f,
                    },
                    multipliers: acc.multipliers,
                    failure: None,
                })
            }
            Err(e) if e.is_step_failure() => {
                *state = backup;
                Ok(StepOutcome {
                    energies: Energies::nan(),
                    position_report: acc.position.unwrap_or_default(),
                    velocity_report: SolveReport::default(),
                    multipliers: MultiplierSet::default(),
                    failure: Some(e),
                })
            }
            Err(e) => {
                *state = backup;
                Err(e)
            }
        }
    }

    /// Steps and returns an error on any failure.
    pub fn step_strict(&mut self, state: &mut RingPolymerState) -> Result<()> {
        match self.step(state)?.failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Trace row of the current state.
    pub fn record(&mut self, step: usize, state: &RingPolymerState) -> Result<TraceRow> {
        let energies = self.energies(state)?;
        let p = self.n_beads;
        let max_g = max_abs(&residual_g_raw(&state.positions, p, &self.constraints));
        let max_f = max_abs(&residual_f_raw(&state.positions, &state.momenta, p, &self.constraints, &self.masses));
        Ok(TraceRow::new(step, state.time, energies, max_g, max_f))
    }

    /// Runs `n_steps`, recording the initial state and every
    /// `record_every`-th step. A failing step stops the run; the trace up to
    /// the failure is kept.
    pub fn run(
        &mut self,
        state: &mut RingPolymerState,
        n_steps: usize,
        record_every: usize,
        meta: TraceMeta,
    ) -> Result<RunResult> {
        self.run_observed(state, n_steps, record_every, meta, |_, _, _| {})
    }

    /// As [`Integrator::run`], calling `observer` after every successful
    /// step with the step index, the new state and the step outcome.
    pub fn run_observed(
        &mut self,
        state: &mut RingPolymerState,
        n_steps: usize,
        record_every: usize,
        meta: TraceMeta,
        mut observer: impl FnMut(usize, &RingPolymerState, &StepOutcome),
    ) -> Result<RunResult> {
        if record_every == 0 {
            return Err(Error::Validation { field: "record_every", reason: "must be at least 1" });
        }
        let mut trace = EnergyTrace::new(meta);
        trace.push(self.record(0, state)?)?;
        for step in 1..=n_steps {
            let outcome = self.step(state)?;
            if let Some(error) = outcome.failure {
                return Ok(RunResult { trace, steps_completed: step - 1, failure: Some(RunFailure { step, error }) });
            }
            observer(step, state, &outcome);
            if step % record_every == 0 {
                trace.push(self.record(step, state)?)?;
            }
        }
        Ok(RunResult { trace, steps_completed: n_steps, failure: None })
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
