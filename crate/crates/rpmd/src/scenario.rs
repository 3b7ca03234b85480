//! Builds the water system, initial state and stepper of a configuration.

use rpmd_core::constraints::{ConstraintSet, SolveReport, Tolerances};
use rpmd_core::{
    build_water_topology, initialize_state, ForceFieldSpec, Integrator, PotentialPart, ReducedUnits, RingPolymerState,
    RunResult, SchemeConfig, SpcePotential, Topology, TraceMeta, WaterModel,
};

use crate::config::ScenarioConfig;
use crate::error::CliError;

pub type WaterIntegrator = Integrator<SpcePotential, SpcePotential>;

pub struct Scenario {
    pub config: ScenarioConfig,
    pub topology: Topology,
    pub state: RingPolymerState,
    pub integrator: WaterIntegrator,
}

/// Worst constraint-solver statistics over a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverStats {
    pub max_position_iterations: usize,
    pub max_position_residual: f64,
    pub max_velocity_residual: f64,
}

impl SolverStats {
    fn update(&mut self, position: &SolveReport, velocity: &SolveReport) {
        self.max_position_iterations = self.max_position_iterations.max(position.iterations);
        self.max_position_residual = self.max_position_residual.max(position.max_residual);
        self.max_velocity_residual = self.max_velocity_residual.max(velocity.max_residual);
    }
}

pub fn force_field_spec(config: &ScenarioConfig) -> ForceFieldSpec {
    ForceFieldSpec {
        r_cut: config.r_cut,
        delta_r: config.delta_r,
        split_enabled: config.split,
        truncation: config.truncation,
        nonsmooth_split_radius: config.nonsmooth_split_radius,
        ..ForceFieldSpec::default()
    }
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self, CliError> {
        config.validate()?;
        let topology = build_water_topology(config.molecules, config.cell_edge, &WaterModel::default())?;
        let units = ReducedUnits::new(config.beta)?;
        let state = initialize_state(&topology, config.beads, &units, config.temperature, config.seed)?;
        let spec = force_field_spec(config);
        let fast = SpcePotential::new(&topology, spec, PotentialPart::Fast)?;
        let slow = SpcePotential::new(&topology, spec, PotentialPart::Slow)?;
        let scheme =
            SchemeConfig { scheme: config.scheme, h: config.h, delta_h: config.delta_h, mollify: config.mollify };
        let tolerances = Tolerances { tol_g: config.tol_g, tol_f: config.tol_f, max_iter: config.max_iter };
        let integrator = Integrator::new(
            scheme,
            config.beads,
            units.alpha(config.beads),
            topology.dof_masses(),
            ConstraintSet::from_topology(&topology),
            tolerances,
            fast,
            slow,
        )?;
        Ok(Self { config: config.clone(), topology, state, integrator })
    }

    pub fn meta(&self) -> TraceMeta {
        TraceMeta {
            scheme: self.config.scheme.to_string(),
            h: self.config.h,
            delta_h: if self.config.scheme.is_multi_step() { self.config.delta_h } else { self.config.h },
            seed: self.config.seed,
            scenario: self.config.preset.to_string(),
        }
    }

    /// Runs the configured number of steps from the current state.
    pub fn run(&mut self) -> Result<(RunResult, SolverStats), CliError> {
        let meta = self.meta();
        let mut stats = SolverStats::default();
        let result = self.integrator.run_observed(
            &mut self.state,
            self.config.n_steps,
            self.config.record_every,
            meta,
            |_, _, outcome| stats.update(&outcome.position_report, &outcome.velocity_report),
        )?;
        Ok((result, stats))
    }
}
