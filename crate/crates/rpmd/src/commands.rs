//! The `run`, `analyze` and `selftest` commands.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rpmd_core::constraints::{classic_shake, residual_g, solve_positions, ConstraintSet, Tolerances};
use rpmd_core::diagnostics::reversibility_defect;
use rpmd_core::normal_modes::{free_energy, propagate_free};
use rpmd_core::{
    build_basis, build_propagator, build_water_topology, compute_metrics, initialize_state, EnergyTrace,
    ForceFieldSpec, Integrator, Potential, PotentialPart, ReducedUnits, RingPolymerState, Scheme, SchemeConfig,
    SpcePotential, WaterModel,
};

use crate::config::ScenarioConfig;
use crate::error::{CliError, ExitStatus};
use crate::scenario::Scenario;
use crate::trace_io::{format_float, read_trace, summary_path, write_trace, Summary};

pub struct RunArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Runs a scenario, writes its trace and summary, and prints the summary.
pub fn run_command(args: &RunArgs, stdout: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut config = ScenarioConfig::parse(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("trace.csv"));

    let mut scenario = Scenario::build(&config)?;
    let (result, stats) = scenario.run()?;
    write_trace(&out, &result.trace)?;

    let summary = Summary {
        meta: result.trace.meta.clone(),
        steps_requested: config.n_steps,
        steps_completed: result.steps_completed,
        failure: result.failure.as_ref().map(|f| format!("step {}: {}", f.step, f.error)),
        metrics: compute_metrics(&result.trace).ok(),
        max_position_iterations: stats.max_position_iterations,
        max_g: result.trace.rows().iter().map(|r| r.max_g).fold(0.0, f64::max),
        max_f: result.trace.rows().iter().map(|r| r.max_f).fold(0.0, f64::max),
        max_energy_error: result.trace.max_energy_error(),
    };
    let text = summary.to_text();
    let summary_file = summary_path(&out);
    fs::write(&summary_file, &text).map_err(|e| CliError::io(&summary_file, e))?;
    let _ = writeln!(stdout, "trace = {}", out.display());
    let _ = stdout.write_all(text.as_bytes());
    Ok(if result.failure.is_some() { ExitStatus::StepperFailure } else { ExitStatus::Success })
}

pub const ANALYZE_COLUMNS: [&str; 8] = ["trace", "scheme", "h", "delta_h", "drift", "noise", "delta_e", "delta_e_r"];

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeRow {
    pub path: PathBuf,
    pub scheme: String,
    pub h: f64,
    pub delta_h: f64,
    pub drift: f64,
    pub noise: f64,
    pub delta_e: f64,
    pub delta_e_r: f64,
}

/// Metrics of each trace, sorted by scheme, then `h`, then path.
pub fn analyze_traces(paths: &[PathBuf]) -> Result<Vec<AnalyzeRow>, CliError> {
    let mut rows = Vec::with_capacity(paths.len());
    for path in paths {
        let trace: EnergyTrace = read_trace(path)?;
        let m = compute_metrics(&trace)?;
        rows.push(AnalyzeRow {
            path: path.clone(),
            scheme: trace.meta.scheme.clone(),
            h: trace.meta.h,
            delta_h: trace.meta.delta_h,
            drift: m.drift,
            noise: m.noise,
            delta_e: m.delta_e,
            delta_e_r: m.delta_e_r,
        });
    }
    rows.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(a.h.total_cmp(&b.h)).then(a.path.cmp(&b.path)));
    Ok(rows)
}

fn row_fields(r: &AnalyzeRow) -> [String; 8] {
    [
        r.path.display().to_string(),
        r.scheme.clone(),
        r.h.to_string(),
        r.delta_h.to_string(),
        format_float(r.drift),
        format_float(r.noise),
        format_float(r.delta_e),
        format_float(r.delta_e_r),
    ]
}

pub fn analyze_command(paths: &[PathBuf], csv: Option<&Path>, stdout: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let rows = analyze_traces(paths)?;
    let table: Vec<[String; 8]> = rows.iter().map(row_fields).collect();
    let mut widths = ANALYZE_COLUMNS.map(str::len);
    for fields in &table {
        for (w, f) in widths.iter_mut().zip(fields) {
            *w = (*w).max(f.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, fields: &[&str]| {
        let cells: Vec<String> = fields.iter().zip(&widths).map(|(f, w)| format!("{f:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    };
    line(&mut out, &ANALYZE_COLUMNS);
    for fields in &table {
        let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
        line(&mut out, &refs);
    }
    let _ = stdout.write_all(out.as_bytes());
    if let Some(csv_path) = csv {
        let mut text = ANALYZE_COLUMNS.join(",");
        text.push('\n');
        for fields in &table {
            text.push_str(&fields.join(","));
            text.push('\n');
        }
        fs::write(csv_path, text).map_err(|e| CliError::io(csv_path, e))?;
    }
    Ok(ExitStatus::Success)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    /// Negative control: corrupt the free-flow propagator before the checks.
    pub inject_chat_sign_error: bool,
}

type Check = fn(&SelftestOptions) -> Result<String, String>;

/// Runs the fast invariant checks, printing one line per check. Returns
/// `Success` when all pass and `Internal` otherwise.
pub fn selftest_command(options: &SelftestOptions, stdout: &mut dyn Write) -> ExitStatus {
    let checks: [(&str, Check); 5] = [
        ("basis orthogonality", check_orthogonality),
        ("free-flow exactness", check_free_flow),
        ("time reversibility", check_reversibility),
        ("single-bead solver equivalence", check_single_bead_oracle),
        ("force gradients", check_gradients),
    ];
    let mut all = true;
    for (name, check) in checks {
        match check(options) {
            Ok(detail) => {
                let _ = writeln!(stdout, "PASS  {name}: {detail}");
            }
            Err(detail) => {
                all = false;
                let _ = writeln!(stdout, "FAIL  {name}: {detail}");
            }
        }
    }
    if all {
        ExitStatus::Success
    } else {
        ExitStatus::Internal
    }
}

fn core_err(e: rpmd_core::Error) -> String {
    e.to_string()
}

fn check_orthogonality(_: &SelftestOptions) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for p in 1..=32 {
        let basis = build_basis(p, p as f64).map_err(core_err)?;
        let u = basis.u();
        for a in 0..p {
            for b in 0..p {
                let dot: f64 = (0..p).map(|j| u[j * p + a] * u[j * p + b]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max |U^T U - I| = {worst:.2e} for P <= 32"))
    } else {
        Err(format!("max |U^T U - I| = {worst:.2e}"))
    }
}

/// Classic RK4 on the free ring polymer, a reference for the exact flow.
fn rk4_free(state: &RingPolymerState, masses: &[f64], alpha: f64, t: f64, n: usize) -> RingPolymerState {
    let p = state.n_beads();
    let deriv = |x: &[f64], mom: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut dx = vec![0.0; x.len()];
        let mut dp = vec![0.0; x.len()];
        for (dof, &m) in masses.iter().enumerate() {
            for k in 0..p {
                let i = dof * p + k;
                dx[i] = mom[i] / m;
                if p > 1 {
                    let (prev, next) = (dof * p + (k + p - 1) % p, dof * p + (k + 1) % p);
                    dp[i] = -m * alpha * alpha * (2.0 * x[i] - x[prev] - x[next]);
                }
            }
        }
        (dx, dp)
    };
    let dt = t / n as f64;
    let mut x = state.positions.clone();
    let mut q = state.momenta.clone();
    let comb = |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(u, v)| u + s * v).collect::<Vec<_>>();
    for _ in 0..n {
        let (k1x, k1p) = deriv(&x, &q);
        let (k2x, k2p) = deriv(&comb(&x, &k1x, dt / 2.0), &comb(&q, &k1p, dt / 2.0));
        let (k3x, k3p) = deriv(&comb(&x, &k2x, dt / 2.0), &comb(&q, &k2p, dt / 2.0));
        let (k4x, k4p) = deriv(&comb(&x, &k3x, dt), &comb(&q, &k3p, dt));
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            q[i] += dt / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]);
        }
    }
    let mut out = state.clone();
    out.positions = x;
    out.momenta = q;
    out
}

fn check_free_flow(options: &SelftestOptions) -> Result<String, String> {
    let (p, alpha, h) = (8, 8.0, 0.05);
    let masses = [1.0, 16.0, 1.008];
    let n = masses.len() * p;
    let x: Vec<f64> = (0..n).map(|i| (1.7 * i as f64).sin()).collect();
    let v: Vec<f64> = (0..n).map(|i| (0.9 * i as f64 + 0.3).cos()).collect();
    let start = RingPolymerState::from_parts(masses.len(), p, x, v).map_err(core_err)?;
    let mut cache = build_propagator(&build_basis(p, alpha).map_err(core_err)?, h).map_err(core_err)?;
    if options.inject_chat_sign_error {
        cache.inject_chat_sign_error();
    }
    let mut s = start.clone();
    for _ in 0..20 {
        propagate_free(&mut s, &cache, &masses).map_err(core_err)?;
    }
    let reference = rk4_free(&start, &masses, alpha, 1.0, 20_000);
    let scale = reference.positions.iter().chain(&reference.momenta).fold(0.0_f64, |m, v| m.max(v.abs()));
    let rel = s.max_abs_diff(&reference) / scale;

    let energy = |st: &RingPolymerState| {
        let (k, sp) = free_energy(st, &masses, alpha);
        k + sp
    };
    let e0 = energy(&start);
    let mut s = start.clone();
    for _ in 0..10_000 {
        propagate_free(&mut s, &cache, &masses).map_err(core_err)?;
    }
    let drift = (energy(&s) - e0).abs() / e0.abs();
    let detail = format!("trajectory error {rel:.2e} vs RK4, energy drift {drift:.2e} over 1e4 steps");
    if rel <= 1e-8 && drift <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn small_water(n_beads: usize, seed: u64) -> Result<(rpmd_core::Topology, RingPolymerState), String> {
    let top = build_water_topology(2, 6.2, &WaterModel::default()).map_err(core_err)?;
    let state = initialize_state(&top, n_beads, &ReducedUnits::default(), 1.0, seed).map_err(core_err)?;
    Ok((top, state))
}

fn check_reversibility(options: &SelftestOptions) -> Result<String, String> {
    let (p, h) = (4, 0.05);
    let (top, state) = small_water(p, 3)?;
    let spec = ForceFieldSpec::default();
    let slow = SpcePotential::new(&top, spec, PotentialPart::Slow).map_err(core_err)?;
    let fast = slow.with_part(PotentialPart::Fast);
    let tol = Tolerances { tol_g: 1e-12, tol_f: 1e-12, max_iter: 100 };
    let mut integ = Integrator::new(
        SchemeConfig::new(Scheme::ImpulseR, h),
        p,
        ReducedUnits::default().alpha(p),
        top.dof_masses(),
        ConstraintSet::from_topology(&top),
        tol,
        fast,
        slow,
    )
    .map_err(core_err)?;
    if options.inject_chat_sign_error {
        integ.inject_chat_sign_error();
    }
    let defect = reversibility_defect(|s| integ.step_strict(s), &state, 10).map_err(core_err)?;
    if defect <= 1e-8 {
        Ok(format!("impulse_r defect {defect:.2e} after 10 + 10 steps"))
    } else {
        Err(format!("impulse_r defect {defect:.2e}"))
    }
}

fn check_single_bead_oracle(_: &SelftestOptions) -> Result<String, String> {
    let h = 0.01;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (top, state) = small_water(1, seed)?;
        let masses = top.dof_masses();
        let cs = ConstraintSet::from_topology(&top);
        let mut trial = state.positions.clone();
        for (i, x) in trial.iter_mut().enumerate() {
            *x += h * state.momenta[i] / masses[i] + 0.02 * ((seed as f64 + 1.0) * 0.37 * i as f64).sin();
        }
        let mut classic = trial.clone();
        classic_shake(&cs, &masses, &mut classic, &state.positions, 1, 1e-14, 200).map_err(core_err)?;
        let cache = build_propagator(&build_basis(1, 1.0).map_err(core_err)?, h).map_err(core_err)?;
        let mut impulse = vec![0.0; trial.len()];
        let tol = Tolerances { tol_g: 1e-14, tol_f: 1e-14, max_iter: 100 };
        solve_positions(&cs, &cache, &masses, &mut trial, &state.positions, &mut impulse, &tol).map_err(core_err)?;
        for (a, b) in trial.iter().zip(&classic) {
            worst = worst.max((a - b).abs());
        }
        let mut check = state.clone();
        check.positions = trial;
        let g = residual_g(&check, &cs).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        worst = worst.max(g);
    }
    if worst <= 1e-10 {
        Ok(format!("max deviation from classic SHAKE {worst:.2e} over 20 configurations"))
    } else {
        Err(format!("max deviation {worst:.2e}"))
    }
}

fn check_gradients(_: &SelftestOptions) -> Result<String, String> {
    let (top, state) = small_water(1, 11)?;
    let spec = ForceFieldSpec { split_enabled: true, r_cut: 4.0, delta_r: 2.5, ..ForceFieldSpec::default() };
    let mut worst: f64 = 0.0;
    for part in [PotentialPart::Full, PotentialPart::Fast, PotentialPart::Slow] {
        let pot = SpcePotential::new(&top, spec, part).map_err(core_err)?;
        let (_, forces) = pot.evaluate(&state.positions, 1).map_err(core_err)?;
        for i in 0..state.positions.len() {
            let step = 1e-6;
            let mut xp = state.positions.clone();
            let mut xm = state.positions.clone();
            xp[i] += step;
            xm[i] -= step;
            let ep = pot.evaluate(&xp, 1).map_err(core_err)?.0;
            let em = pot.evaluate(&xm, 1).map_err(core_err)?.0;
            let fd = -(ep - em) / (2.0 * step);
            worst = worst.max((fd - forces[i]).abs() / forces[i].abs().max(1.0));
        }
    }
    if worst <= 1e-6 {
        Ok(format!("max relative error {worst:.2e} over full/fast/slow"))
    } else {
        Err(format!("max relative error {worst:.2e}"))
    }
}
