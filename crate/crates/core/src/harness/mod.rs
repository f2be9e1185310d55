//! End-to-end runs: scenario files, simulation, reconstruction, Table 1
//! column counts and the verification suite.

mod output;
mod scenario;
mod table1;
pub mod verify;

pub use output::{run_reconstruct, run_simulate, write_reconstruction, write_simulation, Manifest};
pub use scenario::{Amplitude, Beta, Inclusion, Radius, Scenario, Setup, TARGET_SLOPE};
pub use table1::{table1, Table1Report, Table1Row, REFERENCE_REDUCED_COLUMNS};
pub use verify::{run_verify, Check};

use crate::error::Result;
use crate::forward::{
    add_noise, difference_data, gamma_from_displacement, homogeneous_gradients, simulate_voltages,
    ConductivityField, VoltageDataset,
};
use crate::inversion::{
    extract_pressure, noise_norm, score, ConventionalSolver, Metrics, ReconstructionResult, ReducedSolver,
};
use crate::membrane::{
    solve_membrane_with_report, DisplacementField, MembraneReport, MembraneSettings, PressureField,
};
use crate::scalar::Real;
use crate::sensitivity::{assemble_sensitivity, build_basis, BasisBank};

/// Relative residual floor for the discrepancy principle: noiseless data
/// still carry the model error of the quadratic approximation, so `β` is
/// never tuned below `DISCREPANCY_FLOOR · ‖W‖`.
pub const DISCREPANCY_FLOOR: f64 = 0.02;

/// Everything produced by a forward run.
#[derive(Debug, Clone)]
pub struct Simulation<T> {
    pub p0: f64,
    pub pressure: PressureField<T>,
    pub displacement: DisplacementField<T>,
    pub membrane: MembraneReport,
    pub gamma: ConductivityField<T>,
    pub v_p: VoltageDataset<T>,
    pub v_0: VoltageDataset<T>,
    /// `V_p − V_0` before noise.
    pub w_clean: VoltageDataset<T>,
    /// The data handed to reconstruction (noisy when `noise > 0`).
    pub w: VoltageDataset<T>,
}

/// Membrane solve → `γ_p` → `N` forward solves at `p` and at `p = 0` → `W`.
pub fn simulate<T: Real>(scenario: &Scenario, setup: &Setup<T>) -> Result<Simulation<T>> {
    let Setup { mesh, layout, .. } = setup;
    let current = T::lit(scenario.current);
    let (pressure, p0) = scenario.pressure(setup).map_err(|e| e.in_stage("pressure"))?;
    let (displacement, membrane) = solve_membrane_with_report(mesh, &pressure, &MembraneSettings::for_precision::<T>())
        .map_err(|e| e.in_stage("membrane"))?;
    let gamma = gamma_from_displacement(mesh, &displacement);
    gamma.check_spd().map_err(|e| e.in_stage("conductivity"))?;
    let (v_p, _) = simulate_voltages(mesh, layout, &gamma, current).map_err(|e| e.in_stage("forward"))?;
    let identity = ConductivityField::identity(mesh.num_elements());
    let (v_0, _) = simulate_voltages(mesh, layout, &identity, current).map_err(|e| e.in_stage("forward"))?;
    let w_clean = difference_data(&v_p, &v_0)?;
    let w = if scenario.noise > 0.0 {
        add_noise(&w_clean, scenario.noise, scenario.seed)?
    } else {
        w_clean.clone()
    };
    Ok(Simulation {
        p0,
        pressure,
        displacement,
        membrane,
        gamma,
        v_p,
        v_0,
        w_clean,
        w,
    })
}

/// Basis solutions and homogeneous potentials; independent of `δ` and of
/// the data, so they can be shared between reconstructions.
#[derive(Debug, Clone)]
pub struct SensitivityBasis<T> {
    pub basis: BasisBank<T>,
    pub u0_gradients: Vec<Vec<[T; 2]>>,
}

pub fn prepare_basis<T: Real>(setup: &Setup<T>, current: f64) -> Result<SensitivityBasis<T>> {
    let basis = build_basis(&setup.mesh, &setup.mask).map_err(|e| e.in_stage("basis"))?;
    let u0_gradients = homogeneous_gradients(&setup.mesh, &setup.layout, T::lit(current))
        .map_err(|e| e.in_stage("homogeneous potentials"))?;
    Ok(SensitivityBasis { basis, u0_gradients })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionSettings {
    pub delta: Radius,
    pub beta: Beta,
    pub merge_pairs: bool,
}

impl From<&Scenario> for ReconstructionSettings {
    fn from(s: &Scenario) -> Self {
        Self {
            delta: s.delta,
            beta: s.beta,
            merge_pairs: s.merge_pairs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction<T> {
    pub estimate: ReconstructionResult<T>,
    pub baseline: ReconstructionResult<T>,
    /// Resolved reduction radius.
    pub delta: f64,
    pub rows: usize,
    pub columns: usize,
    /// Residual target used by the discrepancy principle, if it was used.
    pub target: Option<f64>,
    /// `‖W‖` of the input data.
    pub w_norm: f64,
}

/// Discrepancy target for a dataset: the expected noise norm, floored at
/// [`DISCREPANCY_FLOOR`]` · ‖W‖`.
pub fn discrepancy_target<T: Real>(w: &VoltageDataset<T>) -> f64 {
    let noise = noise_norm(w.noise_level(), w.max_abs().as_f64(), w.n());
    noise.max(DISCREPANCY_FLOOR * w.norm().as_f64())
}

/// Reduced quadratic reconstruction plus the linearized baseline.
pub fn reconstruct<T: Real>(
    setup: &Setup<T>,
    basis: &SensitivityBasis<T>,
    w: &VoltageDataset<T>,
    settings: &ReconstructionSettings,
) -> Result<Reconstruction<T>> {
    if w.n() != setup.layout.len() {
        return Err(crate::Error::Dimension(format!(
            "data for {} electrodes, scenario has {}",
            w.n(),
            setup.layout.len()
        )));
    }
    let delta = settings.delta.resolve(setup.mesh.h().as_f64());
    let system = assemble_sensitivity(
        &setup.mesh,
        &basis.basis,
        &basis.u0_gradients,
        T::lit(delta),
        settings.merge_pairs,
    )
    .map_err(|e| e.in_stage("sensitivity"))?;
    let solver = ReducedSolver::new(&system);
    let data = w.as_vector();
    let zero = data.iter().all(|v| v.is_zero());

    let target = (settings.beta == Beta::Discrepancy && !zero).then(|| discrepancy_target(w));
    let beta = match (settings.beta, target) {
        (Beta::Fixed(b), _) => b,
        (Beta::Discrepancy, Some(t)) => solver.discrepancy_beta(data, t)?,
        // Any β reproduces q = 0 for W = 0.
        (Beta::Discrepancy, None) => 1.0,
    };
    let q = solver.solve(data, beta).map_err(|e| e.in_stage("reduced solve"))?;
    let estimate = extract_pressure(&q, &setup.mask)?;

    let conventional = ConventionalSolver::new(&setup.mesh, &basis.u0_gradients)?;
    let baseline_beta = match (settings.beta, target) {
        (Beta::Fixed(b), _) => b,
        (Beta::Discrepancy, Some(t)) => conventional.discrepancy_beta(w, t)?,
        (Beta::Discrepancy, None) => 1.0,
    };
    let baseline = conventional.solve(w, baseline_beta).map_err(|e| e.in_stage("baseline"))?;

    Ok(Reconstruction {
        estimate,
        baseline,
        delta,
        rows: system.rows(),
        columns: system.cols(),
        target,
        w_norm: w.norm().as_f64(),
    })
}

/// Scores of both reconstructions against the scenario's pressure.
pub fn score_reconstruction<T: Real>(
    setup: &Setup<T>,
    rec: &Reconstruction<T>,
    truth: &PressureField<T>,
) -> Result<(Metrics, Metrics)> {
    Ok((
        score(&setup.mesh, &rec.estimate.values, truth)?,
        score(&setup.mesh, &rec.baseline.values, truth)?,
    ))
}
