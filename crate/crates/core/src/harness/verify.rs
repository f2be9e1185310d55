//! Invariant suite behind the `verify` subcommand. The individual checks
//! are public so the acceptance tests can run them with their own
//! tolerances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{simulate, Scenario};
use crate::error::{Error, Result};
use crate::forward::{
    difference_data, gamma_from_displacement, homogeneous_gradients, simulate_voltages, ConductivityField,
};
use crate::membrane::{radial_example, solve_membrane, solve_membrane_with_report, MembraneSettings};
use crate::mesh::{build_mesh, disk_mesh_with_rings, place_electrodes, InteriorMask, Shape};
use crate::sensitivity::{assemble_sensitivity, build_basis, decay_profile, SensitivityAssembler};

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

/// Small three-patch scenario used by the suite.
pub const VERIFY_SCENARIO: &str = r#"
name = "verify"
shape = "square"
size = 1.0
elements = 512
electrodes = 16
d0 = 0.1

[[inclusions]]
kind = "rect"
min = [0.1875, 0.5625]
max = [0.4375, 0.8125]

[[inclusions]]
kind = "rect"
min = [0.625, 0.5625]
max = [0.8125, 0.8125]

[[inclusions]]
kind = "rect"
min = [0.3125, 0.1875]
max = [0.6875, 0.375]
"#;

/// Max nodal error of the membrane solve against the closed-form radial
/// profile on `B_5`, for each ring count.
pub fn radial_oracle_errors(rho: f64, ring_counts: &[usize]) -> Result<Vec<f64>> {
    ring_counts
        .iter()
        .map(|&rings| {
            let mesh = disk_mesh_with_rings::<f64>(rings, 5.0)?;
            let (exact, p) = radial_example(rho, &mesh)?;
            let w = solve_membrane(&mesh, &p, &MembraneSettings::default())?;
            Ok(w.nodal()
                .iter()
                .zip(exact.nodal())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

/// `‖W(εp)‖ / ‖W(p)‖` for each `ε`, at the scenario's pressure.
pub fn quadratic_scaling_ratios(scenario: &Scenario, eps: &[f64]) -> Result<Vec<f64>> {
    let setup = scenario.setup::<f64>()?;
    let (p, _) = scenario.pressure(&setup)?;
    let (v0, _) = simulate_voltages(
        &setup.mesh,
        &setup.layout,
        &ConductivityField::identity(setup.mesh.num_elements()),
        scenario.current,
    )?;
    let norm = |e: f64| -> Result<f64> {
        let w = solve_membrane(&setup.mesh, &p.scaled(e), &MembraneSettings::default())?;
        let gamma = gamma_from_displacement(&setup.mesh, &w);
        let (vp, _) = simulate_voltages(&setup.mesh, &setup.layout, &gamma, scenario.current)?;
        Ok(difference_data(&vp, &v0)?.norm())
    };
    let reference = norm(1.0)?;
    eps.iter().map(|&e| Ok(norm(e)? / reference)).collect()
}

/// Largest relative mismatch between `𝕊q` with `q_{kℓ} = p_k p_ℓ` and the
/// directly integrated `∫([∇v∇vᵀ]∇u^i)·∇u^j`, `v = Σ p_k v_k`, over random
/// `p` on the eight-element square (all pairs kept, merged and unmerged).
pub fn quadratic_form_error(trials: usize, seed: u64) -> Result<f64> {
    let mesh = build_mesh::<f64>(Shape::Square, 8, 1.0)?;
    let layout = place_electrodes(&mesh, 4, 0.5)?;
    let basis = build_basis(&mesh, &InteriorMask::all(8))?;
    let grads = homogeneous_gradients(&mesh, &layout, 1.0)?;
    let systems = [
        assemble_sensitivity(&mesh, &basis, &grads, mesh.diameter(), false)?,
        assemble_sensitivity(&mesh, &basis, &grads, mesh.diameter(), true)?,
    ];
    let n = grads.len();
    let ne = mesh.num_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let p: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gv: Vec<[f64; 2]> = (0..ne)
            .map(|e| {
                p.iter().enumerate().fold([0.0, 0.0], |g, (b, &pk)| {
                    let d = basis.gradients(b)[e];
                    [g[0] + pk * d[0], g[1] + pk * d[1]]
                })
            })
            .collect();
        let direct: Vec<f64> = (0..n * n)
            .map(|r| {
                let (gi, gj) = (&grads[r / n], &grads[r % n]);
                (0..ne)
                    .map(|e| {
                        let a = gv[e][0] * gi[e][0] + gv[e][1] * gi[e][1];
                        let b = gv[e][0] * gj[e][0] + gv[e][1] * gj[e][1];
                        mesh.areas()[e] * a * b
                    })
                    .sum()
            })
            .collect();
        let scale = direct.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for s in &systems {
            let q: Vec<f64> = s
                .pairs()
                .iter()
                .map(|&(k, l)| p[basis.position(k).unwrap()] * p[basis.position(l).unwrap()])
                .collect();
            for (a, b) in s.apply(&q).iter().zip(&direct) {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    Ok(worst)
}

/// Number of centroid-distance bins used for the decay check.
pub const DECAY_BINS: usize = 10;

/// Binned `max_{ij}|S_{kℓ}^{ij}|` on the `K = 512` square with 16
/// electrodes, over all pairs.
pub fn sensitivity_decay() -> Result<Vec<Option<f64>>> {
    let mesh = build_mesh::<f64>(Shape::Square, 512, 1.0)?;
    let layout = place_electrodes(&mesh, 16, 0.5)?;
    let basis = build_basis(&mesh, &InteriorMask::all(512))?;
    let grads = homogeneous_gradients(&mesh, &layout, 1.0)?;
    let assembler = SensitivityAssembler::new(&mesh, &basis, &grads)?;
    let width = mesh.diameter() / DECAY_BINS as f64;
    Ok(decay_profile(&mesh, &assembler, width))
}

/// Whether the populated bins are non-increasing.
pub fn is_non_increasing(bins: &[Option<f64>]) -> bool {
    let values: Vec<f64> = bins.iter().flatten().copied().collect();
    values.windows(2).all(|w| w[1] <= w[0])
}

fn format_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ")
}

/// Runs every check; the caller decides how to report failures.
pub fn run_verify() -> Vec<Check> {
    let mut checks = Vec::new();
    let scenario = Scenario::from_toml(VERIFY_SCENARIO).expect("built-in scenario is valid");

    let sim = scenario.setup::<f64>().and_then(|setup| Ok((simulate(&scenario, &setup)?, setup)));
    match sim {
        Err(e) => checks.push(Check::new("forward pipeline", false, format!("error: {e}"))),
        Ok((sim, setup)) => {
            let rel = sim.v_p.reciprocity_error() / sim.v_p.max_abs();
            checks.push(Check::new(
                "reciprocity",
                rel <= 1e-8,
                format!("max|V^ij - V^ji| / max|V| = {rel:.3e} (limit 1e-8)"),
            ));

            checks.push(Check::from_result(
                "conductivity SPD",
                sim.gamma.check_spd().map(|_| (true, format!("{} elements", sim.gamma.len()))),
            ));

            let mut tensors = sim.gamma.tensors().to_vec();
            tensors[7][0][1] += 0.5;
            let detected = matches!(
                ConductivityField::from_tensors(tensors).check_spd(),
                Err(Error::NotSpd { element: 7, .. })
            );
            checks.push(Check::new(
                "SPD fault injection",
                detected,
                "asymmetric tensor on element 7 must be reported with its index".into(),
            ));

            let report = solve_membrane_with_report(&setup.mesh, &sim.pressure, &MembraneSettings::default());
            checks.push(Check::from_result(
                "Picard convergence",
                report.map(|(_, r)| {
                    let decreasing = r.residuals.windows(2).all(|w| w[1] < w[0]);
                    (
                        decreasing && r.residuals.last().is_some_and(|&x| x <= 1e-8),
                        format!("{} iterations, residuals {}", r.iterations, format_list(&r.residuals)),
                    )
                }),
            ));
        }
    }

    checks.push(Check::from_result(
        "radial oracle",
        (|| {
            let mut detail = Vec::new();
            let mut ok = true;
            for rho in [0.1, -0.1] {
                let e = radial_oracle_errors(rho, &[10, 20, 40])?;
                let ratios = [e[0] / e[1], e[1] / e[2]];
                ok &= ratios.iter().all(|&r| r >= 3.0);
                detail.push(format!("rho {rho}: errors {} ratios {:.2}, {:.2}", format_list(&e), ratios[0], ratios[1]));
            }
            Ok((ok, detail.join("; ")))
        })(),
    ));

    checks.push(Check::from_result(
        "quadratic scaling",
        quadratic_scaling_ratios(&scenario, &[1.0, 0.5, 0.25]).map(|r| {
            let expected = [1.0, 0.25, 0.0625];
            let ok = r.iter().zip(expected).all(|(&a, b)| (a / b - 1.0).abs() <= 0.1);
            (ok, format!("norm ratios {} (expected 1, 1/4, 1/16 within 10%)", format_list(&r)))
        }),
    ));

    checks.push(Check::from_result(
        "linear form equals quadratic form",
        quadratic_form_error(20, 11).map(|e| (e <= 1e-10, format!("max relative mismatch {e:.3e} (limit 1e-10)"))),
    ));

    checks.push(Check::from_result(
        "sensitivity decay",
        sensitivity_decay().map(|bins| {
            let values: Vec<f64> = bins.iter().flatten().copied().collect();
            (is_non_increasing(&bins), format!("binned maxima {}", format_list(&values)))
        }),
    ));

    checks
}
