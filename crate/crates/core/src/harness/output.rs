//! Artifact writing for `simulate` and `reconstruct` runs.
//!
//! Each run writes `manifest.json`, which lists every artifact together
//! with the effective parameters and is byte-identical across repeated
//! runs, and `timings.json`, which holds wall-clock stage timings and is
//! not.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use super::{
    prepare_basis, reconstruct, score_reconstruction, simulate, Reconstruction, ReconstructionSettings, Scenario,
    Setup, Simulation,
};
use crate::error::{Error, Result};
use crate::forward::{DataKind, VoltageDataset};
use crate::inversion::{write_pgm, Metrics};
use crate::membrane::PressureField;
use crate::mesh::write_mesh;
use crate::scalar::Real;

/// Raster resolution (longer side) of the PGM images.
const RASTER: usize = 128;

/// The JSON run manifest.
pub type Manifest = Value;

struct Artifacts<'a> {
    dir: &'a Path,
    list: Vec<Value>,
}

impl<'a> Artifacts<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir, list: Vec::new() })
    }

    /// `timings.json` is listed but excluded from the byte-identity promise.
    fn timings(&mut self, timings: Option<&Value>) -> Result<()> {
        if let Some(t) = timings {
            write_json(&self.dir.join("timings.json"), t)?;
            self.list.push(json!({ "file": "timings.json", "description": "wall-clock stage timings (not reproducible)" }));
        }
        Ok(())
    }

    fn write(
        &mut self,
        file: &str,
        description: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
    ) -> Result<()> {
        let mut out = BufWriter::new(File::create(self.dir.join(file))?);
        body(&mut out)?;
        out.flush()?;
        self.list.push(json!({ "file": file, "description": description }));
        Ok(())
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn mesh_summary<T: Real>(setup: &Setup<T>) -> Value {
    json!({
        "shape": setup.mesh.shape().name(),
        "elements": setup.mesh.num_elements(),
        "nodes": setup.mesh.num_nodes(),
        "h": setup.mesh.h().as_f64(),
        "interior_elements": setup.mask.count(),
        "electrodes": setup.layout.len(),
    })
}

fn metrics_json(m: &Metrics, h: f64) -> Value {
    json!({
        "iou": m.iou,
        "relative_error": m.relative_error,
        "com_errors": m.com_errors,
        "max_com_error_over_h": m.max_com_error().map(|e| e / h),
    })
}

/// Writes the artifacts of a forward run into `dir`.
pub fn write_simulation<T: Real>(
    scenario: &Scenario,
    setup: &Setup<T>,
    sim: &Simulation<T>,
    timings: Option<&Value>,
    dir: &Path,
) -> Result<Manifest> {
    let mut files = Artifacts::new(dir)?;
    files.write("mesh.txt", "mesh with electrode arcs", |o| {
        write_mesh(&setup.mesh, Some(&setup.layout), o)
    })?;
    files.write("pressure.csv", "per-element pressure p", |o| sim.pressure.write_csv(o))?;
    files.write("pressure.pgm", "raster of the pressure", |o| {
        write_pgm(&setup.mesh, sim.pressure.values(), RASTER, o)
    })?;
    files.write("displacement.csv", "nodal membrane displacement w", |o| {
        sim.displacement.write_csv(o)
    })?;
    files.write(
        "gamma.csv",
        "per-element apparent conductivity with eigenvalues and determinant",
        |o| {
            writeln!(o, "element,g11,g12,g22,lambda_min,lambda_max,det")?;
            for (k, t) in sim.gamma.tensors().iter().enumerate() {
                let (lo, hi) = sim.gamma.eigenvalues(k);
                writeln!(
                    o,
                    "{k},{},{},{},{lo},{hi},{}",
                    t[0][0],
                    t[0][1],
                    t[1][1],
                    sim.gamma.determinant(k)
                )?;
            }
            Ok(())
        },
    )?;
    files.write("v_p.csv", "voltages with the pressure applied", |o| sim.v_p.write_csv(o))?;
    files.write("v_0.csv", "voltages of the flat membrane", |o| sim.v_0.write_csv(o))?;
    if scenario.noise > 0.0 {
        files.write("w_clean.csv", "voltage differences before noise", |o| sim.w_clean.write_csv(o))?;
    }
    files.write("w.csv", "voltage differences W = V_p - V_0", |o| sim.w.write_csv(o))?;

    let slopes: Vec<f64> = sim.displacement.gradients().iter().map(|g| g[0].hypot(g[1]).as_f64()).collect();
    let min_eig = (0..sim.gamma.len())
        .map(|k| sim.gamma.eigenvalues(k).0.as_f64())
        .fold(f64::MAX, f64::min);
    files.timings(timings)?;
    let manifest = json!({
        "format": "membrane-eit manifest 1",
        "command": "simulate",
        "scenario": scenario,
        "mesh": mesh_summary(setup),
        "results": {
            "p0": sim.p0,
            "max_pressure": sim.pressure.max_abs().as_f64(),
            "max_slope": slopes.iter().cloned().fold(0.0, f64::max),
            "membrane_iterations": sim.membrane.iterations,
            "min_gamma_eigenvalue": min_eig,
            "reciprocity_error": sim.v_p.reciprocity_error().as_f64(),
            "w_norm": sim.w.norm().as_f64(),
            "w_max_abs": sim.w.max_abs().as_f64(),
        },
        "artifacts": files.list,
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// `simulate`: runs the forward chain and writes its artifacts.
pub fn run_simulate(scenario: &Scenario, dir: &Path) -> Result<Manifest> {
    let start = Instant::now();
    let setup = scenario.setup::<f64>()?;
    let meshed = start.elapsed().as_secs_f64();
    let sim = simulate(scenario, &setup)?;
    let simulated = start.elapsed().as_secs_f64();
    let timings = json!({ "mesh_s": meshed, "simulate_s": simulated - meshed });
    write_simulation(scenario, &setup, &sim, Some(&timings), dir)
}

/// Writes the artifacts of a reconstruction into `dir`.
pub fn write_reconstruction<T: Real>(
    scenario: &Scenario,
    setup: &Setup<T>,
    rec: &Reconstruction<T>,
    truth: &PressureField<T>,
    timings: Option<&Value>,
    dir: &Path,
) -> Result<Manifest> {
    let (metrics, baseline_metrics) = score_reconstruction(setup, rec, truth)?;
    let h = setup.mesh.h().as_f64();
    let mut files = Artifacts::new(dir)?;
    files.write("estimate.csv", "reconstructed pressure magnitude |p|", |o| rec.estimate.write_csv(o))?;
    files.write("estimate.pgm", "raster of the reconstructed magnitude", |o| {
        write_pgm(&setup.mesh, &rec.estimate.values, RASTER, o)
    })?;
    files.write("baseline.csv", "linearized isotropic conductivity change", |o| {
        rec.baseline.write_csv(o)
    })?;
    files.write("baseline.pgm", "raster of the baseline", |o| {
        write_pgm(&setup.mesh, &rec.baseline.values, RASTER, o)
    })?;
    let magnitude: Vec<T> = truth.values().iter().map(|v| v.abs()).collect();
    files.write("truth.pgm", "raster of the true pressure magnitude", |o| {
        write_pgm(&setup.mesh, &magnitude, RASTER, o)
    })?;
    files.timings(timings)?;
    let manifest = json!({
        "format": "membrane-eit manifest 1",
        "command": "reconstruct",
        "scenario": scenario,
        "mesh": mesh_summary(setup),
        "results": {
            "w_norm": rec.w_norm,
            "delta": rec.delta,
            "rows": rec.rows,
            "columns": rec.columns,
            "merged_pairs": scenario.merge_pairs,
            "discrepancy_target": rec.target,
            "beta": rec.estimate.beta,
            "residual": rec.estimate.residual,
            "truncated": rec.estimate.truncated,
            "baseline_beta": rec.baseline.beta,
            "baseline_residual": rec.baseline.residual,
            "metrics": metrics_json(&metrics, h),
            "baseline_metrics": metrics_json(&baseline_metrics, h),
        },
        "artifacts": files.list,
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// `reconstruct`: reads `W`, reconstructs, scores against the scenario's
/// pressure and writes the artifacts.
pub fn run_reconstruct(scenario: &Scenario, w_path: &Path, dir: &Path) -> Result<Manifest> {
    let start = Instant::now();
    let w = VoltageDataset::<f64>::read_csv(BufReader::new(File::open(w_path)?)).map_err(|e| match e {
        Error::Io(_) | Error::Csv(_) => e,
        other => Error::Parse {
            path: w_path.to_owned(),
            msg: other.to_string(),
        },
    })?;
    if w.kind() != DataKind::Difference {
        return Err(Error::KindMismatch {
            expected: DataKind::Difference.name(),
            found: w.kind().name(),
        });
    }
    let setup = scenario.setup::<f64>()?;
    let (truth, _) = scenario.pressure(&setup)?;
    let basis = prepare_basis(&setup, scenario.current)?;
    let prepared = start.elapsed().as_secs_f64();
    let rec = reconstruct(&setup, &basis, &w, &ReconstructionSettings::from(scenario))?;
    let solved = start.elapsed().as_secs_f64();
    let timings = json!({ "basis_s": prepared, "reconstruct_s": solved - prepared });
    write_reconstruction(scenario, &setup, &rec, &truth, Some(&timings), dir)
}
