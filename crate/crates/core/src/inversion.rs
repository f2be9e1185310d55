//! Regularized reduced solve, square-root pressure extraction, the
//! linearized isotropic baseline, and reconstruction scoring.
//!
//! Both solvers work on the `N² × N²` dual system: with `M` rows and
//! `C ≫ M` columns, `(AᵀA + cI) x = Aᵀb` has the exact solution
//! `x = Aᵀ (AAᵀ + cI)⁻¹ b`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{DataKind, VoltageDataset};
use crate::linalg::DenseCholesky;
use crate::membrane::{write_indexed_csv, PressureField};
use crate::mesh::{InteriorMask, Mesh};
use crate::scalar::{norm2, Real};
use crate::sensitivity::SensitivitySystem;

/// Reduced unknowns `q_δ`, one per retained pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticUnknown<T> {
    pub values: Vec<T>,
    pub pairs: Vec<(usize, usize)>,
    pub beta: f64,
    /// `‖𝕊_δ q − W‖`.
    pub residual: f64,
}

/// Dual-form solver for `(𝕊ᵀ𝕊 + √β I) q = 𝕊ᵀ W`, keeping `𝕊𝕊ᵀ` around so
/// that several `β` can be tried cheaply.
#[derive(Debug)]
pub struct ReducedSolver<'a, T> {
    system: &'a SensitivitySystem<T>,
    gram: Vec<T>,
}

impl<'a, T: Real> ReducedSolver<'a, T> {
    pub fn new(system: &'a SensitivitySystem<T>) -> Self {
        Self {
            system,
            gram: system.gram(),
        }
    }

    pub fn system(&self) -> &SensitivitySystem<T> {
        self.system
    }

    /// Mean diagonal of `𝕊𝕊ᵀ`, a natural scale for the ridge term.
    pub fn gram_scale(&self) -> f64 {
        let m = self.system.rows();
        (0..m).map(|i| self.gram[i * m + i].as_f64()).sum::<f64>() / m as f64
    }

    pub fn solve(&self, w: &[T], beta: f64) -> Result<QuadraticUnknown<T>> {
        let m = self.system.rows();
        if w.len() != m {
            return Err(Error::Dimension(format!("{} data values for {m} rows", w.len())));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("β = {beta} must be positive")));
        }
        let ridge = T::lit(beta.sqrt());
        let mut a = self.gram.clone();
        for i in 0..m {
            a[i * m + i] += ridge;
        }
        let y = factor_ridged(m, a, beta)?.solve(w);
        let values = self.system.apply_transpose(&y);
        let fit = self.system.apply(&values);
        let misfit: Vec<T> = fit.iter().zip(w).map(|(&f, &d)| f - d).collect();
        Ok(QuadraticUnknown {
            values,
            pairs: self.system.pairs().to_vec(),
            beta,
            residual: norm2(&misfit).as_f64(),
        })
    }

    /// `β` from the discrepancy principle: `‖𝕊q − W‖ ≈ target`.
    pub fn discrepancy_beta(&self, w: &[T], target: f64) -> Result<f64> {
        let ridge = discrepancy_ridge(self.gram_scale(), target, |c| Ok(self.solve(w, c * c)?.residual))?;
        Ok(ridge * ridge)
    }
}

/// Factors a ridged Gram matrix; a pivot collapse means `β` sits below
/// roundoff for this (rank-deficient) matrix, which is the caller's choice.
fn factor_ridged<T: Real>(m: usize, a: Vec<T>, beta: f64) -> Result<DenseCholesky<T>> {
    DenseCholesky::factor(m, a).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::InvalidArgument(format!(
            "β = {beta:e} is too small to regularize the {m}×{m} Gram matrix (pivot {pivot} = {value:e})"
        )),
        other => other,
    })
}

/// Bisection in `log c` for the ridge weight `c` whose residual matches
/// `target`, over `c ∈ [1e-12, 1e4] · scale`. The residual of a ridge
/// solve grows monotonically with `c`; when the target lies outside the
/// bracket the nearer end is returned.
fn discrepancy_ridge(scale: f64, target: f64, residual: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!("discrepancy target {target} must be positive")));
    }
    let scale = scale.max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = ((1e-12 * scale).ln(), (1e4 * scale).ln());
    if residual(lo.exp())? >= target {
        return Ok(lo.exp());
    }
    if residual(hi.exp())? <= target {
        return Ok(hi.exp());
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if residual(mid.exp())? > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// One-shot `solve_reduced`.
pub fn solve_reduced<T: Real>(
    system: &SensitivitySystem<T>,
    w: &VoltageDataset<T>,
    beta: f64,
) -> Result<QuadraticUnknown<T>> {
    ReducedSolver::new(system).solve(w.as_vector(), beta)
}

/// Expected norm of noise added at `level` to data with peak `max_abs`:
/// `level · max|W| · √(N²)`.
pub fn noise_norm(level: f64, max_abs: f64, n: usize) -> f64 {
    level * max_abs * n as f64
}

/// Per-element reconstruction with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult<T> {
    /// `|p̂_k|` for the reduced method, signed `δσ_k` for the baseline.
    pub values: Vec<T>,
    pub residual: f64,
    pub truncated: usize,
    pub beta: f64,
    pub baseline: bool,
}

impl<T: Real> ReconstructionResult<T> {
    pub fn max_abs(&self) -> T {
        crate::scalar::max_abs(&self.values)
    }

    /// `element,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_indexed_csv(out, "element", "value", &self.values)
    }
}

/// Step 3: `p̂_k = √max(q_kk, 0)` for every interior element, counting the
/// truncated negatives. Off-diagonal unknowns are not read.
pub fn extract_pressure<T: Real>(
    q: &QuadraticUnknown<T>,
    mask: &InteriorMask,
) -> Result<ReconstructionResult<T>> {
    let mut diagonal = vec![None; mask.len()];
    for (&(k, l), &v) in q.pairs.iter().zip(&q.values) {
        if k == l {
            if k >= mask.len() {
                return Err(Error::Dimension(format!("pair element {k} outside the mesh")));
            }
            diagonal[k] = Some(v);
        }
    }
    let mut values = vec![T::zero(); mask.len()];
    let mut truncated = 0;
    for k in mask.indices() {
        let qkk = diagonal[k].ok_or(Error::MissingDiagonal(k))?;
        if qkk < T::zero() {
            truncated += 1;
        } else {
            values[k] = qkk.sqrt();
        }
    }
    Ok(ReconstructionResult {
        values,
        residual: q.residual,
        truncated,
        beta: q.beta,
        baseline: false,
    })
}

/// Linearized isotropic difference imaging:
/// `J_{(ij),k} = −∫_{T_k} ∇u₀^i·∇u₀^j`, ridge `(JᵀJ + βI) δσ = JᵀW`.
#[derive(Debug, Clone)]
pub struct ConventionalSolver<T> {
    rows: usize,
    cols: usize,
    // Row-major rows × cols.
    jacobian: Vec<T>,
    gram: Vec<T>,
}

impl<T: Real> ConventionalSolver<T> {
    pub fn new(mesh: &Mesh<T>, u0_gradients: &[Vec<[T; 2]>]) -> Result<Self> {
        let n = u0_gradients.len();
        let ne = mesh.num_elements();
        if n == 0 || u0_gradients.iter().any(|g| g.len() != ne) {
            return Err(Error::Dimension("homogeneous gradients do not match the mesh".into()));
        }
        let m = n * n;
        let jacobian: Vec<T> = (0..m)
            .into_par_iter()
            .flat_map_iter(|r| {
                let (gi, gj) = (&u0_gradients[r / n], &u0_gradients[r % n]);
                (0..ne).map(move |k| -mesh.areas()[k] * (gi[k][0] * gj[k][0] + gi[k][1] * gj[k][1]))
            })
            .collect();
        let mut gram: Vec<T> = (0..m * m)
            .into_par_iter()
            .map(|ab| {
                let (a, b) = (ab / m, ab % m);
                if b > a {
                    return T::zero();
                }
                let (ra, rb) = (&jacobian[a * ne..(a + 1) * ne], &jacobian[b * ne..(b + 1) * ne]);
                ra.iter().zip(rb).map(|(&x, &y)| x * y).sum()
            })
            .collect();
        for a in 0..m {
            for b in a + 1..m {
                gram[a * m + b] = gram[b * m + a];
            }
        }
        Ok(Self {
            rows: m,
            cols: ne,
            jacobian,
            gram,
        })
    }

    fn gram_scale(&self) -> f64 {
        (0..self.rows).map(|i| self.gram[i * self.rows + i].as_f64()).sum::<f64>() / self.rows as f64
    }

    pub fn solve(&self, w: &VoltageDataset<T>, beta: f64) -> Result<ReconstructionResult<T>> {
        if w.kind() != DataKind::Difference {
            return Err(Error::KindMismatch {
                expected: DataKind::Difference.name(),
                found: w.kind().name(),
            });
        }
        let (m, ne) = (self.rows, self.cols);
        if w.as_vector().len() != m {
            return Err(Error::Dimension(format!("{} data values for {m} rows", w.as_vector().len())));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("β = {beta} must be positive")));
        }
        let mut a = self.gram.clone();
        for i in 0..m {
            a[i * m + i] += T::lit(beta);
        }
        let y = factor_ridged(m, a, beta)?.solve(w.as_vector());
        let mut values = vec![T::zero(); ne];
        for (r, &yr) in y.iter().enumerate() {
            for (v, &j) in values.iter_mut().zip(&self.jacobian[r * ne..(r + 1) * ne]) {
                *v += j * yr;
            }
        }
        let misfit: Vec<T> = (0..m)
            .map(|r| {
                let row = &self.jacobian[r * ne..(r + 1) * ne];
                row.iter().zip(&values).map(|(&a, &b)| a * b).sum::<T>() - w.as_vector()[r]
            })
            .collect();
        Ok(ReconstructionResult {
            values,
            residual: norm2(&misfit).as_f64(),
            truncated: 0,
            beta,
            baseline: true,
        })
    }

    /// `β` with `‖J δσ − W‖ ≈ target`.
    pub fn discrepancy_beta(&self, w: &VoltageDataset<T>, target: f64) -> Result<f64> {
        discrepancy_ridge(self.gram_scale(), target, |b| Ok(self.solve(w, b)?.residual))
    }
}

/// One-shot baseline reconstruction.
pub fn conventional_recon<T: Real>(
    w: &VoltageDataset<T>,
    mesh: &Mesh<T>,
    u0_gradients: &[Vec<[T; 2]>],
    beta: f64,
) -> Result<ReconstructionResult<T>> {
    if u0_gradients.len() != w.n() {
        return Err(Error::Dimension(format!(
            "{} potentials for {} electrodes",
            u0_gradients.len(),
            w.n()
        )));
    }
    ConventionalSolver::new(mesh, u0_gradients)?.solve(w, beta)
}

/// Reconstruction quality against a known pressure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// Area-weighted IoU of `{|p̂| ≥ ½ max|p̂|}` and the true support.
    pub iou: f64,
    /// `‖|p̂| − |p|‖ / ‖p‖` in area-weighted L² over the true support.
    pub relative_error: f64,
    /// Centre-of-mass error per connected true component; `None` when the
    /// reconstruction is empty around that component.
    pub com_errors: Vec<Option<f64>>,
}

impl Metrics {
    pub fn max_com_error(&self) -> Option<f64> {
        self.com_errors
            .iter()
            .try_fold(0.0f64, |m, e| e.map(|e| m.max(e)))
    }
}

/// Scores per-element magnitudes (signs are ignored) against `truth`.
///
/// Each element is attributed to the true component with the nearest
/// element centroid; the reconstructed centre of mass of a component uses
/// the elements in its region at or above half the regional maximum.
pub fn score<T: Real>(mesh: &Mesh<T>, values: &[T], truth: &PressureField<T>) -> Result<Metrics> {
    let ne = mesh.num_elements();
    if values.len() != ne || truth.values().len() != ne {
        return Err(Error::Dimension("score inputs do not match the mesh".into()));
    }
    let area: Vec<f64> = mesh.areas().iter().map(|a| a.as_f64()).collect();
    let est: Vec<f64> = values.iter().map(|v| v.as_f64().abs()).collect();
    let tru: Vec<f64> = truth.values().iter().map(|v| v.as_f64().abs()).collect();
    let support: Vec<bool> = tru.iter().map(|&v| v > 0.0).collect();
    let peak = est.iter().cloned().fold(0.0, f64::max);
    let detected: Vec<bool> = est.iter().map(|&v| peak > 0.0 && v >= 0.5 * peak).collect();

    let (mut inter, mut union) = (0.0, 0.0);
    for e in 0..ne {
        if support[e] && detected[e] {
            inter += area[e];
        }
        if support[e] || detected[e] {
            union += area[e];
        }
    }
    let iou = if union == 0.0 { 1.0 } else { inter / union };

    let (mut diff, mut reference) = (0.0, 0.0);
    for e in (0..ne).filter(|&e| support[e]) {
        diff += area[e] * (est[e] - tru[e]).powi(2);
        reference += area[e] * tru[e].powi(2);
    }
    let relative_error = if reference > 0.0 {
        (diff / reference).sqrt()
    } else {
        0.0
    };

    let components = support_components(mesh, &support);
    let centroid = |e: usize| -> [f64; 2] {
        let c = mesh.centroids()[e];
        [c[0].as_f64(), c[1].as_f64()]
    };
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let owner: Vec<usize> = (0..ne)
        .map(|e| {
            let z = centroid(e);
            let nearest = |c: &Vec<usize>| c.iter().map(|&f| dist(z, centroid(f))).fold(f64::MAX, f64::min);
            (0..components.len())
                .min_by(|&a, &b| nearest(&components[a]).total_cmp(&nearest(&components[b])))
                .unwrap_or(0)
        })
        .collect();
    let weighted_center = |elements: &mut dyn Iterator<Item = usize>, weight: &[f64]| -> Option<[f64; 2]> {
        let (mut m, mut x, mut y) = (0.0, 0.0, 0.0);
        for e in elements {
            let w = area[e] * weight[e];
            let z = centroid(e);
            m += w;
            x += w * z[0];
            y += w * z[1];
        }
        (m > 0.0).then(|| [x / m, y / m])
    };
    let com_errors = components
        .iter()
        .enumerate()
        .map(|(c, elements)| {
            let true_center = weighted_center(&mut elements.iter().copied(), &tru)?;
            let local_peak = (0..ne).filter(|&e| owner[e] == c).map(|e| est[e]).fold(0.0, f64::max);
            if local_peak <= 0.0 {
                return None;
            }
            let center = weighted_center(
                &mut (0..ne).filter(|&e| owner[e] == c && est[e] >= 0.5 * local_peak),
                &est,
            )?;
            Some(dist(center, true_center))
        })
        .collect();

    Ok(Metrics {
        iou,
        relative_error,
        com_errors,
    })
}

/// Edge-connected components of the flagged elements, each sorted.
pub fn support_components<T: Real>(mesh: &Mesh<T>, flags: &[bool]) -> Vec<Vec<usize>> {
    let neighbors = mesh.element_neighbors();
    let mut seen = vec![false; flags.len()];
    let mut out = Vec::new();
    for start in 0..flags.len() {
        if !flags[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut component = Vec::new();
        while let Some(e) = stack.pop() {
            component.push(e);
            for &f in &neighbors[e] {
                if flags[f] && !seen[f] {
                    seen[f] = true;
                    stack.push(f);
                }
            }
        }
        component.sort_unstable();
        out.push(component);
    }
    out
}

/// Binary greyscale (P5) raster of per-element values over the bounding box
/// of the mesh, `pixels` on the longer side. Values are mapped linearly from
/// `[min, max]` to `[1, 255]`; pixels outside the domain are 0.
pub fn write_pgm<T: Real, W: Write>(mesh: &Mesh<T>, values: &[T], pixels: usize, mut out: W) -> Result<()> {
    if values.len() != mesh.num_elements() || pixels == 0 {
        return Err(Error::Dimension("raster values do not match the mesh".into()));
    }
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for p in mesh.nodes() {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d].as_f64());
            hi[d] = hi[d].max(p[d].as_f64());
        }
    }
    let step = (hi[0] - lo[0]).max(hi[1] - lo[1]) / pixels as f64;
    let width = ((hi[0] - lo[0]) / step).round().max(1.0) as usize;
    let height = ((hi[1] - lo[1]) / step).round().max(1.0) as usize;
    let v: Vec<f64> = values.iter().map(|x| x.as_f64()).collect();
    let vmin = v.iter().cloned().fold(f64::MAX, f64::min);
    let vmax = v.iter().cloned().fold(f64::MIN, f64::max);
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    let bytes: Vec<u8> = (0..height)
        .into_par_iter()
        .flat_map_iter(|row| {
            // Top row is the largest y.
            let y = hi[1] - (row as f64 + 0.5) * step;
            let v = &v;
            (0..width).map(move |col| {
                let x = lo[0] + (col as f64 + 0.5) * step;
                match mesh.locate([T::lit(x), T::lit(y)]) {
                    Some(e) => (1.0 + 254.0 * (v[e] - vmin) / span).round() as u8,
                    None => 0,
                }
            })
        })
        .collect();
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::homogeneous_gradients;
    use crate::mesh::{build_mesh, place_electrodes, Shape};
    use crate::sensitivity::{assemble_sensitivity, build_basis};

    fn small_system(merged: bool) -> (Mesh<f64>, SensitivitySystem<f64>, Vec<Vec<[f64; 2]>>) {
        let mesh = build_mesh(Shape::Square, 8, 1.0).unwrap();
        let layout = place_electrodes(&mesh, 4, 0.5).unwrap();
        let basis = build_basis(&mesh, &InteriorMask::all(8)).unwrap();
        let grads = homogeneous_gradients(&mesh, &layout, 1.0).unwrap();
        let system = assemble_sensitivity(&mesh, &basis, &grads, mesh.diameter(), merged).unwrap();
        (mesh, system, grads)
    }

    fn dense_normal_solve(s: &SensitivitySystem<f64>, w: &[f64], ridge: f64) -> Vec<f64> {
        let c = s.cols();
        let mut a = vec![0.0; c * c];
        for i in 0..c {
            for j in 0..c {
                a[i * c + j] = (0..s.rows()).map(|r| s.get(r, i) * s.get(r, j)).sum();
            }
            a[i * c + i] += ridge;
        }
        let rhs = s.apply_transpose(w);
        crate::linalg::cholesky_solve_dense(c, a, &rhs).unwrap()
    }

    #[test]
    fn one_by_one_closed_form() {
        let s = SensitivitySystem::<f64>::from_parts(1, vec![(0, 0)], vec![3.0], 0.0, false).unwrap();
        let q = ReducedSolver::new(&s).solve(&[2.0], 16.0).unwrap();
        assert!((q.values[0] - 3.0 * 2.0 / (9.0 + 4.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_data_gives_zero() {
        let (_, s, _) = small_system(true);
        let q = ReducedSolver::new(&s).solve(&vec![0.0; 16], 1e-6).unwrap();
        assert!(q.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        let (_, s, _) = small_system(true);
        let solver = ReducedSolver::new(&s);
        assert!(matches!(solver.solve(&[0.0; 16], 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(solver.solve(&[0.0; 16], -1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(solver.solve(&[0.0; 15], 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn dual_solve_matches_normal_equations() {
        for merged in [false, true] {
            let (_, s, _) = small_system(merged);
            let w: Vec<f64> = (0..16).map(|i| ((i * 7 % 5) as f64 - 2.0) * 1e-3).collect();
            let beta = 1e-14;
            let q = ReducedSolver::new(&s).solve(&w, beta).unwrap();
            let direct = dense_normal_solve(&s, &w, beta.sqrt());
            let scale = direct.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (a, b) in q.values.iter().zip(&direct) {
                assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn recovers_single_diagonal_pair() {
        let (_, s, _) = small_system(true);
        let c = s.column_of(3, 3).unwrap();
        let mut truth = vec![0.0; s.cols()];
        truth[c] = 1.0;
        let w = s.apply(&truth);
        let q = ReducedSolver::new(&s).solve(&w, 1e-24).unwrap();
        // Reference: the minimum-norm least-squares solution by a dense solve.
        let direct = dense_normal_solve(&s, &w, 1e-12);
        for (a, b) in q.values.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-6);
        }
        let fit = s.apply(&q.values);
        for (a, b) in fit.iter().zip(&w) {
            assert!((a - b).abs() <= 1e-6 * w.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
    }

    #[test]
    fn ridge_path_is_monotone() {
        let (_, s, _) = small_system(true);
        let w: Vec<f64> = (0..16).map(|i| (i as f64).sin() * 1e-3).collect();
        let solver = ReducedSolver::new(&s);
        let mut last = f64::MAX;
        let mut last_res = 0.0;
        for e in -16..=0 {
            let q = solver.solve(&w, 10f64.powi(e)).unwrap();
            let norm = norm2(&q.values);
            assert!(norm <= last * (1.0 + 1e-12));
            assert!(q.residual >= last_res * (1.0 - 1e-12));
            last = norm;
            last_res = q.residual;
        }
    }

    #[test]
    fn discrepancy_hits_target() {
        let (_, s, _) = small_system(true);
        let w: Vec<f64> = (0..16).map(|i| (i as f64).cos() * 1e-3).collect();
        let solver = ReducedSolver::new(&s);
        let small = solver.solve(&w, 1e-30).unwrap().residual;
        let target = small + 0.3 * (norm2(&w) - small);
        let beta = solver.discrepancy_beta(&w, target).unwrap();
        let got = solver.solve(&w, beta).unwrap().residual;
        assert!((got - target).abs() < 1e-4 * target, "{got} vs {target}");
    }

    #[test]
    fn extraction_rules() {
        let mask = InteriorMask::from_flags(vec![true, true, false], 0.1).unwrap();
        let q = QuadraticUnknown {
            values: vec![4.0, -0.3, 9.0, 5.0],
            pairs: vec![(0, 0), (1, 1), (2, 2), (0, 1)],
            beta: 1.0,
            residual: 0.0,
        };
        let r = extract_pressure(&q, &mask).unwrap();
        assert_eq!(r.values, vec![2.0, 0.0, 0.0]);
        assert_eq!(r.truncated, 1);
        // Off-diagonal entries are never read.
        let mut noisy = q.clone();
        noisy.values[3] = -1e6;
        assert_eq!(extract_pressure(&noisy, &mask).unwrap(), r);
        let missing = QuadraticUnknown {
            pairs: vec![(0, 0), (0, 1)],
            values: vec![1.0, 1.0],
            ..q
        };
        assert!(matches!(extract_pressure(&missing, &mask), Err(Error::MissingDiagonal(1))));
    }

    #[test]
    fn baseline_zero_and_ridge_path() {
        let mesh = build_mesh::<f64>(Shape::Square, 128, 1.0).unwrap();
        let layout = place_electrodes(&mesh, 8, 0.5).unwrap();
        let grads = homogeneous_gradients(&mesh, &layout, 1.0).unwrap();
        let zero = VoltageDataset::zeros(8, DataKind::Difference, 1.0);
        let r = conventional_recon(&zero, &mesh, &grads, 1e-3).unwrap();
        assert!(r.baseline && r.values.iter().all(|&v| v == 0.0));
        let values: Vec<f64> = (0..64).map(|i| ((i % 9) as f64 - 4.0) * 1e-4).collect();
        let w = VoltageDataset::new(8, values, DataKind::Difference, 1.0).unwrap();
        let mut last = f64::MAX;
        for e in -8..=-4 {
            let r = conventional_recon(&w, &mesh, &grads, 10f64.powi(e)).unwrap();
            let n = norm2(&r.values);
            assert!(n <= last);
            last = n;
        }
        let absolute = VoltageDataset::zeros(8, DataKind::Absolute, 1.0);
        assert!(matches!(
            conventional_recon(&absolute, &mesh, &grads, 1.0),
            Err(Error::KindMismatch { .. })
        ));
    }

    fn square_truth(mesh: &Mesh<f64>) -> PressureField<f64> {
        let values = mesh
            .centroids()
            .iter()
            .map(|c| if (0.25..0.5).contains(&c[0]) && (0.25..0.5).contains(&c[1]) { 1.0 } else { 0.0 })
            .collect();
        PressureField::new(values, InteriorMask::all(mesh.num_elements())).unwrap()
    }

    #[test]
    fn score_examples() {
        let mesh = build_mesh::<f64>(Shape::Square, 512, 1.0).unwrap();
        let truth = square_truth(&mesh);
        let exact = score(&mesh, truth.values(), &truth).unwrap();
        assert_eq!(exact.iou, 1.0);
        assert_eq!(exact.relative_error, 0.0);
        assert_eq!(exact.com_errors.len(), 1);
        assert!(exact.com_errors[0].unwrap() < 1e-12);

        let empty = score(&mesh, &vec![0.0; 512], &truth).unwrap();
        assert_eq!(empty.iou, 0.0);
        assert_eq!(empty.com_errors, vec![None]);

        // Shift by one grid cell in x.
        let shifted: Vec<f64> = mesh
            .centroids()
            .iter()
            .map(|c| {
                let x = c[0] - 1.0 / 16.0;
                if (0.25..0.5).contains(&x) && (0.25..0.5).contains(&c[1]) { 1.0 } else { 0.0 }
            })
            .collect();
        let m = score(&mesh, &shifted, &truth).unwrap();
        assert!(m.iou > 0.0 && m.iou < 1.0);
        assert!((m.iou - 0.6).abs() < 1e-12, "{}", m.iou);
        assert!((m.com_errors[0].unwrap() - 1.0 / 16.0).abs() < 1e-12);

        let zero_truth = PressureField::zeros(InteriorMask::all(512));
        assert_eq!(score(&mesh, truth.values(), &zero_truth).unwrap().iou, 0.0);
    }

    #[test]
    fn components_split_by_edges() {
        let mesh = build_mesh::<f64>(Shape::Square, 512, 1.0).unwrap();
        let flags: Vec<bool> = mesh.centroids().iter().map(|c| c[0] < 0.2 || c[0] > 0.8).collect();
        assert_eq!(support_components(&mesh, &flags).len(), 2);
    }

    #[test]
    fn pgm_header_and_size() {
        let mesh = build_mesh::<f64>(Shape::Square, 32, 1.0).unwrap();
        let values: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let mut buf = Vec::new();
        write_pgm(&mesh, &values, 16, &mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n16 16\n255\n"));
        assert_eq!(buf.len(), 13 + 256);
        assert!(buf[13..].iter().all(|&b| b >= 1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scalar_system_closed_form(s in -10.0f64..10.0, w in -10.0f64..10.0, beta in 1e-6f64..1e3) {
                let sys = SensitivitySystem::<f64>::from_parts(1, vec![(0, 0)], vec![s], 0.0, false).unwrap();
                let q = ReducedSolver::new(&sys).solve(&[w], beta).unwrap();
                let expected = s * w / (s * s + beta.sqrt());
                prop_assert!((q.values[0] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            }

            #[test]
            fn extraction_ignores_off_diagonals(
                diag in proptest::collection::vec(-4.0f64..4.0, 6),
                off in proptest::collection::vec(-1e3f64..1e3, 5),
            ) {
                let mask = InteriorMask::all(6);
                let mut pairs: Vec<(usize, usize)> = (0..6).map(|k| (k, k)).collect();
                pairs.extend((0..5).map(|k| (k, k + 1)));
                let mut values = diag.clone();
                values.extend(vec![0.0; 5]);
                let q = QuadraticUnknown { values, pairs, beta: 1.0, residual: 0.0 };
                let mut perturbed = q.clone();
                perturbed.values[6..].copy_from_slice(&off);
                let (a, b) = (extract_pressure(&q, &mask).unwrap(), extract_pressure(&perturbed, &mask).unwrap());
                prop_assert_eq!(&a, &b);
                prop_assert_eq!(a.truncated, diag.iter().filter(|&&d| d < 0.0).count());
                prop_assert!(a.values.iter().all(|&v| v >= 0.0));
            }

            #[test]
            fn ridge_norm_is_monotone(
                entries in proptest::collection::vec(-1.0f64..1.0, 3 * 7),
                w in proptest::collection::vec(-1.0f64..1.0, 3),
                e0 in -8i32..2,
            ) {
                let pairs = (0..7).map(|k| (k, k)).collect();
                let sys = SensitivitySystem::from_parts(3, pairs, entries, 0.0, false).unwrap();
                let solver = ReducedSolver::new(&sys);
                let small = solver.solve(&w, 10f64.powi(e0)).unwrap();
                let large = solver.solve(&w, 10f64.powi(e0 + 2)).unwrap();
                prop_assert!(norm2(&large.values) <= norm2(&small.values) * (1.0 + 1e-9));
            }
        }
    }
}
