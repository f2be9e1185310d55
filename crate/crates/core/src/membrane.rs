//! Membrane deflection under pressure.
//!
//! The clamped membrane satisfies the prescribed mean curvature equation
//! `∇·(∇w / √(1+|∇w|²)) = p` with `w = 0` on the boundary. It is solved by
//! frozen-coefficient (Picard) iteration on P1 elements: each step solves
//! the linear problem `∇·(a_n ∇w_{n+1}) = p` with `a_n = 1/√(1+|∇w_n|²)`.

use std::io::{Read, Write};

use log::warn;

use crate::error::{Error, Result};
use crate::mesh::fem::{self, DirichletSolver};
use crate::mesh::{InteriorMask, Mesh, Point};
use crate::scalar::{dot, max_abs, Real};

/// Slope above which the small-deflection expansions stop being trustworthy.
pub const SLOPE_WARNING: f64 = 0.5;

/// Piecewise-constant pressure supported on an interior mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField<T> {
    values: Vec<T>,
    mask: InteriorMask,
}

impl<T: Real> PressureField<T> {
    pub fn new(values: Vec<T>, mask: InteriorMask) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::Dimension(format!(
                "{} pressure values for {} elements",
                values.len(),
                mask.len()
            )));
        }
        if let Some(k) = (0..values.len()).find(|&k| !mask.contains(k) && values[k] != T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "pressure is nonzero on element {k} outside the interior mask"
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("pressure on element {k} is not finite")));
        }
        Ok(Self { values, mask })
    }

    pub fn zeros(mask: InteriorMask) -> Self {
        Self {
            values: vec![T::zero(); mask.len()],
            mask,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn mask(&self) -> &InteriorMask {
        &self.mask
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.values)
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * factor).collect(),
            mask: self.mask.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == T::zero())
    }

    /// Writes `element,pressure` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_indexed_csv(out, "element", "pressure", &self.values)
    }

    /// Reads values written by [`Self::write_csv`] and re-validates them
    /// against `mask`.
    pub fn read_csv<R: Read>(input: R, mask: InteriorMask) -> Result<Self> {
        Self::new(read_indexed_csv(input)?, mask)
    }
}

/// Nodal membrane deflection with its per-element gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField<T> {
    nodal: Vec<T>,
    gradients: Vec<[T; 2]>,
}

impl<T: Real> DisplacementField<T> {
    pub fn from_nodal(mesh: &Mesh<T>, nodal: Vec<T>) -> Self {
        let gradients = displacement_gradient_of(mesh, &nodal);
        Self { nodal, gradients }
    }

    pub fn zeros(mesh: &Mesh<T>) -> Self {
        Self {
            nodal: vec![T::zero(); mesh.num_nodes()],
            gradients: vec![[T::zero(); 2]; mesh.num_elements()],
        }
    }

    pub fn nodal(&self) -> &[T] {
        &self.nodal
    }

    pub fn gradients(&self) -> &[[T; 2]] {
        &self.gradients
    }

    /// `max_T |∇w|`.
    pub fn max_slope(&self) -> T {
        self.gradients
            .iter()
            .map(|g| g[0].hypot(g[1]))
            .fold(T::zero(), T::max)
    }

    /// `(∫ |∇w|²)^{1/2}`.
    pub fn energy_norm(&self, mesh: &Mesh<T>) -> T {
        self.gradients
            .iter()
            .zip(mesh.areas())
            .map(|(g, &a)| a * (g[0] * g[0] + g[1] * g[1]))
            .sum::<T>()
            .sqrt()
    }

    /// Energy norm of `self - other`.
    pub fn energy_distance(&self, other: &Self, mesh: &Mesh<T>) -> T {
        self.gradients
            .iter()
            .zip(&other.gradients)
            .zip(mesh.areas())
            .map(|((g, h), &a)| {
                let (dx, dy) = (g[0] - h[0], g[1] - h[1]);
                a * (dx * dx + dy * dy)
            })
            .sum::<T>()
            .sqrt()
    }

    pub fn negated(&self) -> Self {
        Self {
            nodal: self.nodal.iter().map(|&v| -v).collect(),
            gradients: self.gradients.iter().map(|g| [-g[0], -g[1]]).collect(),
        }
    }

    /// Writes `node,displacement` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_indexed_csv(out, "node", "displacement", &self.nodal)
    }

    pub fn read_csv<R: Read>(input: R, mesh: &Mesh<T>) -> Result<Self> {
        let nodal = read_indexed_csv(input)?;
        if nodal.len() != mesh.num_nodes() {
            return Err(Error::Dimension(format!(
                "{} displacement values for {} nodes",
                nodal.len(),
                mesh.num_nodes()
            )));
        }
        Ok(Self::from_nodal(mesh, nodal))
    }
}

pub(crate) fn write_indexed_csv<T: Real, W: Write>(
    out: W,
    index: &str,
    column: &str,
    values: &[T],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([index, column])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_indexed_csv<T: Real, R: Read>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |msg: &str| Error::InvalidArgument(format!("csv row {}: {msg}", row + 1));
        let idx: usize = rec.get(0).ok_or_else(|| bad("missing index"))?.trim().parse().map_err(|_| bad("bad index"))?;
        if idx != row {
            return Err(bad("indices must be consecutive from 0"));
        }
        let v: T = rec.get(1).ok_or_else(|| bad("missing value"))?.trim().parse().map_err(|_| bad("bad value"))?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct MembraneSettings {
    /// Threshold for both the relative update and the relative dual-norm
    /// residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Optional bound on `max |p|`; pressures at or above it are rejected.
    pub alpha: Option<f64>,
}

impl Default for MembraneSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            alpha: None,
        }
    }
}

impl MembraneSettings {
    /// Defaults with the tolerance raised to what `T` can resolve
    /// (`1e-8`, or ten machine epsilons if that is larger).
    pub fn for_precision<T: Real>() -> Self {
        Self {
            tol: 1e-8f64.max(10.0 * T::epsilon().as_f64()),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct MembraneReport {
    pub iterations: usize,
    /// Relative dual-norm residual after each accepted iterate, starting
    /// with `w_0 = 0`.
    pub residuals: Vec<f64>,
    pub max_slope: f64,
}

pub fn solve_membrane<T: Real>(
    mesh: &Mesh<T>,
    p: &PressureField<T>,
    settings: &MembraneSettings,
) -> Result<DisplacementField<T>> {
    solve_membrane_with_report(mesh, p, settings).map(|(w, _)| w)
}

/// Picard iteration for the prescribed mean curvature equation.
///
/// The residual `r = K(a(w)) w + b` is measured in the discrete dual norm
/// `(rᵀ L⁻¹ r)^{1/2}` (with `L` the Dirichlet Laplacian), relative to the
/// same norm of the load `b`. Every accepted iterate must reduce it until it
/// falls below `tol`.
pub fn solve_membrane_with_report<T: Real>(
    mesh: &Mesh<T>,
    p: &PressureField<T>,
    settings: &MembraneSettings,
) -> Result<(DisplacementField<T>, MembraneReport)> {
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidArgument("membrane tolerance must be positive".into()));
    }
    if p.values().len() != mesh.num_elements() {
        return Err(Error::Dimension("pressure field does not match the mesh".into()));
    }
    if let Some(alpha) = settings.alpha {
        let m = p.max_abs().as_f64();
        if m >= alpha {
            return Err(Error::InvalidArgument(format!(
                "max |p| = {m} violates the existence bound α = {alpha}"
            )));
        }
    }

    let load = fem::element_load(mesh, p.values());
    let laplacian = DirichletSolver::laplacian(mesh)?;
    let ordering = laplacian.ordering();
    let interior = mesh.interior_nodes();

    let dual_norm = |v: &[T]| -> Result<T> {
        let z = laplacian.solve(v)?;
        Ok(dot(v, &z).max(T::zero()).sqrt())
    };
    let load_norm = dual_norm(&load)?;
    if load_norm == T::zero() {
        let w = DisplacementField::zeros(mesh);
        return Ok((
            w,
            MembraneReport {
                iterations: 0,
                residuals: vec![0.0],
                max_slope: 0.0,
            },
        ));
    }

    let residual = |w: &DisplacementField<T>| -> Result<T> {
        let k = fem::stiffness_matrix(mesh, |e| scalar_tensor(coefficient(w.gradients()[e])));
        let mut r = k.mul_vec(w.nodal());
        for (ri, &bi) in r.iter_mut().zip(&load) {
            *ri += bi;
        }
        for v in 0..mesh.num_nodes() {
            if mesh.is_boundary_node(v) {
                r[v] = T::zero();
            }
        }
        Ok(dual_norm(&r)? / load_norm)
    };

    let tol = T::lit(settings.tol);
    let neg_load: Vec<T> = load.iter().map(|&b| -b).collect();
    let mut w = DisplacementField::zeros(mesh);
    let mut res = T::one();
    let mut history = vec![1.0];
    for iter in 1..=settings.max_iter {
        let k = fem::stiffness_matrix(mesh, |e| scalar_tensor(coefficient(w.gradients()[e])));
        let solver = DirichletSolver::with_ordering(mesh, &k, Some(ordering.clone()))?;
        let next = DisplacementField::from_nodal(mesh, solver.solve(&neg_load)?);

        let mut diff = T::zero();
        let mut size = T::zero();
        for &v in &interior {
            let d = next.nodal[v] - w.nodal[v];
            diff += d * d;
            size += next.nodal[v] * next.nodal[v];
        }
        let update = if size > T::zero() { (diff / size).sqrt() } else { T::zero() };
        let next_res = residual(&next)?;
        history.push(next_res.as_f64());
        if !(next_res < res) && res > tol {
            return Err(Error::Stagnation {
                iteration: iter,
                previous: res.as_f64(),
                current: next_res.as_f64(),
            });
        }
        w = next;
        res = next_res;
        if update <= tol && res <= tol {
            let max_slope = w.max_slope().as_f64();
            if max_slope > SLOPE_WARNING {
                warn!("membrane slope {max_slope:.3} exceeds {SLOPE_WARNING}; small-slope approximations degrade");
            }
            return Ok((
                w,
                MembraneReport {
                    iterations: iter,
                    residuals: history,
                    max_slope,
                },
            ));
        }
    }
    Err(Error::NoConvergence {
        iterations: settings.max_iter,
        residual: res.as_f64(),
    })
}

fn coefficient<T: Real>(g: [T; 2]) -> T {
    T::one() / (T::one() + g[0] * g[0] + g[1] * g[1]).sqrt()
}

fn scalar_tensor<T: Real>(a: T) -> fem::Tensor<T> {
    [[a, T::zero()], [T::zero(), a]]
}

/// P1 solution of `Δv = rhs` with `v = 0` on the boundary.
pub fn poisson_solve<T: Real>(mesh: &Mesh<T>, rhs: &[T]) -> Result<DisplacementField<T>> {
    if rhs.len() != mesh.num_elements() {
        return Err(Error::Dimension("rhs must have one value per element".into()));
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("rhs must be finite".into()));
    }
    let solver = DirichletSolver::laplacian(mesh)?;
    let load: Vec<T> = fem::element_load(mesh, rhs).into_iter().map(|b| -b).collect();
    Ok(DisplacementField::from_nodal(mesh, solver.solve(&load)?))
}

/// Per-element constant gradient of a nodal field.
pub fn displacement_gradient<T: Real>(mesh: &Mesh<T>, w: &DisplacementField<T>) -> Vec<[T; 2]> {
    displacement_gradient_of(mesh, w.nodal())
}

fn displacement_gradient_of<T: Real>(mesh: &Mesh<T>, nodal: &[T]) -> Vec<[T; 2]> {
    fem::element_gradients(mesh, nodal)
}

/// Radially symmetric membrane on `B_5` whose deflection outside `B_2` does
/// not depend on `ρ`.
///
/// Inside `B_2` the profile is the cubic `ρr³ + (ψ'(2)/4 - 3ρ)r² + c(ρ)`,
/// outside it is the catenoid `ψ(r) - ψ(5)` with
/// `ψ(r) = log(r + √(r² - 1/2)) / √2`, a zero-mean-curvature profile. The
/// constant `c(ρ)` makes the profile continuous at `r = 2`; the slope matches
/// there by construction.
#[derive(Debug, Clone, Copy)]
pub struct RadialProfile {
    pub rho: f64,
}

impl RadialProfile {
    pub const OUTER: f64 = 5.0;
    pub const INNER: f64 = 2.0;

    fn psi(r: f64) -> f64 {
        std::f64::consts::FRAC_1_SQRT_2 * (r + (r * r - 0.5).sqrt()).ln()
    }

    fn dpsi(r: f64) -> f64 {
        std::f64::consts::FRAC_1_SQRT_2 / (r * r - 0.5).sqrt()
    }

    pub fn value(&self, r: f64) -> f64 {
        let rho = self.rho;
        if r < Self::INNER {
            let d2 = Self::dpsi(Self::INNER);
            let c = Self::psi(Self::INNER) - Self::psi(Self::OUTER) + 4.0 * rho - d2;
            rho * r.powi(3) + (d2 / 4.0 - 3.0 * rho) * r * r + c
        } else {
            Self::psi(r) - Self::psi(Self::OUTER)
        }
    }

    pub fn slope(&self, r: f64) -> f64 {
        let rho = self.rho;
        if r < Self::INNER {
            let d2 = Self::dpsi(Self::INNER);
            3.0 * rho * r * r + 2.0 * (d2 / 4.0 - 3.0 * rho) * r
        } else {
            Self::dpsi(r)
        }
    }

    /// Mean-curvature flux `∇w / √(1+|∇w|²)` at `x`.
    pub fn flux(&self, x: [f64; 2]) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let s = self.slope(r);
        let f = s / (1.0 + s * s).sqrt() / r;
        [f * x[0], f * x[1]]
    }
}

/// Closed-form deflection `w_ρ` at the nodes and the pressure `p_ρ` that
/// produces it.
///
/// The pressure on each element is the element average of
/// `∇·(∇w_ρ/√(1+|∇w_ρ|²))`, evaluated through the divergence theorem as the
/// outward flux through the element's edges (five-point Gauss rule per edge)
/// divided by its area.
pub fn radial_example<T: Real>(
    rho: f64,
    mesh: &Mesh<T>,
) -> Result<(DisplacementField<T>, PressureField<T>)> {
    if !rho.is_finite() {
        return Err(Error::InvalidArgument("ρ must be finite".into()));
    }
    let profile = RadialProfile { rho };
    let nodal: Vec<T> = mesh
        .nodes()
        .iter()
        .map(|p| {
            let r = p[0].as_f64().hypot(p[1].as_f64());
            if mesh.is_boundary_node_at_radius(r) {
                T::zero()
            } else {
                T::lit(profile.value(r))
            }
        })
        .collect();
    let w = DisplacementField::from_nodal(mesh, nodal);

    let (gx, gw) = gauss5();
    let to64 = |p: Point<T>| [p[0].as_f64(), p[1].as_f64()];
    let values = mesh
        .elements()
        .iter()
        .zip(mesh.areas())
        .map(|(tri, &area)| {
            let mut total = 0.0;
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let (pa, pb) = (to64(mesh.nodes()[a]), to64(mesh.nodes()[b]));
                // outward normal of a counterclockwise edge, scaled by length
                let n = [pb[1] - pa[1], pa[0] - pb[0]];
                for (&t, &wt) in gx.iter().zip(&gw) {
                    let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                    let f = profile.flux(x);
                    total += wt * (f[0] * n[0] + f[1] * n[1]);
                }
            }
            T::lit(total / area.as_f64())
        })
        .collect();
    let p = PressureField::new(values, InteriorMask::all(mesh.num_elements()))?;
    Ok((w, p))
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
fn gauss5() -> ([f64; 5], [f64; 5]) {
    let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
    let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
    let x = [-b, -a, 0.0, a, b].map(|s| 0.5 * (s + 1.0));
    let w = [wb, wa, 128.0 / 225.0, wa, wb].map(|s| 0.5 * s);
    (x, w)
}

impl<T: Real> Mesh<T> {
    fn is_boundary_node_at_radius(&self, r: f64) -> bool {
        (r - RadialProfile::OUTER).abs() < 1e-12 * RadialProfile::OUTER
    }
}
