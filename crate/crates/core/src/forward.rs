//! Forward EIT model of the deflected membrane.
//!
//! Seen from above, the deformed sheet conducts like the planar anisotropic
//! medium `γ = I - ∇w∇wᵀ/(1+|∇w|²)`. Currents are driven through adjacent
//! electrode pairs under the gap model (uniform current density on each
//! electrode, no shunting) and voltages are read as arc averages.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, EnvelopeCholesky};
use crate::membrane::DisplacementField;
use crate::mesh::fem::{self, check_residual, Tensor};
use crate::mesh::{ElectrodeLayout, Mesh};
use crate::scalar::{max_abs, norm2, Real};

/// Per-element 2×2 conductivity tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField<T> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ConductivityField<T> {
    pub fn from_tensors(tensors: Vec<Tensor<T>>) -> Self {
        Self { tensors }
    }

    pub fn identity(num_elements: usize) -> Self {
        Self {
            tensors: vec![fem::identity(); num_elements],
        }
    }

    pub fn scaled_identity(num_elements: usize, c: T) -> Self {
        Self {
            tensors: vec![[[c, T::zero()], [T::zero(), c]]; num_elements],
        }
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Eigenvalues `(λ_min, λ_max)` of the symmetric part of element `k`.
    pub fn eigenvalues(&self, k: usize) -> (T, T) {
        symmetric_eigenvalues(&self.tensors[k])
    }

    pub fn determinant(&self, k: usize) -> T {
        let g = &self.tensors[k];
        g[0][0] * g[1][1] - g[0][1] * g[1][0]
    }

    /// Checks symmetry and positive definiteness element by element.
    pub fn check_spd(&self) -> Result<()> {
        let tol = T::lit(T::SOLVE_TOLERANCE);
        for (k, g) in self.tensors.iter().enumerate() {
            let scale = g[0][0].abs().max(g[1][1].abs()).max(T::one());
            if (g[0][1] - g[1][0]).abs() > tol * scale {
                return Err(Error::NotSpd {
                    element: k,
                    what: "symmetry".into(),
                });
            }
            if !(self.eigenvalues(k).0 > T::zero()) {
                return Err(Error::NotSpd {
                    element: k,
                    what: "positive definiteness".into(),
                });
            }
        }
        Ok(())
    }
}

fn symmetric_eigenvalues<T: Real>(g: &Tensor<T>) -> (T, T) {
    let two = T::lit(2.0);
    let off = (g[0][1] + g[1][0]) / two;
    let mean = (g[0][0] + g[1][1]) / two;
    let half_diff = (g[0][0] - g[1][1]) / two;
    let rad = half_diff.hypot(off);
    (mean - rad, mean + rad)
}

/// `γ = I - ∇w∇wᵀ/(1+|∇w|²)` on every element.
pub fn gamma_from_displacement<T: Real>(
    mesh: &Mesh<T>,
    w: &DisplacementField<T>,
) -> ConductivityField<T> {
    assert_eq!(w.gradients().len(), mesh.num_elements());
    let tensors = w
        .gradients()
        .iter()
        .map(|&g| gamma_from_gradient(g))
        .collect();
    ConductivityField { tensors }
}

pub fn gamma_from_gradient<T: Real>(g: [T; 2]) -> Tensor<T> {
    let s = T::one() / (T::one() + g[0] * g[0] + g[1] * g[1]);
    let off = -g[0] * g[1] * s;
    [
        [T::one() - g[0] * g[0] * s, off],
        [off, T::one() - g[1] * g[1] * s],
    ]
}

/// Adjacent-pair drive: pattern `j` injects `+I₀` through electrode `j` and
/// withdraws it through electrode `j+1` (cyclically).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionProtocol<T> {
    pub electrodes: usize,
    pub current: T,
}

impl<T: Real> InjectionProtocol<T> {
    pub fn new(electrodes: usize, current: T) -> Self {
        Self {
            electrodes,
            current,
        }
    }

    /// Neumann load vector `∫ g_j φ_v ds` of pattern `j`.
    pub fn load(&self, mesh: &Mesh<T>, layout: &ElectrodeLayout, j: usize) -> Vec<T> {
        let mut f = vec![T::zero(); mesh.num_nodes()];
        for (v, wt) in layout.arc_weights(mesh, j) {
            f[v] += self.current * wt;
        }
        for (v, wt) in layout.arc_weights(mesh, layout.next(j)) {
            f[v] -= self.current * wt;
        }
        f
    }
}

/// Factorized Neumann problem `∇·(γ∇u) = 0` shared by all injection patterns.
///
/// The singular stiffness matrix is made definite by pinning the first
/// boundary node; solutions are then shifted to zero mean over the boundary
/// nodes.
#[derive(Debug, Clone)]
pub struct NeumannSolver<T> {
    matrix: CsrMatrix<T>,
    keep: Vec<usize>,
    factor: EnvelopeCholesky<T>,
    boundary: Vec<usize>,
}

impl<T: Real> NeumannSolver<T> {
    pub fn new(mesh: &Mesh<T>, gamma: &ConductivityField<T>) -> Result<Self> {
        if gamma.len() != mesh.num_elements() {
            return Err(Error::Dimension("conductivity does not match the mesh".into()));
        }
        let matrix = fem::stiffness_matrix(mesh, |k| gamma.tensors[k]);
        let boundary = mesh.boundary_nodes();
        let pinned = boundary[0];
        let keep: Vec<usize> = (0..mesh.num_nodes()).filter(|&v| v != pinned).collect();
        let factor = EnvelopeCholesky::factor(&matrix.principal_submatrix(&keep))?;
        Ok(Self {
            matrix,
            keep,
            factor,
            boundary,
        })
    }

    pub fn solve(&self, load: &[T]) -> Result<Vec<T>> {
        let rhs: Vec<T> = self.keep.iter().map(|&v| load[v]).collect();
        let x = self.factor.solve(&rhs);
        let mut u = vec![T::zero(); load.len()];
        for (&v, &xv) in self.keep.iter().zip(&x) {
            u[v] = xv;
        }
        let mean = self.boundary.iter().map(|&v| u[v]).sum::<T>() / T::lit(self.boundary.len() as f64);
        for x in &mut u {
            *x -= mean;
        }
        check_residual(&self.matrix, &u, load)?;
        Ok(u)
    }
}

fn check_compatible<T: Real>(load: &[T], pattern: usize) -> Result<()> {
    let net: T = load.iter().copied().sum();
    let scale: T = load.iter().map(|x| x.abs()).sum();
    if net.abs() > T::lit(1e3) * T::epsilon() * scale.max(T::min_positive_value()) {
        return Err(Error::IncompatibleCurrent {
            pattern,
            net: net.as_f64(),
        });
    }
    Ok(())
}

/// Potential `u^j` for injection pattern `j`, gauged to zero boundary mean.
pub fn solve_injection<T: Real>(
    mesh: &Mesh<T>,
    layout: &ElectrodeLayout,
    gamma: &ConductivityField<T>,
    protocol: &InjectionProtocol<T>,
    j: usize,
) -> Result<Vec<T>> {
    let solver = NeumannSolver::new(mesh, gamma)?;
    solve_load(&solver, &protocol.load(mesh, layout, j), j)
}

fn solve_load<T: Real>(solver: &NeumannSolver<T>, load: &[T], j: usize) -> Result<Vec<T>> {
    check_compatible(load, j)?;
    solver.solve(load)
}

/// All `N` potentials for one conductivity, sharing one factorization.
pub fn solve_all_injections<T: Real>(
    mesh: &Mesh<T>,
    layout: &ElectrodeLayout,
    gamma: &ConductivityField<T>,
    protocol: &InjectionProtocol<T>,
) -> Result<Vec<Vec<T>>> {
    if protocol.electrodes != layout.len() {
        return Err(Error::Dimension(format!(
            "protocol drives {} electrodes but the layout has {}",
            protocol.electrodes,
            layout.len()
        )));
    }
    let solver = NeumannSolver::new(mesh, gamma)?;
    (0..layout.len())
        .into_par_iter()
        .map(|j| solve_load(&solver, &protocol.load(mesh, layout, j), j))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Absolute,
    Difference,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::Absolute => "absolute",
            DataKind::Difference => "difference",
        }
    }
}

/// `N×N` voltage matrix; entry `(i, j)` is the `i`-th adjacent voltage under
/// the `j`-th injection. Stored row-major, which is also the measurement
/// vector order `W^{1,1} … W^{1,N} W^{2,1} … W^{N,N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageDataset<T> {
    n: usize,
    values: Vec<T>,
    kind: DataKind,
    current: f64,
    noise: f64,
}

impl<T: Real> VoltageDataset<T> {
    pub fn new(n: usize, values: Vec<T>, kind: DataKind, current: f64) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Dimension(format!("{} values for a {n}×{n} dataset", values.len())));
        }
        Ok(Self {
            n,
            values,
            kind,
            current,
            noise: 0.0,
        })
    }

    pub fn zeros(n: usize, kind: DataKind, current: f64) -> Self {
        Self {
            n,
            values: vec![T::zero(); n * n],
            kind,
            current,
            noise: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn noise_level(&self) -> f64 {
        self.noise
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    /// Flattened measurement vector in row-major order.
    pub fn as_vector(&self) -> &[T] {
        &self.values
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.values)
    }

    pub fn norm(&self) -> T {
        norm2(&self.values)
    }

    /// `max_{i,j} |V^{ij} - V^{ji}|`.
    pub fn reciprocity_error(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// One header line `# kind=…,N=…,I0=…,noise=…` followed by `N` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# kind={},N={},I0={},noise={}",
            self.kind.name(),
            self.n,
            self.current,
            self.noise
        )?;
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| self.get(i, j).to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("voltage csv: {msg}"));
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| bad("missing header".into()))?;
        let (mut kind, mut n, mut current, mut noise) = (None, None, None, None);
        for field in header.split(',') {
            let (key, value) = field
                .trim()
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header field `{field}`")))?;
            match key {
                "kind" => {
                    kind = Some(match value {
                        "absolute" => DataKind::Absolute,
                        "difference" => DataKind::Difference,
                        other => return Err(bad(format!("unknown kind `{other}`"))),
                    })
                }
                "N" => n = value.parse::<usize>().ok(),
                "I0" => current = value.parse::<f64>().ok(),
                "noise" => noise = value.parse::<f64>().ok(),
                _ => {}
            }
        }
        let (kind, n, current, noise) = match (kind, n, current, noise) {
            (Some(k), Some(n), Some(c), Some(s)) => (k, n, c, s),
            _ => return Err(bad("header needs kind, N, I0 and noise".into())),
        };
        let mut values = Vec::with_capacity(n * n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for field in line.split(',') {
                values.push(
                    field
                        .trim()
                        .parse::<T>()
                        .map_err(|_| bad(format!("cannot parse `{field}`")))?,
                );
            }
        }
        let mut ds = Self::new(n, values, kind, current)?;
        ds.noise = noise;
        Ok(ds)
    }
}

/// `V^{ij} = I₀ (ū^j|ℰ_i - ū^j|ℰ_{i+1})` with arc-averaged potentials.
pub fn measure_voltages<T: Real>(
    mesh: &Mesh<T>,
    layout: &ElectrodeLayout,
    potentials: &[Vec<T>],
    current: T,
) -> Result<VoltageDataset<T>> {
    let n = layout.len();
    if potentials.len() != n {
        return Err(Error::Dimension(format!(
            "{} potentials for {n} electrodes",
            potentials.len()
        )));
    }
    let weights: Vec<Vec<(usize, T)>> = (0..n).map(|i| layout.arc_weights(mesh, i)).collect();
    let average = |u: &[T], i: usize| weights[i].iter().map(|&(v, w)| w * u[v]).sum::<T>();
    let mut values = vec![T::zero(); n * n];
    for i in 0..n {
        for (j, u) in potentials.iter().enumerate() {
            values[i * n + j] = current * (average(u, i) - average(u, layout.next(i)));
        }
    }
    VoltageDataset::new(n, values, DataKind::Absolute, current.as_f64())
}

/// Convenience: potentials and absolute dataset for one conductivity.
pub fn simulate_voltages<T: Real>(
    mesh: &Mesh<T>,
    layout: &ElectrodeLayout,
    gamma: &ConductivityField<T>,
    current: T,
) -> Result<(VoltageDataset<T>, Vec<Vec<T>>)> {
    let protocol = InjectionProtocol::new(layout.len(), current);
    let potentials = solve_all_injections(mesh, layout, gamma, &protocol)?;
    let data = measure_voltages(mesh, layout, &potentials, current)?;
    Ok((data, potentials))
}

/// `∫ γ∇u^i·∇u^j` assembled elementwise; equals the measured dataset by
/// reciprocity.
pub fn energy_data<T: Real>(
    mesh: &Mesh<T>,
    gamma: &ConductivityField<T>,
    potentials: &[Vec<T>],
) -> Vec<T> {
    let n = potentials.len();
    let grads: Vec<Vec<[T; 2]>> = potentials
        .iter()
        .map(|u| fem::element_gradients(mesh, u))
        .collect();
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = T::zero();
            for (k, &area) in mesh.areas().iter().enumerate() {
                let g = &gamma.tensors[k];
                let (a, b) = (grads[i][k], grads[j][k]);
                let ga = [g[0][0] * a[0] + g[0][1] * a[1], g[1][0] * a[0] + g[1][1] * a[1]];
                s += area * (ga[0] * b[0] + ga[1] * b[1]);
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// `W = V_p - V_0`.
pub fn difference_data<T: Real>(
    vp: &VoltageDataset<T>,
    v0: &VoltageDataset<T>,
) -> Result<VoltageDataset<T>> {
    for d in [vp, v0] {
        if d.kind != DataKind::Absolute {
            return Err(Error::KindMismatch {
                expected: DataKind::Absolute.name(),
                found: d.kind.name(),
            });
        }
    }
    if vp.n != v0.n {
        return Err(Error::Dimension(format!("{} vs {} electrodes", vp.n, v0.n)));
    }
    let values = vp.values.iter().zip(&v0.values).map(|(&a, &b)| a - b).collect();
    let mut out = VoltageDataset::new(vp.n, values, DataKind::Difference, vp.current)?;
    out.noise = vp.noise;
    Ok(out)
}

/// Adds i.i.d. Gaussian noise with standard deviation
/// `level · max |entry|`, reproducibly for a given seed.
pub fn add_noise<T: Real>(dataset: &VoltageDataset<T>, level: f64, seed: u64) -> Result<VoltageDataset<T>> {
    if !(level >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level {level} must be non-negative")));
    }
    let mut out = dataset.clone();
    if level == 0.0 {
        return Ok(out);
    }
    let sigma = level * dataset.max_abs().as_f64();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut out.values {
            *v += T::lit(normal.sample(&mut rng));
        }
    }
    out.noise = level;
    Ok(out)
}

/// Per-pattern element gradients of the homogeneous (`γ = I`) potentials.
pub fn homogeneous_gradients<T: Real>(
    mesh: &Mesh<T>,
    layout: &ElectrodeLayout,
    current: T,
) -> Result<Vec<Vec<[T; 2]>>> {
    let gamma = ConductivityField::identity(mesh.num_elements());
    let protocol = InjectionProtocol::new(layout.len(), current);
    let potentials = solve_all_injections(mesh, layout, &gamma, &protocol)?;
    Ok(potentials
        .iter()
        .map(|u| fem::element_gradients(mesh, u))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membrane::{solve_membrane, PressureField};
    use crate::mesh::{build_mesh, interior_mask, place_electrodes, Shape};
    use proptest::prelude::*;

    fn square_setup() -> (Mesh<f64>, ElectrodeLayout) {
        let mesh = build_mesh(Shape::Square, 512, 1.0).unwrap();
        let layout = place_electrodes(&mesh, 16, 0.5).unwrap();
        (mesh, layout)
    }

    fn bump(mesh: &Mesh<f64>, scale: f64) -> DisplacementField<f64> {
        let mask = interior_mask(mesh, 0.1).unwrap();
        let values = mesh
            .centroids()
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let near = (c[0] - 0.35).hypot(c[1] - 0.6) < 0.15;
                if near && mask.contains(k) {
                    scale
                } else {
                    0.0
                }
            })
            .collect();
        let p = PressureField::new(values, mask).unwrap();
        solve_membrane(mesh, &p, &Default::default()).unwrap()
    }

    #[test]
    fn flat_membrane_is_isotropic() {
        let g = gamma_from_gradient([0.0, 0.0]);
        assert_eq!(g, [[1.0, 0.0], [0.0, 1.0]]);
        let g = gamma_from_gradient([1.0, 0.0]);
        assert_eq!(g, [[0.5, 0.0], [0.0, 1.0]]);
    }

    proptest! {
        #[test]
        fn gamma_spectrum(gx in -3.0f64..3.0, gy in -3.0f64..3.0) {
            let field = ConductivityField::from_tensors(vec![gamma_from_gradient([gx, gy])]);
            let s = 1.0 / (1.0 + gx * gx + gy * gy);
            let (lo, hi) = field.eigenvalues(0);
            prop_assert!((lo - s).abs() < 1e-12);
            prop_assert!((hi - 1.0).abs() < 1e-12);
            prop_assert!((field.determinant(0) - s).abs() < 1e-12);
            prop_assert!(field.check_spd().is_ok());
        }
    }

    #[test]
    fn corrupted_gamma_names_element() {
        let mut tensors = vec![fem::identity::<f64>(); 10];
        tensors[7][0][1] = 0.3;
        let err = ConductivityField::from_tensors(tensors).check_spd().unwrap_err();
        assert!(matches!(err, Error::NotSpd { element: 7, .. }), "{err}");
        let mut tensors = vec![fem::identity::<f64>(); 4];
        tensors[2] = [[1.0, 2.0], [2.0, 1.0]];
        let err = ConductivityField::from_tensors(tensors).check_spd().unwrap_err();
        assert!(matches!(err, Error::NotSpd { element: 2, .. }));
    }

    #[test]
    fn opposite_electrodes_give_antisymmetric_potential() {
        // the structured square is invariant under x -> 1 - x, y -> 1 - y
        let mesh = build_mesh::<f64>(Shape::Square, 512, 1.0).unwrap();
        let nb = mesh.boundary_edges().len();
        let arcs = vec![vec![7, 8], vec![nb / 2 + 7, nb / 2 + 8]];
        let layout = ElectrodeLayout::from_arcs(&mesh, arcs, 0.1).unwrap();
        let mut load = vec![0.0; mesh.num_nodes()];
        for (v, w) in layout.arc_weights(&mesh, 0) {
            load[v] += w;
        }
        for (v, w) in layout.arc_weights(&mesh, 1) {
            load[v] -= w;
        }
        let solver = NeumannSolver::new(&mesh, &ConductivityField::identity(512)).unwrap();
        let u = solver.solve(&load).unwrap();
        let m = 16;
        for j in 0..=m {
            for i in 0..=m {
                let (a, b) = (j * (m + 1) + i, (m - j) * (m + 1) + (m - i));
                assert!((u[a] + u[b]).abs() < 1e-10);
            }
        }
        let mean: f64 = mesh.boundary_nodes().iter().map(|&v| u[v]).sum::<f64>();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn scaled_conductivity_scales_potential() {
        let (mesh, layout) = square_setup();
        let protocol = InjectionProtocol::new(16, 1.0);
        let id = ConductivityField::identity(512);
        let u1 = solve_injection(&mesh, &layout, &id, &protocol, 3).unwrap();
        let u3 = solve_injection(&mesh, &layout, &ConductivityField::scaled_identity(512, 3.0), &protocol, 3).unwrap();
        for (a, b) in u1.iter().zip(&u3) {
            assert!((a / 3.0 - b).abs() < 1e-12);
        }
        let all = solve_all_injections(&mesh, &layout, &id, &protocol).unwrap();
        assert_eq!(all[3], u1);
    }

    #[test]
    fn reciprocity_and_energy_identity() {
        let (mesh, layout) = square_setup();
        let w = bump(&mesh, 3.0);
        assert!(w.max_slope() > 0.1);
        let gamma = gamma_from_displacement(&mesh, &w);
        let (v, pots) = simulate_voltages(&mesh, &layout, &gamma, 1.0).unwrap();
        assert!(v.reciprocity_error() <= 1e-8 * v.max_abs());
        let energy = energy_data(&mesh, &gamma, &pots);
        for (a, b) in v.as_vector().iter().zip(&energy) {
            assert!((a - b).abs() <= 1e-8 * v.max_abs());
        }
        // adjacent drive: the driven pair reads a positive voltage
        assert!(v.get(0, 0) > 0.0);
    }

    #[test]
    fn homogeneous_data_is_symmetric() {
        let (mesh, layout) = square_setup();
        let (v, _) = simulate_voltages(&mesh, &layout, &ConductivityField::identity(512), 1.0).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert!((v.get(i, j) - v.get(j, i)).abs() <= 1e-8 * v.get(i, j).abs().max(1e-12));
            }
        }
    }

    #[test]
    fn gauge_shift_leaves_voltages_unchanged() {
        let (mesh, layout) = square_setup();
        let gamma = ConductivityField::identity(512);
        let (v, pots) = simulate_voltages(&mesh, &layout, &gamma, 2.0).unwrap();
        let shifted: Vec<Vec<f64>> = pots.iter().map(|u| u.iter().map(|x| x + 5.0).collect()).collect();
        let v2 = measure_voltages(&mesh, &layout, &shifted, 2.0).unwrap();
        for (a, b) in v.as_vector().iter().zip(v2.as_vector()) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = vec![vec![0.0; mesh.num_nodes()]; 16];
        let z = measure_voltages(&mesh, &layout, &zero, 1.0).unwrap();
        assert!(z.as_vector().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn opposite_pressures_give_identical_data() {
        let (mesh, layout) = square_setup();
        let w = bump(&mesh, 3.0);
        let wn = bump(&mesh, -3.0);
        let (a, _) = simulate_voltages(&mesh, &layout, &gamma_from_displacement(&mesh, &w), 1.0).unwrap();
        let (b, _) = simulate_voltages(&mesh, &layout, &gamma_from_displacement(&mesh, &wn), 1.0).unwrap();
        for (x, y) in a.as_vector().iter().zip(b.as_vector()) {
            assert!((x - y).abs() <= 1e-10 * a.max_abs());
        }
    }

    #[test]
    fn anisotropy_bound_holds() {
        let (mesh, _) = square_setup();
        let w = bump(&mesh, 3.0);
        let m = w.max_slope();
        let gamma = gamma_from_displacement(&mesh, &w);
        for k in 0..gamma.len() {
            let (lo, hi) = gamma.eigenvalues(k);
            assert!(lo >= 1.0 / (1.0 + m * m) - 1e-14 && hi <= 1.0 + 1e-14);
        }
    }

    #[test]
    fn difference_of_equal_data_is_zero() {
        let (mesh, layout) = square_setup();
        let (v, _) = simulate_voltages(&mesh, &layout, &ConductivityField::identity(512), 1.0).unwrap();
        let w = difference_data(&v, &v).unwrap();
        assert_eq!(w.kind(), DataKind::Difference);
        assert!(w.as_vector().iter().all(|&x| x == 0.0));
        assert!(matches!(difference_data(&w, &v), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn incompatible_pattern_is_rejected() {
        let (mesh, _) = square_setup();
        let solver = NeumannSolver::new(&mesh, &ConductivityField::identity(512)).unwrap();
        let mut load = vec![0.0; mesh.num_nodes()];
        load[0] = 1.0;
        assert!(matches!(solve_load(&solver, &load, 4), Err(Error::IncompatibleCurrent { pattern: 4, .. })));
    }

    #[test]
    fn noise_is_reproducible_and_calibrated() {
        let values: Vec<f64> = (0..256).map(|i| ((i as f64) * 0.37).sin()).collect();
        let ds = VoltageDataset::new(16, values, DataKind::Difference, 1.0).unwrap();
        assert_eq!(add_noise(&ds, 0.0, 9).unwrap(), ds);
        let a = add_noise(&ds, 0.01, 42).unwrap();
        let b = add_noise(&ds, 0.01, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, add_noise(&ds, 0.01, 43).unwrap());
        let sigma = 0.01 * ds.max_abs();
        let resid: Vec<f64> = a.as_vector().iter().zip(ds.as_vector()).map(|(x, y)| x - y).collect();
        let mean = resid.iter().sum::<f64>() / 256.0;
        let std = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 255.0).sqrt();
        assert!((std / sigma - 1.0).abs() < 0.2, "std {std} vs {sigma}");
        assert_eq!(a.noise_level(), 0.01);
        assert!(add_noise(&ds, -1.0, 0).is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let values: Vec<f64> = (0..16).map(|i| 1.0 / (i as f64 + 3.0)).collect();
        let ds = add_noise(&VoltageDataset::new(4, values, DataKind::Absolute, 1.5).unwrap(), 0.02, 1).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("# kind=absolute,N=4,I0=1.5,noise=0.02\n"));
        assert_eq!(VoltageDataset::<f64>::read_csv(buf.as_slice()).unwrap(), ds);
    }
}
