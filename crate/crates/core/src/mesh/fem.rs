//! P1 assembly helpers shared by the membrane, forward and basis solvers.

use super::Mesh;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, EnvelopeCholesky, TripletBuilder};
use crate::scalar::{norm2, Real};

pub type Tensor<T> = [[T; 2]; 2];

pub fn identity<T: Real>() -> Tensor<T> {
    [[T::one(), T::zero()], [T::zero(), T::one()]]
}

/// Stiffness matrix `K_ij = Σ_T |T| ∇φ_i · (A_T ∇φ_j)` over all nodes.
pub fn stiffness_matrix<T: Real>(mesh: &Mesh<T>, coeff: impl Fn(usize) -> Tensor<T>) -> CsrMatrix<T> {
    let mut b = TripletBuilder::with_capacity(mesh.num_nodes(), 9 * mesh.num_elements());
    for (k, tri) in mesh.elements().iter().enumerate() {
        let a = coeff(k);
        let grads = &mesh.gradients()[k];
        let area = mesh.areas()[k];
        for (i, gi) in grads.iter().enumerate() {
            let agi = [
                a[0][0] * gi[0] + a[0][1] * gi[1],
                a[1][0] * gi[0] + a[1][1] * gi[1],
            ];
            for (j, gj) in grads.iter().enumerate() {
                b.push(tri[i], tri[j], area * (agi[0] * gj[0] + agi[1] * gj[1]));
            }
        }
    }
    b.build()
}

/// Load vector of a piecewise-constant source: `b_i = Σ_T f_T |T| / 3`.
pub fn element_load<T: Real>(mesh: &Mesh<T>, values: &[T]) -> Vec<T> {
    assert_eq!(values.len(), mesh.num_elements());
    let third = T::one() / T::lit(3.0);
    let mut b = vec![T::zero(); mesh.num_nodes()];
    for (k, tri) in mesh.elements().iter().enumerate() {
        let share = values[k] * mesh.areas()[k] * third;
        for &v in tri {
            b[v] += share;
        }
    }
    b
}

/// Per-element constant gradient of a nodal P1 field.
pub fn element_gradients<T: Real>(mesh: &Mesh<T>, nodal: &[T]) -> Vec<[T; 2]> {
    assert_eq!(nodal.len(), mesh.num_nodes());
    mesh.elements()
        .iter()
        .zip(mesh.gradients())
        .map(|(tri, g)| {
            let mut out = [T::zero(); 2];
            for (i, &v) in tri.iter().enumerate() {
                out[0] += nodal[v] * g[i][0];
                out[1] += nodal[v] * g[i][1];
            }
            out
        })
        .collect()
}

/// Factorized stiffness matrix with homogeneous Dirichlet conditions on every
/// boundary node.
#[derive(Debug, Clone)]
pub struct DirichletSolver<T> {
    interior: Vec<usize>,
    matrix: CsrMatrix<T>,
    factor: EnvelopeCholesky<T>,
    num_nodes: usize,
}

impl<T: Real> DirichletSolver<T> {
    pub fn new(mesh: &Mesh<T>, full: &CsrMatrix<T>) -> Result<Self> {
        Self::with_ordering(mesh, full, None)
    }

    /// Reuses a fill-reducing ordering from an earlier factorization of a
    /// matrix with the same sparsity.
    pub fn with_ordering(
        mesh: &Mesh<T>,
        full: &CsrMatrix<T>,
        ordering: Option<Vec<usize>>,
    ) -> Result<Self> {
        let interior = mesh.interior_nodes();
        if interior.is_empty() {
            return Err(Error::InvalidMesh("mesh has no interior nodes".into()));
        }
        let matrix = full.principal_submatrix(&interior);
        let factor = match ordering {
            Some(perm) => EnvelopeCholesky::factor_with_ordering(&matrix, perm)?,
            None => EnvelopeCholesky::factor(&matrix)?,
        };
        Ok(Self {
            interior,
            matrix,
            factor,
            num_nodes: mesh.num_nodes(),
        })
    }

    pub fn laplacian(mesh: &Mesh<T>) -> Result<Self> {
        Self::new(mesh, &stiffness_matrix(mesh, |_| identity()))
    }

    /// Fill-reducing ordering of the interior system.
    pub fn ordering(&self) -> Vec<usize> {
        crate::linalg::reverse_cuthill_mckee(&self.matrix)
    }

    /// Solves `K u = load` on interior nodes; boundary values are zero.
    pub fn solve(&self, load: &[T]) -> Result<Vec<T>> {
        assert_eq!(load.len(), self.num_nodes);
        let rhs: Vec<T> = self.interior.iter().map(|&v| load[v]).collect();
        let x = self.factor.solve(&rhs);
        check_residual(&self.matrix, &x, &rhs)?;
        let mut full = vec![T::zero(); self.num_nodes];
        for (&v, &xv) in self.interior.iter().zip(&x) {
            full[v] = xv;
        }
        Ok(full)
    }
}

pub(crate) fn check_residual<T: Real>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> Result<()> {
    let ax = a.mul_vec(x);
    let r: Vec<T> = ax.iter().zip(b).map(|(&p, &q)| p - q).collect();
    let scale = norm2(b);
    if scale == T::zero() {
        return Ok(());
    }
    let rel = (norm2(&r) / scale).as_f64();
    if !(rel <= T::SOLVE_TOLERANCE) {
        return Err(Error::InaccurateSolve {
            residual: rel,
            tolerance: T::SOLVE_TOLERANCE,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, Shape};

    #[test]
    fn p1_reproduces_linear_fields() {
        let mesh = build_mesh::<f64>(Shape::Disk, 200, 1.0).unwrap();
        let f: Vec<f64> = mesh.nodes().iter().map(|p| 2.0 * p[0] - 3.0 * p[1] + 1.0).collect();
        for g in element_gradients(&mesh, &f) {
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pinned_laplacian_is_positive_definite() {
        // removing any single node leaves an SPD matrix, so the kernel of the
        // Neumann Laplacian is exactly the constants
        let mesh = build_mesh::<f64>(Shape::Square, 32, 1.0).unwrap();
        let lap = stiffness_matrix(&mesh, |_| identity());
        let keep: Vec<usize> = (1..mesh.num_nodes()).collect();
        assert!(EnvelopeCholesky::factor(&lap.principal_submatrix(&keep)).is_ok());
        let all: Vec<usize> = (0..mesh.num_nodes()).collect();
        assert!(EnvelopeCholesky::factor(&lap.principal_submatrix(&all)).is_err());
    }

    #[test]
    fn load_integrates_source() {
        let mesh = build_mesh::<f64>(Shape::Square, 50, 2.0).unwrap();
        let b = element_load(&mesh, &vec![1.5; mesh.num_elements()]);
        assert!((b.iter().sum::<f64>() - 6.0).abs() < 1e-12);
    }
}
