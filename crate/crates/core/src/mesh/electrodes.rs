use super::Mesh;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `N` electrodes, each a run of consecutive boundary edges (indices into
/// [`Mesh::boundary_edges`]), in counterclockwise order.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeLayout {
    arcs: Vec<Vec<usize>>,
    coverage: f64,
}

impl ElectrodeLayout {
    pub fn from_arcs<T: Real>(mesh: &Mesh<T>, arcs: Vec<Vec<usize>>, coverage: f64) -> Result<Self> {
        let nb = mesh.boundary_edges().len();
        let mut used = vec![false; nb];
        for (i, arc) in arcs.iter().enumerate() {
            if arc.is_empty() {
                return Err(Error::Electrodes(format!("electrode {i} has no edges")));
            }
            for (w, &e) in arc.iter().enumerate() {
                if e >= nb {
                    return Err(Error::Electrodes(format!("electrode {i} references edge {e}")));
                }
                if used[e] {
                    return Err(Error::Electrodes(format!("edge {e} belongs to two electrodes")));
                }
                used[e] = true;
                if w > 0 && e != (arc[w - 1] + 1) % nb {
                    return Err(Error::Electrodes(format!("electrode {i} is not contiguous")));
                }
            }
        }
        Ok(Self { arcs, coverage })
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn arcs(&self) -> &[Vec<usize>] {
        &self.arcs
    }

    /// Index of the electrode following `i`, cyclically.
    pub fn next(&self, i: usize) -> usize {
        (i + 1) % self.arcs.len()
    }

    pub fn arc_length<T: Real>(&self, mesh: &Mesh<T>, i: usize) -> T {
        self.arcs[i]
            .iter()
            .map(|&e| mesh.edge_length(mesh.boundary_edges()[e]))
            .sum()
    }

    /// Node weights `(1/|ℰ_i|) ∫_{ℰ_i} φ_v ds`; they sum to one and give both
    /// the uniform-current load and the arc-average readout.
    pub fn arc_weights<T: Real>(&self, mesh: &Mesh<T>, i: usize) -> Vec<(usize, T)> {
        let total = self.arc_length(mesh, i);
        let two = T::lit(2.0);
        let mut weights: Vec<(usize, T)> = Vec::with_capacity(self.arcs[i].len() + 1);
        for &e in &self.arcs[i] {
            let edge = mesh.boundary_edges()[e];
            let w = mesh.edge_length(edge) / (two * total);
            for v in edge {
                match weights.iter_mut().find(|(n, _)| *n == v) {
                    Some(entry) => entry.1 += w,
                    None => weights.push((v, w)),
                }
            }
        }
        weights
    }
}

/// Places `n` equally spaced electrodes covering `coverage` of the boundary.
///
/// Electrode `i` starts at boundary edge `⌊i·n_b/n⌋`, so the first electrode
/// starts at the mesh's boundary reference point.
pub fn place_electrodes<T: Real>(mesh: &Mesh<T>, n: usize, coverage: f64) -> Result<ElectrodeLayout> {
    if n < 4 {
        return Err(Error::Electrodes(format!("need at least 4 electrodes, got {n}")));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::Electrodes(format!("coverage {coverage} is outside (0, 1]")));
    }
    let nb = mesh.boundary_edges().len();
    if nb < 2 * n {
        return Err(Error::Electrodes(format!(
            "{nb} boundary edges cannot host {n} electrodes (need {})",
            2 * n
        )));
    }
    let covered = coverage * nb as f64;
    let cum = |i: usize| ((covered * i as f64 / n as f64) + 1e-9).floor() as usize;
    let arcs = (0..n)
        .map(|i| {
            let start = i * nb / n;
            let slot = (i + 1) * nb / n - start;
            let len = (cum(i + 1) - cum(i)).clamp(1, slot);
            (start..start + len).collect()
        })
        .collect();
    ElectrodeLayout::from_arcs(mesh, arcs, coverage)
}
