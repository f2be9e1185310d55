use std::collections::VecDeque;

use super::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Reverse Cuthill-McKee ordering of the graph of `a`.
///
/// Returns `perm` with `perm[new] = old`. Each connected component is started
/// from a pseudo-peripheral vertex.
pub(crate) fn reverse_cuthill_mckee<T: Real>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.dim();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let bfs_levels = |start: usize, seen: &[bool]| -> Vec<usize> {
        let mut level = vec![usize::MAX; n];
        let mut queue = VecDeque::from([start]);
        level[start] = 0;
        let mut order = Vec::new();
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if !seen[w] && level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        // last level, smallest degree first
        let depth = order.iter().map(|&v| level[v]).max().unwrap_or(0);
        let mut last: Vec<usize> = order.into_iter().filter(|&v| level[v] == depth).collect();
        last.sort_by_key(|&v| (degree[v], v));
        last.push(depth);
        last
    };

    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let mut start = (0..n)
            .filter(|&v| !seen[v])
            .min_by_key(|&v| (degree[v], v))
            .unwrap();
        let mut depth = {
            let l = bfs_levels(start, &seen);
            *l.last().unwrap()
        };
        loop {
            let l = bfs_levels(start, &seen);
            let cand = l[0];
            let cand_depth = *bfs_levels(cand, &seen).last().unwrap();
            if cand_depth > depth {
                start = cand;
                depth = cand_depth;
            } else {
                break;
            }
        }

        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (variable-band) Cholesky factorization `P A Pᵀ = L Lᵀ` of a
/// symmetric positive definite sparse matrix.
///
/// The factor can be reused for any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky<T> {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> EnvelopeCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_ordering(a, perm)
    }

    /// Factor using a precomputed ordering (`perm[new] = old`).
    pub fn factor_with_ordering(a: &CsrMatrix<T>, perm: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        assert_eq!(perm.len(), n);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (old_j, _) in a.row(old_i) {
                let new_j = inv[old_j];
                if new_j < first[new_i] {
                    first[new_i] = new_j;
                }
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![T::zero(); offset[n]];
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (old_j, v) in a.row(old_i) {
                let new_j = inv[old_j];
                if new_j <= new_i {
                    values[offset[new_i] + new_j - first[new_i]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let row_i = offset[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let row_j = offset[j];
                let mut s = values[row_i + j - fi];
                for k in start..j {
                    s -= values[row_i + k - fi] * values[row_j + k - fj];
                }
                values[row_i + j - fi] = s / values[row_j + j - fj];
            }
            let mut d = values[row_i + i - fi];
            for k in fi..i {
                let l = values[row_i + k - fi];
                d -= l * l;
            }
            if !(d > T::zero()) {
                return Err(Error::NotPositiveDefinite {
                    pivot: perm[i],
                    value: d.as_f64(),
                });
            }
            values[row_i + i - fi] = d.sqrt();
        }

        Ok(Self {
            perm,
            first,
            offset,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = self.offset[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.values[row + k - fi] * y[k];
            }
            y[i] = s / self.values[row + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = self.offset[i];
            y[i] /= self.values[row + i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.values[row + k - fi] * yi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
