//! Quadratic sensitivity of voltage differences to piecewise-constant
//! pressure.
//!
//! With `v_k` solving `-Δv_k = χ_{T_k}` (zero on the boundary) and `u^i` the
//! homogeneous potentials, the data are approximated by
//! `W^{ij} ≈ Σ_{kℓ} S_{kℓ}^{ij} p_k p_ℓ` where
//! `S_{kℓ}^{ij} = ∫ ([∇v_k ∇v_ℓᵀ] ∇u^i)·∇u^j`. Only the part symmetric under
//! `k ↔ ℓ` is observable through `p_k p_ℓ`, so entries are stored
//! symmetrized; the symmetrized entry is then also symmetric under `i ↔ j`.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::fem::{self, DirichletSolver};
use crate::mesh::{InteriorMask, Mesh};
use crate::scalar::Real;

/// Basis solutions for every interior element.
#[derive(Debug, Clone)]
pub struct BasisBank<T> {
    elements: Vec<usize>,
    values: Vec<Vec<T>>,
    gradients: Vec<Vec<[T; 2]>>,
}

impl<T: Real> BasisBank<T> {
    /// Interior element indices, one per basis function.
    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Nodal values of the `b`-th basis function.
    pub fn values(&self, b: usize) -> &[T] {
        &self.values[b]
    }

    /// Element gradients of the `b`-th basis function.
    pub fn gradients(&self, b: usize) -> &[[T; 2]] {
        &self.gradients[b]
    }

    /// Position of element `k` in the bank.
    pub fn position(&self, k: usize) -> Option<usize> {
        self.elements.binary_search(&k).ok()
    }
}

/// One Poisson solve per interior element, all sharing a single
/// factorization of the Dirichlet Laplacian.
pub fn build_basis<T: Real>(mesh: &Mesh<T>, mask: &InteriorMask) -> Result<BasisBank<T>> {
    let elements = mask.indices();
    if elements.is_empty() {
        return Err(Error::EmptyMask(mask.d0()));
    }
    let solver = DirichletSolver::laplacian(mesh)?;
    let third = T::one() / T::lit(3.0);
    let solved: Vec<(Vec<T>, Vec<[T; 2]>)> = elements
        .par_iter()
        .map(|&k| {
            let mut load = vec![T::zero(); mesh.num_nodes()];
            for &v in &mesh.elements()[k] {
                load[v] = mesh.areas()[k] * third;
            }
            let v = solver.solve(&load)?;
            let g = fem::element_gradients(mesh, &v);
            Ok((v, g))
        })
        .collect::<Result<_>>()?;
    let (values, gradients) = solved.into_iter().unzip();
    Ok(BasisBank {
        elements,
        values,
        gradients,
    })
}

/// Centroid distance `|z_k - z_ℓ|`.
pub fn pair_distance<T: Real>(mesh: &Mesh<T>, k: usize, l: usize) -> T {
    let (a, b) = (mesh.centroids()[k], mesh.centroids()[l]);
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Element pairs kept as columns, in column order: all diagonal pairs by
/// element, then off-diagonal pairs with centroid distance `≤ δ` in
/// lexicographic order (only `k < ℓ` when symmetric pairs are merged).
pub fn retained_pairs<T: Real>(
    mesh: &Mesh<T>,
    elements: &[usize],
    delta: T,
    merged: bool,
) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = elements.iter().map(|&k| (k, k)).collect();
    for (a, &k) in elements.iter().enumerate() {
        for (b, &l) in elements.iter().enumerate() {
            if a == b || (merged && b < a) {
                continue;
            }
            if pair_distance(mesh, k, l) <= delta {
                pairs.push((k, l));
            }
        }
    }
    pairs
}

/// Column count of the reduced matrix without building it.
pub fn count_columns<T: Real>(mesh: &Mesh<T>, mask: &InteriorMask, delta: T, merged: bool) -> usize {
    let elements = mask.indices();
    let off: usize = elements
        .par_iter()
        .enumerate()
        .map(|(a, &k)| {
            elements
                .iter()
                .enumerate()
                .filter(|&(b, &l)| {
                    b != a && (!merged || b > a) && pair_distance(mesh, k, l) <= delta
                })
                .count()
        })
        .sum();
    elements.len() + off
}

/// Precomputed contractions `√|T_e| ∇v_k(e)·∇u^i(e)` from which any column
/// of the sensitivity matrix can be formed.
#[derive(Debug, Clone)]
pub struct SensitivityAssembler<T> {
    electrodes: usize,
    num_elements: usize,
    elements: Vec<usize>,
    // [basis][pattern][element]
    contractions: Vec<T>,
}

impl<T: Real> SensitivityAssembler<T> {
    pub fn new(mesh: &Mesh<T>, basis: &BasisBank<T>, u0_gradients: &[Vec<[T; 2]>]) -> Result<Self> {
        let n = u0_gradients.len();
        let ne = mesh.num_elements();
        if n == 0 || u0_gradients.iter().any(|g| g.len() != ne) {
            return Err(Error::Dimension("homogeneous gradients do not match the mesh".into()));
        }
        let roots: Vec<T> = mesh.areas().iter().map(|a| a.sqrt()).collect();
        let mut contractions = vec![T::zero(); basis.len() * n * ne];
        contractions
            .par_chunks_mut(n * ne)
            .enumerate()
            .for_each(|(b, block)| {
                let gv = basis.gradients(b);
                for (i, gu) in u0_gradients.iter().enumerate() {
                    for e in 0..ne {
                        block[i * ne + e] = roots[e] * (gv[e][0] * gu[e][0] + gv[e][1] * gu[e][1]);
                    }
                }
            });
        Ok(Self {
            electrodes: n,
            num_elements: ne,
            elements: basis.elements().to_vec(),
            contractions,
        })
    }

    pub fn rows(&self) -> usize {
        self.electrodes * self.electrodes
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    fn block(&self, k: usize) -> &[T] {
        let b = self
            .elements
            .binary_search(&k)
            .expect("pair element must carry a basis function");
        let len = self.electrodes * self.num_elements;
        &self.contractions[b * len..(b + 1) * len]
    }

    /// Symmetrized column `S_{kℓ}^{ij}`, row `i·N + j`. Merged off-diagonal
    /// columns carry both orderings, i.e. twice the entry.
    pub fn column(&self, k: usize, l: usize, merged: bool) -> Vec<T> {
        let n = self.electrodes;
        let ne = self.num_elements;
        let (a, b) = (self.block(k), self.block(l));
        let mut m = vec![T::zero(); n * n];
        for i in 0..n {
            let ai = &a[i * ne..(i + 1) * ne];
            for j in 0..n {
                let bj = &b[j * ne..(j + 1) * ne];
                m[i * n + j] = dot4(ai, bj);
            }
        }
        let factor = if merged && k != l { T::one() } else { T::lit(0.5) };
        let mut col = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                col[i * n + j] = factor * (m[i * n + j] + m[j * n + i]);
            }
        }
        col
    }

    /// `max_{ij} |S_{kℓ}^{ij}|`.
    pub fn column_max(&self, k: usize, l: usize) -> T {
        self.column(k, l, false)
            .iter()
            .fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

// Dot product with four independent accumulators so the loop vectorizes.
pub(crate) fn dot4<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Reduced sensitivity matrix with its column-to-pair map.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySystem<T> {
    rows: usize,
    pairs: Vec<(usize, usize)>,
    // column-major, rows × pairs.len()
    entries: Vec<T>,
    delta: f64,
    merged: bool,
}

impl<T: Real> SensitivitySystem<T> {
    pub fn from_parts(
        rows: usize,
        pairs: Vec<(usize, usize)>,
        entries: Vec<T>,
        delta: f64,
        merged: bool,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptySystem);
        }
        if entries.len() != rows * pairs.len() {
            return Err(Error::Dimension(format!(
                "{} entries for {rows}×{} system",
                entries.len(),
                pairs.len()
            )));
        }
        Ok(Self {
            rows,
            pairs,
            entries,
            delta,
            merged,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn merged(&self) -> bool {
        self.merged
    }

    pub fn column(&self, c: usize) -> &[T] {
        &self.entries[c * self.rows..(c + 1) * self.rows]
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.entries[col * self.rows + row]
    }

    /// Column-major payload.
    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    /// Column index of pair `(k, ℓ)`, accepting either order when merged.
    pub fn column_of(&self, k: usize, l: usize) -> Option<usize> {
        self.pairs
            .iter()
            .position(|&p| p == (k, l) || (self.merged && p == (l, k)))
    }

    /// `𝕊 q`.
    pub fn apply(&self, q: &[T]) -> Vec<T> {
        assert_eq!(q.len(), self.cols());
        let mut out = vec![T::zero(); self.rows];
        for (c, &qc) in q.iter().enumerate() {
            if qc != T::zero() {
                for (o, &s) in out.iter_mut().zip(self.column(c)) {
                    *o += s * qc;
                }
            }
        }
        out
    }

    /// `𝕊ᵀ r`.
    pub fn apply_transpose(&self, r: &[T]) -> Vec<T> {
        assert_eq!(r.len(), self.rows);
        (0..self.cols())
            .into_par_iter()
            .map(|c| self.column(c).iter().zip(r).map(|(&s, &x)| s * x).sum())
            .collect()
    }

    /// `𝕊 𝕊ᵀ`, row-major `rows × rows`.
    pub fn gram(&self) -> Vec<T> {
        let m = self.rows;
        let c = self.cols();
        // Row-major copy so every Gram entry is a contiguous dot product.
        let mut by_row = vec![T::zero(); m * c];
        for (j, col) in self.entries.chunks_exact(m).enumerate() {
            for (i, &v) in col.iter().enumerate() {
                by_row[i * c + j] = v;
            }
        }
        let mut g: Vec<T> = (0..m * m)
            .into_par_iter()
            .map(|ab| {
                let (a, b) = (ab / m, ab % m);
                if b > a {
                    T::zero()
                } else {
                    dot4(&by_row[a * c..(a + 1) * c], &by_row[b * c..(b + 1) * c])
                }
            })
            .collect();
        for a in 0..m {
            for b in a + 1..m {
                g[a * m + b] = g[b * m + a];
            }
        }
        g
    }

    /// Header line: `rows cols delta merged`.
    pub fn write_header<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "rows={}", self.rows)?;
        writeln!(out, "cols={}", self.cols())?;
        writeln!(out, "delta={}", self.delta)?;
        writeln!(out, "merged={}", self.merged)?;
        writeln!(out, "layout=f64le,column-major")?;
        Ok(())
    }

    /// `column,k,l` rows.
    pub fn write_pair_map<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["column", "k", "l"])?;
        for (c, &(k, l)) in self.pairs.iter().enumerate() {
            w.write_record([c.to_string(), k.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Little-endian `f64` payload, column-major.
    pub fn write_payload<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = Vec::with_capacity(8 * self.entries.len());
        for v in &self.entries {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    /// CSV payload for small systems: one line per row of the matrix.
    pub fn write_payload_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols()).map(|c| self.get(r, c).to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read<R1: Read, R2: Read, R3: Read>(header: R1, pair_map: R2, mut payload: R3) -> Result<Self> {
        let mut text = String::new();
        let mut header = header;
        header.read_to_string(&mut text)?;
        let bad = |msg: String| Error::InvalidArgument(format!("sensitivity header: {msg}"));
        let field = |key: &str| -> Result<String> {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("missing `{key}`")))
        };
        let rows: usize = field("rows")?.parse().map_err(|_| bad("rows".into()))?;
        let cols: usize = field("cols")?.parse().map_err(|_| bad("cols".into()))?;
        let delta: f64 = field("delta")?.parse().map_err(|_| bad("delta".into()))?;
        let merged: bool = field("merged")?.parse().map_err(|_| bad("merged".into()))?;

        let mut pairs = Vec::with_capacity(cols);
        let mut r = csv::Reader::from_reader(pair_map);
        for (c, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<usize> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| bad(format!("pair map row {c}")))
            };
            if parse(0)? != c {
                return Err(bad(format!("pair map row {c} out of order")));
            }
            pairs.push((parse(1)?, parse(2)?));
        }
        if pairs.len() != cols {
            return Err(bad(format!("pair map has {} rows, header says {cols}", pairs.len())));
        }

        let mut bytes = Vec::new();
        payload.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * rows * cols {
            return Err(bad(format!("payload has {} bytes, expected {}", bytes.len(), 8 * rows * cols)));
        }
        let entries = bytes
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Self::from_parts(rows, pairs, entries, delta, merged)
    }
}

/// Builds `𝕊_δ` over the retained pairs of the bank's elements.
pub fn assemble_sensitivity<T: Real>(
    mesh: &Mesh<T>,
    basis: &BasisBank<T>,
    u0_gradients: &[Vec<[T; 2]>],
    delta: T,
    merged: bool,
) -> Result<SensitivitySystem<T>> {
    if !(delta >= T::zero()) {
        return Err(Error::InvalidArgument(format!("reduction radius δ = {delta} must be non-negative")));
    }
    let assembler = SensitivityAssembler::new(mesh, basis, u0_gradients)?;
    let pairs = retained_pairs(mesh, basis.elements(), delta, merged);
    if pairs.is_empty() {
        return Err(Error::EmptySystem);
    }
    let rows = assembler.rows();
    let mut entries = vec![T::zero(); rows * pairs.len()];
    entries
        .par_chunks_mut(rows)
        .zip(pairs.par_iter())
        .for_each(|(col, &(k, l))| col.copy_from_slice(&assembler.column(k, l, merged)));
    SensitivitySystem::from_parts(rows, pairs, entries, delta.as_f64(), merged)
}

/// Largest `max_{ij}|S_{kℓ}^{ij}|` per centroid-distance bin of width
/// `bin_width`, over all pairs of the assembler's elements. Empty bins are
/// reported as `None`.
pub fn decay_profile<T: Real>(
    mesh: &Mesh<T>,
    assembler: &SensitivityAssembler<T>,
    bin_width: T,
) -> Vec<Option<T>> {
    let elements = assembler.elements();
    let bins = (mesh.diameter() / bin_width).ceil().to_usize().unwrap_or(0) + 1;
    elements
        .par_iter()
        .enumerate()
        .map(|(a, &k)| {
            let mut local = vec![None::<T>; bins];
            for &l in &elements[a..] {
                let bin = (pair_distance(mesh, k, l) / bin_width)
                    .floor()
                    .to_usize()
                    .unwrap_or(0)
                    .min(bins - 1);
                let m = assembler.column_max(k, l);
                local[bin] = Some(local[bin].map_or(m, |x: T| x.max(m)));
            }
            local
        })
        .reduce(
            || vec![None; bins],
            |a, b| {
                a.into_iter()
                    .zip(b)
                    .map(|(x, y)| match (x, y) {
                        (Some(x), Some(y)) => Some(x.max(y)),
                        (x, None) => x,
                        (None, y) => y,
                    })
                    .collect()
            },
        )
}
