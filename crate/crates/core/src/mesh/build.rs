use super::{Mesh, Point, Shape};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Builds a square or disk mesh with `target_k` elements.
///
/// The square is an `m × m` grid with every cell split along the same
/// diagonal, so `target_k` must equal `2m²`. The disk is a polar mesh of
/// concentric node rings whose populations grow linearly with the radius,
/// which keeps element areas nearly uniform; the outermost ring absorbs the
/// rounding so the element count is hit exactly.
pub fn build_mesh<T: Real>(shape: Shape, target_k: usize, size: T) -> Result<Mesh<T>> {
    if target_k < 8 {
        return Err(Error::InvalidMesh(format!(
            "target element count {target_k} is below the minimum of 8"
        )));
    }
    if !(size > T::zero()) || !size.is_finite() {
        return Err(Error::InvalidMesh("domain size must be positive".into()));
    }
    match shape {
        Shape::Square => {
            let m = (target_k as f64 / 2.0).sqrt().round() as usize;
            if 2 * m * m != target_k {
                return Err(Error::InvalidMesh(format!(
                    "square meshes need K = 2m² elements; {target_k} is not of that form"
                )));
            }
            square_mesh(m, size)
        }
        Shape::Disk => {
            let rings = disk_rings(target_k)?;
            disk_mesh(&rings, size)
        }
    }
}

/// Polar disk mesh with `ring_count` equally spaced node rings.
///
/// Doubling `ring_count` halves the radial spacing and keeps every ring
/// radius of the coarser mesh, which makes this family convenient for
/// refinement studies with an interface at a fixed radius.
pub fn disk_mesh_with_rings<T: Real>(ring_count: usize, radius: T) -> Result<Mesh<T>> {
    if ring_count == 0 {
        return Err(Error::InvalidMesh("a disk mesh needs at least one ring".into()));
    }
    if !(radius > T::zero()) {
        return Err(Error::InvalidMesh("domain size must be positive".into()));
    }
    let c = std::f64::consts::PI * 3f64.sqrt();
    let rings: Vec<usize> = (1..=ring_count)
        .map(|r| ((c * r as f64).round() as usize).max(3))
        .collect();
    disk_mesh(&rings, radius)
}

pub(crate) fn square_mesh<T: Real>(m: usize, size: T) -> Result<Mesh<T>> {
    let h = size / T::lit(m as f64);
    let id = |i: usize, j: usize| j * (m + 1) + i;
    let mut nodes = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            nodes.push([T::lit(i as f64) * h, T::lit(j as f64) * h]);
        }
    }
    let mut elements = Vec::with_capacity(2 * m * m);
    for j in 0..m {
        for i in 0..m {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    let mut loop_nodes = Vec::with_capacity(4 * m);
    loop_nodes.extend((0..m).map(|i| id(i, 0)));
    loop_nodes.extend((0..m).map(|j| id(m, j)));
    loop_nodes.extend((0..m).map(|i| id(m - i, m)));
    loop_nodes.extend((0..m).map(|j| id(0, m - j)));
    let boundary = close_loop(&loop_nodes);
    Mesh::from_parts(Shape::Square, size, h, nodes, elements, boundary)
}

/// Node counts per ring, innermost first.
fn disk_rings(target_k: usize) -> Result<Vec<usize>> {
    // Rings of c·r nodes give c·R² triangles; c = π√3 makes the triangles
    // close to equilateral.
    let ideal = std::f64::consts::PI * 3f64.sqrt();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r_count in 1..=((target_k as f64).sqrt() as usize + 1) {
        let c = target_k as f64 / (r_count * r_count) as f64;
        if !(4.0..=9.0).contains(&c) {
            continue;
        }
        let mut rings: Vec<usize> = (1..r_count)
            .map(|r| ((c * r as f64).round() as usize).max(3))
            .collect();
        let inner: usize = rings.iter().sum();
        if 2 * inner >= target_k {
            continue;
        }
        let outer = target_k - 2 * inner;
        let nominal = c * r_count as f64;
        if outer < 3 || (outer as f64 - nominal).abs() > 0.1 * nominal + 1.0 {
            continue;
        }
        if rings.last().is_some_and(|&prev| prev > outer) {
            continue;
        }
        rings.push(outer);
        let score = (c - ideal).abs();
        if best.as_ref().map_or(true, |(s, _)| score < *s) {
            best = Some((score, rings));
        }
    }
    best.map(|(_, r)| r).ok_or_else(|| {
        Error::InvalidMesh(format!("no polar ring layout yields {target_k} elements"))
    })
}

pub(crate) fn disk_mesh<T: Real>(rings: &[usize], radius: T) -> Result<Mesh<T>> {
    let r_count = rings.len();
    let two_pi = T::TAU();
    let mut nodes: Vec<Point<T>> = vec![[T::zero(), T::zero()]];
    let mut ring_start = Vec::with_capacity(r_count);
    for (r, &count) in rings.iter().enumerate() {
        ring_start.push(nodes.len());
        let rad = radius * T::lit((r + 1) as f64) / T::lit(r_count as f64);
        for k in 0..count {
            let theta = two_pi * T::lit(k as f64) / T::lit(count as f64);
            nodes.push([rad * theta.cos(), rad * theta.sin()]);
        }
    }

    let mut elements = Vec::new();
    let n1 = rings[0];
    for k in 0..n1 {
        elements.push([0, ring_start[0] + k, ring_start[0] + (k + 1) % n1]);
    }
    for r in 1..r_count {
        let (na, nb) = (rings[r - 1], rings[r]);
        let (sa, sb) = (ring_start[r - 1], ring_start[r]);
        let (mut i, mut j) = (0usize, 0usize);
        while i < na || j < nb {
            // compare angular positions of the next node on each ring
            let next_a = (i + 1) as f64 / na as f64;
            let next_b = (j + 1) as f64 / nb as f64;
            let a = sa + i % na;
            let b = sb + j % nb;
            if j < nb && (i == na || next_b <= next_a) {
                elements.push([a, b, sb + (j + 1) % nb]);
                j += 1;
            } else {
                elements.push([a, b, sa + (i + 1) % na]);
                i += 1;
            }
        }
    }

    let outer = ring_start[r_count - 1];
    let n_outer = rings[r_count - 1];
    let loop_nodes: Vec<usize> = (0..n_outer).map(|k| outer + k).collect();
    let boundary = close_loop(&loop_nodes);

    let provisional = Mesh::from_parts(Shape::Disk, radius, radius, nodes, elements, boundary)?;
    // Leg of the right isosceles triangle with the mean element area, so the
    // disk uses the same notion of side length as the square grid.
    let mean_area = provisional.total_area() / T::lit(provisional.num_elements() as f64);
    let h = (T::lit(2.0) * mean_area).sqrt();
    Ok(Mesh { h, ..provisional })
}

fn close_loop(nodes: &[usize]) -> Vec<[usize; 2]> {
    (0..nodes.len())
        .map(|i| [nodes[i], nodes[(i + 1) % nodes.len()]])
        .collect()
}
