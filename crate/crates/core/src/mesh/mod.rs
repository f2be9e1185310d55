//! Triangular meshes of the sensor domain and the P1 scaffolding built on them.

mod build;
mod electrodes;
pub mod fem;
mod io;
mod mask;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use build::{build_mesh, disk_mesh_with_rings};
pub use electrodes::{place_electrodes, ElectrodeLayout};
pub use io::{read_mesh, write_mesh};
pub use mask::{interior_mask, InteriorMask};

pub type Point<T> = [T; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Disk,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Disk => "disk",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(Shape::Square),
            "disk" | "circle" => Ok(Shape::Disk),
            other => Err(Error::InvalidArgument(format!("unknown shape `{other}`"))),
        }
    }
}

/// Triangulated domain with precomputed P1 data.
///
/// Square meshes cover `[0, size]²`; disk meshes cover the disk of radius
/// `size` centred at the origin. Elements are counterclockwise, and the
/// boundary edges form one counterclockwise loop that starts at the shape's
/// reference point (the origin corner of the square, the positive x-axis of
/// the disk).
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    shape: Shape,
    size: T,
    h: T,
    nodes: Vec<Point<T>>,
    elements: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    on_boundary: Vec<bool>,
    areas: Vec<T>,
    gradients: Vec<[Point<T>; 3]>,
    centroids: Vec<Point<T>>,
}

impl<T: Real> Mesh<T> {
    /// Assembles a mesh from raw connectivity, validating orientation and the
    /// boundary loop.
    pub fn from_parts(
        shape: Shape,
        size: T,
        h: T,
        nodes: Vec<Point<T>>,
        elements: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
    ) -> Result<Self> {
        if nodes.is_empty() || elements.is_empty() {
            return Err(Error::InvalidMesh("mesh has no nodes or elements".into()));
        }
        let n = nodes.len();
        let mut areas = Vec::with_capacity(elements.len());
        let mut gradients = Vec::with_capacity(elements.len());
        let mut centroids = Vec::with_capacity(elements.len());
        let three = T::lit(3.0);
        for (k, tri) in elements.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!("element {k} references a missing node")));
            }
            let [a, b, c] = tri.map(|v| nodes[v]);
            let twice = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if !(twice > T::zero()) {
                return Err(Error::InvalidMesh(format!(
                    "element {k} has non-positive signed area"
                )));
            }
            areas.push(twice / T::lit(2.0));
            // ∇φ_i = rot90(opposite edge) / (2A)
            let g = |p: Point<T>, q: Point<T>| [(p[1] - q[1]) / twice, (q[0] - p[0]) / twice];
            gradients.push([g(b, c), g(c, a), g(a, b)]);
            centroids.push([(a[0] + b[0] + c[0]) / three, (a[1] + b[1] + c[1]) / three]);
        }

        check_boundary(&elements, &boundary_edges)?;
        let mut on_boundary = vec![false; n];
        for e in &boundary_edges {
            on_boundary[e[0]] = true;
            on_boundary[e[1]] = true;
        }

        Ok(Self {
            shape,
            size,
            h,
            nodes,
            elements,
            boundary_edges,
            on_boundary,
            areas,
            gradients,
            centroids,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Side length of the square, radius of the disk.
    pub fn size(&self) -> T {
        self.size
    }

    /// Nominal element side length: the leg of a right isosceles triangle with
    /// the mean element area (the grid spacing on the square).
    pub fn h(&self) -> T {
        self.h
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> &[Point<T>] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn is_boundary_node(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        self.boundary_edges.iter().map(|e| e[0]).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&v| !self.on_boundary[v]).collect()
    }

    pub fn areas(&self) -> &[T] {
        &self.areas
    }

    pub fn gradients(&self) -> &[[Point<T>; 3]] {
        &self.gradients
    }

    pub fn centroids(&self) -> &[Point<T>] {
        &self.centroids
    }

    pub fn total_area(&self) -> T {
        self.areas.iter().copied().sum()
    }

    pub fn edge_length(&self, e: [usize; 2]) -> T {
        let (p, q) = (self.nodes[e[0]], self.nodes[e[1]]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    pub fn perimeter(&self) -> T {
        self.boundary_edges.iter().map(|&e| self.edge_length(e)).sum()
    }

    pub fn max_edge_length(&self) -> T {
        self.elements
            .iter()
            .flat_map(|t| [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]])
            .map(|e| self.edge_length(e))
            .fold(T::zero(), T::max)
    }

    /// Largest distance between two nodes.
    pub fn diameter(&self) -> T {
        match self.shape {
            Shape::Square => self.size * T::SQRT_2(),
            Shape::Disk => self.size + self.size,
        }
    }

    /// Euclidean distance from `p` to the polygonal boundary.
    pub fn distance_to_boundary(&self, p: Point<T>) -> T {
        self.boundary_edges
            .iter()
            .map(|e| segment_distance(p, self.nodes[e[0]], self.nodes[e[1]]))
            .fold(T::infinity(), T::min)
    }

    /// Elements sharing an edge with each element.
    pub fn element_neighbors(&self) -> Vec<Vec<usize>> {
        let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (k, t) in self.elements.iter().enumerate() {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                by_edge.entry((a.min(b), a.max(b))).or_default().push(k);
            }
        }
        let mut nbrs = vec![Vec::new(); self.num_elements()];
        for ks in by_edge.values() {
            if let [k, l] = ks[..] {
                nbrs[k].push(l);
                nbrs[l].push(k);
            }
        }
        for list in &mut nbrs {
            list.sort_unstable();
        }
        nbrs
    }

    /// Index of the element containing `p`, if any.
    pub fn locate(&self, p: Point<T>) -> Option<usize> {
        let eps = T::lit(-1e-12);
        self.elements.iter().position(|t| {
            let [a, b, c] = t.map(|v| self.nodes[v]);
            let s = |u: Point<T>, v: Point<T>| {
                (v[0] - u[0]) * (p[1] - u[1]) - (p[0] - u[0]) * (v[1] - u[1])
            };
            s(a, b) >= eps && s(b, c) >= eps && s(c, a) >= eps
        })
    }
}

pub(crate) fn segment_distance<T: Real>(p: Point<T>, a: Point<T>, b: Point<T>) -> T {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > T::zero() {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2)
            .max(T::zero())
            .min(T::one())
    } else {
        T::zero()
    };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    (p[0] - qx).hypot(p[1] - qy)
}

/// Boundary edges must be exactly the edges used by one element, with the
/// element's orientation, chained into a single closed loop.
fn check_boundary(elements: &[[usize; 3]], boundary: &[[usize; 2]]) -> Result<()> {
    let mut count: HashMap<(usize, usize), (u32, (usize, usize))> = HashMap::new();
    for t in elements {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let entry = count.entry((a.min(b), a.max(b))).or_insert((0, (a, b)));
            entry.0 += 1;
        }
    }
    let mut expected: Vec<(usize, usize)> = count
        .values()
        .filter(|(c, _)| *c == 1)
        .map(|&(_, e)| e)
        .collect();
    let mut given: Vec<(usize, usize)> = boundary.iter().map(|e| (e[0], e[1])).collect();
    expected.sort_unstable();
    given.sort_unstable();
    if expected != given {
        return Err(Error::InvalidMesh(
            "boundary edges do not match the element boundary with outward orientation".into(),
        ));
    }
    for (i, e) in boundary.iter().enumerate() {
        let next = boundary[(i + 1) % boundary.len()];
        if e[1] != next[0] {
            return Err(Error::InvalidMesh(format!(
                "boundary edge {i} does not chain into edge {}",
                (i + 1) % boundary.len()
            )));
        }
    }
    Ok(())
}
