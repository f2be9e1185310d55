use super::Mesh;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Elements whose centroid lies farther than `d0` from the boundary; only
/// these may carry pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorMask {
    flags: Vec<bool>,
    d0: f64,
}

impl InteriorMask {
    pub fn from_flags(flags: Vec<bool>, d0: f64) -> Result<Self> {
        if !flags.iter().any(|&f| f) {
            return Err(Error::EmptyMask(d0));
        }
        Ok(Self { flags, d0 })
    }

    pub fn all(num_elements: usize) -> Self {
        Self {
            flags: vec![true; num_elements],
            d0: 0.0,
        }
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn contains(&self, k: usize) -> bool {
        self.flags[k]
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// Flagged element indices in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.flags.len()).filter(|&k| self.flags[k]).collect()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

pub fn interior_mask<T: Real>(mesh: &Mesh<T>, d0: T) -> Result<InteriorMask> {
    if !(d0 >= T::zero()) {
        return Err(Error::InvalidArgument(format!("standoff d0 = {d0} must be non-negative")));
    }
    let flags = mesh
        .centroids()
        .iter()
        .map(|&c| mesh.distance_to_boundary(c) > d0)
        .collect();
    InteriorMask::from_flags(flags, d0.as_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, Shape};

    #[test]
    fn zero_standoff_flags_everything() {
        let mesh = build_mesh::<f64>(Shape::Square, 512, 1.0).unwrap();
        assert_eq!(interior_mask(&mesh, 0.0).unwrap().count(), 512);
    }

    #[test]
    fn square_center_only() {
        let mesh = build_mesh::<f64>(Shape::Square, 512, 1.0).unwrap();
        let mask = interior_mask(&mesh, 0.45).unwrap();
        for (k, c) in mesh.centroids().iter().enumerate() {
            let d = c[0].min(c[1]).min(1.0 - c[0]).min(1.0 - c[1]);
            assert_eq!(mask.contains(k), d > 0.45, "element {k}");
        }
        assert!(mask.count() > 0 && mask.count() < 16);
    }

    #[test]
    fn disk_inner_region_area() {
        let mesh = build_mesh::<f64>(Shape::Disk, 661, 5.0).unwrap();
        let mask = interior_mask(&mesh, 3.0).unwrap();
        let area: f64 = mask.indices().iter().map(|&k| mesh.areas()[k]).sum();
        let exact = 4.0 * std::f64::consts::PI;
        assert!((area - exact).abs() / exact < 0.10, "area {area}");
    }

    #[test]
    fn oversized_standoff_is_empty() {
        let mesh = build_mesh::<f64>(Shape::Square, 32, 1.0).unwrap();
        assert!(matches!(interior_mask(&mesh, 0.6), Err(Error::EmptyMask(_))));
        assert!(interior_mask(&mesh, -0.1).is_err());
    }
}
