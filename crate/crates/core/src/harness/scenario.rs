use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::membrane::{poisson_solve, PressureField};
use crate::mesh::{build_mesh, interior_mask, place_electrodes, ElectrodeLayout, InteriorMask, Mesh, Shape};
use crate::scalar::Real;

/// Target peak membrane slope used when `p0 = "auto"`.
pub const TARGET_SLOPE: f64 = 0.2;

/// A pressure scenario read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub shape: Shape,
    /// Side length of the square or radius of the disk.
    pub size: f64,
    /// Target element count.
    pub elements: usize,
    #[serde(default = "defaults::electrodes")]
    pub electrodes: usize,
    #[serde(default = "defaults::coverage")]
    pub coverage: f64,
    /// Pressure is confined to elements farther than `d0` from the boundary.
    #[serde(default)]
    pub d0: f64,
    #[serde(default = "defaults::one")]
    pub current: f64,
    #[serde(default)]
    pub p0: Amplitude,
    #[serde(default)]
    pub delta: Radius,
    #[serde(default)]
    pub beta: Beta,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::yes")]
    pub merge_pairs: bool,
    pub inclusions: Vec<Inclusion>,
}

mod defaults {
    pub fn electrodes() -> usize {
        16
    }
    pub fn coverage() -> f64 {
        0.5
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn yes() -> bool {
        true
    }
}

/// A patch of uniform pressure `magnitude · p0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Inclusion {
    Rect {
        min: [f64; 2],
        max: [f64; 2],
        #[serde(default = "defaults::one")]
        magnitude: f64,
    },
    Disk {
        center: [f64; 2],
        radius: f64,
        #[serde(default = "defaults::one")]
        magnitude: f64,
    },
}

impl Inclusion {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Inclusion::Rect { min, max, .. } => {
                (min[0]..=max[0]).contains(&p[0]) && (min[1]..=max[1]).contains(&p[1])
            }
            Inclusion::Disk { center, radius, .. } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) <= radius
            }
        }
    }

    pub fn magnitude(&self) -> f64 {
        match *self {
            Inclusion::Rect { magnitude, .. } | Inclusion::Disk { magnitude, .. } => magnitude,
        }
    }

    /// Whether the whole patch keeps at least `margin` from the boundary of
    /// the continuous domain.
    fn inside(&self, shape: Shape, size: f64, margin: f64) -> bool {
        let point_ok = |p: [f64; 2], extra: f64| match shape {
            Shape::Square => {
                let m = margin + extra;
                p[0] >= m && p[1] >= m && p[0] <= size - m && p[1] <= size - m
            }
            Shape::Disk => p[0].hypot(p[1]) <= size - margin - extra,
        };
        match *self {
            Inclusion::Rect { min, max, .. } => {
                min[0] < max[0]
                    && min[1] < max[1]
                    && [min, max, [min[0], max[1]], [max[0], min[1]]]
                        .iter()
                        .all(|&c| point_ok(c, 0.0))
            }
            Inclusion::Disk { center, radius, .. } => radius > 0.0 && point_ok(center, radius),
        }
    }
}

/// A value given either as a number or as a keyword in the scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrText {
    Num(f64),
    Text(String),
}

macro_rules! keyword_or_number {
    ($ty:ident) => {
        impl TryFrom<NumOrText> for $ty {
            type Error = Error;
            fn try_from(v: NumOrText) -> Result<Self> {
                match v {
                    NumOrText::Num(x) => x.to_string().parse(),
                    NumOrText::Text(s) => s.parse(),
                }
            }
        }

        impl From<$ty> for NumOrText {
            fn from(v: $ty) -> Self {
                let s = v.to_string();
                match s.parse::<f64>() {
                    Ok(x) => NumOrText::Num(x),
                    Err(_) => NumOrText::Text(s),
                }
            }
        }
    };
}

/// Reduction radius `δ`: absolute, or a multiple of the mesh size (`"5h"`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NumOrText", into = "NumOrText")]
pub enum Radius {
    Absolute(f64),
    MeshMultiple(f64),
}

impl Default for Radius {
    fn default() -> Self {
        Radius::MeshMultiple(5.0)
    }
}

impl Radius {
    pub fn resolve(self, h: f64) -> f64 {
        match self {
            Radius::Absolute(d) => d,
            Radius::MeshMultiple(m) => m * h,
        }
    }
}

impl fmt::Display for Radius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Radius::Absolute(d) => write!(f, "{d}"),
            Radius::MeshMultiple(m) => write!(f, "{m}h"),
        }
    }
}

impl FromStr for Radius {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("δ must be a number or a multiple like `5h`, got `{s}`"));
        let r = match s.strip_suffix('h') {
            Some("") => Radius::MeshMultiple(1.0),
            Some(m) => Radius::MeshMultiple(m.trim().parse().map_err(|_| bad())?),
            None => Radius::Absolute(s.parse().map_err(|_| bad())?),
        };
        match r {
            Radius::Absolute(x) | Radius::MeshMultiple(x) if x.is_finite() && x >= 0.0 => Ok(r),
            _ => Err(bad()),
        }
    }
}

keyword_or_number!(Radius);

/// Regularization weight: fixed or chosen by the discrepancy principle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "NumOrText", into = "NumOrText")]
pub enum Beta {
    #[default]
    Discrepancy,
    Fixed(f64),
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Discrepancy => f.write_str("discrepancy"),
            Beta::Fixed(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for Beta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "discrepancy" {
            return Ok(Beta::Discrepancy);
        }
        match s.trim().parse::<f64>() {
            Ok(b) if b > 0.0 && b.is_finite() => Ok(Beta::Fixed(b)),
            _ => Err(Error::InvalidArgument(format!(
                "β must be positive or `discrepancy`, got `{s}`"
            ))),
        }
    }
}

keyword_or_number!(Beta);

/// Pressure scale: fixed, or chosen from a pilot solve (`"auto"`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "NumOrText", into = "NumOrText")]
pub enum Amplitude {
    #[default]
    Auto,
    Fixed(f64),
}

impl fmt::Display for Amplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Amplitude::Auto => f.write_str("auto"),
            Amplitude::Fixed(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for Amplitude {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "auto" {
            return Ok(Amplitude::Auto);
        }
        match s.trim().parse::<f64>() {
            Ok(p) if p.is_finite() => Ok(Amplitude::Fixed(p)),
            _ => Err(Error::InvalidArgument(format!("p0 must be a number or `auto`, got `{s}`"))),
        }
    }
}

keyword_or_number!(Amplitude);

/// Mesh, electrodes and interior mask of a scenario.
#[derive(Debug, Clone)]
pub struct Setup<T> {
    pub mesh: Mesh<T>,
    pub layout: ElectrodeLayout,
    pub mask: InteriorMask,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::Scenario(e.message().to_owned()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let scenario: Scenario = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            msg: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Scenario(msg));
        let finite = [self.size, self.coverage, self.d0, self.current, self.noise];
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("numeric fields must be finite".into());
        }
        if self.size <= 0.0 {
            return bad(format!("size {} must be positive", self.size));
        }
        if self.elements == 0 || self.electrodes == 0 {
            return bad("element and electrode counts must be positive".into());
        }
        if self.d0 < 0.0 || self.noise < 0.0 || self.current <= 0.0 {
            return bad("d0 and noise must be non-negative, current positive".into());
        }
        for (i, inc) in self.inclusions.iter().enumerate() {
            if !inc.magnitude().is_finite() {
                return bad(format!("inclusion {i} has a non-finite magnitude"));
            }
            if !inc.inside(self.shape, self.size, self.d0) {
                return bad(format!("inclusion {i} does not lie inside the interior region (d0 = {})", self.d0));
            }
        }
        Ok(())
    }

    pub fn setup<T: Real>(&self) -> Result<Setup<T>> {
        let mesh = build_mesh(self.shape, self.elements, T::lit(self.size))?;
        let layout = place_electrodes(&mesh, self.electrodes, self.coverage)?;
        let mask = interior_mask(&mesh, T::lit(self.d0))?;
        Ok(Setup { mesh, layout, mask })
    }

    /// Per-element pressure for `p0 = 1`: the summed magnitudes of the
    /// inclusions containing each element centroid, zero outside the mask.
    pub fn pattern<T: Real>(&self, setup: &Setup<T>) -> Result<Vec<T>> {
        let mesh = &setup.mesh;
        let mut values = vec![T::zero(); mesh.num_elements()];
        for (i, inc) in self.inclusions.iter().enumerate() {
            let mut hit = false;
            for (k, c) in mesh.centroids().iter().enumerate() {
                if setup.mask.contains(k) && inc.contains([c[0].as_f64(), c[1].as_f64()]) {
                    values[k] += T::lit(inc.magnitude());
                    hit = true;
                }
            }
            if !hit {
                return Err(Error::Scenario(format!("inclusion {i} covers no interior element centroid")));
            }
        }
        Ok(values)
    }

    /// The scale `p0`; in `auto` mode the linearized pilot solve `Δw = p`
    /// fixes it so the peak slope is [`TARGET_SLOPE`].
    pub fn resolve_p0<T: Real>(&self, setup: &Setup<T>) -> Result<f64> {
        match self.p0 {
            Amplitude::Fixed(p) => Ok(p),
            Amplitude::Auto => {
                let pattern = self.pattern(setup)?;
                if pattern.iter().all(|v| v.is_zero()) {
                    return Ok(0.0);
                }
                let pilot = poisson_solve(&setup.mesh, &pattern)?;
                Ok(TARGET_SLOPE / pilot.max_slope().as_f64())
            }
        }
    }

    pub fn pressure<T: Real>(&self, setup: &Setup<T>) -> Result<(PressureField<T>, f64)> {
        let p0 = self.resolve_p0(setup)?;
        let values = self
            .pattern(setup)?
            .into_iter()
            .map(|v| v * T::lit(p0))
            .collect();
        Ok((PressureField::new(values, setup.mask.clone())?, p0))
    }
}
