use serde::Serialize;

use crate::error::Result;
use crate::mesh::{build_mesh, InteriorMask, Shape};
use crate::sensitivity::count_columns;

/// Reference `δ = 5h` column counts: (square, disk).
pub const REFERENCE_REDUCED_COLUMNS: (usize, usize) = (28018, 43814);

const ELECTRODES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    /// `"0"`, `"5h"` or `"diam"`.
    pub label: &'static str,
    pub delta: f64,
    pub rows: usize,
    pub columns: usize,
    /// Column count with `(k, ℓ)` and `(ℓ, k)` merged.
    pub merged_columns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Report {
    pub shape: Shape,
    pub elements: usize,
    pub h: f64,
    pub rows: Vec<Table1Row>,
    pub reference_reduced_columns: usize,
}

impl Table1Report {
    fn row(&self, label: &str) -> &Table1Row {
        self.rows.iter().find(|r| r.label == label).expect("row present")
    }

    /// Signed deviation of our `δ = 5h` count from the reference one, for
    /// unmerged and merged counting.
    pub fn reduced_deviation(&self) -> (f64, f64) {
        let row = self.row("5h");
        let reference = self.reference_reduced_columns as f64;
        (
            (row.columns as f64 - reference) / reference,
            (row.merged_columns as f64 - reference) / reference,
        )
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "{} mesh: K = {}, h = {:.6}, N = {ELECTRODES}\n{:>6} {:>10} {:>16} {:>16}\n",
            self.shape, self.elements, self.h, "delta", "value", "unmerged", "merged"
        );
        for r in &self.rows {
            s += &format!(
                "{:>6} {:>10.6} {:>16} {:>16}\n",
                r.label,
                r.delta,
                format!("{}x{}", r.rows, r.columns),
                format!("{}x{}", r.rows, r.merged_columns)
            );
        }
        let (unmerged, merged) = self.reduced_deviation();
        s += &format!(
            "reference 5h: {}x{}  deviation: unmerged {:+.1}%, merged {:+.1}%\n",
            ELECTRODES * ELECTRODES,
            self.reference_reduced_columns,
            100.0 * unmerged,
            100.0 * merged
        );
        s
    }
}

/// Reduced-matrix dimensions on the reference meshes (unit square with
/// `K = 512`, unit disk with `K = 661`, every element interior) for
/// `δ ∈ {0, 5h, diam Ω}`.
pub fn table1(shape: Shape) -> Result<Table1Report> {
    let (k, reference) = match shape {
        Shape::Square => (512, REFERENCE_REDUCED_COLUMNS.0),
        Shape::Disk => (661, REFERENCE_REDUCED_COLUMNS.1),
    };
    let mesh = build_mesh::<f64>(shape, k, 1.0)?;
    let mask = InteriorMask::all(mesh.num_elements());
    let rows = [("0", 0.0), ("5h", 5.0 * mesh.h()), ("diam", mesh.diameter())]
        .into_iter()
        .map(|(label, delta)| Table1Row {
            label,
            delta,
            rows: ELECTRODES * ELECTRODES,
            columns: count_columns(&mesh, &mask, delta, false),
            merged_columns: count_columns(&mesh, &mask, delta, true),
        })
        .collect();
    Ok(Table1Report {
        shape,
        elements: mesh.num_elements(),
        h: mesh.h(),
        rows,
        reference_reduced_columns: reference,
    })
}
