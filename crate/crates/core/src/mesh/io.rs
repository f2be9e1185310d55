use std::io::{BufRead, Write};

use super::{ElectrodeLayout, Mesh, Shape};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &str = "membrane-eit mesh 1";

/// Writes the plain-text mesh format: a header, then `nodes n` followed by
/// `x y` lines, `elements k` followed by 0-based index triples,
/// `boundary_edges m` followed by index pairs, and optionally
/// `electrodes n coverage` followed by one line per arc listing its boundary
/// edge indices.
pub fn write_mesh<T: Real, W: Write>(
    mesh: &Mesh<T>,
    layout: Option<&ElectrodeLayout>,
    mut out: W,
) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "shape {}", mesh.shape())?;
    writeln!(out, "size {}", mesh.size())?;
    writeln!(out, "h {}", mesh.h())?;
    writeln!(out, "nodes {}", mesh.num_nodes())?;
    for p in mesh.nodes() {
        writeln!(out, "{} {}", p[0], p[1])?;
    }
    writeln!(out, "elements {}", mesh.num_elements())?;
    for t in mesh.elements() {
        writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "boundary_edges {}", mesh.boundary_edges().len())?;
    for e in mesh.boundary_edges() {
        writeln!(out, "{} {}", e[0], e[1])?;
    }
    if let Some(layout) = layout {
        writeln!(out, "electrodes {} {}", layout.len(), layout.coverage())?;
        for arc in layout.arcs() {
            let cols: Vec<String> = arc.iter().map(usize::to_string).collect();
            writeln!(out, "{}", cols.join(" "))?;
        }
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        return Ok(line);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn try_next_line(&mut self) -> Result<Option<String>> {
        for line in self.inner.by_ref() {
            self.line += 1;
            let line = line?;
            if !line.trim().is_empty() {
                return Ok(Some(line));
            }
        }
        Ok(None)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::MeshFormat {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<String>> {
        let line = self.next_line()?;
        self.split_keyed(&line, key)
    }

    fn split_keyed(&self, line: &str, key: &str) -> Result<Vec<String>> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(parts.map(str::to_owned).collect())
    }

    fn parse<V: std::str::FromStr>(&self, s: &str) -> Result<V> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let v = self.keyed(key)?;
        match v.first() {
            Some(s) => self.parse(s),
            None => Err(self.err(format!("`{key}` needs a count"))),
        }
    }

    fn row<V: std::str::FromStr + Copy + Default, const D: usize>(&mut self) -> Result<[V; D]> {
        let line = self.next_line()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != D {
            return Err(self.err(format!("expected {D} fields, found {}", fields.len())));
        }
        let mut out = [V::default(); D];
        for (o, f) in out.iter_mut().zip(fields) {
            *o = self.parse(f)?;
        }
        Ok(out)
    }
}

pub fn read_mesh<T: Real, R: BufRead>(input: R) -> Result<(Mesh<T>, Option<ElectrodeLayout>)> {
    let mut lines = Lines {
        inner: input.lines(),
        line: 0,
    };
    if lines.next_line()?.trim() != MAGIC {
        return Err(lines.err("missing mesh header"));
    }
    let shape: Shape = {
        let v = lines.keyed("shape")?;
        v.first()
            .ok_or_else(|| lines.err("missing shape"))?
            .parse()
            .map_err(|_| lines.err("unknown shape"))?
    };
    let size_field = lines.keyed("size")?;
    let size: T = lines.parse(size_field.first().map_or("", |s| s))?;
    let h_field = lines.keyed("h")?;
    let h: T = lines.parse(h_field.first().map_or("", |s| s))?;

    let n = lines.count("nodes")?;
    let nodes = (0..n).map(|_| lines.row::<T, 2>()).collect::<Result<Vec<_>>>()?;
    let k = lines.count("elements")?;
    let elements = (0..k).map(|_| lines.row::<usize, 3>()).collect::<Result<Vec<_>>>()?;
    let m = lines.count("boundary_edges")?;
    let edges = (0..m).map(|_| lines.row::<usize, 2>()).collect::<Result<Vec<_>>>()?;
    let mesh = Mesh::from_parts(shape, size, h, nodes, elements, edges)?;

    let layout = match lines.try_next_line()? {
        None => None,
        Some(line) => {
            let head = lines.split_keyed(&line, "electrodes")?;
            if head.len() != 2 {
                return Err(lines.err("`electrodes` needs a count and a coverage"));
            }
            let count: usize = lines.parse(&head[0])?;
            let coverage: f64 = lines.parse(&head[1])?;
            let mut arcs = Vec::with_capacity(count);
            for _ in 0..count {
                let line = lines.next_line()?;
                let arc = line
                    .split_whitespace()
                    .map(|s| lines.parse::<usize>(s))
                    .collect::<Result<Vec<_>>>()?;
                arcs.push(arc);
            }
            Some(ElectrodeLayout::from_arcs(&mesh, arcs, coverage)?)
        }
    };
    Ok((mesh, layout))
}
