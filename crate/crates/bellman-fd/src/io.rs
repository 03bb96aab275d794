//! Grid-function CSV.
//!
//! ```text
//! T,tau,h,d,d1,R,o1,..,od,l1_1,..,l1_d,..,l{d1}_d
//! <one row of values>
//! j,i1,..,i{d1},value
//! <one row per level and node>
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting, so reading a file back
//! reproduces every value bit for bit.

use std::io::{BufRead, Write};
use std::sync::Arc;

use bellman_fd_core::{GridFunction, Mesh, MeshSpec};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Mesh(#[from] bellman_fd_core::Error),
}

fn header_names(spec: &MeshSpec) -> Vec<String> {
    let mut names: Vec<String> = ["T", "tau", "h", "d", "d1", "R"].iter().map(|s| s.to_string()).collect();
    names.extend((1..=spec.dim()).map(|k| format!("o{k}")));
    for l in 1..=spec.n_directions() {
        names.extend((1..=spec.dim()).map(|k| format!("l{l}_{k}")));
    }
    names
}

fn write_header(out: &mut impl Write, spec: &MeshSpec) -> std::io::Result<()> {
    writeln!(out, "{}", header_names(spec).join(","))?;
    let mut vals = vec![
        spec.horizon.to_string(),
        spec.tau.to_string(),
        spec.h.to_string(),
        spec.dim().to_string(),
        spec.n_directions().to_string(),
        spec.index_radius.to_string(),
    ];
    vals.extend(spec.origin.iter().map(f64::to_string));
    for l in &spec.directions {
        vals.extend(l.iter().map(f64::to_string));
    }
    writeln!(out, "{}", vals.join(","))?;
    let idx: Vec<String> = (1..=spec.n_directions()).map(|k| format!("i{k}")).collect();
    writeln!(out, "j,{},value", idx.join(","))
}

fn write_rows(out: &mut impl Write, mesh: &Mesh, levels: impl Iterator<Item = (usize, Vec<f64>)>) -> std::io::Result<()> {
    let mut idx = vec![0i64; mesh.n_directions()];
    for (j, values) in levels {
        for (node, v) in values.iter().enumerate() {
            mesh.multi_index_into(node, &mut idx);
            write!(out, "{j}")?;
            for i in &idx {
                write!(out, ",{i}")?;
            }
            writeln!(out, ",{v}")?;
        }
    }
    Ok(())
}

pub fn write_grid_csv(out: &mut impl Write, u: &GridFunction) -> std::io::Result<()> {
    let mesh = u.mesh();
    write_header(out, mesh.spec())?;
    write_rows(out, mesh, (0..=mesh.n_time()).map(|j| (j, u.slice(j).to_vec())))
}

/// A single spatial field (stationary solutions), written as level 0.
pub fn write_spatial_csv(out: &mut impl Write, mesh: &Mesh, values: &[f64]) -> std::io::Result<()> {
    write_header(out, mesh.spec())?;
    write_rows(out, mesh, std::iter::once((0, values.to_vec())))
}

/// Reads a file written by [`write_grid_csv`]. Every level and node must be
/// present exactly once.
pub fn read_grid_csv(input: impl BufRead) -> Result<GridFunction, CsvError> {
    let (mesh, rows) = read(input)?;
    let n = mesh.n_nodes();
    let mut values = vec![f64::NAN; (mesh.n_time() + 1) * n];
    let mut seen = vec![false; values.len()];
    for (line, j, node, v) in rows {
        if j > mesh.n_time() {
            return Err(CsvError::Format { line, message: format!("level {j} is beyond the last level") });
        }
        let k = j * n + node;
        if std::mem::replace(&mut seen[k], true) {
            return Err(CsvError::Format { line, message: "duplicate entry".into() });
        }
        values[k] = v;
    }
    if seen.iter().any(|s| !s) {
        return Err(CsvError::Format { line: 0, message: "missing grid entries".into() });
    }
    Ok(GridFunction::from_values(Arc::new(mesh), values)?)
}

/// Reads a file written by [`write_spatial_csv`].
pub fn read_spatial_csv(input: impl BufRead) -> Result<(Mesh, Vec<f64>), CsvError> {
    let (mesh, rows) = read(input)?;
    let mut values = vec![f64::NAN; mesh.n_nodes()];
    let mut count = 0;
    for (line, j, node, v) in rows {
        if j != 0 {
            return Err(CsvError::Format { line, message: "a spatial field has only level 0".into() });
        }
        values[node] = v;
        count += 1;
    }
    if count != mesh.n_nodes() {
        return Err(CsvError::Format { line: 0, message: "missing grid entries".into() });
    }
    Ok((mesh, values))
}

type Row = (usize, usize, usize, f64);

fn read(input: impl BufRead) -> Result<(Mesh, Vec<Row>), CsvError> {
    let mut lines = input.lines().enumerate().map(|(i, l)| l.map(|l| (i + 1, l)));
    let mut next = |what: &str| -> Result<(usize, String), CsvError> {
        lines.next().transpose()?.ok_or_else(|| CsvError::Format { line: 0, message: format!("missing {what}") })
    };
    next("header names")?;
    let (line, header) = next("header values")?;
    let bad = |message: String| CsvError::Format { line, message };
    let fields: Vec<&str> = header.split(',').collect();
    let num = |k: usize| -> Result<f64, CsvError> {
        fields
            .get(k)
            .ok_or_else(|| bad("header is too short".into()))?
            .trim()
            .parse::<f64>()
            .map_err(|e| bad(format!("header field {}: {e}", k + 1)))
    };
    let int = |k: usize| -> Result<usize, CsvError> {
        fields
            .get(k)
            .ok_or_else(|| bad("header is too short".into()))?
            .trim()
            .parse::<usize>()
            .map_err(|e| bad(format!("header field {}: {e}", k + 1)))
    };
    let (d, d1) = (int(3)?, int(4)?);
    if fields.len() != 6 + d + d * d1 {
        return Err(bad(format!("expected {} header fields, found {}", 6 + d + d * d1, fields.len())));
    }
    let origin = (0..d).map(|k| num(6 + k)).collect::<Result<Vec<_>, _>>()?;
    let directions = (0..d1)
        .map(|l| (0..d).map(|k| num(6 + d + l * d + k)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let spec = MeshSpec {
        horizon: num(0)?,
        tau: num(1)?,
        h: num(2)?,
        directions,
        origin,
        index_radius: int(5)?,
    };
    let mesh = Mesh::new(spec)?;
    next("column names")?;

    let mut rows = Vec::new();
    let mut idx = vec![0i64; d1];
    for item in lines {
        let (line, text) = item?;
        if text.trim().is_empty() {
            continue;
        }
        let bad = |message: String| CsvError::Format { line, message };
        let parts: Vec<&str> = text.split(',').collect();
        if parts.len() != d1 + 2 {
            return Err(bad(format!("expected {} fields, found {}", d1 + 2, parts.len())));
        }
        let j = parts[0].trim().parse::<usize>().map_err(|e| bad(format!("level: {e}")))?;
        for (k, slot) in idx.iter_mut().enumerate() {
            *slot = parts[1 + k].trim().parse::<i64>().map_err(|e| bad(format!("index: {e}")))?;
        }
        let node = mesh.node_of(&idx).ok_or_else(|| bad(format!("index {idx:?} is outside the box")))?;
        let v = parts[d1 + 1].trim().parse::<f64>().map_err(|e| bad(format!("value: {e}")))?;
        rows.push((line, j, node, v));
    }
    Ok((mesh, rows))
}
