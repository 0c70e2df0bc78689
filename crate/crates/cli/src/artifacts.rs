//! On-disk artifacts: field CSVs with sidecar descriptors and pretty JSON
//! reports. Output depends only on the data, so identical runs give
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use epflow::grid::{Field3, Grid3};
use serde::{Deserialize, Serialize};

pub const FIELD_HEADER: &str = "i,j,k,x1,x2,x3,value";

/// Sidecar descriptor written next to each field CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDescriptor {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub name: String,
}

/// `x2, x3` are the solver's lateral torus coordinates.
pub fn field_csv(f: &Field3) -> String {
    let g = f.grid;
    let mut out = String::with_capacity(g.len() * 64);
    out.push_str(FIELD_HEADER);
    out.push('\n');
    for n in 0..g.len() {
        let (i, j, k) = g.ijk(n);
        let [x1, x2, x3] = g.coords(i, j, k);
        writeln!(out, "{i},{j},{k},{x1:e},{x2:e},{x3:e},{:e}", f.values[n]).expect("string write");
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_field(dir: &Path, name: &str, f: &Field3) -> Result<()> {
    let csv = dir.join(format!("{name}.csv"));
    fs::write(&csv, field_csv(f)).with_context(|| format!("writing {}", csv.display()))?;
    let g = f.grid;
    let desc = FieldDescriptor {
        n1: g.n1,
        n2: g.n2,
        n3: g.n3,
        name: name.to_string(),
    };
    write_json(&dir.join(format!("{name}.json")), &desc)
}

/// Read a field written by [`write_field`].
pub fn read_field(dir: &Path, name: &str) -> Result<Field3> {
    let side = dir.join(format!("{name}.json"));
    let text = fs::read_to_string(&side).with_context(|| format!("reading {}", side.display()))?;
    let desc: FieldDescriptor = serde_json::from_str(&text).with_context(|| format!("parsing {}", side.display()))?;
    let grid = Grid3::new(desc.n1, desc.n2, desc.n3).with_context(|| format!("grid in {}", side.display()))?;
    let csv = dir.join(format!("{name}.csv"));
    let text = fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(FIELD_HEADER) {
        bail!("{}: expected header {FIELD_HEADER}", csv.display());
    }
    let mut field = Field3::zeros(grid);
    let mut seen = vec![false; grid.len()];
    for (row, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            bail!("{}:{}: expected 7 columns, got {}", csv.display(), row + 2, cols.len());
        }
        let index = |c: usize| -> Result<usize> {
            cols[c]
                .parse()
                .with_context(|| format!("{}:{}: bad index {:?}", csv.display(), row + 2, cols[c]))
        };
        let (i, j, k) = (index(0)?, index(1)?, index(2)?);
        if i >= grid.n1 || j >= grid.n2 || k >= grid.n3 {
            bail!("{}:{}: node ({i}, {j}, {k}) outside the grid", csv.display(), row + 2);
        }
        let v: f64 = cols[6]
            .parse()
            .with_context(|| format!("{}:{}: bad value {:?}", csv.display(), row + 2, cols[6]))?;
        let n = grid.idx(i, j, k);
        field.values[n] = v;
        seen[n] = true;
    }
    if let Some(n) = seen.iter().position(|s| !s) {
        let (i, j, k) = grid.ijk(n);
        bail!("{}: node ({i}, {j}, {k}) missing", csv.display());
    }
    Ok(field)
}
