//! File formats: grid-function CSV, atom lists, per-step Jensen records and
//! convergence tables.

use crate::error::CliError;
use nlvisc_core::solver::ConvergenceTable;
use nlvisc_core::viscosity::PerturbedMax;
use nlvisc_core::{Grid, GridFunction, Node, Point};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Shortest round-trip representation, so written files re-read bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn coord_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}

/// One row per node in lexicographic order: `x1..xN, value, interior_flag`.
pub fn write_grid_function(path: &Path, u: &GridFunction) -> Result<(), CliError> {
    let grid = u.grid();
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let mut header = coord_header(grid.dim());
    header.push("value".into());
    header.push("interior_flag".into());
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for n in grid.nodes() {
        let x = grid.coord(n);
        let mut row: Vec<String> = x[..grid.dim()].iter().map(|&c| fmt_f64(c)).collect();
        row.push(fmt_f64(u.get(n).unwrap_or(f64::NAN)));
        row.push(if grid.is_interior(n) { "1" } else { "0" }.into());
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a grid function written for `grid`. Every lattice node must appear
/// exactly once; rows may come in any order.
pub fn read_grid_function(path: &Path, grid: &Grid) -> Result<GridFunction, CliError> {
    let dim = grid.dim();
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header = r.headers().map_err(|e| CliError::io(path, e))?.clone();
    let mut expected = coord_header(dim);
    expected.push("value".into());
    expected.push("interior_flag".into());
    if header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(CliError::parse(path, 1, format!("expected header {}", expected.join(","))));
    }
    let mut values = vec![f64::NAN; grid.node_count()];
    let mut seen = vec![false; grid.node_count()];
    let (lo0, _) = grid.index_range(0);
    let (lo1, hi1) = grid.index_range(1);
    let stride = (hi1 - lo1 + 1) as usize;
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::parse(path, line, e.to_string()))?;
        if rec.len() != dim + 2 {
            return Err(CliError::parse(path, line, format!("expected {} fields, found {}", dim + 2, rec.len())));
        }
        let num = |k: usize| -> Result<f64, CliError> {
            rec[k].trim().parse::<f64>().map_err(|e| CliError::parse(path, line, format!("field {}: {e}", k + 1)))
        };
        let mut x: Point = [0.0; 2];
        for (k, c) in x.iter_mut().enumerate().take(dim) {
            *c = num(k)?;
        }
        let s = grid.index_position(&x);
        let idx = [s[0].round() as i64, if dim == 2 { s[1].round() as i64 } else { 0 }];
        let node = Node(idx);
        if (0..dim).any(|a| (s[a] - idx[a] as f64).abs() > 1e-6) || !grid.contains(node) {
            return Err(CliError::parse(path, line, format!("{:?} is not a lattice node", &x[..dim])));
        }
        let flat = (idx[0] - lo0) as usize * stride + (idx[1] - lo1) as usize;
        if seen[flat] {
            return Err(CliError::parse(path, line, format!("duplicate node {:?}", &x[..dim])));
        }
        seen[flat] = true;
        values[flat] = num(dim)?;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        let n = grid.nodes().nth(missing).expect("index in range");
        return Err(CliError::parse(path, 0, format!("node {:?} missing", &grid.coord(n)[..dim])));
    }
    GridFunction::from_values(*grid, values).map_err(|e| CliError::parse(path, 0, e.to_string()))
}

/// Parses an atom list: one atom per line, `z_1 .. z_dim weight`, separated
/// by whitespace. Blank lines and `#` comments are skipped.
pub fn parse_atoms(text: &str, dim: usize, path: &Path) -> Result<Vec<(Point, f64)>, CliError> {
    let mut atoms = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 1 {
            return Err(CliError::parse(
                path,
                i + 1,
                format!("expected {} numbers ({dim} jump components and a weight), found {}", dim + 1, fields.len()),
            ));
        }
        let mut nums = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            nums[k] = f.parse().map_err(|e| CliError::parse(path, i + 1, format!("'{f}': {e}")))?;
        }
        let mut z = [0.0; 2];
        z[..dim].copy_from_slice(&nums[..dim]);
        atoms.push((z, nums[dim]));
    }
    Ok(atoms)
}

pub fn read_atoms(path: &Path, dim: usize) -> Result<Vec<(Point, f64)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
    parse_atoms(&text, dim, path)
}

pub fn format_atoms(atoms: &[(Point, f64)], dim: usize) -> String {
    let mut out = String::new();
    for (z, w) in atoms {
        let mut parts: Vec<String> = z[..dim].iter().map(|&c| fmt_f64(c)).collect();
        parts.push(fmt_f64(*w));
        out.push_str(&parts.join(" "));
        out.push('\n');
    }
    out
}

fn node_coords(grid: &Grid, n: Node) -> String {
    let x = grid.coord(n);
    x[..grid.dim()].iter().map(|&c| fmt_f64(c)).collect::<Vec<_>>().join(" ")
}

fn vec_str(v: &Point, dim: usize) -> String {
    v[..dim].iter().map(|&c| fmt_f64(c)).collect::<Vec<_>>().join(" ")
}

/// Per-step Jensen records. Vector and matrix cells hold space-separated
/// components; matrices are row-major.
pub fn write_perturbed_maxima(path: &Path, grid: &Grid, seq: &[PerturbedMax]) -> Result<(), CliError> {
    let dim = grid.dim();
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record([
        "m",
        "x_m",
        "y_m",
        "p_m",
        "p_prime_m",
        "X_m",
        "Y_m",
        "p",
        "P_m_x",
        "P_m_y",
        "tilt_x",
        "tilt_y",
        "eps_m",
        "delta_m",
        "gradient_gap",
        "gradient_tolerance",
        "key_margin",
        "distance_to_limit",
        "draws",
    ])
    .map_err(|e| CliError::io(path, e))?;
    let mat = |m: &nlvisc_core::SymMat| {
        let e = m.entries();
        (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| fmt_f64(e[i][j]))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for pm in seq {
        w.write_record([
            pm.m.to_string(),
            node_coords(grid, pm.x_m),
            node_coords(grid, pm.y_m),
            vec_str(&pm.p_m, dim),
            vec_str(&pm.p_prime_m, dim),
            mat(&pm.x_mat),
            mat(&pm.y_mat),
            vec_str(&pm.p, dim),
            vec_str(&pm.perturbation[0], dim),
            vec_str(&pm.perturbation[1], dim),
            vec_str(&pm.tilt[0], dim),
            vec_str(&pm.tilt[1], dim),
            fmt_f64(pm.eps_m),
            fmt_f64(pm.delta_m),
            fmt_f64(pm.gradient_gap),
            fmt_f64(pm.gradient_tolerance),
            fmt_f64(pm.key_margin),
            fmt_f64(pm.distance_to_limit),
            pm.draws.to_string(),
        ])
        .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Columns `h, error, order`; the first row has an empty order.
pub fn write_convergence(path: &Path, table: &ConvergenceTable) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(["h", "error", "order"]).map_err(|e| CliError::io(path, e))?;
    for row in &table.rows {
        let order = row.order.map(fmt_f64).unwrap_or_default();
        w.write_record([fmt_f64(row.h), fmt_f64(row.error), order]).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Generic CSV table of numbers.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_f64(v))).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Plain-text report of `key: value` lines, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Report {
        Report::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn num(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, fmt_f64(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn lines(&self) -> &[(String, String)] {
        &self.lines
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(self.render().as_bytes()).map_err(|e| CliError::io(path, e))
    }

    /// Parses the output of [`Report::render`].
    pub fn parse(text: &str) -> Report {
        let lines =
            text.lines().filter_map(|l| l.split_once(": ").map(|(k, v)| (k.to_string(), v.to_string()))).collect();
        Report { lines }
    }
}
