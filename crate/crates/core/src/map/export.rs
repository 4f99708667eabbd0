//! Map export directory:
//!
//! * `config.txt` - flat `key = value` configuration
//! * `map.ply` - ASCII point cloud of voxel centers with label color,
//!   label index and `u_total`
//! * `cells.txt` - raw Dirichlet sums per voxel
//! * `primitives.txt` - persistent primitives, raw moments first
//! * `contributions.txt` - the applied update log used by continuous queries
//!
//! Reals are written in shortest round-trip form, so importing and exporting
//! again reproduces every file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::contribution::{Contribution, Footprint};
use super::store::StoredPrimitive;
use super::{Map, MapConfig, MapError, QueryResult};
use crate::belief::BeliefMass;
use crate::bki::DirichletCell;
use crate::gaussian::GaussianPrimitive;

pub const CELLS_MAGIC: &str = "E2BKI-CELLS v1";
pub const PRIMITIVES_MAGIC: &str = "E2BKI-PRIMITIVES v1";
pub const CONTRIBUTIONS_MAGIC: &str = "E2BKI-CONTRIBUTIONS v1";

const PALETTE: [[u8; 3]; 8] = [
    [139, 90, 43],
    [128, 128, 128],
    [255, 200, 0],
    [34, 139, 34],
    [0, 0, 255],
    [255, 0, 0],
    [0, 200, 200],
    [200, 0, 200],
];

pub fn class_color(label: usize) -> [u8; 3] {
    PALETTE[label % PALETTE.len()]
}

fn push_reals(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        let _ = write!(out, " {v:?}");
    }
}

fn sym6(m: &Matrix3<f64>) -> [f64; 6] {
    [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]]
}

fn from_sym6(v: &[f64]) -> Matrix3<f64> {
    Matrix3::new(v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5])
}

impl Map {
    pub fn ply_text(&self) -> String {
        let cells = self.grid.sorted_cells();
        let mut out = String::new();
        out.push_str("ply\nformat ascii 1.0\ncomment e2bki voxel map\n");
        let _ = writeln!(out, "element vertex {}", cells.len());
        for p in ["x", "y", "z"] {
            let _ = writeln!(out, "property double {p}");
        }
        for p in ["red", "green", "blue"] {
            let _ = writeln!(out, "property uchar {p}");
        }
        out.push_str("property int label\nproperty double u_total\nend_header\n");
        for (idx, cell) in cells {
            let c = self.grid.center(idx);
            let q = QueryResult::from_cell(cell);
            let label = q.label.unwrap_or(0);
            let [r, g, b] = class_color(label);
            let _ = writeln!(
                out,
                "{:?} {:?} {:?} {r} {g} {b} {label} {:?}",
                c.x, c.y, c.z, q.uncertainty.total
            );
        }
        out
    }

    pub fn cells_text(&self) -> String {
        let g = &self.grid;
        let mut out = String::new();
        let _ = writeln!(out, "{CELLS_MAGIC}");
        let _ = writeln!(out, "classes {}", g.classes());
        let _ = writeln!(out, "alpha0 {:?}", g.alpha0());
        let _ = writeln!(out, "resolution {:?}", g.resolution);
        let _ = writeln!(out, "origin {:?} {:?} {:?}", g.origin.x, g.origin.y, g.origin.z);
        let _ = writeln!(out, "frames {}", self.frames);
        let _ = writeln!(out, "skipped {}", self.skipped);
        let cells = g.sorted_cells();
        let _ = writeln!(out, "cells {}", cells.len());
        for (idx, cell) in cells {
            let _ = write!(out, "{} {} {}", idx[0], idx[1], idx[2]);
            push_reals(&mut out, [cell.kernel_mass(), cell.weighted_u()]);
            push_reals(&mut out, cell.alpha());
            out.push('\n');
        }
        out
    }

    pub fn primitives_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{PRIMITIVES_MAGIC}");
        out.push_str(
            "# eta m1(x y z) m2(xx xy xz yy yz zz) delta u b(1..C) \
             | mu(x y z) sigma(xx xy xz yy yz zz) p(1..C)\n",
        );
        let _ = writeln!(out, "classes {}", self.config.num_classes);
        let _ = writeln!(out, "primitives {}", self.store.len());
        for g in self.store.primitives() {
            let _ = write!(out, "{:?}", g.eta);
            push_reals(&mut out, g.m1.iter().copied());
            push_reals(&mut out, sym6(&g.m2));
            push_reals(&mut out, [g.sensor_dist, g.uncertainty()]);
            push_reals(&mut out, g.semantics.beliefs().iter().copied());
            out.push_str(" |");
            push_reals(&mut out, g.mean().iter().copied());
            push_reals(&mut out, sym6(&g.covariance()));
            push_reals(&mut out, g.prob.probs().iter().copied());
            out.push('\n');
        }
        out
    }

    pub fn contributions_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CONTRIBUTIONS_MAGIC}");
        out.push_str("# kind support u center(x y z) cov(xx xy xz yy yz zz) p(1..C)\n");
        let _ = writeln!(out, "classes {}", self.config.num_classes);
        let _ = writeln!(out, "contributions {}", self.log.len());
        for c in &self.log {
            let kind = match c.footprint {
                Footprint::Voxel => "voxel",
                Footprint::Point => "point",
                Footprint::Ellipsoid(_) => "ellipsoid",
            };
            out.push_str(kind);
            push_reals(&mut out, [c.support, c.u]);
            push_reals(&mut out, c.center.iter().copied());
            push_reals(&mut out, sym6(&c.cov));
            push_reals(&mut out, c.prob.iter().copied());
            out.push('\n');
        }
        out
    }

    /// Writes every export file into `dir`, creating it if needed.
    pub fn export(&self, dir: &Path) -> Result<(), MapError> {
        fs::create_dir_all(dir).map_err(|source| io_err(dir, source))?;
        let files = [
            ("config.txt", self.config.to_text()),
            ("map.ply", self.ply_text()),
            ("cells.txt", self.cells_text()),
            ("primitives.txt", self.primitives_text()),
            ("contributions.txt", self.contributions_text()),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|source| io_err(&path, source))?;
        }
        Ok(())
    }

    /// Loads a directory written by [`export`](Self::export).
    pub fn import(dir: &Path) -> Result<Map, MapError> {
        let config = MapConfig::load(&dir.join("config.txt"))?;
        let mut map = Map::new(config)?;
        map.read_cells(&dir.join("cells.txt"))?;
        map.read_primitives(&dir.join("primitives.txt"))?;
        map.read_contributions(&dir.join("contributions.txt"))?;
        map.pruned_since_merge = None;
        Ok(map)
    }

    fn read_cells(&mut self, path: &Path) -> Result<(), MapError> {
        let text = read(path)?;
        let mut r = Reader::new(path, &text);
        r.magic(CELLS_MAGIC)?;
        let classes = r.header_usize("classes")?;
        let alpha0 = r.header_reals("alpha0", 1)?[0];
        let resolution = r.header_reals("resolution", 1)?[0];
        let origin = r.header_reals("origin", 3)?;
        let g = &self.grid;
        if classes != g.classes()
            || alpha0 != g.alpha0()
            || resolution != g.resolution
            || Vector3::new(origin[0], origin[1], origin[2]) != g.origin
        {
            return Err(r.error("grid header disagrees with config.txt"));
        }
        self.frames = r.header_usize("frames")? as u64;
        self.skipped = r.header_usize("skipped")? as u64;
        let n = r.header_usize("cells")?;
        for _ in 0..n {
            let fields = r.record()?;
            if fields.len() != 5 + classes {
                return Err(r.error(format!("expected {} fields", 5 + classes)));
            }
            let mut idx = [0i64; 3];
            for (slot, f) in idx.iter_mut().zip(&fields[..3]) {
                *slot = f
                    .parse()
                    .map_err(|_| r.error(format!("bad index `{f}`")))?;
            }
            let vals = r.reals(&fields[3..])?;
            let cell = DirichletCell::from_sums(vals[2..].to_vec(), alpha0, vals[0], vals[1]);
            self.grid.insert(idx, cell);
        }
        r.end()
    }

    fn read_primitives(&mut self, path: &Path) -> Result<(), MapError> {
        let text = read(path)?;
        let mut r = Reader::new(path, &text);
        r.magic(PRIMITIVES_MAGIC)?;
        let classes = r.header_usize("classes")?;
        if classes != self.config.num_classes {
            return Err(r.error("class count disagrees with config.txt"));
        }
        let n = r.header_usize("primitives")?;
        for _ in 0..n {
            let fields = r.record()?;
            let raw_len = 12 + classes;
            if fields.len() < raw_len || fields[raw_len] != "|" {
                return Err(r.error("malformed primitive record"));
            }
            let v = r.reals(&fields[..raw_len])?;
            let semantics = BeliefMass::new(v[12..].to_vec(), v[11])
                .map_err(|e| r.error(e.to_string()))?;
            let primitive = GaussianPrimitive::from_parts(
                Vector3::new(v[1], v[2], v[3]),
                from_sym6(&v[4..10]),
                v[0],
                semantics,
                v[10],
            );
            self.store.items.push(StoredPrimitive {
                primitive,
                fresh: false,
            });
        }
        self.store.reindex();
        r.end()
    }

    fn read_contributions(&mut self, path: &Path) -> Result<(), MapError> {
        let text = read(path)?;
        let mut r = Reader::new(path, &text);
        r.magic(CONTRIBUTIONS_MAGIC)?;
        let classes = r.header_usize("classes")?;
        if classes != self.config.num_classes {
            return Err(r.error("class count disagrees with config.txt"));
        }
        let n = r.header_usize("contributions")?;
        for _ in 0..n {
            let fields = r.record()?;
            if fields.len() != 12 + classes {
                return Err(r.error(format!("expected {} fields", 12 + classes)));
            }
            let v = r.reals(&fields[1..])?;
            let center = Vector3::new(v[2], v[3], v[4]);
            let prob = v[11..].to_vec();
            let c = match fields[0] {
                "voxel" => Contribution::voxel(center, prob, v[1]),
                "point" => Contribution::point(center, prob, v[1], v[0]),
                "ellipsoid" => Contribution::ellipsoid(
                    center,
                    from_sym6(&v[5..11]),
                    self.tau3,
                    prob,
                    v[1],
                    v[0],
                )
                .map_err(|e| r.error(e.to_string()))?,
                other => return Err(r.error(format!("unknown kind `{other}`"))),
            };
            self.log.push(c);
        }
        r.end()
    }
}

fn io_err(path: &Path, source: std::io::Error) -> MapError {
    MapError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read(path: &Path) -> Result<String, MapError> {
    fs::read_to_string(path).map_err(|source| io_err(path, source))
}

/// Line reader that skips `#` comments and tracks line numbers.
struct Reader<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Self {
            path,
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    fn error(&self, message: impl Into<String>) -> MapError {
        MapError::Format {
            path: self.path.display().to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str, MapError> {
        for (i, l) in self.lines.by_ref() {
            self.line = i + 1;
            if !l.starts_with('#') {
                return Ok(l);
            }
        }
        self.line += 1;
        Err(self.error("unexpected end of file"))
    }

    fn magic(&mut self, magic: &str) -> Result<(), MapError> {
        if self.next()?.trim() != magic {
            return Err(self.error(format!("expected `{magic}`")));
        }
        Ok(())
    }

    fn header(&mut self, key: &str) -> Result<Vec<&'a str>, MapError> {
        let line = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.error(format!("expected `{key}`")));
        }
        Ok(parts.collect())
    }

    fn header_usize(&mut self, key: &str) -> Result<usize, MapError> {
        let v = self.header(key)?;
        match v.as_slice() {
            [s] => s.parse().map_err(|_| self.error(format!("bad {key} `{s}`"))),
            _ => Err(self.error(format!("`{key}` takes one value"))),
        }
    }

    fn header_reals(&mut self, key: &str, n: usize) -> Result<Vec<f64>, MapError> {
        let v = self.header(key)?;
        if v.len() != n {
            return Err(self.error(format!("`{key}` takes {n} values")));
        }
        self.reals(&v)
    }

    fn record(&mut self) -> Result<Vec<&'a str>, MapError> {
        Ok(self.next()?.split_whitespace().collect())
    }

    fn reals(&self, fields: &[&str]) -> Result<Vec<f64>, MapError> {
        fields
            .iter()
            .map(|f| f.parse().map_err(|_| self.error(format!("bad number `{f}`"))))
            .collect()
    }

    fn end(&mut self) -> Result<(), MapError> {
        for (i, l) in self.lines.by_ref() {
            if !l.trim().is_empty() && !l.starts_with('#') {
                self.line = i + 1;
                return Err(self.error("more records than declared"));
            }
        }
        Ok(())
    }
}
