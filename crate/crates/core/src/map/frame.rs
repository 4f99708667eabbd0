//! Text formats for input frames and their ground-truth sidecars.
//!
//! ```text
//! E2BKI-FRAME v1
//! classes C
//! points N
//! origin ox oy oz
//! x y z p1 ... pC u range      (N lines)
//! ```
//!
//! ```text
//! E2BKI-TRUTH v1
//! points N
//! label                         (N lines, same order as the frame)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::belief::ClassProbability;
use crate::gaussian::EvidentialPoint;

pub const FRAME_MAGIC: &str = "E2BKI-FRAME v1";
pub const TRUTH_MAGIC: &str = "E2BKI-TRUTH v1";

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: line {line}: {message}")]
    File {
        path: String,
        line: usize,
        message: String,
    },
}

impl FrameError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        FrameError::Parse {
            line,
            message: message.into(),
        }
    }

    fn with_path(self, path: &Path) -> Self {
        match self {
            FrameError::Parse { line, message } => FrameError::File {
                path: path.display().to_string(),
                line,
                message,
            },
            other => other,
        }
    }
}

/// One sensor sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub classes: usize,
    pub origin: Vector3<f64>,
    pub points: Vec<EvidentialPoint>,
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str), FrameError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l.trim()))
            }
            None => Err(FrameError::at(self.last + 1, format!("missing {what}"))),
        }
    }

    fn header(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), FrameError> {
        let (n, line) = self.next_line(key)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(FrameError::at(n, format!("expected `{key} ...`, got `{line}`")));
        }
        Ok((n, parts.collect()))
    }

    fn count(&mut self, key: &str) -> Result<usize, FrameError> {
        let (n, vals) = self.header(key)?;
        match vals.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| FrameError::at(n, format!("bad {key} count `{v}`"))),
            _ => Err(FrameError::at(n, format!("`{key}` takes one value"))),
        }
    }

    fn expect_end(&mut self) -> Result<(), FrameError> {
        for (i, l) in self.inner.by_ref() {
            if !l.trim().is_empty() {
                return Err(FrameError::at(i + 1, "more records than declared"));
            }
        }
        Ok(())
    }
}

fn real(n: usize, s: &str) -> Result<f64, FrameError> {
    let v: f64 = s
        .parse()
        .map_err(|_| FrameError::at(n, format!("bad number `{s}`")))?;
    if !v.is_finite() {
        return Err(FrameError::at(n, format!("non-finite number `{s}`")));
    }
    Ok(v)
}

pub fn parse_frame(text: &str) -> Result<Frame, FrameError> {
    let mut lines = Lines::new(text);
    let (n, magic) = lines.next_line("header")?;
    if magic != FRAME_MAGIC {
        return Err(FrameError::at(n, format!("expected `{FRAME_MAGIC}`")));
    }
    let classes = lines.count("classes")?;
    if classes < 2 {
        return Err(FrameError::at(lines.last, "need at least 2 classes"));
    }
    let count = lines.count("points")?;
    let (n, o) = lines.header("origin")?;
    if o.len() != 3 {
        return Err(FrameError::at(n, "origin takes three values"));
    }
    let origin = Vector3::new(real(n, o[0])?, real(n, o[1])?, real(n, o[2])?);
    let width = 3 + classes + 2;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = lines.next_line("point record")?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| real(n, s))
            .collect::<Result<_, _>>()?;
        if vals.len() != width {
            return Err(FrameError::at(
                n,
                format!("expected {width} values, got {}", vals.len()),
            ));
        }
        let prob = ClassProbability::new(vals[3..3 + classes].to_vec())
            .map_err(|e| FrameError::at(n, e.to_string()))?;
        let point = EvidentialPoint::new(
            Vector3::new(vals[0], vals[1], vals[2]),
            prob,
            vals[3 + classes],
            vals[4 + classes],
        )
        .map_err(|e| FrameError::at(n, e.to_string()))?;
        points.push(point);
    }
    lines.expect_end()?;
    Ok(Frame {
        classes,
        origin,
        points,
    })
}

pub fn write_frame(frame: &Frame) -> String {
    let mut out = String::new();
    let o = frame.origin;
    let _ = writeln!(out, "{FRAME_MAGIC}");
    let _ = writeln!(out, "classes {}", frame.classes);
    let _ = writeln!(out, "points {}", frame.points.len());
    let _ = writeln!(out, "origin {:?} {:?} {:?}", o.x, o.y, o.z);
    for p in &frame.points {
        let x = p.position;
        let _ = write!(out, "{:?} {:?} {:?}", x.x, x.y, x.z);
        for v in p.prob.probs() {
            let _ = write!(out, " {v:?}");
        }
        let _ = writeln!(out, " {:?} {:?}", p.uncertainty, p.sensor_range);
    }
    out
}

pub fn parse_truth(text: &str) -> Result<Vec<usize>, FrameError> {
    let mut lines = Lines::new(text);
    let (n, magic) = lines.next_line("header")?;
    if magic != TRUTH_MAGIC {
        return Err(FrameError::at(n, format!("expected `{TRUTH_MAGIC}`")));
    }
    let count = lines.count("points")?;
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = lines.next_line("label")?;
        labels.push(
            line.parse()
                .map_err(|_| FrameError::at(n, format!("bad label `{line}`")))?,
        );
    }
    lines.expect_end()?;
    Ok(labels)
}

pub fn write_truth(labels: &[usize]) -> String {
    let mut out = format!("{TRUTH_MAGIC}\npoints {}\n", labels.len());
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    out
}

fn read(path: &Path) -> Result<String, FrameError> {
    fs::read_to_string(path).map_err(|source| FrameError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_frame(path: &Path) -> Result<Frame, FrameError> {
    parse_frame(&read(path)?).map_err(|e| e.with_path(path))
}

pub fn read_truth(path: &Path) -> Result<Vec<usize>, FrameError> {
    parse_truth(&read(path)?).map_err(|e| e.with_path(path))
}
