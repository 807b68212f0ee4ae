//! File formats: correspondence CSV, point clouds (ASCII PLY or `x,y,z`
//! CSV) and JSON helpers.
//!
//! Floats are written with 17 significant digits so a save/load cycle is
//! lossless.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Correspondence, CorrespondenceSet, Labeling, Point3};
use crate::init::csv_error;

const CORR_COLUMNS: [&str; 6] = ["ax", "ay", "az", "bx", "by", "bz"];

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `ax,ay,az,bx,by,bz[,gt_label]` with a header row.
pub fn save_correspondences(path: impl AsRef<Path>, corrs: &CorrespondenceSet) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let labels = corrs.gt_labels.as_ref();
    let mut write = || -> std::io::Result<()> {
        write!(w, "{}", CORR_COLUMNS.join(","))?;
        if labels.is_some() {
            write!(w, ",gt_label")?;
        }
        writeln!(w)?;
        for (i, c) in corrs.items.iter().enumerate() {
            write!(
                w,
                "{},{},{},{},{},{}",
                fmt(c.a.x),
                fmt(c.a.y),
                fmt(c.a.z),
                fmt(c.b.x),
                fmt(c.b.y),
                fmt(c.b.z)
            )?;
            if let Some(l) = labels {
                write!(w, ",{}", l.get(i))?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Reads a correspondence CSV. A header row, when present, may list the
/// columns in any order; without one the first six columns are the
/// coordinates and an optional seventh is the ground-truth label.
pub fn load_correspondences(path: impl AsRef<Path>) -> Result<CorrespondenceSet> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut columns: Option<([usize; 6], Option<usize>)> = None;
    let mut items = Vec::new();
    let mut labels: Vec<Option<i32>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if k == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            columns = Some(header_columns(path, line, &record)?);
            continue;
        }
        let (coords, label_col) =
            *columns.get_or_insert_with(|| ([0, 1, 2, 3, 4, 5], (record.len() > 6).then_some(6)));
        let mut v = [0.0f64; 6];
        for (slot, &col) in v.iter_mut().zip(&coords) {
            let field = record
                .get(col)
                .ok_or_else(|| Error::parse(path, line, format!("missing column {col}")))?;
            *slot = field
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad number `{field}`")))?;
            if !slot.is_finite() {
                return Err(Error::parse(
                    path,
                    line,
                    format!("non-finite value `{field}`"),
                ));
            }
        }
        items.push(Correspondence::new(
            Point3::new(v[0], v[1], v[2]),
            Point3::new(v[3], v[4], v[5]),
        ));
        let label = match label_col
            .and_then(|c| record.get(c))
            .filter(|f| !f.is_empty())
        {
            Some(f) => Some(
                f.parse::<i32>()
                    .ok()
                    .filter(|l| *l >= -1)
                    .ok_or_else(|| Error::parse(path, line, format!("bad label `{f}`")))?,
            ),
            None => None,
        };
        labels.push(label);
    }
    let gt_labels = if labels.iter().all(Option::is_none) {
        None
    } else if labels.iter().all(Option::is_some) {
        Some(Labeling::new(labels.into_iter().flatten().collect()))
    } else {
        return Err(Error::Coverage {
            path: path.into(),
            msg: "gt_label present on some rows only".into(),
        });
    };
    Ok(CorrespondenceSet {
        items,
        gt_labels,
        gt_poses: None,
    })
}

fn header_columns(
    path: &Path,
    line: usize,
    header: &csv::StringRecord,
) -> Result<([usize; 6], Option<usize>)> {
    let find = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let mut coords = [0; 6];
    for (slot, name) in coords.iter_mut().zip(CORR_COLUMNS) {
        *slot =
            find(name).ok_or_else(|| Error::parse(path, line, format!("header lacks `{name}`")))?;
    }
    Ok((coords, find("gt_label")))
}

/// Loads points from an ASCII PLY (vertex `x`, `y`, `z`) or an `x,y,z`
/// CSV, chosen by extension.
pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<Vec<Point3>> {
    let path = path.as_ref();
    let is_ply = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if is_ply {
        load_ply(path)
    } else {
        load_xyz_csv(path)
    }
}

fn load_xyz_csv(path: &Path) -> Result<Vec<Point3>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut points = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if k == 0 && record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("x")) {
            continue;
        }
        if record.len() < 3 {
            return Err(Error::parse(path, line, "expected x,y,z"));
        }
        let mut v = [0.0; 3];
        for (slot, field) in v.iter_mut().zip(record.iter()) {
            *slot = field
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| Error::parse(path, line, format!("bad number `{field}`")))?;
        }
        points.push(Point3::new(v[0], v[1], v[2]));
    }
    Ok(points)
}

fn load_ply(path: &Path) -> Result<Vec<Point3>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((no, Ok(l))) => Ok((no, l)),
            Some((_, Err(e))) => Err(Error::io(path, e)),
            None => Err(Error::parse(
                path,
                0,
                format!("unexpected end of file ({what})"),
            )),
        }
    };

    let (no, magic) = next("magic")?;
    if magic.trim() != "ply" {
        return Err(Error::parse(path, no, "missing `ply` magic"));
    }
    let mut vertex_count: Option<usize> = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    loop {
        let (no, line) = next("header")?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(Error::parse(
                    path,
                    no,
                    format!("unsupported format `{fmt}`"),
                ));
            }
            ["element", "vertex", count] => {
                vertex_count = Some(
                    count
                        .parse()
                        .map_err(|_| Error::parse(path, no, "bad vertex count"))?,
                );
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => {
                return Err(Error::parse(path, no, "list property on vertex element"));
            }
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            _ => {}
        }
    }
    let count = vertex_count.ok_or_else(|| Error::parse(path, 0, "no vertex element"))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::parse(path, 0, format!("vertex lacks property `{name}`")))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let (no, line) = next("vertex data").map_err(|_| {
            Error::parse(
                path,
                0,
                format!(
                    "truncated: expected {count} vertices, found {}",
                    points.len()
                ),
            )
        })?;
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() < props.len() {
            return Err(Error::parse(path, no, "too few vertex values"));
        }
        let parse = |i: usize| -> Result<f64> {
            values[i]
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| Error::parse(path, no, format!("bad number `{}`", values[i])))
        };
        points.push(Point3::new(parse(ix)?, parse(iy)?, parse(iz)?));
    }
    Ok(points)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
