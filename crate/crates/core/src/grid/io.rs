//! Plain-text grid format:
//!
//! ```text
//! spheregrid v1 N T h
//! x y z        (N lines)
//! i j k        (T lines, 0-based)
//! ```
//!
//! Reals are written with 17 significant digits, so a round trip is exact.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::sphere::SpherePoint;

use super::Grid;

const MAGIC: &str = "spheregrid";
const VERSION: &str = "v1";

pub fn write_grid<W: Write>(grid: &Grid, out: W) -> Result<()> {
    write_mesh(grid.points(), grid.triangles(), grid.h(), out)
}

/// Writes points and triangles in the grid format without validating them.
pub fn write_mesh<W: Write>(points: &[SpherePoint], triangles: &[[usize; 3]], h: f64, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC} {VERSION} {} {} {:.16e}", points.len(), triangles.len(), h)?;
    for p in points {
        writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x(), p.y(), p.z())?;
    }
    for t in triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_grid<R: BufRead>(input: R) -> Result<Grid> {
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        loop {
            match lines.next() {
                Some(l) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(Error::GridFormat("unexpected end of file".into())),
            }
        }
    };
    let header = next()?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [magic, version, n, t, h] = fields[..] else {
        return Err(Error::GridFormat(format!("bad header: {header:?}")));
    };
    if magic != MAGIC {
        return Err(Error::GridFormat(format!("not a grid file: {header:?}")));
    }
    if version != VERSION {
        return Err(Error::GridFormat(format!("unsupported version {version}")));
    }
    let n: usize = parse(n)?;
    let t: usize = parse(t)?;
    let h: f64 = parse(h)?;

    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let [x, y, z] = triple::<f64>(&next()?)?;
        points.push(SpherePoint::new(x, y, z)?);
    }
    let mut triangles = Vec::with_capacity(t);
    for _ in 0..t {
        triangles.push(triple::<usize>(&next()?)?);
    }
    Grid::with_h(points, triangles, h)
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::GridFormat(format!("cannot parse {s:?}")))
}

fn triple<T: std::str::FromStr + Copy + Default>(line: &str) -> Result<[T; 3]> {
    let mut out = [T::default(); 3];
    let mut it = line.split_whitespace();
    for slot in &mut out {
        *slot = parse(it.next().ok_or_else(|| Error::GridFormat(format!("short line: {line:?}")))?)?;
    }
    if it.next().is_some() {
        return Err(Error::GridFormat(format!("long line: {line:?}")));
    }
    Ok(out)
}
