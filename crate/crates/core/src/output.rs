//! File formats: snapshots, PPM heatmaps with range sidecars, and the
//! `key = value` manifest.

use std::io::{self, BufRead, Write};

use crate::discretization::{FieldSet, Grid};
use crate::Real;

/// Round-trip float formatting (17 significant digits).
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header line `nx ny lx ly t` followed by node-ordered little-endian `f64`
/// values of `u1`, `u2`, `h`, `a`.
pub fn write_snapshot<T: Real, W: Write>(
    mut w: W,
    grid: &Grid<T>,
    v: &FieldSet<T>,
    t: T,
) -> io::Result<()> {
    writeln!(
        w,
        "{} {} {} {} {}",
        grid.nx,
        grid.ny,
        fmt_float(grid.lx.as_f64()),
        fmt_float(grid.ly.as_f64()),
        fmt_float(t.as_f64())
    )?;
    for field in [&v.u1, &v.u2, &v.h, &v.a] {
        for x in field.iter() {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

/// Decoded snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub t: f64,
    pub fields: [Vec<f64>; 4],
}

pub fn read_snapshot<R: BufRead>(mut r: R) -> io::Result<Snapshot> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut header = String::new();
    r.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 {
        return Err(bad("snapshot header needs 5 fields"));
    }
    let nx: usize = parts[0].parse().map_err(|_| bad("bad nx"))?;
    let ny: usize = parts[1].parse().map_err(|_| bad("bad ny"))?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad float in header"));
    let (lx, ly, t) = (num(parts[2])?, num(parts[3])?, num(parts[4])?);
    let n = nx * ny;
    let mut read_field = || -> io::Result<Vec<f64>> {
        let mut buf = vec![0u8; 8 * n];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let fields = [read_field()?, read_field()?, read_field()?, read_field()?];
    Ok(Snapshot {
        nx,
        ny,
        lx,
        ly,
        t,
        fields,
    })
}

/// Blue to white to red.
fn colour(s: f64) -> [u8; 3] {
    let s = s.clamp(0.0, 1.0);
    let q = |x: f64| (255.0 * x).round() as u8;
    if s < 0.5 {
        let f = 2.0 * s;
        [q(f), q(f), 255]
    } else {
        let f = 2.0 * (1.0 - s);
        [255, q(f), q(f)]
    }
}

/// Binary PPM heatmap, top row at `y = ly`, scaled to the fixed range `[lo, hi]`.
pub fn write_ppm<T: Real, W: Write>(
    mut w: W,
    grid: &Grid<T>,
    field: &[T],
    lo: f64,
    hi: f64,
) -> io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", grid.nx, grid.ny)?;
    let span = if hi > lo { hi - lo } else { 1.0 };
    for j in (0..grid.ny).rev() {
        for i in 0..grid.nx {
            let x = field[grid.idx(i, j)].as_f64();
            w.write_all(&colour((x - lo) / span))?;
        }
    }
    Ok(())
}

/// Sidecar recording the colour range used for a heatmap.
pub fn write_ppm_sidecar<W: Write>(mut w: W, field: &str, lo: f64, hi: f64) -> io::Result<()> {
    writeln!(w, "field = {field}")?;
    writeln!(w, "min = {}", fmt_float(lo))?;
    writeln!(w, "max = {}", fmt_float(hi))
}

/// `(min, max)` of a field; `(0, 0)` when empty.
pub fn field_range<T: Real>(field: &[T]) -> (f64, f64) {
    if field.is_empty() {
        return (0.0, 0.0);
    }
    field.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x.as_f64()), hi.max(x.as_f64()))
    })
}

/// Files emitted by a run plus the resolved configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub files: Vec<(String, String)>,
    pub config: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn add_file(&mut self, name: &str, format: &str) {
        self.files.push((name.to_string(), format.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = format!("command = {}\nfile_count = {}\n", self.command, self.files.len());
        for (k, (name, format)) in self.files.iter().enumerate() {
            s.push_str(&format!("file.{k}.name = {name}\nfile.{k}.format = {format}\n"));
        }
        for (k, v) in &self.config {
            s.push_str(&format!("config.{k} = {v}\n"));
        }
        s
    }
}
