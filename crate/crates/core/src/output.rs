//! CSV and JSON export.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! that every value round-trips exactly; rows end in `\n`. Missing values
//! are empty fields.

use std::io::Write;

use serde::Serialize;

use crate::analysis::{BasinReport, DecayScan};
use crate::cumulant::GaussTrajectory;
use crate::exact::ExactRun;
use crate::fixedpoints::PhaseDiagramGrid;
use crate::meanfield::Trajectory;
use crate::{Error, Result};

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "mx", "my", "mz", "N", "M"];
pub const GAUSS_HEADER: [&str; 11] = ["t", "mx", "my", "mz", "Cxx", "Cxy", "Cxz", "Cyy", "Cyz", "Czz", "delta_z"];
pub const EXACT_HEADER: [&str; 7] = ["t", "mx", "my", "mz", "delta_z", "s2_norm", "trace_err"];
pub const DECAY_HEADER: [&str; 3] = ["eta", "B", "B_stderr"];
pub const BASIN_HEADER: [&str; 5] = ["mx0", "my0", "mz0", "attractor", "transit_time"];
pub const PHASE_HEADER: [&str; 7] = ["chi", "eta", "label", "n_roots", "mz_1", "mz_2", "mz_3"];

/// 17 significant digits, e.g. `-1.2500000000000000e-3`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Num(x) => fmt_f64(*x),
            Field::Int(i) => i.to_string(),
            Field::Text(s) => s.clone(),
            Field::Empty => String::new(),
        }
    }
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::Num(x)
    }
}

impl From<Option<f64>> for Field {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Field::Empty, Field::Num)
    }
}

impl From<usize> for Field {
    fn from(i: usize) -> Self {
        Field::Int(i as i64)
    }
}

impl From<Option<usize>> for Field {
    fn from(i: Option<usize>) -> Self {
        i.map_or(Field::Empty, Field::from)
    }
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Text(s.to_owned())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Write a header and rows. Rows must match the header width.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<Field>>) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Precondition(format!(
                "row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        out.write_record(row.iter().map(Field::render)).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Mean-field trajectory, `t,mx,my,mz,N,M`.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let rows = traj.times.iter().zip(&traj.states).zip(&traj.conserved).map(|((&t, s), c)| {
        vec![
            t.into(),
            s.mx.into(),
            s.my.into(),
            s.mz.into(),
            c.n_total.into(),
            c.m_ratio.into(),
        ]
    });
    write_table(w, &TRAJECTORY_HEADER, rows)
}

pub fn write_gauss_csv<W: Write>(w: W, traj: &GaussTrajectory) -> Result<()> {
    let rows = traj.times.iter().zip(&traj.states).zip(&traj.variance).map(|((&t, s), v)| {
        let mut row: Vec<Field> = vec![t.into(), s.m.mx.into(), s.m.my.into(), s.m.mz.into()];
        for (a, b) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
            row.push(s.c.get(a, b).into());
        }
        row.push(v.delta_z.into());
        row
    });
    write_table(w, &GAUSS_HEADER, rows)
}

/// `delta_z` is left empty for a single site.
pub fn write_exact_csv<W: Write>(w: W, run: &ExactRun) -> Result<()> {
    let rows = run.samples.iter().map(|o| {
        let dz = if o.delta_z.is_nan() { Field::Empty } else { o.delta_z.into() };
        vec![
            o.t.into(),
            o.m.mx.into(),
            o.m.my.into(),
            o.m.mz.into(),
            dz,
            o.s2_norm.into(),
            o.trace_err.into(),
        ]
    });
    write_table(w, &EXACT_HEADER, rows)
}

pub fn write_decay_csv<W: Write>(w: W, scan: &DecayScan) -> Result<()> {
    let rows = scan
        .rows
        .iter()
        .map(|r| vec![r.eta.into(), r.fit.b.into(), r.fit.b_stderr.into()]);
    write_table(w, &DECAY_HEADER, rows)
}

pub fn write_basin_csv<W: Write>(w: W, report: &BasinReport) -> Result<()> {
    let rows = report.probes.iter().map(|p| {
        vec![
            p.init.mx.into(),
            p.init.my.into(),
            p.init.mz.into(),
            p.attractor.into(),
            p.transit_time.into(),
        ]
    });
    write_table(w, &BASIN_HEADER, rows)
}

/// Rows ordered by `eta` then `chi`; roots by increasing `m_z`.
pub fn write_phase_csv<W: Write>(w: W, grid: &PhaseDiagramGrid) -> Result<()> {
    let mut rows = Vec::with_capacity(grid.chi_axis.len() * grid.eta_axis.len());
    for (ei, &eta) in grid.eta_axis.iter().enumerate() {
        for (ci, &chi) in grid.chi_axis.iter().enumerate() {
            let fps = &grid.fixed_points[ei][ci];
            let mut mz: Vec<f64> = fps.iter().map(|fp| fp.m.mz).collect();
            mz.sort_by(f64::total_cmp);
            let mut row: Vec<Field> = vec![chi.into(), eta.into(), grid.labels[ei][ci].as_str().into(), fps.len().into()];
            row.extend((0..3).map(|k| Field::from(mz.get(k).copied())));
            rows.push(row);
        }
    }
    write_table(w, &PHASE_HEADER, rows)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    w.write_all(b"\n")?;
    Ok(())
}
