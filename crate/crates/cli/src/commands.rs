use std::fs;
use std::path::{Path, PathBuf};

use btc_core::analysis::{self, DecayScanOptions, PeakWindow};
use btc_core::cumulant::{self, FiniteGaussState, GaussState, GaussTrajectory};
use btc_core::exact::{self, DensityMatrix, ExactRun};
use btc_core::fixedpoints::{self, FixedPoint, Phase, Stability};
use btc_core::meanfield::{integrate_mf_at, Trajectory};
use btc_core::model::{f_coeff_finite, f_coeff_limit};
use btc_core::ode::{linspace, SolverOptions, ToleranceSpec};
use btc_core::output::{self, Field, GAUSS_HEADER};
use btc_core::Partial;
use btc_core::{Error, MagState, ModelParams};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;
use crate::{Failure, UsageError};

#[derive(Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Partial,
    Failed,
}

/// Contents of `result.json`.
#[derive(Debug, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub status: Status,
    pub reason: Option<String>,
    pub files: Vec<String>,
    pub summary: Value,
}

/// Collects files written into the output directory.
pub struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> btc_core::Result<()>) -> Result<(), Failure> {
        let mut buf = Vec::new();
        fill(&mut buf).map_err(Failure::from)?;
        fs::write(self.dir.join(name), buf).map_err(Failure::Io)?;
        self.files.push(name.to_owned());
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        self.write(name, |b| output::write_json(b, value))
    }

    fn report(&mut self, command: &'static str, summary: Value) -> Report {
        Report {
            command,
            status: Status::Ok,
            reason: None,
            files: std::mem::take(&mut self.files),
            summary,
        }
    }

    fn partial(&mut self, command: &'static str, reason: String, summary: Value) -> Report {
        Report {
            status: Status::Partial,
            reason: Some(reason),
            ..self.report(command, summary)
        }
    }

    pub fn failed(&mut self, command: &'static str, reason: String) -> Report {
        Report {
            status: Status::Failed,
            reason: Some(reason),
            ..self.report(command, Value::Null)
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParam { name, reason } => Failure::Usage(UsageError::new(name, reason)),
            Error::Domain(m) | Error::Precondition(m) | Error::Resource(m) => Failure::Usage(UsageError::plain(m)),
            Error::Io(io) => Failure::Io(io),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

pub fn run(cfg: &RunConfig, out: &mut Out) -> Result<Report, Failure> {
    match cfg {
        RunConfig::Simulate(c) => simulate(c, out),
        RunConfig::FixedPoints(c) => fixed_points(c, out),
        RunConfig::PhaseDiagram(c) => phase_diagram(c, out),
        RunConfig::FitDecay(c) => fit_decay(c, out),
        RunConfig::Coeff(c) => coeff(c, out),
        RunConfig::Basin(c) => basin(c, out),
        RunConfig::Cusp(_) => cusp(out),
    }
}

fn label<T: Serialize>(v: T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn sample_times(t_max: f64, dt: f64) -> Vec<f64> {
    linspace(0.0, t_max, (t_max / dt).round().max(1.0) as usize + 1)
}

fn simulate(c: &SimulateConfig, out: &mut Out) -> Result<Report, Failure> {
    const CMD: &str = "simulate";
    let params = ModelParams::with_drive(c.j, c.chi, c.eta)?;
    let init = MagState::from_slice(&c.init);
    let tol = ToleranceSpec::new(c.rtol, c.atol);
    let times = sample_times(c.t_max, c.dt);
    match c.engine {
        Engine::Mf => {
            let summary = |t: &Trajectory| json!({ "samples": t.len(), "end_time": t.times.last(), "n_drift": t.n_drift(), "m_drift": t.m_drift() });
            match integrate_mf_at(&params, init, &times, &SolverOptions::with_tol(tol)) {
                Ok(traj) => {
                    out.write("trajectory.csv", |b| output::write_trajectory_csv(b, &traj))?;
                    Ok(out.report(CMD, summary(&traj)))
                }
                Err(Error::Integration { reason, partial, .. }) => match *partial {
                    Partial::MeanField(traj) => {
                        out.write("trajectory.csv", |b| output::write_trajectory_csv(b, &traj))?;
                        Ok(out.partial(CMD, reason, summary(&traj)))
                    }
                    _ => Err(Failure::Numerical(reason)),
                },
                Err(e) => Err(e.into()),
            }
        }
        Engine::Gauss => match c.n {
            None => {
                let traj =
                    cumulant::integrate_gaussian_at(&params, GaussState::product(init), &times, &cumulant::default_options(tol))?;
                out.write("gauss.csv", |b| output::write_gauss_csv(b, &traj))?;
                let summary = gauss_summary(&traj);
                Ok(match &traj.stop_reason {
                    Some(r) if traj.truncated => out.partial(CMD, r.clone(), summary),
                    _ => out.report(CMD, summary),
                })
            }
            Some(n) => finite_gauss(c, params.with_sites(n)?, init, &times, tol, out),
        },
        Engine::Exact => {
            let n = c.n.expect("validated");
            let params = params.with_sites(n)?;
            let rho = DensityMatrix::product(n, init)?;
            let (run, reason) = match exact::integrate_exact_at(&params, &rho, &times, &exact::default_options(tol)) {
                Ok(run) => (run, None),
                Err(Error::Integration { reason, partial, .. }) => match *partial {
                    Partial::Exact(run) => (run, Some(reason)),
                    _ => return Err(Failure::Numerical(reason)),
                },
                Err(e) => return Err(e.into()),
            };
            out.write("exact.csv", |b| output::write_exact_csv(b, &run))?;
            if c.dump_rho {
                if let Some(state) = &run.final_state {
                    out.write("rho_final.bin", |b| state.write_binary(b))?;
                }
            }
            let summary = exact_summary(&run);
            Ok(match reason {
                None => out.report(CMD, summary),
                Some(r) => out.partial(CMD, r, summary),
            })
        }
    }
}

fn gauss_summary(traj: &GaussTrajectory) -> Value {
    json!({
        "samples": traj.times.len(),
        "end_time": traj.end_time(),
        "max_delta_z": traj.max_delta_z(),
        "truncated": traj.truncated,
    })
}

fn exact_summary(run: &ExactRun) -> Value {
    json!({
        "samples": run.samples.len(),
        "end_time": run.samples.last().map(|s| s.t),
        "max_delta_z": run.max_delta_z(),
        "max_trace_err": run.max_trace_err(),
        "max_herm_err": run.max_herm_err(),
    })
}

const CORR_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn finite_gauss(
    c: &SimulateConfig,
    params: ModelParams,
    init: MagState,
    times: &[f64],
    tol: ToleranceSpec,
    out: &mut Out,
) -> Result<Report, Failure> {
    let n = params.n_sites.expect("set by caller");
    let traj = cumulant::integrate_gaussian_finite(
        &params,
        &FiniteGaussState::product(init, n),
        times,
        &cumulant::default_options(tol),
    )?;
    let dz = traj.delta_z();
    let rows: Vec<Vec<Field>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(&dz)
        .map(|((&t, s), &d)| {
            let avg = s.pair_average(n);
            let mut row: Vec<Field> = vec![t.into(), s.m.mx.into(), s.m.my.into(), s.m.mz.into()];
            row.extend(CORR_PAIRS.iter().map(|&(a, b)| Field::from(avg.get(a, b))));
            row.push(d.into());
            row
        })
        .collect();
    out.write("gauss.csv", |b| output::write_table(b, &GAUSS_HEADER, rows))?;
    if c.per_distance {
        let header = ["t", "Cxx", "Cxy", "Cxz", "Cyy", "Cyz", "Czz"];
        for r in 1..=n / 2 {
            let rows = traj.times.iter().zip(&traj.states).map(|(&t, s)| {
                let mut row = vec![Field::from(t)];
                row.extend(CORR_PAIRS.iter().map(|&(a, b)| Field::from(s.c_r[r - 1].get(a, b))));
                row
            });
            out.write(&format!("gauss_r{r}.csv"), |b| output::write_table(b, &header, rows))?;
        }
    }
    let summary = json!({
        "samples": traj.times.len(),
        "end_time": traj.times.last(),
        "max_delta_z": dz.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "truncated": traj.truncated,
    });
    Ok(match &traj.stop_reason {
        Some(r) if traj.truncated => out.partial("simulate", r.clone(), summary),
        _ => out.report("simulate", summary),
    })
}

/// The unique attractive steady state, if there is exactly one.
fn sole_attractor(fps: &[FixedPoint]) -> Option<f64> {
    let mut it = fps.iter().filter(|fp| fp.stability == Stability::Attractive);
    match (it.next(), it.next()) {
        (Some(fp), None) => Some(fp.m.mz),
        _ => None,
    }
}

fn fixed_points(c: &FixedPointsConfig, out: &mut Out) -> Result<Report, Failure> {
    use rayon::prelude::*;
    let chis = axis(c.chi_min, c.chi_max, c.chi_steps);
    let sweep: Vec<Vec<FixedPoint>> = chis
        .par_iter()
        .map(|&chi| fixedpoints::fixed_points(&ModelParams::new(chi, c.eta)?))
        .collect::<btc_core::Result<_>>()?;

    let mut rows = Vec::new();
    for (&chi, fps) in chis.iter().zip(&sweep) {
        let mut fps = fps.clone();
        fps.sort_by(|a, b| a.m.mz.total_cmp(&b.m.mz));
        for fp in fps {
            rows.push(vec![
                Field::from(chi),
                c.eta.into(),
                fp.m.mx.into(),
                fp.m.my.into(),
                fp.m.mz.into(),
                label(fp.branch).as_str().into(),
                label(fp.stability).as_str().into(),
            ]);
        }
    }
    out.write("fixed_points.csv", |b| {
        output::write_table(b, &["chi", "eta", "mx", "my", "mz", "branch", "stability"], rows)
    })?;

    let multi: Vec<f64> = chis
        .iter()
        .zip(&sweep)
        .filter(|(_, f)| f.len() >= 3)
        .map(|(&x, _)| x)
        .collect();
    let mut steepest: Option<(f64, f64)> = None;
    for k in 1..chis.len() {
        if let (Some(a), Some(b)) = (sole_attractor(&sweep[k - 1]), sole_attractor(&sweep[k])) {
            let slope = ((b - a) / (chis[k] - chis[k - 1])).abs();
            if steepest.is_none_or(|(s, _)| slope > s) {
                steepest = Some((slope, 0.5 * (chis[k] + chis[k - 1])));
            }
        }
    }
    let summary = json!({
        "eta": c.eta,
        "multi_root_interval": multi.first().map(|lo| [*lo, *multi.last().unwrap()]),
        "max_slope": steepest.map(|s| s.0),
        "max_slope_chi": steepest.map(|s| s.1),
    });
    Ok(out.report("fixed-points", summary))
}

fn phase_diagram(c: &PhaseDiagramConfig, out: &mut Out) -> Result<Report, Failure> {
    let chis = axis(c.chi_min, c.chi_max, c.chi_steps);
    let etas = axis(c.eta_min, c.eta_max, c.eta_steps);
    let grid = fixedpoints::scan_phase_diagram(&chis, &etas)?;
    out.write("phase_diagram.csv", |b| output::write_phase_csv(b, &grid))?;
    if c.full_json {
        out.json("phase_diagram.json", &grid)?;
    }

    // BTC edge: last BTC chi on the last eta <= 1 row
    let btc_edge = etas.iter().rposition(|&e| e <= 1.0).and_then(|ei| {
        let last = grid.labels[ei].iter().rposition(|&p| p == Phase::Btc)?;
        Some([chis[last], etas[ei]])
    });
    // coexistence landmarks from the exact interval on each grid row, so a
    // window narrower than a cell still counts
    let mut intervals = Vec::new();
    for &eta in etas.iter().filter(|&&e| e > 1.0) {
        if let Some(iv) = fixedpoints::coexistence_interval(eta)? {
            intervals.push((eta, iv));
        }
    }
    let lower_end = intervals.first().map(|&(eta, (lo, _))| [lo, eta]);
    let tip = intervals.last().map(|&(eta, (lo, hi))| [0.5 * (lo + hi), eta]);
    let mut counts = std::collections::BTreeMap::new();
    for p in grid.labels.iter().flatten() {
        *counts.entry(p.as_str()).or_insert(0usize) += 1;
    }
    let summary = json!({
        "chi_cells": chis.len(),
        "eta_cells": etas.len(),
        "btc_edge": btc_edge,
        "coexistence_lower_end": lower_end,
        "coexistence_tip": tip,
        "label_counts": counts,
    });
    Ok(out.report("phase-diagram", summary))
}

fn fit_decay(c: &FitDecayConfig, out: &mut Out) -> Result<Report, Failure> {
    let opts = DecayScanOptions {
        dt: c.dt,
        t_start: c.t_start,
        t_cap: c.t_cap,
        window: match c.window {
            Window::All => PeakWindow::All,
            Window::HalfAmplitude => PeakWindow::HalfAmplitude,
        },
        ..DecayScanOptions::default()
    };
    let solver = SolverOptions::with_tol(ToleranceSpec::new(c.rtol, c.atol));
    let scan = analysis::scan_decay_rate(&c.etas, c.chi, &opts, &solver)?;
    out.write("decay.csv", |b| output::write_decay_csv(b, &scan))?;
    let summary = json!({
        "chi": scan.chi,
        "beta": scan.beta,
        "beta_stderr": scan.beta_stderr,
        "intercept": scan.intercept,
        "horizons": scan.rows.iter().map(|r| r.t_max).collect::<Vec<_>>(),
        "monotone": scan.rows.windows(2).all(|w| w[1].fit.b > w[0].fit.b),
    });
    Ok(out.report("fit-decay", summary))
}

fn coeff(c: &CoeffConfig, out: &mut Out) -> Result<Report, Failure> {
    let etas = axis(c.eta_min, c.eta_max, c.eta_steps);
    let mut ns = c.ns.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut rows = Vec::new();
    for &n in &ns {
        for &eta in &etas {
            rows.push(vec![
                eta.into(),
                n.into(),
                f_coeff_finite(n, eta)?.into(),
                Field::Int((eta <= 1.0) as i64),
            ]);
        }
    }
    for &eta in &etas {
        rows.push(vec![
            eta.into(),
            "inf".into(),
            f_coeff_limit(eta).into(),
            Field::Int((eta <= 1.0) as i64),
        ]);
    }
    out.write("coeff.csv", |b| {
        output::write_table(b, &["eta", "N", "F", "long_range"], rows)
    })?;
    let summary = json!({ "ns": ns, "eta_points": etas.len(), "limit_at_eta_2": f_coeff_limit(2.0) });
    Ok(out.report("coeff", summary))
}

fn basin(c: &BasinConfig, out: &mut Out) -> Result<Report, Failure> {
    let params = ModelParams::new(c.chi, c.eta)?;
    let solver = SolverOptions::with_tol(ToleranceSpec::new(c.rtol, c.atol));
    let report = analysis::probe_basin(&params, &analysis::plane_ring(c.radius, c.count), c.t_max, c.dt, &solver)?;
    out.write("basin.csv", |b| output::write_basin_csv(b, &report))?;
    out.json("basin.json", &report)?;
    let summary = json!({
        "attractors": report.attractors.iter().map(|fp| json!({ "mz": fp.m.mz, "branch": label(fp.branch) })).collect::<Vec<_>>(),
        "probe_branches": report.probes.iter().map(|p| report.attractor_branch(p).map(label)).collect::<Vec<_>>(),
        "unresolved": report.probes.iter().filter(|p| p.attractor.is_none()).count(),
    });
    Ok(out.report("basin", summary))
}

fn cusp(out: &mut Out) -> Result<Report, Failure> {
    let cusp = fixedpoints::locate_cusp();
    out.write("cusp.csv", |b| {
        output::write_table(
            b,
            &["chi", "eta", "mz"],
            [vec![cusp.chi.into(), cusp.eta.into(), cusp.mz.into()]],
        )
    })?;
    Ok(out.report("cusp", json!(cusp)))
}
