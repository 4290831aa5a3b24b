//! Steady states of the mean-field flow, their stability and the phase
//! diagram in the `(chi, eta)` plane.
//!
//! For `eta > 1` every fixed point has `m_x = 0`, `m_y = m_z / (chi u)` with
//! `u = F + (1 - F) m_z`, and `m_z` a root of the monic cubic
//!
//! `m^3 + (2 lambda - 1) m^2 + (lambda^2 - 2 lambda + 1/kappa) m - lambda^2`
//!
//! with `lambda = F / (1 - F)` and `kappa = 2 chi^2 (1 - F)^2`. All real
//! roots lie in `(0, 1)`.

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::meanfield::{mf_jacobian, mf_rhs, MagState};
use crate::model::{f_coeff_limit, ModelParams};
use crate::{Error, Result};

/// Eigenvalues with modulus below this are treated as neutral directions
/// (conservation laws, families of fixed points) and ignored by the
/// classifier.
pub const NEUTRAL_EIG: f64 = 1e-9;
/// `|Re|` threshold separating decay, growth and rotation.
pub const RE_TOL: f64 = 1e-9;
/// Real-root acceptance for companion eigenvalues: `|Im| < tol (1 + |z|)`.
pub const IMAG_TOL: f64 = 1e-10;
/// Gas/liquid split on `N = |m|^2`.
pub const GAS_LIQUID_N: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Attractive,
    Repulsive,
    Saddle,
    Elliptic,
    /// Every eigenvalue is neutral.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Btc,
    Ferromagnetic,
    Gas,
    Liquid,
    UnstableMiddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Btc,
    Magnetized,
    Gas,
    Liquid,
    Coexistence,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Btc => "btc",
            Phase::Magnetized => "magnetized",
            Phase::Gas => "gas",
            Phase::Liquid => "liquid",
            Phase::Coexistence => "coexistence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub m: MagState,
    pub eigenvalues: [Complex64; 3],
    pub stability: Stability,
    pub branch: Branch,
}

/// `[b, c, d]` of the monic steady-state cubic `m^3 + b m^2 + c m + d`.
fn cubic_coeffs(chi: f64, f: f64) -> [f64; 3] {
    let lambda = f / (1.0 - f);
    let inv_kappa = 1.0 / (2.0 * chi * chi * (1.0 - f) * (1.0 - f));
    [
        2.0 * lambda - 1.0,
        lambda * lambda - 2.0 * lambda + inv_kappa,
        -lambda * lambda,
    ]
}

fn eval_cubic(c: &[f64; 3], x: f64) -> (f64, f64) {
    let p = ((x + c[0]) * x + c[1]) * x + c[2];
    let dp = (3.0 * x + 2.0 * c[0]) * x + c[1];
    (p, dp)
}

/// Discriminant of `x^3 + b x^2 + c x + d`; positive means three distinct
/// real roots.
fn discriminant(co: &[f64; 3]) -> f64 {
    let [b, c, d] = *co;
    18.0 * b * c * d - 4.0 * b * b * b * d + b * b * c * c - 4.0 * c * c * c - 27.0 * d * d
}

fn steady_discriminant(chi: f64, f: f64) -> f64 {
    discriminant(&cubic_coeffs(chi, f))
}

/// Residual scale used for root acceptance and in tests.
pub fn cubic_scale(chi: f64, eta: f64) -> f64 {
    let c = cubic_coeffs(chi, f_coeff_limit(eta));
    c.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Value of the monic cubic at `m`.
pub fn steady_cubic(chi: f64, eta: f64, m: f64) -> f64 {
    eval_cubic(&cubic_coeffs(chi, f_coeff_limit(eta)), m).0
}

fn cubic_roots(co: &[f64; 3]) -> Vec<f64> {
    let comp = Matrix3::new(-co[0], -co[1], -co[2], 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let mut roots: Vec<f64> = comp
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < IMAG_TOL * (1.0 + z.norm()))
        .map(|z| polish(co, z.re))
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

fn polish(co: &[f64; 3], mut x: f64) -> f64 {
    let mut best = eval_cubic(co, x).0.abs();
    for _ in 0..8 {
        let (p, dp) = eval_cubic(co, x);
        if p == 0.0 || dp == 0.0 {
            break;
        }
        let cand = x - p / dp;
        let r = eval_cubic(co, cand).0.abs();
        if r < best {
            best = r;
            x = cand;
        } else {
            break;
        }
    }
    x
}

/// Real roots `m_z` of the steady-state cubic, ascending.
pub fn solve_steady_cubic(chi: f64, eta: f64) -> Result<Vec<f64>> {
    if !(eta > 1.0) {
        return Err(Error::Domain(format!("the steady-state cubic needs eta > 1, got {eta}")));
    }
    if !(chi > 0.0 && chi.is_finite()) {
        return Err(Error::Domain(format!("the steady-state cubic needs chi > 0, got {chi}")));
    }
    let f = f_coeff_limit(eta);
    if f >= 1.0 {
        // zero range: the cubic degenerates to a linear equation
        return Ok(vec![2.0 * chi * chi / (2.0 * chi * chi + 1.0)]);
    }
    Ok(cubic_roots(&cubic_coeffs(chi, f)))
}

/// Eigenvalues of the Jacobian at `fp` and the resulting classification.
pub fn classify_stability(fp: MagState, params: &ModelParams) -> Result<([Complex64; 3], Stability)> {
    let res = mf_rhs(fp, params);
    let r = res.to_array().iter().map(|v| v * v).sum::<f64>().sqrt();
    if r >= 1e-8 {
        return Err(Error::Precondition(format!(
            "({}, {}, {}) is not a fixed point, |rhs| = {r:e}",
            fp.mx, fp.my, fp.mz
        )));
    }
    let ev = mf_jacobian(fp, params).complex_eigenvalues();
    let mut eigs = [ev[0], ev[1], ev[2]];
    eigs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok((eigs, stability_of(&eigs)))
}

fn stability_of(eigs: &[Complex64]) -> Stability {
    let active: Vec<&Complex64> = eigs.iter().filter(|z| z.norm() >= NEUTRAL_EIG).collect();
    if active.is_empty() {
        return Stability::Degenerate;
    }
    if active.iter().all(|z| z.re < -RE_TOL) {
        Stability::Attractive
    } else if active.iter().all(|z| z.re > RE_TOL) {
        Stability::Repulsive
    } else if active.iter().all(|z| z.re.abs() < RE_TOL) && active.iter().any(|z| z.im.abs() >= RE_TOL) {
        Stability::Elliptic
    } else {
        Stability::Saddle
    }
}

fn require_limit(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if let Some(n) = params.n_sites {
        return Err(Error::Precondition(format!(
            "fixed points are defined in the thermodynamic limit, got n_sites = {n}"
        )));
    }
    Ok(())
}

/// Closed-form steady state in the long-range regime. Of the circle and line
/// of fixed points present there, this is the one on the Bloch sphere.
fn long_range_point(chi: f64) -> (MagState, Branch) {
    if chi > 1.0 {
        (
            MagState::new(0.0, 1.0 / chi, (chi * chi - 1.0).sqrt() / chi),
            Branch::Ferromagnetic,
        )
    } else {
        (MagState::new((1.0 - chi * chi).sqrt(), chi, 0.0), Branch::Btc)
    }
}

fn point_from_mz(chi: f64, f: f64, mz: f64) -> MagState {
    MagState::new(0.0, mz / (chi * (f + mz * (1.0 - f))), mz)
}

/// All mean-field fixed points for `params`, ordered by increasing `m_z`.
pub fn fixed_points(params: &ModelParams) -> Result<Vec<FixedPoint>> {
    require_limit(params)?;
    let (chi, eta) = (params.chi, params.eta);
    let mut out = Vec::with_capacity(3);
    if eta <= 1.0 || chi == 0.0 {
        let (m, branch) = long_range_point(chi);
        let (eigenvalues, stability) = classify_stability(m, params)?;
        out.push(FixedPoint {
            m,
            eigenvalues,
            stability,
            branch,
        });
        return Ok(out);
    }
    let f = params.f_eta();
    let roots = solve_steady_cubic(chi, eta)?;
    let n_roots = roots.len();
    for (k, &mz) in roots.iter().enumerate() {
        let m = if f >= 1.0 {
            MagState::new(0.0, 2.0 * chi / (2.0 * chi * chi + 1.0), mz)
        } else {
            point_from_mz(chi, f, mz)
        };
        let (eigenvalues, stability) = classify_stability(m, params)?;
        let branch = match (n_roots, k) {
            (3, 0) => Branch::Gas,
            (3, 1) => Branch::UnstableMiddle,
            (3, _) => Branch::Liquid,
            _ if m.norm_sq() < GAS_LIQUID_N => Branch::Gas,
            _ => Branch::Liquid,
        };
        out.push(FixedPoint {
            m,
            eigenvalues,
            stability,
            branch,
        });
    }
    Ok(out)
}

/// Phase label of one point. On `eta <= 1` the BTC region is closed at
/// `chi = 1`.
pub fn phase_classify(chi: f64, eta: f64) -> Result<Phase> {
    if !(chi >= 0.0 && eta >= 0.0) {
        return Err(Error::Domain(format!("need chi, eta >= 0, got ({chi}, {eta})")));
    }
    if eta <= 1.0 {
        return Ok(if chi <= 1.0 { Phase::Btc } else { Phase::Magnetized });
    }
    if chi == 0.0 {
        return Ok(Phase::Gas);
    }
    let roots = solve_steady_cubic(chi, eta)?;
    if roots.len() == 3 {
        return Ok(Phase::Coexistence);
    }
    let f = f_coeff_limit(eta);
    let mz = roots[0];
    let m = if f >= 1.0 {
        MagState::new(0.0, 2.0 * chi / (2.0 * chi * chi + 1.0), mz)
    } else {
        point_from_mz(chi, f, mz)
    };
    Ok(if m.norm_sq() < GAS_LIQUID_N {
        Phase::Gas
    } else {
        Phase::Liquid
    })
}

fn bisect<F: Fn(f64) -> bool>(mut lo: f64, mut hi: f64, pred: F) -> f64 {
    // pred(lo) != pred(hi)
    let at_lo = pred(lo);
    while hi - lo > 1e-13 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if pred(mid) == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `chi` interval on which three real roots coexist, or `None`.
///
/// The discriminant is a cubic in the linear coefficient `c`, and `c` is
/// monotone in `chi`, so the region is bracketed from the local maximum of
/// the discriminant in `c` and each endpoint is then bisected on the sign of
/// the discriminant in `chi`.
pub fn coexistence_interval(eta: f64) -> Result<Option<(f64, f64)>> {
    if !(eta > 1.0) {
        return Err(Error::Domain(format!("coexistence needs eta > 1, got {eta}")));
    }
    let f = f_coeff_limit(eta);
    if f >= 1.0 {
        return Ok(None);
    }
    let lambda = f / (1.0 - f);
    let b = 2.0 * lambda - 1.0;
    let d = -lambda * lambda;
    // d(disc)/dc = -12 c^2 + 2 b^2 c + 18 b d
    let q = 4.0 * b.powi(4) + 864.0 * b * d;
    if q < 0.0 {
        return Ok(None);
    }
    let c_star = (2.0 * b * b + q.sqrt()) / 24.0;
    // c = lambda^2 - 2 lambda + 1 / (2 chi^2 (1 - F)^2)
    let s_star = c_star - lambda * lambda + 2.0 * lambda;
    let chi_of_s = |s: f64| 1.0 / ((1.0 - f) * (2.0 * s).sqrt());
    let inside = |chi: f64| steady_discriminant(chi, f) > 0.0;
    let chi_star = if s_star > 0.0 { chi_of_s(s_star) } else { f64::INFINITY };
    if !chi_star.is_finite() || !inside(chi_star) {
        return Ok(None);
    }
    let mut below = chi_star;
    while inside(below) {
        below *= 0.5;
        if below < 1e-12 {
            return Ok(Some((0.0, f64::INFINITY)));
        }
    }
    let lo = bisect(below, chi_star, inside);
    let mut above = chi_star;
    while inside(above) {
        above *= 2.0;
        if above > 1e15 {
            return Ok(Some((lo, f64::INFINITY)));
        }
    }
    let hi = bisect(chi_star, above, inside);
    Ok(Some((lo, hi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cusp {
    pub chi: f64,
    pub eta: f64,
    /// Triple root at the cusp.
    pub mz: f64,
}

/// Endpoint of the coexistence region: bisection in `eta` between a value
/// with a non-empty interval and one without.
pub fn locate_cusp() -> Cusp {
    let (mut lo, mut hi) = (1.2, 2.0);
    let mut last = coexistence_interval(lo).ok().flatten().expect("coexistence at eta = 1.2");
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        match coexistence_interval(mid).ok().flatten() {
            Some(iv) => {
                lo = mid;
                last = iv;
            }
            None => hi = mid,
        }
    }
    let chi = 0.5 * (last.0 + last.1);
    // at a triple root it equals the mean of the roots, -b/3
    let mz = -cubic_coeffs(chi, f_coeff_limit(lo))[0] / 3.0;
    Cusp { chi, eta: lo, mz }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseDiagramGrid {
    pub chi_axis: Vec<f64>,
    pub eta_axis: Vec<f64>,
    /// `labels[i_eta][i_chi]`.
    pub labels: Vec<Vec<Phase>>,
    pub fixed_points: Vec<Vec<Vec<FixedPoint>>>,
}

impl PhaseDiagramGrid {
    pub fn label(&self, chi_idx: usize, eta_idx: usize) -> Phase {
        self.labels[eta_idx][chi_idx]
    }
}

fn check_axis(name: &'static str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(name, "empty grid"));
    }
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::invalid(name, "grid values must be finite and >= 0"));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(name, "grid must be strictly increasing"));
    }
    Ok(())
}

/// Label and fixed points on every cell, in parallel; results are gathered
/// by index so the output does not depend on scheduling.
pub fn scan_phase_diagram(chi_grid: &[f64], eta_grid: &[f64]) -> Result<PhaseDiagramGrid> {
    check_axis("chi_grid", chi_grid)?;
    check_axis("eta_grid", eta_grid)?;
    if chi_grid[0] == 0.0 && eta_grid.iter().any(|&e| e > 1.0) {
        return Err(Error::invalid("chi_grid", "chi = 0 is only allowed with eta <= 1"));
    }
    let nc = chi_grid.len();
    let cells: Vec<Result<(Phase, Vec<FixedPoint>)>> = (0..nc * eta_grid.len())
        .into_par_iter()
        .map(|k| {
            let (chi, eta) = (chi_grid[k % nc], eta_grid[k / nc]);
            let label = phase_classify(chi, eta)?;
            let fps = fixed_points(&ModelParams::new(chi, eta)?)?;
            Ok((label, fps))
        })
        .collect();
    let mut labels = vec![Vec::with_capacity(nc); eta_grid.len()];
    let mut fixed = vec![Vec::with_capacity(nc); eta_grid.len()];
    for (k, cell) in cells.into_iter().enumerate() {
        let (label, fps) = cell?;
        labels[k / nc].push(label);
        fixed[k / nc].push(fps);
    }
    Ok(PhaseDiagramGrid {
        chi_axis: chi_grid.to_vec(),
        eta_axis: eta_grid.to_vec(),
        labels,
        fixed_points: fixed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MzFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Euclidean norm of the residual vector.
    pub residual: f64,
    pub iterations: usize,
}

impl MzFit {
    pub fn eval(&self, eta: f64) -> f64 {
        self.a * (-self.b / (eta - 1.0).powf(self.c)).exp()
    }
}

/// Small-`N` branch `m_z(eta)` at fixed `chi`.
pub fn gas_branch_mz(chi: f64, eta: f64) -> Result<f64> {
    Ok(solve_steady_cubic(chi, eta)?[0])
}

/// Least-squares fit of `m_z(eta) = a exp(-b / (eta - 1)^c)` to the small-`N`
/// fixed-point branch. Absolute residuals; the start comes from a scan over
/// `c` with a log-linear fit for `(a, b)`, then Levenberg-Marquardt.
pub fn fit_mz_vs_eta(chi: f64, eta_samples: &[f64]) -> Result<MzFit> {
    if !(chi > 0.0 && chi < 1.0) {
        return Err(Error::invalid("chi", format!("the fit needs 0 < chi < 1, got {chi}")));
    }
    if eta_samples.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 eta samples, got {}",
            eta_samples.len()
        )));
    }
    if eta_samples.iter().any(|&e| !(e > 1.0 && e.is_finite())) {
        return Err(Error::invalid("eta_samples", "all samples must be finite and > 1"));
    }
    let ys = eta_samples
        .iter()
        .map(|&e| gas_branch_mz(chi, e))
        .collect::<Result<Vec<f64>>>()?;
    let xs: Vec<f64> = eta_samples.iter().map(|e| e - 1.0).collect();
    let model = |p: &[f64; 3], x: f64| p[0] * (-p[1] / x.powf(p[2])).exp();
    let sse = |p: &[f64; 3]| -> f64 { xs.iter().zip(&ys).map(|(&x, &y)| (model(p, x) - y).powi(2)).sum() };

    // start: for each c, ln m = ln a - b x^-c is linear in x^-c
    let mut start = [1.0, 1.0, 1.0];
    let mut best = f64::INFINITY;
    for k in 1..=60 {
        let c = 0.05 * k as f64;
        let u: Vec<f64> = xs.iter().map(|x| x.powf(-c)).collect();
        let v: Vec<f64> = ys.iter().map(|y| y.max(f64::MIN_POSITIVE).ln()).collect();
        let n = u.len() as f64;
        let (su, sv) = (u.iter().sum::<f64>(), v.iter().sum::<f64>());
        let suu: f64 = u.iter().map(|a| a * a).sum();
        let suv: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let den = n * suu - su * su;
        if den.abs() < 1e-300 {
            continue;
        }
        let slope = (n * suv - su * sv) / den;
        let icpt = (sv - slope * su) / n;
        let p = [icpt.exp(), -slope, c];
        let s = sse(&p);
        if s.is_finite() && s < best {
            best = s;
            start = p;
        }
    }

    let mut p = start;
    let mut cost = sse(&p);
    let mut mu = 1e-3;
    let mut iterations = 0;
    let m = xs.len();
    for it in 0..500 {
        iterations = it + 1;
        let mut jac = DMatrix::<f64>::zeros(m, 3);
        let mut r = DVector::<f64>::zeros(m);
        for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
            let e = (-p[1] / x.powf(p[2])).exp();
            let g = p[0] * e;
            r[i] = g - y;
            jac[(i, 0)] = e;
            jac[(i, 1)] = -g / x.powf(p[2]);
            jac[(i, 2)] = g * p[1] * x.powf(-p[2]) * x.ln();
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..3 {
                a[(d, d)] += mu * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                mu *= 10.0;
                continue;
            };
            let cand = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            let cc = sse(&cand);
            if cc.is_finite() && cc < cost {
                let rel = (cost - cc) / cost.max(1e-300);
                p = cand;
                cost = cc;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-14 {
                    return Ok(MzFit {
                        a: p[0],
                        b: p[1],
                        c: p[2],
                        residual: cost.sqrt(),
                        iterations,
                    });
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if !p.iter().all(|v| v.is_finite()) || p[0] <= 0.0 || p[2] <= 0.0 {
        return Err(Error::Fit {
            reason: format!("diverged to a = {}, b = {}, c = {}", p[0], p[1], p[2]),
            iterations,
            residual: cost.sqrt(),
        });
    }
    Ok(MzFit {
        a: p[0],
        b: p[1],
        c: p[2],
        residual: cost.sqrt(),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_range_examples() {
        let fps = fixed_points(&ModelParams::new(0.5, 0.8).unwrap()).unwrap();
        assert_eq!(fps.len(), 1);
        assert!(fps[0].m.dist(MagState::new(0.75f64.sqrt(), 0.5, 0.0)) < 1e-15);
        assert_eq!(fps[0].stability, Stability::Elliptic);
        assert_eq!(fps[0].branch, Branch::Btc);

        let fps = fixed_points(&ModelParams::new(2.0, 0.5).unwrap()).unwrap();
        assert!(fps[0].m.dist(MagState::new(0.0, 0.5, 3f64.sqrt() / 2.0)) < 1e-15);
        assert_eq!(fps[0].stability, Stability::Attractive);
        assert_eq!(fps[0].branch, Branch::Ferromagnetic);
    }

    #[test]
    fn coexistence_example() {
        let p = ModelParams::new(2.0, 1.2).unwrap();
        let fps = fixed_points(&p).unwrap();
        assert_eq!(fps.len(), 3);
        let stab: Vec<Stability> = fps.iter().map(|f| f.stability).collect();
        assert_eq!(stab[0], Stability::Attractive);
        assert_ne!(stab[1], Stability::Attractive);
        assert!(fps[1].eigenvalues.iter().any(|z| z.re > 0.0));
        assert_eq!(stab[2], Stability::Attractive);
        for fp in &fps {
            assert!(mf_rhs(fp.m, &p).to_array().iter().all(|v| v.abs() < 1e-12));
        }
        // chi = 1.3 lies below the interval at eta = 1.2
        assert_eq!(solve_steady_cubic(1.3, 1.2).unwrap().len(), 1);
    }

    #[test]
    fn cubic_root_counts_and_residuals() {
        assert_eq!(solve_steady_cubic(1.3, 2.0).unwrap().len(), 1);
        assert_eq!(solve_steady_cubic(1.5, 1.2).unwrap().len(), 3);
        assert!(solve_steady_cubic(1.3, 1.0).is_err());
        for (chi, eta) in [(0.3, 1.05), (1.5, 1.2), (2.0, 1.1), (1.22, 1.62), (5.0, 3.0)] {
            let scale = cubic_scale(chi, eta);
            for r in solve_steady_cubic(chi, eta).unwrap() {
                assert!(r > 0.0 && r < 1.0);
                assert!(steady_cubic(chi, eta, r).abs() < 1e-13 * scale, "({chi},{eta}) root {r}");
            }
        }
    }

    #[test]
    fn discriminant_sign_matches_root_count() {
        for eta in [1.1, 1.3, 1.5] {
            let f = f_coeff_limit(eta);
            for k in 1..200 {
                let chi = 0.05 * k as f64;
                let n = solve_steady_cubic(chi, eta).unwrap().len();
                let d = steady_discriminant(chi, f);
                // skip cells sitting on the boundary
                if d.abs() > 1e-12 {
                    assert_eq!(n == 3, d > 0.0, "chi={chi} eta={eta}");
                }
            }
        }
    }

    #[test]
    fn zero_range_steady_state() {
        for chi in [0.3, 1.0, 2.0] {
            let fps = fixed_points(&ModelParams::new(chi, f64::INFINITY).unwrap()).unwrap();
            let d = 2.0 * chi * chi + 1.0;
            assert_eq!(fps.len(), 1);
            assert!(fps[0].m.dist(MagState::new(0.0, 2.0 * chi / d, 2.0 * chi * chi / d)) < 1e-12);
        }
    }

    #[test]
    fn stability_rules() {
        let z = |re: f64, im: f64| Complex64::new(re, im);
        assert_eq!(
            stability_of(&[z(-1.0, 0.0), z(-1.0, 0.0), z(0.0, 0.0)]),
            Stability::Attractive
        );
        assert_eq!(stability_of(&[z(0.0, 1.0), z(0.0, -1.0), z(0.0, 0.0)]), Stability::Elliptic);
        assert_eq!(stability_of(&[z(-1.0, 0.0), z(2.0, 0.0), z(0.0, 0.0)]), Stability::Saddle);
        assert_eq!(stability_of(&[z(1.0, 0.0), z(2.0, 0.0), z(3.0, 0.0)]), Stability::Repulsive);
        assert_eq!(stability_of(&[z(0.0, 0.0); 3]), Stability::Degenerate);
    }

    #[test]
    fn classify_rejects_non_fixed_points() {
        let p = ModelParams::new(0.7, 0.3).unwrap();
        assert!(matches!(
            classify_stability(MagState::new(0.1, 0.2, 0.3), &p),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn finite_size_has_no_fixed_points() {
        let p = ModelParams::new(0.7, 1.3).unwrap().with_sites(8).unwrap();
        assert!(matches!(fixed_points(&p), Err(Error::Precondition(_))));
    }

    #[test]
    fn phase_labels() {
        assert_eq!(phase_classify(0.7, 0.5).unwrap(), Phase::Btc);
        assert_eq!(phase_classify(1.0, 1.0).unwrap(), Phase::Btc);
        assert_eq!(phase_classify(1.3, 0.5).unwrap(), Phase::Magnetized);
        assert_eq!(phase_classify(2.0, 1.2).unwrap(), Phase::Coexistence);
        assert_eq!(phase_classify(0.5, 2.0).unwrap(), Phase::Gas);
        assert_eq!(phase_classify(3.0, 2.0).unwrap(), Phase::Liquid);
    }

    #[test]
    fn grid_is_deterministic() {
        let chi: Vec<f64> = (1..=12).map(|k| 0.2 * k as f64).collect();
        let eta: Vec<f64> = (1..=10).map(|k| 0.3 * k as f64).collect();
        let a = scan_phase_diagram(&chi, &eta).unwrap();
        let b = scan_phase_diagram(&chi, &eta).unwrap();
        assert_eq!(a, b);
        assert!(scan_phase_diagram(&[1.0, 0.5], &eta).is_err());
        assert!(scan_phase_diagram(&[0.0, 0.5], &eta).is_err());
    }
}
