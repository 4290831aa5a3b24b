//! Gaussian closure: magnetization plus two-site correlators
//! `C^{ab}_{lm} = <sigma_l^a sigma_m^b>` (`l != m`), with every third
//! cumulant set to zero.
//!
//! In the thermodynamic limit the correlators are site independent and the
//! system has nine equations. At finite `N` they are indexed by ring distance
//! `r = 1..=N/2`, and the couplings enter through the gram coefficients
//! `F_r` of [`CouplingTable::gram_by_distance`].

use std::sync::OnceLock;

use nalgebra::Matrix3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Partial;
use crate::meanfield::MagState;
use crate::model::{CouplingTable, ModelParams};
use crate::ode::{self, OdeSystem, SolverOptions, SolverStats};
use crate::special::CompensatedSum;
use crate::{Error, Result};

/// Correlator bound checked along trajectories; leaving it ends the stable
/// window.
pub const CORRELATOR_BOUND: f64 = 1.0 + 1e-6;

const X: usize = 0;
const Z: usize = 2;

fn eps(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Symmetric 3x3 correlator stored as `xx, xy, xz, yy, yz, zz`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SymCorr(pub [f64; 6]);

impl SymCorr {
    const IDX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.0[Self::IDX[a][b]]
    }

    /// Uncorrelated value `m_a m_b`.
    pub fn product(m: MagState) -> Self {
        let v = m.to_array();
        let mut c = [0.0; 6];
        for a in 0..3 {
            for b in a..3 {
                c[Self::IDX[a][b]] = v[a] * v[b];
            }
        }
        Self(c)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|a, b| self.get(a, b))
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self([m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussState {
    pub m: MagState,
    pub c: SymCorr,
}

impl GaussState {
    pub fn product(m: MagState) -> Self {
        Self {
            m,
            c: SymCorr::product(m),
        }
    }

    fn to_vec(self) -> [f64; 9] {
        let mut v = [0.0; 9];
        v[..3].copy_from_slice(&self.m.to_array());
        v[3..].copy_from_slice(&self.c.0);
        v
    }

    fn from_slice(v: &[f64]) -> Self {
        let mut c = [0.0; 6];
        c.copy_from_slice(&v[3..9]);
        Self {
            m: MagState::from_slice(v),
            c: SymCorr(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteGaussState {
    pub m: MagState,
    /// `c_r[r - 1]` for `r = 1..=N/2`.
    pub c_r: Vec<SymCorr>,
}

impl FiniteGaussState {
    pub fn product(m: MagState, n_sites: usize) -> Self {
        Self {
            m,
            c_r: vec![SymCorr::product(m); n_sites / 2],
        }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + 6 * self.c_r.len());
        v.extend_from_slice(&self.m.to_array());
        for c in &self.c_r {
            v.extend_from_slice(&c.0);
        }
        v
    }

    fn from_slice(v: &[f64]) -> Self {
        let c_r = v[3..]
            .chunks_exact(6)
            .map(|ch| {
                let mut c = [0.0; 6];
                c.copy_from_slice(ch);
                SymCorr(c)
            })
            .collect();
        Self {
            m: MagState::from_slice(v),
            c_r,
        }
    }

    /// Correlator averaged over all distinct pairs.
    pub fn pair_average(&self, n_sites: usize) -> SymCorr {
        let mut acc = [0.0; 6];
        let mut w = 0.0;
        for (k, c) in self.c_r.iter().enumerate() {
            let mult = crate::model::distance_multiplicity(n_sites, k + 1) as f64;
            for (a, v) in acc.iter_mut().zip(&c.0) {
                *a += mult * v;
            }
            w += mult;
        }
        if w > 0.0 {
            acc.iter_mut().for_each(|a| *a /= w);
        }
        SymCorr(acc)
    }
}

/// `Delta_z = C_zz - m_z^2`.
pub fn variance_z(state: &GaussState) -> f64 {
    state.c.get(Z, Z) - state.m.mz * state.m.mz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceSample {
    pub t: f64,
    pub delta_z: f64,
}

/// Pauli decomposition `(c_I, c_x, c_y, c_z)` of a single-site operator.
type Pauli4 = [Complex64; 4];
type M2 = [[Complex64; 2]; 2];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pauli_matrix(k: usize) -> M2 {
    let (o, z) = (c(1.0, 0.0), c(0.0, 0.0));
    match k {
        0 => [[o, z], [z, o]],
        1 => [[z, o], [o, z]],
        2 => [[z, c(0.0, -1.0)], [c(0.0, 1.0), z]],
        _ => [[o, z], [z, -o]],
    }
}

fn mat_mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[c(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mat_comm(a: &M2, b: &M2) -> M2 {
    let (ab, ba) = (mat_mul(a, b), mat_mul(b, a));
    let mut out = ab;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] -= ba[i][j];
        }
    }
    out
}

fn decompose(m: &M2) -> Pauli4 {
    std::array::from_fn(|k| {
        let p = pauli_matrix(k);
        0.5 * (p[0][0] * m[0][0] + p[0][1] * m[1][0] + p[1][0] * m[0][1] + p[1][1] * m[1][1])
    })
}

/// Single-site pieces of the adjoint dissipator for `sigma^a`.
struct LocalOps {
    /// `s- A s+ - {s- s+, A} / 2`
    local: Pauli4,
    /// `[s-, A]`
    comm_minus: Pauli4,
    /// `[A, s+]`
    comm_plus: Pauli4,
    minus_a: Pauli4,
    a_plus: Pauli4,
    pauli: Pauli4,
}

struct LocalTable {
    ops: [LocalOps; 3],
    plus: Pauli4,
    minus: Pauli4,
}

fn local_table() -> &'static LocalTable {
    static TABLE: OnceLock<LocalTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let o = c(1.0, 0.0);
        let z = c(0.0, 0.0);
        let sp: M2 = [[z, o], [z, z]];
        let sm: M2 = [[z, z], [o, z]];
        let down = mat_mul(&sm, &sp);
        let ops = std::array::from_fn(|k| {
            let a = pauli_matrix(k + 1);
            let mut local = mat_mul(&mat_mul(&sm, &a), &sp);
            let anti = {
                let (x, y) = (mat_mul(&down, &a), mat_mul(&a, &down));
                let mut s = x;
                for i in 0..2 {
                    for j in 0..2 {
                        s[i][j] += y[i][j];
                    }
                }
                s
            };
            for i in 0..2 {
                for j in 0..2 {
                    local[i][j] -= 0.5 * anti[i][j];
                }
            }
            LocalOps {
                local: decompose(&local),
                comm_minus: decompose(&mat_comm(&sm, &a)),
                comm_plus: decompose(&mat_comm(&a, &sp)),
                minus_a: decompose(&mat_mul(&sm, &a)),
                a_plus: decompose(&mat_mul(&a, &sp)),
                pauli: decompose(&a),
            }
        });
        LocalTable {
            ops,
            plus: decompose(&sp),
            minus: decompose(&sm),
        }
    })
}

fn expect1(u: &Pauli4, m: &[f64; 3]) -> Complex64 {
    u[0] + (0..3).map(|a| u[a + 1] * m[a]).sum::<Complex64>()
}

/// `<u_l v_m>` for two distinct sites with correlator `cr`.
fn expect2(u: &Pauli4, v: &Pauli4, m: &[f64; 3], cr: &SymCorr) -> Complex64 {
    let mut s = u[0] * v[0];
    for a in 0..3 {
        s += u[0] * v[a + 1] * m[a] + v[0] * u[a + 1] * m[a];
        for b in 0..3 {
            s += u[a + 1] * v[b + 1] * cr.get(a, b);
        }
    }
    s
}

/// Sums over sites `e` outside the pair `(l, m)`, from the point of view of
/// one pair member `p` (the other is `q`):
/// `weight = sum_e F_pe`, `own = sum_e F_pe C_pe`, `cross = sum_e F_pe C_qe`.
#[derive(Debug, Clone, Copy)]
struct External {
    weight: f64,
    own: SymCorr,
    cross: SymCorr,
}

/// `sum_e F_pe <x_p y_q w_e>` with zero third cumulant; `x`, `y`, `w`
/// traceless.
fn expect3(x: &Pauli4, y: &Pauli4, w: &Pauli4, m: &[f64; 3], cpq: &SymCorr, ext: &External) -> Complex64 {
    let mut s = c(0.0, 0.0);
    for a in 0..3 {
        for b in 0..3 {
            let xy = x[a + 1] * y[b + 1];
            if xy == c(0.0, 0.0) {
                continue;
            }
            for cc in 0..3 {
                let g = cpq.get(a, b) * m[cc] * ext.weight + ext.own.get(a, cc) * m[b] + ext.cross.get(b, cc) * m[a]
                    - 2.0 * m[a] * m[b] * m[cc] * ext.weight;
                s += xy * w[cc + 1] * g;
            }
        }
    }
    s
}

/// Ring quantities entering one pair equation.
#[derive(Debug, Clone, Copy)]
struct PairEnv {
    /// Gram coefficient of the pair.
    f_pair: f64,
    /// Diagonal gram coefficient.
    f_self: f64,
    ext: External,
}

/// `d<sigma^a_l sigma^b_m>/dt` for every `a <= b`. The environment is the
/// same seen from `l` and from `m` (reflection symmetry of the ring).
fn pair_rhs_all(m: &[f64; 3], cr: &SymCorr, env: &PairEnv, j: f64, gamma: f64) -> SymCorr {
    let tab = local_table();
    let mut out = [0.0; 6];
    for a in 0..3 {
        for b in a..3 {
            let (oa, ob) = (&tab.ops[a], &tab.ops[b]);
            let mut drive = 0.0;
            for th in 0..3 {
                drive += eps(X, a, th) * cr.get(th, b) + eps(X, b, th) * cr.get(a, th);
            }
            let local = env.f_self * (expect2(&oa.local, &ob.pauli, m, cr) + expect2(&oa.pauli, &ob.local, m, cr));
            let pair = 0.5
                * env.f_pair
                * (expect2(&oa.minus_a, &ob.comm_plus, m, cr)
                    + expect2(&oa.comm_minus, &ob.a_plus, m, cr)
                    + expect2(&oa.comm_plus, &ob.minus_a, m, cr)
                    + expect2(&oa.a_plus, &ob.comm_minus, m, cr));
            // seen from m the environment is the same, so the m-side terms
            // reuse `expect3` with the pair roles swapped
            let ext = 0.5
                * (expect3(&oa.comm_minus, &ob.pauli, &tab.plus, m, cr, &env.ext)
                    + expect3(&oa.comm_plus, &ob.pauli, &tab.minus, m, cr, &env.ext)
                    + expect3(&ob.comm_minus, &oa.pauli, &tab.plus, m, cr, &env.ext)
                    + expect3(&ob.comm_plus, &oa.pauli, &tab.minus, m, cr, &env.ext));
            let diss = local + pair + ext;
            debug_assert!(diss.im.abs() < 1e-10);
            out[SymCorr::IDX[a][b]] = 2.0 * j * drive + gamma * diss.re;
        }
    }
    SymCorr(out)
}

/// `dm/dt` given the diagonal gram coefficient and `t = sum_{e != l} F_le C_le`.
fn magnetization_rhs(m: &[f64; 3], f_self: f64, t: &SymCorr, j: f64, gamma: f64) -> MagState {
    let tab = local_table();
    let d: [f64; 3] = std::array::from_fn(|a| {
        let o = &tab.ops[a];
        let mut ext = c(0.0, 0.0);
        for p in 0..3 {
            for q in 0..3 {
                ext += 0.5 * t.get(p, q) * (o.comm_minus[p + 1] * tab.plus[q + 1] + o.comm_plus[p + 1] * tab.minus[q + 1]);
            }
        }
        let drive: f64 = (0..3).map(|th| eps(X, a, th) * m[th]).sum();
        2.0 * j * drive + gamma * (f_self * expect1(&o.local, m) + ext).re
    });
    MagState::new(d[0], d[1], d[2])
}

/// Time derivative of the nine-variable limit system.
pub fn gaussian_rhs_limit(state: &GaussState, params: &ModelParams) -> GaussState {
    gaussian_rhs_limit_with(state, params.j, params.gamma, params.f_eta())
}

/// Limit closure: the pair coefficient vanishes, the diagonal one is `f` and
/// the remaining weight `1 - f` is spread over sites with the common
/// correlator.
pub fn gaussian_rhs_limit_with(state: &GaussState, j: f64, gamma: f64, f: f64) -> GaussState {
    let m = state.m.to_array();
    let rest = SymCorr(state.c.0.map(|v| (1.0 - f) * v));
    let env = PairEnv {
        f_pair: 0.0,
        f_self: f,
        ext: External {
            weight: 1.0 - f,
            own: rest,
            cross: rest,
        },
    };
    GaussState {
        m: magnetization_rhs(&m, f, &rest, j, gamma),
        c: pair_rhs_all(&m, &state.c, &env, j, gamma),
    }
}

/// Precomputed ring data for the finite-size system.
#[derive(Debug, Clone)]
pub struct FiniteGaussModel {
    n: usize,
    j: f64,
    gamma: f64,
    /// `F_r`, `r = 0..=N/2`.
    gram: Vec<f64>,
    /// `sum_e F_le`.
    row_sum: f64,
}

impl FiniteGaussModel {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let n = params
            .n_sites
            .ok_or_else(|| Error::Precondition("the finite-size closure needs n_sites".into()))?;
        let table = CouplingTable::new(n, params.eta)?;
        let gram = table.gram_by_distance();
        let row_sum = (0..n).map(|e| gram[table.distance(0, e)]).collect::<CompensatedSum>().value();
        Ok(Self {
            n,
            j: params.j,
            gamma: params.gamma,
            gram,
            row_sum,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    fn ring(&self, d: isize) -> usize {
        let n = self.n as isize;
        let d = d.rem_euclid(n) as usize;
        d.min(self.n - d)
    }

    /// `dstate/dt`.
    pub fn rhs(&self, state: &FiniteGaussState) -> FiniteGaussState {
        let n = self.n;
        let rmax = n / 2;
        assert_eq!(state.c_r.len(), rmax, "state has the wrong number of distances");
        let m = state.m.to_array();
        let c_at = |d: usize| &state.c_r[d - 1];
        let f0 = self.gram[0];

        let mut t = [0.0; 6];
        for e in 1..n {
            let d = self.ring(e as isize);
            let w = self.gram[d];
            for (ti, ci) in t.iter_mut().zip(&c_at(d).0) {
                *ti += w * ci;
            }
        }
        let t = SymCorr(t);

        let one = |r: usize| -> SymCorr {
            // site l = 0, m = r; e runs over the other sites
            let (mut own, mut cross) = ([0.0; 6], [0.0; 6]);
            for e in 1..n {
                if e == r {
                    continue;
                }
                let w = self.gram[self.ring(e as isize)];
                let (ce, cm) = (c_at(self.ring(e as isize)), c_at(self.ring(e as isize - r as isize)));
                for k in 0..6 {
                    own[k] += w * ce.0[k];
                    cross[k] += w * cm.0[k];
                }
            }
            let env = PairEnv {
                f_pair: self.gram[r],
                f_self: f0,
                ext: External {
                    weight: self.row_sum - f0 - self.gram[r],
                    own: SymCorr(own),
                    cross: SymCorr(cross),
                },
            };
            pair_rhs_all(&m, c_at(r), &env, self.j, self.gamma)
        };
        let c_r: Vec<SymCorr> = if rmax >= 64 {
            (1..=rmax).into_par_iter().map(one).collect()
        } else {
            (1..=rmax).map(one).collect()
        };
        FiniteGaussState {
            m: magnetization_rhs(&m, f0, &t, self.j, self.gamma),
            c_r,
        }
    }
}

/// Distance-resolved derivative at finite `N`.
pub fn gaussian_rhs_finite(state: &FiniteGaussState, params: &ModelParams) -> Result<FiniteGaussState> {
    Ok(FiniteGaussModel::new(params)?.rhs(state))
}

struct LimitSystem {
    j: f64,
    gamma: f64,
    f: f64,
}

impl OdeSystem for LimitSystem {
    fn dim(&self) -> usize {
        9
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = gaussian_rhs_limit_with(&GaussState::from_slice(y), self.j, self.gamma, self.f).to_vec();
        for (o, v) in dy.iter_mut().zip(d) {
            *o = v / self.j;
        }
    }
}

impl OdeSystem for FiniteGaussModel {
    fn dim(&self) -> usize {
        3 + 6 * (self.n / 2)
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = FiniteGaussModel::rhs(self, &FiniteGaussState::from_slice(y)).to_vec();
        for (o, v) in dy.iter_mut().zip(d) {
            *o = v / self.j;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GaussState>,
    pub variance: Vec<VarianceSample>,
    pub params: ModelParams,
    /// The run ended before the last requested time, either on integrator
    /// failure or on a correlator leaving [`CORRELATOR_BOUND`].
    pub truncated: bool,
    pub stop_reason: Option<String>,
    pub stats: SolverStats,
}

impl GaussTrajectory {
    pub fn max_delta_z(&self) -> f64 {
        self.variance.iter().map(|v| v.delta_z).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Default solver for the closures: BDF, since the limit system is stiff.
pub fn default_options(tol: ode::ToleranceSpec) -> SolverOptions {
    SolverOptions::with_tol(tol).method(ode::Method::Bdf)
}

/// Integrate the limit system on `[0, t_max]`, sampled every
/// [`DEFAULT_DT`](crate::meanfield::DEFAULT_DT), with the BDF solver.
pub fn integrate_gaussian(
    params: &ModelParams,
    init: GaussState,
    t_max: f64,
    tol: ode::ToleranceSpec,
) -> Result<GaussTrajectory> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid("t_max", format!("must be finite and > 0, got {t_max}")));
    }
    let n = (t_max / crate::meanfield::DEFAULT_DT).round().max(1.0) as usize + 1;
    integrate_gaussian_at(params, init, &ode::linspace(0.0, t_max, n), &default_options(tol))
}

/// Integrate the limit system and sample at `times`.
///
/// Integration stops cleanly when the solver fails or a correlator leaves
/// the bound; whatever was sampled is returned with `truncated = true`.
/// Only a failure before the first sample is an error.
pub fn integrate_gaussian_at(
    params: &ModelParams,
    init: GaussState,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<GaussTrajectory> {
    params.validate()?;
    if params.n_sites.is_some() {
        return Err(Error::Precondition(
            "the nine-variable closure is the thermodynamic limit; use integrate_gaussian_finite".into(),
        ));
    }
    let sys = LimitSystem {
        j: params.j,
        gamma: params.gamma,
        f: params.f_eta(),
    };
    let mut states = Vec::with_capacity(times.len());
    let mut out_t = Vec::with_capacity(times.len());
    let mut bound_hit = None;
    let res = ode::solve_observed(&sys, 0.0, &init.to_vec(), times, opts, |t, y| {
        let s = GaussState::from_slice(y);
        if s.c.max_abs() > CORRELATOR_BOUND || !y.iter().all(|v| v.is_finite()) {
            bound_hit = Some(t);
            return false;
        }
        out_t.push(t);
        states.push(s);
        true
    });
    let (stats, stop_reason) = match res {
        Ok(stats) => (stats, bound_hit.map(|t| format!("correlator bound exceeded at Jt = {t}"))),
        Err(fail) => (fail.stats, Some(fail.reason)),
    };
    let variance = out_t
        .iter()
        .zip(&states)
        .map(|(&t, s)| VarianceSample {
            t,
            delta_z: variance_z(s),
        })
        .collect();
    let traj = GaussTrajectory {
        truncated: stop_reason.is_some(),
        times: out_t,
        states,
        variance,
        params: *params,
        stop_reason,
        stats,
    };
    if traj.times.is_empty() && traj.truncated {
        return Err(Error::Integration {
            reason: traj.stop_reason.clone().unwrap_or_default(),
            t_reached: 0.0,
            partial: Box::new(Partial::Gaussian(traj)),
        });
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteGaussTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<FiniteGaussState>,
    pub params: ModelParams,
    pub truncated: bool,
    pub stop_reason: Option<String>,
    pub stats: SolverStats,
}

impl FiniteGaussTrajectory {
    /// `Delta_z` with `C_zz` averaged over all distinct pairs.
    pub fn delta_z(&self) -> Vec<f64> {
        let n = self.params.n_sites.unwrap_or(0);
        self.states
            .iter()
            .map(|s| s.pair_average(n).get(Z, Z) - s.m.mz * s.m.mz)
            .collect()
    }
}

/// Integrate the distance-resolved system. Same stopping policy as
/// [`integrate_gaussian`].
pub fn integrate_gaussian_finite(
    params: &ModelParams,
    init: &FiniteGaussState,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<FiniteGaussTrajectory> {
    let model = FiniteGaussModel::new(params)?;
    if init.c_r.len() != model.n / 2 {
        return Err(Error::invalid(
            "init",
            format!("expected {} distances, got {}", model.n / 2, init.c_r.len()),
        ));
    }
    let mut states = Vec::new();
    let mut out_t = Vec::new();
    let mut bound_hit = None;
    let res = ode::solve_observed(&model, 0.0, &init.to_vec(), times, opts, |t, y| {
        let s = FiniteGaussState::from_slice(y);
        if s.c_r.iter().any(|c| c.max_abs() > CORRELATOR_BOUND) || !y.iter().all(|v| v.is_finite()) {
            bound_hit = Some(t);
            return false;
        }
        out_t.push(t);
        states.push(s);
        true
    });
    let (stats, stop_reason) = match res {
        Ok(stats) => (stats, bound_hit.map(|t| format!("correlator bound exceeded at Jt = {t}"))),
        Err(fail) => (fail.stats, Some(fail.reason)),
    };
    if out_t.is_empty() && stop_reason.is_some() {
        return Err(Error::Integration {
            reason: stop_reason.unwrap_or_default(),
            t_reached: 0.0,
            partial: Box::new(Partial::Gaussian(GaussTrajectory {
                times: Vec::new(),
                states: Vec::new(),
                variance: Vec::new(),
                params: *params,
                truncated: true,
                stop_reason: None,
                stats,
            })),
        });
    }
    Ok(FiniteGaussTrajectory {
        truncated: stop_reason.is_some(),
        times: out_t,
        states,
        params: *params,
        stop_reason,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::mf_rhs;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_state(seed: &mut u64) -> GaussState {
        let m = MagState::new(lcg(seed) * 0.6, lcg(seed) * 0.6, lcg(seed) * 0.6);
        let mut c = [0.0; 6];
        c.iter_mut().for_each(|v| *v = lcg(seed) * 0.5);
        GaussState { m, c: SymCorr(c) }
    }

    #[test]
    fn product_state_reduces_to_mean_field() {
        let mut seed = 7;
        for _ in 0..100 {
            let chi = 0.1 + 2.0 * lcg(&mut seed).abs();
            let eta = 3.0 * lcg(&mut seed).abs();
            let p = ModelParams::new(chi, eta).unwrap();
            let m = random_state(&mut seed).m;
            let d = gaussian_rhs_limit(&GaussState::product(m), &p);
            assert!(d.m.dist(mf_rhs(m, &p)) < 1e-12);
        }
    }

    /// Nine-equation closure written out for vanishing `F`.
    fn long_range_limit(s: &GaussState, j: f64, gamma: f64) -> GaussState {
        let MagState { mx, my, mz } = s.m;
        let [cxx, cxy, cxz, cyy, cyz, czz] = s.c.0;
        let g = 0.5 * gamma;
        let px = 2.0 * cxz - 2.0 * mx * mz;
        let py = 2.0 * cyz - 2.0 * my * mz;
        let pump = cxx + cyy;
        GaussState {
            m: MagState::new(-g * cxz, 2.0 * j * mz - g * cyz, -2.0 * j * my + g * (cxx + cyy)),
            c: SymCorr([
                -gamma * (mx * px + mz * cxx),
                2.0 * j * cxz - g * (mx * py + my * px + 2.0 * mz * cxy),
                -2.0 * j * cxy
                    + g * (mx * (pump + 2.0 * cxx - 2.0 * mx * mx + 2.0 * mz * mz - czz) + my * (2.0 * cxy - 2.0 * mx * my)
                        - mz * 2.0 * cxz),
                4.0 * j * cyz - gamma * (my * py + mz * cyy),
                2.0 * j * (czz - cyy)
                    + g * (mx * (2.0 * cxy - 2.0 * mx * my) + my * (2.0 * cyy - 2.0 * my * my + pump - czz + 2.0 * mz * mz)
                        - mz * 2.0 * cyz),
                -4.0 * j * cyz + gamma * (2.0 * mx * (cxz - mx * mz) + 2.0 * my * (cyz - my * mz) + mz * pump),
            ]),
        }
    }

    #[test]
    fn long_range_limit_closed_form() {
        let mut seed = 11;
        for _ in 0..100 {
            let p = ModelParams::new(0.1 + 2.0 * lcg(&mut seed).abs(), lcg(&mut seed).abs()).unwrap();
            let s = random_state(&mut seed);
            let a = gaussian_rhs_limit(&s, &p);
            let b = long_range_limit(&s, p.j, p.gamma);
            assert!(a.m.dist(b.m) < 1e-13);
            for k in 0..6 {
                assert!((a.c.0[k] - b.c.0[k]).abs() < 1e-13, "entry {k}: {} vs {}", a.c.0[k], b.c.0[k]);
            }
        }
    }

    #[test]
    fn zero_range_is_independent_decay() {
        let mut seed = 23;
        let p = ModelParams::new(0.8, f64::INFINITY).unwrap();
        for _ in 0..20 {
            let s = random_state(&mut seed);
            let d = gaussian_rhs_limit(&s, &p);
            // x x correlations only see local decay at rate gamma / 2 per site
            assert!((d.c.get(X, X) - (-p.gamma * s.c.get(X, X))).abs() < 1e-14);
        }
    }

    #[test]
    fn finite_ring_approaches_limit_for_long_range() {
        let mut seed = 29;
        let s = random_state(&mut seed);
        let p = ModelParams::new(0.9, 0.3).unwrap();
        let lim = gaussian_rhs_limit(&s, &p);
        let pn = p.with_sites(2000).unwrap();
        let fin = gaussian_rhs_finite(
            &FiniteGaussState {
                m: s.m,
                c_r: vec![s.c; 1000],
            },
            &pn,
        )
        .unwrap();
        for k in 0..6 {
            assert!((fin.c_r[400].0[k] - lim.c.0[k]).abs() < 0.05, "entry {k}");
        }
        assert!(fin.m.dist(lim.m) < 0.05);
    }

    #[test]
    fn all_up_long_range_keeps_czz() {
        let p = ModelParams::new(0.83, 0.5).unwrap();
        let d = gaussian_rhs_limit(&GaussState::product(MagState::up()), &p);
        assert_eq!(d.c.get(Z, Z), 0.0);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance_z(&GaussState::product(MagState::up())), 0.0);
        let mut s = GaussState::product(MagState::new(0.2, 0.1, 0.0));
        s.c.0[5] = 0.3;
        assert!((variance_z(&s) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn uniform_coupling_is_distance_independent() {
        let p = ModelParams::new(0.9, 0.0).unwrap().with_sites(9).unwrap();
        let mut seed = 5;
        let g = random_state(&mut seed);
        let state = FiniteGaussState {
            m: g.m,
            c_r: vec![g.c; 4],
        };
        let d = gaussian_rhs_finite(&state, &p).unwrap();
        for c in &d.c_r[1..] {
            for k in 0..6 {
                assert!((c.0[k] - d.c_r[0].0[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn finite_product_state_gives_finite_mean_field() {
        let p = ModelParams::new(1.1, 1.7).unwrap().with_sites(10).unwrap();
        let m = MagState::new(0.3, -0.4, 0.5);
        let d = gaussian_rhs_finite(&FiniteGaussState::product(m, 10), &p).unwrap();
        assert!(d.m.dist(mf_rhs(m, &p)) < 1e-14);
    }
}
