//! Mean-field equations of motion for the magnetization `m = 2<S>/N`.

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::Partial;
use crate::model::ModelParams;
use crate::ode::{self, OdeSystem, SolverOptions, SolverStats, ToleranceSpec};
use crate::{Error, Result};

/// Default sample spacing in units of `J t`.
pub const DEFAULT_DT: f64 = 0.05;

/// Magnetization vector; also used for its time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MagState {
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl MagState {
    pub const fn new(mx: f64, my: f64, mz: f64) -> Self {
        Self { mx, my, mz }
    }

    /// `(1, 1, 1) / sqrt(3)`.
    pub fn diagonal() -> Self {
        let c = 1.0 / 3f64.sqrt();
        Self::new(c, c, c)
    }

    pub const fn up() -> Self {
        Self::new(0.0, 0.0, 1.0)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.mx, self.my, self.mz]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn norm_sq(self) -> f64 {
        self.mx * self.mx + self.my * self.my + self.mz * self.mz
    }

    pub fn dist(self, other: Self) -> f64 {
        ((self.mx - other.mx).powi(2) + (self.my - other.my).powi(2) + (self.mz - other.mz).powi(2)).sqrt()
    }
}

/// `(N, M) = (|m|^2, m_x / (m_y - 1/chi))`. `m_ratio` is `None` where the
/// denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservedPair {
    pub n_total: f64,
    pub m_ratio: Option<f64>,
}

pub fn conserved_quantities(state: MagState, params: &ModelParams) -> ConservedPair {
    let denom = state.my - 1.0 / params.chi;
    ConservedPair {
        n_total: state.norm_sq(),
        m_ratio: (denom.abs() >= 1e-14).then(|| state.mx / denom),
    }
}

/// Mean-field flow `dm/dt` with the given dissipation weight.
pub fn mf_rhs_with(state: MagState, j: f64, gamma: f64, f: f64) -> MagState {
    let g = 0.5 * gamma;
    let MagState { mx, my, mz } = state;
    MagState {
        mx: -g * mx * f - g * mx * mz * (1.0 - f),
        my: 2.0 * j * mz - g * my * f - g * my * mz * (1.0 - f),
        mz: -2.0 * j * my + gamma * (1.0 - mz) * f + g * (mx * mx + my * my) * (1.0 - f),
    }
}

/// `dm/dt` for `params`, using `F_eta^(N)` when `n_sites` is set.
pub fn mf_rhs(state: MagState, params: &ModelParams) -> MagState {
    mf_rhs_with(state, params.j, params.gamma, params.f_eta())
}

pub fn mf_jacobian_with(state: MagState, j: f64, gamma: f64, f: f64) -> Matrix3<f64> {
    let g = 0.5 * gamma;
    let MagState { mx, my, mz } = state;
    let diag = -g * f - g * (1.0 - f) * mz;
    Matrix3::new(
        diag,
        0.0,
        -g * (1.0 - f) * mx,
        0.0,
        diag,
        2.0 * j - g * (1.0 - f) * my,
        gamma * (1.0 - f) * mx,
        -2.0 * j + gamma * (1.0 - f) * my,
        -gamma * f,
    )
}

pub fn mf_jacobian(state: MagState, params: &ModelParams) -> Matrix3<f64> {
    mf_jacobian_with(state, params.j, params.gamma, params.f_eta())
}

/// The flow in `J t`.
pub(crate) struct MfSystem {
    j: f64,
    gamma: f64,
    f: f64,
}

impl MfSystem {
    pub(crate) fn new(params: &ModelParams) -> Self {
        Self {
            j: params.j,
            gamma: params.gamma,
            f: params.f_eta(),
        }
    }
}

impl OdeSystem for MfSystem {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = mf_rhs_with(MagState::from_slice(y), self.j, self.gamma, self.f);
        dy[0] = d.mx / self.j;
        dy[1] = d.my / self.j;
        dy[2] = d.mz / self.j;
    }

    fn jacobian(&self, _t: f64, y: &[f64], jac: &mut DMatrix<f64>) {
        let m = mf_jacobian_with(MagState::from_slice(y), self.j, self.gamma, self.f) / self.j;
        jac.copy_from(&m);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// Sample times in units of `J t`.
    pub times: Vec<f64>,
    pub states: Vec<MagState>,
    pub params: ModelParams,
    pub conserved: Vec<ConservedPair>,
    pub stats: SolverStats,
}

impl Trajectory {
    fn from_samples(params: ModelParams, times: Vec<f64>, ys: Vec<Vec<f64>>, stats: SolverStats) -> Self {
        let states: Vec<MagState> = ys.iter().map(|y| MagState::from_slice(y)).collect();
        let conserved = states.iter().map(|&s| conserved_quantities(s, &params)).collect();
        Self {
            times,
            states,
            params,
            conserved,
            stats,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mz(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.mz).collect()
    }

    pub fn last(&self) -> Option<MagState> {
        self.states.last().copied()
    }

    /// `max |N(t) - N(0)|`.
    pub fn n_drift(&self) -> f64 {
        let Some(first) = self.conserved.first() else {
            return 0.0;
        };
        self.conserved
            .iter()
            .map(|c| (c.n_total - first.n_total).abs())
            .fold(0.0, f64::max)
    }

    /// `max |M(t) - M(0)|` over samples where `M` is defined; `None` if it is
    /// undefined at `t = 0`.
    pub fn m_drift(&self) -> Option<f64> {
        let m0 = self.conserved.first()?.m_ratio?;
        Some(
            self.conserved
                .iter()
                .filter_map(|c| c.m_ratio)
                .map(|m| (m - m0).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// Integrate on `[0, t_max]` with samples every [`DEFAULT_DT`].
pub fn integrate_mf(params: &ModelParams, init: MagState, t_max: f64, tol: ToleranceSpec) -> Result<Trajectory> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid("t_max", format!("must be finite and > 0, got {t_max}")));
    }
    let n = (t_max / DEFAULT_DT).round().max(1.0) as usize + 1;
    integrate_mf_at(params, init, &ode::linspace(0.0, t_max, n), &SolverOptions::with_tol(tol))
}

/// Integrate and sample at `times` (units of `J t`, starting at 0).
pub fn integrate_mf_at(params: &ModelParams, init: MagState, times: &[f64], opts: &SolverOptions) -> Result<Trajectory> {
    params.validate()?;
    let sys = MfSystem::new(params);
    match ode::solve(&sys, 0.0, &init.to_array(), times, opts) {
        Ok(sol) => Ok(Trajectory::from_samples(*params, sol.t, sol.y, sol.stats)),
        Err((fail, partial)) => Err(Error::Integration {
            reason: fail.reason,
            t_reached: fail.t_reached,
            partial: Box::new(Partial::MeanField(Trajectory::from_samples(
                *params,
                partial.t,
                partial.y,
                partial.stats,
            ))),
        }),
    }
}
