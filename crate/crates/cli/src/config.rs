//! Run configurations. Each struct is both the clap argument block of its
//! subcommand and the JSON echo written next to the outputs; loading the
//! echo with `btc-lab run --config` repeats the run exactly.

use btc_core::model::DEFAULT_J;
use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::UsageError;

fn diagonal() -> Vec<f64> {
    vec![1.0 / 3f64.sqrt(); 3]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Mf,
    Gauss,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    All,
    HalfAmplitude,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    /// Integrate one trajectory.
    Simulate(SimulateConfig),
    /// Steady states and their stability along a chi sweep at fixed eta.
    FixedPoints(FixedPointsConfig),
    /// Phase labels on a (chi, eta) grid.
    PhaseDiagram(PhaseDiagramConfig),
    /// Envelope decay rate B(eta) and the fitted prefactor of (eta - 1)^2.
    FitDecay(FitDecayConfig),
    /// Dissipation weight F_eta at finite N and in the limit.
    Coeff(CoeffConfig),
    /// Which attractor a ring of initial conditions ends on.
    Basin(BasinConfig),
    /// End point of the coexistence region.
    Cusp(CuspConfig),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[arg(long, value_enum, default_value_t = Engine::Mf)]
    pub engine: Engine,
    #[arg(long)]
    pub chi: f64,
    #[arg(long)]
    pub eta: f64,
    /// Drive strength; time is reported as J t.
    #[arg(long, default_value_t = DEFAULT_J)]
    pub j: f64,
    /// Number of sites. Required for `exact`; selects the distance-resolved
    /// closure for `gauss`.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "tmax", default_value_t = 100.0)]
    pub t_max: f64,
    /// Sample spacing.
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    /// Initial magnetization `mx,my,mz`.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_negative_numbers = true, default_values_t = diagonal())]
    pub init: Vec<f64>,
    /// Shorthands for the components of `--init`. Any of them replaces the
    /// whole vector, with unset components taken as zero.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip)]
    pub mx0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip)]
    pub my0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip)]
    pub mz0: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
    /// Also write one correlator file per ring distance (`gauss --n`).
    #[arg(long)]
    pub per_distance: bool,
    /// Also write the final density matrix (`exact`).
    #[arg(long)]
    pub dump_rho: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointsConfig {
    #[arg(long)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.005)]
    pub chi_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub chi_max: f64,
    #[arg(long, default_value_t = 600)]
    pub chi_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDiagramConfig {
    #[arg(long, default_value_t = 0.025)]
    pub chi_min: f64,
    #[arg(long, default_value_t = 2.5)]
    pub chi_max: f64,
    #[arg(long, default_value_t = 100)]
    pub chi_steps: usize,
    #[arg(long, default_value_t = 0.025)]
    pub eta_min: f64,
    #[arg(long, default_value_t = 2.5)]
    pub eta_max: f64,
    #[arg(long, default_value_t = 100)]
    pub eta_steps: usize,
    /// Also write every fixed point of every cell as JSON.
    #[arg(long)]
    pub full_json: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDecayConfig {
    #[arg(long, default_value_t = 0.7)]
    pub chi: f64,
    /// Comma-separated exponents, all above 1.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub etas: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    /// First horizon; doubled until the fit window closes.
    #[arg(long, default_value_t = 100.0)]
    pub t_start: f64,
    #[arg(long, default_value_t = 6400.0)]
    pub t_cap: f64,
    #[arg(long, value_enum, default_value_t = Window::HalfAmplitude)]
    pub window: Window,
    #[arg(long, default_value_t = 1e-9)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffConfig {
    /// Comma-separated chain lengths.
    #[arg(long, value_delimiter = ',', num_args = 1, default_values_t = vec![4usize, 8, 16, 32, 64, 128, 256])]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub eta_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub eta_max: f64,
    #[arg(long, default_value_t = 61)]
    pub eta_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasinConfig {
    #[arg(long)]
    pub chi: f64,
    #[arg(long)]
    pub eta: f64,
    /// Radius of the ring of initial conditions in the y-z plane.
    #[arg(long, default_value_t = 0.3)]
    pub radius: f64,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long = "tmax", default_value_t = 2000.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuspConfig {}

fn positive(key: &str, x: f64) -> Result<(), UsageError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(UsageError::new(key, format!("must be finite and > 0, got {x}")))
    }
}

fn non_negative(key: &str, x: f64) -> Result<(), UsageError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(UsageError::new(key, format!("must be finite and >= 0, got {x}")))
    }
}

fn range(
    prefix: &str,
    lo: f64,
    hi: f64,
    steps: usize,
    lo_check: fn(&str, f64) -> Result<(), UsageError>,
) -> Result<(), UsageError> {
    lo_check(&format!("{prefix}_min"), lo)?;
    if !(hi.is_finite() && hi >= lo) {
        return Err(UsageError::new(
            &format!("{prefix}_max"),
            format!("must be finite and >= {prefix}_min, got {hi}"),
        ));
    }
    if steps == 0 || (steps == 1 && hi > lo) {
        return Err(UsageError::new(
            &format!("{prefix}_steps"),
            "need at least 2 points for a non-empty range",
        ));
    }
    Ok(())
}

fn tolerances(rtol: f64, atol: f64) -> Result<(), UsageError> {
    positive("rtol", rtol)?;
    positive("atol", atol)
}

impl SimulateConfig {
    /// Fold the component shorthands into `init`.
    pub fn resolve(&mut self) {
        if self.mx0.is_some() || self.my0.is_some() || self.mz0.is_some() {
            self.init = vec![self.mx0.unwrap_or(0.0), self.my0.unwrap_or(0.0), self.mz0.unwrap_or(0.0)];
        }
        self.mx0 = None;
        self.my0 = None;
        self.mz0 = None;
    }
}

impl RunConfig {
    pub fn resolve(&mut self) {
        if let RunConfig::Simulate(c) = self {
            c.resolve();
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Simulate(_) => "simulate",
            RunConfig::FixedPoints(_) => "fixed-points",
            RunConfig::PhaseDiagram(_) => "phase-diagram",
            RunConfig::FitDecay(_) => "fit-decay",
            RunConfig::Coeff(_) => "coeff",
            RunConfig::Basin(_) => "basin",
            RunConfig::Cusp(_) => "cusp",
        }
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        match self {
            RunConfig::Simulate(c) => {
                positive("chi", c.chi)?;
                non_negative("eta", c.eta)?;
                positive("j", c.j)?;
                positive("tmax", c.t_max)?;
                positive("dt", c.dt)?;
                if c.dt > c.t_max {
                    return Err(UsageError::new("dt", "must not exceed tmax"));
                }
                tolerances(c.rtol, c.atol)?;
                if c.init.len() != 3 || c.init.iter().any(|x| !x.is_finite()) {
                    return Err(UsageError::new("init", "need three finite components"));
                }
                if c.init.iter().map(|x| x * x).sum::<f64>() > 1.0 + 1e-12 {
                    return Err(UsageError::new("init", "Bloch vector outside the unit ball"));
                }
                match (c.engine, c.n) {
                    (Engine::Exact, None) => return Err(UsageError::new("n", "required by the exact engine")),
                    (Engine::Mf, Some(_)) => return Err(UsageError::new("n", "the mean-field engine has no site count")),
                    (_, Some(0)) => return Err(UsageError::new("n", "must be at least 1")),
                    _ => {}
                }
                if c.per_distance && !(c.engine == Engine::Gauss && c.n.is_some()) {
                    return Err(UsageError::new("per_distance", "only meaningful for the gauss engine with n"));
                }
                if c.dump_rho && c.engine != Engine::Exact {
                    return Err(UsageError::new("dump_rho", "only meaningful for the exact engine"));
                }
                Ok(())
            }
            RunConfig::FixedPoints(c) => {
                non_negative("eta", c.eta)?;
                range("chi", c.chi_min, c.chi_max, c.chi_steps, positive)
            }
            RunConfig::PhaseDiagram(c) => {
                range("chi", c.chi_min, c.chi_max, c.chi_steps, non_negative)?;
                range("eta", c.eta_min, c.eta_max, c.eta_steps, non_negative)
            }
            RunConfig::FitDecay(c) => {
                if !(c.chi > 0.0 && c.chi < 1.0) {
                    return Err(UsageError::new("chi", format!("decay fits need 0 < chi < 1, got {}", c.chi)));
                }
                if c.etas.is_empty() {
                    return Err(UsageError::new("etas", "empty list"));
                }
                if c.etas.len() < 2 {
                    return Err(UsageError::new("etas", "need at least two exponents"));
                }
                if let Some(e) = c.etas.iter().find(|e| !(e.is_finite() && **e > 1.0)) {
                    return Err(UsageError::new("etas", format!("every exponent must exceed 1, got {e}")));
                }
                positive("dt", c.dt)?;
                positive("t_start", c.t_start)?;
                if !(c.t_cap >= c.t_start) {
                    return Err(UsageError::new("t_cap", "must be >= t_start"));
                }
                tolerances(c.rtol, c.atol)
            }
            RunConfig::Coeff(c) => {
                if c.ns.is_empty() {
                    return Err(UsageError::new("ns", "empty list"));
                }
                if c.ns.contains(&0) {
                    return Err(UsageError::new("ns", "chain lengths must be >= 1"));
                }
                range("eta", c.eta_min, c.eta_max, c.eta_steps, non_negative)
            }
            RunConfig::Basin(c) => {
                positive("chi", c.chi)?;
                non_negative("eta", c.eta)?;
                if !(c.radius > 0.0 && c.radius <= 1.0) {
                    return Err(UsageError::new("radius", "must lie in (0, 1]"));
                }
                if c.count == 0 {
                    return Err(UsageError::new("count", "must be at least 1"));
                }
                positive("tmax", c.t_max)?;
                positive("dt", c.dt)?;
                if c.dt >= c.t_max {
                    return Err(UsageError::new("dt", "must be below tmax"));
                }
                tolerances(c.rtol, c.atol)
            }
            RunConfig::Cusp(_) => Ok(()),
        }
    }
}

/// Evenly spaced points, snapped to 1e-12 so that round grid values such as
/// `eta = 1` land exactly.
pub fn axis(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (steps - 1) as f64;
    (0..steps).map(|k| ((lo + k as f64 * h) * 1e12).round() / 1e12).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trip() {
        let cfg = RunConfig::FitDecay(FitDecayConfig {
            chi: 0.7,
            etas: vec![1.05, 1.1],
            dt: 0.05,
            t_start: 100.0,
            t_cap: 6400.0,
            window: Window::HalfAmplitude,
            rtol: 1e-9,
            atol: 1e-12,
        });
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"command\":\"fit-decay\""));
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"command":"cusp","bogus":1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = serde_json::from_str::<RunConfig>(r#"{"command":"coeff","ns":[4],"eta_min":0,"eta_max":1}"#).unwrap_err();
        assert!(err.to_string().contains("eta_steps"), "{err}");
    }

    #[test]
    fn axis_hits_round_values() {
        let a = axis(0.025, 2.5, 100);
        assert_eq!(a.len(), 100);
        assert!(a.contains(&1.0) && a.contains(&1.225) && a.contains(&1.625));
        assert_eq!(a[99], 2.5);
    }
}
