//! Adaptive integrators for `y' = f(t, y)`.
//!
//! [`Method::Dopri5`] is the Dormand-Prince 5(4) pair with the usual
//! fourth-order continuous extension. [`Method::Bdf`] is a variable-order
//! (1..=5) backward-differentiation method in Nordsieck-like difference form
//! with a simplified Newton iteration. [`Method::Auto`] starts explicit and
//! hands over to BDF when the explicit controller keeps rejecting steps or
//! its last stages show the step sitting on the stability boundary.
//!
//! Solutions are reported only at the requested sample times, which are
//! filled in from the dense output of each accepted step.

mod bdf;
mod dopri5;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use bdf::Bdf;
pub use dopri5::Dopri5;

/// A first-order system. The default Jacobian is a forward difference.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    fn jacobian(&self, t: f64, y: &[f64], jac: &mut DMatrix<f64>) {
        finite_difference_jacobian(self, t, y, jac);
    }
}

pub fn finite_difference_jacobian<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &[f64], jac: &mut DMatrix<f64>) {
    let n = y.len();
    let mut f0 = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    let mut yp = y.to_vec();
    sys.rhs(t, y, &mut f0);
    for j in 0..n {
        let h = f64::EPSILON.sqrt() * y[j].abs().max(1e-3);
        yp[j] = y[j] + h;
        let h = yp[j] - y[j];
        sys.rhs(t, &yp, &mut f1);
        for i in 0..n {
            jac[(i, j)] = (f1[i] - f0[i]) / h;
        }
        yp[j] = y[j];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12 }
    }
}

impl ToleranceSpec {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol }
    }

    fn check(&self) -> Result<(), String> {
        if !(self.rtol > 0.0 && self.rtol.is_finite()) {
            return Err(format!("rtol must be positive, got {}", self.rtol));
        }
        if !(self.atol >= 0.0 && self.atol.is_finite()) {
            return Err(format!("atol must be >= 0, got {}", self.atol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dopri5,
    Bdf,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: ToleranceSpec,
    pub method: Method,
    pub max_step: f64,
    pub max_steps: usize,
    /// Auto mode: rejection fraction over the last `switch_window` attempts
    /// that triggers the switch to BDF. A positive stiffness test on the
    /// explicit stages triggers it as well.
    pub switch_threshold: f64,
    pub switch_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: ToleranceSpec::default(),
            method: Method::Auto,
            max_step: f64::INFINITY,
            max_steps: 5_000_000,
            switch_threshold: 0.3,
            switch_window: 64,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: ToleranceSpec) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub n_rhs: usize,
    pub n_jac: usize,
    pub n_lu: usize,
    pub n_accepted: usize,
    pub n_rejected: usize,
    /// Time at which auto mode handed over to BDF.
    pub switched_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub stats: SolverStats,
}

#[derive(Debug, Clone)]
pub struct SolveFailure {
    pub reason: String,
    pub t_reached: f64,
    pub stats: SolverStats,
}

/// One adaptive method that advances an internal state and can interpolate
/// inside its last step.
pub(crate) trait Stepper {
    fn t(&self) -> f64;
    fn y(&self) -> &[f64];
    fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t_bound: f64) -> Result<(), String>;
    /// Evaluate the dense output of the last accepted step at `t`.
    fn interpolate(&self, t: f64, out: &mut [f64]);
    fn stats(&self) -> SolverStats;
}

/// RMS norm of `x / scale`.
pub(crate) fn scaled_norm(x: &[f64], scale: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let s: f64 = x.iter().zip(scale).map(|(a, b)| (a / b).powi(2)).sum();
    (s / x.len() as f64).sqrt()
}

/// Starting step from the size of `f` and of its first change.
pub(crate) fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    t_bound: f64,
    max_step: f64,
    order: u32,
    tol: &ToleranceSpec,
    n_rhs: &mut usize,
) -> f64 {
    let interval = (t_bound - t0).abs();
    if y0.is_empty() {
        return interval;
    }
    if interval == 0.0 {
        return 0.0;
    }
    let scale: Vec<f64> = y0.iter().map(|y| tol.atol + y.abs() * tol.rtol).collect();
    let d0 = scaled_norm(y0, &scale);
    let d1 = scaled_norm(f0, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(interval);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    sys.rhs(t0 + h0, &y1, &mut f1);
    *n_rhs += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_norm(&diff, &scale) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order as f64 + 1.0))
    };
    (100.0 * h0).min(h1).min(interval).min(max_step)
}

enum Active {
    Explicit(Dopri5),
    Implicit(Bdf),
}

impl Active {
    fn t(&self) -> f64 {
        match self {
            Active::Explicit(s) => s.t(),
            Active::Implicit(s) => s.t(),
        }
    }
    fn y(&self) -> &[f64] {
        match self {
            Active::Explicit(s) => s.y(),
            Active::Implicit(s) => s.y(),
        }
    }
    fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t_bound: f64) -> Result<(), String> {
        match self {
            Active::Explicit(s) => s.step(sys, t_bound),
            Active::Implicit(s) => s.step(sys, t_bound),
        }
    }
    fn interpolate(&self, t: f64, out: &mut [f64]) {
        match self {
            Active::Explicit(s) => s.interpolate(t, out),
            Active::Implicit(s) => s.interpolate(t, out),
        }
    }
    fn stats(&self) -> SolverStats {
        match self {
            Active::Explicit(s) => s.stats(),
            Active::Implicit(s) => s.stats(),
        }
    }
}

fn add_stats(a: SolverStats, b: SolverStats) -> SolverStats {
    SolverStats {
        n_rhs: a.n_rhs + b.n_rhs,
        n_jac: a.n_jac + b.n_jac,
        n_lu: a.n_lu + b.n_lu,
        n_accepted: a.n_accepted + b.n_accepted,
        n_rejected: a.n_rejected + b.n_rejected,
        switched_at: a.switched_at.or(b.switched_at),
    }
}

/// Integrate from `(t0, y0)` and hand the state at each time in `t_eval`
/// to `observe`. `t_eval` must be non-decreasing and start at or after `t0`.
/// Returning `false` from `observe` stops the integration early.
pub fn solve_observed<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_eval: &[f64],
    opts: &SolverOptions,
    mut observe: F,
) -> Result<SolverStats, SolveFailure>
where
    S: OdeSystem + ?Sized,
    F: FnMut(f64, &[f64]) -> bool,
{
    let fail = |reason: String, t_reached: f64, stats: SolverStats| SolveFailure {
        reason,
        t_reached,
        stats,
    };
    if let Err(e) = opts.tol.check() {
        return Err(fail(e, t0, SolverStats::default()));
    }
    if y0.len() != sys.dim() {
        return Err(fail(
            format!("state has length {}, system expects {}", y0.len(), sys.dim()),
            t0,
            SolverStats::default(),
        ));
    }
    if t_eval.windows(2).any(|w| w[1] < w[0]) || t_eval.first().is_some_and(|&t| t < t0) {
        return Err(fail(
            "sample times must be sorted and not precede t0".into(),
            t0,
            SolverStats::default(),
        ));
    }
    let Some(&t_end) = t_eval.last() else {
        return Ok(SolverStats::default());
    };

    let mut active = match opts.method {
        Method::Bdf => Active::Implicit(Bdf::new(sys, t0, y0, t_end, opts)),
        Method::Dopri5 | Method::Auto => Active::Explicit(Dopri5::new(sys, t0, y0, t_end, opts)),
    };
    let mut carried = SolverStats::default();
    let mut buf = vec![0.0; y0.len()];
    let mut next = 0;
    // recent accept (false) / reject (true) history for auto switching
    let mut last_rejected = 0usize;
    let mut last_total = 0usize;
    let mut steps = 0usize;

    while next < t_eval.len() && t_eval[next] <= t0 {
        if !observe(t0, y0) {
            return Ok(active.stats());
        }
        next += 1;
    }
    while next < t_eval.len() {
        if steps >= opts.max_steps {
            return Err(fail(
                format!("exceeded {} steps", opts.max_steps),
                active.t(),
                add_stats(carried, active.stats()),
            ));
        }
        if let Err(reason) = active.step(sys, t_end) {
            return Err(fail(reason, active.t(), add_stats(carried, active.stats())));
        }
        steps += 1;
        let t_now = active.t();
        while next < t_eval.len() && t_eval[next] <= t_now {
            let te = t_eval[next];
            let cont = if te == t_now {
                observe(te, active.y())
            } else {
                active.interpolate(te, &mut buf);
                observe(te, &buf)
            };
            if !cont {
                return Ok(add_stats(carried, active.stats()));
            }
            next += 1;
        }

        if opts.method == Method::Auto {
            if let Active::Explicit(dp) = &active {
                let st = dp.stats();
                let total = st.n_accepted + st.n_rejected;
                let stiff = dp.looks_stiff();
                if stiff || total - last_total >= opts.switch_window {
                    let frac = (st.n_rejected - last_rejected) as f64 / (total - last_total).max(1) as f64;
                    if (stiff || frac > opts.switch_threshold) && next < t_eval.len() {
                        carried = st;
                        carried.switched_at = Some(t_now);
                        let y = dp.y().to_vec();
                        active = Active::Implicit(Bdf::new(sys, t_now, &y, t_end, opts));
                    } else {
                        last_total = total;
                        last_rejected = st.n_rejected;
                    }
                }
            }
        }
    }
    Ok(add_stats(carried, active.stats()))
}

/// Integrate and collect the states at `t_eval`. On failure the samples
/// produced so far are returned alongside the error.
pub fn solve<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_eval: &[f64],
    opts: &SolverOptions,
) -> Result<Solution, (SolveFailure, Solution)> {
    let mut t = Vec::with_capacity(t_eval.len());
    let mut y = Vec::with_capacity(t_eval.len());
    let result = solve_observed(sys, t0, y0, t_eval, opts, |ti, yi| {
        t.push(ti);
        y.push(yi.to_vec());
        true
    });
    match result {
        Ok(stats) => Ok(Solution { t, y, stats }),
        Err(f) => {
            let stats = f.stats;
            Err((f, Solution { t, y, stats }))
        }
    }
}

/// `n` evenly spaced samples on `[0, t_max]`, endpoints included.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
            v[n - 1] = end;
            v
        }
    }
}
