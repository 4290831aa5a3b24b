use nalgebra::{DMatrix, DVector, LU};

use super::{initial_step, scaled_norm, OdeSystem, SolverOptions, SolverStats, Stepper, ToleranceSpec};

const MAX_ORDER: usize = 5;
const NEWTON_MAXITER: usize = 4;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
// NDF corrections; all zero would give plain BDF
const KAPPA: [f64; MAX_ORDER + 1] = [0.0, -0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0];

/// Variable-order BDF on backward differences `D[k] = nabla^k y_n` scaled to
/// the current step.
pub struct Bdf {
    t: f64,
    y: Vec<f64>,
    h_abs: f64,
    tol: ToleranceSpec,
    max_step: f64,
    newton_tol: f64,
    order: usize,
    n_equal_steps: usize,
    d: Vec<Vec<f64>>,
    gamma: [f64; MAX_ORDER + 1],
    alpha: [f64; MAX_ORDER + 1],
    error_const: [f64; MAX_ORDER + 1],
    jac: DMatrix<f64>,
    lu: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    // dense output of the last step
    dense_order: usize,
    dense_h: f64,
    dense_d: Vec<Vec<f64>>,
    stats: SolverStats,
}

fn compute_r(order: usize, factor: f64) -> Vec<Vec<f64>> {
    let m = order + 1;
    let mut r = vec![vec![0.0; m]; m];
    r[0].fill(1.0);
    for i in 1..m {
        for j in 0..m {
            let mij = if j == 0 {
                0.0
            } else {
                (i as f64 - 1.0 - factor * j as f64) / i as f64
            };
            r[i][j] = r[i - 1][j] * mij;
        }
    }
    r
}

/// Rescale the difference array for a step-size change by `factor`.
fn change_d(d: &mut [Vec<f64>], order: usize, factor: f64) {
    let r = compute_r(order, factor);
    let u = compute_r(order, 1.0);
    let m = order + 1;
    let mut ru = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            ru[i][j] = (0..m).map(|k| r[i][k] * u[k][j]).sum();
        }
    }
    let n = d[0].len();
    let old: Vec<Vec<f64>> = d[..m].to_vec();
    for (i, row) in d[..m].iter_mut().enumerate() {
        for x in 0..n {
            row[x] = (0..m).map(|k| ru[k][i] * old[k][x]).sum();
        }
    }
}

impl Bdf {
    pub fn new<S: OdeSystem + ?Sized>(sys: &S, t0: f64, y0: &[f64], t_bound: f64, opts: &SolverOptions) -> Self {
        let n = y0.len();
        let mut f = vec![0.0; n];
        sys.rhs(t0, y0, &mut f);
        let mut stats = SolverStats {
            n_rhs: 1,
            n_jac: 1,
            ..SolverStats::default()
        };
        let h_abs = initial_step(sys, t0, y0, &f, t_bound, opts.max_step, 1, &opts.tol, &mut stats.n_rhs);
        let mut jac = DMatrix::zeros(n, n);
        sys.jacobian(t0, y0, &mut jac);

        let mut gamma = [0.0; MAX_ORDER + 1];
        for k in 1..=MAX_ORDER {
            gamma[k] = gamma[k - 1] + 1.0 / k as f64;
        }
        let mut alpha = [0.0; MAX_ORDER + 1];
        let mut error_const = [0.0; MAX_ORDER + 1];
        for k in 0..=MAX_ORDER {
            alpha[k] = (1.0 - KAPPA[k]) * gamma[k];
            error_const[k] = KAPPA[k] * gamma[k] + 1.0 / (k + 1) as f64;
        }
        let mut d = vec![vec![0.0; n]; MAX_ORDER + 3];
        d[0].copy_from_slice(y0);
        for (di, fi) in d[1].iter_mut().zip(&f) {
            *di = fi * h_abs;
        }
        let rtol = opts.tol.rtol;
        Self {
            t: t0,
            y: y0.to_vec(),
            h_abs,
            tol: opts.tol,
            max_step: opts.max_step,
            newton_tol: (10.0 * f64::EPSILON / rtol).max(0.03f64.min(rtol.sqrt())),
            order: 1,
            n_equal_steps: 0,
            d,
            gamma,
            alpha,
            error_const,
            jac,
            lu: None,
            dense_order: 0,
            dense_h: 0.0,
            dense_d: Vec::new(),
            stats,
        }
    }

    fn factorize(&mut self, c: f64) -> bool {
        let n = self.y.len();
        let m = DMatrix::identity(n, n) - &self.jac * c;
        self.stats.n_lu += 1;
        let lu = m.lu();
        if lu.is_invertible() {
            self.lu = Some(lu);
            true
        } else {
            self.lu = None;
            false
        }
    }

    /// Simplified Newton for `y = y_pred + d` with `c f(t, y) - psi - d = 0`.
    fn newton<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t_new: f64,
        y_pred: &[f64],
        c: f64,
        psi: &[f64],
        scale: &[f64],
    ) -> (bool, usize, Vec<f64>, Vec<f64>) {
        let n = y_pred.len();
        let mut y = y_pred.to_vec();
        let mut d = vec![0.0; n];
        let mut f = vec![0.0; n];
        let mut dy_norm_old: Option<f64> = None;
        let lu = self.lu.as_ref().expect("factorized before newton");
        let mut k = 0;
        let mut converged = false;
        while k < NEWTON_MAXITER {
            sys.rhs(t_new, &y, &mut f);
            self.stats.n_rhs += 1;
            if f.iter().any(|v| !v.is_finite()) {
                break;
            }
            let b = DVector::from_iterator(n, (0..n).map(|i| c * f[i] - psi[i] - d[i]));
            let Some(dy) = lu.solve(&b) else { break };
            let dy_norm = scaled_norm(dy.as_slice(), scale);
            let rate = dy_norm_old.map(|old| dy_norm / old);
            if let Some(r) = rate {
                if r >= 1.0 || r.powi((NEWTON_MAXITER - k) as i32) / (1.0 - r) * dy_norm > self.newton_tol {
                    break;
                }
            }
            for i in 0..n {
                y[i] += dy[i];
                d[i] += dy[i];
            }
            if dy_norm == 0.0 || rate.is_some_and(|r| r / (1.0 - r) * dy_norm < self.newton_tol) {
                converged = true;
                break;
            }
            dy_norm_old = Some(dy_norm);
            k += 1;
        }
        (converged, k + 1, y, d)
    }
}

impl Stepper for Bdf {
    fn t(&self) -> f64 {
        self.t
    }

    fn y(&self) -> &[f64] {
        &self.y
    }

    fn stats(&self) -> SolverStats {
        self.stats
    }

    fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t_bound: f64) -> Result<(), String> {
        let n = self.y.len();
        let t = self.t;
        let min_step = 10.0 * ((t.abs() * f64::EPSILON).max(f64::MIN_POSITIVE));
        let mut h_abs = self.h_abs;
        if h_abs > self.max_step {
            change_d(&mut self.d, self.order, self.max_step / h_abs);
            h_abs = self.max_step;
            self.n_equal_steps = 0;
            self.lu = None;
        } else if h_abs < min_step {
            change_d(&mut self.d, self.order, min_step / h_abs);
            h_abs = min_step;
            self.n_equal_steps = 0;
            self.lu = None;
        }
        let order = self.order;
        let mut current_jac = false;

        let (t_new, y_new, d, error_norm, scale) = loop {
            if h_abs < min_step {
                self.h_abs = h_abs;
                return Err(format!("step size {h_abs:e} underflow"));
            }
            let mut t_new = t + h_abs;
            if t_new > t_bound {
                t_new = t_bound;
                change_d(&mut self.d, order, (t_new - t) / h_abs);
                self.n_equal_steps = 0;
                self.lu = None;
            }
            let h = t_new - t;
            h_abs = h;

            let y_pred: Vec<f64> = (0..n).map(|i| (0..=order).map(|k| self.d[k][i]).sum()).collect();
            let scale: Vec<f64> = y_pred.iter().map(|y| self.tol.atol + self.tol.rtol * y.abs()).collect();
            let psi: Vec<f64> = (0..n)
                .map(|i| (1..=order).map(|k| self.d[k][i] * self.gamma[k]).sum::<f64>() / self.alpha[order])
                .collect();
            let c = h / self.alpha[order];

            let mut outcome = None;
            loop {
                if self.lu.is_none() && !self.factorize(c) {
                    break;
                }
                let (ok, it, y, d) = self.newton(sys, t_new, &y_pred, c, &psi, &scale);
                if ok {
                    outcome = Some((it, y, d));
                    break;
                }
                if current_jac {
                    break;
                }
                sys.jacobian(t_new, &y_pred, &mut self.jac);
                self.stats.n_jac += 1;
                self.lu = None;
                current_jac = true;
            }

            let Some((n_iter, y_new, d)) = outcome else {
                self.stats.n_rejected += 1;
                h_abs *= 0.5;
                change_d(&mut self.d, order, 0.5);
                self.n_equal_steps = 0;
                self.lu = None;
                continue;
            };

            let safety = 0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + n_iter) as f64;
            let scale: Vec<f64> = y_new.iter().map(|y| self.tol.atol + self.tol.rtol * y.abs()).collect();
            let err: Vec<f64> = d.iter().map(|v| self.error_const[order] * v).collect();
            let error_norm = scaled_norm(&err, &scale);
            if error_norm > 1.0 {
                self.stats.n_rejected += 1;
                let factor = (safety * error_norm.powf(-1.0 / (order as f64 + 1.0))).max(MIN_FACTOR);
                h_abs *= factor;
                change_d(&mut self.d, order, factor);
                self.n_equal_steps = 0;
                continue;
            }
            break (t_new, y_new, d, error_norm, (scale, safety));
        };
        let (scale, safety) = scale;

        self.stats.n_accepted += 1;
        self.n_equal_steps += 1;
        self.t = t_new;
        self.y = y_new;
        self.h_abs = h_abs;

        // D^{k+1} y_n = D^k y_n - D^k y_{n-1}, with d = D^{order+1} y_n
        for i in 0..n {
            self.d[order + 2][i] = d[i] - self.d[order + 1][i];
            self.d[order + 1][i] = d[i];
        }
        for k in (0..=order).rev() {
            for i in 0..n {
                self.d[k][i] += self.d[k + 1][i];
            }
        }

        if self.n_equal_steps >= order + 1 {
            let error_m_norm = if order > 1 {
                let e: Vec<f64> = self.d[order].iter().map(|v| self.error_const[order - 1] * v).collect();
                scaled_norm(&e, &scale)
            } else {
                f64::INFINITY
            };
            let error_p_norm = if order < MAX_ORDER {
                let e: Vec<f64> = self.d[order + 2].iter().map(|v| self.error_const[order + 1] * v).collect();
                scaled_norm(&e, &scale)
            } else {
                f64::INFINITY
            };
            let norms = [error_m_norm, error_norm, error_p_norm];
            let mut best = 0;
            let mut best_factor = f64::NEG_INFINITY;
            for (j, e) in norms.iter().enumerate() {
                let f = e.powf(-1.0 / (order + j) as f64);
                // first maximum wins, as with argmax
                if f > best_factor {
                    best_factor = f;
                    best = j;
                }
            }
            let new_order = order + best - 1;
            self.order = new_order;
            let factor = MAX_FACTOR.min(safety * best_factor);
            self.h_abs *= factor;
            change_d(&mut self.d, new_order, factor);
            self.n_equal_steps = 0;
            self.lu = None;
        }

        self.dense_order = self.order;
        self.dense_h = self.h_abs;
        self.dense_d = self.d[..=self.order].to_vec();
        Ok(())
    }

    fn interpolate(&self, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.dense_d[0]);
        let mut p = 1.0;
        for k in 0..self.dense_order {
            let shift = self.t - self.dense_h * k as f64;
            let denom = self.dense_h * (k + 1) as f64;
            p *= (t - shift) / denom;
            for (o, dv) in out.iter_mut().zip(&self.dense_d[k + 1]) {
                *o += dv * p;
            }
        }
    }
}
