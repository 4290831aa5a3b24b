use super::{initial_step, OdeSystem, SolverOptions, SolverStats, Stepper, ToleranceSpec};

const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const A: [[f64; 5]; 6] = [
    [0.0; 5],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// fifth- minus fourth-order weights, last entry multiplies the FSAL stage
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// continuous extension
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Dormand-Prince 5(4) with first-same-as-last stages and dense output.
pub struct Dopri5 {
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    h: f64,
    t_old: f64,
    h_last: f64,
    tol: ToleranceSpec,
    max_step: f64,
    k: [Vec<f64>; 7],
    y_new: Vec<f64>,
    scratch: Vec<f64>,
    cont: [Vec<f64>; 5],
    stats: SolverStats,
    stiff_hits: usize,
    calm_hits: usize,
}

impl Dopri5 {
    pub fn new<S: OdeSystem + ?Sized>(sys: &S, t0: f64, y0: &[f64], t_bound: f64, opts: &SolverOptions) -> Self {
        let n = y0.len();
        let mut f = vec![0.0; n];
        sys.rhs(t0, y0, &mut f);
        let mut stats = SolverStats {
            n_rhs: 1,
            ..SolverStats::default()
        };
        let h = initial_step(sys, t0, y0, &f, t_bound, opts.max_step, 4, &opts.tol, &mut stats.n_rhs);
        let zeros = || vec![0.0; n];
        Self {
            t: t0,
            y: y0.to_vec(),
            f,
            h,
            t_old: t0,
            h_last: 0.0,
            tol: opts.tol,
            max_step: opts.max_step,
            k: std::array::from_fn(|_| zeros()),
            y_new: zeros(),
            scratch: zeros(),
            cont: std::array::from_fn(|_| zeros()),
            stats,
            stiff_hits: 0,
            calm_hits: 0,
        }
    }

    /// Stability-boundary test on the last stages: `h |lambda|` estimated
    /// from `k7 - k6` over `y_new - y6` stayed above 3.25 for 15 accepted
    /// steps without 6 calm ones in between.
    pub fn looks_stiff(&self) -> bool {
        self.stiff_hits >= 15
    }

    fn update_stiffness(&mut self, h: f64) {
        // scratch still holds the stage-6 argument, y_new the new state
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.y.len() {
            num += (self.k[6][i] - self.k[5][i]).powi(2);
            den += (self.y_new[i] - self.scratch[i]).powi(2);
        }
        if den > 0.0 && h * (num / den).sqrt() > 3.25 {
            self.calm_hits = 0;
            self.stiff_hits += 1;
        } else {
            self.calm_hits += 1;
            if self.calm_hits == 6 {
                self.stiff_hits = 0;
            }
        }
    }
}

impl Stepper for Dopri5 {
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
        let mut h = self.h.min(self.max_step);
        let mut rejected = false;
        loop {
            if h < min_step {
                return Err(format!("step size {h:e} underflow"));
            }
            let mut t_new = t + h;
            if t_new > t_bound {
                t_new = t_bound;
            }
            let h_try = t_new - t;

            self.k[0].copy_from_slice(&self.f);
            for s in 1..6 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, a) in A[s][..s].iter().enumerate() {
                        acc += a * self.k[j][i];
                    }
                    self.scratch[i] = self.y[i] + h_try * acc;
                }
                sys.rhs(t + C[s] * h_try, &self.scratch, &mut self.k[s]);
            }
            for i in 0..n {
                let mut acc = 0.0;
                for (j, b) in B.iter().enumerate() {
                    acc += b * self.k[j][i];
                }
                self.y_new[i] = self.y[i] + h_try * acc;
            }
            sys.rhs(t_new, &self.y_new, &mut self.k[6]);
            self.stats.n_rhs += 6;

            if self.y_new.iter().chain(self.k[6].iter()).any(|v| !v.is_finite()) {
                self.stats.n_rejected += 1;
                h = h_try * MIN_FACTOR;
                rejected = true;
                continue;
            }

            let mut sq = 0.0;
            for i in 0..n {
                let mut acc = 0.0;
                for (j, e) in E.iter().enumerate() {
                    acc += e * self.k[j][i];
                }
                let sc = self.tol.atol + self.tol.rtol * self.y[i].abs().max(self.y_new[i].abs());
                sq += (h_try * acc / sc).powi(2);
            }
            let err = if n == 0 { 0.0 } else { (sq / n as f64).sqrt() };

            if err < 1.0 {
                let mut factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2)).min(MAX_FACTOR)
                };
                if rejected {
                    factor = factor.min(1.0);
                }
                self.update_stiffness(h_try);
                // dense output coefficients
                for i in 0..n {
                    let dy = self.y_new[i] - self.y[i];
                    let bspl = h_try * self.k[0][i] - dy;
                    self.cont[0][i] = self.y[i];
                    self.cont[1][i] = dy;
                    self.cont[2][i] = bspl;
                    self.cont[3][i] = dy - h_try * self.k[6][i] - bspl;
                    let mut acc = 0.0;
                    for (j, d) in D.iter().enumerate() {
                        acc += d * self.k[j][i];
                    }
                    self.cont[4][i] = h_try * acc;
                }
                self.t_old = t;
                self.h_last = h_try;
                self.t = t_new;
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.f.copy_from_slice(&self.k[6]);
                self.h = h_try * factor;
                self.stats.n_accepted += 1;
                return Ok(());
            }
            self.stats.n_rejected += 1;
            h = h_try * (SAFETY * err.powf(-0.2)).max(MIN_FACTOR);
            rejected = true;
        }
    }

    fn interpolate(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t_old) / self.h_last;
        let th1 = 1.0 - th;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.cont[0][i]
                + th * (self.cont[1][i] + th1 * (self.cont[2][i] + th * (self.cont[3][i] + th1 * self.cont[4][i])));
        }
    }
}
