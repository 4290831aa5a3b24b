//! Dense integration of the full master equation for up to
//! [`MAX_SITES`] spins.
//!
//! Basis states are bit strings with site 0 as the most significant bit and
//! bit value 0 for spin up. The generator is
//! `i[H, rho] + gamma sum_i (L_i rho L_i^+ - {L_i^+ L_i, rho} / 2)` with
//! `H = 2J S_x`, `L_i = sum_j f_ij sigma_j^+`; the sign of the commutator is
//! the one under which the closed equations of [`crate::meanfield`] are
//! exact for a single spin.

mod sparse;

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

pub use sparse::SparseOp;

use crate::cumulant::SymCorr;
use crate::error::Partial;
use crate::meanfield::MagState;
use crate::model::{CouplingTable, ModelParams};
use crate::ode::{self, Method, OdeSystem, SolverOptions, SolverStats, ToleranceSpec};
use crate::{Error, Result};

pub const MAX_SITES: usize = 12;

/// Magic bytes opening a binary density-matrix dump.
pub const DUMP_MAGIC: &[u8; 8] = b"BTCRHO01";

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn site_bit(n: usize, site: usize) -> usize {
    1 << (n - 1 - site)
}

/// Action of `sigma^axis` on one site of basis state `a`: `(coefficient, image)`.
fn pauli_on(n: usize, site: usize, axis: usize, a: usize) -> (Complex64, usize) {
    let bit = site_bit(n, site);
    let up = a & bit == 0;
    match axis {
        0 => (ONE, a ^ bit),
        1 => (if up { I } else { -I }, a ^ bit),
        2 => (if up { ONE } else { -ONE }, a),
        _ => panic!("axis {axis} out of range"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_sites: usize,
    dim: usize,
    /// Row-major.
    data: Vec<Complex64>,
}

impl DensityMatrix {
    fn check_sites(n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::invalid("n_sites", "must be at least 1"));
        }
        if n > MAX_SITES {
            return Err(Error::Resource(format!(
                "dense evolution is limited to {MAX_SITES} sites, got {n}"
            )));
        }
        Ok(1 << n)
    }

    pub fn from_data(n_sites: usize, data: Vec<Complex64>) -> Result<Self> {
        let dim = Self::check_sites(n_sites)?;
        if data.len() != dim * dim {
            return Err(Error::invalid(
                "data",
                format!("expected {} entries, got {}", dim * dim, data.len()),
            ));
        }
        Ok(Self { n_sites, dim, data })
    }

    /// Product state with Bloch vector `m` on every site.
    pub fn product(n_sites: usize, m: MagState) -> Result<Self> {
        let dim = Self::check_sites(n_sites)?;
        if m.norm_sq() > 1.0 + 1e-12 {
            return Err(Error::Domain(format!(
                "Bloch vector outside the unit ball: |m|^2 = {}",
                m.norm_sq()
            )));
        }
        let one = [
            [
                Complex64::new(0.5 * (1.0 + m.mz), 0.0),
                Complex64::new(0.5 * m.mx, -0.5 * m.my),
            ],
            [
                Complex64::new(0.5 * m.mx, 0.5 * m.my),
                Complex64::new(0.5 * (1.0 - m.mz), 0.0),
            ],
        ];
        let mut data = vec![ZERO; dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                let mut v = ONE;
                for s in 0..n_sites {
                    let bit = site_bit(n_sites, s);
                    v *= one[usize::from(a & bit != 0)][usize::from(b & bit != 0)];
                }
                data[a * dim + b] = v;
            }
        }
        Ok(Self { n_sites, dim, data })
    }

    /// Every spin up.
    pub fn all_up(n_sites: usize) -> Result<Self> {
        Self::product(n_sites, MagState::up())
    }

    pub fn maximally_mixed(n_sites: usize) -> Result<Self> {
        Self::product(n_sites, MagState::default())
    }

    /// `|psi><psi|`, normalized.
    pub fn pure(n_sites: usize, psi: &[Complex64]) -> Result<Self> {
        let dim = Self::check_sites(n_sites)?;
        if psi.len() != dim {
            return Err(Error::invalid("psi", format!("expected {dim} amplitudes, got {}", psi.len())));
        }
        let norm: f64 = psi.iter().map(|v| v.norm_sqr()).sum();
        if norm <= 0.0 {
            return Err(Error::invalid("psi", "zero vector"));
        }
        let mut data = vec![ZERO; dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                data[a * dim + b] = psi[a] * psi[b].conj() / norm;
            }
        }
        Ok(Self { n_sites, dim, data })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, a: usize, b: usize) -> Complex64 {
        self.data[a * self.dim + b]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|a| self.get(a, a)).sum()
    }

    /// `max |rho - rho^+|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for a in 0..self.dim {
            for b in a..self.dim {
                e = e.max((self.get(a, b) - self.get(b, a).conj()).norm());
            }
        }
        e
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.to_matrix();
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `Tr(rho P)` for a Pauli string given as `(site, axis)` pairs with
    /// distinct sites; axes are 0, 1, 2 for x, y, z.
    pub fn pauli_expect(&self, string: &[(usize, usize)]) -> Complex64 {
        let n = self.n_sites;
        let mut s = ZERO;
        for a in 0..self.dim {
            let (mut coef, mut img) = (ONE, a);
            for &(site, axis) in string {
                let (c, b) = pauli_on(n, site, axis, img);
                coef *= c;
                img = b;
            }
            // Tr(rho P) = sum_a <a|rho P|a> = sum_a rho[a][P a] coef
            s += self.data[a * self.dim + img] * coef;
        }
        s
    }

    /// Binary dump: magic, dimension as little-endian `u64`, then row-major
    /// `(re, im)` pairs as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::invalid("dump", "bad magic bytes"));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let dim = u64::from_le_bytes(word) as usize;
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::invalid("dump", format!("dimension {dim} is not 2^N")));
        }
        let n_sites = dim.trailing_zeros() as usize;
        Self::check_sites(n_sites)?;
        let mut data = Vec::with_capacity(dim * dim);
        for _ in 0..dim * dim {
            r.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word)?;
            data.push(Complex64::new(re, f64::from_le_bytes(word)));
        }
        Ok(Self { n_sites, dim, data })
    }
}

#[derive(Debug, Clone)]
pub struct OperatorSet {
    n_sites: usize,
    /// `H = 2J S_x`.
    pub hamiltonian: SparseOp,
    pub jumps: Vec<SparseOp>,
    pub sx: SparseOp,
    pub sy: SparseOp,
    pub sz: SparseOp,
    pub s_squared: SparseOp,
    /// `sum_i L_i^+ L_i`.
    decay: SparseOp,
    /// `sum_i f_ij f_ik`, row-major `N x N`.
    gram: Vec<f64>,
}

impl OperatorSet {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn gram(&self, j: usize, k: usize) -> f64 {
        self.gram[j * self.n_sites + k]
    }
}

fn single_site_ops(n: usize, site: usize) -> [SparseOp; 4] {
    let dim = 1 << n;
    let bit = site_bit(n, site);
    let pauli = |axis: usize| {
        let trip = (0..dim)
            .map(|a| {
                let (c, b) = pauli_on(n, site, axis, a);
                (b, a, c)
            })
            .collect();
        SparseOp::from_triplets(dim, trip)
    };
    let raise = SparseOp::from_triplets(dim, (0..dim).filter(|a| a & bit != 0).map(|a| (a ^ bit, a, ONE)).collect());
    [pauli(0), pauli(1), pauli(2), raise]
}

/// Operators for `params.n_sites` spins.
pub fn build_operators(params: &ModelParams) -> Result<OperatorSet> {
    params.validate()?;
    let n = params
        .n_sites
        .ok_or_else(|| Error::Precondition("the exact engine needs n_sites".into()))?;
    let dim = DensityMatrix::check_sites(n)?;
    let table = CouplingTable::new(n, params.eta)?;
    let f: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| table.coupling(i, j)).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let site_ops: Vec<[SparseOp; 4]> = (0..n).map(|s| single_site_ops(n, s)).collect();
    let empty = SparseOp::from_triplets(dim, Vec::new());
    let half = Complex64::new(0.5, 0.0);
    let collective = |axis: usize| {
        site_ops
            .iter()
            .fold(empty.clone(), |acc, ops| acc.add(&ops[axis]))
            .scale(half)
    };
    let (sx, sy, sz) = (collective(0), collective(1), collective(2));
    let s_squared = sx.matmul(&sx).add(&sy.matmul(&sy)).add(&sz.matmul(&sz));
    let hamiltonian = sx.scale(Complex64::new(2.0 * params.j, 0.0));

    let jumps: Vec<SparseOp> = (0..n)
        .map(|i| {
            site_ops.iter().enumerate().fold(empty.clone(), |acc, (j, ops)| {
                acc.add(&ops[3].scale(Complex64::new(f[i][j], 0.0)))
            })
        })
        .collect();
    let decay = jumps.iter().fold(empty.clone(), |acc, l| acc.add(&l.adjoint().matmul(l)));
    let mut gram = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            gram[j * n + k] = (0..n).map(|i| f[i][j] * f[i][k]).sum();
        }
    }
    Ok(OperatorSet {
        n_sites: n,
        hamiltonian,
        jumps,
        sx,
        sy,
        sz,
        s_squared,
        decay,
        gram,
    })
}

fn rhs_into(rho: &[Complex64], ops: &OperatorSet, gamma: f64, out: &mut [Complex64]) {
    let n = ops.n_sites;
    let dim = ops.dim();
    let (h, a_op) = (&ops.hamiltonian, &ops.decay);
    let half_g = Complex64::new(0.5 * gamma, 0.0);
    out.par_chunks_mut(dim).enumerate().for_each(|(a, row)| {
        for (b, slot) in row.iter_mut().enumerate() {
            let mut comm = ZERO;
            for (c, v) in h.row(a) {
                comm += v * rho[c * dim + b];
            }
            for (c, v) in h.row(b) {
                comm -= rho[a * dim + c] * v.conj();
            }
            let mut anti = ZERO;
            for (c, v) in a_op.row(a) {
                anti += v * rho[c * dim + b];
            }
            for (c, v) in a_op.row(b) {
                anti += rho[a * dim + c] * v.conj();
            }
            let mut jump = 0.0 * ONE;
            for j in 0..n {
                let bj = site_bit(n, j);
                if a & bj != 0 {
                    continue;
                }
                for k in 0..n {
                    let bk = site_bit(n, k);
                    if b & bk == 0 {
                        jump += ops.gram[j * n + k] * rho[(a ^ bj) * dim + (b ^ bk)];
                    }
                }
            }
            *slot = I * comm - half_g * anti + gamma * jump;
        }
    });
}

/// `drho/dt`.
pub fn lindblad_rhs(rho: &DensityMatrix, ops: &OperatorSet, gamma: f64) -> Result<DensityMatrix> {
    if rho.n_sites != ops.n_sites {
        return Err(Error::invalid(
            "rho",
            format!("{} sites, operators are built for {}", rho.n_sites, ops.n_sites),
        ));
    }
    let mut out = vec![ZERO; rho.data.len()];
    rhs_into(&rho.data, ops, gamma, &mut out);
    Ok(DensityMatrix {
        n_sites: rho.n_sites,
        dim: rho.dim,
        data: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactObservables {
    pub t: f64,
    pub m: MagState,
    /// Correlators averaged over ordered pairs at ring distance `r`, both
    /// orientations, `r = 1..=N/2`.
    pub c_r: Vec<SymCorr>,
    /// `C_zz - m_z^2`, with `C_zz` averaged over all distinct pairs.
    pub delta_z: f64,
    /// `4 <S^2> / N^2`.
    pub s2_norm: f64,
    pub trace_err: f64,
    pub herm_err: f64,
    /// Largest imaginary part among the reported expectation values.
    pub imag_residue: f64,
}

/// Observables of `rho`; `t` is left at zero.
pub fn observables(rho: &DensityMatrix, ops: &OperatorSet) -> ExactObservables {
    let n = rho.n_sites;
    let nf = n as f64;
    let mut imag: f64 = 0.0;
    let mut re = |z: Complex64| {
        imag = imag.max(z.im.abs());
        z.re
    };
    let m = MagState::new(
        2.0 * re(ops.sx.expect(&rho.data)) / nf,
        2.0 * re(ops.sy.expect(&rho.data)) / nf,
        2.0 * re(ops.sz.expect(&rho.data)) / nf,
    );
    let mut c_r = Vec::with_capacity(n / 2);
    for r in 1..=n / 2 {
        let mut acc = [0.0; 6];
        for j in 0..n {
            let k = (j + r) % n;
            for (idx, (a, b)) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)].into_iter().enumerate() {
                let v = re(rho.pauli_expect(&[(j, a), (k, b)])) + re(rho.pauli_expect(&[(j, b), (k, a)]));
                acc[idx] += 0.5 * v;
            }
        }
        acc.iter_mut().for_each(|v| *v /= nf);
        c_r.push(SymCorr(acc));
    }
    let czz = if n > 1 {
        let mut s = 0.0;
        for a in 0..rho.dim {
            let up = (0..n).filter(|&j| a & site_bit(n, j) == 0).count() as f64;
            let total = 2.0 * up - nf;
            s += re(rho.get(a, a)) * (total * total - nf);
        }
        s / (nf * (nf - 1.0))
    } else {
        f64::NAN
    };
    let s2 = re(ops.s_squared.expect(&rho.data));
    ExactObservables {
        t: 0.0,
        m,
        c_r,
        delta_z: czz - m.mz * m.mz,
        s2_norm: 4.0 * s2 / (nf * nf),
        trace_err: (rho.trace() - ONE).norm(),
        herm_err: rho.hermiticity_error(),
        imag_residue: imag,
    }
}

/// Third cumulant of `sigma_j^a sigma_l^b sigma_m^c` on three distinct sites.
pub fn third_cumulant(rho: &DensityMatrix, sites: [usize; 3], axes: [usize; 3]) -> Result<f64> {
    let [j, l, m] = sites;
    if j == l || j == m || l == m {
        return Err(Error::Domain(format!("sites must be distinct, got {sites:?}")));
    }
    if sites.iter().any(|&s| s >= rho.n_sites) || axes.iter().any(|&a| a > 2) {
        return Err(Error::invalid("sites", "site or axis out of range"));
    }
    let [a, b, c] = axes;
    let e = |s: &[(usize, usize)]| rho.pauli_expect(s).re;
    let (x1, x2, x3) = (e(&[(j, a)]), e(&[(l, b)]), e(&[(m, c)]));
    let x12 = e(&[(j, a), (l, b)]);
    let x13 = e(&[(j, a), (m, c)]);
    let x23 = e(&[(l, b), (m, c)]);
    let x123 = e(&[(j, a), (l, b), (m, c)]);
    Ok(x123 - x12 * x3 - x13 * x2 - x23 * x1 + 2.0 * x1 * x2 * x3)
}

struct ExactSystem<'a> {
    ops: &'a OperatorSet,
    gamma: f64,
    j: f64,
}

impl OdeSystem for ExactSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.ops.dim() * self.ops.dim()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let rho = unpack(y);
        let mut out = vec![ZERO; rho.len()];
        rhs_into(&rho, self.ops, self.gamma, &mut out);
        for (pair, v) in dy.chunks_exact_mut(2).zip(out) {
            pair[0] = v.re / self.j;
            pair[1] = v.im / self.j;
        }
    }
}

fn unpack(y: &[f64]) -> Vec<Complex64> {
    y.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

fn pack(rho: &[Complex64]) -> Vec<f64> {
    rho.iter().flat_map(|v| [v.re, v.im]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactRun {
    pub params: ModelParams,
    pub samples: Vec<ExactObservables>,
    #[serde(skip)]
    pub final_state: Option<DensityMatrix>,
    pub stats: SolverStats,
}

impl ExactRun {
    pub fn max_trace_err(&self) -> f64 {
        self.samples.iter().map(|s| s.trace_err).fold(0.0, f64::max)
    }

    pub fn max_herm_err(&self) -> f64 {
        self.samples.iter().map(|s| s.herm_err).fold(0.0, f64::max)
    }

    pub fn max_delta_z(&self) -> f64 {
        self.samples.iter().map(|s| s.delta_z).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Explicit Runge-Kutta options used for the master equation; an implicit
/// method would need a Jacobian of dimension `2 * 4^N`.
pub fn default_options(tol: ToleranceSpec) -> SolverOptions {
    SolverOptions::with_tol(tol).method(Method::Dopri5)
}

/// Integrate on `[0, t_max]` with samples every
/// [`DEFAULT_DT`](crate::meanfield::DEFAULT_DT).
pub fn integrate_exact(params: &ModelParams, init: &DensityMatrix, t_max: f64, tol: ToleranceSpec) -> Result<ExactRun> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid("t_max", format!("must be finite and > 0, got {t_max}")));
    }
    let n = (t_max / crate::meanfield::DEFAULT_DT).round().max(1.0) as usize + 1;
    integrate_exact_at(params, init, &ode::linspace(0.0, t_max, n), &default_options(tol))
}

/// Integrate and record observables at `times`. Trace is not renormalized.
pub fn integrate_exact_at(params: &ModelParams, init: &DensityMatrix, times: &[f64], opts: &SolverOptions) -> Result<ExactRun> {
    let ops = build_operators(params)?;
    if init.n_sites != ops.n_sites {
        return Err(Error::invalid(
            "init",
            format!("{} sites, params ask for {}", init.n_sites, ops.n_sites),
        ));
    }
    let sys = ExactSystem {
        ops: &ops,
        gamma: params.gamma,
        j: params.j,
    };
    let mut samples = Vec::with_capacity(times.len());
    let mut last = None;
    let res = ode::solve_observed(&sys, 0.0, &pack(&init.data), times, opts, |t, y| {
        let rho = DensityMatrix {
            n_sites: init.n_sites,
            dim: init.dim,
            data: unpack(y),
        };
        let mut obs = observables(&rho, &ops);
        obs.t = t;
        samples.push(obs);
        last = Some(rho);
        true
    });
    match res {
        Ok(stats) => Ok(ExactRun {
            params: *params,
            samples,
            final_state: last,
            stats,
        }),
        Err(fail) => Err(Error::Integration {
            reason: fail.reason,
            t_reached: fail.t_reached,
            partial: Box::new(Partial::Exact(ExactRun {
                params: *params,
                samples,
                final_state: last,
                stats: fail.stats,
            })),
        }),
    }
}
