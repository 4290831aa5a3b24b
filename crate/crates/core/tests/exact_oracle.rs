use btc_core::cumulant::{gaussian_rhs_finite, FiniteGaussState};
use btc_core::exact::*;
use btc_core::meanfield::MagState;
use btc_core::ode::ToleranceSpec;
use btc_core::ModelParams;
use nalgebra::DMatrix;
use num_complex::Complex64;

fn params(n: usize, chi: f64, eta: f64) -> ModelParams {
    ModelParams::new(chi, eta).unwrap().with_sites(n).unwrap()
}

fn cz(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    }
}

fn random_state(n: usize, rng: &mut Lcg) -> DensityMatrix {
    let dim = 1 << n;
    // rho = A A^+ / Tr
    let a = DMatrix::from_fn(dim, dim, |_, _| Complex64::new(rng.next(), rng.next()));
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    let rho = rho / tr;
    let data = (0..dim)
        .flat_map(|i| (0..dim).map(move |j| (i, j)))
        .map(|(i, j)| rho[(i, j)])
        .collect();
    DensityMatrix::from_data(n, data).unwrap()
}

/// Collective spin `S = N/2` in the Dicke basis, index k <-> m = S - k.
struct Dicke {
    sp: DMatrix<Complex64>,
    sm: DMatrix<Complex64>,
    sx: DMatrix<Complex64>,
    sy: DMatrix<Complex64>,
    sz: DMatrix<Complex64>,
}

impl Dicke {
    fn new(n: usize) -> Self {
        let s = n as f64 / 2.0;
        let d = n + 1;
        let mut sp = DMatrix::zeros(d, d);
        let mut sz = DMatrix::zeros(d, d);
        for k in 0..d {
            let m = s - k as f64;
            sz[(k, k)] = cz(m);
            if k > 0 {
                sp[(k - 1, k)] = cz((s * (s + 1.0) - m * (m + 1.0)).sqrt());
            }
        }
        let sm = sp.adjoint();
        let sx = (&sp + &sm) * cz(0.5);
        let sy = (&sp - &sm) * Complex64::new(0.0, -0.5);
        Self { sp, sm, sx, sy, sz }
    }

    /// `i[H, rho] + (gamma / N) (S+ rho S- - {S- S+, rho} / 2)`, divided by `J`.
    fn rhs(&self, rho: &DMatrix<Complex64>, j: f64, gamma: f64, n: usize) -> DMatrix<Complex64> {
        let h = &self.sx * cz(2.0 * j);
        let i = Complex64::new(0.0, 1.0);
        let smsp = &self.sm * &self.sp;
        let comm = (&h * rho - rho * &h) * i;
        let diss = (&self.sp * rho * &self.sm) - (&smsp * rho + rho * &smsp) * cz(0.5);
        (comm + diss * cz(gamma / n as f64)) / cz(j)
    }
}

#[test]
fn collective_limit_matches_dicke_integrator() {
    for n in [2usize, 4, 6] {
        let p = params(n, 0.7, 0.0);
        let t_max = 6.0;
        let run = integrate_exact(
            &p,
            &DensityMatrix::all_up(n).unwrap(),
            t_max,
            ToleranceSpec::new(1e-11, 1e-13),
        )
        .unwrap();

        let dk = Dicke::new(n);
        let mut rho = DMatrix::zeros(n + 1, n + 1);
        rho[(0, 0)] = cz(1.0);
        let h = 1e-3;
        let steps_per_sample = 50;
        for (idx, s) in run.samples.iter().enumerate() {
            if idx > 0 {
                for _ in 0..steps_per_sample {
                    let k1 = dk.rhs(&rho, p.j, p.gamma, n);
                    let k2 = dk.rhs(&(&rho + &k1 * cz(h / 2.0)), p.j, p.gamma, n);
                    let k3 = dk.rhs(&(&rho + &k2 * cz(h / 2.0)), p.j, p.gamma, n);
                    let k4 = dk.rhs(&(&rho + &k3 * cz(h)), p.j, p.gamma, n);
                    rho += (k1 + k2 * cz(2.0) + k3 * cz(2.0) + k4) * cz(h / 6.0);
                }
            }
            let ex = |op: &DMatrix<Complex64>| 2.0 * (&rho * op).trace().re / n as f64;
            let want = MagState::new(ex(&dk.sx), ex(&dk.sy), ex(&dk.sz));
            assert!(s.m.dist(want) < 1e-8, "N={n} t={}: {:?} vs {:?}", s.t, s.m, want);
        }
    }
}

#[test]
fn trace_and_hermiticity_are_preserved() {
    for (n, eta) in [(3, 0.5), (4, 1.5), (5, 3.0)] {
        let run = integrate_exact(
            &params(n, 1.1, eta),
            &DensityMatrix::all_up(n).unwrap(),
            20.0,
            ToleranceSpec::default(),
        )
        .unwrap();
        assert!(run.max_trace_err() < 1e-9, "{}", run.max_trace_err());
        assert!(run.max_herm_err() < 1e-9);
        assert!(run.samples.iter().all(|s| s.imag_residue < 1e-10));
        let last = run.final_state.unwrap();
        assert!(last.min_eigenvalue() > -1e-8);
    }
}

#[test]
fn rhs_is_traceless_and_hermitian() {
    let mut rng = Lcg(9);
    for n in 1..=4 {
        let p = params(n, 0.8, 1.3);
        let ops = build_operators(&p).unwrap();
        let rho = random_state(n, &mut rng);
        let d = lindblad_rhs(&rho, &ops, p.gamma).unwrap();
        assert!(d.trace().norm() < 1e-12);
        assert!(d.hermiticity_error() < 1e-12);

        let mixed = DensityMatrix::maximally_mixed(n).unwrap();
        let d = lindblad_rhs(&mixed, &ops, 0.0).unwrap();
        assert!(d.data().iter().all(|v| v.norm() < 1e-15));
    }
}

#[test]
fn variance_grows_at_small_size() {
    for n in 2..=6 {
        let run = integrate_exact(
            &params(n, 0.7, 0.5),
            &DensityMatrix::all_up(n).unwrap(),
            40.0,
            ToleranceSpec::default(),
        )
        .unwrap();
        assert!(run.max_delta_z() > 0.1, "N={n}: {}", run.max_delta_z());
    }
}

#[test]
fn total_spin_is_not_conserved_at_finite_range() {
    let theta: f64 = 0.1;
    let tilted = MagState::new(theta.sin(), 0.0, theta.cos());
    let rate = |eta: f64| {
        let p = params(4, 1.0, eta);
        let ops = build_operators(&p).unwrap();
        let rho = DensityMatrix::product(4, tilted).unwrap();
        let d = lindblad_rhs(&rho, &ops, p.gamma).unwrap();
        ops.s_squared.expect(d.data()).re
    };
    assert!(rate(1.0).abs() > 1e-6, "{}", rate(1.0));
    assert!(rate(0.0).abs() < 1e-12, "{}", rate(0.0));

    let ops = build_operators(&params(4, 1.0, 1.0)).unwrap();
    assert!(ops.jumps[0].commutator(&ops.s_squared).frobenius_norm() > 1e-3);
    let ops = build_operators(&params(4, 1.0, 0.0)).unwrap();
    assert!(ops.jumps[0].commutator(&ops.s_squared).frobenius_norm() < 1e-12);
}

fn state_at_five() -> DensityMatrix {
    let p = params(4, 0.7, 0.5);
    integrate_exact(&p, &DensityMatrix::all_up(4).unwrap(), 5.0, ToleranceSpec::new(1e-10, 1e-12))
        .unwrap()
        .final_state
        .unwrap()
}

#[test]
fn pair_average_matches_brute_force() {
    let rho = state_at_five();
    let ops = build_operators(&params(4, 0.7, 0.5)).unwrap();
    let obs = observables(&rho, &ops);
    // brute force from diagonal: <sigma_j^z sigma_k^z> over all ordered distinct pairs
    let n = 4;
    let mut s = 0.0;
    let mut count = 0.0;
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            let mut v = 0.0;
            for a in 0..16usize {
                let sj = if a >> (n - 1 - j) & 1 == 0 { 1.0 } else { -1.0 };
                let sk = if a >> (n - 1 - k) & 1 == 0 { 1.0 } else { -1.0 };
                v += rho.get(a, a).re * sj * sk;
            }
            s += v;
            count += 1.0;
        }
    }
    let czz = s / count;
    assert!((obs.delta_z + obs.m.mz * obs.m.mz - czz).abs() < 1e-12);
}

/// Cumulant from an explicit moment expansion over the site operators as
/// dense Kronecker products.
fn third_cumulant_dense(rho: &DensityMatrix, sites: [usize; 3], axes: [usize; 3]) -> f64 {
    let n = rho.n_sites();
    let i = Complex64::new(0.0, 1.0);
    let pauli = |a: usize| -> DMatrix<Complex64> {
        match a {
            0 => DMatrix::from_row_slice(2, 2, &[cz(0.0), cz(1.0), cz(1.0), cz(0.0)]),
            1 => DMatrix::from_row_slice(2, 2, &[cz(0.0), -i, i, cz(0.0)]),
            _ => DMatrix::from_row_slice(2, 2, &[cz(1.0), cz(0.0), cz(0.0), cz(-1.0)]),
        }
    };
    let embed = |site: usize, a: usize| {
        let mut m = DMatrix::from_element(1, 1, cz(1.0));
        for s in 0..n {
            let f = if s == site { pauli(a) } else { DMatrix::identity(2, 2) };
            m = m.kronecker(&f);
        }
        m
    };
    let r = rho.to_matrix();
    let x: Vec<DMatrix<Complex64>> = (0..3).map(|k| embed(sites[k], axes[k])).collect();
    let e = |m: DMatrix<Complex64>| (&r * m).trace().re;
    let (e1, e2, e3) = (e(x[0].clone()), e(x[1].clone()), e(x[2].clone()));
    let e12 = e(&x[0] * &x[1]);
    let e13 = e(&x[0] * &x[2]);
    let e23 = e(&x[1] * &x[2]);
    let e123 = e(&x[0] * &x[1] * &x[2]);
    e123 - e12 * e3 - e13 * e2 - e23 * e1 + 2.0 * e1 * e2 * e3
}

#[test]
fn third_cumulant_checks() {
    let product = DensityMatrix::product(4, MagState::new(0.3, -0.5, 0.6)).unwrap();
    for axes in [[2, 2, 2], [0, 1, 2], [1, 1, 0]] {
        assert!(third_cumulant(&product, [0, 1, 3], axes).unwrap().abs() < 1e-12);
    }

    let rho = state_at_five();
    let base = third_cumulant(&rho, [0, 1, 2], [0, 1, 2]).unwrap();
    let perm = third_cumulant(&rho, [2, 0, 1], [2, 0, 1]).unwrap();
    assert!((base - perm).abs() < 1e-14);

    let zzz = third_cumulant(&rho, [0, 1, 2], [2, 2, 2]).unwrap();
    assert!((zzz - third_cumulant_dense(&rho, [0, 1, 2], [2, 2, 2])).abs() < 1e-12);
    assert!(zzz.abs() > 1e-6, "{zzz}");
}

#[test]
fn closure_is_exact_for_product_states_at_t0() {
    let mut rng = Lcg(41);
    for n in 2..=6 {
        let eta = 2.5 * rng.next().abs();
        let p = params(n, 0.5 + rng.next().abs(), eta);
        let ops = build_operators(&p).unwrap();
        let v = MagState::new(rng.next(), rng.next(), rng.next());
        let m = MagState::new(v.mx * 0.55, v.my * 0.55, v.mz * 0.55);
        let rho = DensityMatrix::product(n, m).unwrap();
        let d = lindblad_rhs(&rho, &ops, p.gamma).unwrap();
        let closure = gaussian_rhs_finite(&FiniteGaussState::product(m, n), &p).unwrap();
        let dm = closure.m.to_array();
        for a in 0..3 {
            let exact = d.pauli_expect(&[(0, a)]).re;
            assert!((exact - dm[a]).abs() < 1e-12, "N={n} m_{a}");
        }
        for r in 1..=n / 2 {
            for a in 0..3 {
                for b in 0..3 {
                    let exact = d.pauli_expect(&[(0, a), (r, b)]).re;
                    let got = closure.c_r[r - 1].get(a, b);
                    assert!((exact - got).abs() < 1e-12, "N={n} r={r} ({a},{b}): {exact} vs {got}");
                }
            }
        }
    }
}
