//! Symbolic Heisenberg-picture oracle for the Gaussian closure.
//!
//! Operators are sums of Pauli strings. For an observable `O` the generator
//! `i[O, H] + gamma sum_i (L_i^+ O L_i - {L_i^+ L_i, O} / 2)` is expanded
//! exactly, then every string is evaluated with the closure (one- and
//! two-site values given, three-site strings split with zero third
//! cumulant).

use std::collections::HashMap;

use btc_core::cumulant::{gaussian_rhs_finite, gaussian_rhs_limit, FiniteGaussState, GaussState, SymCorr};
use btc_core::meanfield::MagState;
use btc_core::{CouplingTable, ModelParams};
use num_complex::Complex64;

type Op = HashMap<Vec<u8>, Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn eps(a: u8, b: u8, c: u8) -> f64 {
    match (a, b, c) {
        (1, 2, 3) | (2, 3, 1) | (3, 1, 2) => 1.0,
        (1, 3, 2) | (3, 2, 1) | (2, 1, 3) => -1.0,
        _ => 0.0,
    }
}

/// Product of single-site Paulis (0 = identity, 1..3 = x, y, z).
fn pmul(a: u8, b: u8) -> (Complex64, u8) {
    if a == 0 {
        return (Complex64::new(1.0, 0.0), b);
    }
    if b == 0 {
        return (Complex64::new(1.0, 0.0), a);
    }
    if a == b {
        return (Complex64::new(1.0, 0.0), 0);
    }
    let c = 6 - a - b;
    (I * eps(a, b, c), c)
}

fn mul(x: &Op, y: &Op) -> Op {
    let mut out = Op::new();
    for (sx, cx) in x {
        for (sy, cy) in y {
            let mut coef = cx * cy;
            let s: Vec<u8> = sx
                .iter()
                .zip(sy)
                .map(|(&a, &b)| {
                    let (ph, c) = pmul(a, b);
                    coef *= ph;
                    c
                })
                .collect();
            *out.entry(s).or_default() += coef;
        }
    }
    out
}

fn add_scaled(acc: &mut Op, x: &Op, k: Complex64) {
    for (s, c) in x {
        *acc.entry(s.clone()).or_default() += c * k;
    }
}

fn single(n: usize, site: usize, p: u8) -> Op {
    let mut s = vec![0u8; n];
    s[site] = p;
    Op::from([(s, Complex64::new(1.0, 0.0))])
}

fn raising(n: usize, site: usize, sign: f64) -> Op {
    let mut op = single(n, site, 1);
    add_scaled(&mut op, &single(n, site, 2), I * sign);
    op.values_mut().for_each(|c| *c *= 0.5);
    op
}

/// Generator acting on `o` for drive `j`, rate `gamma` and gram matrix `gram`.
fn generator(o: &Op, n: usize, j: f64, gamma: f64, gram: &[Vec<f64>]) -> Op {
    let mut out = Op::new();
    for site in 0..n {
        let h = single(n, site, 1);
        add_scaled(&mut out, &mul(o, &h), I * j);
        add_scaled(&mut out, &mul(&h, o), -I * j);
    }
    let plus: Vec<Op> = (0..n).map(|s| raising(n, s, 1.0)).collect();
    let minus: Vec<Op> = (0..n).map(|s| raising(n, s, -1.0)).collect();
    for a in 0..n {
        for b in 0..n {
            let w = gram[a][b];
            if w == 0.0 {
                continue;
            }
            let k = Complex64::new(gamma * w, 0.0);
            add_scaled(&mut out, &mul(&mul(&minus[a], o), &plus[b]), k);
            let ll = mul(&minus[a], &plus[b]);
            add_scaled(&mut out, &mul(&ll, o), -0.5 * k);
            add_scaled(&mut out, &mul(o, &ll), -0.5 * k);
        }
    }
    out
}

/// Closure evaluation; `pair(s1, s2)` returns the 3x3 correlator of two sites.
fn expect(op: &Op, m: [f64; 3], pair: &dyn Fn(usize, usize) -> SymCorr) -> f64 {
    let mut total = Complex64::new(0.0, 0.0);
    for (s, c) in op {
        if c.norm() < 1e-15 {
            continue;
        }
        let sup: Vec<(usize, usize)> = s
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0)
            .map(|(i, &p)| (i, p as usize - 1))
            .collect();
        let v = match sup.as_slice() {
            [] => 1.0,
            [(_, a)] => m[*a],
            [(s1, a), (s2, b)] => pair(*s1, *s2).get(*a, *b),
            [(s1, a), (s2, b), (s3, cc)] => {
                pair(*s1, *s2).get(*a, *b) * m[*cc] + pair(*s1, *s3).get(*a, *cc) * m[*b] + pair(*s2, *s3).get(*b, *cc) * m[*a]
                    - 2.0 * m[*a] * m[*b] * m[*cc]
            }
            _ => panic!("string with {} sites survived: {s:?}", sup.len()),
        };
        total += c * v;
    }
    assert!(total.im.abs() < 1e-12, "non-hermitian generator: {total}");
    total.re
}

struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn corr(&mut self) -> SymCorr {
        let mut c = [0.0; 6];
        c.iter_mut().for_each(|v| *v = 0.5 * self.next());
        SymCorr(c)
    }

    fn mag(&mut self) -> MagState {
        MagState::new(0.6 * self.next(), 0.6 * self.next(), 0.6 * self.next())
    }
}

fn two_site(n: usize, l: usize, a: u8, m: usize, b: u8) -> Op {
    mul(&single(n, l, a), &single(n, m, b))
}

#[test]
fn limit_closure_matches_symbolic_generator() {
    let mut rng = Lcg(3);
    for _ in 0..25 {
        let chi = 0.2 + 2.0 * rng.next().abs();
        let eta = 1.0 + 2.0 * rng.next().abs();
        let p = ModelParams::new(chi, eta).unwrap();
        let f = p.f_eta();
        let s = GaussState {
            m: rng.mag(),
            c: rng.corr(),
        };
        let want = gaussian_rhs_limit(&s, &p);

        // sites l, m and one representative of all other sites
        let gram = vec![vec![f, 0.0, 1.0 - f], vec![0.0, f, 1.0 - f], vec![1.0 - f, 1.0 - f, 0.37]];
        let m = s.m.to_array();
        let pair = |_: usize, _: usize| s.c;
        for a in 0..3u8 {
            let g = generator(&single(3, 0, a + 1), 3, p.j, p.gamma, &gram);
            let got = expect(&g, m, &pair);
            assert!(
                (got - want.m.to_array()[a as usize]).abs() < 1e-12,
                "m_{a}: {got} vs {:?}",
                want.m
            );
            for b in a..3u8 {
                let g = generator(&two_site(3, 0, a + 1, 1, b + 1), 3, p.j, p.gamma, &gram);
                let got = expect(&g, m, &pair);
                let w = want.c.get(a as usize, b as usize);
                assert!((got - w).abs() < 1e-12, "C_{a}{b}: oracle {got} vs closure {w}");
            }
        }
    }
}

#[test]
fn finite_closure_matches_symbolic_generator() {
    let mut rng = Lcg(17);
    for n in 1..=7usize {
        for _ in 0..3 {
            let eta = 3.0 * rng.next().abs();
            let p = ModelParams::new(0.3 + rng.next().abs(), eta).unwrap().with_sites(n).unwrap();
            let table = CouplingTable::new(n, eta).unwrap();
            let f: Vec<Vec<f64>> = (0..n)
                .map(|a| (0..n).map(|b| table.coupling(a, b).unwrap()).collect())
                .collect();
            let gram: Vec<Vec<f64>> = (0..n)
                .map(|a| (0..n).map(|b| (0..n).map(|i| f[i][a] * f[i][b]).sum()).collect())
                .collect();
            let state = FiniteGaussState {
                m: rng.mag(),
                c_r: (0..n / 2).map(|_| rng.corr()).collect(),
            };
            let want = gaussian_rhs_finite(&state, &p).unwrap();
            let m = state.m.to_array();
            let pair = |s1: usize, s2: usize| state.c_r[table.distance(s1, s2) - 1];
            for a in 0..3u8 {
                let g = generator(&single(n, 0, a + 1), n, p.j, p.gamma, &gram);
                let got = expect(&g, m, &pair);
                assert!((got - want.m.to_array()[a as usize]).abs() < 1e-12, "N={n} m_{a}");
            }
            for r in 1..=n / 2 {
                for a in 0..3u8 {
                    for b in a..3u8 {
                        let g = generator(&two_site(n, 0, a + 1, r, b + 1), n, p.j, p.gamma, &gram);
                        let got = expect(&g, m, &pair);
                        let w = want.c_r[r - 1].get(a as usize, b as usize);
                        assert!((got - w).abs() < 1e-12, "N={n} r={r} C_{a}{b}: oracle {got} vs closure {w}");
                    }
                }
            }
        }
    }
}
