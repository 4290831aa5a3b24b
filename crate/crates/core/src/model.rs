//! Model parameters and the power-law coupling coefficients.
//!
//! Jump operators are `L_i = sum_j f_ij sigma_j^+` on a ring of `N` sites with
//! `f_ij = K / D(|i-j|)^eta`, `D(r) = min(r, N-r) + 1`, and the Kac factor `K`
//! fixed by `sum_j f_ij = 1`. Site indices are zero-based.

use serde::{Deserialize, Serialize};

use crate::special::{harmonic, zeta, CompensatedSum};
use crate::{Error, Result};

/// Default drive amplitude; with `J = 1/2` the Rabi frequency `2J` is one.
pub const DEFAULT_J: f64 = 0.5;

/// Physical parameters of the chain.
///
/// `chi = gamma / (4 J)` always holds; the constructors derive one from the
/// other. `n_sites = None` means the thermodynamic limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub j: f64,
    pub gamma: f64,
    pub chi: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sites: Option<usize>,
}

impl ModelParams {
    /// Thermodynamic-limit parameters with the default `J = 1/2`.
    pub fn new(chi: f64, eta: f64) -> Result<Self> {
        Self::with_drive(DEFAULT_J, chi, eta)
    }

    pub fn with_drive(j: f64, chi: f64, eta: f64) -> Result<Self> {
        if !(chi >= 0.0 && chi.is_finite()) {
            return Err(Error::invalid("chi", format!("must be finite and >= 0, got {chi}")));
        }
        Self::validated(j, 4.0 * j * chi, chi, eta)
    }

    pub fn from_gamma(j: f64, gamma: f64, eta: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("gamma", format!("must be finite and >= 0, got {gamma}")));
        }
        Self::validated(j, gamma, gamma / (4.0 * j), eta)
    }

    fn validated(j: f64, gamma: f64, chi: f64, eta: f64) -> Result<Self> {
        if !(j > 0.0 && j.is_finite()) {
            return Err(Error::invalid("j", format!("must be finite and > 0, got {j}")));
        }
        // eta = +inf is the zero-range limit and is allowed
        if !(eta >= 0.0) {
            return Err(Error::invalid("eta", format!("must be >= 0, got {eta}")));
        }
        Ok(Self {
            j,
            gamma,
            chi,
            eta,
            n_sites: None,
        })
    }

    pub fn with_sites(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n_sites", "must be >= 1"));
        }
        self.n_sites = Some(n);
        Ok(self)
    }

    pub fn thermodynamic(mut self) -> Self {
        self.n_sites = None;
        self
    }

    /// Re-check the invariants; used after deserializing.
    pub fn validate(&self) -> Result<()> {
        let fresh = Self::with_drive(self.j, self.chi, self.eta)?;
        if (fresh.gamma - self.gamma).abs() > 1e-12 * fresh.gamma.max(1.0) {
            return Err(Error::invalid(
                "gamma",
                format!("gamma = {} is inconsistent with 4 J chi = {}", self.gamma, fresh.gamma),
            ));
        }
        if self.n_sites == Some(0) {
            return Err(Error::invalid("n_sites", "must be >= 1"));
        }
        Ok(())
    }

    /// Dissipation weight entering the closed equations: `F_eta^(N)` at finite
    /// size, `F_eta` in the limit.
    pub fn f_eta(&self) -> f64 {
        match self.n_sites {
            Some(n) => f_coeff_finite(n, self.eta).expect("n_sites validated at construction"),
            None => f_coeff_limit(self.eta),
        }
    }
}

/// `D(r) = min(r, N - r) + 1` for `0 <= r < N`.
fn ring_distance(n: usize, i: usize, j: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

/// Number of sites at ring distance `r` from a given site.
pub fn distance_multiplicity(n: usize, r: usize) -> usize {
    if r == 0 || 2 * r == n {
        1
    } else if 2 * r < n {
        2
    } else {
        0
    }
}

/// Kac normalization `K^(N)(eta)` from the even/odd harmonic-number forms.
pub fn kac_factor(n_sites: usize, eta: f64) -> Result<f64> {
    if n_sites == 0 {
        return Err(Error::Domain("kac_factor needs at least one site".into()));
    }
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("eta must be >= 0, got {eta}")));
    }
    let n = n_sites as u64;
    let denom = if n.is_multiple_of(2) {
        let half = 1 + n / 2;
        2.0 * harmonic(half, eta) - 1.0 - (half as f64).powf(-eta)
    } else {
        2.0 * harmonic(1 + (n - 1) / 2, eta) - 1.0
    };
    Ok(1.0 / denom)
}

/// `F_eta^(N) = sum_i f_ij^2`, independent of `j`.
pub fn f_coeff_finite(n_sites: usize, eta: f64) -> Result<f64> {
    let k = kac_factor(n_sites, eta)?;
    let sum: CompensatedSum = (0..=n_sites / 2)
        .rev()
        .map(|r| distance_multiplicity(n_sites, r) as f64 * ((r + 1) as f64).powf(-2.0 * eta))
        .collect();
    Ok(k * k * sum.value())
}

/// Thermodynamic-limit weight: zero for `eta <= 1`,
/// `(2 zeta(2 eta) - 1) / (2 zeta(eta) - 1)^2` above.
pub fn f_coeff_limit(eta: f64) -> f64 {
    if eta <= 1.0 {
        return 0.0;
    }
    if eta.is_infinite() {
        return 1.0;
    }
    let a = 2.0 * zeta(eta) - 1.0;
    (2.0 * zeta(2.0 * eta) - 1.0) / (a * a)
}

/// Distance-indexed coupling coefficients for one ring size and exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingTable {
    n_sites: usize,
    eta: f64,
    kac: f64,
    /// `f_r` for `r = 0..=N/2`.
    f: Vec<f64>,
}

impl CouplingTable {
    pub fn new(n_sites: usize, eta: f64) -> Result<Self> {
        let kac = kac_factor(n_sites, eta)?;
        let f = (0..=n_sites / 2).map(|r| kac * ((r + 1) as f64).powf(-eta)).collect();
        Ok(Self { n_sites, eta, kac, f })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn kac(&self) -> f64 {
        self.kac
    }

    /// `f_r` indexed by ring distance.
    pub fn by_distance(&self) -> &[f64] {
        &self.f
    }

    pub fn distance(&self, i: usize, j: usize) -> usize {
        ring_distance(self.n_sites, i, j)
    }

    fn check_site(&self, i: usize) -> Result<()> {
        if i >= self.n_sites {
            return Err(Error::Domain(format!("site {i} out of range for N = {}", self.n_sites)));
        }
        Ok(())
    }

    /// `f_ij`.
    pub fn coupling(&self, i: usize, j: usize) -> Result<f64> {
        self.check_site(i)?;
        self.check_site(j)?;
        Ok(self.f[self.distance(i, j)])
    }

    /// `F_jk = sum_i f_ij f_ik`, summed directly over the ring.
    pub fn coupling_gram(&self, j: usize, k: usize) -> Result<f64> {
        self.check_site(j)?;
        self.check_site(k)?;
        let n = self.n_sites;
        let sum: CompensatedSum = (0..n)
            .map(|i| self.f[ring_distance(n, i, j)] * self.f[ring_distance(n, i, k)])
            .collect();
        Ok(sum.value())
    }

    /// `F_r` for `r = 0..=N/2`, the gram coefficients by ring distance.
    pub fn gram_by_distance(&self) -> Vec<f64> {
        let n = self.n_sites;
        (0..=n / 2)
            .map(|r| {
                (0..n)
                    .map(|i| self.f[ring_distance(n, i, 0)] * self.f[ring_distance(n, i, r)])
                    .collect::<CompensatedSum>()
                    .value()
            })
            .collect()
    }

    /// `F_eta^(N)`, i.e. the diagonal gram coefficient.
    pub fn f_coeff(&self) -> f64 {
        (0..=self.n_sites / 2)
            .rev()
            .map(|r| distance_multiplicity(self.n_sites, r) as f64 * self.f[r] * self.f[r])
            .collect::<CompensatedSum>()
            .value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row_sum(t: &CouplingTable, i: usize) -> f64 {
        (0..t.n_sites()).map(|j| t.coupling(i, j).unwrap()).sum()
    }

    #[test]
    fn kac_examples() {
        assert!((kac_factor(8, 0.0).unwrap() - 0.125).abs() < 1e-15);
        assert!((kac_factor(8, 1e6).unwrap() - 1.0).abs() < 1e-9);
        assert!((kac_factor(4, 1.0).unwrap() - 3.0 / 7.0).abs() < 1e-15);
        assert!((kac_factor(1, 2.3).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(kac_factor(0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn kac_matches_direct_distance_sum() {
        for n in 1..40 {
            for eta in [0.0, 0.3, 1.0, 2.7] {
                let direct: f64 = (0..n).map(|j| ((ring_distance(n, 0, j) + 1) as f64).powf(-eta)).sum();
                let k = kac_factor(n, eta).unwrap();
                assert!((k * direct - 1.0).abs() < 1e-13, "N={n} eta={eta}");
            }
        }
    }

    #[test]
    fn coupling_examples() {
        let t = CouplingTable::new(8, 0.0).unwrap();
        for (i, j) in [(0, 0), (0, 7), (3, 5)] {
            assert!((t.coupling(i, j).unwrap() - 0.125).abs() < 1e-15);
        }
        let t = CouplingTable::new(6, 1.0).unwrap();
        let k = kac_factor(6, 1.0).unwrap();
        // sites 1 and 4 in one-based numbering
        assert!((t.coupling(0, 3).unwrap() - k / 4.0).abs() < 1e-15);
        // sites 1 and 6 wrap around the ring
        assert!((t.coupling(0, 5).unwrap() - k / 2.0).abs() < 1e-15);
        assert!(t.coupling(0, 6).is_err());
    }

    #[test]
    fn f_coeff_finite_examples() {
        assert!((f_coeff_finite(10, 0.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((f_coeff_finite(10, 1e6).unwrap() - 1.0).abs() < 1e-12);
        let t = CouplingTable::new(64, 2.0).unwrap();
        let brute: f64 = (0..64).map(|i| t.coupling(i, 17).unwrap().powi(2)).sum();
        assert!((f_coeff_finite(64, 2.0).unwrap() - brute).abs() < 1e-12);
        assert!((t.f_coeff() - brute).abs() < 1e-12);
    }

    #[test]
    fn f_coeff_limit_examples() {
        assert_eq!(f_coeff_limit(0.5), 0.0);
        assert_eq!(f_coeff_limit(1.0), 0.0);
        // zeta(2) = pi^2/6, zeta(4) = pi^4/90
        let pi = std::f64::consts::PI;
        let oracle = (pi.powi(4) / 45.0 - 1.0) / (pi * pi / 3.0 - 1.0).powi(2);
        assert!((f_coeff_limit(2.0) - oracle).abs() < 1e-14);
        assert!((f_coeff_limit(2.0) - 0.222_112_585).abs() < 1e-8);
        let big_n = f_coeff_finite(100_000, 2.0).unwrap();
        assert!((big_n - f_coeff_limit(2.0)).abs() < 1e-4);
        assert!((f_coeff_limit(60.0) - 1.0).abs() < 1e-15);
        assert_eq!(f_coeff_limit(f64::INFINITY), 1.0);
        // continuous from above at eta = 1
        assert!(f_coeff_limit(1.0 + 1e-6) < 1e-11);
    }

    #[test]
    fn gram_examples() {
        let t = CouplingTable::new(8, 0.0).unwrap();
        assert!((t.coupling_gram(2, 5).unwrap() - 0.125).abs() < 1e-15);
        let t = CouplingTable::new(6, 1.5).unwrap();
        let brute: f64 = (0..6).map(|i| t.coupling(i, 0).unwrap() * t.coupling(i, 2).unwrap()).sum();
        assert!((t.coupling_gram(0, 2).unwrap() - brute).abs() < 1e-12);
        let by_r = t.gram_by_distance();
        for j in 0..6 {
            assert!((t.coupling_gram(j, j).unwrap() - t.f_coeff()).abs() < 1e-14);
            for k in 0..6 {
                assert!((t.coupling_gram(j, k).unwrap() - by_r[t.distance(j, k)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn normalization_matrix() {
        for n in 1..=512 {
            for eta in [0.0, 0.5, 1.0, 1.5, 2.0, 5.0] {
                let t = CouplingTable::new(n, eta).unwrap();
                // translation invariance means one row is enough, but check a few
                for i in [0, n / 2, n - 1] {
                    let s = row_sum(&t, i);
                    assert!((s - 1.0).abs() < 1e-12, "N={n} eta={eta} i={i}: {s}");
                }
                assert!(t.by_distance().iter().all(|&f| f > 0.0));
            }
        }
    }

    #[test]
    fn gram_total_is_n() {
        for n in [1, 2, 7, 16, 33] {
            for eta in [0.0, 0.8, 1.7] {
                let t = CouplingTable::new(n, eta).unwrap();
                let g = t.gram_by_distance();
                let total: f64 = (0..=n / 2).map(|r| distance_multiplicity(n, r) as f64 * g[r]).sum::<f64>() * n as f64;
                assert!((total - n as f64).abs() < 1e-10 * n as f64);
            }
        }
    }

    #[test]
    fn finite_f_approaches_limit() {
        for eta in [1.5, 2.0, 3.0] {
            let lim = f_coeff_limit(eta);
            let small = (f_coeff_finite(1 << 10, eta).unwrap() - lim).abs();
            let large = (f_coeff_finite(1 << 14, eta).unwrap() - lim).abs();
            assert!(large < small, "eta={eta}: {small} -> {large}");
        }
        assert!(f_coeff_finite(1 << 14, 0.5).unwrap() < 0.02);
    }

    #[test]
    fn params_derive_gamma_and_chi() {
        let p = ModelParams::new(0.7, 0.5).unwrap();
        assert_eq!(p.gamma, 4.0 * p.j * 0.7);
        let q = ModelParams::from_gamma(2.0, 3.0, 1.2).unwrap();
        assert_eq!(q.chi, 3.0 / 8.0);
        assert!(ModelParams::new(-1.0, 0.5).is_err());
        assert!(ModelParams::new(1.0, -0.5).is_err());
        assert!(ModelParams::with_drive(0.0, 1.0, 0.5).is_err());
        assert!(p.with_sites(0).is_err());
        assert_eq!(
            p.with_sites(10).unwrap().f_eta(),
            0.1_f64.max(f_coeff_finite(10, 0.5).unwrap())
        );
    }

    proptest! {
        #[test]
        fn coupling_is_symmetric(n in 1usize..80, eta in 0.0f64..4.0, i in 0usize..80, j in 0usize..80) {
            let t = CouplingTable::new(n, eta).unwrap();
            let (i, j) = (i % n, j % n);
            prop_assert_eq!(t.coupling(i, j).unwrap(), t.coupling(j, i).unwrap());
            prop_assert_eq!(t.coupling_gram(i, j).unwrap(), t.coupling_gram(j, i).unwrap());
        }
    }
}
