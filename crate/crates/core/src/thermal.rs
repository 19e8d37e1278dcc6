//! Thermal states of truncated bosonic modes and the large-bath
//! degeneracy model.
//!
//! Bosonic cavities have one state per Fock level, so in the optics engine
//! the entropy bookkeeping is carried entirely by the resonance condition
//! `β₁ω₁ = β₂ω₂`. The exponential [`DegeneracyModel`] is only used to check
//! the large-bath statements (degeneracy scaling, entropy conservation
//! equivalent to weighted-energy conservation) in their asymptotic form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DensityMatrix, Operator, CONSERVATION_TOL};

/// Default tail probability used to pick Fock cutoffs.
pub const DEFAULT_TAIL_DELTA: f64 = 1e-6;

/// Relative slack when comparing a geometric tail with `delta`, so that
/// exact powers such as `2^-10` are not lost to rounding in `exp`.
const TAIL_SLACK: f64 = 1e-12;

/// A single bosonic mode `H = ω a†a` at inverse temperature `β`, truncated
/// to Fock states `0..=n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedMode {
    pub omega: f64,
    pub beta: f64,
    pub n_max: usize,
}

impl TruncatedMode {
    pub fn new(omega: f64, beta: f64, n_max: usize) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::Argument(format!("mode frequency must be positive, got {omega}")));
        }
        if !(beta > 0.0) || beta.is_nan() {
            return Err(Error::Argument(format!(
                "inverse temperature must be positive, got {beta}"
            )));
        }
        if n_max < 1 {
            return Err(Error::Argument("Fock cutoff n_max must be at least 1".into()));
        }
        Ok(Self { omega, beta, n_max })
    }

    /// Mode with the smallest cutoff whose Gibbs tail is below `delta`.
    pub fn with_tail(omega: f64, beta: f64, delta: f64) -> Result<Self> {
        let report = truncation_for_tail(omega, beta, delta)?;
        Self::new(omega, beta, report.n_max_used)
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// `β ω`, the Boltzmann exponent per quantum.
    pub fn boltzmann_exponent(&self) -> f64 {
        self.beta * self.omega
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..=self.n_max).map(|n| n as f64 * self.omega).collect()
    }

    pub fn hamiltonian(&self) -> Operator {
        Operator::from_real_diagonal(&self.energies())
    }

    /// Untruncated partition function `1 / (1 - e^{-βω})`.
    pub fn partition_function(&self) -> f64 {
        1.0 / -(-self.boltzmann_exponent()).exp_m1()
    }
}

/// Gibbs state of a [`TruncatedMode`], renormalized over the kept levels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GibbsState {
    pub populations: Vec<f64>,
    /// Partition function of the untruncated ladder.
    pub partition_function: f64,
    /// Untruncated probability mass of the kept levels.
    pub captured_mass: f64,
}

impl GibbsState {
    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_probabilities(&self.populations).expect("Gibbs populations are normalized")
    }

    pub fn mean_energy(&self, omega: f64) -> f64 {
        self.populations
            .iter()
            .enumerate()
            .map(|(n, p)| p * n as f64 * omega)
            .sum()
    }
}

pub fn gibbs_state(mode: &TruncatedMode) -> GibbsState {
    let x = mode.boltzmann_exponent();
    let weights: Vec<f64> = (0..=mode.n_max).map(|n| (-(n as f64) * x).exp()).collect();
    let total: f64 = weights.iter().sum();
    GibbsState {
        populations: weights.iter().map(|w| w / total).collect(),
        partition_function: mode.partition_function(),
        captured_mass: -(-(mode.n_max as f64 + 1.0) * x).exp_m1(),
    }
}

/// Cutoff selection for a prescribed Gibbs tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailReport {
    pub delta: f64,
    pub achieved_mass: f64,
    pub n_max_used: usize,
}

/// Smallest `n_max >= 1` whose untruncated Gibbs mass on `0..=n_max` is at
/// least `1 - delta`. The tail beyond `n_max` is `e^{-βω(n_max+1)}`.
pub fn truncation_for_tail(omega: f64, beta: f64, delta: f64) -> Result<TailReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!(
            "tail probability must lie in (0, 1), got {delta}"
        )));
    }
    let x = TruncatedMode::new(omega, beta, 1)?.boltzmann_exponent();
    let tail = |n: usize| (-(n as f64 + 1.0) * x).exp();
    let mut n = 1usize;
    while tail(n) > delta * (1.0 + TAIL_SLACK) {
        n += 1;
    }
    Ok(TailReport {
        delta,
        achieved_mass: 1.0 - tail(n),
        n_max_used: n,
    })
}

/// Continuous degeneracy model `d(E) = d0 · e^{βE}` of a large bath.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DegeneracyModel {
    pub beta: f64,
    pub d0: f64,
}

impl DegeneracyModel {
    pub fn new(beta: f64, d0: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Argument(format!(
                "inverse temperature must be positive, got {beta}"
            )));
        }
        if !(d0 > 0.0 && d0.is_finite()) {
            return Err(Error::Argument(format!(
                "degeneracy prefactor must be positive, got {d0}"
            )));
        }
        Ok(Self { beta, d0 })
    }

    pub fn degeneracy(&self, energy: f64) -> f64 {
        self.d0 * (self.beta * energy).exp()
    }

    pub fn ln_degeneracy(&self, energy: f64) -> f64 {
        self.d0.ln() + self.beta * energy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DegeneracyCheck {
    pub conserved: bool,
    /// `β₁ dE₁ + β₂ dE₂`.
    pub residual: f64,
    /// `d₁(E₁+dE₁) d₂(E₂+dE₂) / (d₁(E₁) d₂(E₂))`, equal to `e^{residual}`.
    pub degeneracy_ratio: f64,
}

/// Whether the transfer `(dE1, dE2)` keeps the product degeneracy of the two
/// baths fixed, i.e. conserves the weighted energy `β₁E₁ + β₂E₂`.
pub fn degeneracy_conservation_check(
    model1: &DegeneracyModel,
    model2: &DegeneracyModel,
    de1: f64,
    de2: f64,
) -> DegeneracyCheck {
    let residual = model1.beta * de1 + model2.beta * de2;
    DegeneracyCheck {
        conserved: residual.abs() <= CONSERVATION_TOL,
        residual,
        degeneracy_ratio: residual.exp(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingSample {
    pub e_s1: f64,
    pub e_s2: f64,
    pub ratio: f64,
    pub expected: f64,
    pub relative_error: f64,
}

/// Two ladders with spacings `omega1`, `omega2` on which single-quantum
/// exchanges are checked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResonanceGrid {
    pub omega1: f64,
    pub omega2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResonanceCheck {
    pub omega1: f64,
    pub omega2: f64,
    /// Occupations of the nominal bath energies on the grid.
    pub occupations: (u64, u64),
    /// A partner state `(n-1, m+1)` exists on the grid.
    pub exchange_exists: bool,
    /// `β₁(-ω₁) + β₂ω₂` for the exchange.
    pub weighted_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BathPropertyReport {
    pub nominal: (f64, f64),
    pub samples: Vec<ScalingSample>,
    pub max_relative_error: f64,
    pub resonance: Option<ResonanceCheck>,
    pub passed: bool,
}

/// Tolerance for the exponential degeneracy-scaling check.
pub const SCALING_REL_TOL: f64 = 1e-9;

/// Checks the large-bath properties on the exponential model: for each
/// sampled system energy pair, `g_B(E₁+E_S1, E₂+E_S2) = g_B(E₁, E₂)·e^{β₁E_S1+β₂E_S2}`
/// where `g_B = d₁·d₂`; and, when a grid is given, that the single-quantum
/// exchange on the grid exists and conserves the weighted energy.
pub fn bath_property_suite(
    model1: &DegeneracyModel,
    model2: &DegeneracyModel,
    nominal: (f64, f64),
    samples: &[(f64, f64)],
    grid: Option<ResonanceGrid>,
) -> Result<BathPropertyReport> {
    let (e1, e2) = nominal;
    if !(e1 > 0.0 && e2 > 0.0) {
        return Err(Error::Precondition("nominal bath energies must be positive".into()));
    }
    for &(s1, s2) in samples {
        if s1 < 0.0 || s2 < 0.0 || s1 >= e1 || s2 >= e2 {
            return Err(Error::Precondition(format!(
                "system energies ({s1}, {s2}) must be non-negative and small against ({e1}, {e2})"
            )));
        }
    }
    let g_b = |a: f64, b: f64| model1.degeneracy(a) * model2.degeneracy(b);
    let base = g_b(e1, e2);
    let samples: Vec<ScalingSample> = samples
        .iter()
        .map(|&(s1, s2)| {
            let ratio = g_b(e1 + s1, e2 + s2) / base;
            let expected = (model1.beta * s1 + model2.beta * s2).exp();
            ScalingSample {
                e_s1: s1,
                e_s2: s2,
                ratio,
                expected,
                relative_error: (ratio - expected).abs() / expected,
            }
        })
        .collect();
    let max_relative_error = samples.iter().map(|s| s.relative_error).fold(0.0, f64::max);

    let resonance = grid.map(|grid| {
        let n = (e1 / grid.omega1).floor() as u64;
        let m = (e2 / grid.omega2).floor() as u64;
        ResonanceCheck {
            omega1: grid.omega1,
            omega2: grid.omega2,
            occupations: (n, m),
            exchange_exists: n >= 1,
            weighted_residual: model1.beta * -grid.omega1 + model2.beta * grid.omega2,
        }
    });
    let resonance_ok = resonance.map_or(true, |r| {
        r.exchange_exists && r.weighted_residual.abs() <= CONSERVATION_TOL
    });
    Ok(BathPropertyReport {
        nominal,
        passed: max_relative_error <= SCALING_REL_TOL && resonance_ok,
        samples,
        max_relative_error,
        resonance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn gibbs_geometric_distribution() {
        let mode = TruncatedMode::new(LN_2, 1.0, 60).unwrap();
        let state = gibbs_state(&mode);
        assert!((state.populations[0] - 0.5).abs() < 1e-15);
        assert!((state.populations[1] - 0.25).abs() < 1e-15);
        let trace: f64 = state.populations.iter().sum();
        assert!((trace - 1.0).abs() < 1e-12);
        let rho = state.density();
        let m = rho.matrix();
        assert!((0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].norm() == 0.0)));
    }

    #[test]
    fn gibbs_ground_state_limit() {
        let state = gibbs_state(&TruncatedMode::new(1.0, 1e6, 5).unwrap());
        assert_eq!(state.populations[0], 1.0);
        assert_eq!(state.partition_function, 1.0);
    }

    #[test]
    fn partition_function_geometric_series() {
        let z = TruncatedMode::new(2.0, 0.5, 1).unwrap().partition_function();
        // 1 + e^-1 + e^-2 + ... summed by brute force
        let brute: f64 = (0..200).map(|n| (-(n as f64)).exp()).sum();
        assert!((z - brute).abs() < 1e-13);
        assert!((z - 1.5819767068693265).abs() < 1e-13);
    }

    #[test]
    fn tail_cutoff_examples() {
        let r = truncation_for_tail(1.0, 1.0, (-5.0f64).exp()).unwrap();
        assert_eq!(r.n_max_used, 4);
        assert_eq!(truncation_for_tail(1.0, LN_2, 2f64.powi(-10)).unwrap().n_max_used, 9);
        assert_eq!(truncation_for_tail(3.0, 1.0, 0.999_999).unwrap().n_max_used, 1);
        let r = truncation_for_tail(2.0, 0.5, 1e-6).unwrap();
        assert_eq!(r.n_max_used, 13);
        assert!(r.achieved_mass >= 1.0 - 1e-6);
    }

    #[test]
    fn tail_rejects_bad_delta() {
        for delta in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(truncation_for_tail(1.0, 1.0, delta), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn degeneracy_check_examples() {
        let m1 = DegeneracyModel::new(1.0, 3.0).unwrap();
        let m2 = DegeneracyModel::new(2.0, 0.5).unwrap();
        let zero = degeneracy_conservation_check(&m1, &m2, 0.0, 0.0);
        assert!(zero.conserved);
        assert_eq!(zero.residual, 0.0);
        assert!(degeneracy_conservation_check(&m1, &m2, -2.0, 1.0).conserved);
        let bad = degeneracy_conservation_check(&m1, &m2, -1.0, 1.0);
        assert!(!bad.conserved);
        assert_eq!(bad.residual, 1.0);
    }

    #[test]
    fn bath_suite_examples() {
        let m1 = DegeneracyModel::new(1.0, 1.0).unwrap();
        let m2 = DegeneracyModel::new(2.0, 1.0).unwrap();
        let report = bath_property_suite(&m1, &m2, (40.0, 20.0), &[(0.0, 0.0), (0.3, 0.1)], None).unwrap();
        assert_eq!(report.samples[0].ratio, 1.0);
        assert!((report.samples[1].ratio - 0.5f64.exp()).abs() / 0.5f64.exp() < 1e-9);
        assert!(report.passed);

        let h1 = DegeneracyModel::new(0.5, 1.0).unwrap();
        let h2 = DegeneracyModel::new(1.0, 1.0).unwrap();
        let grid = ResonanceGrid {
            omega1: 2.0,
            omega2: 1.0,
        };
        let report = bath_property_suite(&h1, &h2, (10.0, 10.0), &[(0.2, 0.4)], Some(grid)).unwrap();
        let res = report.resonance.unwrap();
        assert_eq!(res.weighted_residual, 0.0);
        assert!(res.exchange_exists);
        assert!(report.passed);

        assert!(bath_property_suite(&m1, &m2, (1.0, 1.0), &[(2.0, 0.0)], None).is_err());
    }

    proptest! {
        #[test]
        fn gibbs_is_normalized_diagonal(omega in 0.05f64..5.0, beta in 0.05f64..5.0, n_max in 1usize..40) {
            let state = gibbs_state(&TruncatedMode::new(omega, beta, n_max).unwrap());
            let sum: f64 = state.populations.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(state.populations.iter().all(|&p| p >= 0.0));
            prop_assert!(state.populations.windows(2).all(|w| w[1] <= w[0]));
        }

        #[test]
        fn captured_mass_is_monotone_in_cutoff(omega in 0.05f64..5.0, beta in 0.05f64..5.0, n_max in 1usize..60) {
            let a = gibbs_state(&TruncatedMode::new(omega, beta, n_max).unwrap()).captured_mass;
            let b = gibbs_state(&TruncatedMode::new(omega, beta, n_max + 1).unwrap()).captured_mass;
            prop_assert!(b >= a);
        }

        #[test]
        fn tail_cutoff_is_minimal(omega in 0.1f64..4.0, beta in 0.1f64..4.0, log_delta in -14.0f64..-0.5) {
            let delta = 10f64.powf(log_delta);
            let r = truncation_for_tail(omega, beta, delta).unwrap();
            let x = omega * beta;
            prop_assert!((-(r.n_max_used as f64 + 1.0) * x).exp() <= delta * (1.0 + 1e-12));
            if r.n_max_used > 1 {
                prop_assert!((-(r.n_max_used as f64) * x).exp() > delta);
            }
        }

        // Weighted-energy conserving transfers keep d₁d₂ fixed.
        #[test]
        fn weighted_energy_conservation_keeps_degeneracy(
            beta1 in 0.1f64..3.0, beta2 in 0.1f64..3.0,
            e1 in 0.0f64..50.0, e2 in 0.0f64..50.0, de1 in -5.0f64..5.0,
        ) {
            let m1 = DegeneracyModel::new(beta1, 1.7).unwrap();
            let m2 = DegeneracyModel::new(beta2, 0.3).unwrap();
            let de2 = -beta1 * de1 / beta2;
            let before = m1.degeneracy(e1) * m2.degeneracy(e2);
            let after = m1.degeneracy(e1 + de1) * m2.degeneracy(e2 + de2);
            prop_assert!(((after - before) / before).abs() < 1e-9);
            prop_assert!(degeneracy_conservation_check(&m1, &m2, de1, de2).conserved);
        }
    }
}
