//! Two-level engine running between two bosonic baths at resonance
//! `β₁ω₁ = β₂ω₂`.
//!
//! The interaction couples every sector `|n, m, 0⟩` to `|n-1, m+1, 1⟩`, so a
//! full Rabi quarter-period `τ = π/(2g)` moves one hot quantum into the cold
//! bath and lifts the system by `a₁ - a₀ = ω₁ - ω₂`.

use serde::{Deserialize, Serialize};

pub use crate::cycle::{
    clausius_check, clausius_residual, default_time_grid, efficiency_and_power, speed_and_geodesic, BlockSector,
    ClausiusCheck, CycleReport, EfficiencyPower, SpeedDiagnostics,
};
use crate::cycle::{exchange_blocks, exchange_hamiltonian, ExchangeModel};
use crate::error::{Error, Result};
use crate::tensor::{Operator, SubsystemLayout, STRUCTURAL_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactEngineConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub g: f64,
    pub n_max1: usize,
    pub n_max2: usize,
    pub a0: f64,
    pub a1: f64,
}

impl CompactEngineConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        beta1: f64,
        beta2: f64,
        omega1: f64,
        omega2: f64,
        g: f64,
        n_max1: usize,
        n_max2: usize,
        a0: f64,
        a1: f64,
    ) -> Result<Self> {
        let cfg = Self {
            beta1,
            beta2,
            omega1,
            omega2,
            g,
            n_max1,
            n_max2,
            a0,
            a1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resonant configuration with `ω₂ = β₁ω₁/β₂` and `a₁ = a₀ + ω₁ - ω₂`.
    pub fn resonant(beta1: f64, beta2: f64, omega1: f64, g: f64, n_max1: usize, n_max2: usize) -> Result<Self> {
        let omega2 = beta1 * omega1 / beta2;
        Self::new(beta1, beta2, omega1, omega2, g, n_max1, n_max2, 0.0, omega1 - omega2)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("beta1", self.beta1)?;
        positive("beta2", self.beta2)?;
        positive("omega1", self.omega1)?;
        positive("omega2", self.omega2)?;
        positive("g", self.g)?;
        if self.beta1 >= self.beta2 {
            return Err(Error::NoGradient {
                beta1: self.beta1,
                beta2: self.beta2,
            });
        }
        let mismatch = (self.beta1 * self.omega1 - self.beta2 * self.omega2).abs();
        if mismatch > STRUCTURAL_TOL * (self.beta1 * self.omega1).max(1.0) {
            return Err(Error::Config(format!(
                "resonance beta1*omega1 = beta2*omega2 violated by {mismatch:e}"
            )));
        }
        if !(self.a1 > self.a0) {
            return Err(Error::Config(format!(
                "system levels need a1 > a0, got a0 = {}, a1 = {}",
                self.a0, self.a1
            )));
        }
        let gap = (self.a1 - self.a0) - (self.omega1 - self.omega2);
        if gap.abs() > STRUCTURAL_TOL * self.omega1.max(1.0) {
            return Err(Error::Config(format!(
                "system gap must equal omega1 - omega2 (off by {gap:e})"
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> SubsystemLayout {
        SubsystemLayout::new(vec![self.n_max1 + 1, self.n_max2 + 1, 2]).expect("nonzero factor dimensions")
    }

    pub fn tau(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 / self.g
    }

    pub fn carnot_efficiency(&self) -> f64 {
        1.0 - self.beta1 / self.beta2
    }

    /// `a₁ - a₀`.
    pub fn work_per_cycle(&self) -> f64 {
        self.a1 - self.a0
    }

    pub(crate) fn model(&self) -> Result<ExchangeModel> {
        let p1 = geometric(self.beta1 * self.omega1, self.n_max1);
        let p2 = geometric(self.beta2 * self.omega2, self.n_max2);
        ExchangeModel::new(
            (self.beta1, self.beta2),
            (self.omega1, self.omega2),
            (&p1, &p2),
            [self.a0, self.a1],
            self.g,
        )
    }

    /// `H_B1 + H_B2 + H_S` on the composite space.
    pub fn total_energy(&self) -> Result<Operator> {
        Ok(self.model()?.total_energy())
    }

    /// `β₁H_B1 + β₂H_B2` on the composite space.
    pub fn weighted_energy(&self) -> Result<Operator> {
        Ok(self.model()?.weighted_energy())
    }
}

/// Normalized Gibbs populations `∝ e^{-xn}` on `0..=n_max`.
pub(crate) fn geometric(x: f64, n_max: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..=n_max).map(|n| (-(n as f64) * x).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

pub fn enumerate_blocks(cfg: &CompactEngineConfig) -> Vec<BlockSector> {
    exchange_blocks(cfg.n_max1, cfg.n_max2)
}

pub fn build_interaction_hamiltonian(cfg: &CompactEngineConfig) -> Operator {
    exchange_hamiltonian(cfg.layout().total_dim(), &enumerate_blocks(cfg), cfg.g)
}

/// Runs one cycle from `γ_B1 ⊗ γ_B2 ⊗ |0⟩⟨0|`; `times` must contain `τ`.
pub fn evolve_cycle(cfg: &CompactEngineConfig, times: &[f64]) -> Result<CycleReport> {
    cfg.validate()?;
    cfg.model()?.run(times)
}

/// Battery level spacings of the two-battery bookkeeping, on the line
/// `β₁E_W1 + β₂E_W2 = (β₂ - β₁)a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BatterySplit {
    pub e_w1: f64,
    pub e_w2: f64,
    pub lambda: f64,
    pub w_ext: f64,
    pub q1: f64,
    pub q2: f64,
    pub eta: f64,
}

impl BatterySplit {
    /// Point on the constraint line without the gradient check; at
    /// `β₁ = β₂` the line collapses to `E_W1 = E_W2 = 0`.
    pub fn on_line(beta1: f64, beta2: f64, a: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Argument(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        if !(beta1 > 0.0 && beta2 > 0.0 && beta1.is_finite() && beta2.is_finite()) {
            return Err(Error::Argument(
                "inverse temperatures must be positive and finite".into(),
            ));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::Argument(format!(
                "gap parameter a must be non-negative, got {a}"
            )));
        }
        let rhs = (beta2 - beta1) * a;
        let e_w1 = lambda * rhs / beta1;
        let e_w2 = (1.0 - lambda) * rhs / beta2;
        let w_ext = e_w1 + e_w2;
        let (q1, eta) = if beta2 > beta1 {
            (w_ext * beta2 / (beta2 - beta1), 1.0 - beta1 / beta2)
        } else {
            (0.0, 0.0)
        };
        Ok(Self {
            e_w1,
            e_w2,
            lambda,
            w_ext,
            q1,
            q2: w_ext - q1,
            eta,
        })
    }

    /// `β₁E_W1 + β₂E_W2 - (β₂ - β₁)a`.
    pub fn constraint_residual(&self, beta1: f64, beta2: f64, a: f64) -> f64 {
        beta1 * self.e_w1 + beta2 * self.e_w2 - (beta2 - beta1) * a
    }
}

/// Splits the work `(β₂ - β₁)a` between the two batteries; `lambda = 0`
/// puts everything in the cold-side battery, `lambda = 1` in the hot one.
pub fn battery_split(beta1: f64, beta2: f64, a: f64, lambda: f64) -> Result<BatterySplit> {
    if beta1 >= beta2 {
        return Err(Error::NoGradient { beta1, beta2 });
    }
    BatterySplit::on_line(beta1, beta2, a, lambda)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2};

    use super::*;
    use crate::tensor::{partial_trace, DensityMatrix, Spectrum, StateVector, C64};
    use proptest::prelude::*;

    fn base() -> CompactEngineConfig {
        CompactEngineConfig::new(1.0, 2.0, 2.0, 1.0, 0.1, 4, 4, 0.0, 1.0).unwrap()
    }

    #[test]
    fn config_rejects_bad_inputs() {
        assert!(matches!(
            CompactEngineConfig::new(2.0, 2.0, 1.0, 1.0, 0.1, 2, 2, 0.0, 0.5),
            Err(Error::NoGradient { .. })
        ));
        assert!(CompactEngineConfig::new(1.0, 2.0, 2.0, 1.1, 0.1, 2, 2, 0.0, 0.9).is_err());
        assert!(CompactEngineConfig::new(1.0, 2.0, 2.0, 1.0, 0.1, 2, 2, 0.0, 0.5).is_err());
        assert!(CompactEngineConfig::new(1.0, 2.0, 2.0, 1.0, 0.0, 2, 2, 0.0, 1.0).is_err());
    }

    #[test]
    fn block_pairing() {
        let cfg = base();
        let blocks = enumerate_blocks(&cfg);
        let b = blocks.iter().find(|b| b.label == (3, 2)).unwrap();
        // |2, 3, 1⟩
        assert_eq!(b.target_index, Some((2 * 5 + 3) * 2 + 1));
        assert!(blocks.iter().filter(|b| b.label.0 == 0).all(|b| !b.coupled()));
        assert!(blocks.iter().filter(|b| b.label.1 == 4).all(|b| !b.coupled()));
        let mut targets: Vec<_> = blocks.iter().filter_map(|b| b.target_index).collect();
        let count = targets.len();
        targets.sort();
        targets.dedup();
        assert_eq!(targets.len(), count);
        assert_eq!(count, 4 * 4);

        let h = cfg.total_energy().unwrap();
        let w = cfg.weighted_energy().unwrap();
        for b in blocks.iter().filter(|b| b.coupled()) {
            let (s, t) = (b.source_index, b.target_index.unwrap());
            assert!((h.get(s, s) - h.get(t, t)).norm() <= 1e-12);
            assert!((w.get(s, s) - w.get(t, t)).norm() <= 1e-12);
        }
    }

    #[test]
    fn hamiltonian_structure() {
        let empty = CompactEngineConfig { n_max1: 0, ..base() };
        assert_eq!(build_interaction_hamiltonian(&empty).max_abs_entry(), 0.0);

        let single = CompactEngineConfig {
            n_max1: 1,
            n_max2: 1,
            ..base()
        };
        let h = build_interaction_hamiltonian(&single);
        // Only (1,0) is coupled: |1,0,0⟩ = 4 and |0,1,1⟩ = 3.
        assert!((h.get(3, 4) - C64::new(0.1, 0.0)).norm() < 1e-15);
        assert!((h.get(4, 3) - C64::new(0.1, 0.0)).norm() < 1e-15);
        let nonzero = h.matrix().iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);

        let cfg = base();
        let h = build_interaction_hamiltonian(&cfg);
        let spec = Spectrum::of(&h).unwrap();
        for e in spec.eigenvalues() {
            assert!([-0.1, 0.0, 0.1].iter().any(|v| (e - v).abs() < 1e-12), "{e}");
        }
        let ev = spec.eigenvalues();
        assert!((ev.iter().fold(0.0f64, |a, e| a.max(e.abs())) - cfg.g).abs() < 1e-12);
        let u = spec.propagator(3.7);
        assert!(crate::tensor::commutator_norm(&u, &cfg.total_energy().unwrap()).unwrap() <= 1e-10);
        assert!(crate::tensor::commutator_norm(&u, &cfg.weighted_energy().unwrap()).unwrap() <= 1e-10);
    }

    #[test]
    fn cycle_at_tau() {
        let cfg = base();
        let tau = cfg.tau();
        let r = evolve_cycle(&cfg, &default_time_grid(cfg.g, 101)).unwrap();
        assert!((r.tau - tau).abs() < 1e-15);
        assert!(r.amplitude_residual <= 1e-10);
        assert!(r.block_norm_residual <= 1e-12);
        assert!(r.entanglement_endpoint_max <= 1e-9);
        assert!(r.commutator_residual_energy <= 1e-10);
        assert!(r.commutator_residual_weighted <= 1e-10);
        assert!((r.q1 - 2.0).abs() < 1e-12 && (r.q2 + 1.0).abs() < 1e-12);
        assert!((r.w_ext - 1.0).abs() < 1e-12);
        assert!((r.eta - 0.5).abs() < 1e-12);
        assert!((r.final_populations[1] - r.success_weight).abs() < 1e-10);
        assert!((r.success_weight + r.boundary_weight() - 1.0).abs() < 1e-12);
        assert!(r.final_coherence < 1e-10);
        assert!(clausius_check(&r).passed);
        // Ensemble heats are the success-weighted single-quantum heats.
        assert!((r.q1_ensemble - 2.0 * r.success_weight).abs() < 1e-10);
        assert!((r.q2_ensemble + r.success_weight).abs() < 1e-10);
        assert!((r.w_ext_ensemble - r.success_weight).abs() < 1e-10);
        for w in r
            .entanglement_trace
            .iter()
            .filter(|(t, _)| *t > 0.0 && *t < tau * (1.0 - 1e-9))
        {
            assert!(w.1 > 0.0);
        }
    }

    #[test]
    fn missing_tau_is_rejected() {
        let cfg = base();
        assert!(matches!(evolve_cycle(&cfg, &[0.0, 1.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn quarter_period_is_maximally_entangled() {
        let cfg = CompactEngineConfig {
            n_max1: 1,
            n_max2: 1,
            ..base()
        };
        let t = FRAC_PI_4 / cfg.g;
        let spec = Spectrum::of(&build_interaction_hamiltonian(&cfg)).unwrap();
        let psi = spec.evolve(&StateVector::basis(8, 4).unwrap(), t).unwrap();
        let rho = partial_trace(&DensityMatrix::from_pure(&psi), &cfg.layout(), &[2]).unwrap();
        assert!((rho.get(0, 0).re - 0.5).abs() < 1e-12 && (rho.get(1, 1).re - 0.5).abs() < 1e-12);
        assert!(rho.get(0, 1).norm() < 1e-12);
        let s = crate::tensor::entanglement_entropy(&psi, &cfg.layout(), &[2]).unwrap();
        assert!((s - LN_2).abs() < 1e-12);

        let psi = spec
            .evolve(&StateVector::basis(8, 4).unwrap(), FRAC_PI_2 / cfg.g)
            .unwrap();
        assert!((psi.amplitude(3) - C64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn success_weight_geometric() {
        // β₁ω₁ = 1 with a cold cutoff deep enough that the boundary is negligible.
        let cfg = CompactEngineConfig::new(0.5, 1.0, 2.0, 1.0, 0.2, 30, 30, 0.0, 1.0).unwrap();
        let r = evolve_cycle(&cfg, &default_time_grid(cfg.g, 3)).unwrap();
        let p0 = -(-1.0f64).exp_m1();
        assert!((r.vacuum_weight - p0).abs() < 1e-12);
        assert!((r.success_weight - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn clausius_examples() {
        let cfg = base();
        let r = evolve_cycle(&cfg, &[0.0, cfg.tau()]).unwrap();
        assert!(clausius_check(&r).residual < 1e-12);

        let zero = CycleReport {
            q1: 0.0,
            q2: 0.0,
            clausius_residual: 0.0,
            ..r.clone()
        };
        assert_eq!(clausius_check(&zero).residual, 0.0);

        // ω₂ → ω₂(1 + 1e-3) breaks resonance; built without `new`.
        let off = CompactEngineConfig {
            omega2: 1.001,
            a1: 2.0 - 1.001,
            ..cfg
        };
        let r = off.model().unwrap().run(&[0.0, off.tau()]).unwrap();
        let expected = off.beta2 * 1.0 * 1e-3;
        assert!((clausius_check(&r).residual - expected).abs() < 1e-12);
        assert!(!clausius_check(&r).passed);
        assert!((clausius_residual(1.0, 2.0, 2.0, -1.001) - 2e-3).abs() < 1e-12);
    }

    #[test]
    fn efficiency_examples() {
        let cfg = base();
        let r = evolve_cycle(&cfg, &[0.0, cfg.tau()]).unwrap();
        let ep = efficiency_and_power(&r).unwrap();
        assert!((ep.eta - 0.5).abs() < 1e-12 && (ep.carnot - 0.5).abs() < 1e-15);
        assert!((ep.power - 2.0 * cfg.g * r.w_ext / std::f64::consts::PI).abs() < 1e-12);

        let unit = CompactEngineConfig { g: FRAC_PI_2, ..cfg };
        let r = evolve_cycle(&unit, &[0.0, unit.tau()]).unwrap();
        assert!((r.tau - 1.0).abs() < 1e-15);
        assert!((efficiency_and_power(&r).unwrap().power - r.w_ext).abs() < 1e-12);

        let idle = evolve_cycle(&cfg, &[0.0, cfg.tau()])
            .map(|r| CycleReport { q1: 0.0, ..r })
            .unwrap();
        assert!(matches!(efficiency_and_power(&idle), Err(Error::DegenerateCycle(_))));

        // Equal temperatures force ω₁ = ω₂: no work.
        let eq = CompactEngineConfig {
            beta1: 1.0,
            beta2: 1.0,
            omega1: 1.0,
            omega2: 1.0,
            a1: 1e-300,
            ..cfg
        };
        let r = eq.model().unwrap().run(&[0.0, eq.tau()]).unwrap();
        assert!(r.w_ext.abs() < 1e-12 && r.eta.abs() < 1e-12);
    }

    #[test]
    fn speed_examples() {
        let cfg = base();
        let tau = cfg.tau();
        let times = [0.0, tau / 2.0, tau];
        let r = evolve_cycle(&cfg, &times).unwrap();
        assert!((r.speed_trace[0].1 - cfg.g).abs() < 1e-12);
        assert!(r.distance_trace[0].1.abs() < 1e-15);
        assert!((r.distance_trace[1].1 - 0.25).abs() < 1e-12);
        assert!((r.distance_trace[2].1 - 0.5).abs() < 1e-12);
        let d = speed_and_geodesic(&r);
        assert!(d.max_speed_deviation <= 1e-9 && d.max_distance_deviation <= 1e-9 && d.distance_monotone);

        let r = evolve_cycle(&cfg, &default_time_grid(cfg.g, 401)).unwrap();
        assert!(speed_and_geodesic(&r).geodesic_residual < 1e-9);
    }

    #[test]
    fn battery_examples() {
        let s = battery_split(1.0, 2.0, 1.0, 0.0).unwrap();
        assert_eq!(
            (s.e_w1, s.e_w2, s.w_ext, s.q1, s.q2, s.eta),
            (0.0, 0.5, 0.5, 1.0, -0.5, 0.5)
        );
        let s = battery_split(1.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(
            (s.e_w1, s.e_w2, s.w_ext, s.q1, s.q2, s.eta),
            (1.0, 0.0, 1.0, 2.0, -1.0, 0.5)
        );
        assert!(matches!(
            battery_split(2.0, 2.0, 1.0, 0.5),
            Err(Error::NoGradient { .. })
        ));
        assert!(matches!(
            battery_split(3.0, 2.0, 1.0, 0.5),
            Err(Error::NoGradient { .. })
        ));
        let flat = BatterySplit::on_line(2.0, 2.0, 1.0, 0.3).unwrap();
        assert_eq!((flat.e_w1, flat.e_w2), (0.0, 0.0));
        assert!(battery_split(1.0, 2.0, 1.0, 1.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn battery_line_and_carnot(b1 in 0.1f64..5.0, gap in 0.01f64..5.0, a in 0.0f64..10.0, lambda in 0.0f64..=1.0) {
            let b2 = b1 + gap;
            let s = battery_split(b1, b2, a, lambda).unwrap();
            prop_assert!(s.constraint_residual(b1, b2, a).abs() <= 1e-12 * (1.0 + (b2 - b1) * a));
            prop_assert!(s.e_w1 >= 0.0 && s.e_w2 >= 0.0);
            prop_assert!((s.eta - (1.0 - b1 / b2)).abs() <= 1e-12);
            if s.q1 > 0.0 {
                prop_assert!((s.w_ext / s.q1 - s.eta).abs() <= 1e-9);
            }
        }

        #[test]
        fn carnot_independent_of_g_and_cutoffs(
            b1 in 0.2f64..2.0, ratio in 1.1f64..4.0, omega1 in 0.5f64..3.0,
            g in 0.01f64..2.0, n1 in 1usize..5, n2 in 1usize..5,
        ) {
            let cfg = CompactEngineConfig::resonant(b1, b1 * ratio, omega1, g, n1, n2).unwrap();
            let r = evolve_cycle(&cfg, &default_time_grid(g, 11)).unwrap();
            prop_assert!((r.eta - cfg.carnot_efficiency()).abs() <= 1e-9);
            prop_assert!((r.power - r.w_ext / r.tau).abs() <= 1e-12);
            prop_assert!(r.commutator_residual_energy <= 1e-10);
            prop_assert!(r.commutator_residual_weighted <= 1e-10);
            prop_assert!(r.block_norm_residual <= 1e-12);
            prop_assert!(clausius_check(&r).passed);
        }
    }
}
