//! Cavity engine: a Λ atom between two thermal cavities with
//! intensity-dependent couplings, and its two-level effective reduction.
//!
//! Atom levels are indexed `0, 1, 2` for `|1⟩, |2⟩, |3⟩`; composite states
//! `|n, m, a⟩` follow the `B1 ⊗ B2 ⊗ atom` ordering. The full model is
//! written in the interaction picture with respect to
//! `ω₁N₁ + ω₂N₂ + E₂|2⟩⟨2| + ω₁|3⟩⟨3|`, leaving `Δ|3⟩⟨3|` explicit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::compact::geometric;
use crate::cycle::{exchange_blocks, exchange_hamiltonian, CycleReport, ExchangeModel};
use crate::error::{Error, Result};
use crate::tensor::{Operator, Spectrum, SubsystemLayout, C64, STRUCTURAL_TOL};
use crate::thermal::{gibbs_state, TruncatedMode, DEFAULT_TAIL_DELTA};

pub const DEFAULT_MIN_DETUNING_RATIO: f64 = 20.0;

/// Smallest `Δ/g_k` accepted by the detuning sweep.
pub const SWEEP_MIN_RATIO: f64 = 5.0;

/// Time step bound for the dense sweep grid, in units of `1/Δ`.
const SWEEP_PHASE_STEP: f64 = 0.2;

/// Λ atom with `E₁ = 0 < E₂ < E₃`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaAtom {
    pub e2: f64,
    pub e3: f64,
}

impl LambdaAtom {
    pub fn new(e2: f64, e3: f64) -> Result<Self> {
        if !(e2 > 0.0 && e3 > e2 && e3.is_finite()) {
            return Err(Error::Config(format!(
                "atom levels need 0 < E2 < E3, got E2 = {e2}, E3 = {e3}"
            )));
        }
        Ok(Self { e2, e3 })
    }

    /// Atom with `ω₀ = E₂ = ω₁ - ω₂` and both transitions detuned by `delta`.
    pub fn resonant(omega1: f64, omega2: f64, delta: f64) -> Result<Self> {
        Self::new(omega1 - omega2, omega1 + delta)
    }

    /// `(E₃ - ω₁, E₃ - E₂ - ω₂)`.
    pub fn detunings(&self, omega1: f64, omega2: f64) -> (f64, f64) {
        (self.e3 - omega1, self.e3 - self.e2 - omega2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticsEngineConfig {
    pub bath1: TruncatedMode,
    pub bath2: TruncatedMode,
    pub atom: LambdaAtom,
    pub g1: f64,
    pub g2: f64,
    pub min_detuning_ratio: f64,
}

impl OpticsEngineConfig {
    pub fn new(
        bath1: TruncatedMode,
        bath2: TruncatedMode,
        atom: LambdaAtom,
        g1: f64,
        g2: f64,
        min_detuning_ratio: f64,
    ) -> Result<Self> {
        let cfg = Self {
            bath1,
            bath2,
            atom,
            g1,
            g2,
            min_detuning_ratio,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parameters given through the effective coupling: `g_k = g·ratio`,
    /// `Δ = g·ratio²` (so `g₁g₂/Δ = g` and `Δ/g_k = ratio`), and cutoffs
    /// chosen for a Gibbs tail below `tail_delta`.
    pub fn from_effective(
        (beta1, beta2): (f64, f64),
        (omega1, omega2): (f64, f64),
        g: f64,
        ratio: f64,
        tail_delta: f64,
    ) -> Result<Self> {
        if !(g > 0.0 && ratio > 0.0 && g.is_finite() && ratio.is_finite()) {
            return Err(Error::Config(format!(
                "g and the detuning ratio must be positive, got {g}, {ratio}"
            )));
        }
        if beta1 >= beta2 {
            return Err(Error::NoGradient { beta1, beta2 });
        }
        let bath1 = TruncatedMode::with_tail(omega1, beta1, tail_delta).map_err(config_error)?;
        let bath2 = TruncatedMode::with_tail(omega2, beta2, tail_delta).map_err(config_error)?;
        let atom = LambdaAtom::resonant(omega1, omega2, g * ratio * ratio)?;
        Self::new(
            bath1,
            bath2,
            atom,
            g * ratio,
            g * ratio,
            DEFAULT_MIN_DETUNING_RATIO.min(ratio),
        )
    }

    /// `β₁ = 0.5, β₂ = 1, ω₁ = 2, ω₂ = 1, g = 0.05, Δ/g_k = 40`, tail `1e-6`.
    pub fn standard() -> Self {
        Self::from_effective((0.5, 1.0), (2.0, 1.0), 0.05, 40.0, DEFAULT_TAIL_DELTA).expect("valid defaults")
    }

    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = (self.bath1, self.bath2);
        if b1.beta >= b2.beta {
            return Err(Error::NoGradient {
                beta1: b1.beta,
                beta2: b2.beta,
            });
        }
        let mismatch = (b1.beta * b1.omega - b2.beta * b2.omega).abs();
        if mismatch > STRUCTURAL_TOL * (b1.beta * b1.omega).max(1.0) {
            return Err(Error::Config(format!(
                "resonance beta1*omega1 = beta2*omega2 violated by {mismatch:e}"
            )));
        }
        LambdaAtom::new(self.atom.e2, self.atom.e3)?;
        let gap = self.atom.e2 - (b1.omega - b2.omega);
        if gap.abs() > STRUCTURAL_TOL * b1.omega.max(1.0) {
            return Err(Error::Config(format!(
                "omega0 = E2 must equal omega1 - omega2 (off by {gap:e})"
            )));
        }
        let (d1, d2) = self.atom.detunings(b1.omega, b2.omega);
        if (d1 - d2).abs() > STRUCTURAL_TOL * d1.abs().max(1.0) {
            return Err(Error::Config(format!(
                "transitions have different detunings {d1} and {d2}"
            )));
        }
        if !(d1 > 0.0) {
            return Err(Error::Config(format!("detuning must be positive, got {d1}")));
        }
        for (name, g) in [("g1", self.g1), ("g2", self.g2)] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative and finite, got {g}"
                )));
            }
            if g > 0.0 && d1 / g < self.min_detuning_ratio {
                return Err(Error::Config(format!(
                    "detuning ratio Delta/{name} = {} is below the minimum {}",
                    d1 / g,
                    self.min_detuning_ratio
                )));
            }
        }
        Ok(())
    }

    pub fn detuning(&self) -> f64 {
        self.atom.detunings(self.bath1.omega, self.bath2.omega).0
    }

    /// `g = g₁g₂/Δ`.
    pub fn effective_coupling(&self) -> f64 {
        self.g1 * self.g2 / self.detuning()
    }

    pub fn omega0(&self) -> f64 {
        self.atom.e2
    }

    pub fn tau(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 / self.effective_coupling()
    }

    pub fn carnot_efficiency(&self) -> f64 {
        1.0 - self.bath1.beta / self.bath2.beta
    }

    pub fn full_layout(&self) -> SubsystemLayout {
        SubsystemLayout::new(vec![self.bath1.dim(), self.bath2.dim(), 3]).expect("nonzero factor dimensions")
    }

    pub fn effective_layout(&self) -> SubsystemLayout {
        SubsystemLayout::new(vec![self.bath1.dim(), self.bath2.dim(), 2]).expect("nonzero factor dimensions")
    }

    /// Same engine with detuning `delta`, keeping `g` and `g₁/g₂` fixed.
    pub fn with_detuning(&self, delta: f64) -> Result<Self> {
        let g = self.effective_coupling();
        let (g1, g2) = if g > 0.0 {
            let asym = self.g1 / self.g2;
            ((g * delta * asym).sqrt(), (g * delta / asym).sqrt())
        } else {
            (self.g1, self.g2)
        };
        let atom = LambdaAtom::resonant(self.bath1.omega, self.bath2.omega, delta)?;
        Self::new(
            self.bath1,
            self.bath2,
            atom,
            g1,
            g2,
            self.min_detuning_ratio.min(SWEEP_MIN_RATIO),
        )
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) | Error::NoGradient { .. } => e,
        other => Error::Config(other.to_string()),
    }
}

/// Coupling tables `θ_k(n)`, `f_k(n)` for `n = 0..=n_max_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingProfile {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// `θ(n) = 1/√(n+1)`, `f(n) = (g_k²/Δ)·n`: every ladder element
    /// `θ(n-1)√n` equals one, so all sectors share one effective coupling.
    LadderMatched,
    /// `θ(0) = 0`, `θ(n) = 1/√n`, `f(n) = (g_k²/Δ)·θ²(n)`, read with the
    /// `⟨n-1|θ(N)a|n⟩ = θ(n-1)√n` convention.
    IntensityInverse,
}

impl CouplingProfile {
    pub fn new(theta1: Vec<f64>, theta2: Vec<f64>, f1: Vec<f64>, f2: Vec<f64>) -> Result<Self> {
        if theta1.len() != f1.len() || theta2.len() != f2.len() {
            return Err(Error::Shape(
                "theta and f tables of one mode must have equal length".into(),
            ));
        }
        if theta1
            .iter()
            .chain(&theta2)
            .chain(&f1)
            .chain(&f2)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Argument("profile tables must be finite".into()));
        }
        Ok(Self { theta1, theta2, f1, f2 })
    }

    pub fn of_kind(kind: ProfileKind, cfg: &OpticsEngineConfig) -> Self {
        match kind {
            ProfileKind::LadderMatched => Self::ladder_matched(cfg),
            ProfileKind::IntensityInverse => Self::intensity_inverse(cfg),
        }
    }

    pub fn ladder_matched(cfg: &OpticsEngineConfig) -> Self {
        let delta = cfg.detuning();
        let theta = |n_max: usize| (0..=n_max).map(|n| 1.0 / ((n + 1) as f64).sqrt()).collect::<Vec<_>>();
        let f = |g: f64, n_max: usize| (0..=n_max).map(|n| g * g / delta * n as f64).collect::<Vec<_>>();
        Self {
            theta1: theta(cfg.bath1.n_max),
            theta2: theta(cfg.bath2.n_max),
            f1: f(cfg.g1, cfg.bath1.n_max),
            f2: f(cfg.g2, cfg.bath2.n_max),
        }
    }

    pub fn intensity_inverse(cfg: &OpticsEngineConfig) -> Self {
        let delta = cfg.detuning();
        let theta = |n_max: usize| {
            (0..=n_max)
                .map(|n| if n == 0 { 0.0 } else { 1.0 / (n as f64).sqrt() })
                .collect::<Vec<_>>()
        };
        let f = |g: f64, n_max: usize| {
            (0..=n_max)
                .map(|n| if n == 0 { 0.0 } else { g * g / delta / n as f64 })
                .collect::<Vec<_>>()
        };
        Self {
            theta1: theta(cfg.bath1.n_max),
            theta2: theta(cfg.bath2.n_max),
            f1: f(cfg.g1, cfg.bath1.n_max),
            f2: f(cfg.g2, cfg.bath2.n_max),
        }
    }

    fn check(&self, cfg: &OpticsEngineConfig) -> Result<()> {
        if self.theta1.len() != cfg.bath1.dim() || self.theta2.len() != cfg.bath2.dim() {
            return Err(Error::Shape(format!(
                "profile tables of length ({}, {}) do not match cutoffs ({}, {})",
                self.theta1.len(),
                self.theta2.len(),
                cfg.bath1.n_max,
                cfg.bath2.n_max
            )));
        }
        if self.f1.len() != self.theta1.len() || self.f2.len() != self.theta2.len() {
            return Err(Error::Shape(
                "theta and f tables of one mode must have equal length".into(),
            ));
        }
        Ok(())
    }

    /// `max(|θ_k(0)|, max_{n≥1} |f_k(n) - (g_k²/Δ)θ_k²(n)|)`: zero for the
    /// intensity-inverse profile.
    pub fn regularization_residual(&self, cfg: &OpticsEngineConfig) -> f64 {
        let delta = cfg.detuning();
        let one = |theta: &[f64], f: &[f64], g: f64| {
            let tail = (1..theta.len()).map(|n| (f[n] - g * g / delta * theta[n] * theta[n]).abs());
            tail.fold(theta[0].abs(), f64::max)
        };
        one(&self.theta1, &self.f1, cfg.g1).max(one(&self.theta2, &self.f2, cfg.g2))
    }
}

fn full_matrix(cfg: &OpticsEngineConfig, profile: &CouplingProfile, lab: bool) -> Result<Operator> {
    cfg.validate()?;
    profile.check(cfg)?;
    let (n1, n2) = (cfg.bath1.n_max, cfg.bath2.n_max);
    let dim = cfg.full_layout().total_dim();
    let idx = |n: usize, m: usize, a: usize| (n * (n2 + 1) + m) * 3 + a;
    let delta = cfg.detuning();
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    for n in 0..=n1 {
        for m in 0..=n2 {
            let shift = profile.f1[n] + profile.f2[m];
            let bare = if lab {
                [0.0, cfg.atom.e2, cfg.atom.e3]
            } else {
                [0.0, 0.0, delta]
            };
            let ladder = if lab {
                n as f64 * cfg.bath1.omega + m as f64 * cfg.bath2.omega
            } else {
                0.0
            };
            for a in 0..3 {
                h[(idx(n, m, a), idx(n, m, a))] = C64::new(ladder + shift + bare[a], 0.0);
            }
            // g₁θ₁(N₁)a₁σ₃₁: |n, m, 1⟩ → |n-1, m, 3⟩
            if n >= 1 {
                let c = C64::new(cfg.g1 * profile.theta1[n - 1] * (n as f64).sqrt(), 0.0);
                h[(idx(n - 1, m, 2), idx(n, m, 0))] = c;
                h[(idx(n, m, 0), idx(n - 1, m, 2))] = c;
            }
            // g₂θ₂(N₂)a₂σ₃₂: |n, m, 2⟩ → |n, m-1, 3⟩
            if m >= 1 {
                let c = C64::new(cfg.g2 * profile.theta2[m - 1] * (m as f64).sqrt(), 0.0);
                h[(idx(n, m - 1, 2), idx(n, m, 1))] = c;
                h[(idx(n, m, 1), idx(n, m - 1, 2))] = c;
            }
        }
    }
    Operator::hermitian(h)
}

/// Full three-level Hamiltonian in the interaction picture.
pub fn build_full_hamiltonian(cfg: &OpticsEngineConfig, profile: &CouplingProfile) -> Result<Operator> {
    full_matrix(cfg, profile, false)
}

/// Full three-level Hamiltonian including the free part.
pub fn build_lab_hamiltonian(cfg: &OpticsEngineConfig, profile: &CouplingProfile) -> Result<Operator> {
    full_matrix(cfg, profile, true)
}

/// The free part `ω₁N₁ + ω₂N₂ + E₂|2⟩⟨2| + ω₁|3⟩⟨3|` removed by the
/// interaction picture.
pub fn interaction_frame_generator(cfg: &OpticsEngineConfig) -> Operator {
    let (n1, n2) = (cfg.bath1.n_max, cfg.bath2.n_max);
    let mut d = Vec::with_capacity(cfg.full_layout().total_dim());
    for n in 0..=n1 {
        for m in 0..=n2 {
            let ladder = n as f64 * cfg.bath1.omega + m as f64 * cfg.bath2.omega;
            d.extend([ladder, ladder + cfg.atom.e2, ladder + cfg.bath1.omega]);
        }
    }
    Operator::from_real_diagonal(&d)
}

/// `g Σ (|n-1, m+1, 2⟩⟨n, m, 1| + h.c.)` on `B1 ⊗ B2 ⊗ {|1⟩, |2⟩}`.
pub fn build_effective_hamiltonian(cfg: &OpticsEngineConfig) -> Operator {
    let blocks = exchange_blocks(cfg.bath1.n_max, cfg.bath2.n_max);
    exchange_hamiltonian(cfg.effective_layout().total_dim(), &blocks, cfg.effective_coupling())
}

fn exchange_model(cfg: &OpticsEngineConfig) -> Result<ExchangeModel> {
    let p1 = gibbs_state(&cfg.bath1).populations;
    let p2 = gibbs_state(&cfg.bath2).populations;
    ExchangeModel::new(
        (cfg.bath1.beta, cfg.bath2.beta),
        (cfg.bath1.omega, cfg.bath2.omega),
        (&p1, &p2),
        [0.0, cfg.omega0()],
        cfg.effective_coupling(),
    )
}

/// One cycle of the effective model from `γ_B1 ⊗ γ_B2 ⊗ |1⟩⟨1|`.
/// `pop1`/`pop2` of the series are the atom populations of `|1⟩`/`|2⟩`.
pub fn run_optics_cycle(cfg: &OpticsEngineConfig, times: &[f64]) -> Result<CycleReport> {
    cfg.validate()?;
    if !(cfg.effective_coupling() > 0.0) {
        return Err(Error::DegenerateCycle("effective coupling g1*g2/Delta is zero".into()));
    }
    exchange_model(cfg)?.run(times)
}

/// `β₁H_B1 + β₂H_B2` and `H_B1 + H_B2 + H_S'` of the effective model.
pub fn effective_conserved_quantities(cfg: &OpticsEngineConfig) -> Result<(Operator, Operator)> {
    let model = exchange_model(cfg)?;
    Ok((model.total_energy(), model.weighted_energy()))
}

/// `1/Z_B1` for the untruncated hot cavity.
pub fn vacuum_probability(cfg: &OpticsEngineConfig) -> f64 {
    1.0 / cfg.bath1.partition_function()
}

/// Full vs effective dynamics from `γ_B1 ⊗ γ_B2 ⊗ |1⟩⟨1|` on `[0, window]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelComparison {
    pub delta: f64,
    pub g1: f64,
    pub g2: f64,
    /// `Δ / max(g₁, g₂)`; infinite without coupling.
    pub ratio: f64,
    pub window: f64,
    pub samples: usize,
    /// `max_t max(|P₁ᶠ - P₁ᵉ|, |P₂ᶠ - P₂ᵉ|)`.
    pub population_deviation: f64,
    /// `max_t P₃ᶠ`.
    pub leaked_population: f64,
    /// `max_t |P₁ + P₂ + P₃ - 1|` of the full model.
    pub norm_residual: f64,
    pub final_full: [f64; 3],
    pub final_effective: [f64; 2],
}

/// Compares the two models on a grid with `Δ·dt ≤ 0.2` over one cycle
/// (or over `100/Δ` when there is no coupling).
pub fn compare_models(cfg: &OpticsEngineConfig, profile: &CouplingProfile) -> Result<ModelComparison> {
    let full = Spectrum::of(&build_full_hamiltonian(cfg, profile)?)?;
    let eff = Spectrum::of(&build_effective_hamiltonian(cfg))?;
    let delta = cfg.detuning();
    let g = cfg.effective_coupling();
    let window = if g > 0.0 { cfg.tau() } else { 100.0 / delta };
    let fast = delta.max(cfg.g1).max(cfg.g2);
    let samples = ((fast * window / SWEEP_PHASE_STEP).ceil() as usize).max(200) + 1;

    let p1 = geometric(cfg.bath1.boltzmann_exponent(), cfg.bath1.n_max);
    let p2 = geometric(cfg.bath2.boltzmann_exponent(), cfg.bath2.n_max);
    let n2 = cfg.bath2.n_max;
    let mut init_full = Vec::new();
    let mut init_eff = Vec::new();
    for (n, a) in p1.iter().enumerate() {
        for (m, b) in p2.iter().enumerate() {
            if a * b > 0.0 {
                init_full.push(((n * (n2 + 1) + m) * 3, a * b));
                init_eff.push(((n * (n2 + 1) + m) * 2, a * b));
            }
        }
    }

    let mut pf = vec![0.0; full.dim()];
    let mut pe = vec![0.0; eff.dim()];
    let mut out = ModelComparison {
        delta,
        g1: cfg.g1,
        g2: cfg.g2,
        ratio: delta / cfg.g1.max(cfg.g2),
        window,
        samples,
        population_deviation: 0.0,
        leaked_population: 0.0,
        norm_residual: 0.0,
        final_full: [0.0; 3],
        final_effective: [0.0; 2],
    };
    for k in 0..samples {
        let t = window * k as f64 / (samples - 1) as f64;
        pf.iter_mut().for_each(|v| *v = 0.0);
        pe.iter_mut().for_each(|v| *v = 0.0);
        full.accumulate_populations(&init_full, t, &mut pf);
        eff.accumulate_populations(&init_eff, t, &mut pe);
        let f: [f64; 3] = std::array::from_fn(|a| pf.iter().skip(a).step_by(3).sum());
        let e: [f64; 2] = std::array::from_fn(|a| pe.iter().skip(a).step_by(2).sum());
        out.population_deviation = out
            .population_deviation
            .max((f[0] - e[0]).abs())
            .max((f[1] - e[1]).abs());
        out.leaked_population = out.leaked_population.max(f[2]);
        out.norm_residual = out.norm_residual.max((f[0] + f[1] + f[2] - 1.0).abs());
        if k + 1 == samples {
            out.final_full = f;
            out.final_effective = e;
        }
    }
    Ok(out)
}

/// Result of a detuning sweep at fixed effective coupling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetuningSweep {
    pub points: Vec<ModelComparison>,
    /// Log–log slope of the population deviation against `Δ`.
    pub deviation_slope: Option<f64>,
    /// Log–log slope of the leaked population against `Δ`.
    pub leak_slope_vs_delta: Option<f64>,
    /// Log–log slope of the leaked population against `Δ/g_k`.
    pub leak_slope_vs_ratio: Option<f64>,
    pub deviation_monotone: bool,
}

/// Runs [`compare_models`] for each detuning, rescaling `g₁, g₂` so that
/// `g₁g₂/Δ` stays at its configured value.
pub fn adiabatic_elimination_error(
    cfg: &OpticsEngineConfig,
    kind: ProfileKind,
    deltas: &[f64],
) -> Result<DetuningSweep> {
    let mut points = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Argument(format!("detuning must be positive, got {delta}")));
        }
        let scaled = cfg.with_detuning(delta).map_err(|e| match e {
            Error::Config(msg) if msg.contains("detuning ratio") => Error::Precondition(msg),
            other => other,
        })?;
        let profile = CouplingProfile::of_kind(kind, &scaled);
        points.push(compare_models(&scaled, &profile)?);
    }
    let slope = |xs: Vec<f64>, ys: Vec<f64>| log_log_slope(&xs, &ys);
    let deviation_slope = slope(
        points.iter().map(|p| p.delta).collect(),
        points.iter().map(|p| p.population_deviation).collect(),
    );
    let leak_slope_vs_delta = slope(
        points.iter().map(|p| p.delta).collect(),
        points.iter().map(|p| p.leaked_population).collect(),
    );
    let leak_slope_vs_ratio = slope(
        points.iter().map(|p| p.ratio).collect(),
        points.iter().map(|p| p.leaked_population).collect(),
    );
    let mut sorted: Vec<&ModelComparison> = points.iter().collect();
    sorted.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let deviation_monotone = sorted
        .windows(2)
        .all(|w| w[1].population_deviation < w[0].population_deviation);
    Ok(DetuningSweep {
        points,
        deviation_slope,
        leak_slope_vs_delta,
        leak_slope_vs_ratio,
        deviation_monotone,
    })
}

/// Least-squares slope of `ln y` against `ln x`; `None` with fewer than two
/// usable points.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Work bookkeeping for the extraction cavity, which is not simulated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WorkRecord {
    pub work_per_success: f64,
    pub excited_population: f64,
    pub expected_work: f64,
    pub eta: f64,
}

pub fn stimulated_emission_bookkeeping(report: &CycleReport) -> WorkRecord {
    let p2 = report.final_populations[1];
    WorkRecord {
        work_per_success: report.w_ext,
        excited_population: p2,
        expected_work: p2 * report.w_ext,
        eta: report.eta,
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use super::*;
    use crate::compact::{evolve_cycle, CompactEngineConfig};
    use crate::cycle::default_time_grid;
    use crate::tensor::{commutator_norm, StateVector};

    fn small() -> OpticsEngineConfig {
        let b1 = TruncatedMode::new(2.0, 0.5, 4).unwrap();
        let b2 = TruncatedMode::new(1.0, 1.0, 4).unwrap();
        OpticsEngineConfig::new(b1, b2, LambdaAtom::resonant(2.0, 1.0, 8.0).unwrap(), 0.4, 0.4, 20.0).unwrap()
    }

    #[test]
    fn config_validation() {
        let cfg = small();
        assert!((cfg.effective_coupling() - 0.02).abs() < 1e-15);
        let hot = TruncatedMode::new(1.0, 1.0, 3).unwrap();
        assert!(matches!(
            OpticsEngineConfig::new(hot, hot, LambdaAtom::new(0.5, 3.0).unwrap(), 0.1, 0.1, 20.0),
            Err(Error::NoGradient { .. })
        ));
        let off = LambdaAtom::new(1.2, 10.0).unwrap();
        assert!(OpticsEngineConfig::new(cfg.bath1, cfg.bath2, off, 0.1, 0.1, 20.0).is_err());
        assert!(OpticsEngineConfig::new(cfg.bath1, cfg.bath2, cfg.atom, 1.0, 0.1, 20.0).is_err());
        assert!(LambdaAtom::new(2.0, 1.0).is_err());
        let std = OpticsEngineConfig::standard();
        assert_eq!((std.bath1.n_max, std.bath2.n_max), (13, 13));
        assert!((std.detuning() - 80.0).abs() < 1e-12 && (std.g1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_hamiltonian_examples() {
        let cfg = OpticsEngineConfig {
            g1: 0.0,
            g2: 0.0,
            ..small()
        };
        let h = build_full_hamiltonian(&cfg, &CouplingProfile::intensity_inverse(&cfg)).unwrap();
        assert!(h.is_diagonal());

        let cfg = small();
        let prof = CouplingProfile::intensity_inverse(&cfg);
        assert!(prof.regularization_residual(&cfg) < 1e-15);
        let h = build_full_hamiltonian(&cfg, &prof).unwrap();
        let idx = |n: usize, m: usize, a: usize| (n * 5 + m) * 3 + a;
        // a|0⟩ = 0: nothing leaves |0, 0, 1⟩.
        for j in 0..h.dim() {
            if j != idx(0, 0, 0) {
                assert_eq!(h.get(j, idx(0, 0, 0)), C64::new(0.0, 0.0));
            }
        }
        // ⟨0|θ(N)a|1⟩ = θ(0)·1 = 0 and ⟨1|θ(N)a|2⟩ = θ(1)√2 = √2.
        assert_eq!(h.get(idx(0, 0, 2), idx(1, 0, 0)), C64::new(0.0, 0.0));
        assert!((h.get(idx(1, 0, 2), idx(2, 0, 0)).re - 0.4 * 2f64.sqrt()).abs() < 1e-15);

        let ladder = CouplingProfile::ladder_matched(&cfg);
        let h = build_full_hamiltonian(&cfg, &ladder).unwrap();
        for n in 1..=4 {
            assert!((h.get(idx(n - 1, 0, 2), idx(n, 0, 0)).re - 0.4).abs() < 1e-15);
        }

        let short = CouplingProfile::new(vec![0.0; 3], vec![0.0; 5], vec![0.0; 3], vec![0.0; 5]).unwrap();
        assert!(matches!(build_full_hamiltonian(&cfg, &short), Err(Error::Shape(_))));
    }

    #[test]
    fn lab_and_interaction_frames_agree() {
        let cfg = small();
        let prof = CouplingProfile::ladder_matched(&cfg);
        let lab = build_lab_hamiltonian(&cfg, &prof).unwrap();
        let rot = build_full_hamiltonian(&cfg, &prof).unwrap();
        let h0 = interaction_frame_generator(&cfg);
        assert!(commutator_norm(&rot, &h0).unwrap() < 1e-12);
        let diff = lab.combine(1.0, &rot, -1.0).unwrap();
        let diff = diff.combine(1.0, &h0, -1.0).unwrap();
        assert!(diff.max_abs_entry() < 1e-12);
    }

    #[test]
    fn effective_hamiltonian_examples() {
        let cfg = small();
        let h = build_effective_hamiltonian(&cfg);
        let idx = |n: usize, m: usize, a: usize| (n * 5 + m) * 2 + a;
        assert!((h.get(idx(0, 1, 1), idx(1, 0, 0)).re - 0.02).abs() < 1e-15);
        for m in 0..5 {
            for j in 0..h.dim() {
                assert_eq!(h.get(j, idx(0, m, 0)), C64::new(0.0, 0.0));
            }
        }
        let spec = Spectrum::of(&h).unwrap();
        for e in spec.eigenvalues() {
            assert!([-0.02, 0.0, 0.02].iter().any(|v| (e - v).abs() < 1e-12));
        }
        let psi = StateVector::basis(h.dim(), idx(1, 0, 0)).unwrap();
        let out = spec.evolve(&psi, FRAC_PI_4 / 0.02).unwrap();
        let (c, s) = (FRAC_PI_4.cos(), FRAC_PI_4.sin());
        assert!((out.amplitude(idx(1, 0, 0)) - C64::new(c, 0.0)).norm() < 1e-12);
        assert!((out.amplitude(idx(0, 1, 1)) - C64::new(0.0, -s)).norm() < 1e-12);
    }

    #[test]
    fn cycle_final_state_and_bookkeeping() {
        let cfg = OpticsEngineConfig::standard();
        let r = run_optics_cycle(&cfg, &default_time_grid(cfg.effective_coupling(), 101)).unwrap();
        let z = vacuum_probability(&cfg);
        assert!((r.final_populations[0] - r.truncation_weight - z).abs() < 1e-6);
        assert!((r.final_populations[1] + r.truncation_weight - (1.0 - z)).abs() < 1e-6);
        assert!(r.final_coherence < 1e-10);
        assert!(r.commutator_residual_energy <= 1e-10 && r.commutator_residual_weighted <= 1e-10);
        assert!(r.unitarity_residual <= 1e-10);
        assert!((r.eta - 0.5).abs() < 1e-12 && (r.w_ext - 1.0).abs() < 1e-12);
        assert!((r.power - 2.0 * 0.05 / std::f64::consts::PI).abs() < 1e-12);

        let w = stimulated_emission_bookkeeping(&r);
        assert_eq!(w.work_per_success, r.w_ext);
        assert!((w.expected_work - r.final_populations[1]).abs() < 1e-15);
        let idle = CycleReport {
            final_populations: [1.0, 0.0],
            ..r.clone()
        };
        assert_eq!(stimulated_emission_bookkeeping(&idle).expected_work, 0.0);
        let full = CycleReport {
            final_populations: [0.0, 1.0],
            ..r
        };
        let w = stimulated_emission_bookkeeping(&full);
        assert!((w.expected_work - 1.0).abs() < 1e-12);
        assert!((w.eta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hotter_bath_excites_the_atom_more() {
        // P(|2⟩) plus the boundary weight equals 1 - 1/Z_B1, which tends to 1 as β₁ → 0.
        let mut last = 0.0;
        for beta1 in [1.0, 0.5, 0.25] {
            let cfg = OpticsEngineConfig::from_effective((beta1, 2.0 * beta1), (2.0, 1.0), 0.05, 40.0, 1e-4).unwrap();
            let r = run_optics_cycle(&cfg, &[0.0, cfg.tau()]).unwrap();
            let excited = r.final_populations[1] + r.truncation_weight;
            assert!((excited - (1.0 - vacuum_probability(&cfg))).abs() < 1e-4);
            assert!(excited > last);
            last = excited;
        }
        assert!(last > 0.39);
    }

    #[test]
    fn matches_compact_engine() {
        let cfg = small();
        let g = cfg.effective_coupling();
        let times = default_time_grid(g, 11);
        let r = run_optics_cycle(&cfg, &times).unwrap();
        let c = CompactEngineConfig::new(0.5, 1.0, 2.0, 1.0, g, 4, 4, 0.0, 1.0).unwrap();
        let rc = evolve_cycle(&c, &times).unwrap();
        assert!((r.eta - rc.eta).abs() < 1e-10);
        assert!((r.tau - rc.tau).abs() < 1e-10);
        assert!((r.power - rc.power).abs() < 1e-10);
    }

    #[test]
    fn missing_tau_and_zero_coupling() {
        let cfg = small();
        assert!(matches!(run_optics_cycle(&cfg, &[0.0, 1.0]), Err(Error::Argument(_))));
        let off = OpticsEngineConfig { g1: 0.0, ..cfg };
        assert!(matches!(run_optics_cycle(&off, &[0.0]), Err(Error::DegenerateCycle(_))));
    }

    #[test]
    fn sweep_without_coupling_is_exact() {
        let cfg = OpticsEngineConfig {
            g1: 0.0,
            g2: 0.0,
            ..small()
        };
        let sweep = adiabatic_elimination_error(&cfg, ProfileKind::LadderMatched, &[8.0, 16.0]).unwrap();
        for p in &sweep.points {
            assert!(p.population_deviation <= 1e-10 && p.leaked_population <= 1e-10);
        }
    }

    #[test]
    fn sweep_precondition() {
        let cfg = small();
        // Δ = 0.08 would need g_k = 0.04, ratio 2.
        assert!(matches!(
            adiabatic_elimination_error(&cfg, ProfileKind::LadderMatched, &[0.08]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn sweep_shrinks_with_detuning() {
        let b1 = TruncatedMode::new(2.0, 0.5, 3).unwrap();
        let b2 = TruncatedMode::new(1.0, 1.0, 3).unwrap();
        let g = 0.05;
        let cfg = OpticsEngineConfig::new(
            b1,
            b2,
            LambdaAtom::resonant(2.0, 1.0, g * 400.0).unwrap(),
            g * 20.0,
            g * 20.0,
            20.0,
        )
        .unwrap();
        let deltas: Vec<f64> = [20.0, 40.0].iter().map(|r| g * r * r).collect();
        let s = adiabatic_elimination_error(&cfg, ProfileKind::LadderMatched, &deltas).unwrap();
        assert!(s.deviation_monotone);
        let ratio = s.points[0].leaked_population / s.points[1].leaked_population;
        assert!((3.0..5.0).contains(&ratio), "leak ratio {ratio}");
        for p in &s.points {
            assert!(p.norm_residual < 1e-10);
        }
    }

    #[test]
    fn slope_fit() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_none());
    }
}
