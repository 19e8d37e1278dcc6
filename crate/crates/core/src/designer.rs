//! Monte Carlo fit of an anharmonic potential `V(y)` and mode function
//! `b(y)` whose Fock matrix elements reproduce target coupling tables.
//!
//! With `X = (a + a†)/√2`, the fitted tables are `f(n) = ⟨n|V(X)|n⟩` and
//! `θ(n-1) = ⟨n-1|b(X)|n⟩/√n`. Both are linear in the polynomial
//! coefficients, so the matrix elements of every monomial are computed once.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{compare_models, CouplingProfile, ModelComparison, OpticsEngineConfig};

pub const DEFAULT_V_DEGREE: usize = 8;
pub const DEFAULT_B_DEGREE: usize = 7;
pub const DEFAULT_Q: f64 = 4.0;

/// Even `V` (degrees 2, 4, ..) and odd `b` (degrees 1, 3, ..).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialAnsatz {
    /// Coefficient of `y^(2k+2)` at index `k`.
    pub v_coeffs: Vec<f64>,
    /// Coefficient of `y^(2k+1)` at index `k`.
    pub b_coeffs: Vec<f64>,
}

impl PotentialAnsatz {
    pub fn new(v_coeffs: Vec<f64>, b_coeffs: Vec<f64>) -> Result<Self> {
        if v_coeffs.is_empty() || b_coeffs.is_empty() {
            return Err(Error::Argument(
                "ansatz needs at least one V and one b coefficient".into(),
            ));
        }
        if v_coeffs.iter().chain(&b_coeffs).any(|c| !c.is_finite()) {
            return Err(Error::Argument("ansatz coefficients must be finite".into()));
        }
        Ok(Self { v_coeffs, b_coeffs })
    }

    /// All-zero ansatz with the given maximal degrees.
    pub fn zeros(v_degree: usize, b_degree: usize) -> Result<Self> {
        if v_degree < 2 || v_degree % 2 != 0 || b_degree < 1 || b_degree % 2 != 1 {
            return Err(Error::Argument(format!(
                "V degree must be even >= 2 and b degree odd >= 1, got {v_degree} and {b_degree}"
            )));
        }
        Ok(Self {
            v_coeffs: vec![0.0; v_degree / 2],
            b_coeffs: vec![0.0; b_degree.div_ceil(2)],
        })
    }

    pub fn v_degree(&self) -> usize {
        2 * self.v_coeffs.len()
    }

    pub fn b_degree(&self) -> usize {
        2 * self.b_coeffs.len() - 1
    }

    pub fn max_degree(&self) -> usize {
        self.v_degree().max(self.b_degree())
    }

    pub fn len(&self) -> usize {
        self.v_coeffs.len() + self.b_coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coeff_mut(&mut self, k: usize) -> &mut f64 {
        let nv = self.v_coeffs.len();
        if k < nv {
            &mut self.v_coeffs[k]
        } else {
            &mut self.b_coeffs[k - nv]
        }
    }

    /// `V(y)` evaluated on a scalar.
    pub fn v(&self, y: f64) -> f64 {
        self.v_coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * y.powi(2 * k as i32 + 2))
            .sum()
    }

    /// `b(y)` evaluated on a scalar.
    pub fn b(&self, y: f64) -> f64 {
        self.b_coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * y.powi(2 * k as i32 + 1))
            .sum()
    }
}

/// Smallest workspace cutoff at which the tables on `0..=n_fit` are exact
/// for polynomials up to `degree`.
pub fn exact_workspace(n_fit: usize, degree: usize) -> usize {
    n_fit + 1 + degree.div_ceil(2)
}

/// Default workspace `N_fit + max(D_V, D_b) + 2`.
pub fn default_workspace(n_fit: usize, ansatz: &PotentialAnsatz) -> usize {
    n_fit + ansatz.max_degree() + 2
}

/// Tables `f(n)`, `θ(n)` for `n = 0..=n_fit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockTables {
    pub f: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Matrix elements of `X^k` needed by the tables, precomputed per degree.
#[derive(Clone, Debug)]
struct MonomialTables {
    /// `⟨n|X^(2k+2)|n⟩`, `n = 0..=n_fit`.
    diag: Vec<Vec<f64>>,
    /// `⟨n|X^(2k+1)|n+1⟩/√(n+1)`, `n = 0..=n_fit`.
    off: Vec<Vec<f64>>,
}

impl MonomialTables {
    fn new(n_v: usize, n_b: usize, n_fit: usize, n_work: usize) -> Self {
        let dim = n_work + 1;
        let x = DMatrix::<f64>::from_fn(dim, dim, |i, j| {
            if j == i + 1 {
                (j as f64 / 2.0).sqrt()
            } else if i == j + 1 {
                (i as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let top = (2 * n_v).max(2 * n_b - 1);
        let mut power = DMatrix::<f64>::identity(dim, dim);
        let mut diag = Vec::with_capacity(n_v);
        let mut off = Vec::with_capacity(n_b);
        for d in 1..=top {
            power = &power * &x;
            if d % 2 == 0 && d / 2 <= n_v {
                diag.push((0..=n_fit).map(|n| power[(n, n)]).collect());
            } else if d % 2 == 1 && d.div_ceil(2) <= n_b {
                off.push(
                    (0..=n_fit)
                        .map(|n| power[(n, n + 1)] / ((n + 1) as f64).sqrt())
                        .collect(),
                );
            }
        }
        Self { diag, off }
    }

    fn tables(&self, ansatz: &PotentialAnsatz) -> FockTables {
        let n = self.diag[0].len();
        let mut f = vec![0.0; n];
        let mut theta = vec![0.0; n];
        for (c, col) in ansatz.v_coeffs.iter().zip(&self.diag) {
            for (out, v) in f.iter_mut().zip(col) {
                *out += c * v;
            }
        }
        for (c, col) in ansatz.b_coeffs.iter().zip(&self.off) {
            for (out, v) in theta.iter_mut().zip(col) {
                *out += c * v;
            }
        }
        FockTables { f, theta }
    }
}

/// `f(n) = ⟨n|V(X)|n⟩` and `θ(n) = ⟨n|b(X)|n+1⟩/√(n+1)` for `n = 0..=n_fit`,
/// computed in a Fock space truncated at `n_work`.
pub fn fock_matrix_elements(ansatz: &PotentialAnsatz, n_fit: usize, n_work: usize) -> Result<FockTables> {
    let need = exact_workspace(n_fit, ansatz.max_degree());
    if n_work < need.max(2) {
        return Err(Error::Precondition(format!(
            "Fock workspace {n_work} is too small for fit cutoff {n_fit} and degree {} (need {need})",
            ansatz.max_degree()
        )));
    }
    Ok(MonomialTables::new(ansatz.v_coeffs.len(), ansatz.b_coeffs.len(), n_fit, n_work).tables(ansatz))
}

/// Target tables on `n = 1..=n_fit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignTargets {
    pub f_target: Vec<f64>,
    pub theta_target: Vec<f64>,
    pub q: f64,
    pub n_fit: usize,
    pub n_work: usize,
}

impl DesignTargets {
    pub fn new(f_target: Vec<f64>, theta_target: Vec<f64>, q: f64, n_work: usize) -> Result<Self> {
        let n_fit = f_target.len();
        if n_fit == 0 || theta_target.len() != n_fit {
            return Err(Error::Shape(format!(
                "target tables must be nonempty and of equal length, got {} and {}",
                n_fit,
                theta_target.len()
            )));
        }
        if !(q > 2.0 && q.is_finite()) {
            return Err(Error::Argument(format!("theta norm order q must exceed 2, got {q}")));
        }
        if n_work < n_fit + 4 {
            return Err(Error::Argument(format!(
                "workspace cutoff {n_work} must be at least n_fit + 4 = {}",
                n_fit + 4
            )));
        }
        if f_target.iter().chain(&theta_target).any(|v| !v.is_finite()) {
            return Err(Error::Argument("targets must be finite".into()));
        }
        Ok(Self {
            f_target,
            theta_target,
            q,
            n_fit,
            n_work,
        })
    }

    /// Tables of a known ansatz, evaluated at the default workspace.
    pub fn from_ansatz(ansatz: &PotentialAnsatz, n_fit: usize, q: f64) -> Result<Self> {
        let n_work = default_workspace(n_fit, ansatz);
        let t = fock_matrix_elements(ansatz, n_fit, n_work)?;
        Self::new(t.f[1..].to_vec(), t.theta[1..].to_vec(), q, n_work)
    }

    /// `f(n) = (g²/Δ)/n`, `θ(n) = 1/√n`, with workspace for the default
    /// ansatz degrees.
    pub fn intensity_inverse(g: f64, delta: f64, n_fit: usize, q: f64) -> Result<Self> {
        if !(g >= 0.0 && delta > 0.0) {
            return Err(Error::Argument(format!("need g >= 0 and Delta > 0, got {g}, {delta}")));
        }
        let f = (1..=n_fit).map(|n| g * g / delta / n as f64).collect();
        let theta = (1..=n_fit).map(|n| 1.0 / (n as f64).sqrt()).collect();
        Self::new(f, theta, q, n_fit + DEFAULT_V_DEGREE.max(DEFAULT_B_DEGREE) + 2)
    }
}

/// `(Σ|Δf|²)^{1/2} + (Σ|Δθ|^q)^{1/q}` over `n = 1..=n_fit`.
pub fn table_cost(tables: &FockTables, targets: &DesignTargets) -> f64 {
    let n = targets.n_fit;
    let f2: f64 = (1..=n).map(|k| (tables.f[k] - targets.f_target[k - 1]).powi(2)).sum();
    let tq: f64 = (1..=n)
        .map(|k| (tables.theta[k] - targets.theta_target[k - 1]).abs().powf(targets.q))
        .sum();
    f2.sqrt() + tq.powf(1.0 / targets.q)
}

pub fn design_cost(ansatz: &PotentialAnsatz, targets: &DesignTargets) -> Result<f64> {
    Ok(table_cost(
        &fock_matrix_elements(ansatz, targets.n_fit, targets.n_work)?,
        targets,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub iterations: usize,
    pub proposal_scale: f64,
    /// Auxiliary temperature; 0 accepts only strict improvements.
    pub mc_temperature: f64,
    pub seed: u64,
}

impl AnnealSchedule {
    pub fn new(iterations: usize, proposal_scale: f64, mc_temperature: f64, seed: u64) -> Result<Self> {
        let s = Self {
            iterations,
            proposal_scale,
            mc_temperature,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Argument("schedule needs at least one iteration".into()));
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return Err(Error::Argument(format!(
                "proposal scale must be positive, got {}",
                self.proposal_scale
            )));
        }
        if !(self.mc_temperature >= 0.0 && self.mc_temperature.is_finite()) {
            return Err(Error::Argument(format!(
                "MC temperature must be >= 0, got {}",
                self.mc_temperature
            )));
        }
        Ok(())
    }
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            proposal_scale: 0.01,
            mc_temperature: 0.0,
            seed: 42,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub cost: f64,
    pub best: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McResult {
    pub best: PotentialAnsatz,
    pub best_cost: f64,
    pub initial_cost: f64,
    pub best_tables: FockTables,
    /// Row 0 is the starting point; row `i` is the chain after step `i`.
    pub trace: Vec<TraceRow>,
    pub accepted: usize,
    pub accepted_worse: usize,
}

/// Metropolis search over single-coefficient Gaussian moves of width
/// `proposal_scale·(1 + |c|)`.
pub fn mc_optimize(ansatz0: &PotentialAnsatz, targets: &DesignTargets, schedule: &AnnealSchedule) -> Result<McResult> {
    schedule.validate()?;
    let need = exact_workspace(targets.n_fit, ansatz0.max_degree());
    if targets.n_work < need {
        return Err(Error::Precondition(format!(
            "Fock workspace {} is too small for the ansatz degree {} (need {need})",
            targets.n_work,
            ansatz0.max_degree()
        )));
    }
    let basis = MonomialTables::new(
        ansatz0.v_coeffs.len(),
        ansatz0.b_coeffs.len(),
        targets.n_fit,
        targets.n_work,
    );
    let cost_of = |a: &PotentialAnsatz| table_cost(&basis.tables(a), targets);

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut current = ansatz0.clone();
    let mut cost = cost_of(&current);
    let initial_cost = cost;
    let mut best = current.clone();
    let mut best_cost = cost;
    let mut trace = Vec::with_capacity(schedule.iterations + 1);
    trace.push(TraceRow {
        iteration: 0,
        cost,
        best: best_cost,
    });
    let (mut accepted, mut accepted_worse) = (0, 0);

    for iteration in 1..=schedule.iterations {
        let k = rng.random_range(0..current.len());
        let step: f64 = unit.sample(&mut rng);
        let mut proposal = current.clone();
        let c = proposal.coeff_mut(k);
        *c += schedule.proposal_scale * (1.0 + c.abs()) * step;
        let new_cost = cost_of(&proposal);
        let delta = new_cost - cost;
        let take = if delta < 0.0 {
            true
        } else if schedule.mc_temperature > 0.0 {
            rng.random::<f64>() < (-delta / schedule.mc_temperature).exp()
        } else {
            false
        };
        if take {
            accepted += 1;
            if delta > 0.0 {
                accepted_worse += 1;
            }
            current = proposal;
            cost = new_cost;
            if cost < best_cost {
                best_cost = cost;
                best = current.clone();
            }
        }
        trace.push(TraceRow {
            iteration,
            cost,
            best: best_cost,
        });
    }
    let best_tables = basis.tables(&best);
    Ok(McResult {
        best,
        best_cost,
        initial_cost,
        best_tables,
        trace,
        accepted,
        accepted_worse,
    })
}

/// Fitted tables compared against an ideal profile, in the table ranges and
/// in the cycle they drive.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignValidation {
    /// `|f_fit(n) - f_ideal(n)|` for `n = 1..=n_used`.
    pub f_errors: Vec<f64>,
    pub theta_errors: Vec<f64>,
    /// Relative errors, `None` where the ideal value is zero.
    pub f_relative_errors: Vec<Option<f64>>,
    pub theta_relative_errors: Vec<Option<f64>>,
    pub ideal: ModelComparison,
    pub fitted: ModelComparison,
    /// Population of `|2⟩` at `τ` under the full model.
    pub fidelity_ideal: f64,
    pub fidelity_fitted: f64,
    /// `|fidelity_fitted - fidelity_ideal|`.
    pub degradation: f64,
}

/// Substitutes `tables` into both cavities of `ideal` on `n = 1..=n_fit`
/// (clipped to each cutoff; `n = 0` and levels beyond the fit keep their
/// ideal values) and reruns the full-vs-effective comparison. Both cavities
/// share one design, which matches the symmetric default `g₁ = g₂`.
pub fn validate_design(
    tables: &FockTables,
    ideal: &CouplingProfile,
    cfg: &OpticsEngineConfig,
) -> Result<DesignValidation> {
    if tables.f.len() != tables.theta.len() || tables.f.len() < 2 {
        return Err(Error::Shape(
            "fitted tables must cover n = 0..=n_fit with n_fit >= 1".into(),
        ));
    }
    let mut fitted = ideal.clone();
    let n_fit = tables.f.len() - 1;
    let replace = |dst: &mut Vec<f64>, src: &[f64]| {
        for n in 1..=n_fit.min(dst.len() - 1) {
            dst[n] = src[n];
        }
    };
    replace(&mut fitted.theta1, &tables.theta);
    replace(&mut fitted.theta2, &tables.theta);
    replace(&mut fitted.f1, &tables.f);
    replace(&mut fitted.f2, &tables.f);

    let used = n_fit.min(ideal.theta1.len() - 1);
    let rel = |a: f64, b: f64| (b != 0.0).then(|| (a - b).abs() / b.abs());
    let f_errors = (1..=used).map(|n| (tables.f[n] - ideal.f1[n]).abs()).collect();
    let theta_errors = (1..=used).map(|n| (tables.theta[n] - ideal.theta1[n]).abs()).collect();
    let f_relative_errors = (1..=used).map(|n| rel(tables.f[n], ideal.f1[n])).collect();
    let theta_relative_errors = (1..=used).map(|n| rel(tables.theta[n], ideal.theta1[n])).collect();

    let ideal_run = compare_models(cfg, ideal)?;
    let fitted_run = if &fitted == ideal {
        ideal_run.clone()
    } else {
        compare_models(cfg, &fitted)?
    };
    let fidelity_ideal = ideal_run.final_full[1];
    let fidelity_fitted = fitted_run.final_full[1];
    Ok(DesignValidation {
        f_errors,
        theta_errors,
        f_relative_errors,
        theta_relative_errors,
        ideal: ideal_run,
        fitted: fitted_run,
        fidelity_ideal,
        fidelity_fitted,
        degradation: (fidelity_fitted - fidelity_ideal).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{LambdaAtom, ProfileKind};
    use crate::thermal::TruncatedMode;
    use proptest::prelude::*;

    fn harmonic() -> PotentialAnsatz {
        PotentialAnsatz::new(vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn harmonic_matrix_elements() {
        let t = fock_matrix_elements(&harmonic(), 6, 16).unwrap();
        for n in 0..=6 {
            assert!((t.f[n] - (n as f64 + 0.5)).abs() < 1e-12);
            assert!((t.theta[n] - 0.5f64.sqrt()).abs() < 1e-12);
        }
        let zero = PotentialAnsatz::zeros(8, 7).unwrap();
        let t = fock_matrix_elements(&zero, 6, 16).unwrap();
        assert!(t.f.iter().chain(&t.theta).all(|v| *v == 0.0));
    }

    #[test]
    fn quartic_closed_form() {
        // ⟨n|X⁴|n⟩ = (6n² + 6n + 3)/4 and ⟨n|X³|n+1⟩ = 3(n+1)^{3/2}/(2√2).
        let a = PotentialAnsatz::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let t = fock_matrix_elements(&a, 5, 12).unwrap();
        for n in 0..=5 {
            let nf = n as f64;
            assert!((t.f[n] - (6.0 * nf * nf + 6.0 * nf + 3.0) / 4.0).abs() < 1e-10);
            assert!((t.theta[n] - 3.0 * (nf + 1.0) / (2.0 * 2f64.sqrt())).abs() < 1e-10);
        }
    }

    #[test]
    fn workspace_is_exact_and_checked() {
        let a = PotentialAnsatz::new(vec![0.3, -0.2, 0.05, 0.01], vec![0.7, 0.1, -0.02, 0.003]).unwrap();
        let need = exact_workspace(6, a.max_degree());
        let small = fock_matrix_elements(&a, 6, need).unwrap();
        let big = fock_matrix_elements(&a, 6, need + 20).unwrap();
        for n in 0..=6 {
            assert!((small.f[n] - big.f[n]).abs() <= 1e-9 * big.f[n].abs().max(1.0));
            assert!((small.theta[n] - big.theta[n]).abs() <= 1e-9 * big.theta[n].abs().max(1.0));
        }
        assert!(matches!(
            fock_matrix_elements(&a, 6, need - 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn cost_examples() {
        let targets = DesignTargets::from_ansatz(&harmonic(), 6, 4.0).unwrap();
        assert_eq!(design_cost(&harmonic(), &targets).unwrap(), 0.0);

        let mut f = targets.f_target.clone();
        f[2] += 3.0;
        let off_f = DesignTargets {
            f_target: f,
            ..targets.clone()
        };
        assert!((design_cost(&harmonic(), &off_f).unwrap() - 3.0).abs() < 1e-12);

        let mut th = targets.theta_target.clone();
        th[0] += 1.0;
        th[3] += 1.0;
        let off_t = DesignTargets {
            theta_target: th,
            ..targets.clone()
        };
        assert!((design_cost(&harmonic(), &off_t).unwrap() - 2f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn target_validation() {
        assert!(DesignTargets::new(vec![1.0], vec![1.0], 2.0, 10).is_err());
        assert!(DesignTargets::new(vec![1.0], vec![1.0, 2.0], 4.0, 10).is_err());
        assert!(DesignTargets::new(vec![1.0, 2.0], vec![1.0, 2.0], 4.0, 5).is_err());
        assert!(AnnealSchedule::new(0, 0.1, 0.0, 1).is_err());
        assert!(AnnealSchedule::new(1, 0.0, 0.0, 1).is_err());
        assert!(AnnealSchedule::new(1, 0.1, -1.0, 1).is_err());
    }

    #[test]
    fn fixed_point_stays_put() {
        let targets = DesignTargets::from_ansatz(&harmonic(), 6, 4.0).unwrap();
        let s = AnnealSchedule::new(500, 0.05, 0.0, 7).unwrap();
        let r = mc_optimize(&harmonic(), &targets, &s).unwrap();
        assert_eq!(r.best_cost, 0.0);
        assert_eq!(r.accepted_worse, 0);
        assert!(r.trace.iter().all(|row| row.cost == 0.0));
    }

    #[test]
    fn greedy_trace_and_determinism() {
        let truth = PotentialAnsatz::new(vec![1.0, 0.1, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let targets = DesignTargets::from_ansatz(&truth, 6, 4.0).unwrap();
        let start = PotentialAnsatz::new(vec![1.1, 0.11, 0.0, 0.0], vec![1.1, 0.0, 0.0, 0.0]).unwrap();
        let s = AnnealSchedule::new(2000, 0.01, 0.0, 42).unwrap();
        let a = mc_optimize(&start, &targets, &s).unwrap();
        let b = mc_optimize(&start, &targets, &s).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.len(), 2001);
        assert!(a
            .trace
            .windows(2)
            .all(|w| w[1].cost <= w[0].cost && w[1].best <= w[0].best));
        assert!(a.best_cost < a.initial_cost);
        let c = mc_optimize(&start, &targets, &AnnealSchedule { seed: 43, ..s }).unwrap();
        assert_ne!(a.trace, c.trace);

        let hot = mc_optimize(
            &start,
            &targets,
            &AnnealSchedule {
                mc_temperature: 0.05,
                ..s
            },
        )
        .unwrap();
        assert!(hot.accepted_worse > 0);
        assert!(hot.trace.windows(2).all(|w| w[1].best <= w[0].best));
        assert!(hot.trace.iter().all(|row| row.best <= row.cost));
    }

    fn small_cfg() -> OpticsEngineConfig {
        let b1 = TruncatedMode::new(2.0, 0.5, 3).unwrap();
        let b2 = TruncatedMode::new(1.0, 1.0, 3).unwrap();
        OpticsEngineConfig::new(b1, b2, LambdaAtom::resonant(2.0, 1.0, 20.0).unwrap(), 1.0, 1.0, 20.0).unwrap()
    }

    #[test]
    fn ideal_tables_do_not_degrade() {
        let cfg = small_cfg();
        let ideal = CouplingProfile::of_kind(ProfileKind::LadderMatched, &cfg);
        let tables = FockTables {
            f: ideal.f1.clone(),
            theta: ideal.theta1.clone(),
        };
        let v = validate_design(&tables, &ideal, &cfg).unwrap();
        assert_eq!(v.degradation, 0.0);
        assert!(v.f_errors.iter().chain(&v.theta_errors).all(|e| *e == 0.0));
    }

    #[test]
    fn one_percent_theta_error() {
        // Large Δ/g_k so the full model's own Rabi-rate offset is far below 1%.
        let g = 0.05;
        let cfg = OpticsEngineConfig::new(
            small_cfg().bath1,
            small_cfg().bath2,
            LambdaAtom::resonant(2.0, 1.0, g * 160.0 * 160.0).unwrap(),
            g * 160.0,
            g * 160.0,
            20.0,
        )
        .unwrap();
        let ideal = CouplingProfile::ladder_matched(&cfg);
        // Scaling θ₁ by 1.01 (and f₁ by 1.01² to keep the Stark shifts
        // matched) makes every sector's Rabi frequency 1% faster.
        let mut scaled = ideal.clone();
        scaled.theta1.iter_mut().for_each(|t| *t *= 1.01);
        scaled.f1.iter_mut().for_each(|f| *f *= 1.01 * 1.01);
        let a = compare_models(&cfg, &ideal).unwrap();
        let b = compare_models(&cfg, &scaled).unwrap();
        let success = a.final_effective[1];
        let expected = success * (std::f64::consts::FRAC_PI_2 * 0.01).sin().powi(2);
        let loss = a.final_full[1] - b.final_full[1];
        assert!(
            (loss - expected).abs() < 0.2 * expected,
            "loss {loss} expected {expected}"
        );

        // Through the validation path, sectors with n >= 2 see the error.
        let tables = FockTables {
            f: ideal.f1.iter().map(|f| f * 1.0201).collect(),
            theta: ideal.theta1.iter().map(|t| t * 1.01).collect(),
        };
        let v = validate_design(&tables, &ideal, &cfg).unwrap();
        assert!(v.degradation > 0.0 && v.degradation < 10.0 * expected);
        assert!(v
            .theta_relative_errors
            .iter()
            .all(|e| (e.unwrap() - 0.01).abs() < 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn parity(v in prop::collection::vec(-1.0f64..1.0, 4), b in prop::collection::vec(-1.0f64..1.0, 4)) {
            let a = PotentialAnsatz::new(v.clone(), b.clone()).unwrap();
            let flipped = PotentialAnsatz::new(v.clone(), b.iter().map(|c| -c).collect()).unwrap();
            let no_b = PotentialAnsatz::new(v, vec![0.0; 4]).unwrap();
            let ta = fock_matrix_elements(&a, 5, 15).unwrap();
            let tf = fock_matrix_elements(&flipped, 5, 15).unwrap();
            let tn = fock_matrix_elements(&no_b, 5, 15).unwrap();
            for n in 0..=5 {
                prop_assert_eq!(ta.f[n], tf.f[n]);
                prop_assert_eq!(ta.f[n], tn.f[n]);
                prop_assert!((ta.theta[n] + tf.theta[n]).abs() <= 1e-12 * ta.theta[n].abs().max(1.0));
            }
            for y in [0.3, 1.1, 2.0] {
                prop_assert!((a.v(-y) - a.v(y)).abs() <= 1e-12 * a.v(y).abs().max(1.0));
                prop_assert!((a.b(-y) + a.b(y)).abs() <= 1e-12 * a.b(y).abs().max(1.0));
            }
        }

        #[test]
        fn cost_is_metric_like(
            f in prop::collection::vec(-2.0f64..2.0, 5),
            th in prop::collection::vec(-2.0f64..2.0, 5),
            bump in 0.0f64..1.0, idx in 0usize..5,
        ) {
            let targets = DesignTargets::new(f.clone(), th.clone(), 4.0, 12).unwrap();
            let mut tf = vec![0.0]; tf.extend(&f);
            let mut tt = vec![0.0]; tt.extend(&th);
            let exact = FockTables { f: tf.clone(), theta: tt.clone() };
            prop_assert_eq!(table_cost(&exact, &targets), 0.0);
            let mut worse = exact.clone();
            worse.f[idx + 1] += bump;
            let c1 = table_cost(&worse, &targets);
            prop_assert!(c1 >= 0.0);
            prop_assert!(bump == 0.0 || c1 > 0.0);
            let mut worse2 = worse.clone();
            worse2.theta[idx + 1] -= bump;
            prop_assert!(table_cost(&worse2, &targets) >= c1);
        }
    }
}
