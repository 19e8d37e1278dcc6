//! One-step cycle simulation shared by the compact and optics engines.
//!
//! Both engines act on `B1 ⊗ B2 ⊗ S` with a two-level `S` and a coupling
//! that swaps `|n, m, 0⟩ ↔ |n-1, m+1, 1⟩` (hot bath loses a quantum, cold
//! bath gains one, the system is excited). The simulator starts from
//! `γ_B1 ⊗ γ_B2 ⊗ |0⟩⟨0|_S`, builds `U(t)` block by block at every sample
//! time and records everything the thermodynamic checks need.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{
    entanglement_entropy, fubini_study_distance, Operator, Spectrum, StateVector, SubsystemLayout, C64, PHYSICS_TOL,
};

/// Default number of samples on `[0, τ]`.
pub const DEFAULT_SAMPLES: usize = 101;

/// A conserved-energy sector `(n, m)`: the source `|n, m, 0⟩` and, if it is
/// coupled, its partner `|n-1, m+1, 1⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BlockSector {
    pub label: (usize, usize),
    pub source_index: usize,
    pub target_index: Option<usize>,
}

impl BlockSector {
    pub fn coupled(&self) -> bool {
        self.target_index.is_some()
    }
}

/// Index of `|n, m, s⟩` in `B1 ⊗ B2 ⊗ S`.
pub(crate) fn composite_index(n: usize, m: usize, s: usize, n_max2: usize, s_dim: usize) -> usize {
    (n * (n_max2 + 1) + m) * s_dim + s
}

/// Pairs every `|n, m, 0⟩` with `|n-1, m+1, 1⟩`; sources with `n = 0` or
/// `m = n_max2` have no partner inside the truncated space.
pub(crate) fn exchange_blocks(n_max1: usize, n_max2: usize) -> Vec<BlockSector> {
    let mut blocks = Vec::with_capacity((n_max1 + 1) * (n_max2 + 1));
    for n in 0..=n_max1 {
        for m in 0..=n_max2 {
            let target = (n >= 1 && m < n_max2).then(|| composite_index(n - 1, m + 1, 1, n_max2, 2));
            blocks.push(BlockSector {
                label: (n, m),
                source_index: composite_index(n, m, 0, n_max2, 2),
                target_index: target,
            });
        }
    }
    blocks
}

/// `g Σ (|target⟩⟨source| + h.c.)` over the coupled blocks.
pub(crate) fn exchange_hamiltonian(dim: usize, blocks: &[BlockSector], g: f64) -> Operator {
    let mut m = nalgebra::DMatrix::<C64>::zeros(dim, dim);
    for b in blocks {
        if let Some(t) = b.target_index {
            m[(t, b.source_index)] = C64::new(g, 0.0);
            m[(b.source_index, t)] = C64::new(g, 0.0);
        }
    }
    Operator::hermitian(m).expect("exchange Hamiltonian is real symmetric")
}

/// `n_samples` uniform points on `[0, π/(2g)]`, ending exactly at `τ`.
pub fn default_time_grid(g: f64, n_samples: usize) -> Vec<f64> {
    let tau = FRAC_PI_2 / g;
    let n = n_samples.max(2);
    (0..n).map(|k| tau * k as f64 / (n - 1) as f64).collect()
}

/// One row of the exported time series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub pop1: f64,
    pub pop2: f64,
    pub pop3: f64,
    #[serde(rename = "S_ent")]
    pub s_ent: f64,
    #[serde(rename = "E_B1")]
    pub e_b1: f64,
    #[serde(rename = "E_B2")]
    pub e_b2: f64,
    pub resid_energy: f64,
    pub resid_weighted: f64,
}

pub const SERIES_HEADER: [&str; 9] = [
    "t",
    "pop1",
    "pop2",
    "pop3",
    "S_ent",
    "E_B1",
    "E_B2",
    "resid_energy",
    "resid_weighted",
];

/// Thermodynamic outputs of one engine cycle.
///
/// Per-block quantities refer to a single successful exchange
/// (`representative_block`, the most probable coupled sector); ensemble
/// quantities are averages over the initial Gibbs mixture.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleReport {
    pub beta1: f64,
    pub beta2: f64,
    pub coupling: f64,
    pub representative_block: (usize, usize),
    /// Work stored per successful exchange, `⟨H_S⟩(τ) - ⟨H_S⟩(0)`.
    pub w_ext: f64,
    /// Heat leaving the hot bath per successful exchange.
    pub q1: f64,
    /// Heat leaving the cold bath per successful exchange.
    pub q2: f64,
    pub w_ext_ensemble: f64,
    pub q1_ensemble: f64,
    pub q2_ensemble: f64,
    pub eta: f64,
    pub tau: f64,
    pub power: f64,
    /// Max over coupled blocks of `|β₁Q₁ + β₂Q₂|`.
    pub clausius_residual: f64,
    /// Max over samples of `‖[U(t), H_B1 + H_B2 + H_S]‖_max`.
    pub commutator_residual_energy: f64,
    /// Max over samples of `‖[U(t), β₁H_B1 + β₂H_B2]‖_max`.
    pub commutator_residual_weighted: f64,
    /// Max over samples of `‖U†U - I‖_max`.
    pub unitarity_residual: f64,
    /// Max over coupled blocks and samples of the deviation of the block
    /// amplitudes from `(cos gt, -i sin gt)`.
    pub amplitude_residual: f64,
    /// Max over coupled blocks and samples of `|cos² + sin² - 1|`.
    pub block_norm_residual: f64,
    pub entanglement_trace: Vec<(f64, f64)>,
    /// Max over coupled blocks of the entanglement entropy at `t = 0` and `t = τ`.
    pub entanglement_endpoint_max: f64,
    pub speed_trace: Vec<(f64, f64)>,
    pub distance_trace: Vec<(f64, f64)>,
    pub success_weight: f64,
    /// Weight of sources with an empty hot bath (`n = 0`).
    pub vacuum_weight: f64,
    /// Weight of sources at the cold-bath cutoff (`n >= 1, m = n_max2`).
    pub truncation_weight: f64,
    /// Populations of the two system levels at `τ`.
    pub final_populations: [f64; 2],
    /// `|ρ_S(τ)_{01}|`.
    pub final_coherence: f64,
    pub series: Vec<SeriesRow>,
}

impl CycleReport {
    pub fn boundary_weight(&self) -> f64 {
        self.vacuum_weight + self.truncation_weight
    }
}

/// Everything the simulator needs about one engine instance.
pub(crate) struct ExchangeModel {
    pub beta1: f64,
    pub beta2: f64,
    pub g: f64,
    pub layout: SubsystemLayout,
    pub hamiltonian: Operator,
    pub blocks: Vec<BlockSector>,
    /// Diagonals of `H_B1`, `H_B2`, `H_S` on the composite space.
    pub e_b1: Vec<f64>,
    pub e_b2: Vec<f64>,
    pub e_s: Vec<f64>,
    /// Initial populations of the composite basis states.
    pub initial: Vec<f64>,
}

impl ExchangeModel {
    pub fn new(
        (beta1, beta2): (f64, f64),
        (omega1, omega2): (f64, f64),
        (p1, p2): (&[f64], &[f64]),
        system_energies: [f64; 2],
        g: f64,
    ) -> Result<Self> {
        let (n_max1, n_max2) = (p1.len() - 1, p2.len() - 1);
        let layout = SubsystemLayout::new(vec![n_max1 + 1, n_max2 + 1, 2])?;
        let dim = layout.total_dim();
        let blocks = exchange_blocks(n_max1, n_max2);
        let hamiltonian = exchange_hamiltonian(dim, &blocks, g);
        let mut e_b1 = vec![0.0; dim];
        let mut e_b2 = vec![0.0; dim];
        let mut e_s = vec![0.0; dim];
        let mut initial = vec![0.0; dim];
        for n in 0..=n_max1 {
            for m in 0..=n_max2 {
                for s in 0..2 {
                    let i = composite_index(n, m, s, n_max2, 2);
                    e_b1[i] = n as f64 * omega1;
                    e_b2[i] = m as f64 * omega2;
                    e_s[i] = system_energies[s];
                }
                initial[composite_index(n, m, 0, n_max2, 2)] = p1[n] * p2[m];
            }
        }
        Ok(Self {
            beta1,
            beta2,
            g,
            layout,
            hamiltonian,
            blocks,
            e_b1,
            e_b2,
            e_s,
            initial,
        })
    }

    pub fn total_energy(&self) -> Operator {
        let d: Vec<f64> = (0..self.e_s.len())
            .map(|i| self.e_b1[i] + self.e_b2[i] + self.e_s[i])
            .collect();
        Operator::from_real_diagonal(&d)
    }

    pub fn weighted_energy(&self) -> Operator {
        let d: Vec<f64> = (0..self.e_s.len())
            .map(|i| self.beta1 * self.e_b1[i] + self.beta2 * self.e_b2[i])
            .collect();
        Operator::from_real_diagonal(&d)
    }

    fn representative(&self) -> Result<BlockSector> {
        self.blocks
            .iter()
            .filter(|b| b.coupled())
            .max_by(|a, b| self.initial[a.source_index].total_cmp(&self.initial[b.source_index]))
            .copied()
            .ok_or_else(|| Error::DegenerateCycle("no coupled block inside the truncated space".into()))
    }

    pub fn run(&self, times: &[f64]) -> Result<CycleReport> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::Argument(format!("coupling g must be positive, got {}", self.g)));
        }
        let tau = FRAC_PI_2 / self.g;
        let tau_tol = 1e-12 * tau.max(1.0);
        if !times.iter().any(|&t| (t - tau).abs() <= tau_tol) {
            return Err(Error::Argument(format!(
                "sample times must include the cycle time tau = {tau}"
            )));
        }
        let rep = self.representative()?;
        let spectrum = Spectrum::of(&self.hamiltonian)?;
        let h_total = self.total_energy();
        let h_weighted = self.weighted_energy();
        let dim = self.layout.total_dim();
        let psi0 = StateVector::basis(dim, rep.source_index)?;

        let coupled: Vec<&BlockSector> = self.blocks.iter().filter(|b| b.coupled()).collect();
        let occupied: Vec<(usize, f64)> = self
            .initial
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, p)| p > 0.0)
            .collect();

        let mut report = CycleReport {
            beta1: self.beta1,
            beta2: self.beta2,
            coupling: self.g,
            representative_block: rep.label,
            w_ext: 0.0,
            q1: 0.0,
            q2: 0.0,
            w_ext_ensemble: 0.0,
            q1_ensemble: 0.0,
            q2_ensemble: 0.0,
            eta: 0.0,
            tau,
            power: 0.0,
            clausius_residual: 0.0,
            commutator_residual_energy: 0.0,
            commutator_residual_weighted: 0.0,
            unitarity_residual: 0.0,
            amplitude_residual: 0.0,
            block_norm_residual: 0.0,
            entanglement_trace: Vec::with_capacity(times.len()),
            entanglement_endpoint_max: 0.0,
            speed_trace: Vec::with_capacity(times.len()),
            distance_trace: Vec::with_capacity(times.len()),
            success_weight: coupled.iter().map(|b| self.initial[b.source_index]).sum(),
            vacuum_weight: 0.0,
            truncation_weight: 0.0,
            final_populations: [0.0; 2],
            final_coherence: 0.0,
            series: Vec::with_capacity(times.len()),
        };
        for b in self.blocks.iter().filter(|b| !b.coupled()) {
            if b.label.0 == 0 {
                report.vacuum_weight += self.initial[b.source_index];
            } else {
                report.truncation_weight += self.initial[b.source_index];
            }
        }

        let mean = |diag: &[f64], pops: &[f64]| -> f64 { diag.iter().zip(pops).map(|(e, p)| e * p).sum() };
        let initial_e_b1 = mean(&self.e_b1, &self.initial);
        let initial_e_b2 = mean(&self.e_b2, &self.initial);
        let initial_e_s = mean(&self.e_s, &self.initial);

        for &t in times {
            let u = BlockPropagator {
                spectrum: &spectrum,
                blocks: spectrum.block_propagators(t),
            };
            let (resid_energy, resid_weighted) = u.commutator_residuals(&h_total, &h_weighted);
            report.commutator_residual_energy = report.commutator_residual_energy.max(resid_energy);
            report.commutator_residual_weighted = report.commutator_residual_weighted.max(resid_weighted);
            report.unitarity_residual = report.unitarity_residual.max(u.unitarity_defect());

            // ρ(t) = Σ_k p_k U|k⟩⟨k|U†; only its diagonal and the system
            // coherence are needed.
            let mut pops = vec![0.0; dim];
            let mut coherence = C64::new(0.0, 0.0);
            for &(k, p) in &occupied {
                for (j, a) in u.column(k) {
                    pops[j] += p * a.norm_sqr();
                    if j % 2 == 0 {
                        coherence += a * u.entry(j + 1, k).conj() * p;
                    }
                }
            }
            let pop_s0: f64 = pops.iter().step_by(2).sum();
            let pop_s1: f64 = pops.iter().skip(1).step_by(2).sum();

            let (cos, sin) = ((self.g * t).cos(), (self.g * t).sin());
            let at_endpoint = t == 0.0 || (t - tau).abs() <= tau_tol;
            for b in &coupled {
                let target = b.target_index.expect("coupled");
                let stay = u.entry(b.source_index, b.source_index);
                let moved = u.entry(target, b.source_index);
                let dev = (stay - C64::new(cos, 0.0))
                    .norm()
                    .max((moved - C64::new(0.0, -sin)).norm());
                report.amplitude_residual = report.amplitude_residual.max(dev);
                report.block_norm_residual = report
                    .block_norm_residual
                    .max((stay.norm_sqr() + moved.norm_sqr() - 1.0).abs());
                if at_endpoint {
                    let s = system_entropy(&u, b.source_index);
                    report.entanglement_endpoint_max = report.entanglement_endpoint_max.max(s);
                }
            }

            let mut amps = DVector::<C64>::zeros(dim);
            for (j, a) in u.column(rep.source_index) {
                amps[j] = a;
            }
            let psi_t = StateVector::normalized(amps)?;
            let s_ent = entanglement_entropy(&psi_t, &self.layout, &[2])?;
            report.entanglement_trace.push((t, s_ent));
            report.speed_trace.push((t, self.energy_uncertainty(&psi_t)));
            report.distance_trace.push((t, fubini_study_distance(&psi0, &psi_t)?));

            let e_b1 = mean(&self.e_b1, &pops);
            let e_b2 = mean(&self.e_b2, &pops);
            report.series.push(SeriesRow {
                t,
                pop1: pop_s0,
                pop2: pop_s1,
                pop3: 0.0,
                s_ent,
                e_b1,
                e_b2,
                resid_energy,
                resid_weighted,
            });

            if (t - tau).abs() <= tau_tol {
                report.final_populations = [pop_s0, pop_s1];
                report.final_coherence = coherence.norm();
                report.q1_ensemble = initial_e_b1 - e_b1;
                report.q2_ensemble = initial_e_b2 - e_b2;
                report.w_ext_ensemble = mean(&self.e_s, &pops) - initial_e_s;
                let mut worst = 0.0f64;
                for b in &coupled {
                    let heats = self.block_heats(&u, b.source_index);
                    worst = worst.max(clausius_residual(self.beta1, self.beta2, heats.0, heats.1));
                    if b.source_index == rep.source_index {
                        (report.q1, report.q2, report.w_ext) = heats;
                    }
                }
                report.clausius_residual = worst;
            }
        }
        if report.q1 > 0.0 {
            report.eta = report.w_ext / report.q1;
        }
        report.power = report.w_ext / tau;
        Ok(report)
    }

    /// `(Q₁, Q₂, W)` for the pure block state starting at `source`.
    fn block_heats(&self, u: &BlockPropagator<'_>, source: usize) -> (f64, f64, f64) {
        let after = |diag: &[f64]| -> f64 { u.column(source).map(|(j, a)| a.norm_sqr() * diag[j]).sum() };
        (
            self.e_b1[source] - after(&self.e_b1),
            self.e_b2[source] - after(&self.e_b2),
            after(&self.e_s) - self.e_s[source],
        )
    }

    /// `ΔH` of the exchange Hamiltonian, applied through its block list.
    fn energy_uncertainty(&self, psi: &StateVector) -> f64 {
        let a = psi.amplitudes();
        let mut h_psi = DVector::<C64>::zeros(a.len());
        for b in &self.blocks {
            if let Some(t) = b.target_index {
                h_psi[t] += a[b.source_index] * self.g;
                h_psi[b.source_index] += a[t] * self.g;
            }
        }
        let mean = a.dotc(&h_psi).re;
        (h_psi.norm_squared() - mean * mean).max(0.0).sqrt()
    }
}

/// `U(t)` held as its invariant blocks.
pub(crate) struct BlockPropagator<'a> {
    spectrum: &'a Spectrum,
    blocks: Vec<(&'a [usize], DMatrix<C64>)>,
}

impl BlockPropagator<'_> {
    fn entry(&self, i: usize, j: usize) -> C64 {
        let ((bi, pi), (bj, pj)) = (self.spectrum.block_of(i), self.spectrum.block_of(j));
        if bi == bj {
            self.blocks[bi].1[(pi, pj)]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// Nonzero-support entries of `U|k⟩`.
    fn column(&self, k: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (b, p) = self.spectrum.block_of(k);
        let (indices, m) = &self.blocks[b];
        indices.iter().enumerate().map(move |(r, &i)| (i, m[(r, p)]))
    }

    /// `‖[U, D]‖_max` for the two diagonal operators; entries outside the
    /// blocks are zero on both sides.
    fn commutator_residuals(&self, d1: &Operator, d2: &Operator) -> (f64, f64) {
        let (d1, d2) = (d1.diagonal(), d2.diagonal());
        let mut worst = (0.0f64, 0.0f64);
        for (indices, m) in &self.blocks {
            for (c, &j) in indices.iter().enumerate() {
                for (r, &i) in indices.iter().enumerate() {
                    let z = m[(r, c)].norm();
                    worst.0 = worst.0.max(z * (d1[j] - d1[i]).norm());
                    worst.1 = worst.1.max(z * (d2[j] - d2[i]).norm());
                }
            }
        }
        worst
    }

    fn unitarity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|(_, m)| {
                let k = m.nrows();
                (m.adjoint() * m - DMatrix::<C64>::identity(k, k))
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Entanglement entropy between the two-level system (last factor) and the
/// baths for the column `U|k⟩`, from the 2×2 reduced state in closed form.
fn system_entropy(u: &BlockPropagator<'_>, k: usize) -> f64 {
    let (mut r00, mut r11, mut r01) = (0.0, 0.0, C64::new(0.0, 0.0));
    for (j, a) in u.column(k) {
        if j % 2 == 0 {
            r00 += a.norm_sqr();
            r01 += a * u.entry(j + 1, k).conj();
        } else {
            r11 += a.norm_sqr();
        }
    }
    let trace = r00 + r11;
    let split = ((r00 - r11).powi(2) + 4.0 * r01.norm_sqr()).sqrt();
    [(trace + split) / 2.0, (trace - split) / 2.0]
        .iter()
        .filter(|&&l| l > 1e-14)
        .map(|&l| -l * l.ln())
        .sum()
}

/// `|β₁Q₁ + β₂Q₂|`.
pub fn clausius_residual(beta1: f64, beta2: f64, q1: f64, q2: f64) -> f64 {
    (beta1 * q1 + beta2 * q2).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClausiusCheck {
    pub residual: f64,
    pub passed: bool,
}

/// Clausius equality for the per-block heats of a cycle, at 1e-9.
pub fn clausius_check(report: &CycleReport) -> ClausiusCheck {
    let residual = clausius_residual(report.beta1, report.beta2, report.q1, report.q2).max(report.clausius_residual);
    ClausiusCheck {
        residual,
        passed: residual <= PHYSICS_TOL,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EfficiencyPower {
    pub eta: f64,
    pub power: f64,
    pub carnot: f64,
}

/// `η = W/Q₁` and `P = W/τ`; fails for cycles that take no heat from the
/// hot bath.
pub fn efficiency_and_power(report: &CycleReport) -> Result<EfficiencyPower> {
    if !(report.q1 > 0.0) {
        return Err(Error::DegenerateCycle(format!(
            "hot-bath heat Q1 = {} is not positive",
            report.q1
        )));
    }
    Ok(EfficiencyPower {
        eta: report.w_ext / report.q1,
        power: report.w_ext / report.tau,
        carnot: 1.0 - report.beta1 / report.beta2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedDiagnostics {
    pub coupling: f64,
    /// `max_t |ΔH(t) - g|`.
    pub max_speed_deviation: f64,
    /// `max_t |s(ψ(0), ψ(t)) - sin²(gt)/2|`.
    pub max_distance_deviation: f64,
    /// Distance from the start is non-decreasing on `[0, τ]`.
    pub distance_monotone: bool,
    /// `max_t |arccos|⟨ψ(0)|ψ(t)⟩| - ∫₀ᵗ ΔH dt'|`: zero when the path is a
    /// geodesic traversed at speed `ΔH`.
    pub geodesic_residual: f64,
}

/// Speed of evolution (`v = ΔH`, ħ = 1) and geodesic diagnostics for the
/// representative block trajectory of a cycle report.
pub fn speed_and_geodesic(report: &CycleReport) -> SpeedDiagnostics {
    let g = report.coupling;
    let max_speed_deviation = report
        .speed_trace
        .iter()
        .map(|&(_, v)| (v - g).abs())
        .fold(0.0, f64::max);
    let max_distance_deviation = report
        .distance_trace
        .iter()
        .map(|&(t, s)| (s - 0.5 * (g * t).sin().powi(2)).abs())
        .fold(0.0, f64::max);
    let tol = 1e-12;
    let distance_monotone = report
        .distance_trace
        .windows(2)
        .filter(|w| w[1].0 <= report.tau * (1.0 + 1e-12))
        .all(|w| w[1].1 >= w[0].1 - tol);

    // Trapezoidal path length along the speed trace vs the FS angle.
    let mut length = 0.0;
    let mut geodesic_residual = 0.0f64;
    for (k, &(t, s)) in report.distance_trace.iter().enumerate() {
        if k > 0 {
            let (t0, v0) = report.speed_trace[k - 1];
            let (_, v1) = report.speed_trace[k];
            length += 0.5 * (v0 + v1) * (t - t0);
        }
        let angle = (1.0 - 2.0 * s).max(0.0).sqrt().min(1.0).acos();
        geodesic_residual = geodesic_residual.max((angle - length).abs());
    }
    SpeedDiagnostics {
        coupling: g,
        max_speed_deviation,
        max_distance_deviation,
        distance_monotone,
        geodesic_residual,
    }
}
