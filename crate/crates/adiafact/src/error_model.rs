//! Experimental imperfection models: imperfect initial-state polarization and
//! static control-amplitude miscalibration, evaluated over seeded Monte-Carlo
//! ensembles.
//!
//! The polarization error mixes the ideal initial state with the maximally
//! mixed state; since the evolution is unitary and I/4 is invariant, each
//! sample is evolved pure and the mixed part is folded in analytically.
//! Amplitude errors are static per sample: both couplings (or pulse channels)
//! are multiplied by (1 + δ) with δ drawn from a normal distribution
//! truncated at ±3σ by resampling.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adiabatic_engine::{
    bell_target, evolve, psi_initial, AdiabaticProblem, EngineError, StepsPolicy,
};
use crate::pulse_opt::{transfer_state_unbounded, ControlProblem, PulseError, PulseSequence};
use crate::qcore::{identity, pure_density, CMatrix, CVector};

/// Resampling cutoff for the amplitude-error distribution, in units of σ.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum ErrorModelError {
    #[error("polarization error {0} outside [0, 1]")]
    BadPolarization(f64),
    #[error("amplitude sigma {0} must be non-negative")]
    BadSigma(f64),
    #[error("ensemble needs at least one sample")]
    EmptyEnsemble,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorConfig {
    /// Weight ε of the maximally mixed component in the initial state.
    pub polarization_error: f64,
    /// Relative std-dev of the static MW amplitude factor.
    pub amplitude_sigma_mw: f64,
    /// Relative std-dev of the static RF amplitude factor.
    pub amplitude_sigma_rf: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl ErrorConfig {
    pub fn validate(&self) -> Result<(), ErrorModelError> {
        if !(0.0..=1.0).contains(&self.polarization_error) {
            return Err(ErrorModelError::BadPolarization(self.polarization_error));
        }
        for s in [self.amplitude_sigma_mw, self.amplitude_sigma_rf] {
            if s < 0.0 {
                return Err(ErrorModelError::BadSigma(s));
            }
        }
        if self.n_samples == 0 {
            return Err(ErrorModelError::EmptyEnsemble);
        }
        Ok(())
    }
}

/// ρ₀ = (1−ε)|Ψi⟩⟨Ψi| + ε·I/4.
pub fn imperfect_initial_state(epsilon: f64) -> Result<CMatrix, ErrorModelError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(ErrorModelError::BadPolarization(epsilon));
    }
    Ok(pure_density(&psi_initial()).scale(1.0 - epsilon) + identity(4).scale(epsilon / 4.0))
}

/// One static amplitude factor 1 + δ, δ ~ N(0, σ²) truncated at ±3σ by
/// resampling. σ = 0 returns exactly 1.
pub fn sample_amplitude_factor(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let dist = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    loop {
        let delta: f64 = dist.sample(rng);
        if delta.abs() <= TRUNCATION_SIGMAS * sigma {
            return 1.0 + delta;
        }
    }
}

fn sample_rng(seed: u64, sample: usize) -> ChaCha8Rng {
    // Per-sample streams keep the draw sequence independent of the rayon
    // schedule.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    rng
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub t: f64,
    pub s: f64,
    pub mean_populations: Vec<f64>,
    pub std_populations: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub n_samples: usize,
    /// Ensemble-averaged final density matrix, polarization error included.
    pub rho_mean: CMatrix,
    /// Mean/std over samples of ⟨Ψf|ρ_final|Ψf⟩.
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub checkpoint_stats: Vec<CheckpointStats>,
}

struct SampleOutcome {
    final_state: CVector,
    fidelity: f64,
    checkpoint_populations: Vec<Vec<f64>>,
}

fn assemble(
    cfg: &ErrorConfig,
    outcomes: Vec<SampleOutcome>,
    checkpoint_meta: &[(f64, f64)],
) -> EnsembleResult {
    let eps = cfg.polarization_error;
    let n = outcomes.len();
    let mut rho_mean = CMatrix::zeros(4, 4);
    for o in &outcomes {
        rho_mean += pure_density(&o.final_state).scale((1.0 - eps) / n as f64);
    }
    rho_mean += identity(4).scale(eps / 4.0);

    let fids: Vec<f64> = outcomes.iter().map(|o| o.fidelity).collect();
    let mean_fidelity = fids.iter().sum::<f64>() / n as f64;
    let var = fids.iter().map(|f| (f - mean_fidelity).powi(2)).sum::<f64>() / n as f64;

    let checkpoint_stats = checkpoint_meta
        .iter()
        .enumerate()
        .map(|(k, &(t, s))| {
            let mut mean = vec![0.0; 4];
            for o in &outcomes {
                for (j, &p) in o.checkpoint_populations[k].iter().enumerate() {
                    mean[j] += (1.0 - eps) * p + eps / 4.0;
                }
            }
            for m in mean.iter_mut() {
                *m /= n as f64;
            }
            // Two-pass variance: immune to cancellation, exactly zero for
            // identical samples.
            let mut var = vec![0.0; 4];
            for o in &outcomes {
                for (j, &p) in o.checkpoint_populations[k].iter().enumerate() {
                    let p = (1.0 - eps) * p + eps / 4.0;
                    var[j] += (p - mean[j]) * (p - mean[j]);
                }
            }
            let std = var.iter().map(|v| (v / n as f64).sqrt()).collect();
            CheckpointStats { t, s, mean_populations: mean, std_populations: std }
        })
        .collect();

    EnsembleResult {
        n_samples: n,
        rho_mean,
        mean_fidelity,
        std_fidelity: var.sqrt(),
        checkpoint_stats,
    }
}

/// Monte-Carlo ensemble of adiabatic evolutions with per-sample static
/// coupling miscalibration. `steps` fixes the propagator step count so every
/// sample costs the same.
pub fn noisy_adiabatic_ensemble(
    p: &AdiabaticProblem,
    cfg: &ErrorConfig,
    steps: usize,
    checkpoints: &[f64],
) -> Result<EnsembleResult, ErrorModelError> {
    cfg.validate()?;
    let target = bell_target();
    let outcomes: Result<Vec<SampleOutcome>, EngineError> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(cfg.seed, k);
            let f1 = sample_amplitude_factor(&mut rng, cfg.amplitude_sigma_mw);
            let f2 = sample_amplitude_factor(&mut rng, cfg.amplitude_sigma_rf);
            let noisy = p.with_coupling_factors(f1, f2);
            let traj = evolve(&noisy, StepsPolicy::fixed(steps), checkpoints)?;
            let overlap = target.dotc(&traj.final_state).norm_sqr();
            Ok(SampleOutcome {
                fidelity: (1.0 - cfg.polarization_error) * overlap + cfg.polarization_error / 4.0,
                checkpoint_populations: traj
                    .checkpoints
                    .iter()
                    .map(|c| c.populations.clone())
                    .collect(),
                final_state: traj.final_state,
            })
        })
        .collect();
    let meta: Vec<(f64, f64)> = checkpoints.iter().map(|&t| (t, p.s_at(t))).collect();
    Ok(assemble(cfg, outcomes?, &meta))
}

/// Monte-Carlo ensemble of pulse-sequence executions with per-sample static
/// per-channel amplitude factors. The scaled amplitudes model a physical
/// overdrive, so hardware bounds are deliberately not enforced here.
pub fn noisy_pulse_ensemble(
    cp: &ControlProblem,
    pulse: &PulseSequence,
    cfg: &ErrorConfig,
) -> Result<EnsembleResult, ErrorModelError> {
    cfg.validate()?;
    let outcomes: Vec<SampleOutcome> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(cfg.seed, k);
            let f_mw = sample_amplitude_factor(&mut rng, cfg.amplitude_sigma_mw);
            let f_rf = sample_amplitude_factor(&mut rng, cfg.amplitude_sigma_rf);
            let scaled = pulse.scaled_per_channel(&[f_mw, f_rf]);
            let final_state = transfer_state_unbounded(cp, &scaled);
            let overlap = cp.target.dotc(&final_state).norm_sqr();
            SampleOutcome {
                fidelity: (1.0 - cfg.polarization_error) * overlap + cfg.polarization_error / 4.0,
                checkpoint_populations: Vec::new(),
                final_state,
            }
        })
        .collect();
    Ok(assemble(cfg, outcomes, &[]))
}

/// Convenience: populations of the computational basis states in a vector.
pub fn populations(state: &DVector<crate::qcore::C64>) -> Vec<f64> {
    state.iter().map(|a| a.norm_sqr()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adiabatic_engine::{uniform_checkpoints, Schedule};
    use crate::qcore::{self, density_defects, fidelity_mixed};
    use approx::assert_abs_diff_eq;

    fn cfg(eps: f64, sigma: f64, n: usize) -> ErrorConfig {
        ErrorConfig {
            polarization_error: eps,
            amplitude_sigma_mw: sigma,
            amplitude_sigma_rf: sigma,
            n_samples: n,
            seed: 7,
        }
    }

    #[test]
    fn imperfect_state_limits() {
        let pure = imperfect_initial_state(0.0).unwrap();
        assert!(qcore::max_abs(&(&pure - pure_density(&psi_initial()))) < 1e-15);
        let mixed = imperfect_initial_state(1.0).unwrap();
        assert!(qcore::max_abs(&(&mixed - identity(4).scale(0.25))) < 1e-15);
        // ε = 0.2 against the ideal final state: tested via fidelity algebra.
        let rho = pure_density(&bell_target()).scale(0.8) + identity(4).scale(0.2 / 4.0);
        assert_abs_diff_eq!(
            fidelity_mixed(&rho, &bell_target()).unwrap(),
            0.85,
            epsilon = 1e-12
        );
        assert!(imperfect_initial_state(1.5).is_err());
    }

    #[test]
    fn truncation_respected() {
        let mut rng = sample_rng(1, 0);
        for _ in 0..20_000 {
            let f = sample_amplitude_factor(&mut rng, 0.05);
            assert!((f - 1.0).abs() <= 3.0 * 0.05 + 1e-15);
        }
        assert_eq!(sample_amplitude_factor(&mut rng, 0.0), 1.0);
    }

    #[test]
    fn noiseless_ensemble_matches_direct_evolution() {
        let p = AdiabaticProblem::two_qubit(1.0, 1.0, Schedule::Linear, 60.0);
        let cps = uniform_checkpoints(60.0, 4);
        let res = noisy_adiabatic_ensemble(&p, &cfg(0.0, 0.0, 3), 1500, &cps).unwrap();
        let traj = evolve(&p, StepsPolicy::fixed(1500), &cps).unwrap();
        let direct = pure_density(&traj.final_state);
        assert!(qcore::max_abs(&(&res.rho_mean - direct)) < 1e-12);
        // n = 3 identical samples: the mean differs from each sample by at
        // most one ulp, so the spread is rounding noise only.
        assert!(res.std_fidelity < 1e-12);
        for (k, st) in res.checkpoint_stats.iter().enumerate() {
            for j in 0..4 {
                assert_abs_diff_eq!(
                    st.mean_populations[j],
                    traj.checkpoints[k].populations[j],
                    epsilon = 1e-12
                );
                assert!(st.std_populations[j] < 1e-12);
            }
        }
    }

    #[test]
    fn fidelity_degrades_monotonically_in_polarization_error() {
        let p = AdiabaticProblem::two_qubit(1.0, 1.0, Schedule::Linear, 60.0);
        let cps = [0.0, 60.0];
        let mut last = f64::INFINITY;
        for eps in [0.0, 0.1, 0.3, 0.6, 1.0] {
            let res = noisy_adiabatic_ensemble(&p, &cfg(eps, 0.0, 2), 1000, &cps).unwrap();
            assert!(res.mean_fidelity < last);
            last = res.mean_fidelity;
        }
        // ε = 1 leaves only the mixed component.
        assert_abs_diff_eq!(last, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn averaged_density_is_physical() {
        let p = AdiabaticProblem::two_qubit(1.0, 1.0, Schedule::Linear, 40.0);
        let res =
            noisy_adiabatic_ensemble(&p, &cfg(0.25, 0.05, 20), 800, &[0.0, 40.0]).unwrap();
        let (h, t, min_ev) = density_defects(&res.rho_mean).unwrap();
        assert!(h < 1e-12 && t < 1e-10 && min_ev > -1e-12);
        assert_abs_diff_eq!(
            fidelity_mixed(&res.rho_mean, &bell_target()).unwrap(),
            res.mean_fidelity,
            epsilon = 1e-10
        );
    }

    #[test]
    fn seeded_runs_bitwise_identical() {
        let p = AdiabaticProblem::two_qubit(1.0, 1.0, Schedule::Linear, 40.0);
        let c = cfg(0.25, 0.05, 16);
        let a = noisy_adiabatic_ensemble(&p, &c, 600, &[0.0, 20.0, 40.0]).unwrap();
        let b = noisy_adiabatic_ensemble(&p, &c, 600, &[0.0, 20.0, 40.0]).unwrap();
        assert_eq!(a.mean_fidelity.to_bits(), b.mean_fidelity.to_bits());
        assert_eq!(a.std_fidelity.to_bits(), b.std_fidelity.to_bits());
        for (x, y) in a.rho_mean.iter().zip(b.rho_mean.iter()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn pulse_ensemble_noiseless_matches_nominal() {
        use crate::pulse_opt::{discretize_schedule, transfer_fidelity};
        let p = AdiabaticProblem::two_qubit(2.0, 2.0, Schedule::Linear, 60.0);
        let cp = ControlProblem {
            duration: 60.0,
            ..ControlProblem::factorization_transfer(60.0, 1e6, 1e6)
        };
        let pulse = discretize_schedule(&p, 1200);
        let nominal = transfer_fidelity(&cp, &pulse).unwrap();
        let res = noisy_pulse_ensemble(&cp, &pulse, &cfg(0.0, 0.0, 2)).unwrap();
        assert_abs_diff_eq!(res.mean_fidelity, nominal, epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.2, 0.05, 0).validate().is_err());
        assert!(cfg(-0.1, 0.05, 5).validate().is_err());
        assert!(cfg(0.2, -0.05, 5).validate().is_err());
        assert!(cfg(0.2, 0.05, 5).validate().is_ok());
    }
}
