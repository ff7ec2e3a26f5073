//! 16-setting two-qubit state tomography: readout-pulse simulation and
//! linear least-squares reconstruction of the density matrix.
//!
//! Pulse convention: a rotation by angle θ about the axis (cos φ, sin φ, 0)
//! is exp(−iθ(cos φ·Sx + sin φ·Sy)) on the addressed qubit; π pulses rotate
//! about x. Settings enumerate (MW pulse, RF pulse) with the MW (electron)
//! index varying slowest, pulse order [I, π, π/2_x, π/2_y].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adiabatic_engine::bell_target;
use crate::qcore::{self, eigh, identity, spin_half_ops, tensor, CMatrix, QcoreError};

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error("expected all 16 settings exactly once, got {0}")]
    IncompleteSettings(String),
    #[error("design matrix is rank deficient (condition {0:.3e}); readout pulses are broken")]
    RankDeficient(f64),
    #[error(transparent)]
    Qcore(#[from] QcoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadoutPulse {
    Identity,
    Pi,
    HalfPiX,
    HalfPiY,
}

pub const PULSE_ORDER: [ReadoutPulse; 4] =
    [ReadoutPulse::Identity, ReadoutPulse::Pi, ReadoutPulse::HalfPiX, ReadoutPulse::HalfPiY];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadoutSetting {
    pub mw_pulse: ReadoutPulse,
    pub rf_pulse: ReadoutPulse,
}

/// The 16 settings in fixed order: MW index major, RF index minor.
pub fn all_settings() -> Vec<ReadoutSetting> {
    let mut out = Vec::with_capacity(16);
    for &mw in &PULSE_ORDER {
        for &rf in &PULSE_ORDER {
            out.push(ReadoutSetting { mw_pulse: mw, rf_pulse: rf });
        }
    }
    out
}

fn single_qubit_unitary(p: ReadoutPulse) -> CMatrix {
    let (sx, sy, _) = spin_half_ops();
    let (theta, phi): (f64, f64) = match p {
        ReadoutPulse::Identity => return identity(2),
        ReadoutPulse::Pi => (std::f64::consts::PI, 0.0),
        ReadoutPulse::HalfPiX => (std::f64::consts::FRAC_PI_2, 0.0),
        ReadoutPulse::HalfPiY => (std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
    };
    let axis = sx.scale(phi.cos()) + sy.scale(phi.sin());
    qcore::expm_hermitian(&axis, theta).expect("spin axis is Hermitian")
}

/// The two-qubit readout unitary U = U_MW ⊗ U_RF.
pub fn setting_unitary(s: &ReadoutSetting) -> CMatrix {
    tensor(&single_qubit_unitary(s.mw_pulse), &single_qubit_unitary(s.rf_pulse))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TomographyRecord {
    pub setting_index: usize,
    pub populations: Vec<f64>,
    /// None means exact (infinite-shot) populations.
    pub shots: Option<u64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Shots {
    Exact,
    Finite(u64),
}

/// Populations after the readout pulses: diag(U ρ U†). Finite-shot mode
/// draws one multinomial sample with a per-setting derived seed.
pub fn simulate_readout(
    rho: &CMatrix,
    setting_index: usize,
    setting: &ReadoutSetting,
    shots: Shots,
    seed: u64,
) -> TomographyRecord {
    let u = setting_unitary(setting);
    let rotated = &u * rho * u.adjoint();
    let exact: Vec<f64> = (0..4).map(|k| rotated[(k, k)].re.max(0.0)).collect();
    match shots {
        Shots::Exact => {
            TomographyRecord { setting_index, populations: exact, shots: None }
        }
        Shots::Finite(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(setting_index as u64);
            let mut counts = [0u64; 4];
            let total: f64 = exact.iter().sum();
            for _ in 0..n {
                let r: f64 = rand::Rng::random::<f64>(&mut rng) * total;
                let mut acc = 0.0;
                let mut idx = 3;
                for (k, p) in exact.iter().enumerate() {
                    acc += p;
                    if r < acc {
                        idx = k;
                        break;
                    }
                }
                counts[idx] += 1;
            }
            let populations = counts.iter().map(|&c| c as f64 / n as f64).collect();
            TomographyRecord { setting_index, populations, shots: Some(n) }
        }
    }
}

/// Simulate all 16 settings in their fixed order.
pub fn simulate_all(rho: &CMatrix, shots: Shots, seed: u64) -> Vec<TomographyRecord> {
    all_settings()
        .iter()
        .enumerate()
        .map(|(i, s)| simulate_readout(rho, i, s, shots, seed))
        .collect()
}

/// Hermitian product-Pauli basis {σ_i ⊗ σ_j}, 16 operators, tr(B_a B_b) = 4δ.
fn pauli_product_basis() -> Vec<CMatrix> {
    let (sx, sy, sz) = spin_half_ops();
    let singles = [identity(2), sx.scale(2.0), sy.scale(2.0), sz.scale(2.0)];
    let mut out = Vec::with_capacity(16);
    for a in &singles {
        for b in &singles {
            out.push(tensor(a, b));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub rho: CMatrix,
    /// Raw least-squares estimate before the physicality projection.
    pub rho_raw: CMatrix,
    pub condition_number: f64,
}

/// Linear least-squares inversion of the 64 population equations for the 16
/// real Pauli coefficients, followed by projection to the physical cone
/// (negative eigenvalues clipped, trace renormalized).
pub fn reconstruct(records: &[TomographyRecord]) -> Result<Reconstruction, TomographyError> {
    let settings = all_settings();
    if records.len() != 16 {
        return Err(TomographyError::IncompleteSettings(format!("{} records", records.len())));
    }
    let mut seen = [false; 16];
    for r in records {
        if r.setting_index >= 16 || seen[r.setting_index] {
            return Err(TomographyError::IncompleteSettings(format!(
                "bad or duplicate setting index {}",
                r.setting_index
            )));
        }
        seen[r.setting_index] = true;
    }

    let basis = pauli_product_basis();
    let mut a = DMatrix::<f64>::zeros(64, 16);
    let mut b = DVector::<f64>::zeros(64);
    for r in records {
        let u = setting_unitary(&settings[r.setting_index]);
        for m in 0..4 {
            let row = r.setting_index * 4 + m;
            b[row] = r.populations[m];
            for (k, bk) in basis.iter().enumerate() {
                let rotated = &u * bk * u.adjoint();
                a[(row, k)] = rotated[(m, m)].re;
            }
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition_number = smax / smin.max(f64::MIN_POSITIVE);
    if smin < 1e-10 * smax {
        return Err(TomographyError::RankDeficient(condition_number));
    }
    let coeffs = svd.solve(&b, 1e-12).expect("svd computed with vectors");

    let mut rho_raw = CMatrix::zeros(4, 4);
    for (k, bk) in basis.iter().enumerate() {
        rho_raw += bk.scale(coeffs[k]);
    }
    // Hermitize against numerical asymmetry, then clip and renormalize.
    let herm = (&rho_raw + rho_raw.adjoint()).scale(0.5);
    let (vals, vecs) = eigh(&herm)?;
    let clipped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let mut rho = CMatrix::zeros(4, 4);
    for (k, &v) in clipped.iter().enumerate() {
        let col = vecs.column(k);
        rho += (col * col.adjoint()).scale(v / total);
    }
    Ok(Reconstruction { rho, rho_raw, condition_number })
}

/// ⟨Ψf|ρ|Ψf⟩ against the ideal final state (|01⟩+|10⟩)/√2.
pub fn report_fidelity(rho: &CMatrix) -> f64 {
    qcore::fidelity_mixed(rho, &bell_target()).expect("4-dim density matrix")
}

/// Random physical density matrix (Ginibre ensemble), for tests and
/// round-trip checks.
pub fn random_density_matrix(dim: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(dim, dim, |_, _| {
        qcore::c(
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng),
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng),
        )
    });
    let rho = &g * g.adjoint();
    let tr = rho.trace().re;
    rho.scale(1.0 / tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::basis_state;
    use approx::assert_abs_diff_eq;

    #[test]
    fn settings_enumeration_fixed() {
        let s = all_settings();
        assert_eq!(s.len(), 16);
        assert_eq!(s[0], ReadoutSetting { mw_pulse: ReadoutPulse::Identity, rf_pulse: ReadoutPulse::Identity });
        assert_eq!(s[1].rf_pulse, ReadoutPulse::Pi);
        assert_eq!(s[4].mw_pulse, ReadoutPulse::Pi);
        // All distinct.
        for i in 0..16 {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
    }

    #[test]
    fn identity_setting_reads_populations() {
        let rho = qcore::pure_density(&basis_state(4, 0));
        let rec = simulate_readout(&rho, 0, &all_settings()[0], Shots::Exact, 0);
        assert_eq!(rec.populations, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn mw_pi_flips_electron() {
        let rho = qcore::pure_density(&basis_state(4, 0));
        let setting = ReadoutSetting { mw_pulse: ReadoutPulse::Pi, rf_pulse: ReadoutPulse::Identity };
        let rec = simulate_readout(&rho, 4, &setting, Shots::Exact, 0);
        for (k, p) in rec.populations.iter().enumerate() {
            assert_abs_diff_eq!(*p, if k == 2 { 1.0 } else { 0.0 }, epsilon = 1e-12);
        }
    }

    #[test]
    fn half_pi_on_both_matches_direct_conjugation() {
        // Oracle: direct 4×4 conjugation with the closed-form rotation.
        let rho = qcore::pure_density(&bell_target());
        let setting = ReadoutSetting { mw_pulse: ReadoutPulse::HalfPiX, rf_pulse: ReadoutPulse::HalfPiX };
        let rec = simulate_readout(&rho, 10, &setting, Shots::Exact, 0);
        let (sx, _, _) = spin_half_ops();
        let u1 = qcore::expm_hermitian(&sx, std::f64::consts::FRAC_PI_2).unwrap();
        let u = tensor(&u1, &u1);
        let rotated = &u * &rho * u.adjoint();
        for k in 0..4 {
            assert_abs_diff_eq!(rec.populations[k], rotated[(k, k)].re, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_round_trip_bell_and_mixed() {
        for rho in [qcore::pure_density(&bell_target()), identity(4).scale(0.25)] {
            let records = simulate_all(&rho, Shots::Exact, 0);
            let rec = reconstruct(&records).unwrap();
            let diff = (&rec.rho - &rho).map(|z| z.norm()).max();
            assert!(diff < 1e-9, "entrywise deviation {diff}");
        }
    }

    #[test]
    fn exact_round_trip_random_states() {
        for seed in 0..50u64 {
            let rho = random_density_matrix(4, seed);
            let records = simulate_all(&rho, Shots::Exact, 0);
            let rec = reconstruct(&records).unwrap();
            // Fidelity via eigen-expansion of the true state.
            let diff = (&rec.rho - &rho).map(|z| z.norm()).max();
            assert!(diff < 1e-9, "seed {seed}: deviation {diff}");
            let (h, t, minev) = qcore::density_defects(&rec.rho).unwrap();
            assert!(h < 1e-9 && t < 1e-9 && minev > -1e-9);
        }
    }

    #[test]
    fn finite_shot_round_trip_on_bell() {
        let rho = qcore::pure_density(&bell_target());
        let records = simulate_all(&rho, Shots::Finite(100_000), 12345);
        for r in &records {
            let sum: f64 = r.populations.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
        let rec = reconstruct(&records).unwrap();
        let fid = report_fidelity(&rec.rho);
        assert!(fid >= 0.995, "finite-shot fidelity {fid}");
    }

    #[test]
    fn projection_does_not_increase_distance() {
        let truth = random_density_matrix(4, 99);
        for seed in 0..20u64 {
            let records = simulate_all(&truth, Shots::Finite(2000), seed);
            let rec = reconstruct(&records).unwrap();
            let d_raw = (&rec.rho_raw - &truth).map(|z| z.norm_sqr()).sum().sqrt();
            let d_proj = (&rec.rho - &truth).map(|z| z.norm_sqr()).sum().sqrt();
            assert!(d_proj <= d_raw + 1e-12, "seed {seed}: {d_proj} > {d_raw}");
        }
    }

    #[test]
    fn condition_number_deterministic() {
        let rho = identity(4).scale(0.25);
        let a = reconstruct(&simulate_all(&rho, Shots::Exact, 0)).unwrap();
        let b = reconstruct(&simulate_all(&rho, Shots::Exact, 0)).unwrap();
        assert_eq!(a.condition_number, b.condition_number);
        assert!(a.condition_number.is_finite());
    }

    #[test]
    fn report_fidelity_reference_points() {
        assert_abs_diff_eq!(report_fidelity(&qcore::pure_density(&bell_target())), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report_fidelity(&identity(4).scale(0.25)), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn incomplete_settings_rejected() {
        let rho = identity(4).scale(0.25);
        let mut records = simulate_all(&rho, Shots::Exact, 0);
        records.pop();
        assert!(matches!(reconstruct(&records), Err(TomographyError::IncompleteSettings(_))));
    }
}
