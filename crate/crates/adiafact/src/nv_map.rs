//! NV-center ground-state level structure and the rotating-frame mapping
//! from interpolated-Hamiltonian couplings to MW/RF control parameters.
//!
//! The 9-level electron (S=1) × ¹⁴N nuclear (I=1) manifold is used only for
//! the secular level-energy table; the driven dynamics live in the encoded
//! 4-dimensional |m_s, m_I⟩ subspace with the electron qubit as the left
//! tensor factor.

use serde::{Deserialize, Serialize};

use crate::adiabatic_engine::{AdiabaticProblem, EngineError};
use crate::qcore::{cr, identity, spin_half_ops, tensor, CMatrix};

/// Static NV parameters. D, Q and Bz come from the experiment description;
/// gyromagnetic ratios and the secular hyperfine constant are standard
/// reference values and stay configurable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NvParams {
    /// Zero-field splitting, MHz.
    pub d_mhz: f64,
    /// Nuclear quadrupolar splitting, MHz.
    pub q_mhz: f64,
    /// Electron gyromagnetic ratio, MHz/G.
    pub gamma_e_mhz_per_g: f64,
    /// ¹⁴N nuclear gyromagnetic ratio, kHz/G.
    pub gamma_n_khz_per_g: f64,
    /// On-axis magnetic field, G.
    pub b_z_gauss: f64,
    /// Secular hyperfine coupling A∥, MHz.
    pub a_par_mhz: f64,
}

impl Default for NvParams {
    fn default() -> Self {
        Self {
            d_mhz: 2870.0,
            q_mhz: -4.95,
            gamma_e_mhz_per_g: 2.8025,
            gamma_n_khz_per_g: 0.3077,
            b_z_gauss: 510.0,
            a_par_mhz: -2.16,
        }
    }
}

/// One row of the 9-level table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevelEnergy {
    pub m_s: i8,
    pub m_i: i8,
    pub energy_mhz: f64,
}

/// Secular level energies E(m_s, m_I) = D·m_s² + γe·Bz·m_s + Q·m_I²
/// + γn·Bz·m_I + A∥·m_s·m_I, for m_s, m_I ∈ {−1, 0, +1}.
pub fn nv_level_energies(p: &NvParams) -> Vec<LevelEnergy> {
    let gamma_n_mhz = p.gamma_n_khz_per_g * 1e-3;
    let mut out = Vec::with_capacity(9);
    for m_s in [-1i8, 0, 1] {
        for m_i in [-1i8, 0, 1] {
            let (ms, mi) = (m_s as f64, m_i as f64);
            let energy_mhz = p.d_mhz * ms * ms
                + p.gamma_e_mhz_per_g * p.b_z_gauss * ms
                + p.q_mhz * mi * mi
                + gamma_n_mhz * p.b_z_gauss * mi
                + p.a_par_mhz * ms * mi;
            out.push(LevelEnergy { m_s, m_i, energy_mhz });
        }
    }
    out
}

/// Rotating-frame drive parameters (Rabi frequencies and detunings).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RotFrameParams {
    pub omega_mw: f64,
    pub omega_rf: f64,
    pub delta_mw: f64,
    pub delta_rf: f64,
}

/// The driven rotating-frame two-qubit Hamiltonian
/// 2Ω_MW·SxIz − δ_RF·Iz + Ω_RF·Ix − δ_MW·Sz, plus the identity coefficient
/// (δ_MW + δ_RF) returned separately as a scalar energy offset.
pub fn rot_frame_hamiltonian(r: &RotFrameParams) -> (CMatrix, f64) {
    let (sx, _, sz) = spin_half_ops();
    let i2 = identity(2);
    let sx_iz = tensor(&sx, &sz);
    let iz = tensor(&i2, &sz);
    let ix = tensor(&i2, &sx);
    let sz_full = tensor(&sz, &i2);
    let h = sx_iz.scale(2.0 * r.omega_mw) - iz.scale(r.delta_rf) + ix.scale(r.omega_rf)
        - sz_full.scale(r.delta_mw);
    (h, r.delta_mw + r.delta_rf)
}

/// Conjugate a 4×4 operator by a Hadamard on the electron (left) factor;
/// involutive, exchanges Sx and Sz on that factor.
pub fn hadamard_conjugate_electron(h: &CMatrix) -> CMatrix {
    assert_eq!(h.nrows(), 4);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let hd = CMatrix::from_row_slice(2, 2, &[cr(s), cr(s), cr(s), cr(-s)]);
    let full = tensor(&hd, &identity(2));
    &full * h * &full
}

/// Direct rotating-frame realization of H(t): δ_RF = 0, Ω_MW = s·g1,
/// Ω_RF = (1−s)·g2 = −δ_MW. Hadamard-conjugating the resulting operator
/// reproduces the interpolated Hamiltonian entrywise.
pub fn schedule_to_controls(p: &AdiabaticProblem, t: f64) -> Result<RotFrameParams, EngineError> {
    if !(0.0..=p.total_time).contains(&t) {
        return Err(EngineError::TimeOutOfRange { t, total: p.total_time });
    }
    let s = p.s_at(t);
    Ok(RotFrameParams {
        omega_mw: s * p.g1,
        omega_rf: (1.0 - s) * p.g2,
        delta_mw: -(1.0 - s) * p.g2,
        delta_rf: 0.0,
    })
}
