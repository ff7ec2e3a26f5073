//! GRAPE-style synthesis of piecewise-constant MW/RF pulses for the
//! Ψi → Ψf state transfer inside the coherence-time budget.
//!
//! Controls are real amplitudes on fixed quadratures in the Hadamard-rotated
//! frame: one MW channel driving 2SzIz and one RF channel driving Sx + Ix.
//! Gradients are exact (eigendecomposition-based Fréchet derivative of each
//! segment propagator), so they match finite differences to near machine
//! precision.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adiabatic_engine::{bell_target, psi_initial, AdiabaticProblem};
use crate::qcore::{c, eigh, identity, spin_half_ops, tensor, CMatrix, CVector, QcoreError};

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("segment {segment} channel {channel} amplitude {amp} exceeds bound {bound}")]
    BoundViolation { segment: usize, channel: usize, amp: f64, bound: f64 },
    #[error("line search stalled for {0} consecutive iterations")]
    NoProgress(usize),
    #[error("pulse file parse error: {0}")]
    ParseError(String),
    #[error(transparent)]
    Qcore(#[from] QcoreError),
}

/// Stalled-iteration count after which the optimizer gives up.
pub const STALL_LIMIT: usize = 20;

#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub drift: CMatrix,
    pub control_ops: Vec<CMatrix>,
    pub channel_names: Vec<String>,
    pub initial: CVector,
    pub target: CVector,
    /// Total pulse duration, µs.
    pub duration: f64,
    /// Per-channel amplitude bound, rad/µs.
    pub bounds: Vec<f64>,
}

impl ControlProblem {
    /// The factorization transfer in the Hadamard-rotated frame:
    /// channels (mw → 2SzIz, rf → Sx+Ix), Ψi → (|01⟩+|10⟩)/√2.
    pub fn factorization_transfer(duration: f64, bound_mw: f64, bound_rf: f64) -> Self {
        let (sx, _, sz) = spin_half_ops();
        let i2 = identity(2);
        let mw = tensor(&sz, &sz).scale(2.0);
        let rf = tensor(&sx, &i2) + tensor(&i2, &sx);
        Self {
            drift: CMatrix::zeros(4, 4),
            control_ops: vec![mw, rf],
            channel_names: vec!["mw".into(), "rf".into()],
            initial: psi_initial(),
            target: bell_target(),
            duration,
            bounds: vec![bound_mw, bound_rf],
        }
    }

    pub fn n_channels(&self) -> usize {
        self.control_ops.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub n_segments: usize,
    /// Segment duration, µs.
    pub dt: f64,
    /// amplitudes[segment][channel], rad/µs.
    pub amplitudes: Vec<Vec<f64>>,
}

impl PulseSequence {
    pub fn zeros(n_segments: usize, duration: f64, n_channels: usize) -> Self {
        Self {
            n_segments,
            dt: duration / n_segments as f64,
            amplitudes: vec![vec![0.0; n_channels]; n_segments],
        }
    }

    pub fn random(n_segments: usize, duration: f64, bounds: &[f64], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amplitudes = (0..n_segments)
            .map(|_| bounds.iter().map(|&b| rng.random_range(-b..=b)).collect())
            .collect();
        Self { n_segments, dt: duration / n_segments as f64, amplitudes }
    }

    pub fn check_bounds(&self, bounds: &[f64]) -> Result<(), PulseError> {
        for (k, seg) in self.amplitudes.iter().enumerate() {
            for (ch, (&amp, &bound)) in seg.iter().zip(bounds).enumerate() {
                if amp.abs() > bound + 1e-12 {
                    return Err(PulseError::BoundViolation { segment: k, channel: ch, amp, bound });
                }
            }
        }
        Ok(())
    }

    /// All amplitudes scaled by a common factor (bounds deliberately not
    /// re-checked; used by the robustness scan).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for seg in &mut out.amplitudes {
            for a in seg.iter_mut() {
                *a *= factor;
            }
        }
        out
    }

    /// Per-channel scaling factors (used by the amplitude-noise model).
    pub fn scaled_per_channel(&self, factors: &[f64]) -> Self {
        let mut out = self.clone();
        for seg in &mut out.amplitudes {
            for (a, &f) in seg.iter_mut().zip(factors) {
                *a *= f;
            }
        }
        out
    }
}

/// Discretize the direct rotating-frame realization of the adiabatic
/// schedule into a pulse: amplitudes sampled at segment midpoints,
/// (mw, rf) = (s·g1, (1−s)·g2).
pub fn discretize_schedule(p: &AdiabaticProblem, n_segments: usize) -> PulseSequence {
    let dt = p.total_time / n_segments as f64;
    let amplitudes = (0..n_segments)
        .map(|k| {
            let s = p.s_at((k as f64 + 0.5) * dt);
            vec![s * p.g1, (1.0 - s) * p.g2]
        })
        .collect();
    PulseSequence { n_segments, dt, amplitudes }
}

fn segment_hamiltonian(cp: &ControlProblem, amps: &[f64]) -> CMatrix {
    let mut h = cp.drift.clone();
    for (op, &u) in cp.control_ops.iter().zip(amps) {
        h += op.scale(u);
    }
    h
}

fn propagate_unchecked(cp: &ControlProblem, pulse: &PulseSequence) -> Result<CVector, PulseError> {
    let mut psi = cp.initial.clone();
    for seg in &pulse.amplitudes {
        let h = segment_hamiltonian(cp, seg);
        let (vals, vecs) = eigh(&h)?;
        let phases = CMatrix::from_diagonal(&vals.map(|e| c(0.0, -e * pulse.dt).exp()));
        psi = &vecs * (phases * (vecs.adjoint() * psi));
    }
    Ok(psi)
}

/// Apply the pulse to the initial state. Segment propagators are
/// exp(−i(drift + Σ u_k C_k)Δt), unitary by construction.
pub fn propagate(cp: &ControlProblem, pulse: &PulseSequence) -> Result<CVector, PulseError> {
    pulse.check_bounds(&cp.bounds)?;
    propagate_unchecked(cp, pulse)
}

/// Apply the pulse without enforcing hardware bounds, for modelling
/// amplitude miscalibration that physically overdrives a channel.
pub fn transfer_state_unbounded(cp: &ControlProblem, pulse: &PulseSequence) -> CVector {
    propagate_unchecked(cp, pulse).expect("segment Hamiltonians are Hermitian")
}

/// |⟨target|U(pulse)|initial⟩|².
pub fn transfer_fidelity(cp: &ControlProblem, pulse: &PulseSequence) -> Result<f64, PulseError> {
    let psi = propagate_unchecked(cp, pulse)?;
    Ok(cp.target.dotc(&psi).norm_sqr().clamp(0.0, 1.0 + 1e-12))
}

/// Fréchet derivative of exp(−iHΔt) in direction C, given the
/// eigendecomposition of H. Loewner kernel on the eigenbasis.
fn propagator_derivative(
    vals: &nalgebra::DVector<f64>,
    vecs: &CMatrix,
    direction: &CMatrix,
    dt: f64,
) -> CMatrix {
    let n = vals.len();
    let m = vecs.adjoint() * direction * vecs;
    let mut kernel = CMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let (ea, eb) = (vals[a], vals[b]);
            let phi = if (ea - eb).abs() > 1e-12 {
                (c(0.0, -ea * dt).exp() - c(0.0, -eb * dt).exp()) / C64::from(ea - eb)
            } else {
                c(0.0, -dt) * c(0.0, -0.5 * (ea + eb) * dt).exp()
            };
            kernel[(a, b)] = m[(a, b)] * phi;
        }
    }
    vecs * kernel * vecs.adjoint()
}

/// Exact gradient of the transfer fidelity with respect to every segment
/// amplitude, via one forward and one backward propagation.
pub fn gradient(cp: &ControlProblem, pulse: &PulseSequence) -> Result<Vec<Vec<f64>>, PulseError> {
    let n = pulse.n_segments;
    let dim = cp.initial.len();
    let mut eigs: Vec<(nalgebra::DVector<f64>, CMatrix)> = Vec::with_capacity(n);
    let mut fwd: Vec<CVector> = Vec::with_capacity(n + 1);
    fwd.push(cp.initial.clone());
    for seg in &pulse.amplitudes {
        let h = segment_hamiltonian(cp, seg);
        let (vals, vecs) = eigh(&h)?;
        let phases = CMatrix::from_diagonal(&vals.map(|e| c(0.0, -e * pulse.dt).exp()));
        let psi = &vecs * (phases * (vecs.adjoint() * fwd.last().expect("nonempty")));
        eigs.push((vals, vecs));
        fwd.push(psi);
    }
    // bwd[k] = (U_{k+1} ··· U_{n−1})† |target⟩
    let mut bwd: Vec<CVector> = vec![CVector::zeros(dim); n];
    let mut chi = cp.target.clone();
    for k in (0..n).rev() {
        bwd[k] = chi.clone();
        let (vals, vecs) = &eigs[k];
        let phases = CMatrix::from_diagonal(&vals.map(|e| c(0.0, e * pulse.dt).exp()));
        chi = vecs * (phases * (vecs.adjoint() * chi));
    }
    let overlap = cp.target.dotc(fwd.last().expect("final state"));
    let mut grad = vec![vec![0.0; cp.n_channels()]; n];
    for k in 0..n {
        let (vals, vecs) = &eigs[k];
        for (ch, op) in cp.control_ops.iter().enumerate() {
            let du = propagator_derivative(vals, vecs, op, pulse.dt);
            let term = bwd[k].dotc(&(du * &fwd[k]));
            grad[k][ch] = 2.0 * (overlap.conj() * term).re;
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub fidelity: f64,
    pub step_size: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub pulse: PulseSequence,
    pub fidelity: f64,
    pub log: Vec<IterRecord>,
    pub reached_target: bool,
}

fn clip(pulse: &mut PulseSequence, bounds: &[f64]) {
    for seg in &mut pulse.amplitudes {
        for (a, &b) in seg.iter_mut().zip(bounds) {
            *a = a.clamp(-b, b);
        }
    }
}

/// Gradient ascent with backtracking line search and amplitude clipping.
/// Returns the first pulse reaching `target_fid`, or the best found after
/// `max_iters`. Errors with NoProgress when the line search stalls for
/// STALL_LIMIT consecutive iterations.
pub fn optimize(
    cp: &ControlProblem,
    init: &PulseSequence,
    max_iters: usize,
    target_fid: f64,
) -> Result<OptimizeResult, PulseError> {
    init.check_bounds(&cp.bounds)?;
    let mut pulse = init.clone();
    let mut fid = transfer_fidelity(cp, &pulse)?;
    let mut log = Vec::new();
    let mut step = 1.0;
    let mut stalls = 0;
    for iter in 0..max_iters {
        if fid >= target_fid {
            return Ok(OptimizeResult { pulse, fidelity: fid, log, reached_target: true });
        }
        let grad = gradient(cp, &pulse)?;
        let grad_norm: f64 =
            grad.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < 1e-12 {
            break;
        }
        let mut improved = false;
        let mut alpha = step;
        for _ in 0..40 {
            let mut trial = pulse.clone();
            for (seg, gseg) in trial.amplitudes.iter_mut().zip(&grad) {
                for (a, g) in seg.iter_mut().zip(gseg) {
                    *a += alpha * g;
                }
            }
            clip(&mut trial, &cp.bounds);
            let trial_fid = transfer_fidelity(cp, &trial)?;
            if trial_fid > fid + 1e-14 {
                pulse = trial;
                fid = trial_fid;
                step = (alpha * 2.0).min(1e4);
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        log.push(IterRecord { iter, fidelity: fid, step_size: if improved { step / 2.0 } else { 0.0 }, grad_norm });
        if improved {
            stalls = 0;
        } else {
            stalls += 1;
            if stalls >= STALL_LIMIT {
                return Err(PulseError::NoProgress(stalls));
            }
        }
    }
    let reached = fid >= target_fid;
    Ok(OptimizeResult { pulse, fidelity: fid, log, reached_target: reached })
}

/// Fidelity of the pulse with every amplitude multiplied by (1+ε), per ε.
pub fn robustness_scan(
    cp: &ControlProblem,
    pulse: &PulseSequence,
    epsilons: &[f64],
) -> Result<Vec<(f64, f64)>, PulseError> {
    epsilons
        .iter()
        .map(|&eps| {
            let f = transfer_fidelity(cp, &pulse.scaled(1.0 + eps))?;
            Ok((eps, f))
        })
        .collect()
}

/// Pulse-file text format: a commented header (segments, Δt, channels,
/// bounds) followed by one line of decimal amplitudes per segment.
pub fn render_pulse_file(
    pulse: &PulseSequence,
    channel_names: &[String],
    bounds: &[f64],
) -> String {
    let mut out = String::new();
    writeln!(out, "# adiafact pulse v1").unwrap();
    writeln!(out, "n_segments {}", pulse.n_segments).unwrap();
    writeln!(out, "dt_us {:.12e}", pulse.dt).unwrap();
    writeln!(out, "channels {}", channel_names.join(" ")).unwrap();
    writeln!(
        out,
        "bounds {}",
        bounds.iter().map(|b| format!("{b:.12e}")).collect::<Vec<_>>().join(" ")
    )
    .unwrap();
    for seg in &pulse.amplitudes {
        let line: Vec<String> = seg.iter().map(|a| format!("{a:.12e}")).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    out
}

pub fn parse_pulse_file(text: &str) -> Result<(PulseSequence, Vec<String>, Vec<f64>), PulseError> {
    let mut n_segments = None;
    let mut dt = None;
    let mut channels: Vec<String> = Vec::new();
    let mut bounds: Vec<f64> = Vec::new();
    let mut amplitudes: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().expect("nonempty line");
        match head {
            "n_segments" => {
                n_segments = Some(
                    parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| PulseError::ParseError("bad n_segments".into()))?,
                )
            }
            "dt_us" => {
                dt = Some(
                    parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| PulseError::ParseError("bad dt_us".into()))?,
                )
            }
            "channels" => channels = parts.map(str::to_string).collect(),
            "bounds" => {
                bounds = parts
                    .map(|v| v.parse().map_err(|_| PulseError::ParseError("bad bound".into())))
                    .collect::<Result<_, _>>()?
            }
            _ => {
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|_| PulseError::ParseError(format!("bad amplitude {v}"))))
                    .collect::<Result<_, _>>()?;
                amplitudes.push(row);
            }
        }
    }
    let n_segments =
        n_segments.ok_or_else(|| PulseError::ParseError("missing n_segments".into()))?;
    let dt = dt.ok_or_else(|| PulseError::ParseError("missing dt_us".into()))?;
    if amplitudes.len() != n_segments {
        return Err(PulseError::ParseError(format!(
            "expected {n_segments} segment lines, found {}",
            amplitudes.len()
        )));
    }
    Ok((PulseSequence { n_segments, dt, amplitudes }, channels, bounds))
}
