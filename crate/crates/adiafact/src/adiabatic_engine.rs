//! Interpolated-Hamiltonian evolution H(t) = (1−s)H0 + s·Hp: Schrödinger
//! propagation, spectrum/gap scans, and checkpointed trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qcore::{
    self, eigh, expm_hermitian, fix_phase, identity, max_abs, spin_half_ops,
    tensor, CMatrix, CVector, QcoreError,
};

/// Relative tolerance below which adjacent eigenvalues count as degenerate
/// when measuring the gap above the ground subspace.
pub const DEGENERACY_REL_TOL: f64 = 1e-8;
/// dt-refinement convergence target on final-state fidelity.
pub const REFINE_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("time {t} outside [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },
    #[error("ground state of H0 is degenerate (gap {gap:.3e})")]
    DegenerateGround { gap: f64 },
    #[error("dt refinement did not converge below {tol:.1e} at {steps} steps (residual {residual:.3e})")]
    NonConvergent { steps: usize, tol: f64, residual: f64 },
    #[error("H0 and Hp commute; the interpolation would have level crossings")]
    CommutingHamiltonians,
    #[error(transparent)]
    Qcore(#[from] QcoreError),
}

/// Interpolation schedule with s(0)=0, s(T)=1, monotone nondecreasing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Schedule {
    Linear,
    /// s(t) = (t/T)^power, power ≥ 1.
    Polynomial { power: f64 },
    /// Piecewise-linear through (t/T, s) points; endpoints (0,0),(1,1) implied.
    Tabulated { points: Vec<(f64, f64)> },
}

impl Schedule {
    /// s as a function of normalized time u = t/T ∈ [0,1].
    pub fn value(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Schedule::Linear => u,
            Schedule::Polynomial { power } => u.powf(*power),
            Schedule::Tabulated { points } => {
                let mut prev = (0.0, 0.0);
                for &(pu, ps) in points.iter().chain(std::iter::once(&(1.0, 1.0))) {
                    if u <= pu {
                        if (pu - prev.0).abs() < 1e-15 {
                            return ps;
                        }
                        return prev.1 + (ps - prev.1) * (u - prev.0) / (pu - prev.0);
                    }
                    prev = (pu, ps);
                }
                1.0
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdiabaticProblem {
    /// Unscaled mixing operator (Σ Sx per qubit); H0 = g2 · h0_base.
    pub h0_base: CMatrix,
    /// Unscaled problem operator; Hp = g1 · hp_base.
    pub hp_base: CMatrix,
    pub g1: f64,
    pub g2: f64,
    pub schedule: Schedule,
    pub total_time: f64,
}

impl AdiabaticProblem {
    /// Build from an arbitrary unscaled problem operator over n qubits, with
    /// H0 = g2·Σ_k Sx^(k) (the standard transverse-field mixer).
    pub fn new(
        hp_base: CMatrix,
        g1: f64,
        g2: f64,
        schedule: Schedule,
        total_time: f64,
    ) -> Result<Self, EngineError> {
        let dim = hp_base.nrows();
        let n = dim.trailing_zeros() as usize;
        assert_eq!(1usize << n, dim, "dimension must be a power of two");
        let (sx, _, _) = spin_half_ops();
        let i2 = identity(2);
        let mut h0_base = CMatrix::zeros(dim, dim);
        for k in 0..n {
            let mut op = identity(1);
            for j in 0..n {
                op = tensor(&op, if j == k { &sx } else { &i2 });
            }
            h0_base += op;
        }
        let problem = Self { h0_base, hp_base, g1, g2, schedule, total_time };
        if dim > 1 {
            let comm = &problem.h0() * &problem.hp() - &problem.hp() * &problem.h0();
            if max_abs(&comm) < 1e-12 {
                return Err(EngineError::CommutingHamiltonians);
            }
        }
        Ok(problem)
    }

    /// The canonical two-qubit factorization problem: Hp = g1·2SzIz.
    pub fn two_qubit(g1: f64, g2: f64, schedule: Schedule, total_time: f64) -> Self {
        let (_, _, sz) = spin_half_ops();
        let hp_base = tensor(&sz, &sz).scale(2.0);
        Self::new(hp_base, g1, g2, schedule, total_time).expect("2SzIz does not commute with the mixer")
    }

    pub fn h0(&self) -> CMatrix {
        self.h0_base.scale(self.g2)
    }

    pub fn hp(&self) -> CMatrix {
        self.hp_base.scale(self.g1)
    }

    pub fn dim(&self) -> usize {
        self.hp_base.nrows()
    }

    pub fn s_at(&self, t: f64) -> f64 {
        self.schedule.value(t / self.total_time)
    }

    /// Same problem with multiplicatively perturbed couplings.
    pub fn with_coupling_factors(&self, f1: f64, f2: f64) -> Self {
        let mut p = self.clone();
        p.g1 *= f1;
        p.g2 *= f2;
        p
    }
}

/// H(t) = (1−s(t))·H0 + s(t)·Hp.
pub fn hamiltonian_at(p: &AdiabaticProblem, t: f64) -> Result<CMatrix, EngineError> {
    if !(0.0..=p.total_time).contains(&t) {
        return Err(EngineError::TimeOutOfRange { t, total: p.total_time });
    }
    let s = p.s_at(t);
    Ok(p.h0().scale(1.0 - s) + p.hp().scale(s))
}

/// Ground state of H0, global phase fixed (first nonzero amplitude real
/// positive). Errors when the ground level is degenerate.
pub fn initial_ground_state(p: &AdiabaticProblem) -> Result<CVector, EngineError> {
    let h0 = p.h0();
    let (vals, vecs) = eigh(&h0)?;
    if p.dim() > 1 {
        let gap = vals[1] - vals[0];
        if gap <= 1e-9 * qcore::matrix_scale(&h0) {
            return Err(EngineError::DegenerateGround { gap });
        }
    }
    Ok(fix_phase(&vecs.column(0).into_owned()))
}

/// Squared projection of `state` onto the eigenspace of H within
/// `degeneracy_tol` of the lowest eigenvalue.
pub fn ground_subspace_fidelity(
    state: &CVector,
    h: &CMatrix,
    degeneracy_tol: f64,
) -> Result<f64, EngineError> {
    let (vals, vecs) = eigh(h)?;
    let e0 = vals[0];
    let mut acc = 0.0;
    for k in 0..vals.len() {
        if vals[k] - e0 <= degeneracy_tol {
            acc += vecs.column(k).dotc(state).norm_sqr();
        }
    }
    Ok(acc.clamp(0.0, 1.0 + 1e-12))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub s: f64,
    pub populations: Vec<f64>,
    pub ground_fidelity: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub checkpoints: Vec<Checkpoint>,
    pub states: Vec<CVector>,
    pub final_state: CVector,
    pub steps_used: usize,
}

/// Step-count policy for the dt-refinement loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepsPolicy {
    pub initial_steps: usize,
    pub max_steps: usize,
    pub refine_tol: f64,
}

impl Default for StepsPolicy {
    fn default() -> Self {
        Self { initial_steps: 1000, max_steps: 1 << 21, refine_tol: REFINE_TOL }
    }
}

impl StepsPolicy {
    /// No refinement: a single pass at the given step count. Used by the
    /// Monte Carlo ensemble where per-sample refinement would be wasteful.
    pub fn fixed(steps: usize) -> Self {
        Self { initial_steps: steps, max_steps: steps, refine_tol: f64::INFINITY }
    }
}

fn propagate_fixed(
    p: &AdiabaticProblem,
    steps: usize,
    checkpoints: &[f64],
) -> Result<(Vec<CVector>, CVector), EngineError> {
    let psi0 = initial_ground_state(p)?;
    let mut psi = psi0.clone();
    let total = p.total_time;
    let dt = total / steps as f64;
    let mut out: Vec<CVector> = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0;
    // Record any checkpoints at t = 0.
    while next_cp < checkpoints.len() && checkpoints[next_cp] <= 0.0 {
        out.push(psi.clone());
        next_cp += 1;
    }
    let mut t = 0.0;
    for k in 0..steps {
        let t_end = if k + 1 == steps { total } else { (k + 1) as f64 * dt };
        // Split the step at any checkpoint falling inside it so states are
        // sampled exactly at the requested times.
        let mut seg_start = t;
        while next_cp < checkpoints.len() && checkpoints[next_cp] <= t_end {
            let tc = checkpoints[next_cp];
            if tc > seg_start {
                let h = hamiltonian_at(p, (seg_start + tc) / 2.0)?;
                psi = expm_hermitian(&h, tc - seg_start)? * psi;
                seg_start = tc;
            }
            out.push(psi.clone());
            next_cp += 1;
        }
        if t_end > seg_start {
            let h = hamiltonian_at(p, (seg_start + t_end) / 2.0)?;
            psi = expm_hermitian(&h, t_end - seg_start)? * psi;
        }
        t = t_end;
    }
    while next_cp < checkpoints.len() {
        out.push(psi.clone());
        next_cp += 1;
    }
    Ok((out, psi))
}

/// Integrate the Schrödinger equation with the piecewise-constant midpoint
/// propagator, refining dt until the final state is converged.
pub fn evolve(
    p: &AdiabaticProblem,
    policy: StepsPolicy,
    checkpoints: &[f64],
) -> Result<Trajectory, EngineError> {
    assert!(
        checkpoints.windows(2).all(|w| w[0] <= w[1]),
        "checkpoints must be sorted"
    );
    for &t in checkpoints {
        if !(0.0..=p.total_time + 1e-12).contains(&t) {
            return Err(EngineError::TimeOutOfRange { t, total: p.total_time });
        }
    }
    let mut steps = policy.initial_steps.max(1);
    let (mut states, mut final_state) = propagate_fixed(p, steps, checkpoints)?;
    let mut residual = f64::INFINITY;
    while policy.refine_tol.is_finite() {
        if steps * 2 > policy.max_steps {
            return Err(EngineError::NonConvergent { steps, tol: policy.refine_tol, residual });
        }
        let (states2, final2) = propagate_fixed(p, steps * 2, checkpoints)?;
        residual = (1.0 - qcore::fidelity(&final2, &final_state)?).abs();
        states = states2;
        final_state = final2;
        steps *= 2;
        if residual < policy.refine_tol {
            break;
        }
    }
    let steps_used = steps;

    let mut cps = Vec::with_capacity(checkpoints.len());
    for (i, &t) in checkpoints.iter().enumerate() {
        let psi = &states[i];
        let h = hamiltonian_at(p, t)?;
        let tol = DEGENERACY_REL_TOL * qcore::matrix_scale(&h);
        let populations: Vec<f64> = psi.iter().map(|a| a.norm_sqr()).collect();
        cps.push(Checkpoint {
            t,
            s: p.s_at(t),
            populations,
            ground_fidelity: ground_subspace_fidelity(psi, &h, tol)?,
            energy: psi.dotc(&(&h * psi)).re,
        });
    }
    Ok(Trajectory { checkpoints: cps, states, final_state, steps_used })
}

/// `count` uniformly spaced checkpoint times over [0, T], endpoints included.
pub fn uniform_checkpoints(total_time: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2);
    (0..count)
        .map(|k| total_time * k as f64 / (count - 1) as f64)
        .collect()
}

/// Sorted eigenvalues of H(s) for each grid point s ∈ [0,1].
pub fn spectrum_scan(p: &AdiabaticProblem, s_grid: &[f64]) -> Result<Vec<Vec<f64>>, EngineError> {
    s_grid
        .iter()
        .map(|&s| {
            let h = p.h0().scale(1.0 - s) + p.hp().scale(s);
            let (vals, _) = eigh(&h)?;
            Ok(vals.iter().copied().collect())
        })
        .collect()
}

/// Gap between the (possibly degenerate) ground subspace and the first level
/// above it, with degeneracy resolved at DEGENERACY_REL_TOL relative scale.
pub fn gap_above_ground(eigenvalues: &[f64]) -> f64 {
    let e0 = eigenvalues[0];
    let scale = eigenvalues.iter().map(|e| e.abs()).fold(1.0, f64::max);
    eigenvalues
        .iter()
        .map(|e| e - e0)
        .find(|d| *d > DEGENERACY_REL_TOL * scale)
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MinGap {
    pub g_min: f64,
    pub s_star: f64,
}

/// Gap between the ground subspace and the lowest excited level the schedule
/// actually couples to. Levels whose ⟨k|Hp−H0|ground⟩ matrix elements vanish
/// (symmetry-protected crossings, e.g. the antisymmetric two-qubit level)
/// cannot absorb population and are skipped; without this the scan would
/// report a spurious zero as such a level crosses the ground energy.
fn gap_at(p: &AdiabaticProblem, s: f64) -> Result<f64, EngineError> {
    let h = p.h0().scale(1.0 - s) + p.hp().scale(s);
    let (vals, vecs) = eigh(&h)?;
    let n = vals.len();
    let e0 = vals[0];
    let scale = vals.iter().map(|e| e.abs()).fold(1.0, f64::max);
    let tol = DEGENERACY_REL_TOL * scale;
    let dh = p.hp() - p.h0();
    let coupling_tol = 1e-10 * qcore::matrix_scale(&dh).max(1.0);
    let ground: Vec<usize> = (0..n).filter(|&k| vals[k] - e0 <= tol).collect();
    for k in 0..n {
        let gap = vals[k] - e0;
        if gap <= tol {
            continue;
        }
        let coupled = ground.iter().any(|&g| {
            let driven = &dh * vecs.column(g);
            vecs.column(k).dotc(&driven).norm() > coupling_tol
        });
        if coupled {
            return Ok(gap);
        }
    }
    // Nothing above the ground subspace couples; fall back to the plain gap.
    Ok(gap_above_ground(vals.as_slice()))
}

/// Minimum of the ground-subspace gap over s ∈ [0,1]: coarse grid scan
/// followed by golden-section refinement to 1e-6 relative width.
pub fn min_gap(p: &AdiabaticProblem, grid_points: usize) -> Result<MinGap, EngineError> {
    let n = grid_points.max(3);
    let grid: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let gaps: Vec<f64> = grid.iter().map(|&s| gap_at(p, s)).collect::<Result<_, _>>()?;
    let (k_min, _) = gaps
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    let mut a = if k_min == 0 { 0.0 } else { grid[k_min - 1] };
    let mut b = if k_min == n - 1 { 1.0 } else { grid[k_min + 1] };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = gap_at(p, c)?;
    let mut fd = gap_at(p, d)?;
    while (b - a) > 1e-6 * b.max(1e-3) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = gap_at(p, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = gap_at(p, d)?;
        }
    }
    let s_star = (a + b) / 2.0;
    Ok(MinGap { g_min: gap_at(p, s_star)?, s_star })
}

/// The exchange (SWAP) operator on two qubits.
pub fn swap_operator() -> CMatrix {
    let mut w = CMatrix::zeros(4, 4);
    for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        w[(i, j)] = qcore::cr(1.0);
    }
    w
}

/// The ideal final state (|01⟩ + |10⟩)/√2.
pub fn bell_target() -> CVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = CVector::zeros(4);
    v[1] = qcore::cr(s);
    v[2] = qcore::cr(s);
    v
}

/// The reference initial state ½(|0⟩−|1⟩)(|0⟩−|1⟩), the mixer ground state.
pub fn psi_initial() -> CVector {
    let mut v = CVector::zeros(4);
    for (k, sign) in [(0, 1.0), (1, -1.0), (2, -1.0), (3, 1.0)] {
        v[k] = qcore::cr(0.25f64.sqrt() * sign);
    }
    fix_phase(&v)
}
