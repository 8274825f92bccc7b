//! Switching between the two MPC variants, command blending, the closed
//! loop and the receding-horizon stability check.
//!
//! The supervisor keeps the terminal-constrained controller active while
//! its QP is solvable. When a solve fails it hands over to the controller
//! without terminal rows and starts a cosine ramp of the blend weight `α`
//! (the share of the terminal-constrained command in the applied input).
//! It hands back once the longitudinal and lateral specific-force tracking
//! errors have stayed below `ε` for `T_hold`. During a ramp both
//! controllers are solved, and both are told the input that was actually
//! applied so neither sees a jump in its own last input.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::MotionSample;
use crate::linalg::{is_controllable, is_observable, spectral_radius};
use crate::mpc::{
    reference_window, MpcConfig, MpcController, MpcError, MpcLimits, MpcWeights, QpStatus, StepOutcome, Variant,
};
use crate::prediction::{
    AugmentedModel, DiscreteModel, OUT_FORCE, OUT_OMEGA, OUT_POS, OUT_ROT, OUT_TILT, OUT_VEL, U_ACC, U_ROT, U_TILT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupervisorConfig {
    /// Length of the cosine blend ramp (s).
    pub t_blend: f64,
    /// Per-channel specific-force error below which switching back is
    /// allowed (m/s²).
    pub epsilon: f64,
    /// How long the errors must stay below `epsilon` (s).
    pub t_hold: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self { t_blend: 0.5, epsilon: 0.05, t_hold: 0.5 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupervisorError {
    #[error("invalid supervisor setting: {0}")]
    Config(String),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error("A is singular; the inverse Riccati recursion needs A⁻¹")]
    SingularA,
    #[error("assumption violated: {0}")]
    Assumption(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl SupervisorConfig {
    pub fn validate(&self) -> Result<(), SupervisorError> {
        if !(self.t_blend > 0.0 && self.epsilon > 0.0 && self.t_hold >= 0.0) {
            return Err(SupervisorError::Config(format!(
                "t_blend={} epsilon={} t_hold={}",
                self.t_blend, self.epsilon, self.t_hold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Active {
    WithCotc,
    WithoutCotc,
}

impl Active {
    pub fn as_str(self) -> &'static str {
        match self {
            Active::WithCotc => "with_cotc",
            Active::WithoutCotc => "without_cotc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorState {
    pub active: Active,
    /// Weight of the terminal-constrained command in the applied input.
    pub alpha: f64,
    /// Ramp progress in `[0, 1]`; `alpha` is its cosine easing.
    pub phase: f64,
    /// Time both errors have been below the threshold (s).
    pub below_for: f64,
}

impl Default for SupervisorState {
    fn default() -> Self {
        Self { active: Active::WithCotc, alpha: 1.0, phase: 1.0, below_for: 0.0 }
    }
}

fn ease(phase: f64) -> f64 {
    0.5 * (1.0 - (PI * phase).cos())
}

/// One supervisor update. `status` is the terminal-constrained solve of
/// this step (ignored while the other controller is active); `errors` are
/// the longitudinal and lateral specific-force tracking errors.
pub fn decide(
    status: Option<QpStatus>,
    errors: [f64; 2],
    state: &SupervisorState,
    cfg: &SupervisorConfig,
    ts: f64,
) -> SupervisorState {
    let mut next = *state;
    match state.active {
        Active::WithCotc => {
            if matches!(status, Some(s) if s != QpStatus::Optimal) {
                next.active = Active::WithoutCotc;
                next.below_for = 0.0;
            }
        }
        Active::WithoutCotc => {
            if errors[0].abs() < cfg.epsilon && errors[1].abs() < cfg.epsilon {
                next.below_for += ts;
            } else {
                next.below_for = 0.0;
            }
            if next.below_for >= cfg.t_hold - 1e-9 {
                next.active = Active::WithCotc;
                next.below_for = 0.0;
            }
        }
    }
    let target = if next.active == Active::WithCotc { 1.0 } else { 0.0 };
    let step = ts / cfg.t_blend;
    next.phase = if target > next.phase {
        (next.phase + step).min(1.0)
    } else if target < next.phase {
        (next.phase - step).max(0.0)
    } else {
        target
    };
    // snap accumulated rounding so the ramp ends exactly
    if (next.phase - target).abs() < 1e-12 {
        next.phase = target;
    }
    next.alpha = ease(next.phase);
    next
}

/// `(1 − α) u_old + α u_new`.
pub fn blend(u_old: &DVector<f64>, u_new: &DVector<f64>, alpha: f64) -> DVector<f64> {
    u_old * (1.0 - alpha) + u_new * alpha
}

/// Receding-horizon gain and its closed-loop check.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub gain: DMatrix<f64>,
    /// `‖(P_k − BR⁻¹Bᵀ)(CᵀC + Aᵀ P_{k+1}⁻¹ A) − I‖∞` wherever `P_{k+1}` is
    /// invertible: how well each inverse-form step matches the direct
    /// Riccati step.
    pub residuals: Vec<f64>,
    pub spectral_radius: f64,
    pub controllable: bool,
    pub observable: bool,
    pub ts: f64,
}

/// Terminal-state receding-horizon gain `u = −K x`,
/// `K = R⁻¹ Bᵀ P_1⁻¹ A`, with `P_{N_p} = 0` and
/// `P_k = X − X Cᵀ (I + C X Cᵀ)⁻¹ C X + B R⁻¹ Bᵀ`, `X = A⁻¹ P_{k+1} A⁻ᵀ`.
pub fn feedback_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    n_p: usize,
    ts: f64,
) -> Result<StabilityReport, SupervisorError> {
    let n = a.nrows();
    let (m, p) = (b.ncols(), c.nrows());
    if a.ncols() != n || b.nrows() != n || c.ncols() != n || r.shape() != (m, m) || n_p < 2 {
        return Err(SupervisorError::Dimension(format!(
            "A {:?} B {:?} C {:?} R {:?} N_p {n_p}",
            a.shape(),
            b.shape(),
            c.shape(),
            r.shape()
        )));
    }
    let tol = 1e-9;
    let controllable = is_controllable(a, b, tol);
    let observable = is_observable(a, c, tol);
    if !controllable {
        return Err(SupervisorError::Assumption("(A, B) is not controllable"));
    }
    if !observable {
        return Err(SupervisorError::Assumption("(A, C) is not observable"));
    }
    let a_inv = a.clone().try_inverse().ok_or(SupervisorError::SingularA)?;
    let r_inv = r.clone().try_inverse().ok_or(SupervisorError::Dimension("R is singular".into()))?;
    let brb = b * r_inv.clone() * b.transpose();
    let ctc = c.transpose() * c;
    let eye_p = DMatrix::<f64>::identity(p, p);
    let eye_n = DMatrix::<f64>::identity(n, n);

    let mut next = DMatrix::zeros(n, n);
    let mut residuals = Vec::new();
    for _ in 1..n_p {
        let x = &a_inv * &next * a_inv.transpose();
        let cx = c * &x;
        let inner = (&eye_p + &cx * c.transpose()).try_inverse().ok_or(SupervisorError::SingularA)?;
        let mut pk = &x - cx.transpose() * inner * &cx + &brb;
        crate::linalg::symmetrize(&mut pk);
        if let Some(next_inv) = next.clone().try_inverse() {
            let direct = &ctc + a.transpose() * next_inv * a;
            residuals.push(((&pk - &brb) * direct - &eye_n).amax());
        }
        next = pk;
    }
    let p1_inv = next.try_inverse().ok_or(SupervisorError::Assumption("horizon too short for P_1 to be invertible"))?;
    let gain = r_inv * b.transpose() * p1_inv * a;
    let closed = a - b * &gain;
    Ok(StabilityReport { spectral_radius: spectral_radius(&closed), gain, residuals, controllable, observable, ts })
}

/// The sampled platform-plus-perception model driven by applied inputs.
#[derive(Debug, Clone)]
pub struct Plant {
    model: DiscreteModel,
    x: DVector<f64>,
    x_prev: DVector<f64>,
    omega_prev: Vector3<f64>,
    home_height: f64,
    k: usize,
}

impl Plant {
    pub fn new(model: &DiscreteModel, home_height: f64) -> Self {
        let n = model.n();
        Self {
            model: model.clone(),
            x: DVector::zeros(n),
            x_prev: DVector::zeros(n),
            omega_prev: Vector3::zeros(),
            home_height,
            k: 0,
        }
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.model.ts
    }

    pub fn outputs(&self) -> DVector<f64> {
        &self.model.c * &self.x
    }

    /// `[x(k) − x(k−1); y(k)]`.
    pub fn augmented_state(&self, aug: &AugmentedModel) -> DVector<f64> {
        aug.state(&(&self.x - &self.x_prev), &self.outputs())
    }

    /// The platform motion at the current sample with `u` applied.
    pub fn sample(&self, u: &DVector<f64>) -> MotionSample {
        let y = self.outputs();
        let omega = platform_rate(u);
        MotionSample {
            t: self.time(),
            position: Vector3::new(y[OUT_POS.start], y[OUT_POS.start + 1], y[OUT_POS.start + 2] + self.home_height),
            velocity: Vector3::new(y[OUT_VEL.start], y[OUT_VEL.start + 1], y[OUT_VEL.start + 2]),
            acceleration: Vector3::new(u[U_ACC.start], u[U_ACC.start + 1], u[U_ACC.start + 2]),
            attitude: platform_attitude(&y),
            angular_velocity: omega,
            angular_acceleration: (omega - self.omega_prev) / self.model.ts,
        }
    }

    pub fn advance(&mut self, u: &DVector<f64>) {
        self.omega_prev = platform_rate(u);
        let next = &self.model.a * &self.x + &self.model.b * u;
        self.x_prev = std::mem::replace(&mut self.x, next);
        self.k += 1;
    }
}

/// Total platform angular velocity (roll, pitch, yaw rates).
pub fn platform_rate(u: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(u[U_ROT.start] + u[U_TILT.start + 1], u[U_ROT.start + 1] + u[U_TILT.start], u[U_ROT.start + 2])
}

/// Roll, pitch and yaw from the rotational and tilt angle outputs.
pub fn platform_attitude(y: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(
        y[OUT_ROT.start] + y[OUT_TILT.start + 1],
        y[OUT_ROT.start + 1] + y[OUT_TILT.start],
        y[OUT_ROT.start + 2],
    )
}

/// Perceived specific force and angular velocity from the model outputs.
pub fn perceived(y: &DVector<f64>) -> [f64; 6] {
    [
        y[OUT_FORCE.start],
        y[OUT_FORCE.start + 1],
        y[OUT_FORCE.start + 2],
        y[OUT_OMEGA.start],
        y[OUT_OMEGA.start + 1],
        y[OUT_OMEGA.start + 2],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MpcAlgorithm {
    /// Switched MPC with blended handover.
    Smpc,
    /// Terminal-constrained MPC alone.
    Cotc,
    /// MPC without terminal rows alone.
    NoCotc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRecord {
    pub t: f64,
    pub active: Active,
    pub alpha: f64,
    /// The solve that drove the decision: the terminal-constrained one
    /// whenever it was evaluated, otherwise the active one.
    pub qp_status: QpStatus,
}

/// Per-step diagnostics of the terminal-constrained solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalCheck {
    pub t: f64,
    /// Largest predicted `|r|, |v|, |β_rot|` and held `|a|` at the horizon
    /// end.
    pub rest: f64,
    /// Largest gap between the force the terminal tilt sustains and `r(k)`
    /// on the two horizontal channels.
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    pub motion: Vec<MotionSample>,
    /// Applied inputs, one row per sample.
    pub commands: DMatrix<f64>,
    /// Perceived specific force and angular velocity, one row per sample.
    pub perceived: DMatrix<f64>,
    pub switch_log: Vec<SwitchRecord>,
    pub terminal_checks: Vec<TerminalCheck>,
    /// Number of terminal-constrained solves that were not optimal.
    pub cotc_failures: usize,
}

impl ClosedLoopTrace {
    pub fn times(&self) -> Vec<f64> {
        self.motion.iter().map(|m| m.t).collect()
    }

    /// Samples at which the active controller changed.
    pub fn switch_times(&self) -> Vec<(f64, Active)> {
        self.switch_log.windows(2).filter(|w| w[0].active != w[1].active).map(|w| (w[1].t, w[1].active)).collect()
    }
}

/// Everything the MPC closed loop needs.
#[derive(Debug, Clone)]
pub struct LoopSetup {
    pub aug: AugmentedModel,
    pub limits: MpcLimits,
    pub weights: MpcWeights,
    pub mpc: MpcConfig,
    pub supervisor: SupervisorConfig,
    pub home_height: f64,
}

fn terminal_check(
    ctrl: &MpcController,
    x0: &DVector<f64>,
    refs: &[DVector<f64>],
    out: &StepOutcome,
    t: f64,
) -> Option<TerminalCheck> {
    let z = out.z.as_ref()?;
    let model = ctrl.model();
    let y = model.predict_outputs(x0, z);
    let last = y.row(model.n_p - 1);
    let m = model.m;
    let held: Vec<f64> = U_ACC.map(|d| out.u[d] + (1..model.n_c).map(|j| z[j * m + d]).sum::<f64>()).collect();
    let rest = [OUT_POS, OUT_VEL, OUT_ROT]
        .into_iter()
        .flatten()
        .map(|i| last[i].abs())
        .chain(held.iter().map(|a| a.abs()))
        .fold(0.0, f64::max);
    let gain = ctrl.tilt_gain();
    let force = (0..2)
        .map(|i| {
            let sustained: f64 = (0..2).map(|c| gain[(i, c)] * last[OUT_TILT.start + c]).sum();
            (sustained - refs[0][OUT_FORCE.start + i]).abs()
        })
        .fold(0.0, f64::max);
    Some(TerminalCheck { t, rest, force })
}

/// Runs one of the MPC algorithms over a perceived reference
/// (`samples × 6`: specific force x/y/z, angular velocity x/y/z).
pub fn run_closed_loop(
    setup: &LoopSetup,
    reference: &DMatrix<f64>,
    algorithm: MpcAlgorithm,
) -> Result<ClosedLoopTrace, SupervisorError> {
    setup.supervisor.validate()?;
    if reference.ncols() != 6 {
        return Err(SupervisorError::Dimension(format!("reference has {} columns, expected 6", reference.ncols())));
    }
    let aug = &setup.aug;
    let ts = aug.ts;
    let n_p = setup.weights.n_p;
    let m = aug.m();
    let uses_cotc = algorithm != MpcAlgorithm::NoCotc;
    let uses_free = algorithm != MpcAlgorithm::Cotc;
    let mut cotc = if uses_cotc {
        Some(MpcController::new(aug, setup.weights.clone(), &setup.limits, Variant::WithCotc, &setup.mpc)?)
    } else {
        None
    };
    let mut free = if uses_free {
        Some(MpcController::new(aug, setup.weights.clone(), &setup.limits, Variant::WithoutCotc, &setup.mpc)?)
    } else {
        None
    };
    let mut state = match algorithm {
        MpcAlgorithm::NoCotc => SupervisorState { active: Active::WithoutCotc, alpha: 0.0, phase: 0.0, below_for: 0.0 },
        _ => SupervisorState::default(),
    };

    let steps = reference.nrows();
    let mut plant = Plant::new(&aug.base, setup.home_height);
    let mut trace = ClosedLoopTrace {
        motion: Vec::with_capacity(steps),
        commands: DMatrix::zeros(steps, m),
        perceived: DMatrix::zeros(steps, 6),
        switch_log: Vec::with_capacity(steps),
        terminal_checks: Vec::new(),
        cotc_failures: 0,
    };

    for k in 0..steps {
        let t = plant.time();
        let x0 = plant.augmented_state(aug);
        let refs = reference_window(reference, k, n_p);
        let y = plant.outputs();
        let seen = perceived(&y);
        let errors = [seen[0] - reference[(k, 0)], seen[1] - reference[(k, 1)]];

        let run_cotc = uses_cotc && (state.active == Active::WithCotc || state.alpha > 0.0);
        let cotc_out = match (&mut cotc, run_cotc) {
            (Some(c), true) => {
                let out = c.step(&x0, &refs)?;
                if out.status != QpStatus::Optimal {
                    trace.cotc_failures += 1;
                }
                if let Some(check) = terminal_check(c, &x0, &refs, &out, t) {
                    trace.terminal_checks.push(check);
                }
                Some(out)
            }
            _ => None,
        };

        let cotc_status = cotc_out.as_ref().map(|o| o.status);
        if algorithm == MpcAlgorithm::Smpc {
            state = decide(cotc_status, errors, &state, &setup.supervisor, ts);
        }

        let run_free = uses_free && state.alpha < 1.0;
        let free_out = match (&mut free, run_free) {
            (Some(c), true) => Some(c.step(&x0, &refs)?),
            _ => None,
        };

        let u = match (&cotc_out, &free_out) {
            (Some(c), Some(f)) => blend(&f.u, &c.u, state.alpha),
            (Some(c), None) => c.u.clone(),
            (None, Some(f)) => f.u.clone(),
            (None, None) => {
                // only reachable when the terminal-constrained controller is
                // ramped out but not evaluated; hold the last input
                trace.commands.row(k.saturating_sub(1)).transpose()
            }
        };
        for c in [cotc.as_mut(), free.as_mut()].into_iter().flatten() {
            c.set_last_input(&u);
        }

        let status = cotc_status.or(free_out.as_ref().map(|o| o.status)).unwrap_or(QpStatus::Optimal);
        trace.switch_log.push(SwitchRecord { t, active: state.active, alpha: state.alpha, qp_status: status });
        trace.motion.push(plant.sample(&u));
        trace.commands.row_mut(k).copy_from(&u.transpose());
        for (c, v) in seen.iter().enumerate() {
            trace.perceived[(k, c)] = *v;
        }
        plant.advance(&u);
    }
    Ok(trace)
}

/// The switched MPC closed loop.
pub fn run_smpc(setup: &LoopSetup, reference: &DMatrix<f64>) -> Result<ClosedLoopTrace, SupervisorError> {
    run_closed_loop(setup, reference, MpcAlgorithm::Smpc)
}

/// Replays precomputed inputs through the plant (used for the washout
/// baseline, which produces its own commands).
pub fn replay(model: &DiscreteModel, home_height: f64, commands: &DMatrix<f64>) -> ClosedLoopTrace {
    let steps = commands.nrows();
    let mut plant = Plant::new(model, home_height);
    let mut trace = ClosedLoopTrace {
        motion: Vec::with_capacity(steps),
        commands: commands.clone(),
        perceived: DMatrix::zeros(steps, 6),
        switch_log: Vec::new(),
        terminal_checks: Vec::new(),
        cotc_failures: 0,
    };
    for k in 0..steps {
        let u = commands.row(k).transpose();
        let seen = perceived(&plant.outputs());
        for (c, v) in seen.iter().enumerate() {
            trace.perceived[(k, c)] = *v;
        }
        trace.motion.push(plant.sample(&u));
        plant.advance(&u);
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SupervisorConfig {
        SupervisorConfig::default()
    }

    #[test]
    fn infeasible_solve_switches_and_starts_ramp() {
        let s = decide(Some(QpStatus::Infeasible), [1.0, 1.0], &SupervisorState::default(), &cfg(), 0.05);
        assert_eq!(s.active, Active::WithoutCotc);
        assert!(s.alpha < 1.0 && s.alpha > 0.9);
        let s = decide(Some(QpStatus::IterationLimit), [0.0, 0.0], &SupervisorState::default(), &cfg(), 0.05);
        assert_eq!(s.active, Active::WithoutCotc);
    }

    #[test]
    fn optimal_solve_keeps_state() {
        let s0 = SupervisorState::default();
        let s = decide(Some(QpStatus::Optimal), [3.0, -2.0], &s0, &cfg(), 0.05);
        assert_eq!(s, s0);
    }

    #[test]
    fn reverts_after_hold_time() {
        let mut s = SupervisorState { active: Active::WithoutCotc, alpha: 0.0, phase: 0.0, below_for: 0.0 };
        let mut switched_at = None;
        for k in 0..40 {
            s = decide(None, [0.0, 0.0], &s, &cfg(), 0.05);
            if s.active == Active::WithCotc && switched_at.is_none() {
                switched_at = Some(k);
            }
        }
        // the hold is ten samples long
        assert_eq!(switched_at, Some(9));
        assert_eq!(s.alpha, 1.0);
    }

    #[test]
    fn error_above_threshold_resets_hold() {
        let mut s = SupervisorState { active: Active::WithoutCotc, alpha: 0.0, phase: 0.0, below_for: 0.0 };
        for k in 0..40 {
            let e = if k % 5 == 4 { 0.06 } else { 0.0 };
            s = decide(None, [e, 0.0], &s, &cfg(), 0.05);
            assert_eq!(s.active, Active::WithoutCotc);
        }
    }

    #[test]
    fn ramp_is_monotone_and_exact() {
        let mut s = decide(Some(QpStatus::Infeasible), [0.0; 2], &SupervisorState::default(), &cfg(), 0.05);
        let mut prev = s.alpha;
        for _ in 0..9 {
            s = decide(None, [1.0; 2], &s, &cfg(), 0.05);
            assert!(s.alpha <= prev);
            assert!(prev - s.alpha <= PI / 2.0 * 0.1 + 1e-12);
            prev = s.alpha;
        }
        assert_eq!(s.alpha, 0.0);
    }

    #[test]
    fn blend_endpoints() {
        let a = DVector::from_vec(vec![1.0, -2.0]);
        let b = DVector::from_vec(vec![3.0, 5.0]);
        assert_eq!(blend(&a, &b, 0.0), a);
        assert_eq!(blend(&a, &b, 1.0), b);
        for alpha in [0.0, 0.3, 0.7, 1.0] {
            assert_eq!(blend(&a, &a, alpha), a);
            let u = blend(&a, &b, alpha);
            for i in 0..2 {
                assert!(u[i] >= a[i].min(b[i]) - 1e-15 && u[i] <= a[i].max(b[i]) + 1e-15);
            }
        }
    }

    #[test]
    fn scalar_gain_is_stabilizing() {
        let a = DMatrix::from_element(1, 1, 1.2);
        let b = DMatrix::from_element(1, 1, 1.0);
        let c = DMatrix::from_element(1, 1, 1.0);
        let r = DMatrix::from_element(1, 1, 1.0);
        let rep = feedback_gain(&a, &b, &c, &r, 40, 0.1).unwrap();
        // scalar LQR oracle from the fixed point of the Riccati map
        let mut p = 1.0f64;
        for _ in 0..10_000 {
            p = 1.0 + 1.44 * p - 1.44 * p * p / (1.0 + p);
        }
        let k_lqr = 1.2 * p / (1.0 + p);
        assert!((rep.gain[(0, 0)] - k_lqr).abs() < 1e-9);
        assert!(rep.spectral_radius < 1.0);
        assert!(rep.residuals.iter().all(|r| *r < 1e-9));
    }

    #[test]
    fn uncontrollable_pair_rejected() {
        let a = DMatrix::identity(2, 2) * 0.5;
        let b = DMatrix::zeros(2, 1);
        let c = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        assert!(matches!(feedback_gain(&a, &b, &c, &r, 10, 0.1), Err(SupervisorError::Assumption(_))));
    }

    #[test]
    fn singular_a_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let r = DMatrix::identity(1, 1);
        assert_eq!(feedback_gain(&a, &b, &c, &r, 10, 0.1), Err(SupervisorError::SingularA));
    }
}
