//! Receding-horizon motion cueing on the incremental prediction model.
//!
//! Both controller variants solve a condensed QP over the stacked input
//! increments `z = [Δu(k); …; Δu(k+N_c−1)]`, with `Δu = 0` afterwards.
//! The cost sums weighted output errors over `i = 1..N_p−1`, input and
//! input-increment penalties over `i = 1..N_c−1`, and a terminal term at
//! `N_p`. The variant with terminal constraints weights the terminal
//! state with a Riccati matrix and adds equality rows at `N_p`:
//!
//! * displacement, velocity and rotational angle are zero;
//! * the held linear acceleration `u⁻ + Σ Δu_acc` is zero;
//! * the tilt angles, through [`sustained_tilt_gain`], produce the current
//!   horizontal specific-force demand `r(k)` once the platform is still.
//!
//! The other variant uses the stage weight at `N_p` and no terminal rows.

mod controller;
pub mod qp;
pub mod riccati;

pub use controller::{
    build_qp_with_cotc, build_qp_without_cotc, reference_window, sustained_tilt_gain, CondensedModel, MpcController,
    MpcError, StepOutcome, Variant,
};
pub use qp::{solve_qp, solve_qp_with, QpError, QpProblem, QpSettings, QpSolution, QpStatus};
pub use riccati::{
    conserved_complement, dare_residual, incremental_basis, incremental_terminal_weight, terminal_weight, RiccatiError,
};

use nalgebra::{DMatrix, DVector, Matrix6};
use serde::{Deserialize, Serialize};

use crate::kinematics::ActuatorLimits;
use crate::prediction::{
    INPUTS, OUTPUTS, OUT_FORCE, OUT_LEG, OUT_OMEGA, OUT_POS, OUT_ROT, OUT_TILT, OUT_VEL, U_ACC, U_ROT, U_TILT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub n_p: usize,
    pub n_c: usize,
    /// Output weight on perceived specific force and angular velocity.
    pub q_perceived: f64,
    /// Output weight on displacement, velocity and platform angles.
    pub q_motion: f64,
    /// Output weight on leg-length deviations.
    pub q_legs: f64,
    pub s: f64,
    pub r: f64,
    pub max_iter: usize,
    pub riccati_tol: f64,
    pub riccati_max_iter: usize,
    /// Linear jerk bound used for the input-increment box (m/s³).
    pub jerk_limit: f64,
    /// Leg-length bounds are tightened by this much (m) to absorb the
    /// linearization of the inverse kinematics.
    pub leg_margin: f64,
    /// Fraction of the leg-rate bound kept in the QP.
    pub leg_rate_fraction: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            n_p: 30,
            n_c: 8,
            q_perceived: 1.0,
            q_motion: 1e-3,
            q_legs: 1e-3,
            s: 1e-4,
            r: 1e-2,
            max_iter: 500,
            riccati_tol: 1e-9,
            riccati_max_iter: 80,
            jerk_limit: 100.0,
            leg_margin: 0.05,
            leg_rate_fraction: 0.6,
        }
    }
}

/// Diagonal weights and horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcWeights {
    pub q: DVector<f64>,
    pub s: DVector<f64>,
    pub r: DVector<f64>,
    pub n_p: usize,
    pub n_c: usize,
}

impl MpcWeights {
    pub fn from_config(cfg: &MpcConfig) -> Self {
        let mut q = DVector::from_element(OUTPUTS, cfg.q_motion);
        q.rows_range_mut(OUT_FORCE).fill(cfg.q_perceived);
        q.rows_range_mut(OUT_OMEGA).fill(cfg.q_perceived);
        q.rows_range_mut(OUT_LEG).fill(cfg.q_legs);
        Self {
            q,
            s: DVector::from_element(INPUTS, cfg.s),
            r: DVector::from_element(INPUTS, cfg.r),
            n_p: cfg.n_p,
            n_c: cfg.n_c,
        }
    }

    pub fn validate(&self, p: usize, m: usize) -> Result<(), String> {
        if self.q.len() != p || self.s.len() != m || self.r.len() != m {
            return Err(format!(
                "weight lengths q={} s={} r={} for p={p} m={m}",
                self.q.len(),
                self.s.len(),
                self.r.len()
            ));
        }
        if self.q.iter().chain(self.s.iter()).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err("Q and S must be finite and nonnegative".into());
        }
        if self.r.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err("R must be positive".into());
        }
        if self.n_c == 0 || self.n_c > self.n_p {
            return Err(format!("need 1 <= N_c <= N_p, got N_c={} N_p={}", self.n_c, self.n_p));
        }
        Ok(())
    }
}

/// `lo ≤ rows · v ≤ hi` for some vector `v` (outputs, inputs or input
/// increments, depending on where it is used).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBox {
    pub rows: DMatrix<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl LinearBox {
    pub fn empty(width: usize) -> Self {
        Self { rows: DMatrix::zeros(0, width), lo: DVector::zeros(0), hi: DVector::zeros(0) }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    fn from_rows(width: usize, rows: &[(Vec<(usize, f64)>, f64, f64)]) -> Self {
        let mut m = DMatrix::zeros(rows.len(), width);
        let mut lo = DVector::zeros(rows.len());
        let mut hi = DVector::zeros(rows.len());
        for (i, (coeffs, l, h)) in rows.iter().enumerate() {
            for &(c, v) in coeffs {
                m[(i, c)] += v;
            }
            lo[i] = *l;
            hi[i] = *h;
        }
        Self { rows: m, lo, hi }
    }
}

/// Platform limits expressed on the prediction model.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcLimits {
    /// On the outputs at every predicted step.
    pub output: LinearBox,
    /// On the applied input.
    pub input: LinearBox,
    /// On the input increment of one sample.
    pub rate: LinearBox,
    /// Leg rates `J_t v + J_r ω`: output part and input part share bounds.
    pub leg_rate_output: DMatrix<f64>,
    pub leg_rate_input: DMatrix<f64>,
    pub leg_rate: f64,
}

impl MpcLimits {
    pub fn unconstrained() -> Self {
        Self {
            output: LinearBox::empty(OUTPUTS),
            input: LinearBox::empty(INPUTS),
            rate: LinearBox::empty(INPUTS),
            leg_rate_output: DMatrix::zeros(0, OUTPUTS),
            leg_rate_input: DMatrix::zeros(0, INPUTS),
            leg_rate: 0.0,
        }
    }

    /// Converts actuator limits to deviation coordinates around the
    /// neutral pose (`home_height`, `neutral_legs`).
    pub fn from_actuator(
        limits: &ActuatorLimits,
        home_height: f64,
        neutral_legs: &[f64; 6],
        jacobian: &Matrix6<f64>,
        cfg: &MpcConfig,
        ts: f64,
    ) -> Self {
        let mut out_rows = Vec::new();
        for i in 0..3 {
            let [lo, hi] = limits.excursion[i];
            let (lo, hi) = if i == 2 { (lo - home_height, hi - home_height) } else { (lo, hi) };
            out_rows.push((vec![(OUT_POS.start + i, 1.0)], lo, hi));
        }
        for i in 0..3 {
            let [lo, hi] = limits.velocity[i];
            out_rows.push((vec![(OUT_VEL.start + i, 1.0)], lo, hi));
        }
        for (axis, coeffs) in angle_rows().into_iter().enumerate() {
            let [lo, hi] = limits.excursion[3 + axis];
            out_rows.push((coeffs, lo, hi));
        }
        for i in 0..6 {
            let [lo, hi] = limits.leg_length;
            out_rows.push((
                vec![(OUT_LEG.start + i, 1.0)],
                lo - neutral_legs[i] + cfg.leg_margin,
                hi - neutral_legs[i] - cfg.leg_margin,
            ));
        }

        let mut in_rows = Vec::new();
        for i in 0..3 {
            let [lo, hi] = limits.acceleration[i];
            in_rows.push((vec![(U_ACC.start + i, 1.0)], lo, hi));
        }
        let rate_map = angular_rate_rows();
        for (axis, coeffs) in rate_map.iter().enumerate() {
            let [lo, hi] = limits.velocity[3 + axis];
            in_rows.push((coeffs.clone(), lo, hi));
        }

        let mut rate_rows = Vec::new();
        for i in 0..3 {
            let d = cfg.jerk_limit * ts;
            rate_rows.push((vec![(U_ACC.start + i, 1.0)], -d, d));
        }
        for (axis, coeffs) in rate_map.iter().enumerate() {
            let [lo, hi] = limits.acceleration[3 + axis];
            rate_rows.push((coeffs.clone(), lo * ts, hi * ts));
        }

        let omega =
            LinearBox::from_rows(INPUTS, &rate_map.iter().map(|c| (c.clone(), 0.0, 0.0)).collect::<Vec<_>>()).rows;
        let jr = DMatrix::from_fn(6, 3, |r, c| jacobian[(r, c + 3)]);
        let mut leg_rate_output = DMatrix::zeros(6, OUTPUTS);
        for r in 0..6 {
            for c in 0..3 {
                leg_rate_output[(r, OUT_VEL.start + c)] = jacobian[(r, c)];
            }
        }
        Self {
            output: LinearBox::from_rows(OUTPUTS, &out_rows),
            input: LinearBox::from_rows(INPUTS, &in_rows),
            rate: LinearBox::from_rows(INPUTS, &rate_rows),
            leg_rate_output,
            leg_rate_input: jr * omega,
            leg_rate: limits.leg_rate * cfg.leg_rate_fraction,
        }
    }
}

/// Roll, pitch and yaw as combinations of the rotational and tilt angle
/// outputs. Longitudinal tilt is a pitch rotation, lateral tilt a roll.
pub fn angle_rows() -> [Vec<(usize, f64)>; 3] {
    [
        vec![(OUT_ROT.start, 1.0), (OUT_TILT.start + 1, 1.0)],
        vec![(OUT_ROT.start + 1, 1.0), (OUT_TILT.start, 1.0)],
        vec![(OUT_ROT.start + 2, 1.0)],
    ]
}

/// Total platform angular rate about x, y, z as combinations of inputs.
pub fn angular_rate_rows() -> [Vec<(usize, f64)>; 3] {
    [
        vec![(U_ROT.start, 1.0), (U_TILT.start + 1, 1.0)],
        vec![(U_ROT.start + 1, 1.0), (U_TILT.start, 1.0)],
        vec![(U_ROT.start + 2, 1.0)],
    ]
}
