//! The MPC prediction model: platform motion, vestibular perception and
//! linearized leg lengths in one LTI system, its sampled form, and the
//! incremental form driven by input increments `Δu`.
//!
//! State `x = [r (3), v (3), β_rot (3), β_tilt (2), x_p (21), l (6)]`,
//! input `u = [a (3), ω_rot (3), ω_tilt (2)]`. Positions, angles and leg
//! lengths are deviations from the neutral pose. The output vector is
//! laid out by the `OUT_*` ranges below.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};
use thiserror::Error;

use crate::state_space::{DiscreteStateSpace, StateSpaceError, StateSpaceModel};
use crate::vestibular::{VestibularModel, VESTIBULAR_CHANNELS, VESTIBULAR_STATES};

pub const X_POS: Range<usize> = 0..3;
pub const X_VEL: Range<usize> = 3..6;
pub const X_ROT: Range<usize> = 6..9;
pub const X_TILT: Range<usize> = 9..11;
pub const X_VEST: Range<usize> = 11..32;
pub const X_LEG: Range<usize> = 32..38;
pub const STATES: usize = 38;

pub const U_ACC: Range<usize> = 0..3;
pub const U_ROT: Range<usize> = 3..6;
pub const U_TILT: Range<usize> = 6..8;
pub const INPUTS: usize = 8;

/// Perceived specific force: otolith response plus tilt coordination on
/// the two horizontal axes.
pub const OUT_FORCE: Range<usize> = 0..3;
/// Perceived angular velocity.
pub const OUT_OMEGA: Range<usize> = 3..6;
pub const OUT_POS: Range<usize> = 6..9;
pub const OUT_VEL: Range<usize> = 9..12;
pub const OUT_ROT: Range<usize> = 12..15;
pub const OUT_TILT: Range<usize> = 15..17;
pub const OUT_LEG: Range<usize> = 17..23;
pub const OUTPUTS: usize = 23;

/// Maps the two tilt channels onto body rates: longitudinal tilt is a
/// pitch (y) rotation, lateral tilt a roll (x) rotation.
pub fn tilt_embedding() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0])
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictionError {
    #[error("vestibular model must be {VESTIBULAR_STATES} states with {VESTIBULAR_CHANNELS} inputs/outputs, got n={n} m={m} p={p}")]
    VestibularShape { n: usize, m: usize, p: usize },
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedModel {
    pub model: StateSpaceModel,
    /// Eye point in the platform frame (m).
    pub eye_point: Vector3<f64>,
    /// Platform-to-operator frame rotation.
    pub operator_rotation: Matrix3<f64>,
    /// Leg-rate Jacobian the leg states were linearized with.
    pub jacobian: Matrix6<f64>,
}

/// Acceleration at the eye point, exactly as the rigid-body expression
/// `a + v × (R q) + ω × (ω × (R q))`. The linear model keeps only `a`: at
/// the neutral operating point the remaining terms are second order.
pub fn operator_acceleration(
    accel: &Vector3<f64>,
    velocity: &Vector3<f64>,
    omega: &Vector3<f64>,
    rotation: &Matrix3<f64>,
    eye_point: &Vector3<f64>,
) -> Vector3<f64> {
    let q = rotation * eye_point;
    accel + velocity.cross(&q) + omega.cross(&omega.cross(&q))
}

pub fn build_integrated(
    vestibular: &VestibularModel,
    jacobian: &Matrix6<f64>,
    eye_point: Vector3<f64>,
    operator_rotation: Matrix3<f64>,
) -> Result<IntegratedModel, PredictionError> {
    let vm = &vestibular.model;
    if vm.n() != VESTIBULAR_STATES || vm.m() != VESTIBULAR_CHANNELS || vm.p() != VESTIBULAR_CHANNELS {
        return Err(PredictionError::VestibularShape { n: vm.n(), m: vm.m(), p: vm.p() });
    }
    let lay = &vestibular.layout;
    let embed = tilt_embedding();
    let cd = DMatrix::from_fn(3, 3, |r, c| operator_rotation[(r, c)]);

    let mut a = DMatrix::zeros(STATES, STATES);
    let mut b = DMatrix::zeros(STATES, INPUTS);
    let mut c = DMatrix::zeros(OUTPUTS, STATES);

    for i in 0..3 {
        a[(X_POS.start + i, X_VEL.start + i)] = 1.0;
        b[(X_VEL.start + i, U_ACC.start + i)] = 1.0;
        b[(X_ROT.start + i, U_ROT.start + i)] = 1.0;
    }
    for i in 0..2 {
        b[(X_TILT.start + i, U_TILT.start + i)] = 1.0;
    }

    // vestibular block driven by operator-frame signals
    a.view_mut((X_VEST.start, X_VEST.start), (VESTIBULAR_STATES, VESTIBULAR_STATES)).copy_from(vm.a());
    let bp = vm.b();
    let bp_acc = bp.columns(lay.accel_in.start, 3).into_owned();
    let bp_tilt = bp.columns(lay.tilt_in.start, 2).into_owned();
    let bp_rot = bp.columns(lay.rot_in.start, 3).into_owned();
    let tilt_map = embed.transpose() * &cd * &embed;
    b.view_mut((X_VEST.start, U_ACC.start), (VESTIBULAR_STATES, 3)).copy_from(&bp_acc);
    b.view_mut((X_VEST.start, U_ROT.start), (VESTIBULAR_STATES, 3)).copy_from(&(&bp_rot * &cd));
    b.view_mut((X_VEST.start, U_TILT.start), (VESTIBULAR_STATES, 2)).copy_from(&(&bp_tilt * tilt_map));

    // l̇ = J_t v + J_r (ω_rot + E ω_tilt)
    let jt = DMatrix::from_fn(6, 3, |r, c| jacobian[(r, c)]);
    let jr = DMatrix::from_fn(6, 3, |r, c| jacobian[(r, c + 3)]);
    a.view_mut((X_LEG.start, X_VEL.start), (6, 3)).copy_from(&jt);
    b.view_mut((X_LEG.start, U_ROT.start), (6, 3)).copy_from(&jr);
    b.view_mut((X_LEG.start, U_TILT.start), (6, 2)).copy_from(&(&jr * &embed));

    let cp = vm.c();
    for i in 0..3 {
        for j in 0..VESTIBULAR_STATES {
            c[(OUT_FORCE.start + i, X_VEST.start + j)] = cp[(lay.accel_out.start + i, j)];
            if i < 2 {
                c[(OUT_FORCE.start + i, X_VEST.start + j)] += cp[(lay.tilt_out.start + i, j)];
            }
            c[(OUT_OMEGA.start + i, X_VEST.start + j)] = cp[(lay.rot_out.start + i, j)];
        }
    }
    for (out, state) in [(OUT_POS, X_POS), (OUT_VEL, X_VEL), (OUT_ROT, X_ROT), (OUT_TILT, X_TILT), (OUT_LEG, X_LEG)] {
        for (o, s) in out.zip(state) {
            c[(o, s)] = 1.0;
        }
    }

    Ok(IntegratedModel { model: StateSpaceModel::new(a, b, c)?, eye_point, operator_rotation, jacobian: *jacobian })
}

pub type DiscreteModel = DiscreteStateSpace;

pub fn discretize(model: &IntegratedModel, ts: f64) -> Result<DiscreteModel, PredictionError> {
    Ok(model.model.discretize(ts)?)
}

/// `x(k) = [x_m(k) − x_m(k−1); y(k)]`, `x(k+1) = A x(k) + B Δu(k)`,
/// `y(k) = C x(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Dimension of the underlying model state.
    pub nx: usize,
    pub ts: f64,
    /// The sampled model the increments act on.
    pub base: DiscreteModel,
}

impl AugmentedModel {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Stacks an increment of the model state and the current output.
    pub fn state(&self, dx: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.n());
        x.rows_mut(0, self.nx).copy_from(dx);
        x.rows_mut(self.nx, self.p()).copy_from(y);
        x
    }
}

/// `A = [[A_m, 0], [C_m A_m, I]]`, `B = [B_m; C_m B_m]`, `C = [0, I]`.
pub fn augment(d: &DiscreteModel) -> AugmentedModel {
    let (n, m, p) = (d.n(), d.m(), d.p());
    let mut a = DMatrix::zeros(n + p, n + p);
    a.view_mut((0, 0), (n, n)).copy_from(&d.a);
    a.view_mut((n, 0), (p, n)).copy_from(&(&d.c * &d.a));
    a.view_mut((n, n), (p, p)).fill_with_identity();
    let mut b = DMatrix::zeros(n + p, m);
    b.view_mut((0, 0), (n, m)).copy_from(&d.b);
    b.view_mut((n, 0), (p, m)).copy_from(&(&d.c * &d.b));
    let mut c = DMatrix::zeros(p, n + p);
    c.view_mut((0, n), (p, p)).fill_with_identity();
    AugmentedModel { a, b, c, nx: n, ts: d.ts, base: d.clone() }
}
