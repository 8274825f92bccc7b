//! Human vestibular perception: semicircular canals, otoliths and the
//! tilt-coordination channel, each realized in controllable canonical
//! form and composed block-diagonally into one 21-state system.
//!
//! Input slots of the composed model are `[a (3), ω_tilt (2), ω_rot (3)]`
//! and output slots `[â (3), â_tilt (2), ω̂ (3)]`. Tilt channel 0 is
//! longitudinal (x, pitch-driven) and channel 1 is lateral (y,
//! roll-driven); the vertical axis has no tilt channel.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::state_space::{simulate, Integrator, StateSpaceModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VestibularError {
    #[error("invalid vestibular parameter {name} = {value}: must be positive and finite")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("|a_tilt| = {a_tilt} exceeds g = {g}; arcsin undefined")]
    TiltDomain { a_tilt: f64, g: f64 },
}

/// Canal and otolith time constants (s), otolith gain and gravity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VestibularParams {
    pub t_l: f64,
    pub t_a: f64,
    pub t_s: f64,
    pub gamma_a: f64,
    pub gamma_l: f64,
    pub gamma_s: f64,
    pub k: f64,
    pub g: f64,
}

impl Default for VestibularParams {
    fn default() -> Self {
        Self { t_l: 5.73, t_a: 80.0, t_s: 0.005, gamma_a: 10.0, gamma_l: 5.0, gamma_s: 0.016, k: 0.4, g: 9.81 }
    }
}

impl VestibularParams {
    pub fn validate(&self) -> Result<(), VestibularError> {
        let fields = [
            ("t_l", self.t_l),
            ("t_a", self.t_a),
            ("t_s", self.t_s),
            ("gamma_a", self.gamma_a),
            ("gamma_l", self.gamma_l),
            ("gamma_s", self.gamma_s),
            ("k", self.k),
            ("g", self.g),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(VestibularError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

/// Coefficients are in ascending powers of `s`.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Controllable canonical realization of a strictly proper scalar
/// transfer function `num(s) / den(s)`.
fn canonical_realization(num: &[f64], den: &[f64]) -> StateSpaceModel {
    let n = den.len() - 1;
    let lead = den[n];
    debug_assert!(num.len() <= n);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -den[j] / lead;
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let mut c = DMatrix::zeros(1, n);
    for (j, v) in num.iter().enumerate() {
        c[(0, j)] = v / lead;
    }
    StateSpaceModel::new(a, b, c).expect("canonical realization is well formed")
}

/// One canal axis: `T_L T_a s² / ((T_L s + 1)(T_a s + 1)(T_S s + 1))`.
pub fn canal_model(params: &VestibularParams) -> Result<StateSpaceModel, VestibularError> {
    params.validate()?;
    let den = poly_mul(&poly_mul(&[1.0, params.t_l], &[1.0, params.t_a]), &[1.0, params.t_s]);
    let num = [0.0, 0.0, params.t_l * params.t_a];
    Ok(canonical_realization(&num, &den))
}

/// One otolith axis: `(Γ_a s + 1)/(Γ_L s + 1) · K/(Γ_s s + 1)`.
pub fn otolith_model(params: &VestibularParams) -> Result<StateSpaceModel, VestibularError> {
    params.validate()?;
    let den = poly_mul(&[1.0, params.gamma_l], &[1.0, params.gamma_s]);
    let num = [params.k, params.k * params.gamma_a];
    Ok(canonical_realization(&num, &den))
}

/// One tilt-coordination channel from tilt rate to perceived acceleration:
/// `g K (Γ_a s + 1) / (s (Γ_L s + 1)(Γ_s s + 1))`.
pub fn tilt_model(params: &VestibularParams) -> Result<StateSpaceModel, VestibularError> {
    params.validate()?;
    let den = poly_mul(&poly_mul(&[0.0, 1.0], &[1.0, params.gamma_l]), &[1.0, params.gamma_s]);
    let gk = params.g * params.k;
    let num = [gk, gk * params.gamma_a];
    Ok(canonical_realization(&num, &den))
}

/// Tilt angle that makes gravity supply `a_tilt`: `arcsin(a_tilt / g)`,
/// or `a_tilt / g` under the small-angle approximation.
pub fn tilt_angle(a_tilt: f64, g: f64, small_angle: bool) -> Result<f64, VestibularError> {
    if small_angle {
        return Ok(a_tilt / g);
    }
    let ratio = a_tilt / g;
    if !(-1.0..=1.0).contains(&ratio) {
        return Err(VestibularError::TiltDomain { a_tilt, g });
    }
    Ok(ratio.asin())
}

/// Slot ranges of the composed model's input and output vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelLayout {
    pub accel_in: Range<usize>,
    pub tilt_in: Range<usize>,
    pub rot_in: Range<usize>,
    pub accel_out: Range<usize>,
    pub tilt_out: Range<usize>,
    pub rot_out: Range<usize>,
}

impl Default for ChannelLayout {
    fn default() -> Self {
        Self { accel_in: 0..3, tilt_in: 3..5, rot_in: 5..8, accel_out: 0..3, tilt_out: 3..5, rot_out: 5..8 }
    }
}

impl ChannelLayout {
    /// Every slot in `0..8` is covered exactly once on both sides.
    pub fn is_partition(&self) -> bool {
        let check = |ranges: [&Range<usize>; 3]| {
            let mut seen = [false; 8];
            for r in ranges {
                for i in r.clone() {
                    if i >= 8 || seen[i] {
                        return false;
                    }
                    seen[i] = true;
                }
            }
            seen.iter().all(|s| *s)
        };
        check([&self.accel_in, &self.tilt_in, &self.rot_in]) && check([&self.accel_out, &self.tilt_out, &self.rot_out])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VestibularModel {
    pub model: StateSpaceModel,
    pub layout: ChannelLayout,
    pub params: VestibularParams,
}

pub const VESTIBULAR_STATES: usize = 21;
pub const VESTIBULAR_CHANNELS: usize = 8;

/// Three otolith axes, two tilt channels and three canal axes, in that
/// order, as one block-diagonal system (6 + 6 + 9 = 21 states).
pub fn assemble_vestibular(params: &VestibularParams) -> Result<VestibularModel, VestibularError> {
    let oto = otolith_model(params)?;
    let tilt = tilt_model(params)?;
    let canal = canal_model(params)?;
    let blocks = [oto.clone(), oto.clone(), oto, tilt.clone(), tilt, canal.clone(), canal.clone(), canal];
    let model = StateSpaceModel::block_diagonal(&blocks);
    debug_assert_eq!(model.n(), VESTIBULAR_STATES);
    Ok(VestibularModel { model, layout: ChannelLayout::default(), params: *params })
}
