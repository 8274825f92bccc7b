//! Classical washout filter baseline.
//!
//! Three channels act on the aircraft signals after per-axis scaling:
//!
//! * translational: high-pass on specific force, giving the platform
//!   acceleration (the plant integrates it to velocity and displacement);
//! * tilt coordination: low-pass on the horizontal specific force,
//!   converted to a tilt angle through `arcsin(a/g)` and approached at a
//!   bounded tilt rate;
//! * rotational: high-pass on the body rates.
//!
//! The order-2 translational filter is `s² / (s² + 2ζω_n s + ω_n²)`. Fed
//! with a step it leaves a steady displacement of `a/ω_n²`, so the default
//! order 3 adds `s / (s + ω_1)` to wash the displacement out as well.
//!
//! The commands are then limited so the platform stays inside its
//! envelope: acceleration boxes, a velocity box, a braking-distance bound
//! toward each excursion limit, and the corresponding bounds on angles,
//! angular rates and angular accelerations. Every intervention is logged.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{ActuatorLimits, AXIS_NAMES};
use crate::prediction::{INPUTS, U_ACC, U_ROT, U_TILT};
use crate::vestibular::{tilt_angle, VestibularError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CwfError {
    #[error("invalid washout setting: {0}")]
    Config(String),
    #[error(transparent)]
    Tilt(#[from] VestibularError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CwfConfig {
    /// 2 or 3.
    pub translational_order: u8,
    pub translational_wn: f64,
    pub translational_zeta: f64,
    /// Break of the extra first-order section of the order-3 filter.
    pub translational_w1: f64,
    pub tilt_break: f64,
    pub rotational_break: f64,
    /// rad/s
    pub tilt_rate_limit: f64,
    /// Specific-force scaling per axis.
    pub force_gain: [f64; 3],
    /// Body-rate scaling per axis.
    pub rate_gain: [f64; 3],
    pub small_angle: bool,
    pub g: f64,
    /// Fraction of each excursion and velocity limit the limiter aims for.
    pub envelope_fraction: f64,
}

impl Default for CwfConfig {
    fn default() -> Self {
        Self {
            translational_order: 3,
            translational_wn: 2.5,
            translational_zeta: 1.0,
            translational_w1: 1.0,
            tilt_break: 2.0,
            rotational_break: 1.0,
            tilt_rate_limit: 3f64.to_radians(),
            force_gain: [0.6; 3],
            rate_gain: [0.6; 3],
            small_angle: false,
            g: 9.81,
            envelope_fraction: 0.95,
        }
    }
}

impl CwfConfig {
    pub fn validate(&self) -> Result<(), CwfError> {
        if !matches!(self.translational_order, 2 | 3) {
            return Err(CwfError::Config(format!("translational_order {} (must be 2 or 3)", self.translational_order)));
        }
        let positive = [
            ("translational_wn", self.translational_wn),
            ("translational_zeta", self.translational_zeta),
            ("translational_w1", self.translational_w1),
            ("tilt_break", self.tilt_break),
            ("rotational_break", self.rotational_break),
            ("tilt_rate_limit", self.tilt_rate_limit),
            ("g", self.g),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CwfError::Config(format!("{name} = {v} must be positive")));
            }
        }
        for g in self.force_gain.iter().chain(&self.rate_gain) {
            if !(*g > 0.0 && *g <= 1.0) {
                return Err(CwfError::Config(format!("gain {g} outside (0, 1]")));
            }
        }
        if !(self.envelope_fraction > 0.0 && self.envelope_fraction <= 1.0) {
            return Err(CwfError::Config(format!("envelope_fraction {}", self.envelope_fraction)));
        }
        Ok(())
    }
}

/// SISO filter `ẋ = A x + B u`, `y = C x + D u`, sampled with the
/// bilinear transform. Zeros at `s = 0` land exactly on `z = 1`, so a
/// discrete double integration of a high-passed signal washes out the
/// same way the continuous one does (a zero-order hold only keeps the DC
/// gain, not the zero multiplicity).
#[derive(Debug, Clone, PartialEq)]
pub struct SisoFilter {
    ad: DMatrix<f64>,
    bd: DVector<f64>,
    c: DVector<f64>,
    d: f64,
    x: DVector<f64>,
}

impl SisoFilter {
    fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, d: f64, ts: f64) -> Self {
        let n = a.nrows();
        let eye = DMatrix::<f64>::identity(n, n);
        let inv = (&eye - &a * (ts / 2.0)).try_inverse().expect("filter poles are in the open left half plane");
        let ad = &inv * (&eye + &a * (ts / 2.0));
        let bd = &inv * &b * ts.sqrt();
        let cd = (c.transpose() * &inv).transpose() * ts.sqrt();
        let dd = d + (c.transpose() * &inv * &b)[(0, 0)] * ts / 2.0;
        Self { ad, bd, c: cd, d: dd, x: DVector::zeros(n) }
    }

    /// `s / (s + w)`
    pub fn high_pass_1(w: f64, ts: f64) -> Self {
        Self::new(DMatrix::from_element(1, 1, -w), DVector::from_element(1, 1.0), DVector::from_element(1, -w), 1.0, ts)
    }

    /// `w / (s + w)`
    pub fn low_pass_1(w: f64, ts: f64) -> Self {
        Self::new(DMatrix::from_element(1, 1, -w), DVector::from_element(1, 1.0), DVector::from_element(1, w), 0.0, ts)
    }

    /// `s² / (s² + 2ζw s + w²)`
    pub fn high_pass_2(w: f64, zeta: f64, ts: f64) -> Self {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w * w, -2.0 * zeta * w]);
        Self::new(a, DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![-w * w, -2.0 * zeta * w]), 1.0, ts)
    }

    pub fn step(&mut self, u: f64) -> f64 {
        let y = self.c.dot(&self.x) + self.d * u;
        self.x = &self.ad * &self.x + &self.bd * u;
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Chain(Vec<SisoFilter>);

impl Chain {
    fn step(&mut self, u: f64) -> f64 {
        self.0.iter_mut().fold(u, |v, f| f.step(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClampEvent {
    pub t: f64,
    pub channel: String,
    pub requested: f64,
    pub applied: f64,
}

/// Linear filter outputs before any limiting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwfRaw {
    pub acceleration: Vector3<f64>,
    pub rate: Vector3<f64>,
    /// Low-passed horizontal specific force feeding tilt coordination.
    pub tilt_force: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CwfBank {
    cfg: CwfConfig,
    limits: ActuatorLimits,
    home_height: f64,
    ts: f64,
    translational: [Chain; 3],
    tilt: [SisoFilter; 2],
    rotational: [SisoFilter; 3],
    // limiter states, tracking what the plant integrates
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    rot_angle: Vector3<f64>,
    tilt_angle: [f64; 2],
    omega_prev: Vector3<f64>,
    clamps: Vec<ClampEvent>,
}

pub fn cwf_build(cfg: &CwfConfig, limits: &ActuatorLimits, home_height: f64, ts: f64) -> Result<CwfBank, CwfError> {
    cfg.validate()?;
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(CwfError::Config(format!("ts = {ts}")));
    }
    let chain = || {
        let mut v = vec![SisoFilter::high_pass_2(cfg.translational_wn, cfg.translational_zeta, ts)];
        if cfg.translational_order == 3 {
            v.push(SisoFilter::high_pass_1(cfg.translational_w1, ts));
        }
        Chain(v)
    };
    Ok(CwfBank {
        cfg: cfg.clone(),
        limits: limits.clone(),
        home_height,
        ts,
        translational: [chain(), chain(), chain()],
        tilt: [SisoFilter::low_pass_1(cfg.tilt_break, ts), SisoFilter::low_pass_1(cfg.tilt_break, ts)],
        rotational: std::array::from_fn(|_| SisoFilter::high_pass_1(cfg.rotational_break, ts)),
        position: Vector3::zeros(),
        velocity: Vector3::zeros(),
        rot_angle: Vector3::zeros(),
        tilt_angle: [0.0; 2],
        omega_prev: Vector3::zeros(),
        clamps: Vec::new(),
    })
}

/// Largest `|v|` from which a constant deceleration `a_brake` stops within
/// `distance`.
fn stopping_speed(distance: f64, a_brake: f64) -> f64 {
    (2.0 * a_brake * distance.max(0.0)).sqrt()
}

impl CwfBank {
    pub fn clamp_log(&self) -> &[ClampEvent] {
        &self.clamps
    }

    /// Advances the linear filters only.
    pub fn filter(&mut self, accel: &Vector3<f64>, omega: &Vector3<f64>) -> CwfRaw {
        let mut raw = CwfRaw { acceleration: Vector3::zeros(), rate: Vector3::zeros(), tilt_force: [0.0; 2] };
        for i in 0..3 {
            let a = self.cfg.force_gain[i] * accel[i];
            raw.acceleration[i] = self.translational[i].step(a);
            raw.rate[i] = self.rotational[i].step(self.cfg.rate_gain[i] * omega[i]);
            if i < 2 {
                raw.tilt_force[i] = self.tilt[i].step(a);
            }
        }
        raw
    }

    fn log(&mut self, t: f64, channel: String, requested: f64, applied: f64) {
        if (requested - applied).abs() > 1e-12 {
            self.clamps.push(ClampEvent { t, channel, requested, applied });
        }
    }

    /// One sample: filters, tilt coordination and limiting. Returns the
    /// plant input `[a (3), ω_rot (3), ω_tilt (2)]`.
    pub fn step(&mut self, t: f64, accel: &Vector3<f64>, omega: &Vector3<f64>) -> Result<DVector<f64>, CwfError> {
        let raw = self.filter(accel, omega);
        let ts = self.ts;
        let frac = self.cfg.envelope_fraction;
        let lim = self.limits.clone();
        let mut u = DVector::zeros(INPUTS);

        for i in 0..3 {
            let [a_lo, a_hi] = lim.acceleration[i];
            let [mut r_lo, mut r_hi] = lim.excursion[i];
            if i == 2 {
                r_lo -= self.home_height;
                r_hi -= self.home_height;
            }
            let (r_lo, r_hi) = (r_lo * frac, r_hi * frac);
            let [v_lo, v_hi] = lim.velocity[i];
            let (r, v) = (self.position[i], self.velocity[i]);
            let brake = 0.5 * a_hi.min(-a_lo);
            let r_next = r + v * ts;
            let v_max = (v_hi * frac).min(stopping_speed(r_hi - r_next, brake));
            let v_min = (v_lo * frac).max(-stopping_speed(r_next - r_lo, brake));
            let req = raw.acceleration[i];
            let mut a = req.clamp((v_min - v) / ts, ((v_max - v) / ts).max((v_min - v) / ts));
            a = a.clamp(a_lo, a_hi);
            self.log(t, format!("accel_{}", AXIS_NAMES[i]), req, a);
            u[U_ACC.start + i] = a;
            self.position[i] = r + v * ts + 0.5 * a * ts * ts;
            self.velocity[i] = v + a * ts;
        }

        // tilt: channel 0 longitudinal (pitch), channel 1 lateral (roll)
        let mut tilt_rate = [0.0; 2];
        for c in 0..2 {
            let target = tilt_angle(
                raw.tilt_force[c].clamp(-0.99 * self.cfg.g, 0.99 * self.cfg.g),
                self.cfg.g,
                self.cfg.small_angle,
            )?;
            let want = (target - self.tilt_angle[c]) / ts;
            let lim_rate = self.cfg.tilt_rate_limit;
            tilt_rate[c] = want.clamp(-lim_rate, lim_rate);
        }

        // total body rates = rotational + tilt, limited on angle, rate and
        // angular acceleration
        let tilt_axis = [1usize, 0];
        let mut total = Vector3::zeros();
        for axis in 0..3 {
            let tilt_c = tilt_axis.iter().position(|&a| a == axis);
            let tilt_part = tilt_c.map_or(0.0, |c| tilt_rate[c]);
            let tilt_ang = tilt_c.map_or(0.0, |c| self.tilt_angle[c]);
            let req = raw.rate[axis] + tilt_part;
            let [ang_lo, ang_hi] = lim.excursion[3 + axis];
            let [w_lo, w_hi] = lim.velocity[3 + axis];
            let [al_lo, al_hi] = lim.acceleration[3 + axis];
            let angle = self.rot_angle[axis] + tilt_ang;
            let brake = 0.5 * al_hi.min(-al_lo);
            let w_max = (w_hi * frac).min(stopping_speed(ang_hi * frac - angle, brake));
            let w_min = (w_lo * frac).max(-stopping_speed(angle - ang_lo * frac, brake));
            let prev = self.omega_prev[axis];
            let mut w = req.clamp(w_min, w_max.max(w_min));
            w = w.clamp(prev + al_lo * ts, prev + al_hi * ts);
            self.log(t, format!("rate_{}", AXIS_NAMES[3 + axis]), req, w);
            total[axis] = w;
            // keep the tilt share when possible, the rest is rotational
            let tilt_kept = match tilt_c {
                Some(c) => {
                    let kept = if req.abs() > 1e-15 { tilt_part * (w / req).clamp(0.0, 1.0) } else { 0.0 };
                    self.tilt_angle[c] += kept * ts;
                    u[U_TILT.start + c] = kept;
                    kept
                }
                None => 0.0,
            };
            u[U_ROT.start + axis] = w - tilt_kept;
            self.rot_angle[axis] += (w - tilt_kept) * ts;
        }
        self.omega_prev = total;
        Ok(u)
    }
}

/// Runs the filter bank over aircraft signals (`samples × 3` each) and
/// returns the plant inputs (`samples × 8`) with the clamp log.
pub fn run_cwf(
    cfg: &CwfConfig,
    limits: &ActuatorLimits,
    home_height: f64,
    ts: f64,
    acceleration: &DMatrix<f64>,
    angular_velocity: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<ClampEvent>), CwfError> {
    let mut bank = cwf_build(cfg, limits, home_height, ts)?;
    let n = acceleration.nrows();
    let mut out = DMatrix::zeros(n, INPUTS);
    for k in 0..n {
        let a = Vector3::new(acceleration[(k, 0)], acceleration[(k, 1)], acceleration[(k, 2)]);
        let w = Vector3::new(angular_velocity[(k, 0)], angular_velocity[(k, 1)], angular_velocity[(k, 2)]);
        let u = bank.step(k as f64 * ts, &a, &w)?;
        out.row_mut(k).copy_from(&u.transpose());
    }
    Ok((out, bank.clamps))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TS: f64 = 0.05;

    fn bank() -> CwfBank {
        cwf_build(&CwfConfig::default(), &ActuatorLimits::default(), 3.0, TS).unwrap()
    }

    #[test]
    fn zero_input_stays_neutral() {
        let mut b = bank();
        for k in 0..100 {
            let u = b.step(k as f64 * TS, &Vector3::zeros(), &Vector3::zeros()).unwrap();
            assert_eq!(u.amax(), 0.0);
        }
        assert!(b.clamp_log().is_empty());
    }

    #[test]
    fn constant_acceleration_washes_out_displacement() {
        let mut b = bank();
        let a = Vector3::new(0.5, 0.0, 0.0);
        for k in 0..4000 {
            b.step(k as f64 * TS, &a, &Vector3::zeros()).unwrap();
        }
        assert!(b.position.norm() < 1e-4, "{}", b.position);
        assert!(b.velocity.norm() < 1e-4);
    }

    #[test]
    fn order_two_leaves_steady_displacement() {
        let cfg = CwfConfig { translational_order: 2, ..CwfConfig::default() };
        let mut b = cwf_build(&cfg, &ActuatorLimits::default(), 3.0, TS).unwrap();
        let a = Vector3::new(0.5, 0.0, 0.0);
        for k in 0..4000 {
            b.step(k as f64 * TS, &a, &Vector3::zeros()).unwrap();
        }
        let expect = 0.6 * 0.5 / 2.5f64.powi(2);
        assert!((b.position[0] - expect).abs() < 2e-3, "{} vs {expect}", b.position[0]);
    }

    #[test]
    fn constant_acceleration_settles_tilt() {
        let mut b = bank();
        let a = Vector3::new(0.0, 1.0, 0.0);
        for k in 0..2000 {
            b.step(k as f64 * TS, &a, &Vector3::zeros()).unwrap();
        }
        let want = (0.6f64 / 9.81).asin();
        assert!((b.tilt_angle[1] - want).abs() < 1e-6, "{} vs {want}", b.tilt_angle[1]);
        assert!(b.tilt_angle[0].abs() < 1e-12);
    }

    #[test]
    fn tilt_rate_is_limited() {
        let mut b = bank();
        let a = Vector3::new(3.0, 0.0, 0.0);
        for k in 0..200 {
            let u = b.step(k as f64 * TS, &a, &Vector3::zeros()).unwrap();
            assert!(u[U_TILT.start].abs() <= 3f64.to_radians() + 1e-12);
        }
    }

    #[test]
    fn high_pass_has_zero_dc_gain() {
        for mut f in [SisoFilter::high_pass_1(1.0, TS), SisoFilter::high_pass_2(2.5, 1.0, TS)] {
            let mut y = 1.0;
            for _ in 0..5000 {
                y = f.step(1.0);
            }
            assert!(y.abs() < 1e-9);
        }
        let mut lp = SisoFilter::low_pass_1(2.0, TS);
        let mut y = 0.0;
        for _ in 0..5000 {
            y = lp.step(1.0);
        }
        assert!((y - 1.0).abs() < 1e-9);
    }

    #[test]
    fn filters_are_linear() {
        let mut b1 = bank();
        let mut b2 = bank();
        for k in 0..200 {
            let t = k as f64 * TS;
            let a = Vector3::new(t.sin(), (2.0 * t).cos(), 0.3 * t.sin());
            let w = Vector3::new(0.1 * t.cos(), 0.05, -0.02 * t);
            let r1 = b1.filter(&a, &w);
            let r2 = b2.filter(&(a * 2.0), &(w * 2.0));
            assert!((r2.acceleration - r1.acceleration * 2.0).norm() < 1e-12);
            assert!((r2.rate - r1.rate * 2.0).norm() < 1e-12);
            for c in 0..2 {
                assert!((r2.tilt_force[c] - 2.0 * r1.tilt_force[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn over_range_acceleration_is_clamped_and_logged() {
        let mut b = bank();
        let u = b.step(0.0, &Vector3::new(0.0, 20.0, 0.0), &Vector3::zeros()).unwrap();
        // 0.6 · 20 = 12 m/s² enters the high-pass, whose first output
        // sample is still above the 10 m/s² bound
        assert!(u[U_ACC.start + 1] <= 10.0);
        let ev = b.clamp_log().iter().find(|e| e.channel == "accel_y").unwrap();
        assert!(ev.requested > 10.0 && ev.applied <= 10.0, "{ev:?}");
    }

    #[test]
    fn sustained_push_stays_inside_excursion() {
        let cfg = CwfConfig { translational_order: 2, translational_wn: 0.3, ..CwfConfig::default() };
        let lim = ActuatorLimits::default();
        let mut b = cwf_build(&cfg, &lim, 3.0, TS).unwrap();
        for k in 0..600 {
            b.step(k as f64 * TS, &Vector3::new(8.0, 0.0, 0.0), &Vector3::zeros()).unwrap();
            assert!(b.position[0] <= lim.excursion[0][1] + 1e-9, "{}", b.position[0]);
            assert!(b.velocity[0].abs() <= lim.velocity[0][1] + 1e-9);
        }
        assert!(!b.clamp_log().is_empty());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = CwfConfig { translational_order: 4, ..CwfConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = CwfConfig { force_gain: [1.2, 0.6, 0.6], ..CwfConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
