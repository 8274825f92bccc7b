//! Stewart-platform inverse kinematics, the leg-rate Jacobian and
//! actuator limit checks.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("leg {leg} has length {length:e}; pose is degenerate")]
    DegeneratePose { leg: usize, length: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
}

/// Joint locations: base points in the inertial frame, platform points in
/// the platform frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformGeometry {
    pub base_points: [[f64; 3]; 6],
    pub platform_points: [[f64; 3]; 6],
    pub home_height: f64,
}

impl Default for PlatformGeometry {
    fn default() -> Self {
        Self::symmetric(2.1, 1.5, 15.0, 3.0)
    }
}

impl PlatformGeometry {
    /// Joints on two circles with three-fold symmetry. Base joints sit at
    /// `120°·k ± half_spread`; leg `2k + j` runs to the platform joint at
    /// `120°·k ± (60° − half_spread)`, so neighbouring legs of adjacent
    /// base pairs share a platform pair centred on `60° + 120°·k`.
    pub fn symmetric(base_radius: f64, platform_radius: f64, half_spread_deg: f64, home_height: f64) -> Self {
        let mut base_points = [[0.0; 3]; 6];
        let mut platform_points = [[0.0; 3]; 6];
        for k in 0..3 {
            let centre = 120.0 * k as f64;
            for (j, sign) in [-1.0, 1.0].into_iter().enumerate() {
                let leg = 2 * k + j;
                let b = (centre + sign * half_spread_deg).to_radians();
                let p = (centre + sign * (60.0 - half_spread_deg)).to_radians();
                base_points[leg] = [base_radius * b.cos(), base_radius * b.sin(), 0.0];
                platform_points[leg] = [platform_radius * p.cos(), platform_radius * p.sin(), 0.0];
            }
        }
        Self { base_points, platform_points, home_height }
    }

    pub fn base(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.base_points[i])
    }

    pub fn platform(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.platform_points[i])
    }

    pub fn neutral_pose(&self) -> PlatformPose {
        PlatformPose::new(Vector3::new(0.0, 0.0, self.home_height), [0.0; 3])
    }

    /// Checks the point set and that every neutral leg length lies in
    /// `leg_range`.
    pub fn validate(&self, leg_range: [f64; 2]) -> Result<(), KinematicsError> {
        if !(self.home_height.is_finite() && self.home_height > 0.0) {
            return Err(KinematicsError::InvalidGeometry(format!("home_height {}", self.home_height)));
        }
        for i in 0..6 {
            for j in i + 1..6 {
                if (self.base(i) - self.base(j)).norm() < 1e-9 {
                    return Err(KinematicsError::InvalidGeometry(format!("base points {i} and {j} coincide")));
                }
            }
        }
        let legs = leg_vectors(self, &self.neutral_pose())?;
        for (i, leg) in legs.iter().enumerate() {
            if leg.length < leg_range[0] || leg.length > leg_range[1] {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "neutral length of leg {i} is {:.4} m, outside [{}, {}]",
                    leg.length, leg_range[0], leg_range[1]
                )));
            }
        }
        Ok(())
    }
}

/// Platform origin in the inertial frame and the Euler angles
/// `(φ, θ, ψ)` consumed by [`rotation_matrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatformPose {
    pub position: Vector3<f64>,
    pub euler: [f64; 3],
}

impl PlatformPose {
    pub fn new(position: Vector3<f64>, euler: [f64; 3]) -> Self {
        Self { position, euler }
    }

    /// Pose whose orientation is the rotation vector `attitude` (body
    /// x/y/z rotations), expressed in the Euler convention of
    /// [`rotation_matrix`].
    pub fn from_attitude(position: Vector3<f64>, attitude: Vector3<f64>) -> Self {
        let r = nalgebra::Rotation3::new(attitude).into_inner();
        Self { position, euler: euler_from_matrix(&r) }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(self.euler[0], self.euler[1], self.euler[2])
    }
}

/// The platform-to-inertial rotation, entry for entry:
///
/// ```text
/// [ cψcφ − cθsφsψ   −sψcφ − cθsφcψ    sθsφ ]
/// [ cψsφ + cθcφsψ   −sψsφ + cθcφcψ   −sθcφ ]
/// [ sψsθ             cψsθ              cθ  ]
/// ```
pub fn rotation_matrix(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Matrix3::new(
        cp * cf - ct * sf * sp,
        -sp * cf - ct * sf * cp,
        st * sf,
        cp * sf + ct * cf * sp,
        -sp * sf + ct * cf * cp,
        -st * cf,
        sp * st,
        cp * st,
        ct,
    )
}

/// Inverse of [`rotation_matrix`] for a proper rotation. At `θ = 0` the two
/// outer angles are not separable; `ψ = 0` is chosen.
pub fn euler_from_matrix(r: &Matrix3<f64>) -> [f64; 3] {
    let st = (r[(0, 2)].powi(2) + r[(1, 2)].powi(2)).sqrt();
    let theta = st.atan2(r[(2, 2)]);
    if st < 1e-12 {
        // R = Rz(φ)·Rx(θ)·Rz(ψ) with θ ∈ {0, π}: only φ ± ψ is observable
        let phi = r[(1, 0)].atan2(r[(0, 0)]);
        return [phi, theta, 0.0];
    }
    let phi = r[(0, 2)].atan2(-r[(1, 2)]);
    let psi = r[(2, 0)].atan2(r[(2, 1)]);
    [phi, theta, psi]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    /// `L_i = r + R·c_i^P − b_i`.
    pub vector: Vector3<f64>,
    pub length: f64,
    pub unit: Vector3<f64>,
    /// `R·c_i^P`, the platform joint offset expressed in the inertial frame.
    pub joint_offset: Vector3<f64>,
}

pub fn leg_vectors(geom: &PlatformGeometry, pose: &PlatformPose) -> Result<[Leg; 6], KinematicsError> {
    let r = pose.rotation();
    let mut legs =
        [Leg { vector: Vector3::zeros(), length: 0.0, unit: Vector3::zeros(), joint_offset: Vector3::zeros() }; 6];
    for (i, leg) in legs.iter_mut().enumerate() {
        let offset = r * geom.platform(i);
        let v = pose.position + offset - geom.base(i);
        let length = v.norm();
        if !(length >= 1e-9) {
            return Err(KinematicsError::DegeneratePose { leg: i, length });
        }
        *leg = Leg { vector: v, length, unit: v / length, joint_offset: offset };
    }
    Ok(legs)
}

pub fn leg_lengths(geom: &PlatformGeometry, pose: &PlatformPose) -> Result<Vector6<f64>, KinematicsError> {
    let legs = leg_vectors(geom, pose)?;
    Ok(Vector6::from_fn(|i, _| legs[i].length))
}

/// `l̇ = J · [v; ω]`: row `i` is `[ŝ_iᵀ, ((R·c_i^P) × ŝ_i)ᵀ]`. The left
/// 6×3 block holds the translational rows and the right block the
/// rotational rows.
pub fn leg_rate_jacobian(geom: &PlatformGeometry, pose: &PlatformPose) -> Result<Matrix6<f64>, KinematicsError> {
    let legs = leg_vectors(geom, pose)?;
    let mut j = Matrix6::zeros();
    for (i, leg) in legs.iter().enumerate() {
        let rot = leg.joint_offset.cross(&leg.unit);
        for c in 0..3 {
            j[(i, c)] = leg.unit[c];
            j[(i, c + 3)] = rot[c];
        }
    }
    Ok(j)
}

/// Motion envelope of the platform. Angles in rad, rates in rad/s.
/// Vertical excursion is absolute height; everything else is relative to
/// the neutral pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorLimits {
    pub excursion: [[f64; 2]; 6],
    pub velocity: [[f64; 2]; 6],
    pub acceleration: [[f64; 2]; 6],
    pub leg_length: [f64; 2],
    pub leg_rate: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        let deg = |d: f64| d.to_radians();
        Self {
            excursion: [
                [-1.7, 1.7],
                [-1.7, 1.7],
                [2.2, 3.8],
                [-deg(25.0), deg(25.0)],
                [-deg(25.0), deg(25.0)],
                [-deg(30.0), deg(30.0)],
            ],
            velocity: [
                [-1.5, 1.5],
                [-1.5, 1.5],
                [-1.0, 1.0],
                [-deg(30.0), deg(30.0)],
                [-deg(30.0), deg(30.0)],
                [-deg(30.0), deg(30.0)],
            ],
            acceleration: [
                [-10.0, 10.0],
                [-10.0, 10.0],
                [-7.0, 7.0],
                [-deg(200.0), deg(200.0)],
                [-deg(200.0), deg(200.0)],
                [-deg(200.0), deg(200.0)],
            ],
            leg_length: [2.5, 4.5],
            leg_rate: 1.0,
        }
    }
}

impl ActuatorLimits {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let intervals = self
            .excursion
            .iter()
            .chain(&self.velocity)
            .chain(&self.acceleration)
            .chain(std::iter::once(&self.leg_length));
        for iv in intervals {
            if !(iv[0] < iv[1]) {
                return Err(KinematicsError::InvalidLimits(format!("interval [{}, {}]", iv[0], iv[1])));
            }
        }
        if !(self.leg_rate > 0.0) {
            return Err(KinematicsError::InvalidLimits(format!("leg_rate {}", self.leg_rate)));
        }
        Ok(())
    }
}

pub const AXIS_NAMES: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];

/// One sample of an applied platform motion. Position is absolute;
/// attitude is the rotation vector about body x/y/z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub attitude: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub angular_acceleration: Vector3<f64>,
}

impl MotionSample {
    pub fn at_rest(t: f64, home_height: f64) -> Self {
        Self {
            t,
            position: Vector3::new(0.0, 0.0, home_height),
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            attitude: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            angular_acceleration: Vector3::zeros(),
        }
    }

    pub fn pose(&self) -> PlatformPose {
        PlatformPose::from_attitude(self.position, self.attitude)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub channel: String,
    pub value: f64,
    pub bound: [f64; 2],
}

/// Every sample/channel pair outside its interval. Legs are evaluated on
/// the exact inverse kinematics of each pose; leg rates through the
/// Jacobian at that pose.
pub fn check_limits(
    trajectory: &[MotionSample],
    limits: &ActuatorLimits,
    geom: &PlatformGeometry,
) -> Result<Vec<Violation>, KinematicsError> {
    const SLACK: f64 = 1e-9;
    let mut out = Vec::new();
    let mut push = |t: f64, channel: String, value: f64, bound: [f64; 2]| {
        if value < bound[0] - SLACK || value > bound[1] + SLACK {
            out.push(Violation { t, channel, value, bound });
        }
    };
    for s in trajectory {
        for axis in 0..6 {
            let (pos, vel, acc) = if axis < 3 {
                (s.position[axis], s.velocity[axis], s.acceleration[axis])
            } else {
                (s.attitude[axis - 3], s.angular_velocity[axis - 3], s.angular_acceleration[axis - 3])
            };
            let name = AXIS_NAMES[axis];
            push(s.t, format!("{name}.excursion"), pos, limits.excursion[axis]);
            push(s.t, format!("{name}.velocity"), vel, limits.velocity[axis]);
            push(s.t, format!("{name}.acceleration"), acc, limits.acceleration[axis]);
        }
        let pose = s.pose();
        let legs = leg_vectors(geom, &pose)?;
        let jac = leg_rate_jacobian(geom, &pose)?;
        let twist = Vector6::new(
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            s.angular_velocity.x,
            s.angular_velocity.y,
            s.angular_velocity.z,
        );
        let rates = jac * twist;
        for i in 0..6 {
            push(s.t, format!("leg{}.length", i + 1), legs[i].length, limits.leg_length);
            push(s.t, format!("leg{}.rate", i + 1), rates[i], [-limits.leg_rate, limits.leg_rate]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rotation_identity_and_quarter_turn() {
        assert!((rotation_matrix(0.0, 0.0, 0.0) - Matrix3::identity()).abs().max() < 1e-15);
        let r = rotation_matrix(FRAC_PI_2, 0.0, 0.0);
        let want = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - want).abs().max() < 1e-15);
    }

    #[test]
    fn euler_round_trip() {
        for (f, t, p) in [(0.3, 0.2, -0.5), (-1.0, 1.2, 2.0), (0.1, 0.0, 0.0), (0.4, -0.3, 0.2)] {
            let r = rotation_matrix(f, t, p);
            let e = euler_from_matrix(&r);
            let back = rotation_matrix(e[0], e[1], e[2]);
            assert!((r - back).abs().max() < 1e-12);
        }
        let att = Vector3::new(0.1, -0.2, 0.05);
        let pose = PlatformPose::from_attitude(Vector3::zeros(), att);
        let want = nalgebra::Rotation3::new(att).into_inner();
        assert!((pose.rotation() - want).abs().max() < 1e-12);
    }

    #[test]
    fn single_vertical_leg() {
        let mut geom = PlatformGeometry::default();
        geom.base_points[0] = [1.0, 0.0, 0.0];
        geom.platform_points[0] = [1.0, 0.0, 0.0];
        let pose = PlatformPose::new(Vector3::new(0.0, 0.0, 3.0), [0.0; 3]);
        let legs = leg_vectors(&geom, &pose).unwrap();
        assert!((legs[0].vector - Vector3::new(0.0, 0.0, 3.0)).norm() < 1e-15);
        assert_eq!(legs[0].length, 3.0);
        assert!((legs[0].unit - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn degenerate_leg_is_reported() {
        let mut geom = PlatformGeometry::default();
        geom.base_points[2] = [0.0, 0.0, 0.0];
        geom.platform_points[2] = [0.0, 0.0, 0.0];
        let pose = PlatformPose::new(Vector3::zeros(), [0.0; 3]);
        assert!(matches!(leg_vectors(&geom, &pose), Err(KinematicsError::DegeneratePose { leg: 2, .. })));
    }

    #[test]
    fn default_geometry_neutral_legs_equal_and_in_range() {
        let geom = PlatformGeometry::default();
        let l = leg_lengths(&geom, &geom.neutral_pose()).unwrap();
        for i in 1..6 {
            assert!((l[i] - l[0]).abs() < 1e-12);
        }
        geom.validate(ActuatorLimits::default().leg_length).unwrap();
        // pure yaw keeps the three-fold symmetry
        let yawed = PlatformPose::new(Vector3::new(0.0, 0.0, 3.0), [0.2, 0.0, 0.0]);
        let l = leg_lengths(&geom, &yawed).unwrap();
        for i in 2..6 {
            assert!((l[i] - l[i % 2]).abs() < 1e-12);
        }
        assert!((l[0] - l[1]).abs() > 1e-3);
    }

    #[test]
    fn vertical_legs_rate() {
        let mut geom = PlatformGeometry::default();
        for i in 0..6 {
            geom.platform_points[i] = geom.base_points[i];
        }
        let j = leg_rate_jacobian(&geom, &geom.neutral_pose()).unwrap();
        let rates = j * Vector6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        for i in 0..6 {
            assert!((rates[i] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn limit_report() {
        let limits = ActuatorLimits::default();
        let geom = PlatformGeometry::default();
        let rest: Vec<_> = (0..10).map(|k| MotionSample::at_rest(k as f64 * 0.1, 3.0)).collect();
        assert!(check_limits(&rest, &limits, &geom).unwrap().is_empty());

        let mut high = MotionSample::at_rest(0.5, 3.0);
        high.position.z = 4.0;
        let v = check_limits(&[high], &limits, &geom).unwrap();
        let z = v.iter().find(|v| v.channel == "z.excursion").unwrap();
        assert_eq!(z.bound, [2.2, 3.8]);
        assert_eq!(z.value, 4.0);

        let mut fast = MotionSample::at_rest(0.0, 3.0);
        fast.angular_velocity.x = 31f64.to_radians();
        let v = check_limits(&[fast], &limits, &geom).unwrap();
        assert!(v.iter().any(|v| v.channel == "roll.velocity"));
    }

    #[test]
    fn limits_validation() {
        let mut l = ActuatorLimits::default();
        l.validate().unwrap();
        l.velocity[2] = [1.0, -1.0];
        assert!(l.validate().is_err());
    }
}
