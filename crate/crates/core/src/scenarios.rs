//! Synthetic aircraft reference trajectories and their perceived
//! counterparts.
//!
//! A trace holds body-frame specific-force deviations from trim (`a`,
//! m/s²) and body rates (`ω`, rad/s) sampled every `ts`, plus the eight
//! perceived channels obtained by running those signals through the
//! vestibular model. The aircraft signals already contain the gravity
//! component of any attitude change, so the tilt-rate slots of the
//! vestibular model are driven with zero.
//!
//! Generators:
//!
//! * [`gen_bumpy`]: sums of sinusoids on exact DFT bins between 0.5 and
//!   5 Hz on the lateral and vertical axes, with small correlated roll and
//!   pitch rates (never above 0.5°/s).
//! * [`gen_horizontal_stall`]: trim, a rapid lateral onset, a hold at the
//!   peak, a decaying oscillatory recovery and a return to trim. The stage
//!   boundaries are exported. [`StallParams::lite`] and
//!   [`StallParams::wind_shear`] are presets.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prediction::tilt_embedding;
use crate::state_space::{simulate, Integrator, StateSpaceError};
use crate::vestibular::VestibularModel;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario parameter: {0}")]
    Param(String),
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace csv row {row}: {msg}")]
    Format { row: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrace {
    pub id: String,
    pub seed: u64,
    pub ts: f64,
    /// Specific-force deviation, one row per sample (x, y, z).
    pub acceleration: DMatrix<f64>,
    /// Body rates, one row per sample (roll, pitch, yaw).
    pub angular_velocity: DMatrix<f64>,
    /// Vestibular outputs `[â (3), â_tilt (2), ω̂ (3)]` per sample.
    pub perceived: DMatrix<f64>,
    /// Stage boundary times (s), strictly increasing. Empty for traces
    /// without stages.
    pub stages: Vec<f64>,
}

impl ScenarioTrace {
    /// Builds a trace and its perceived channels.
    pub fn from_signals(
        id: impl Into<String>,
        seed: u64,
        ts: f64,
        acceleration: DMatrix<f64>,
        angular_velocity: DMatrix<f64>,
        vestibular: &VestibularModel,
    ) -> Result<Self, ScenarioError> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(ScenarioError::Param(format!("ts = {ts}")));
        }
        if acceleration.ncols() != 3
            || angular_velocity.ncols() != 3
            || acceleration.nrows() != angular_velocity.nrows()
        {
            return Err(ScenarioError::Param("need two n×3 signal matrices of equal length".into()));
        }
        let perceived = perceived_reference(&acceleration, &angular_velocity, vestibular, ts)?;
        Ok(Self { id: id.into(), seed, ts, acceleration, angular_velocity, perceived, stages: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.acceleration.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.ts).collect()
    }

    /// Perceived specific force (otolith plus tilt, per axis) and perceived
    /// angular velocity: the six references the cueing algorithms track.
    pub fn reference(&self) -> DMatrix<f64> {
        let embed = tilt_embedding();
        let mut out = DMatrix::zeros(self.len(), 6);
        for k in 0..self.len() {
            let row = self.perceived.row(k);
            let tilt = &embed * DVector::from_vec(vec![row[3], row[4]]);
            for i in 0..3 {
                out[(k, i)] = row[i] + tilt[i];
                out[(k, 3 + i)] = row[5 + i];
            }
        }
        out
    }

    /// Writes `t, ax, ay, az, wx, wy, wz`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ScenarioError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "ax", "ay", "az", "wx", "wy", "wz"])?;
        for k in 0..self.len() {
            let mut rec = vec![k as f64 * self.ts];
            rec.extend(self.acceleration.row(k).iter());
            rec.extend(self.angular_velocity.row(k).iter());
            wr.write_record(rec.iter().map(|v| format!("{v:e}")))?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the format of [`ScenarioTrace::write_csv`]. The sample time is
    /// taken from the first two rows and every row must sit on that grid.
    pub fn read_csv<R: Read>(id: &str, r: R, vestibular: &VestibularModel) -> Result<Self, ScenarioError> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let want = ["t", "ax", "ay", "az", "wx", "wy", "wz"];
        if header.iter().map(str::trim).ne(want) {
            return Err(ScenarioError::Format { row: 0, msg: format!("expected header {}", want.join(",")) });
        }
        let mut rows: Vec<[f64; 7]> = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let mut v = [0.0; 7];
            for (j, field) in rec.iter().enumerate().take(7) {
                v[j] = field.trim().parse().map_err(|_| ScenarioError::Format {
                    row: i + 1,
                    msg: format!("column {} is not a number: {field:?}", want[j]),
                })?;
            }
            if rec.len() != 7 {
                return Err(ScenarioError::Format { row: i + 1, msg: format!("{} fields, expected 7", rec.len()) });
            }
            rows.push(v);
        }
        if rows.len() < 2 {
            return Err(ScenarioError::Format { row: rows.len(), msg: "need at least two samples".into() });
        }
        let ts = rows[1][0] - rows[0][0];
        for (i, r) in rows.iter().enumerate() {
            let expect = rows[0][0] + i as f64 * ts;
            if (r[0] - expect).abs() > 1e-6 * ts.max(1.0) {
                return Err(ScenarioError::Format { row: i + 1, msg: "non-uniform time base".into() });
            }
        }
        let acc = DMatrix::from_fn(rows.len(), 3, |k, c| rows[k][1 + c]);
        let omega = DMatrix::from_fn(rows.len(), 3, |k, c| rows[k][4 + c]);
        Self::from_signals(id, 0, ts, acc, omega, vestibular)
    }
}

/// Vestibular outputs for aircraft signals, sampled with a zero-order
/// hold: row `k` is the perception at `t = k·ts`.
pub fn perceived_reference(
    acceleration: &DMatrix<f64>,
    angular_velocity: &DMatrix<f64>,
    vestibular: &VestibularModel,
    ts: f64,
) -> Result<DMatrix<f64>, ScenarioError> {
    let lay = &vestibular.layout;
    let n = acceleration.nrows();
    let mut inputs = DMatrix::zeros(n, vestibular.model.m());
    inputs.columns_mut(lay.accel_in.start, 3).copy_from(acceleration);
    inputs.columns_mut(lay.rot_in.start, 3).copy_from(angular_velocity);
    Ok(simulate(&vestibular.model, &inputs, ts, Integrator::ZeroOrderHold)?)
}

fn samples(duration: f64, ts: f64) -> Result<usize, ScenarioError> {
    if !(duration > 0.0 && duration.is_finite() && ts > 0.0 && ts.is_finite()) {
        return Err(ScenarioError::Param(format!("duration = {duration}, ts = {ts}")));
    }
    Ok((duration / ts).round() as usize)
}

/// Band of the bumpy generator (Hz).
pub const BUMPY_BAND: [f64; 2] = [0.5, 5.0];
/// Peak roll and pitch rate of the bumpy generator (rad/s).
pub const BUMPY_RATE_PEAK: f64 = 0.45 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BumpyParams {
    pub duration: f64,
    pub intensity: f64,
    /// Peak lateral specific force at intensity 1 (m/s²).
    pub lateral_peak: f64,
    /// Peak vertical specific force at intensity 1 (m/s²).
    pub vertical_peak: f64,
    /// Correlation of the roll rate with the lateral signal.
    pub correlation: f64,
}

impl Default for BumpyParams {
    fn default() -> Self {
        Self { duration: 20.0, intensity: 1.0, lateral_peak: 3.0, vertical_peak: 2.0, correlation: 0.7 }
    }
}

/// Random in-band multisine normalized to a unit peak, on DFT bins of an
/// `n`-sample record.
fn multisine(rng: &mut ChaCha8Rng, n: usize, ts: f64) -> DVector<f64> {
    let record = n as f64 * ts;
    let lo = (BUMPY_BAND[0] * record).ceil() as usize;
    let hi = (BUMPY_BAND[1] * record).floor() as usize;
    let mut out = DVector::zeros(n);
    for bin in lo.max(1)..=hi {
        let f = bin as f64 / record;
        let amp = rng.random::<f64>() / f;
        let phase = rng.random_range(0.0..2.0 * PI);
        for k in 0..n {
            out[k] += amp * (2.0 * PI * f * k as f64 * ts + phase).sin();
        }
    }
    let peak = out.amax();
    if peak > 0.0 {
        out /= peak;
    }
    out
}

/// Bumpy-air trace. With `intensity = 0` every signal is zero.
pub fn gen_bumpy(
    seed: u64,
    params: &BumpyParams,
    ts: f64,
    vestibular: &VestibularModel,
) -> Result<ScenarioTrace, ScenarioError> {
    let n = samples(params.duration, ts)?;
    if !(params.intensity >= 0.0 && params.intensity.is_finite()) || !(0.0..=1.0).contains(&params.correlation) {
        return Err(ScenarioError::Param(format!(
            "intensity = {}, correlation = {}",
            params.intensity, params.correlation
        )));
    }
    if BUMPY_BAND[0] * n as f64 * ts > BUMPY_BAND[1] * n as f64 * ts - 1.0 {
        return Err(ScenarioError::Param("duration too short for the band".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lateral = multisine(&mut rng, n, ts);
    let vertical = multisine(&mut rng, n, ts);
    let roll_own = multisine(&mut rng, n, ts);
    let pitch_own = multisine(&mut rng, n, ts);

    let rho = params.correlation;
    let mix = |shared: &DVector<f64>, own: &DVector<f64>| {
        let mut v = shared * rho + own * (1.0 - rho * rho).sqrt();
        let peak = v.amax();
        if peak > 0.0 {
            v /= peak;
        }
        v
    };
    let roll = mix(&lateral, &roll_own);
    let pitch = mix(&vertical, &pitch_own);

    let i = params.intensity;
    let rate = BUMPY_RATE_PEAK * i.min(1.0);
    let mut acc = DMatrix::zeros(n, 3);
    let mut omega = DMatrix::zeros(n, 3);
    for k in 0..n {
        acc[(k, 1)] = i * params.lateral_peak * lateral[k];
        acc[(k, 2)] = i * params.vertical_peak * vertical[k];
        omega[(k, 0)] = rate * roll[k];
        omega[(k, 1)] = rate * pitch[k];
    }
    ScenarioTrace::from_signals("bumpy", seed, ts, acc, omega, vestibular)
}

/// Horizontal stall: trim for `onset`, lateral ramp to `peak_lateral` in
/// `ramp`, hold for `hold`, decaying oscillation at `recovery_frequency`
/// for `recovery`, then trim until `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StallParams {
    pub duration: f64,
    pub onset: f64,
    pub ramp: f64,
    pub hold: f64,
    pub recovery: f64,
    /// Peak lateral specific force (m/s²).
    pub peak_lateral: f64,
    /// Peak vertical specific force, applied with the same envelope
    /// (m/s²).
    pub peak_vertical: f64,
    /// Peak roll rate during onset and recovery (rad/s).
    pub peak_roll_rate: f64,
    /// Peak yaw rate during onset and recovery (rad/s).
    pub peak_yaw_rate: f64,
    /// Oscillation frequency of the recovery (Hz).
    pub recovery_frequency: f64,
}

impl Default for StallParams {
    fn default() -> Self {
        Self {
            duration: 14.0,
            onset: 2.0,
            ramp: 0.6,
            hold: 1.5,
            recovery: 5.0,
            peak_lateral: 8.0,
            peak_vertical: 0.0,
            peak_roll_rate: 10f64.to_radians(),
            peak_yaw_rate: 5f64.to_radians(),
            recovery_frequency: 0.4,
        }
    }
}

impl StallParams {
    /// A gentle stall that stays inside the terminal-constrained envelope.
    pub fn lite() -> Self {
        Self {
            peak_lateral: 0.8,
            peak_roll_rate: 2f64.to_radians(),
            peak_yaw_rate: 1f64.to_radians(),
            ramp: 1.5,
            ..Self::default()
        }
    }

    /// A stall with a vertical downdraft superimposed.
    pub fn wind_shear() -> Self {
        Self { peak_lateral: 5.0, peak_vertical: -4.0, ..Self::default() }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let ok = [self.onset, self.ramp, self.hold, self.recovery, self.recovery_frequency]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
            && [self.peak_lateral, self.peak_vertical, self.peak_roll_rate, self.peak_yaw_rate]
                .iter()
                .all(|v| v.is_finite());
        if !ok {
            return Err(ScenarioError::Param(format!("{self:?}")));
        }
        if self.onset + self.ramp + self.hold + self.recovery >= self.duration {
            return Err(ScenarioError::Param(format!(
                "stages end at {} s, after the {} s duration",
                self.onset + self.ramp + self.hold + self.recovery,
                self.duration
            )));
        }
        Ok(())
    }

    /// Stage boundaries: onset start, peak reached, recovery start,
    /// recovery end.
    pub fn stages(&self) -> Vec<f64> {
        let t1 = self.onset;
        let t2 = t1 + self.ramp;
        let t3 = t2 + self.hold;
        vec![t1, t2, t3, t3 + self.recovery]
    }

    /// Lateral envelope in `[-1, 1]` at time `t`, and its rate of change.
    fn envelope(&self, t: f64) -> (f64, f64) {
        let s = self.stages();
        if t < s[0] || t >= s[3] {
            (0.0, 0.0)
        } else if t < s[1] {
            // smooth onset, half cosine
            let x = (t - s[0]) / self.ramp;
            (0.5 * (1.0 - (PI * x).cos()), 0.5 * PI / self.ramp * (PI * x).sin())
        } else if t < s[2] {
            (1.0, 0.0)
        } else {
            // decaying cosine with a raised-cosine taper so it ends at zero
            let tau = t - s[2];
            let w = 2.0 * PI * self.recovery_frequency;
            let taper = 0.5 * (1.0 + (PI * tau / self.recovery).cos());
            let dtaper = -0.5 * PI / self.recovery * (PI * tau / self.recovery).sin();
            ((w * tau).cos() * taper, -w * (w * tau).sin() * taper + (w * tau).cos() * dtaper)
        }
    }
}

pub fn gen_horizontal_stall(
    id: &str,
    params: &StallParams,
    ts: f64,
    vestibular: &VestibularModel,
) -> Result<ScenarioTrace, ScenarioError> {
    params.validate()?;
    let n = samples(params.duration, ts)?;
    let mut acc = DMatrix::zeros(n, 3);
    let mut omega = DMatrix::zeros(n, 3);
    let rate_scale = params.ramp / (0.5 * PI);
    for k in 0..n {
        let t = k as f64 * ts;
        let (e, de) = params.envelope(t);
        acc[(k, 1)] = params.peak_lateral * e;
        acc[(k, 2)] = params.peak_vertical * e;
        // rates follow the envelope slope, normalized so the onset peaks
        // at the configured rate
        let r = (de * rate_scale).clamp(-1.0, 1.0);
        omega[(k, 0)] = params.peak_roll_rate * r;
        omega[(k, 2)] = params.peak_yaw_rate * r;
    }
    let mut trace = ScenarioTrace::from_signals(id, 0, ts, acc, omega, vestibular)?;
    trace.stages = params.stages();
    Ok(trace)
}

/// An all-zero trace.
pub fn gen_zero(duration: f64, ts: f64, vestibular: &VestibularModel) -> Result<ScenarioTrace, ScenarioError> {
    let n = samples(duration, ts)?;
    ScenarioTrace::from_signals("zero", 0, ts, DMatrix::zeros(n, 3), DMatrix::zeros(n, 3), vestibular)
}
