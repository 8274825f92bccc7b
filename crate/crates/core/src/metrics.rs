//! Tracking-fidelity scores between a reference and an achieved signal.
//!
//! With `e = ref − actual` over `n` samples:
//!
//! * NAAD = `mean|e| / (max|ref| + δ)`
//! * AAS  = `mean|e| / (mean|ref| + δ)`
//!
//! `δ = 1e-12` keeps both finite for an all-zero reference. Both are zero
//! for identical series and unchanged when both series are scaled by the
//! same positive factor.

use nalgebra::DMatrix;

/// Guard added to the normalizers.
pub const DELTA: f64 = 1e-12;

/// Names of the six tracked channels, in column order.
pub const CHANNELS: [&str; 6] = ["fx", "fy", "fz", "wx", "wy", "wz"];

fn mean_abs_diff(reference: &[f64], actual: &[f64]) -> f64 {
    assert_eq!(reference.len(), actual.len(), "series lengths differ");
    if reference.is_empty() {
        return 0.0;
    }
    reference.iter().zip(actual).map(|(r, a)| (r - a).abs()).sum::<f64>() / reference.len() as f64
}

pub fn naad(reference: &[f64], actual: &[f64]) -> f64 {
    let peak = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    mean_abs_diff(reference, actual) / (peak + DELTA)
}

pub fn aas(reference: &[f64], actual: &[f64]) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    let scale = reference.iter().map(|v| v.abs()).sum::<f64>() / reference.len() as f64;
    mean_abs_diff(reference, actual) / (scale + DELTA)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMetrics {
    pub name: &'static str,
    pub naad: f64,
    pub aas: f64,
    /// `mean|ref|`; channels with zero reference are left out of the
    /// aggregate.
    pub reference_level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub channels: Vec<ChannelMetrics>,
    /// Mean AAS over channels whose reference is not identically zero.
    pub aggregate_aas: f64,
    /// AAS of the three specific-force channels pooled together:
    /// `Σ|e| / Σ|ref|` over all samples and the three axes.
    pub force_aas: f64,
    pub samples: usize,
}

impl MetricsReport {
    pub fn channel(&self, name: &str) -> Option<&ChannelMetrics> {
        self.channels.iter().find(|c| c.name == name)
    }
}

/// Scores `actual` against `reference`, both `samples × 6` in the order of
/// [`CHANNELS`].
pub fn evaluate(reference: &DMatrix<f64>, actual: &DMatrix<f64>) -> MetricsReport {
    assert_eq!(reference.shape(), actual.shape(), "reference and actual shapes differ");
    assert_eq!(reference.ncols(), CHANNELS.len(), "expected six channels");
    let channels: Vec<ChannelMetrics> = CHANNELS
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let r: Vec<f64> = reference.column(c).iter().copied().collect();
            let a: Vec<f64> = actual.column(c).iter().copied().collect();
            let level = if r.is_empty() { 0.0 } else { r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64 };
            ChannelMetrics { name, naad: naad(&r, &a), aas: aas(&r, &a), reference_level: level }
        })
        .collect();
    let live: Vec<f64> = channels.iter().filter(|c| c.reference_level > 0.0).map(|c| c.aas).collect();
    let aggregate_aas = if live.is_empty() { 0.0 } else { live.iter().sum::<f64>() / live.len() as f64 };
    let (mut err, mut level) = (0.0, 0.0);
    for c in 0..3 {
        for k in 0..reference.nrows() {
            err += (reference[(k, c)] - actual[(k, c)]).abs();
            level += reference[(k, c)].abs();
        }
    }
    MetricsReport { channels, aggregate_aas, force_aas: err / (level + DELTA), samples: reference.nrows() }
}

/// Relative improvement of `candidate` over `other`:
/// `(other − candidate) / other`, zero when `other` is zero.
pub fn improvement(other: f64, candidate: f64) -> f64 {
    if other == 0.0 {
        0.0
    } else {
        (other - candidate) / other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series_score_zero() {
        let r = [1.0, -2.0, 3.5];
        assert_eq!(naad(&r, &r), 0.0);
        assert_eq!(aas(&r, &r), 0.0);
    }

    #[test]
    fn constant_two_versus_one() {
        let r = [2.0; 10];
        let a = [1.0; 10];
        assert!((naad(&r, &a) - 0.5).abs() < 1e-12);
        assert!((aas(&r, &a) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_is_guarded() {
        let z = [0.0; 5];
        assert_eq!(naad(&z, &z), 0.0);
        assert_eq!(aas(&z, &z), 0.0);
        assert!(aas(&z, &[1.0; 5]).is_finite());
    }

    #[test]
    fn joint_scaling_invariance() {
        let r = [0.3, -1.2, 2.0, 0.7];
        let a = [0.1, -1.0, 1.5, 0.9];
        for c in [0.01, 3.0, 250.0] {
            let rs: Vec<f64> = r.iter().map(|v| v * c).collect();
            let as_: Vec<f64> = a.iter().map(|v| v * c).collect();
            assert!((aas(&rs, &as_) - aas(&r, &a)).abs() < 1e-9);
            assert!((naad(&rs, &as_) - naad(&r, &a)).abs() < 1e-9);
        }
    }

    #[test]
    fn report_skips_silent_channels() {
        let mut r = DMatrix::zeros(4, 6);
        r.column_mut(1).fill(2.0);
        let mut a = DMatrix::zeros(4, 6);
        a.column_mut(1).fill(1.0);
        a.column_mut(4).fill(0.1);
        let rep = evaluate(&r, &a);
        assert!((rep.aggregate_aas - 0.5).abs() < 1e-12);
        assert!((rep.force_aas - 0.5).abs() < 1e-12);
        assert_eq!(rep.channel("fy").unwrap().aas, rep.channels[1].aas);
        assert_eq!(rep.samples, 4);
    }

    #[test]
    fn improvement_of_self_is_zero() {
        assert_eq!(improvement(0.3, 0.3), 0.0);
        assert!((improvement(0.324, 0.196) - 0.395).abs() < 1e-3);
    }
}
