//! Aalen's nonparametric additive hazard estimator for a two-arm design
//! `[1, arm]`, with cumulative regression functions and pointwise 95%
//! confidence intervals.
//!
//! At each distinct event time the increment is `(XᵀX)⁻¹ Xᵀ dN`, where the
//! rows of `X` are the subjects still at risk. All events tied at a time go
//! into a single increment, and subjects censored at an event time are still
//! at risk at that time.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::closedform::{self, ClosedFormError};
use crate::curve::{CurveError, StepCurve};
use crate::model::{Arm, EffectSpec, ModifierDistribution};
use crate::simulator::{TrialRecord, Z95};

/// Relative determinant threshold for the 2×2 normal equations.
const SINGULAR_RELATIVE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AalenError {
    #[error("no events in the data")]
    NoEvents,
    #[error("record {id}: time must be finite and > 0, got {time}")]
    InvalidTime { id: String, time: f64 },
    #[error("record {id} has no stratum label")]
    MissingStratum { id: String },
    #[error("stratum `{stratum}`: {source}")]
    Stratum {
        stratum: String,
        #[source]
        source: Box<AalenError>,
    },
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

pub type Result<T> = std::result::Result<T, AalenError>;

/// Regression coefficient of the additive model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    Intercept,
    Treatment,
}

impl Coefficient {
    fn index(self) -> usize {
        match self {
            Coefficient::Intercept => 0,
            Coefficient::Treatment => 1,
        }
    }
}

/// Fitted cumulative regression functions.
///
/// When the data contain a single arm the design reduces to the intercept and
/// the treatment column is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct AalenFit {
    pub event_times: Vec<f64>,
    /// Subjects at risk just before each event time, per arm `[control, treated]`.
    pub at_risk: Vec<[usize; 2]>,
    /// Per coefficient, per event time.
    pub increments: Vec<Vec<f64>>,
    pub cumulative: Vec<Vec<f64>>,
    /// Running sums of the increment variances.
    pub variance: Vec<Vec<f64>>,
    /// Running sum of the intercept/treatment covariance.
    pub covariance: Vec<f64>,
    /// First event time at which `XᵀX` was singular; nothing is estimated from
    /// this time on.
    pub truncation_time: Option<f64>,
}

impl AalenFit {
    pub fn has_treatment(&self) -> bool {
        self.cumulative.len() == 2
    }

    fn column(&self, coef: Coefficient) -> Option<usize> {
        let i = coef.index();
        (i < self.cumulative.len()).then_some(i)
    }

    /// `B̂_j(t)` as a right-continuous step function: 0 before the first event.
    pub fn value_at(&self, coef: Coefficient, t: f64) -> Option<f64> {
        let c = self.column(coef)?;
        let k = self.event_times.partition_point(|&s| s <= t);
        Some(if k == 0 { 0.0 } else { self.cumulative[c][k - 1] })
    }

    pub fn variance_at(&self, coef: Coefficient, t: f64) -> Option<f64> {
        let c = self.column(coef)?;
        let k = self.event_times.partition_point(|&s| s <= t);
        Some(if k == 0 { 0.0 } else { self.variance[c][k - 1] })
    }

    /// `(B̂(t), lower, upper)` with the 95% normal interval.
    pub fn interval_at(&self, coef: Coefficient, t: f64) -> Option<(f64, f64, f64)> {
        let b = self.value_at(coef, t)?;
        let half = Z95 * self.variance_at(coef, t)?.sqrt();
        Some((b, b - half, b + half))
    }

    /// Estimated curve on `{0} ∪ event_times` with 95% bounds.
    pub fn curve(&self, coef: Coefficient) -> Option<StepCurve> {
        let c = self.column(coef)?;
        let mut grid = vec![0.0];
        let mut values = vec![0.0];
        let mut ses = vec![0.0];
        // event times are strictly positive
        for (k, &t) in self.event_times.iter().enumerate() {
            grid.push(t);
            values.push(self.cumulative[c][k]);
            ses.push(self.variance[c][k].sqrt());
        }
        let curve = StepCurve::new(grid, values).ok()?;
        curve.with_standard_errors(&ses, Z95).ok()
    }
}

fn validate_records(data: &[TrialRecord]) -> Result<()> {
    for r in data {
        if !(r.time.is_finite() && r.time > 0.0) {
            return Err(AalenError::InvalidTime {
                id: r.id.clone(),
                time: r.time,
            });
        }
    }
    if !data.iter().any(|r| r.event) {
        return Err(AalenError::NoEvents);
    }
    Ok(())
}

/// Fits the additive hazard model with design `[1, arm]`.
pub fn fit(data: &[TrialRecord]) -> Result<AalenFit> {
    validate_records(data)?;
    let two_arms = data.iter().any(|r| r.arm == Arm::Treated) && data.iter().any(|r| r.arm == Arm::Control);

    // Ascending scan; risk sets shrink after each distinct time.
    let mut order: Vec<&TrialRecord> = data.iter().collect();
    order.sort_by(|a, b| a.time.total_cmp(&b.time));

    // Group by distinct time: (time, events per arm, records per arm).
    let mut groups: Vec<(f64, [usize; 2], [usize; 2])> = Vec::new();
    for r in &order {
        let a = r.arm.as_u8() as usize;
        match groups.last_mut() {
            Some(g) if g.0 == r.time => {
                g.2[a] += 1;
                if r.event {
                    g.1[a] += 1;
                }
            }
            _ => {
                let mut events = [0, 0];
                let mut count = [0, 0];
                count[a] = 1;
                if r.event {
                    events[a] = 1;
                }
                groups.push((r.time, events, count));
            }
        }
    }

    let mut at_risk = [0usize; 2];
    for r in data {
        at_risk[r.arm.as_u8() as usize] += 1;
    }

    let n_coef = if two_arms { 2 } else { 1 };
    let mut out = AalenFit {
        event_times: Vec::new(),
        at_risk: Vec::new(),
        increments: vec![Vec::new(); n_coef],
        cumulative: vec![Vec::new(); n_coef],
        variance: vec![Vec::new(); n_coef],
        covariance: Vec::new(),
        truncation_time: None,
    };
    let mut running = [0.0f64; 2];
    let mut running_var = [0.0f64; 2];
    let mut running_cov = 0.0f64;

    for (time, events, count) in groups {
        if events[0] + events[1] > 0 {
            let step = if two_arms {
                treatment_increment(at_risk, events)
            } else {
                intercept_increment(at_risk, events)
            };
            let Some(step) = step else {
                out.truncation_time = Some(time);
                break;
            };
            out.event_times.push(time);
            out.at_risk.push(at_risk);
            for c in 0..n_coef {
                running[c] += step.increment[c];
                running_var[c] += step.variance[c];
                out.increments[c].push(step.increment[c]);
                out.cumulative[c].push(running[c]);
                out.variance[c].push(running_var[c]);
            }
            running_cov += step.covariance;
            out.covariance.push(running_cov);
        }
        at_risk[0] -= count[0];
        at_risk[1] -= count[1];
    }
    Ok(out)
}

struct Step {
    increment: [f64; 2],
    variance: [f64; 2],
    covariance: f64,
}

fn intercept_increment(at_risk: [usize; 2], events: [usize; 2]) -> Option<Step> {
    let y = (at_risk[0] + at_risk[1]) as f64;
    let d = (events[0] + events[1]) as f64;
    if y == 0.0 {
        return None;
    }
    Some(Step {
        increment: [d / y, 0.0],
        variance: [d / (y * y), 0.0],
        covariance: 0.0,
    })
}

/// Solves the 2×2 normal equations for design `[1, arm]` in closed form.
fn treatment_increment(at_risk: [usize; 2], events: [usize; 2]) -> Option<Step> {
    let y = (at_risk[0] + at_risk[1]) as f64;
    let y1 = at_risk[1] as f64;
    // XᵀX = [[y, y1], [y1, y1]]
    let det = y * y1 - y1 * y1;
    let scale = y * y;
    if scale == 0.0 || det.abs() < SINGULAR_RELATIVE * scale {
        return None;
    }
    let inv = [[y1 / det, -y1 / det], [-y1 / det, y / det]];
    let d = (events[0] + events[1]) as f64;
    let d1 = events[1] as f64;
    // Xᵀ dN = [d, d1]; Xᵀ diag(dN) X = [[d, d1], [d1, d1]]
    let increment = [inv[0][0] * d + inv[0][1] * d1, inv[1][0] * d + inv[1][1] * d1];
    let middle = [[d, d1], [d1, d1]];
    let mut left = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            left[i][j] = inv[i][0] * middle[0][j] + inv[i][1] * middle[1][j];
        }
    }
    let mut cov = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            // inv is symmetric
            cov[i][j] = left[i][0] * inv[0][j] + left[i][1] * inv[1][j];
        }
    }
    Some(Step {
        increment,
        variance: [cov[0][0], cov[1][1]],
        covariance: cov[0][1],
    })
}

/// Independent fits per stratum label.
pub fn fit_stratified(data: &[TrialRecord]) -> Result<BTreeMap<String, AalenFit>> {
    let mut strata: BTreeMap<String, Vec<TrialRecord>> = BTreeMap::new();
    for r in data {
        let label = r
            .stratum
            .as_ref()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| AalenError::MissingStratum { id: r.id.clone() })?;
        strata.entry(label.clone()).or_default().push(r.clone());
    }
    if strata.is_empty() {
        return Err(AalenError::NoEvents);
    }
    strata
        .into_iter()
        .map(|(label, records)| match fit(&records) {
            Ok(f) => Ok((label, f)),
            Err(e) => Err(AalenError::Stratum {
                stratum: label,
                source: Box::new(e),
            }),
        })
        .collect()
}

/// Closed-form `B(t) = ∫_0^t E[U1 | T^1 >= s] ds` on the fit's time grid,
/// for side-by-side display with the estimated treatment curve.
pub fn overlay_expected_curve(fit: &AalenFit, effect: &EffectSpec, dist: &ModifierDistribution) -> Result<StepCurve> {
    let mut grid = vec![0.0];
    grid.extend(fit.event_times.iter().copied().filter(|&t| t > 0.0));
    Ok(closedform::integrated_mchd_curve(effect, dist, &grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: usize, time: f64, event: bool, arm: u8) -> TrialRecord {
        TrialRecord {
            id: id.to_string(),
            time,
            event,
            arm: Arm::from_indicator(arm).unwrap(),
            stratum: None,
        }
    }

    #[test]
    fn intercept_only_is_nelson_aalen() {
        let data = vec![rec(1, 1.0, true, 0), rec(2, 2.0, true, 0)];
        let f = fit(&data).unwrap();
        assert!(!f.has_treatment());
        assert_eq!(f.event_times, vec![1.0, 2.0]);
        assert_eq!(f.increments[0], vec![0.5, 1.0]);
        assert_eq!(f.cumulative[0], vec![0.5, 1.5]);
        assert_eq!(f.variance[0], vec![0.25, 1.25]);
        assert_eq!(f.value_at(Coefficient::Treatment, 1.0), None);
    }

    #[test]
    fn nelson_aalen_with_ties_and_censoring() {
        // times 1,1(c),2,2,3(c),4 -> jumps d/r: 1/6 at 1, 2/4 at 2, 1/1 at 4
        let data = vec![
            rec(1, 1.0, true, 0),
            rec(2, 1.0, false, 0),
            rec(3, 2.0, true, 0),
            rec(4, 2.0, true, 0),
            rec(5, 3.0, false, 0),
            rec(6, 4.0, true, 0),
        ];
        let f = fit(&data).unwrap();
        assert_eq!(f.event_times, vec![1.0, 2.0, 4.0]);
        let expected = [1.0 / 6.0, 1.0 / 6.0 + 0.5, 1.0 / 6.0 + 0.5 + 1.0];
        for (a, b) in f.cumulative[0].iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        // no jump at the censoring time 3
        assert_eq!(f.value_at(Coefficient::Intercept, 3.0), Some(1.0 / 6.0 + 0.5));
    }

    #[test]
    fn symmetric_arms_give_zero_treatment_curve() {
        let times = [0.5, 1.2, 1.2, 2.0, 3.3];
        let mut data = Vec::new();
        for (i, &t) in times.iter().enumerate() {
            data.push(rec(i, t, true, 0));
            data.push(rec(i + 10, t, true, 1));
        }
        let f = fit(&data).unwrap();
        for v in &f.cumulative[1] {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn treatment_increment_matches_arm_difference() {
        let data = vec![
            rec(1, 1.0, true, 0),
            rec(2, 2.0, true, 0),
            rec(3, 3.0, false, 0),
            rec(4, 1.0, true, 1),
            rec(5, 1.5, true, 1),
            rec(6, 2.5, false, 1),
            rec(7, 4.0, true, 1),
        ];
        let f = fit(&data).unwrap();
        // t=1: control 1/3, treated 1/4 -> b1 = 1/4 - 1/3
        assert!((f.increments[1][0] - (0.25 - 1.0 / 3.0)).abs() < 1e-15);
        assert!((f.increments[0][0] - 1.0 / 3.0).abs() < 1e-15);
        // var(b1) = d1/y1^2 + d0/y0^2
        assert!((f.variance[1][0] - (1.0 / 16.0 + 1.0 / 9.0)).abs() < 1e-15);
        assert!((f.covariance[0] + 1.0 / 9.0).abs() < 1e-15);
        // t=4: control risk set is empty -> truncation
        assert_eq!(f.truncation_time, Some(4.0));
        assert_eq!(f.event_times, vec![1.0, 1.5, 2.0]);
    }

    #[test]
    fn variance_is_nonnegative_and_nondecreasing() {
        let data: Vec<TrialRecord> = (0..40)
            .map(|i| rec(i, 0.1 + (i * 7 % 13) as f64 * 0.3, i % 3 != 0, (i % 2) as u8))
            .collect();
        let f = fit(&data).unwrap();
        for c in 0..2 {
            assert!(f.variance[c].iter().all(|&v| v >= 0.0));
            assert!(f.variance[c].windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn errors() {
        assert_eq!(fit(&[rec(1, 1.0, false, 0)]).unwrap_err(), AalenError::NoEvents);
        assert!(matches!(
            fit(&[rec(1, 0.0, true, 0)]),
            Err(AalenError::InvalidTime { .. })
        ));
        assert!(matches!(
            fit_stratified(&[rec(1, 1.0, true, 0)]),
            Err(AalenError::MissingStratum { .. })
        ));
    }

    #[test]
    fn single_stratum_equals_plain_fit() {
        let mut data: Vec<TrialRecord> = (0..30)
            .map(|i| rec(i, 0.2 + (i * 5 % 11) as f64 * 0.4, i % 4 != 0, (i % 2) as u8))
            .collect();
        for r in data.iter_mut() {
            r.stratum = Some("site".into());
        }
        let by = fit_stratified(&data).unwrap();
        assert_eq!(by.len(), 1);
        assert_eq!(by["site"], fit(&data).unwrap());
    }

    #[test]
    fn overlay_starts_at_zero_with_chd_slope() {
        let data = vec![
            rec(1, 0.5, true, 0),
            rec(2, 1.0, true, 1),
            rec(3, 2.0, true, 0),
            rec(4, 3.0, true, 1),
        ];
        let f = fit(&data).unwrap();
        let bhn = ModifierDistribution::Bhn {
            p1: 0.5,
            mu1: -0.1,
            p2: 0.5,
            mu2: 0.4,
        };
        let c = overlay_expected_curve(&f, &EffectSpec::constant(), &bhn).unwrap();
        assert_eq!(c.grid()[0], 0.0);
        assert_eq!(c.values()[0], 0.0);
        let effect = EffectSpec {
            profile: crate::model::EffectProfile::Power { exponent: 1.0 },
        };
        assert!(overlay_expected_curve(&f, &effect, &bhn).is_err());
    }
}
