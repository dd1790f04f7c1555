//! Monte Carlo engine for the structural model: potential-outcome sampling,
//! survivor-conditional expectation curves, the integrated observed hazard
//! difference, survival curves and simulated randomized trials.

use rayon::prelude::*;
use thiserror::Error;

use crate::curve::{CurveError, StepCurve};
use crate::model::{Arm, BaselineSpec, ModelError, ScmSpec};
use crate::stochastics::{JointSampler, RngStream, StochasticsError};

/// Smallest risk set over which a survivor mean is reported.
pub const DEFAULT_MIN_AT_RISK: usize = 30;

/// Two-sided 95% normal quantile used for pointwise bounds.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stochastics(#[from] StochasticsError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("risk set at t = {time} has {at_risk} subjects, below the floor of {floor}")]
    EmptyRiskSet { time: f64, at_risk: usize, floor: usize },
    #[error("record {id} has no event and no censoring time")]
    UnboundedFollowUp { id: String },
}

pub type Result<T> = std::result::Result<T, SimulationError>;

/// One simulated individual with both potential event times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialOutcomeSample {
    pub u0: f64,
    pub u1: f64,
    pub t0: f64,
    pub t1: f64,
}

impl PotentialOutcomeSample {
    pub fn time(&self, world: Arm) -> f64 {
        match world {
            Arm::Control => self.t0,
            Arm::Treated => self.t1,
        }
    }
}

/// One row of a right-censored two-arm trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub id: String,
    pub time: f64,
    /// `true` for an observed event, `false` for censoring.
    pub event: bool,
    pub arm: Arm,
    pub stratum: Option<String>,
}

fn draw_individual(scm: &ScmSpec, sampler: &JointSampler<'_>, rng: &mut RngStream) -> Result<PotentialOutcomeSample> {
    let (u0, u1) = sampler.draw(rng)?;
    // one N_T shared by both worlds
    let target = -rng.uniform().ln();
    Ok(PotentialOutcomeSample {
        u0,
        u1,
        t0: scm.invert_cumulative_hazard(u0, u1, Arm::Control, target)?,
        t1: scm.invert_cumulative_hazard(u0, u1, Arm::Treated, target)?,
    })
}

/// Draws `n` individuals from the structural model.
pub fn sample_population(scm: &ScmSpec, n: usize, rng: &mut RngStream) -> Result<Vec<PotentialOutcomeSample>> {
    if n == 0 {
        return Err(SimulationError::InvalidArgument("population size must be >= 1".into()));
    }
    scm.validate()?;
    let sampler = JointSampler::new(scm.dependence, &scm.frailty, &scm.modifier);
    (0..n).map(|_| draw_individual(scm, &sampler, rng)).collect()
}

/// Same law as [`sample_population`], split into chunks of `chunk` draws where
/// chunk `i` uses substream `first_stream + i`. The result does not depend on
/// the number of worker threads.
pub fn sample_population_partitioned(
    scm: &ScmSpec,
    n: usize,
    seed: u64,
    first_stream: u64,
    chunk: usize,
) -> Result<Vec<PotentialOutcomeSample>> {
    if chunk == 0 {
        return Err(SimulationError::InvalidArgument("chunk size must be >= 1".into()));
    }
    let chunks = n.div_ceil(chunk);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let len = chunk.min(n - i * chunk);
            let mut rng = RngStream::new(seed, first_stream + i as u64);
            sample_population(scm, len, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Quantity averaged over a risk set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    /// The effect modifier `u1`.
    Modifier,
    /// The frailty `u0`.
    Frailty,
    /// The baseline hazard `f0(s, u0)` at the grid time `s`.
    BaselineHazard(BaselineSpec),
    /// The baseline hazard evaluated at a fixed time, `f0(at, u0)`.
    BaselineHazardAt(BaselineSpec, f64),
}

impl Statistic {
    /// `(intercept, slope)` such that the statistic equals
    /// `intercept + slope * x` with `x` the raw factor at grid time `s`.
    fn affine(&self, s: f64) -> (f64, f64) {
        match *self {
            Statistic::Modifier | Statistic::Frailty => (0.0, 1.0),
            Statistic::BaselineHazard(b) => (b.ell, b.frailty_factor(s)),
            Statistic::BaselineHazardAt(b, at) => (b.ell, b.frailty_factor(at)),
        }
    }

    fn raw(&self, sample: &PotentialOutcomeSample) -> f64 {
        match self {
            Statistic::Modifier => sample.u1,
            _ => sample.u0,
        }
    }
}

/// Survivor means with their sampling uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCurve {
    /// Means with `± 1.96 SE` bounds.
    pub curve: StepCurve,
    pub standard_errors: Vec<f64>,
    pub at_risk: Vec<usize>,
    /// First requested grid time dropped for lack of subjects at risk.
    pub truncated_at: Option<f64>,
}

/// Risk sets `{i : t_i >= s}` with suffix sums of a raw factor.
struct RiskSets {
    times: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl RiskSets {
    fn new(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pairs.len();
        let mut sum = vec![0.0; n + 1];
        let mut sum_sq = vec![0.0; n + 1];
        for i in (0..n).rev() {
            let x = pairs[i].1;
            sum[i] = sum[i + 1] + x;
            sum_sq[i] = sum_sq[i + 1] + x * x;
        }
        RiskSets {
            times: pairs.into_iter().map(|p| p.0).collect(),
            sum,
            sum_sq,
        }
    }

    /// `(count, mean, variance)` of the raw factor over subjects with `t >= s`.
    fn at(&self, s: f64) -> (usize, f64, f64) {
        let start = self.times.partition_point(|&t| t < s);
        let count = self.times.len() - start;
        if count == 0 {
            return (0, f64::NAN, f64::NAN);
        }
        let r = count as f64;
        let mean = self.sum[start] / r;
        let var = if count > 1 {
            ((self.sum_sq[start] - self.sum[start] * mean) / (r - 1.0)).max(0.0)
        } else {
            0.0
        };
        (count, mean, var)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(SimulationError::InvalidArgument("grid is empty".into()));
    }
    StepCurve::new(grid.to_vec(), vec![0.0; grid.len()])?;
    Ok(())
}

/// `E[statistic | T^world >= s]` on a grid, truncated where fewer than
/// `min_at_risk` subjects remain.
pub fn conditional_expectation_curve(
    samples: &[PotentialOutcomeSample],
    statistic: Statistic,
    world: Arm,
    grid: &[f64],
    min_at_risk: usize,
) -> Result<ConditionalCurve> {
    check_grid(grid)?;
    let risk = RiskSets::new(samples.iter().map(|s| (s.time(world), statistic.raw(s))).collect());

    let mut times = Vec::new();
    let mut means = Vec::new();
    let mut ses = Vec::new();
    let mut at_risk = Vec::new();
    let mut truncated_at = None;
    for &s in grid {
        let (count, mean, var) = risk.at(s);
        if count < min_at_risk.max(1) {
            if times.is_empty() {
                return Err(SimulationError::EmptyRiskSet {
                    time: s,
                    at_risk: count,
                    floor: min_at_risk,
                });
            }
            truncated_at = Some(s);
            break;
        }
        let (intercept, slope) = statistic.affine(s);
        times.push(s);
        means.push(intercept + slope * mean);
        ses.push(slope.abs() * (var / count as f64).sqrt());
        at_risk.push(count);
    }
    let curve = StepCurve::new(times, means)?.with_standard_errors(&ses, Z95)?;
    Ok(ConditionalCurve {
        curve,
        standard_errors: ses,
        at_risk,
        truncated_at,
    })
}

/// Integrated observed hazard difference with delta-method uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedCurve {
    /// `B(t)` with `± 1.96 SE` bounds.
    pub curve: StepCurve,
    pub standard_errors: Vec<f64>,
    /// Grid time at which the integrand first became unavailable.
    pub truncated_at: Option<f64>,
}

/// Left-endpoint Riemann sum over `grid` of
/// `E[f1(s,U1,1) | T^1>=s] + E[f0(s,U0) | T^1>=s] - E[f0(s,U0) | T^0>=s]`.
///
/// Standard errors linearize each survivor mean (influence function of a
/// ratio estimator) and sum the contributions per individual, so the
/// correlation across grid points and between the two worlds is kept.
pub fn integrated_ohd_curve(
    samples: &[PotentialOutcomeSample],
    scm: &ScmSpec,
    grid: &[f64],
    min_at_risk: usize,
) -> Result<IntegratedCurve> {
    check_grid(grid)?;
    let n = samples.len();
    if n == 0 {
        return Err(SimulationError::InvalidArgument("no samples".into()));
    }
    let nf = n as f64;
    let treated_u0 = RiskSets::new(samples.iter().map(|s| (s.t1, s.u0)).collect());
    let treated_u1 = RiskSets::new(samples.iter().map(|s| (s.t1, s.u1)).collect());
    let control_u0 = RiskSets::new(samples.iter().map(|s| (s.t0, s.u0)).collect());

    struct Node {
        s: f64,
        frailty_factor: f64,
        effect_factor: f64,
        treated_u0: f64,
        treated_u1: f64,
        control_u0: f64,
        treated_fraction: f64,
        control_fraction: f64,
    }
    let mut nodes: Vec<Node> = Vec::new();
    let mut truncated_at = None;
    for &s in grid {
        let (r1, m1_u0, _) = treated_u0.at(s);
        let (_, m1_u1, _) = treated_u1.at(s);
        let (r0, m0_u0, _) = control_u0.at(s);
        if r1.min(r0) < min_at_risk.max(1) {
            if nodes.is_empty() {
                return Err(SimulationError::EmptyRiskSet {
                    time: s,
                    at_risk: r1.min(r0),
                    floor: min_at_risk,
                });
            }
            truncated_at = Some(s);
            break;
        }
        nodes.push(Node {
            s,
            frailty_factor: scm.baseline.frailty_factor(s),
            effect_factor: scm.effect.time_factor(s),
            treated_u0: m1_u0,
            treated_u1: m1_u1,
            control_u0: m0_u0,
            treated_fraction: r1 as f64 / nf,
            control_fraction: r0 as f64 / nf,
        });
    }

    // B is available at every integrand node plus the next grid point.
    let available = (nodes.len() + 1).min(grid.len());
    let times = grid[..available].to_vec();
    let mut values = vec![0.0; available];
    let mut widths = vec![0.0; available];
    for j in 1..available {
        let node = &nodes[j - 1];
        let h = times[j] - times[j - 1];
        widths[j - 1] = h;
        let integrand =
            node.effect_factor * node.treated_u1 + node.frailty_factor * (node.treated_u0 - node.control_u0);
        values[j] = values[j - 1] + h * integrand;
    }

    // Influence of individual i on B(t_J) accumulated over j < J.
    let mut var_sum = vec![0.0; available];
    for sample in samples {
        let mut psi = 0.0;
        for (j, node) in nodes.iter().enumerate().take(available.saturating_sub(1)) {
            let mut contribution = 0.0;
            if sample.t1 >= node.s {
                let y = node.effect_factor * sample.u1 + node.frailty_factor * sample.u0;
                let mean = node.effect_factor * node.treated_u1 + node.frailty_factor * node.treated_u0;
                contribution += (y - mean) / node.treated_fraction;
            }
            if sample.t0 >= node.s {
                contribution -= node.frailty_factor * (sample.u0 - node.control_u0) / node.control_fraction;
            }
            psi += widths[j] * contribution;
            var_sum[j + 1] += psi * psi;
        }
    }
    let ses: Vec<f64> = var_sum.iter().map(|v| (v / (nf * nf)).sqrt()).collect();
    let curve = StepCurve::new(times, values)?.with_standard_errors(&ses, Z95)?;
    Ok(IntegratedCurve {
        curve,
        standard_errors: ses,
        truncated_at,
    })
}

/// Empirical survivor fractions `P(T^a >= s)` for both worlds, with binomial
/// 95% bounds. Returns `(S1, S0)`.
pub fn survival_curves(samples: &[PotentialOutcomeSample], grid: &[f64]) -> Result<(StepCurve, StepCurve)> {
    check_grid(grid)?;
    if samples.is_empty() {
        return Err(SimulationError::InvalidArgument("no samples".into()));
    }
    let nf = samples.len() as f64;
    let world_curve = |world: Arm| -> Result<StepCurve> {
        let mut times: Vec<f64> = samples.iter().map(|s| s.time(world)).collect();
        times.sort_by(f64::total_cmp);
        let values: Vec<f64> = grid
            .iter()
            .map(|&s| (times.len() - times.partition_point(|&t| t < s)) as f64 / nf)
            .collect();
        let ses: Vec<f64> = values.iter().map(|p| (p * (1.0 - p) / nf).sqrt()).collect();
        Ok(StepCurve::new(grid.to_vec(), values)?.with_standard_errors(&ses, Z95)?)
    };
    Ok((world_curve(Arm::Treated)?, world_curve(Arm::Control)?))
}

/// Independent censoring mechanism for simulated trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Censoring {
    /// End of follow-up at a fixed time.
    Administrative { time: f64 },
    /// Exponential censoring times with the given rate.
    Exponential { rate: f64 },
}

/// Simulates a randomized trial: arm assignment independent of everything,
/// observed time `min(T^arm, C)`.
pub fn simulate_rct(
    scm: &ScmSpec,
    n: usize,
    treat_prob: f64,
    censoring: Option<Censoring>,
    rng: &mut RngStream,
) -> Result<Vec<TrialRecord>> {
    if !(treat_prob > 0.0 && treat_prob < 1.0) {
        return Err(SimulationError::InvalidArgument(format!(
            "treatment probability must lie in (0, 1), got {treat_prob}"
        )));
    }
    match censoring {
        Some(Censoring::Administrative { time }) if !(time > 0.0 && time.is_finite()) => {
            return Err(SimulationError::InvalidArgument(format!(
                "administrative censoring time must be > 0, got {time}"
            )))
        }
        Some(Censoring::Exponential { rate }) if !(rate > 0.0 && rate.is_finite()) => {
            return Err(SimulationError::InvalidArgument(format!(
                "censoring rate must be > 0, got {rate}"
            )))
        }
        _ => {}
    }
    if n == 0 {
        return Err(SimulationError::InvalidArgument("trial size must be >= 1".into()));
    }
    scm.validate()?;
    let sampler = JointSampler::new(scm.dependence, &scm.frailty, &scm.modifier);
    (0..n)
        .map(|i| {
            let outcome = draw_individual(scm, &sampler, rng)?;
            let arm = if rng.bernoulli(treat_prob) {
                Arm::Treated
            } else {
                Arm::Control
            };
            let censor = match censoring {
                None => f64::INFINITY,
                Some(Censoring::Administrative { time }) => time,
                Some(Censoring::Exponential { rate }) => rng.exponential(rate),
            };
            let event_time = outcome.time(arm);
            let id = (i + 1).to_string();
            if event_time.is_infinite() && censor.is_infinite() {
                return Err(SimulationError::UnboundedFollowUp { id });
            }
            Ok(TrialRecord {
                id,
                time: event_time.min(censor),
                event: event_time <= censor,
                arm,
                stratum: None,
            })
        })
        .collect()
}

/// Occurrence/exposure hazard estimate on one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinnedHazard {
    pub start: f64,
    pub end: f64,
    pub events: [usize; 2],
    pub exposure: [f64; 2],
    /// Treated minus control rate.
    pub difference: f64,
    pub standard_error: f64,
}

/// Per-bin treated-minus-control hazard rates (events divided by person-time)
/// on consecutive intervals `[edges[i], edges[i+1])`.
pub fn binned_hazard_difference(records: &[TrialRecord], edges: &[f64]) -> Result<Vec<BinnedHazard>> {
    if edges.len() < 2 {
        return Err(SimulationError::InvalidArgument("need at least two bin edges".into()));
    }
    check_grid(edges)?;
    let mut bins: Vec<BinnedHazard> = edges
        .windows(2)
        .map(|w| BinnedHazard {
            start: w[0],
            end: w[1],
            events: [0, 0],
            exposure: [0.0, 0.0],
            difference: f64::NAN,
            standard_error: f64::NAN,
        })
        .collect();
    for r in records {
        let a = r.arm.as_u8() as usize;
        for bin in bins.iter_mut() {
            if r.time <= bin.start {
                break;
            }
            bin.exposure[a] += r.time.min(bin.end) - bin.start;
            if r.event && r.time < bin.end {
                bin.events[a] += 1;
            }
        }
    }
    for bin in bins.iter_mut() {
        let rate = |a: usize| bin.events[a] as f64 / bin.exposure[a];
        let var = |a: usize| bin.events[a] as f64 / (bin.exposure[a] * bin.exposure[a]);
        bin.difference = rate(1) - rate(0);
        bin.standard_error = (var(1) + var(0)).sqrt();
    }
    Ok(bins)
}
