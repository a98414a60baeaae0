//! Stance read-out, trajectories, Pearson correlation, Jensen-Shannon
//! divergence, and fidelity reports aggregated over seeds.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::RoundTrace;
use crate::error::{Error, Result};
use crate::scenario::{Scenario, TrajectorySeries};
use crate::state::{AgentState, MessageId};
use crate::vector::{dot, norm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Oppose,
    Neutral,
    Support,
}

impl Stance {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_score(s: f64, thresholds: [f64; 2]) -> Result<Self> {
        let [lo, hi] = thresholds;
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::config(format!("stance thresholds ({lo}, {hi}) are not ordered")));
        }
        Ok(if s < lo {
            Stance::Oppose
        } else if s > hi {
            Stance::Support
        } else {
            Stance::Neutral
        })
    }
}

/// Reads the stance of `state` against a unit-norm topic direction.
pub fn stance_of_agent(state: &AgentState, topic: &[f64], thresholds: [f64; 2]) -> Result<Stance> {
    if topic.len() != state.dim() {
        return Err(Error::config(format!(
            "topic has {} dims, persona {}",
            topic.len(),
            state.dim()
        )));
    }
    if (norm(topic) - 1.0).abs() > 1e-9 {
        return Err(Error::precondition("topic embedding must have unit norm"));
    }
    Stance::from_score(dot(&state.persona, topic), thresholds)
}

/// Shares of (oppose, neutral, support) among alignment scores.
pub fn stance_shares(alignment: &[f64], thresholds: [f64; 2]) -> Result<Vec<f64>> {
    if alignment.is_empty() {
        return Err(Error::precondition("stance shares of an empty population"));
    }
    let mut counts = [0usize; 3];
    for &s in alignment {
        counts[Stance::from_score(s, thresholds)?.index()] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / alignment.len() as f64).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StanceDistribution {
    pub labels: Vec<String>,
    pub probabilities: Vec<f64>,
}

impl StanceDistribution {
    pub fn new(labels: Vec<String>, probabilities: Vec<f64>) -> Result<Self> {
        if labels.len() != probabilities.len() {
            return Err(Error::config(format!(
                "{} labels for {} probabilities",
                labels.len(),
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::config("probabilities must be finite and nonnegative"));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("probabilities sum to {sum}")));
        }
        Ok(Self { labels, probabilities })
    }
}

/// `(round, value)` series with strictly increasing rounds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<(u32, f64)>,
}

impl Trajectory {
    pub fn new(points: Vec<(u32, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::config("trajectory rounds must be strictly increasing"));
        }
        if points.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory value".into()));
        }
        Ok(Self { points })
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::precondition("mean of zero agents"));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Mean persona-topic alignment per round, starting with round 0 (the
/// initial population).
pub fn simulated_trajectory(initial_alignment: &[f64], traces: &[RoundTrace]) -> Result<Trajectory> {
    if traces.is_empty() {
        return Err(Error::precondition("a trajectory needs at least two rounds"));
    }
    let mut points = vec![(0, mean(initial_alignment)?)];
    for t in traces {
        points.push((t.round, mean(&t.alignment)?));
    }
    Trajectory::new(points)
}

/// Share of agents in the negative stance per round, starting with round 0.
pub fn negative_share_trajectory(
    initial_alignment: &[f64],
    traces: &[RoundTrace],
    thresholds: [f64; 2],
) -> Result<Trajectory> {
    let mut points = vec![(0, stance_shares(initial_alignment, thresholds)?[0])];
    for t in traces {
        points.push((t.round, stance_shares(&t.alignment, thresholds)?[0]));
    }
    Trajectory::new(points)
}

/// Sample Pearson correlation of two equal-length series.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::precondition(format!(
            "series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::precondition("correlation needs at least two points"));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance in a series".into()));
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    if !r.is_finite() {
        return Err(Error::NonFinite("correlation".into()));
    }
    Ok(r.clamp(-1.0, 1.0))
}

/// Pearson correlation over the rounds both trajectories share.
pub fn pearson_r(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let lookup: BTreeMap<u32, f64> = b.points.iter().copied().collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .points
        .iter()
        .filter_map(|(r, x)| lookup.get(r).map(|y| (*x, *y)))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::precondition(format!("only {} common rounds", xs.len())));
    }
    pearson(&xs, &ys)
}

fn kl_to_mid(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, mi)| pi * (pi / mi).log2())
        .sum()
}

/// Base-2 Jensen-Shannon divergence of two probability vectors.
pub fn jsd_raw(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::precondition(format!(
            "distributions over {} and {} labels",
            p.len(),
            q.len()
        )));
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let d = 0.5 * kl_to_mid(p, &m) + 0.5 * kl_to_mid(q, &m);
    Ok(d.clamp(0.0, 1.0))
}

pub fn jsd(p: &StanceDistribution, q: &StanceDistribution) -> Result<f64> {
    if p.labels != q.labels {
        return Err(Error::precondition(format!(
            "stance labels differ: {:?} vs {:?}",
            p.labels, q.labels
        )));
    }
    jsd_raw(&p.probabilities, &q.probabilities)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundDistribution {
    pub round: u32,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproductionSeries {
    pub label: String,
    pub message: MessageId,
    pub platform: String,
    pub points: Vec<(u32, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageVolume {
    pub label: String,
    pub cascade: MessageId,
    pub engagements: f64,
    pub posts: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub stance_labels: Vec<String>,
    /// Mean persona-topic alignment per round.
    pub trajectory: Trajectory,
    pub negative_share: Trajectory,
    pub distributions: Vec<RoundDistribution>,
    pub final_distribution: StanceDistribution,
    /// Series compared with the ground-truth trajectory, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlated_series: Option<TrajectorySeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_error: Option<String>,
    pub per_seed: Vec<SeedMetrics>,
    pub reproduction: Vec<ReproductionSeries>,
    pub volumes: Vec<MessageVolume>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

const FULL_GRAPH_NOTE: &str = "reproduction coefficients are computed on the full platform graph";

/// Report for one seed's run of `scenario`.
pub fn build_report(
    scenario: &Scenario,
    seed: u64,
    initial_alignment: &[f64],
    traces: &[RoundTrace],
) -> Result<FidelityReport> {
    let cfg = &scenario.config;
    let thresholds = cfg.stance_thresholds;
    let trajectory = simulated_trajectory(initial_alignment, traces)?;
    let negative_share = negative_share_trajectory(initial_alignment, traces, thresholds)?;
    let mut distributions = vec![RoundDistribution {
        round: 0,
        probabilities: stance_shares(initial_alignment, thresholds)?,
    }];
    for t in traces {
        distributions.push(RoundDistribution {
            round: t.round,
            probabilities: stance_shares(&t.alignment, thresholds)?,
        });
    }
    let final_distribution = StanceDistribution::new(
        cfg.stance_labels.clone(),
        distributions
            .last()
            .expect("initial distribution")
            .probabilities
            .clone(),
    )?;

    let mut seed_metrics = SeedMetrics {
        seed,
        pearson_r: None,
        jsd: None,
        correlation_error: None,
    };
    let mut correlated_series = None;
    if let Some(gt) = &scenario.ground_truth {
        let simulated = match gt.series {
            TrajectorySeries::OpinionIndex => &trajectory,
            TrajectorySeries::NegativeShare => &negative_share,
        };
        // ground truth is indexed by day; a day ends after `ticks_per_day` rounds
        let ticks = cfg.ticks_per_day.max(1);
        let by_day = Trajectory::new(
            simulated
                .points
                .iter()
                .filter(|(r, _)| r % ticks == 0)
                .map(|(r, v)| (r / ticks, *v))
                .collect(),
        )?;
        let empirical = Trajectory::new(gt.trajectory.clone())?;
        correlated_series = Some(gt.series);
        match pearson_r(&by_day, &empirical) {
            Ok(r) => seed_metrics.pearson_r = Some(r),
            Err(e) => seed_metrics.correlation_error = Some(e.to_string()),
        }
        let truth = StanceDistribution::new(gt.stance_labels.clone(), gt.final_stances.clone())?;
        seed_metrics.jsd = Some(jsd(&truth, &final_distribution)?);
    }

    let mut labels: BTreeMap<MessageId, String> = BTreeMap::new();
    for t in traces {
        for inj in &t.injected {
            labels.insert(inj.message, inj.label.clone());
        }
    }
    let mut reproduction: BTreeMap<(MessageId, String), ReproductionSeries> = BTreeMap::new();
    for t in traces {
        for rec in &t.reproduction {
            reproduction
                .entry((rec.message, rec.platform.clone()))
                .or_insert_with(|| ReproductionSeries {
                    label: rec.label.clone(),
                    message: rec.message,
                    platform: rec.platform.clone(),
                    points: Vec::new(),
                })
                .points
                .push((t.round, rec.r));
        }
    }
    let mut volumes: BTreeMap<MessageId, MessageVolume> = labels
        .iter()
        .map(|(id, label)| {
            (
                *id,
                MessageVolume {
                    label: label.clone(),
                    cascade: *id,
                    engagements: 0.0,
                    posts: 0.0,
                },
            )
        })
        .collect();
    for t in traces {
        for e in t.engagements.iter().filter(|e| e.engaged) {
            if let Some(v) = volumes.get_mut(&e.cascade) {
                v.engagements += 1.0;
            }
        }
        for p in &t.posts {
            if let Some(v) = volumes.get_mut(&p.cascade) {
                v.posts += 1.0;
            }
        }
    }

    Ok(FidelityReport {
        scenario: scenario.name.clone(),
        seeds: vec![seed],
        stance_labels: cfg.stance_labels.clone(),
        trajectory,
        negative_share,
        distributions,
        final_distribution,
        correlated_series,
        pearson_r: seed_metrics.pearson_r,
        jsd: seed_metrics.jsd,
        correlation_error: seed_metrics.correlation_error.clone(),
        per_seed: vec![seed_metrics],
        reproduction: reproduction.into_values().collect(),
        volumes: volumes.into_values().collect(),
        notes: vec![FULL_GRAPH_NOTE.to_string()],
    })
}

fn mismatch(what: &str) -> Error {
    Error::precondition(format!("reports differ in {what}"))
}

fn mean_points(series: &[&Trajectory]) -> Result<Trajectory> {
    let first = series[0];
    let mut points = first.points.clone();
    for s in &series[1..] {
        if s.points.len() != points.len() || s.points.iter().zip(&points).any(|(a, b)| a.0 != b.0) {
            return Err(mismatch("trajectory rounds"));
        }
        for (p, q) in points.iter_mut().zip(&s.points) {
            p.1 += q.1;
        }
    }
    let k = series.len() as f64;
    points.iter_mut().for_each(|p| p.1 /= k);
    Trajectory::new(points)
}

fn renormalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter_mut().for_each(|x| *x /= s);
    }
}

/// Mean of several seeds' reports; per-seed metrics are kept, sorted by seed.
/// Tracked messages are matched by label since message ids differ between
/// seeds; the ids shown are those of the lowest seed.
pub fn aggregate_seeds(reports: &[FidelityReport]) -> Result<FidelityReport> {
    let mut sorted: Vec<&FidelityReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.seeds.clone());
    let Some(first) = sorted.first().copied() else {
        return Err(Error::precondition("no reports to aggregate"));
    };
    if sorted.len() == 1 {
        return Ok(first.clone());
    }
    for r in &sorted[1..] {
        if r.scenario != first.scenario {
            return Err(mismatch("scenario"));
        }
        if r.stance_labels != first.stance_labels {
            return Err(mismatch("stance labels"));
        }
        if r.correlated_series != first.correlated_series {
            return Err(mismatch("correlated series"));
        }
        if r.distributions.len() != first.distributions.len()
            || r.distributions
                .iter()
                .zip(&first.distributions)
                .any(|(a, b)| a.round != b.round)
        {
            return Err(mismatch("distribution rounds"));
        }
        if r.reproduction.len() != first.reproduction.len()
            || r.reproduction.iter().zip(&first.reproduction).any(|(a, b)| {
                a.label != b.label
                    || a.platform != b.platform
                    || a.points.len() != b.points.len()
                    || a.points.iter().zip(&b.points).any(|(p, q)| p.0 != q.0)
            })
        {
            return Err(mismatch("reproduction series"));
        }
        if r.volumes.len() != first.volumes.len()
            || r.volumes.iter().zip(&first.volumes).any(|(a, b)| a.label != b.label)
        {
            return Err(mismatch("tracked messages"));
        }
    }
    let k = sorted.len() as f64;

    let trajectory = mean_points(&sorted.iter().map(|r| &r.trajectory).collect::<Vec<_>>())?;
    let negative_share = mean_points(&sorted.iter().map(|r| &r.negative_share).collect::<Vec<_>>())?;
    let mut distributions = first.distributions.clone();
    for r in &sorted[1..] {
        for (d, e) in distributions.iter_mut().zip(&r.distributions) {
            for (p, q) in d.probabilities.iter_mut().zip(&e.probabilities) {
                *p += q;
            }
        }
    }
    for d in &mut distributions {
        d.probabilities.iter_mut().for_each(|p| *p /= k);
        renormalize(&mut d.probabilities);
    }
    let mut final_probs: Vec<f64> = first.final_distribution.probabilities.clone();
    for r in &sorted[1..] {
        for (p, q) in final_probs.iter_mut().zip(&r.final_distribution.probabilities) {
            *p += q;
        }
    }
    final_probs.iter_mut().for_each(|p| *p /= k);
    renormalize(&mut final_probs);
    let final_distribution = StanceDistribution::new(first.stance_labels.clone(), final_probs)?;

    let mut reproduction = first.reproduction.clone();
    for r in &sorted[1..] {
        for (s, t) in reproduction.iter_mut().zip(&r.reproduction) {
            for (p, q) in s.points.iter_mut().zip(&t.points) {
                p.1 += q.1;
            }
        }
    }
    reproduction
        .iter_mut()
        .for_each(|s| s.points.iter_mut().for_each(|p| p.1 /= k));
    let mut volumes = first.volumes.clone();
    for r in &sorted[1..] {
        for (v, w) in volumes.iter_mut().zip(&r.volumes) {
            v.engagements += w.engagements;
            v.posts += w.posts;
        }
    }
    volumes.iter_mut().for_each(|v| {
        v.engagements /= k;
        v.posts /= k;
    });

    let mut per_seed: Vec<SeedMetrics> = sorted.iter().flat_map(|r| r.per_seed.iter().cloned()).collect();
    per_seed.sort_by_key(|m| m.seed);
    let mut seeds: Vec<u64> = per_seed.iter().map(|m| m.seed).collect();
    seeds.dedup();
    let undefined: Vec<u64> = per_seed
        .iter()
        .filter(|m| m.correlation_error.is_some())
        .map(|m| m.seed)
        .collect();
    let (pearson_r, correlation_error) = if first.correlated_series.is_none() {
        (None, None)
    } else if undefined.is_empty() {
        let rs: Vec<f64> = per_seed.iter().filter_map(|m| m.pearson_r).collect();
        (Some(rs.iter().sum::<f64>() / rs.len() as f64), None)
    } else {
        (None, Some(format!("correlation undefined for seeds {undefined:?}")))
    };
    let jsds: Vec<f64> = per_seed.iter().filter_map(|m| m.jsd).collect();
    let jsd = (!jsds.is_empty()).then(|| jsds.iter().sum::<f64>() / jsds.len() as f64);

    let mut notes = first.notes.clone();
    for r in &sorted[1..] {
        for n in &r.notes {
            if !notes.contains(n) {
                notes.push(n.clone());
            }
        }
    }

    Ok(FidelityReport {
        scenario: first.scenario.clone(),
        seeds,
        stance_labels: first.stance_labels.clone(),
        trajectory,
        negative_share,
        distributions,
        final_distribution,
        correlated_series: first.correlated_series,
        pearson_r,
        jsd,
        correlation_error,
        per_seed,
        reproduction,
        volumes,
        notes,
    })
}

/// Plot-ready CSV: one row per round with both trajectories and the stance
/// shares.
pub fn write_report_csv(report: &FidelityReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["round".to_string(), "opinion_index".into(), "negative_share".into()];
    header.extend(report.stance_labels.iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for ((t, n), d) in report
        .trajectory
        .points
        .iter()
        .zip(&report.negative_share.points)
        .zip(&report.distributions)
    {
        let mut row = vec![t.0.to_string(), t.1.to_string(), n.1.to_string()];
        row.extend(d.probabilities.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_hand_value() {
        // deviations (-1,0,1) and (-4/3,-1/3,5/3): r = 3 / sqrt(2 * 14/3)
        let expected = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.98198).abs() < 1e-5);
    }

    #[test]
    fn zero_variance_is_an_error() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn jsd_disjoint_is_one() {
        assert!((jsd_raw(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(jsd_raw(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn stance_bands() {
        let t = [-0.2, 0.2];
        assert_eq!(Stance::from_score(1.0, t).unwrap(), Stance::Support);
        assert_eq!(Stance::from_score(0.0, t).unwrap(), Stance::Neutral);
        assert_eq!(Stance::from_score(-1.0, t).unwrap(), Stance::Oppose);
        assert!(Stance::from_score(0.0, [0.3, 0.1]).is_err());
    }

    #[test]
    fn trajectory_alignment_by_round() {
        let a = Trajectory::new(vec![(0, 1.0), (1, 2.0), (2, 3.0), (3, 9.0)]).unwrap();
        let b = Trajectory::new(vec![(0, 1.0), (1, 2.0), (2, 4.0)]).unwrap();
        assert!((pearson_r(&a, &b).unwrap() - pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap()).abs() < 1e-15);
        let c = Trajectory::new(vec![(7, 1.0)]).unwrap();
        assert!(pearson_r(&a, &c).is_err());
    }
}
