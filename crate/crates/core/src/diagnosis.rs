//! Goodness-of-fit checks at a fixed measurement index: the observed `j`-th
//! measurements are compared with draws from the fitted conditional
//! distribution given each subject's own history.

use serde::{Deserialize, Serialize};

use crate::chartmodel::{predict, FittedChartModel, ScreeningQuery};
use crate::error::{Error, Result};
use crate::longdata::{Dataset, Subject};
use crate::numstat::{empirical_quantile, empirical_quantile_sorted, Variates};

/// Levels 0.05, 0.15, ..., 0.95.
pub fn default_assessment_grid() -> Vec<f64> {
    (0..10).map(|k| 0.05 + 0.1 * k as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauPoint {
    pub tau: f64,
    pub tau_hat: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPair {
    pub level: f64,
    pub simulated: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub j: usize,
    pub group_label: String,
    pub n_observed: usize,
    pub tau_points: Vec<TauPoint>,
    pub qq_pairs: Vec<QqPair>,
}

impl DiagnosticsReport {
    pub fn max_abs_z(&self) -> f64 {
        self.tau_points.iter().fold(0.0, |m, p| m.max(p.z.abs()))
    }
}

/// Quantity defining a subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupVariable {
    FirstMeasurement,
    /// Covariate `covariate` (0-based) at measurement `j` (1-based).
    CovariateAt {
        covariate: usize,
        j: usize,
    },
}

impl GroupVariable {
    fn value(&self, s: &Subject) -> Option<f64> {
        match *self {
            GroupVariable::FirstMeasurement => s.values.first().copied(),
            GroupVariable::CovariateAt { covariate, j } => s
                .covariates
                .get(j.checked_sub(1)?)
                .and_then(|c| c.get(covariate))
                .copied(),
        }
    }

    fn label(&self) -> String {
        match self {
            GroupVariable::FirstMeasurement => "first measurement".into(),
            GroupVariable::CovariateAt { covariate, j } => {
                format!("covariate {covariate} at measurement {j}")
            }
        }
    }
}

/// Subjects selected by comparing a variable with its empirical quantile
/// over the whole dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Subgroup {
    All,
    Below {
        var: GroupVariable,
        quantile_level: f64,
    },
    AtOrAbove {
        var: GroupVariable,
        quantile_level: f64,
    },
}

impl Subgroup {
    pub fn label(&self) -> String {
        match self {
            Subgroup::All => "all".into(),
            Subgroup::Below {
                var,
                quantile_level,
            } => {
                format!("{} below its {quantile_level} quantile", var.label())
            }
            Subgroup::AtOrAbove {
                var,
                quantile_level,
            } => {
                format!("{} at or above its {quantile_level} quantile", var.label())
            }
        }
    }

    /// Positions of the member subjects.
    pub fn members(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        let (var, level, below) = match *self {
            Subgroup::All => return Ok((0..dataset.len()).collect()),
            Subgroup::Below {
                var,
                quantile_level,
            } => (var, quantile_level, true),
            Subgroup::AtOrAbove {
                var,
                quantile_level,
            } => (var, quantile_level, false),
        };
        if !(0.0..=1.0).contains(&level) {
            return Err(Error::Input(format!(
                "subgroup level {level} is not in [0, 1]"
            )));
        }
        let values: Vec<Option<f64>> = dataset.subjects.iter().map(|s| var.value(s)).collect();
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        if defined.is_empty() {
            return Ok(Vec::new());
        }
        let cut = empirical_quantile(&defined, level)?;
        Ok(values
            .iter()
            .enumerate()
            .filter(|(_, v)| matches!(v, Some(x) if (*x < cut) == below))
            .map(|(i, _)| i)
            .collect())
    }
}

/// Value at level `u` of the piecewise-linear interpolation through
/// `(taus[k], values[k])`, constant beyond the end points.
pub fn interpolate_quantile(taus: &[f64], values: &[f64], u: f64) -> f64 {
    let last = taus.len() - 1;
    if u <= taus[0] {
        return values[0];
    }
    if u >= taus[last] {
        return values[last];
    }
    let k = taus.partition_point(|&t| t <= u);
    let w = (u - taus[k - 1]) / (taus[k] - taus[k - 1]);
    values[k - 1] + w * (values[k] - values[k - 1])
}

fn check_index(model: &FittedChartModel, j: usize) -> Result<()> {
    if j < model.config.p + 1 || j == 0 {
        return Err(Error::Index(format!(
            "measurement {j} has fewer than p = {} predecessors",
            model.config.p
        )));
    }
    Ok(())
}

/// Repaired centiles of measurement `j` for each listed subject.
fn subject_centiles(
    model: &FittedChartModel,
    dataset: &Dataset,
    members: &[usize],
    j: usize,
) -> Result<Vec<Vec<f64>>> {
    members
        .iter()
        .map(|&i| {
            let s = &dataset.subjects[i];
            let query = ScreeningQuery {
                history: s.times[..j - 1]
                    .iter()
                    .copied()
                    .zip(s.values[..j - 1].iter().copied())
                    .collect(),
                covariates: s.covariates.get(j - 1).cloned().unwrap_or_default(),
                t_query: s.times[j - 1],
                y_query: s.values[j - 1],
            };
            Ok(predict(model, &query)?.values)
        })
        .collect()
}

fn simulate_from(
    model: &FittedChartModel,
    centiles: &[Vec<f64>],
    size: usize,
    rng: &mut impl Variates,
) -> Vec<f64> {
    let taus = &model.config.tau_grid;
    (0..size)
        .map(|_| {
            let c = &centiles[rng.index_below(centiles.len())];
            interpolate_quantile(taus, c, rng.uniform())
        })
        .collect()
}

/// `size` draws of the `j`-th measurement (1-based): pick a subject with at
/// least `j` measurements uniformly with replacement, draw `U` uniform and
/// return the model's `U` quantile given that subject's history.
pub fn simulate_jth(
    model: &FittedChartModel,
    dataset: &Dataset,
    j: usize,
    size: usize,
    rng: &mut impl Variates,
) -> Result<Vec<f64>> {
    check_index(model, j)?;
    let eligible: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.subjects[i].len() >= j)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Input(format!("no subject has {j} measurements")));
    }
    let centiles = subject_centiles(model, dataset, &eligible, j)?;
    Ok(simulate_from(model, &centiles, size, rng))
}

/// For each level, the fraction of `observed` strictly below the simulated
/// quantile, and its standardized deviation from the level.
pub fn tau_hat_stats(observed: &[f64], simulated: &[f64], grid: &[f64]) -> Result<Vec<TauPoint>> {
    let n = observed.len() as f64;
    let mut sim = simulated.to_vec();
    sim.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&tau| {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::Input(format!(
                    "assessment level {tau} is not in (0, 1)"
                )));
            }
            let threshold = empirical_quantile_sorted(&sim, tau)?;
            let tau_hat = observed.iter().filter(|&&y| y < threshold).count() as f64 / n;
            let z = n.sqrt() * (tau_hat - tau) / (tau * (1.0 - tau)).sqrt();
            Ok(TauPoint { tau, tau_hat, z })
        })
        .collect()
}

/// Matching empirical quantiles at levels `k / (count + 1)`.
pub fn qq_points(observed: &[f64], simulated: &[f64], count: usize) -> Result<Vec<QqPair>> {
    let mut obs = observed.to_vec();
    obs.sort_by(f64::total_cmp);
    let mut sim = simulated.to_vec();
    sim.sort_by(f64::total_cmp);
    (1..=count)
        .map(|k| {
            let level = k as f64 / (count + 1) as f64;
            Ok(QqPair {
                level,
                simulated: empirical_quantile_sorted(&sim, level)?,
                observed: empirical_quantile_sorted(&obs, level)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisSettings {
    pub j: usize,
    pub group: Subgroup,
    pub simulated_size: usize,
    pub assessment_grid: Vec<f64>,
    pub qq_count: usize,
}

impl DiagnosisSettings {
    pub fn new(j: usize) -> Self {
        DiagnosisSettings {
            j,
            group: Subgroup::All,
            simulated_size: 10_000,
            assessment_grid: default_assessment_grid(),
            qq_count: 99,
        }
    }
}

/// Compares observed and simulated `j`-th measurements within a subgroup.
/// The simulated draws condition on the histories of group members only.
pub fn diagnose(
    model: &FittedChartModel,
    dataset: &Dataset,
    settings: &DiagnosisSettings,
    rng: &mut impl Variates,
) -> Result<DiagnosticsReport> {
    let j = settings.j;
    check_index(model, j)?;
    let members: Vec<usize> = settings
        .group
        .members(dataset)?
        .into_iter()
        .filter(|&i| dataset.subjects[i].len() >= j)
        .collect();
    let mut report = DiagnosticsReport {
        j,
        group_label: settings.group.label(),
        n_observed: members.len(),
        tau_points: Vec::new(),
        qq_pairs: Vec::new(),
    };
    if members.is_empty() {
        return Ok(report);
    }
    let observed: Vec<f64> = members
        .iter()
        .map(|&i| dataset.subjects[i].values[j - 1])
        .collect();
    let centiles = subject_centiles(model, dataset, &members, j)?;
    let simulated = simulate_from(model, &centiles, settings.simulated_size.max(1), rng);
    report.tau_points = tau_hat_stats(&observed, &simulated, &settings.assessment_grid)?;
    report.qq_pairs = qq_points(&observed, &simulated, settings.qq_count)?;
    Ok(report)
}
