//! Fitting the global conditional-quantile model over a grid of levels,
//! subject-conditional prediction, screening and subject-bootstrap bands.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::longdata::{build_design, lagged_row, Dataset};
use crate::numstat::{empirical_quantile_sorted, RngStream, Variates};
use crate::quantreg::{solve, QrProblem};
use crate::splines::KnotSpec;

pub const DEFAULT_TAU_GRID: [f64; 7] = [0.03, 0.1, 0.25, 0.5, 0.75, 0.9, 0.97];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Lag order. Zero gives the unconditional (spline-only) model.
    pub p: usize,
    pub spec: KnotSpec,
    pub tau_grid: Vec<f64>,
}

impl ModelConfig {
    pub fn new(p: usize, spec: KnotSpec, tau_grid: Vec<f64>) -> Result<Self> {
        let c = ModelConfig { p, spec, tau_grid };
        c.validate()?;
        Ok(c)
    }

    /// Default grid of seven levels.
    pub fn with_default_grid(p: usize, spec: KnotSpec) -> Result<Self> {
        ModelConfig::new(p, spec, DEFAULT_TAU_GRID.to_vec())
    }

    /// Two lags, one covariate column, cubic knots at 0.5, 1 and 1.5 on the
    /// domain spanned by `dataset`.
    pub fn infant_weight(dataset: &Dataset) -> Result<Self> {
        let spec = KnotSpec::for_times(vec![0.5, 1.0, 1.5], 4, &dataset.all_times())?;
        ModelConfig::with_default_grid(2, spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.tau_grid.is_empty() {
            return Err(Error::Config("tau grid is empty".into()));
        }
        if !self.tau_grid.iter().all(|&t| t > 0.0 && t < 1.0) {
            return Err(Error::Config("tau grid levels must lie in (0, 1)".into()));
        }
        if !self.tau_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("tau grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauFit {
    pub tau: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub objective: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_rows: usize,
    pub n_subjects: usize,
    pub skipped_subjects: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedChartModel {
    pub config: ModelConfig,
    pub n_covariates: usize,
    pub per_tau: Vec<TauFit>,
    pub fit_summary: FitSummary,
}

impl FittedChartModel {
    pub fn is_degenerate(&self) -> bool {
        self.per_tau.iter().any(|f| f.degenerate)
    }

    pub fn tau_grid(&self) -> &[f64] {
        &self.config.tau_grid
    }
}

pub fn fit(dataset: &Dataset, config: &ModelConfig) -> Result<FittedChartModel> {
    config.validate()?;
    let design = build_design(dataset, config.p, &config.spec)?;
    if design.n_rows() == 0 {
        return Err(Error::Input(format!(
            "no usable rows: every subject has at most p = {} measurements",
            config.p
        )));
    }
    let x = design.full_design();
    let kn = config.spec.dimension();
    let solve_one = |&tau: &f64| -> Result<TauFit> {
        let sol = solve(&QrProblem::new(&x, &design.response, tau)?)?;
        let (alpha, beta) = sol.coefficients.split_at(kn);
        Ok(TauFit {
            tau,
            alpha: alpha.to_vec(),
            beta: beta.to_vec(),
            objective: sol.objective,
            degenerate: sol.degenerate,
        })
    };
    #[cfg(feature = "parallel")]
    let per_tau: Result<Vec<TauFit>> = {
        use rayon::prelude::*;
        config.tau_grid.par_iter().map(solve_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_tau: Result<Vec<TauFit>> = config.tau_grid.iter().map(solve_one).collect();

    Ok(FittedChartModel {
        config: config.clone(),
        n_covariates: dataset.n_covariates(),
        per_tau: per_tau?,
        fit_summary: FitSummary {
            n_rows: design.n_rows(),
            n_subjects: design.n_subjects,
            skipped_subjects: design.skipped_subjects,
        },
    })
}

/// Prior path, covariates and current measurement of a subject to screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningQuery {
    /// `(time, value)` pairs, ascending in time.
    pub history: Vec<(f64, f64)>,
    pub covariates: Vec<f64>,
    pub t_query: f64,
    pub y_query: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCentiles {
    pub tau_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub monotonicity_repaired: bool,
}

/// Assigns the ascending sort of `values` back to the ascending levels.
pub fn monotone_repair(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn check_query(model: &FittedChartModel, q: &ScreeningQuery) -> Result<()> {
    let p = model.config.p;
    if q.history.len() < p {
        return Err(Error::Input(format!(
            "history has {} points, model needs {p}",
            q.history.len()
        )));
    }
    if !q.history.windows(2).all(|w| w[0].0 < w[1].0) {
        return Err(Error::Input(
            "history times must be strictly increasing".into(),
        ));
    }
    if let Some(&(t_last, _)) = q.history.last() {
        if t_last >= q.t_query {
            return Err(Error::Input(format!(
                "query time {} does not follow the last history time {t_last}",
                q.t_query
            )));
        }
    }
    if q.covariates.len() != model.n_covariates {
        return Err(Error::Shape(format!(
            "{} covariates given, model has {}",
            q.covariates.len(),
            model.n_covariates
        )));
    }
    Ok(())
}

/// Raw per-level predictions, before monotone repair.
pub fn predict_raw(model: &FittedChartModel, query: &ScreeningQuery) -> Result<Vec<f64>> {
    check_query(model, query)?;
    let mut basis = vec![0.0; model.config.spec.dimension()];
    model.config.spec.eval_into(query.t_query, &mut basis)?;
    let mut row = Vec::new();
    lagged_row(
        &query.history,
        query.t_query,
        model.config.p,
        &query.covariates,
        &mut row,
    );
    Ok(model
        .per_tau
        .iter()
        .map(|f| dot(&basis, &f.alpha) + dot(&row, &f.beta))
        .collect())
}

pub fn predict(model: &FittedChartModel, query: &ScreeningQuery) -> Result<ConditionalCentiles> {
    let raw = predict_raw(model, query)?;
    let values = monotone_repair(&raw);
    Ok(ConditionalCentiles {
        tau_grid: model.config.tau_grid.clone(),
        monotonicity_repaired: values != raw,
        values,
    })
}

/// Position of a measurement relative to the predicted centiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Band {
    Below { tau: f64 },
    Between { lower: f64, upper: f64 },
    Above { tau: f64 },
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Band::Below { tau } => write!(f, "below {tau}"),
            Band::Between { lower, upper } => write!(f, "[{lower}, {upper})"),
            Band::Above { tau } => write!(f, "above {tau}"),
        }
    }
}

/// Band containing `y`; a value equal to a centile belongs to the band above it.
pub fn locate_band(centiles: &ConditionalCentiles, y: f64) -> Band {
    let above = centiles.values.partition_point(|&q| q <= y);
    let taus = &centiles.tau_grid;
    if above == 0 {
        Band::Below { tau: taus[0] }
    } else if above == taus.len() {
        Band::Above {
            tau: taus[taus.len() - 1],
        }
    } else {
        Band::Between {
            lower: taus[above - 1],
            upper: taus[above],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub y_query: f64,
    pub t_query: f64,
    pub band: Band,
    pub centiles: ConditionalCentiles,
}

pub fn screen(model: &FittedChartModel, query: &ScreeningQuery) -> Result<ScreeningReport> {
    let centiles = predict(model, query)?;
    Ok(ScreeningReport {
        y_query: query.y_query,
        t_query: query.t_query,
        band: locate_band(&centiles, query.y_query),
        centiles,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBands {
    pub tau_grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub replicates: usize,
    /// Resamples drawn in total, including redraws of degenerate ones.
    pub attempts: usize,
}

/// Pointwise bands for the conditional centiles at `query`, by resampling
/// whole subjects. Replicate `b`, attempt `a` draws from stream
/// `(seed, a * replicates + b)`.
pub fn bootstrap_bands(
    dataset: &Dataset,
    config: &ModelConfig,
    query: &ScreeningQuery,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapBands> {
    if replicates < 2 {
        return Err(Error::Input("bootstrap needs at least 2 replicates".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("band level {level} is not in (0, 1)")));
    }
    if dataset.is_empty() {
        return Err(Error::Input("bootstrap of an empty dataset".into()));
    }
    let n = dataset.len();
    let max_attempts = 10 * replicates;
    let one = |b: usize| -> Result<(Vec<f64>, usize)> {
        for attempt in 0..max_attempts {
            let mut rng = RngStream::new(seed, (attempt * replicates + b) as u64);
            let picks: Vec<usize> = (0..n).map(|_| rng.index_below(n)).collect();
            let sample = dataset.resample(&picks);
            let model = match fit(&sample, config) {
                Ok(m) => m,
                Err(Error::Input(_)) => continue,
                Err(e) => return Err(e),
            };
            if model.is_degenerate() {
                continue;
            }
            return Ok((predict(&model, query)?.values, attempt + 1));
        }
        Err(Error::Numerical(format!(
            "bootstrap replicate {b} stayed degenerate"
        )))
    };
    #[cfg(feature = "parallel")]
    let draws: Result<Vec<(Vec<f64>, usize)>> = {
        use rayon::prelude::*;
        (0..replicates).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let draws: Result<Vec<(Vec<f64>, usize)>> = (0..replicates).map(one).collect();
    let draws = draws?;
    let attempts: usize = draws.iter().map(|d| d.1).sum();
    if attempts > max_attempts {
        return Err(Error::Numerical(format!(
            "bootstrap needed {attempts} resamples, more than {max_attempts}"
        )));
    }
    let g = config.tau_grid.len();
    let mut lower = Vec::with_capacity(g);
    let mut upper = Vec::with_capacity(g);
    for k in 0..g {
        let mut col: Vec<f64> = draws.iter().map(|d| d.0[k]).collect();
        col.sort_by(f64::total_cmp);
        lower.push(empirical_quantile_sorted(&col, (1.0 - level) / 2.0)?);
        upper.push(empirical_quantile_sorted(&col, (1.0 + level) / 2.0)?);
    }
    Ok(BootstrapBands {
        tau_grid: config.tau_grid.clone(),
        lower,
        upper,
        level,
        replicates,
        attempts,
    })
}
