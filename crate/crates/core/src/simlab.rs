//! Simulation models with autoregressive growth curves and the Monte Carlo
//! harness estimating rejection rates of the rank score test.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chartmodel::{fit, ModelConfig};
use crate::error::{Error, Result};
use crate::longdata::{build_design, Dataset, Subject};
use crate::numstat::{normal_quantile, ErrorFamily, RngStream, Variates};
use crate::ranktest::{chisq_cdf, rank_score_test, TestSpec};
use crate::splines::KnotSpec;

/// Nominal level of the simulated tests.
pub const NOMINAL_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimModelSpec {
    pub model_id: u8,
    pub n_subjects: usize,
    pub m_per_subject: usize,
    pub b: f64,
    pub error_family: ErrorFamily,
    pub heteroscedastic: bool,
}

impl SimModelSpec {
    /// Model `model_id` (1 to 6) with 200 subjects of 10 measurements.
    /// Models 1-3 have normal, t3 and chi-square(1) errors; 4-6 use the same
    /// families with a scale growing in the previous measurement.
    pub fn model(model_id: u8, b: f64) -> Result<Self> {
        let error_family = match model_id {
            1 | 4 => ErrorFamily::Normal,
            2 | 5 => ErrorFamily::T3Std,
            3 | 6 => ErrorFamily::Chisq1Std,
            _ => {
                return Err(Error::Config(format!(
                    "model id {model_id} is not in 1..=6"
                )))
            }
        };
        Ok(SimModelSpec {
            model_id,
            n_subjects: 200,
            m_per_subject: 10,
            b,
            error_family,
            heteroscedastic: model_id >= 4,
        })
    }

    pub fn with_size(mut self, n_subjects: usize, m_per_subject: usize) -> Self {
        self.n_subjects = n_subjects;
        self.m_per_subject = m_per_subject;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let expected = SimModelSpec::model(self.model_id, self.b)?;
        if expected.error_family != self.error_family
            || expected.heteroscedastic != self.heteroscedastic
        {
            return Err(Error::Config(format!(
                "error family or scale does not match model {}",
                self.model_id
            )));
        }
        if self.n_subjects == 0 || self.m_per_subject == 0 {
            return Err(Error::Config(
                "simulation needs at least one subject and measurement".into(),
            ));
        }
        if !self.b.is_finite() {
            return Err(Error::Config(
                "autoregressive coefficient is not finite".into(),
            ));
        }
        Ok(())
    }

    /// Error scale for a measurement following `y_prev`.
    fn scale(&self, y_prev: f64) -> f64 {
        if self.heteroscedastic {
            0.5 + y_prev / 25.0
        } else {
            1.0
        }
    }

    /// `b` making the lag coefficient of the `tau` conditional quantile zero.
    pub fn null_b(&self, tau: f64) -> f64 {
        if self.heteroscedastic {
            -error_quantile(self.error_family, tau) / 25.0
        } else {
            0.0
        }
    }

    /// Lag coefficient of the `tau` conditional quantile.
    pub fn b_tau(&self, tau: f64) -> f64 {
        if self.heteroscedastic {
            self.b + error_quantile(self.error_family, tau) / 25.0
        } else {
            self.b
        }
    }
}

/// Mean growth curve.
pub fn h(t: f64) -> f64 {
    40.0 * t / (1.0 + 4.0 * t)
}

/// Draws one dataset. The first measurement of each subject has no
/// autoregressive term and unit error scale.
pub fn generate<V: Variates>(spec: &SimModelSpec, rng: &mut V) -> Result<Dataset> {
    spec.validate()?;
    let m = spec.m_per_subject;
    let mut subjects = Vec::with_capacity(spec.n_subjects);
    for i in 0..spec.n_subjects {
        let times = rng.uniform_order_stats(m);
        let x = 10.0 + rng.normal();
        let mut values = Vec::with_capacity(m);
        for (j, &t) in times.iter().enumerate() {
            let e = rng.error(spec.error_family);
            let y = if j == 0 {
                h(t) + x + e
            } else {
                let prev = values[j - 1];
                h(t) + spec.b * prev + x + spec.scale(prev) * e
            };
            values.push(y);
        }
        subjects.push(Subject::new(
            format!("s{}", i + 1),
            times,
            values,
            vec![vec![x]; m],
        )?);
    }
    Dataset::new(subjects)
}

/// Distribution function of the standardized error.
pub fn error_cdf(family: ErrorFamily, e: f64) -> f64 {
    match family {
        ErrorFamily::Normal => crate::numstat::normal_cdf(e),
        // With T ~ t3 and e = T / sqrt(3), F(e) = 1/2 + (e / (1 + e^2) + atan e) / pi.
        ErrorFamily::T3Std => 0.5 + (e / (1.0 + e * e) + e.atan()) / std::f64::consts::PI,
        ErrorFamily::Chisq1Std => {
            if e <= 0.0 {
                0.0
            } else {
                chisq_cdf(std::f64::consts::SQRT_2 * e, 1)
            }
        }
    }
}

/// Quantile of the standardized error, closed form for the normal and
/// bisection on the distribution function otherwise.
pub fn error_quantile(family: ErrorFamily, tau: f64) -> f64 {
    assert!(tau > 0.0 && tau < 1.0, "level {tau} is not in (0, 1)");
    if family == ErrorFamily::Normal {
        return normal_quantile(tau);
    }
    let (mut lo, mut hi) = match family {
        ErrorFamily::Chisq1Std => (0.0, 1.0),
        _ => (-1.0, 1.0),
    };
    while error_cdf(family, lo) > tau {
        lo *= 2.0;
    }
    while error_cdf(family, hi) < tau {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if error_cdf(family, mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Settings shared by the rejection-rate estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSetup {
    pub tau: f64,
    /// Interior knots, placed at `i / (knots + 1)` on [0, 1].
    pub knots: usize,
    /// Linear-block columns tested; `[0]` tests the lag-1 measurement alone.
    pub tested_columns: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl CalibrationSetup {
    pub fn new(tau: f64, knots: usize, replicates: usize, seed: u64) -> Self {
        CalibrationSetup {
            tau,
            knots,
            tested_columns: vec![0],
            replicates,
            seed,
        }
    }

    fn knot_spec(&self) -> Result<KnotSpec> {
        KnotSpec::uniform(self.knots, 4, 0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub model_id: u8,
    pub tau: f64,
    pub knots: usize,
    pub q: usize,
    pub b: f64,
    pub replicates: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    pub mc_standard_error: f64,
}

impl CalibrationResult {
    fn from_counts(spec: &SimModelSpec, setup: &CalibrationSetup, rejections: usize) -> Self {
        let r = rejections as f64 / setup.replicates as f64;
        CalibrationResult {
            model_id: spec.model_id,
            tau: setup.tau,
            knots: setup.knots,
            q: setup.tested_columns.len(),
            b: spec.b,
            replicates: setup.replicates,
            rejections,
            rejection_rate: r,
            mc_standard_error: (r * (1.0 - r) / setup.replicates as f64).sqrt(),
        }
    }
}

/// Whether replicate `index` rejects at the nominal level.
pub fn replicate_rejects(
    spec: &SimModelSpec,
    setup: &CalibrationSetup,
    index: usize,
) -> Result<bool> {
    let mut rng = RngStream::new(setup.seed, index as u64);
    let data = generate(spec, &mut rng)?;
    let design = build_design(&data, 1, &setup.knot_spec()?)?;
    let test = TestSpec::new(setup.tested_columns.clone(), setup.tau);
    Ok(rank_score_test(&design, &test)?.rejects(NOMINAL_LEVEL))
}

/// Rejection rate over `setup.replicates` datasets drawn from `spec` as is.
pub fn rejection_rate(spec: &SimModelSpec, setup: &CalibrationSetup) -> Result<CalibrationResult> {
    spec.validate()?;
    if setup.replicates == 0 {
        return Err(Error::Input("replicates must be positive".into()));
    }
    if !(setup.tau > 0.0 && setup.tau < 1.0) {
        return Err(Error::Config(format!(
            "tau = {} is not in (0, 1)",
            setup.tau
        )));
    }
    let one = |r: usize| replicate_rejects(spec, setup, r);
    #[cfg(feature = "parallel")]
    let outcomes: Result<Vec<bool>> = {
        use rayon::prelude::*;
        (0..setup.replicates).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Result<Vec<bool>> = (0..setup.replicates).map(one).collect();
    let rejections = outcomes?.into_iter().filter(|&r| r).count();
    Ok(CalibrationResult::from_counts(spec, setup, rejections))
}

/// Type I error: `b` is replaced by the value making the null hold at `setup.tau`.
pub fn type1_error(spec: &SimModelSpec, setup: &CalibrationSetup) -> Result<CalibrationResult> {
    let null = SimModelSpec {
        b: spec.null_b(setup.tau),
        ..spec.clone()
    };
    rejection_rate(&null, setup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    /// Distance of the simulated `b` from its null value.
    pub b: f64,
    pub result: CalibrationResult,
}

/// Rejection rates for lag coefficients `null + b` over `b_values`; the
/// entry at `b = 0` coincides with [`type1_error`] for the same setup.
pub fn power_curve(
    spec: &SimModelSpec,
    setup: &CalibrationSetup,
    b_values: &[f64],
) -> Result<Vec<PowerPoint>> {
    if !b_values.iter().all(|b| b.is_finite()) {
        return Err(Error::Input("power curve b values must be finite".into()));
    }
    let null = spec.null_b(setup.tau);
    b_values
        .iter()
        .map(|&b| {
            let s = SimModelSpec {
                b: null + b,
                ..spec.clone()
            };
            Ok(PowerPoint {
                b,
                result: rejection_rate(&s, setup)?,
            })
        })
        .collect()
}

/// Fitted coefficient of `Y_{j-1}` at level `tau` for one replicate, used to
/// study the sampling distribution of the estimator.
pub fn lag_estimate(
    spec: &SimModelSpec,
    tau: f64,
    knots: usize,
    seed: u64,
    index: usize,
) -> Result<f64> {
    let mut rng = RngStream::new(seed, index as u64);
    let data = generate(spec, &mut rng)?;
    let config = ModelConfig::new(1, KnotSpec::uniform(knots, 4, 0.0, 1.0)?, vec![tau])?;
    let model = fit(&data, &config)?;
    Ok(model.per_tau[0].beta[0])
}

/// Writes results as CSV, preceded by `# ` comment lines.
pub fn write_calibration_csv<W: Write>(
    results: &[CalibrationResult],
    header: &[String],
    mut out: W,
) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "model_id,tau,knots,replicates,rejection_rate,mc_se,q")?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{}",
            r.model_id, r.tau, r.knots, r.replicates, r.rejection_rate, r.mc_standard_error, r.q
        )?;
    }
    Ok(())
}
