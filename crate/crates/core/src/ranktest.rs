//! Rank score test for a subset of the linear coefficients, and the
//! chi-squared distribution function used to calibrate it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, projection_residuals};
use crate::longdata::DesignSystem;
use crate::quantreg::{psi, solve, zero_tol, QrProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    /// Linear-block columns whose coefficients are zero under the null.
    pub tested_columns: Vec<usize>,
    pub tau: f64,
}

impl TestSpec {
    pub fn new(tested_columns: Vec<usize>, tau: f64) -> Self {
        TestSpec {
            tested_columns,
            tau,
        }
    }

    /// Tests the coefficient of `Y_{j-1}` alone.
    pub fn lag1(tau: f64) -> Self {
        TestSpec::new(vec![0], tau)
    }

    /// Tests both lag-1 columns, `Y_{j-1}` and `D_{j,1} Y_{j-1}`.
    pub fn lag1_pair(tau: f64) -> Self {
        TestSpec::new(vec![0, 1], tau)
    }

    pub fn q(&self) -> usize {
        self.tested_columns.len()
    }

    pub fn validate(&self, linear_cols: usize) -> Result<()> {
        if self.tested_columns.is_empty() {
            return Err(Error::Config("no tested columns".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!(
                "tau = {} is not in (0, 1)",
                self.tau
            )));
        }
        for (k, &c) in self.tested_columns.iter().enumerate() {
            if c >= linear_cols {
                return Err(Error::Config(format!(
                    "tested column {c} is outside the linear block of {linear_cols} columns"
                )));
            }
            if self.tested_columns[..k].contains(&c) {
                return Err(Error::Config(format!("tested column {c} listed twice")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankScoreResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub restricted_objective: f64,
}

impl RankScoreResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Test with scores and their covariance normalized by the number of
/// subjects contributing rows.
pub fn rank_score_test(design: &DesignSystem, spec: &TestSpec) -> Result<RankScoreResult> {
    rank_score_test_normalized(design, spec, design.n_subjects as f64)
}

/// As [`rank_score_test`] with an explicit normalizing count. The statistic
/// does not depend on it.
pub fn rank_score_test_normalized(
    design: &DesignSystem,
    spec: &TestSpec,
    normalizer: f64,
) -> Result<RankScoreResult> {
    let lin = design.linear_block.ncols();
    spec.validate(lin)?;
    if !(normalizer > 0.0) {
        return Err(Error::Input("normalizing count must be positive".into()));
    }
    let q = spec.q();
    let kept: Vec<usize> = (0..lin)
        .filter(|c| !spec.tested_columns.contains(c))
        .collect();
    let w = design
        .spline_block
        .hstack(&design.linear_block.select_columns(&kept))?;
    let x1 = design.linear_block.select_columns(&spec.tested_columns);
    let big_n = design.n_rows();
    if big_n < w.ncols() + q + 5 {
        return Err(Error::Input(format!(
            "{big_n} rows are too few to test {q} columns against {} nuisance columns",
            w.ncols()
        )));
    }

    let restricted = solve(&QrProblem::new(&w, &design.response, spec.tau)?)?;
    if restricted.degenerate {
        return Err(Error::Numerical(
            "restricted design is rank deficient".into(),
        ));
    }
    let v = projection_residuals(&w, &x1)?;

    let tol = zero_tol(&design.response);
    let mut score = DVector::<f64>::zeros(q);
    for i in 0..big_n {
        let r = design.response[i] - dot(w.row(i), &restricted.coefficients);
        // Residuals within rounding of zero are the interpolated ones.
        let s = psi(if r.abs() <= tol { 0.0 } else { r }, spec.tau);
        for (a, va) in v.row(i).iter().enumerate() {
            score[a] += s * va;
        }
    }
    score /= normalizer.sqrt();

    let mut vn = DMatrix::<f64>::zeros(q, q);
    let mut raw_norm = vec![0.0; q];
    for i in 0..big_n {
        let vi = v.row(i);
        let xi = x1.row(i);
        for a in 0..q {
            raw_norm[a] += xi[a] * xi[a];
            for b in 0..q {
                vn[(a, b)] += vi[a] * vi[b];
            }
        }
    }
    let scale = spec.tau * (1.0 - spec.tau) / normalizer;
    vn *= scale;
    check_conditioning(&vn, &raw_norm, scale, &spec.tested_columns)?;

    let chol = vn.clone().cholesky().ok_or_else(|| Error::Collinearity {
        columns: spec.tested_columns.clone(),
        msg: "score covariance is not positive definite".into(),
    })?;
    let statistic = score.dot(&chol.solve(&score)).max(0.0);
    Ok(RankScoreResult {
        statistic,
        dof: q,
        p_value: (1.0 - chisq_cdf(statistic, q)).clamp(0.0, 1.0),
        restricted_objective: restricted.objective,
    })
}

/// Rejects a score covariance whose condition number, after scaling each
/// tested column by its raw norm, exceeds 1e12. The scaled matrix has unit
/// diagonal before projection, so a column that projection almost annihilates
/// counts as ill conditioned even when `q = 1`.
fn check_conditioning(
    vn: &DMatrix<f64>,
    raw_norm: &[f64],
    scale: f64,
    columns: &[usize],
) -> Result<()> {
    let q = vn.nrows();
    let zero: Vec<usize> = (0..q)
        .filter(|&a| !(raw_norm[a] > 0.0))
        .map(|a| columns[a])
        .collect();
    if !zero.is_empty() {
        return Err(Error::Collinearity {
            columns: zero,
            msg: "tested column is identically zero".into(),
        });
    }
    let d: Vec<f64> = raw_norm.iter().map(|r| (r * scale).sqrt()).collect();
    let m = DMatrix::from_fn(q, q, |a, b| vn[(a, b)] / (d[a] * d[b]));
    let eig = m.symmetric_eigen();
    let (mut imin, mut imax) = (0, 0);
    for k in 0..q {
        if eig.eigenvalues[k] < eig.eigenvalues[imin] {
            imin = k;
        }
        if eig.eigenvalues[k] > eig.eigenvalues[imax] {
            imax = k;
        }
    }
    let (lo, hi) = (eig.eigenvalues[imin], eig.eigenvalues[imax]);
    if !(lo > 0.0) || hi.max(1.0) / lo > 1e12 {
        let vec = eig.eigenvectors.column(imin);
        let peak = vec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let offending = (0..q)
            .filter(|&a| vec[a].abs() >= 0.1 * peak)
            .map(|a| columns[a])
            .collect();
        return Err(Error::Collinearity {
            columns: offending,
            msg: "tested columns are numerically dependent on the remaining design".into(),
        });
    }
    Ok(())
}

/// Chi-squared distribution function with `q` degrees of freedom, i.e. the
/// regularized lower incomplete gamma function `P(q/2, x/2)`.
pub fn chisq_cdf(x: f64, q: usize) -> f64 {
    assert!(q >= 1, "chi-squared needs at least one degree of freedom");
    if !(x > 0.0) {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let a = q as f64 / 2.0;
    let y = x / 2.0;
    let log_prefactor = a * y.ln() - y - ln_gamma_half(q);
    if y < a + 1.0 {
        // Series: P = y^a e^-y / Gamma(a+1) * sum y^n / ((a+1)...(a+n)).
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= y / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (log_prefactor.exp() * sum).clamp(0.0, 1.0)
    } else {
        // Modified Lentz evaluation of the continued fraction for Q.
        let tiny = 1e-300;
        let mut b = y + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - log_prefactor.exp() * h).clamp(0.0, 1.0)
    }
}

/// `ln Gamma(q/2)` computed exactly from the half-integer recursion.
fn ln_gamma_half(q: usize) -> f64 {
    let mut acc = 0.0;
    let mut k = q;
    while k > 2 {
        k -= 2;
        acc += (k as f64 / 2.0).ln();
    }
    if k == 1 {
        acc + 0.5 * std::f64::consts::PI.ln()
    } else {
        acc
    }
}
