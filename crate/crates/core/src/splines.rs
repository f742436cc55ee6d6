//! Clamped B-spline bases on a bounded time interval.
//!
//! The knot vector repeats each boundary `order` times, so the basis has
//! `order + interior_knots.len()` functions and interpolates at both ends.
//! Evaluation uses the Cox–de Boor triangle restricted to the active span,
//! with right-continuous pieces at interior knots and the last piece closed
//! at the upper bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotSpec {
    pub interior_knots: Vec<f64>,
    pub order: usize,
    pub t_lower: f64,
    pub t_upper: f64,
}

impl KnotSpec {
    pub fn new(interior_knots: Vec<f64>, order: usize, t_lower: f64, t_upper: f64) -> Result<Self> {
        let spec = KnotSpec {
            interior_knots,
            order,
            t_lower,
            t_upper,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `count` equally spaced interior knots on `[t_lower, t_upper]`.
    pub fn uniform(count: usize, order: usize, t_lower: f64, t_upper: f64) -> Result<Self> {
        let width = t_upper - t_lower;
        let knots = (1..=count)
            .map(|i| t_lower + width * i as f64 / (count + 1) as f64)
            .collect();
        KnotSpec::new(knots, order, t_lower, t_upper)
    }

    /// Domain taken from observed times, widened by a relative slack of 1e-9
    /// so that every observation is strictly interior.
    pub fn for_times(interior_knots: Vec<f64>, order: usize, times: &[f64]) -> Result<Self> {
        let (lo, hi) = times
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            });
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Input(
                "no finite measurement times to derive a spline domain".into(),
            ));
        }
        let slack = 1e-9 * (hi - lo).max(lo.abs().max(hi.abs())).max(1.0);
        KnotSpec::new(interior_knots, order, lo - slack, hi + slack)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::Input("spline order must be at least 1".into()));
        }
        if !(self.t_lower.is_finite() && self.t_upper.is_finite() && self.t_lower < self.t_upper) {
            return Err(Error::Input(format!(
                "invalid spline domain [{}, {}]",
                self.t_lower, self.t_upper
            )));
        }
        let mut prev = self.t_lower;
        for &k in &self.interior_knots {
            if !(k.is_finite() && k > prev) {
                return Err(Error::Input(format!(
                    "interior knots must be strictly increasing inside ({}, {}); got {k}",
                    self.t_lower, self.t_upper
                )));
            }
            prev = k;
        }
        if prev >= self.t_upper && !self.interior_knots.is_empty() {
            return Err(Error::Input(format!(
                "last interior knot {prev} is not below the upper bound {}",
                self.t_upper
            )));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.order + self.interior_knots.len()
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_lower && t <= self.t_upper
    }

    /// Full clamped knot vector of length `2 * order + interior`.
    pub fn knot_vector(&self) -> Vec<f64> {
        let mut knots = Vec::with_capacity(2 * self.order + self.interior_knots.len());
        knots.extend(std::iter::repeat_n(self.t_lower, self.order));
        knots.extend_from_slice(&self.interior_knots);
        knots.extend(std::iter::repeat_n(self.t_upper, self.order));
        knots
    }

    /// Greville abscissae: knot averages that serve as natural collocation sites.
    pub fn greville_abscissae(&self) -> Vec<f64> {
        let knots = self.knot_vector();
        let degree = self.order - 1;
        (0..self.dimension())
            .map(|i| {
                if degree == 0 {
                    0.5 * (knots[i] + knots[i + 1])
                } else {
                    knots[i + 1..=i + degree].iter().sum::<f64>() / degree as f64
                }
            })
            .collect()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !self.contains(t) {
            return Err(Error::Domain(format!(
                "time {t} outside spline domain [{}, {}]",
                self.t_lower, self.t_upper
            )));
        }
        Ok(())
    }

    /// Index of the first nonzero basis function at `t`, plus the `order`
    /// nonzero values written into `out`.
    fn eval_active(&self, t: f64, out: &mut [f64]) -> usize {
        let order = self.order;
        let m = self.interior_knots.len();
        // piece index in 0..=m, right-continuous at interior knots
        let piece = self.interior_knots.partition_point(|&k| k <= t).min(m);
        let knot = |idx: usize| -> f64 {
            if idx < order {
                self.t_lower
            } else if idx < order + m {
                self.interior_knots[idx - order]
            } else {
                self.t_upper
            }
        };
        let span = order - 1 + piece;
        let degree = order - 1;
        let mut left = [0.0f64; 32];
        let mut right = [0.0f64; 32];
        let (left, right) = if order <= 32 {
            (&mut left[..order], &mut right[..order])
        } else {
            unreachable!("spline order above 32 is not supported")
        };
        out[0] = 1.0;
        for j in 1..=degree {
            left[j] = t - knot(span + 1 - j);
            right[j] = knot(span + j) - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        span - degree
    }

    /// Writes the full basis vector at `t` into `row` (length `dimension()`).
    pub fn eval_into(&self, t: f64, row: &mut [f64]) -> Result<()> {
        self.check_time(t)?;
        if row.len() != self.dimension() {
            return Err(Error::Shape(format!(
                "basis row has length {}, expected {}",
                row.len(),
                self.dimension()
            )));
        }
        if self.order > 32 {
            return Err(Error::Input(
                "spline order above 32 is not supported".into(),
            ));
        }
        let mut active = [0.0f64; 32];
        let first = self.eval_active(t, &mut active[..self.order]);
        row.iter_mut().for_each(|v| *v = 0.0);
        row[first..first + self.order].copy_from_slice(&active[..self.order]);
        Ok(())
    }
}

/// Number of basis functions (`order + interior knots` under clamped boundaries).
pub fn basis_dimension(spec: &KnotSpec) -> usize {
    spec.dimension()
}

pub fn basis_eval(spec: &KnotSpec, t: f64) -> Result<Vec<f64>> {
    let mut row = vec![0.0; spec.dimension()];
    spec.eval_into(t, &mut row)?;
    Ok(row)
}

pub fn spline_value(spec: &KnotSpec, coefficients: &[f64], t: f64) -> Result<f64> {
    if coefficients.len() != spec.dimension() {
        return Err(Error::Shape(format!(
            "{} spline coefficients for a basis of dimension {}",
            coefficients.len(),
            spec.dimension()
        )));
    }
    let basis = basis_eval(spec, t)?;
    Ok(basis.iter().zip(coefficients).map(|(b, c)| b * c).sum())
}
