//! Linear quantile regression by an exact simplex method.
//!
//! The check-loss problem `min_b sum_i rho_tau(y_i - x_i'b)` is the linear
//! program with positive and negative residual parts as slacks. Its vertices
//! are the coefficient vectors interpolating `d` observations (the basis).
//! Each iteration prices the `2d` edges leaving the current vertex (release
//! one basic observation upward or downward), and walks along the cheapest
//! descending edge with an exact line search over the residual sign changes,
//! in the manner of Barrodale and Roberts. A step of length zero switches
//! edge selection to Bland's rule until the objective decreases again.

use crate::error::{Error, Result};
use crate::linalg::{dot, RowMatrix};

/// `rho_tau(r) = r * (tau - I(r < 0))`.
pub fn check_loss(r: f64, tau: f64) -> f64 {
    if r < 0.0 {
        r * (tau - 1.0)
    } else {
        r * tau
    }
}

/// Subgradient of the check loss, `tau - I(r <= 0)`.
pub fn psi(r: f64, tau: f64) -> f64 {
    if r <= 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

pub fn objective(design: &RowMatrix, response: &[f64], coefficients: &[f64], tau: f64) -> f64 {
    (0..design.nrows())
        .map(|i| check_loss(response[i] - dot(design.row(i), coefficients), tau))
        .sum()
}

#[derive(Debug, Clone, Copy)]
pub struct QrProblem<'a> {
    pub design: &'a RowMatrix,
    pub response: &'a [f64],
    pub tau: f64,
}

impl<'a> QrProblem<'a> {
    pub fn new(design: &'a RowMatrix, response: &'a [f64], tau: f64) -> Result<Self> {
        let problem = QrProblem {
            design,
            response,
            tau,
        };
        problem.validate()?;
        Ok(problem)
    }

    fn validate(&self) -> Result<()> {
        let (n, d) = (self.design.nrows(), self.design.ncols());
        if self.response.len() != n {
            return Err(Error::Shape(format!(
                "{} responses for {n} design rows",
                self.response.len()
            )));
        }
        if d == 0 || n < d {
            return Err(Error::Input(format!("need N >= d >= 1, got N={n}, d={d}")));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Input(format!("tau = {} is not in (0, 1)", self.tau)));
        }
        if !self.design.is_finite() || !self.response.iter().all(|v| v.is_finite()) {
            return Err(Error::Input(
                "non-finite entries in quantile regression input".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QrSolution {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    /// Residuals below `-zero_tol`.
    pub n_neg: usize,
    /// Residuals with magnitude at most `zero_tol`.
    pub n_zero: usize,
    /// Set when the design is rank deficient; dependent columns get zero
    /// coefficients.
    pub degenerate: bool,
    /// Observations interpolated by the final vertex, ascending.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

/// Residual magnitude treated as zero when classifying signs.
pub fn zero_tol(response: &[f64]) -> f64 {
    1e-10 * (1.0 + response.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

pub fn solve(problem: &QrProblem<'_>) -> Result<QrSolution> {
    problem.validate()?;
    let design = problem.design;
    let d = design.ncols();

    let independent = independent_columns(design);
    let degenerate = independent.len() < d;
    if independent.is_empty() {
        return Err(Error::Numerical("design has no nonzero column".into()));
    }
    let reduced;
    let work = if degenerate {
        reduced = design.select_columns(&independent);
        &reduced
    } else {
        design
    };

    let mut simplex = Simplex::start(work, problem.response, problem.tau)?;
    simplex.run()?;
    let (coef_reduced, basis, iterations) = simplex.finish()?;

    let mut coefficients = vec![0.0; d];
    for (c, &col) in coef_reduced.iter().zip(&independent) {
        coefficients[col] = *c;
    }
    let tol = zero_tol(problem.response);
    let mut n_neg = 0;
    let mut n_zero = 0;
    let mut total = 0.0;
    for i in 0..design.nrows() {
        let r = problem.response[i] - dot(design.row(i), &coefficients);
        total += check_loss(r, problem.tau);
        if r.abs() <= tol {
            n_zero += 1;
        } else if r < 0.0 {
            n_neg += 1;
        }
    }
    let mut basis = basis;
    basis.sort_unstable();
    Ok(QrSolution {
        coefficients,
        objective: total,
        n_neg,
        n_zero,
        degenerate,
        basis,
        iterations,
    })
}

/// Leading set of linearly independent columns, by Gaussian elimination with
/// partial pivoting; a column is dependent when its largest remaining entry
/// falls below 1e-9 of its original scale.
pub fn independent_columns(design: &RowMatrix) -> Vec<usize> {
    let (n, d) = (design.nrows(), design.ncols());
    let mut work = design.clone();
    let mut used = vec![false; n];
    let mut keep = Vec::with_capacity(d);
    for col in 0..d {
        let scale = (0..n).fold(0.0f64, |m, i| m.max(design.get(i, col).abs()));
        if scale == 0.0 {
            continue;
        }
        let mut best = (0.0f64, usize::MAX);
        for i in 0..n {
            if used[i] {
                continue;
            }
            let v = work.get(i, col).abs();
            if v > best.0 {
                best = (v, i);
            }
        }
        if best.1 == usize::MAX || best.0 <= 1e-9 * scale {
            continue;
        }
        let prow = best.1;
        used[prow] = true;
        let pivot_row: Vec<f64> = work.row(prow).to_vec();
        let pv = pivot_row[col];
        for i in 0..n {
            if used[i] {
                continue;
            }
            let f = work.get(i, col) / pv;
            if f != 0.0 {
                let row = work.row_mut(i);
                for c in col..d {
                    row[c] -= f * pivot_row[c];
                }
            }
        }
        keep.push(col);
    }
    keep
}

struct Simplex<'a> {
    x: &'a RowMatrix,
    y: &'a [f64],
    tau: f64,
    n: usize,
    d: usize,
    /// basic observation per basis slot
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// inverse of the basic rows, row-major d x d
    binv: Vec<f64>,
    beta: Vec<f64>,
    resid: Vec<f64>,
    /// residual side for nonbasic observations (true: upper, r >= 0)
    positive: Vec<bool>,
    row_scale: Vec<f64>,
    iterations: usize,
    bland: bool,
}

impl<'a> Simplex<'a> {
    fn start(x: &'a RowMatrix, y: &'a [f64], tau: f64) -> Result<Self> {
        let (n, d) = (x.nrows(), x.ncols());
        let basis = initial_basis(x, y, tau)?;
        let mut in_basis = vec![false; n];
        for &b in &basis {
            in_basis[b] = true;
        }
        let row_scale = (0..n)
            .map(|i| x.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect();
        let mut s = Simplex {
            x,
            y,
            tau,
            n,
            d,
            basis,
            in_basis,
            binv: vec![0.0; d * d],
            beta: vec![0.0; d],
            resid: vec![0.0; n],
            positive: vec![true; n],
            row_scale,
            iterations: 0,
            bland: false,
        };
        s.refactor()?;
        for i in 0..n {
            s.positive[i] = s.resid[i] >= 0.0;
        }
        Ok(s)
    }

    /// Recomputes the basis inverse, coefficients and residuals from scratch.
    fn refactor(&mut self) -> Result<()> {
        let d = self.d;
        let rows = self.x.select_rows(&self.basis);
        let inv = rows
            .to_dmatrix()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("simplex basis became singular".into()))?;
        for i in 0..d {
            for j in 0..d {
                self.binv[i * d + j] = inv[(i, j)];
            }
        }
        for k in 0..d {
            self.beta[k] = (0..d)
                .map(|h| self.binv[k * d + h] * self.y[self.basis[h]])
                .sum();
        }
        for i in 0..self.n {
            self.resid[i] = if self.in_basis[i] {
                0.0
            } else {
                self.y[i] - dot(self.x.row(i), &self.beta)
            };
        }
        Ok(())
    }

    fn run(&mut self) -> Result<()> {
        let (n, d, tau) = (self.n, self.d, self.tau);
        let max_iter = 50 * (n + d) + 1000;
        let mut grad = vec![0.0; d];
        let mut price = vec![0.0; d];
        let mut dir = vec![0.0; d];
        let mut slope_of = vec![0.0; n];
        let mut breaks: Vec<(f64, usize)> = Vec::with_capacity(n);
        loop {
            if self.iterations >= max_iter {
                return Err(Error::Numerical(format!(
                    "quantile regression simplex did not converge in {max_iter} iterations"
                )));
            }
            // gradient of the objective w.r.t. beta from nonbasic residual sides
            grad.iter_mut().for_each(|g| *g = 0.0);
            for i in 0..n {
                if self.in_basis[i] {
                    continue;
                }
                let c = if self.positive[i] { -tau } else { 1.0 - tau };
                for (g, xv) in grad.iter_mut().zip(self.x.row(i)) {
                    *g += c * xv;
                }
            }
            for (h, p) in price.iter_mut().enumerate() {
                *p = (0..d).map(|k| grad[k] * self.binv[k * d + h]).sum();
            }
            // edge (h, +1) pushes basic residual h negative, (h, -1) positive
            let mut entering: Option<(usize, f64, f64)> = None;
            let mut order: Vec<usize> = (0..d).collect();
            if self.bland {
                order.sort_by_key(|&h| self.basis[h]);
            }
            for &h in &order {
                let tol = 1e-10 * (1.0 + price[h].abs());
                for (sigma, rate) in [(1.0, price[h] + (1.0 - tau)), (-1.0, -price[h] + tau)] {
                    if rate < -tol {
                        let better = match entering {
                            None => true,
                            Some((_, _, best)) => !self.bland && rate < best,
                        };
                        if better {
                            entering = Some((h, sigma, rate));
                        }
                    }
                }
                if self.bland && entering.is_some() {
                    break;
                }
            }
            let Some((h, sigma, rate)) = entering else {
                return Ok(());
            };
            self.iterations += 1;

            for k in 0..d {
                dir[k] = sigma * self.binv[k * d + h];
            }
            let dir_norm: f64 = dir.iter().map(|v| v.abs()).sum();
            breaks.clear();
            for i in 0..n {
                if self.in_basis[i] {
                    continue;
                }
                let a = dot(self.x.row(i), &dir);
                slope_of[i] = a;
                let thr = 1e-12 * self.row_scale[i] * dir_norm;
                if self.positive[i] {
                    if a > thr {
                        breaks.push((self.resid[i].max(0.0) / a, i));
                    }
                } else if a < -thr {
                    breaks.push((self.resid[i].min(0.0) / a, i));
                }
            }
            breaks.sort_unstable_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));

            let mut slope = rate;
            let mut stop = None;
            for (pos, &(_, i)) in breaks.iter().enumerate() {
                slope += slope_of[i].abs();
                if slope >= 0.0 {
                    stop = Some(pos);
                    break;
                }
            }
            let stop = match stop {
                Some(pos) => pos,
                None if !breaks.is_empty() => breaks.len() - 1,
                None => {
                    return Err(Error::Numerical(
                        "quantile regression objective unbounded along a simplex edge".into(),
                    ))
                }
            };
            let (step, k) = breaks[stop];
            for &(_, i) in &breaks[..stop] {
                self.positive[i] = !self.positive[i];
            }
            self.bland = step == 0.0;

            for (b, dv) in self.beta.iter_mut().zip(&dir) {
                *b += step * dv;
            }
            if step != 0.0 {
                for i in 0..n {
                    if !self.in_basis[i] {
                        self.resid[i] -= step * slope_of[i];
                    }
                }
            }
            let leaving = self.basis[h];
            self.in_basis[leaving] = false;
            self.resid[leaving] = -step * sigma;
            self.positive[leaving] = sigma < 0.0;
            self.in_basis[k] = true;
            self.resid[k] = 0.0;
            self.basis[h] = k;

            // rank-one update of the inverse for row h replaced by x_k
            let xk = self.x.row(k);
            let col: Vec<f64> = (0..d).map(|r| self.binv[r * d + h]).collect();
            let w: Vec<f64> = (0..d)
                .map(|c| (0..d).map(|r| xk[r] * self.binv[r * d + c]).sum())
                .collect();
            let wh = w[h];
            for r in 0..d {
                for c in 0..d {
                    let e = if c == h { 1.0 } else { 0.0 };
                    self.binv[r * d + c] -= col[r] * (w[c] - e) / wh;
                }
            }
            if self.iterations % 64 == 0 {
                self.refactor()?;
            }
        }
    }

    fn finish(mut self) -> Result<(Vec<f64>, Vec<usize>, usize)> {
        self.refactor()?;
        let rows = self.x.select_rows(&self.basis).to_dmatrix();
        let rhs = nalgebra::DVector::from_iterator(self.d, self.basis.iter().map(|&b| self.y[b]));
        let beta = rows
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("final simplex basis is singular".into()))?;
        Ok((beta.iter().copied().collect(), self.basis, self.iterations))
    }
}

/// Starting vertex: observations closest to the tau-shifted least-squares
/// fit, accepted greedily while they stay well conditioned.
fn initial_basis(x: &RowMatrix, y: &[f64], tau: f64) -> Result<Vec<usize>> {
    let (n, d) = (x.nrows(), x.ncols());
    let xm = x.to_dmatrix();
    let ym = nalgebra::DVector::from_column_slice(y);
    let ls = xm
        .clone()
        .svd(true, true)
        .solve(&ym, 1e-12)
        .map_err(|e| Error::Numerical(format!("least-squares start failed: {e}")))?;
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - dot(x.row(i), ls.as_slice()))
        .collect();
    let mut sorted = resid.clone();
    sorted.sort_by(f64::total_cmp);
    let shift = crate::numstat::empirical_quantile_sorted(&sorted, tau)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        (resid[a] - shift)
            .abs()
            .total_cmp(&(resid[b] - shift).abs())
            .then(a.cmp(&b))
    });

    for threshold in [0.1, 1e-3, 1e-8] {
        let mut accepted: Vec<usize> = Vec::with_capacity(d);
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(d);
        for &i in &order {
            let row = x.row(i);
            let norm = dot(row, row).sqrt();
            if norm == 0.0 {
                continue;
            }
            let mut v = row.to_vec();
            for q in &ortho {
                let c = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
            let rn = dot(&v, &v).sqrt();
            if rn > threshold * norm {
                v.iter_mut().for_each(|a| *a /= rn);
                ortho.push(v);
                accepted.push(i);
                if accepted.len() == d {
                    return Ok(accepted);
                }
            }
        }
    }
    Err(Error::Numerical(
        "could not find a nonsingular starting basis".into(),
    ))
}
