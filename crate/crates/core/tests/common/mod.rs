#![allow(dead_code)]

use condchart::linalg::RowMatrix;
use condchart::numstat::{RngStream, Variates};
use condchart::quantreg::check_loss;
use nalgebra::{DMatrix, DVector};

/// Minimum objective over all exact fits through `d` of the observations.
pub fn vertex_oracle(x: &RowMatrix, y: &[f64], tau: f64) -> f64 {
    let (n, d) = (x.nrows(), x.ncols());
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let a = DMatrix::from_fn(d, d, |r, c| x.get(idx[r], c));
        let b = DVector::from_iterator(d, idx.iter().map(|&i| y[i]));
        if a.determinant().abs() > 1e-10 {
            if let Some(beta) = a.lu().solve(&b) {
                let obj: f64 = (0..n)
                    .map(|i| {
                        let fit: f64 = (0..d).map(|c| x.get(i, c) * beta[c]).sum();
                        check_loss(y[i] - fit, tau)
                    })
                    .sum();
                best = best.min(obj);
            }
        }
        // next combination
        let mut k = d;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < n - d + k {
                idx[k] += 1;
                for j in k + 1..d {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn random_instance(s: &mut RngStream, n: usize, d: usize) -> (RowMatrix, Vec<f64>) {
    let mut x = RowMatrix::zeros(n, d);
    for i in 0..n {
        x.set(i, 0, 1.0);
        for c in 1..d {
            x.set(i, c, 4.0 * s.uniform() - 2.0);
        }
    }
    let y = (0..n)
        .map(|i| x.get(i, d - 1) * 1.5 + s.normal() * 2.0)
        .collect();
    (x, y)
}

/// Chi-squared distribution function from closed forms: for even `q`,
/// `1 - e^{-y} sum_{k<q/2} y^k/k!`; for odd `q`, `erf(sqrt y)` followed by
/// the recursion `P(a+1, y) = P(a, y) - y^a e^{-y} / Gamma(a+1)`, with `y = x/2`.
pub fn chisq_cdf_oracle(x: f64, q: usize) -> f64 {
    let y = x / 2.0;
    if x <= 0.0 {
        return 0.0;
    }
    if q % 2 == 0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..q / 2 {
            term *= y / k as f64;
            sum += term;
        }
        1.0 - (-y).exp() * sum
    } else {
        let mut p = statrs::function::erf::erf(y.sqrt());
        // term = y^a e^{-y} / Gamma(a+1) for a = 1/2, 3/2, ...
        let mut a = 0.5;
        let mut term = y.sqrt() * (-y).exp() / (0.5 * std::f64::consts::PI.sqrt());
        for _ in 0..(q - 1) / 2 {
            p -= term;
            a += 1.0;
            term *= y / a;
        }
        p
    }
}
