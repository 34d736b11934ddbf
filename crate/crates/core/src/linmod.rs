//! LASSO regression by cyclic coordinate descent.
//!
//! Minimizes `(1/2n)·‖y − b − Zγ‖² + λ·‖γ‖₁` where `Z` holds the features
//! standardized to zero mean and unit (population) variance over the
//! training rows. The intercept `b` is unpenalized. Coefficients are reported
//! on the original feature scale, `β_w = γ_w / σ_w`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    /// Stop once the largest standardized coefficient change in a sweep is
    /// below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            lambda: 0.0,
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

impl LassoConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        LassoConfig {
            lambda,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub feature_means: Vec<f64>,
    /// Population standard deviations; 0 marks a constant (inactive) column.
    pub feature_scales: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    /// Largest coefficient change in the last sweep.
    pub final_change: f64,
    /// Always `"1/(2n) squared error + lambda * l1 on standardized features"`.
    pub parameterization: String,
}

impl LassoModel {
    pub fn n_features(&self) -> usize {
        self.beta.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::Shape {
                expected: self.beta.len(),
                got: x.len(),
            });
        }
        Ok(self.intercept + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    pub fn nonzero(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    /// `(word, β)` rows sorted by `|β|` descending, ties by index.
    pub fn write_coefficients<W: std::io::Write, S: AsRef<str>>(
        &self,
        words: &[S],
        out: W,
    ) -> Result<()> {
        let mut order: Vec<usize> = (0..self.beta.len()).collect();
        order.sort_by(|&a, &b| self.beta[b].abs().total_cmp(&self.beta[a].abs()).then(a.cmp(&b)));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["word", "beta"])?;
        for i in order {
            w.write_record([words[i].as_ref(), &self.beta[i].to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<coefficients>", e))?;
        Ok(())
    }
}

/// Column-major standardized design.
struct Standardized {
    n: usize,
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    y_mean: f64,
    y_centered: Vec<f64>,
}

impl Standardized {
    fn new(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: y.len(),
            });
        }
        let p = x[0].len();
        if let Some(bad) = x.iter().find(|r| r.len() != p) {
            return Err(Error::Shape {
                expected: p,
                got: bad.len(),
            });
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Spec("LASSO inputs must be finite".into()));
        }
        let nf = n as f64;
        let mut cols = Vec::with_capacity(p);
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        for j in 0..p {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / nf;
            let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / nf;
            let sd = var.sqrt();
            let col = if sd > 0.0 {
                x.iter().map(|r| (r[j] - mean) / sd).collect()
            } else {
                vec![0.0; n]
            };
            cols.push(col);
            means.push(mean);
            scales.push(sd);
        }
        let y_mean = y.iter().sum::<f64>() / nf;
        Ok(Standardized {
            n,
            cols,
            means,
            scales,
            y_mean,
            y_centered: y.iter().map(|v| v - y_mean).collect(),
        })
    }

    fn lambda_max(&self) -> f64 {
        let nf = self.n as f64;
        self.cols
            .iter()
            .map(|c| (c.iter().zip(&self.y_centered).map(|(a, b)| a * b).sum::<f64>() / nf).abs())
            .fold(0.0, f64::max)
    }

    fn objective(&self, gamma: &[f64], lambda: f64) -> f64 {
        let mut r = self.y_centered.clone();
        for (c, g) in self.cols.iter().zip(gamma) {
            if *g != 0.0 {
                r.iter_mut().zip(c).for_each(|(ri, zi)| *ri -= zi * g);
            }
        }
        r.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.n as f64)
            + lambda * gamma.iter().map(|g| g.abs()).sum::<f64>()
    }

    /// Coordinate descent from `gamma` (warm start), in place.
    fn descend(&self, gamma: &mut [f64], cfg: &LassoConfig, mut on_sweep: impl FnMut(&[f64])) -> (bool, usize, f64) {
        let nf = self.n as f64;
        let mut r = self.y_centered.clone();
        for (c, g) in self.cols.iter().zip(gamma.iter()) {
            if *g != 0.0 {
                r.iter_mut().zip(c).for_each(|(ri, zi)| *ri -= zi * g);
            }
        }
        let mut change = f64::INFINITY;
        for sweep in 1..=cfg.max_iter {
            change = 0.0;
            for (j, col) in self.cols.iter().enumerate() {
                if self.scales[j] == 0.0 {
                    continue;
                }
                let old = gamma[j];
                let rho = col.iter().zip(&r).map(|(z, ri)| z * ri).sum::<f64>() / nf + old;
                let new = soft_threshold(rho, cfg.lambda);
                if new != old {
                    let delta = new - old;
                    r.iter_mut().zip(col).for_each(|(ri, z)| *ri -= z * delta);
                    gamma[j] = new;
                    change = change.max(delta.abs());
                }
            }
            on_sweep(gamma);
            if change < cfg.tol {
                return (true, sweep, change);
            }
        }
        (false, cfg.max_iter, change)
    }

    fn unwind(&self, gamma: &[f64], cfg: &LassoConfig, status: (bool, usize, f64)) -> LassoModel {
        let beta: Vec<f64> = gamma
            .iter()
            .zip(&self.scales)
            .map(|(g, s)| if *s > 0.0 { g / s } else { 0.0 })
            .collect();
        let intercept = self.y_mean - beta.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        let (converged, sweeps, final_change) = status;
        if !converged {
            log::warn!(
                "LASSO did not converge in {sweeps} sweeps (lambda {}, last change {final_change:e})",
                cfg.lambda
            );
        }
        LassoModel {
            beta,
            intercept,
            lambda: cfg.lambda,
            feature_means: self.means.clone(),
            feature_scales: self.scales.clone(),
            converged,
            sweeps,
            final_change,
            parameterization: "1/(2n) squared error + lambda * l1 on standardized features".into(),
        }
    }
}

pub fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Smallest penalty giving the all-zero model:
/// `max_w |(1/n) Σ z_w (y − ȳ)|` on standardized features.
pub fn lambda_max(x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    Ok(Standardized::new(x, y)?.lambda_max())
}

/// `n` penalties log-spaced from `lambda_max` down to `ratio · lambda_max`.
pub fn lambda_grid(lambda_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..n)
        .map(|i| match i {
            0 => lambda_max,
            _ => (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

pub fn fit_lasso(x: &[Vec<f64>], y: &[f64], cfg: &LassoConfig) -> Result<LassoModel> {
    if !(cfg.lambda >= 0.0) {
        return Err(Error::Spec(format!("lambda must be >= 0, got {}", cfg.lambda)));
    }
    let design = Standardized::new(x, y)?;
    let mut gamma = vec![0.0; design.cols.len()];
    let status = design.descend(&mut gamma, cfg, |_| {});
    Ok(design.unwind(&gamma, cfg, status))
}

/// Fits a decreasing sequence of penalties, each warm-started from the
/// previous solution.
pub fn fit_lasso_path(
    x: &[Vec<f64>],
    y: &[f64],
    lambdas: &[f64],
    base: &LassoConfig,
) -> Result<Vec<LassoModel>> {
    let design = Standardized::new(x, y)?;
    let mut gamma = vec![0.0; design.cols.len()];
    lambdas
        .iter()
        .map(|&lambda| {
            if !(lambda >= 0.0) {
                return Err(Error::Spec(format!("lambda must be >= 0, got {lambda}")));
            }
            let cfg = LassoConfig { lambda, ..*base };
            let status = design.descend(&mut gamma, &cfg, |_| {});
            Ok(design.unwind(&gamma, &cfg, status))
        })
        .collect()
}

/// Objective value after every sweep (standardized problem), for
/// convergence diagnostics.
pub fn objective_trace(x: &[Vec<f64>], y: &[f64], cfg: &LassoConfig) -> Result<Vec<f64>> {
    let design = Standardized::new(x, y)?;
    let mut gamma = vec![0.0; design.cols.len()];
    let mut trace = vec![design.objective(&gamma, cfg.lambda)];
    design.descend(&mut gamma, cfg, |g| trace.push(design.objective(g, cfg.lambda)));
    Ok(trace)
}
