//! Binary logistic regression by iteratively reweighted least squares.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::exec::Execution;

use super::design::{check_full_rank, DesignMatrix};
use super::special::{chi2_sf, norm_sf};
use super::StatsError;

/// Two-sided 95 % normal quantile.
pub const Z_975: f64 = 1.959963984540054;

/// Rows per accumulation chunk. Partial sums are always combined in chunk
/// order, so sequential and parallel fits agree bit for bit.
const CHUNK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Converged when every |Δβ| falls below this.
    pub tol_beta: f64,
    /// Also converged when |Δloglik| falls below this while |Δβ| < `tol_beta_loose`.
    pub tol_loglik: f64,
    pub tol_beta_loose: f64,
    /// |β| beyond this is taken as (quasi-)complete separation.
    pub separation_threshold: f64,
    pub exec: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 100,
            tol_beta: 1e-8,
            tol_loglik: 1e-10,
            tol_beta_loose: 1e-6,
            separation_threshold: 30.0,
            exec: Execution::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    /// Inverse Fisher information at the optimum, row-major `p × p`.
    pub cov: Vec<f64>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub mcfadden_r2: f64,
    pub llr_stat: f64,
    pub llr_pvalue: f64,
    pub n_obs: usize,
    pub df_model: usize,
    pub df_resid: usize,
    pub converged: bool,
    pub iterations: usize,
    /// ∞-norm of the score at the returned β.
    pub gradient_norm: f64,
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^η) without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-likelihood, score and Fisher information at one β.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    loglik: f64,
    score: Vec<f64>,
    info: Vec<f64>,
}

impl Moments {
    fn zero(p: usize) -> Self {
        Moments { loglik: 0.0, score: vec![0.0; p], info: vec![0.0; p * p] }
    }

    fn add(&mut self, other: &Moments) {
        self.loglik += other.loglik;
        self.score.iter_mut().zip(&other.score).for_each(|(a, b)| *a += b);
        self.info.iter_mut().zip(&other.info).for_each(|(a, b)| *a += b);
    }
}

fn chunk_moments(d: &DesignMatrix, beta: &[f64], rows: std::ops::Range<usize>, with_info: bool) -> Moments {
    let p = d.n_cols();
    let mut m = Moments::zero(p);
    if !with_info {
        m.info.clear();
    }
    for i in rows {
        let x = d.row(i);
        let y = d.y[i];
        let eta = dot(x, beta);
        m.loglik += y * eta - softplus(eta);
        let mu = sigmoid(eta);
        let r = y - mu;
        for (s, xa) in m.score.iter_mut().zip(x) {
            *s += xa * r;
        }
        if with_info {
            let w = mu * (1.0 - mu);
            for a in 0..p {
                if x[a] == 0.0 {
                    continue;
                }
                let wa = w * x[a];
                for (cell, xb) in m.info[a * p..=a * p + a].iter_mut().zip(x) {
                    *cell += wa * xb;
                }
            }
        }
    }
    m
}

fn moments(d: &DesignMatrix, beta: &[f64], exec: Execution, with_info: bool) -> Moments {
    let n = d.n_obs();
    let p = d.n_cols();
    let starts: Vec<usize> = (0..n).step_by(CHUNK_ROWS).collect();
    let parts = exec.map(&starts, |&s| chunk_moments(d, beta, s..(s + CHUNK_ROWS).min(n), with_info));
    let mut total = Moments::zero(p);
    if !with_info {
        total.info.clear();
    }
    for part in &parts {
        total.add(part);
    }
    if with_info {
        for a in 0..p {
            for b in 0..a {
                total.info[b * p + a] = total.info[a * p + b];
            }
        }
    }
    total
}

/// Bernoulli log-likelihood of `d` at `beta`.
pub fn loglik(d: &DesignMatrix, beta: &[f64]) -> f64 {
    moments(d, beta, Execution::Sequential, false).loglik
}

/// Analytic gradient of [`loglik`]: `Xᵀ(y − μ)`.
pub fn score(d: &DesignMatrix, beta: &[f64]) -> Vec<f64> {
    moments(d, beta, Execution::Sequential, false).score
}

/// Log-likelihood of the intercept-only model.
pub fn null_loglik(y: &[f64]) -> Result<f64, StatsError> {
    let n = y.len() as f64;
    let ones: f64 = y.iter().sum();
    if ones <= 0.0 || ones >= n {
        return Err(StatsError::Separation { column: super::design::INTERCEPT.into() });
    }
    let pbar = ones / n;
    Ok(n * (pbar * pbar.ln() + (1.0 - pbar) * (1.0 - pbar).ln()))
}

fn largest_coefficient(beta: &[f64]) -> usize {
    (0..beta.len()).max_by(|&a, &b| beta[a].abs().total_cmp(&beta[b].abs())).unwrap_or(0)
}

pub fn fit_logit(d: &DesignMatrix) -> Result<LogisticFit, StatsError> {
    fit_logit_with(d, &FitOptions::default())
}

pub fn fit_logit_with(d: &DesignMatrix, opts: &FitOptions) -> Result<LogisticFit, StatsError> {
    let p = d.n_cols();
    let loglik_null = null_loglik(&d.y)?;
    check_full_rank(d)?;

    let mut beta = vec![0.0; p];
    let mut m = moments(d, &beta, opts.exec, true);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let info = DMatrix::from_row_slice(p, p, &m.info);
        let chol = info.cholesky().ok_or_else(|| StatsError::Separation {
            column: d.columns[largest_coefficient(&beta)].clone(),
        })?;
        let step = chol.solve(&DVector::from_column_slice(&m.score));
        beta.iter_mut().zip(step.iter()).for_each(|(b, s)| *b += s);
        let j = largest_coefficient(&beta);
        if !beta[j].is_finite() || beta[j].abs() > opts.separation_threshold {
            return Err(StatsError::Separation { column: d.columns[j].clone() });
        }
        let next = moments(d, &beta, opts.exec, true);
        let max_step = step.amax();
        let dll = (next.loglik - m.loglik).abs();
        m = next;
        if max_step < opts.tol_beta || (dll < opts.tol_loglik && max_step < opts.tol_beta_loose) {
            converged = true;
            break;
        }
    }
    let gradient_norm = m.score.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
    if !converged {
        return Err(StatsError::NotConverged { iterations, gradient_norm });
    }

    let info = DMatrix::from_row_slice(p, p, &m.info);
    let cov = info
        .cholesky()
        .ok_or_else(|| StatsError::Separation { column: d.columns[largest_coefficient(&beta)].clone() })?
        .inverse();
    let cov: Vec<f64> = (0..p).flat_map(|a| (0..p).map(move |b| (a, b))).map(|(a, b)| cov[(a, b)]).collect();
    let se: Vec<f64> = (0..p).map(|j| cov[j * p + j].sqrt()).collect();
    let z: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let pvals = z.iter().map(|z| 2.0 * norm_sf(z.abs())).collect();
    let ci_low = beta.iter().zip(&se).map(|(b, s)| b - Z_975 * s).collect();
    let ci_high = beta.iter().zip(&se).map(|(b, s)| b + Z_975 * s).collect();

    let df_model = d.df_model();
    let llr_stat = 2.0 * (m.loglik - loglik_null);
    let llr_pvalue = if df_model == 0 { f64::NAN } else { chi2_sf(llr_stat.max(0.0), df_model as f64)? };
    Ok(LogisticFit {
        columns: d.columns.clone(),
        beta,
        cov,
        se,
        z,
        p: pvals,
        ci_low,
        ci_high,
        loglik: m.loglik,
        loglik_null,
        mcfadden_r2: 1.0 - m.loglik / loglik_null,
        llr_stat,
        llr_pvalue,
        n_obs: d.n_obs(),
        df_model,
        df_resid: d.n_obs() - p,
        converged,
        iterations,
        gradient_norm,
    })
}

/// Renders a probability the way regression tables do: three decimals,
/// with anything below 5e−4 shown as `0.000`.
pub fn format_pvalue(p: f64) -> String {
    if p.is_nan() {
        "nan".into()
    } else if p < 5e-4 {
        "0.000".into()
    } else {
        format!("{p:.3}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldRow {
    pub name: String,
    pub coef: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Per-coefficient Wald inference.
#[derive(Debug, Clone, PartialEq)]
pub struct WaldSummary {
    pub rows: Vec<WaldRow>,
}

pub fn wald_summary(fit: &LogisticFit) -> WaldSummary {
    let rows = (0..fit.beta.len())
        .map(|j| WaldRow {
            name: fit.columns[j].clone(),
            coef: fit.beta[j],
            se: fit.se[j],
            z: fit.z[j],
            p: fit.p[j],
            ci_low: fit.ci_low[j],
            ci_high: fit.ci_high[j],
        })
        .collect();
    WaldSummary { rows }
}

impl WaldSummary {
    pub fn get(&self, name: &str) -> Option<&WaldRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

impl WaldSummary {
    /// Full-precision coefficient table.
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<(), StatsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["variable", "coefficient", "std_err", "z", "p_value", "ci_low", "ci_high"])?;
        for r in &self.rows {
            let nums = [r.coef, r.se, r.z, r.p, r.ci_low, r.ci_high].map(|v| format!("{v:.10e}"));
            w.write_record(std::iter::once(r.name.as_str()).chain(nums.iter().map(String::as_str)))?;
        }
        w.flush().map_err(|e| StatsError::Table(e.to_string()))
    }
}

impl fmt::Display for WaldSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(9);
        writeln!(
            f,
            "{:<width$} {:>11} {:>10} {:>9} {:>8} {:>9} {:>9}",
            "Variable", "Coefficient", "Std.Err.", "z", "P>|z|", "[0.025", "0.975]"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$} {:>11.4} {:>10.3} {:>9.3} {:>8} {:>9.3} {:>9.3}",
                r.name,
                r.coef,
                r.se,
                r.z,
                format_pvalue(r.p),
                r.ci_low,
                r.ci_high
            )?;
        }
        Ok(())
    }
}

impl LogisticFit {
    /// Model-level summary lines followed by the coefficient table.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, k: &str, v: String| s.push_str(&format!("{k:<18}{v:>12}\n"));
        line(&mut s, "Dep. Variable:", "correct".into());
        line(&mut s, "Model:", "Logit".into());
        line(&mut s, "Method:", "MLE".into());
        line(&mut s, "No. Observations:", self.n_obs.to_string());
        line(&mut s, "Df Residuals:", self.df_resid.to_string());
        line(&mut s, "Df Model:", self.df_model.to_string());
        line(&mut s, "Pseudo R-squ.:", format!("{:.4}", self.mcfadden_r2));
        line(&mut s, "Log-Likelihood:", format!("{:.1}", self.loglik));
        line(&mut s, "LL-Null:", format!("{:.1}", self.loglik_null));
        line(&mut s, "LLR p-value:", format_pvalue(self.llr_pvalue));
        line(&mut s, "converged:", if self.converged { "True" } else { "False" }.into());
        line(&mut s, "Covariance Type:", "nonrobust".into());
        s.push('\n');
        s.push_str(&wald_summary(self).to_string());
        s
    }
}
