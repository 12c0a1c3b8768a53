//! Second-order approximations of the optimal length and residual diagnostics.
//!
//! `approx(n) = n (1 - ε) H - √(n V) f_G(ε)` with `V = V_c` under the maximum
//! error criterion and `V = V_u` under the average one. The remainders are only
//! known up to unspecified constants, so they are reported, not asserted.

use rayon::prelude::*;
use serde::Serialize;

use crate::coding::{BlockAnalysis, Criterion};
use crate::error::{Error, Result};
use crate::gaussian::f_g;
use crate::lift::{composition_count, Budget, Compositions};
use crate::mass::Mass;
use crate::source::JointSource;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondOrderEstimate {
    pub n: u32,
    pub eps: f64,
    pub criterion: Criterion,
    /// `n (1 - ε) H`.
    pub first_order: f64,
    /// `√(n V) f_G(ε)`, nonnegative.
    pub dispersion_term: f64,
    pub approx: f64,
    pub warnings: Vec<String>,
}

pub fn second_order<P: Mass>(src: &JointSource<P>, n: u32, eps: f64, criterion: Criterion) -> Result<SecondOrderEstimate> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::validation("eps", format!("must lie in [0, 1], got {eps}")));
    }
    let m = src.measures();
    let v = match criterion {
        Criterion::Max => m.v_c,
        Criterion::Avg => m.v_u,
    };
    let mut warnings = Vec::new();
    if criterion == Criterion::Max {
        let flat: Vec<&str> = m.per_y.iter().filter(|c| c.variance == 0.0).map(|c| c.y.as_str()).collect();
        if !flat.is_empty() {
            warnings.push(format!(
                "conditional varentropy vanishes for y in {{{}}}; with finite side-information the expansion still holds",
                flat.join(", ")
            ));
        }
    }
    let nf = f64::from(n);
    let first_order = nf * (1.0 - eps) * m.h;
    let dispersion_term = (nf * v).sqrt() * f_g(eps)?;
    Ok(SecondOrderEstimate {
        n,
        eps,
        criterion,
        first_order,
        dispersion_term,
        approx: first_order - dispersion_term,
        warnings,
    })
}

/// `E[√(Σ_i 𝓥(X | Y_i))]` over side-information types; at most `√(n V_c)`.
pub fn exact_dispersion_mean<P: Mass>(src: &JointSource<P>, n: u32, budget: Budget) -> Result<f64> {
    let required = composition_count(n, src.y_len());
    if required > u128::from(budget.max_types) {
        return Err(Error::BudgetExceeded {
            required,
            budget: budget.max_types,
        });
    }
    let m = src.measures();
    let v: Vec<f64> = m.per_y.iter().map(|c| c.variance).collect();
    let py: Vec<f64> = src.y_marginal().iter().map(Mass::to_f64).collect();
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += f64::from(k).ln();
            Some(*acc)
        }))
        .collect();
    let mut total = 0.0;
    for counts in Compositions::new(n, src.y_len()) {
        let mut ln_w = ln_fact[n as usize];
        let mut sum_v = 0.0;
        for ((&k, &p), &vy) in counts.iter().zip(&py).zip(&v) {
            ln_w += f64::from(k) * p.ln() - ln_fact[k as usize];
            sum_v += f64::from(k) * vy;
        }
        if ln_w.is_finite() {
            total += ln_w.exp() * sum_v.sqrt();
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub n: u32,
    pub eps: f64,
    pub criterion: Criterion,
    /// `None` when the blocklength exceeds the type budget.
    pub exact: Option<f64>,
    pub first_order: f64,
    pub dispersion_term: f64,
    pub approx: f64,
    /// `exact - approx`.
    pub residual: Option<f64>,
    /// `|residual| / log2 n`, undefined at `n = 1`.
    pub residual_per_log_n: Option<f64>,
    pub residual_per_sqrt_n: Option<f64>,
    /// Matching ε-cutoff entropy of the n-letter source.
    pub cutoff_entropy: Option<f64>,
    /// Cutoff entropy minus `n (1 - ε) H - D f_G(ε)`, with `D` the exact
    /// dispersion mean under `max` and `√(n V_u)` under `avg`.
    pub cutoff_residual: Option<f64>,
    pub exceeds_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
    /// Ceiling on `|residual| / log2 n`, if one was supplied.
    pub threshold: Option<f64>,
    /// Some blocklength exceeded the type budget.
    pub partial: bool,
}

pub const RESIDUAL_CSV_HEADER: &str =
    "n,eps,criterion,exact,first_order,dispersion_term,approx,residual,residual_per_log_n,residual_per_sqrt_n";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl ResidualReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESIDUAL_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.n,
                r.eps,
                r.criterion,
                cell(r.exact),
                r.first_order,
                r.dispersion_term,
                r.approx,
                cell(r.residual),
                cell(r.residual_per_log_n),
                cell(r.residual_per_sqrt_n),
            ));
        }
        out
    }

    pub fn max_residual_per_log_n(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.residual_per_log_n).reduce(f64::max)
    }
}

fn scan_rows<P: Mass>(
    src: &JointSource<P>,
    n: u32,
    eps_list: &[P],
    criteria: &[Criterion],
    budget: Budget,
    threshold: Option<f64>,
) -> Result<Vec<ResidualRow>> {
    let block = match BlockAnalysis::new(src, n, budget) {
        Ok(b) => Some(b),
        Err(Error::BudgetExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    let m = src.measures();
    let mut rows = Vec::with_capacity(eps_list.len() * criteria.len());
    for eps in eps_list {
        for &criterion in criteria {
            let est = second_order(src, n, eps.to_f64(), criterion)?;
            let (exact, cutoff_entropy) = match &block {
                Some(b) => (Some(b.lstar(eps, criterion)?.to_f64()), Some(b.cutoff_entropy(eps, criterion)?)),
                None => (None, None),
            };
            let dispersion = match criterion {
                Criterion::Max => exact_dispersion_mean(src, n, budget)?,
                Criterion::Avg => (f64::from(n) * m.v_u).sqrt(),
            };
            let lemma_form = est.first_order - dispersion * f_g(eps.to_f64())?;
            let residual = exact.map(|e| e - est.approx);
            let log_n = f64::from(n).log2();
            let residual_per_log_n = residual.filter(|_| n > 1).map(|r| r.abs() / log_n);
            rows.push(ResidualRow {
                n,
                eps: eps.to_f64(),
                criterion,
                exact,
                first_order: est.first_order,
                dispersion_term: est.dispersion_term,
                approx: est.approx,
                residual,
                residual_per_log_n,
                residual_per_sqrt_n: residual.map(|r| r.abs() / f64::from(n).sqrt()),
                cutoff_entropy,
                cutoff_residual: cutoff_entropy.map(|c| c - lemma_form),
                exceeds_threshold: matches!((residual_per_log_n, threshold), (Some(r), Some(t)) if r > t),
            });
        }
    }
    Ok(rows)
}

/// Exact `L*` against the second-order approximation at every `n`.
pub fn residual_scan<P: Mass>(
    src: &JointSource<P>,
    eps: &P,
    criterion: Criterion,
    n_list: &[u32],
    budget: Budget,
    threshold: Option<f64>,
) -> Result<ResidualReport> {
    residual_sweep(src, std::slice::from_ref(eps), &[criterion], n_list, budget, threshold)
}

/// [`residual_scan`] over several error levels and criteria, sharing the
/// n-letter analysis; rows are ordered by `(n, eps, criterion)` in the order
/// the inputs list them.
pub fn residual_sweep<P: Mass>(
    src: &JointSource<P>,
    eps_list: &[P],
    criteria: &[Criterion],
    n_list: &[u32],
    budget: Budget,
    threshold: Option<f64>,
) -> Result<ResidualReport> {
    let per_n: Vec<Vec<ResidualRow>> = n_list
        .par_iter()
        .map(|&n| scan_rows(src, n, eps_list, criteria, budget, threshold))
        .collect::<Result<_>>()?;
    let rows: Vec<ResidualRow> = per_n.into_iter().flatten().collect();
    Ok(ResidualReport {
        partial: rows.iter().any(|r| r.exact.is_none()),
        rows,
        threshold,
    })
}
