//! BIC-based choice of the number of components and subspace dimensions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ecm::{fit, FitConfig, FitResult};
use crate::metrics::adjusted_rand_index;
use crate::{Error, Result};

/// Free parameters of a `G`-component model in `p` dimensions.
///
/// Per component: `μ` and `β` (`p` each), `φ`, `Ω`, `λ` (`q_g` each), `b`,
/// `ω₀`, `λ₀`, and `p·q_g − q_g(q_g+1)/2` for the orientation of the
/// `q_g`-frame. Plus `G − 1` mixing weights.
pub fn count_parameters(g: usize, p: usize, q_tuple: &[usize]) -> usize {
    let per_component: usize = q_tuple
        .iter()
        .map(|&q| 2 * p + 3 * q + 3 + (p * q - q * (q + 1) / 2))
        .sum();
    g.saturating_sub(1) + per_component
}

/// `2·loglik − n_params·ln n`; larger is better.
pub fn bic_score(loglik: f64, n_params: usize, n: usize) -> f64 {
    2.0 * loglik - n_params as f64 * (n as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// Every multiset of size `G` drawn from the candidates.
    ExhaustiveTuples,
    /// The same `q` for every component.
    CommonQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub g_values: Vec<usize>,
    pub q_candidates: Vec<usize>,
    pub max_configs: usize,
    pub search_mode: SearchMode,
}

impl ModelGrid {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.g_values.is_empty() || self.q_candidates.is_empty() {
            return Err(Error::InvalidParameter("empty model grid".into()));
        }
        if self.g_values.contains(&0) {
            return Err(Error::InvalidParameter("G values must be at least 1".into()));
        }
        if let Some(&q) = self.q_candidates.iter().find(|&&q| q == 0 || q >= p) {
            return Err(Error::InvalidParameter(format!("q candidate {q} outside 1..{p}")));
        }
        if self.max_configs == 0 {
            return Err(Error::InvalidParameter("max_configs must be at least 1".into()));
        }
        Ok(())
    }

    /// Configurations in enumeration order: `G` ascending, then tuples with
    /// entries in non-increasing order, lexicographically from the largest.
    /// At most `max_configs` are returned.
    pub fn configurations(&self) -> Vec<(usize, Vec<usize>)> {
        let mut gs = self.g_values.clone();
        gs.sort_unstable();
        gs.dedup();
        let mut qs = self.q_candidates.clone();
        qs.sort_unstable_by(|a, b| b.cmp(a));
        qs.dedup();
        let mut out = Vec::new();
        for g in gs {
            match self.search_mode {
                SearchMode::CommonQ => {
                    out.extend(qs.iter().map(|&q| (g, vec![q; g])));
                }
                SearchMode::ExhaustiveTuples => {
                    let mut idx = vec![0usize; g];
                    loop {
                        out.push((g, idx.iter().map(|&k| qs[k]).collect()));
                        // next non-decreasing index tuple
                        let Some(pos) = (0..g).rev().find(|&k| idx[k] + 1 < qs.len()) else {
                            break;
                        };
                        let v = idx[pos] + 1;
                        for slot in idx[pos..].iter_mut() {
                            *slot = v;
                        }
                    }
                }
            }
        }
        out.truncate(self.max_configs);
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredFit {
    pub g: usize,
    pub q: Vec<usize>,
    pub bic: f64,
    pub n_params: usize,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFailure {
    pub g: usize,
    pub q: Vec<usize>,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearch {
    /// Successful fits, best BIC first.
    pub ranked: Vec<ScoredFit>,
    pub failures: Vec<GridFailure>,
}

/// Fits every configuration of the grid and ranks the successes by BIC.
/// Ties keep enumeration order.
pub fn grid_search(data: &DMatrix<f64>, grid: &ModelGrid, config: &FitConfig) -> Result<GridSearch> {
    grid.validate(data.ncols())?;
    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for (g, q) in grid.configurations() {
        match fit(data, g, &q, config) {
            Ok(fit) => ranked.push(ScoredFit {
                g,
                bic: fit.bic,
                n_params: fit.n_params,
                q,
                fit,
            }),
            Err(e) => failures.push(GridFailure {
                g,
                q,
                error: e.to_string(),
            }),
        }
    }
    if ranked.is_empty() {
        return Err(Error::FitFailed(format!(
            "all {} grid configurations failed",
            failures.len()
        )));
    }
    ranked.sort_by(|a, b| b.bic.total_cmp(&a.bic));
    Ok(GridSearch { ranked, failures })
}

/// One line of the ranked report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub rank: usize,
    pub g: usize,
    pub q: Vec<usize>,
    pub loglik: f64,
    pub n_params: usize,
    pub bic: f64,
    pub ari: Option<f64>,
    pub converged: bool,
    pub n_iterations: usize,
}

impl GridSearch {
    /// Report rows; ARI is filled in when true labels are supplied.
    pub fn records<L: Ord + Clone>(&self, truth: Option<&[L]>) -> Result<Vec<ReportRecord>> {
        self.ranked
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let ari = truth
                    .map(|t| adjusted_rand_index(t, &s.fit.hard_labels))
                    .transpose()?;
                Ok(ReportRecord {
                    rank: k + 1,
                    g: s.g,
                    q: s.q.clone(),
                    loglik: s.fit.loglik,
                    n_params: s.n_params,
                    bic: s.bic,
                    ari,
                    converged: s.fit.converged,
                    n_iterations: s.fit.n_iterations,
                })
            })
            .collect()
    }
}
