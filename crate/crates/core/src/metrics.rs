//! Agreement between two partitions: contingency tables and the adjusted
//! Rand index of Hubert and Arabie.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::{Error, Result};

/// Counts `n_ij` of items with truth label `rows[i]` and predicted label
/// `cols[j]`. Labels are listed in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Contingency<A, B> {
    pub rows: Vec<A>,
    pub cols: Vec<B>,
    pub counts: Vec<Vec<u64>>,
}

impl<A, B> Contingency<A, B> {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let k = self.cols.len();
        (0..k).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    /// Items off the best one-to-one matching of rows to columns, found by
    /// exhaustive search over assignments (small tables only).
    pub fn misclassified(&self) -> u64 {
        let (r, c) = (self.rows.len(), self.cols.len());
        let k = r.max(c);
        let cell = |i: usize, j: usize| if i < r && j < c { self.counts[i][j] } else { 0 };
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = 0;
        permute(&mut perm, 0, &mut |p| {
            let matched: u64 = (0..k).map(|i| cell(i, p[i])).sum();
            best = best.max(matched);
        });
        self.total() - best
    }
}

fn permute<F: FnMut(&[usize])>(v: &mut Vec<usize>, k: usize, f: &mut F) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("partitions have lengths {a} and {b}")));
    }
    if a == 0 {
        return Err(Error::InvalidParameter("empty partition".into()));
    }
    Ok(())
}

pub fn cross_tabulate<A: Ord + Clone, B: Ord + Clone>(truth: &[A], predicted: &[B]) -> Result<Contingency<A, B>> {
    check_lengths(truth.len(), predicted.len())?;
    let index = |labels: Vec<&A>| -> BTreeMap<A, usize> {
        let mut m = BTreeMap::new();
        for l in labels {
            m.entry(l.clone()).or_insert(0);
        }
        for (k, v) in m.values_mut().enumerate() {
            *v = k;
        }
        m
    };
    let rows = index(truth.iter().collect());
    let mut cols: BTreeMap<B, usize> = BTreeMap::new();
    for l in predicted {
        cols.entry(l.clone()).or_insert(0);
    }
    for (k, v) in cols.values_mut().enumerate() {
        *v = k;
    }
    let mut counts = vec![vec![0u64; cols.len()]; rows.len()];
    for (a, b) in truth.iter().zip(predicted) {
        counts[rows[a]][cols[b]] += 1;
    }
    Ok(Contingency {
        rows: rows.into_keys().collect(),
        cols: cols.into_keys().collect(),
        counts,
    })
}

fn pairs(x: u64) -> i128 {
    let x = x as i128;
    x * (x - 1) / 2
}

/// Adjusted Rand index. Exact integer arithmetic up to the final division;
/// returns 1 when both partitions are trivial in the same way (the index is
/// `0/0` there).
pub fn adjusted_rand_index<A: Ord + Clone, B: Ord + Clone>(truth: &[A], predicted: &[B]) -> Result<f64> {
    let table = cross_tabulate(truth, predicted)?;
    Ok(ari_from_table(&table))
}

pub fn ari_from_table<A, B>(table: &Contingency<A, B>) -> f64 {
    let n2 = pairs(table.total());
    let sij: i128 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let sa: i128 = table.row_sums().into_iter().map(pairs).sum();
    let sb: i128 = table.col_sums().into_iter().map(pairs).sum();
    let num = 2 * (sij * n2 - sa * sb);
    let den = (sa + sb) * n2 - 2 * sa * sb;
    if den == 0 {
        return 1.0;
    }
    num as f64 / den as f64
}
