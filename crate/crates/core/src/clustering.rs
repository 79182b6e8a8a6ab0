//! Ward agglomerative clustering of regional R0 trajectories.
//!
//! Merge costs are the increase in within-cluster sum of squares,
//! `n_a n_b / (n_a + n_b) * |c_a - c_b|^2`, maintained with the
//! Lance–Williams recurrence. Fusion heights are reported on the distance
//! scale, `sqrt(cost)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::EstimateSeries;
use crate::numfmt::g6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("need at least 2 regions, got {0}")]
    TooFewRegions(usize),
    #[error("region {0} has no defined R0 values")]
    NoDefinedValues(String),
    #[error("no date has defined R0 for every region; try the `pad` alignment")]
    EmptyIntersection,
    #[error("non-finite value in row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("rows have unequal lengths")]
    Ragged,
    #[error("cluster count {k} out of range 1..={n}")]
    BadClusterCount { k: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignPolicy {
    /// Dates on which every region has a defined value.
    #[default]
    Intersect,
    /// All dates; gaps take the nearest earlier value, leading gaps the first
    /// defined value.
    Pad,
}

impl FromStr for AlignPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intersect" => Ok(AlignPolicy::Intersect),
            "pad" => Ok(AlignPolicy::Pad),
            other => Err(format!("unknown alignment `{other}`")),
        }
    }
}

/// One row of R0 values per region over a common set of dates.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeriesMatrix {
    pub regions: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub rows: Vec<Vec<f64>>,
}

/// Aligns the robust R0 series of several regions.
pub fn align(
    estimates: &[(&str, &EstimateSeries)],
    policy: AlignPolicy,
) -> Result<AlignedSeriesMatrix, ClusterError> {
    if estimates.len() < 2 {
        return Err(ClusterError::TooFewRegions(estimates.len()));
    }
    let defined: Vec<BTreeMap<NaiveDate, f64>> = estimates
        .iter()
        .map(|(_, e)| {
            e.dates
                .iter()
                .zip(&e.r0_robust)
                .filter_map(|(d, v)| v.map(|v| (*d, v)))
                .collect::<BTreeMap<_, _>>()
        })
        .collect();
    for ((name, _), m) in estimates.iter().zip(&defined) {
        if m.is_empty() {
            return Err(ClusterError::NoDefinedValues(name.to_string()));
        }
    }

    let dates: Vec<NaiveDate> = match policy {
        AlignPolicy::Intersect => {
            let mut common: BTreeSet<NaiveDate> = defined[0].keys().copied().collect();
            for m in &defined[1..] {
                common.retain(|d| m.contains_key(d));
            }
            common.into_iter().collect()
        }
        AlignPolicy::Pad => estimates
            .iter()
            .flat_map(|(_, e)| e.dates.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    if dates.is_empty() {
        return Err(ClusterError::EmptyIntersection);
    }

    let rows = defined
        .iter()
        .map(|m| {
            let first = *m.values().next().expect("non-empty");
            let mut last = first;
            dates
                .iter()
                .map(|d| {
                    if let Some(v) = m.get(d) {
                        last = *v;
                    }
                    last
                })
                .collect()
        })
        .collect();
    Ok(AlignedSeriesMatrix {
        regions: estimates.iter().map(|(n, _)| n.to_string()).collect(),
        dates,
        rows,
    })
}

/// One agglomeration step. Leaves are ids `0..n`; the cluster formed at
/// step `k` gets id `n + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ward clustering of the matrix rows. Ties go to the smallest `(a, b)`
/// id pair.
pub fn ward_cluster(matrix: &AlignedSeriesMatrix) -> Result<Dendrogram, ClusterError> {
    let n = matrix.rows.len();
    if n < 2 {
        return Err(ClusterError::TooFewRegions(n));
    }
    let width = matrix.rows[0].len();
    for (row, values) in matrix.rows.iter().enumerate() {
        if values.len() != width {
            return Err(ClusterError::Ragged);
        }
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(ClusterError::NonFinite { row, col });
        }
    }

    let total = 2 * n - 1;
    let mut cost = vec![vec![f64::NAN; total]; total];
    for (i, a) in matrix.rows.iter().enumerate() {
        for (j, b) in matrix.rows.iter().enumerate().skip(i + 1) {
            let c = 0.5 * sq_dist(a, b);
            cost[i][j] = c;
            cost[j][i] = c;
        }
    }
    let mut size = vec![1usize; total];
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                if cost[a][b] < best.0 {
                    best = (cost[a][b], a, b);
                }
            }
        }
        let (c_ab, a, b) = best;
        let new = n + step;
        size[new] = size[a] + size[b];
        active.retain(|&k| k != a && k != b);
        for &k in &active {
            let (na, nb, nk) = (size[a] as f64, size[b] as f64, size[k] as f64);
            let c = ((na + nk) * cost[k][a] + (nb + nk) * cost[k][b] - nk * c_ab) / (na + nb + nk);
            cost[k][new] = c;
            cost[new][k] = c;
        }
        active.push(new);
        merges.push(Merge { a, b, height: c_ab.max(0.0).sqrt(), size: size[new] });
    }
    Ok(Dendrogram { leaves: matrix.regions.clone(), merges })
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    fn height_of(&self, id: usize) -> f64 {
        if id < self.n_leaves() {
            0.0
        } else {
            self.merges[id - self.n_leaves()].height
        }
    }

    /// Leaf ids under cluster `id`.
    pub fn members(&self, id: usize) -> Vec<usize> {
        let n = self.n_leaves();
        let mut stack = vec![id];
        let mut out = Vec::new();
        while let Some(c) = stack.pop() {
            if c < n {
                out.push(c);
            } else {
                let m = &self.merges[c - n];
                stack.push(m.b);
                stack.push(m.a);
            }
        }
        out.sort_unstable();
        out
    }

    /// Newick text with branch lengths equal to height differences.
    pub fn to_newick(&self) -> String {
        let n = self.n_leaves();
        let root = n + self.merges.len() - 1;
        let mut out = String::new();
        self.write_newick(root, &mut out);
        out.push_str(";\n");
        out
    }

    fn write_newick(&self, id: usize, out: &mut String) {
        let n = self.n_leaves();
        if id < n {
            out.push_str(&self.leaves[id]);
            return;
        }
        let m = &self.merges[id - n];
        out.push('(');
        for (k, child) in [m.a, m.b].into_iter().enumerate() {
            if k == 1 {
                out.push(',');
            }
            self.write_newick(child, out);
            let _ = write!(out, ":{}", g6(m.height - self.height_of(child)));
        }
        out.push(')');
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dendrogram serializes") + "\n"
    }
}

/// Flat clustering into `k` groups by undoing the last `k - 1` merges.
/// Labels are numbered in order of each group's smallest leaf name.
pub fn cut(dendrogram: &Dendrogram, k: usize) -> Result<BTreeMap<String, usize>, ClusterError> {
    let n = dendrogram.n_leaves();
    if k == 0 || k > n {
        return Err(ClusterError::BadClusterCount { k, n });
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    for (step, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        let new = n + step;
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        parent[ra] = new;
        parent[rb] = new;
    }
    let mut groups: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        groups.entry(root).or_default().push(&dendrogram.leaves[leaf]);
    }
    let mut ordered: Vec<Vec<&str>> = groups.into_values().collect();
    for g in ordered.iter_mut() {
        g.sort_unstable();
    }
    ordered.sort_by(|x, y| x[0].cmp(y[0]));
    let mut labels = BTreeMap::new();
    for (label, g) in ordered.into_iter().enumerate() {
        for name in g {
            labels.insert(name.to_string(), label);
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sird::SirdParams;
    use chrono::Duration;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: Vec<Vec<f64>>) -> AlignedSeriesMatrix {
        let names = (0..rows.len()).map(|k| format!("R{k:02}")).collect();
        let width = rows[0].len();
        let start = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
        AlignedSeriesMatrix {
            regions: names,
            dates: (0..width).map(|k| start + Duration::days(k as i64)).collect(),
            rows,
        }
    }

    fn est(start_offset: i64, end_offset: i64, base: f64) -> EstimateSeries {
        let start = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
        let dates: Vec<NaiveDate> = (start_offset..=end_offset).map(|k| start + Duration::days(k)).collect();
        let n = dates.len();
        EstimateSeries {
            region: None,
            r0_robust: (0..n).map(|k| Some(base + k as f64)).collect(),
            r0_raw: vec![None; n],
            raw: vec![SirdParams::ZERO; n],
            smoothed: vec![SirdParams::ZERO; n],
            rss: vec![0.0; n],
            saturated: vec![false; n],
            failures: vec![],
            dates,
        }
    }

    /// Recomputes every pairwise Ward cost from the raw rows at each step.
    fn brute_force(rows: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
        let n = rows.len();
        let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|k| (k, vec![k])).collect();
        let centroid = |m: &[usize]| {
            let mut c = vec![0.0; rows[0].len()];
            for &i in m {
                for (acc, v) in c.iter_mut().zip(&rows[i]) {
                    *acc += v;
                }
            }
            c.iter_mut().for_each(|v| *v /= m.len() as f64);
            c
        };
        let mut out = Vec::new();
        for step in 0..n - 1 {
            let mut best = (f64::INFINITY, 0, 0);
            for x in 0..clusters.len() {
                for y in x + 1..clusters.len() {
                    let (ia, ma) = &clusters[x];
                    let (ib, mb) = &clusters[y];
                    let (na, nb) = (ma.len() as f64, mb.len() as f64);
                    let cost = na * nb / (na + nb) * sq_dist(&centroid(ma), &centroid(mb));
                    let key = ((*ia).min(*ib), (*ia).max(*ib));
                    if cost < best.0 || (cost == best.0 && key < (best.1, best.2)) {
                        best = (cost, key.0, key.1);
                    }
                }
            }
            let (cost, a, b) = best;
            let mut members = Vec::new();
            clusters.retain(|(id, m)| {
                if *id == a || *id == b {
                    members.extend(m);
                    false
                } else {
                    true
                }
            });
            clusters.push((n + step, members));
            out.push((a, b, cost.sqrt()));
        }
        out
    }

    #[test]
    fn identical_rows_merge_first_at_zero() {
        let m = matrix(vec![vec![1.0, 2.0], vec![5.0, 1.0], vec![1.0, 2.0]]);
        let d = ward_cluster(&m).unwrap();
        assert_eq!((d.merges[0].a, d.merges[0].b, d.merges[0].height), (0, 2, 0.0));
        let labels = cut(&d, 2).unwrap();
        assert_eq!(labels["R00"], labels["R02"]);
        assert_ne!(labels["R00"], labels["R01"]);
    }

    #[test]
    fn two_singletons_height() {
        let m = matrix(vec![vec![0.0, 0.0], vec![3.0, 4.0]]);
        let d = ward_cluster(&m).unwrap();
        assert_eq!(d.merges.len(), 1);
        assert!((d.merges[0].height - 5.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(d.merges[0].size, 2);
    }

    #[test]
    fn matches_brute_force_on_random_6x10() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..10).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
        let d = ward_cluster(&matrix(rows.clone())).unwrap();
        for (m, (a, b, h)) in d.merges.iter().zip(brute_force(&rows)) {
            assert_eq!((m.a, m.b), (a, b));
            assert!((m.height - h).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(ward_cluster(&matrix(vec![vec![1.0]])), Err(ClusterError::TooFewRegions(1))));
        let m = matrix(vec![vec![1.0, f64::NAN], vec![0.0, 0.0]]);
        assert_eq!(ward_cluster(&m), Err(ClusterError::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn cut_extremes() {
        let m = matrix(vec![vec![0.0], vec![1.0], vec![5.0], vec![9.0]]);
        let d = ward_cluster(&m).unwrap();
        assert!(cut(&d, 1).unwrap().values().all(|l| *l == 0));
        let all = cut(&d, 4).unwrap();
        assert_eq!(all.values().copied().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert!(cut(&d, 0).is_err());
        assert!(cut(&d, 5).is_err());
    }

    #[test]
    fn newick_and_json() {
        let m = matrix(vec![vec![0.0], vec![2.0], vec![10.0]]);
        let d = ward_cluster(&m).unwrap();
        let nwk = d.to_newick();
        assert!(nwk.starts_with("(R02:"));
        assert!(nwk.contains("(R00:1.41421,R01:1.41421)"));
        assert!(nwk.ends_with(");\n"));
        let back: Dendrogram = serde_json::from_str(&d.to_json()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn align_identical_ranges() {
        let (a, b) = (est(0, 9, 1.0), est(0, 9, 2.0));
        let m = align(&[("A", &a), ("B", &b)], AlignPolicy::Intersect).unwrap();
        assert_eq!(m.dates.len(), 10);
        assert_eq!(m.rows[1][0], 2.0);
    }

    #[test]
    fn align_intersect_and_pad() {
        // first region covers d5..d20, second d1..d20
        let (a, b) = (est(4, 19, 10.0), est(0, 19, 0.0));
        let m = align(&[("A", &a), ("B", &b)], AlignPolicy::Intersect).unwrap();
        assert_eq!(m.dates.first(), a.dates.first());
        assert_eq!(m.dates.len(), 16);
        let m = align(&[("A", &a), ("B", &b)], AlignPolicy::Pad).unwrap();
        assert_eq!(m.dates.len(), 20);
        assert_eq!(&m.rows[0][..5], &[10.0; 5]);
        assert_eq!(m.rows[0][5], 11.0);
    }

    #[test]
    fn align_errors() {
        let (a, b) = (est(0, 4, 1.0), est(10, 14, 1.0));
        assert_eq!(align(&[("A", &a), ("B", &b)], AlignPolicy::Intersect), Err(ClusterError::EmptyIntersection));
        assert!(align(&[("A", &a), ("B", &b)], AlignPolicy::Pad).is_ok());
        let mut c = est(0, 4, 1.0);
        c.r0_robust = vec![None; 5];
        assert_eq!(align(&[("A", &a), ("C", &c)], AlignPolicy::Pad), Err(ClusterError::NoDefinedValues("C".into())));
        assert!(matches!(align(&[("A", &a)], AlignPolicy::Pad), Err(ClusterError::TooFewRegions(1))));
    }

    proptest! {
        #[test]
        fn lance_williams_equals_brute_force(seed in any::<u64>(), n in 2usize..=8, width in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..width).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
            let d = ward_cluster(&matrix(rows.clone())).unwrap();
            prop_assert_eq!(d.merges.len(), n - 1);
            for (m, (a, b, h)) in d.merges.iter().zip(brute_force(&rows)) {
                prop_assert_eq!((m.a, m.b), (a, b));
                prop_assert!((m.height - h).abs() < 1e-9);
            }
            prop_assert!(d.merges.windows(2).all(|w| w[0].height <= w[1].height));
        }

        #[test]
        fn permuting_rows_keeps_heights(seed in any::<u64>(), n in 3usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
            let mut rev = rows.clone();
            rev.reverse();
            let h1: Vec<f64> = ward_cluster(&matrix(rows)).unwrap().merges.iter().map(|m| m.height).collect();
            let h2: Vec<f64> = ward_cluster(&matrix(rev)).unwrap().merges.iter().map(|m| m.height).collect();
            for (x, y) in h1.iter().zip(&h2) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
