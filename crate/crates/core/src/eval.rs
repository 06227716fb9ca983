//! Classification metrics, k-means clustering with clustering-agreement
//! metrics, and a 2-D PCA projection for plotting embeddings.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Validation(format!("length mismatch: {a} predictions vs {b} labels")));
    }
    if a == 0 {
        return Err(Error::Validation("metric over an empty node set".into()));
    }
    Ok(())
}

/// Unweighted mean of per-class F1 over `classes` classes. A class absent
/// from both `pred` and `truth` scores 0.
pub fn macro_f1(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    if classes == 0 {
        return Err(Error::Validation("macro F1 needs at least one class".into()));
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fneg = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::Validation(format!("class id out of range 0..{classes}")));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let total: f64 = (0..classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / classes as f64)
}

/// Accuracy and macro F1 of a model's predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub acc: f64,
    pub macro_f1: f64,
}

/// Scores predictions for every node against the labels of the masked
/// nodes. All masked nodes must be labeled.
pub fn classification_metrics(
    pred: &[usize],
    labels: &[Option<usize>],
    mask: &[usize],
    classes: usize,
) -> Result<ClassificationMetrics> {
    let (p, t) = masked_pairs(pred, labels, mask)?;
    Ok(ClassificationMetrics {
        acc: accuracy(&p, &t)?,
        macro_f1: macro_f1(&p, &t, classes)?,
    })
}

fn masked_pairs(pred: &[usize], labels: &[Option<usize>], mask: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut p = Vec::with_capacity(mask.len());
    let mut t = Vec::with_capacity(mask.len());
    for &v in mask {
        let label = labels
            .get(v)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Validation(format!("node {v} in the mask is unlabeled or missing")))?;
        let guess = *pred
            .get(v)
            .ok_or_else(|| Error::Validation(format!("no prediction for node {v}")))?;
        p.push(guess);
        t.push(label);
    }
    Ok((p, t))
}

/// One k-means solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after each assignment step, non-increasing.
    pub inertia_trace: Vec<f64>,
}

const MAX_LLOYD_ITERATIONS: usize = 300;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Runs k-means `restarts` times from k-means++ seeding and returns every
/// run, in order. One generator seeded with `seed` drives all restarts.
pub fn kmeans_runs(data: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<Vec<ClusteringResult>> {
    let n = data.rows();
    if k == 0 || k > n {
        return Err(Error::Validation(format!("k = {k} must lie in 1..={n}")));
    }
    if restarts == 0 {
        return Err(Error::Validation("k-means needs at least one restart".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..restarts).map(|_| lloyd(data, k, &mut rng)).collect())
}

/// Best of `restarts` k-means runs by inertia (earliest on ties).
pub fn kmeans(data: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<ClusteringResult> {
    let runs = kmeans_runs(data, k, seed, restarts)?;
    Ok(best_run(&runs).clone())
}

/// The lowest-inertia run, earliest on ties.
pub fn best_run(runs: &[ClusteringResult]) -> &ClusteringResult {
    let mut best = &runs[0];
    for r in &runs[1..] {
        if r.inertia < best.inertia {
            best = r;
        }
    }
    best
}

fn kmeans_plus_plus(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = data.rows();
    let mut centroids = Matrix::zeros(k, data.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| squared_distance(data.row(i), data.row(first))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // Guard against rounding leaving the walk on a zero-distance point.
            if dist[chosen] == 0.0 {
                chosen = (0..n).rev().find(|&i| dist[i] > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(i), data.row(pick)));
        }
    }
    centroids
}

fn assign(data: &Matrix, centroids: &Matrix, assignments: &mut [usize]) -> (f64, bool) {
    let mut inertia = 0.0;
    let mut changed = false;
    for (i, slot) in assignments.iter_mut().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centroids.rows() {
            let d = squared_distance(data.row(i), centroids.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if *slot != best {
            *slot = best;
            changed = true;
        }
        inertia += best_d;
    }
    (inertia, changed)
}

fn lloyd(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> ClusteringResult {
    let (n, d) = data.shape();
    let mut centroids = kmeans_plus_plus(data, k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let (inertia, changed) = assign(data, &centroids, &mut assignments);
        trace.push(inertia);
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(data.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = squared_distance(data.row(a), centroids.row(assignments[a]));
                        let db = squared_distance(data.row(b), centroids.row(assignments[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("at least one point");
                centroids.row_mut(c).copy_from_slice(data.row(far));
                counts[c] = 1;
                if let Some(old) = counts.get_mut(assignments[far]) {
                    *old = old.saturating_sub(1);
                }
                assignments[far] = c;
            }
        }
    }
    let inertia = (0..n)
        .map(|i| squared_distance(data.row(i), centroids.row(assignments[i])))
        .sum();
    ClusteringResult {
        assignments,
        centroids,
        inertia,
        inertia_trace: trace,
    }
}

/// Agreement between a clustering and ground-truth classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringMetrics {
    /// Accuracy under the best one-to-one cluster-to-class matching.
    pub clu_acc: f64,
    /// Mutual information normalized by the arithmetic mean of entropies.
    pub nmi: f64,
    pub ari: f64,
    /// Pairwise precision: same-cluster pairs that share a class.
    pub precision: f64,
    /// Pairwise F1 over same-cluster and same-class pairs.
    pub f1: f64,
}

impl ClusteringMetrics {
    /// Field-wise mean of several reports.
    pub fn mean(reports: &[ClusteringMetrics]) -> Option<ClusteringMetrics> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&ClusteringMetrics) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(ClusteringMetrics {
            clu_acc: avg(|r| r.clu_acc),
            nmi: avg(|r| r.nmi),
            ari: avg(|r| r.ari),
            precision: avg(|r| r.precision),
            f1: avg(|r| r.f1),
        })
    }
}

/// Contingency counts between two labelings, with ids compacted in order of
/// first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    pub table: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

impl Contingency {
    pub fn new(clusters: &[usize], classes: &[usize]) -> Result<Self> {
        check_lengths(clusters.len(), classes.len())?;
        let compact = |ids: &[usize]| -> (Vec<usize>, usize) {
            let mut map = HashMap::new();
            let out = ids
                .iter()
                .map(|&id| {
                    let next = map.len();
                    *map.entry(id).or_insert(next)
                })
                .collect();
            (out, map.len())
        };
        let (rows, r) = compact(clusters);
        let (cols, c) = compact(classes);
        let mut table = vec![vec![0u64; c]; r];
        for (&i, &j) in rows.iter().zip(&cols) {
            table[i][j] += 1;
        }
        let row_sums = table.iter().map(|row| row.iter().sum()).collect();
        let col_sums = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
        Ok(Contingency {
            table,
            row_sums,
            col_sums,
            n: clusters.len() as u64,
        })
    }

    /// `(same cluster & same class, same cluster, same class, all)` pair counts.
    pub fn pair_counts(&self) -> (u64, u64, u64, u64) {
        let c2 = |x: u64| x * x.saturating_sub(1) / 2;
        let both = self.table.iter().flatten().map(|&x| c2(x)).sum();
        let clusters = self.row_sums.iter().map(|&x| c2(x)).sum();
        let classes = self.col_sums.iter().map(|&x| c2(x)).sum();
        (both, clusters, classes, c2(self.n))
    }
}

/// Accuracy, NMI, ARI and pairwise precision/F1 of a clustering.
pub fn clustering_metrics(assignments: &[usize], truth: &[usize]) -> Result<ClusteringMetrics> {
    let table = Contingency::new(assignments, truth)?;
    let n = table.n as f64;

    let weights: Vec<Vec<i64>> = table
        .table
        .iter()
        .map(|row| row.iter().map(|&x| x as i64).collect())
        .collect();
    let matched = max_weight_matching(&weights);
    let clu_acc = matched as f64 / n;

    let entropy = |sums: &[u64]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0)
            .map(|&s| {
                let p = s as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_clusters = entropy(&table.row_sums);
    let h_classes = entropy(&table.col_sums);
    let mut mi = 0.0;
    for (i, row) in table.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (table.row_sums[i] as f64 * table.col_sums[j] as f64)).ln();
            }
        }
    }
    let nmi = if h_clusters == 0.0 && h_classes == 0.0 {
        1.0
    } else {
        (mi / ((h_clusters + h_classes) / 2.0)).clamp(0.0, 1.0)
    };

    let (both, same_cluster, same_class, total) = table.pair_counts();
    // ARI = (index − expected) / (max − expected) with expected =
    // same_cluster·same_class/total, scaled by 2·total to stay in integers.
    let (both, sc, sk, total) = (both as i128, same_cluster as i128, same_class as i128, total as i128);
    let numerator = 2 * (both * total - sc * sk);
    let denominator = (sc + sk) * total - 2 * sc * sk;
    let ari = if denominator == 0 {
        1.0
    } else {
        numerator as f64 / denominator as f64
    };

    let precision = if sc == 0 {
        if sk == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        both as f64 / sc as f64
    };
    let f1 = if sc + sk == 0 {
        1.0
    } else {
        (2 * both) as f64 / (sc + sk) as f64
    };

    Ok(ClusteringMetrics {
        clu_acc,
        nmi,
        ari,
        precision,
        f1,
    })
}

/// Maximum total weight of a one-to-one matching between rows and columns
/// of a non-negative weight table (Hungarian algorithm, O(n³)).
pub fn max_weight_matching(weights: &[Vec<i64>]) -> i64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let size = rows.max(cols);
    if size == 0 {
        return 0;
    }
    let max_w = weights.iter().flatten().copied().max().unwrap_or(0);
    // Square cost matrix, 1-based, minimizing max_w − weight; padding costs max_w.
    let cost = |i: usize, j: usize| -> i64 {
        let w = if i <= rows && j <= cols { weights[i - 1][j - 1] } else { 0 };
        max_w - w
    };
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; size + 1];
    let mut v = vec![0i64; size + 1];
    let mut owner = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=size)
        .filter(|&j| owner[j] >= 1 && owner[j] <= rows && j <= cols)
        .map(|j| weights[owner[j] - 1][j - 1])
        .sum()
}

/// Projects rows onto the top two principal directions.
///
/// Rows are mean-centered; each direction is signed so that its
/// largest-magnitude component is positive. With a single input column the
/// second coordinate is zero.
pub fn pca_2d(data: &Matrix) -> Result<Matrix> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::Validation(format!("PCA needs at least 2 rows, got {n}")));
    }
    if d == 0 {
        return Err(Error::Validation("PCA needs at least one column".into()));
    }
    let mut centered = data.clone();
    for j in 0..d {
        let mean = (0..n).map(|i| data.get(i, j)).sum::<f64>() / n as f64;
        for i in 0..n {
            centered.set(i, j, data.get(i, j) - mean);
        }
    }
    let cov = centered.matmul_tn(&centered)?.scale(1.0 / (n - 1) as f64);
    let eig = DMatrix::from_row_slice(d, d, cov.data()).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut basis = Matrix::zeros(d, 2);
    for (k, &idx) in order.iter().take(2).enumerate() {
        let col: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let mut pivot = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (i, v) in col.iter().enumerate() {
            basis.set(i, k, sign * v);
        }
    }
    centered.matmul(&basis)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
