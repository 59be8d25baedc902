//! Probability forest: bagged binary classification trees with
//! class-frequency leaves, plus log-loss grid tuning.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nuisance::design::DesignMatrix;
use crate::rng::{derive_rng, derive_seed, stage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestHyperParams {
    pub num_trees: usize,
    pub min_node_size: usize,
    pub sample_fraction: f64,
    pub mtry: usize,
}

impl ForestHyperParams {
    /// Documented `mtry` default: ceil(sqrt(p)) + 1, capped at p.
    pub fn default_mtry(p: usize) -> usize {
        (((p as f64).sqrt().ceil() as usize) + 1).min(p)
    }

    pub fn defaults(p: usize) -> Self {
        ForestHyperParams {
            num_trees: 50,
            min_node_size: 5,
            sample_fraction: 0.5,
            mtry: Self::default_mtry(p),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_trees == 0 || self.min_node_size == 0 || self.mtry == 0 {
            return Err(Error::invalid("forest hyperparameters must be positive"));
        }
        if !(0.0 < self.sample_fraction && self.sample_fraction <= 1.0) {
            return Err(Error::invalid("sample_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { p1: f64 },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { p1 } => return *p1,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityForest {
    trees: Vec<Tree>,
    pub hp: ForestHyperParams,
    n_features: usize,
}

impl ProbabilityForest {
    /// Mean of leaf class frequencies over the trees.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict_rows(&self, x: &DesignMatrix) -> Vec<f64> {
        (0..x.n_rows()).map(|i| self.predict(x.row(i))).collect()
    }
}

/// Grow a seeded forest. Tree k draws from the stream (seed, TREE, k), so
/// trees can be built in parallel with the same result as sequentially.
pub fn fit_probability_forest(
    x: &DesignMatrix,
    y: &[u8],
    hp: &ForestHyperParams,
    seed: u64,
) -> Result<ProbabilityForest> {
    hp.validate()?;
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::invalid("response length mismatch"));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::invalid("forest response must be 0/1"));
    }
    let mtry = hp.mtry.min(x.n_features());
    let subsample = ((hp.sample_fraction * n as f64).ceil() as usize).clamp(1, n);

    let trees: Vec<Tree> = (0..hp.num_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = derive_rng(seed, &[stage::TREE, k as u64]);
            let rows = sample_without_replacement(n, subsample, &mut rng);
            grow_tree(x, y, rows, hp.min_node_size, mtry, &mut rng)
        })
        .collect();

    Ok(ProbabilityForest { trees, hp: *hp, n_features: x.n_features() })
}

fn sample_without_replacement(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + (rng.random::<u64>() % (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

fn grow_tree(
    x: &DesignMatrix,
    y: &[u8],
    rows: Vec<usize>,
    min_node_size: usize,
    mtry: usize,
    rng: &mut impl Rng,
) -> Tree {
    let mut nodes = Vec::new();
    build_node(x, y, rows, min_node_size, mtry, rng, &mut nodes);
    Tree { nodes }
}

fn build_node(
    x: &DesignMatrix,
    y: &[u8],
    mut rows: Vec<usize>,
    min_node_size: usize,
    mtry: usize,
    rng: &mut impl Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let n = rows.len();
    let pos: usize = rows.iter().map(|&i| y[i] as usize).sum();
    let make_leaf = |nodes: &mut Vec<Node>| {
        nodes.push(Node::Leaf { p1: pos as f64 / n as f64 });
        nodes.len() - 1
    };
    if n < 2 * min_node_size || pos == 0 || pos == n {
        return make_leaf(nodes);
    }

    let features = sample_without_replacement(x.n_features(), mtry.min(x.n_features()), rng);
    let mut best: Option<(f64, usize, f64, usize)> = None; // (score, feature, threshold, left count)
    for &feature in &features {
        rows.sort_by(|&a, &b| x.row(a)[feature].total_cmp(&x.row(b)[feature]).then(a.cmp(&b)));
        let mut left_n = 0usize;
        let mut left_pos = 0usize;
        for cut in 0..(n - 1) {
            left_n += 1;
            left_pos += y[rows[cut]] as usize;
            let va = x.row(rows[cut])[feature];
            let vb = x.row(rows[cut + 1])[feature];
            if va == vb {
                continue;
            }
            let right_n = n - left_n;
            if left_n < min_node_size || right_n < min_node_size {
                continue;
            }
            // Maximizing sum of (pos^2 + neg^2)/count per side is the same
            // ordering as minimizing weighted Gini impurity.
            let right_pos = pos - left_pos;
            let lscore = {
                let lp = left_pos as f64;
                let ln = (left_n - left_pos) as f64;
                (lp * lp + ln * ln) / left_n as f64
            };
            let rscore = {
                let rp = right_pos as f64;
                let rn = (right_n - right_pos) as f64;
                (rp * rp + rn * rn) / right_n as f64
            };
            let score = lscore + rscore;
            if best.map_or(true, |(s, _, _, _)| score > s) {
                best = Some((score, feature, 0.5 * (va + vb), left_n));
            }
        }
    }

    let Some((_, feature, threshold, _)) = best else {
        return make_leaf(nodes);
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&i| x.row(i)[feature] <= threshold);
    let at = nodes.len();
    nodes.push(Node::Leaf { p1: 0.0 }); // placeholder, replaced below
    let left = build_node(x, y, left_rows, min_node_size, mtry, rng, nodes);
    let right = build_node(x, y, right_rows, min_node_size, mtry, rng, nodes);
    nodes[at] = Node::Split { feature, threshold, left, right };
    at
}

/// One grid entry of the tuning sweep.
#[derive(Debug, Clone, Serialize)]
pub struct TuneRecord {
    pub hp: ForestHyperParams,
    pub cv_log_loss: f64,
}

/// Full tuning grid in evaluation order.
pub fn tuning_grid(p: usize) -> Vec<ForestHyperParams> {
    let mut grid = Vec::with_capacity(81);
    for &num_trees in &[30usize, 40, 50] {
        for &min_node_size in &[5usize, 10, 20] {
            for &sample_fraction in &[0.1f64, 0.2, 0.5] {
                for &mtry in &[2usize, 4, ForestHyperParams::default_mtry(p)] {
                    grid.push(ForestHyperParams {
                        num_trees,
                        min_node_size,
                        sample_fraction,
                        mtry: mtry.min(p),
                    });
                }
            }
        }
    }
    grid
}

/// 5-fold cross-validated log-loss over the full hyperparameter grid.
/// Returns the argmin (ties broken by grid order) and the swept records.
pub fn tune_forest(x: &DesignMatrix, y: &[u8], seed: u64) -> Result<(ForestHyperParams, Vec<TuneRecord>)> {
    tune_forest_over(x, y, seed, &tuning_grid(x.n_features()))
}

/// Tuning over an explicit grid (the desk-scale harness uses a subgrid).
pub fn tune_forest_over(
    x: &DesignMatrix,
    y: &[u8],
    seed: u64,
    grid: &[ForestHyperParams],
) -> Result<(ForestHyperParams, Vec<TuneRecord>)> {
    const K: usize = 5;
    let n = x.n_rows();
    if n < 2 * K {
        return Err(Error::invalid("too few rows to tune with 5-fold CV"));
    }
    let fold = crate::nuisance::crossfit::fold_assignment(n, K, derive_seed(seed, &[stage::TUNE, 0]));

    let records: Vec<TuneRecord> = grid
        .par_iter()
        .map(|hp| {
            // The per-combination seed hashes the hyperparameter values, so
            // grid entries that collapse to the same combination (mtry
            // capped at p) evaluate identically and ties resolve by order.
            let hp_tags = [
                stage::TUNE,
                1,
                hp.num_trees as u64,
                hp.min_node_size as u64,
                (hp.sample_fraction * 1e6).round() as u64,
                hp.mtry as u64,
            ];
            let mut total = 0.0;
            for f in 0..K {
                let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
                let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
                let xt = x.select_rows(&train);
                let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
                let mut tags = hp_tags.to_vec();
                tags.push(f as u64);
                let forest = fit_probability_forest(&xt, &yt, hp, derive_seed(seed, &tags))?;
                let mut loss = 0.0;
                for &i in &test {
                    let p = forest.predict(x.row(i)).clamp(1e-6, 1.0 - 1e-6);
                    loss -= if y[i] == 1 { p.ln() } else { (1.0 - p).ln() };
                }
                total += loss / test.len() as f64;
            }
            Ok(TuneRecord { hp: *hp, cv_log_loss: total / K as f64 })
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (c, rec) in records.iter().enumerate() {
        if rec.cv_log_loss < records[best].cv_log_loss {
            best = c;
        }
    }
    Ok((records[best].hp, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data(n: usize, seed: u64) -> (DesignMatrix, Vec<u8>) {
        use rand::Rng;
        let mut rng = derive_rng(seed, &[400]);
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y: Vec<u8> = xs.iter().map(|&v| (v > 0.0) as u8).collect();
        (DesignMatrix::new(xs, 1).unwrap(), y)
    }

    #[test]
    fn pure_response_predicts_one() {
        let x = DesignMatrix::new((0..30).map(|i| i as f64).collect(), 1).unwrap();
        let y = vec![1u8; 30];
        let forest = fit_probability_forest(&x, &y, &ForestHyperParams::defaults(1), 9).unwrap();
        for i in 0..30 {
            assert_eq!(forest.predict(x.row(i)), 1.0);
        }
    }

    #[test]
    fn learns_a_threshold() {
        let (x, y) = step_data(400, 5);
        let hp = ForestHyperParams { num_trees: 50, min_node_size: 5, sample_fraction: 0.5, mtry: 1 };
        let forest = fit_probability_forest(&x, &y, &hp, 17).unwrap();
        let miss = (0..400)
            .filter(|&i| ((forest.predict(x.row(i)) > 0.5) as u8) != y[i])
            .count();
        assert!(miss < 20, "misclassified {miss}/400");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (x, y) = step_data(120, 6);
        let hp = ForestHyperParams::defaults(1);
        let a = fit_probability_forest(&x, &y, &hp, 33).unwrap();
        let b = fit_probability_forest(&x, &y, &hp, 33).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_node_size_gives_single_leaf() {
        let x = DesignMatrix::new(vec![0.0, 1.0, 2.0], 1).unwrap();
        let y = vec![0u8, 1, 1];
        let hp = ForestHyperParams { num_trees: 3, min_node_size: 10, sample_fraction: 1.0, mtry: 1 };
        let forest = fit_probability_forest(&x, &y, &hp, 1).unwrap();
        let p = forest.predict(&[0.0]);
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_has_81_combinations() {
        assert_eq!(tuning_grid(5).len(), 81);
    }

    #[test]
    fn tune_all_zeros_ties_break_to_first_grid_entry() {
        let x = DesignMatrix::new((0..40).map(|i| (i % 7) as f64).collect(), 1).unwrap();
        let y = vec![0u8; 40];
        let (best, records) = tune_forest(&x, &y, 2).unwrap();
        assert_eq!(records.len(), 81);
        assert_eq!(best, records[0].hp);
        assert!(records.iter().all(|r| r.cv_log_loss < 1e-5));
    }

    #[test]
    fn tune_picks_the_cv_minimum() {
        let (x, y) = step_data(150, 8);
        let (best, records) = tune_forest(&x, &y, 3).unwrap();
        let best_loss = records.iter().find(|r| r.hp == best).unwrap().cv_log_loss;
        for r in &records {
            assert!(best_loss <= r.cv_log_loss + 1e-12);
        }
    }
}
