//! Experiment protocols: Monte-Carlo link-prediction trials with likelihood
//! histograms, matched-vs-unmatched comparison, matching compute-time
//! scaling with a quadratic fit, and the lambda-sweep distance report.

use crate::error::{Error, Result};
use crate::gnn::{
    build_features_from_edges, predict_links, split_edges, train_with_config, GnnConfig,
};
use crate::graph::{
    graph_from_parts, permute_graph, MobilityGraph, Modality, Period, Permutation,
};
use crate::matching::{faq_match, MatchConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::time::Instant;

/// Monte-Carlo experiment parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: usize,
    pub top_k: usize,
    pub bins: usize,
    pub epochs: usize,
    pub lr: f64,
    pub test_fraction: f64,
    pub node_sizes: Vec<usize>,
    pub base_seed: u64,
    #[serde(default)]
    pub gnn: GnnConfig,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            trials: 100,
            top_k: 10,
            bins: 10,
            epochs: 10_000,
            lr: 0.01,
            test_fraction: 0.2,
            node_sizes: vec![16, 32, 64, 128],
            base_seed: 0,
            gnn: GnnConfig::default(),
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 || self.top_k < 1 || self.bins < 1 {
            return Err(Error::InvalidConfig(
                "trials, top_k and bins must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Equal-width likelihood bins over [0, 1] with per-bin correct/incorrect
/// tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodHistogram {
    pub bin_edges: Vec<f64>,
    pub correct_counts: Vec<u64>,
    pub incorrect_counts: Vec<u64>,
}

impl LikelihoodHistogram {
    fn new(bins: usize) -> LikelihoodHistogram {
        LikelihoodHistogram {
            bin_edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
            correct_counts: vec![0; bins],
            incorrect_counts: vec![0; bins],
        }
    }

    fn add(&mut self, likelihood: f64, correct: bool) {
        let bins = self.correct_counts.len();
        let idx = ((likelihood * bins as f64).floor() as usize).min(bins - 1);
        if correct {
            self.correct_counts[idx] += 1;
        } else {
            self.incorrect_counts[idx] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.correct_counts.iter().sum::<u64>() + self.incorrect_counts.iter().sum::<u64>()
    }

    /// Plot-ready CSV: bin_lo, bin_hi, correct, incorrect.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,correct,incorrect\n");
        for i in 0..self.correct_counts.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                self.correct_counts[i],
                self.incorrect_counts[i]
            ));
        }
        s
    }
}

/// One scored top-k candidate from one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub pair: (usize, usize),
    pub likelihood: f64,
    pub correct: bool,
}

/// Raw record of one Monte-Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub top: Vec<ScoredCandidate>,
    pub correct_count: usize,
    pub incorrect_count: usize,
}

/// Run seeded link-prediction trials on one graph: split, train, score the
/// held-out positives plus sampled negatives, and bin the top-k likelihoods.
pub fn run_monte_carlo(
    g: &MobilityGraph,
    cfg: &McConfig,
) -> Result<(LikelihoodHistogram, Vec<TrialRecord>)> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.trials).map(|t| cfg.base_seed + t as u64).collect();
    run_monte_carlo_with_seeds(g, cfg, &seeds)
}

/// Same protocol with an explicit per-trial seed list; trial order does not
/// affect the histogram.
pub fn run_monte_carlo_with_seeds(
    g: &MobilityGraph,
    cfg: &McConfig,
    seeds: &[u64],
) -> Result<(LikelihoodHistogram, Vec<TrialRecord>)> {
    let mut hist = LikelihoodHistogram::new(cfg.bins);
    let mut records = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let split = split_edges(g, cfg.test_fraction, seed)?;
        let pool = split.test_pos.len() + split.test_neg.len();
        if pool < cfg.top_k {
            return Err(Error::InvalidData(format!(
                "trial candidate pool has {} pairs, top_k = {} requested; graph too small to split",
                pool, cfg.top_k
            )));
        }
        let (model, _) = train_with_config(g, &split, cfg.epochs, cfg.lr, seed, &cfg.gnn)?;
        let features = build_features_from_edges(&g.node_attrs, &split.train_pos, g.n());
        let mut candidates: Vec<(usize, usize)> = split.test_pos.clone();
        candidates.extend(split.test_neg.iter().copied());
        let scores = predict_links(&model, &features, &split.train_pos, &candidates)?;
        let positives: HashSet<(usize, usize)> = split.test_pos.iter().copied().collect();

        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let mut top = Vec::with_capacity(cfg.top_k);
        for &i in order.iter().take(cfg.top_k) {
            let correct = positives.contains(&candidates[i]);
            hist.add(scores[i], correct);
            top.push(ScoredCandidate {
                pair: candidates[i],
                likelihood: scores[i],
                correct,
            });
        }
        let correct_count = top.iter().filter(|c| c.correct).count();
        records.push(TrialRecord {
            seed,
            correct_count,
            incorrect_count: cfg.top_k - correct_count,
            top,
        });
    }
    Ok((hist, records))
}

/// One matched-vs-unmatched comparison row.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub n_nodes: usize,
    pub avg_correct_matched: f64,
    pub avg_incorrect_matched: f64,
    pub avg_correct_unmatched: f64,
    pub avg_incorrect_unmatched: f64,
    pub error_reduction_pct: f64,
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from(
        "n_nodes,avg_correct_matched,avg_incorrect_matched,avg_correct_unmatched,avg_incorrect_unmatched,error_reduction_pct\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n_nodes,
            r.avg_correct_matched,
            r.avg_incorrect_matched,
            r.avg_correct_unmatched,
            r.avg_incorrect_unmatched,
            r.error_reduction_pct
        ));
    }
    s
}

/// Register g2 onto g1, then run the Monte-Carlo protocol on the matched
/// graph and on g2 as-is. Both arms carry g1's layout coordinates as node
/// features, so the matched arm's structure is the one aligned with them.
pub fn compare_matched_unmatched(
    g1: &MobilityGraph,
    g2: &MobilityGraph,
    cfg: &McConfig,
    match_cfg: &MatchConfig,
) -> Result<ComparisonRow> {
    let result = faq_match(g1, g2, match_cfg)?;
    let mut matched = permute_graph(g2, &result.permutation)?;
    matched.node_attrs = g1.node_attrs.clone();
    let mut unmatched = g2.clone();
    unmatched.node_attrs = g1.node_attrs.clone();

    let (_, matched_records) = run_monte_carlo(&matched, cfg)?;
    let (_, unmatched_records) = run_monte_carlo(&unmatched, cfg)?;

    let avg = |records: &[TrialRecord], correct: bool| -> f64 {
        let total: usize = records
            .iter()
            .map(|r| if correct { r.correct_count } else { r.incorrect_count })
            .sum();
        total as f64 / records.len() as f64
    };
    let avg_correct_matched = avg(&matched_records, true);
    let avg_incorrect_matched = avg(&matched_records, false);
    let avg_correct_unmatched = avg(&unmatched_records, true);
    let avg_incorrect_unmatched = avg(&unmatched_records, false);
    let error_reduction_pct = if avg_incorrect_unmatched > 0.0 {
        100.0 * (avg_incorrect_unmatched - avg_incorrect_matched) / avg_incorrect_unmatched
    } else {
        0.0
    };
    Ok(ComparisonRow {
        n_nodes: g1.n(),
        avg_correct_matched,
        avg_incorrect_matched,
        avg_correct_unmatched,
        avg_incorrect_unmatched,
        error_reduction_pct,
    })
}

/// Median match wall time per node size plus a least-squares quadratic fit.
#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    /// time = a*N^2 + b*N + c
    pub fit: (f64, f64, f64),
    pub r_squared: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub n_nodes: usize,
    pub median_seconds: f64,
}

impl TimingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n_nodes,median_seconds\n");
        for r in &self.rows {
            s.push_str(&format!("{},{}\n", r.n_nodes, r.median_seconds));
        }
        s.push_str(&format!(
            "# fit: a={} b={} c={} r_squared={}\n",
            self.fit.0, self.fit.1, self.fit.2, self.r_squared
        ));
        s
    }
}

/// Least-squares fit of y = a*x^2 + b*x + c, with r^2 = 1 - SS_res/SS_tot
/// (r^2 = 0 when the targets have no variance).
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Result<((f64, f64, f64), f64)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "quadratic fit needs at least 3 points, got {}",
            xs.len()
        )));
    }
    // normal equations for the Vandermonde system
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let row = [x * x, x, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * y;
        }
    }
    let coeffs = solve3(ata, atb)
        .ok_or_else(|| Error::Numerical("singular normal equations in quadratic fit".into()))?;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let p = coeffs[0] * x * x + coeffs[1] * x + coeffs[2];
            (y - p).powi(2)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    Ok(((coeffs[0], coeffs[1], coeffs[2]), r2))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in (row + 1)..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Time seeded random matches at each node size with a fixed iteration
/// budget and fit the quadratic trend.
pub fn timing_benchmark(node_sizes: &[usize], repeats: usize, seed: u64) -> Result<TimingReport> {
    if node_sizes.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "need at least 3 node sizes to fit a quadratic, got {}",
            node_sizes.len()
        )));
    }
    let cfg = MatchConfig {
        lambda: 0.5,
        max_iterations: 30,
        convergence_tol: f64::MIN_POSITIVE, // fixed budget: never stop early
        restarts: 0,
        seed,
        null_cost: 0.0,
    };
    let mut rows = Vec::new();
    for (si, &n) in node_sizes.iter().enumerate() {
        let mut times = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let pair_seed = seed.wrapping_add((si * 1000 + rep) as u64);
            let g1 = random_weighted_graph(n, pair_seed, 0.5);
            let g2 = random_weighted_graph(n, pair_seed.wrapping_add(7919), 0.5);
            let start = Instant::now();
            faq_match(&g1, &g2, &cfg)?;
            times.push(start.elapsed().as_secs_f64());
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if times.len() % 2 == 1 {
            times[times.len() / 2]
        } else {
            (times[times.len() / 2 - 1] + times[times.len() / 2]) / 2.0
        };
        rows.push(TimingRow {
            n_nodes: n,
            median_seconds: median,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n_nodes as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_seconds).collect();
    let (fit, r_squared) = quadratic_fit(&xs, &ys)?;
    Ok(TimingReport {
        rows,
        fit,
        r_squared,
    })
}

/// One lambda-sweep row.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceRow {
    pub lambda: f64,
    pub d_pre: f64,
    pub d_post: f64,
}

pub const DEFAULT_LAMBDAS: [f64; 3] = [0.0, 0.5, 1.0];

/// One match per lambda, reporting the adjacency distance before and after
/// registration.
pub fn distance_report(
    g1: &MobilityGraph,
    g2: &MobilityGraph,
    lambdas: &[f64],
    match_cfg: &MatchConfig,
) -> Result<Vec<DistanceRow>> {
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = MatchConfig {
            lambda,
            ..match_cfg.clone()
        };
        let res = faq_match(g1, g2, &cfg)?;
        rows.push(DistanceRow {
            lambda,
            d_pre: res.d_pre,
            d_post: res.d_post,
        });
    }
    Ok(rows)
}

/// The before/after labels are swapped between published conventions, so
/// the header spells out both readings.
pub fn distance_csv(rows: &[DistanceRow]) -> String {
    let mut s = String::from(
        "lambda,d_pre (before matching; labelled d0 or d depending on convention),d_post (after matching; labelled d or d0 depending on convention)\n",
    );
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.lambda, r.d_pre, r.d_post));
    }
    s
}

/// Seeded random symmetric weighted graph with the given edge density;
/// node attributes drawn uniformly in [-1, 1]^2.
pub fn random_weighted_graph(n: usize, seed: u64, density: f64) -> MobilityGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < density {
                let w: f64 = rng.gen_range(1.0..10.0);
                adj[[i, j]] = w;
                adj[[j, i]] = w;
            }
        }
    }
    let attrs = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
    graph_from_parts(
        (0..n as u32).collect(),
        attrs,
        adj,
        Modality::AvgTravelTime,
        Period::Unspecified,
    )
}

/// Seeded random geometric graph: nodes placed uniformly in [-1, 1]^2 and
/// connected when closer than `radius`, edge weight equal to the distance.
/// Coordinates double as node attributes, so layout genuinely predicts
/// edges.
pub fn geometric_graph(n: usize, radius: f64, seed: u64) -> MobilityGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attrs: Array2<f64> = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = attrs[[i, 0]] - attrs[[j, 0]];
            let dy = attrs[[i, 1]] - attrs[[j, 1]];
            let d = (dx * dx + dy * dy).sqrt();
            if d < radius {
                adj[[i, j]] = d.max(1e-3);
                adj[[j, i]] = adj[[i, j]];
            }
        }
    }
    graph_from_parts(
        (0..n as u32).collect(),
        attrs,
        adj,
        Modality::AvgTravelTime,
        Period::Unspecified,
    )
}

/// Permuted copy of `g` with multiplicative edge-weight noise of the given
/// relative magnitude.
pub fn noisy_permuted_copy(
    g: &MobilityGraph,
    noise: f64,
    seed: u64,
) -> Result<(MobilityGraph, Permutation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = Permutation::random(g.n(), &mut rng);
    let mut out = permute_graph(g, &p)?;
    let n = g.n();
    for i in 0..n {
        for j in (i + 1)..n {
            if out.adjacency[[i, j]] > 0.0 {
                let factor = 1.0 + noise * rng.gen_range(-1.0..1.0);
                out.adjacency[[i, j]] *= factor;
                out.adjacency[[j, i]] = out.adjacency[[i, j]];
            }
        }
    }
    Ok((out, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(trials: usize, top_k: usize, seed: u64) -> McConfig {
        McConfig {
            trials,
            top_k,
            bins: 10,
            epochs: 30,
            lr: 0.01,
            test_fraction: 0.3,
            node_sizes: vec![],
            base_seed: seed,
            gnn: GnnConfig::default(),
        }
    }

    #[test]
    fn monte_carlo_conserves_counts() {
        let g = geometric_graph(16, 0.8, 3);
        let cfg = small_cfg(4, 3, 11);
        let (hist, records) = run_monte_carlo(&g, &cfg).unwrap();
        assert_eq!(hist.total(), 12);
        assert_eq!(records.len(), 4);
        for r in &records {
            assert_eq!(r.correct_count + r.incorrect_count, 3);
        }
    }

    #[test]
    fn monte_carlo_minimal_case() {
        let g = geometric_graph(12, 0.9, 5);
        let cfg = small_cfg(1, 1, 0);
        let (hist, _) = run_monte_carlo(&g, &cfg).unwrap();
        assert_eq!(hist.total(), 1);
    }

    #[test]
    fn monte_carlo_deterministic() {
        let g = geometric_graph(14, 0.8, 9);
        let cfg = small_cfg(3, 2, 21);
        let a = run_monte_carlo(&g, &cfg).unwrap().0;
        let b = run_monte_carlo(&g, &cfg).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_trials_are_exchangeable() {
        let g = geometric_graph(14, 0.8, 9);
        let cfg = small_cfg(3, 2, 40);
        let seeds = vec![40, 41, 42];
        let shuffled = vec![42, 40, 41];
        let a = run_monte_carlo_with_seeds(&g, &cfg, &seeds).unwrap().0;
        let b = run_monte_carlo_with_seeds(&g, &cfg, &shuffled).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn comparison_counts_sum_to_top_k() {
        let g1 = geometric_graph(16, 0.8, 13);
        let (g2, _) = noisy_permuted_copy(&g1, 0.05, 14).unwrap();
        let cfg = small_cfg(2, 3, 7);
        let match_cfg = MatchConfig {
            restarts: 1,
            max_iterations: 30,
            ..MatchConfig::default()
        };
        let row = compare_matched_unmatched(&g1, &g2, &cfg, &match_cfg).unwrap();
        assert!((row.avg_correct_matched + row.avg_incorrect_matched - 3.0).abs() < 1e-12);
        assert!((row.avg_correct_unmatched + row.avg_incorrect_unmatched - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_inputs_give_near_zero_reduction() {
        let g = geometric_graph(16, 0.8, 17);
        let cfg = small_cfg(2, 3, 5);
        let match_cfg = MatchConfig {
            restarts: 0,
            ..MatchConfig::default()
        };
        let row = compare_matched_unmatched(&g, &g.clone(), &cfg, &match_cfg).unwrap();
        // both arms see the same registered graph
        assert!((row.avg_correct_matched - row.avg_correct_unmatched).abs() < 1e-12);
        assert_eq!(row.error_reduction_pct, 0.0);
    }

    #[test]
    fn quadratic_fit_exact_case() {
        let ((a, b, c), r2) = quadratic_fit(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]).unwrap();
        assert!((a - 1.0).abs() < 1e-9);
        assert!(b.abs() < 1e-9);
        assert!(c.abs() < 1e-9);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_fit_constant_targets_degenerate() {
        let (_, r2) = quadratic_fit(&[1.0, 2.0, 3.0, 4.0], &[5.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!(r2, 0.0);
    }

    #[test]
    fn timing_needs_three_sizes() {
        assert!(timing_benchmark(&[8, 16], 1, 0).is_err());
    }

    #[test]
    fn distance_report_identical_graphs() {
        let g = random_weighted_graph(8, 4, 0.5);
        let rows = distance_report(&g, &g, &DEFAULT_LAMBDAS, &MatchConfig::default()).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!(r.d_pre < 1e-12);
            assert!(r.d_post < 1e-12);
        }
    }

    #[test]
    fn distance_report_post_le_pre_at_lambda_one() {
        for seed in 0..5u64 {
            let g1 = random_weighted_graph(10, 100 + seed, 0.5);
            let g2 = random_weighted_graph(10, 200 + seed, 0.5);
            let rows = distance_report(&g1, &g2, &[1.0], &MatchConfig::default()).unwrap();
            assert!(rows[0].d_post <= rows[0].d_pre + 1e-12);
        }
    }

    #[test]
    fn histogram_csv_shape() {
        let mut h = LikelihoodHistogram::new(4);
        h.add(0.1, true);
        h.add(0.99, false);
        h.add(1.0, true); // top edge folds into the last bin
        let csv = h.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(h.correct_counts[3], 1);
    }
}
