//! Graph registration in the quotient space: null-node padding, the
//! edge-vs-node matching objective, a Frank-Wolfe solver over the doubly
//! stochastic polytope with linear-assignment direction steps, and an
//! exhaustive oracle for small instances.

mod lap;

pub use lap::solve_lap;

use crate::error::{Error, Result};
use crate::graph::{
    frob_inner, frob_norm_sq, graph_distance, permute_graph, MobilityGraph, Permutation,
};
use itertools::Itertools;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Matching parameters. `lambda` trades edge-structure cost against
/// node-attribute cost; `null_cost` prices matching a real node to a
/// padding null node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchConfig {
    pub lambda: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub null_cost: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            lambda: 0.5,
            max_iterations: 100,
            convergence_tol: 1e-6,
            restarts: 5,
            seed: 0,
            null_cost: 0.0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if self.convergence_tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        if self.null_cost < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "null_cost must be non-negative, got {}",
                self.null_cost
            )));
        }
        Ok(())
    }
}

/// Outcome of one registration run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchResult {
    pub permutation: Permutation,
    /// Matching objective (unsquared edge norm) at the returned permutation.
    pub objective: f64,
    /// Adjacency distance before registration.
    pub d_pre: f64,
    /// Adjacency distance after applying the returned permutation.
    pub d_post: f64,
    /// Per-iteration relaxation objective of the winning Frank-Wolfe run;
    /// empty when the identity candidate won outright.
    pub objective_trace: Vec<f64>,
    pub restarts_used: usize,
}

/// Pad both graphs with null nodes so each reaches n1 + n2 nodes. Appended
/// rows and attributes are zero and marked in the null mask.
pub fn pad_with_null_nodes(
    g1: &MobilityGraph,
    g2: &MobilityGraph,
) -> (MobilityGraph, MobilityGraph) {
    let total = g1.n() + g2.n();
    (pad_to(g1, total), pad_to(g2, total))
}

fn pad_to(g: &MobilityGraph, total: usize) -> MobilityGraph {
    let n = g.n();
    let mut adj = Array2::zeros((total, total));
    adj.slice_mut(ndarray::s![..n, ..n]).assign(&g.adjacency);
    let mut attrs = Array2::zeros((total, 2));
    attrs.slice_mut(ndarray::s![..n, ..]).assign(&g.node_attrs);
    let mut ids = g.node_ids.clone();
    let mut mask = g.null_mask.clone();
    let max_id = g.node_ids.iter().copied().max().unwrap_or(0);
    for k in 0..(total - n) {
        ids.push(max_id + 1 + k as u32);
        mask.push(true);
    }
    MobilityGraph {
        node_ids: ids,
        node_attrs: attrs,
        adjacency: adj,
        modality: g.modality,
        period: g.period,
        null_mask: mask,
    }
}

/// Pairwise node-attribute cost: Euclidean distance between attribute rows;
/// real-to-null pairs cost `null_cost`, null-to-null pairs cost zero.
pub fn node_cost_matrix(
    g1: &MobilityGraph,
    g2: &MobilityGraph,
    null_cost: f64,
) -> Result<Array2<f64>> {
    let n = g1.n();
    if g2.n() != n {
        return Err(Error::DimensionMismatch {
            context: "node_cost_matrix",
            left: n,
            right: g2.n(),
        });
    }
    let mut d = Array2::zeros((n, n));
    for k in 0..n {
        for l in 0..n {
            d[[k, l]] = match (g1.null_mask[k], g2.null_mask[l]) {
                (true, true) => 0.0,
                (false, false) => {
                    let dx = g1.node_attrs[[k, 0]] - g2.node_attrs[[l, 0]];
                    let dy = g1.node_attrs[[k, 1]] - g2.node_attrs[[l, 1]];
                    (dx * dx + dy * dy).sqrt()
                }
                _ => null_cost,
            };
        }
    }
    Ok(d)
}

/// The combined matching cost at a permutation:
/// lambda * ||A1 - P A2 P^T||_F + (1 - lambda) * sum_i D(i, p(i)).
pub fn matching_objective(
    p: &Permutation,
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    d: &Array2<f64>,
    lambda: f64,
) -> Result<f64> {
    let n = a1.nrows();
    if a2.nrows() != n || p.len() != n || d.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "matching_objective",
            left: n,
            right: a2.nrows().max(p.len()).max(d.nrows()),
        });
    }
    let mut edge_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let diff = a1[[i, j]] - a2[[p.apply(i), p.apply(j)]];
            edge_sq += diff * diff;
        }
    }
    let node: f64 = (0..n).map(|i| d[[i, p.apply(i)]]).sum();
    Ok(lambda * edge_sq.sqrt() + (1.0 - lambda) * node)
}

/// One Frank-Wolfe run over the doubly stochastic polytope.
pub struct FwRun {
    pub permutation: Permutation,
    /// Relaxation objective after each iteration (including the initial
    /// point), non-increasing under exact line search.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Smooth relaxation objective: f(P) = -lambda * Tr(A1 P A2 P^T)
/// + (1 - lambda) * <P, D>, whose permutation minimizers coincide with the
/// squared-norm matching objective.
fn relaxation_objective(
    p: &Array2<f64>,
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    d: &Array2<f64>,
    lambda: f64,
) -> f64 {
    let quad = frob_inner(&a1.dot(p).dot(a2), p);
    -lambda * quad + (1.0 - lambda) * frob_inner(p, d)
}

/// Frank-Wolfe with exact line search, stopping on the duality gap.
/// `record_iterates`, when supplied, receives every iterate for inspection.
pub fn frank_wolfe(
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    d: &Array2<f64>,
    lambda: f64,
    init: Array2<f64>,
    max_iterations: usize,
    convergence_tol: f64,
    mut record_iterates: Option<&mut Vec<Array2<f64>>>,
) -> Result<FwRun> {
    let n = a1.nrows();
    let mut p = init;
    let mut trace = vec![relaxation_objective(&p, a1, a2, d, lambda)];
    if let Some(rec) = record_iterates.as_mut() {
        rec.push(p.clone());
    }
    let mut iterations = 0;
    for _ in 0..max_iterations {
        // gradient of the relaxation at P
        let grad = -lambda * (a1.t().dot(&p).dot(&a2.t()) + a1.dot(&p).dot(a2))
            + (1.0 - lambda) * d;
        let (q_perm, _) = solve_lap(&grad)?;
        let mut q = Array2::zeros((n, n));
        for i in 0..n {
            q[[i, q_perm.apply(i)]] = 1.0;
        }
        let dir = &q - &p;
        let b = frob_inner(&grad, &dir);
        let gap = -b;
        if gap < convergence_tol {
            break;
        }
        // quadratic coefficient of f(P + alpha * dir)
        let a_quad = -lambda * frob_inner(&a1.dot(&dir).dot(a2), &dir);
        let alpha = if a_quad > 1e-18 {
            (-b / (2.0 * a_quad)).clamp(0.0, 1.0)
        } else if a_quad + b < 0.0 {
            1.0
        } else {
            0.0
        };
        if alpha == 0.0 {
            break;
        }
        p = &p + &(dir * alpha);
        iterations += 1;
        trace.push(relaxation_objective(&p, a1, a2, d, lambda));
        if let Some(rec) = record_iterates.as_mut() {
            rec.push(p.clone());
        }
    }
    // project the final iterate to the nearest permutation
    let (perm, _) = solve_lap(&(-&p))?;
    Ok(FwRun {
        permutation: perm,
        trace,
        iterations,
    })
}

/// Random doubly stochastic start: positive noise followed by alternating
/// row/column normalization sweeps.
fn random_doubly_stochastic(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((n, n), |_| rng.gen::<f64>() + 0.1);
    for _ in 0..10 {
        for mut row in m.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        for mut col in m.columns_mut() {
            let s = col.sum();
            col.mapv_inplace(|x| x / s);
        }
    }
    m
}

/// FAQ-style matching: Frank-Wolfe from the barycenter plus random
/// restarts, each projected to a permutation; the identity permutation is
/// always a candidate, and the best candidate under the matching objective
/// wins.
pub fn faq_match(
    g1: &MobilityGraph,
    g2: &MobilityGraph,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    cfg.validate()?;
    let n = g1.n();
    if g2.n() != n {
        return Err(Error::DimensionMismatch {
            context: "faq_match",
            left: n,
            right: g2.n(),
        });
    }
    let a1 = &g1.adjacency;
    let a2 = &g2.adjacency;
    let d = node_cost_matrix(g1, g2, cfg.null_cost)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Permutation, f64, Vec<f64>)> = None;
    let mut consider = |perm: Permutation, trace: Vec<f64>| -> Result<()> {
        let obj = matching_objective(&perm, a1, a2, &d, cfg.lambda)?;
        if best.as_ref().map_or(true, |(_, b, _)| obj < *b) {
            best = Some((perm, obj, trace));
        }
        Ok(())
    };

    consider(Permutation::identity(n), Vec::new())?;
    for restart in 0..=cfg.restarts {
        let init = if restart == 0 {
            Array2::from_elem((n, n), 1.0 / n as f64)
        } else {
            random_doubly_stochastic(n, &mut rng)
        };
        let run = frank_wolfe(
            a1,
            a2,
            &d,
            cfg.lambda,
            init,
            cfg.max_iterations,
            cfg.convergence_tol,
            None,
        )?;
        consider(run.permutation, run.trace)?;
    }

    let (permutation, objective, objective_trace) = best.expect("at least one candidate");
    let d_pre = graph_distance(a1, a2)?;
    let registered = permute_graph(g2, &permutation)?;
    let d_post = graph_distance(a1, &registered.adjacency)?;
    Ok(MatchResult {
        permutation,
        objective,
        d_pre,
        d_post,
        objective_trace,
        restarts_used: cfg.restarts,
    })
}

/// Exhaustive matching over all n! permutations; exact, but refused above
/// n = 8.
pub fn brute_force_match(
    g1: &MobilityGraph,
    g2: &MobilityGraph,
    lambda: f64,
) -> Result<MatchResult> {
    let n = g1.n();
    if g2.n() != n {
        return Err(Error::DimensionMismatch {
            context: "brute_force_match",
            left: n,
            right: g2.n(),
        });
    }
    if n > 8 {
        return Err(Error::BruteForceTooLarge(n));
    }
    let d = node_cost_matrix(g1, g2, 0.0)?;
    let a1 = &g1.adjacency;
    let a2 = &g2.adjacency;
    let mut best: Option<(Permutation, f64)> = None;
    for mapping in (0..n).permutations(n) {
        let p = Permutation::new(mapping)?;
        let obj = matching_objective(&p, a1, a2, &d, lambda)?;
        if best.as_ref().map_or(true, |(_, b)| obj < *b) {
            best = Some((p, obj));
        }
    }
    let (permutation, objective) = best.unwrap_or((Permutation::identity(0), 0.0));
    let d_pre = graph_distance(a1, a2)?;
    let registered = permute_graph(g2, &permutation)?;
    let d_post = graph_distance(a1, &registered.adjacency)?;
    Ok(MatchResult {
        permutation,
        objective,
        d_pre,
        d_post,
        objective_trace: Vec::new(),
        restarts_used: 0,
    })
}

/// Squared Frobenius norm of `P A1 P^T - A2`, used by the trace-identity
/// tests relating the squared edge norm to the quadratic trace term.
pub fn squared_edge_norm(p: &Permutation, a1: &Array2<f64>, a2: &Array2<f64>) -> f64 {
    let n = a1.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let diff = a1[[p.apply(i), p.apply(j)]] - a2[[i, j]];
            acc += diff * diff;
        }
    }
    acc
}

/// The right-hand side of the trace identity:
/// ||A1||^2 + ||A2||^2 - 2 Tr(A2 P A1 P^T).
pub fn trace_identity_rhs(p: &Permutation, a1: &Array2<f64>, a2: &Array2<f64>) -> f64 {
    let n = a1.nrows();
    let mut pm = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        pm[[i, p.apply(i)]] = 1.0;
    }
    let quad = frob_inner(&a2.dot(&pm).dot(a1), &pm);
    frob_norm_sq(a1) + frob_norm_sq(a2) - 2.0 * quad
}
