//! Graph data model for the quotient space: annotated graphs `(A, v)`,
//! the permutation-group action, the adjacency-space distance, and
//! straight-line interpolation between registered graphs.

use crate::error::{Error, Result};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Quantity annotating edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    /// Average travel time in minutes, pooled over both directions.
    #[serde(rename = "avg-time")]
    AvgTravelTime,
    /// Total number of trips, pooled over both directions.
    #[serde(rename = "trip-count")]
    TripCount,
}

/// Time-of-day slice a graph was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Am,
    Pm,
    Unspecified,
}

/// An annotated mobility graph: node ids, 2-D node attributes (layout
/// coordinates), and a symmetric weighted adjacency matrix, plus a mask
/// marking padding "null" nodes used when matching graphs of unequal size.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityGraph {
    pub node_ids: Vec<u32>,
    /// n x 2 layout coordinates, one row per node.
    pub node_attrs: Array2<f64>,
    /// n x n symmetric, non-negative, zero-diagonal weight matrix.
    pub adjacency: Array2<f64>,
    pub modality: Modality,
    pub period: Period,
    pub null_mask: Vec<bool>,
}

impl MobilityGraph {
    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    /// Number of non-null nodes.
    pub fn real_node_count(&self) -> usize {
        self.null_mask.iter().filter(|m| !**m).count()
    }

    /// Undirected edges (i < j) with nonzero weight.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency[[i, j]] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GraphDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<MobilityGraph> {
        let doc: GraphDoc = serde_json::from_str(s)?;
        doc.into_graph()
    }

    /// GraphML export for external visualization: nodes carry `x`, `y`,
    /// edges carry `weight`.
    pub fn to_graphml(&self) -> String {
        let mut s = String::new();
        s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
        s.push_str("  <key id=\"x\" for=\"node\" attr.name=\"x\" attr.type=\"double\"/>\n");
        s.push_str("  <key id=\"y\" for=\"node\" attr.name=\"y\" attr.type=\"double\"/>\n");
        s.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
        s.push_str("  <graph edgedefault=\"undirected\">\n");
        for (i, id) in self.node_ids.iter().enumerate() {
            s.push_str(&format!(
                "    <node id=\"{}\"><data key=\"x\">{}</data><data key=\"y\">{}</data></node>\n",
                id,
                self.node_attrs[[i, 0]],
                self.node_attrs[[i, 1]]
            ));
        }
        for (i, j) in self.edges() {
            s.push_str(&format!(
                "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{}</data></edge>\n",
                self.node_ids[i],
                self.node_ids[j],
                self.adjacency[[i, j]]
            ));
        }
        s.push_str("  </graph>\n</graphml>\n");
        s
    }
}

/// JSON wire format: `node_attrs` as an array of `[x, y]` pairs and
/// `adjacency` as a dense array of rows.
#[derive(Serialize, Deserialize)]
struct GraphDoc {
    node_ids: Vec<u32>,
    node_attrs: Vec<[f64; 2]>,
    adjacency: Vec<Vec<f64>>,
    modality: Modality,
    period: Period,
    null_mask: Vec<bool>,
}

impl From<&MobilityGraph> for GraphDoc {
    fn from(g: &MobilityGraph) -> Self {
        GraphDoc {
            node_ids: g.node_ids.clone(),
            node_attrs: g
                .node_attrs
                .rows()
                .into_iter()
                .map(|r| [r[0], r[1]])
                .collect(),
            adjacency: g
                .adjacency
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            modality: g.modality,
            period: g.period,
            null_mask: g.null_mask.clone(),
        }
    }
}

impl GraphDoc {
    fn into_graph(self) -> Result<MobilityGraph> {
        let n = self.node_ids.len();
        if self.node_attrs.len() != n || self.adjacency.len() != n || self.null_mask.len() != n {
            return Err(Error::InvalidData(format!(
                "inconsistent graph document: {} ids, {} attr rows, {} adjacency rows, {} mask entries",
                n,
                self.node_attrs.len(),
                self.adjacency.len(),
                self.null_mask.len()
            )));
        }
        let mut attrs = Array2::zeros((n, 2));
        for (i, row) in self.node_attrs.iter().enumerate() {
            attrs[[i, 0]] = row[0];
            attrs[[i, 1]] = row[1];
        }
        let mut adj = Array2::zeros((n, n));
        for (i, row) in self.adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidData(format!(
                    "adjacency row {} has {} entries, expected {}",
                    i,
                    row.len(),
                    n
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                adj[[i, j]] = v;
            }
        }
        Ok(MobilityGraph {
            node_ids: self.node_ids,
            node_attrs: attrs,
            adjacency: adj,
            modality: self.modality,
            period: self.period,
            null_mask: self.null_mask,
        })
    }
}

/// A node registration: `mapping[i] = j` means node `j` of the second graph
/// is registered to node `i` of the first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Permutation> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &j in &mapping {
            if j >= n {
                return Err(Error::InvalidPermutation(format!(
                    "entry {} out of range for length {}",
                    j, n
                )));
            }
            if seen[j] {
                return Err(Error::InvalidPermutation(format!("entry {} repeated", j)));
            }
            seen[j] = true;
        }
        Ok(Permutation { mapping })
    }

    pub fn identity(n: usize) -> Permutation {
        Permutation {
            mapping: (0..n).collect(),
        }
    }

    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Permutation {
        let mut mapping: Vec<usize> = (0..n).collect();
        mapping.shuffle(rng);
        Permutation { mapping }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.mapping.len()];
        for (i, &j) in self.mapping.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { mapping: inv }
    }

    /// Composition acting as `self` after `other`: (self ∘ other)(i) = self(other(i)).
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation {
            mapping: (0..self.mapping.len())
                .map(|i| self.mapping[other.mapping[i]])
                .collect(),
        }
    }
}

/// A straight-line walk between two registered graphs; step k sits at
/// t = k/(steps-1), endpoints reproduce the inputs exactly.
#[derive(Debug, Clone)]
pub struct InterpolationPath {
    pub steps: Vec<MobilityGraph>,
}

/// Apply the group action: adjacency becomes `P A Pᵀ`, node rows reorder
/// consistently. Row `i` of the result is row `p(i)` of the input.
pub fn permute_graph(g: &MobilityGraph, p: &Permutation) -> Result<MobilityGraph> {
    let n = g.n();
    if p.len() != n {
        return Err(Error::DimensionMismatch {
            context: "permute_graph",
            left: n,
            right: p.len(),
        });
    }
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            adj[[i, j]] = g.adjacency[[p.apply(i), p.apply(j)]];
        }
    }
    let mut attrs = Array2::zeros((n, 2));
    for i in 0..n {
        attrs.row_mut(i).assign(&g.node_attrs.row(p.apply(i)));
    }
    Ok(MobilityGraph {
        node_ids: (0..n).map(|i| g.node_ids[p.apply(i)]).collect(),
        node_attrs: attrs,
        adjacency: adj,
        modality: g.modality,
        period: g.period,
        null_mask: (0..n).map(|i| g.null_mask[p.apply(i)]).collect(),
    })
}

/// Adjacency-space distance: sqrt of the summed squared elementwise weight
/// differences, i.e. the Frobenius norm of `A1 - A2`.
pub fn graph_distance(a1: &Array2<f64>, a2: &Array2<f64>) -> Result<f64> {
    if a1.dim() != a2.dim() {
        return Err(Error::DimensionMismatch {
            context: "graph_distance",
            left: a1.nrows(),
            right: a2.nrows(),
        });
    }
    let mut acc = 0.0;
    for (x, y) in a1.iter().zip(a2.iter()) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// Linear blend between `g1` and a copy of the second graph already
/// registered into `g1`'s node order.
pub fn interpolate(
    g1: &MobilityGraph,
    g2_registered: &MobilityGraph,
    num_steps: usize,
) -> Result<InterpolationPath> {
    if g1.n() != g2_registered.n() {
        return Err(Error::DimensionMismatch {
            context: "interpolate",
            left: g1.n(),
            right: g2_registered.n(),
        });
    }
    if num_steps < 2 {
        return Err(Error::InvalidConfig(format!(
            "interpolation needs at least 2 steps, got {}",
            num_steps
        )));
    }
    let mut steps = Vec::with_capacity(num_steps);
    for k in 0..num_steps {
        if k == 0 {
            steps.push(g1.clone());
            continue;
        }
        if k == num_steps - 1 {
            steps.push(g2_registered.clone());
            continue;
        }
        let t = k as f64 / (num_steps - 1) as f64;
        let adj = &g1.adjacency * (1.0 - t) + &g2_registered.adjacency * t;
        let attrs = &g1.node_attrs * (1.0 - t) + &g2_registered.node_attrs * t;
        steps.push(MobilityGraph {
            node_ids: g1.node_ids.clone(),
            node_attrs: attrs,
            adjacency: adj,
            modality: g1.modality,
            period: Period::Unspecified,
            null_mask: g1.null_mask.clone(),
        });
    }
    Ok(InterpolationPath { steps })
}

/// Check every structural invariant; returns one description per violation.
pub fn validate_graph(g: &MobilityGraph) -> Vec<String> {
    let mut v = Vec::new();
    let n = g.node_ids.len();
    if g.adjacency.nrows() != g.adjacency.ncols() {
        v.push(format!(
            "adjacency not square: {}x{}",
            g.adjacency.nrows(),
            g.adjacency.ncols()
        ));
        return v;
    }
    if g.adjacency.nrows() != n {
        v.push(format!(
            "adjacency dimension {} != node count {}",
            g.adjacency.nrows(),
            n
        ));
    }
    if g.node_attrs.nrows() != n {
        v.push(format!(
            "node_attrs rows {} != node count {}",
            g.node_attrs.nrows(),
            n
        ));
    }
    if g.null_mask.len() != n {
        v.push(format!(
            "null_mask length {} != node count {}",
            g.null_mask.len(),
            n
        ));
    }
    let m = g.adjacency.nrows();
    for i in 0..m {
        if g.adjacency[[i, i]] != 0.0 {
            v.push(format!("nonzero diagonal at ({i}, {i})"));
        }
        for j in 0..m {
            let a = g.adjacency[[i, j]];
            if a < 0.0 {
                v.push(format!("negative weight at ({i}, {j})"));
            }
            if j > i && (a - g.adjacency[[j, i]]).abs() > 0.0 {
                v.push(format!("asymmetric adjacency at ({i}, {j})"));
            }
        }
    }
    for (i, &is_null) in g.null_mask.iter().enumerate() {
        if !is_null || i >= m {
            continue;
        }
        let row_nonzero = g.adjacency.row(i).iter().any(|&x| x != 0.0)
            || g.adjacency.column(i).iter().any(|&x| x != 0.0);
        if row_nonzero {
            v.push(format!("null node {i} has a nonzero edge"));
        }
        if i < g.node_attrs.nrows() && g.node_attrs.row(i).iter().any(|&x| x != 0.0) {
            v.push(format!("null node {i} has a nonzero attribute"));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for &id in &g.node_ids {
        if !seen.insert(id) {
            v.push(format!("duplicate node id {id}"));
        }
    }
    v
}

/// Build a graph directly from parts, for tests and internal construction.
pub fn graph_from_parts(
    node_ids: Vec<u32>,
    node_attrs: Array2<f64>,
    adjacency: Array2<f64>,
    modality: Modality,
    period: Period,
) -> MobilityGraph {
    let n = node_ids.len();
    MobilityGraph {
        node_ids,
        node_attrs,
        adjacency,
        modality,
        period,
        null_mask: vec![false; n],
    }
}

/// Sum over rows of the elementwise product, used as the flat inner product
/// of two matrices.
pub(crate) fn frob_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn frob_norm_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[allow(dead_code)]
pub(crate) fn row_sums(a: &Array2<f64>) -> Vec<f64> {
    a.sum_axis(Axis(1)).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(adj: Array2<f64>, attrs: Array2<f64>) -> MobilityGraph {
        let n = adj.nrows();
        graph_from_parts(
            (0..n as u32).collect(),
            attrs,
            adj,
            Modality::AvgTravelTime,
            Period::Unspecified,
        )
    }

    fn simple3() -> MobilityGraph {
        // path 0-1-2
        graph(
            array![[0.0, 1.0, 0.0], [1.0, 0.0, 2.0], [0.0, 2.0, 0.0]],
            array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
        )
    }

    #[test]
    fn permute_identity_is_noop() {
        let g = simple3();
        let p = Permutation::identity(3);
        assert_eq!(permute_graph(&g, &p).unwrap(), g);
    }

    #[test]
    fn permute_two_node_swap() {
        let g = graph(
            array![[0.0, 5.0], [5.0, 0.0]],
            array![[1.0, 1.0], [2.0, 2.0]],
        );
        let p = Permutation::new(vec![1, 0]).unwrap();
        let out = permute_graph(&g, &p).unwrap();
        assert_eq!(out.adjacency, g.adjacency);
        assert_eq!(out.node_attrs, array![[2.0, 2.0], [1.0, 1.0]]);
        assert_eq!(out.node_ids, vec![1, 0]);
    }

    #[test]
    fn permute_matches_explicit_matrix_product() {
        // cyclic shift p(0)=1, p(1)=2, p(2)=0; PAP^T computed by hand with
        // P[i][p(i)] = 1.
        let g = simple3();
        let p = Permutation::new(vec![1, 2, 0]).unwrap();
        let out = permute_graph(&g, &p).unwrap();
        let a = &g.adjacency;
        let mut pm = Array2::<f64>::zeros((3, 3));
        for i in 0..3 {
            pm[[i, p.apply(i)]] = 1.0;
        }
        let expected = pm.dot(a).dot(&pm.t());
        assert_eq!(out.adjacency, expected);
    }

    #[test]
    fn permute_dimension_mismatch_errors() {
        let g = simple3();
        let p = Permutation::identity(4);
        let err = permute_graph(&g, &p).unwrap_err();
        assert!(err.to_string().contains("3"));
        assert!(err.to_string().contains("4"));
    }

    #[test]
    fn distance_zero_for_equal() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(graph_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn distance_hand_value() {
        let a1 = array![[0.0, 1.0], [1.0, 0.0]];
        let a2 = array![[0.0, 3.0], [3.0, 0.0]];
        let d = graph_distance(&a1, &a2).unwrap();
        assert!((d - 8.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_matches_independent_frobenius_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a1 = Array2::from_shape_fn((5, 5), |_| rng.gen::<f64>());
        let a2 = Array2::from_shape_fn((5, 5), |_| rng.gen::<f64>());
        // independent oracle: explicit elementwise loop
        let mut acc = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                acc += (a1[[i, j]] - a2[[i, j]]).powi(2);
            }
        }
        let d = graph_distance(&a1, &a2).unwrap();
        assert!((d - acc.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn interpolate_endpoints_exact() {
        let g1 = simple3();
        let mut g2 = simple3();
        g2.adjacency[[0, 1]] = 6.0;
        g2.adjacency[[1, 0]] = 6.0;
        let path = interpolate(&g1, &g2, 5).unwrap();
        assert_eq!(path.steps.len(), 5);
        assert_eq!(path.steps[0], g1);
        assert_eq!(path.steps[4], g2);
    }

    #[test]
    fn interpolate_midpoint_blend() {
        let g1 = graph(array![[0.0, 2.0], [2.0, 0.0]], Array2::zeros((2, 2)));
        let g2 = graph(array![[0.0, 6.0], [6.0, 0.0]], Array2::zeros((2, 2)));
        let path = interpolate(&g1, &g2, 3).unwrap();
        assert!((path.steps[1].adjacency[[0, 1]] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn interpolate_rejects_bad_steps() {
        let g = simple3();
        assert!(interpolate(&g, &g, 1).is_err());
    }

    #[test]
    fn validate_accepts_well_formed() {
        assert!(validate_graph(&simple3()).is_empty());
    }

    #[test]
    fn validate_flags_asymmetry() {
        let mut g = simple3();
        g.adjacency[[0, 1]] = 9.0;
        let v = validate_graph(&g);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("asymmetric"));
        assert!(v[0].contains("(0, 1)"));
    }

    #[test]
    fn validate_flags_null_node_edge() {
        let mut g = simple3();
        g.null_mask[2] = true;
        let v = validate_graph(&g);
        assert!(v.iter().any(|s| s.contains("null node 2")));
    }

    #[test]
    fn json_round_trip() {
        let g = simple3();
        let s = g.to_json().unwrap();
        let back = MobilityGraph::from_json(&s).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn graphml_contains_nodes_and_edges() {
        let g = simple3();
        let xml = g.to_graphml();
        assert!(xml.contains("<node id=\"0\">"));
        assert!(xml.contains("key=\"weight\""));
    }

    proptest! {
        #[test]
        fn permute_then_inverse_round_trips(seed in 0u64..500, n in 1usize..64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut adj = Array2::zeros((n, n));
            for i in 0..n {
                for j in (i+1)..n {
                    let w: f64 = rng.gen_range(0.0..10.0);
                    adj[[i, j]] = w;
                    adj[[j, i]] = w;
                }
            }
            let attrs = Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>());
            let g = graph(adj, attrs);
            let p = Permutation::random(n, &mut rng);
            let round = permute_graph(&permute_graph(&g, &p).unwrap(), &p.inverse()).unwrap();
            prop_assert_eq!(round, g);
        }

        #[test]
        fn distance_is_permutation_invariant(seed in 0u64..500, n in 2usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a1 = Array2::from_shape_fn((n, n), |_| rng.gen::<f64>());
            let a2 = Array2::from_shape_fn((n, n), |_| rng.gen::<f64>());
            let p = Permutation::random(n, &mut rng);
            let permuted = |a: &Array2<f64>| {
                Array2::from_shape_fn((n, n), |(i, j)| a[[p.apply(i), p.apply(j)]])
            };
            let d0 = graph_distance(&a1, &a2).unwrap();
            let d1 = graph_distance(&permuted(&a1), &permuted(&a2)).unwrap();
            prop_assert!((d0 - d1).abs() < 1e-9);
        }

        #[test]
        fn distance_triangle_inequality(seed in 0u64..500, n in 2usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = |rng: &mut ChaCha8Rng| Array2::from_shape_fn((n, n), |_| rng.gen::<f64>());
            let a = m(&mut rng);
            let b = m(&mut rng);
            let c = m(&mut rng);
            let dab = graph_distance(&a, &b).unwrap();
            let dbc = graph_distance(&b, &c).unwrap();
            let dac = graph_distance(&a, &c).unwrap();
            prop_assert!(dac <= dab + dbc + 1e-9);
        }

        #[test]
        fn interpolation_is_monotone_per_entry(seed in 0u64..200, n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sym = |rng: &mut ChaCha8Rng| {
                let mut a = Array2::zeros((n, n));
                for i in 0..n {
                    for j in (i+1)..n {
                        let w: f64 = rng.gen_range(0.0..5.0);
                        a[[i, j]] = w;
                        a[[j, i]] = w;
                    }
                }
                a
            };
            let g1 = graph(sym(&mut rng), Array2::zeros((n, 2)));
            let g2 = graph(sym(&mut rng), Array2::zeros((n, 2)));
            let path = interpolate(&g1, &g2, 6).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let lo = g1.adjacency[[i, j]].min(g2.adjacency[[i, j]]) - 1e-12;
                    let hi = g1.adjacency[[i, j]].max(g2.adjacency[[i, j]]) + 1e-12;
                    let mut prev = path.steps[0].adjacency[[i, j]];
                    let increasing = g2.adjacency[[i, j]] >= g1.adjacency[[i, j]];
                    for step in &path.steps[1..] {
                        let cur = step.adjacency[[i, j]];
                        prop_assert!(cur >= lo && cur <= hi);
                        if increasing {
                            prop_assert!(cur >= prev - 1e-12);
                        } else {
                            prop_assert!(cur <= prev + 1e-12);
                        }
                        prev = cur;
                    }
                }
            }
        }
    }
}
