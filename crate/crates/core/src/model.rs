//! Problem instances: graph topology, label count, cost tables and random-walk
//! weights, plus energy evaluation and cost normalization.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};

/// Tolerance on walk-weight row sums.
pub const WEIGHT_ROW_TOLERANCE: f64 = 1e-12;

/// One directed half of an undirected edge, `tail -> head`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dart {
    pub tail: usize,
    pub head: usize,
    /// Index of the undirected edge in [`Graph::edges`].
    pub edge: usize,
    /// Index of the dart `head -> tail`.
    pub reverse: usize,
}

impl Dart {
    pub fn orientation(&self) -> Orientation {
        if self.tail < self.head {
            Orientation::Forward
        } else {
            Orientation::Reverse
        }
    }
}

/// Simple, undirected, connected graph on vertices `0..n`.
///
/// Edges are kept in canonical form `(i, j)` with `i < j`, sorted
/// lexicographically. Darts are stored in CSR order: all darts leaving vertex
/// `i` are contiguous and sorted by head.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    darts: Vec<Dart>,
}

impl Graph {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("graph needs at least 2 vertices, got {n}")));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at vertex {a}")));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate edge {:?}", w[0])));
        }

        let mut degree = vec![0usize; n];
        for &(a, b) in &canon {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (e, &(a, b)) in canon.iter().enumerate() {
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        let mut darts = Vec::with_capacity(2 * canon.len());
        for (i, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            for &(j, e) in list.iter() {
                darts.push(Dart { tail: i, head: j, edge: e, reverse: usize::MAX });
            }
        }
        for d in 0..darts.len() {
            let Dart { tail, head, .. } = darts[d];
            let range = offsets[head]..offsets[head + 1];
            let pos = darts[range.clone()].binary_search_by_key(&tail, |x| x.head).expect("adjacency is symmetric");
            darts[d].reverse = range.start + pos;
        }

        let graph = Graph { n, edges: canon, offsets, darts };
        if !graph.is_connected() {
            return Err(Error::invalid("graph is not connected"));
        }
        Ok(graph)
    }

    /// 4-connected `rows x cols` grid; vertex `(r, c)` has index `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Graph::from_edges(rows * cols, &edges)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("a cycle needs at least 3 vertices"));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &edges)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for d in self.darts_from(v) {
                if !seen[d.head] {
                    seen[d.head] = true;
                    count += 1;
                    queue.push_back(d.head);
                }
            }
        }
        count == self.n
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Index of edge `{a, b}` if present.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&(a.min(b), a.max(b))).ok()
    }

    /// Index of the dart `tail -> head` if present.
    pub fn dart_index(&self, tail: usize, head: usize) -> Option<usize> {
        let range = self.offsets[tail]..self.offsets[tail + 1];
        self.darts[range.clone()].binary_search_by_key(&head, |d| d.head).ok().map(|p| range.start + p)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Darts leaving `i`, sorted by head.
    pub fn darts_from(&self, i: usize) -> &[Dart] {
        &self.darts[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn dart_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn darts(&self) -> &[Dart] {
        &self.darts
    }

    pub fn num_darts(&self) -> usize {
        self.darts.len()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.darts_from(i).iter().map(|d| d.head)
    }
}

/// Which way a pairwise table is read: `Forward` when the first label belongs
/// to the lower-numbered endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Forward,
    Reverse,
}

/// Pairwise cost of one edge.
///
/// Dense tables are stored once, row-major, for the canonical orientation
/// (`i < j`); reading in reverse orientation transposes. The structured forms
/// treat labels as integer positions on a line and are symmetric.
#[derive(Debug, Clone, PartialEq)]
pub enum PairwiseCost {
    Dense(Vec<f64>),
    /// `scale * min((a - b)^2, cap)`
    TruncatedQuadratic {
        scale: f64,
        cap: f64,
    },
    /// `scale * min(|a - b|, cap)`
    TruncatedLinear {
        scale: f64,
        cap: f64,
    },
    /// 0 for equal labels, `step` for labels one apart, `jump` otherwise.
    StereoTwoStep {
        step: f64,
        jump: f64,
    },
    /// 0 for equal labels, `penalty` otherwise.
    Potts {
        penalty: f64,
    },
}

impl PairwiseCost {
    #[inline]
    pub fn value(&self, k: usize, orientation: Orientation, a: usize, b: usize) -> f64 {
        match *self {
            PairwiseCost::Dense(ref t) => match orientation {
                Orientation::Forward => t[a * k + b],
                Orientation::Reverse => t[b * k + a],
            },
            PairwiseCost::TruncatedQuadratic { scale, cap } => {
                let d = a as f64 - b as f64;
                scale * (d * d).min(cap)
            }
            PairwiseCost::TruncatedLinear { scale, cap } => {
                let d = (a as f64 - b as f64).abs();
                scale * d.min(cap)
            }
            PairwiseCost::StereoTwoStep { step, jump } => match a.abs_diff(b) {
                0 => 0.0,
                1 => step,
                _ => jump,
            },
            PairwiseCost::Potts { penalty } => {
                if a == b {
                    0.0
                } else {
                    penalty
                }
            }
        }
    }

    /// Dense `k x k` table in the given orientation.
    pub fn materialize(&self, k: usize, orientation: Orientation) -> Vec<f64> {
        let mut t = Vec::with_capacity(k * k);
        for a in 0..k {
            for b in 0..k {
                t.push(self.value(k, orientation, a, b));
            }
        }
        t
    }

    pub fn min_value(&self, k: usize) -> f64 {
        match self {
            PairwiseCost::Dense(t) => t.iter().copied().fold(f64::INFINITY, f64::min),
            _ => self.materialize_iter(k).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn max_value(&self, k: usize) -> f64 {
        match self {
            PairwiseCost::Dense(t) => t.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            _ => self.materialize_iter(k).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn materialize_iter(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        // Structured forms only depend on |a - b|.
        (0..k).map(move |d| self.value(k, Orientation::Forward, 0, d))
    }

    /// Multiplies every realized value by `factor`.
    pub fn scaled(&self, factor: f64) -> PairwiseCost {
        match *self {
            PairwiseCost::Dense(ref t) => PairwiseCost::Dense(t.iter().map(|v| v * factor).collect()),
            PairwiseCost::TruncatedQuadratic { scale, cap } => {
                PairwiseCost::TruncatedQuadratic { scale: scale * factor, cap }
            }
            PairwiseCost::TruncatedLinear { scale, cap } => {
                PairwiseCost::TruncatedLinear { scale: scale * factor, cap }
            }
            PairwiseCost::StereoTwoStep { step, jump } => {
                PairwiseCost::StereoTwoStep { step: step * factor, jump: jump * factor }
            }
            PairwiseCost::Potts { penalty } => PairwiseCost::Potts { penalty: penalty * factor },
        }
    }

    pub(crate) fn validate(&self, k: usize) -> Result<()> {
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be finite")))
            }
        };
        match *self {
            PairwiseCost::Dense(ref t) => {
                if t.len() != k * k {
                    return Err(Error::invalid(format!(
                        "dense pairwise table has {} entries, expected {}",
                        t.len(),
                        k * k
                    )));
                }
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("dense pairwise table has a non-finite entry"));
                }
            }
            PairwiseCost::TruncatedQuadratic { scale, cap } | PairwiseCost::TruncatedLinear { scale, cap } => {
                finite(scale, "scale")?;
                finite(cap, "cap")?;
                if scale < 0.0 || cap < 0.0 {
                    return Err(Error::invalid("truncated costs need scale >= 0 and cap >= 0"));
                }
            }
            PairwiseCost::StereoTwoStep { step, jump } => {
                finite(step, "step cost")?;
                finite(jump, "jump cost")?;
                if step < 0.0 || step >= jump {
                    return Err(Error::invalid(format!(
                        "stereo cost needs 0 <= step < jump, got step = {step}, jump = {jump}"
                    )));
                }
            }
            PairwiseCost::Potts { penalty } => {
                finite(penalty, "Potts penalty")?;
                if penalty < 0.0 {
                    return Err(Error::invalid("Potts penalty must be >= 0"));
                }
            }
        }
        Ok(())
    }
}

/// Row-stochastic weights on darts: for every vertex the weights of its
/// outgoing darts sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkWeights(Vec<f64>);

impl WalkWeights {
    /// `w_ij = 1 / deg(i)`.
    pub fn uniform(graph: &Graph) -> Self {
        let mut w = vec![0.0; graph.num_darts()];
        for i in 0..graph.n() {
            let inv = 1.0 / graph.degree(i) as f64;
            for d in graph.dart_range(i) {
                w[d] = inv;
            }
        }
        WalkWeights(w)
    }

    /// Validated per-dart weights (indexed like [`Graph::darts`]).
    pub fn from_dart_values(graph: &Graph, values: Vec<f64>) -> Result<Self> {
        let w = WalkWeights(values);
        w.validate(graph)?;
        Ok(w)
    }

    /// Normalizes nonnegative per-dart affinities so each row sums to one.
    pub fn from_affinities(graph: &Graph, affinities: &[f64]) -> Result<Self> {
        if affinities.len() != graph.num_darts() {
            return Err(Error::invalid("affinity count does not match dart count"));
        }
        let mut w = vec![0.0; graph.num_darts()];
        for i in 0..graph.n() {
            let range = graph.dart_range(i);
            let total: f64 = affinities[range.clone()].iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::invalid(format!("vertex {i} has no positive affinity")));
            }
            for d in range {
                w[d] = affinities[d] / total;
            }
        }
        WalkWeights::from_dart_values(graph, w)
    }

    /// Wraps raw values without any checks. Used to build deliberately broken
    /// instances for the verification suite.
    pub fn from_raw_unchecked(values: Vec<f64>) -> Self {
        WalkWeights(values)
    }

    pub fn validate(&self, graph: &Graph) -> Result<()> {
        if self.0.len() != graph.num_darts() {
            return Err(Error::invalid(format!("expected {} dart weights, got {}", graph.num_darts(), self.0.len())));
        }
        if let Some(d) = self.0.iter().position(|w| !w.is_finite() || *w < 0.0 || *w > 1.0) {
            return Err(Error::invalid(format!("dart {d} has weight {} outside [0, 1]", self.0[d])));
        }
        for i in 0..graph.n() {
            let s = self.row_sum(graph, i);
            if (s - 1.0).abs() > WEIGHT_ROW_TOLERANCE {
                return Err(Error::invalid(format!("weights out of vertex {i} sum to {s}, not 1")));
            }
        }
        Ok(())
    }

    pub fn row_sum(&self, graph: &Graph, i: usize) -> f64 {
        self.0[graph.dart_range(i)].iter().sum()
    }

    #[inline]
    pub fn get(&self, dart: usize) -> f64 {
        self.0[dart]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// One label per vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling(pub Vec<usize>);

impl Labeling {
    pub fn new(labels: Vec<usize>) -> Self {
        Labeling(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Labels shifted to the 1-based naming used when labels are written as
    /// `1..=k`.
    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&l| l + 1).collect()
    }
}

impl fmt::Display for Labeling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// A labeling problem: graph, `k` labels, unary costs `g`, per-edge pairwise
/// costs `h` and walk weights `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    graph: Graph,
    k: usize,
    unary: Vec<f64>,
    pairwise: Vec<PairwiseCost>,
    weights: WalkWeights,
}

impl Model {
    /// Builds a model. Unary and dense pairwise entries may be negative here;
    /// call [`Model::normalize_nonnegative`] before relying on the bounds.
    pub fn new(
        graph: Graph,
        k: usize,
        unary: Vec<f64>,
        pairwise: Vec<PairwiseCost>,
        weights: WalkWeights,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("label count must be at least 1"));
        }
        if unary.len() != graph.n() * k {
            return Err(Error::invalid(format!(
                "unary table has {} entries, expected n * k = {}",
                unary.len(),
                graph.n() * k
            )));
        }
        if let Some(pos) = unary.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("unary cost of vertex {} label {} is not finite", pos / k, pos % k)));
        }
        if pairwise.len() != graph.m() {
            return Err(Error::invalid(format!("{} pairwise costs given for {} edges", pairwise.len(), graph.m())));
        }
        for (e, h) in pairwise.iter().enumerate() {
            h.validate(k).map_err(|err| Error::invalid(format!("edge {:?}: {err}", graph.edges()[e])))?;
        }
        weights.validate(&graph)?;
        Ok(Model { graph, k, unary, pairwise, weights })
    }

    /// Same as [`Model::new`] with uniform weights.
    pub fn with_uniform_weights(graph: Graph, k: usize, unary: Vec<f64>, pairwise: Vec<PairwiseCost>) -> Result<Self> {
        let weights = WalkWeights::uniform(&graph);
        Model::new(graph, k, unary, pairwise, weights)
    }

    /// Replaces the walk weights without validating them.
    pub fn with_weights_unchecked(mut self, weights: WalkWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn unary(&self, i: usize) -> &[f64] {
        &self.unary[i * self.k..(i + 1) * self.k]
    }

    pub fn unary_table(&self) -> &[f64] {
        &self.unary
    }

    pub fn pairwise(&self, edge: usize) -> &PairwiseCost {
        &self.pairwise[edge]
    }

    pub fn pairwise_costs(&self) -> &[PairwiseCost] {
        &self.pairwise
    }

    pub fn weights(&self) -> &WalkWeights {
        &self.weights
    }

    /// `h(a, b)` read along a dart: `a` is the tail's label, `b` the head's.
    #[inline]
    pub fn dart_cost(&self, dart: &Dart, a: usize, b: usize) -> f64 {
        self.pairwise[dart.edge].value(self.k, dart.orientation(), a, b)
    }

    /// Pairwise cost for vertices `i`, `j` with labels `a`, `b`.
    pub fn pair_cost(&self, i: usize, j: usize, a: usize, b: usize) -> Option<f64> {
        let e = self.graph.edge_index(i, j)?;
        let orientation = if i < j { Orientation::Forward } else { Orientation::Reverse };
        Some(self.pairwise[e].value(self.k, orientation, a, b))
    }

    pub fn check_labeling(&self, x: &Labeling) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::invalid(format!("labeling has {} entries for {} vertices", x.len(), self.n())));
        }
        if let Some(i) = x.0.iter().position(|&l| l >= self.k) {
            return Err(Error::invalid(format!("label {} at vertex {i} is out of range for k = {}", x.0[i], self.k)));
        }
        Ok(())
    }

    /// Energy of a labeling: unary terms in vertex order, then each edge once
    /// in canonical order.
    pub fn energy(&self, x: &Labeling) -> Result<f64> {
        self.check_labeling(x)?;
        Ok(self.energy_unchecked(x.as_slice()))
    }

    /// Energy without range checks; `x` must hold `n` labels below `k`.
    pub fn energy_unchecked(&self, x: &[usize]) -> f64 {
        let k = self.k;
        let mut total = 0.0;
        for (i, &l) in x.iter().enumerate() {
            total += self.unary[i * k + l];
        }
        for (e, &(i, j)) in self.graph.edges().iter().enumerate() {
            total += self.pairwise[e].value(k, Orientation::Forward, x[i], x[j]);
        }
        total
    }

    /// Shifts every unary vector and every pairwise table so its minimum is
    /// zero. Returns the shifted model and the total constant removed, so that
    /// `F'(x) = F(x) - offset`.
    pub fn normalize_nonnegative(&self) -> (Model, f64) {
        let k = self.k;
        let mut offset = 0.0;
        let mut unary = self.unary.clone();
        for row in unary.chunks_mut(k) {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            for v in row.iter_mut() {
                *v -= lo;
            }
            offset += lo;
        }
        let pairwise = self
            .pairwise
            .iter()
            .map(|h| {
                let lo = h.min_value(k);
                match h {
                    PairwiseCost::Dense(t) => {
                        offset += lo;
                        PairwiseCost::Dense(t.iter().map(|v| v - lo).collect())
                    }
                    // Structured forms always realize 0 on the diagonal.
                    other => other.clone(),
                }
            })
            .collect();
        let model = Model { graph: self.graph.clone(), k, unary, pairwise, weights: self.weights.clone() };
        (model, offset)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.unary.iter().all(|&v| v >= 0.0) && self.pairwise.iter().all(|h| h.min_value(self.k) >= 0.0)
    }

    pub fn max_unary(&self) -> f64 {
        self.unary.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_pairwise(&self) -> f64 {
        self.pairwise.iter().map(|h| h.max_value(self.k)).fold(0.0, f64::max)
    }

    /// The same model with every pairwise cost multiplied by `factor`.
    pub fn with_pairwise_scaled(&self, factor: f64) -> Model {
        Model { pairwise: self.pairwise.iter().map(|h| h.scaled(factor)).collect(), ..self.clone() }
    }
}

/// Free-function form of [`PairwiseCost::value`].
pub fn pairwise_value(cost: &PairwiseCost, k: usize, orientation: Orientation, a: usize, b: usize) -> f64 {
    cost.value(k, orientation, a, b)
}

/// Spin energy `sum_i alpha_i s_i + sum_{ij} beta_ij s_i s_j` with label 0 for
/// spin -1 and label 1 for spin +1. `beta` follows the graph's edge order.
pub fn ising_energy(graph: &Graph, alpha: &[f64], beta: &[f64], x: &[usize]) -> f64 {
    let spin = |l: usize| if l == 0 { -1.0 } else { 1.0 };
    let mut total = 0.0;
    for (i, &a) in alpha.iter().enumerate() {
        total += a * spin(x[i]);
    }
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        total += beta[e] * spin(x[i]) * spin(x[j]);
    }
    total
}

/// Binary model of a `rows x cols` Ising grid, normalized to nonnegative
/// costs. Returns the model and the offset with
/// `model.energy(x) = ising_energy(x) - offset`.
pub fn ising_to_model(alpha: &[f64], beta: &[f64], rows: usize, cols: usize) -> Result<(Model, f64)> {
    let graph = Graph::grid(rows, cols)?;
    if alpha.len() != graph.n() {
        return Err(Error::invalid(format!("expected {} alpha values, got {}", graph.n(), alpha.len())));
    }
    if beta.len() != graph.m() {
        return Err(Error::invalid(format!("expected {} beta values, got {}", graph.m(), beta.len())));
    }
    let unary: Vec<f64> = alpha.iter().flat_map(|&a| [-a, a]).collect();
    let pairwise = beta.iter().map(|&b| PairwiseCost::Dense(vec![b, -b, -b, b])).collect();
    let raw = Model::with_uniform_weights(graph, 2, unary, pairwise)?;
    Ok(raw.normalize_nonnegative())
}
