//! Exact and statistical references used to check the solvers: exhaustive
//! minimization, max-marginals, column dynamic programming on binary grids, the
//! explicit decision-process backup, and Monte-Carlo evaluation of walk
//! policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::BeliefField;
use crate::model::{Graph, Labeling, Model};

/// Largest `k^n` accepted by the enumeration oracles.
pub const MAX_ENUMERATION: u64 = 1 << 24;
/// Largest per-state action count accepted by [`MdpInstance`].
pub const MAX_ACTIONS: u64 = 1 << 20;
/// Largest grid height accepted by [`column_dp_min`].
pub const MAX_DP_ROWS: usize = 16;

const CHUNK: u64 = 1 << 14;

fn enumeration_size(model: &Model) -> Result<u64> {
    let mut total: u64 = 1;
    for _ in 0..model.n() {
        total = total.saturating_mul(model.k() as u64);
        if total > MAX_ENUMERATION {
            return Err(Error::Capacity(format!(
                "{}^{} labelings exceed the enumeration limit of {MAX_ENUMERATION}",
                model.k(),
                model.n()
            )));
        }
    }
    Ok(total)
}

/// Writes labeling number `index` (vertex 0 most significant) into `x`.
fn unrank(mut index: u64, k: usize, x: &mut [usize]) {
    for slot in x.iter_mut().rev() {
        *slot = (index % k as u64) as usize;
        index /= k as u64;
    }
}

/// Advances `x` to the next labeling in lexicographic order.
fn step(k: usize, x: &mut [usize]) {
    for slot in x.iter_mut().rev() {
        *slot += 1;
        if *slot < k {
            return;
        }
        *slot = 0;
    }
}

/// Exact minimum by enumeration. Ties go to the lexicographically smallest
/// labeling.
pub fn brute_force_min(model: &Model) -> Result<(Labeling, f64)> {
    let total = enumeration_size(model)?;
    let (n, k) = (model.n(), model.k());
    let chunks = total.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut x = vec![0; n];
            unrank(start, k, &mut x);
            let mut best = (f64::INFINITY, start);
            for idx in start..end {
                let e = model.energy_unchecked(&x);
                if e < best.0 {
                    best = (e, idx);
                }
                step(k, &mut x);
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::INFINITY, 0), |acc, b| if b.0 < acc.0 { b } else { acc });
    let mut x = vec![0; n];
    unrank(best.1, k, &mut x);
    Ok((Labeling(x), best.0))
}

/// `f_i(t) = min { F(x) : x_i = t }` by enumeration.
pub fn max_marginals(model: &Model) -> Result<BeliefField> {
    let total = enumeration_size(model)?;
    let (n, k) = (model.n(), model.k());
    let chunks = total.div_ceil(CHUNK);
    let partial: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut x = vec![0; n];
            unrank(start, k, &mut x);
            let mut f = vec![f64::INFINITY; n * k];
            for _ in start..end {
                let e = model.energy_unchecked(&x);
                for (i, &l) in x.iter().enumerate() {
                    let slot = &mut f[i * k + l];
                    if e < *slot {
                        *slot = e;
                    }
                }
                step(k, &mut x);
            }
            f
        })
        .collect();
    let mut f = vec![f64::INFINITY; n * k];
    for part in partial {
        for (a, b) in f.iter_mut().zip(part) {
            *a = a.min(b);
        }
    }
    BeliefField::from_values(n, k, f)
}

/// Exact minimum of a binary model on a `rows x cols` grid by dynamic
/// programming over columns. Vertex `(r, c)` is `r * cols + c`.
///
/// Each column transition is done one row at a time, so a sweep costs
/// `O(rows * 2^rows)` per column instead of `O(4^rows)`.
pub fn column_dp_min(model: &Model, rows: usize, cols: usize) -> Result<(Labeling, f64)> {
    if model.k() != 2 {
        return Err(Error::invalid("column dynamic programming needs binary labels"));
    }
    if rows > MAX_DP_ROWS {
        return Err(Error::Capacity(format!("{rows} rows exceed the column DP limit of {MAX_DP_ROWS}")));
    }
    let grid = Graph::grid(rows, cols)?;
    if grid.edges() != model.graph().edges() {
        return Err(Error::invalid(format!("model graph is not a {rows}x{cols} grid")));
    }
    let states = 1usize << rows;
    let vertex = |r: usize, c: usize| r * cols + c;
    let bit = |s: usize, r: usize| (s >> r) & 1;
    let cost = |i: usize, j: usize, a: usize, b: usize| model.pair_cost(i, j, a, b).expect("grid edge");

    let within = |c: usize, s: usize| {
        let mut total = 0.0;
        for r in 0..rows {
            total += model.unary(vertex(r, c))[bit(s, r)];
        }
        for r in 0..rows.saturating_sub(1) {
            total += cost(vertex(r, c), vertex(r + 1, c), bit(s, r), bit(s, r + 1));
        }
        total
    };

    let mut value: Vec<f64> = (0..states).map(|s| within(0, s)).collect();
    // choice[(c - 1) * rows + r][s] = old label of row r when the mixed state
    // after replacing row r is s.
    let mut choices: Vec<Vec<u8>> = Vec::with_capacity(cols.saturating_sub(1) * rows);
    let mut next = vec![0.0; states];
    for c in 1..cols {
        for r in 0..rows {
            let h: [[f64; 2]; 2] =
                std::array::from_fn(|a| std::array::from_fn(|b| cost(vertex(r, c - 1), vertex(r, c), a, b)));
            let mut choice = vec![0u8; states];
            for s in 0..states {
                let b = bit(s, r);
                let from0 = value[s & !(1 << r)] + h[0][b];
                let from1 = value[s | (1 << r)] + h[1][b];
                if from1 < from0 {
                    next[s] = from1;
                    choice[s] = 1;
                } else {
                    next[s] = from0;
                }
            }
            std::mem::swap(&mut value, &mut next);
            choices.push(choice);
        }
        for (s, v) in value.iter_mut().enumerate() {
            *v += within(c, s);
        }
    }

    let mut state = 0;
    for s in 1..states {
        if value[s] < value[state] {
            state = s;
        }
    }
    let mut x = vec![0; rows * cols];
    for c in (0..cols).rev() {
        for r in 0..rows {
            x[vertex(r, c)] = bit(state, r);
        }
        if c == 0 {
            break;
        }
        for r in (0..rows).rev() {
            let old = choices[(c - 1) * rows + r][state] as usize;
            state = (state & !(1 << r)) | (old << r);
        }
    }
    let labeling = Labeling(x);
    let energy = model.energy_unchecked(labeling.as_slice());
    Ok((labeling, energy))
}

/// The discounted decision process whose value iteration is the map `S`.
///
/// States are `(vertex, label)` pairs, indexed `i * k + t`. An action assigns a
/// label to every neighbor of the current vertex (labels of non-neighbors do
/// not affect costs or transitions, so they are omitted). Taking action `u` in
/// `(i, t)` costs `p g_i(t) + sum_j p w_ij h_ij(t, u_j)` and moves to `(j, u_j)`
/// with probability `w_ij`. The discount is `q = 1 - p`.
#[derive(Debug, Clone, Copy)]
pub struct MdpInstance<'a> {
    model: &'a Model,
    p: f64,
}

impl<'a> MdpInstance<'a> {
    pub fn new(model: &'a Model, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("p must lie in (0, 1), got {p}")));
        }
        for i in 0..model.n() {
            let actions = (model.k() as u64).checked_pow(model.graph().degree(i) as u32);
            if actions.is_none_or(|a| a > MAX_ACTIONS) {
                return Err(Error::Capacity(format!(
                    "vertex {i} has {}^{} actions, over the limit of {MAX_ACTIONS}",
                    model.k(),
                    model.graph().degree(i)
                )));
            }
        }
        Ok(MdpInstance { model, p })
    }

    pub fn num_states(&self) -> usize {
        self.model.n() * self.model.k()
    }

    pub fn discount(&self) -> f64 {
        1.0 - self.p
    }

    /// Number of action tuples available in any state of vertex `i`.
    pub fn num_actions(&self, i: usize) -> usize {
        self.model.k().pow(self.model.graph().degree(i) as u32)
    }

    /// Action number `index` at vertex `i`: one label per neighbor, in
    /// adjacency order.
    pub fn action(&self, i: usize, index: usize) -> Vec<usize> {
        let mut u = vec![0; self.model.graph().degree(i)];
        unrank(index as u64, self.model.k(), &mut u);
        u
    }

    pub fn cost(&self, state: usize, action: &[usize]) -> f64 {
        let k = self.model.k();
        let (i, t) = (state / k, state % k);
        let mut c = self.p * self.model.unary(i)[t];
        for (d, &u) in self.model.graph().dart_range(i).zip(action) {
            let dart = &self.model.graph().darts()[d];
            c += self.p * self.model.weights().get(d) * self.model.dart_cost(dart, t, u);
        }
        c
    }

    /// Nonzero transition probabilities `(next_state, probability)`.
    pub fn transitions(&self, state: usize, action: &[usize]) -> Vec<(usize, f64)> {
        let k = self.model.k();
        let i = state / k;
        self.model
            .graph()
            .dart_range(i)
            .zip(action)
            .map(|(d, &u)| (self.model.graph().darts()[d].head * k + u, self.model.weights().get(d)))
            .collect()
    }

    /// One Bellman backup `(L v)(s) = min_a c(s, a) + q sum_s' t(s, a, s') v(s')`
    /// by explicit enumeration of every action.
    pub fn bellman(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.num_states() {
            return Err(Error::invalid("value table does not match the state count"));
        }
        let k = self.model.k();
        let gamma = self.discount();
        let out = (0..self.num_states())
            .map(|s| {
                let i = s / k;
                let mut best = f64::INFINITY;
                for a in 0..self.num_actions(i) {
                    let action = self.action(i, a);
                    let future: f64 = self.transitions(s, &action).iter().map(|&(next, prob)| prob * v[next]).sum();
                    let total = self.cost(s, &action) + gamma * future;
                    if total < best {
                        best = total;
                    }
                }
                best
            })
            .collect();
        Ok(out)
    }

    /// Value iteration from zero until successive tables differ by at most
    /// `tol` in the max norm.
    pub fn value_iteration(&self, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.num_states()];
        for _ in 0..max_iter {
            let next = self.bellman(&v)?;
            let r = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if r <= tol {
                return Ok(v);
            }
        }
        Ok(v)
    }
}

/// Free-function form of [`MdpInstance::bellman`].
pub fn mdp_bellman(mdp: &MdpInstance<'_>, v: &[f64]) -> Result<Vec<f64>> {
    mdp.bellman(v)
}

/// Discounted energy of a walk prefix and the bound on the discarded tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkPrefix {
    pub value: f64,
    pub tail_bound: f64,
}

/// `sum_{t < horizon} p q^t [ g(z_t) + h(z_t, z_{t+1}) ]` along a walk, with
/// the tail bound `q^horizon (max g + max h)`.
pub fn walk_energy_prefix(
    model: &Model,
    p: f64,
    walk: &[usize],
    labels: &[usize],
    horizon: usize,
) -> Result<WalkPrefix> {
    if walk.len() < horizon + 1 || labels.len() < horizon + 1 {
        return Err(Error::invalid(format!("walk and labels need at least {} entries", horizon + 1)));
    }
    let q = 1.0 - p;
    let graph = model.graph();
    let mut value = 0.0;
    let mut discount = 1.0;
    for t in 0..horizon {
        let dart = graph.dart_index(walk[t], walk[t + 1]).ok_or_else(|| {
            Error::invalid(format!("walk step {t}: vertices {} and {} are not adjacent", walk[t], walk[t + 1]))
        })?;
        let dart = &graph.darts()[dart];
        if labels[t] >= model.k() || labels[t + 1] >= model.k() {
            return Err(Error::invalid(format!("label out of range at step {t}")));
        }
        let local = model.unary(walk[t])[labels[t]] + model.dart_cost(dart, labels[t], labels[t + 1]);
        value += p * discount * local;
        discount *= q;
    }
    let tail_bound = q.powi(horizon as i32) * (model.max_unary() + model.max_pairwise());
    Ok(WalkPrefix { value, tail_bound })
}

/// Smallest horizon whose tail bound is at most `resolution`.
pub fn horizon_for(model: &Model, p: f64, resolution: f64) -> usize {
    let scale = model.max_unary() + model.max_pairwise();
    if scale <= resolution {
        return 0;
    }
    let q = 1.0 - p;
    ((resolution / scale).ln() / q.ln()).ceil().max(0.0) as usize
}

/// Label choice for the next vertex of a walk: `policy(i, t, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPolicy {
    k: usize,
    /// Indexed by `dart * k + t`.
    next: Vec<usize>,
}

impl WalkPolicy {
    /// Label chosen at `dart.head` when the walk crosses `dart` from label `t`.
    pub fn next_label(&self, dart: usize, t: usize) -> usize {
        self.next[dart * self.k + t]
    }

    pub fn get(&self, graph: &Graph, i: usize, t: usize, j: usize) -> Option<usize> {
        graph.dart_index(i, j).map(|d| self.next_label(d, t))
    }
}

/// `policy(i, t, j) = argmin_u [ p h_ij(t, u) + q phi_j(u) ]`, ties to the
/// smallest label.
pub fn greedy_policy_from(phi: &BeliefField, model: &Model, p: f64) -> WalkPolicy {
    let k = model.k();
    let q = 1.0 - p;
    let mut next = Vec::with_capacity(model.graph().num_darts() * k);
    for dart in model.graph().darts() {
        let target = phi.vertex(dart.head);
        for t in 0..k {
            let mut best = (f64::INFINITY, 0);
            for (u, &f) in target.iter().enumerate() {
                let v = p * model.dart_cost(dart, t, u) + q * f;
                if v < best.0 {
                    best = (v, u);
                }
            }
            next.push(best.1);
        }
    }
    WalkPolicy { k, next }
}

/// Monte-Carlo estimate of a policy's discounted walk energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Bound on the truncated tail of every sampled sum.
    pub tail_bound: f64,
}

const MC_BLOCK: usize = 4096;

/// Samples `samples` random walks of length `horizon` from `start = (vertex,
/// label)`, rolls labels forward with `policy` and averages the discounted
/// energies. Block `b` of samples draws from ChaCha8 seeded with `seed` on
/// stream `b`, and blocks are reduced in order, so the result does not depend
/// on the thread count.
pub fn monte_carlo_value(
    model: &Model,
    p: f64,
    policy: &WalkPolicy,
    start: (usize, usize),
    samples: usize,
    horizon: usize,
    seed: u64,
) -> Result<McEstimate> {
    if start.0 >= model.n() || start.1 >= model.k() {
        return Err(Error::invalid("start state out of range"));
    }
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let q = 1.0 - p;
    let graph = model.graph();
    let weights = model.weights();
    let blocks = samples.div_ceil(MC_BLOCK);
    // Per-block (count, mean, sum of squared deviations), merged in block order.
    let blocks: Vec<(f64, f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = MC_BLOCK.min(samples - b * MC_BLOCK);
            let (mut mean, mut m2) = (0.0, 0.0);
            for s in 0..count {
                let (mut vertex, mut label) = start;
                let mut discount = 1.0;
                let mut total = 0.0;
                for _ in 0..horizon {
                    let range = graph.dart_range(vertex);
                    let r: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut chosen = range.end - 1;
                    for d in range {
                        acc += weights.get(d);
                        if r < acc {
                            chosen = d;
                            break;
                        }
                    }
                    let dart = &graph.darts()[chosen];
                    let next_label = policy.next_label(chosen, label);
                    total += p * discount * (model.unary(vertex)[label] + model.dart_cost(dart, label, next_label));
                    discount *= q;
                    vertex = dart.head;
                    label = next_label;
                }
                let delta = total - mean;
                mean += delta / (s + 1) as f64;
                m2 += delta * (total - mean);
            }
            (count as f64, mean, m2)
        })
        .collect();
    let (n, mean, m2) = blocks.iter().fold((0.0, 0.0, 0.0), |(na, ma, sa), &(nb, mb, sb)| {
        let n = na + nb;
        let delta = mb - ma;
        (n, ma + delta * nb / n, sa + sb + delta * delta * na * nb / n)
    });
    let var = if samples > 1 { m2 / (n - 1.0) } else { 0.0 };
    Ok(McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        tail_bound: q.powi(horizon as i32) * (model.max_unary() + model.max_pairwise()),
    })
}
