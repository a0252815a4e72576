//! Comparison solvers: iterated conditional modes and damped synchronous
//! min-sum belief propagation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fastmin::{minconv, MessageProblem, Scratch};
use crate::maps::BeliefField;
use crate::model::{Labeling, Model};

/// Sweeps vertices in ascending order, moving each to the label with the
/// lowest local energy given its neighbors. Only strict improvements are taken,
/// so ties keep the current label. Stops after a sweep without changes or after
/// `max_sweeps` sweeps.
pub fn icm(model: &Model, x0: &Labeling, max_sweeps: usize) -> Result<Labeling> {
    model.check_labeling(x0)?;
    let k = model.k();
    let mut x = x0.0.clone();
    let mut local = vec![0.0; k];
    for _ in 0..max_sweeps {
        let mut changed = false;
        for i in 0..model.n() {
            local.copy_from_slice(model.unary(i));
            for dart in model.graph().darts_from(i) {
                let neighbor = x[dart.head];
                for (t, l) in local.iter_mut().enumerate() {
                    *l += model.dart_cost(dart, t, neighbor);
                }
            }
            let current = x[i];
            let mut best = current;
            for t in 0..k {
                if local[t] < local[best] {
                    best = t;
                }
            }
            if best != current {
                x[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(Labeling(x))
}

/// Directed messages, one vector of length `k` per dart. The message stored
/// at dart `i -> j` is the one sent from `i` to `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    k: usize,
    values: Vec<f64>,
}

impl MessageSet {
    pub fn zeros(model: &Model) -> Self {
        MessageSet { k: model.k(), values: vec![0.0; model.graph().num_darts() * model.k()] }
    }

    pub fn message(&self, dart: usize) -> &[f64] {
        &self.values[dart * self.k..(dart + 1) * self.k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Result of [`min_sum_bp`].
#[derive(Debug, Clone, PartialEq)]
pub struct BpOutcome {
    pub beliefs: BeliefField,
    pub messages: MessageSet,
    pub iterations: usize,
}

/// `b_i(a) = g_i(a) + sum_{l in N(i)} m_{l->i}(a)`
pub fn beliefs(model: &Model, messages: &MessageSet) -> BeliefField {
    let mut b = BeliefField::for_model(model);
    for i in 0..model.n() {
        let out = b.vertex_mut(i);
        out.copy_from_slice(model.unary(i));
        for dart in model.graph().darts_from(i) {
            for (o, m) in out.iter_mut().zip(messages.message(dart.reverse)) {
                *o += m;
            }
        }
    }
    b
}

/// Synchronous min-sum belief propagation from zero messages.
///
/// Each iteration computes
/// `m'_{i->j}(b) = min_a [ g_i(a) + sum_{l in N(i) \ j} m_{l->i}(a) + h_ij(a, b) ]`
/// for every dart from the previous messages, shifts it to minimum zero,
/// blends `(1 - damping) m' + damping m_old` and shifts the blend to minimum
/// zero again. Darts are updated in parallel on large models; each reads only
/// the previous messages, so the result does not depend on the thread count.
pub fn min_sum_bp(model: &Model, damping: f64, iterations: usize) -> Result<BpOutcome> {
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::invalid(format!("damping must lie in [0, 1), got {damping}")));
    }
    let k = model.k();
    let graph = model.graph();
    let mut current = MessageSet::zeros(model);
    let mut next = current.clone();
    let parallel = graph.num_darts() * k >= PARALLEL_THRESHOLD;
    for it in 0..iterations {
        let update = |s: &mut DartScratch, (d, out): (usize, &mut [f64])| {
            send_message(model, &current, damping, d, out, s);
        };
        if parallel {
            next.values.par_chunks_mut(k).enumerate().with_min_len(64).for_each_init(|| DartScratch::new(k), update);
        } else {
            let mut s = DartScratch::new(k);
            next.values.chunks_mut(k).enumerate().for_each(|item| update(&mut s, item));
        }
        if let Some(pos) = next.values.iter().position(|v| !v.is_finite()) {
            let dart = &graph.darts()[pos / k];
            return Err(Error::Numerical {
                iteration: it + 1,
                message: format!("message {} -> {} is not finite", dart.tail, dart.head),
            });
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(BpOutcome { beliefs: beliefs(model, &current), messages: current, iterations })
}

const PARALLEL_THRESHOLD: usize = 1 << 15;

struct DartScratch {
    costs: Vec<f64>,
    envelope: Scratch,
}

impl DartScratch {
    fn new(k: usize) -> Self {
        DartScratch { costs: vec![0.0; k], envelope: Scratch::with_capacity(k) }
    }
}

fn send_message(model: &Model, current: &MessageSet, damping: f64, d: usize, out: &mut [f64], s: &mut DartScratch) {
    let graph = model.graph();
    let dart = &graph.darts()[d];
    s.costs.copy_from_slice(model.unary(dart.tail));
    for other in graph.darts_from(dart.tail) {
        if other.head != dart.head {
            for (c, m) in s.costs.iter_mut().zip(current.message(other.reverse)) {
                *c += m;
            }
        }
    }
    // The receiver's label is the free one, so read h from j's side.
    let reverse = &graph.darts()[dart.reverse];
    let problem = MessageProblem::new(&s.costs, 1.0, model.pairwise(dart.edge), reverse.orientation());
    minconv(&problem, out, &mut s.envelope);
    normalize(out);
    if damping > 0.0 {
        for (o, m) in out.iter_mut().zip(current.message(d)) {
            *o = (1.0 - damping) * *o + damping * m;
        }
        normalize(out);
    }
}

fn normalize(v: &mut [f64]) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    for x in v.iter_mut() {
        *x -= lo;
    }
}
