//! Randomized property suites over the whole library, with optional fault
//! injection to show that a broken invariant is reported by name.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fastmin::{dense_minconv, minconv, MessageProblem, Scratch};
use crate::maps::{
    apply, apply_s, bracket, check_lp_feasible, factored_bound, solve, BeliefField, MapKind, SolveParams,
};
use crate::model::{ising_to_model, Graph, Labeling, Model, Orientation, PairwiseCost, WalkWeights};
use crate::oracles::{
    brute_force_min, column_dp_min, greedy_policy_from, horizon_for, max_marginals, monte_carlo_value, MdpInstance,
};

/// Shape of a random test model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomModelSpec {
    pub max_n: usize,
    pub max_k: usize,
    /// Upper end of the uniform cost range.
    pub max_cost: f64,
    /// Extra edges beyond a random spanning tree are added with this
    /// probability per vertex pair.
    pub edge_density: f64,
    pub max_degree: usize,
    /// Allow any pairwise form; otherwise dense tables only.
    pub structured: bool,
    pub random_weights: bool,
}

impl Default for RandomModelSpec {
    fn default() -> Self {
        RandomModelSpec {
            max_n: 8,
            max_k: 3,
            max_cost: 3.0,
            edge_density: 0.3,
            max_degree: usize::MAX,
            structured: true,
            random_weights: true,
        }
    }
}

/// Connected random graph on `n` vertices: a random tree plus extra edges.
pub fn random_graph(rng: &mut impl Rng, n: usize, density: f64, max_degree: usize) -> Graph {
    let max_degree = max_degree.max(2);
    let mut degree = vec![0usize; n];
    let mut edges = Vec::new();
    for v in 1..n {
        // Vertex v - 1 has exactly one edge at this point, so the candidate
        // list is never empty.
        let candidates: Vec<usize> = (0..v).filter(|&u| degree[u] < max_degree).collect();
        let u = *candidates.choose(rng).unwrap_or(&(v - 1));
        edges.push((u, v));
        degree[u] += 1;
        degree[v] += 1;
    }
    for a in 0..n {
        for b in a + 1..n {
            if degree[a] < max_degree && degree[b] < max_degree && !edges.contains(&(a, b)) && rng.random_bool(density)
            {
                edges.push((a, b));
                degree[a] += 1;
                degree[b] += 1;
            }
        }
    }
    Graph::from_edges(n, &edges).expect("random tree plus edges is a valid graph")
}

pub fn random_pairwise(rng: &mut impl Rng, k: usize, max_cost: f64, structured: bool) -> PairwiseCost {
    let choice = if structured { rng.random_range(0..5) } else { 0 };
    match choice {
        0 => PairwiseCost::Dense((0..k * k).map(|_| rng.random_range(0.0..max_cost)).collect()),
        1 => PairwiseCost::Potts { penalty: rng.random_range(0.0..max_cost) },
        2 => PairwiseCost::TruncatedQuadratic {
            scale: rng.random_range(0.0..max_cost),
            cap: rng.random_range(0.0..(k * k) as f64 + 1.0),
        },
        3 => PairwiseCost::TruncatedLinear {
            scale: rng.random_range(0.0..max_cost),
            cap: rng.random_range(0.0..k as f64 + 1.0),
        },
        _ => {
            let step = rng.random_range(0.0..max_cost);
            PairwiseCost::StereoTwoStep { step, jump: step + rng.random_range(0.01..max_cost) }
        }
    }
}

/// Random nonnegative model with a connected graph.
pub fn random_model(rng: &mut impl Rng, spec: &RandomModelSpec) -> Model {
    let n = rng.random_range(2..=spec.max_n.max(2));
    let k = rng.random_range(1..=spec.max_k.max(1));
    let graph = random_graph(rng, n, spec.edge_density, spec.max_degree);
    let unary = (0..n * k).map(|_| rng.random_range(0.0..spec.max_cost)).collect();
    let pairwise = (0..graph.m()).map(|_| random_pairwise(rng, k, spec.max_cost, spec.structured)).collect();
    let weights = if spec.random_weights {
        let affinity: Vec<f64> = (0..graph.num_darts()).map(|_| rng.random_range(0.05..1.0)).collect();
        WalkWeights::from_affinities(&graph, &affinity).expect("positive affinities")
    } else {
        WalkWeights::uniform(&graph)
    };
    Model::new(graph, k, unary, pairwise, weights).expect("generated model is valid")
}

pub fn random_field(rng: &mut impl Rng, n: usize, k: usize, scale: f64) -> BeliefField {
    BeliefField::from_values(n, k, (0..n * k).map(|_| rng.random_range(0.0..scale)).collect()).expect("shape matches")
}

pub fn random_labeling(rng: &mut impl Rng, n: usize, k: usize) -> Labeling {
    Labeling((0..n).map(|_| rng.random_range(0..k)).collect())
}

/// Suite size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Quick,
    Full,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Scale::Quick),
            "full" => Ok(Scale::Full),
            other => Err(Error::invalid(format!("unknown scale {other:?}; use quick or full"))),
        }
    }
}

/// Deliberate defects for checking that the suites catch them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Every walk weight is scaled by 0.9, so rows sum to 0.9.
    WeightRowSum,
    /// `T` is evaluated with `q` replaced by 1, which breaks contraction.
    NoDiscount,
}

impl FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weight-row-sum" => Ok(Fault::WeightRowSum),
            "no-discount" => Ok(Fault::NoDiscount),
            other => Err(Error::invalid(format!("unknown fault {other:?}; use weight-row-sum or no-discount"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub scale: Scale,
    pub seed: u64,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// The property exercised, in words.
    pub property: &'static str,
    pub cases: usize,
    /// First counterexample, if any.
    pub failure: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.failure {
            None => write!(f, "PASS {:<28} {} ({} cases)", self.name, self.property, self.cases),
            Some(why) => write!(f, "FAIL {:<28} {}: {}", self.name, self.property, why),
        }
    }
}

struct Ctx {
    rng: ChaCha8Rng,
    scale: Scale,
    fault: Option<Fault>,
}

impl Ctx {
    fn count(&self, quick: usize, full: usize) -> usize {
        match self.scale {
            Scale::Quick => quick,
            Scale::Full => full,
        }
    }

    fn model(&mut self, spec: &RandomModelSpec) -> Model {
        let m = random_model(&mut self.rng, spec);
        self.inject(m)
    }

    fn inject(&self, m: Model) -> Model {
        match self.fault {
            Some(Fault::WeightRowSum) => {
                let w = m.weights().as_slice().iter().map(|v| 0.9 * v).collect();
                m.with_weights_unchecked(WalkWeights::from_raw_unchecked(w))
            }
            _ => m,
        }
    }

    fn p(&mut self) -> f64 {
        *[0.9, 0.5, 0.1, 0.01].choose(&mut self.rng).expect("non-empty")
    }

    fn apply(&self, kind: MapKind, model: &Model, p: f64, phi: &BeliefField) -> Result<BeliefField> {
        match (self.fault, kind) {
            // Feeding phi / q makes the neighbor term q w (phi / q) = w phi.
            (Some(Fault::NoDiscount), MapKind::Diffusion) => {
                let q = 1.0 - p;
                let mut boosted = phi.clone();
                boosted.values_mut().iter_mut().for_each(|v| *v /= q);
                apply(kind, model, p, &boosted)
            }
            _ => apply(kind, model, p, phi),
        }
    }
}

type CheckFn = fn(&mut Ctx) -> Result<(usize, Option<String>)>;

struct Check {
    name: &'static str,
    property: &'static str,
    full_only: bool,
    run: CheckFn,
}

const CHECKS: &[Check] = &[
    Check {
        name: "weights-row-stochastic",
        property: "walk weights out of every vertex sum to 1",
        full_only: false,
        run: check_weights,
    },
    Check {
        name: "weight-sum-identity",
        property: "sum_i sum_j w_ji a_j = sum_j a_j",
        full_only: false,
        run: check_weight_sum,
    },
    Check {
        name: "orientation-invariance",
        property: "energy is the same read from either end of each edge",
        full_only: false,
        run: check_orientation,
    },
    Check {
        name: "normalization",
        property: "cost normalization shifts every energy by the same offset",
        full_only: false,
        run: check_normalization,
    },
    Check {
        name: "kernel-oracle",
        property: "structured min-convolutions equal dense enumeration",
        full_only: false,
        run: check_kernels,
    },
    Check {
        name: "contraction-T",
        property: "T contracts by q in the inf-1 norm, globally and per vertex",
        full_only: false,
        run: check_contraction_t,
    },
    Check {
        name: "contraction-S",
        property: "S contracts by q in the sup norm",
        full_only: false,
        run: check_contraction_s,
    },
    Check {
        name: "order-preservation",
        property: "phi <= psi implies T phi <= T psi and S phi <= S psi",
        full_only: false,
        run: check_order,
    },
    Check {
        name: "monotone-iterates",
        property: "iterates from zero never decrease",
        full_only: false,
        run: check_monotone,
    },
    Check {
        name: "one-step-energy-bound",
        property: "sum_i (T phi)_i(x_i) <= p F(x) + q sum_i phi_i(x_i)",
        full_only: false,
        run: check_one_step,
    },
    Check {
        name: "factored-lower-bound",
        property: "H(x) <= F(x) at the fixed point of T",
        full_only: false,
        run: check_factored,
    },
    Check {
        name: "energy-bracket",
        property: "bracket from T contains the exact minimum",
        full_only: false,
        run: check_bracket,
    },
    Check {
        name: "max-marginal-bounds",
        property: "0 <= fixed point of S <= max-marginals, and S f <= f",
        full_only: false,
        run: check_max_marginals,
    },
    Check {
        name: "lp-feasibility",
        property: "fixed point of T satisfies phi <= T phi; shifted fields do not",
        full_only: false,
        run: check_lp,
    },
    Check {
        name: "uniqueness",
        property: "solves from different starts reach the same fixed point",
        full_only: false,
        run: check_uniqueness,
    },
    Check {
        name: "a-posteriori-bound",
        property: "residual ratio <= q and distance to fixed point <= residual / p",
        full_only: false,
        run: check_a_posteriori,
    },
    Check {
        name: "regular-graph-equivalence",
        property: "on d-regular graphs S with h equals T with h scaled by 2/d",
        full_only: false,
        run: check_regular,
    },
    Check {
        name: "mdp-equivalence",
        property: "S equals the Bellman backup of the random-walk decision process",
        full_only: false,
        run: check_mdp,
    },
    Check {
        name: "column-dp-exactness",
        property: "column dynamic programming equals enumeration on binary grids",
        full_only: false,
        run: check_dp,
    },
    Check {
        name: "monte-carlo-walks",
        property: "greedy walk policy from the S fixed point realizes its values",
        full_only: true,
        run: check_monte_carlo,
    },
];

/// Runs every suite for the given scale and returns one outcome per check.
pub fn run_suite(options: &VerifyOptions) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .enumerate()
        .filter(|(_, c)| options.scale == Scale::Full || !c.full_only)
        .map(|(idx, c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(idx as u64);
            let mut ctx = Ctx { rng, scale: options.scale, fault: options.fault };
            let (cases, failure) = match (c.run)(&mut ctx) {
                Ok(r) => r,
                Err(e) => (0, Some(e.to_string())),
            };
            CheckOutcome { name: c.name, property: c.property, cases, failure }
        })
        .collect()
}

fn small() -> RandomModelSpec {
    RandomModelSpec::default()
}

fn fail<T: fmt::Debug>(case: usize, what: T) -> Result<(usize, Option<String>)> {
    Ok((case + 1, Some(format!("case {case}: {what:?}"))))
}

fn check_weights(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(30, 300);
    for c in 0..n {
        let m = ctx.model(&small());
        if let Err(e) = m.weights().validate(m.graph()) {
            return fail(c, e.to_string());
        }
    }
    Ok((n, None))
}

fn check_weight_sum(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(30, 300);
    for c in 0..n {
        let m = ctx.model(&small());
        let g = m.graph();
        let alpha: Vec<f64> = (0..g.n()).map(|_| ctx.rng.random_range(-5.0..5.0)).collect();
        let mut lhs = 0.0;
        for i in 0..g.n() {
            for dart in g.darts_from(i) {
                lhs += m.weights().get(dart.reverse) * alpha[dart.head];
            }
        }
        let rhs: f64 = alpha.iter().sum();
        if (lhs - rhs).abs() > 1e-9 * (1.0 + rhs.abs()) {
            return fail(c, (lhs, rhs));
        }
    }
    Ok((n, None))
}

fn check_orientation(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(30, 300);
    for c in 0..n {
        let m = ctx.model(&small());
        let x = random_labeling(&mut ctx.rng, m.n(), m.k());
        let forward = m.energy(&x)?;
        let mut reverse: f64 = (0..m.n()).map(|i| m.unary(i)[x.0[i]]).sum();
        for dart in m.graph().darts() {
            if dart.orientation() == Orientation::Reverse {
                reverse += m.dart_cost(dart, x.0[dart.tail], x.0[dart.head]);
            }
        }
        if (forward - reverse).abs() > 1e-12 * (1.0 + forward.abs()) {
            return fail(c, (forward, reverse));
        }
    }
    Ok((n, None))
}

fn check_normalization(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(20, 200);
    for c in 0..n {
        let base = ctx.model(&small());
        let k = base.k();
        let unary = base.unary_table().iter().map(|v| v - ctx.rng.random_range(0.0..4.0)).collect();
        let pairwise = base
            .pairwise_costs()
            .iter()
            .map(|h| match h {
                PairwiseCost::Dense(t) => PairwiseCost::Dense(t.iter().map(|v| v - 2.0).collect()),
                other => other.clone(),
            })
            .collect();
        let m = Model::new(base.graph().clone(), k, unary, pairwise, base.weights().clone())?;
        let (norm, offset) = m.normalize_nonnegative();
        if !norm.is_nonnegative() {
            return fail(c, "normalized model has negative costs");
        }
        for _ in 0..20 {
            let x = random_labeling(&mut ctx.rng, m.n(), k);
            let (e, e_norm) = (m.energy(&x)?, norm.energy(&x)?);
            if (e - (e_norm + offset)).abs() > 1e-9 * (1.0 + e.abs()) {
                return fail(c, (e, e_norm, offset));
            }
        }
    }
    Ok((n, None))
}

fn check_kernels(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let ks: &[usize] = match ctx.scale {
        Scale::Quick => &[1, 2, 3, 8, 64],
        Scale::Full => &[1, 2, 3, 8, 64, 256],
    };
    let per_k = ctx.count(40, 200);
    let mut cases = 0;
    let mut scratch = Scratch::with_capacity(256);
    for &k in ks {
        for _ in 0..per_k {
            let form = loop {
                let h = random_pairwise(&mut ctx.rng, k, 10.0, true);
                if !matches!(h, PairwiseCost::Dense(_)) {
                    break h;
                }
            };
            let costs: Vec<f64> = (0..k).map(|_| ctx.rng.random_range(0.0..100.0)).collect();
            let scale = ctx.rng.random_range(0.0..2.0);
            let orient = if ctx.rng.random_bool(0.5) { Orientation::Forward } else { Orientation::Reverse };
            let problem = MessageProblem::new(&costs, scale, &form, orient);
            let mut fast = vec![0.0; k];
            let mut dense = vec![0.0; k];
            minconv(&problem, &mut fast, &mut scratch);
            dense_minconv(&problem, &mut dense);
            let err = fast.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if err > 1e-9 {
                return fail(cases, (form, k, err));
            }
            cases += 1;
        }
    }
    Ok((cases, None))
}

fn check_contraction_t(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(50, 500);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = ctx.p();
        let q = 1.0 - p;
        let phi = random_field(&mut ctx.rng, m.n(), m.k(), 10.0);
        let psi = random_field(&mut ctx.rng, m.n(), m.k(), 10.0);
        let (tphi, tpsi) = (ctx.apply(MapKind::Diffusion, &m, p, &phi)?, ctx.apply(MapKind::Diffusion, &m, p, &psi)?);
        let lhs = tphi.dist_inf1(&tpsi);
        let rhs = q * phi.dist_inf1(&psi);
        if lhs > rhs + 1e-12 {
            return fail(c, format!("global: {lhs} > {rhs}"));
        }
        let g = m.graph();
        for i in 0..m.n() {
            let left = tphi.vertex(i).iter().zip(tpsi.vertex(i)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let mut right = 0.0;
            for dart in g.darts_from(i) {
                let j = dart.head;
                let d = phi.vertex(j).iter().zip(psi.vertex(j)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                right += m.weights().get(dart.reverse) * d;
            }
            if left > q * right + 1e-12 {
                return fail(c, format!("vertex {i}: {left} > {}", q * right));
            }
        }
    }
    Ok((n, None))
}

fn check_contraction_s(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(50, 500);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = ctx.p();
        let phi = random_field(&mut ctx.rng, m.n(), m.k(), 10.0);
        let psi = random_field(&mut ctx.rng, m.n(), m.k(), 10.0);
        let lhs = ctx.apply(MapKind::Control, &m, p, &phi)?.dist_inf(&ctx.apply(MapKind::Control, &m, p, &psi)?);
        let rhs = (1.0 - p) * phi.dist_inf(&psi);
        if lhs > rhs + 1e-12 {
            return fail(c, format!("{lhs} > {rhs}"));
        }
    }
    Ok((n, None))
}

fn check_order(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(40, 400);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = ctx.p();
        let phi = random_field(&mut ctx.rng, m.n(), m.k(), 10.0);
        let mut psi = phi.clone();
        for v in psi.values_mut() {
            if ctx.rng.random_bool(0.5) {
                *v += ctx.rng.random_range(0.0..3.0);
            }
        }
        for kind in [MapKind::Diffusion, MapKind::Control] {
            if !ctx.apply(kind, &m, p, &phi)?.le(&ctx.apply(kind, &m, p, &psi)?, 1e-12) {
                return fail(c, format!("map {kind}"));
            }
        }
    }
    Ok((n, None))
}

fn check_monotone(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(20, 200);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = ctx.p();
        for kind in [MapKind::Diffusion, MapKind::Control] {
            let mut phi = BeliefField::for_model(&m);
            for it in 0..40 {
                let next = ctx.apply(kind, &m, p, &phi)?;
                if !phi.le(&next, 1e-12) {
                    return fail(c, format!("map {kind} decreased at iteration {}", it + 1));
                }
                phi = next;
            }
        }
    }
    Ok((n, None))
}

fn check_one_step(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(30, 300);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = ctx.p();
        let phi = random_field(&mut ctx.rng, m.n(), m.k(), 10.0);
        let tphi = ctx.apply(MapKind::Diffusion, &m, p, &phi)?;
        for _ in 0..20 {
            let x = random_labeling(&mut ctx.rng, m.n(), m.k());
            let lhs = factored_bound(&tphi, &x);
            let rhs = p * m.energy(&x)? + (1.0 - p) * factored_bound(&phi, &x);
            if lhs > rhs + 1e-9 {
                return fail(c, format!("{lhs} > {rhs}"));
            }
        }
    }
    Ok((n, None))
}

fn fixed_point(m: &Model, kind: MapKind, p: f64) -> Result<BeliefField> {
    let report = solve(m, kind, &SolveParams::new(p, 1e-12, 200_000))?;
    if !report.converged {
        return Err(Error::invalid(format!("map {kind} did not converge in {} iterations", report.iterations)));
    }
    Ok(report.field)
}

fn solver_p(ctx: &mut Ctx) -> f64 {
    *[0.5, 0.1, 0.05].choose(&mut ctx.rng).expect("non-empty")
}

fn check_factored(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(10, 100);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = solver_p(ctx);
        let phi = fixed_point(&m, MapKind::Diffusion, p)?;
        for _ in 0..200 {
            let x = random_labeling(&mut ctx.rng, m.n(), m.k());
            let (h, f) = (factored_bound(&phi, &x), m.energy(&x)?);
            if h > f + 1e-9 {
                return fail(c, format!("H = {h} > F = {f}"));
            }
        }
    }
    Ok((n, None))
}

fn check_bracket(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(10, 100);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = solver_p(ctx);
        let report = solve(&m, MapKind::Diffusion, &SolveParams::new(p, 1e-12, 200_000))?;
        let b = bracket(&m, &report)?;
        let (_, opt) = brute_force_min(&m)?;
        if b.lower - 1e-6 > opt || opt > b.upper + 1e-12 {
            return fail(c, (b.lower, opt, b.upper));
        }
    }
    Ok((n, None))
}

fn check_max_marginals(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(10, 100);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = solver_p(ctx);
        let phi = fixed_point(&m, MapKind::Control, p)?;
        let f = max_marginals(&m)?;
        for (idx, (a, b)) in phi.values().iter().zip(f.values()).enumerate() {
            if *a < -1e-12 || *a > b + 1e-9 {
                return fail(c, format!("entry {idx}: {a} vs max-marginal {b}"));
            }
        }
        if !apply_s(&m, p, &f)?.le(&f, 1e-9) {
            return fail(c, "S f exceeds f");
        }
    }
    Ok((n, None))
}

fn check_lp(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(10, 100);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = solver_p(ctx);
        let phi = fixed_point(&m, MapKind::Diffusion, p)?;
        if !check_lp_feasible(&m, p, &phi, 1e-8)? {
            return fail(c, "fixed point rejected");
        }
        let mut shifted = phi.clone();
        shifted.values_mut().iter_mut().for_each(|v| *v += 1.0);
        if check_lp_feasible(&m, p, &shifted, 1e-8)? {
            return fail(c, "fixed point + 1 accepted");
        }
    }
    Ok((n, None))
}

fn check_uniqueness(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(10, 100);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = solver_p(ctx);
        for kind in [MapKind::Diffusion, MapKind::Control] {
            let params = SolveParams::new(p, 1e-11, 200_000);
            let a = solve(&m, kind, &params)?;
            let init = random_field(&mut ctx.rng, m.n(), m.k(), 50.0);
            let b = solve(&m, kind, &params.clone().with_init(init))?;
            let gap = a.field.dist(&b.field, kind);
            if gap > 2.0 * (a.certified_distance + b.certified_distance) + 1e-12 {
                return fail(c, format!("map {kind}: fields differ by {gap}"));
            }
        }
    }
    Ok((n, None))
}

fn check_a_posteriori(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(10, 100);
    for c in 0..n {
        let m = ctx.model(&small());
        let p = solver_p(ctx);
        for kind in [MapKind::Diffusion, MapKind::Control] {
            let reference = solve(&m, kind, &SolveParams::new(p, 1e-13, 400_000))?.field;
            let mut worst: Option<String> = None;
            let mut phi = BeliefField::for_model(&m);
            let mut previous: Option<f64> = None;
            for it in 0..2_000 {
                let next = ctx.apply(kind, &m, p, &phi)?;
                let residual = next.dist(&phi, kind);
                let dist = reference.dist(&phi, kind);
                if dist > residual / p + 1e-9 {
                    worst = Some(format!("map {kind}, iterate {it}: distance {dist} > {}", residual / p));
                } else if previous.is_some_and(|r| residual > (1.0 - p) * r + 1e-12) {
                    worst = Some(format!("map {kind}, iteration {}: residual ratio above q", it + 1));
                }
                if worst.is_some() || residual <= 1e-10 {
                    break;
                }
                previous = Some(residual);
                phi = next;
            }
            if let Some(w) = worst {
                return fail(c, w);
            }
        }
    }
    Ok((n, None))
}

fn check_regular(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(20, 200);
    for c in 0..n {
        let (graph, d) = if ctx.rng.random_bool(0.5) {
            (Graph::cycle(ctx.rng.random_range(3..9))?, 2.0)
        } else {
            let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
            (Graph::from_edges(4, &edges)?, 3.0)
        };
        let k = ctx.rng.random_range(1..4);
        let unary = (0..graph.n() * k).map(|_| ctx.rng.random_range(0.0..3.0)).collect();
        let pairwise = (0..graph.m()).map(|_| random_pairwise(&mut ctx.rng, k, 3.0, true)).collect();
        let m = ctx.inject(Model::with_uniform_weights(graph, k, unary, pairwise)?);
        let scaled = m.with_pairwise_scaled(2.0 / d);
        let p = ctx.p();
        let phi = random_field(&mut ctx.rng, m.n(), k, 10.0);
        let s = ctx.apply(MapKind::Control, &m, p, &phi)?;
        let t = ctx.apply(MapKind::Diffusion, &scaled, p, &phi)?;
        let gap = s.dist_inf(&t);
        if gap > 1e-12 {
            return fail(c, format!("S and rescaled T differ by {gap}"));
        }
    }
    Ok((n, None))
}

fn check_mdp(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(5, 30);
    let spec = RandomModelSpec { max_n: 5, max_k: 3, max_degree: 3, ..small() };
    for c in 0..n {
        let m = ctx.model(&spec);
        let p = ctx.p();
        let mdp = MdpInstance::new(&m, p)?;
        for _ in 0..5 {
            let phi = random_field(&mut ctx.rng, m.n(), m.k(), 10.0);
            let s = ctx.apply(MapKind::Control, &m, p, &phi)?;
            let b = mdp.bellman(phi.values())?;
            let gap = s.values().iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if gap > 1e-12 {
                return fail(c, format!("S and Bellman backup differ by {gap}"));
            }
        }
    }
    Ok((n, None))
}

fn check_dp(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let n = ctx.count(6, 40);
    for c in 0..n {
        let side = if c % 2 == 0 { 3 } else { 4 };
        let g = Graph::grid(side, side)?;
        let alpha: Vec<f64> = (0..g.n()).map(|_| ctx.rng.random_range(-1.0..1.0)).collect();
        let beta: Vec<f64> = (0..g.m()).map(|_| ctx.rng.random_range(-3.0..3.0)).collect();
        let (m, _) = ising_to_model(&alpha, &beta, side, side)?;
        let (x_dp, e_dp) = column_dp_min(&m, side, side)?;
        let (_, e_bf) = brute_force_min(&m)?;
        if e_dp != e_bf || m.energy(&x_dp)? != e_bf {
            return fail(c, (e_dp, e_bf));
        }
    }
    Ok((n, None))
}

fn check_monte_carlo(ctx: &mut Ctx) -> Result<(usize, Option<String>)> {
    let spec = RandomModelSpec { max_n: 5, max_k: 3, max_degree: 3, ..small() };
    let n = 3;
    for c in 0..n {
        let m = ctx.model(&spec);
        let p = 0.2;
        let phi = fixed_point(&m, MapKind::Control, p)?;
        let policy = greedy_policy_from(&phi, &m, p);
        let horizon = horizon_for(&m, p, 1e-6);
        let start = (ctx.rng.random_range(0..m.n()), ctx.rng.random_range(0..m.k()));
        let est = monte_carlo_value(&m, p, &policy, start, 100_000, horizon, ctx.rng.random())?;
        let target = phi.vertex(start.0)[start.1];
        if (est.mean - target).abs() > 3.0 * est.stderr + est.tail_bound + 1e-9 {
            return fail(c, format!("estimate {} +- {} vs value {target}", est.mean, est.stderr));
        }
    }
    Ok((n, None))
}
