//! The diffusion map `T` and the optimal-control map `S`, the fixed-point
//! solver and the bounds derived from their fixed points.
//!
//! For a field of beliefs `phi` (one vector of length `k` per vertex):
//!
//! ```text
//! (T phi)_i(t) = p g_i(t) + sum_{j in N(i)} min_u [ p/2 h_ij(t, u) + q w_ji phi_j(u) ]
//! (S phi)_i(t) = p g_i(t) + sum_{j in N(i)} w_ij min_u [ p h_ij(t, u) + q phi_j(u) ]
//! ```
//!
//! with `q = 1 - p`. `T` contracts by `q` in the norm `sum_i max_t |phi_i(t)|`,
//! `S` contracts by `q` in the max norm.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fastmin::{minconv, MessageProblem, Scratch};
use crate::model::{Labeling, Model};

/// Below this many scalar inner-minimization inputs per sweep the update runs
/// on the calling thread.
const PARALLEL_THRESHOLD: usize = 1 << 15;

/// One belief vector per vertex, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefField {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl BeliefField {
    pub fn zeros(n: usize, k: usize) -> Self {
        BeliefField { n, k, values: vec![0.0; n * k] }
    }

    pub fn from_values(n: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * k {
            return Err(Error::invalid(format!("belief field needs {} values, got {}", n * k, values.len())));
        }
        Ok(BeliefField { n, k, values })
    }

    pub fn for_model(model: &Model) -> Self {
        BeliefField::zeros(model.n(), model.k())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn vertex_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `sum_i max_t |a_i(t) - b_i(t)|`
    pub fn dist_inf1(&self, other: &BeliefField) -> f64 {
        self.values
            .chunks(self.k)
            .zip(other.values.chunks(self.k))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            .sum()
    }

    /// `max_i max_t |a_i(t) - b_i(t)|`
    pub fn dist_inf(&self, other: &BeliefField) -> f64 {
        self.values.iter().zip(&other.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Distance in the norm under which `kind` contracts.
    pub fn dist(&self, other: &BeliefField, kind: MapKind) -> f64 {
        match kind {
            MapKind::Diffusion => self.dist_inf1(other),
            MapKind::Control => self.dist_inf(other),
        }
    }

    /// True if every entry of `self` is `<= other + slack`.
    pub fn le(&self, other: &BeliefField, slack: f64) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| *a <= *b + slack)
    }

    fn check_shape(&self, model: &Model) -> Result<()> {
        if self.n != model.n() || self.k != model.k() {
            return Err(Error::invalid(format!(
                "belief field is {}x{}, model is {}x{}",
                self.n,
                self.k,
                model.n(),
                model.k()
            )));
        }
        Ok(())
    }
}

/// Which contraction map to iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    /// `T`: non-linear diffusion of beliefs.
    Diffusion,
    /// `S`: value iteration for the random-walk decision process.
    Control,
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::Diffusion => write!(f, "T"),
            MapKind::Control => write!(f, "S"),
        }
    }
}

impl FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t" | "diffusion" => Ok(MapKind::Diffusion),
            "s" | "control" => Ok(MapKind::Control),
            other => Err(Error::invalid(format!("unknown map '{other}', expected T or S"))),
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("p must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// Evaluates `kind` at `src`, writing into `dst`.
pub fn apply_into(kind: MapKind, model: &Model, p: f64, src: &BeliefField, dst: &mut BeliefField) -> Result<()> {
    check_p(p)?;
    src.check_shape(model)?;
    dst.check_shape(model)?;
    let k = model.k();
    let work = model.graph().num_darts() * k;
    let update = |scratch: &mut VertexScratch, (i, out): (usize, &mut [f64])| match kind {
        MapKind::Diffusion => update_diffusion(model, p, src, i, out, scratch),
        MapKind::Control => update_control(model, p, src, i, out, scratch),
    };
    if work < PARALLEL_THRESHOLD {
        let mut scratch = VertexScratch::new(k);
        dst.values.chunks_mut(k).enumerate().for_each(|item| update(&mut scratch, item));
    } else {
        dst.values.par_chunks_mut(k).enumerate().with_min_len(64).for_each_init(|| VertexScratch::new(k), update);
    }
    Ok(())
}

struct VertexScratch {
    costs: Vec<f64>,
    message: Vec<f64>,
    envelope: Scratch,
}

impl VertexScratch {
    fn new(k: usize) -> Self {
        VertexScratch { costs: vec![0.0; k], message: vec![0.0; k], envelope: Scratch::with_capacity(k) }
    }
}

fn update_diffusion(model: &Model, p: f64, phi: &BeliefField, i: usize, out: &mut [f64], s: &mut VertexScratch) {
    let q = 1.0 - p;
    let weights = model.weights();
    for (o, g) in out.iter_mut().zip(model.unary(i)) {
        *o = p * g;
    }
    for dart in model.graph().darts_from(i) {
        // Weight of the walk step into i.
        let w_in = q * weights.get(dart.reverse);
        for (c, f) in s.costs.iter_mut().zip(phi.vertex(dart.head)) {
            *c = w_in * f;
        }
        let problem = MessageProblem::new(&s.costs, 0.5 * p, model.pairwise(dart.edge), dart.orientation());
        minconv(&problem, &mut s.message, &mut s.envelope);
        for (o, m) in out.iter_mut().zip(&s.message) {
            *o += m;
        }
    }
}

fn update_control(model: &Model, p: f64, phi: &BeliefField, i: usize, out: &mut [f64], s: &mut VertexScratch) {
    let q = 1.0 - p;
    let weights = model.weights();
    let darts = model.graph().dart_range(i);
    for (o, g) in out.iter_mut().zip(model.unary(i)) {
        *o = p * g;
    }
    for d in darts {
        let dart = &model.graph().darts()[d];
        for (c, f) in s.costs.iter_mut().zip(phi.vertex(dart.head)) {
            *c = q * f;
        }
        let problem = MessageProblem::new(&s.costs, p, model.pairwise(dart.edge), dart.orientation());
        minconv(&problem, &mut s.message, &mut s.envelope);
        let w = weights.get(d);
        for (o, m) in out.iter_mut().zip(&s.message) {
            *o += w * m;
        }
    }
}

pub fn apply(kind: MapKind, model: &Model, p: f64, phi: &BeliefField) -> Result<BeliefField> {
    let mut out = BeliefField::for_model(model);
    apply_into(kind, model, p, phi, &mut out)?;
    Ok(out)
}

pub fn apply_t(model: &Model, p: f64, phi: &BeliefField) -> Result<BeliefField> {
    apply(MapKind::Diffusion, model, p, phi)
}

pub fn apply_s(model: &Model, p: f64, phi: &BeliefField) -> Result<BeliefField> {
    apply(MapKind::Control, model, p, phi)
}

/// Iteration settings. `q = 1 - p` is always derived, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveParams {
    pub p: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Starting field; zero when `None`.
    pub init: Option<BeliefField>,
}

impl SolveParams {
    pub fn new(p: f64, tol: f64, max_iter: usize) -> Self {
        SolveParams { p, tol, max_iter, init: None }
    }

    pub fn with_init(mut self, init: BeliefField) -> Self {
        self.init = Some(init);
        self
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of a fixed-point solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub kind: MapKind,
    pub p: f64,
    pub field: BeliefField,
    pub iterations: usize,
    /// Distance between the last two iterates in the map's own norm.
    pub residual: f64,
    /// `residual / p`, an upper bound on the distance from `field` to the
    /// exact fixed point.
    pub certified_distance: f64,
    pub converged: bool,
    /// Residual after every iteration.
    pub residuals: Vec<f64>,
}

/// Synchronous fixed-point iteration of `kind` until the residual drops to
/// `tol` or `max_iter` sweeps have run.
pub fn solve(model: &Model, kind: MapKind, params: &SolveParams) -> Result<FixedPointReport> {
    solve_with(model, kind, params, |_, _| {})
}

/// [`solve`] with a callback invoked after each sweep with the iteration
/// number and the new field.
pub fn solve_with<F>(model: &Model, kind: MapKind, params: &SolveParams, mut observe: F) -> Result<FixedPointReport>
where
    F: FnMut(usize, &BeliefField),
{
    params.validate()?;
    let mut current = match &params.init {
        Some(init) => {
            init.check_shape(model)?;
            if !init.is_finite() {
                return Err(Error::invalid("initial field has non-finite entries"));
            }
            init.clone()
        }
        None => BeliefField::for_model(model),
    };
    let mut next = BeliefField::for_model(model);
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        apply_into(kind, model, params.p, &current, &mut next)?;
        iterations += 1;
        if !next.is_finite() {
            return Err(Error::Numerical {
                iteration: iterations,
                message: format!("map {kind} produced a non-finite belief"),
            });
        }
        let r = next.dist(&current, kind);
        std::mem::swap(&mut current, &mut next);
        residuals.push(r);
        observe(iterations, &current);
        if r <= params.tol {
            converged = true;
            break;
        }
    }
    let residual = residuals.last().copied().unwrap_or(0.0);
    Ok(FixedPointReport {
        kind,
        p: params.p,
        field: current,
        iterations,
        residual,
        certified_distance: residual / params.p,
        converged,
        residuals,
    })
}

/// Per-vertex argmin, ties to the smallest label.
pub fn decode(phi: &BeliefField) -> Labeling {
    let labels = phi
        .values
        .chunks(phi.k)
        .map(|row| {
            let mut best = 0;
            for (t, &v) in row.iter().enumerate().skip(1) {
                if v < row[best] {
                    best = t;
                }
            }
            best
        })
        .collect();
    Labeling(labels)
}

/// `H(x) = sum_i phi_i(x_i)`.
pub fn factored_bound(phi: &BeliefField, x: &Labeling) -> f64 {
    x.as_slice().iter().enumerate().map(|(i, &l)| phi.vertex(i)[l]).sum()
}

/// Lower and upper bounds on the minimum energy from a `T` fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub labeling: Labeling,
}

/// Bounds the optimal energy: `lower = sum_i phi_i(x_i) <= min F <= F(x) = upper`
/// with `x` the decoded labeling. Exact at the true fixed point; a converged
/// report is within `certified_distance` of it.
pub fn bracket(model: &Model, report: &FixedPointReport) -> Result<Bracket> {
    if report.kind != MapKind::Diffusion {
        return Err(Error::invalid("the energy bracket needs a fixed point of T"));
    }
    if !report.converged {
        return Err(Error::invalid("the energy bracket needs a converged report"));
    }
    let labeling = decode(&report.field);
    let lower = factored_bound(&report.field, &labeling);
    let upper = model.energy(&labeling)?;
    Ok(Bracket { lower, upper, labeling })
}

/// True iff `phi <= T phi + tol` everywhere, the constraint set whose unique
/// maximal element is the fixed point of `T`.
pub fn check_lp_feasible(model: &Model, p: f64, phi: &BeliefField, tol: f64) -> Result<bool> {
    let t_phi = apply_t(model, p, phi)?;
    Ok(phi.le(&t_phi, tol))
}

/// The `S` fixed point, which bounds each max-marginal from below.
pub fn value_lower_bounds(report: &FixedPointReport) -> Result<BeliefField> {
    if report.kind != MapKind::Control {
        return Err(Error::invalid("max-marginal bounds need a fixed point of S"));
    }
    if !report.converged {
        return Err(Error::invalid("max-marginal bounds need a converged report"));
    }
    Ok(report.field.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Graph, PairwiseCost};

    fn five_cycle(repulsive: bool) -> Model {
        let graph = Graph::cycle(5).unwrap();
        let mut unary = vec![0.0; 10];
        unary[0] = 1.0;
        let h = if repulsive {
            PairwiseCost::Dense(vec![1.0, 0.0, 0.0, 1.0])
        } else {
            PairwiseCost::Potts { penalty: 1.0 }
        };
        Model::with_uniform_weights(graph, 2, unary, vec![h; 5]).unwrap()
    }

    fn zero_model() -> Model {
        let g = Graph::grid(2, 3).unwrap();
        let m = g.m();
        Model::with_uniform_weights(g, 3, vec![0.0; 18], vec![PairwiseCost::Potts { penalty: 0.0 }; m]).unwrap()
    }

    #[test]
    fn zero_costs_fixed_point() {
        let m = zero_model();
        for kind in [MapKind::Diffusion, MapKind::Control] {
            let out = apply(kind, &m, 0.3, &BeliefField::for_model(&m)).unwrap();
            assert!(out.values().iter().all(|&v| v == 0.0));
            let r = solve(&m, kind, &SolveParams::new(0.3, 1e-12, 100)).unwrap();
            assert!(r.converged);
            assert_eq!(r.iterations, 1);
            assert_eq!(r.residual, 0.0);
        }
    }

    #[test]
    fn single_edge_single_label() {
        let g = Graph::path(2).unwrap();
        let m = Model::with_uniform_weights(g, 1, vec![2.0, 5.0], vec![PairwiseCost::Dense(vec![3.0])]).unwrap();
        let p = 0.25;
        let phi = BeliefField::from_values(2, 1, vec![7.0, 11.0]).unwrap();
        let t = apply_t(&m, p, &phi).unwrap();
        assert_eq!(t.vertex(0)[0], p * 2.0 + (p / 2.0 * 3.0 + 0.75 * 1.0 * 11.0));
        let s = apply_s(&m, p, &phi).unwrap();
        assert_eq!(s.vertex(1)[0], p * 5.0 + (p * 3.0 + 0.75 * 7.0));
    }

    #[test]
    fn five_cycle_decodes() {
        for (repulsive, expected) in [(false, vec![2, 2, 2, 2, 2]), (true, vec![2, 1, 2, 2, 1])] {
            let m = five_cycle(repulsive);
            let r = solve(&m, MapKind::Diffusion, &SolveParams::new(0.1, 1e-13, 10_000)).unwrap();
            assert!(r.converged);
            assert_eq!(decode(&r.field).one_based(), expected);
        }
    }

    #[test]
    fn five_cycle_bracket() {
        let m = five_cycle(false);
        let r = solve(&m, MapKind::Diffusion, &SolveParams::new(0.1, 1e-13, 10_000)).unwrap();
        let b = bracket(&m, &r).unwrap();
        assert_eq!(b.upper, 0.0);
        assert!(b.lower <= 1e-12);
        assert!(bracket(&m, &solve(&m, MapKind::Control, &SolveParams::new(0.1, 1e-9, 10_000)).unwrap()).is_err());
    }

    #[test]
    fn decode_ties_go_low() {
        let phi = BeliefField::from_values(2, 2, vec![0.5, 0.2, 0.3, 0.3]).unwrap();
        assert_eq!(decode(&phi).0, vec![1, 0]);
    }

    #[test]
    fn lp_feasibility_examples() {
        let m = five_cycle(true);
        let p = 0.1;
        assert!(check_lp_feasible(&m, p, &BeliefField::for_model(&m), 0.0).unwrap());
        let r = solve(&m, MapKind::Diffusion, &SolveParams::new(p, 1e-13, 10_000)).unwrap();
        assert!(check_lp_feasible(&m, p, &r.field, 1e-8).unwrap());
        let mut lifted = r.field.clone();
        lifted.values_mut().iter_mut().for_each(|v| *v += 1.0);
        assert!(!check_lp_feasible(&m, p, &lifted, 1e-8).unwrap());
    }

    #[test]
    fn shape_and_parameter_errors() {
        let m = five_cycle(false);
        let wrong = BeliefField::zeros(4, 2);
        assert!(apply_t(&m, 0.1, &wrong).is_err());
        assert!(apply_s(&m, 1.0, &BeliefField::for_model(&m)).is_err());
        assert!(solve(&m, MapKind::Control, &SolveParams::new(0.1, 0.0, 10)).is_err());
        assert!(solve(&m, MapKind::Control, &SolveParams::new(0.1, 1e-3, 0)).is_err());
        assert!(solve(&m, MapKind::Control, &SolveParams::new(0.1, 1e-3, 10).with_init(wrong)).is_err());
    }

    #[test]
    fn overflow_reports_iteration() {
        let g = Graph::path(2).unwrap();
        let m =
            Model::with_uniform_weights(g, 2, vec![1.7e308; 4], vec![PairwiseCost::Dense(vec![1.7e308; 4])]).unwrap();
        let init = BeliefField::from_values(2, 2, vec![1.7e308; 4]).unwrap();
        let err = solve(&m, MapKind::Control, &SolveParams::new(0.5, 1e-9, 10).with_init(init)).unwrap_err();
        assert!(matches!(err, Error::Numerical { iteration: 1, .. }));
    }

    #[test]
    fn value_bounds_need_s() {
        let m = five_cycle(false);
        let t = solve(&m, MapKind::Diffusion, &SolveParams::new(0.1, 1e-10, 10_000)).unwrap();
        assert!(value_lower_bounds(&t).is_err());
        let s = solve(&m, MapKind::Control, &SolveParams::new(0.1, 1e-10, 10_000)).unwrap();
        let f = value_lower_bounds(&s).unwrap();
        assert!(f.values().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn map_kind_parses() {
        assert_eq!("T".parse::<MapKind>().unwrap(), MapKind::Diffusion);
        assert_eq!("s".parse::<MapKind>().unwrap(), MapKind::Control);
        assert!("x".parse::<MapKind>().is_err());
    }
}
