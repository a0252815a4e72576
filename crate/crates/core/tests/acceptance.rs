//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mrf_contract::fastmin::{dense_minconv, minconv, MessageProblem, Scratch};
use mrf_contract::maps::{
    apply_s, apply_t, bracket, check_lp_feasible, decode, factored_bound, solve, solve_with, value_lower_bounds,
    BeliefField, MapKind, SolveParams,
};
use mrf_contract::model::{Orientation, PairwiseCost};
use mrf_contract::oracles::{
    brute_force_min, column_dp_min, greedy_policy_from, horizon_for, max_marginals, monte_carlo_value, MdpInstance,
};
use mrf_contract::problems::{
    add_gaussian_noise, cycle_example, grid_benchmark, labeling_to_image, piecewise_constant_image, random_grid,
    restoration_model, restoration_model_with_levels, rmse, summarize, Algorithm, BenchConfig, GridSpec,
};
use mrf_contract::verify::{random_field, random_labeling, random_model, random_pairwise, RandomModelSpec};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIXED_POINT_RESIDUAL: f64 = 1e-12;
const CONTRACTION_SLACK: f64 = 1e-12;
const BOUND_SLACK: f64 = 1e-9;
const BRACKET_SLACK: f64 = 1e-6;
const NONNEG_SLACK: f64 = 1e-12;
const BELLMAN_TOL: f64 = 1e-12;
const MDP_FIXED_POINT_TOL: f64 = 1e-10;
const MC_SAMPLES: usize = 100_000;
const MC_SIGMAS: f64 = 3.0;
const KERNEL_TOL: f64 = 1e-9;
const KERNEL_RATIO: (f64, f64) = (1.6, 2.6);
const LP_TOL: f64 = 1e-8;
const RESTORE_RATIO_MAX: f64 = 2.6;
const RATE_SLACK: f64 = 1e-9;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_secs, || {
        format!("runtime {:.2} s exceeds {limit_secs} s", elapsed.as_secs_f64())
    })
}

fn calibrate(f: &mut impl FnMut()) -> usize {
    let mut reps = 1usize;
    loop {
        let start = Instant::now();
        for _ in 0..reps {
            f();
        }
        if start.elapsed() >= Duration::from_millis(30) {
            return reps;
        }
        reps *= 2;
    }
}

/// Seconds per call of `a` and `b`, each the minimum over trials that
/// alternate between the two so that machine noise hits both alike.
fn paired_seconds(mut a: impl FnMut(), mut b: impl FnMut()) -> (f64, f64) {
    let (ra, rb) = (calibrate(&mut a), calibrate(&mut b));
    let mut best = (f64::INFINITY, f64::INFINITY);
    for _ in 0..9 {
        let start = Instant::now();
        for _ in 0..ra {
            a();
        }
        best.0 = best.0.min(start.elapsed().as_secs_f64() / ra as f64);
        let start = Instant::now();
        for _ in 0..rb {
            b();
        }
        best.1 = best.1.min(start.elapsed().as_secs_f64() / rb as f64);
    }
    best
}

fn small_spec() -> RandomModelSpec {
    RandomModelSpec { max_n: 8, max_k: 3, ..RandomModelSpec::default() }
}

fn c1_cycle_examples() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    for (repulsive, expected) in [(false, [2, 2, 2, 2, 2]), (true, [2, 1, 2, 2, 1])] {
        let m = cycle_example(repulsive);
        let r = solve(&m, MapKind::Diffusion, &SolveParams::new(0.1, FIXED_POINT_RESIDUAL / 10.0, 100_000))
            .map_err(|e| e.to_string())?;
        ensure(r.converged && r.residual < FIXED_POINT_RESIDUAL, || format!("residual {}", r.residual))?;
        let x = decode(&r.field);
        ensure(x.one_based() == expected, || format!("decoded {:?}, expected {expected:?}", x.one_based()))?;
        let (_, best) = brute_force_min(&m).map_err(|e| e.to_string())?;
        let energy = m.energy(&x).map_err(|e| e.to_string())?;
        ensure(energy == best, || format!("F(decode) = {energy}, minimum {best}"))?;
        notes.push(format!("{:?} F={energy}", x.one_based()));
    }
    within(start.elapsed(), 1.0)?;
    Ok(notes.join(", "))
}

fn c2_contraction() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = RandomModelSpec { max_n: 10, max_k: 5, ..RandomModelSpec::default() };
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let m = random_model(&mut rng, &spec);
        let p = *[0.9, 0.5, 0.1, 0.01].choose(&mut rng).unwrap();
        let q = 1.0 - p;
        let phi = random_field(&mut rng, m.n(), m.k(), 10.0);
        let psi = random_field(&mut rng, m.n(), m.k(), 10.0);
        let (tphi, tpsi) = (apply_t(&m, p, &phi).unwrap(), apply_t(&m, p, &psi).unwrap());
        let global = tphi.dist_inf1(&tpsi) - q * phi.dist_inf1(&psi);
        ensure(global <= CONTRACTION_SLACK, || format!("case {case}: T global excess {global}"))?;
        worst = worst.max(global);
        let g = m.graph();
        for i in 0..m.n() {
            let left = tphi.vertex(i).iter().zip(tpsi.vertex(i)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let right: f64 = g
                .darts_from(i)
                .iter()
                .map(|d| {
                    let gap = phi.vertex(d.head).iter().zip(psi.vertex(d.head)).map(|(a, b)| (a - b).abs());
                    m.weights().get(d.reverse) * gap.fold(0.0, f64::max)
                })
                .sum();
            let excess = left - q * right;
            ensure(excess <= CONTRACTION_SLACK, || format!("case {case}: T vertex {i} excess {excess}"))?;
        }
        let s_excess = apply_s(&m, p, &phi).unwrap().dist_inf(&apply_s(&m, p, &psi).unwrap()) - q * phi.dist_inf(&psi);
        ensure(s_excess <= CONTRACTION_SLACK, || format!("case {case}: S excess {s_excess}"))?;
        worst = worst.max(s_excess);
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("100 models, largest excess over q-contraction {worst:.2e}"))
}

fn c3_bounds() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tightest: f64 = f64::INFINITY;
    for case in 0..20 {
        let m = random_model(&mut rng, &small_spec());
        let p = if case % 2 == 0 { 0.5 } else { 0.1 };
        let t = solve(&m, MapKind::Diffusion, &SolveParams::new(p, 1e-12, 1_000_000)).unwrap();
        for _ in 0..1000 {
            let x = random_labeling(&mut rng, m.n(), m.k());
            let (h, f) = (factored_bound(&t.field, &x), m.energy(&x).unwrap());
            ensure(h <= f + BOUND_SLACK, || format!("case {case}: H = {h} > F = {f}"))?;
        }
        let b = bracket(&m, &t).map_err(|e| e.to_string())?;
        let (_, opt) = brute_force_min(&m).unwrap();
        ensure(b.lower - BRACKET_SLACK <= opt && opt <= b.upper, || {
            format!("case {case}: bracket [{}, {}] misses {opt}", b.lower, b.upper)
        })?;
        tightest = tightest.min(opt - b.lower);
        let s = solve(&m, MapKind::Control, &SolveParams::new(p, 1e-12, 1_000_000)).unwrap();
        let phi = value_lower_bounds(&s).map_err(|e| e.to_string())?;
        let f = max_marginals(&m).unwrap();
        for (a, b) in phi.values().iter().zip(f.values()) {
            ensure(*a >= -NONNEG_SLACK && *a <= b + BOUND_SLACK, || format!("case {case}: {a} vs f = {b}"))?;
        }
        ensure(apply_s(&m, p, &f).unwrap().le(&f, BOUND_SLACK), || format!("case {case}: S f > f"))?;
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("20 models, smallest gap min F - lower = {tightest:.3e}"))
}

fn c4_mdp() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = RandomModelSpec { max_n: 5, max_k: 3, max_degree: 3, ..RandomModelSpec::default() };
    let mut max_z: f64 = 0.0;
    for case in 0..10 {
        let m = random_model(&mut rng, &spec);
        let p = if case % 2 == 0 { 0.5 } else { 0.3 };
        let mdp = MdpInstance::new(&m, p).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let phi = random_field(&mut rng, m.n(), m.k(), 10.0);
            let s = apply_s(&m, p, &phi).unwrap();
            let b = mdp.bellman(phi.values()).unwrap();
            let gap = s.values().iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            ensure(gap <= BELLMAN_TOL, || format!("case {case}: S vs Bellman gap {gap}"))?;
        }
        let fixed = solve(&m, MapKind::Control, &SolveParams::new(p, 1e-13, 1_000_000)).unwrap().field;
        let vi = mdp.value_iteration(1e-13, 1_000_000).unwrap();
        let gap = fixed.values().iter().zip(&vi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ensure(gap <= MDP_FIXED_POINT_TOL, || format!("case {case}: fixed points differ by {gap}"))?;

        let policy = greedy_policy_from(&fixed, &m, p);
        let horizon = horizon_for(&m, p, 1e-9);
        let state = (rng.random_range(0..m.n()), rng.random_range(0..m.k()));
        let est = monte_carlo_value(&m, p, &policy, state, MC_SAMPLES, horizon, rng.random()).unwrap();
        let target = fixed.vertex(state.0)[state.1];
        let allowed = MC_SIGMAS * est.stderr + est.tail_bound;
        ensure((est.mean - target).abs() <= allowed, || {
            format!("case {case}: Monte-Carlo {} vs value {target} (allowed {allowed})", est.mean)
        })?;
        if est.stderr > 0.0 {
            max_z = max_z.max((est.mean - target).abs() / est.stderr);
        }
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("10 models, largest Monte-Carlo deviation {max_z:.2} standard errors"))
}

/// Time ratio of one min-convolution at `k = 2 * half` versus `k = half`.
fn kernel_ratio(form_big: &PairwiseCost, form_small: &PairwiseCost, half: usize, rng: &mut ChaCha8Rng) -> f64 {
    let big: Vec<f64> = (0..2 * half).map(|_| rng.random_range(0.0..100.0)).collect();
    let small = big[..half].to_vec();
    let (mut out_big, mut out_small) = (vec![0.0; 2 * half], vec![0.0; half]);
    let (mut s_big, mut s_small) = (Scratch::with_capacity(2 * half), Scratch::with_capacity(half));
    let (t_big, t_small) = paired_seconds(
        || {
            let problem = MessageProblem::new(std::hint::black_box(&big), 1.0, form_big, Orientation::Forward);
            minconv(&problem, &mut out_big, &mut s_big);
            std::hint::black_box(&out_big);
        },
        || {
            let problem = MessageProblem::new(std::hint::black_box(&small), 1.0, form_small, Orientation::Forward);
            minconv(&problem, &mut out_small, &mut s_small);
            std::hint::black_box(&out_small);
        },
    );
    t_big / t_small
}

fn c5_kernels() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases = 0;
    let mut scratch = Scratch::with_capacity(256);
    for k in [1usize, 2, 3, 8, 64, 256] {
        for _ in 0..400 {
            let form = random_pairwise(&mut rng, k, 10.0, true);
            let costs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..100.0)).collect();
            let scale = rng.random_range(0.0..2.0);
            let orient = if rng.random_bool(0.5) { Orientation::Forward } else { Orientation::Reverse };
            let problem = MessageProblem::new(&costs, scale, &form, orient);
            let (mut fast, mut dense) = (vec![0.0; k], vec![0.0; k]);
            minconv(&problem, &mut fast, &mut scratch);
            dense_minconv(&problem, &mut dense);
            let err = fast.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            ensure(err <= KERNEL_TOL, || format!("{form:?} k={k}: error {err}"))?;
            cases += 1;
        }
    }
    let forms = [
        ("potts", PairwiseCost::Potts { penalty: 3.0 }),
        ("two-step", PairwiseCost::StereoTwoStep { step: 1.0, jump: 4.0 }),
        ("trunc-quad", PairwiseCost::TruncatedQuadratic { scale: 0.05, cap: 100.0 }),
        ("trunc-linear", PairwiseCost::TruncatedLinear { scale: 1.0, cap: 20.0 }),
    ];
    let mut ratios = Vec::new();
    for (name, form) in &forms {
        let ratio = kernel_ratio(form, form, 128, &mut rng);
        ensure((KERNEL_RATIO.0..=KERNEL_RATIO.1).contains(&ratio), || {
            format!("{name}: time ratio k=256/k=128 = {ratio:.2}")
        })?;
        ratios.push(format!("{name} {ratio:.2}"));
    }
    let dense = PairwiseCost::Dense(vec![1.0; 256 * 256]);
    let dense_small = PairwiseCost::Dense(vec![1.0; 128 * 128]);
    let dense_ratio = kernel_ratio(&dense, &dense_small, 128, &mut rng);
    within(start.elapsed(), 30.0)?;
    Ok(format!("{cases} sweeps exact; k=256/k=128 time ratios: {} (dense {dense_ratio:.2})", ratios.join(", ")))
}

fn c6_lp_monotone() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..20 {
        let m = random_model(&mut rng, &small_spec());
        let p = *[0.5, 0.1, 0.05].choose(&mut rng).unwrap();
        for kind in [MapKind::Diffusion, MapKind::Control] {
            let mut prev = BeliefField::for_model(&m);
            let mut ok = true;
            solve_with(&m, kind, &SolveParams::new(p, 1e-300, 200), |_, phi| {
                ok &= prev.le(phi, 0.0);
                prev = phi.clone();
            })
            .unwrap();
            ensure(ok, || format!("case {case}: iterates of {kind} decreased"))?;
        }
        let t = solve(&m, MapKind::Diffusion, &SolveParams::new(p, 1e-12, 1_000_000)).unwrap();
        ensure(check_lp_feasible(&m, p, &t.field, LP_TOL).unwrap(), || format!("case {case}: fixed point rejected"))?;
        let mut lifted = t.field.clone();
        lifted.values_mut().iter_mut().for_each(|v| *v += 1.0);
        ensure(!check_lp_feasible(&m, p, &lifted, LP_TOL).unwrap(), || format!("case {case}: phi + 1 accepted"))?;
        let mut bumped = t.field.clone();
        let idx = rng.random_range(0..bumped.values().len());
        bumped.values_mut()[idx] += 0.5;
        ensure(!check_lp_feasible(&m, p, &bumped, LP_TOL).unwrap(), || format!("case {case}: single bump accepted"))?;
    }
    within(start.elapsed(), 5.0)?;
    Ok("20 models, both maps monotone from 0; fixed point feasible, perturbations rejected".into())
}

fn c7_grid_ordering() -> Outcome {
    let start = Instant::now();
    let config = BenchConfig::new(10, 10.0, (0..20).collect());
    let rows = grid_benchmark(&config).map_err(|e| e.to_string())?;
    let summary = summarize(&rows);
    let get = |a: Algorithm| summary.iter().find(|s| s.algorithm == a).expect("algorithm ran");
    let table: Vec<String> =
        summary.iter().map(|s| format!("{} E={:.2} d={:.2}", s.algorithm, s.energy_mean, s.hamming_mean)).collect();
    let detail = table.join("; ");
    let (s_icm, t_icm, bp_icm) = (get(Algorithm::SIcm), get(Algorithm::TIcm), get(Algorithm::BpIcm));
    ensure(s_icm.hamming_mean < bp_icm.hamming_mean, || format!("Hamming S+ICM >= BP+ICM: {detail}"))?;
    ensure(t_icm.hamming_mean < bp_icm.hamming_mean, || format!("Hamming T+ICM >= BP+ICM: {detail}"))?;
    let (s, t, bp) = (get(Algorithm::S), get(Algorithm::T), get(Algorithm::Bp));
    ensure(bp.energy_mean < s.energy_mean, || format!("energy BP >= S: {detail}"))?;
    ensure(bp.energy_mean < t.energy_mean, || format!("energy BP >= T: {detail}"))?;
    within(start.elapsed(), 300.0)?;
    Ok(detail)
}

fn c8_dp_exact() -> Outcome {
    let start = Instant::now();
    for side in [3usize, 4] {
        for seed in 0..20 {
            let inst = random_grid(GridSpec { side, lambda: 3.0, seed }).unwrap();
            let (x_dp, e_dp) = column_dp_min(&inst.model, side, side).unwrap();
            let (x_bf, e_bf) = brute_force_min(&inst.model).unwrap();
            ensure(e_dp == e_bf, || format!("{side}x{side} seed {seed}: DP {e_dp} vs enumeration {e_bf}"))?;
            ensure(inst.model.energy(&x_dp).unwrap() == inst.model.energy(&x_bf).unwrap(), || "labelings".into())?;
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok("40 instances (3x3 and 4x4), energies identical".into())
}

fn c9_restoration() -> Outcome {
    let start = Instant::now();
    let clean = piecewise_constant_image(64, 64).unwrap();
    let noisy = add_gaussian_noise(&clean, 20.0, 9).unwrap();
    let model = restoration_model(&noisy, 0.05, 100.0).unwrap();
    let report = solve(&model, MapKind::Diffusion, &SolveParams::new(0.001, f64::MIN_POSITIVE, 100)).unwrap();
    let restored = labeling_to_image(&decode(&report.field), 64, 64, 1).unwrap();
    let (before, after) = (rmse(&noisy, &clean).unwrap(), rmse(&restored, &clean).unwrap());
    ensure(after < before, || format!("RMSE restored {after:.3} >= noisy {before:.3}"))?;
    let solve_seconds = start.elapsed().as_secs_f64();

    let half = restoration_model_with_levels(&noisy, 0.05, 100.0, 128).unwrap();
    let phi_full = BeliefField::for_model(&model);
    let phi_half = BeliefField::for_model(&half);
    let (t_full, t_half) = paired_seconds(
        || {
            std::hint::black_box(apply_t(&model, 0.001, &phi_full).unwrap());
        },
        || {
            std::hint::black_box(apply_t(&half, 0.001, &phi_half).unwrap());
        },
    );
    let ratio = t_full / t_half;
    ensure(ratio <= RESTORE_RATIO_MAX, || format!("per-iteration time ratio k=256/k=128 = {ratio:.2}"))?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "RMSE noisy {before:.4} -> restored {after:.4}; 100 iterations in {solve_seconds:.2} s; k ratio {ratio:.2}"
    ))
}

fn c10_rates() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut checked, mut ratios) = (0usize, 0usize);
    for case in 0..20 {
        let m = random_model(&mut rng, &small_spec());
        let p = *[0.5, 0.2, 0.1].choose(&mut rng).unwrap();
        let q = 1.0 - p;
        for kind in [MapKind::Diffusion, MapKind::Control] {
            let reference = solve(&m, kind, &SolveParams::new(p, 1e-13, 1_000_000)).unwrap().field;
            let mut iterates = vec![BeliefField::for_model(&m)];
            let report = solve_with(&m, kind, &SolveParams::new(p, 1e-11, 100_000), |_, phi| {
                iterates.push(phi.clone());
            })
            .unwrap();
            // Rounding perturbs each residual by a few ulps of the field's
            // norm; once that alone can move the ratio by RATE_SLACK the
            // ratio says nothing, and the absolute form is checked instead.
            let field_norm = report.field.dist(&BeliefField::for_model(&m), kind);
            let rounding = 16.0 * f64::EPSILON * field_norm.max(1.0);
            for (it, w) in report.residuals.windows(2).enumerate() {
                ensure(w[1] <= q * w[0] + CONTRACTION_SLACK, || {
                    format!("case {case} {kind}: residual {} > q * {} at iteration {}", w[1], w[0], it + 2)
                })?;
                if w[0] * RATE_SLACK >= rounding {
                    let ratio = w[1] / w[0];
                    ensure(ratio <= q + RATE_SLACK, || {
                        format!("case {case} {kind}: ratio {ratio} > q = {q} at iteration {}", it + 2)
                    })?;
                    ratios += 1;
                }
            }
            for (it, r) in report.residuals.iter().enumerate() {
                let dist = reference.dist(&iterates[it], kind);
                ensure(dist <= r / p + RATE_SLACK, || {
                    format!("case {case} {kind}: iterate {it} distance {dist} > {}", r / p)
                })?;
                checked += 1;
            }
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("20 models, {ratios} ratios <= q, {checked} iterates within the residual / p bound"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "five-cycle fixed points decode to global minimizers", c1_cycle_examples),
        (2, "T and S are q-contractions", c2_contraction),
        (3, "lower bounds, bracket and max-marginal bounds", c3_bounds),
        (4, "S is the random-walk Bellman operator", c4_mdp),
        (5, "structured kernels equal dense, linear in k", c5_kernels),
        (6, "monotone iterates and LP feasibility", c6_lp_monotone),
        (7, "grid benchmark ordering", c7_grid_ordering),
        (8, "column DP equals enumeration", c8_dp_exact),
        (9, "restoration improves RMSE, linear in k", c9_restoration),
        (10, "geometric residuals and certified distance", c10_rates),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failures += 1;
                println!("criterion {id:>2} FAIL  {name}: {why}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
