//! Experiment instances and metrics: random binary grids, image restoration,
//! stereo matching, image noise, RMSE and Hamming distance.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, so an instance is bit-identical for a given seed on every
//! platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{ising_to_model, Graph, Labeling, Model, PairwiseCost, WalkWeights};
use crate::pnm::{ColorImage, GrayImage};

/// Random binary grid parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Side length of the square grid.
    pub side: usize,
    /// Pairwise coefficients are drawn from `[-lambda, lambda]`.
    pub lambda: f64,
    pub seed: u64,
}

/// A random Ising grid converted to a nonnegative model.
#[derive(Debug, Clone)]
pub struct GridInstance {
    pub model: Model,
    /// `spin_energy(x) = model.energy(x) + offset`
    pub offset: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub side: usize,
}

impl GridInstance {
    /// Energy in the original spin units.
    pub fn spin_energy(&self, x: &Labeling) -> Result<f64> {
        Ok(self.model.energy(x)? + self.offset)
    }
}

/// Draws `alpha_i = 2u - 1` for every vertex in index order, then
/// `beta_ij = lambda (2u - 1)` for every edge in canonical order, with `u`
/// uniform in `[0, 1)` from ChaCha8 seeded by `spec.seed`.
pub fn random_grid(spec: GridSpec) -> Result<GridInstance> {
    if spec.side < 2 {
        return Err(Error::invalid("grid side must be at least 2"));
    }
    if !(spec.lambda >= 0.0) || !spec.lambda.is_finite() {
        return Err(Error::invalid("lambda must be finite and >= 0"));
    }
    let graph = Graph::grid(spec.side, spec.side)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let alpha: Vec<f64> = (0..graph.n()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let beta: Vec<f64> = (0..graph.m()).map(|_| spec.lambda * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let (model, offset) = ising_to_model(&alpha, &beta, spec.side, spec.side)?;
    Ok(GridInstance { model, offset, alpha, beta, side: spec.side })
}

/// Restoration model over the pixel grid with 256 gray levels:
/// `g_i(a) = (y_i - a)^2`, `h(a, b) = lambda min((a - b)^2, cap)`, uniform
/// weights.
pub fn restoration_model(noisy: &GrayImage, lambda: f64, cap: f64) -> Result<Model> {
    restoration_model_with_levels(noisy, lambda, cap, 256)
}

/// [`restoration_model`] with `levels` labels `0..levels`.
pub fn restoration_model_with_levels(noisy: &GrayImage, lambda: f64, cap: f64, levels: usize) -> Result<Model> {
    let graph = Graph::grid(noisy.height(), noisy.width())?;
    let mut unary = Vec::with_capacity(graph.n() * levels);
    for &y in noisy.pixels() {
        for a in 0..levels {
            let d = y as f64 - a as f64;
            unary.push(d * d);
        }
    }
    let h = PairwiseCost::TruncatedQuadratic { scale: lambda, cap };
    let m = graph.m();
    Model::with_uniform_weights(graph, levels, unary, vec![h; m])
}

fn l1(a: [u8; 3], b: [u8; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (*x as f64 - *y as f64).abs()).sum()
}

/// Stereo model for a rectified pair with disparities `0..=max_disparity`.
///
/// `g_i(a) = min(gamma, |I_l(x, y) - I_r(x - a, y)|_1)`, and `gamma` when
/// `x - a` falls outside the image. Pairwise cost is the two-step form
/// `(step, jump)`. Walk weights are proportional to
/// `0.01 + exp(-0.2 |I_l(i) - I_l(j)|_1)` and normalized per vertex.
pub fn stereo_model(
    left: &ColorImage,
    right: &ColorImage,
    max_disparity: usize,
    step: f64,
    jump: f64,
    gamma: f64,
) -> Result<Model> {
    if left.width() != right.width() || left.height() != right.height() {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    let (w, h) = (left.width(), left.height());
    let k = max_disparity + 1;
    let graph = Graph::grid(h, w)?;
    let mut unary = Vec::with_capacity(graph.n() * k);
    for y in 0..h {
        for x in 0..w {
            let lp = left.get(x, y);
            for a in 0..k {
                let cost = if a <= x { gamma.min(l1(lp, right.get(x - a, y))) } else { gamma };
                unary.push(cost);
            }
        }
    }
    let affinity: Vec<f64> = graph
        .darts()
        .iter()
        .map(|d| {
            let a = left.pixels()[d.tail];
            let b = left.pixels()[d.head];
            0.01 + (-0.2 * l1(a, b)).exp()
        })
        .collect();
    let weights = WalkWeights::from_affinities(&graph, &affinity)?;
    let m = graph.m();
    Model::new(graph, k, unary, vec![PairwiseCost::StereoTwoStep { step, jump }; m], weights)
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma`, rounds half
/// away from zero and clamps to `0..=255`.
pub fn add_gaussian_noise(clean: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma must be finite and >= 0"));
    }
    if sigma == 0.0 {
        return Ok(clean.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels =
        clean.pixels().iter().map(|&v| (v as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8).collect();
    GrayImage::new(clean.width(), clean.height(), pixels)
}

pub fn rmse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid("images differ in size"));
    }
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum();
    Ok((sum / a.pixels().len() as f64).sqrt())
}

pub fn hamming(x: &Labeling, y: &Labeling) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::invalid("labelings differ in length"));
    }
    Ok(x.as_slice().iter().zip(y.as_slice()).filter(|(a, b)| a != b).count())
}

/// Reads a labeling over a pixel grid back as an image; labels above 255 are
/// clamped.
pub fn labeling_to_image(x: &Labeling, width: usize, height: usize, scale: usize) -> Result<GrayImage> {
    let pixels = x.as_slice().iter().map(|&l| (l * scale).min(255) as u8).collect();
    GrayImage::new(width, height, pixels)
}

/// The two five-vertex cycle examples: vertex 0 prefers label 1 (cost 1 on
/// label 0), pairwise costs either reward equal labels (`repulsive = false`,
/// Potts penalty 1) or different labels.
pub fn cycle_example(repulsive: bool) -> Model {
    let graph = Graph::cycle(5).expect("valid cycle");
    let mut unary = vec![0.0; 10];
    unary[0] = 1.0;
    let h =
        if repulsive { PairwiseCost::Dense(vec![1.0, 0.0, 0.0, 1.0]) } else { PairwiseCost::Potts { penalty: 1.0 } };
    Model::with_uniform_weights(graph, 2, unary, vec![h; 5]).expect("valid model")
}

/// Piecewise-constant test image: a background, a bright rectangle, a dark
/// disc and a mid-gray diagonal band.
pub fn piecewise_constant_image(width: usize, height: usize) -> Result<GrayImage> {
    let mut img = GrayImage::filled(width, height, 70)?;
    let (wf, hf) = (width as f64, height as f64);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64 / wf, y as f64 / hf);
            let mut v = 70;
            if (0.15..0.55).contains(&fx) && (0.1..0.45).contains(&fy) {
                v = 200;
            }
            let (dx, dy) = (fx - 0.7, fy - 0.65);
            if dx * dx + dy * dy < 0.04 {
                v = 20;
            }
            if (fx + fy - 1.2).abs() < 0.06 {
                v = 140;
            }
            img.set(x, y, v);
        }
    }
    Ok(img)
}

/// Synthetic rectified pair: a strongly textured background at disparity 0
/// and a faintly textured square of distinct colour at disparity `shift`. Returns `(left, right)`.
pub fn synthetic_stereo_pair(
    width: usize,
    height: usize,
    square: (usize, usize, usize),
    shift: usize,
    seed: u64,
) -> Result<(ColorImage, ColorImage)> {
    let (sx, sy, size) = square;
    if sx < shift || sx + size > width || sy + size > height {
        return Err(Error::invalid("square does not fit inside the image"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut texture = |base: [u8; 3], spread: u8| -> [u8; 3] {
        std::array::from_fn(|c| base[c].saturating_add(rng.random_range(0..spread)))
    };
    // Strong background texture pins it to disparity 0; the square's gentle
    // texture keeps its internal weights high.
    let background: Vec<[u8; 3]> = (0..width * height).map(|_| texture([0, 20, 120], 90)).collect();
    let patch: Vec<[u8; 3]> = (0..size * size).map(|_| texture([150, 60, 0], 12)).collect();
    let mut left = background.clone();
    let mut right = background;
    for dy in 0..size {
        for dx in 0..size {
            let y = sy + dy;
            left[y * width + sx + dx] = patch[dy * size + dx];
            right[y * width + sx + dx - shift] = patch[dy * size + dx];
        }
    }
    Ok((ColorImage::new(width, height, left)?, ColorImage::new(width, height, right)?))
}

/// Solvers compared on random binary grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Exact column dynamic programming.
    Dp,
    /// ICM from the per-vertex unary minimizer.
    Icm,
    S,
    SIcm,
    T,
    TIcm,
    Bp,
    BpIcm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Dp,
        Algorithm::Icm,
        Algorithm::S,
        Algorithm::SIcm,
        Algorithm::T,
        Algorithm::TIcm,
        Algorithm::Bp,
        Algorithm::BpIcm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dp => "DP",
            Algorithm::Icm => "ICM",
            Algorithm::S => "S",
            Algorithm::SIcm => "S+ICM",
            Algorithm::T => "T",
            Algorithm::TIcm => "T+ICM",
            Algorithm::Bp => "BP",
            Algorithm::BpIcm => "BP+ICM",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}")))
    }
}

/// Benchmark protocol on `side x side` random grids.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub side: usize,
    pub lambda: f64,
    pub seeds: Vec<u64>,
    /// Iterations for S, T and BP.
    pub iterations: usize,
    pub p: f64,
    pub damping: f64,
    pub icm_sweeps: usize,
    pub algorithms: Vec<Algorithm>,
}

impl BenchConfig {
    /// 1000 iterations, `p = 0.01`, damping 0.5, every algorithm.
    pub fn new(side: usize, lambda: f64, seeds: Vec<u64>) -> Self {
        BenchConfig {
            side,
            lambda,
            seeds,
            iterations: 1000,
            p: 0.01,
            damping: 0.5,
            icm_sweeps: 1000,
            algorithms: Algorithm::ALL.to_vec(),
        }
    }
}

/// One solver run on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub seed: u64,
    pub algorithm: Algorithm,
    /// In the original spin units.
    pub energy: f64,
    /// Distance to the exact minimizer.
    pub hamming: usize,
    pub seconds: f64,
    /// Length-`k` min-convolutions per iteration (one per dart for every
    /// iterative solver), zero for DP and ICM.
    pub minconvs_per_iteration: usize,
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub energy_mean: f64,
    pub energy_sd: f64,
    pub hamming_mean: f64,
    pub hamming_sd: f64,
    pub seconds_mean: f64,
}

fn unary_argmin(model: &Model) -> Labeling {
    Labeling(
        (0..model.n())
            .map(|i| {
                let g = model.unary(i);
                (0..g.len()).fold(0, |best, t| if g[t] < g[best] { t } else { best })
            })
            .collect(),
    )
}

/// Runs every configured algorithm on every seed. The exact optimum from
/// column DP is always computed, since Hamming distances refer to it.
pub fn grid_benchmark(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    use crate::baselines::{icm, min_sum_bp};
    use crate::maps::{decode, solve, MapKind, SolveParams};
    use crate::oracles::column_dp_min;
    use std::time::Instant;

    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let inst = random_grid(GridSpec { side: config.side, lambda: config.lambda, seed })?;
        let model = &inst.model;
        let darts = model.graph().num_darts();
        let start = Instant::now();
        let (optimum, _) = column_dp_min(model, config.side, config.side)?;
        let dp_seconds = start.elapsed().as_secs_f64();
        let fixed = |kind| -> Result<Labeling> {
            let params = SolveParams::new(config.p, f64::MIN_POSITIVE, config.iterations);
            Ok(decode(&solve(model, kind, &params)?.field))
        };
        for &alg in &config.algorithms {
            let start = Instant::now();
            let (x, per_iter) = match alg {
                Algorithm::Dp => (optimum.clone(), 0),
                Algorithm::Icm => (icm(model, &unary_argmin(model), config.icm_sweeps)?, 0),
                Algorithm::S => (fixed(MapKind::Control)?, darts),
                Algorithm::SIcm => (icm(model, &fixed(MapKind::Control)?, config.icm_sweeps)?, darts),
                Algorithm::T => (fixed(MapKind::Diffusion)?, darts),
                Algorithm::TIcm => (icm(model, &fixed(MapKind::Diffusion)?, config.icm_sweeps)?, darts),
                Algorithm::Bp | Algorithm::BpIcm => {
                    let out = min_sum_bp(model, config.damping, config.iterations)?;
                    let x = decode(&out.beliefs);
                    let x = if alg == Algorithm::BpIcm { icm(model, &x, config.icm_sweeps)? } else { x };
                    (x, darts)
                }
            };
            let seconds = if alg == Algorithm::Dp { dp_seconds } else { start.elapsed().as_secs_f64() };
            rows.push(BenchRow {
                seed,
                algorithm: alg,
                energy: inst.spin_energy(&x)?,
                hamming: hamming(&x, &optimum)?,
                seconds,
                minconvs_per_iteration: per_iter,
            });
        }
    }
    Ok(rows)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-algorithm summaries in first-appearance order.
pub fn summarize(rows: &[BenchRow]) -> Vec<BenchSummary> {
    let mut order: Vec<Algorithm> = Vec::new();
    for r in rows {
        if !order.contains(&r.algorithm) {
            order.push(r.algorithm);
        }
    }
    order
        .into_iter()
        .map(|alg| {
            let runs: Vec<&BenchRow> = rows.iter().filter(|r| r.algorithm == alg).collect();
            let energies: Vec<f64> = runs.iter().map(|r| r.energy).collect();
            let dists: Vec<f64> = runs.iter().map(|r| r.hamming as f64).collect();
            let (energy_mean, energy_sd) = mean_sd(&energies);
            let (hamming_mean, hamming_sd) = mean_sd(&dists);
            BenchSummary {
                algorithm: alg,
                runs: runs.len(),
                energy_mean,
                energy_sd,
                hamming_mean,
                hamming_sd,
                seconds_mean: runs.iter().map(|r| r.seconds).sum::<f64>() / runs.len() as f64,
            }
        })
        .collect()
}
