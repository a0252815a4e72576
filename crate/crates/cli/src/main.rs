//! `mrfc`: solve model files, run the restoration, stereo and grid
//! experiments, and run the verification suite.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrf_contract::maps::{bracket, decode, solve, MapKind, SolveParams};
use mrf_contract::model::Labeling;
use mrf_contract::modelfile::{read_model, write_model_file};
use mrf_contract::pnm::{read_pgm, read_ppm, write_pgm, write_ppm};
use mrf_contract::problems::{
    add_gaussian_noise, cycle_example, grid_benchmark, labeling_to_image, piecewise_constant_image, random_grid,
    restoration_model, rmse, stereo_model, summarize, synthetic_stereo_pair, Algorithm, BenchConfig, BenchRow,
    BenchSummary, GridSpec,
};
use mrf_contract::verify::{run_suite, Fault, Scale, VerifyOptions};
use mrf_contract::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_CAPACITY: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VERIFY: u8 = 4;
const EXIT_NOT_CONVERGED: u8 = 5;

#[derive(Parser)]
#[command(name = "mrfc", version, about = "Contraction-map inference for pairwise labeling problems")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate T or S on a model file to its fixed point.
    Solve(SolveArgs),
    /// Compare all solvers on random binary grids; CSV on stdout.
    Bench(BenchArgs),
    /// Denoise a grayscale PGM.
    Restore(RestoreArgs),
    /// Disparity map from a rectified PPM pair.
    Stereo(StereoArgs),
    /// Run the property suites.
    Verify(VerifyArgs),
    /// Write synthetic inputs for the other subcommands.
    #[command(subcommand)]
    Generate(Generate),
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    T,
    S,
}

impl From<MapArg> for MapKind {
    fn from(m: MapArg) -> Self {
        match m {
            MapArg::T => MapKind::Diffusion,
            MapArg::S => MapKind::Control,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    model: PathBuf,
    #[arg(long, value_enum, default_value = "t")]
    map: MapArg,
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iter: usize,
    /// Decoded labels, 1-based, one per line.
    #[arg(long)]
    labeling: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Grid side K.
    #[arg(long, default_value_t = 10)]
    side: usize,
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    /// Seeds 0..n.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 0.01)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    /// Comma-separated subset of DP,ICM,S,S+ICM,T,T+ICM,BP,BP+ICM.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    /// Per-seed CSV destination instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary CSV destination; the summary table always goes to stderr.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct RestoreArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    /// Truncation of the squared difference.
    #[arg(long, default_value_t = 100.0)]
    cap: f64,
    #[arg(long, default_value_t = 0.001)]
    p: f64,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, value_enum, default_value = "t")]
    map: MapArg,
    /// Noise-free reference for RMSE.
    #[arg(long)]
    clean: Option<PathBuf>,
}

#[derive(Args)]
struct StereoArgs {
    left: PathBuf,
    right: PathBuf,
    /// Disparity image, labels scaled by floor(255 / D).
    #[arg(long)]
    out: PathBuf,
    /// Raw disparities, one image row per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long = "max-disparity", short = 'D', default_value_t = 15)]
    max_disparity: usize,
    #[arg(long, default_value_t = 500.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1000.0)]
    beta: f64,
    #[arg(long, default_value_t = 20.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-4)]
    p: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, value_enum, default_value = "s")]
    map: MapArg,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(default_value = "quick")]
    scale: Scale,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deliberately break an invariant: weight-row-sum or no-discount.
    #[arg(long)]
    inject: Option<Fault>,
}

#[derive(Subcommand)]
enum Generate {
    /// The 5-cycle example as a model file.
    Cycle {
        output: PathBuf,
        #[arg(long)]
        repulsive: bool,
    },
    /// A random binary grid as a model file.
    Grid {
        output: PathBuf,
        #[arg(long, default_value_t = 10)]
        side: usize,
        #[arg(long, default_value_t = 10.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Piecewise-constant image and a noisy copy.
    Image {
        clean: PathBuf,
        noisy: PathBuf,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 20.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rectified pair with a square shifted against a static background.
    Stereo {
        left: PathBuf,
        right: PathBuf,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 24)]
        height: usize,
        /// Square as x,y,size.
        #[arg(long, value_delimiter = ',', default_values_t = [12, 6, 10])]
        square: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        shift: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Lib(Error),
    Usage(String),
    Verify(usize),
    NotConverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Restore(a) => cmd_restore(a),
        Command::Stereo(a) => cmd_stereo(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Generate(g) => cmd_generate(g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Capacity(_) => EXIT_CAPACITY,
                Error::Numerical { .. } => EXIT_NUMERICAL,
                Error::InvalidInput(_) | Error::Parse { .. } | Error::Io(_) => EXIT_USAGE,
            })
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Verify(n)) => {
            eprintln!("{n} check(s) failed");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
    }
}

fn write_labels(path: &Path, x: &Labeling) -> CmdResult {
    let mut text = String::new();
    for v in x.one_based() {
        writeln!(text, "{v}").unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> CmdResult {
    let raw = read_model(&a.model)?;
    let (model, offset) = raw.normalize_nonnegative();
    let kind = MapKind::from(a.map);
    let report = solve(&model, kind, &SolveParams::new(a.p, a.tol, a.max_iter))?;
    let x = decode(&report.field);
    println!("map {kind}  p {}", a.p);
    println!("iterations {}", report.iterations);
    println!("residual {:e}", report.residual);
    println!("certified distance {:e}", report.certified_distance);
    println!("labeling {}", x.one_based().iter().map(usize::to_string).collect::<Vec<_>>().join(" "));
    println!("energy {}", model.energy(&x)? + offset);
    if report.converged && kind == MapKind::Diffusion {
        let b = bracket(&model, &report)?;
        println!("bracket {} {}", b.lower + offset, b.upper + offset);
    }
    if let Some(path) = &a.labeling {
        write_labels(path, &x)?;
    }
    if !report.converged {
        eprintln!(
            "not converged: residual {:e} above tol {:e} after {} iterations",
            report.residual, a.tol, a.max_iter
        );
        return Err(Failure::NotConverged);
    }
    Ok(())
}

fn rows_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("seed,algorithm,energy,hamming,seconds,minconvs_per_iteration\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{:.6},{}",
            r.seed, r.algorithm, r.energy, r.hamming, r.seconds, r.minconvs_per_iteration
        )
        .unwrap();
    }
    s
}

fn summary_csv(summary: &[BenchSummary]) -> String {
    let mut s = String::from("algorithm,runs,energy_mean,energy_sd,hamming_mean,hamming_sd,seconds_mean\n");
    for r in summary {
        writeln!(
            s,
            "{},{},{},{},{},{},{:.6}",
            r.algorithm, r.runs, r.energy_mean, r.energy_sd, r.hamming_mean, r.hamming_sd, r.seconds_mean
        )
        .unwrap();
    }
    s
}

fn summary_table(summary: &[BenchSummary]) -> String {
    let mut s = format!("{:<8} {:>20} {:>16} {:>10}\n", "method", "energy", "distance", "seconds");
    for r in summary {
        let energy = format!("{:.2} ± {:.2}", r.energy_mean, r.energy_sd);
        let dist = format!("{:.2} ± {:.2}", r.hamming_mean, r.hamming_sd);
        writeln!(s, "{:<8} {energy:>20} {dist:>16} {:>10.4}", r.algorithm.name(), r.seconds_mean).unwrap();
    }
    s
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let mut config = BenchConfig::new(a.side, a.lambda, (0..a.seeds).collect());
    config.iterations = a.iterations;
    config.p = a.p;
    config.damping = a.damping;
    if let Some(algs) = a.algorithms {
        config.algorithms = algs;
    }
    let rows = grid_benchmark(&config)?;
    let summary = summarize(&rows);
    match &a.out {
        Some(path) => fs::write(path, rows_csv(&rows))?,
        None => print!("{}", rows_csv(&rows)),
    }
    if let Some(path) = &a.summary {
        fs::write(path, summary_csv(&summary))?;
    }
    eprint!("{}", summary_table(&summary));
    Ok(())
}

fn cmd_restore(a: RestoreArgs) -> CmdResult {
    let noisy = read_pgm(&a.input)?;
    let model = restoration_model(&noisy, a.lambda, a.cap)?;
    let start = Instant::now();
    let report = solve(&model, a.map.into(), &SolveParams::new(a.p, f64::MIN_POSITIVE, a.iterations))?;
    let x = decode(&report.field);
    let restored = labeling_to_image(&x, noisy.width(), noisy.height(), 1)?;
    write_pgm(&a.output, &restored)?;
    let mut line = format!(
        "iterations {} seconds {:.3} energy {} noisy-energy {}",
        report.iterations,
        start.elapsed().as_secs_f64(),
        model.energy(&x)?,
        model.energy(&Labeling(noisy.pixels().iter().map(|&v| v as usize).collect()))?,
    );
    if let Some(path) = &a.clean {
        let clean = read_pgm(path)?;
        write!(line, " rmse-noisy {:.4} rmse-restored {:.4}", rmse(&noisy, &clean)?, rmse(&restored, &clean)?).unwrap();
    }
    println!("{line}");
    Ok(())
}

fn cmd_stereo(a: StereoArgs) -> CmdResult {
    let left = read_ppm(&a.left)?;
    let right = read_ppm(&a.right)?;
    let model = stereo_model(&left, &right, a.max_disparity, a.alpha, a.beta, a.gamma)?;
    let start = Instant::now();
    let report = solve(&model, a.map.into(), &SolveParams::new(a.p, f64::MIN_POSITIVE, a.iterations))?;
    let x = decode(&report.field);
    let scale = 255 / a.max_disparity.max(1);
    let (w, h) = (left.width(), left.height());
    write_pgm(&a.out, &labeling_to_image(&x, w, h, scale)?)?;
    if let Some(path) = &a.labels {
        let mut text = String::new();
        for row in x.0.chunks(w) {
            writeln!(text, "{}", row.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")).unwrap();
        }
        fs::write(path, text)?;
    }
    println!(
        "iterations {} seconds {:.3} energy {}",
        report.iterations,
        start.elapsed().as_secs_f64(),
        model.energy(&x)?
    );
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let outcomes = run_suite(&VerifyOptions { scale: a.scale, seed: a.seed, fault: a.inject });
    let mut failed = 0;
    for o in &outcomes {
        println!("{o}");
        if !o.passed() {
            failed += 1;
        }
    }
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        return Err(Failure::Verify(failed));
    }
    Ok(())
}

fn cmd_generate(g: Generate) -> CmdResult {
    match g {
        Generate::Cycle { output, repulsive } => write_model_file(output, &cycle_example(repulsive))?,
        Generate::Grid { output, side, lambda, seed } => {
            let grid = random_grid(GridSpec { side, lambda, seed })?;
            write_model_file(output, &grid.model)?;
        }
        Generate::Image { clean, noisy, width, height, sigma, seed } => {
            let img = piecewise_constant_image(width, height)?;
            write_pgm(&clean, &img)?;
            write_pgm(&noisy, &add_gaussian_noise(&img, sigma, seed)?)?;
        }
        Generate::Stereo { left, right, width, height, square, shift, seed } => {
            let [sx, sy, size] = square[..] else {
                return Err(Failure::Usage("--square takes x,y,size".into()));
            };
            let (l, r) = synthetic_stereo_pair(width, height, (sx, sy, size), shift, seed)?;
            write_ppm(&left, &l)?;
            write_ppm(&right, &r)?;
        }
    }
    Ok(())
}
