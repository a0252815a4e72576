use std::time::Instant;

use mrf_contract::maps::{decode, solve, MapKind, SolveParams};
use mrf_contract::problems::{stereo_model, synthetic_stereo_pair};

/// Full-size stereo run: 384x288 pixels, sixteen disparities, 1000 sweeps
/// of S. Slow in debug builds, so opt in with `--ignored`.
#[test]
#[ignore]
fn full_size_stereo_within_budget() {
    let (left, right) = synthetic_stereo_pair(384, 288, (150, 100, 80), 7, 3).unwrap();
    let model = stereo_model(&left, &right, 15, 500.0, 1000.0, 20.0).unwrap();
    let start = Instant::now();
    let report = solve(&model, MapKind::Control, &SolveParams::new(1e-4, f64::MIN_POSITIVE, 1000)).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let x = decode(&report.field);
    eprintln!("384x288, D=15, {} iterations: {seconds:.1} s", report.iterations);
    assert_eq!(x.0[(140) * 384 + 190], 7);
    assert!(seconds < 130.0, "{seconds} s");
}
