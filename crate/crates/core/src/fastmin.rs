//! Min-convolution kernels
//!
//! Every kernel computes `m(t) = min_u [scale * h(t, u) + c(u)]` for all labels
//! `t`, where `h` is read in the orientation that makes `t` the first label.
//! The dense kernel enumerates all `k^2` pairs; the structured kernels run in
//! `O(k)`.

use crate::error::{Error, Result};
use crate::model::{Orientation, PairwiseCost};

/// One inner minimization.
#[derive(Debug, Clone, Copy)]
pub struct MessageProblem<'a> {
    pub costs: &'a [f64],
    pub scale: f64,
    pub form: &'a PairwiseCost,
    pub orientation: Orientation,
}

impl<'a> MessageProblem<'a> {
    pub fn new(costs: &'a [f64], scale: f64, form: &'a PairwiseCost, orientation: Orientation) -> Self {
        MessageProblem { costs, scale, form, orientation }
    }

    fn k(&self) -> usize {
        self.costs.len()
    }
}

/// Reusable buffers for the parabola envelope.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

impl Scratch {
    pub fn with_capacity(k: usize) -> Self {
        Scratch { vertices: Vec::with_capacity(k), bounds: Vec::with_capacity(k + 1) }
    }
}

fn min_of(c: &[f64]) -> f64 {
    c.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Reference kernel by full enumeration.
pub fn dense_minconv(problem: &MessageProblem<'_>, out: &mut [f64]) {
    let k = problem.k();
    let c = problem.costs;
    for (t, slot) in out.iter_mut().enumerate().take(k) {
        let mut best = f64::INFINITY;
        for (u, &cu) in c.iter().enumerate() {
            let v = problem.scale * problem.form.value(k, problem.orientation, t, u) + cu;
            if v < best {
                best = v;
            }
        }
        *slot = best;
    }
}

/// Potts and two-step stereo forms.
pub fn potts_like_minconv(problem: &MessageProblem<'_>, out: &mut [f64]) -> Result<()> {
    let c = problem.costs;
    let k = c.len();
    let floor = min_of(c);
    match *problem.form {
        PairwiseCost::Potts { penalty } => {
            let jump = problem.scale * penalty + floor;
            for t in 0..k {
                out[t] = c[t].min(jump);
            }
        }
        PairwiseCost::StereoTwoStep { step, jump } => {
            let step = problem.scale * step;
            let far = problem.scale * jump + floor;
            for t in 0..k {
                let mut v = c[t].min(far);
                if t > 0 {
                    v = v.min(step + c[t - 1]);
                }
                if t + 1 < k {
                    v = v.min(step + c[t + 1]);
                }
                out[t] = v;
            }
        }
        _ => return Err(Error::invalid("potts_like_minconv needs a Potts or stereo form")),
    }
    Ok(())
}

/// Truncated quadratic form via the lower envelope of parabolas.
pub fn trunc_quad_minconv(problem: &MessageProblem<'_>, out: &mut [f64], scratch: &mut Scratch) -> Result<()> {
    let (scale, cap) = match *problem.form {
        PairwiseCost::TruncatedQuadratic { scale, cap } => (scale, cap),
        _ => return Err(Error::invalid("trunc_quad_minconv needs a truncated quadratic form")),
    };
    let c = problem.costs;
    let k = c.len();
    let a = problem.scale * scale;
    let floor = min_of(c);
    if a == 0.0 || cap == 0.0 {
        out[..k].fill(floor);
        return Ok(());
    }

    let v = &mut scratch.vertices;
    let z = &mut scratch.bounds;
    v.clear();
    z.clear();
    v.push(0);
    z.push(f64::NEG_INFINITY);
    z.push(f64::INFINITY);
    let lift = |q: usize| c[q] + a * (q * q) as f64;
    for q in 1..k {
        let fq = lift(q);
        loop {
            let top = *v.last().unwrap();
            let s = (fq - lift(top)) / (2.0 * a * (q - top) as f64);
            let j = v.len() - 1;
            if s <= z[j] {
                if j > 0 {
                    v.pop();
                    z.pop();
                    continue;
                }
                // The new parabola lies below the only one left.
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            v.push(q);
            z[j + 1] = s;
            z.push(f64::INFINITY);
            break;
        }
    }

    let capped = floor + a * cap;
    let mut j = 0;
    for t in 0..k {
        while z[j + 1] < t as f64 {
            j += 1;
        }
        let d = t as f64 - v[j] as f64;
        out[t] = (a * (d * d) + c[v[j]]).min(capped);
    }
    Ok(())
}

/// Truncated linear form via forward and backward passes.
pub fn trunc_linear_minconv(problem: &MessageProblem<'_>, out: &mut [f64]) -> Result<()> {
    let (scale, cap) = match *problem.form {
        PairwiseCost::TruncatedLinear { scale, cap } => (scale, cap),
        _ => return Err(Error::invalid("trunc_linear_minconv needs a truncated linear form")),
    };
    let c = problem.costs;
    let k = c.len();
    let a = problem.scale * scale;
    let floor = min_of(c);
    if a == 0.0 || cap == 0.0 {
        out[..k].fill(floor);
        return Ok(());
    }
    out[..k].copy_from_slice(c);
    for t in 1..k {
        out[t] = out[t].min(out[t - 1] + a);
    }
    for t in (0..k.saturating_sub(1)).rev() {
        out[t] = out[t].min(out[t + 1] + a);
    }
    let capped = floor + a * cap;
    for o in out[..k].iter_mut() {
        *o = o.min(capped);
    }
    Ok(())
}

/// Picks the fastest kernel for the problem's form.
pub fn minconv(problem: &MessageProblem<'_>, out: &mut [f64], scratch: &mut Scratch) {
    let res = match problem.form {
        PairwiseCost::Dense(_) => {
            dense_minconv(problem, out);
            Ok(())
        }
        PairwiseCost::Potts { .. } | PairwiseCost::StereoTwoStep { .. } => potts_like_minconv(problem, out),
        PairwiseCost::TruncatedQuadratic { .. } => trunc_quad_minconv(problem, out, scratch),
        PairwiseCost::TruncatedLinear { .. } => trunc_linear_minconv(problem, out),
    };
    debug_assert!(res.is_ok());
}

/// Allocating convenience wrapper around [`minconv`].
pub fn minconv_vec(problem: &MessageProblem<'_>) -> Vec<f64> {
    let mut out = vec![0.0; problem.costs.len()];
    minconv(problem, &mut out, &mut Scratch::default());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(c: &[f64], scale: f64, form: &PairwiseCost) -> Vec<f64> {
        let mut out = vec![0.0; c.len()];
        dense_minconv(&MessageProblem::new(c, scale, form, Orientation::Forward), &mut out);
        out
    }

    fn fast(c: &[f64], scale: f64, form: &PairwiseCost) -> Vec<f64> {
        minconv_vec(&MessageProblem::new(c, scale, form, Orientation::Forward))
    }

    fn random_costs(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        let spread = 10f64.powf(rng.random_range(-1.0..4.0));
        (0..k).map(|_| rng.random_range(-spread..spread)).collect()
    }

    #[test]
    fn dense_hand_case() {
        let m = dense(&[3.0, 1.0, 2.0], 1.0, &PairwiseCost::Potts { penalty: 1.0 });
        assert_eq!(m, vec![2.0, 1.0, 2.0]);
    }

    #[test]
    fn dense_degenerate() {
        let c = [4.0, -1.0, 7.0];
        assert_eq!(dense(&c, 3.0, &PairwiseCost::Dense(vec![0.0; 9])), vec![-1.0; 3]);
        let h = PairwiseCost::Dense(vec![2.5]);
        assert_eq!(dense(&[1.5], 2.0, &h), vec![6.5]);
    }

    #[test]
    fn dense_respects_orientation() {
        let h = PairwiseCost::Dense(vec![0.0, 10.0, 1.0, 0.0]);
        let c = [0.0, 5.0];
        let mut out = [0.0; 2];
        dense_minconv(&MessageProblem::new(&c, 1.0, &h, Orientation::Forward), &mut out);
        assert_eq!(out, [0.0, 1.0]);
        dense_minconv(&MessageProblem::new(&c, 1.0, &h, Orientation::Reverse), &mut out);
        assert_eq!(out, [0.0, 5.0]);
    }

    #[test]
    fn potts_like_matches_dense_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let k = rng.random_range(1..20);
            let c = random_costs(&mut rng, k);
            let scale = rng.random_range(0.0..3.0);
            let step = rng.random_range(0.0..50.0);
            let jump = step + rng.random_range(1e-3..50.0);
            for form in [PairwiseCost::Potts { penalty: jump }, PairwiseCost::StereoTwoStep { step, jump }] {
                assert_eq!(fast(&c, scale, &form), dense(&c, scale, &form));
            }
        }
    }

    #[test]
    fn potts_constant_costs() {
        let m = fast(&[2.5; 6], 1.0, &PairwiseCost::Potts { penalty: 3.0 });
        assert_eq!(m, vec![2.5; 6]);
    }

    #[test]
    fn stereo_step_hand_case() {
        let form = PairwiseCost::StereoTwoStep { step: 500.0, jump: 1000.0 };
        let mut c = vec![900.0; 6];
        c[0] = 0.0;
        let m = fast(&c, 1.0, &form);
        assert_eq!(m[1], 500.0);
        assert_eq!(m, dense(&c, 1.0, &form));
        assert_eq!(m, vec![0.0, 500.0, 900.0, 900.0, 900.0, 900.0]);
    }

    #[test]
    fn quadratic_degenerate_cases() {
        let c = [5.0, 2.0, 9.0, 4.0];
        let flat = vec![2.0; 4];
        assert_eq!(fast(&c, 1.0, &PairwiseCost::TruncatedQuadratic { scale: 0.0, cap: 10.0 }), flat);
        assert_eq!(fast(&c, 1.0, &PairwiseCost::TruncatedQuadratic { scale: 3.0, cap: 0.0 }), flat);
        assert_eq!(fast(&c, 0.0, &PairwiseCost::TruncatedQuadratic { scale: 3.0, cap: 5.0 }), flat);
    }

    #[test]
    fn quadratic_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let k = rng.random_range(1..=64);
            let c = random_costs(&mut rng, k);
            let scale = rng.random_range(0.0..2.0);
            let form = PairwiseCost::TruncatedQuadratic {
                scale: 10f64.powf(rng.random_range(-4.0..2.0)),
                cap: rng.random_range(0.0..(k * k) as f64 + 5.0),
            };
            let (a, b) = (fast(&c, scale, &form), dense(&c, scale, &form));
            for t in 0..k {
                assert!((a[t] - b[t]).abs() <= 1e-9, "k={k} t={t}: {} vs {}", a[t], b[t]);
            }
        }
    }

    #[test]
    fn quadratic_tiny_curvature_stays_finite() {
        let c = [1e300, -1e300, 0.0, 1e300];
        let form = PairwiseCost::TruncatedQuadratic { scale: 1e-300, cap: 1e10 };
        let m = fast(&c, 1e-10, &form);
        assert!(m.iter().all(|v| v.is_finite()));
        assert_eq!(m, dense(&c, 1e-10, &form));
    }

    #[test]
    fn linear_degenerate_and_impulse() {
        let c = [3.0, 1.0, 2.0];
        assert_eq!(fast(&c, 1.0, &PairwiseCost::TruncatedLinear { scale: 0.0, cap: 4.0 }), vec![1.0; 3]);

        let mut c = vec![1e6; 9];
        c[4] = 0.0;
        let form = PairwiseCost::TruncatedLinear { scale: 2.0, cap: 1e9 };
        let m = fast(&c, 1.5, &form);
        for t in 0..9 {
            assert_eq!(m[t], 3.0 * (t as f64 - 4.0).abs());
        }
        assert_eq!(m, dense(&c, 1.5, &form));
    }

    #[test]
    fn linear_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let k = rng.random_range(1..=64);
            let c = random_costs(&mut rng, k);
            let scale = rng.random_range(0.0..2.0);
            let form = PairwiseCost::TruncatedLinear {
                scale: rng.random_range(0.0..20.0),
                cap: rng.random_range(0.0..k as f64 + 2.0),
            };
            let (a, b) = (fast(&c, scale, &form), dense(&c, scale, &form));
            for t in 0..k {
                assert!((a[t] - b[t]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn wrong_form_is_rejected() {
        let c = [0.0, 1.0];
        let mut out = [0.0; 2];
        let potts = PairwiseCost::Potts { penalty: 1.0 };
        let quad = PairwiseCost::TruncatedQuadratic { scale: 1.0, cap: 1.0 };
        assert!(trunc_quad_minconv(
            &MessageProblem::new(&c, 1.0, &potts, Orientation::Forward),
            &mut out,
            &mut Scratch::default()
        )
        .is_err());
        assert!(trunc_linear_minconv(&MessageProblem::new(&c, 1.0, &potts, Orientation::Forward), &mut out).is_err());
        assert!(potts_like_minconv(&MessageProblem::new(&c, 1.0, &quad, Orientation::Forward), &mut out).is_err());
    }
}
