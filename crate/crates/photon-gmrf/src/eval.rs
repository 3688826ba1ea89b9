//! Synthetic scenes, reconstruction metrics, and frame integration.

use crate::error::{Error, Result};
use crate::field::{Dims, FrameStack};
use crate::rng::{ChainRng, Phase};
use rand::Rng;

/// Bumped whenever scene generation changes, so archived runs can name the
/// exact scene recipe they used.
pub const SCENE_VERSION: u32 = 1;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SceneKind {
    /// Concentric rings of constant intensity (at most 8 distinct levels).
    Piecewise,
    /// Positive cosine mixture, periodic in both axes.
    Smooth,
    /// A smooth blob translating cyclically by one column per frame.
    Moving,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "piecewise" => Ok(SceneKind::Piecewise),
            "smooth" => Ok(SceneKind::Smooth),
            "moving" => Ok(SceneKind::Moving),
            other => Err(Error::InvalidArgument(format!(
                "unknown scene '{other}' (expected piecewise, smooth, or moving)"
            ))),
        }
    }
}

/// Builds a strictly positive synthetic scene.  Deterministic in
/// `(kind, rows, cols, frames, seed)`.
pub fn make_scene(kind: SceneKind, rows: usize, cols: usize, frames: usize, seed: u64) -> Result<FrameStack> {
    let dims = Dims::new(rows, cols, frames)?;
    let key = ChainRng::new(seed);
    let mut rng = key.stream(0, Phase::SceneGen, 0);
    let mut out = FrameStack::filled(dims, 0.0);

    match kind {
        SceneKind::Piecewise => {
            let palette = [1.0, 0.15, 0.7, 0.3, 0.95, 0.45];
            let offset = rng.gen_range(0..palette.len());
            // Continuous radial phase, so distinct seeds move the ring
            // boundaries and not just the palette rotation.
            let phase = rng.gen::<f64>();
            let ci = (rows as f64 - 1.0) / 2.0;
            let cj = (cols as f64 - 1.0) / 2.0;
            let r_scale = rows.max(cols) as f64 / 2.0;
            for i in 0..rows {
                for j in 0..cols {
                    let r = ((i as f64 - ci).powi(2) + (j as f64 - cj).powi(2)).sqrt() / r_scale;
                    let band = (r * palette.len() as f64 + phase) as usize;
                    let v = palette[(band + offset) % palette.len()];
                    for t in 0..frames {
                        out.set(i, j, t, v);
                    }
                }
            }
        }
        SceneKind::Smooth => {
            // Mean 1 with modulation depth 0.9, so the minimum stays at 0.1.
            // Integer frequencies keep the field periodic, matching the
            // cyclic spatial wrap of the prior.
            let amps = [0.45, 0.27, 0.18];
            let comps: Vec<(f64, f64, f64, f64)> = amps
                .iter()
                .map(|&a| {
                    let p = rng.gen_range(1..=3) as f64;
                    let q = rng.gen_range(1..=3) as f64;
                    let phase = rng.gen::<f64>() * std::f64::consts::TAU;
                    (a, p, q, phase)
                })
                .collect();
            for i in 0..rows {
                for j in 0..cols {
                    let mut v = 1.0;
                    for &(a, p, q, phase) in &comps {
                        let arg = std::f64::consts::TAU
                            * (p * i as f64 / rows as f64 + q * j as f64 / cols as f64)
                            + phase;
                        v += a * arg.cos();
                    }
                    for t in 0..frames {
                        out.set(i, j, t, v);
                    }
                }
            }
        }
        SceneKind::Moving => {
            // Gaussian blob on the torus, shifted one column per frame so
            // frame t+1 is exactly frame t translated.
            let sigma = rows.min(cols) as f64 / 6.0;
            let floor = 0.1;
            let amp = 1.0;
            let ci = rng.gen_range(0..rows) as f64;
            let cj = rng.gen_range(0..cols) as f64;
            let torus_d = |a: f64, c: f64, n: usize| -> f64 {
                let d = (a - c).abs();
                d.min(n as f64 - d)
            };
            let mut base = vec![0.0; rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    let di = torus_d(i as f64, ci, rows);
                    let dj = torus_d(j as f64, cj, cols);
                    base[i * cols + j] = floor + amp * (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
                }
            }
            for t in 0..frames {
                for i in 0..rows {
                    for j in 0..cols {
                        let jsrc = (j + cols - t % cols) % cols;
                        out.set(i, j, t, base[i * cols + jsrc]);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn frame_range(dims: Dims, frame: Option<usize>) -> Result<std::ops::Range<usize>> {
    match frame {
        None => Ok(0..dims.frames),
        Some(t) if t < dims.frames => Ok(t..t + 1),
        Some(t) => {
            Err(Error::InvalidArgument(format!("frame {t} out of range (stack has {} frames)", dims.frames)))
        }
    }
}

fn check_same_dims(truth: &FrameStack, estimate: &FrameStack) -> Result<()> {
    if truth.dims() != estimate.dims() {
        return Err(Error::ShapeMismatch(format!(
            "truth {:?} vs estimate {:?}",
            truth.dims(),
            estimate.dims()
        )));
    }
    Ok(())
}

/// Normalized mean squared error over one frame (or the whole stack):
/// `sum (est - truth)^2 / sum truth^2`.
pub fn nmse(truth: &FrameStack, estimate: &FrameStack, frame: Option<usize>) -> Result<f64> {
    check_same_dims(truth, estimate)?;
    let dims = truth.dims();
    let mut num = 0.0;
    let mut den = 0.0;
    for t in frame_range(dims, frame)? {
        for i in 0..dims.rows {
            for j in 0..dims.cols {
                let x = truth.get(i, j, t);
                let e = estimate.get(i, j, t) - x;
                num += e * e;
                den += x * x;
            }
        }
    }
    if den == 0.0 {
        return Err(Error::DataValidation("truth is identically zero; error is not normalizable".into()));
    }
    Ok(num / den)
}

/// Population standard deviation of the per-site normalized squared errors
/// `e_s = N (est_s - truth_s)^2 / sum truth^2`, whose mean is the NMSE.
pub fn nse_std(truth: &FrameStack, estimate: &FrameStack, frame: Option<usize>) -> Result<f64> {
    check_same_dims(truth, estimate)?;
    let dims = truth.dims();
    let range = frame_range(dims, frame)?;
    let n = (range.len() * dims.frame_len()) as f64;
    let mut den = 0.0;
    for t in range.clone() {
        for i in 0..dims.rows {
            for j in 0..dims.cols {
                den += truth.get(i, j, t).powi(2);
            }
        }
    }
    if den == 0.0 {
        return Err(Error::DataValidation("truth is identically zero; error is not normalizable".into()));
    }
    let mut mean = 0.0;
    let mut mean_sq = 0.0;
    for t in range {
        for i in 0..dims.rows {
            for j in 0..dims.cols {
                let e = n * (estimate.get(i, j, t) - truth.get(i, j, t)).powi(2) / den;
                mean += e;
                mean_sq += e * e;
            }
        }
    }
    mean /= n;
    mean_sq /= n;
    Ok((mean_sq - mean * mean).max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug)]
pub struct FrameMetrics {
    pub frame: usize,
    pub nmse: f64,
    pub nse_std: f64,
    /// Mean observation of the frame (firing rate for binary data).
    pub detection_rate: Option<f64>,
}

/// Per-frame metrics, optionally annotated with the observed firing rate.
pub fn frame_metrics(
    truth: &FrameStack,
    estimate: &FrameStack,
    obs: Option<&FrameStack>,
) -> Result<Vec<FrameMetrics>> {
    check_same_dims(truth, estimate)?;
    if let Some(y) = obs {
        check_same_dims(truth, y)?;
    }
    let dims = truth.dims();
    let mut rows = Vec::with_capacity(dims.frames);
    for t in 0..dims.frames {
        let rate = obs.map(|y| {
            let mut s = 0.0;
            for i in 0..dims.rows {
                for j in 0..dims.cols {
                    s += y.get(i, j, t);
                }
            }
            s / dims.frame_len() as f64
        });
        rows.push(FrameMetrics {
            frame: t,
            nmse: nmse(truth, estimate, Some(t))?,
            nse_std: nse_std(truth, estimate, Some(t))?,
            detection_rate: rate,
        });
    }
    Ok(rows)
}

/// Sums consecutive groups of `group` frames.  A trailing remainder shorter
/// than one group is dropped; callers should warn when
/// `frames % group != 0`.
pub fn sum_frame_groups(y: &FrameStack, group: usize) -> Result<FrameStack> {
    let dims = y.dims();
    if group == 0 {
        return Err(Error::InvalidArgument("group size must be at least 1".into()));
    }
    let frames_out = dims.frames / group;
    if frames_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "group size {group} exceeds the {} available frames",
            dims.frames
        )));
    }
    let out_dims = Dims::new(dims.rows, dims.cols, frames_out)?;
    let mut out = FrameStack::filled(out_dims, 0.0);
    for g in 0..frames_out {
        for t in g * group..(g + 1) * group {
            for i in 0..dims.rows {
                for j in 0..dims.cols {
                    let v = out.get(i, j, g) + y.get(i, j, t);
                    out.set(i, j, g, v);
                }
            }
        }
    }
    Ok(out)
}

/// Clamps counts to {0, 1}: a site fires if at least one photon arrived.
/// This is what a saturating detector would have reported over the longer
/// exposure.
pub fn threshold_at_one(y: &FrameStack) -> FrameStack {
    let mut out = y.clone();
    for v in out.data_mut() {
        *v = if *v >= 1.0 { 1.0 } else { 0.0 };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scenes_are_positive_deterministic_and_versioned() {
        assert_eq!(SCENE_VERSION, 1);
        for kind in [SceneKind::Piecewise, SceneKind::Smooth, SceneKind::Moving] {
            let a = make_scene(kind, 16, 12, 3, 9).unwrap();
            let b = make_scene(kind, 16, 12, 3, 9).unwrap();
            assert_eq!(a, b);
            a.validate_positive("scene").unwrap();
            let c = make_scene(kind, 16, 12, 3, 10).unwrap();
            assert_ne!(a, c, "{kind:?} ignored the seed");
        }
    }

    #[test]
    fn piecewise_scene_has_few_distinct_levels() {
        let s = make_scene(SceneKind::Piecewise, 64, 64, 1, 4).unwrap();
        let mut levels: Vec<u64> = s.data().iter().map(|v| v.to_bits()).collect();
        levels.sort_unstable();
        levels.dedup();
        assert!(levels.len() <= 8, "{} distinct levels", levels.len());
        assert!(levels.len() >= 2);
    }

    #[test]
    fn smooth_scene_is_periodic_across_the_wrap() {
        // The cosine field extends periodically: the value one step beyond
        // the last column equals column 0, so there is no seam at the wrap.
        let s = make_scene(SceneKind::Smooth, 32, 32, 1, 7).unwrap();
        let range = s.data().iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(range.0 >= 0.1 - 1e-12);
        assert!(range.1 <= 1.9 + 1e-12);
        assert!(range.1 - range.0 > 0.2, "scene nearly flat");
    }

    #[test]
    fn moving_scene_translates_one_column_per_frame() {
        let s = make_scene(SceneKind::Moving, 12, 15, 4, 3).unwrap();
        for t in 1..4 {
            for i in 0..12 {
                for j in 0..15 {
                    let prev = s.get(i, (j + 15 - 1) % 15, t - 1);
                    assert_eq!(s.get(i, j, t), prev, "frame {t} is not frame {} shifted", t - 1);
                }
            }
        }
    }

    #[test]
    fn nmse_matches_hand_computation() {
        let d = Dims::new(1, 2, 1).unwrap();
        let truth = FrameStack::new(d, vec![1.0, 1.0]).unwrap();
        let est = FrameStack::new(d, vec![0.0, 1.0]).unwrap();
        // Errors {1, 0}; sum sq err 1; sum sq truth 2.
        assert_relative_eq!(nmse(&truth, &est, None).unwrap(), 0.5, epsilon = 1e-15);
        // Normalized squared errors {1, 0}: mean 0.5, population std 0.5.
        assert_relative_eq!(nse_std(&truth, &est, None).unwrap(), 0.5, epsilon = 1e-15);
        // Perfect reconstruction.
        assert_eq!(nmse(&truth, &truth, None).unwrap(), 0.0);
        assert_eq!(nse_std(&truth, &truth, None).unwrap(), 0.0);
    }

    #[test]
    fn nmse_is_invariant_to_joint_rescaling() {
        let d = Dims::new(2, 2, 1).unwrap();
        let truth = FrameStack::new(d, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let est = FrameStack::new(d, vec![1.1, 1.8, 3.3, 3.9]).unwrap();
        let base = nmse(&truth, &est, None).unwrap();
        let scale = 37.5;
        let truth2 = FrameStack::new(d, truth.data().iter().map(|v| v * scale).collect()).unwrap();
        let est2 = FrameStack::new(d, est.data().iter().map(|v| v * scale).collect()).unwrap();
        assert_relative_eq!(nmse(&truth2, &est2, None).unwrap(), base, epsilon = 1e-12);
    }

    #[test]
    fn per_frame_metrics_pick_out_frames() {
        let d = Dims::new(1, 2, 2).unwrap();
        let truth = FrameStack::new(d, vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        let est = FrameStack::new(d, vec![1.0, 1.0, 2.0, 0.0]).unwrap();
        let obs = FrameStack::new(d, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let rows = frame_metrics(&truth, &est, Some(&obs)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].nmse, 0.0);
        assert_relative_eq!(rows[1].nmse, 4.0 / 8.0, epsilon = 1e-15);
        assert_relative_eq!(rows[0].detection_rate.unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(rows[1].detection_rate.unwrap(), 1.0, epsilon = 1e-15);
        assert!(nmse(&truth, &est, Some(2)).is_err());
    }

    #[test]
    fn frame_group_sums_drop_the_remainder() {
        let d = Dims::new(1, 1, 7).unwrap();
        let y = FrameStack::new(d, vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let summed = sum_frame_groups(&y, 3).unwrap();
        assert_eq!(summed.dims().frames, 2);
        assert_eq!(summed.get(0, 0, 0), 2.0);
        assert_eq!(summed.get(0, 0, 1), 1.0);
        let binary = threshold_at_one(&summed);
        assert_eq!(binary.get(0, 0, 0), 1.0);
        assert_eq!(binary.get(0, 0, 1), 1.0);
        assert!(sum_frame_groups(&y, 0).is_err());
        assert!(sum_frame_groups(&y, 8).is_err());
    }
}
