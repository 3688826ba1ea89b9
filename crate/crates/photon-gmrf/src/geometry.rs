//! Neighborhood structure of the tripartite intensity model.
//!
//! Three site grids share the image lattice:
//!
//! * `X` (intensity): rows x cols x frames;
//! * `U` (spatial auxiliaries): rows x cols x frames, where U site
//!   `(i, j, t)` couples the four X sites `(i, j)`, `(i+1, j)`, `(i, j+1)`,
//!   `(i+1, j+1)` of frame `t`, indices wrapping cyclically;
//! * `W` (temporal auxiliaries): rows x cols x (frames + 1), where W site
//!   `(i, j, tw)` couples X sites `(i, j, tw - 1)` and `(i, j, tw)`.  The
//!   out-of-range X frames (-1 and `frames`) are ghost layers pinned to a
//!   constant boundary intensity, or wrap around when the time axis is
//!   declared cyclic.

use crate::error::Result;
use crate::field::{Dims, FrameStack, Mask};

/// Smallest admissible temporal boundary intensity.
pub const GAMMA_MIN: f64 = 1e-3;

/// How the two ghost frames beyond the time axis are filled.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TimeBoundary {
    /// Ghost frames hold a fixed boundary intensity.
    Fixed,
    /// Ghost frames wrap to the last and first real frames.
    Cyclic,
}

/// Site coordinates on one of the three grids.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Site {
    pub i: usize,
    pub j: usize,
    pub t: usize,
}

#[inline(always)]
pub fn wrap_inc(k: usize, n: usize) -> usize {
    let k1 = k + 1;
    if k1 == n {
        0
    } else {
        k1
    }
}

#[inline(always)]
pub fn wrap_dec(k: usize, n: usize) -> usize {
    if k == 0 {
        n - 1
    } else {
        k - 1
    }
}

/// The four X sites coupled by U site `(i, j, t)`.
#[inline]
pub fn x_of_u(dims: Dims, i: usize, j: usize, t: usize) -> [Site; 4] {
    let i1 = wrap_inc(i, dims.rows);
    let j1 = wrap_inc(j, dims.cols);
    [Site { i, j, t }, Site { i: i1, j, t }, Site { i, j: j1, t }, Site { i: i1, j: j1, t }]
}

/// The four U sites coupling X site `(i, j, t)`.
#[inline]
pub fn u_of_x(dims: Dims, i: usize, j: usize, t: usize) -> [Site; 4] {
    let i0 = wrap_dec(i, dims.rows);
    let j0 = wrap_dec(j, dims.cols);
    [Site { i, j, t }, Site { i: i0, j, t }, Site { i, j: j0, t }, Site { i: i0, j: j0, t }]
}

/// The two W sites coupling X site `(i, j, t)`: W frames `t` and `t + 1`.
/// W frame indices run over `0..=frames`.
#[inline]
pub fn w_of_x(i: usize, j: usize, t: usize) -> [Site; 2] {
    [Site { i, j, t }, Site { i, j, t: t + 1 }]
}

/// Intensity of the ghost frame behind W frame `tw` (the X frame `tw - 1`),
/// resolving boundary frames by `boundary`.
#[inline(always)]
pub fn x_before_w(x: &FrameStack, gamma: f64, boundary: TimeBoundary, i: usize, j: usize, tw: usize) -> f64 {
    if tw == 0 {
        match boundary {
            TimeBoundary::Fixed => gamma,
            TimeBoundary::Cyclic => x.get(i, j, x.dims().frames - 1),
        }
    } else {
        x.get(i, j, tw - 1)
    }
}

/// Intensity of the ghost frame ahead of W frame `tw` (the X frame `tw`),
/// resolving boundary frames by `boundary`.
#[inline(always)]
pub fn x_after_w(x: &FrameStack, gamma: f64, boundary: TimeBoundary, i: usize, j: usize, tw: usize) -> f64 {
    let frames = x.dims().frames;
    if tw == frames {
        match boundary {
            TimeBoundary::Fixed => gamma,
            TimeBoundary::Cyclic => x.get(i, j, 0),
        }
    } else {
        x.get(i, j, tw)
    }
}

/// Temporal boundary intensity: the empirical mean of the observations over
/// valid sites, clamped below at `GAMMA_MIN`.  A fully masked stack falls
/// back to `GAMMA_MIN`.
pub fn temporal_boundary_value(y: &FrameStack, mask: Option<&Mask>) -> Result<f64> {
    let dims = y.dims();
    let mut sum = 0.0;
    let mut n = 0usize;
    match mask {
        None => {
            sum = y.data().iter().sum();
            n = y.data().len();
        }
        Some(m) => {
            for t in 0..dims.frames {
                for i in 0..dims.rows {
                    for j in 0..dims.cols {
                        if m.valid(i, j, t) {
                            sum += y.get(i, j, t);
                            n += 1;
                        }
                    }
                }
            }
        }
    }
    if n == 0 {
        return Ok(GAMMA_MIN);
    }
    Ok((sum / n as f64).max(GAMMA_MIN))
}
