//! Hidden gamma Markov random field: composite statistics, full
//! conditionals, and the auxiliary-variable sweeps.
//!
//! The intensity field X is coupled to spatial auxiliaries U (one per 2x2
//! clique, cyclic wrap) and, for multi-frame stacks, temporal auxiliaries W
//! (one per consecutive frame pair, with ghost frames beyond both ends).
//! All full conditionals are standard families:
//!
//! * `u | x  ~ InvGamma(alpha, alpha * u_tilde)` where `u_tilde` is the
//!   arithmetic mean of the clique's four X values;
//! * `w | x  ~ InvGamma(beta, beta * w_tilde)` where `w_tilde` is the
//!   arithmetic mean of the two coupled frames' values;
//! * `x | u, w ~ Gamma(alpha + beta, x_tilde)` restricted to the intensity
//!   support, where `1 / x_tilde = alpha / x_bar + beta / m_w`, `x_bar` is
//!   the harmonic mean of the four U neighbors and `m_w` the harmonic mean
//!   of the two W neighbors.  Single-frame stacks drop the W terms, leaving
//!   `Gamma(alpha, x_bar / alpha)`.
//!
//! Rates add across the spatial and temporal pulls, so a flat field is a
//! fixed point: with every neighbor at intensity `c` the conditional mean is
//! exactly `c`.

use rayon::prelude::*;

use crate::dist::{self, Interval, TruncatedGamma};
use crate::error::{Error, Result};
use crate::field::{Dims, FrameStack};
use crate::geometry::{self, TimeBoundary};
use crate::observation::{ModelKind, ObservationModel, X_FLOOR};
use crate::rng::{ChainRng, Phase};

/// Sites per parallel work unit.  Fixed so that chunk boundaries, and hence
/// all floating-point reduction orders, do not depend on the thread count.
pub const SWEEP_CHUNK: usize = 4096;

/// Auxiliary draws are clamped to this range, guarding against float
/// under/overflow at events of vanishing probability.
const AUX_CLAMP: (f64, f64) = (1e-305, 1e305);

/// Shape hyperparameters: `alpha` couples X to U (spatial), `beta` couples X
/// to W (temporal).  `alpha` is either shared or per frame.
#[derive(Clone, Debug)]
pub struct Hyper {
    alpha: Vec<f64>,
    pub beta: f64,
}

impl Hyper {
    pub fn shared(alpha: f64, beta: f64) -> Result<Self> {
        Hyper::per_frame(vec![alpha], beta)
    }

    pub fn per_frame(alpha: Vec<f64>, beta: f64) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidArgument("at least one alpha value required".into()));
        }
        for &a in &alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidArgument(format!("alpha must be finite and positive, got {a}")));
            }
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be finite and positive, got {beta}")));
        }
        Ok(Hyper { alpha, beta })
    }

    /// Alpha governing frame `t`.
    #[inline(always)]
    pub fn alpha(&self, t: usize) -> f64 {
        if self.alpha.len() == 1 {
            self.alpha[0]
        } else {
            self.alpha[t]
        }
    }

    pub fn is_per_frame(&self) -> bool {
        self.alpha.len() > 1
    }

    pub fn alpha_values(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_values_mut(&mut self) -> &mut [f64] {
        &mut self.alpha
    }

    pub fn mean_alpha(&self) -> f64 {
        self.alpha.iter().sum::<f64>() / self.alpha.len() as f64
    }
}

/// Full state of the intensity model at one sweep.
#[derive(Clone, Debug)]
pub struct GmrfState {
    pub x: FrameStack,
    pub u: FrameStack,
    /// Present only for temporal (multi-frame) models; holds frames + 1
    /// layers.
    pub w: Option<FrameStack>,
    pub hyper: Hyper,
    /// Ghost-frame intensity behind the first and after the last frame.
    pub gamma: f64,
    pub boundary: TimeBoundary,
    pub support: Interval,
}

impl GmrfState {
    pub fn temporal(&self) -> bool {
        self.w.is_some()
    }
}

/// Arithmetic mean of the four X values in U clique `(i, j, t)`.
#[inline]
pub fn u_tilde(x: &FrameStack, i: usize, j: usize, t: usize) -> f64 {
    let m = geometry::x_of_u(x.dims(), i, j, t);
    0.25 * (x.get(m[0].i, m[0].j, t)
        + x.get(m[1].i, m[1].j, t)
        + x.get(m[2].i, m[2].j, t)
        + x.get(m[3].i, m[3].j, t))
}

/// Arithmetic mean of the two X values coupled by W site `(i, j, tw)`,
/// resolving ghost frames by the boundary rule.
#[inline]
pub fn w_tilde(x: &FrameStack, gamma: f64, boundary: TimeBoundary, i: usize, j: usize, tw: usize) -> f64 {
    0.5 * (geometry::x_before_w(x, gamma, boundary, i, j, tw)
        + geometry::x_after_w(x, gamma, boundary, i, j, tw))
}

/// Harmonic mean of the four U neighbors of X site `(i, j, t)`.
#[inline]
pub fn x_bar(u: &FrameStack, i: usize, j: usize, t: usize) -> f64 {
    let n = geometry::u_of_x(u.dims(), i, j, t);
    let s = 1.0 / u.get(n[0].i, n[0].j, t)
        + 1.0 / u.get(n[1].i, n[1].j, t)
        + 1.0 / u.get(n[2].i, n[2].j, t)
        + 1.0 / u.get(n[3].i, n[3].j, t);
    4.0 / s
}

/// Harmonic mean of the two W neighbors of X site `(i, j, t)`.
#[inline]
pub fn w_harmonic(w: &FrameStack, i: usize, j: usize, t: usize) -> f64 {
    2.0 / (1.0 / w.get(i, j, t) + 1.0 / w.get(i, j, t + 1))
}

/// Scale of the temporal conditional: rates of the spatial and temporal
/// pulls add.
#[inline]
pub fn x_tilde(x_bar: f64, m_w: f64, alpha: f64, beta: f64) -> f64 {
    1.0 / (alpha / x_bar + beta / m_w)
}

/// Prior pull on one X site: gamma shape and rate collecting the U (and W)
/// neighborhoods.
#[derive(Clone, Copy, Debug)]
pub struct XSitePrior {
    pub shape: f64,
    pub rate: f64,
    pub x_bar: f64,
    pub m_w: Option<f64>,
}

pub fn x_site_prior(
    u: &FrameStack,
    w: Option<&FrameStack>,
    hyper: &Hyper,
    i: usize,
    j: usize,
    t: usize,
) -> XSitePrior {
    let a = hyper.alpha(t);
    let xb = x_bar(u, i, j, t);
    match w {
        None => XSitePrior { shape: a, rate: a / xb, x_bar: xb, m_w: None },
        Some(w) => {
            let b = hyper.beta;
            let mw = w_harmonic(w, i, j, t);
            XSitePrior { shape: a + b, rate: a / xb + b / mw, x_bar: xb, m_w: Some(mw) }
        }
    }
}

/// Full conditional of one X site under the prior alone (no data), as a
/// support-restricted gamma.
pub fn prior_conditional_x(state: &GmrfState, i: usize, j: usize, t: usize) -> Result<TruncatedGamma> {
    let p = x_site_prior(&state.u, state.w.as_ref(), &state.hyper, i, j, t);
    TruncatedGamma::new(p.shape, 1.0 / p.rate, state.support)
}

// Records the error at the smallest site index, keeping failure output
// independent of thread scheduling.
pub(crate) struct FirstError(std::sync::Mutex<Option<(usize, Error)>>);

impl FirstError {
    pub(crate) fn new() -> Self {
        FirstError(std::sync::Mutex::new(None))
    }

    pub(crate) fn record(&self, site: usize, e: Error) {
        let mut g = self.0.lock().unwrap();
        if g.as_ref().is_none_or(|(s, _)| site < *s) {
            *g = Some((site, e));
        }
    }

    pub(crate) fn check(self) -> Result<()> {
        match self.0.into_inner().unwrap() {
            None => Ok(()),
            Some((_, e)) => Err(e),
        }
    }
}

/// One sweep over the spatial auxiliaries: every U site is redrawn from its
/// inverse-gamma conditional.  Deterministic for a given key and iteration.
pub fn sample_u_field(x: &FrameStack, hyper: &Hyper, key: &ChainRng, iteration: u64) -> Result<FrameStack> {
    let dims = x.dims();
    let mut out = vec![0.0; dims.len()];
    let first_err = FirstError::new();
    out.par_chunks_mut(SWEEP_CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * SWEEP_CHUNK;
        for (k, slot) in chunk.iter_mut().enumerate() {
            let site = base + k;
            let (i, j, t) = dims.unindex(site);
            let a = hyper.alpha(t);
            let b = a * u_tilde(x, i, j, t);
            let mut rng = key.stream(iteration, Phase::SweepU, site as u64);
            match dist::sample_inverse_gamma(a, b, &mut rng) {
                Ok(v) => *slot = v.clamp(AUX_CLAMP.0, AUX_CLAMP.1),
                Err(e) => {
                    first_err.record(site, e);
                    break;
                }
            }
        }
    });
    first_err.check()?;
    FrameStack::new(dims, out)
}

/// One sweep over the temporal auxiliaries (frames + 1 layers).
pub fn sample_w_field(
    x: &FrameStack,
    beta: f64,
    gamma: f64,
    boundary: TimeBoundary,
    key: &ChainRng,
    iteration: u64,
) -> Result<FrameStack> {
    let xd = x.dims();
    let wd = Dims::new(xd.rows, xd.cols, xd.frames + 1)?;
    let mut out = vec![0.0; wd.len()];
    let first_err = FirstError::new();
    out.par_chunks_mut(SWEEP_CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * SWEEP_CHUNK;
        for (k, slot) in chunk.iter_mut().enumerate() {
            let site = base + k;
            let (i, j, tw) = wd.unindex(site);
            let b = beta * w_tilde(x, gamma, boundary, i, j, tw);
            let mut rng = key.stream(iteration, Phase::SweepW, site as u64);
            match dist::sample_inverse_gamma(beta, b, &mut rng) {
                Ok(v) => *slot = v.clamp(AUX_CLAMP.0, AUX_CLAMP.1),
                Err(e) => {
                    first_err.record(site, e);
                    break;
                }
            }
        }
    });
    first_err.check()?;
    FrameStack::new(wd, out)
}

/// Data-driven starting point: a 3x3 cyclic box filter of the observations
/// (skipping masked sites), inverted through the detector response, floored,
/// and clamped into the support.  Auxiliaries are drawn from their
/// conditionals at iteration 0.
pub fn init_state(
    y: &FrameStack,
    model: &ObservationModel,
    temporal: bool,
    hyper: Hyper,
    support: Interval,
    boundary: TimeBoundary,
    key: &ChainRng,
) -> Result<GmrfState> {
    let dims = y.dims();
    if temporal && dims.frames < 2 {
        return Err(Error::InvalidArgument("temporal model requires at least 2 frames".into()));
    }
    let gamma = geometry::temporal_boundary_value(y, model.mask.as_ref())?;

    let mut x0 = FrameStack::filled(dims, 0.0);
    for t in 0..dims.frames {
        for i in 0..dims.rows {
            for j in 0..dims.cols {
                let mut sum = 0.0;
                let mut n = 0usize;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let ii = (i as i64 + di).rem_euclid(dims.rows as i64) as usize;
                        let jj = (j as i64 + dj).rem_euclid(dims.cols as i64) as usize;
                        if model.valid(ii, jj, t) {
                            sum += y.get(ii, jj, t);
                            n += 1;
                        }
                    }
                }
                let s = if n == 0 { gamma } else { sum / n as f64 };
                let eta = model.eta.get(i, j);
                let guess = match model.kind {
                    // Invert the saturation curve; cap so the log stays finite.
                    ModelKind::Bernoulli => -(1.0 - s.min(0.99)).ln() / eta,
                    ModelKind::Poisson => s / eta,
                };
                let v = guess.max(X_FLOOR).min(support.hi()).max(support.lo().next_up());
                x0.set(i, j, t, v);
            }
        }
    }

    let u = sample_u_field(&x0, &hyper, key, 0)?;
    let w = if temporal { Some(sample_w_field(&x0, hyper.beta, gamma, boundary, key, 0)?) } else { None };
    Ok(GmrfState { x: x0, u, w, hyper, gamma, boundary, support })
}
