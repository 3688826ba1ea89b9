//! Metropolis-within-Gibbs chain over the intensity field.
//!
//! Each iteration redraws the spatial auxiliaries U, then (for multi-frame
//! stacks) the temporal auxiliaries W, then every intensity site.  Given U
//! and W the intensity sites are mutually independent, so the X sweep is a
//! single exact parallel update:
//!
//! * masked sites are drawn from the prior conditional (a plain Gibbs step);
//! * photon-count sites are conjugate, drawn from
//!   `Gamma(shape + y, 1 / (rate + eta))` restricted to the support, where
//!   `(shape, rate)` is the prior pull;
//! * binary sites use that same conjugate law as a Metropolis proposal.  A
//!   dark site (y = 0) has the proposal equal to the true conditional and is
//!   accepted with probability one; a bright site (y = 1) accepts with ratio
//!   `g(eta x') / g(eta x)` where `g(v) = (e^v - 1) / v`, because the prior
//!   factors and all normalizers cancel against the proposal.
//!
//! Shape hyperparameters can adapt during burn-in by projected stochastic
//! ascent on the log of the pseudo-joint density of the conditionals, then
//! stay frozen, keeping the kept draws a fixed-kernel Markov chain.
//!
//! Every random draw is addressed by `(iteration, phase, site)`, and every
//! floating-point reduction runs over fixed-size chunks combined in index
//! order, so results are bit-identical for any thread count.

use rand::Rng;
use rayon::prelude::*;
use statrs::function::gamma::digamma;

use crate::dist::{Interval, TruncatedGamma};
use crate::error::{Error, Result};
use crate::field::{Dims, FrameStack};
use crate::geometry::TimeBoundary;
use crate::gmrf::{self, FirstError, GmrfState, Hyper, SWEEP_CHUNK};
use crate::observation::{ModelKind, ObservationModel};
use crate::rng::{ChainRng, Phase, MAX_ITERATION, MAX_SITE};

/// Which shape hyperparameters adapt during burn-in.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AdaptMode {
    Off,
    Alpha,
    AlphaBeta,
}

/// Whether one alpha is shared by all frames or each frame owns one.
/// Per-frame alpha applies only to single-frame (non-temporal) batches,
/// where frames are independent given the data.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AlphaScope {
    Shared,
    PerFrame,
}

/// Hyperparameter adaptation is projected into this box.
pub const ADAPT_BOX: (f64, f64) = (1e-3, 1e3);

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    /// Total Gibbs iterations.
    pub iterations: usize,
    /// Iterations discarded before estimation (adaptation window).
    pub burn_in: usize,
    /// Keep every `thinning`-th iteration after burn-in.
    pub thinning: usize,
    /// Couple consecutive frames through temporal auxiliaries.
    pub temporal: bool,
    pub alpha0: f64,
    pub beta0: f64,
    pub adapt: AdaptMode,
    pub alpha_scope: AlphaScope,
    /// Upper end of the intensity support; `inf` leaves it unbounded.
    pub support_max: f64,
    pub boundary: TimeBoundary,
    pub seed: u64,
    /// Worker threads; 0 picks the machine default.
    pub threads: usize,
    /// Reproduce a legacy variant of the single-frame photon-count
    /// conditional whose scale is `x_bar / (1 + x_bar * eta)` regardless of
    /// alpha.  The proposal then no longer equals any exact conditional, so
    /// binary-model runs metropolize every site with the generic ratio.
    pub legacy_posterior_scale: bool,
    /// Record per-site posterior quantiles (5%, 50%, 95%).  Stores every
    /// kept draw, costing `kept * sites * 8` bytes.
    pub quantiles: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 2000,
            burn_in: 600,
            thinning: 1,
            temporal: false,
            alpha0: 2.0,
            beta0: 2.0,
            adapt: AdaptMode::Off,
            alpha_scope: AlphaScope::Shared,
            support_max: f64::INFINITY,
            boundary: TimeBoundary::Fixed,
            seed: 0,
            threads: 0,
            legacy_posterior_scale: false,
            quantiles: false,
        }
    }
}

/// Number of draws kept by the `(iterations, burn_in, thinning)` schedule:
/// iteration `k` (1-based) is kept when `k > burn_in` and
/// `(k - burn_in) % thinning == 0`.
pub fn kept_count(iterations: usize, burn_in: usize, thinning: usize) -> usize {
    if burn_in >= iterations || thinning == 0 {
        return 0;
    }
    (iterations - burn_in) / thinning
}

impl SamplerConfig {
    pub fn support(&self) -> Result<Interval> {
        Interval::new(0.0, self.support_max)
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iteration count must be positive".into()));
        }
        if self.iterations as u64 >= MAX_ITERATION {
            return Err(Error::InvalidArgument(format!(
                "iteration count {} exceeds the stream capacity {}",
                self.iterations,
                MAX_ITERATION - 1
            )));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidArgument("thinning must be at least 1".into()));
        }
        if kept_count(self.iterations, self.burn_in, self.thinning) == 0 {
            return Err(Error::InvalidArgument(format!(
                "schedule keeps no draws: iterations {}, burn-in {}, thinning {}",
                self.iterations, self.burn_in, self.thinning
            )));
        }
        // The W grid holds one extra layer, so check against frames + 1.
        let max_sites = dims.frame_len() as u64 * (dims.frames as u64 + 1);
        if max_sites >= MAX_SITE {
            return Err(Error::InvalidArgument(format!(
                "{max_sites} sites exceed the stream capacity {MAX_SITE}"
            )));
        }
        if self.temporal && dims.frames < 2 {
            return Err(Error::InvalidArgument("temporal coupling requires at least 2 frames".into()));
        }
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) || !(self.beta0.is_finite() && self.beta0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "initial shapes must be finite and positive, got alpha {} beta {}",
                self.alpha0, self.beta0
            )));
        }
        if self.adapt == AdaptMode::AlphaBeta && !self.temporal {
            return Err(Error::InvalidArgument("beta adaptation requires the temporal model".into()));
        }
        if self.alpha_scope == AlphaScope::PerFrame && self.temporal {
            return Err(Error::InvalidArgument(
                "per-frame alpha requires independent frames; disable temporal coupling".into(),
            ));
        }
        self.support()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HyperTracePoint {
    pub iteration: usize,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Clone, Debug)]
pub struct QuantileStacks {
    pub q05: FrameStack,
    pub q50: FrameStack,
    pub q95: FrameStack,
}

#[derive(Clone, Debug)]
pub struct ChainSummary {
    /// Posterior mean of the intensity field over kept draws.
    pub mean: FrameStack,
    /// Per-site posterior variance (zero when fewer than 2 draws are kept).
    pub variance: FrameStack,
    /// Per-site mean acceptance over kept iterations.  Sites updated by
    /// exact Gibbs steps count as always accepted.
    pub acceptance: FrameStack,
    pub quantiles: Option<QuantileStacks>,
    /// Alpha (mean over frames when per-frame) and beta after each
    /// iteration's adaptation step.
    pub hyper_trace: Vec<HyperTracePoint>,
    /// Data log likelihood at the end of each iteration; a flat tail is a
    /// cheap stationarity diagnostic.
    pub loglik_trace: Vec<f64>,
    pub kept: usize,
    /// Final hyperparameters (frozen after burn-in when adapting).
    pub hyper: Hyper,
    pub warnings: Vec<String>,
}

/// `ln g(v)` for `g(v) = (e^v - 1) / v`, the factor by which a binary
/// detector's bright-site likelihood exceeds the one-count Poisson kernel.
/// Accurate over the full range; `v = 0` returns the limit 0.
#[inline]
pub fn log_g(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else if v > 30.0 {
        v + (-(-v).exp_m1()).ln() - v.ln()
    } else {
        (v.exp_m1() / v).ln()
    }
}

/// Conjugate parameters for a photon-count site: prior pull `(shape, rate)`
/// plus `y` counts at efficiency `eta`.  In the legacy single-frame variant
/// the prior rate is replaced by `1 / x_bar`.
#[inline]
fn count_posterior(prior: &gmrf::XSitePrior, y: f64, eta: f64, legacy: bool) -> (f64, f64) {
    let rate = if legacy && prior.m_w.is_none() { 1.0 / prior.x_bar + eta } else { prior.rate + eta };
    (prior.shape + y, rate)
}

// Accumulates partial sums over fixed chunks, combined in index order.
fn chunked_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let nchunks = n.div_ceil(SWEEP_CHUNK);
    let partials: Vec<f64> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SWEEP_CHUNK;
            let hi = ((c + 1) * SWEEP_CHUNK).min(n);
            let mut s = 0.0;
            for site in lo..hi {
                s += f(site);
            }
            s
        })
        .collect();
    partials.iter().sum()
}

#[inline]
fn loglik_site_fast(kind: ModelKind, y: f64, eta: f64, x: f64) -> f64 {
    let rate = eta * x;
    match kind {
        ModelKind::Poisson => {
            if y == 0.0 {
                -rate
            } else {
                y * rate.ln() - rate - statrs::function::gamma::ln_gamma(y + 1.0)
            }
        }
        ModelKind::Bernoulli => {
            if y == 0.0 {
                -rate
            } else {
                (-(-rate).exp_m1()).ln()
            }
        }
    }
}

fn loglik_total_fast(y: &FrameStack, model: &ObservationModel, x: &FrameStack) -> f64 {
    let dims = y.dims();
    chunked_sum(dims.len(), |site| {
        let (i, j, t) = dims.unindex(site);
        if !model.valid(i, j, t) {
            return 0.0;
        }
        loglik_site_fast(model.kind, y.get(i, j, t), model.eta.get(i, j), x.get(i, j, t))
    })
}

/// One intensity-site update given its prior pull `(shape, rate)`: exact
/// Gibbs for masked or photon-count sites, Metropolis with the count-model
/// proposal for fired binary sites.  `current` is the site's present value;
/// returns the new value and 1.0 when the move was accepted (exact steps
/// always are).
#[allow(clippy::too_many_arguments)]
pub fn sample_site(
    kind: ModelKind,
    y: f64,
    eta: f64,
    valid: bool,
    prior: &gmrf::XSitePrior,
    support: Interval,
    legacy: bool,
    current: f64,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    if !valid {
        // No data: exact Gibbs from the prior conditional.
        let g = TruncatedGamma::new(prior.shape, 1.0 / prior.rate, support)?;
        return Ok((g.sample(rng), 1.0));
    }
    let (shape, rate) = count_posterior(prior, y, eta, legacy);
    let proposal = TruncatedGamma::new(shape, 1.0 / rate, support)?;
    match kind {
        ModelKind::Poisson => Ok((proposal.sample(rng), 1.0)),
        ModelKind::Bernoulli => {
            let cand = proposal.sample(rng);
            if !legacy {
                if y == 0.0 {
                    // Proposal equals the exact conditional.
                    return Ok((cand, 1.0));
                }
                let log_rho = log_g(eta * cand) - log_g(eta * current);
                let v: f64 = rng.gen();
                if v.ln() < log_rho {
                    Ok((cand, 1.0))
                } else {
                    Ok((current, 0.0))
                }
            } else {
                // Generic ratio: target (prior x likelihood) over the
                // mismatched proposal.
                let prior_g = TruncatedGamma::new(prior.shape, 1.0 / prior.rate, support)?;
                let log_rho = prior_g.log_pdf(cand)
                    + loglik_site_fast(ModelKind::Bernoulli, y, eta, cand)
                    + proposal.log_pdf(current)
                    - prior_g.log_pdf(current)
                    - loglik_site_fast(ModelKind::Bernoulli, y, eta, current)
                    - proposal.log_pdf(cand);
                let v: f64 = rng.gen();
                if v.ln() < log_rho {
                    Ok((cand, 1.0))
                } else {
                    Ok((current, 0.0))
                }
            }
        }
    }
}

/// One full X sweep: redraws every intensity site from its conditional (or
/// Metropolis kernel), writing acceptance flags alongside.
#[allow(clippy::too_many_arguments)]
fn x_sweep(
    state: &mut GmrfState,
    y: &FrameStack,
    model: &ObservationModel,
    legacy: bool,
    key: &ChainRng,
    iteration: u64,
    accept: &mut [f64],
) -> Result<()> {
    let dims = y.dims();
    let GmrfState { x, u, w, hyper, support, .. } = state;
    let u: &FrameStack = u;
    let w = w.as_ref();
    let support = *support;
    let first_err = FirstError::new();

    x.data_mut().par_chunks_mut(SWEEP_CHUNK).zip(accept.par_chunks_mut(SWEEP_CHUNK)).enumerate().for_each(
        |(c, (xchunk, achunk))| {
            let base = c * SWEEP_CHUNK;
            for (k, (xs, as_)) in xchunk.iter_mut().zip(achunk.iter_mut()).enumerate() {
                let site = base + k;
                let (i, j, t) = dims.unindex(site);
                let prior = gmrf::x_site_prior(u, w, hyper, i, j, t);
                let eta = model.eta.get(i, j);
                let valid = model.valid(i, j, t);
                let mut rng = key.stream(iteration, Phase::SweepX, site as u64);

                let yv = y.get(i, j, t);
                match sample_site(model.kind, yv, eta, valid, &prior, support, legacy, *xs, &mut rng) {
                    Ok((xv, flag)) => {
                        *xs = xv;
                        *as_ = flag;
                    }
                    Err(e) => {
                        first_err.record(site, e);
                        break;
                    }
                }
            }
        },
    );
    first_err.check()
}

// Gradient of the log pseudo-joint of the conditionals with respect to
// alpha, restricted to frames [t_lo, t_hi).  Covers the X factors and the U
// factors; W factors do not involve alpha.
fn grad_alpha(state: &GmrfState, t_lo: usize, t_hi: usize) -> f64 {
    let dims = state.x.dims();
    let fl = dims.frame_len();
    let n = (t_hi - t_lo) * fl;
    let base = t_lo * fl;
    let temporal = state.temporal();

    let x_term = chunked_sum(n, |s| {
        let site = base + s;
        let (i, j, t) = dims.unindex(site);
        let a = state.hyper.alpha(t);
        let xv = state.x.get(i, j, t);
        let xb = gmrf::x_bar(&state.u, i, j, t);
        if temporal {
            let b = state.hyper.beta;
            let mw = gmrf::w_harmonic(state.w.as_ref().unwrap(), i, j, t);
            let xt = gmrf::x_tilde(xb, mw, a, b);
            // d/da of (a+b-1) ln x - x / x_tilde - ln G(a+b) - (a+b) ln x_tilde
            xv.ln() - digamma(a + b) - xt.ln() - xv / xb + (a + b) * xt / xb
        } else {
            xv.ln() - xv / xb - digamma(a) - (xb / a).ln() + 1.0
        }
    });

    let u_term = chunked_sum(n, |s| {
        let site = base + s;
        let (i, j, t) = dims.unindex(site);
        let a = state.hyper.alpha(t);
        let ut = gmrf::u_tilde(&state.x, i, j, t);
        let uv = state.u.get(i, j, t);
        (a * ut).ln() + 1.0 - digamma(a) - uv.ln() - ut / uv
    });

    x_term + u_term
}

// Gradient of the log pseudo-joint with respect to beta (temporal models
// only): X factors plus W factors.
fn grad_beta(state: &GmrfState) -> f64 {
    let dims = state.x.dims();
    let w = state.w.as_ref().unwrap();
    let b = state.hyper.beta;

    let x_term = chunked_sum(dims.len(), |site| {
        let (i, j, t) = dims.unindex(site);
        let a = state.hyper.alpha(t);
        let xv = state.x.get(i, j, t);
        let xb = gmrf::x_bar(&state.u, i, j, t);
        let mw = gmrf::w_harmonic(w, i, j, t);
        let xt = gmrf::x_tilde(xb, mw, a, b);
        xv.ln() - digamma(a + b) - xt.ln() - xv / mw + (a + b) * xt / mw
    });

    let wd = w.dims();
    let w_term = chunked_sum(wd.len(), |site| {
        let (i, j, tw) = wd.unindex(site);
        let wt = gmrf::w_tilde(&state.x, state.gamma, state.boundary, i, j, tw);
        let wv = w.get(i, j, tw);
        (b * wt).ln() + 1.0 - digamma(b) - wv.ln() - wt / wv
    });

    x_term + w_term
}

// One projected stochastic-ascent step on ln(alpha) (and ln(beta)) during
// burn-in.  Returns the number of skipped (non-finite) gradient updates.
fn adapt_step(state: &mut GmrfState, cfg: &SamplerConfig, k: usize) -> usize {
    let dims = state.x.dims();
    let (lo, hi) = (ADAPT_BOX.0.ln(), ADAPT_BOX.1.ln());
    let mut skipped = 0;

    let project = |theta: f64| theta.clamp(lo, hi);

    match cfg.alpha_scope {
        AlphaScope::Shared => {
            let delta = 10.0 / dims.len() as f64 * (k as f64).powf(-0.8);
            let g = grad_alpha(state, 0, dims.frames);
            let a = state.hyper.alpha(0);
            if g.is_finite() {
                state.hyper.alpha_values_mut()[0] = project(a.ln() + delta * a * g).exp();
            } else {
                skipped += 1;
            }
        }
        AlphaScope::PerFrame => {
            let delta = 10.0 / dims.frame_len() as f64 * (k as f64).powf(-0.8);
            for t in 0..dims.frames {
                let g = grad_alpha(state, t, t + 1);
                let a = state.hyper.alpha(t);
                if g.is_finite() {
                    state.hyper.alpha_values_mut()[t] = project(a.ln() + delta * a * g).exp();
                } else {
                    skipped += 1;
                }
            }
        }
    }

    if cfg.adapt == AdaptMode::AlphaBeta {
        let delta = 10.0 / dims.len() as f64 * (k as f64).powf(-0.8);
        let g = grad_beta(state);
        let b = state.hyper.beta;
        if g.is_finite() {
            state.hyper.beta = project(b.ln() + delta * b * g).exp();
        } else {
            skipped += 1;
        }
    }
    skipped
}

/// Runs the full chain and summarizes the kept draws.
pub fn run_chain(y: &FrameStack, model: &ObservationModel, cfg: &SamplerConfig) -> Result<ChainSummary> {
    let dims = y.dims();
    cfg.validate(dims)?;
    model.validate_observations(y)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| run_chain_inner(y, model, cfg))
}

fn run_chain_inner(y: &FrameStack, model: &ObservationModel, cfg: &SamplerConfig) -> Result<ChainSummary> {
    let dims = y.dims();
    let n_sites = dims.len();
    let support = cfg.support()?;
    let key = ChainRng::new(cfg.seed);

    let hyper = match cfg.alpha_scope {
        AlphaScope::Shared => Hyper::shared(cfg.alpha0, cfg.beta0)?,
        AlphaScope::PerFrame => Hyper::per_frame(vec![cfg.alpha0; dims.frames], cfg.beta0)?,
    };
    let mut state = gmrf::init_state(y, model, cfg.temporal, hyper, support, cfg.boundary, &key)?;

    let kept_total = kept_count(cfg.iterations, cfg.burn_in, cfg.thinning);
    let mut warnings = Vec::new();
    if kept_total < 10 {
        warnings.push(format!(
            "only {kept_total} draws are kept; estimates will be noisy (10 or more recommended)"
        ));
    }

    let mut mean = vec![0.0; n_sites];
    let mut m2 = vec![0.0; n_sites];
    let mut accept_sum = vec![0.0; n_sites];
    let mut accept_flags = vec![0.0; n_sites];
    let mut draws: Vec<f64> =
        if cfg.quantiles { Vec::with_capacity(kept_total * n_sites) } else { Vec::new() };
    let mut hyper_trace = Vec::with_capacity(cfg.iterations);
    let mut loglik_trace = Vec::with_capacity(cfg.iterations);
    let mut kept = 0usize;
    let mut adapt_skipped = 0usize;

    for k in 1..=cfg.iterations {
        state.u = gmrf::sample_u_field(&state.x, &state.hyper, &key, k as u64)?;
        if cfg.temporal {
            state.w = Some(gmrf::sample_w_field(
                &state.x,
                state.hyper.beta,
                state.gamma,
                state.boundary,
                &key,
                k as u64,
            )?);
        }
        x_sweep(&mut state, y, model, cfg.legacy_posterior_scale, &key, k as u64, &mut accept_flags)?;

        if cfg.adapt != AdaptMode::Off && k <= cfg.burn_in {
            adapt_skipped += adapt_step(&mut state, cfg, k);
        }
        hyper_trace.push(HyperTracePoint {
            iteration: k,
            alpha: state.hyper.mean_alpha(),
            beta: state.hyper.beta,
        });
        loglik_trace.push(loglik_total_fast(y, model, &state.x));

        if k > cfg.burn_in && (k - cfg.burn_in).is_multiple_of(cfg.thinning) {
            kept += 1;
            let kf = kept as f64;
            let x = state.x.data();
            for s in 0..n_sites {
                let d = x[s] - mean[s];
                mean[s] += d / kf;
                m2[s] += d * (x[s] - mean[s]);
                accept_sum[s] += accept_flags[s];
            }
            if cfg.quantiles {
                draws.extend_from_slice(x);
            }
        }
    }
    debug_assert_eq!(kept, kept_total);

    if adapt_skipped > 0 {
        warnings.push(format!("adaptation skipped {adapt_skipped} non-finite gradient updates"));
    }

    let variance: Vec<f64> =
        if kept >= 2 { m2.iter().map(|v| v / (kept as f64 - 1.0)).collect() } else { vec![0.0; n_sites] };
    let acceptance: Vec<f64> = accept_sum.iter().map(|v| v / kept as f64).collect();

    let quantiles = if cfg.quantiles {
        let mut q05 = vec![0.0; n_sites];
        let mut q50 = vec![0.0; n_sites];
        let mut q95 = vec![0.0; n_sites];
        let rank = |p: f64| ((p * kept as f64).ceil() as usize).clamp(1, kept) - 1;
        let (r05, r50, r95) = (rank(0.05), rank(0.50), rank(0.95));
        let mut buf = vec![0.0; kept];
        for s in 0..n_sites {
            for (ki, b) in buf.iter_mut().enumerate() {
                *b = draws[ki * n_sites + s];
            }
            buf.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            q05[s] = buf[r05];
            q50[s] = buf[r50];
            q95[s] = buf[r95];
        }
        Some(QuantileStacks {
            q05: FrameStack::new(dims, q05)?,
            q50: FrameStack::new(dims, q50)?,
            q95: FrameStack::new(dims, q95)?,
        })
    } else {
        None
    };

    Ok(ChainSummary {
        mean: FrameStack::new(dims, mean)?,
        variance: FrameStack::new(dims, variance)?,
        acceptance: FrameStack::new(dims, acceptance)?,
        quantiles,
        hyper_trace,
        loglik_trace,
        kept,
        hyper: state.hyper.clone(),
        warnings,
    })
}
