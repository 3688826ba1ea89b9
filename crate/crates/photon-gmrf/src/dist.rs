//! Sampling primitives and log densities.
//!
//! Gamma distributions are parameterized by shape and scale throughout, so
//! the mean is `shape * scale`.  The inverse gamma with parameters
//! `(shape, b)` is the distribution of `1 / G` where `G` is gamma with shape
//! `shape` and scale `1 / b`; its density is proportional to
//! `u^(-shape-1) * exp(-b / u)`.
//!
//! Intensity supports are half-open intervals `(lo, hi]`.  Sampling a gamma
//! restricted to such an interval uses rejection from the unrestricted gamma
//! when the interval holds at least `REJECTION_MIN_MASS` of the probability
//! mass, and numerical inversion of the regularized incomplete gamma
//! function otherwise.  Inversion works on whichever tail of the CDF is
//! better conditioned for the interval.

use rand::Rng;
use rand_distr::Distribution;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Below this interval mass, rejection sampling is abandoned for inversion.
pub const REJECTION_MIN_MASS: f64 = 0.1;

/// Below this interval mass, the truncated distribution is treated as
/// numerically degenerate and construction fails.
pub const MIN_TRUNC_MASS: f64 = 1e-300;

/// Half-open interval `(lo, hi]` with `0 <= lo < hi <= +inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && lo >= 0.0 && hi > lo) || hi.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "interval must satisfy 0 <= lo < hi, got ({lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    /// The full positive axis `(0, inf]`.
    pub fn positive() -> Self {
        Interval { lo: 0.0, hi: f64::INFINITY }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn is_full(&self) -> bool {
        self.lo == 0.0 && self.hi == f64::INFINITY
    }

    #[inline(always)]
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x <= self.hi
    }
}

fn check_shape_scale(shape: f64, scale: f64) -> Result<()> {
    if !(shape.is_finite() && shape > 0.0) {
        return Err(Error::InvalidArgument(format!("shape must be finite and positive, got {shape}")));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be finite and positive, got {scale}")));
    }
    Ok(())
}

#[inline]
fn gamma_draw(shape: f64, scale: f64, rng: &mut impl Rng) -> f64 {
    rand_distr::Gamma::new(shape, scale).expect("parameters validated").sample(rng)
}

/// One draw from Gamma(shape, scale).
pub fn sample_gamma(shape: f64, scale: f64, rng: &mut impl Rng) -> Result<f64> {
    check_shape_scale(shape, scale)?;
    Ok(gamma_draw(shape, scale, rng))
}

/// One draw from the inverse gamma with parameters `(shape, b)`.
pub fn sample_inverse_gamma(shape: f64, b: f64, rng: &mut impl Rng) -> Result<f64> {
    check_shape_scale(shape, b)?;
    Ok(1.0 / gamma_draw(shape, 1.0 / b, rng))
}

/// One draw from Poisson(mean); `mean == 0` yields 0.
pub fn sample_poisson(mean: f64, rng: &mut impl Rng) -> Result<u64> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "poisson mean must be finite and non-negative, got {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let draw: f64 = rand_distr::Poisson::new(mean)
        .map_err(|e| Error::InvalidArgument(format!("poisson mean {mean}: {e}")))?
        .sample(rng);
    Ok(draw as u64)
}

/// One draw from Bernoulli(p).
pub fn sample_bernoulli(p: f64, rng: &mut impl Rng) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("bernoulli probability must lie in [0, 1], got {p}")));
    }
    Ok(rng.gen::<f64>() < p)
}

/// Log density of Gamma(shape, scale) at `x`; `-inf` for `x <= 0`.
pub fn log_gamma_pdf(x: f64, shape: f64, scale: f64) -> Result<f64> {
    check_shape_scale(shape, scale)?;
    Ok(log_gamma_pdf_raw(x, shape, scale))
}

#[inline]
pub(crate) fn log_gamma_pdf_raw(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 || !x.is_finite() {
        return f64::NEG_INFINITY;
    }
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

/// Log density of the inverse gamma `(shape, b)` at `u`; `-inf` for `u <= 0`.
pub fn log_inverse_gamma_pdf(u: f64, shape: f64, b: f64) -> Result<f64> {
    check_shape_scale(shape, b)?;
    if u <= 0.0 || !u.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(shape * b.ln() - ln_gamma(shape) - (shape + 1.0) * u.ln() - b / u)
}

/// Log mass of Poisson(mean) at count `y`.
pub fn log_poisson_pmf(y: u64, mean: f64) -> Result<f64> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "poisson mean must be finite and non-negative, got {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(if y == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if y == 0 {
        // Exactly -mean, matching the binary model's dark-site likelihood.
        return Ok(-mean);
    }
    let yf = y as f64;
    Ok(yf * mean.ln() - mean - ln_gamma(yf + 1.0))
}

/// Log mass of Bernoulli(p) at `y` in {0, 1}; `-inf` for any other `y`.
pub fn log_bernoulli_pmf(y: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("bernoulli probability must lie in [0, 1], got {p}")));
    }
    Ok(if y == 1.0 {
        p.ln()
    } else if y == 0.0 {
        (-p).ln_1p()
    } else {
        f64::NEG_INFINITY
    })
}

/// Probability mass of Gamma(shape, scale) inside `support`, evaluated on
/// whichever CDF tail is better conditioned.
pub fn gamma_interval_mass(shape: f64, scale: f64, support: Interval) -> Result<f64> {
    check_shape_scale(shape, scale)?;
    Ok(interval_mass_raw(shape, scale, support))
}

fn interval_mass_raw(shape: f64, scale: f64, support: Interval) -> f64 {
    if support.is_full() {
        return 1.0;
    }
    let z_lo = support.lo / scale;
    let z_hi = support.hi / scale;
    let p_lo = if z_lo == 0.0 { 0.0 } else { gamma_lr(shape, z_lo) };
    if p_lo > 0.5 {
        // Interval sits in the upper tail: difference of survival values.
        let q_lo = gamma_ur(shape, z_lo);
        let q_hi = if z_hi.is_infinite() { 0.0 } else { gamma_ur(shape, z_hi) };
        (q_lo - q_hi).clamp(0.0, 1.0)
    } else {
        let p_hi = if z_hi.is_infinite() { 1.0 } else { gamma_lr(shape, z_hi) };
        (p_hi - p_lo).clamp(0.0, 1.0)
    }
}

/// Gamma(shape, scale) restricted to a half-open interval `(lo, hi]`.
///
/// Construction fails when the interval mass falls below `MIN_TRUNC_MASS`,
/// since neither rejection nor inversion can resolve such a sliver.
#[derive(Clone, Copy, Debug)]
pub struct TruncatedGamma {
    shape: f64,
    scale: f64,
    support: Interval,
    mass: f64,
    ln_mass: f64,
}

impl TruncatedGamma {
    pub fn new(shape: f64, scale: f64, support: Interval) -> Result<Self> {
        check_shape_scale(shape, scale)?;
        let mass = interval_mass_raw(shape, scale, support);
        if mass < MIN_TRUNC_MASS {
            return Err(Error::Numerical(format!(
                "truncation interval ({}, {}] carries vanishing mass {mass:.3e} \
                 under Gamma(shape {shape}, scale {scale})",
                support.lo, support.hi
            )));
        }
        Ok(TruncatedGamma { shape, scale, support, mass, ln_mass: mass.ln() })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn support(&self) -> Interval {
        self.support
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// One draw, always inside the support.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.mass >= REJECTION_MIN_MASS {
            // Expected tries <= 10; the cap is unreachable in practice and
            // only guards against distributional edge cases.
            for _ in 0..10_000 {
                let x = gamma_draw(self.shape, self.scale, rng);
                if self.support.contains(x) {
                    return x;
                }
            }
        }
        self.quantile(rng.gen::<f64>())
    }

    /// Log density at `x`, including the truncation normalizer.
    pub fn log_pdf(&self, x: f64) -> f64 {
        if !self.support.contains(x) {
            return f64::NEG_INFINITY;
        }
        log_gamma_pdf_raw(x, self.shape, self.scale) - self.ln_mass
    }

    /// Inverse CDF of the restricted distribution at `v` in [0, 1).
    pub fn quantile(&self, v: f64) -> f64 {
        let z_lo = self.support.lo / self.scale;
        let z_hi = self.support.hi / self.scale;
        let p_lo = if z_lo == 0.0 { 0.0 } else { gamma_lr(self.shape, z_lo) };

        // Work on the tail where the regularized function retains precision.
        let z = if p_lo > 0.5 {
            let q_lo = gamma_ur(self.shape, z_lo);
            let q_hi = if z_hi.is_infinite() { 0.0 } else { gamma_ur(self.shape, z_hi) };
            let target = q_lo - v * (q_lo - q_hi);
            self.invert(z_lo, z_hi, |z| target - gamma_ur(self.shape, z))
        } else {
            let p_hi = if z_hi.is_infinite() { 1.0 } else { gamma_lr(self.shape, z_hi) };
            let target = p_lo + v * (p_hi - p_lo);
            self.invert(z_lo, z_hi, |z| gamma_lr(self.shape, z) - target)
        };

        (z * self.scale).max(self.support.lo.next_up()).min(self.support.hi)
    }

    /// Finds the root of the increasing function `f` on (z_lo, z_hi) by
    /// Newton steps safeguarded with bisection.
    fn invert(&self, z_lo: f64, z_hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mut lo = z_lo;
        let mut hi = if z_hi.is_finite() {
            z_hi
        } else {
            // Walk outward until the bracket crosses the root.
            let mut zu = (self.shape + 10.0 * self.shape.sqrt() + 10.0).max(2.0 * z_lo + 1.0);
            let mut k = 0;
            while f(zu) < 0.0 && k < 400 {
                zu *= 2.0;
                k += 1;
            }
            zu
        };

        let ln_norm = ln_gamma(self.shape);
        let mut z = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fz = f(z);
            if fz > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            if hi - lo <= 1e-14 * (1.0 + hi) {
                break;
            }
            // Standardized gamma density is the derivative of both tails.
            let dens = ((self.shape - 1.0) * z.ln() - z - ln_norm).exp();
            let step = if dens > 0.0 && fz.is_finite() { z - fz / dens } else { f64::NAN };
            z = if step.is_finite() && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{ChainRng, Phase};
    use approx::assert_relative_eq;

    fn rng_for(site: u64) -> rand_chacha::ChaCha8Rng {
        ChainRng::new(2024).stream(0, Phase::Simulate, site)
    }

    // Composite Simpson integration on [a, b].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + k as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn interval_rejects_bad_bounds() {
        assert!(Interval::new(-0.1, 1.0).is_err());
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::INFINITY, f64::INFINITY).is_err());
        assert!(Interval::new(0.0, f64::NAN).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_ok());
    }

    #[test]
    fn interval_is_half_open() {
        let s = Interval::new(1.0, 2.0).unwrap();
        assert!(!s.contains(1.0));
        assert!(s.contains(1.0f64.next_up()));
        assert!(s.contains(2.0));
        assert!(!s.contains(2.0f64.next_up()));
    }

    #[test]
    fn gamma_log_density_known_point() {
        // Gamma(2, 1) at x = 1 has density x exp(-x) = exp(-1).
        assert_relative_eq!(log_gamma_pdf(1.0, 2.0, 1.0).unwrap(), -1.0, epsilon = 1e-14);
        assert_eq!(log_gamma_pdf(0.0, 2.0, 1.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(log_gamma_pdf(-1.0, 2.0, 1.0).unwrap(), f64::NEG_INFINITY);
        assert!(log_gamma_pdf(1.0, 0.0, 1.0).is_err());
        assert!(log_gamma_pdf(1.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn gamma_density_normalizes() {
        // Integrate in log space so the x -> 0 singularity of shapes below 1
        // becomes a smooth, exponentially vanishing tail.
        for (shape, scale) in [(0.7f64, 1.3), (2.0, 1.0), (9.0, 0.25)] {
            let hi = scale * (shape + 40.0 * shape.sqrt() + 50.0);
            let total = simpson(
                |t| {
                    let x = t.exp();
                    log_gamma_pdf(x, shape, scale).unwrap().exp() * x
                },
                (1e-12f64).ln(),
                hi.ln(),
                200_000,
            );
            assert_relative_eq!(total, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn inverse_gamma_density_normalizes_and_matches_reciprocal() {
        let (shape, b) = (3.0, 2.0);
        let total = simpson(|u| log_inverse_gamma_pdf(u, shape, b).unwrap().exp(), 1e-6, 400.0, 400_000);
        assert_relative_eq!(total, 1.0, epsilon = 1e-5);

        // Sample mean of IG(3, 2) is b / (shape - 1) = 1.
        let mut rng = rng_for(0);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_inverse_gamma(shape, b, &mut rng).unwrap()).sum::<f64>() / n as f64;
        // Var = b^2 / ((shape-1)^2 (shape-2)) = 1, so 3 sigma of the mean.
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn gamma_sample_moments() {
        let (shape, scale) = (4.2, 1.7);
        let mut rng = rng_for(1);
        let n = 100_000usize;
        let draws: Vec<f64> = (0..n).map(|_| sample_gamma(shape, scale, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let true_mean = shape * scale; // shape-scale convention
        let true_var = shape * scale * scale;
        assert!((mean - true_mean).abs() < 3.0 * (true_var / n as f64).sqrt(), "mean {mean}");
        assert!((var - true_var).abs() < 0.05 * true_var, "var {var}");
    }

    #[test]
    fn poisson_pmf_known_value_and_normalization() {
        // ln P(Y = 3) for mean 2: 3 ln 2 - 2 - ln 6.
        let lp = log_poisson_pmf(3, 2.0).unwrap();
        assert_relative_eq!(lp, -1.712_317_927_548_219, epsilon = 1e-12);
        let total: f64 = (0..200).map(|y| log_poisson_pmf(y, 7.3).unwrap().exp()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert_eq!(log_poisson_pmf(0, 0.0).unwrap(), 0.0);
        assert_eq!(log_poisson_pmf(2, 0.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn poisson_sample_moments() {
        let mean = 4.5;
        let mut rng = rng_for(2);
        let n = 100_000usize;
        let draws: Vec<f64> = (0..n).map(|_| sample_poisson(mean, &mut rng).unwrap() as f64).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        assert!((m - mean).abs() < 3.0 * (mean / n as f64).sqrt(), "mean {m}");
        assert_eq!(sample_poisson(0.0, &mut rng).unwrap(), 0);
    }

    #[test]
    fn bernoulli_pmf_and_sampling() {
        assert_relative_eq!(log_bernoulli_pmf(1.0, 0.25).unwrap(), 0.25f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(log_bernoulli_pmf(0.0, 0.25).unwrap(), 0.75f64.ln(), epsilon = 1e-15);
        assert_eq!(log_bernoulli_pmf(2.0, 0.25).unwrap(), f64::NEG_INFINITY);
        assert!(log_bernoulli_pmf(1.0, 1.5).is_err());

        let mut rng = rng_for(3);
        let n = 100_000usize;
        let hits = (0..n).filter(|_| sample_bernoulli(0.3, &mut rng).unwrap()).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.3).abs() < 3.0 * (0.3f64 * 0.7 / n as f64).sqrt(), "rate {rate}");
    }

    #[test]
    fn interval_mass_matches_closed_forms() {
        // Gamma(2, 1) on (0, 1]: 1 - 2/e.
        let m = gamma_interval_mass(2.0, 1.0, Interval::new(0.0, 1.0).unwrap()).unwrap();
        assert_relative_eq!(m, 0.264_241_117_657_115_33, epsilon = 1e-13);
        // Gamma(1, 1) on (5, inf): exp(-5).
        let m = gamma_interval_mass(1.0, 1.0, Interval::new(5.0, f64::INFINITY).unwrap()).unwrap();
        assert_relative_eq!(m, 6.737_946_999_085_467e-3, epsilon = 1e-13);
        // Full support is exactly 1.
        assert_eq!(gamma_interval_mass(3.3, 0.7, Interval::positive()).unwrap(), 1.0);
        // Deep upper tail stays accurate: Gamma(3, 2) beyond 30 is
        // exp(-15) (1 + 15 + 112.5).
        let m = gamma_interval_mass(3.0, 2.0, Interval::new(30.0, f64::INFINITY).unwrap()).unwrap();
        assert_relative_eq!(m, (-15.0f64).exp() * 128.5, epsilon = 1e-10);
    }

    #[test]
    fn vanishing_mass_is_an_error() {
        // Gamma(100, 1) below 1e-3 has mass ~ 1e-558.
        let s = Interval::new(0.0, 1e-3).unwrap();
        let err = TruncatedGamma::new(100.0, 1.0, s).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn truncated_mean_matches_quadrature_value() {
        // Mean of Gamma(2, 1) restricted to (0, 1], via the incomplete-gamma
        // identity mean = P(3, 1) / P(2, 1) * shape * scale.
        let d = TruncatedGamma::new(2.0, 1.0, Interval::new(0.0, 1.0).unwrap()).unwrap();
        let mut rng = rng_for(4);
        let n = 400_000usize;
        let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        let expect = 0.607_788_808_822_667_2;
        // Truncated sd is ~0.23, so 3 sigma of the mean is ~1.1e-3.
        assert!((mean - expect).abs() < 1.2e-3, "mean {mean} vs {expect}");
    }

    #[test]
    fn truncated_tail_sampler_uses_inversion_and_is_correct() {
        // Gamma(1, 1) on (5, inf) has mass exp(-5) < 0.1, forcing inversion.
        // By memorylessness its mean is exactly 6.
        let d = TruncatedGamma::new(1.0, 1.0, Interval::new(5.0, f64::INFINITY).unwrap()).unwrap();
        assert!(d.mass() < REJECTION_MIN_MASS);
        let mut rng = rng_for(5);
        let n = 200_000usize;
        let mut mean = 0.0;
        for _ in 0..n {
            let x = d.sample(&mut rng);
            assert!(x > 5.0);
            mean += x;
        }
        mean /= n as f64;
        assert!((mean - 6.0).abs() < 3.0 / (n as f64).sqrt() * 1.0 + 2e-3, "mean {mean}");
    }

    #[test]
    fn full_support_sampling_matches_plain_gamma_draws() {
        // With the same stream, the unrestricted truncated sampler accepts
        // the first draw, reproducing sample_gamma exactly.
        let d = TruncatedGamma::new(2.5, 0.8, Interval::positive()).unwrap();
        let mut r1 = rng_for(6);
        let mut r2 = rng_for(6);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut r1), sample_gamma(2.5, 0.8, &mut r2).unwrap());
        }
    }

    #[test]
    fn quantile_inverts_the_restricted_cdf() {
        let cases = [
            (2.0, 1.0, Interval::new(0.0, 1.0).unwrap()),
            (1.0, 1.0, Interval::new(5.0, f64::INFINITY).unwrap()),
            (3.5, 0.8, Interval::new(2.0, 4.0).unwrap()),
            (0.6, 1.2, Interval::new(0.05, 0.3).unwrap()),
            (50.0, 0.1, Interval::new(4.5, 5.5).unwrap()),
            (2.0, 1.0, Interval::new(0.0, 0.05).unwrap()),
            (3.0, 2.0, Interval::new(30.0, f64::INFINITY).unwrap()),
        ];
        for (shape, scale, support) in cases {
            let d = TruncatedGamma::new(shape, scale, support).unwrap();
            let mass = d.mass();
            for v in [1e-6, 0.1, 0.5, 0.9, 1.0 - 1e-6] {
                let x = d.quantile(v);
                assert!(support.contains(x), "quantile {x} escaped {support:?}");
                // CDF from lo to x, as a fraction of the interval mass.
                let below = interval_mass_raw(shape, scale, Interval::new(support.lo, x).unwrap());
                assert!(
                    (below / mass - v).abs() < 1e-9,
                    "shape {shape} scale {scale} {support:?}: F(quantile({v})) = {}",
                    below / mass
                );
            }
        }
    }

    #[test]
    fn truncated_density_normalizes_on_its_support() {
        let cases = [
            (2.0, 1.0, Interval::new(0.0, 1.0).unwrap()),
            (3.5, 0.8, Interval::new(2.0, 4.0).unwrap()),
            (1.0, 1.0, Interval::new(5.0, 25.0).unwrap()),
        ];
        for (shape, scale, support) in cases {
            let d = TruncatedGamma::new(shape, scale, support).unwrap();
            let total = simpson(|x| d.log_pdf(x).exp(), support.lo + 1e-12, support.hi, 200_000);
            assert_relative_eq!(total, 1.0, epsilon = 1e-5);
            assert_eq!(d.log_pdf(support.lo), f64::NEG_INFINITY);
            assert_eq!(d.log_pdf(support.hi.next_up()), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn empirical_cdf_matches_theory_on_both_sampling_paths() {
        let cases = [
            // Rejection path (mass comfortably above the threshold).
            (2.0, 1.0, Interval::new(0.0, 1.0).unwrap()),
            (50.0, 0.1, Interval::new(4.5, 5.5).unwrap()),
            // Inversion path (tail slivers).
            (1.0, 1.0, Interval::new(5.0, f64::INFINITY).unwrap()),
            (2.0, 1.0, Interval::new(0.0, 0.05).unwrap()),
        ];
        for (case_idx, (shape, scale, support)) in cases.into_iter().enumerate() {
            let d = TruncatedGamma::new(shape, scale, support).unwrap();
            let mass = d.mass();
            let n = 50_000usize;
            let mut rng = rng_for(100 + case_idx as u64);
            let mut draws: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            draws.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            for v in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let x = d.quantile(v);
                let below = draws.partition_point(|&t| t <= x) as f64 / n as f64;
                let sigma = (v * (1.0 - v) / n as f64).sqrt();
                assert!((below - v).abs() < 4.0 * sigma, "shape {shape} mass {mass:.3}: ecdf({v}) = {below}");
            }
        }
    }
}
