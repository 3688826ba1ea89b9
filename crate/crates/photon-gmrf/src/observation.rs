//! Detector observation models.
//!
//! A site with intensity `x` and efficiency `eta` accumulates photons at
//! rate `eta * x`.  A counting detector reports the Poisson count itself; a
//! binary detector saturates and reports only whether at least one photon
//! arrived, so a 1 is observed with probability `1 - exp(-eta * x)`.  Faulty
//! detector sites (mask 0) report 0 and contribute nothing to the
//! likelihood.

use crate::dist;
use crate::error::{Error, Result};
use crate::field::{EfficiencyMap, FrameStack, Mask};
use crate::rng::{ChainRng, Phase};

/// Floor applied to intensities when rescaling scenes or initializing a
/// chain, keeping every site strictly positive.
pub const X_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ModelKind {
    Poisson,
    Bernoulli,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Poisson => "poisson",
            ModelKind::Bernoulli => "bernoulli",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(ModelKind::Poisson),
            "bernoulli" => Ok(ModelKind::Bernoulli),
            other => Err(Error::InvalidArgument(format!(
                "unknown observation model '{other}' (expected poisson or bernoulli)"
            ))),
        }
    }
}

/// Observation model: detector kind, per-pixel efficiency, optional validity
/// mask.
#[derive(Clone, Debug)]
pub struct ObservationModel {
    pub kind: ModelKind,
    pub eta: EfficiencyMap,
    pub mask: Option<Mask>,
}

impl ObservationModel {
    pub fn new(kind: ModelKind, eta: EfficiencyMap, mask: Option<Mask>) -> Result<Self> {
        if let Some(m) = &mask {
            let d = m.dims();
            if d.rows != eta.rows() || d.cols != eta.cols() {
                return Err(Error::ShapeMismatch(format!(
                    "mask frame is {}x{} but efficiency map is {}x{}",
                    d.rows,
                    d.cols,
                    eta.rows(),
                    eta.cols()
                )));
            }
        }
        Ok(ObservationModel { kind, eta, mask })
    }

    #[inline(always)]
    pub fn valid(&self, i: usize, j: usize, t: usize) -> bool {
        match &self.mask {
            None => true,
            Some(m) => m.valid(i, j, t),
        }
    }

    /// Checks the observation stack against this model: shape, value domain,
    /// and zeros at masked sites.
    pub fn validate_observations(&self, y: &FrameStack) -> Result<()> {
        let d = y.dims();
        if d.rows != self.eta.rows() || d.cols != self.eta.cols() {
            return Err(Error::ShapeMismatch(format!(
                "observations are {}x{} per frame but efficiency map is {}x{}",
                d.rows,
                d.cols,
                self.eta.rows(),
                self.eta.cols()
            )));
        }
        if let Some(m) = &self.mask {
            if m.dims() != d {
                let md = m.dims();
                return Err(Error::ShapeMismatch(format!(
                    "mask is {}x{}x{} but observations are {}x{}x{}",
                    md.rows, md.cols, md.frames, d.rows, d.cols, d.frames
                )));
            }
        }
        match self.kind {
            ModelKind::Bernoulli => y.validate_binary("observations")?,
            ModelKind::Poisson => y.validate_counts("observations")?,
        }
        if let Some(m) = &self.mask {
            for t in 0..d.frames {
                for i in 0..d.rows {
                    for j in 0..d.cols {
                        if !m.valid(i, j, t) && y.get(i, j, t) != 0.0 {
                            return Err(Error::DataValidation(format!(
                                "masked site (row {i}, col {j}, frame {t}) must read 0, got {}",
                                y.get(i, j, t)
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Probability that a binary detector fires: `1 - exp(-eta * x)`, computed
/// without cancellation for small arguments.
#[inline(always)]
pub fn detection_probability(eta: f64, x: f64) -> f64 {
    -(-eta * x).exp_m1()
}

/// Log likelihood of one site.  Invalid (masked) sites contribute 0.
///
/// For a binary detector the two outcomes use forms that stay accurate at
/// both ends of the rate scale: `ln P(y=0) = -eta x` exactly, and
/// `ln P(y=1) = ln(-expm1(-eta x))`.
pub fn loglik_site(kind: ModelKind, y: f64, eta: f64, x: f64, valid: bool) -> Result<f64> {
    if !valid {
        return Ok(0.0);
    }
    let rate = eta * x;
    match kind {
        ModelKind::Poisson => {
            if y < 0.0 || y.fract() != 0.0 || !y.is_finite() {
                return Err(Error::DataValidation(format!(
                    "poisson count must be a non-negative integer, got {y}"
                )));
            }
            dist::log_poisson_pmf(y as u64, rate)
        }
        ModelKind::Bernoulli => {
            if y == 0.0 {
                Ok(-rate)
            } else if y == 1.0 {
                Ok((-(-rate).exp_m1()).ln())
            } else {
                Err(Error::DataValidation(format!("binary observation must be 0 or 1, got {y}")))
            }
        }
    }
}

/// Total log likelihood of an observation stack given intensities `x`.
pub fn loglik_total(model: &ObservationModel, y: &FrameStack, x: &FrameStack) -> Result<f64> {
    if y.dims() != x.dims() {
        return Err(Error::ShapeMismatch(format!(
            "observations {:?} vs intensities {:?}",
            y.dims(),
            x.dims()
        )));
    }
    model.validate_observations(y)?;
    let d = y.dims();
    let mut total = 0.0;
    for t in 0..d.frames {
        for i in 0..d.rows {
            for j in 0..d.cols {
                total += loglik_site(
                    model.kind,
                    y.get(i, j, t),
                    self_eta(model, i, j),
                    x.get(i, j, t),
                    model.valid(i, j, t),
                )?;
            }
        }
    }
    Ok(total)
}

#[inline(always)]
fn self_eta(model: &ObservationModel, i: usize, j: usize) -> f64 {
    model.eta.get(i, j)
}

/// Draws one observation stack from the model at intensities `x`.  Masked
/// sites read 0.  `tag` separates independent realizations under one key.
pub fn simulate(model: &ObservationModel, x: &FrameStack, rng: &ChainRng, tag: u64) -> Result<FrameStack> {
    x.validate_positive("intensity")?;
    let d = x.dims();
    if d.rows != model.eta.rows() || d.cols != model.eta.cols() {
        return Err(Error::ShapeMismatch(format!(
            "intensities are {}x{} per frame but efficiency map is {}x{}",
            d.rows,
            d.cols,
            model.eta.rows(),
            model.eta.cols()
        )));
    }
    if let Some(m) = &model.mask {
        if m.dims() != d {
            return Err(Error::ShapeMismatch("mask and intensity dimensions differ".into()));
        }
    }
    let mut y = FrameStack::filled(d, 0.0);
    for t in 0..d.frames {
        for i in 0..d.rows {
            for j in 0..d.cols {
                if !model.valid(i, j, t) {
                    continue;
                }
                let site = d.index(i, j, t) as u64;
                let mut stream = rng.stream(tag, Phase::Simulate, site);
                let rate = model.eta.get(i, j) * x.get(i, j, t);
                let v = match model.kind {
                    ModelKind::Poisson => dist::sample_poisson(rate, &mut stream)? as f64,
                    ModelKind::Bernoulli => {
                        let p = detection_probability(model.eta.get(i, j), x.get(i, j, t));
                        if dist::sample_bernoulli(p, &mut stream)? {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                y.set(i, j, t, v);
            }
        }
    }
    Ok(y)
}

/// Rescales a non-negative scene so its mean intensity equals `target_mean`.
/// Zero sites are lifted to `X_FLOOR` first, keeping the result strictly
/// positive.
pub fn scale_to_target(x: &FrameStack, target_mean: f64) -> Result<FrameStack> {
    if !(target_mean.is_finite() && target_mean > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target mean must be finite and positive, got {target_mean}"
        )));
    }
    x.validate_non_negative("scene")?;
    let mut lifted = x.clone();
    for v in lifted.data_mut() {
        if *v < X_FLOOR {
            *v = X_FLOOR;
        }
    }
    let mean = lifted.mean();
    let factor = target_mean / mean;
    for v in lifted.data_mut() {
        *v *= factor;
    }
    Ok(lifted)
}
