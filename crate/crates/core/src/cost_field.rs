//! Uncertain spatial cost over a rectangular configuration space.
//!
//! The cost at a point is a random variable summarised by its mean and
//! standard deviation. The mean is a sum of smooth rectangular bumps and
//! scaled Gaussians; the standard deviation is a sum of scaled Gaussians.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]` the planner samples from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ConfigSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let space = Self { lower, upper };
        space.validate()?;
        Ok(space)
    }

    /// The square `[-half, half]^2`.
    pub fn square(half: f64) -> Self {
        Self {
            lower: vec![-half, -half],
            upper: vec![half, half],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::InvalidSpace(format!(
                "lower has {} axes but upper has {}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.lower.len() < 2 {
            return Err(Error::InvalidSpace("at least two axes are required".into()));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSpace(format!(
                    "axis {i}: lower {lo} must be finite and below upper {hi}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }
}

/// Smooth rectangular obstacle: `rho_max` on the inner box, zero outside the
/// outer box, infinitely differentiable in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpObstacle {
    pub center: Vec<f64>,
    pub inner: Vec<f64>,
    pub outer: Vec<f64>,
    pub rho_max: f64,
}

impl BumpObstacle {
    pub fn new(center: Vec<f64>, inner: Vec<f64>, outer: Vec<f64>, rho_max: f64) -> Result<Self> {
        let bump = Self {
            center,
            inner,
            outer,
            rho_max,
        };
        bump.validate()?;
        Ok(bump)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.center.len();
        for len in [self.inner.len(), self.outer.len()] {
            if len != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: len,
                });
            }
        }
        for (axis, (&a, &b)) in self.inner.iter().zip(&self.outer).enumerate() {
            if !(a > 0.0 && a < b && b.is_finite()) {
                return Err(Error::InvalidBump {
                    axis,
                    inner: a,
                    outer: b,
                });
            }
        }
        if !(self.rho_max >= 0.0 && self.rho_max.is_finite()) {
            return Err(Error::Domain(format!(
                "bump rho_max must be a finite nonnegative number, got {}",
                self.rho_max
            )));
        }
        Ok(())
    }
}

/// `exp(-1/y)` for positive `y`, zero otherwise.
fn smooth_step_base(y: f64) -> f64 {
    if y > 0.0 {
        (-1.0 / y).exp()
    } else {
        0.0
    }
}

/// Smooth transition from 0 (y <= 0) to 1 (y >= 1).
fn smooth_transition(y: f64) -> f64 {
    let left = smooth_step_base(y);
    let right = smooth_step_base(1.0 - y);
    left / (left + right)
}

/// Per-axis bump profile: 1 for `|offset| <= inner`, 0 for `|offset| >= outer`.
fn bump_profile(offset: f64, inner: f64, outer: f64) -> f64 {
    let a2 = inner * inner;
    let t = (offset * offset - a2) / (outer * outer - a2);
    1.0 - smooth_transition(t)
}

/// Mean cost contributed by one bump obstacle at `x`.
pub fn bump_mean(x: &[f64], obstacle: &BumpObstacle) -> Result<f64> {
    obstacle.validate()?;
    if x.len() != obstacle.center.len() {
        return Err(Error::DimensionMismatch {
            expected: obstacle.center.len(),
            got: x.len(),
        });
    }
    Ok(bump_unchecked(x, obstacle))
}

fn bump_unchecked(x: &[f64], obstacle: &BumpObstacle) -> f64 {
    let mut value = obstacle.rho_max;
    for (i, xi) in x.iter().enumerate() {
        if value == 0.0 {
            break;
        }
        value *= bump_profile(
            xi - obstacle.center[i],
            obstacle.inner[i],
            obstacle.outer[i],
        );
    }
    value
}

/// Unnormalised Gaussian whose peak value equals `amplitude`. Construction
/// rejects covariances that are not symmetric positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct GaussianSource {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    amplitude: f64,
    precision: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GaussianRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    amplitude: f64,
}

impl TryFrom<GaussianRepr> for GaussianSource {
    type Error = Error;

    fn try_from(repr: GaussianRepr) -> Result<Self> {
        GaussianSource::new(repr.mean, repr.cov, repr.amplitude)
    }
}

impl From<GaussianSource> for GaussianRepr {
    fn from(g: GaussianSource) -> Self {
        GaussianRepr {
            mean: g.mean,
            cov: g.covariance,
            amplitude: g.amplitude,
        }
    }
}

impl GaussianSource {
    /// `covariance` is row-major, one inner vector per row.
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>, amplitude: f64) -> Result<Self> {
        let dim = mean.len();
        if covariance.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: covariance.len(),
            });
        }
        if let Some(row) = covariance.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::Domain(format!(
                "gaussian amplitude must be finite and nonnegative, got {amplitude}"
            )));
        }
        let cov = DMatrix::from_fn(dim, dim, |i, j| covariance[i][j]);
        let symmetric = (0..dim).all(|i| {
            (0..dim).all(|j| {
                let scale = cov[(i, j)].abs().max(cov[(j, i)].abs()).max(1.0);
                (cov[(i, j)] - cov[(j, i)]).abs() <= 1e-12 * scale
            })
        });
        if !symmetric || cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = cov.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let inv = chol.inverse();
        let precision = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| inv[(i, j)])
            .collect();
        Ok(Self {
            mean,
            covariance,
            amplitude,
            precision,
        })
    }

    /// Axis-aligned Gaussian with per-axis standard deviations.
    pub fn axis_aligned(mean: Vec<f64>, std_devs: &[f64], amplitude: f64) -> Result<Self> {
        let dim = std_devs.len();
        let cov = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| {
                        if i == j {
                            std_devs[i] * std_devs[i]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(mean, cov, amplitude)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[Vec<f64>] {
        &self.covariance
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    fn value_unchecked(&self, x: &[f64]) -> f64 {
        let dim = self.mean.len();
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let mut quad = 0.0;
        for i in 0..dim {
            let row = &self.precision[i * dim..(i + 1) * dim];
            let dot: f64 = row.iter().zip(&diff).map(|(p, d)| p * d).sum();
            quad += diff[i] * dot;
        }
        self.amplitude * (-0.5 * quad).exp()
    }
}

/// Value of a scaled Gaussian source at `x`.
pub fn gaussian_value(x: &[f64], source: &GaussianSource) -> Result<f64> {
    if x.len() != source.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: source.mean.len(),
            got: x.len(),
        });
    }
    Ok(source.value_unchecked(x))
}

/// One additive contributor to the mean cost.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanTerm {
    Bump(BumpObstacle),
    Gaussian(GaussianSource),
}

impl MeanTerm {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            MeanTerm::Bump(b) => bump_unchecked(x, b),
            MeanTerm::Gaussian(g) => g.value_unchecked(x),
        }
    }
}

/// Uncertain cost: mean from `mean_terms`, standard deviation from `sigma_terms`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostField {
    pub space: ConfigSpace,
    pub mean_terms: Vec<MeanTerm>,
    pub sigma_terms: Vec<GaussianSource>,
}

impl CostField {
    pub fn new(space: ConfigSpace) -> Result<Self> {
        space.validate()?;
        Ok(Self {
            space,
            mean_terms: Vec::new(),
            sigma_terms: Vec::new(),
        })
    }

    pub fn with_bump(mut self, bump: BumpObstacle) -> Result<Self> {
        bump.validate()?;
        self.check_dim(bump.center.len())?;
        self.mean_terms.push(MeanTerm::Bump(bump));
        Ok(self)
    }

    pub fn with_mean_gaussian(mut self, g: GaussianSource) -> Result<Self> {
        self.check_dim(g.mean.len())?;
        self.mean_terms.push(MeanTerm::Gaussian(g));
        Ok(self)
    }

    pub fn with_sigma_gaussian(mut self, g: GaussianSource) -> Result<Self> {
        self.check_dim(g.mean.len())?;
        self.sigma_terms.push(g);
        Ok(self)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.space.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                got,
            });
        }
        Ok(())
    }

    /// `(rho_mu, rho_sigma)` at `x`.
    pub fn eval_moments(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.space.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                got: x.len(),
            });
        }
        if !self.space.contains(x) {
            return Err(Error::OutOfBounds(x.to_vec()));
        }
        let mu = self.mean_terms.iter().map(|t| t.value(x)).sum();
        let sigma = self.sigma_terms.iter().map(|g| g.value_unchecked(x)).sum();
        Ok((mu, sigma))
    }
}

/// Free-function form of [`CostField::eval_moments`].
pub fn eval_moments(field: &CostField, x: &[f64]) -> Result<(f64, f64)> {
    field.eval_moments(x)
}

/// On-disk scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub space: ConfigSpace,
    #[serde(default)]
    pub bumps: Vec<BumpObstacle>,
    #[serde(default)]
    pub gaussians_mu: Vec<GaussianSource>,
    #[serde(default)]
    pub gaussians_sigma: Vec<GaussianSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<[f64; 2]>,
}

/// Hand-built fire-room scenario. A burning debris band and an ink-smudged
/// band block the way east, separated by a fixed obstacle; a small hot spot
/// sits on the direct line west of them. The layout is a visual
/// approximation of a sketch; the numbers are not measured data.
pub const FIRE_ROOM_JSON: &str = include_str!("../scenarios/fire_room.json");

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn fire_room() -> Self {
        Self::from_json(FIRE_ROOM_JSON).expect("bundled scenario is valid")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.space
            .validate()
            .map_err(|e| Error::Parse(format!("space: {e}")))?;
        let dim = self.space.dim();
        for (i, b) in self.bumps.iter().enumerate() {
            b.validate()
                .map_err(|e| Error::Parse(format!("bumps[{i}]: {e}")))?;
            if b.center.len() != dim {
                return Err(Error::Parse(format!(
                    "bumps[{i}]: center has {} axes, space has {dim}",
                    b.center.len()
                )));
            }
        }
        for (key, list) in [
            ("gaussians_mu", &self.gaussians_mu),
            ("gaussians_sigma", &self.gaussians_sigma),
        ] {
            for (i, g) in list.iter().enumerate() {
                if g.mean.len() != dim {
                    return Err(Error::Parse(format!(
                        "{key}[{i}]: mean has {} axes, space has {dim}",
                        g.mean.len()
                    )));
                }
            }
        }
        for (key, p) in [("start", &self.start), ("goal", &self.goal)] {
            if let Some(p) = p {
                if !self.space.contains(p) {
                    return Err(Error::Parse(format!("{key}: {p:?} lies outside the space")));
                }
            }
        }
        Ok(())
    }

    pub fn cost_field(&self) -> Result<CostField> {
        let mut field = CostField::new(self.space.clone())?;
        for b in &self.bumps {
            field = field.with_bump(b.clone())?;
        }
        for g in &self.gaussians_mu {
            field = field.with_mean_gaussian(g.clone())?;
        }
        for g in &self.gaussians_sigma {
            field = field.with_sigma_gaussian(g.clone())?;
        }
        Ok(field)
    }
}
