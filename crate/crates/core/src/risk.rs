//! Perceived risk of an uncertain cost.
//!
//! The cost at a point is discretised into an equal-probability prospect and
//! then scored by one of three perception models: the plain expectation,
//! cumulative prospect theory (Prelec weighting plus a power utility), or
//! conditional value at risk. [`build_risk_field`] evaluates a model on a
//! lattice over the configuration space; off-lattice queries interpolate
//! bilinearly.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cost_field::{ConfigSpace, CostField};
use crate::error::{Error, Result};
use crate::Num;

/// Probabilities must sum to one within this tolerance.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Cost-domain CPT parameters `{alpha, beta, gamma, lambda}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl CptParams {
    /// Average-human lottery parameters.
    pub const NOMINAL: CptParams = CptParams {
        alpha: 0.74,
        beta: 1.0,
        gamma: 0.88,
        lambda: 2.25,
    };
    /// Strong cost aversion.
    pub const RISK_AVERSE: CptParams = CptParams {
        alpha: 0.74,
        beta: 2.0,
        gamma: 0.9,
        lambda: 10.0,
    };
    /// Low cost sensitivity.
    pub const RISK_INDIFFERENT: CptParams = CptParams {
        alpha: 0.74,
        beta: 1.0,
        gamma: 0.3,
        lambda: 2.25,
    };
    /// High `beta`.
    pub const HIGH_BETA: CptParams = CptParams {
        alpha: 0.74,
        beta: 3.0,
        gamma: 0.88,
        lambda: 2.25,
    };
    /// Low `beta`.
    pub const LOW_BETA: CptParams = CptParams {
        alpha: 0.74,
        beta: 0.05,
        gamma: 0.88,
        lambda: 2.25,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64, lambda: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            gamma,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParams(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.lambda > 1.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "lambda must be > 1, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.lambda]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v {
            [a, b, g, l] => Self::new(*a, *b, *g, *l),
            _ => Err(Error::InvalidParams(format!(
                "expected 4 values (alpha, beta, gamma, lambda), got {}",
                v.len()
            ))),
        }
    }
}

/// Power utility `lambda * rho^gamma` on costs.
pub fn utility_v(rho: f64, params: &CptParams) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::Domain(format!(
            "cost must be nonnegative, got {rho}"
        )));
    }
    Ok(utility(rho, params))
}

#[inline]
fn utility(rho: f64, params: &CptParams) -> f64 {
    params.lambda * rho.powf(params.gamma)
}

/// Prelec probability weighting `exp(-beta (-ln p)^alpha)`, with `w(0) = 0`.
pub fn prelec_w(p: f64, params: &CptParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(prelec(p, params))
}

#[inline]
fn prelec(p: f64, params: &CptParams) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        (-params.beta * (-p.ln()).powf(params.alpha)).exp()
    }
}

/// Finite outcome distribution with strictly descending outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Prospect {
    outcomes: Vec<f64>,
    probs: Vec<f64>,
}

impl Prospect {
    pub fn new(outcomes: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Domain(
                "a prospect needs at least one outcome".into(),
            ));
        }
        if outcomes.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: outcomes.len(),
                got: probs.len(),
            });
        }
        if outcomes.iter().any(|o| !(o.is_finite() && *o >= 0.0)) {
            return Err(Error::Domain(
                "outcomes must be finite and nonnegative".into(),
            ));
        }
        if outcomes.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::Domain("outcomes must be strictly descending".into()));
        }
        check_probs(&probs)?;
        Ok(Self { outcomes, probs })
    }

    /// Sorts pairs by descending outcome and merges equal outcomes.
    pub fn collapse(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        if pairs.iter().any(|(o, _)| o.is_nan()) {
            return Err(Error::Domain("outcomes must not be NaN".into()));
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut outcomes: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (o, p) in pairs {
            if outcomes.last() == Some(&o) {
                *probs.last_mut().unwrap() += p;
            } else {
                outcomes.push(o);
                probs.push(p);
            }
        }
        Self::new(outcomes, probs)
    }

    pub fn certain(value: f64) -> Result<Self> {
        Self::new(vec![value], vec![1.0])
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Shifts every outcome by `delta`.
    pub fn shifted(&self, delta: f64) -> Result<Self> {
        Self::new(
            self.outcomes.iter().map(|o| o + delta).collect(),
            self.probs.clone(),
        )
    }
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Domain("probabilities must be nonnegative".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::NotNormalized(total));
    }
    Ok(())
}

/// Midpoint quantiles of the standard half-normal for `m` equal-mass bins,
/// largest first.
pub fn half_normal_bin_quantiles(m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::Domain("number of bins must be at least 1".into()));
    }
    let normal = Normal::standard();
    Ok((1..=m)
        .map(|i| {
            let level = 1.0 - (i as f64 - 0.5) / m as f64;
            normal.inverse_cdf(0.5 * (1.0 + level))
        })
        .collect())
}

/// Discretises `rho_mu + |Z|`, `Z ~ N(0, rho_sigma^2)`, into `m` equal-mass
/// bins represented by their probability-midpoint quantiles.
pub fn discretize_prospect(rho_mu: f64, rho_sigma: f64, m: usize) -> Result<Prospect> {
    let z = half_normal_bin_quantiles(m)?;
    discretize_with(rho_mu, rho_sigma, &z)
}

fn discretize_with(rho_mu: f64, rho_sigma: f64, z: &[f64]) -> Result<Prospect> {
    if !(rho_mu >= 0.0 && rho_mu.is_finite()) || !(rho_sigma >= 0.0 && rho_sigma.is_finite()) {
        return Err(Error::Domain(format!(
            "moments must be finite and nonnegative, got ({rho_mu}, {rho_sigma})"
        )));
    }
    if rho_sigma == 0.0 {
        return Prospect::certain(rho_mu);
    }
    let p = 1.0 / z.len() as f64;
    Prospect::collapse(z.iter().map(|zi| (rho_mu + rho_sigma * zi, p)))
}

/// Cumulative decision weights `w(S_j) - w(S_{j+1})`, where `S_j` sums the
/// probabilities of outcome `j` and every smaller outcome.
pub fn decision_weights(probs: &[f64], params: &CptParams) -> Result<Vec<f64>> {
    if probs.is_empty() {
        return Err(Error::Domain("no probabilities given".into()));
    }
    check_probs(probs)?;
    Ok(weights_unchecked(probs, params))
}

fn weights_unchecked(probs: &[f64], params: &CptParams) -> Vec<f64> {
    let m = probs.len();
    let mut tail = vec![0.0; m + 1];
    for j in (0..m).rev() {
        tail[j] = tail[j + 1] + probs[j];
    }
    // w has unbounded slope at 1 when alpha < 1; rounding in the full sum
    // must not leak into the weights.
    tail[0] = 1.0;
    let w: Vec<f64> = tail.iter().map(|s| prelec(s.min(1.0), params)).collect();
    (0..m).map(|j| w[j] - w[j + 1]).collect()
}

/// CPT risk: utilities weighted by the cumulative decision weights.
pub fn cpt_risk(prospect: &Prospect, params: &CptParams) -> f64 {
    let pi = weights_unchecked(&prospect.probs, params);
    prospect
        .outcomes
        .iter()
        .zip(&pi)
        .map(|(rho, w)| utility(*rho, params) * w)
        .sum()
}

/// Probability-weighted mean outcome.
pub fn expected_risk(prospect: &Prospect) -> f64 {
    prospect
        .outcomes
        .iter()
        .zip(&prospect.probs)
        .map(|(rho, p)| rho * p)
        .sum()
}

/// Mass each outcome contributes to the worst `1 - q` tail, walking from the
/// largest outcome and splitting the boundary bin.
fn cvar_masses(probs: &[f64], q: f64) -> Vec<f64> {
    let mut remaining = 1.0 - q;
    probs
        .iter()
        .map(|p| {
            let take = p.min(remaining).max(0.0);
            remaining -= take;
            take
        })
        .collect()
}

fn check_q(q: f64) -> Result<()> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Domain(format!(
            "CVaR level must lie in [0, 1), got {q}"
        )));
    }
    Ok(())
}

/// Expected outcome over the worst `1 - q` probability mass.
pub fn cvar_risk(prospect: &Prospect, q: f64) -> Result<f64> {
    check_q(q)?;
    let masses = cvar_masses(&prospect.probs, q);
    let total: f64 = prospect
        .outcomes
        .iter()
        .zip(&masses)
        .map(|(rho, m)| rho * m)
        .sum();
    Ok(total / (1.0 - q))
}

/// How an uncertain cost is turned into a scalar risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RiskModel {
    Expected,
    Cpt(CptParams),
    Cvar { q: f64 },
}

impl RiskModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            RiskModel::Expected => Ok(()),
            RiskModel::Cpt(p) => p.validate(),
            RiskModel::Cvar { q } => check_q(*q),
        }
    }

    /// Risk of a single prospect under this model.
    pub fn risk(&self, prospect: &Prospect) -> Result<f64> {
        match self {
            RiskModel::Expected => Ok(expected_risk(prospect)),
            RiskModel::Cpt(p) => {
                p.validate()?;
                Ok(cpt_risk(prospect, p))
            }
            RiskModel::Cvar { q } => cvar_risk(prospect, *q),
        }
    }

    /// Compact whitespace-free tag, e.g. `cpt:0.74:2:0.9:10`.
    pub fn tag(&self) -> String {
        self.to_string()
    }

    pub fn parse_tag(tag: &str) -> Result<Self> {
        let mut parts = tag.split(':');
        let kind = parts.next().unwrap_or_default();
        let nums: Vec<f64> = parts
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("model tag {tag:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        let model = match (kind, nums.as_slice()) {
            ("expected", []) => RiskModel::Expected,
            ("cpt", v) => RiskModel::Cpt(CptParams::from_slice(v)?),
            ("cvar", [q]) => RiskModel::Cvar { q: *q },
            _ => return Err(Error::Parse(format!("unrecognised model tag {tag:?}"))),
        };
        model.validate()?;
        Ok(model)
    }
}

impl fmt::Display for RiskModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskModel::Expected => write!(f, "expected"),
            RiskModel::Cpt(p) => write!(f, "cpt:{}:{}:{}:{}", p.alpha, p.beta, p.gamma, p.lambda),
            RiskModel::Cvar { q } => write!(f, "cvar:{q}"),
        }
    }
}

/// A model bound to a bin count. Bin probabilities are the same at every
/// location, so quantile offsets and outcome weights are computed once.
#[derive(Debug, Clone)]
pub struct PerceptionKernel {
    model: RiskModel,
    z: Vec<f64>,
    weights: Vec<f64>,
    normalizer: f64,
}

impl PerceptionKernel {
    pub fn new(model: RiskModel, bins: usize) -> Result<Self> {
        model.validate()?;
        let z = half_normal_bin_quantiles(bins)?;
        let probs = vec![1.0 / bins as f64; bins];
        let (weights, normalizer) = match &model {
            RiskModel::Expected => (probs.clone(), 1.0),
            RiskModel::Cpt(p) => (weights_unchecked(&probs, p), 1.0),
            RiskModel::Cvar { q } => (cvar_masses(&probs, *q), 1.0 - q),
        };
        Ok(Self {
            model,
            z,
            weights,
            normalizer,
        })
    }

    pub fn model(&self) -> &RiskModel {
        &self.model
    }

    pub fn bins(&self) -> usize {
        self.z.len()
    }

    /// Same value as discretising `(rho_mu, rho_sigma)` and scoring the
    /// resulting prospect with the model.
    pub fn evaluate(&self, rho_mu: f64, rho_sigma: f64) -> Result<f64> {
        if !(rho_mu >= 0.0 && rho_mu.is_finite()) || !(rho_sigma >= 0.0 && rho_sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "moments must be finite and nonnegative, got ({rho_mu}, {rho_sigma})"
            )));
        }
        let transform = |rho: f64| match &self.model {
            RiskModel::Cpt(p) => utility(rho, p),
            _ => rho,
        };
        if rho_sigma == 0.0 {
            return Ok(transform(rho_mu));
        }
        let outcomes: Vec<f64> = self.z.iter().map(|zi| rho_mu + rho_sigma * zi).collect();
        if outcomes.windows(2).any(|w| !(w[0] > w[1])) {
            // Ties in floating point: score the collapsed prospect directly.
            let prospect = discretize_with(rho_mu, rho_sigma, &self.z)?;
            return self.model.risk(&prospect);
        }
        let total: f64 = outcomes
            .iter()
            .zip(&self.weights)
            .map(|(rho, w)| transform(*rho) * w)
            .sum();
        Ok(total / self.normalizer)
    }
}

/// Perceived risk sampled on a uniform lattice over a 2-D space.
///
/// Lattice vertex `(i, j)` sits at `lower + (i, j) * step`, with
/// `step = extent / (resolution - 1)`, so the lattice spans the space
/// edge to edge. `grid` is row-major: row `j` is the `j`-th y value.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskField {
    model: RiskModel,
    space: ConfigSpace,
    resolution: usize,
    grid: Vec<f64>,
    step: [f64; 2],
}

impl RiskField {
    pub fn from_grid(
        model: RiskModel,
        space: ConfigSpace,
        resolution: usize,
        grid: Vec<f64>,
    ) -> Result<Self> {
        space.validate()?;
        if space.dim() != 2 {
            return Err(Error::InvalidSpace(format!(
                "risk fields are two-dimensional, space has {} axes",
                space.dim()
            )));
        }
        if resolution < 2 {
            return Err(Error::Domain(format!(
                "resolution must be at least 2, got {resolution}"
            )));
        }
        if grid.len() != resolution * resolution {
            return Err(Error::DimensionMismatch {
                expected: resolution * resolution,
                got: grid.len(),
            });
        }
        if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "risk values must be finite and nonnegative, got {v}"
            )));
        }
        let step = [
            space.extent(0) / (resolution - 1) as f64,
            space.extent(1) / (resolution - 1) as f64,
        ];
        Ok(Self {
            model,
            space,
            resolution,
            grid,
            step,
        })
    }

    /// Builds a field by sampling `f` at every lattice vertex.
    pub fn from_fn(
        model: RiskModel,
        space: ConfigSpace,
        resolution: usize,
        f: impl Fn([f64; 2]) -> f64,
    ) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Domain(format!(
                "resolution must be at least 2, got {resolution}"
            )));
        }
        let mut grid = Vec::with_capacity(resolution * resolution);
        for j in 0..resolution {
            for i in 0..resolution {
                grid.push(f(lattice_point(&space, resolution, i, j)));
            }
        }
        Self::from_grid(model, space, resolution, grid)
    }

    pub fn model(&self) -> &RiskModel {
        &self.model
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Lattice value at column `i` (x) and row `j` (y).
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.grid[j * self.resolution + i]
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        lattice_point(&self.space, self.resolution, i, j)
    }

    pub fn max_value(&self) -> f64 {
        self.grid.iter().copied().fold(0.0, f64::max)
    }

    /// Bilinear interpolation; errors for points outside the space.
    pub fn value(&self, p: [f64; 2]) -> Result<f64> {
        if !self.space.contains(&p) {
            return Err(Error::OutOfBounds(p.to_vec()));
        }
        Ok(self.value_clamped(p))
    }

    /// Bilinear interpolation with the query clamped into the space.
    pub fn value_clamped(&self, p: [f64; 2]) -> f64 {
        let last = (self.resolution - 1) as f64;
        let u = ((p[0] - self.space.lower[0]) / self.step[0]).clamp(0.0, last);
        let v = ((p[1] - self.space.lower[1]) / self.step[1]).clamp(0.0, last);
        let i = (u.floor() as usize).min(self.resolution - 2);
        let j = (v.floor() as usize).min(self.resolution - 2);
        let fu = u - i as f64;
        let fv = v - j as f64;
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        let bottom = v00 + (v10 - v00) * fu;
        let top = v01 + (v11 - v01) * fu;
        bottom + (top - bottom) * fv
    }

    fn header(&self) -> String {
        format!(
            "# model={} resolution={} space=[{},{}]x[{},{}]",
            self.model.tag(),
            self.resolution,
            self.space.lower[0],
            self.space.upper[0],
            self.space.lower[1],
            self.space.upper[1]
        )
    }

    /// Header line, then one CSV row per y value (increasing), columns by
    /// increasing x. Values use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.header())?;
        for row in self.grid.chunks(self.resolution) {
            let line: Vec<String> = row.iter().map(|&v| Num(v).to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty risk grid file".into()))?;
        let body = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("line 1: missing '#' header".into()))?;
        let mut model = None;
        let mut resolution = None;
        let mut space = None;
        for field in body.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line 1: malformed header field {field:?}")))?;
            match key {
                "model" => model = Some(RiskModel::parse_tag(value)?),
                "resolution" => {
                    resolution =
                        Some(value.parse::<usize>().map_err(|e| {
                            Error::Parse(format!("line 1: resolution {value:?}: {e}"))
                        })?)
                }
                "space" => space = Some(parse_space(value)?),
                other => {
                    return Err(Error::Parse(format!(
                        "line 1: unknown header key {other:?}"
                    )))
                }
            }
        }
        let (model, resolution, space) = match (model, resolution, space) {
            (Some(m), Some(r), Some(s)) => (m, r, s),
            _ => {
                return Err(Error::Parse(
                    "line 1: header needs model, resolution and space".into(),
                ))
            }
        };
        let mut grid = Vec::with_capacity(resolution * resolution);
        let mut rows = 0;
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            rows += 1;
            let before = grid.len();
            for cell in line.split(',') {
                grid.push(
                    cell.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!("line {}: value {cell:?}: {e}", idx + 2))
                    })?,
                );
            }
            if grid.len() - before != resolution {
                return Err(Error::Parse(format!(
                    "line {}: expected {resolution} columns, got {}",
                    idx + 2,
                    grid.len() - before
                )));
            }
        }
        if rows != resolution {
            return Err(Error::Parse(format!(
                "expected {resolution} rows, got {rows}"
            )));
        }
        Self::from_grid(model, space, resolution, grid)
    }

    /// Binary graymap (P5), values min-max scaled to 0..=255, top row is the
    /// largest y.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.resolution;
        let (lo, hi) = self
            .grid
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            });
        let span = hi - lo;
        write!(out, "P5\n{n} {n}\n255\n")?;
        let mut bytes = Vec::with_capacity(n * n);
        for j in (0..n).rev() {
            for i in 0..n {
                let v = self.at(i, j);
                let level = if span > 0.0 {
                    ((v - lo) / span * 255.0).round()
                } else {
                    0.0
                };
                bytes.push(level.clamp(0.0, 255.0) as u8);
            }
        }
        out.write_all(&bytes)?;
        Ok(())
    }
}

fn lattice_point(space: &ConfigSpace, resolution: usize, i: usize, j: usize) -> [f64; 2] {
    let last = (resolution - 1) as f64;
    let coord = |axis: usize, k: usize| {
        if k == resolution - 1 {
            space.upper[axis]
        } else {
            space.lower[axis] + space.extent(axis) * (k as f64 / last)
        }
    };
    [coord(0, i), coord(1, j)]
}

fn parse_space(text: &str) -> Result<ConfigSpace> {
    let err = || Error::Parse(format!("line 1: malformed space {text:?}"));
    let (xs, ys) = text.split_once("]x[").ok_or_else(err)?;
    let parse_pair = |s: &str| -> Result<(f64, f64)> {
        let s = s.trim_start_matches('[').trim_end_matches(']');
        let (a, b) = s.split_once(',').ok_or_else(err)?;
        Ok((a.parse().map_err(|_| err())?, b.parse().map_err(|_| err())?))
    };
    let (x0, x1) = parse_pair(xs)?;
    let (y0, y1) = parse_pair(ys)?;
    ConfigSpace::new(vec![x0, y0], vec![x1, y1])
}

/// Evaluates `model` at every lattice vertex of `field`'s space.
pub fn build_risk_field(
    field: &CostField,
    model: RiskModel,
    bins: usize,
    resolution: usize,
) -> Result<RiskField> {
    if resolution < 2 {
        return Err(Error::Domain(format!(
            "resolution must be at least 2, got {resolution}"
        )));
    }
    if field.space.dim() != 2 {
        return Err(Error::InvalidSpace(format!(
            "risk fields are two-dimensional, space has {} axes",
            field.space.dim()
        )));
    }
    let kernel = PerceptionKernel::new(model, bins)?;
    let space = field.space.clone();
    let rows: Vec<Vec<f64>> = (0..resolution)
        .into_par_iter()
        .map(|j| {
            (0..resolution)
                .map(|i| {
                    let p = lattice_point(&space, resolution, i, j);
                    let (mu, sigma) = field.eval_moments(&p)?;
                    kernel.evaluate(mu, sigma)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    RiskField::from_grid(model, space, resolution, rows.concat())
}
