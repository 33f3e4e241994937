//! SPSA fit of risk-model parameters to a target path.
//!
//! Each iteration perturbs every parameter at once by `±c_k`, plans under
//! both perturbed models, and steps against the finite-difference gradient
//! of the area between the planned and target paths.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{area_between, PolylinePair, DEFAULT_ENDPOINT_TOL};
use crate::path::{distance, Path};
use crate::planner::{plan, PlannerConfig};
use crate::risk::{CptParams, RiskField, RiskModel};
use crate::Num;

/// Box constraints, one interval per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidConfig(
                "bounds need matching, non-empty limits".into(),
            ));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::InvalidConfig(format!(
                "bound {i}: lower {} exceeds upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    /// alpha in [0.1, 2], beta in [0.05, 5], gamma in [0.1, 0.99], lambda in [1.01, 15].
    pub fn cpt() -> Self {
        Self {
            lower: vec![0.1, 0.05, 0.1, 1.01],
            upper: vec![2.0, 5.0, 0.99, 15.0],
        }
    }

    /// q in [0, 0.99].
    pub fn cvar() -> Self {
        Self {
            lower: vec![0.0],
            upper: vec![0.99],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (lo, hi))| lo <= t && t <= hi)
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (t, (lo, hi)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *t = t.clamp(*lo, *hi);
        }
    }
}

/// Which parameter vector is being fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    Cpt,
    Cvar,
}

impl FitKind {
    pub fn of(model: &RiskModel) -> Result<Self> {
        match model {
            RiskModel::Cpt(_) => Ok(Self::Cpt),
            RiskModel::Cvar { .. } => Ok(Self::Cvar),
            RiskModel::Expected => Err(Error::InvalidConfig(
                "the expected-risk model has no parameters to fit".into(),
            )),
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Self::Cpt => &["alpha", "beta", "gamma", "lambda"],
            Self::Cvar => &["q"],
        }
    }

    pub fn default_bounds(self) -> Bounds {
        match self {
            Self::Cpt => Bounds::cpt(),
            Self::Cvar => Bounds::cvar(),
        }
    }

    pub fn to_vec(self, model: &RiskModel) -> Vec<f64> {
        match model {
            RiskModel::Cpt(p) => p.to_array().to_vec(),
            RiskModel::Cvar { q } => vec![*q],
            RiskModel::Expected => Vec::new(),
        }
    }

    pub fn to_model(self, theta: &[f64]) -> Result<RiskModel> {
        let model = match self {
            Self::Cpt => RiskModel::Cpt(CptParams::from_slice(theta)?),
            Self::Cvar => match theta {
                [q] => RiskModel::Cvar { q: *q },
                _ => {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        got: theta.len(),
                    })
                }
            },
        };
        model.validate()?;
        Ok(model)
    }
}

/// How planner seeds are chosen for the evaluations inside one fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedPolicy {
    /// Seed per evaluation from `(trial seed, k, which)`.
    #[default]
    Derived,
    /// Every evaluation reuses the planner config's seed (common random
    /// numbers), so loss differences reflect the parameters alone.
    Common,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpsaConfig {
    pub theta0: RiskModel,
    pub kappa: f64,
    pub max_iters: usize,
    pub planner: PlannerConfig,
    pub bounds: Bounds,
    pub seed: u64,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
}

impl SpsaConfig {
    /// kappa = 15, 10 iterations, default bounds for the model's kind.
    pub fn new(theta0: RiskModel, planner: PlannerConfig) -> Result<Self> {
        let bounds = FitKind::of(&theta0)?.default_bounds();
        Ok(Self {
            theta0,
            kappa: 15.0,
            max_iters: 10,
            planner,
            bounds,
            seed: 0,
            seed_policy: SeedPolicy::Derived,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn kind(&self) -> Result<FitKind> {
        FitKind::of(&self.theta0)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        self.theta0.validate()?;
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        let theta = kind.to_vec(&self.theta0);
        if self.bounds.dim() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: self.bounds.dim(),
            });
        }
        if !self.bounds.contains(&theta) {
            return Err(Error::InvalidConfig(format!(
                "theta0 {theta:?} lies outside the bounds"
            )));
        }
        // Every point of the box must be a valid model.
        kind.to_model(&self.bounds.lower)?;
        kind.to_model(&self.bounds.upper)?;
        Ok(())
    }
}

/// `a_k = 0.4 / (1.6 + k)^0.601`, `c_k = 0.97 / (1.6 + k)^0.301`.
pub fn spsa_gains(k: usize) -> Result<(f64, f64)> {
    if k < 1 {
        return Err(Error::Domain("gain index k starts at 1".into()));
    }
    let base = 1.6 + k as f64;
    Ok((0.4 / base.powf(0.601), 0.97 / base.powf(0.301)))
}

/// Draws a ±1 direction and returns `(theta + c*delta, theta - c*delta, delta)`,
/// both clamped to the bounds.
pub fn perturb<R: Rng + ?Sized>(
    theta: &[f64],
    c_k: f64,
    bounds: &Bounds,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let delta: Vec<f64> = theta
        .iter()
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + c_k * d).collect();
    let mut minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - c_k * d).collect();
    bounds.clamp(&mut plus);
    bounds.clamp(&mut minus);
    (plus, minus, delta)
}

/// `theta - a_k * g`, `g_i = (loss_plus - loss_minus) / (2 c_k delta_i)`, clamped.
pub fn spsa_step(
    theta: &[f64],
    k: usize,
    loss_plus: f64,
    loss_minus: f64,
    delta: &[f64],
    bounds: &Bounds,
) -> Result<Vec<f64>> {
    if !(loss_plus.is_finite() && loss_minus.is_finite()) {
        return Err(Error::Domain("SPSA losses must be finite".into()));
    }
    if delta.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: delta.len(),
        });
    }
    let (a_k, c_k) = spsa_gains(k)?;
    let diff = loss_plus - loss_minus;
    let mut next: Vec<f64> = theta
        .iter()
        .zip(delta)
        .map(|(t, d)| t - a_k * diff / (2.0 * c_k * d))
        .collect();
    bounds.clamp(&mut next);
    Ok(next)
}

/// SplitMix64 finalizer over `base` mixed with two indices.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub k: usize,
    pub params: Vec<f64>,
    /// Zero for the initial evaluation at k = 0.
    pub a_k: f64,
    pub c_k: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub kind: FitKind,
    pub records: Vec<FitRecord>,
    pub final_model: RiskModel,
    /// Planned path for the final model, snapped to the goal.
    pub final_path: Option<Path>,
    pub converged: bool,
}

impl FitReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// Columns `k,<param names>,a_k,c_k,loss`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,{},a_k,c_k,loss", self.kind.param_names().join(","))?;
        for r in &self.records {
            let params: Vec<String> = r.params.iter().map(|&v| Num(v).to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.k,
                params.join(","),
                Num(r.a_k),
                Num(r.c_k),
                Num(r.loss)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads records written by [`FitReport::write_csv`].
    pub fn records_from_csv_str(text: &str) -> Result<(FitKind, Vec<FitRecord>)> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l.trim()).unwrap_or_default();
        let kind = [FitKind::Cpt, FitKind::Cvar]
            .into_iter()
            .find(|k| header == format!("k,{},a_k,c_k,loss", k.param_names().join(",")))
            .ok_or_else(|| Error::Parse(format!("line 1: unrecognised header {header:?}")))?;
        let width = kind.param_names().len() + 4;
        let mut records = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |what: &str| Error::Parse(format!("line {}: {what}", idx + 1));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(err(&format!("expected {width} columns")));
            }
            let k = cells[0].parse().map_err(|_| err("bad k"))?;
            let nums = cells[1..]
                .iter()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| err("bad number"))?;
            let p = width - 4;
            records.push(FitRecord {
                k,
                params: nums[..p].to_vec(),
                a_k: nums[p],
                c_k: nums[p + 1],
                loss: nums[p + 2],
            });
        }
        Ok((kind, records))
    }
}

/// A fit stopped by an error, with whatever had been recorded.
#[derive(Debug, thiserror::Error)]
#[error("fit aborted after {} records: {source}", partial.records.len())]
pub struct FitFailure {
    #[source]
    pub source: Error,
    pub partial: Box<FitReport>,
}

struct Evaluator<'a, B> {
    target: &'a Path,
    cfg: &'a SpsaConfig,
    kind: FitKind,
    build: &'a B,
}

impl<B> Evaluator<'_, B>
where
    B: Fn(&RiskModel) -> Result<RiskField> + Sync,
{
    fn seed(&self, k: usize, which: u64) -> u64 {
        match self.cfg.seed_policy {
            SeedPolicy::Common => self.cfg.planner.seed,
            SeedPolicy::Derived => derive_seed(self.cfg.seed, k as u64, which),
        }
    }

    fn evaluate(&self, theta: &[f64], seed: u64) -> Result<(f64, Path)> {
        let model = self.kind.to_model(theta)?;
        let field = (self.build)(&model)?;
        let planner = PlannerConfig {
            seed,
            ..self.cfg.planner.clone()
        };
        let (_, path) = plan(field.space(), &field, &planner)?;
        let path = path.with_endpoint(planner.goal);
        let loss = area_between(&PolylinePair::new(&path, self.target)?);
        Ok((loss, path))
    }
}

/// Runs SPSA from `cfg.theta0` until the loss drops below `kappa` or
/// `max_iters` updates have been made. `build` maps a model to its risk field.
pub fn fit<B>(
    target: &Path,
    cfg: &SpsaConfig,
    build: &B,
) -> std::result::Result<FitReport, FitFailure>
where
    B: Fn(&RiskModel) -> Result<RiskField> + Sync,
{
    let kind = FitKind::of(&cfg.theta0).unwrap_or(FitKind::Cpt);
    let mut report = FitReport {
        kind,
        records: Vec::new(),
        final_model: cfg.theta0,
        final_path: None,
        converged: false,
    };
    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(source) => {
                    return Err(FitFailure {
                        source,
                        partial: Box::new(report),
                    })
                }
            }
        };
    }
    bail!(cfg.validate());
    bail!(check_target(target, &cfg.planner));

    let eval = Evaluator {
        target,
        cfg,
        kind,
        build,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = kind.to_vec(&cfg.theta0);

    let (loss, path) = bail!(eval.evaluate(&theta, cfg.planner.seed));
    report.records.push(FitRecord {
        k: 0,
        params: theta.clone(),
        a_k: 0.0,
        c_k: 0.0,
        loss,
    });
    report.final_path = Some(path);
    report.converged = loss < cfg.kappa;

    for k in 1..=cfg.max_iters {
        if report.converged {
            break;
        }
        let (a_k, c_k) = bail!(spsa_gains(k));
        let (plus, minus, delta) = perturb(&theta, c_k, &cfg.bounds, &mut rng);
        let (rp, rm) = rayon::join(
            || eval.evaluate(&plus, eval.seed(k, 0)),
            || eval.evaluate(&minus, eval.seed(k, 1)),
        );
        let (loss_plus, _) = bail!(rp);
        let (loss_minus, _) = bail!(rm);
        theta = bail!(spsa_step(
            &theta,
            k,
            loss_plus,
            loss_minus,
            &delta,
            &cfg.bounds
        ));
        let (loss, path) = bail!(eval.evaluate(&theta, eval.seed(k, 2)));
        report.records.push(FitRecord {
            k,
            params: theta.clone(),
            a_k,
            c_k,
            loss,
        });
        report.final_model = bail!(kind.to_model(&theta));
        report.final_path = Some(path);
        report.converged = loss < cfg.kappa;
    }
    Ok(report)
}

/// Target endpoints must lie within the endpoint tolerance of start and goal.
pub fn check_target(target: &Path, planner: &PlannerConfig) -> Result<()> {
    if target.len() < 2 {
        return Err(Error::InvalidPath(
            "target path needs at least two waypoints".into(),
        ));
    }
    for (p, q) in [
        (target.first(), planner.start),
        (target.last(), planner.goal),
    ] {
        let d = distance(p, q);
        if d > DEFAULT_ENDPOINT_TOL {
            return Err(Error::EndpointMismatch {
                distance: d,
                tolerance: DEFAULT_ENDPOINT_TOL,
            });
        }
    }
    Ok(())
}

/// Runs `trials` independent fits in parallel. Trial `i` uses seed
/// `derive_seed(cfg.seed, i, u64::MAX)`.
pub fn fit_trials<B>(
    target: &Path,
    cfg: &SpsaConfig,
    trials: usize,
    build: &B,
) -> Vec<std::result::Result<FitReport, FitFailure>>
where
    B: Fn(&RiskModel) -> Result<RiskField> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let trial = cfg.clone().with_seed(trial_seed(cfg.seed, i));
            fit(target, &trial, build)
        })
        .collect()
}

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    derive_seed(base, trial as u64, u64::MAX)
}

/// Median, mean, min and max of final losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub trials: usize,
    pub converged: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl LossSummary {
    pub fn from_reports(reports: &[FitReport]) -> Option<Self> {
        let mut losses: Vec<f64> = reports.iter().filter_map(FitReport::final_loss).collect();
        if losses.is_empty() {
            return None;
        }
        losses.sort_by(f64::total_cmp);
        let n = losses.len();
        let median = if n % 2 == 1 {
            losses[n / 2]
        } else {
            0.5 * (losses[n / 2 - 1] + losses[n / 2])
        };
        Some(Self {
            trials: reports.len(),
            converged: reports.iter().filter(|r| r.converged).count(),
            median,
            mean: losses.iter().sum::<f64>() / n as f64,
            min: losses[0],
            max: losses[n - 1],
        })
    }
}
