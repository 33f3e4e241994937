//! Convergence and urgency-sweep studies built on the planner.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{arc_length, area_between_paths};
use crate::path::Path;
use crate::planner::{path_cost, path_risk, Planner, PlannerConfig};
use crate::risk::RiskField;
use crate::Num;

/// State of the best path at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    /// Best goal-reaching cost; infinite while no node is within the steer
    /// distance of the goal.
    pub path_cost: f64,
    /// Area to the previous checkpoint's goal-snapped path.
    pub area_to_previous: Option<f64>,
    #[serde(skip)]
    pub path: Option<Path>,
}

/// Runs the planner and records the best path every `interval` iterations.
pub fn convergence_study(
    risk: &RiskField,
    cfg: &PlannerConfig,
    interval: usize,
) -> Result<Vec<Checkpoint>> {
    if interval == 0 {
        return Err(Error::InvalidConfig(
            "checkpoint interval must be at least 1".into(),
        ));
    }
    let mut planner = Planner::new(risk.space(), risk, cfg)?;
    let mut out: Vec<Checkpoint> = Vec::new();
    let mut previous: Option<Path> = None;
    while !planner.finished() {
        planner.run(interval);
        let path = planner.path();
        let cost = planner.best_cost();
        let snapped = path.with_endpoint(cfg.goal);
        let area = match &previous {
            Some(prev) if snapped.len() >= 2 && prev.len() >= 2 => {
                Some(area_between_paths(prev, &snapped)?)
            }
            _ => None,
        };
        out.push(Checkpoint {
            iteration: planner.iteration(),
            path_cost: cost,
            area_to_previous: area,
            path: Some(path),
        });
        previous = Some(snapped);
    }
    Ok(out)
}

/// Columns `iteration,path_cost,area_to_previous`; the first area is empty.
pub fn write_checkpoints_csv<W: Write>(checkpoints: &[Checkpoint], mut out: W) -> Result<()> {
    writeln!(out, "iteration,path_cost,area_to_previous")?;
    for c in checkpoints {
        let area = c
            .area_to_previous
            .map(|a| Num(a).to_string())
            .unwrap_or_default();
        writeln!(out, "{},{},{area}", c.iteration, Num(c.path_cost))?;
    }
    Ok(())
}

pub fn checkpoints_from_csv_str(text: &str) -> Result<Vec<Checkpoint>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("iteration")) {
            continue;
        }
        let err = |what: &str| Error::Parse(format!("line {}: {what}", idx + 1));
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(err("expected 3 columns"));
        }
        out.push(Checkpoint {
            iteration: cells[0].parse().map_err(|_| err("bad iteration"))?,
            path_cost: cells[1].parse().map_err(|_| err("bad path_cost"))?,
            area_to_previous: match cells[2] {
                "" => None,
                s => Some(s.parse().map_err(|_| err("bad area"))?),
            },
            path: None,
        });
    }
    Ok(out)
}

/// Mean inter-checkpoint area over the first and last thirds of a study.
pub fn area_thirds(checkpoints: &[Checkpoint]) -> Option<(f64, f64)> {
    let areas: Vec<f64> = checkpoints
        .iter()
        .filter_map(|c| c.area_to_previous)
        .collect();
    let third = areas.len() / 3;
    if third == 0 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&areas[..third]), mean(&areas[areas.len() - third..])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    /// Length of the goal-snapped path.
    pub arc_length: f64,
    pub path_cost: f64,
    /// Risk-increase part of the cost.
    pub path_risk: f64,
    #[serde(skip)]
    pub path: Option<Path>,
}

/// Plans once per `delta` with otherwise identical settings.
pub fn delta_sweep(
    risk: &RiskField,
    cfg: &PlannerConfig,
    deltas: &[f64],
) -> Result<Vec<SweepPoint>> {
    deltas
        .par_iter()
        .map(|&delta| {
            let cfg = cfg.clone().with_delta(delta);
            let (_, path) = crate::planner::plan(risk.space(), risk, &cfg)?;
            let snapped = path.with_endpoint(cfg.goal);
            Ok(SweepPoint {
                delta,
                arc_length: arc_length(&snapped),
                path_cost: path_cost(&snapped, risk, delta)?,
                path_risk: path_risk(&snapped, risk)?,
                path: Some(snapped),
            })
        })
        .collect()
}

/// Columns `delta,arc_length,path_cost,path_risk`.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut out: W) -> Result<()> {
    writeln!(out, "delta,arc_length,path_cost,path_risk")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            Num(p.delta),
            Num(p.arc_length),
            Num(p.path_cost),
            Num(p.path_risk)
        )?;
    }
    Ok(())
}

pub fn sweep_from_csv_str(text: &str) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("delta")) {
            continue;
        }
        let nums = line
            .split(',')
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .ok()
            .filter(|v| v.len() == 4)
            .ok_or_else(|| Error::Parse(format!("line {}: expected 4 numbers", idx + 1)))?;
        out.push(SweepPoint {
            delta: nums[0],
            arc_length: nums[1],
            path_cost: nums[2],
            path_risk: nums[3],
            path: None,
        });
    }
    Ok(out)
}
