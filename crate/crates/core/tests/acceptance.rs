//! Acceptance checks. Each test prints one `PASS`/`FAIL` line to stderr
//! (visible without `--nocapture`) and then asserts.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use riskplan::cost_field::{CostField, Scenario};
use riskplan::experiments::{area_thirds, convergence_study, delta_sweep};
use riskplan::metrics::{area_between, PolylinePair};
use riskplan::path::Path;
use riskplan::planner::{path_risk, plan, Planner, PlannerConfig};
use riskplan::risk::{
    build_risk_field, cpt_risk, cvar_risk, decision_weights, expected_risk,
    half_normal_bin_quantiles, prelec_w, utility_v, CptParams, Prospect, RiskField, RiskModel,
};
use riskplan::spsa::{fit, spsa_gains, trial_seed, SpsaConfig};

const GRID: usize = 201;
const BINS: usize = 20;

fn report(id: u32, name: &str, ok: bool, detail: &str, started: Instant) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let secs = started.elapsed().as_secs_f64();
    let _ = writeln!(
        std::io::stderr(),
        "[{id:02}] {verdict} {name}: {detail} ({secs:.1} s)"
    );
    assert!(ok, "[{id:02}] {name}: {detail}");
}

fn scenario() -> (Scenario, CostField) {
    let s = Scenario::fire_room();
    let cf = s.cost_field().unwrap();
    (s, cf)
}

fn field(cf: &CostField, model: RiskModel) -> RiskField {
    build_risk_field(cf, model, BINS, GRID).unwrap()
}

fn endpoints(s: &Scenario) -> ([f64; 2], [f64; 2]) {
    (s.start.unwrap(), s.goal.unwrap())
}

fn random_params(rng: &mut ChaCha8Rng) -> CptParams {
    CptParams::new(
        rng.random_range(0.1..2.0),
        rng.random_range(0.05..5.0),
        rng.random_range(0.1..0.99),
        rng.random_range(1.01..15.0),
    )
    .unwrap()
}

/// Random prospect with 1..=20 distinct descending outcomes.
fn random_prospect(rng: &mut ChaCha8Rng) -> Prospect {
    let m = rng.random_range(1..=20);
    let mut outcomes: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..30.0)).collect();
    outcomes.sort_by(|a, b| b.total_cmp(a));
    outcomes.dedup();
    let raw: Vec<f64> = outcomes
        .iter()
        .map(|_| rng.random_range(0.01..1.0))
        .collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let head: f64 = probs[..probs.len() - 1].iter().sum();
    *probs.last_mut().unwrap() = 1.0 - head;
    Prospect::new(outcomes, probs).unwrap()
}

#[test]
fn risk_function_identities() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    let mut negative = 0;
    for _ in 0..10_000 {
        let p = random_params(&mut rng);
        worst = worst.max(prelec_w(0.0, &p).unwrap().abs());
        worst = worst.max((prelec_w(1.0, &p).unwrap() - 1.0).abs());
        let unit = CptParams {
            alpha: 1.0,
            beta: 1.0,
            ..p
        };
        let x: f64 = rng.random_range(0.0..1.0);
        worst = worst.max((prelec_w(x, &unit).unwrap() - x).abs());
        worst = worst.max(utility_v(0.0, &p).unwrap().abs());
        worst = worst.max((utility_v(1.0, &p).unwrap() - p.lambda).abs());
        let prospect = random_prospect(&mut rng);
        let pi = decision_weights(prospect.probs(), &p).unwrap();
        worst = worst.max((pi.iter().sum::<f64>() - 1.0).abs());
        negative += pi.iter().filter(|w| **w < 0.0).count();
    }
    let ok = worst <= 1e-10 && negative == 0;
    report(
        1,
        "risk functions",
        ok,
        &format!("max deviation {worst:.2e}, negative weights {negative}"),
        t,
    );
}

#[test]
fn reduction_identities() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_cpt = 0.0_f64;
    let mut worst_cvar = 0.0_f64;
    let mut monotone = true;
    for _ in 0..2_000 {
        let mut p = random_params(&mut rng);
        p.alpha = 1.0;
        p.beta = 1.0;
        let prospect = random_prospect(&mut rng);
        let linear: f64 = prospect
            .outcomes()
            .iter()
            .zip(prospect.probs())
            .map(|(rho, pr)| utility_v(*rho, &p).unwrap() * pr)
            .sum();
        worst_cpt = worst_cpt.max((cpt_risk(&prospect, &p) - linear).abs());
        let er = expected_risk(&prospect);
        worst_cvar = worst_cvar.max((cvar_risk(&prospect, 0.0).unwrap() - er).abs());
        let mut prev = f64::NEG_INFINITY;
        for i in 0..50 {
            let q = i as f64 / 50.0;
            let c = cvar_risk(&prospect, q).unwrap();
            // Allow rounding in the tail renormalisation only.
            if c < prev - 1e-12 * prev.abs().max(1.0) {
                monotone = false;
            }
            prev = c;
        }
    }
    let ok = worst_cpt <= 1e-10 && worst_cvar <= 1e-10 && monotone;
    report(
        2,
        "reduction identities",
        ok,
        &format!("cpt {worst_cpt:.2e}, cvar(0) {worst_cvar:.2e}, cvar monotone {monotone}"),
        t,
    );
}

#[test]
fn discretization_matches_monte_carlo() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut samples: Vec<f64> = (0..10_000_000)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z.abs()
        })
        .collect();
    samples.sort_unstable_by(f64::total_cmp);
    let n = samples.len();
    let mut worst = 0.0_f64;
    for m in [1, 2, 5, 20] {
        let z = half_normal_bin_quantiles(m).unwrap();
        for (i, zi) in z.iter().enumerate() {
            // Bin i (largest first) is represented by its probability midpoint.
            let level = 1.0 - (i as f64 + 0.5) / m as f64;
            let k = ((level * n as f64) as usize).min(n - 1);
            worst = worst.max((samples[k] - zi).abs());
        }
    }
    report(
        3,
        "discretization oracle",
        worst <= 1e-2,
        &format!("max |quantile - MC| {worst:.2e}"),
        t,
    );
}

#[test]
fn planner_invariants_on_scenario() {
    let t = Instant::now();
    let (s, cf) = scenario();
    let r = field(&cf, RiskModel::Cpt(CptParams::NOMINAL));
    let (start, goal) = endpoints(&s);
    let cfg = PlannerConfig::new(start, goal)
        .with_iterations(5_000)
        .with_seed(0);
    let run = || {
        let mut planner = Planner::new(r.space(), &r, &cfg).unwrap();
        let mut additivity = 0.0_f64;
        let mut costs = Vec::new();
        while !planner.finished() {
            planner.run(1_000);
            additivity = additivity.max(planner.tree().additivity_error(&r, cfg.delta));
            costs.push(planner.best_cost());
        }
        (planner.into_tree(), additivity, costs)
    };
    let (tree_a, additivity, costs) = run();
    let (tree_b, _, _) = run();
    let monotone = costs.windows(2).all(|w| w[1] <= w[0]);
    let identical = tree_a == tree_b;
    let ok = additivity <= 1e-9 && monotone && identical && costs.last().unwrap().is_finite();
    report(
        4,
        "planner invariants",
        ok,
        &format!("additivity {additivity:.1e}, costs {costs:.3?}, identical trees {identical}"),
        t,
    );
}

#[test]
fn convergence_plateaus() {
    let t = Instant::now();
    let (s, cf) = scenario();
    let r = field(&cf, RiskModel::Cpt(CptParams::NOMINAL));
    let (start, goal) = endpoints(&s);
    let thirds: Vec<(f64, f64)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = PlannerConfig::new(start, goal)
                .with_iterations(20_000)
                .with_seed(seed);
            area_thirds(&convergence_study(&r, &cfg, 500).unwrap()).unwrap()
        })
        .collect();
    let ok = thirds.iter().all(|(first, last)| last < first);
    let detail: Vec<String> = thirds
        .iter()
        .map(|(f, l)| format!("{f:.2}->{l:.2}"))
        .collect();
    report(
        5,
        "convergence trend",
        ok,
        &format!("first->last third mean area {}", detail.join(", ")),
        t,
    );
}

#[test]
fn risk_averse_path_carries_less_risk() {
    let t = Instant::now();
    let (s, cf) = scenario();
    let rc = field(&cf, RiskModel::Cpt(CptParams::RISK_AVERSE));
    let re = field(&cf, RiskModel::Expected);
    let (start, goal) = endpoints(&s);
    let cfg = PlannerConfig::new(start, goal)
        .with_iterations(20_000)
        .with_seed(0);
    let (cpt_path, er_path) = rayon::join(
        || plan(rc.space(), &rc, &cfg).unwrap().1,
        || plan(re.space(), &re, &cfg).unwrap().1,
    );
    let cpt = path_risk(&cpt_path, &rc).unwrap();
    let er = path_risk(&er_path, &rc).unwrap();
    report(
        6,
        "risk profile",
        cpt <= 1.05 * er,
        &format!("integrated risk cpt {cpt:.3} vs expected {er:.3}"),
        t,
    );
}

#[test]
fn urgency_shortens_paths() {
    let t = Instant::now();
    let (s, cf) = scenario();
    let rc = field(&cf, RiskModel::Cpt(CptParams::RISK_AVERSE));
    let (start, goal) = endpoints(&s);
    let cfg = PlannerConfig::new(start, goal)
        .with_iterations(15_000)
        .with_seed(0);
    let pts = delta_sweep(&rc, &cfg, &[1e-4, 1.0, 100.0]).unwrap();
    let lengths: Vec<f64> = pts.iter().map(|p| p.arc_length).collect();
    let ok = lengths.windows(2).all(|w| w[1] <= w[0]);
    report(7, "delta sweep", ok, &format!("lengths {lengths:.3?}"), t);
}

#[test]
fn gain_sequences() {
    #![allow(clippy::excessive_precision)]
    let t = Instant::now();
    // 40-digit evaluations of 0.4 / 2.6^0.601 and 0.97 / 2.6^0.301.
    let a1 = 0.225_248_034_062_178_944_704_008_096_508_5_f64;
    let c1 = 0.727_553_202_200_423_386_490_157_298_691_4_f64;
    let (a, c) = spsa_gains(1).unwrap();
    let mut decreasing = true;
    let mut prev = (a, c);
    for k in 2..=1000 {
        let g = spsa_gains(k).unwrap();
        decreasing &= g.0 < prev.0 && g.1 < prev.1 && g.0 > 0.0 && g.1 > 0.0;
        prev = g;
    }
    let ok = (a - a1).abs() <= 1e-12 && (c - c1).abs() <= 1e-12 && decreasing;
    report(
        8,
        "gain values",
        ok,
        &format!("a_1 {a:.15}, c_1 {c:.15}, decreasing {decreasing}"),
        t,
    );
}

/// Planner settings used to generate targets and to evaluate fits.
fn fit_planner(s: &Scenario, iterations: usize, seed: u64) -> PlannerConfig {
    let (start, goal) = endpoints(s);
    PlannerConfig::new(start, goal)
        .with_iterations(iterations)
        .with_delta(0.01)
        .with_seed(seed)
}

#[test]
fn spsa_recovers_known_profiles() {
    let t = Instant::now();
    let (s, cf) = scenario();
    let build = |m: &RiskModel| build_risk_field(&cf, *m, BINS, GRID);
    let mut counts = Vec::new();
    for (name, truth) in [
        ("risk-averse", CptParams::RISK_AVERSE),
        ("uncertainty-insensitive", CptParams::HIGH_BETA),
    ] {
        let truth_field = build(&RiskModel::Cpt(truth)).unwrap();
        let converged = (0..10)
            .into_par_iter()
            .filter(|&i| {
                let pc = fit_planner(&s, 5_000, trial_seed(42, i));
                let (_, target) = plan(truth_field.space(), &truth_field, &pc).unwrap();
                let cfg = SpsaConfig::new(RiskModel::Cpt(CptParams::NOMINAL), pc)
                    .unwrap()
                    .with_seed(trial_seed(42, i));
                fit(&target, &cfg, &build)
                    .map(|r| r.converged)
                    .unwrap_or(false)
            })
            .count();
        counts.push((name, converged));
    }
    let ok = counts.iter().all(|(_, c)| *c >= 7);
    let detail: Vec<String> = counts.iter().map(|(n, c)| format!("{n} {c}/10")).collect();
    report(9, "self-recovery", ok, &detail.join(", "), t);
}

#[test]
fn cpt_fits_uncertainty_target_better_than_cvar() {
    let t = Instant::now();
    let (s, cf) = scenario();
    let build = |m: &RiskModel| build_risk_field(&cf, *m, BINS, GRID);
    let truth_field = build(&RiskModel::Cpt(CptParams::LOW_BETA)).unwrap();
    let losses: Vec<(f64, f64)> = (0..10)
        .into_par_iter()
        .map(|i| {
            let pc = fit_planner(&s, 15_000, trial_seed(7, i));
            let (_, target) = plan(truth_field.space(), &truth_field, &pc).unwrap();
            let run = |theta0: RiskModel| {
                let cfg = SpsaConfig::new(theta0, pc.clone())
                    .unwrap()
                    .with_seed(trial_seed(7, i));
                let report = fit(&target, &cfg, &build).unwrap_or_else(|f| *f.partial);
                report.final_loss().unwrap_or(f64::INFINITY)
            };
            (
                run(RiskModel::Cpt(CptParams::NOMINAL)),
                run(RiskModel::Cvar { q: 0.5 }),
            )
        })
        .collect();
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[4] + v[5])
    };
    let cpt = median(losses.iter().map(|l| l.0).collect());
    let cvar = median(losses.iter().map(|l| l.1).collect());
    report(
        10,
        "cpt vs cvar",
        cpt < cvar,
        &format!("median final area cpt {cpt:.2} vs cvar {cvar:.2}"),
        t,
    );
}

#[test]
fn area_oracles_and_invariances() {
    let t = Instant::now();
    let path = |v: &[[f64; 2]]| Path::new(v.to_vec()).unwrap();
    let area = |a: &Path, b: &Path| {
        area_between(&PolylinePair::with_tolerance(a, b, f64::INFINITY).unwrap())
    };
    let square = area(
        &path(&[[0.0, 0.0], [1.0, 0.0]]),
        &path(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]),
    );
    let triangle = area(
        &path(&[[0.0, 0.0], [2.0, 0.0]]),
        &path(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut asym = 0.0_f64;
    let mut shift = 0.0_f64;
    for _ in 0..1_000 {
        let start = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let end = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let mut random_path = || {
            let mut pts = vec![start];
            for _ in 0..rng.random_range(0..12) {
                pts.push([rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)]);
            }
            pts.push(end);
            Path::from_points_dedup(pts).unwrap()
        };
        let (a, b) = (random_path(), random_path());
        if a.len() < 2 || b.len() < 2 {
            continue;
        }
        let ab = area(&a, &b);
        asym = asym.max((ab - area(&b, &a)).abs());
        let by = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
        shift = shift.max((ab - area(&a.translated(by), &b.translated(by))).abs());
    }
    let ok = square == 1.0 && triangle == 1.0 && asym <= 1e-9 && shift <= 1e-9;
    report(
        11,
        "area oracles",
        ok,
        &format!(
            "square {square}, triangle {triangle}, asymmetry {asym:.1e}, translation {shift:.1e}"
        ),
        t,
    );
}
