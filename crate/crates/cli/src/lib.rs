//! Command-line front end: builds risk fields, plans, fits perception
//! parameters to drawn paths, and runs urgency and convergence studies.
//! Every command writes its files plus a `manifest.json` into `--out`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use riskplan::cost_field::{CostField, Scenario};
use riskplan::experiments::{
    convergence_study, delta_sweep, write_checkpoints_csv, write_sweep_csv,
};
use riskplan::path::Path;
use riskplan::planner::{path_cost, Planner, PlannerConfig};
use riskplan::risk::{build_risk_field, CptParams, RiskField, RiskModel};
use riskplan::spsa::{fit_trials, FitReport, LossSummary, SpsaConfig};

#[derive(Debug, Parser)]
#[command(
    name = "riskplan",
    version,
    about = "Risk-aware RRT* planning over uncertain cost maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a risk model on the scenario lattice.
    BuildField {
        #[command(flatten)]
        common: Common,
        /// Also write a grayscale `field.pgm`.
        #[arg(long)]
        pgm: bool,
    },
    /// Plan once and export the tree and path.
    Plan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        planner: PlannerArgs,
    },
    /// Fit model parameters so the planner reproduces a drawn path.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        planner: PlannerArgs,
        /// Drawn path CSV (`x,y` rows).
        #[arg(long)]
        target: PathBuf,
        /// Independent trials, run in parallel.
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Stop once the area loss falls below this.
        #[arg(long, default_value_t = 15.0)]
        kappa: f64,
        #[arg(long, default_value_t = 10)]
        max_iters: usize,
    },
    /// Plan once per urgency weight.
    DeltaSweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        planner: PlannerArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.0001,1,100")]
        deltas: Vec<f64>,
    },
    /// Record the best path at fixed iteration intervals.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        planner: PlannerArgs,
        #[arg(long, default_value_t = 500)]
        interval: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Expected,
    Cpt,
    Cvar,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario JSON; the bundled fire room when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "expected")]
    pub model: ModelKind,
    /// CPT parameters `alpha,beta,gamma,lambda`; nominal when omitted.
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
    /// CVaR level; 0.5 when omitted.
    #[arg(long)]
    pub q: Option<f64>,
    /// Lattice vertices per axis.
    #[arg(long, default_value_t = 201)]
    pub resolution: usize,
    /// Prospect bins per location.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlannerArgs {
    /// Iterations; 20000, or 15000 for `fit`.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Urgency weight; 1e-4, or 0.01 for `fit`.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 0.35)]
    pub steer: f64,
    #[arg(long, default_value_t = 100.0)]
    pub gamma_rrt: f64,
    /// Overrides the scenario start, `x,y`.
    #[arg(long, value_delimiter = ',')]
    pub start: Option<Vec<f64>>,
    /// Overrides the scenario goal, `x,y`.
    #[arg(long, value_delimiter = ',')]
    pub goal: Option<Vec<f64>>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildField { common, pgm } => build_field_cmd(&common, pgm),
        Command::Plan { common, planner } => plan_cmd(&common, &planner),
        Command::Fit {
            common,
            planner,
            target,
            trials,
            kappa,
            max_iters,
        } => fit_cmd(&common, &planner, &target, trials, kappa, max_iters),
        Command::DeltaSweep {
            common,
            planner,
            deltas,
        } => sweep_cmd(&common, &planner, &deltas),
        Command::Convergence {
            common,
            planner,
            interval,
        } => convergence_cmd(&common, &planner, interval),
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &FsPath, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(FsPath::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    // Temporary files are created private; outputs should be ordinary files.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    {
        let mut out = BufWriter::new(tmp.as_file_mut());
        write(&mut out)?;
        out.flush()?;
    }
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_text(path: &FsPath, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

pub fn load_scenario(path: Option<&FsPath>) -> Result<Scenario> {
    match path {
        None => Ok(Scenario::fire_room()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Scenario::from_json(&text).with_context(|| format!("scenario {}", p.display()))
        }
    }
}

pub fn model_from(common: &Common) -> Result<RiskModel> {
    let model = match common.model {
        ModelKind::Expected => {
            if common.theta.is_some() || common.q.is_some() {
                bail!("--theta and --q do not apply to the expected model");
            }
            RiskModel::Expected
        }
        ModelKind::Cpt => {
            if common.q.is_some() {
                bail!("--q applies to the cvar model only");
            }
            match &common.theta {
                Some(v) => RiskModel::Cpt(CptParams::from_slice(v)?),
                None => RiskModel::Cpt(CptParams::NOMINAL),
            }
        }
        ModelKind::Cvar => {
            if common.theta.is_some() {
                bail!("--theta applies to the cpt model only");
            }
            RiskModel::Cvar {
                q: common.q.unwrap_or(0.5),
            }
        }
    };
    model.validate()?;
    Ok(model)
}

struct Setup {
    scenario_label: String,
    scenario: Scenario,
    cost: CostField,
    model: RiskModel,
}

fn setup(common: &Common) -> Result<Setup> {
    let scenario = load_scenario(common.scenario.as_deref())?;
    let cost = scenario.cost_field()?;
    let model = model_from(common)?;
    fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    let scenario_label = common
        .scenario
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "bundled:fire_room".into());
    Ok(Setup {
        scenario_label,
        scenario,
        cost,
        model,
    })
}

fn risk_field(s: &Setup, common: &Common) -> Result<RiskField> {
    Ok(build_risk_field(
        &s.cost,
        s.model,
        common.bins,
        common.resolution,
    )?)
}

fn point_arg(v: &Option<Vec<f64>>, fallback: Option<[f64; 2]>, name: &str) -> Result<[f64; 2]> {
    match (v, fallback) {
        (Some(v), _) => match v.as_slice() {
            [x, y] => Ok([*x, *y]),
            _ => bail!("--{name} takes two values x,y, got {}", v.len()),
        },
        (None, Some(p)) => Ok(p),
        (None, None) => bail!("the scenario has no {name}; pass --{name} x,y"),
    }
}

/// `target` supplies endpoints the scenario lacks and selects the fitting defaults.
fn planner_cfg(
    s: &Setup,
    common: &Common,
    args: &PlannerArgs,
    target: Option<&Path>,
) -> Result<PlannerConfig> {
    let start = point_arg(
        &args.start,
        s.scenario.start.or(target.map(Path::first)),
        "start",
    )?;
    let goal = point_arg(
        &args.goal,
        s.scenario.goal.or(target.map(Path::last)),
        "goal",
    )?;
    let (iters, delta) = if target.is_some() {
        (15_000, 0.01)
    } else {
        (20_000, 1e-4)
    };
    let mut cfg = PlannerConfig::new(start, goal)
        .with_iterations(args.iters.unwrap_or(iters))
        .with_delta(args.delta.unwrap_or(delta))
        .with_seed(common.seed);
    cfg.steer_distance = args.steer;
    cfg.gamma_rrt = args.gamma_rrt;
    cfg.validate(&s.scenario.space)?;
    Ok(cfg)
}

fn manifest(command: &str, s: &Setup, common: &Common, extra: Value) -> Value {
    let mut m = json!({
        "command": command,
        "scenario": s.scenario_label,
        "model": s.model.tag(),
        "resolution": common.resolution,
        "bins": common.bins,
        "seed": common.seed,
    });
    if let (Value::Object(base), Value::Object(more)) = (&mut m, extra) {
        base.extend(more);
    }
    m
}

fn write_manifest(out: &FsPath, m: &Value) -> Result<()> {
    write_text(
        &out.join("manifest.json"),
        &(serde_json::to_string_pretty(m)? + "\n"),
    )
}

/// Path CSV with a comment saying how the last waypoint joins the tree.
fn path_csv(path: &Path, goal_parent: Option<usize>) -> String {
    let note = match goal_parent {
        Some(id) => format!("# goal joined to tree node {id} within the steer distance\n"),
        None => "# synthetic: goal not reached, last segment snaps the nearest node to the goal\n"
            .into(),
    };
    note + &path.to_csv_string()
}

fn build_field_cmd(common: &Common, pgm: bool) -> Result<()> {
    let s = setup(common)?;
    let field = risk_field(&s, common)?;
    write_atomic(&common.out.join("field.csv"), |w| Ok(field.write_csv(w)?))?;
    let mut outputs = vec!["field.csv"];
    if pgm {
        write_atomic(&common.out.join("field.pgm"), |w| Ok(field.write_pgm(w)?))?;
        outputs.push("field.pgm");
    }
    let m = manifest(
        "build-field",
        &s,
        common,
        json!({ "outputs": outputs, "max_risk": field.max_value() }),
    );
    write_manifest(&common.out, &m)
}

fn plan_cmd(common: &Common, args: &PlannerArgs) -> Result<()> {
    let s = setup(common)?;
    let cfg = planner_cfg(&s, common, args, None)?;
    let field = risk_field(&s, common)?;
    let mut planner = Planner::new(&s.scenario.space, &field, &cfg)?;
    planner.run(cfg.iterations);
    let path = planner.path();
    let goal_parent = planner.goal_parent();
    let cost = path_cost(&path, &field, cfg.delta)?;
    let tree = planner.into_tree();
    write_atomic(&common.out.join("tree.csv"), |w| Ok(tree.write_csv(w)?))?;
    write_text(&common.out.join("path.csv"), &path_csv(&path, goal_parent))?;
    let m = manifest(
        "plan",
        &s,
        common,
        json!({
            "planner": cfg,
            "outputs": ["tree.csv", "path.csv"],
            "tree_nodes": tree.len(),
            "goal_reached": goal_parent.is_some(),
            "final_path_cost": cost,
        }),
    );
    write_manifest(&common.out, &m)
}

fn fit_cmd(
    common: &Common,
    args: &PlannerArgs,
    target_path: &FsPath,
    trials: usize,
    kappa: f64,
    max_iters: usize,
) -> Result<()> {
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    let s = setup(common)?;
    if s.model == RiskModel::Expected {
        bail!("fit needs --model cpt or --model cvar");
    }
    let text = fs::read_to_string(target_path)
        .with_context(|| format!("reading {}", target_path.display()))?;
    let target =
        Path::from_csv_str(&text).with_context(|| format!("target {}", target_path.display()))?;
    target.check_inside(&s.scenario.space)?;
    let planner = planner_cfg(&s, common, args, Some(&target))?;
    let mut cfg = SpsaConfig::new(s.model, planner)?.with_seed(common.seed);
    cfg.kappa = kappa;
    cfg.max_iters = max_iters;
    cfg.validate()?;

    let build = |m: &RiskModel| build_risk_field(&s.cost, *m, common.bins, common.resolution);
    let results = fit_trials(&target, &cfg, trials, &build);
    let mut reports: Vec<FitReport> = Vec::new();
    let mut trial_info = Vec::new();
    let mut outputs = Vec::new();
    for (i, result) in results.into_iter().enumerate() {
        let (report, error) = match result {
            Ok(r) => (r, None),
            Err(f) => (*f.partial, Some(f.source.to_string())),
        };
        let report_name = format!("fit_report_{i}.csv");
        write_atomic(&common.out.join(&report_name), |w| Ok(report.write_csv(w)?))?;
        outputs.push(report_name);
        if let Some(path) = &report.final_path {
            let name = format!("fit_path_{i}.csv");
            let note = format!("# planned under {}\n", report.final_model.tag());
            write_text(&common.out.join(&name), &(note + &path.to_csv_string()))?;
            outputs.push(name);
        }
        trial_info.push(json!({
            "trial": i,
            "final_model": report.final_model.tag(),
            "final_loss": report.final_loss(),
            "iterations": report.records.len().saturating_sub(1),
            "converged": report.converged,
            "error": error,
        }));
        reports.push(report);
    }
    let summary = LossSummary::from_reports(&reports);
    write_text(
        &common.out.join("fit_summary.json"),
        &(serde_json::to_string_pretty(&json!({ "summary": summary, "trials": trial_info }))?
            + "\n"),
    )?;
    outputs.push("fit_summary.json".into());
    let m = manifest(
        "fit",
        &s,
        common,
        json!({
            "target": target_path.display().to_string(),
            "spsa": cfg,
            "trials": trials,
            "outputs": outputs,
            "median_final_loss": summary.map(|x| x.median),
        }),
    );
    write_manifest(&common.out, &m)
}

fn sweep_cmd(common: &Common, args: &PlannerArgs, deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() || deltas.iter().any(|d| !d.is_finite() || *d < 0.0) {
        bail!("--deltas needs one or more nonnegative values");
    }
    let s = setup(common)?;
    let cfg = planner_cfg(&s, common, args, None)?;
    let field = risk_field(&s, common)?;
    let points = delta_sweep(&field, &cfg, deltas)?;
    write_atomic(&common.out.join("sweep.csv"), |w| {
        Ok(write_sweep_csv(&points, w)?)
    })?;
    let mut outputs = vec!["sweep.csv".to_string()];
    for (i, p) in points.iter().enumerate() {
        if let Some(path) = &p.path {
            let name = format!("sweep_path_{i}.csv");
            let note = format!("# delta = {}\n", p.delta);
            write_text(&common.out.join(&name), &(note + &path.to_csv_string()))?;
            outputs.push(name);
        }
    }
    let m = manifest(
        "delta-sweep",
        &s,
        common,
        json!({ "planner": cfg, "deltas": deltas, "outputs": outputs }),
    );
    write_manifest(&common.out, &m)
}

fn convergence_cmd(common: &Common, args: &PlannerArgs, interval: usize) -> Result<()> {
    let s = setup(common)?;
    let cfg = planner_cfg(&s, common, args, None)?;
    let field = risk_field(&s, common)?;
    let checkpoints = convergence_study(&field, &cfg, interval)?;
    write_atomic(&common.out.join("checkpoints.csv"), |w| {
        Ok(write_checkpoints_csv(&checkpoints, w)?)
    })?;
    let final_cost = checkpoints.last().map(|c| c.path_cost);
    let m = manifest(
        "convergence",
        &s,
        common,
        json!({
            "planner": cfg,
            "interval": interval,
            "outputs": ["checkpoints.csv"],
            "final_path_cost": final_cost.filter(|c| c.is_finite()),
        }),
    );
    write_manifest(&common.out, &m)
}
