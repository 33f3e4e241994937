//! RRT* over a perceived-risk field.
//!
//! Edge cost is the risk increase along the edge (decreases are free) plus
//! `delta` times the edge length. Risk is read only at edge endpoints, so
//! long edges can step over thin risk ridges; keep the steer distance small.
//! The same planner serves every risk model: the model only changes the
//! [`RiskField`] it is given.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost_field::ConfigSpace;
use crate::error::{Error, Result};
use crate::index::GridIndex;
pub use crate::path::{distance, Path, Point};
use crate::risk::RiskField;
use crate::Num;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub start: Point,
    pub goal: Point,
    pub iterations: usize,
    /// Weight on path length against risk increase.
    pub delta: f64,
    pub steer_distance: f64,
    pub gamma_rrt: f64,
    pub seed: u64,
}

impl PlannerConfig {
    /// 20k iterations, `delta = 1e-4`, `d = 0.35`, `gamma = 100`.
    pub fn new(start: Point, goal: Point) -> Self {
        Self {
            start,
            goal,
            iterations: 20_000,
            delta: 1e-4,
            steer_distance: 0.35,
            gamma_rrt: 100.0,
            seed: 0,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, space: &ConfigSpace) -> Result<()> {
        if space.dim() != 2 {
            return Err(Error::InvalidConfig(
                "the planner works in two dimensions".into(),
            ));
        }
        for (name, p) in [("start", self.start), ("goal", self.goal)] {
            if !space.contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "{name} {p:?} lies outside the space"
                )));
            }
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "delta must be >= 0, got {}",
                self.delta
            )));
        }
        if !(self.steer_distance > 0.0 && self.steer_distance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "steer distance must be > 0, got {}",
                self.steer_distance
            )));
        }
        if !(self.gamma_rrt > 0.0 && self.gamma_rrt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma_rrt must be > 0, got {}",
                self.gamma_rrt
            )));
        }
        Ok(())
    }
}

/// Rooted tree with parent links, sorted child lists and cumulative costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Point>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    j_cum: Vec<f64>,
}

impl Tree {
    pub fn with_root(root: Point) -> Self {
        Self {
            nodes: vec![root],
            parent: vec![None],
            children: vec![Vec::new()],
            j_cum: vec![0.0],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn cost(&self, i: usize) -> f64 {
        self.j_cum[i]
    }

    pub fn costs(&self) -> &[f64] {
        &self.j_cum
    }

    fn push(&mut self, p: Point, parent: usize, cost: f64) -> usize {
        let id = self.nodes.len();
        self.nodes.push(p);
        self.parent.push(Some(parent));
        self.children.push(Vec::new());
        self.j_cum.push(cost);
        insert_sorted(&mut self.children[parent], id);
        id
    }

    fn reparent(&mut self, node: usize, new_parent: usize) {
        if let Some(old) = self.parent[node] {
            let kids = &mut self.children[old];
            if let Ok(pos) = kids.binary_search(&node) {
                kids.remove(pos);
            }
        }
        self.parent[node] = Some(new_parent);
        insert_sorted(&mut self.children[new_parent], node);
    }

    /// Root-first node sequence from the root to `node`.
    pub fn branch(&self, node: usize) -> Vec<Point> {
        let mut out = vec![self.nodes[node]];
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            out.push(self.nodes[p]);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Index of the node nearest to `p`; ties go to the lowest index.
    pub fn nearest_node(&self, p: Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, q) in self.nodes.iter().enumerate() {
            let dx = q[0] - p[0];
            let dy = q[1] - p[1];
            let d = dx * dx + dy * dy;
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Largest `|J(node) - J(parent) - edge_cost(parent, node)|` over the tree.
    pub fn additivity_error(&self, risk: &RiskField, delta: f64) -> f64 {
        (1..self.len())
            .filter_map(|i| self.parent[i].map(|p| (p, i)))
            .map(|(p, i)| {
                let c = edge_cost_clamped(self.nodes[p], self.nodes[i], risk, delta);
                (self.j_cum[i] - self.j_cum[p] - c).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Checks the structural invariants: one root at index 0, consistent
    /// parent and child links, no cycles.
    pub fn check_structure(&self) -> Result<()> {
        let n = self.len();
        if n == 0 || self.parent[0].is_some() || self.j_cum[0] != 0.0 {
            return Err(Error::InvalidPath(
                "node 0 must be a root with zero cost".into(),
            ));
        }
        for i in 1..n {
            let p = self.parent[i]
                .ok_or_else(|| Error::InvalidPath(format!("node {i} has no parent")))?;
            if p >= n || self.children[p].binary_search(&i).is_err() {
                return Err(Error::InvalidPath(format!(
                    "node {i} missing from its parent's children"
                )));
            }
        }
        let child_links: usize = self.children.iter().map(Vec::len).sum();
        if child_links != n - 1 {
            return Err(Error::InvalidPath(
                "child lists disagree with parent links".into(),
            ));
        }
        // Every node reaches the root within n steps.
        for i in 0..n {
            let mut cur = i;
            let mut steps = 0;
            while let Some(p) = self.parent[cur] {
                cur = p;
                steps += 1;
                if steps > n {
                    return Err(Error::InvalidPath(format!("cycle through node {i}")));
                }
            }
        }
        Ok(())
    }

    /// Columns `node_id,parent_id,x,y,j_cum`; the root's parent is -1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "node_id,parent_id,x,y,j_cum")?;
        for i in 0..self.len() {
            let parent = self.parent[i].map_or(-1, |p| p as i64);
            let [x, y] = self.nodes[i];
            writeln!(
                out,
                "{i},{parent},{},{},{}",
                Num(x),
                Num(y),
                Num(self.j_cum[i])
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (idx == 0 && line.starts_with("node_id")) {
                continue;
            }
            let err = |what: &str| Error::Parse(format!("line {}: {what}", idx + 1));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 5 {
                return Err(err("expected 5 columns"));
            }
            let id: usize = cells[0].parse().map_err(|_| err("bad node_id"))?;
            let parent: i64 = cells[1].parse().map_err(|_| err("bad parent_id"))?;
            let x: f64 = cells[2].parse().map_err(|_| err("bad x"))?;
            let y: f64 = cells[3].parse().map_err(|_| err("bad y"))?;
            let j: f64 = cells[4].parse().map_err(|_| err("bad j_cum"))?;
            if id != rows.len() {
                return Err(err("node ids must be consecutive from 0"));
            }
            rows.push((parent, [x, y], j));
        }
        let n = rows.len();
        let mut tree = Tree {
            nodes: Vec::with_capacity(n),
            parent: Vec::with_capacity(n),
            children: vec![Vec::new(); n],
            j_cum: Vec::with_capacity(n),
        };
        for (i, (parent, p, j)) in rows.into_iter().enumerate() {
            let parent = match parent {
                -1 => None,
                v if v >= 0 && (v as usize) < n && v as usize != i => Some(v as usize),
                v => return Err(Error::Parse(format!("node {i}: invalid parent {v}"))),
            };
            if let Some(par) = parent {
                tree.children[par].push(i);
            }
            tree.nodes.push(p);
            tree.parent.push(parent);
            tree.j_cum.push(j);
        }
        tree.check_structure()?;
        Ok(tree)
    }
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) {
    if let Err(pos) = v.binary_search(&x) {
        v.insert(pos, x);
    }
}

#[inline]
fn edge_cost_from(r1: f64, r2: f64, length: f64, delta: f64) -> f64 {
    (r2 - r1).max(0.0) + delta * length
}

fn edge_cost_clamped(x1: Point, x2: Point, risk: &RiskField, delta: f64) -> f64 {
    edge_cost_from(
        risk.value_clamped(x1),
        risk.value_clamped(x2),
        distance(x1, x2),
        delta,
    )
}

/// `max(0, R(x2) - R(x1)) + delta * |x2 - x1|`.
pub fn edge_cost(x1: Point, x2: Point, risk: &RiskField, delta: f64) -> Result<f64> {
    let r1 = risk.value(x1)?;
    let r2 = risk.value(x2)?;
    Ok(edge_cost_from(r1, r2, distance(x1, x2), delta))
}

/// Sum of edge costs along the path; zero for a single waypoint.
pub fn path_cost(path: &Path, risk: &RiskField, delta: f64) -> Result<f64> {
    path.waypoints()
        .windows(2)
        .map(|w| edge_cost(w[0], w[1], risk, delta))
        .sum()
}

/// Risk-increase part of [`path_cost`] (the cost with `delta = 0`).
pub fn path_risk(path: &Path, risk: &RiskField) -> Result<f64> {
    path_cost(path, risk, 0.0)
}

/// Moves from `x1` toward `x2` by at most `d`.
pub fn steer(x1: Point, x2: Point, d: f64) -> Point {
    let dist = distance(x1, x2);
    if dist <= d {
        return x2;
    }
    let s = d / dist;
    [x1[0] + s * (x2[0] - x1[0]), x1[1] + s * (x2[1] - x1[1])]
}

/// `min(gamma * (ln n / n)^(1/dim), d)`, and `d` for a single-node tree.
pub fn near_radius(n: usize, dim: usize, gamma_rrt: f64, d: f64) -> f64 {
    if n <= 1 {
        return d;
    }
    let n = n as f64;
    (gamma_rrt * (n.ln() / n).powf(1.0 / dim as f64)).min(d)
}

/// Root-to-node path ending at the tree node nearest `goal`.
pub fn extract_path(tree: &Tree, goal: Point) -> Path {
    let end = tree.nearest_node(goal);
    Path::new(tree.branch(end)).expect("tree branches have distinct consecutive nodes")
}

/// Connects `goal` to the tree the way a new node would be: through the
/// node within `radius` minimising `J + edge_cost(node, goal)`, ties to the
/// lowest index. With no node in range, the nearest node is used. The
/// returned path always ends at `goal`.
///
/// Unlike [`extract_path`], the cost of this path never increases as the
/// tree grows once some node lies within `radius`: candidates are only
/// added and their costs only fall.
pub fn connect_goal(tree: &Tree, risk: &RiskField, goal: Point, radius: f64, delta: f64) -> Path {
    let candidates: Vec<usize> = (0..tree.len())
        .filter(|&i| distance(tree.node(i), goal) <= radius)
        .collect();
    let r_goal = risk.value_clamped(goal);
    let end = best_goal_parent(
        tree,
        &candidates,
        goal,
        delta,
        |i| risk.value_clamped(tree.node(i)),
        r_goal,
    )
    .unwrap_or_else(|| tree.nearest_node(goal));
    goal_branch(tree, end, goal)
}

fn best_goal_parent(
    tree: &Tree,
    candidates: &[usize],
    goal: Point,
    delta: f64,
    node_risk: impl Fn(usize) -> f64,
    r_goal: f64,
) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &i in candidates {
        let c = tree.cost(i)
            + edge_cost_from(node_risk(i), r_goal, distance(tree.node(i), goal), delta);
        if best.is_none_or(|(bc, bi)| c < bc || (c == bc && i < bi)) {
            best = Some((c, i));
        }
    }
    best.map(|(_, i)| i)
}

fn goal_branch(tree: &Tree, end: usize, goal: Point) -> Path {
    let mut points = tree.branch(end);
    if points.last() != Some(&goal) {
        points.push(goal);
    }
    Path::new(points).expect("tree branches have distinct consecutive nodes")
}

/// Incremental planner state; [`plan`] runs it to completion.
pub struct Planner<'a> {
    risk: &'a RiskField,
    space: ConfigSpace,
    cfg: PlannerConfig,
    tree: Tree,
    node_risk: Vec<f64>,
    index: GridIndex,
    rng: ChaCha8Rng,
    iteration: usize,
    is_free: Option<Box<dyn Fn(Point) -> bool + Send + Sync + 'a>>,
}

impl<'a> Planner<'a> {
    pub fn new(space: &ConfigSpace, risk: &'a RiskField, cfg: &PlannerConfig) -> Result<Self> {
        cfg.validate(space)?;
        let rs = risk.space();
        if (0..2).any(|a| space.lower[a] < rs.lower[a] || space.upper[a] > rs.upper[a]) {
            return Err(Error::InvalidConfig(
                "risk field does not cover the planning space".into(),
            ));
        }
        let lower = [space.lower[0], space.lower[1]];
        let upper = [space.upper[0], space.upper[1]];
        let cell = cfg
            .steer_distance
            .max(space.extent(0).max(space.extent(1)) / 1024.0);
        let mut index = GridIndex::new(lower, upper, cell);
        index.insert(cfg.start);
        Ok(Self {
            risk,
            space: space.clone(),
            cfg: cfg.clone(),
            tree: Tree::with_root(cfg.start),
            node_risk: vec![risk.value(cfg.start)?],
            index,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            iteration: 0,
            is_free: None,
        })
    }

    /// Rejects candidate nodes for which `is_free` is false. Off by default.
    pub fn with_validity(mut self, is_free: impl Fn(Point) -> bool + Send + Sync + 'a) -> Self {
        self.is_free = Some(Box::new(is_free));
        self
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn into_tree(self) -> Tree {
        self.tree
    }

    /// Cheapest node within the steer distance of the goal, counting the
    /// final edge. `None` until the tree reaches the goal region.
    pub fn goal_parent(&self) -> Option<usize> {
        let goal = self.cfg.goal;
        let candidates = self.index.within(goal, self.cfg.steer_distance);
        best_goal_parent(
            &self.tree,
            &candidates,
            goal,
            self.cfg.delta,
            |i| self.node_risk[i],
            self.risk.value_clamped(goal),
        )
    }

    /// Cost of the best goal-reaching path; infinite before the goal region
    /// is reached.
    pub fn best_cost(&self) -> f64 {
        match self.goal_parent() {
            Some(i) => {
                let goal = self.cfg.goal;
                self.tree.cost(i)
                    + edge_cost_from(
                        self.node_risk[i],
                        self.risk.value_clamped(goal),
                        distance(self.tree.node(i), goal),
                        self.cfg.delta,
                    )
            }
            None => f64::INFINITY,
        }
    }

    /// Goal-connected path, as [`connect_goal`] with the steer distance as
    /// radius.
    pub fn path(&self) -> Path {
        let end = self
            .goal_parent()
            .unwrap_or_else(|| self.index.nearest(self.cfg.goal).expect("tree has a root"));
        goal_branch(&self.tree, end, self.cfg.goal)
    }

    /// Literal nearest-node extraction, see [`extract_path`].
    pub fn nearest_path(&self) -> Path {
        let end = self.index.nearest(self.cfg.goal).expect("tree has a root");
        Path::new(self.tree.branch(end)).expect("tree branches have distinct consecutive nodes")
    }

    fn sample(&mut self) -> Point {
        let mut p = [0.0; 2];
        for (axis, v) in p.iter_mut().enumerate() {
            let lo = self.space.lower[axis];
            let hi = self.space.upper[axis];
            *v = lo + (hi - lo) * self.rng.random::<f64>();
        }
        p
    }

    #[inline]
    fn cost_between(&self, from: usize, to_point: Point, to_risk: f64) -> f64 {
        edge_cost_from(
            self.node_risk[from],
            to_risk,
            distance(self.tree.nodes[from], to_point),
            self.cfg.delta,
        )
    }

    /// One sample-steer-connect-rewire iteration.
    pub fn step(&mut self) {
        self.iteration += 1;
        let x_rand = self.sample();
        let nearest = self.index.nearest(x_rand).expect("tree has a root");
        let x_new = steer(self.tree.nodes[nearest], x_rand, self.cfg.steer_distance);
        if x_new == self.tree.nodes[nearest] {
            return;
        }
        if let Some(is_free) = &self.is_free {
            if !is_free(x_new) {
                return;
            }
        }
        let r_new = self.risk.value_clamped(x_new);
        let radius = near_radius(
            self.tree.len(),
            2,
            self.cfg.gamma_rrt,
            self.cfg.steer_distance,
        );
        let near = self.index.within(x_new, radius);

        let mut best_parent = nearest;
        let mut best_cost = self.tree.j_cum[nearest] + self.cost_between(nearest, x_new, r_new);
        for &n in &near {
            let c = self.tree.j_cum[n] + self.cost_between(n, x_new, r_new);
            if c < best_cost || (c == best_cost && n < best_parent) {
                best_parent = n;
                best_cost = c;
            }
        }
        let new_id = self.tree.push(x_new, best_parent, best_cost);
        self.node_risk.push(r_new);
        self.index.insert(x_new);

        for &n in &near {
            if n == best_parent {
                continue;
            }
            let c = best_cost
                + edge_cost_from(
                    r_new,
                    self.node_risk[n],
                    distance(x_new, self.tree.nodes[n]),
                    self.cfg.delta,
                );
            if c < self.tree.j_cum[n] {
                self.tree.reparent(n, new_id);
                self.tree.j_cum[n] = c;
                self.propagate(n);
            }
        }
    }

    /// Recomputes cumulative costs of every descendant of `root`.
    fn propagate(&mut self, root: usize) {
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            let base = self.tree.j_cum[node];
            for k in 0..self.tree.children[node].len() {
                let child = self.tree.children[node][k];
                let c = edge_cost_from(
                    self.node_risk[node],
                    self.node_risk[child],
                    distance(self.tree.nodes[node], self.tree.nodes[child]),
                    self.cfg.delta,
                );
                self.tree.j_cum[child] = base + c;
                stack.push(child);
            }
        }
    }

    /// Runs up to `n` more iterations without exceeding the configured total.
    pub fn run(&mut self, n: usize) {
        let end = (self.iteration + n).min(self.cfg.iterations);
        while self.iteration < end {
            self.step();
        }
    }

    pub fn finished(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }
}

/// Runs the full iteration budget and returns the tree with the
/// goal-connected path.
pub fn plan(space: &ConfigSpace, risk: &RiskField, cfg: &PlannerConfig) -> Result<(Tree, Path)> {
    let mut planner = Planner::new(space, risk, cfg)?;
    planner.run(cfg.iterations);
    let path = planner.path();
    Ok((planner.into_tree(), path))
}
