//! Safety-agnostic task policy: 8-connected A* over the known failure sets
//! and a pure-pursuit tracker with a PD heading term.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_control, Control, DynamicsParams, RobotState};
use crate::grid::{Cell, Grid};
use crate::grounding::FailureSetView;
use crate::scalar::wrap_angle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPath {
    pub waypoints: Vec<(f64, f64)>,
    /// Meters.
    pub cost: f64,
    pub stamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    /// A cell is free when its zero-velocity margin exceeds this.
    pub clearance: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self { clearance: 0.3 }
    }
}

const CLEARANCE_TOL: f64 = 1e-9;

/// Cells whose zero-velocity planning margin exceeds `clearance`.
pub fn free_grid(view: &FailureSetView, like: &Grid<bool>, clearance: f64) -> Grid<bool> {
    Grid::from_fn(like.width(), like.height(), like.resolution(), |c| {
        let (x, y) = like.center(c);
        view.eval_planning(x, y) > clearance + CLEARANCE_TOL
    })
}

#[derive(Clone, Copy, PartialEq)]
struct Node {
    f: f64,
    idx: usize,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then on cell index
        other.f.total_cmp(&self.f).then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Diagonal steps may not cut a blocked corner.
pub fn moves(free: &Grid<bool>, c: Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
    free.neighbors8(c).filter_map(move |n| {
        if !*free.get(n).unwrap() {
            return None;
        }
        let diag = n.i != c.i && n.j != c.j;
        if diag && !(*free.get(Cell::new(n.i, c.j)).unwrap() && *free.get(Cell::new(c.i, n.j)).unwrap()) {
            return None;
        }
        Some((n, diag))
    })
}

/// A* on an explicit free grid. The goal set is every free cell whose centre
/// lies within `goal_radius` of `goal`. Costs are accumulated as counts of
/// straight and diagonal steps so equal paths compare equal exactly.
pub fn astar(free: &Grid<bool>, start: Cell, goal: (f64, f64), goal_radius: f64) -> Option<(Vec<Cell>, f64)> {
    let res = free.resolution();
    let n = free.len();
    let in_goal = |c: Cell| {
        let (x, y) = free.center(c);
        (x - goal.0).hypot(y - goal.1) <= goal_radius
    };
    let h = |c: Cell| {
        let (x, y) = free.center(c);
        (((x - goal.0).hypot(y - goal.1) - goal_radius) / res).max(0.0)
    };
    let cost = |s: (u32, u32)| s.0 as f64 + s.1 as f64 * SQRT_2;
    let mut g: Vec<Option<(u32, u32)>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let s = free.index(start);
    g[s] = Some((0, 0));
    heap.push(Node { f: h(start), idx: s });
    while let Some(Node { idx, .. }) = heap.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        let c = free.cell_of_index(idx);
        let gc = g[idx].unwrap();
        if in_goal(c) && (idx == s || *free.get(c).unwrap()) {
            let mut path = vec![c];
            let mut k = idx;
            while parent[k] != usize::MAX {
                k = parent[k];
                path.push(free.cell_of_index(k));
            }
            path.reverse();
            return Some((path, cost(gc) * res));
        }
        for (nb, diag) in moves(free, c) {
            let ni = free.index(nb);
            if closed[ni] {
                continue;
            }
            let cand = if diag { (gc.0, gc.1 + 1) } else { (gc.0 + 1, gc.1) };
            let better = match g[ni] {
                None => true,
                Some(old) => cost(cand) < cost(old) || (cost(cand) == cost(old) && idx < parent[ni]),
            };
            if better {
                g[ni] = Some(cand);
                parent[ni] = idx;
                heap.push(Node { f: cost(cand) + h(nb), idx: ni });
            }
        }
    }
    None
}

/// Plans from `start` to within `goal_radius` of `goal`. The start cell is
/// treated as free. When the start already sits inside the clearance band the
/// threshold drops to the start cell's own margin, so the robot can always
/// back out along cells that are no worse than where it stands.
pub fn plan(
    view: &FailureSetView,
    like: &Grid<bool>,
    start: (f64, f64),
    goal: (f64, f64),
    goal_radius: f64,
    params: &PlannerParams,
) -> Option<PlanPath> {
    let sc = like.cell_at(start.0, start.1)?;
    let (cx, cy) = like.center(sc);
    let m_start = view.eval_planning(cx, cy);
    let threshold = if m_start > params.clearance + CLEARANCE_TOL {
        params.clearance
    } else {
        m_start.max(0.0) - 2.0 * CLEARANCE_TOL
    };
    let mut free = free_grid(view, like, threshold);
    free.set(sc, true);
    let (cells, cost) = astar(&free, sc, goal, goal_radius)?;
    Some(PlanPath { waypoints: cells.iter().map(|&c| free.center(c)).collect(), cost, stamp: view.stamp })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdGains {
    pub k_heading: f64,
    /// Derivative gain on the heading error.
    pub k_d: f64,
    pub k_vel: f64,
    pub cruise_speed: f64,
    /// Meters along the path.
    pub lookahead: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self { k_heading: 2.0, k_d: 0.1, k_vel: 2.0, cruise_speed: 1.5, lookahead: 0.5 }
    }
}

/// Pure-pursuit tracker. Keeps the previous heading error for the
/// derivative term and a progress index so folded paths are followed in
/// order.
#[derive(Debug, Clone, Default)]
pub struct Tracker {
    pub gains: PdGains,
    prev_err: Option<f64>,
    progress: usize,
    path_stamp: Option<(u64, usize)>,
}

fn lookahead_point(path: &[(f64, f64)], from: usize, dist: f64) -> (f64, f64) {
    let mut left = dist;
    for w in path[from..].windows(2) {
        let seg = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
        if seg >= left && seg > 0.0 {
            let t = left / seg;
            return (w[0].0 + t * (w[1].0 - w[0].0), w[0].1 + t * (w[1].1 - w[0].1));
        }
        left -= seg;
    }
    *path.last().unwrap()
}

impl Tracker {
    pub fn new(gains: PdGains) -> Self {
        Self { gains, ..Default::default() }
    }

    /// Forgets progress and derivative history.
    pub fn reset(&mut self) {
        self.prev_err = None;
        self.progress = 0;
        self.path_stamp = None;
    }

    pub fn step(
        &mut self,
        path: &PlanPath,
        x: &RobotState<f64>,
        goal: (f64, f64),
        goal_radius: f64,
        p: &DynamicsParams<f64>,
    ) -> Control<f64> {
        assert!(!path.waypoints.is_empty(), "path must be nonempty");
        if (x.px - goal.0).hypot(x.py - goal.1) <= goal_radius {
            return Control::new(0.0, -p.accel_max);
        }
        let key = (path.stamp, path.waypoints.len());
        if self.path_stamp != Some(key) {
            self.path_stamp = Some(key);
            self.progress = 0;
        }
        let wp = &path.waypoints;
        let window = (self.progress..wp.len()).take(60);
        let d2 = |k: usize| (wp[k].0 - x.px).powi(2) + (wp[k].1 - x.py).powi(2);
        self.progress = window.min_by(|&a, &b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b))).unwrap_or(self.progress);
        let (tx, ty) = lookahead_point(wp, self.progress, self.gains.lookahead);
        let err =
            if (tx - x.px).hypot(ty - x.py) < 1e-9 { 0.0 } else { wrap_angle((ty - x.py).atan2(tx - x.px) - x.theta) };
        let d_err = self.prev_err.map_or(0.0, |e| wrap_angle(err - e) / p.dt);
        self.prev_err = Some(err);
        let g = &self.gains;
        let omega = g.k_heading * err + g.k_d * d_err;
        let target_v = g.cruise_speed.min(p.v_max) * err.cos().max(0.2);
        let accel = g.k_vel * (target_v - x.v);
        clamp_control(Control::new(omega, accel), p)
    }
}

/// Stateless tracking step.
pub fn track(
    path: &PlanPath,
    x: &RobotState<f64>,
    gains: &PdGains,
    goal: (f64, f64),
    goal_radius: f64,
    p: &DynamicsParams<f64>,
) -> Control<f64> {
    Tracker::new(*gains).step(path, x, goal, goal_radius, p)
}
