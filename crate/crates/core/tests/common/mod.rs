//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BinaryHeap;
use std::f64::consts::{PI, SQRT_2, TAU};
use std::path::PathBuf;

use rand::Rng;
use semsafe_core::grid::{Cell, Grid};
use semsafe_core::language::{ConstraintKind, SafetyConfig};

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Forward-Euler unicycle with speed clamp and angle wrap, written from the
/// model equations rather than from the library.
pub fn ref_step(x: [f64; 4], u: [f64; 2], dt: f64, vmax: f64, wmax: f64, amax: f64) -> [f64; 4] {
    let w = u[0].clamp(-wmax, wmax);
    let a = u[1].clamp(-amax, amax);
    let px = x[0] + dt * x[3] * x[2].cos();
    let py = x[1] + dt * x[3] * x[2].sin();
    let mut th = (x[2] + dt * w) % TAU;
    if th > PI {
        th -= TAU;
    } else if th <= -PI {
        th += TAU;
    }
    let v = (x[3] + dt * a).clamp(0.0, vmax);
    [px, py, th, v]
}

/// Angular difference wrapped to `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

pub fn random_grid(rng: &mut impl Rng, max_side: usize, res: f64) -> Grid<bool> {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let density: f64 = rng.random_range(0.0..0.6);
    Grid::from_fn(w, h, res, |_| rng.random_bool(density))
}

/// Brute-force signed distance over all cell pairs.
pub fn brute_sdf(g: &Grid<bool>) -> Grid<f64> {
    let res = g.resolution();
    let cells: Vec<Cell> = g.cells().collect();
    let nearest = |c: Cell, want: bool| {
        cells
            .iter()
            .filter(|&&o| *g.get(o).unwrap() == want)
            .map(|o| ((o.i as f64 - c.i as f64).powi(2) + (o.j as f64 - c.j as f64).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    Grid::from_fn(g.width(), g.height(), res, |c| {
        if *g.get(c).unwrap() {
            let d = nearest(c, false);
            if d.is_finite() {
                res - d * res
            } else {
                -1e6
            }
        } else {
            let d = nearest(c, true);
            if d.is_finite() {
                d * res
            } else {
                1e6
            }
        }
    })
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        o.0.total_cmp(&self.0)
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

/// Plain Dijkstra over 8-connected free cells without corner cutting.
/// Returns the best (straight, diagonal) step counts into the goal set.
pub fn dijkstra(free: &Grid<bool>, start: Cell, goal: (f64, f64), goal_radius: f64) -> Option<(u32, u32)> {
    let (w, h) = (free.width() as i64, free.height() as i64);
    let ok =
        |i: i64, j: i64| i >= 0 && j >= 0 && i < w && j < h && *free.get(Cell::new(i as usize, j as usize)).unwrap();
    let idx = |i: i64, j: i64| (j * w + i) as usize;
    let value = |s: (u32, u32)| s.0 as f64 + s.1 as f64 * SQRT_2;
    let mut best: Vec<Option<(u32, u32)>> = vec![None; (w * h) as usize];
    let mut heap = BinaryHeap::new();
    let s = idx(start.i as i64, start.j as i64);
    best[s] = Some((0, 0));
    heap.push(Item(0.0, s));
    let mut answer: Option<(u32, u32)> = None;
    while let Some(Item(d, k)) = heap.pop() {
        let cur = best[k].unwrap();
        if d > value(cur) {
            continue;
        }
        let (i, j) = ((k as i64) % w, (k as i64) / w);
        let (x, y) = ((i as f64 + 0.5) * free.resolution(), (j as f64 + 0.5) * free.resolution());
        let is_goal = (x - goal.0).hypot(y - goal.1) <= goal_radius && (k == s || ok(i, j));
        if is_goal && answer.is_none_or(|a| value(cur) < value(a)) {
            answer = Some(cur);
        }
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                if (di, dj) == (0, 0) || !ok(i + di, j + dj) {
                    continue;
                }
                let diag = di != 0 && dj != 0;
                if diag && !(ok(i + di, j) && ok(i, j + dj)) {
                    continue;
                }
                let nxt = if diag { (cur.0, cur.1 + 1) } else { (cur.0 + 1, cur.1) };
                let n = idx(i + di, j + dj);
                if best[n].is_none_or(|b| value(nxt) < value(b)) {
                    best[n] = Some(nxt);
                    heap.push(Item(value(nxt), n));
                }
            }
        }
    }
    answer
}

/// Exhaustive max-min over every lattice sequence of length `h`. The
/// terminal state is scored with a zero control.
pub fn oracle_maxmin(
    x0: [f64; 4],
    lattice: &[[f64; 2]],
    h: usize,
    l: &dyn Fn([f64; 4], [f64; 2]) -> f64,
    dyn_p: (f64, f64, f64, f64),
) -> f64 {
    fn rec(
        x: [f64; 4],
        depth: usize,
        lattice: &[[f64; 2]],
        l: &dyn Fn([f64; 4], [f64; 2]) -> f64,
        p: (f64, f64, f64, f64),
    ) -> f64 {
        if depth == 0 {
            return l(x, [0.0, 0.0]);
        }
        lattice
            .iter()
            .map(|&u| {
                let here = l(x, u);
                let next = ref_step(x, u, p.0, p.1, p.2, p.3);
                here.min(rec(next, depth - 1, lattice, l, p))
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
    rec(x0, h, lattice, l, dyn_p)
}

pub struct Golden {
    pub text: &'static str,
    pub kind: ConstraintKind,
    pub obj: &'static str,
    pub buffer: f64,
    pub vel_max: Option<f64>,
    pub angular_vel_max: Option<f64>,
}

const fn g(
    text: &'static str,
    kind: ConstraintKind,
    obj: &'static str,
    buffer: f64,
    vel_max: Option<f64>,
    angular_vel_max: Option<f64>,
) -> Golden {
    Golden { text, kind, obj, buffer, vel_max, angular_vel_max }
}

use ConstraintKind::{Hybrid, KinematicModulation as Kin, SpatialExclusion as Excl};

// intent defaults: 0.3 of the 1.5 m/s and 1 rad/s bounds, 0.5 m near-buffer
const SLOW: Option<f64> = Some(0.45);
const TURN: Option<f64> = Some(0.3);

/// Instruction texts from the published examples with their expected
/// configurations. The last two are grammar forms of the hardware speed cap.
pub const CANONICAL: [Golden; 12] = [
    g("avoid the swimming pool", Excl, "swimming pool", 0.0, None, None),
    g("do not go beneath tables", Excl, "tables", 0.0, None, None),
    g("keep 0.25 m away from cars", Excl, "cars", 0.25, None, None),
    g("Don't go under the standing desk", Excl, "standing desk", 0.0, None, None),
    g("avoid the tree", Excl, "tree", 0.0, None, None),
    g("reduce speed near the sofa", Hybrid, "sofa", 0.5, SLOW, None),
    g("slow down on the carpet", Hybrid, "carpet", 0.5, SLOW, None),
    g("move slowly near the bed", Hybrid, "bed", 0.5, SLOW, None),
    g("be extra careful near stairs", Hybrid, "stairs", 0.5, SLOW, TURN),
    g("be quiet around the bed", Hybrid, "bed", 0.5, SLOW, TURN),
    g("max speed 0.5", Kin, "", 0.0, Some(0.5), None),
    g("never exceed 0.5 m/s", Kin, "", 0.0, Some(0.5), None),
];

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

/// Exact agreement for the rule parser.
pub fn matches_exact(c: &SafetyConfig, want: &Golden) -> bool {
    c.kind == want.kind
        && c.obj == want.obj
        && (c.buffer - want.buffer).abs() < 1e-9
        && close(c.vel_max, want.vel_max, 1e-9)
        && close(c.angular_vel_max, want.angular_vel_max, 1e-9)
}

/// Semantic agreement for model output: same kind, the object grounds to the
/// same label, and numeric fields agree where the instruction fixes them.
pub fn matches_loose(c: &SafetyConfig, want: &Golden) -> bool {
    if c.kind != want.kind {
        return false;
    }
    if want.kind != Kin && !semsafe_core::labels::match_label(&c.obj, want.obj) {
        return false;
    }
    match want.kind {
        Excl => (c.buffer - want.buffer).abs() <= 0.05,
        Kin => close(c.vel_max, want.vel_max, 0.01),
        Hybrid => c.has_limit(),
    }
}
