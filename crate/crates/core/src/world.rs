//! Ground-truth world: labeled footprints, base map, semantic range sensor.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{step, Control, DynamicsParams, RobotState};
use crate::grid::{Cell, Grid};
use crate::sdf::dilate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: ObjectId,
    pub label: String,
    /// Sorted, deduplicated cells.
    pub footprint: Vec<Cell>,
    /// `false` for overhangs the base can drive under.
    pub base_blocking: bool,
}

const NO_OBJECT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct World {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<WorldObject>,
    /// Union of blocking footprints.
    pub base_map: Grid<bool>,
    /// `base_map` dilated by the robot radius; used for collisions and `l_base`.
    pub inflated_base: Grid<bool>,
    pub robot_radius: f64,
    pub start: RobotState<f64>,
    pub goal: (f64, f64),
    pub goal_radius: f64,
    /// Topmost object per cell (later objects win), for ray casting.
    object_index: Grid<u32>,
}

impl World {
    /// Builds a world; footprints are clipped to the grid by the caller.
    pub fn new(
        resolution: f64,
        width: usize,
        height: usize,
        objects: Vec<WorldObject>,
        robot_radius: f64,
        start: RobotState<f64>,
        goal: (f64, f64),
        goal_radius: f64,
    ) -> Self {
        let mut base_map = Grid::filled(width, height, resolution, false);
        let mut object_index = Grid::filled(width, height, resolution, NO_OBJECT);
        for (k, o) in objects.iter().enumerate() {
            for &c in &o.footprint {
                object_index.set(c, k as u32);
                if o.base_blocking {
                    base_map.set(c, true);
                }
            }
        }
        let inflated_base = dilate(&base_map, robot_radius);
        Self {
            resolution,
            width,
            height,
            objects,
            base_map,
            inflated_base,
            robot_radius,
            start,
            goal,
            goal_radius,
            object_index,
        }
    }

    pub fn object(&self, id: ObjectId) -> Option<&WorldObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn objects_labeled<'a>(
        &'a self,
        pred: impl Fn(&str) -> bool + 'a,
    ) -> impl Iterator<Item = &'a WorldObject> + 'a {
        self.objects.iter().filter(move |o| pred(&o.label))
    }

    /// True when the point is outside the grid or its cell is blocked for the
    /// robot disc.
    pub fn base_blocked(&self, x: f64, y: f64) -> bool {
        match self.inflated_base.cell_at(x, y) {
            Some(c) => *self.inflated_base.get(c).unwrap(),
            None => true,
        }
    }

    /// Footprint grid of the given objects.
    pub fn footprint_grid<'a>(&self, objs: impl IntoIterator<Item = &'a WorldObject>) -> Grid<bool> {
        let mut g = Grid::filled(self.width, self.height, self.resolution, false);
        for o in objs {
            for &c in &o.footprint {
                g.set(c, true);
            }
        }
        g
    }

    fn object_at(&self, c: Cell) -> Option<usize> {
        match *self.object_index.get(c)? {
            NO_OBJECT => None,
            k => Some(k as usize),
        }
    }

    /// Objects whose footprint contains the given cell.
    fn objects_containing(&self, c: Cell) -> Vec<usize> {
        self.objects.iter().enumerate().filter(|(_, o)| o.footprint.binary_search(&c).is_ok()).map(|(k, _)| k).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub rays: usize,
    /// Field of view in radians, centred on the heading.
    pub fov: f64,
    pub r_max: f64,
    pub sigma_r: f64,
    pub p_drop: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { rays: 180, fov: TAU, r_max: 6.0, sigma_r: 0.0, p_drop: 0.0 }
    }
}

impl SensorConfig {
    /// Robustness preset with range noise and label dropout.
    pub fn noisy() -> Self {
        Self { sigma_r: 0.02, p_drop: 0.05, ..Self::default() }
    }

    pub fn bearing(&self, k: usize) -> f64 {
        if self.rays <= 1 {
            return 0.0;
        }
        if (self.fov - TAU).abs() < 1e-12 {
            -std::f64::consts::PI + k as f64 * TAU / self.rays as f64
        } else {
            -self.fov / 2.0 + k as f64 * self.fov / (self.rays - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    /// Relative to the robot heading.
    pub bearing: f64,
    /// `r_max` when nothing was hit.
    pub range: f64,
    pub label: Option<String>,
    pub object: Option<ObjectId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticScan {
    pub rays: Vec<Ray>,
    pub pose: RobotState<f64>,
    pub noise_seed: u64,
}

/// First object footprint along a ray, as (distance, object index).
///
/// Cells of objects that contain the origin are ignored (the robot under a
/// desk must not see the desk at zero range).
fn cast(world: &World, ox: f64, oy: f64, angle: f64, r_max: f64) -> Option<(f64, usize)> {
    let res = world.resolution;
    let start = world.object_index.cell_at(ox, oy)?;
    let ignored = world.objects_containing(start);
    let (dy, dx) = angle.sin_cos();
    let (mut i, mut j) = (start.i as isize, start.j as isize);
    let step_i: isize = if dx > 0.0 { 1 } else { -1 };
    let step_j: isize = if dy > 0.0 { 1 } else { -1 };
    let next_boundary = |p: f64, d: f64, cell: isize| {
        if d > 0.0 {
            (cell + 1) as f64 * res - p
        } else {
            p - cell as f64 * res
        }
    };
    let mut t_max_x = if dx != 0.0 { next_boundary(ox, dx, i) / dx.abs() } else { f64::INFINITY };
    let mut t_max_y = if dy != 0.0 { next_boundary(oy, dy, j) / dy.abs() } else { f64::INFINITY };
    let t_delta_x = if dx != 0.0 { res / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { res / dy.abs() } else { f64::INFINITY };
    loop {
        let t_enter = if t_max_x < t_max_y {
            let t = t_max_x;
            t_max_x += t_delta_x;
            i += step_i;
            t
        } else {
            let t = t_max_y;
            t_max_y += t_delta_y;
            j += step_j;
            t
        };
        if t_enter > r_max {
            return None;
        }
        if i < 0 || j < 0 || i as usize >= world.width || j as usize >= world.height {
            return None;
        }
        let c = Cell::new(i as usize, j as usize);
        if let Some(k) = world.object_at(c) {
            if !ignored.contains(&k) {
                return Some((t_enter, k));
            }
            // an ignored object may be drawn over another one in this cell
            if let Some(other) = world.objects_containing(c).into_iter().find(|o| !ignored.contains(o)) {
                return Some((t_enter, other));
            }
        }
    }
}

pub fn sense(world: &World, pose: &RobotState<f64>, cfg: &SensorConfig, noise_seed: u64) -> SemanticScan {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let rays = (0..cfg.rays)
        .map(|k| {
            let bearing = cfg.bearing(k);
            let hit = cast(world, pose.px, pose.py, pose.theta + bearing, cfg.r_max);
            let noise: f64 = StandardNormal.sample(&mut rng);
            let dropped = rng.random::<f64>() < cfg.p_drop;
            match hit {
                Some((t, k)) => {
                    let range = (t + cfg.sigma_r * noise).clamp(1e-3, cfg.r_max);
                    let obj = &world.objects[k];
                    Ray {
                        bearing,
                        range,
                        label: (!dropped).then(|| obj.label.clone()),
                        object: (!dropped).then_some(obj.id),
                    }
                }
                None => Ray { bearing, range: cfg.r_max, label: None, object: None },
            }
        })
        .collect();
    SemanticScan { rays, pose: *pose, noise_seed }
}

/// One simulation step; `collided` reports whether the new position is
/// blocked for the robot disc. Overhangs never collide.
pub fn advance(
    world: &World,
    x: &RobotState<f64>,
    u: Control<f64>,
    p: &DynamicsParams<f64>,
) -> (RobotState<f64>, bool) {
    let next = step(x, u, p);
    let collided = world.base_blocked(next.px, next.py);
    (next, collided)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn obj(id: u32, label: &str, cells: &[(usize, usize)], blocking: bool) -> WorldObject {
        let mut footprint: Vec<Cell> = cells.iter().map(|&(i, j)| Cell::new(i, j)).collect();
        footprint.sort();
        WorldObject { id: ObjectId(id), label: label.into(), footprint, base_blocking: blocking }
    }

    fn world(objects: Vec<WorldObject>) -> World {
        World::new(0.1, 50, 50, objects, 0.25, RobotState::new(0.55, 0.55, 0.0, 0.0), (4.0, 4.0), 0.3)
    }

    #[test]
    fn empty_world_sees_nothing() {
        let w = world(vec![]);
        let scan = sense(&w, &RobotState::new(2.55, 2.55, 0.3, 0.0), &SensorConfig::default(), 3);
        assert_eq!(scan.rays.len(), 180);
        assert!(scan.rays.iter().all(|r| r.range == 6.0 && r.label.is_none()));
    }

    #[test]
    fn single_cell_due_east() {
        // robot at centre of cell (5,25); object centre 2 m east in cell (25,25)
        let w = world(vec![obj(0, "box", &[(25, 25)], true)]);
        let pose = RobotState::new(0.55, 2.55, 0.0, 0.0);
        let scan = sense(&w, &pose, &SensorConfig::default(), 0);
        let ray = scan.rays.iter().find(|r| r.bearing.abs() < 1e-12).unwrap();
        assert!((ray.range - 2.0).abs() <= 0.05 + 1e-9, "{}", ray.range);
        assert_eq!(ray.label.as_deref(), Some("box"));
        assert_eq!(ray.object, Some(ObjectId(0)));
    }

    #[test]
    fn full_dropout_keeps_ranges() {
        let w = world(vec![obj(0, "box", &[(25, 25), (25, 26), (26, 25)], true)]);
        let pose = RobotState::new(0.55, 2.55, 0.0, 0.0);
        let clean = sense(&w, &pose, &SensorConfig::default(), 9);
        let drop = sense(&w, &pose, &SensorConfig { p_drop: 1.0, ..Default::default() }, 9);
        assert!(drop.rays.iter().all(|r| r.label.is_none() && r.object.is_none()));
        for (a, b) in clean.rays.iter().zip(&drop.rays) {
            assert_eq!(a.range, b.range);
        }
    }

    #[test]
    fn advance_collisions() {
        let wall: Vec<_> = (0..50).map(|j| (30, j)).collect();
        let desk: Vec<_> = (10..20).flat_map(|i| (20..30).map(move |j| (i, j))).collect();
        let w = world(vec![obj(0, "wall", &wall, true), obj(1, "desk", &desk, false)]);
        let p = DynamicsParams::default();
        let (_, hit) = advance(&w, &RobotState::new(0.55, 0.55, 0.0, 1.0), Control::zero(), &p);
        assert!(!hit);
        let (_, hit) = advance(&w, &RobotState::new(2.75, 1.0, 0.0, 1.5), Control::zero(), &p);
        assert!(hit);
        let (_, hit) = advance(&w, &RobotState::new(1.5, 2.5, 0.0, 1.5), Control::zero(), &p);
        assert!(!hit);
    }

    #[test]
    fn robot_under_overhang_sees_past_it() {
        let desk: Vec<_> = (10..20).flat_map(|i| (20..30).map(move |j| (i, j))).collect();
        let w = world(vec![obj(0, "desk", &desk, false), obj(1, "box", &[(40, 25)], true)]);
        let pose = RobotState::new(1.55, 2.55, 0.0, 0.0);
        let scan = sense(&w, &pose, &SensorConfig::default(), 0);
        let ray = scan.rays.iter().find(|r| r.bearing.abs() < 1e-12).unwrap();
        assert_eq!(ray.label.as_deref(), Some("box"));
    }

    /// Exact ray/box entry distance (slab method), `None` if missed.
    fn slab(ox: f64, oy: f64, dx: f64, dy: f64, c: Cell, res: f64) -> Option<f64> {
        let (x0, x1) = (c.i as f64 * res, (c.i + 1) as f64 * res);
        let (y0, y1) = (c.j as f64 * res, (c.j + 1) as f64 * res);
        let span = |o: f64, d: f64, lo: f64, hi: f64| {
            if d.abs() < 1e-15 {
                if o >= lo && o <= hi {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    (f64::INFINITY, f64::NEG_INFINITY)
                }
            } else {
                let (a, b) = ((lo - o) / d, (hi - o) / d);
                (a.min(b), a.max(b))
            }
        };
        let (ax, bx) = span(ox, dx, x0, x1);
        let (ay, by) = span(oy, dy, y0, y1);
        let t0 = ax.max(ay);
        let t1 = bx.min(by);
        (t1 > t0 && t1 > 0.0).then_some(t0.max(0.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn first_hit_matches_brute_force(seed in any::<u64>(), px in 0.3f64..4.7, py in 0.3f64..4.7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut objects = Vec::new();
            for k in 0..6u32 {
                let i0 = rng.random_range(0..45usize);
                let j0 = rng.random_range(0..45usize);
                let cells: Vec<_> = (i0..i0 + rng.random_range(1..5)).flat_map(|i| (j0..j0 + rng.random_range(1..5usize)).map(move |j| (i, j))).collect();
                objects.push(obj(k, &format!("o{k}"), &cells, k % 2 == 0));
            }
            let w = world(objects);
            let pose = RobotState::new(px, py, rng.random_range(-3.0..3.0), 0.0);
            let cfg = SensorConfig { rays: 60, ..Default::default() };
            let scan = sense(&w, &pose, &cfg, 0);
            let start = w.object_index.cell_at(px, py).unwrap();
            let ignored = w.objects_containing(start);
            for ray in &scan.rays {
                let (dy, dx) = (pose.theta + ray.bearing).sin_cos();
                let mut best: Option<(f64, usize)> = None;
                for (k, o) in w.objects.iter().enumerate() {
                    if ignored.contains(&k) { continue; }
                    for &c in &o.footprint {
                        if let Some(t) = slab(px, py, dx, dy, c, w.resolution) {
                            if t <= cfg.r_max && best.is_none_or(|(bt, _)| t < bt) {
                                best = Some((t, k));
                            }
                        }
                    }
                }
                match best {
                    None => prop_assert!(ray.object.is_none() && ray.range == cfg.r_max),
                    Some((t, _)) => {
                        prop_assert!((ray.range - t).abs() < 1e-9, "range {} vs {}", ray.range, t);
                        let k = ray.object.unwrap().0 as usize;
                        // the reported object must own a cell entered at that distance
                        let owns = w.objects[k].footprint.iter().any(|&c| slab(px, py, dx, dy, c, w.resolution).is_some_and(|tc| (tc - t).abs() < 1e-9));
                        prop_assert!(owns);
                    }
                }
            }
        }
    }
}
