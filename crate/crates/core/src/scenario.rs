//! Scenario files (TOML or JSON): geometry, sensor, start/goal and scripted
//! instructions. Shapes are rasterized at load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsParams, RobotState};
use crate::error::{Error, Result};
use crate::grid::Cell;
use crate::world::{ObjectId, SensorConfig, World, WorldObject};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolylineSpec {
    pub points: Vec<[f64; 2]>,
    #[serde(default = "default_line_width")]
    pub width: f64,
}

fn default_line_width() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub label: String,
    #[serde(default = "yes")]
    pub blocking: bool,
    /// `[x0, y0, x1, y1]`
    #[serde(default)]
    pub rects: Vec<[f64; 4]>,
    #[serde(default)]
    pub polylines: Vec<PolylineSpec>,
    /// `[cx, cy, r]`
    #[serde(default)]
    pub circles: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionEvent {
    pub t: f64,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSpec {
    pub rays: usize,
    pub fov_deg: f64,
    pub r_max: f64,
    pub sigma_r: f64,
    pub p_drop: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        let d = SensorConfig::default();
        Self { rays: d.rays, fov_deg: d.fov.to_degrees(), r_max: d.r_max, sigma_r: d.sigma_r, p_drop: d.p_drop }
    }
}

fn yes() -> bool {
    true
}

fn default_resolution() -> f64 {
    0.1
}

fn default_duration() -> f64 {
    35.0
}

fn default_goal_radius() -> f64 {
    0.3
}

fn default_robot_radius() -> f64 {
    0.25
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub description: String,
    /// Meters.
    pub width: f64,
    pub height: f64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "yes")]
    pub border: bool,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    #[serde(default = "default_robot_radius")]
    pub robot_radius: f64,
    pub start: Pose,
    pub goal: Pose,
    #[serde(default)]
    pub sensor: SensorSpec,
    #[serde(default)]
    pub dynamics: Option<DynamicsParams<f64>>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub instructions: Vec<InstructionEvent>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub category: String,
    pub description: String,
    pub world: World,
    pub sensor: SensorConfig,
    pub dynamics: DynamicsParams<f64>,
    pub duration: f64,
    pub instructions: Vec<InstructionEvent>,
    pub spec: ScenarioSpec,
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl ScenarioSpec {
    pub fn from_toml_str(src: &str, path: &Path) -> Result<Self> {
        toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
            Error::ScenarioParse { path: path.into(), line, column, message: e.message().to_string() }
        })
    }

    pub fn from_json_str(src: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::ScenarioParse {
            path: path.into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// Rasterizes a spec into cells on a `w x h` grid. Returns cells clipped to
/// the grid along with whether anything fell outside.
fn rasterize(o: &ObjectSpec, res: f64, w: usize, h: usize) -> (Vec<Cell>, bool) {
    let mut cells = Vec::new();
    let mut clipped = false;
    let mut push = |i: isize, j: isize, cells: &mut Vec<Cell>| {
        if i >= 0 && j >= 0 && (i as usize) < w && (j as usize) < h {
            cells.push(Cell::new(i as usize, j as usize));
        } else {
            clipped = true;
        }
    };
    for r in &o.rects {
        let (x0, x1) = (r[0].min(r[2]), r[0].max(r[2]));
        let (y0, y1) = (r[1].min(r[3]), r[1].max(r[3]));
        let i0 = (x0 / res + 1e-9).floor() as isize;
        let i1 = ((x1 / res - 1e-9).ceil() as isize - 1).max(i0);
        let j0 = (y0 / res + 1e-9).floor() as isize;
        let j1 = ((y1 / res - 1e-9).ceil() as isize - 1).max(j0);
        for j in j0..=j1 {
            for i in i0..=i1 {
                push(i, j, &mut cells);
            }
        }
    }
    for c in &o.circles {
        let (cx, cy, r) = (c[0], c[1], c[2]);
        let i0 = ((cx - r) / res).floor() as isize - 1;
        let i1 = ((cx + r) / res).ceil() as isize + 1;
        let j0 = ((cy - r) / res).floor() as isize - 1;
        let j1 = ((cy + r) / res).ceil() as isize + 1;
        let mut any = false;
        for j in j0..=j1 {
            for i in i0..=i1 {
                let (x, y) = ((i as f64 + 0.5) * res, (j as f64 + 0.5) * res);
                if (x - cx).hypot(y - cy) <= r {
                    push(i, j, &mut cells);
                    any = true;
                }
            }
        }
        if !any {
            push((cx / res).floor() as isize, (cy / res).floor() as isize, &mut cells);
        }
    }
    for pl in &o.polylines {
        let half = pl.width.max(res) / 2.0;
        for seg in pl.points.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let i0 = ((a[0].min(b[0]) - half) / res).floor() as isize - 1;
            let i1 = ((a[0].max(b[0]) + half) / res).ceil() as isize + 1;
            let j0 = ((a[1].min(b[1]) - half) / res).floor() as isize - 1;
            let j1 = ((a[1].max(b[1]) + half) / res).ceil() as isize + 1;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let p = [(i as f64 + 0.5) * res, (j as f64 + 0.5) * res];
                    if point_segment_distance(p, a, b) <= half + 1e-9 {
                        push(i, j, &mut cells);
                    }
                }
            }
        }
    }
    cells.sort();
    cells.dedup();
    (cells, clipped)
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - (a[0] + t * dx)).hypot(p[1] - (a[1] + t * dy))
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec = if path.extension().is_some_and(|e| e == "json") {
            ScenarioSpec::from_json_str(&src, path)?
        } else {
            ScenarioSpec::from_toml_str(&src, path)?
        };
        Self::from_spec(spec, path)
    }

    pub fn from_spec(spec: ScenarioSpec, path: &Path) -> Result<Self> {
        let invalid =
            |field: &str, message: String| Error::ScenarioInvalid { path: path.into(), field: field.into(), message };
        if !(spec.resolution > 0.0 && spec.resolution.is_finite()) {
            return Err(invalid("resolution", "must be positive".into()));
        }
        if !(spec.width > 0.0 && spec.height > 0.0) {
            return Err(invalid("width", "world size must be positive".into()));
        }
        if !(spec.duration > 0.0) {
            return Err(invalid("duration", "must be positive".into()));
        }
        let w = (spec.width / spec.resolution).round() as usize;
        let h = (spec.height / spec.resolution).round() as usize;
        if w < 3 || h < 3 {
            return Err(invalid("width", "world must span at least 3 cells per side".into()));
        }
        let dynamics = spec.dynamics.unwrap_or_default();
        dynamics.validate().map_err(|e| invalid("dynamics", e.to_string()))?;
        let s = spec.sensor;
        if s.rays == 0 || !(s.r_max > 0.0) || !(0.0..=1.0).contains(&s.p_drop) || s.sigma_r < 0.0 {
            return Err(invalid("sensor", "rays > 0, r_max > 0, sigma_r >= 0, p_drop in [0, 1]".into()));
        }
        let sensor = SensorConfig {
            rays: s.rays,
            fov: s.fov_deg.to_radians(),
            r_max: s.r_max,
            sigma_r: s.sigma_r,
            p_drop: s.p_drop,
        };

        let mut objects = Vec::new();
        if spec.border {
            let mut footprint = Vec::new();
            for i in 0..w {
                footprint.push(Cell::new(i, 0));
                footprint.push(Cell::new(i, h - 1));
            }
            for j in 1..h - 1 {
                footprint.push(Cell::new(0, j));
                footprint.push(Cell::new(w - 1, j));
            }
            footprint.sort();
            objects.push(WorldObject { id: ObjectId(0), label: "wall".into(), footprint, base_blocking: true });
        }
        for (k, o) in spec.objects.iter().enumerate() {
            let field = format!("objects[{k}]");
            if o.label.trim().is_empty() {
                return Err(invalid(&field, "label must be nonempty".into()));
            }
            let (footprint, clipped) = rasterize(o, spec.resolution, w, h);
            if clipped {
                return Err(invalid(&field, "footprint extends outside the world".into()));
            }
            if footprint.is_empty() {
                return Err(invalid(&field, "footprint is empty".into()));
            }
            objects.push(WorldObject {
                id: ObjectId(objects.len() as u32),
                label: o.label.clone(),
                footprint,
                base_blocking: o.blocking,
            });
        }
        for (k, ev) in spec.instructions.iter().enumerate() {
            if !(ev.t >= 0.0 && ev.t.is_finite()) {
                return Err(invalid(&format!("instructions[{k}]"), "issue time must be >= 0".into()));
            }
        }
        let start = RobotState::new(spec.start.x, spec.start.y, spec.start.theta, 0.0);
        let world = World::new(
            spec.resolution,
            w,
            h,
            objects,
            spec.robot_radius,
            start,
            (spec.goal.x, spec.goal.y),
            spec.goal_radius,
        );
        if world.base_blocked(start.px, start.py) {
            return Err(invalid("start", "start lies in an obstacle".into()));
        }
        if world.base_blocked(spec.goal.x, spec.goal.y) {
            return Err(invalid("goal", "goal lies in an obstacle".into()));
        }
        let mut instructions = spec.instructions.clone();
        instructions.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self {
            id: spec.id.clone(),
            category: spec.category.clone(),
            description: spec.description.clone(),
            world,
            sensor,
            dynamics,
            duration: spec.duration,
            instructions,
            spec,
        })
    }
}

/// Loads just the world of a scenario file.
pub fn load_world(path: impl AsRef<Path>) -> Result<World> {
    Scenario::load(path).map(|s| s.world)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub scenarios: Vec<PathBuf>,
}

/// Scenario paths listed in a manifest, resolved against its directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: Manifest = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&src).map_err(|e| Error::ScenarioParse {
            path: path.into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(&src).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(&src, s.start));
            Error::ScenarioParse { path: path.into(), line, column, message: e.message().to_string() }
        })?
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    Ok(m.scenarios.into_iter().map(|p| if p.is_absolute() { p } else { dir.join(p) }).collect())
}
