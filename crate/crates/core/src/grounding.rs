//! Per-constraint occupancy beliefs built from labeled range hits, their
//! signed distance fields, and the scalar margins `l_i`, `l_sem`, `l_base`
//! and `l`.
//!
//! All margins are in meters. Velocity terms are scaled by a time constant
//! and angular-rate terms by a lever arm, so kinematic and spatial margins
//! can share one `min`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, RobotState};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::labels::match_label;
use crate::language::{ConfigId, ConfigSet, ConstraintKind, SafetyConfig};
use crate::sdf::{dilate, rebuild_sdf, SdfGrid, R_LARGE};
use crate::world::{SemanticScan, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingParams {
    /// Hits needed to confirm a cell.
    pub tau: u32,
    /// Seconds; converts m/s margins to meters.
    pub time_scale: f64,
    /// Meters; converts rad/s margins to meters.
    pub lever_arm: f64,
    /// Extra dilation of the coarse-mask ablation.
    pub coarse_radius: f64,
}

impl Default for GroundingParams {
    fn default() -> Self {
        Self { tau: 3, time_scale: 1.0, lever_arm: 0.25, coarse_radius: 0.5 }
    }
}

/// How configs are grounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingMode {
    Full,
    /// Dilated masks; only exclusion constraints, without buffers.
    CoarseExclusionOnly,
    /// Configs ignored; base map only.
    GeometricOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectBelief {
    pub config_id: ConfigId,
    /// The config's object phrase that hit labels are matched against.
    pub label: String,
    pub hit_counts: Grid<u32>,
    pub confirmed: Grid<bool>,
    pub tau: u32,
    /// Bumped whenever `confirmed` grows.
    pub stamp: u64,
}

impl ObjectBelief {
    pub fn new(config_id: ConfigId, label: &str, like: &Grid<bool>, tau: u32) -> Self {
        Self {
            config_id,
            label: label.to_string(),
            hit_counts: like.map(|_| 0),
            confirmed: like.map(|_| false),
            tau: tau.max(1),
            stamp: 0,
        }
    }

    /// Adds matching hits in place; returns whether any cell was newly confirmed.
    pub fn integrate(&mut self, scan: &SemanticScan) -> bool {
        let res = self.hit_counts.resolution();
        let mut grew = false;
        for ray in &scan.rays {
            let Some(hit) = ray.label.as_deref() else { continue };
            if !match_label(&self.label, hit) {
                continue;
            }
            // step just past the entry face into the hit cell
            let r = ray.range + 1e-3 * res;
            let a = scan.pose.theta + ray.bearing;
            let Some(c) = self.hit_counts.cell_at(scan.pose.px + r * a.cos(), scan.pose.py + r * a.sin()) else {
                continue;
            };
            let n = self.hit_counts.get_mut(c).unwrap();
            *n = n.saturating_add(1);
            if *n >= self.tau && !*self.confirmed.get(c).unwrap() {
                self.confirmed.set(c, true);
                grew = true;
            }
        }
        if grew {
            self.stamp += 1;
        }
        grew
    }
}

pub fn integrate_scan(belief: &ObjectBelief, scan: &SemanticScan) -> ObjectBelief {
    let mut b = belief.clone();
    b.integrate(scan);
    b
}

/// SDF of a belief under the given mode.
pub fn belief_sdf(belief: &ObjectBelief, mode: GroundingMode, params: &GroundingParams) -> SdfGrid {
    match mode {
        GroundingMode::CoarseExclusionOnly => {
            rebuild_sdf(&dilate(&belief.confirmed, params.coarse_radius), belief.stamp)
        }
        _ => rebuild_sdf(&belief.confirmed, belief.stamp),
    }
}

#[derive(Debug, Clone)]
pub struct GroundedConstraint {
    pub config: SafetyConfig,
    pub belief: Option<Arc<ObjectBelief>>,
    pub sdf: Option<Arc<SdfGrid>>,
}

impl GroundedConstraint {
    pub fn global(config: SafetyConfig) -> Self {
        Self { config, belief: None, sdf: None }
    }

    fn check(&self) -> Result<()> {
        if self.config.is_spatial() {
            match (&self.belief, &self.sdf) {
                (Some(b), Some(s)) if b.stamp == s.stamp => Ok(()),
                _ => Err(Error::StaleGrounding),
            }
        } else {
            Ok(())
        }
    }

    fn spatial(&self, x: &RobotState<f64>) -> f64 {
        self.sdf.as_ref().map_or(R_LARGE, |s| s.sample(x.px, x.py)) - self.config.buffer
    }

    fn modulation(&self, x: &RobotState<f64>, u: &Control<f64>, p: &GroundingParams) -> f64 {
        let v = self.config.vel_max.map_or(f64::INFINITY, |vm| (vm - x.v) * p.time_scale);
        let w = self.config.angular_vel_max.map_or(f64::INFINITY, |wm| (wm - u.omega.abs()) * p.lever_arm);
        v.min(w)
    }

    fn eval_unchecked(&self, x: &RobotState<f64>, u: &Control<f64>, p: &GroundingParams) -> f64 {
        match self.config.kind {
            ConstraintKind::SpatialExclusion => self.spatial(x),
            ConstraintKind::KinematicModulation => self.modulation(x, u, p),
            ConstraintKind::Hybrid => self.spatial(x).max(self.modulation(x, u, p)),
        }
    }
}

/// Margin `l_i(x, u) - buffer_i`; failure iff the value is `<= 0`.
pub fn eval_constraint(
    gc: &GroundedConstraint,
    x: &RobotState<f64>,
    u: &Control<f64>,
    p: &GroundingParams,
) -> Result<f64> {
    gc.check()?;
    Ok(gc.eval_unchecked(x, u, p))
}

/// Immutable snapshot of every grounded constraint plus the base SDF.
#[derive(Debug, Clone)]
pub struct FailureSetView {
    pub constraints: Vec<GroundedConstraint>,
    pub base_sdf: Arc<SdfGrid>,
    pub params: GroundingParams,
    pub stamp: u64,
}

impl FailureSetView {
    pub fn new(
        constraints: Vec<GroundedConstraint>,
        base_sdf: Arc<SdfGrid>,
        params: GroundingParams,
        stamp: u64,
    ) -> Result<Self> {
        for c in &constraints {
            c.check()?;
        }
        Ok(Self { constraints, base_sdf, params, stamp })
    }

    /// Base map only.
    pub fn geometric(base_sdf: Arc<SdfGrid>, params: GroundingParams) -> Self {
        Self { constraints: Vec::new(), base_sdf, params, stamp: 0 }
    }

    pub fn eval_base(&self, x: &RobotState<f64>) -> f64 {
        self.base_sdf.sample(x.px, x.py)
    }

    /// `min_i (l_i - buffer_i)`, `R_LARGE` with no constraints.
    pub fn eval_sem(&self, x: &RobotState<f64>, u: &Control<f64>) -> f64 {
        self.constraints.iter().map(|c| c.eval_unchecked(x, u, &self.params)).fold(R_LARGE, f64::min)
    }

    pub fn eval_combined(&self, x: &RobotState<f64>, u: &Control<f64>) -> f64 {
        self.eval_base(x).min(self.eval_sem(x, u))
    }

    /// Zero-velocity margin at a position, skipping global modulation
    /// constraints (they do not depend on position).
    pub fn eval_planning(&self, px: f64, py: f64) -> f64 {
        let x = RobotState::new(px, py, 0.0, 0.0);
        let u = Control::zero();
        self.constraints
            .iter()
            .filter(|c| c.config.is_spatial())
            .map(|c| c.eval_unchecked(&x, &u, &self.params))
            .fold(self.eval_base(&x), f64::min)
    }
}

/// Base SDF over the radius-inflated base map.
pub fn base_sdf(world: &World) -> SdfGrid {
    rebuild_sdf(&world.inflated_base, 0)
}

#[derive(Debug, Clone)]
struct Slot {
    config: SafetyConfig,
    belief: Arc<ObjectBelief>,
    sdf: Arc<SdfGrid>,
}

/// Stateful grounding pipeline for one episode. Readers take `snapshot()`s,
/// which are rebuilt only when something changed.
#[derive(Debug, Clone)]
pub struct Grounding {
    pub params: GroundingParams,
    pub mode: GroundingMode,
    template: Grid<bool>,
    base_sdf: Arc<SdfGrid>,
    slots: Vec<Slot>,
    global: Vec<SafetyConfig>,
    stamp: u64,
    snapshot: Arc<FailureSetView>,
}

impl Grounding {
    pub fn new(world: &World, params: GroundingParams, mode: GroundingMode) -> Self {
        let base = Arc::new(base_sdf(world));
        Self {
            params,
            mode,
            template: world.base_map.map(|_| false),
            snapshot: Arc::new(FailureSetView::geometric(base.clone(), params)),
            base_sdf: base,
            slots: Vec::new(),
            global: Vec::new(),
            stamp: 0,
        }
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn base_sdf(&self) -> &Arc<SdfGrid> {
        &self.base_sdf
    }

    pub fn beliefs(&self) -> impl Iterator<Item = (&SafetyConfig, &ObjectBelief, &SdfGrid)> {
        self.slots.iter().map(|s| (&s.config, s.belief.as_ref(), s.sdf.as_ref()))
    }

    fn supported(&self, c: &SafetyConfig) -> Option<SafetyConfig> {
        match self.mode {
            GroundingMode::Full => Some(c.clone()),
            GroundingMode::GeometricOnly => None,
            GroundingMode::CoarseExclusionOnly => {
                (c.kind == ConstraintKind::SpatialExclusion).then(|| SafetyConfig { buffer: 0.0, ..c.clone() })
            }
        }
    }

    /// Aligns beliefs with the active configs. Beliefs of configs that stay
    /// active are kept; new spatial configs start empty.
    pub fn sync_configs(&mut self, set: &ConfigSet) {
        let active: Vec<SafetyConfig> = set.active().into_iter().filter_map(|c| self.supported(c)).collect();
        let old_ids: Vec<&ConfigId> =
            self.slots.iter().map(|s| &s.config.id).chain(self.global.iter().map(|c| &c.id)).collect();
        let new_ids: Vec<&ConfigId> = active.iter().map(|c| &c.id).collect();
        if old_ids == new_ids {
            return;
        }
        let mut slots = Vec::new();
        let mut global = Vec::new();
        for c in active {
            if c.is_spatial() {
                match self.slots.iter().find(|s| s.config.id == c.id) {
                    Some(s) => slots.push(s.clone()),
                    None => {
                        let belief = ObjectBelief::new(c.id.clone(), &c.obj, &self.template, self.params.tau);
                        let sdf = Arc::new(belief_sdf(&belief, self.mode, &self.params));
                        slots.push(Slot { config: c, belief: Arc::new(belief), sdf });
                    }
                }
            } else {
                global.push(c);
            }
        }
        self.slots = slots;
        self.global = global;
        self.publish();
    }

    /// Integrates one scan into every belief; SDFs of grown beliefs are
    /// rebuilt once. Returns whether anything changed.
    pub fn integrate(&mut self, scan: &SemanticScan) -> bool {
        let mut changed = false;
        for s in &mut self.slots {
            let grew = Arc::make_mut(&mut s.belief).integrate(scan);
            if grew {
                s.sdf = Arc::new(belief_sdf(&s.belief, self.mode, &self.params));
                changed = true;
            } else if s.belief.stamp != s.sdf.stamp {
                s.sdf = Arc::new(belief_sdf(&s.belief, self.mode, &self.params));
            }
        }
        if changed {
            self.publish();
        }
        changed
    }

    fn publish(&mut self) {
        self.stamp += 1;
        let constraints = self
            .slots
            .iter()
            .map(|s| GroundedConstraint {
                config: s.config.clone(),
                belief: Some(s.belief.clone()),
                sdf: Some(s.sdf.clone()),
            })
            .chain(self.global.iter().cloned().map(GroundedConstraint::global))
            .collect();
        self.snapshot = Arc::new(FailureSetView {
            constraints,
            base_sdf: self.base_sdf.clone(),
            params: self.params,
            stamp: self.stamp,
        });
    }

    pub fn snapshot(&self) -> Arc<FailureSetView> {
        self.snapshot.clone()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpEntry {
    pub config_id: Option<ConfigId>,
    pub label: String,
    pub kind: String,
    pub occupancy_image: String,
    pub sdf_image: String,
    pub confirmed_cells: usize,
    pub sdf_min: f64,
    pub sdf_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpMeta {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub stamp: u64,
    /// SDF images map `[-clip, clip]` meters linearly onto `[0, 255]`.
    pub sdf_clip: f64,
    pub entries: Vec<DumpEntry>,
}

const SDF_CLIP: f64 = 3.0;

fn write_pgm(path: &Path, g: &Grid<u8>) -> Result<()> {
    // image rows run top-down; world rows run bottom-up
    let (w, h) = (g.width(), g.height());
    let mut buf = Vec::with_capacity(w * h);
    for j in (0..h).rev() {
        buf.extend_from_slice(&g.data()[j * w..(j + 1) * w]);
    }
    let img = image::GrayImage::from_raw(w as u32, h as u32, buf).expect("buffer size");
    img.save_with_format(path, image::ImageFormat::Pnm)?;
    Ok(())
}

fn sdf_to_gray(s: &SdfGrid) -> Grid<u8> {
    s.values.map(|v| (((v.clamp(-SDF_CLIP, SDF_CLIP) + SDF_CLIP) / (2.0 * SDF_CLIP)) * 255.0).round() as u8)
}

/// Writes base and per-constraint occupancy/SDF images plus `grounding.json`.
pub fn dump_grounding(g: &Grounding, world: &World, dir: &Path) -> Result<DumpMeta> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    let mut emit =
        |name: &str, id: Option<ConfigId>, label: &str, kind: &str, occ: &Grid<bool>, sdf: &SdfGrid| -> Result<()> {
            let occ_name = format!("{name}_occupancy.pgm");
            let sdf_name = format!("{name}_sdf.pgm");
            write_pgm(&dir.join(&occ_name), &occ.map(|b| if *b { 255 } else { 0 }))?;
            write_pgm(&dir.join(&sdf_name), &sdf_to_gray(sdf))?;
            let (lo, hi) =
                sdf.values.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            entries.push(DumpEntry {
                config_id: id,
                label: label.to_string(),
                kind: kind.to_string(),
                occupancy_image: occ_name,
                sdf_image: sdf_name,
                confirmed_cells: occ.count_true(),
                sdf_min: lo,
                sdf_max: hi,
            });
            Ok(())
        };
    emit("base", None, "base", "base", &world.inflated_base, &g.base_sdf)?;
    for (k, (c, b, s)) in g.beliefs().enumerate() {
        emit(&format!("c{k:02}"), Some(c.id.clone()), &c.obj, c.kind.as_str(), &b.confirmed, s)?;
    }
    let meta = DumpMeta {
        width: world.width,
        height: world.height,
        resolution: world.resolution,
        stamp: g.stamp(),
        sdf_clip: SDF_CLIP,
        entries,
    };
    let path = dir.join("grounding.json");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(f, &meta)?;
    Ok(meta)
}
