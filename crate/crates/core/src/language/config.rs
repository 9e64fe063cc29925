use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constraint category of one parsed instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    SpatialExclusion,
    KinematicModulation,
    Hybrid,
}

impl ConstraintKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintKind::SpatialExclusion => "spatial_exclusion",
            ConstraintKind::KinematicModulation => "kinematic_modulation",
            ConstraintKind::Hybrid => "hybrid",
        }
    }

    /// Lenient name lookup used for model output.
    pub fn from_name(name: &str) -> Option<Self> {
        let n: String =
            name.trim().to_ascii_lowercase().chars().map(|c| if c == ' ' || c == '-' { '_' } else { c }).collect();
        match n.as_str() {
            "spatial_exclusion" | "exclusion" | "spatial" => Some(ConstraintKind::SpatialExclusion),
            "kinematic_modulation" | "kinematic" | "modulation" => Some(ConstraintKind::KinematicModulation),
            "hybrid" | "intent" | "abstract_intent" => Some(ConstraintKind::Hybrid),
            _ => None,
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigId(pub String);

impl ConfigId {
    /// Stable id derived from the instruction text (FNV-1a over the
    /// whitespace-normalised lowercase string).
    pub fn from_text(text: &str) -> Self {
        let norm = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in norm.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        ConfigId(format!("c{h:016x}"))
    }
}

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// What the robot can do; bounds the admissible limits and feeds the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotCapabilities {
    pub v_max: f64,
    pub omega_max: f64,
    pub radius: f64,
    pub description: String,
}

impl Default for RobotCapabilities {
    fn default() -> Self {
        Self {
            v_max: 1.5,
            omega_max: 1.0,
            radius: 0.25,
            description: "differential-drive indoor ground robot (4D Dubins car), \
                          max forward speed 1.5 m/s, max turn rate 1.0 rad/s, \
                          max acceleration 3.0 m/s^2, base radius 0.25 m, no reverse"
                .into(),
        }
    }
}

/// Default limits applied when an instruction names no number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitDefaults {
    /// Fraction of `v_max` used for pace and intent phrases.
    pub vel_fraction: f64,
    /// Fraction of `omega_max` used for intent phrases.
    pub omega_fraction: f64,
    /// Radius in meters of the "near" region of hybrid constraints.
    pub near_buffer: f64,
}

impl Default for LimitDefaults {
    fn default() -> Self {
        Self { vel_fraction: 0.3, omega_fraction: 0.3, near_buffer: 0.5 }
    }
}

/// One structured safety constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyConfig {
    pub id: ConfigId,
    pub kind: ConstraintKind,
    pub obj: String,
    pub buffer: f64,
    pub vel_max: Option<f64>,
    pub angular_vel_max: Option<f64>,
    pub source_text: String,
}

/// The five-field wire template exchanged with the language model and
/// published as `schema/safety_config.schema.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateConfig {
    #[serde(rename = "type")]
    pub kind: String,
    pub obj: String,
    pub buffer: f64,
    #[serde(rename = "vel max")]
    pub vel_max: Option<f64>,
    #[serde(rename = "angular vel max")]
    pub angular_vel_max: Option<f64>,
}

impl SafetyConfig {
    pub fn exclusion(obj: &str, buffer: f64, source_text: &str) -> Self {
        Self {
            id: ConfigId::from_text(source_text),
            kind: ConstraintKind::SpatialExclusion,
            obj: obj.into(),
            buffer,
            vel_max: None,
            angular_vel_max: None,
            source_text: source_text.into(),
        }
    }

    pub fn modulation(vel_max: Option<f64>, angular_vel_max: Option<f64>, source_text: &str) -> Self {
        Self {
            id: ConfigId::from_text(source_text),
            kind: ConstraintKind::KinematicModulation,
            obj: String::new(),
            buffer: 0.0,
            vel_max,
            angular_vel_max,
            source_text: source_text.into(),
        }
    }

    pub fn hybrid(
        obj: &str,
        buffer: f64,
        vel_max: Option<f64>,
        angular_vel_max: Option<f64>,
        source_text: &str,
    ) -> Self {
        Self {
            id: ConfigId::from_text(source_text),
            kind: ConstraintKind::Hybrid,
            obj: obj.into(),
            buffer,
            vel_max,
            angular_vel_max,
            source_text: source_text.into(),
        }
    }

    pub fn has_limit(&self) -> bool {
        self.vel_max.is_some() || self.angular_vel_max.is_some()
    }

    pub fn is_spatial(&self) -> bool {
        self.kind != ConstraintKind::KinematicModulation
    }

    /// Checks the per-kind invariants against the robot's bounds.
    pub fn validate(&self, caps: &RobotCapabilities) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.buffer.is_finite() && self.buffer >= 0.0) {
            return bad("buffer must be a finite non-negative distance");
        }
        if let Some(v) = self.vel_max {
            if !(v > 0.0 && v <= caps.v_max) {
                return bad("vel max outside (0, v_max]");
            }
        }
        if let Some(w) = self.angular_vel_max {
            if !(w > 0.0 && w <= caps.omega_max) {
                return bad("angular vel max outside (0, omega_max]");
            }
        }
        let has_obj = !self.obj.trim().is_empty();
        match self.kind {
            ConstraintKind::SpatialExclusion if !has_obj => bad("exclusion needs an object"),
            ConstraintKind::SpatialExclusion if self.has_limit() => bad("exclusion must not carry velocity limits"),
            ConstraintKind::KinematicModulation if has_obj => bad("global modulation must not name an object"),
            ConstraintKind::KinematicModulation | ConstraintKind::Hybrid if !self.has_limit() => {
                bad("modulation needs at least one velocity limit")
            }
            ConstraintKind::Hybrid if !has_obj => bad("hybrid needs an object"),
            _ => Ok(()),
        }
    }

    pub fn to_template(&self) -> TemplateConfig {
        TemplateConfig {
            kind: self.kind.as_str().into(),
            obj: self.obj.clone(),
            buffer: self.buffer,
            vel_max: self.vel_max,
            angular_vel_max: self.angular_vel_max,
        }
    }

    pub fn from_template(t: &TemplateConfig, source_text: &str) -> Result<Self> {
        let kind = ConstraintKind::from_name(&t.kind)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown type `{}`", t.kind)))?;
        Ok(Self {
            id: ConfigId::from_text(source_text),
            kind,
            obj: t.obj.trim().to_string(),
            buffer: t.buffer,
            vel_max: t.vel_max,
            angular_vel_max: t.angular_vel_max,
            source_text: source_text.into(),
        })
    }
}

/// Result of parsing one instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseOutcome {
    Parsed { config: SafetyConfig },
    Clarify { question: String },
    Rejected { reason: String },
}

impl ParseOutcome {
    pub fn config(&self) -> Option<&SafetyConfig> {
        match self {
            ParseOutcome::Parsed { config } => Some(config),
            _ => None,
        }
    }
}

/// Bounded, ordered list of active configurations.
///
/// Adding beyond the cap evicts the oldest entry; re-adding an existing id
/// replaces it in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSet {
    configs: Vec<SafetyConfig>,
    cap: usize,
}

impl Default for ConfigSet {
    fn default() -> Self {
        Self::new(8)
    }
}

impl ConfigSet {
    pub fn new(cap: usize) -> Self {
        assert!(cap > 0, "config cap must be positive");
        Self { configs: Vec::new(), cap }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SafetyConfig> {
        self.configs.iter()
    }

    pub fn get(&self, id: &ConfigId) -> Option<&SafetyConfig> {
        self.configs.iter().find(|c| &c.id == id)
    }

    /// Returns the evicted config, if any.
    pub fn add(&mut self, c: SafetyConfig) -> Option<SafetyConfig> {
        if let Some(slot) = self.configs.iter_mut().find(|x| x.id == c.id) {
            *slot = c;
            return None;
        }
        self.configs.push(c);
        if self.configs.len() > self.cap {
            Some(self.configs.remove(0))
        } else {
            None
        }
    }

    pub fn remove(&mut self, id: &ConfigId) -> Option<SafetyConfig> {
        let pos = self.configs.iter().position(|c| &c.id == id)?;
        Some(self.configs.remove(pos))
    }

    /// Configs that are not shadowed by a more recent config on the same
    /// object (global modulations shadow each other).
    pub fn active(&self) -> Vec<&SafetyConfig> {
        let mut out: Vec<&SafetyConfig> = Vec::new();
        for c in self.configs.iter().rev() {
            let key = crate::labels::normalize_tokens(&c.obj);
            if !out.iter().any(|o| crate::labels::normalize_tokens(&o.obj) == key) {
                out.push(c);
            }
        }
        out.reverse();
        out
    }
}

pub fn add_config(mut set: ConfigSet, c: SafetyConfig) -> ConfigSet {
    set.add(c);
    set
}

pub fn remove_config(mut set: ConfigSet, id: &ConfigId) -> ConfigSet {
    set.remove(id);
    set
}
