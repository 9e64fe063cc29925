//! Stream payloads. Grids travel as run-length pairs in row-major order,
//! starting at the bottom-left cell.

use serde::{Deserialize, Serialize};

use semsafe_core::grid::Grid;
use semsafe_core::harness::{Episode, InstructionRecord, Method, Outcome, StepRow};
use semsafe_core::language::ConstraintKind;

pub const FRAME_SCHEMA: &str = "semsafe.frame/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RleGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub runs: Vec<(bool, usize)>,
}

impl RleGrid {
    pub fn encode(g: &Grid<bool>) -> Self {
        Self { width: g.width(), height: g.height(), resolution: g.resolution(), runs: g.run_lengths() }
    }

    pub fn decode(&self) -> Option<Grid<bool>> {
        Grid::from_run_lengths(self.width, self.height, self.resolution, &self.runs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintOverlay {
    pub id: String,
    pub kind: ConstraintKind,
    pub label: Option<String>,
    pub text: String,
    pub vel_max: Option<f64>,
    pub angular_vel_max: Option<f64>,
    /// Confirmed cells; absent for global limits.
    pub cells: Option<RleGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingFrame {
    pub stamp: u64,
    pub base: RleGrid,
    pub constraints: Vec<ConstraintOverlay>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub schema: String,
    pub episode: u64,
    pub seq: u64,
    pub scenario: String,
    pub method: Method,
    pub t: f64,
    pub done: bool,
    pub outcome: Option<Outcome>,
    pub goal: (f64, f64),
    pub goal_radius: f64,
    pub step: Option<StepRow>,
    pub path: Vec<(f64, f64)>,
    pub pending_question: Option<String>,
    pub events: Vec<InstructionRecord>,
    pub grounding: GroundingFrame,
}

impl Frame {
    pub fn capture(id: u64, seq: u64, ep: &Episode) -> Self {
        let g = ep.grounding();
        let mut constraints: Vec<ConstraintOverlay> = g
            .beliefs()
            .map(|(c, b, _)| ConstraintOverlay {
                id: c.id.0.clone(),
                kind: c.kind,
                label: Some(c.obj.clone()),
                text: c.source_text.clone(),
                vel_max: c.vel_max,
                angular_vel_max: c.angular_vel_max,
                cells: Some(RleGrid::encode(&b.confirmed)),
            })
            .collect();
        for c in ep.configs().iter().filter(|c| !c.is_spatial()) {
            constraints.push(ConstraintOverlay {
                id: c.id.0.clone(),
                kind: c.kind,
                label: None,
                text: c.source_text.clone(),
                vel_max: c.vel_max,
                angular_vel_max: c.angular_vel_max,
                cells: None,
            });
        }
        let done = ep.is_done();
        let w = &ep.scenario.world;
        Self {
            schema: FRAME_SCHEMA.to_string(),
            episode: id,
            seq,
            scenario: ep.scenario.id.clone(),
            method: ep.method,
            t: ep.time(),
            done,
            outcome: done.then(|| ep.record().outcome),
            goal: w.goal,
            goal_radius: w.goal_radius,
            step: ep.rows().last().cloned(),
            path: ep.path().map(|p| p.waypoints.clone()).unwrap_or_default(),
            pending_question: ep.pending_question().map(str::to_string),
            events: ep.events().to_vec(),
            grounding: GroundingFrame { stamp: g.stamp(), base: RleGrid::encode(&w.base_map), constraints },
        }
    }
}
