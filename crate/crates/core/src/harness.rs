//! Episode runner, referee, outcome classification, batch metrics and
//! artifact writers.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, RobotState};
use crate::error::{Error, Result};
use crate::filter::{
    default_primitives, derive_seed, filter_least_restrictive, filter_smooth_blending, FilterDecision, FilterMode,
    SbmpcParams, WarmStart,
};
use crate::grounding::{
    base_sdf, FailureSetView, GroundedConstraint, Grounding, GroundingMode, GroundingParams, ObjectBelief,
};
use crate::labels::match_label;
use crate::language::{ConfigSet, InstructionParser, ParseOutcome, RuleParser, SafetyConfig};
use crate::nominal::{plan, PdGains, PlanPath, PlannerParams, Tracker};
use crate::scenario::{load_manifest, Scenario};
use crate::sdf::{rebuild_sdf, SdfGrid};
use crate::world::{advance, sense};

pub const EPISODE_SCHEMA: &str = "semsafe.episode/1";
pub const SUMMARY_SCHEMA: &str = "semsafe.summary/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "Ours-LR")]
    OursLr,
    #[serde(rename = "Ours-SB")]
    OursSb,
    SafeGeom,
    SafeLangLike,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::OursLr, Method::OursSb, Method::SafeGeom, Method::SafeLangLike];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::OursLr => "Ours-LR",
            Method::OursSb => "Ours-SB",
            Method::SafeGeom => "SafeGeom",
            Method::SafeLangLike => "SafeLangLike",
        }
    }

    pub fn grounding_mode(&self) -> GroundingMode {
        match self {
            Method::OursLr | Method::OursSb => GroundingMode::Full,
            Method::SafeGeom => GroundingMode::GeometricOnly,
            Method::SafeLangLike => GroundingMode::CoarseExclusionOnly,
        }
    }

    fn index(&self) -> u64 {
        *self as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        match key.as_str() {
            "ourslr" | "lr" => Ok(Method::OursLr),
            "ourssb" | "sb" => Ok(Method::OursSb),
            "safegeom" | "geom" => Ok(Method::SafeGeom),
            "safelanglike" | "langlike" => Ok(Method::SafeLangLike),
            _ => Err(Error::InvalidParams(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    SemanticViolation,
    Collision,
    TimeoutPerception,
    TimeoutSafetyFilter,
    /// Budget exhausted for any other reason.
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeoutRules {
    /// Seconds the planner must stay blocked by grounding.
    pub perception_window: f64,
    /// Final window inspected for filter lock-up, seconds.
    pub filter_window: f64,
    pub filter_fraction: f64,
    /// Meters of goal-distance progress that clears a filter lock-up.
    pub min_progress: f64,
}

impl Default for TimeoutRules {
    fn default() -> Self {
        Self { perception_window: 5.0, filter_window: 10.0, filter_fraction: 0.9, min_progress: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeOptions {
    pub sbmpc: SbmpcParams<f64>,
    pub eps: f64,
    pub gamma: f64,
    /// Primitive lattice side.
    pub primitives: usize,
    pub gains: PdGains,
    pub planner: PlannerParams,
    pub grounding: GroundingParams,
    /// Control ticks per sensing tick.
    pub sense_every: usize,
    /// Control ticks per planning tick.
    pub plan_every: usize,
    pub timeouts: TimeoutRules,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            sbmpc: SbmpcParams::default(),
            eps: 0.25,
            gamma: 5.0,
            primitives: 5,
            gains: PdGains::default(),
            planner: PlannerParams::default(),
            grounding: GroundingParams::default(),
            sense_every: 2,
            plan_every: 10,
            timeouts: TimeoutRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub k: usize,
    pub t: f64,
    pub state: RobotState<f64>,
    pub u_nom: Control<f64>,
    pub u_out: Control<f64>,
    pub mode: FilterMode,
    pub intervened: bool,
    /// Ground-truth margins.
    pub l_base: f64,
    pub l_sem: f64,
    pub v_nom: f64,
    pub v_safe: f64,
    /// Whether the method's planner had a path.
    pub planner_ok: bool,
    pub compute_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionSource {
    Script,
    Live,
    Clarify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub t: f64,
    pub text: String,
    pub source: InstructionSource,
    pub outcome: ParseOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub schema: String,
    pub scenario: String,
    pub category: String,
    pub seed: u64,
    pub method: Method,
    pub outcome: Outcome,
    pub goal_reached: bool,
    pub collided: bool,
    /// `min_t l_sem > 0` over every executed step.
    pub semantic_safe: bool,
    pub min_l_sem: f64,
    pub duration: f64,
    pub rows: Vec<StepRow>,
    pub events: Vec<InstructionRecord>,
}

impl EpisodeRecord {
    /// Copy with wall-clock fields zeroed, for replay comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.compute_time = 0.0;
        }
        r
    }

    pub fn compute_times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.compute_time).collect()
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ground-truth judge: margins from true footprints, never from beliefs.
#[derive(Debug, Clone)]
pub struct Referee {
    scenario: Arc<Scenario>,
    params: GroundingParams,
    cache: BTreeMap<String, Arc<SdfGrid>>,
    view: FailureSetView,
}

impl Referee {
    pub fn new(scenario: Arc<Scenario>, params: GroundingParams) -> Self {
        let base = Arc::new(base_sdf(&scenario.world));
        Self { view: FailureSetView::geometric(base, params), scenario, params, cache: BTreeMap::new() }
    }

    /// Rebuilds the truth view for a new set of active configs.
    pub fn sync(&mut self, configs: &[&SafetyConfig]) {
        let world = &self.scenario.world;
        let mut constraints = Vec::new();
        for c in configs {
            if !c.is_spatial() {
                constraints.push(GroundedConstraint::global((*c).clone()));
                continue;
            }
            let occ = world.footprint_grid(world.objects_labeled(|l| match_label(&c.obj, l)));
            let sdf = self.cache.entry(c.obj.clone()).or_insert_with(|| Arc::new(rebuild_sdf(&occ, 0))).clone();
            let mut belief = ObjectBelief::new(c.id.clone(), &c.obj, &occ, 1);
            belief.confirmed = occ;
            constraints.push(GroundedConstraint {
                config: (*c).clone(),
                belief: Some(Arc::new(belief)),
                sdf: Some(sdf),
            });
        }
        self.view = FailureSetView { constraints, base_sdf: self.view.base_sdf.clone(), params: self.params, stamp: 0 };
    }

    pub fn l_sem(&self, x: &RobotState<f64>, u: &Control<f64>) -> f64 {
        self.view.eval_sem(x, u)
    }

    pub fn l_base(&self, x: &RobotState<f64>) -> f64 {
        self.view.eval_base(x)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EpisodeError {
    Finished,
    NoPendingClarification,
}

impl fmt::Display for EpisodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpisodeError::Finished => f.write_str("episode finished"),
            EpisodeError::NoPendingClarification => f.write_str("no pending clarification"),
        }
    }
}

impl std::error::Error for EpisodeError {}

/// Steppable episode. The world is shared read-only; everything else is
/// owned by the episode.
pub struct Episode {
    pub scenario: Arc<Scenario>,
    pub method: Method,
    pub seed: u64,
    opts: EpisodeOptions,
    parser: Arc<dyn InstructionParser>,
    configs: ConfigSet,
    grounding: Grounding,
    referee: Referee,
    state: RobotState<f64>,
    k: usize,
    tracker: Tracker,
    path: Option<PlanPath>,
    planned_stamp: Option<u64>,
    warm: WarmStart<f64>,
    sbmpc: SbmpcParams<f64>,
    primitives: Vec<Control<f64>>,
    next_scripted: usize,
    pending: Option<(String, String)>,
    blocked_since: Option<f64>,
    perception_stuck: bool,
    rows: Vec<StepRow>,
    events: Vec<InstructionRecord>,
    goal_reached: bool,
    collided: bool,
    done: bool,
}

impl Episode {
    pub fn new(
        scenario: Arc<Scenario>,
        method: Method,
        seed: u64,
        opts: EpisodeOptions,
        parser: Arc<dyn InstructionParser>,
    ) -> Self {
        let grounding = Grounding::new(&scenario.world, opts.grounding, method.grounding_mode());
        let referee = Referee::new(scenario.clone(), opts.grounding);
        let sbmpc = SbmpcParams {
            seed: derive_seed(seed, 0x5afe_0000 + method.index()),
            dynamics: scenario.dynamics,
            ..opts.sbmpc.clone()
        };
        let primitives = default_primitives(&scenario.dynamics, opts.primitives.max(1));
        Self {
            state: scenario.world.start,
            tracker: Tracker::new(opts.gains),
            warm: WarmStart::zeros(sbmpc.h),
            scenario,
            method,
            seed,
            parser,
            configs: ConfigSet::default(),
            grounding,
            referee,
            k: 0,
            path: None,
            planned_stamp: None,
            sbmpc,
            primitives,
            next_scripted: 0,
            pending: None,
            blocked_since: None,
            perception_stuck: false,
            rows: Vec::new(),
            events: Vec::new(),
            goal_reached: false,
            collided: false,
            done: false,
            opts,
        }
    }

    pub fn with_rule_parser(scenario: Arc<Scenario>, method: Method, seed: u64) -> Self {
        Self::new(scenario, method, seed, EpisodeOptions::default(), Arc::new(RuleParser::default()))
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.scenario.dynamics.dt
    }

    pub fn state(&self) -> &RobotState<f64> {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn rows(&self) -> &[StepRow] {
        &self.rows
    }

    pub fn events(&self) -> &[InstructionRecord] {
        &self.events
    }

    pub fn grounding(&self) -> &Grounding {
        &self.grounding
    }

    pub fn configs(&self) -> &ConfigSet {
        &self.configs
    }

    pub fn path(&self) -> Option<&PlanPath> {
        self.path.as_ref()
    }

    pub fn pending_question(&self) -> Option<&str> {
        self.pending.as_ref().map(|(_, q)| q.as_str())
    }

    /// Drops scripted instructions not yet delivered, for operator-driven runs.
    pub fn clear_script(&mut self) {
        self.next_scripted = self.scenario.instructions.len();
    }

    fn apply(&mut self, text: &str, source: InstructionSource, outcome: ParseOutcome) -> ParseOutcome {
        match &outcome {
            ParseOutcome::Parsed { config } => {
                self.configs.add(config.clone());
                self.grounding.sync_configs(&self.configs);
                self.referee.sync(&self.configs.active());
                self.pending = None;
            }
            ParseOutcome::Clarify { question } => self.pending = Some((text.to_string(), question.clone())),
            ParseOutcome::Rejected { .. } => {}
        }
        self.events.push(InstructionRecord {
            t: self.time(),
            text: text.to_string(),
            source,
            outcome: outcome.clone(),
        });
        outcome
    }

    /// Routes an operator instruction through the parser.
    pub fn submit_instruction(&mut self, text: &str) -> std::result::Result<ParseOutcome, EpisodeError> {
        if self.done {
            return Err(EpisodeError::Finished);
        }
        let outcome = self.parser.parse(text);
        Ok(self.apply(text, InstructionSource::Live, outcome))
    }

    pub fn clarify(&mut self, answer: &str) -> std::result::Result<ParseOutcome, EpisodeError> {
        if self.done {
            return Err(EpisodeError::Finished);
        }
        let (instruction, question) = self.pending.clone().ok_or(EpisodeError::NoPendingClarification)?;
        let outcome = self.parser.clarify(&instruction, &question, answer);
        Ok(self.apply(answer, InstructionSource::Clarify, outcome))
    }

    fn deliver_scripted(&mut self) {
        let t = self.time();
        while let Some(ev) = self.scenario.instructions.get(self.next_scripted) {
            if ev.t > t + 1e-9 {
                break;
            }
            let text = ev.text.clone();
            self.next_scripted += 1;
            let outcome = self.parser.parse(&text);
            self.apply(&text, InstructionSource::Script, outcome);
        }
    }

    fn replan(&mut self) {
        let w = &self.scenario.world;
        let view = self.grounding.snapshot();
        let start = (self.state.px, self.state.py);
        self.path = plan(&view, &w.base_map, start, w.goal, w.goal_radius, &self.opts.planner);
        self.planned_stamp = Some(self.grounding.stamp());
        let t = self.time();
        let blocked_by_grounding = self.path.is_none() && {
            let geo = FailureSetView::geometric(self.grounding.base_sdf().clone(), self.opts.grounding);
            plan(&geo, &w.base_map, start, w.goal, w.goal_radius, &self.opts.planner).is_some()
        };
        if blocked_by_grounding {
            let since = *self.blocked_since.get_or_insert(t);
            if t - since >= self.opts.timeouts.perception_window - 1e-9 {
                self.perception_stuck = true;
            }
        } else {
            self.blocked_since = None;
        }
    }

    /// Advances one control tick. Returns `false` once the episode is over.
    pub fn step(&mut self) -> bool {
        if self.done {
            return false;
        }
        let dp = self.scenario.dynamics;
        let t = self.time();
        if t >= self.scenario.duration - 1e-9 {
            self.done = true;
            return false;
        }
        self.deliver_scripted();
        if self.k.is_multiple_of(self.opts.sense_every.max(1))
            && self.method.grounding_mode() != GroundingMode::GeometricOnly
        {
            let scan =
                sense(&self.scenario.world, &self.state, &self.scenario.sensor, derive_seed(self.seed, self.k as u64));
            self.grounding.integrate(&scan);
        }
        if self.k.is_multiple_of(self.opts.plan_every.max(1)) || self.planned_stamp != Some(self.grounding.stamp()) {
            self.replan();
        }
        let w = &self.scenario.world;
        let u_nom = match &self.path {
            Some(p) => self.tracker.step(p, &self.state, w.goal, w.goal_radius, &dp),
            None => Control::new(0.0, -dp.accel_max),
        };
        let view = self.grounding.snapshot();
        let d: FilterDecision<f64> = match self.method {
            Method::OursSb => filter_smooth_blending(
                &self.state,
                u_nom,
                view.as_ref(),
                &self.sbmpc,
                &mut self.warm,
                self.opts.gamma,
                &self.primitives,
            ),
            _ => {
                filter_least_restrictive(&self.state, u_nom, view.as_ref(), &self.sbmpc, &mut self.warm, self.opts.eps)
            }
        };
        let l_sem = self.referee.l_sem(&self.state, &d.u_out);
        let l_base = self.referee.l_base(&self.state);
        self.rows.push(StepRow {
            k: self.k,
            t,
            state: self.state,
            u_nom: d.u_nom,
            u_out: d.u_out,
            mode: d.mode,
            intervened: d.intervened,
            l_base,
            l_sem,
            v_nom: d.v_nom,
            v_safe: d.v_safe,
            planner_ok: self.path.is_some(),
            compute_time: d.compute_time,
        });
        let (next, collided) = advance(w, &self.state, d.u_out, &dp);
        self.state = next;
        self.k += 1;
        if collided {
            self.collided = true;
            self.done = true;
        } else if (next.px - w.goal.0).hypot(next.py - w.goal.1) <= w.goal_radius {
            self.goal_reached = true;
            self.done = true;
        }
        !self.done
    }

    pub fn run_to_end(&mut self) {
        while self.step() {}
    }

    fn classify(&self, min_l_sem: f64) -> Outcome {
        if self.collided {
            return Outcome::Collision;
        }
        if min_l_sem <= 0.0 {
            return Outcome::SemanticViolation;
        }
        if self.goal_reached {
            return Outcome::Success;
        }
        if self.perception_stuck {
            return Outcome::TimeoutPerception;
        }
        let rules = &self.opts.timeouts;
        let t_end = self.time();
        let window: Vec<&StepRow> = self.rows.iter().filter(|r| r.t >= t_end - rules.filter_window - 1e-9).collect();
        if let (Some(first), Some(_)) = (window.first(), window.last()) {
            let goal = self.scenario.world.goal;
            let dist = |s: &RobotState<f64>| (s.px - goal.0).hypot(s.py - goal.1);
            let progress = dist(&first.state) - dist(&self.state);
            let frac = window.iter().filter(|r| r.intervened).count() as f64 / window.len() as f64;
            if frac >= rules.filter_fraction && progress < rules.min_progress {
                return Outcome::TimeoutSafetyFilter;
            }
        }
        Outcome::Timeout
    }

    /// Closes the episode and classifies it.
    pub fn finish(mut self) -> EpisodeRecord {
        self.done = true;
        let min_l_sem = self.rows.iter().map(|r| r.l_sem).fold(f64::INFINITY, f64::min);
        let outcome = self.classify(min_l_sem);
        EpisodeRecord {
            schema: EPISODE_SCHEMA.to_string(),
            scenario: self.scenario.id.clone(),
            category: self.scenario.category.clone(),
            seed: self.seed,
            method: self.method,
            outcome,
            goal_reached: self.goal_reached,
            collided: self.collided,
            semantic_safe: min_l_sem > 0.0,
            min_l_sem,
            duration: self.time(),
            events: self.events,
            rows: self.rows,
        }
    }

    /// Snapshot of the current record without consuming the episode.
    pub fn record(&self) -> EpisodeRecord {
        let min_l_sem = self.rows.iter().map(|r| r.l_sem).fold(f64::INFINITY, f64::min);
        EpisodeRecord {
            schema: EPISODE_SCHEMA.to_string(),
            scenario: self.scenario.id.clone(),
            category: self.scenario.category.clone(),
            seed: self.seed,
            method: self.method,
            outcome: self.classify(min_l_sem),
            goal_reached: self.goal_reached,
            collided: self.collided,
            semantic_safe: min_l_sem > 0.0,
            min_l_sem,
            duration: self.time(),
            events: self.events.clone(),
            rows: self.rows.clone(),
        }
    }
}

pub fn run_episode_with(scenario: Arc<Scenario>, method: Method, seed: u64, opts: &EpisodeOptions) -> EpisodeRecord {
    let mut ep = Episode::new(scenario, method, seed, opts.clone(), Arc::new(RuleParser::default()));
    ep.run_to_end();
    ep.finish()
}

pub fn run_episode(scenario: Arc<Scenario>, method: Method, seed: u64) -> EpisodeRecord {
    run_episode_with(scenario, method, seed, &EpisodeOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: Method,
    pub category: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub semantic_safety_rate: f64,
    pub collision_rate: f64,
    pub semantic_violation_rate: f64,
    pub timeout_perception_rate: f64,
    pub timeout_safety_filter_rate: f64,
    pub timeout_rate: f64,
    pub mean_latency_ms: f64,
    pub median_latency_ms: f64,
}

impl MetricsRow {
    pub fn from_records<'a>(method: Method, category: &str, recs: impl IntoIterator<Item = &'a EpisodeRecord>) -> Self {
        let recs: Vec<&EpisodeRecord> = recs.into_iter().collect();
        let n = recs.len();
        let rate = |f: &dyn Fn(&EpisodeRecord) -> bool| {
            if n == 0 {
                0.0
            } else {
                recs.iter().filter(|r| f(r)).count() as f64 / n as f64
            }
        };
        let lat: Vec<f64> = recs.iter().flat_map(|r| r.rows.iter().map(|s| s.compute_time * 1e3)).collect();
        Self {
            method,
            category: category.to_string(),
            episodes: n,
            success_rate: rate(&|r| r.outcome == Outcome::Success),
            semantic_safety_rate: rate(&|r| r.semantic_safe),
            collision_rate: rate(&|r| r.outcome == Outcome::Collision),
            semantic_violation_rate: rate(&|r| r.outcome == Outcome::SemanticViolation),
            timeout_perception_rate: rate(&|r| r.outcome == Outcome::TimeoutPerception),
            timeout_safety_filter_rate: rate(&|r| r.outcome == Outcome::TimeoutSafetyFilter),
            timeout_rate: rate(&|r| r.outcome == Outcome::Timeout),
            mean_latency_ms: if lat.is_empty() { 0.0 } else { lat.iter().sum::<f64>() / lat.len() as f64 },
            median_latency_ms: if lat.is_empty() { 0.0 } else { median(&lat) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub schema: String,
    /// One row per (method, category).
    pub rows: Vec<MetricsRow>,
    /// One row per method over all categories.
    pub overall: Vec<MetricsRow>,
}

impl MetricsSummary {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let mut groups: BTreeMap<(Method, String), Vec<&EpisodeRecord>> = BTreeMap::new();
        let mut by_method: BTreeMap<Method, Vec<&EpisodeRecord>> = BTreeMap::new();
        for r in records {
            groups.entry((r.method, r.category.clone())).or_default().push(r);
            by_method.entry(r.method).or_default().push(r);
        }
        Self {
            schema: SUMMARY_SCHEMA.to_string(),
            rows: groups.into_iter().map(|((m, c), rs)| MetricsRow::from_records(m, &c, rs)).collect(),
            overall: by_method.into_iter().map(|(m, rs)| MetricsRow::from_records(m, "all", rs)).collect(),
        }
    }

    pub fn row(&self, method: Method, category: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method && r.category == category)
    }

    pub fn overall(&self, method: Method) -> Option<&MetricsRow> {
        self.overall.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub records: Vec<EpisodeRecord>,
    pub failures: Vec<EpisodeFailure>,
    pub summary: MetricsSummary,
}

/// Runs every (scenario, method, seed) with seeds `0..trials`, in parallel.
/// Scenarios that fail to load are recorded per episode and skipped.
pub fn run_batch_paths(
    paths: &[impl AsRef<Path> + Sync],
    methods: &[Method],
    trials: u64,
    opts: &EpisodeOptions,
) -> BatchResult {
    let loaded: Vec<std::result::Result<Arc<Scenario>, (String, String)>> = paths
        .iter()
        .map(|p| {
            Scenario::load(p.as_ref()).map(Arc::new).map_err(|e| (p.as_ref().display().to_string(), e.to_string()))
        })
        .collect();
    let mut jobs = Vec::new();
    for s in &loaded {
        for &m in methods {
            for seed in 0..trials {
                jobs.push((s.clone(), m, seed));
            }
        }
    }
    let results: Vec<std::result::Result<EpisodeRecord, EpisodeFailure>> = jobs
        .into_par_iter()
        .map(|(s, m, seed)| match s {
            Ok(sc) => Ok(run_episode_with(sc, m, seed, opts)),
            Err((scenario, message)) => Err(EpisodeFailure { scenario, method: m, seed, message }),
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    let summary = MetricsSummary::from_records(&records);
    BatchResult { records, failures, summary }
}

pub fn run_batch(
    manifest: impl AsRef<Path>,
    methods: &[Method],
    trials: u64,
    opts: &EpisodeOptions,
) -> Result<BatchResult> {
    let paths = load_manifest(manifest)?;
    Ok(run_batch_paths(&paths, methods, trials, opts))
}

/// Margin and velocity traces for plotting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotSeries {
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    pub t: Vec<f64>,
    pub l_sem: Vec<f64>,
    pub l_base: Vec<f64>,
    pub v: Vec<f64>,
    pub mode: Vec<FilterMode>,
}

impl PlotSeries {
    pub fn from_record(r: &EpisodeRecord) -> Self {
        Self {
            scenario: r.scenario.clone(),
            method: r.method,
            seed: r.seed,
            t: r.rows.iter().map(|s| s.t).collect(),
            l_sem: r.rows.iter().map(|s| s.l_sem.min(1e3)).collect(),
            l_base: r.rows.iter().map(|s| s.l_base.min(1e3)).collect(),
            v: r.rows.iter().map(|s| s.state.v).collect(),
            mode: r.rows.iter().map(|s| s.mode).collect(),
        }
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path).map(std::io::BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_ndjson<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut f = create(path)?;
    for it in items {
        serde_json::to_writer(&mut f, &it)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary_csv(path: &Path, s: &MetricsSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in s.rows.iter().chain(&s.overall) {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `episodes.ndjson`, `failures.json`, `summary.csv`, `summary.json`
/// and `plots.json` into `dir`.
pub fn write_batch(dir: &Path, b: &BatchResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_ndjson(&dir.join("episodes.ndjson"), &b.records)?;
    write_summary_csv(&dir.join("summary.csv"), &b.summary)?;
    serde_json::to_writer_pretty(create(&dir.join("summary.json"))?, &b.summary)?;
    serde_json::to_writer_pretty(create(&dir.join("failures.json"))?, &b.failures)?;
    let plots: Vec<PlotSeries> = b.records.iter().map(PlotSeries::from_record).collect();
    serde_json::to_writer(create(&dir.join("plots.json"))?, &plots)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioSpec;

    fn scenario(src: &str) -> Arc<Scenario> {
        let p = Path::new("t.toml");
        Arc::new(Scenario::from_spec(ScenarioSpec::from_toml_str(src, p).unwrap(), p).unwrap())
    }

    const EMPTY: &str = r#"
id = "empty"
category = "none"
width = 6.0
height = 4.0
start = { x = 1.0, y = 2.0 }
goal = { x = 5.0, y = 2.0 }
"#;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            let j = serde_json::to_string(&m).unwrap();
            assert_eq!(j, format!("\"{}\"", m.as_str()));
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn empty_scenario_succeeds_for_every_method() {
        let s = scenario(EMPTY);
        for m in Method::ALL {
            let r = run_episode(s.clone(), m, 0);
            assert_eq!(r.outcome, Outcome::Success, "{m}");
            if m != Method::OursSb {
                assert!(r.rows.iter().all(|row| row.mode == FilterMode::Nominal), "{m}");
            }
        }
    }

    #[test]
    fn instruction_on_finished_episode() {
        let mut ep = Episode::with_rule_parser(scenario(EMPTY), Method::OursLr, 0);
        ep.run_to_end();
        assert_eq!(ep.submit_instruction("avoid the box"), Err(EpisodeError::Finished));
    }

    #[test]
    fn clarify_flow() {
        let mut ep = Episode::with_rule_parser(scenario(EMPTY), Method::OursLr, 0);
        assert_eq!(ep.clarify("yes"), Err(EpisodeError::NoPendingClarification));
        let out = ep.submit_instruction("be careful").unwrap();
        assert!(matches!(out, ParseOutcome::Clarify { .. }));
        assert!(ep.pending_question().is_some());
    }

    #[test]
    fn summary_rates_are_fractions() {
        let s = scenario(EMPTY);
        let recs: Vec<_> = (0..5).map(|seed| run_episode(s.clone(), Method::SafeGeom, seed)).collect();
        let sum = MetricsSummary::from_records(&recs);
        let row = sum.row(Method::SafeGeom, "none").unwrap();
        assert_eq!(row.episodes, 5);
        assert_eq!(row.success_rate, 1.0);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
