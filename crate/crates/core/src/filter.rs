//! Sampling-based MPC safety score and the two filtering policies built on
//! it: least-restrictive switching and smooth blending over primitives.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_control, step, Control, DynamicsParams, RobotState};
use crate::error::{Error, Result};
use crate::grounding::FailureSetView;
use crate::scalar::Scalar;

/// State-control margin `l(x, u)`; positive is safe.
pub trait MarginField<S>: Sync {
    fn margin(&self, x: &RobotState<S>, u: &Control<S>) -> S;
}

impl<S, F> MarginField<S> for F
where
    F: Fn(&RobotState<S>, &Control<S>) -> S + Sync,
{
    fn margin(&self, x: &RobotState<S>, u: &Control<S>) -> S {
        self(x, u)
    }
}

impl MarginField<f64> for FailureSetView {
    fn margin(&self, x: &RobotState<f64>, u: &Control<f64>) -> f64 {
        self.eval_combined(x, u)
    }
}

/// Admissible control set `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSpace<S> {
    /// The dynamics box `[-omega_max, omega_max] x [-a_max, a_max]`.
    Box,
    /// Cartesian lattice; samples snap to the nearest value per axis.
    Lattice { omegas: Vec<S>, accels: Vec<S> },
}

impl<S: Scalar> ControlSpace<S> {
    /// `k x k` lattice spanning the dynamics bounds.
    pub fn lattice(p: &DynamicsParams<S>, k: usize) -> Self {
        let axis = |m: S| -> Vec<S> {
            if k == 1 {
                return vec![S::zero()];
            }
            (0..k).map(|i| -m + S::lit(2.0 * i as f64 / (k - 1) as f64) * m).collect()
        };
        Self::Lattice { omegas: axis(p.omega_max), accels: axis(p.accel_max) }
    }

    pub fn project(&self, u: Control<S>, p: &DynamicsParams<S>) -> Control<S> {
        match self {
            Self::Box => clamp_control(u, p),
            Self::Lattice { omegas, accels } => Control::new(nearest(omegas, u.omega), nearest(accels, u.accel)),
        }
    }
}

fn nearest<S: Scalar>(vals: &[S], v: S) -> S {
    let mut best = vals[0];
    for &c in &vals[1..] {
        if (c - v).abs() < (best - v).abs() {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmpcParams<S> {
    /// Samples per iteration.
    pub n: usize,
    /// Refinement iterations.
    pub r: usize,
    /// Horizon steps.
    pub h: usize,
    /// Sampling std for (omega, accel).
    pub sigma: (S, S),
    pub seed: u64,
    pub space: ControlSpace<S>,
    pub dynamics: DynamicsParams<S>,
    /// Evaluate rollouts on the rayon pool.
    pub parallel: bool,
}

impl<S: Scalar> Default for SbmpcParams<S> {
    fn default() -> Self {
        Self {
            n: 50,
            r: 2,
            h: 20,
            sigma: (S::lit(0.5), S::lit(1.5)),
            seed: 0,
            space: ControlSpace::Box,
            dynamics: DynamicsParams::default(),
            parallel: true,
        }
    }
}

impl<S: Scalar> SbmpcParams<S> {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.r == 0 || self.h == 0 {
            return Err(Error::InvalidParams("N, R and H must be at least 1".into()));
        }
        if !(self.sigma.0 > S::zero() && self.sigma.1 > S::zero()) {
            return Err(Error::InvalidParams("sigma must be positive".into()));
        }
        if let ControlSpace::Lattice { omegas, accels } = &self.space {
            if omegas.is_empty() || accels.is_empty() {
                return Err(Error::InvalidParams("empty control lattice".into()));
            }
        }
        self.dynamics.validate()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult<S> {
    pub v_safe: S,
    pub best_seq: Vec<Control<S>>,
    pub u_shield: Control<S>,
    /// Incumbent score before the first and after every iteration.
    pub iteration_scores: Vec<S>,
}

/// Worst margin along the rollout of `seq` from `x0`. The terminal state is
/// scored with a zero control.
pub fn rollout_score<S: Scalar, E: MarginField<S> + ?Sized>(
    x0: &RobotState<S>,
    seq: &[Control<S>],
    env: &E,
    p: &DynamicsParams<S>,
) -> S {
    let mut x = *x0;
    let mut j = S::infinity();
    for u in seq {
        j = j.min(env.margin(&x, u));
        x = step(&x, *u, p);
    }
    j.min(env.margin(&x, &Control::zero()))
}

/// Pads or truncates to `h` controls, repeating the last (or zero).
pub fn fit_horizon<S: Scalar>(seq: &[Control<S>], h: usize) -> Vec<Control<S>> {
    let fill = seq.last().copied().unwrap_or_else(Control::zero);
    seq.iter().copied().chain(std::iter::repeat(fill)).take(h).collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed.
pub fn derive_seed(base: u64, k: u64) -> u64 {
    splitmix(base ^ splitmix(k))
}

/// Estimates the best achievable worst-case margin from `x_init`.
///
/// Each iteration draws `n` sequences around the incumbent (sampling is
/// sequential so results do not depend on the thread count), scores them,
/// and keeps the best. The incumbent competes with its own samples and wins
/// ties, so the incumbent score never decreases.
pub fn score<S: Scalar, E: MarginField<S> + ?Sized>(
    x_init: &RobotState<S>,
    init_seq: &[Control<S>],
    env: &E,
    p: &SbmpcParams<S>,
) -> ScoreResult<S> {
    let dp = &p.dynamics;
    let mut inc: Vec<Control<S>> = fit_horizon(init_seq, p.h).into_iter().map(|u| p.space.project(u, dp)).collect();
    let mut j_inc = rollout_score(x_init, &inc, env, dp);
    let mut iteration_scores = Vec::with_capacity(p.r + 1);
    iteration_scores.push(j_inc);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    for _ in 0..p.r {
        let samples: Vec<Vec<Control<S>>> = (0..p.n)
            .map(|_| {
                inc.iter()
                    .map(|u| {
                        let dw: f64 = StandardNormal.sample(&mut rng);
                        let da: f64 = StandardNormal.sample(&mut rng);
                        let raw = Control::new(u.omega + p.sigma.0 * S::lit(dw), u.accel + p.sigma.1 * S::lit(da));
                        p.space.project(raw, dp)
                    })
                    .collect()
            })
            .collect();
        let scores: Vec<S> = if p.parallel {
            samples.par_iter().map(|s| rollout_score(x_init, s, env, dp)).collect()
        } else {
            samples.iter().map(|s| rollout_score(x_init, s, env, dp)).collect()
        };
        let mut best: Option<usize> = None;
        for (k, &sc) in scores.iter().enumerate() {
            if sc > best.map_or(j_inc, |b| scores[b]) {
                best = Some(k);
            }
        }
        if let Some(b) = best {
            j_inc = scores[b];
            inc = samples.into_iter().nth(b).unwrap();
        }
        iteration_scores.push(j_inc);
    }
    ScoreResult { v_safe: j_inc, u_shield: inc[0], best_seq: inc, iteration_scores }
}

/// Drops the first control and repeats the last.
pub fn shift<S: Scalar>(seq: &[Control<S>]) -> Vec<Control<S>> {
    match seq.split_first() {
        Some((_, rest)) if !rest.is_empty() => rest.iter().copied().chain(seq.last().copied()).collect(),
        _ => seq.to_vec(),
    }
}

/// Backup sequence carried across control ticks, aligned to the current
/// state, plus a call counter for seed derivation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart<S> {
    pub seq: Vec<Control<S>>,
    pub calls: u64,
}

impl<S: Scalar> WarmStart<S> {
    pub fn zeros(h: usize) -> Self {
        Self { seq: vec![Control::zero(); h], calls: 0 }
    }

    fn next_seed(&mut self, base: u64) -> u64 {
        self.calls += 1;
        derive_seed(base, self.calls)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterMode {
    Nominal,
    Shield,
    Blended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision<S> {
    pub u_out: Control<S>,
    pub u_nom: Control<S>,
    pub mode: FilterMode,
    pub v_nom: S,
    pub v_safe: S,
    /// True for Shield, and for Blended outputs other than the lattice point
    /// nearest the nominal control.
    pub intervened: bool,
    pub iteration_scores: Vec<S>,
    /// Wall-clock seconds.
    pub compute_time: f64,
}

/// Score of applying `u` once and then following the best backup.
fn one_step_score<S: Scalar, E: MarginField<S> + ?Sized>(
    x: &RobotState<S>,
    u: Control<S>,
    tail: &[Control<S>],
    env: &E,
    p: &SbmpcParams<S>,
) -> (S, ScoreResult<S>) {
    let x1 = step(x, u, &p.dynamics);
    let s = score(&x1, tail, env, p);
    (env.margin(x, &u).min(s.v_safe), s)
}

/// Passes `u_nom` through when its one-step-then-backup score exceeds `eps`,
/// otherwise applies the backup's first control.
pub fn filter_least_restrictive<S: Scalar, E: MarginField<S> + ?Sized>(
    x: &RobotState<S>,
    u_nom: Control<S>,
    env: &E,
    p: &SbmpcParams<S>,
    warm: &mut WarmStart<S>,
    eps: S,
) -> FilterDecision<S> {
    let t0 = Instant::now();
    let u_nom = clamp_control(u_nom, &p.dynamics);
    let tail = shift(&warm.seq);
    let (v_nom, s_nom) = one_step_score(x, u_nom, &tail, env, &p.with_seed(warm.next_seed(p.seed)));
    if v_nom > eps {
        warm.seq = s_nom.best_seq;
        return FilterDecision {
            u_out: u_nom,
            u_nom,
            mode: FilterMode::Nominal,
            v_nom,
            v_safe: s_nom.v_safe,
            intervened: false,
            iteration_scores: s_nom.iteration_scores,
            compute_time: t0.elapsed().as_secs_f64(),
        };
    }
    let ps = p.with_seed(warm.next_seed(p.seed));
    let s = score(x, &warm.seq, env, &ps);
    warm.seq = shift(&s.best_seq);
    FilterDecision {
        u_out: s.u_shield,
        u_nom,
        mode: FilterMode::Shield,
        v_nom,
        v_safe: s.v_safe,
        intervened: true,
        iteration_scores: s.iteration_scores,
        compute_time: t0.elapsed().as_secs_f64(),
    }
}

/// `k x k` primitives over the dynamics box.
pub fn default_primitives<S: Scalar>(p: &DynamicsParams<S>, k: usize) -> Vec<Control<S>> {
    let ControlSpace::Lattice { omegas, accels } = ControlSpace::lattice(p, k) else { unreachable!() };
    omegas.iter().flat_map(|&w| accels.iter().map(move |&a| Control::new(w, a))).collect()
}

fn normalized_distance<S: Scalar>(a: &Control<S>, b: &Control<S>, p: &DynamicsParams<S>) -> S {
    let dw = (a.omega - b.omega) / p.omega_max;
    let da = (a.accel - b.accel) / p.accel_max;
    (dw * dw + da * da).sqrt()
}

/// Index of the candidate nearest `target`; ties go to lower |omega|, then
/// lower |accel|, then lower index.
fn nearest_primitive<S: Scalar>(
    prims: &[Control<S>],
    idx: impl Iterator<Item = usize>,
    target: &Control<S>,
    p: &DynamicsParams<S>,
) -> Option<usize> {
    idx.min_by(|&i, &j| {
        let (a, b) = (&prims[i], &prims[j]);
        normalized_distance(a, target, p)
            .partial_cmp(&normalized_distance(b, target, p))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.omega.abs().partial_cmp(&b.omega.abs()).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.accel.abs().partial_cmp(&b.accel.abs()).unwrap_or(std::cmp::Ordering::Equal))
            .then(i.cmp(&j))
    })
}

/// Picks the admissible primitive nearest `u_nom`, where admissible means
/// `V_prim - V >= -gamma * V`; falls back to the backup control.
pub fn filter_smooth_blending<S: Scalar, E: MarginField<S> + ?Sized>(
    x: &RobotState<S>,
    u_nom: Control<S>,
    env: &E,
    p: &SbmpcParams<S>,
    warm: &mut WarmStart<S>,
    gamma: S,
    primitives: &[Control<S>],
) -> FilterDecision<S> {
    assert!(!primitives.is_empty(), "primitives must be nonempty");
    let t0 = Instant::now();
    let u_nom = clamp_control(u_nom, &p.dynamics);
    let base = p.with_seed(warm.next_seed(p.seed));
    let s = score(x, &warm.seq, env, &base);
    let v = s.v_safe;
    let tail = shift(&warm.seq);
    let prim_seed = warm.next_seed(p.seed);
    let eval = |k: usize| one_step_score(x, primitives[k], &tail, env, &p.with_seed(derive_seed(prim_seed, k as u64)));
    let scored: Vec<(S, ScoreResult<S>)> = if p.parallel {
        (0..primitives.len()).into_par_iter().map(eval).collect()
    } else {
        (0..primitives.len()).map(eval).collect()
    };
    let admissible = |k: &usize| scored[*k].0 - v >= -gamma * v;
    let pick = nearest_primitive(primitives, (0..primitives.len()).filter(admissible), &u_nom, &p.dynamics);
    match pick {
        Some(k) => {
            debug_assert!(scored[k].0 - v >= -gamma * v);
            let unconstrained = nearest_primitive(primitives, 0..primitives.len(), &u_nom, &p.dynamics);
            let (v_prim, sk) = scored.into_iter().nth(k).unwrap();
            warm.seq = sk.best_seq;
            FilterDecision {
                u_out: primitives[k],
                u_nom,
                mode: FilterMode::Blended,
                v_nom: v_prim,
                v_safe: v,
                intervened: unconstrained != Some(k),
                iteration_scores: s.iteration_scores,
                compute_time: t0.elapsed().as_secs_f64(),
            }
        }
        None => {
            let v_nom = env.margin(x, &u_nom);
            warm.seq = shift(&s.best_seq);
            FilterDecision {
                u_out: s.u_shield,
                u_nom,
                mode: FilterMode::Shield,
                v_nom,
                v_safe: v,
                intervened: true,
                iteration_scores: s.iteration_scores,
                compute_time: t0.elapsed().as_secs_f64(),
            }
        }
    }
}

/// Receives one record per filter call.
pub trait FilterObserver<S> {
    fn on_decision(&mut self, step: usize, d: &FilterDecision<S>);
}

#[derive(Serialize)]
struct FilterLine<'a, S> {
    step: usize,
    mode: FilterMode,
    v_nom: S,
    v_safe: S,
    iteration_scores: &'a [S],
    compute_time: f64,
}

/// Writes records as line-delimited JSON.
pub struct NdjsonObserver<W: Write> {
    pub out: W,
}

impl<S: Scalar + Serialize, W: Write> FilterObserver<S> for NdjsonObserver<W> {
    fn on_decision(&mut self, step: usize, d: &FilterDecision<S>) {
        let line = FilterLine {
            step,
            mode: d.mode,
            v_nom: d.v_nom,
            v_safe: d.v_safe,
            iteration_scores: &d.iteration_scores,
            compute_time: d.compute_time,
        };
        if serde_json::to_writer(&mut self.out, &line).is_ok() {
            let _ = self.out.write_all(b"\n");
        }
    }
}

impl<S: Clone> FilterObserver<S> for Vec<FilterDecision<S>> {
    fn on_decision(&mut self, _step: usize, d: &FilterDecision<S>) {
        self.push(d.clone());
    }
}
