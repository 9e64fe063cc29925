mod common;

use std::sync::Arc;

use common::repo_path;
use semsafe_core::harness::{run_batch_paths, run_episode, EpisodeOptions, Method, MetricsSummary, Outcome};
use semsafe_core::scenario::Scenario;

fn scenario(name: &str) -> Arc<Scenario> {
    Arc::new(Scenario::load(repo_path(&format!("scenarios/{name}.toml"))).unwrap())
}

#[test]
fn episodes_replay_identically() {
    for (name, method, seed) in [
        ("office_desk", Method::OursLr, 3),
        ("office_desk", Method::OursSb, 1),
        ("pool", Method::SafeLangLike, 2),
        ("speed", Method::SafeGeom, 0),
    ] {
        let s = scenario(name);
        let a = run_episode(s.clone(), method, seed).without_timing();
        let b = run_episode(s, method, seed).without_timing();
        assert_eq!(a, b, "{name} {method:?} {seed}");
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn records_survive_json() {
    let rec = run_episode(scenario("speed"), Method::OursLr, 4);
    let text = serde_json::to_string(&rec).unwrap();
    let back: semsafe_core::harness::EpisodeRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn summary_matches_hand_counts() {
    let paths = [repo_path("scenarios/office_desk.toml"), repo_path("scenarios/speed.toml")];
    let batch = run_batch_paths(&paths, &[Method::OursLr, Method::SafeGeom], 2, &EpisodeOptions::default());
    assert!(batch.failures.is_empty());
    assert_eq!(batch.records.len(), 8);
    assert_eq!(MetricsSummary::from_records(&batch.records).rows.len(), batch.summary.rows.len());
    for row in &batch.summary.rows {
        let group: Vec<_> =
            batch.records.iter().filter(|r| r.method == row.method && r.category == row.category).collect();
        let n = group.len() as f64;
        assert_eq!(row.episodes, group.len());
        let frac = |p: &dyn Fn(&&semsafe_core::harness::EpisodeRecord) -> bool| {
            group.iter().filter(|r| p(r)).count() as f64 / n
        };
        assert_eq!(row.success_rate, frac(&|r| r.outcome == Outcome::Success));
        assert_eq!(row.semantic_safety_rate, frac(&|r| r.rows.iter().all(|s| s.l_sem > 0.0)));
        assert_eq!(row.collision_rate, frac(&|r| r.outcome == Outcome::Collision));
        let total = row.success_rate
            + row.collision_rate
            + row.semantic_violation_rate
            + row.timeout_perception_rate
            + row.timeout_safety_filter_rate
            + row.timeout_rate;
        assert!((total - 1.0).abs() < 1e-12, "{row:?}");
        let mut lat: Vec<f64> = group.iter().flat_map(|r| r.rows.iter().map(|s| s.compute_time * 1e3)).collect();
        lat.sort_by(f64::total_cmp);
        let mid = lat.len() / 2;
        let med = if lat.len() % 2 == 1 { lat[mid] } else { 0.5 * (lat[mid - 1] + lat[mid]) };
        assert_eq!(row.median_latency_ms, med);
    }
    for r in &batch.records {
        let min = r.rows.iter().map(|s| s.l_sem).fold(f64::INFINITY, f64::min);
        assert_eq!(r.min_l_sem, min);
        assert_eq!(r.semantic_safe, min > 0.0);
    }
}
