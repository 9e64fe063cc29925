mod common;

use common::{fixture, matches_exact, repo_path, CANONICAL};
use proptest::prelude::*;
use semsafe_core::language::{parse_rule_based, ParseOutcome, SafetyConfig, TemplateConfig, SAFETY_CONFIG_SCHEMA};
use semsafe_core::scenario::{load_manifest, Scenario};
use semsafe_core::Error;
use serde_json::Value;

#[test]
fn minimal_world_loads_with_defaults() {
    let s = Scenario::load(fixture("minimal.toml")).unwrap();
    let w = &s.world;
    assert_eq!((w.width, w.height), (30, 20));
    assert_eq!(w.goal, (2.4, 1.0));
    assert_eq!(s.duration, 10.0);
    assert!(s.instructions.is_empty());
    // border walls only
    assert!(w.base_blocked(0.05, 1.0));
    assert!(!w.base_blocked(1.5, 1.0));
}

#[test]
fn goal_inside_obstacle_is_rejected() {
    let err = Scenario::load(fixture("goal_in_obstacle.toml")).unwrap_err();
    assert!(matches!(err, Error::ScenarioInvalid { .. }), "{err:?}");
}

#[test]
fn unknown_scenario_field_is_a_parse_error() {
    let err = Scenario::load(fixture("unknown_field.toml")).unwrap_err();
    assert!(matches!(err, Error::ScenarioParse { .. }), "{err:?}");
}

#[test]
fn json_scenarios_load() {
    let s = Scenario::load(fixture("table_room.json")).unwrap();
    let table = s.world.objects.iter().find(|o| o.label == "dining table").unwrap();
    assert!(!table.base_blocking);
    assert!(!s.world.base_blocked(2.5, 2.0));
}

#[test]
fn shipped_suite_is_well_formed() {
    let paths = load_manifest(repo_path("scenarios/manifest.toml")).unwrap();
    assert_eq!(paths.len(), 6);
    let mut ids = std::collections::BTreeSet::new();
    for p in &paths {
        let s = Scenario::load(p).unwrap();
        assert!(ids.insert(s.id.clone()), "duplicate id {}", s.id);
        assert!(!s.instructions.is_empty(), "{} has no instruction", s.id);
        for ev in &s.instructions {
            assert!(matches!(parse_rule_based(&ev.text), ParseOutcome::Parsed { .. }), "{}: {}", s.id, ev.text);
        }
    }
}

#[test]
fn standing_desk_is_traversable_by_the_base() {
    let s = Scenario::load(repo_path("scenarios/office_desk.toml")).unwrap();
    let desk = s.world.objects.iter().find(|o| o.label == "standing desk").unwrap();
    assert!(!desk.base_blocking);
    assert!(!desk.footprint.is_empty());
    for c in &desk.footprint {
        let (x, y) = s.world.base_map.center(*c);
        assert!(!s.world.base_blocked(x, y));
    }
    let cabinet = s.world.objects.iter().find(|o| o.label == "filing cabinet").unwrap();
    assert!(cabinet.base_blocking);
}

#[test]
fn canonical_instructions_parse_to_golden_configs() {
    let kinds: std::collections::BTreeSet<_> = CANONICAL.iter().map(|g| g.kind.as_str()).collect();
    assert_eq!(kinds.len(), 3);
    for want in &CANONICAL {
        match parse_rule_based(want.text) {
            ParseOutcome::Parsed { config } => {
                assert!(matches_exact(&config, want), "{}: {config:?}", want.text);
                assert_eq!(config.source_text, want.text);
            }
            other => panic!("{}: {other:?}", want.text),
        }
    }
}

#[test]
fn ambiguous_instructions_ask_back() {
    for text in ["be careful", "go somewhere nice", "avoid"] {
        assert!(matches!(parse_rule_based(text), ParseOutcome::Clarify { .. }), "{text:?}");
    }
    assert!(matches!(parse_rule_based("  "), ParseOutcome::Rejected { .. }));
}

fn schema() -> jsonschema::Validator {
    let v: Value = serde_json::from_str(SAFETY_CONFIG_SCHEMA).unwrap();
    jsonschema::validator_for(&v).unwrap()
}

#[test]
fn templates_round_trip_through_the_schema() {
    let validator = schema();
    for want in &CANONICAL {
        let cfg = parse_rule_based(want.text).config().cloned().unwrap();
        let wire = serde_json::to_value(cfg.to_template()).unwrap();
        assert!(validator.is_valid(&wire), "{wire}");
        let back: TemplateConfig = serde_json::from_value(wire).unwrap();
        let again = SafetyConfig::from_template(&back, want.text).unwrap();
        assert_eq!(again, cfg);
    }
}

#[test]
fn schema_rejects_malformed_templates() {
    let validator = schema();
    let bad = [
        r#"{"type":"spatial_exclusion","obj":"","buffer":0,"vel max":null,"angular vel max":null}"#,
        r#"{"type":"spatial_exclusion","obj":"pool","buffer":0,"vel max":0.3,"angular vel max":null}"#,
        r#"{"type":"kinematic_modulation","obj":"","buffer":0,"vel max":null,"angular vel max":null}"#,
        r#"{"type":"hybrid","obj":"bed","buffer":-1,"vel max":0.3,"angular vel max":null}"#,
        r#"{"type":"teleport","obj":"bed","buffer":0,"vel max":0.3,"angular vel max":null}"#,
        r#"{"type":"hybrid","obj":"bed","buffer":0,"vel max":0.3}"#,
    ];
    for b in bad {
        let v: Value = serde_json::from_str(b).unwrap();
        assert!(!validator.is_valid(&v), "{b}");
    }
}

const OBJECTS: [&str; 6] = ["sofa", "bed", "pool", "desk", "stairs", "tree"];

proptest! {
    #[test]
    fn exclusion_grammar(obj in prop::sample::select(&OBJECTS[..]), verb in prop::sample::select(&["avoid the", "stay away from the", "do not go near the", "keep away from the"][..])) {
        let text = format!("{verb} {obj}");
        let cfg = parse_rule_based(&text).config().cloned().unwrap();
        prop_assert!(cfg.is_spatial());
        prop_assert!(semsafe_core::labels::match_label(&cfg.obj, obj), "{text}: {cfg:?}");
    }

    #[test]
    fn speed_caps_parse_exactly(tenths in 1u32..=15) {
        let v = tenths as f64 / 10.0;
        let text = format!("max speed {v}");
        let cfg = parse_rule_based(&text).config().cloned().unwrap();
        prop_assert_eq!(cfg.kind, semsafe_core::language::ConstraintKind::KinematicModulation);
        prop_assert_eq!(cfg.vel_max, Some(v));
    }

    #[test]
    fn buffers_in_meters_are_kept(cm in 5u32..=150, obj in prop::sample::select(&OBJECTS[..])) {
        let b = cm as f64 / 100.0;
        let text = format!("keep {b} m away from the {obj}");
        let cfg = parse_rule_based(&text).config().cloned().unwrap();
        prop_assert!((cfg.buffer - b).abs() < 1e-12, "{text}: {cfg:?}");
    }

    #[test]
    fn parser_never_panics(text in "\\PC{0,60}") {
        let out = parse_rule_based(&text);
        if let ParseOutcome::Parsed { config } = out {
            prop_assert!(config.validate(&Default::default()).is_ok());
        }
    }
}
