//! Runs the shipped scenario suite and prints one line per episode plus the
//! per-method summary.
//!
//! cargo run --release -p semsafe-core --example suite -- [manifest] [trials]

use std::time::Instant;

use semsafe_core::harness::{run_batch, EpisodeOptions, Method};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let manifest = args.get(1).map(String::as_str).unwrap_or("scenarios/manifest.toml");
    let trials: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let t0 = Instant::now();
    let b = run_batch(manifest, &Method::ALL, trials, &EpisodeOptions::default()).expect("manifest");
    let mut recs = b.records.clone();
    recs.sort_by(|a, b| (&a.scenario, a.method, a.seed).cmp(&(&b.scenario, b.method, b.seed)));
    for r in &recs {
        let vmax = r.rows.iter().map(|s| s.state.v).fold(0.0f64, f64::max);
        let shield = r.rows.iter().filter(|s| s.intervened).count();
        println!(
            "{:<12} {:<13} seed {} {:<20?} t={:5.2} min_l_sem={:8.3} vmax={:.2} intervened={}/{}",
            r.scenario,
            r.method.as_str(),
            r.seed,
            r.outcome,
            r.duration,
            r.min_l_sem.min(999.0),
            vmax,
            shield,
            r.rows.len()
        );
    }
    for row in &b.summary.overall {
        println!(
            "{:<13} success {:.2} semantic {:.2} t/o-perc {:.2} t/o-filter {:.2} median {:.2} ms",
            row.method.as_str(),
            row.success_rate,
            row.semantic_safety_rate,
            row.timeout_perception_rate,
            row.timeout_safety_filter_rate,
            row.median_latency_ms
        );
    }
    for f in &b.failures {
        println!("failed: {} {} {}: {}", f.scenario, f.method, f.seed, f.message);
    }
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
}
