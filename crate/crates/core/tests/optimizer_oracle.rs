mod common;

use common::*;
use layoutgen_core::netlist::parse_top;
use layoutgen_core::place::optimize_order;
use layoutgen_core::{OrderMethod, PlacementConstraints};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn optimized(design: &GateDesign) -> layoutgen_core::OrderResult {
    let tech = default_tech();
    let netlist = parse_top(&design.text)
        .unwrap()
        .with_supply_names(tech.supply_names.iter().cloned());
    optimize_order(&netlist, &tech, &PlacementConstraints::default()).unwrap()
}

#[test]
fn small_rows_match_brute_force() {
    let tech = default_tech();
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = random_gate_design(&mut rng, 2 + (seed as usize % 5));
        let r = optimized(&design);
        assert_eq!(r.method, OrderMethod::Exhaustive);
        assert_eq!(r.hpwl_after, brute_force_min(&design, &tech), "seed {seed}");
        assert_eq!(order_hpwl(&design, &tech, &r.order), r.hpwl_after, "seed {seed}");
    }
}

#[test]
fn stored_n10_fixture_is_well_formed() {
    let text = std::fs::read_to_string(fixture_dir().join(N10_FIXTURE)).unwrap();
    let cases: Vec<OrderFixture> = serde_json::from_str(&text).unwrap();
    assert!(cases.len() >= 20);
    for c in &cases {
        assert_eq!(design_from_text(&c.netlist).insts.len(), 10, "seed {}", c.seed);
        assert!(c.optimum >= 0);
    }
}

/// Rewrites the stored optimum table. Slow (ten factorial orders per case):
/// `cargo test --release -p layoutgen-core --test optimizer_oracle -- --ignored`.
#[test]
#[ignore]
fn regenerate_n10_fixture() {
    let tech = default_tech();
    let mut cases = Vec::new();
    for k in 0..N10_CASES {
        let seed = N10_SEED_BASE + k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = random_gate_design(&mut rng, 10);
        let optimum = brute_force_min(&design, &tech);
        cases.push(OrderFixture {
            seed,
            netlist: design.text,
            optimum,
        });
    }
    let dir = fixture_dir();
    std::fs::create_dir_all(&dir).unwrap();
    let json = serde_json::to_string_pretty(&cases).unwrap();
    std::fs::write(dir.join(N10_FIXTURE), json + "\n").unwrap();
}
