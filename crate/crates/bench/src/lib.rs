//! Inputs shared by the benchmarks: corpus files and seeded gate rows.

use std::path::PathBuf;
use std::sync::Arc;

use layoutgen_core::netlist::parse_top;
use layoutgen_core::{Netlist, Technology};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(rel)
}

pub fn corpus_text(rel: &str) -> String {
    std::fs::read_to_string(corpus_path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn corpus_tech() -> Arc<Technology> {
    Arc::new(Technology::from_json(&corpus_text("abs3ml.json")).expect("corpus technology"))
}

const CELLS: &[(&str, &[&str])] = &[
    ("INV", &["A", "ZN"]),
    ("NAND2", &["A1", "A2", "ZN"]),
    ("NOR2", &["A1", "A2", "ZN"]),
    ("AOI21", &["A1", "A2", "B", "ZN"]),
];

/// A gate-level row of `n` random cells over `n + 1` nets.
pub fn gate_row(tech: &Technology, n: usize, seed: u64) -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for (cell, pins) in CELLS {
        text.push_str(&format!(".SUBCKT {cell} {} VDD VSS\n.ENDS\n", pins.join(" ")));
    }
    text.push_str(".SUBCKT ROW VDD VSS\n");
    for i in 0..n {
        let (cell, pins) = CELLS.choose(&mut rng).expect("cells");
        let nets: Vec<String> = pins.iter().map(|_| format!("n{}", rng.random_range(0..=n))).collect();
        text.push_str(&format!("XU{i:02} {} VDD VSS {cell}\n", nets.join(" ")));
    }
    text.push_str(".ENDS\n");
    parse_top(&text)
        .expect("generated netlist")
        .with_supply_names(tech.supply_names.iter().cloned())
}
