use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use layoutgen_bench::{corpus_tech, corpus_text, gate_row};
use layoutgen_core::dsl::parse_script;
use layoutgen_core::netlist::parse_top;
use layoutgen_core::place::{optimize_order, place_gate_row, place_transistor_rows};
use layoutgen_core::route::auto_route_net;
use layoutgen_core::verify::{run_drc, run_lvs};
use layoutgen_core::{run_text, PlacementConstraints};

fn ordering(c: &mut Criterion) {
    let tech = corpus_tech();
    let mut group = c.benchmark_group("optimize_order");
    for n in [6, 8, 10, 16] {
        let netlist = gate_row(&tech, n, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &netlist, |b, nl| {
            b.iter(|| optimize_order(black_box(nl), &tech, &PlacementConstraints::default()).unwrap())
        });
    }
    group.finish();

    let strongarm = parse_top(&corpus_text("netlists/strongarm.sp"))
        .unwrap()
        .with_supply_names(tech.supply_names.iter().cloned());
    c.bench_function("place_transistor_rows/strongarm", |b| {
        b.iter(|| place_transistor_rows(black_box(&strongarm), &tech, &PlacementConstraints::default()).unwrap())
    });
}

fn routing(c: &mut Criterion) {
    let tech = corpus_tech();
    let netlist = gate_row(&tech, 12, 3);
    let order: Vec<String> = netlist.devices.iter().map(|d| d.name.clone()).collect();
    let placed = place_gate_row(&netlist, &tech, &order).unwrap();
    let nets: Vec<String> = placed.pin_net_names().into_iter().collect();
    c.bench_function("auto_route/gate_row_12", |b| {
        b.iter(|| {
            let mut db = placed.clone();
            for net in &nets {
                if let Ok(out) = auto_route_net(&db, &tech, net) {
                    db = out.db;
                }
            }
            db
        })
    });
}

fn verification(c: &mut Criterion) {
    let tech = corpus_tech();
    let (session, _) = run_text(
        tech.clone(),
        &corpus_text("netlists/strongarm.sp"),
        &corpus_text("scripts/strongarm.dsl"),
    )
    .unwrap();
    let db = session.current();
    c.bench_function("drc/strongarm", |b| b.iter(|| run_drc(black_box(db), &tech)));
    c.bench_function("lvs/strongarm", |b| {
        b.iter(|| run_lvs(black_box(db), session.netlist(), &tech).unwrap())
    });
}

fn end_to_end(c: &mut Criterion) {
    let tech = corpus_tech();
    let mut group = c.benchmark_group("run_script");
    for (name, netlist, script) in [
        ("nand2", "netlists/nand2.sp", "scripts/nand2.dsl"),
        ("mux2", "netlists/mux2.sp", "scripts/mux2.dsl"),
        ("dff_optimized", "netlists/dff_reset.sp", "scripts/dff_optimized.dsl"),
    ] {
        let (n, s) = (corpus_text(netlist), corpus_text(script));
        group.bench_function(name, |b| b.iter(|| run_text(tech.clone(), &n, &s).unwrap()));
    }
    group.finish();

    let script = corpus_text("scripts/strongarm.dsl");
    c.bench_function("parse_script/strongarm", |b| b.iter(|| parse_script(black_box(&script)).unwrap()));
}

criterion_group!(benches, ordering, routing, verification, end_to_end);
criterion_main!(benches);
