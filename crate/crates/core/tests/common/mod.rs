//! Independent oracles and generators shared by the integration tests.
//!
//! Nothing here calls into the placer, router or verifier internals: the
//! oracles work from raw layout geometry and template data only.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use layoutgen_core::tech::abs3ml;
use layoutgen_core::{Dir, LayoutDb, Technology};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::Deserialize;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[derive(Debug, Deserialize)]
pub struct Manifest {
    pub tech: String,
    pub designs: Vec<CorpusDesign>,
    pub ordering_pair: OrderingPair,
}

#[derive(Debug, Deserialize)]
pub struct CorpusDesign {
    pub design: String,
    pub netlist: String,
    pub scripts: Vec<String>,
    pub instances: usize,
    pub nets: usize,
}

#[derive(Debug, Deserialize)]
pub struct OrderingPair {
    pub baseline: String,
    pub optimized: String,
}

pub fn manifest() -> Manifest {
    let text = std::fs::read_to_string(corpus_dir().join("manifest.json")).expect("corpus manifest");
    serde_json::from_str(&text).expect("manifest parses")
}

pub fn corpus_text(rel: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn corpus_tech() -> Arc<Technology> {
    let m = manifest();
    Arc::new(Technology::from_json(&corpus_text(&m.tech)).expect("corpus tech"))
}

// ---------------------------------------------------------------------------
// Point-level geometry

/// A lattice point on a named layer.
pub type Node = (String, i64, i64);

fn wire_points(w: &layoutgen_core::WireSegment) -> Vec<(i64, i64)> {
    let (a, b) = (w.span.0.min(w.span.1), w.span.0.max(w.span.1));
    (a..=b)
        .map(|s| match w.dir {
            Dir::H => (s, w.track),
            Dir::V => (w.track, s),
        })
        .collect()
}

/// Which nets touch each lattice point, from wires, via landings and pins.
pub fn point_owners(db: &LayoutDb, tech: &Technology) -> BTreeMap<Node, BTreeSet<String>> {
    let mut owners: BTreeMap<Node, BTreeSet<String>> = BTreeMap::new();
    for w in &db.wires {
        for (x, y) in wire_points(w) {
            owners.entry((w.layer.clone(), x, y)).or_default().insert(w.net.clone());
        }
    }
    for v in &db.vias {
        for l in [&v.lower, &v.upper] {
            owners.entry((l.clone(), v.x, v.y)).or_default().insert(v.net.clone());
        }
    }
    for p in db.placed_pins(tech) {
        for pt in &p.points {
            owners.entry((pt.layer.clone(), pt.x, pt.y)).or_default().insert(p.net.clone());
        }
    }
    owners
}

/// Points claimed by more than one net. With unit pitch this is exactly a
/// breach of the one-unit gap between distinct nets on a track.
pub fn gap_violations(db: &LayoutDb, tech: &Technology) -> Vec<(Node, BTreeSet<String>)> {
    point_owners(db, tech).into_iter().filter(|(_, nets)| nets.len() > 1).collect()
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }
    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        self.0[a] = b;
    }
}

/// Geometry of one net, with a subset of wires or vias left out.
pub struct NetGraph {
    ids: HashMap<Node, usize>,
    dsu: Dsu,
    pins: Vec<usize>,
}

impl NetGraph {
    pub fn build(db: &LayoutDb, tech: &Technology, net: &str, skip_wire: Option<usize>, skip_via: Option<usize>) -> Self {
        let mut g = NetGraph {
            ids: HashMap::new(),
            dsu: Dsu::new(0),
            pins: Vec::new(),
        };
        let mut edges = Vec::new();
        for (i, w) in db.wires.iter().enumerate() {
            if w.net != net || Some(i) == skip_wire {
                continue;
            }
            let pts = wire_points(w);
            let ids: Vec<usize> = pts.iter().map(|&(x, y)| g.id((w.layer.clone(), x, y))).collect();
            edges.extend(ids.windows(2).map(|p| (p[0], p[1])));
        }
        for (i, v) in db.vias.iter().enumerate() {
            if v.net != net || Some(i) == skip_via {
                continue;
            }
            let a = g.id((v.lower.clone(), v.x, v.y));
            let b = g.id((v.upper.clone(), v.x, v.y));
            edges.push((a, b));
        }
        for p in db.placed_pins(tech) {
            if p.net != net {
                continue;
            }
            let ids: Vec<usize> = p.points.iter().map(|pt| g.id((pt.layer.clone(), pt.x, pt.y))).collect();
            edges.extend(ids.windows(2).map(|p| (p[0], p[1])));
            g.pins.push(ids[0]);
        }
        g.dsu = Dsu::new(g.ids.len());
        for (a, b) in edges {
            g.dsu.union(a, b);
        }
        g
    }

    fn id(&mut self, n: Node) -> usize {
        let next = self.ids.len();
        *self.ids.entry(n).or_insert(next)
    }

    /// All pins of the net share one component.
    pub fn pins_connected(&mut self) -> bool {
        let roots: BTreeSet<usize> = self.pins.clone().into_iter().map(|p| self.dsu.find(p)).collect();
        roots.len() <= 1
    }

    /// Every point of the net, pins and geometry, is one component.
    pub fn single_component(&mut self) -> bool {
        let n = self.ids.len();
        let roots: BTreeSet<usize> = (0..n).map(|i| self.dsu.find(i)).collect();
        roots.len() <= 1
    }
}

// ---------------------------------------------------------------------------
// Random netlists

/// Gate cells the generator draws from, with their signal pins in port order.
pub const GATE_CELLS: &[(&str, &[&str])] = &[
    ("INV", &["A", "ZN"]),
    ("BUF", &["A", "Z"]),
    ("NAND2", &["A1", "A2", "ZN"]),
    ("NOR2", &["A1", "A2", "ZN"]),
    ("AOI21", &["A1", "A2", "B", "ZN"]),
    ("TINV_L", &["A", "CK", "ZN"]),
];

#[derive(Debug, Clone)]
pub struct GateInst {
    pub name: String,
    pub cell: &'static str,
    /// (pin, net) in port order, supplies excluded.
    pub pins: Vec<(&'static str, String)>,
}

#[derive(Debug, Clone)]
pub struct GateDesign {
    pub insts: Vec<GateInst>,
    pub text: String,
}

pub fn random_gate_design<R: Rng>(rng: &mut R, n: usize) -> GateDesign {
    let pool = (n + 1).max(3);
    let mut insts = Vec::with_capacity(n);
    for i in 0..n {
        let &(cell, pins) = GATE_CELLS.choose(rng).expect("non-empty");
        let pins = pins
            .iter()
            .map(|&p| (p, format!("n{}", rng.random_range(0..pool))))
            .collect();
        insts.push(GateInst {
            name: format!("U{i}"),
            cell,
            pins,
        });
    }
    // Netlist order is shuffled so that it carries no hint of a good order.
    insts.shuffle(rng);
    let mut text = String::new();
    for (cell, pins) in GATE_CELLS {
        text.push_str(&format!(".SUBCKT {cell} {} VDD VSS\n.ENDS\n", pins.join(" ")));
    }
    text.push_str(".SUBCKT RANDTOP VDD VSS\n");
    for g in &insts {
        let nets: Vec<&str> = g.pins.iter().map(|(_, n)| n.as_str()).collect();
        text.push_str(&format!("X{} {} VDD VSS {}\n", g.name, nets.join(" "), g.cell));
    }
    text.push_str(".ENDS\n");
    // Instance names carry the X prefix in the parsed netlist.
    for g in &mut insts {
        g.name = format!("X{}", g.name);
    }
    GateDesign { insts, text }
}

pub fn random_transistor_text<R: Rng>(rng: &mut R, pairs: usize, extra: usize) -> String {
    let pool = (pairs + 2).max(3);
    let net = |rng: &mut R| format!("s{}", rng.random_range(0..pool));
    let mut text = String::from(".SUBCKT RANDMOS VDD VSS\n");
    for i in 0..pairs {
        let g = net(rng);
        let out = net(rng);
        let ps = if rng.random_bool(0.6) { "VDD".to_string() } else { net(rng) };
        let ns = if rng.random_bool(0.6) { "VSS".to_string() } else { net(rng) };
        text.push_str(&format!("MP{i} {out} {g} {ps} VDD pmos\n"));
        text.push_str(&format!("MN{i} {out} {g} {ns} VSS nmos\n"));
    }
    for i in 0..extra {
        let (d, g, s) = (net(rng), net(rng), net(rng));
        if rng.random_bool(0.5) {
            text.push_str(&format!("MQ{i} {d} {g} {s} VDD pmos\n"));
        } else {
            text.push_str(&format!("MQ{i} {d} {g} {s} VSS nmos\n"));
        }
    }
    text.push_str(".ENDS\n");
    text
}

// ---------------------------------------------------------------------------
// Ordering oracle

/// One instance reduced to a width and signal-pin offsets.
struct Block {
    width: i64,
    pins: Vec<(usize, i64, i64)>,
}

fn blocks(design: &GateDesign, tech: &Technology, supplies: &BTreeSet<String>) -> (Vec<Block>, usize) {
    let mut net_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for g in &design.insts {
        let t = &tech.templates[g.cell];
        let mut pins = Vec::new();
        for (pin, net) in &g.pins {
            if supplies.contains(net) {
                continue;
            }
            let ap = &t.pins[*pin][0];
            let next = net_ids.len();
            let id = *net_ids.entry(net.clone()).or_insert(next);
            pins.push((id, ap.1, ap.2));
        }
        out.push(Block { width: t.width, pins });
    }
    (out, net_ids.len())
}

fn cost(blocks: &[Block], nets: usize, order: &[usize]) -> i64 {
    let mut bb = vec![(i64::MAX, i64::MIN, i64::MAX, i64::MIN); nets];
    let mut x = 0;
    for &i in order {
        for &(n, dx, dy) in &blocks[i].pins {
            let b = &mut bb[n];
            b.0 = b.0.min(x + dx);
            b.1 = b.1.max(x + dx);
            b.2 = b.2.min(dy);
            b.3 = b.3.max(dy);
        }
        x += blocks[i].width;
    }
    bb.iter().filter(|b| b.0 <= b.1).map(|b| b.1 - b.0 + b.3 - b.2).sum()
}

fn supply_set(tech: &Technology) -> BTreeSet<String> {
    tech.supply_names.iter().cloned().collect()
}

/// HPWL of abutting the instances in `order` (by instance name) from x = 0.
pub fn order_hpwl(design: &GateDesign, tech: &Technology, order: &[String]) -> i64 {
    let (b, nets) = blocks(design, tech, &supply_set(tech));
    let idx: Vec<usize> = order
        .iter()
        .map(|n| design.insts.iter().position(|g| &g.name == n).expect("instance in design"))
        .collect();
    cost(&b, nets, &idx)
}

/// Minimum HPWL over every permutation (Heap's algorithm).
pub fn brute_force_min(design: &GateDesign, tech: &Technology) -> i64 {
    let (b, nets) = blocks(design, tech, &supply_set(tech));
    let n = b.len();
    let mut a: Vec<usize> = (0..n).collect();
    let mut best = cost(&b, nets, &a);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            best = best.min(cost(&b, nets, &a));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Stored optimum for one large ordering case.
#[derive(Debug, Clone, serde::Serialize, Deserialize)]
pub struct OrderFixture {
    pub seed: u64,
    pub netlist: String,
    pub optimum: i64,
}

pub const N10_FIXTURE: &str = "order_n10.json";
pub const N10_CASES: u64 = 24;
pub const N10_SEED_BASE: u64 = 10_000;

pub fn default_tech() -> Technology {
    abs3ml()
}

/// Rebuilds the oracle's view of a design from its netlist text, which is
/// all a stored fixture carries.
pub fn design_from_text(text: &str) -> GateDesign {
    let cells: BTreeMap<&str, &[&str]> = GATE_CELLS.iter().copied().collect();
    let mut insts = Vec::new();
    let mut in_top = false;
    for line in text.lines() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first() {
            Some(&".SUBCKT") => in_top = toks.get(1) == Some(&"RANDTOP"),
            Some(t) if in_top && t.starts_with('X') => {
                let (&cell, rest) = toks[1..].split_last().expect("cell name");
                let (&cell_key, &pins) = cells.get_key_value(cell).expect("known cell");
                insts.push(GateInst {
                    name: t.to_string(),
                    cell: cell_key,
                    pins: pins.iter().copied().zip(rest.iter().map(|s| s.to_string())).collect(),
                });
            }
            _ => {}
        }
    }
    GateDesign {
        insts,
        text: text.to_string(),
    }
}
