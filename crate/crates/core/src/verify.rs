//! Grid design-rule checks and connectivity comparison against the netlist.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::layout::LayoutDb;
use crate::netlist::Netlist;
use crate::route::{routed_wirelength, Wirelength};
use crate::tech::{Dir, Technology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum DrcRule {
    #[serde(rename = "R1_OFFGRID")]
    OffGrid,
    #[serde(rename = "R2_DIRECTION")]
    Direction,
    #[serde(rename = "R3_SPACING")]
    Spacing,
    #[serde(rename = "R4_VIA")]
    Via,
    #[serde(rename = "R5_OVERLAP")]
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DrcViolation {
    pub rule: DrcRule,
    pub layer: Option<String>,
    pub x: i64,
    pub y: i64,
    pub instances: Vec<String>,
    pub detail: String,
}

impl DrcViolation {
    fn at(rule: DrcRule, layer: &str, (x, y): (i64, i64), detail: String) -> Self {
        DrcViolation {
            rule,
            layer: Some(layer.to_string()),
            x,
            y,
            instances: Vec::new(),
            detail,
        }
    }
}

/// A claim on one line of one layer: `(start, end, net)`.
type LineClaims = BTreeMap<(String, Dir, i64), Vec<(i64, i64, String)>>;

fn line_claims(db: &LayoutDb, tech: &Technology) -> LineClaims {
    let mut lines: LineClaims = BTreeMap::new();
    let mut point = |layer: &str, (x, y): (i64, i64), net: &str| {
        let canonical = tech.layer(layer).map_or(layer, |l| l.name.as_str()).to_string();
        // A point lies on both the vertical and the horizontal line through it.
        lines.entry((canonical.clone(), Dir::V, x)).or_default().push((y, y, net.to_string()));
        lines.entry((canonical, Dir::H, y)).or_default().push((x, x, net.to_string()));
    };
    for v in &db.vias {
        point(&v.lower, (v.x, v.y), &v.net);
        point(&v.upper, (v.x, v.y), &v.net);
    }
    for p in db.placed_pins(tech) {
        for a in &p.points {
            point(&a.layer, (a.x, a.y), &p.net);
        }
    }
    for w in &db.wires {
        let layer = tech.layer(&w.layer).map_or(w.layer.as_str(), |l| l.name.as_str());
        lines
            .entry((layer.to_string(), w.dir, w.track))
            .or_default()
            .push((w.span.0, w.span.1, w.net.clone()));
    }
    lines
}

/// Runs R1 through R5 and returns every violation in a stable order.
pub fn run_drc(db: &LayoutDb, tech: &Technology) -> Vec<DrcViolation> {
    let mut out = Vec::new();
    for w in &db.wires {
        let start = match w.dir {
            Dir::V => (w.track, w.span.0),
            Dir::H => (w.span.0, w.track),
        };
        let Some(layer) = tech.layer(&w.layer) else {
            out.push(DrcViolation::at(DrcRule::OffGrid, &w.layer, start, format!("unknown layer {}", w.layer)));
            continue;
        };
        if w.dir != layer.direction {
            out.push(DrcViolation::at(
                DrcRule::Direction,
                &layer.name,
                start,
                format!("net {} runs {} on a {} layer", w.net, w.dir, layer.direction),
            ));
        } else if !layer.is_track(w.track) {
            out.push(DrcViolation::at(
                DrcRule::OffGrid,
                &layer.name,
                start,
                format!("net {} on coordinate {} which is not a track", w.net, w.track),
            ));
        }
        if w.span.0 > w.span.1 {
            out.push(DrcViolation::at(DrcRule::OffGrid, &layer.name, start, format!("net {} has a reversed span", w.net)));
        }
    }

    for ((layer, dir, line), claims) in line_claims(db, tech) {
        let mut claims = claims;
        claims.sort();
        let mut reported: BTreeSet<(i64, String, String)> = BTreeSet::new();
        // Sweep: compare each claim with the furthest-reaching earlier claim
        // of every other net.
        let mut reach: BTreeMap<String, i64> = BTreeMap::new();
        for (a, b, net) in &claims {
            for (other, end) in &reach {
                if other != net && *end >= *a {
                    let (n1, n2) = if other < net { (other, net) } else { (net, other) };
                    if reported.insert((*a, n1.clone(), n2.clone())) {
                        let at = match dir {
                            Dir::V => (line, *a),
                            Dir::H => (*a, line),
                        };
                        out.push(DrcViolation::at(
                            DrcRule::Spacing,
                            &layer,
                            at,
                            format!("nets {n1} and {n2} touch"),
                        ));
                    }
                }
            }
            let e = reach.entry(net.clone()).or_insert(*b);
            *e = (*e).max(*b);
        }
    }

    for v in &db.vias {
        let ok = match (tech.layer_index(&v.lower), tech.layer_index(&v.upper)) {
            (Some(lo), Some(hi)) => {
                hi == lo + 1
                    && tech.has_via(&v.lower, &v.upper)
                    && tech.layers[lo].on_track((v.x, v.y))
                    && tech.layers[hi].on_track((v.x, v.y))
            }
            _ => false,
        };
        if !ok {
            out.push(DrcViolation::at(
                DrcRule::Via,
                &v.lower,
                (v.x, v.y),
                format!("via {}/{} of net {} is illegal here", v.lower, v.upper, v.net),
            ));
        }
    }

    let insts: Vec<_> = db.instances.values().collect();
    for (i, a) in insts.iter().enumerate() {
        for b in &insts[i + 1..] {
            if a.overlaps(b) {
                out.push(DrcViolation {
                    rule: DrcRule::Overlap,
                    layer: None,
                    x: a.origin.0.max(b.origin.0),
                    y: a.origin.1.max(b.origin.1),
                    instances: vec![a.name.clone(), b.name.clone()],
                    detail: format!("{} overlaps {}", a.name, b.name),
                });
            }
        }
    }
    out.sort();
    // A point claim sits on two lines, so a touch can be seen twice.
    out.dedup();
    out
}

/// One geometric net.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Component {
    /// Nets carried by pins and labels in the component.
    pub nets: BTreeSet<String>,
    pub pins: Vec<(String, String)>,
    /// Indices into `db.wires` and `db.vias`.
    pub wires: Vec<usize>,
    pub vias: Vec<usize>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

enum Node {
    Wire(usize),
    Via(usize),
    Pin(String, String, String),
    Label(String),
}

/// Groups wires, vias, pins and labels into connected components.
///
/// Objects on the same layer connect when they share a point; vias join
/// their two layers; all access points of one pin are one object.
pub fn extract_connectivity(db: &LayoutDb, tech: &Technology) -> Vec<Component> {
    let mut nodes = Vec::new();
    let mut lines: BTreeMap<(String, Dir, i64), Vec<(i64, i64, usize)>> = BTreeMap::new();
    let canon = |layer: &str| tech.layer(layer).map_or(layer, |l| l.name.as_str()).to_string();
    let add_point = |lines: &mut BTreeMap<_, Vec<_>>, layer: &str, (x, y): (i64, i64), id: usize| {
        lines.entry((canon(layer), Dir::V, x)).or_default().push((y, y, id));
        lines.entry((canon(layer), Dir::H, y)).or_default().push((x, x, id));
    };
    for (i, w) in db.wires.iter().enumerate() {
        let id = nodes.len();
        nodes.push(Node::Wire(i));
        lines
            .entry((canon(&w.layer), w.dir, w.track))
            .or_default()
            .push((w.span.0.min(w.span.1), w.span.0.max(w.span.1), id));
    }
    for (i, v) in db.vias.iter().enumerate() {
        let id = nodes.len();
        nodes.push(Node::Via(i));
        add_point(&mut lines, &v.lower, (v.x, v.y), id);
        add_point(&mut lines, &v.upper, (v.x, v.y), id);
    }
    for p in db.placed_pins(tech) {
        let id = nodes.len();
        nodes.push(Node::Pin(p.instance.clone(), p.pin.clone(), p.net.clone()));
        for a in &p.points {
            add_point(&mut lines, &a.layer, (a.x, a.y), id);
        }
    }
    for l in &db.labels {
        let id = nodes.len();
        nodes.push(Node::Label(l.net.clone()));
        add_point(&mut lines, &l.layer, (l.x, l.y), id);
    }

    let mut uf = UnionFind((0..nodes.len()).collect());
    for claims in lines.values_mut() {
        claims.sort();
        let mut open: Option<(i64, usize)> = None;
        for &(a, b, id) in claims.iter() {
            match open {
                Some((end, rep)) if a <= end => {
                    uf.union(rep, id);
                    open = Some((end.max(b), rep));
                }
                _ => open = Some((b, id)),
            }
        }
    }

    let mut groups: BTreeMap<usize, Component> = BTreeMap::new();
    for (id, node) in nodes.iter().enumerate() {
        let c = groups.entry(uf.find(id)).or_default();
        match node {
            Node::Wire(i) => c.wires.push(*i),
            Node::Via(i) => c.vias.push(*i),
            Node::Pin(inst, pin, net) => {
                c.pins.push((inst.clone(), pin.clone()));
                c.nets.insert(net.clone());
            }
            Node::Label(net) => {
                c.nets.insert(net.clone());
            }
        }
    }
    let mut out: Vec<Component> = groups.into_values().collect();
    for c in &mut out {
        c.pins.sort();
    }
    out.sort_by(|a, b| (&a.pins, &a.wires, &a.vias).cmp(&(&b.pins, &b.wires, &b.vias)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Match,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LvsReport {
    pub verdict: Verdict,
    /// `(net, component count)` for nets split across components.
    pub opens: Vec<(String, usize)>,
    pub shorts: Vec<Vec<String>>,
    /// Nets with fewer than two placed pins.
    pub unresolved: Vec<String>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize)]
pub enum VerifyError {
    #[error("instance {instance}: {detail}")]
    NetlistBinding { instance: String, detail: String },
}

fn check_binding(db: &LayoutDb, netlist: &Netlist) -> Result<(), VerifyError> {
    for inst in db.instances.values() {
        let err = |detail: String| VerifyError::NetlistBinding {
            instance: inst.name.clone(),
            detail,
        };
        let device = netlist
            .device(&inst.name)
            .ok_or_else(|| err(format!("not a device of {}", netlist.name)))?;
        for (pin, net) in &inst.pin_nets {
            match device.net_of(pin) {
                Some(n) if n == net => {}
                Some(n) => return Err(err(format!("pin {pin} is on {net} in the layout but {n} in the netlist"))),
                None => return Err(err(format!("device has no terminal {pin}"))),
            }
        }
    }
    Ok(())
}

/// Compares layout connectivity with the netlist.
pub fn run_lvs(db: &LayoutDb, netlist: &Netlist, tech: &Technology) -> Result<LvsReport, VerifyError> {
    check_binding(db, netlist)?;
    let components = extract_connectivity(db, tech);
    let mut pin_count: BTreeMap<String, usize> = netlist.nets.iter().map(|n| (n.clone(), 0)).collect();
    for inst in db.instances.values() {
        for net in inst.pin_nets.values() {
            *pin_count.entry(net.clone()).or_default() += 1;
        }
    }
    let mut spread: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &components {
        let mut seen = BTreeSet::new();
        for (inst, pin) in &c.pins {
            let net = &db.instances[inst].pin_nets[pin];
            if seen.insert(net.as_str()) {
                *spread.entry(net.as_str()).or_default() += 1;
            }
        }
    }
    let mut opens = Vec::new();
    let mut unresolved = Vec::new();
    for (net, &count) in &pin_count {
        if count < 2 {
            unresolved.push(net.clone());
        } else if let Some(&k) = spread.get(net.as_str()).filter(|k| **k > 1) {
            opens.push((net.clone(), k));
        }
    }
    let mut shorts: Vec<Vec<String>> = components
        .iter()
        .filter(|c| c.nets.len() > 1)
        .map(|c| c.nets.iter().cloned().collect())
        .collect();
    shorts.sort();
    shorts.dedup();
    let verdict = if opens.is_empty() && shorts.is_empty() {
        Verdict::Match
    } else {
        Verdict::Mismatch
    };
    Ok(LvsReport {
        verdict,
        opens,
        shorts,
        unresolved,
    })
}

/// Everything a finished session reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub drc: Vec<DrcViolation>,
    pub lvs: LvsReport,
    pub wirelength: Wirelength,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.drc.is_empty() && self.lvs.verdict == Verdict::Match
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&value).expect("report serializes") + "\n"
    }
}

pub fn verify(db: &LayoutDb, netlist: &Netlist, tech: &Technology) -> Result<VerifyReport, VerifyError> {
    Ok(VerifyReport {
        drc: run_drc(db, tech),
        lvs: run_lvs(db, netlist, tech)?,
        wirelength: routed_wirelength(db, tech),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Via, WireSegment};
    use crate::route::route_via_track;
    use crate::route::tests::{pin_tech, pins_db};
    use crate::tech::Orient;

    fn wire(net: &str, layer: &str, dir: Dir, track: i64, span: (i64, i64)) -> WireSegment {
        WireSegment {
            net: net.into(),
            layer: layer.into(),
            dir,
            track,
            span,
        }
    }

    fn two_pin_netlist() -> Netlist {
        crate::netlist::parse_spice(
            ".SUBCKT P P\n.ENDS\n.SUBCKT C\nXa n P\nXb n P\nXc m P\nXd m P\n.ENDS\n",
        )
        .unwrap()
        .pop()
        .unwrap()
    }

    #[test]
    fn empty_is_clean() {
        assert!(run_drc(&LayoutDb::new("t", "e"), &pin_tech()).is_empty());
    }

    #[test]
    fn spacing_touch_vs_gap() {
        let tech = pin_tech();
        let legal = LayoutDb::new("t", "c").with_geometry(
            [wire("a", "M2", Dir::H, 5, (0, 3)), wire("b", "M2", Dir::H, 5, (4, 6))],
            [],
        );
        assert!(run_drc(&legal, &tech).is_empty());
        let touching = LayoutDb::new("t", "c").with_geometry(
            [wire("a", "M2", Dir::H, 5, (0, 3)), wire("b", "M2", Dir::H, 5, (3, 6))],
            [],
        );
        let v = run_drc(&touching, &tech);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, DrcRule::Spacing);
        assert_eq!((v[0].x, v[0].y), (3, 5));
    }

    #[test]
    fn direction_grid_via_overlap_rules() {
        let tech = pin_tech();
        let db = LayoutDb::new("t", "c").with_geometry(
            [wire("a", "M1", Dir::H, 0, (0, 2))],
            [Via {
                net: "a".into(),
                lower: "M1".into(),
                upper: "M3".into(),
                x: 0,
                y: 0,
            }],
        );
        let rules: Vec<_> = run_drc(&db, &tech).iter().map(|v| v.rule).collect();
        assert!(rules.contains(&DrcRule::Direction));
        assert!(rules.contains(&DrcRule::Via));

        let t = pin_tech();
        let db = pins_db(&t, &[("a", 0, 1, "n")]);
        let mut clash = db.instances["a"].clone();
        clash.name = "b".into();
        let mut db2 = db.clone();
        db2.instances.insert("b".into(), clash);
        assert_eq!(run_drc(&db2, &t)[0].rule, DrcRule::Overlap);
        assert!(db.place_instance(&t, "c", "P", (1, 0), Orient::R0, [("P".into(), "n".into())].into()).is_ok());
    }

    #[test]
    fn connectivity_and_lvs() {
        let tech = pin_tech();
        let netlist = two_pin_netlist();
        let db = pins_db(&tech, &[("Xa", 0, 1, "n"), ("Xb", 4, 1, "n"), ("Xc", 0, 8, "m"), ("Xd", 4, 8, "m")]);
        let r = run_lvs(&db, &netlist, &tech).unwrap();
        assert_eq!(r.opens, vec![("m".to_string(), 2), ("n".to_string(), 2)]);

        let db = route_via_track(&db, &tech, "n", "M2", 3, None).unwrap().db;
        let db = route_via_track(&db, &tech, "m", "M2", 6, None).unwrap().db;
        let comps = extract_connectivity(&db, &tech);
        assert_eq!(comps.len(), 2);
        assert!(run_drc(&db, &tech).is_empty());
        let r = run_lvs(&db, &netlist, &tech).unwrap();
        assert_eq!(r.verdict, Verdict::Match);

        // Cut the trunk of n.
        let trunk = db.wires.iter().position(|w| w.net == "n" && w.layer == "M2").unwrap();
        let cut = db.without_wire(trunk);
        let r = run_lvs(&cut, &netlist, &tech).unwrap();
        assert_eq!(r.opens, vec![("n".to_string(), 2)]);
        assert_eq!(r.verdict, Verdict::Mismatch);

        // Bridge the two nets on M1 x=0.
        let bridged = db.with_geometry([wire("n", "M1", Dir::V, 0, (3, 6))], []);
        let r = run_lvs(&bridged, &netlist, &tech).unwrap();
        assert_eq!(r.shorts, vec![vec!["m".to_string(), "n".to_string()]]);
    }

    #[test]
    fn binding_errors() {
        let tech = pin_tech();
        let netlist = two_pin_netlist();
        let db = pins_db(&tech, &[("Xa", 0, 1, "m")]);
        assert!(run_lvs(&db, &netlist, &tech).is_err());
        let db = pins_db(&tech, &[("Xq", 0, 1, "n")]);
        assert!(run_lvs(&db, &netlist, &tech).is_err());
    }

    #[test]
    fn unresolved_nets() {
        let tech = pin_tech();
        let netlist = two_pin_netlist();
        let db = pins_db(&tech, &[("Xa", 0, 1, "n")]);
        let r = run_lvs(&db, &netlist, &tech).unwrap();
        assert_eq!(r.verdict, Verdict::Match);
        assert_eq!(r.unresolved, vec!["m".to_string(), "n".to_string()]);
        let json = verify(&db, &netlist, &tech).unwrap().to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["lvs"]["verdict"], "MATCH");
        assert!(v["wirelength"]["total"].is_number());
    }
}
