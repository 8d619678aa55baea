//! Track routing: one trunk per call, one branch per pin, vias at layer
//! changes.
//!
//! Occupancy is rebuilt from the layout on every call, so the layout is the
//! only state. Distinct nets may never share a point on the same layer track;
//! that single rule gives the one-unit spacing between neighbours.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::layout::{LayoutDb, Via, WireSegment};
use crate::tech::{Layer, Technology};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize)]
pub enum RouteError {
    #[error("{layer} track {track} interval [{}, {}] is claimed by net {other_net}", interval.0, interval.1)]
    Conflict {
        layer: String,
        track: i64,
        interval: (i64, i64),
        other_net: String,
    },
    #[error("pin {instance}.{pin} carries net {actual}, not {expected}")]
    PinNetMismatch {
        instance: String,
        pin: String,
        expected: String,
        actual: String,
    },
    #[error("net {0} has no placed pins")]
    UnknownNet(String),
    #[error("unknown instance {0}")]
    UnknownInstance(String),
    #[error("{instance} has no pin {pin} (or no access point {access})")]
    UnknownPin {
        instance: String,
        pin: String,
        access: usize,
    },
    #[error("unknown layer {0}")]
    UnknownLayer(String),
    #[error("layer {0} has no neighbouring layer to branch on")]
    NotPerpendicular(String),
    #[error("{layer}: coordinate {coord} is not on a track")]
    OffTrack { layer: String, coord: i64 },
    #[error("no conflict-free track found for net {0}")]
    Unroutable(String),
}

/// A pin named in a route request, optionally selecting an access point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PinRef {
    pub instance: String,
    pub pin: String,
    pub access: Option<usize>,
}

impl PinRef {
    pub fn new(instance: impl Into<String>, pin: impl Into<String>) -> Self {
        PinRef {
            instance: instance.into(),
            pin: pin.into(),
            access: None,
        }
    }
}

/// Claimed intervals per `(layer, track)`.
#[derive(Debug, Clone, Default)]
pub struct Occupancy {
    claims: BTreeMap<(String, i64), Vec<((i64, i64), String)>>,
}

impl Occupancy {
    /// Claims from every wire, via landing and pin access point of `db`.
    pub fn from_db(db: &LayoutDb, tech: &Technology) -> Occupancy {
        let mut occ = Occupancy::default();
        for w in &db.wires {
            occ.claim(&w.layer, w.track, w.span, &w.net);
        }
        for v in &db.vias {
            for name in [&v.lower, &v.upper] {
                if let Some(l) = tech.layer(name) {
                    occ.claim_point(l, (v.x, v.y), &v.net);
                }
            }
        }
        for pin in db.placed_pins(tech) {
            for p in &pin.points {
                if let Some(l) = tech.layer(&p.layer) {
                    occ.claim_point(l, (p.x, p.y), &pin.net);
                }
            }
        }
        occ
    }

    pub fn claim(&mut self, layer: &str, track: i64, span: (i64, i64), net: &str) {
        let span = (span.0.min(span.1), span.0.max(span.1));
        self.claims
            .entry((layer.to_string(), track))
            .or_default()
            .push((span, net.to_string()));
    }

    fn claim_point(&mut self, layer: &Layer, p: (i64, i64), net: &str) {
        let a = layer.along_coord(p);
        self.claim(&layer.name, layer.track_coord(p), (a, a), net);
    }

    /// First claim of another net that shares a point with `span`.
    pub fn blocker(&self, layer: &str, track: i64, span: (i64, i64), net: &str) -> Option<&str> {
        let (lo, hi) = (span.0.min(span.1), span.0.max(span.1));
        self.claims.get(&(layer.to_string(), track)).and_then(|v| {
            v.iter()
                .filter(|((a, b), n)| n != net && *a <= hi && lo <= *b)
                .map(|(_, n)| n.as_str())
                .min()
        })
    }

    fn check(&self, layer: &str, track: i64, span: (i64, i64), net: &str) -> Result<(), RouteError> {
        match self.blocker(layer, track, span, net) {
            None => Ok(()),
            Some(other) => Err(RouteError::Conflict {
                layer: layer.to_string(),
                track,
                interval: (span.0.min(span.1), span.0.max(span.1)),
                other_net: other.to_string(),
            }),
        }
    }
}

/// Geometry of one route call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoutePlan {
    pub net: String,
    pub trunk_layer: String,
    pub track: i64,
    /// `None` when every pin meets the trunk line at one point.
    pub trunk: Option<WireSegment>,
    pub branches: Vec<WireSegment>,
    pub vias: Vec<Via>,
}

impl RoutePlan {
    pub fn length(&self) -> i64 {
        self.trunk.iter().chain(&self.branches).map(WireSegment::length).sum()
    }

    /// Auto-routing cost: wire length plus one unit per via.
    pub fn score(&self) -> i64 {
        self.length() + self.vias.len() as i64
    }
}

/// Result of a route call: the new snapshot plus non-fatal notes.
#[derive(Debug, Clone)]
pub struct RouteOutcome {
    pub db: LayoutDb,
    pub plan: Option<RoutePlan>,
    pub warnings: Vec<String>,
}

struct ResolvedPin {
    layer: usize,
    at: (i64, i64),
}

fn resolve_pins(
    db: &LayoutDb,
    tech: &Technology,
    net: &str,
    pins: Option<&[PinRef]>,
) -> Result<Vec<ResolvedPin>, RouteError> {
    if !db.has_net(net) {
        return Err(RouteError::UnknownNet(net.to_string()));
    }
    let refs: Vec<PinRef> = match pins {
        Some(p) if !p.is_empty() => p.to_vec(),
        _ => db.net_pins(net).into_iter().map(|(i, p)| PinRef::new(i, p)).collect(),
    };
    let mut out = Vec::new();
    for r in &refs {
        let inst = db
            .instances
            .get(&r.instance)
            .or_else(|| db.instances.values().find(|i| i.name.eq_ignore_ascii_case(&r.instance)))
            .ok_or_else(|| RouteError::UnknownInstance(r.instance.clone()))?;
        let access = r.access.unwrap_or(0);
        let unknown = || RouteError::UnknownPin {
            instance: inst.name.clone(),
            pin: r.pin.clone(),
            access,
        };
        let (pin, actual) = inst
            .pin_nets
            .iter()
            .find(|(p, _)| p.eq_ignore_ascii_case(&r.pin))
            .ok_or_else(unknown)?;
        if actual != net {
            return Err(RouteError::PinNetMismatch {
                instance: inst.name.clone(),
                pin: pin.clone(),
                expected: net.to_string(),
                actual: actual.clone(),
            });
        }
        let template = tech.template(&inst.template).ok_or_else(unknown)?;
        let points = template.resolve_pin(pin, inst.origin, inst.orient).map_err(|_| unknown())?;
        let p = points.get(access).ok_or_else(unknown)?;
        let layer = tech.layer_index(&p.layer).ok_or_else(|| RouteError::UnknownLayer(p.layer.clone()))?;
        out.push(ResolvedPin { layer, at: (p.x, p.y) });
    }
    Ok(out)
}

fn via_stack(tech: &Technology, net: &str, from: usize, to: usize, at: (i64, i64), vias: &mut Vec<Via>) {
    let (lo, hi) = (from.min(to), from.max(to));
    for k in lo..hi {
        vias.push(Via {
            net: net.to_string(),
            lower: tech.layers[k].name.clone(),
            upper: tech.layers[k + 1].name.clone(),
            x: at.0,
            y: at.1,
        });
    }
}

fn build_plan(
    tech: &Technology,
    net: &str,
    trunk_index: usize,
    track: i64,
    pins: &[ResolvedPin],
) -> Result<RoutePlan, RouteError> {
    let trunk = &tech.layers[trunk_index];
    if !trunk.is_track(track) {
        return Err(RouteError::OffTrack {
            layer: trunk.name.clone(),
            coord: track,
        });
    }
    let mut branches = Vec::new();
    let mut vias = Vec::new();
    let mut along = Vec::new();
    for pin in pins {
        if pin.layer == trunk_index && trunk.track_coord(pin.at) == track {
            along.push(trunk.along_coord(pin.at));
            continue;
        }
        let branch_index = if pin.layer < trunk_index || (pin.layer == trunk_index && trunk_index > 0) {
            trunk_index.checked_sub(1)
        } else {
            Some(trunk_index + 1).filter(|&i| i < tech.layers.len())
        }
        .ok_or_else(|| RouteError::NotPerpendicular(trunk.name.clone()))?;
        let branch = &tech.layers[branch_index];
        if branch.direction == trunk.direction {
            return Err(RouteError::NotPerpendicular(trunk.name.clone()));
        }
        let btrack = branch.track_coord(pin.at);
        if !branch.is_track(btrack) {
            return Err(RouteError::OffTrack {
                layer: branch.name.clone(),
                coord: btrack,
            });
        }
        via_stack(tech, net, pin.layer, branch_index, pin.at, &mut vias);
        let start = branch.along_coord(pin.at);
        if start != track {
            branches.push(WireSegment {
                net: net.to_string(),
                layer: branch.name.clone(),
                dir: branch.direction,
                track: btrack,
                span: (start.min(track), start.max(track)),
            });
        }
        let junction = trunk.point(track, btrack);
        via_stack(tech, net, branch_index, trunk_index, junction, &mut vias);
        along.push(btrack);
    }
    let lo = along.iter().copied().min().unwrap_or(0);
    let hi = along.iter().copied().max().unwrap_or(0);
    let trunk_seg = (hi > lo).then(|| WireSegment {
        net: net.to_string(),
        layer: trunk.name.clone(),
        dir: trunk.direction,
        track,
        span: (lo, hi),
    });
    vias.sort_by(|a, b| (&a.lower, a.x, a.y).cmp(&(&b.lower, b.x, b.y)));
    vias.dedup();
    branches.sort_by(|a, b| (&a.layer, a.track, a.span).cmp(&(&b.layer, b.track, b.span)));
    branches.dedup();
    Ok(RoutePlan {
        net: net.to_string(),
        trunk_layer: trunk.name.clone(),
        track,
        trunk: trunk_seg,
        branches,
        vias,
    })
}

fn check_plan(occ: &Occupancy, tech: &Technology, plan: &RoutePlan) -> Result<(), RouteError> {
    for w in plan.trunk.iter().chain(&plan.branches) {
        occ.check(&w.layer, w.track, w.span, &plan.net)?;
    }
    for v in &plan.vias {
        for name in [&v.lower, &v.upper] {
            let l = tech.layer(name).expect("plan uses known layers");
            let a = l.along_coord((v.x, v.y));
            occ.check(&l.name, l.track_coord((v.x, v.y)), (a, a), &plan.net)?;
        }
    }
    Ok(())
}

fn apply_plan(db: &LayoutDb, plan: &RoutePlan) -> LayoutDb {
    db.with_geometry(
        plan.trunk.iter().chain(&plan.branches).cloned(),
        plan.vias.iter().cloned(),
    )
}

fn single_pin(db: &LayoutDb, net: &str, count: usize) -> RouteOutcome {
    RouteOutcome {
        db: db.clone(),
        plan: None,
        warnings: vec![format!("net {net} has {count} pin(s); nothing to connect")],
    }
}

/// Computes the geometry of a trunk route without touching `db`.
pub fn plan_via_track(
    db: &LayoutDb,
    tech: &Technology,
    net: &str,
    trunk_layer: &str,
    track: i64,
    pins: Option<&[PinRef]>,
) -> Result<RoutePlan, RouteError> {
    let trunk_index = tech
        .layer_index(trunk_layer)
        .ok_or_else(|| RouteError::UnknownLayer(trunk_layer.to_string()))?;
    let resolved = resolve_pins(db, tech, net, pins)?;
    build_plan(tech, net, trunk_index, track, &resolved)
}

/// Routes `net` with a trunk on `trunk_layer` at `track`.
///
/// `pins` defaults to every pin of the net. Fewer than two pins is not an
/// error: the layout is returned unchanged with a warning.
pub fn route_via_track(
    db: &LayoutDb,
    tech: &Technology,
    net: &str,
    trunk_layer: &str,
    track: i64,
    pins: Option<&[PinRef]>,
) -> Result<RouteOutcome, RouteError> {
    let trunk_index = tech
        .layer_index(trunk_layer)
        .ok_or_else(|| RouteError::UnknownLayer(trunk_layer.to_string()))?;
    let resolved = resolve_pins(db, tech, net, pins)?;
    if resolved.len() < 2 {
        return Ok(single_pin(db, net, resolved.len()));
    }
    let plan = build_plan(tech, net, trunk_index, track, &resolved)?;
    check_plan(&Occupancy::from_db(db, tech), tech, &plan)?;
    Ok(RouteOutcome {
        db: apply_plan(db, &plan),
        plan: Some(plan),
        warnings: Vec::new(),
    })
}

/// Window half-width first tried by [`auto_route_net`], and the widest.
pub const AUTO_MARGIN: i64 = 2;
pub const AUTO_MARGIN_MAX: i64 = 6;

/// Candidate `(layer index, track)` pairs for a window of `margin`.
///
/// Trunks run on layers perpendicular to the pins' layers (every layer when
/// pin directions are mixed) over the pin bounding box widened by `margin`.
/// When all pins sit on one track of one layer, that track is a candidate
/// too, which allows a single straight segment.
pub fn auto_candidates(tech: &Technology, pins: &[(usize, (i64, i64))], margin: i64) -> Vec<(usize, i64)> {
    let mut out = Vec::new();
    let Some(&(first_layer, first_at)) = pins.first() else {
        return out;
    };
    let dirs: Vec<_> = pins.iter().map(|(l, _)| tech.layers[*l].direction).collect();
    let mixed = dirs.iter().any(|d| *d != dirs[0]);
    for (i, layer) in tech.layers.iter().enumerate() {
        if !mixed && layer.direction == dirs[0] {
            continue;
        }
        let coords = pins.iter().map(|(_, p)| layer.track_coord(*p));
        let lo = coords.clone().min().unwrap() - margin;
        let hi = coords.max().unwrap() + margin;
        out.extend((lo..=hi).filter(|t| layer.is_track(*t)).map(|t| (i, t)));
    }
    let home = &tech.layers[first_layer];
    let t = home.track_coord(first_at);
    if pins.iter().all(|(l, p)| *l == first_layer && home.track_coord(*p) == t) {
        out.push((first_layer, t));
    }
    out.sort();
    out.dedup();
    out
}

/// Picks the cheapest conflict-free trunk and routes on it.
pub fn auto_route_net(db: &LayoutDb, tech: &Technology, net: &str) -> Result<RouteOutcome, RouteError> {
    let resolved = resolve_pins(db, tech, net, None)?;
    if resolved.len() < 2 {
        return Ok(single_pin(db, net, resolved.len()));
    }
    let occ = Occupancy::from_db(db, tech);
    let pins: Vec<(usize, (i64, i64))> = resolved.iter().map(|p| (p.layer, p.at)).collect();
    for margin in AUTO_MARGIN..=AUTO_MARGIN_MAX {
        let mut best: Option<(i64, usize, i64, RoutePlan)> = None;
        for (layer, track) in auto_candidates(tech, &pins, margin) {
            let Ok(plan) = build_plan(tech, net, layer, track, &resolved) else {
                continue;
            };
            if check_plan(&occ, tech, &plan).is_err() {
                continue;
            }
            let key = (plan.score(), layer, track);
            if best.as_ref().is_none_or(|(s, l, t, _)| key < (*s, *l, *t)) {
                best = Some((key.0, key.1, key.2, plan));
            }
        }
        if let Some((_, _, _, plan)) = best {
            return Ok(RouteOutcome {
                db: apply_plan(db, &plan),
                plan: Some(plan),
                warnings: Vec::new(),
            });
        }
    }
    Err(RouteError::Unroutable(net.to_string()))
}

/// Removes every wire and via of `net`.
pub fn unroute_net(db: &LayoutDb, net: &str) -> LayoutDb {
    db.without_net_geometry(net)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Wirelength {
    pub per_net: BTreeMap<String, i64>,
    /// Sum over signal nets only.
    pub total: i64,
    pub via_count: usize,
}

/// Routed length per net in grid units. Vias are counted, not added.
pub fn routed_wirelength(db: &LayoutDb, tech: &Technology) -> Wirelength {
    let mut per_net: BTreeMap<String, i64> = BTreeMap::new();
    for w in &db.wires {
        *per_net.entry(w.net.clone()).or_default() += w.length();
    }
    for v in &db.vias {
        per_net.entry(v.net.clone()).or_default();
    }
    let total = per_net.iter().filter(|(n, _)| !tech.is_supply(n)).map(|(_, l)| l).sum();
    Wirelength {
        per_net,
        total,
        via_count: db.vias.len(),
    }
}
