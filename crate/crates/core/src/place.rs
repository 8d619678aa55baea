//! Automatic placement and instance-order optimization.
//!
//! Transistor-level netlists are placed as an NMOS row at `y = 0` with a
//! mirrored PMOS row above it; complementary pairs share a column. Gate-level
//! netlists are placed as one abutted row. In both cases the left-to-right
//! order is chosen by minimizing half-perimeter wire length over the signal
//! nets.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::layout::{LayoutDb, LayoutError};
use crate::netlist::{complementary_pairs, Device, DeviceKind, Netlist};
use crate::tech::{Orient, Technology, Template, TemplateKind};

/// Largest free-instance count searched exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Greedy construction is restarted from this many different first items.
pub const GREEDY_STARTS: usize = 12;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize)]
pub enum PlaceError {
    #[error("device {0} is a subcircuit instance; transistor rows need MOS devices only")]
    NotTransistorLevel(String),
    #[error("device {0} is a MOS device; a gate row needs subcircuit instances only")]
    NotGateLevel(String),
    #[error("technology has no {0} template")]
    MissingTemplate(String),
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("bad order: {0}")]
    BadPermutation(String),
    #[error("pin {pin} of {instance} cannot be resolved")]
    UnresolvedPin { instance: String, pin: String },
    #[error("constraint conflict: {0}")]
    ConstraintConflict(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementConstraints {
    pub fixed_left: Vec<String>,
    pub fixed_right: Vec<String>,
    /// Starting order; defaults to netlist order.
    pub order_hint: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrderMethod {
    Exhaustive,
    /// Multi-start greedy insertion, then local search over swaps,
    /// relocations and reversals.
    GreedySwap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderResult {
    pub order: Vec<String>,
    pub hpwl_before: i64,
    pub hpwl_after: i64,
    pub method: OrderMethod,
}

/// Template used for a device: the unit transistor for MOS devices, the
/// gate cell named after the subcircuit otherwise.
pub fn template_for<'t>(device: &Device, tech: &'t Technology) -> Result<&'t Template, PlaceError> {
    match &device.kind {
        DeviceKind::Pmos => tech
            .template_of_kind(TemplateKind::PmosUnit)
            .ok_or_else(|| PlaceError::MissingTemplate("PMOS_UNIT".into())),
        DeviceKind::Nmos => tech
            .template_of_kind(TemplateKind::NmosUnit)
            .ok_or_else(|| PlaceError::MissingTemplate("NMOS_UNIT".into())),
        DeviceKind::Subckt(r) => tech
            .template(r)
            .ok_or_else(|| PlaceError::UnknownTemplate(r.clone())),
    }
}

/// Binds template pins to the device's terminal nets.
pub fn pin_nets_for(device: &Device, template: &Template) -> Result<BTreeMap<String, String>, PlaceError> {
    template
        .pins
        .keys()
        .map(|pin| {
            device
                .net_of(pin)
                .map(|net| (pin.clone(), net.to_string()))
                .ok_or_else(|| PlaceError::UnresolvedPin {
                    instance: device.name.clone(),
                    pin: pin.clone(),
                })
        })
        .collect()
}

/// Half-perimeter wire length of a (partial) placement.
///
/// Uses the first access point of every pin and skips supply nets.
pub fn hpwl(
    netlist: &Netlist,
    tech: &Technology,
    placement: &BTreeMap<String, ((i64, i64), Orient)>,
) -> Result<i64, PlaceError> {
    let mut boxes: BTreeMap<&str, (i64, i64, i64, i64)> = BTreeMap::new();
    for (name, (origin, orient)) in placement {
        let device = netlist.device(name).ok_or_else(|| PlaceError::UnresolvedPin {
            instance: name.clone(),
            pin: "*".into(),
        })?;
        let template = template_for(device, tech)?;
        for (pin, net) in pin_nets_for(device, template)? {
            if netlist.is_supply(&net) {
                continue;
            }
            let points = template
                .resolve_pin(&pin, *origin, *orient)
                .map_err(|_| PlaceError::UnresolvedPin {
                    instance: name.clone(),
                    pin: pin.clone(),
                })?;
            let p = &points[0];
            let net = device.net_of(&pin).expect("bound above");
            let b = boxes.entry(net).or_insert((p.x, p.x, p.y, p.y));
            *b = (b.0.min(p.x), b.1.max(p.x), b.2.min(p.y), b.3.max(p.y));
        }
    }
    Ok(boxes.values().map(|(x0, x1, y0, y1)| (x1 - x0) + (y1 - y0)).sum())
}

/// Placement map (`instance -> (origin, orient)`) of a layout.
pub fn placement_of(db: &LayoutDb) -> BTreeMap<String, ((i64, i64), Orient)> {
    db.instances
        .values()
        .map(|i| (i.name.clone(), (i.origin, i.orient)))
        .collect()
}

/// One reorderable slot of a row: pin offsets are relative to the slot's x.
#[derive(Debug, Clone)]
struct RowItem {
    name: String,
    width: i64,
    pins: Vec<(usize, i64, i64)>,
}

/// Row-ordering problem: reorderable items plus pins that do not move.
#[derive(Debug, Clone)]
struct RowModel {
    items: Vec<RowItem>,
    fixed_pins: Vec<(usize, i64, i64)>,
    net_count: usize,
}

impl RowModel {
    fn cost(&self, order: &[usize]) -> i64 {
        let mut boxes = vec![(i64::MAX, i64::MIN, i64::MAX, i64::MIN); self.net_count];
        let mut grow = |net: usize, x: i64, y: i64| {
            let b = &mut boxes[net];
            *b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
        };
        for &(net, x, y) in &self.fixed_pins {
            grow(net, x, y);
        }
        let mut x0 = 0;
        for &i in order {
            let item = &self.items[i];
            for &(net, dx, y) in &item.pins {
                grow(net, x0 + dx, y);
            }
            x0 += item.width;
        }
        boxes
            .iter()
            .filter(|b| b.0 != i64::MAX)
            .map(|b| (b.1 - b.0) + (b.3 - b.2))
            .sum()
    }

    fn names_cmp(&self, a: &[usize], b: &[usize]) -> Ordering {
        a.iter()
            .map(|&i| &self.items[i].name)
            .cmp(b.iter().map(|&i| &self.items[i].name))
    }
}

#[derive(Default)]
struct NetIds(HashMap<String, usize>);

impl NetIds {
    fn id(&mut self, net: &str) -> usize {
        let next = self.0.len();
        *self.0.entry(net.to_string()).or_insert(next)
    }
}

fn item_pins(
    device: &Device,
    template: &Template,
    y0: i64,
    orient: Orient,
    netlist: &Netlist,
    nets: &mut NetIds,
) -> Result<Vec<(usize, i64, i64)>, PlaceError> {
    let mut out = Vec::new();
    for (pin, net) in pin_nets_for(device, template)? {
        if netlist.is_supply(&net) {
            continue;
        }
        let p = template
            .resolve_pin(&pin, (0, y0), orient)
            .map_err(|_| PlaceError::UnresolvedPin {
                instance: device.name.clone(),
                pin: pin.clone(),
            })?
            .swap_remove(0);
        out.push((nets.id(&net), p.x, p.y));
    }
    Ok(out)
}

/// Resolved constraint slots: (left items, free items, right items).
struct Slots {
    left: Vec<usize>,
    free: Vec<usize>,
    right: Vec<usize>,
    baseline: Vec<usize>,
}

fn resolve_constraints(
    model: &RowModel,
    lookup: &dyn Fn(&str) -> Option<usize>,
    default_order: Vec<usize>,
    c: &PlacementConstraints,
) -> Result<Slots, PlaceError> {
    let mut taken = vec![false; model.items.len()];
    let mut side = |names: &[String], which: &str| -> Result<Vec<usize>, PlaceError> {
        names
            .iter()
            .map(|n| {
                let i = lookup(n).ok_or_else(|| {
                    PlaceError::ConstraintConflict(format!("{n} is not a reorderable instance"))
                })?;
                if taken[i] {
                    return Err(PlaceError::ConstraintConflict(format!(
                        "{n} is fixed more than once (last as {which})"
                    )));
                }
                taken[i] = true;
                Ok(i)
            })
            .collect()
    };
    let left = side(&c.fixed_left, "left")?;
    let right = side(&c.fixed_right, "right")?;

    let start = match &c.order_hint {
        None => default_order,
        Some(hint) => {
            let idx: Vec<usize> = hint
                .iter()
                .map(|n| lookup(n).ok_or_else(|| PlaceError::BadPermutation(format!("unknown instance {n}"))))
                .collect::<Result<_, _>>()?;
            let mut seen = vec![false; model.items.len()];
            for &i in &idx {
                if std::mem::replace(&mut seen[i], true) {
                    return Err(PlaceError::BadPermutation(format!(
                        "{} listed twice",
                        model.items[i].name
                    )));
                }
            }
            if idx.len() != model.items.len() {
                return Err(PlaceError::BadPermutation("order hint is not a full order".into()));
            }
            idx
        }
    };
    let middle: Vec<usize> = start.into_iter().filter(|&i| !taken[i]).collect();
    let mut free = middle.clone();
    free.sort_by(|&a, &b| model.items[a].name.cmp(&model.items[b].name));
    let baseline = left.iter().chain(&middle).chain(&right).copied().collect();
    Ok(Slots {
        left,
        free,
        right,
        baseline,
    })
}

fn assemble(slots: &Slots, middle: &[usize]) -> Vec<usize> {
    slots.left.iter().chain(middle).chain(&slots.right).copied().collect()
}

/// Next lexicographic permutation in place; false once the last is reached.
fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let Some(i) = (0..p.len() - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..p.len()).rev().find(|&j| p[j] > p[i]).expect("pivot exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Accepts `cand` over `best` when it is cheaper, or equally cheap and
/// lexicographically smaller by name.
fn better(model: &RowModel, cand: (i64, &[usize]), best: Option<(i64, &[usize])>) -> bool {
    match best {
        None => true,
        Some((c, b)) => cand.0 < c || (cand.0 == c && model.names_cmp(cand.1, b) == Ordering::Less),
    }
}

fn exhaustive(model: &RowModel, slots: &Slots) -> (Vec<usize>, i64) {
    // slots.free is sorted by name, so permuting positions 0..n in
    // lexicographic order enumerates name orders lexicographically.
    let mut perm: Vec<usize> = (0..slots.free.len()).collect();
    let mut best: Option<(Vec<usize>, i64)> = None;
    loop {
        let middle: Vec<usize> = perm.iter().map(|&k| slots.free[k]).collect();
        let order = assemble(slots, &middle);
        let cost = model.cost(&order);
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((order, cost));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best.expect("at least one permutation")
}

/// Builds an order by inserting `first`, then the remaining free items in
/// name order, each where it adds the least HPWL.
fn greedy_insertion(model: &RowModel, slots: &Slots, first: usize) -> Vec<usize> {
    let mut partial: Vec<usize> = Vec::new();
    let rest = slots.free.iter().filter(|&&i| i != first);
    for &item in std::iter::once(&first).chain(rest) {
        let mut best: Option<(i64, Vec<usize>)> = None;
        for pos in 0..=partial.len() {
            let mut cand = partial.clone();
            cand.insert(pos, item);
            let cost = model.cost(&assemble(slots, &cand));
            if better(model, (cost, &cand), best.as_ref().map(|(c, b)| (*c, b.as_slice()))) {
                best = Some((cost, cand));
            }
        }
        partial = best.expect("one insertion point").1;
    }
    assemble(slots, &partial)
}

/// Neighbours of `order` within the free slots `lo..hi`: every pairwise
/// swap, every single-item relocation and every segment reversal.
fn neighbours(order: &[usize], lo: usize, hi: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    (lo..hi).flat_map(move |i| {
        (lo..hi).filter(move |&j| j != i).flat_map(move |j| {
            let mut moved = order.to_vec();
            let item = moved.remove(i);
            moved.insert(j, item);
            let swapped = (i < j).then(|| {
                let mut s = order.to_vec();
                s.swap(i, j);
                s
            });
            let reversed = (i + 1 < j).then(|| {
                let mut r = order.to_vec();
                r[i..=j].reverse();
                r
            });
            swapped.into_iter().chain(Some(moved)).chain(reversed)
        })
    })
}

/// Best-improvement hill climbing over the free slots.
fn climb(model: &RowModel, slots: &Slots, start: Vec<usize>) -> (Vec<usize>, i64) {
    let lo = slots.left.len();
    let hi = start.len() - slots.right.len();
    let mut current = start;
    let mut cost = model.cost(&current);
    loop {
        let mut best: Option<(i64, Vec<usize>)> = None;
        for cand in neighbours(&current, lo, hi) {
            let c = model.cost(&cand);
            if c < cost && better(model, (c, &cand), best.as_ref().map(|(c, b)| (*c, b.as_slice()))) {
                best = Some((c, cand));
            }
        }
        match best {
            Some((c, cand)) => {
                cost = c;
                current = cand;
            }
            None => return (current, cost),
        }
    }
}

fn optimize_model(
    model: &RowModel,
    lookup: &dyn Fn(&str) -> Option<usize>,
    constraints: &PlacementConstraints,
) -> Result<(Vec<usize>, OrderResult), PlaceError> {
    let slots = resolve_constraints(model, lookup, (0..model.items.len()).collect(), constraints)?;
    let hpwl_before = model.cost(&slots.baseline);
    let (order, hpwl_after, method) = if slots.free.len() <= EXHAUSTIVE_LIMIT {
        let (order, cost) = exhaustive(model, &slots);
        (order, cost, OrderMethod::Exhaustive)
    } else {
        // Climbing from the baseline as well guarantees no regression.
        let mut pick = climb(model, &slots, slots.baseline.clone());
        for &first in slots.free.iter().take(GREEDY_STARTS) {
            let cand = climb(model, &slots, greedy_insertion(model, &slots, first));
            if better(model, (cand.1, &cand.0), Some((pick.1, &pick.0))) {
                pick = cand;
            }
        }
        (pick.0, pick.1, OrderMethod::GreedySwap)
    };
    let result = OrderResult {
        order: order.iter().map(|&i| model.items[i].name.clone()).collect(),
        hpwl_before,
        hpwl_after,
        method,
    };
    Ok((order, result))
}

fn gate_model(netlist: &Netlist, tech: &Technology) -> Result<RowModel, PlaceError> {
    let mut nets = NetIds::default();
    let mut items = Vec::new();
    for d in &netlist.devices {
        if d.kind.is_mos() {
            return Err(PlaceError::NotGateLevel(d.name.clone()));
        }
        let t = template_for(d, tech)?;
        items.push(RowItem {
            name: d.name.clone(),
            width: t.width,
            pins: item_pins(d, t, 0, Orient::R0, netlist, &mut nets)?,
        });
    }
    Ok(RowModel {
        items,
        fixed_pins: Vec::new(),
        net_count: nets.0.len(),
    })
}

/// Chooses a left-to-right order for a gate-level row.
pub fn optimize_order(
    netlist: &Netlist,
    tech: &Technology,
    constraints: &PlacementConstraints,
) -> Result<OrderResult, PlaceError> {
    let model = gate_model(netlist, tech)?;
    let lookup = |n: &str| model.items.iter().position(|i| i.name.eq_ignore_ascii_case(n));
    Ok(optimize_model(&model, &lookup, constraints)?.1)
}

/// Places gate instances abutted at `y = 0`, in `order`.
pub fn place_gate_row(netlist: &Netlist, tech: &Technology, order: &[String]) -> Result<LayoutDb, PlaceError> {
    let mut seen: Vec<bool> = vec![false; netlist.devices.len()];
    let mut devices = Vec::with_capacity(order.len());
    for name in order {
        let idx = netlist
            .devices
            .iter()
            .position(|d| d.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| PlaceError::BadPermutation(format!("unknown instance {name}")))?;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(PlaceError::BadPermutation(format!("{name} listed twice")));
        }
        devices.push(&netlist.devices[idx]);
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(PlaceError::BadPermutation(format!(
            "{} missing from order",
            netlist.devices[i].name
        )));
    }
    let mut db = LayoutDb::new(&tech.name, &netlist.name);
    let mut x = 0;
    for d in devices {
        if d.kind.is_mos() {
            return Err(PlaceError::NotGateLevel(d.name.clone()));
        }
        let t = template_for(d, tech)?;
        db = db.place_instance(tech, &d.name, &t.name, (x, 0), Orient::R0, pin_nets_for(d, t)?)?;
        x += t.width;
    }
    Ok(db)
}

struct TransistorRows<'a> {
    model: RowModel,
    pairs: Vec<(&'a Device, &'a Device)>,
    lone_n: Vec<&'a Device>,
    lone_p: Vec<&'a Device>,
    pmos_y: i64,
}

fn transistor_rows<'a>(netlist: &'a Netlist, tech: &Technology) -> Result<TransistorRows<'a>, PlaceError> {
    if let Some(d) = netlist.devices.iter().find(|d| !d.kind.is_mos()) {
        return Err(PlaceError::NotTransistorLevel(d.name.clone()));
    }
    let ptemp = tech
        .template_of_kind(TemplateKind::PmosUnit)
        .ok_or_else(|| PlaceError::MissingTemplate("PMOS_UNIT".into()))?;
    let ntemp = tech
        .template_of_kind(TemplateKind::NmosUnit)
        .ok_or_else(|| PlaceError::MissingTemplate("NMOS_UNIT".into()))?;
    let pmos_y = ntemp.height + tech.row_gap;

    let (pair_names, unpaired) = complementary_pairs(netlist).expect("checked transistor-level");
    let dev = |n: &str| netlist.device(n).expect("device from pairing");
    // Pairs keep netlist order (by first device) as the starting order.
    let position = |n: &str| netlist.devices.iter().position(|d| d.name == n).unwrap_or(usize::MAX);
    let mut pairs: Vec<(&Device, &Device)> = pair_names.iter().map(|(p, n)| (dev(p), dev(n))).collect();
    pairs.sort_by_key(|(p, n)| position(&p.name).min(position(&n.name)));
    let lone: Vec<&Device> = {
        let mut v: Vec<&Device> = unpaired.iter().map(|n| dev(n)).collect();
        v.sort_by_key(|d| position(&d.name));
        v
    };
    let lone_n: Vec<&Device> = lone.iter().copied().filter(|d| d.kind == DeviceKind::Nmos).collect();
    let lone_p: Vec<&Device> = lone.iter().copied().filter(|d| d.kind == DeviceKind::Pmos).collect();

    let mut nets = NetIds::default();
    let mut items = Vec::new();
    for (p, n) in &pairs {
        let mut pins = item_pins(n, ntemp, 0, Orient::R0, netlist, &mut nets)?;
        pins.extend(item_pins(p, ptemp, pmos_y, Orient::MX, netlist, &mut nets)?);
        items.push(RowItem {
            name: format!("{}+{}", p.name, n.name),
            width: ptemp.width.max(ntemp.width),
            pins,
        });
    }
    let pair_width: i64 = items.iter().map(|i| i.width).sum();
    let mut fixed_pins = Vec::new();
    let mut x = pair_width;
    for d in &lone_n {
        for (net, dx, y) in item_pins(d, ntemp, 0, Orient::R0, netlist, &mut nets)? {
            fixed_pins.push((net, x + dx, y));
        }
        x += ntemp.width;
    }
    let mut x = pair_width;
    for d in &lone_p {
        for (net, dx, y) in item_pins(d, ptemp, pmos_y, Orient::MX, netlist, &mut nets)? {
            fixed_pins.push((net, x + dx, y));
        }
        x += ptemp.width;
    }
    Ok(TransistorRows {
        model: RowModel {
            items,
            fixed_pins,
            net_count: nets.0.len(),
        },
        pairs,
        lone_n,
        lone_p,
        pmos_y,
    })
}

/// Paired-row transistor placement.
///
/// NMOS row at `y = 0` (R0), PMOS row above the row gap mirrored (MX), each
/// complementary pair in one column. Pair columns are ordered by the row
/// optimizer; constraint names may refer to either device of a pair.
/// Unpaired devices are appended at the right end of their own row.
pub fn place_transistor_rows(
    netlist: &Netlist,
    tech: &Technology,
    constraints: &PlacementConstraints,
) -> Result<(LayoutDb, OrderResult), PlaceError> {
    let rows = transistor_rows(netlist, tech)?;
    let lookup = |name: &str| {
        rows.pairs.iter().position(|(p, n)| {
            p.name.eq_ignore_ascii_case(name)
                || n.name.eq_ignore_ascii_case(name)
                || format!("{}+{}", p.name, n.name).eq_ignore_ascii_case(name)
        })
    };
    // Hints name pairs by either device; duplicates collapse onto the pair.
    let mut constraints = constraints.clone();
    if let Some(hint) = &constraints.order_hint {
        let mut seen = Vec::new();
        let mut collapsed = Vec::new();
        for n in hint {
            if let Some(i) = lookup(n) {
                if !seen.contains(&i) {
                    seen.push(i);
                    collapsed.push(rows.model.items[i].name.clone());
                }
            }
        }
        constraints.order_hint = Some(collapsed);
    }
    let (order, result) = optimize_model(&rows.model, &lookup, &constraints)?;

    let ptemp = tech.template_of_kind(TemplateKind::PmosUnit).expect("checked");
    let ntemp = tech.template_of_kind(TemplateKind::NmosUnit).expect("checked");
    let mut db = LayoutDb::new(&tech.name, &netlist.name);
    let mut x = 0;
    for &i in &order {
        let (p, n) = rows.pairs[i];
        db = db.place_instance(tech, &n.name, &ntemp.name, (x, 0), Orient::R0, pin_nets_for(n, ntemp)?)?;
        db = db.place_instance(tech, &p.name, &ptemp.name, (x, rows.pmos_y), Orient::MX, pin_nets_for(p, ptemp)?)?;
        x += rows.model.items[i].width;
    }
    let pair_width = x;
    for (k, d) in rows.lone_n.iter().enumerate() {
        let at = (pair_width + k as i64 * ntemp.width, 0);
        db = db.place_instance(tech, &d.name, &ntemp.name, at, Orient::R0, pin_nets_for(d, ntemp)?)?;
    }
    for (k, d) in rows.lone_p.iter().enumerate() {
        let at = (pair_width + k as i64 * ptemp.width, rows.pmos_y);
        db = db.place_instance(tech, &d.name, &ptemp.name, at, Orient::MX, pin_nets_for(d, ptemp)?)?;
    }
    Ok((db, result))
}
