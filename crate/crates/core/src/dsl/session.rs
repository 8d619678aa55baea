use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::{Command, ReportKind, Side};
use crate::layout::{Label, LayoutDb, LayoutError, Via, WireSegment};
use crate::netlist::Netlist;
use crate::place::{
    optimize_order, pin_nets_for, place_gate_row, place_transistor_rows, template_for, OrderResult, PlaceError,
    PlacementConstraints,
};
use crate::route::{auto_route_net, route_via_track, routed_wirelength, RouteError, RouteOutcome};
use crate::tech::{Orient, Technology};
use crate::verify::{run_drc, run_lvs, VerifyError};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "error", content = "detail")]
pub enum ApplyError {
    #[error(transparent)]
    Place(#[from] PlaceError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0} is not a device of the netlist")]
    UnknownDevice(String),
    #[error("unknown layer {0}")]
    UnknownLayer(String),
    #[error("nothing to undo")]
    NothingToUndo,
}

/// What a command did, for clients that mirror the layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    InstancePlaced {
        name: String,
        template: String,
        origin: (i64, i64),
        orient: Orient,
    },
    InstanceMoved {
        name: String,
        from: (i64, i64),
        to: (i64, i64),
        orient: Orient,
    },
    InstanceRemoved {
        name: String,
    },
    WireAdded {
        wire: WireSegment,
    },
    WireRemoved {
        wire: WireSegment,
    },
    ViaAdded {
        via: Via,
    },
    ViaRemoved {
        via: Via,
    },
    LabelAdded {
        label: Label,
    },
    LabelRemoved {
        label: Label,
    },
    Order {
        result: OrderResult,
    },
    Report {
        report: ReportKind,
        payload: serde_json::Value,
    },
    Warning {
        message: String,
    },
    Checkpoint {
        name: String,
        depth: usize,
    },
    Undone {
        command: String,
    },
}

/// Undo record: the command and the state it replaced.
#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub command: Command,
    pub db: LayoutDb,
    order: Option<(OrderResult, PlacementConstraints)>,
}

/// One editing context. `apply` is atomic: on error nothing changes.
#[derive(Debug, Clone)]
pub struct Session {
    tech: Arc<Technology>,
    netlist: Arc<Netlist>,
    initial: LayoutDb,
    current: LayoutDb,
    order: Option<(OrderResult, PlacementConstraints)>,
    history: Vec<HistoryEntry>,
    checkpoints: BTreeMap<String, usize>,
    log: Vec<Command>,
    last_report: Option<(ReportKind, serde_json::Value)>,
}

fn diff(old: &LayoutDb, new: &LayoutDb) -> Vec<Event> {
    let mut events = Vec::new();
    for (name, inst) in &new.instances {
        match old.instances.get(name) {
            None => events.push(Event::InstancePlaced {
                name: name.clone(),
                template: inst.template.clone(),
                origin: inst.origin,
                orient: inst.orient,
            }),
            Some(prev) if prev.origin != inst.origin || prev.orient != inst.orient => {
                events.push(Event::InstanceMoved {
                    name: name.clone(),
                    from: prev.origin,
                    to: inst.origin,
                    orient: inst.orient,
                })
            }
            Some(_) => {}
        }
    }
    for name in old.instances.keys().filter(|n| !new.instances.contains_key(*n)) {
        events.push(Event::InstanceRemoved { name: name.clone() });
    }
    for w in new.wires.iter().filter(|w| !old.wires.contains(w)) {
        events.push(Event::WireAdded { wire: w.clone() });
    }
    for w in old.wires.iter().filter(|w| !new.wires.contains(w)) {
        events.push(Event::WireRemoved { wire: w.clone() });
    }
    for v in new.vias.iter().filter(|v| !old.vias.contains(v)) {
        events.push(Event::ViaAdded { via: v.clone() });
    }
    for v in old.vias.iter().filter(|v| !new.vias.contains(v)) {
        events.push(Event::ViaRemoved { via: v.clone() });
    }
    for l in new.labels.iter().filter(|l| !old.labels.contains(l)) {
        events.push(Event::LabelAdded { label: l.clone() });
    }
    for l in old.labels.iter().filter(|l| !new.labels.contains(l)) {
        events.push(Event::LabelRemoved { label: l.clone() });
    }
    events
}

/// Adds every instance of `placed` to `db`, keeping `db`'s routing.
fn merge_instances(db: &LayoutDb, placed: &LayoutDb, tech: &Technology) -> Result<LayoutDb, LayoutError> {
    let mut out = db.clone();
    for inst in placed.instances.values() {
        out = out.place_instance(
            tech,
            &inst.name,
            &inst.template,
            inst.origin,
            inst.orient,
            inst.pin_nets.clone(),
        )?;
    }
    Ok(out)
}

impl Session {
    pub fn new(tech: Arc<Technology>, netlist: Netlist) -> Session {
        let netlist = netlist.with_supply_names(tech.supply_names.iter().cloned());
        let initial = LayoutDb::new(&tech.name, &netlist.name);
        Session {
            current: initial.clone(),
            initial,
            tech,
            netlist: Arc::new(netlist),
            order: None,
            history: Vec::new(),
            checkpoints: BTreeMap::new(),
            log: Vec::new(),
            last_report: None,
        }
    }

    /// Applies `commands` to a fresh session.
    pub fn replay<'a>(
        tech: Arc<Technology>,
        netlist: Netlist,
        commands: impl IntoIterator<Item = &'a Command>,
    ) -> Result<Session, ApplyError> {
        let mut s = Session::new(tech, netlist);
        for c in commands {
            s.apply(c)?;
        }
        Ok(s)
    }

    pub fn tech(&self) -> &Technology {
        &self.tech
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    pub fn current(&self) -> &LayoutDb {
        &self.current
    }

    pub fn initial(&self) -> &LayoutDb {
        &self.initial
    }

    /// Undo stack, oldest first.
    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Every successfully applied command, including reports and undos.
    pub fn log(&self) -> &[Command] {
        &self.log
    }

    pub fn checkpoints(&self) -> &BTreeMap<String, usize> {
        &self.checkpoints
    }

    pub fn last_order(&self) -> Option<&OrderResult> {
        self.order.as_ref().map(|(r, _)| r)
    }

    pub fn last_report(&self) -> Option<&(ReportKind, serde_json::Value)> {
        self.last_report.as_ref()
    }

    pub fn undo(&mut self) -> Result<Vec<Event>, ApplyError> {
        self.apply(&Command::Undo)
    }

    /// Runs one command. On error the session is left exactly as it was.
    pub fn apply(&mut self, cmd: &Command) -> Result<Vec<Event>, ApplyError> {
        let tech = Arc::clone(&self.tech);
        let tech = tech.as_ref();
        let netlist = Arc::clone(&self.netlist);
        let netlist = netlist.as_ref();
        let mut extra = Vec::new();
        let mut order = self.order.clone();

        let next = match cmd {
            Command::Place {
                inst,
                template,
                at,
                orient,
            } => {
                let device = netlist
                    .device(inst)
                    .ok_or_else(|| ApplyError::UnknownDevice(inst.clone()))?;
                let t = match template {
                    Some(name) => tech
                        .template(name)
                        .ok_or_else(|| LayoutError::UnknownTemplate(name.clone()))?,
                    None => template_for(device, tech)?,
                };
                let nets = pin_nets_for(device, t)?;
                self.current
                    .place_instance(tech, &device.name, &t.name, *at, orient.unwrap_or(Orient::R0), nets)?
            }
            Command::PlaceRows => {
                let constraints = order.as_ref().map(|(_, c)| c.clone()).unwrap_or_default();
                let (placed, result) = place_transistor_rows(netlist, tech, &constraints)?;
                extra.push(Event::Order { result });
                merge_instances(&self.current, &placed, tech)?
            }
            Command::PlaceRow { order: given } => {
                let names: Vec<String> = match (given, &order) {
                    (Some(o), _) => o.clone(),
                    (None, Some((r, _))) => r.order.clone(),
                    (None, None) => netlist.devices.iter().map(|d| d.name.clone()).collect(),
                };
                let placed = place_gate_row(netlist, tech, &names)?;
                merge_instances(&self.current, &placed, tech)?
            }
            Command::OptimizeOrder { fixes } => {
                let mut constraints = PlacementConstraints::default();
                for (name, side) in fixes {
                    match side {
                        Side::Left => constraints.fixed_left.push(name.clone()),
                        Side::Right => constraints.fixed_right.push(name.clone()),
                    }
                }
                let result = if netlist.is_gate_level() || netlist.devices.is_empty() {
                    optimize_order(netlist, tech, &constraints)?
                } else {
                    place_transistor_rows(netlist, tech, &constraints)?.1
                };
                extra.push(Event::Order { result: result.clone() });
                order = Some((result, constraints));
                self.current.clone()
            }
            Command::Move { inst, to } => self.current.move_instance(inst, *to)?,
            Command::Swap { a, b } => self.current.swap_instances(a, b)?,
            Command::RouteNet { net, trunk } => {
                let out = match trunk {
                    Some((layer, track)) => route_via_track(&self.current, tech, net, layer, *track, None)?,
                    None => auto_route_net(&self.current, tech, net)?,
                };
                self.take_route(out, &mut extra)
            }
            Command::RoutePins {
                pins,
                trunk_layer,
                track,
            } => {
                let net = self.pin_net(&pins[0].instance, &pins[0].pin)?;
                let out = route_via_track(&self.current, tech, &net, trunk_layer, *track, Some(pins))?;
                self.take_route(out, &mut extra)
            }
            Command::UnrouteNet { net } => {
                let next = crate::route::unroute_net(&self.current, net);
                if next == self.current {
                    extra.push(Event::Warning {
                        message: format!("net {net} has no routing"),
                    });
                }
                next
            }
            Command::Label { net, at, layer } => {
                let l = tech.layer(layer).ok_or_else(|| ApplyError::UnknownLayer(layer.clone()))?;
                self.current.with_label(Label {
                    net: net.clone(),
                    layer: l.name.clone(),
                    x: at.0,
                    y: at.1,
                })
            }
            Command::Report { kind } => {
                let payload = match kind {
                    ReportKind::Wirelength => serde_json::to_value(routed_wirelength(&self.current, tech)),
                    ReportKind::Drc => serde_json::to_value(run_drc(&self.current, tech)),
                    ReportKind::Lvs => serde_json::to_value(run_lvs(&self.current, netlist, tech)?),
                }
                .expect("reports serialize");
                self.last_report = Some((*kind, payload.clone()));
                self.log.push(cmd.clone());
                return Ok(vec![Event::Report { report: *kind, payload }]);
            }
            Command::Undo => {
                let entry = self.history.pop().ok_or(ApplyError::NothingToUndo)?;
                let mut events = diff(&self.current, &entry.db);
                events.push(Event::Undone {
                    command: entry.command.to_string(),
                });
                self.current = entry.db;
                self.order = entry.order;
                self.checkpoints.retain(|_, depth| *depth <= self.history.len());
                self.log.push(cmd.clone());
                return Ok(events);
            }
            Command::Checkpoint { name } => {
                self.checkpoints.insert(name.clone(), self.history.len());
                self.log.push(cmd.clone());
                return Ok(vec![Event::Checkpoint {
                    name: name.clone(),
                    depth: self.history.len(),
                }]);
            }
        };

        let mut events = extra;
        events.extend(diff(&self.current, &next));
        let prior = std::mem::replace(&mut self.current, next);
        let prior_order = std::mem::replace(&mut self.order, order);
        self.history.push(HistoryEntry {
            command: cmd.clone(),
            db: prior,
            order: prior_order,
        });
        self.log.push(cmd.clone());
        Ok(events)
    }

    fn take_route(&self, out: RouteOutcome, extra: &mut Vec<Event>) -> LayoutDb {
        extra.extend(out.warnings.into_iter().map(|message| Event::Warning { message }));
        out.db
    }

    fn pin_net(&self, instance: &str, pin: &str) -> Result<String, ApplyError> {
        let inst = self
            .current
            .instances
            .values()
            .find(|i| i.name.eq_ignore_ascii_case(instance))
            .ok_or_else(|| LayoutError::UnknownInstance(instance.to_string()))?;
        inst.pin_nets
            .iter()
            .find(|(p, _)| p.eq_ignore_ascii_case(pin))
            .map(|(_, n)| n.clone())
            .ok_or_else(|| {
                ApplyError::Route(RouteError::UnknownPin {
                    instance: inst.name.clone(),
                    pin: pin.to_string(),
                    access: 0,
                })
            })
    }

    /// Canonical text of the command log, one command per line.
    pub fn log_text(&self) -> String {
        self.log.iter().map(|c| format!("{c}\n")).collect()
    }
}
