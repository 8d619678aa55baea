//! The command language. Every layout edit is one line of it, so any session
//! can be written down as a script and replayed.

use std::fmt;

use serde::Serialize;

use crate::route::PinRef;
use crate::tech::Orient;

mod parse;
mod session;

pub use parse::{parse_command, parse_script, ScriptError, SyntaxError};
pub use session::{ApplyError, Event, Session};

/// Grammar shown to users and to the language model.
pub const GRAMMAR: &str = r##"command   := place | place_rows | place_row | optimize | move | swap
           | route_net | route_pins | unroute | label | report | undo | checkpoint
place     := "place" IDENT ["template" IDENT] "at" "(" INT "," INT ")" ["orient" ORIENT]
place_rows:= "place_rows"
place_row := "place_row" ["order" IDENT ("," IDENT)*]
optimize  := "optimize_order" ("fix" IDENT ("left"|"right"))*
move      := "move" IDENT "to" "(" INT "," INT ")"
swap      := "swap" IDENT IDENT
route_net := "route" "net" IDENT ("auto" | "trunk" IDENT "track" INT)
route_pins:= "route" "pins" PIN ("," PIN)+ "trunk" IDENT "track" INT
unroute   := "unroute" "net" IDENT
label     := "label" IDENT "at" "(" INT "," INT ")" "layer" IDENT
report    := "report" ("wirelength"|"drc"|"lvs")
undo      := "undo"
checkpoint:= "checkpoint" IDENT
PIN       := IDENT "." IDENT ["[" INT "]"]
ORIENT    := "R0"|"MX"|"MY"|"R180"
One command per line. "#" starts a comment."##;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Wirelength,
    Drc,
    Lvs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    Place {
        inst: String,
        template: Option<String>,
        at: (i64, i64),
        orient: Option<Orient>,
    },
    PlaceRows,
    /// Without an order the last optimized order is used, else netlist order.
    PlaceRow {
        order: Option<Vec<String>>,
    },
    OptimizeOrder {
        fixes: Vec<(String, Side)>,
    },
    Move {
        inst: String,
        to: (i64, i64),
    },
    Swap {
        a: String,
        b: String,
    },
    /// `trunk: None` means automatic track selection.
    RouteNet {
        net: String,
        trunk: Option<(String, i64)>,
    },
    RoutePins {
        pins: Vec<PinRef>,
        trunk_layer: String,
        track: i64,
    },
    UnrouteNet {
        net: String,
    },
    Label {
        net: String,
        at: (i64, i64),
        layer: String,
    },
    Report {
        kind: ReportKind,
    },
    Undo,
    Checkpoint {
        name: String,
    },
}

impl Command {
    /// Commands that change the layout or the optimizer state and so can be undone.
    pub fn is_undoable(&self) -> bool {
        !matches!(self, Command::Report { .. } | Command::Undo | Command::Checkpoint { .. })
    }
}

fn pin(f: &mut fmt::Formatter<'_>, p: &PinRef) -> fmt::Result {
    write!(f, "{}.{}", p.instance, p.pin)?;
    match p.access {
        Some(k) => write!(f, "[{k}]"),
        None => Ok(()),
    }
}

/// Canonical text form; `parse_command` reads it back to an equal value.
impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Place {
                inst,
                template,
                at,
                orient,
            } => {
                write!(f, "place {inst}")?;
                if let Some(t) = template {
                    write!(f, " template {t}")?;
                }
                write!(f, " at ({}, {})", at.0, at.1)?;
                if let Some(o) = orient {
                    write!(f, " orient {o}")?;
                }
                Ok(())
            }
            Command::PlaceRows => f.write_str("place_rows"),
            Command::PlaceRow { order: None } => f.write_str("place_row"),
            Command::PlaceRow { order: Some(order) } => write!(f, "place_row order {}", order.join(", ")),
            Command::OptimizeOrder { fixes } => {
                f.write_str("optimize_order")?;
                for (name, side) in fixes {
                    let side = match side {
                        Side::Left => "left",
                        Side::Right => "right",
                    };
                    write!(f, " fix {name} {side}")?;
                }
                Ok(())
            }
            Command::Move { inst, to } => write!(f, "move {inst} to ({}, {})", to.0, to.1),
            Command::Swap { a, b } => write!(f, "swap {a} {b}"),
            Command::RouteNet { net, trunk: None } => write!(f, "route net {net} auto"),
            Command::RouteNet {
                net,
                trunk: Some((layer, track)),
            } => write!(f, "route net {net} trunk {layer} track {track}"),
            Command::RoutePins {
                pins,
                trunk_layer,
                track,
            } => {
                f.write_str("route pins ")?;
                for (i, p) in pins.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    pin(f, p)?;
                }
                write!(f, " trunk {trunk_layer} track {track}")
            }
            Command::UnrouteNet { net } => write!(f, "unroute net {net}"),
            Command::Label { net, at, layer } => write!(f, "label {net} at ({}, {}) layer {layer}", at.0, at.1),
            Command::Report { kind } => {
                let k = match kind {
                    ReportKind::Wirelength => "wirelength",
                    ReportKind::Drc => "drc",
                    ReportKind::Lvs => "lvs",
                };
                write!(f, "report {k}")
            }
            Command::Undo => f.write_str("undo"),
            Command::Checkpoint { name } => write!(f, "checkpoint {name}"),
        }
    }
}
