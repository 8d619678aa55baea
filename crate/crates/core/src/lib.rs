//! Template-and-grid custom layout generation.
//!
//! Netlists are parsed from a SPICE subset, placed onto technology templates,
//! routed on an integer track grid and checked by built-in DRC and LVS. Every
//! edit goes through a small command language, so a layout is reproducible
//! from its script.

pub mod dsl;
pub mod layout;
pub mod llm;
pub mod netlist;
pub mod place;
pub mod route;
pub mod runner;
pub mod tech;
pub mod verify;

pub use layout::{Label, LayoutDb, LayoutError, PlacedInstance, PlacedPin, Via, WireSegment};
pub use netlist::{Device, DeviceKind, Netlist, NetlistError};
pub use place::{OrderMethod, OrderResult, PlaceError, PlacementConstraints};
pub use tech::{Dir, Layer, Orient, Technology, Template, TemplateKind};
pub use route::{Occupancy, PinRef, RouteError, RouteOutcome, RoutePlan, Wirelength};
pub use verify::{Component, DrcRule, DrcViolation, LvsReport, Verdict, VerifyError, VerifyReport};
pub use dsl::{parse_command, parse_script, ApplyError, Command, Event, Session, SyntaxError};
pub use runner::{run_script, run_text, RunError, RunReport};
