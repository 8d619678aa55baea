//! Abstract process description: routing layers, vias and the template library.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TechError {
    #[error("schema error: {0}")]
    Schema(serde_json::Error),
    #[error("layers {lower} and {upper} are both {dir}; directions must alternate")]
    Direction { lower: String, upper: String, dir: Dir },
    #[error("template {template} pin {pin}: access point ({x}, {y}) is off the {layer} tracks")]
    OffGridPin {
        template: String,
        pin: String,
        layer: String,
        x: i64,
        y: i64,
    },
    #[error("invalid technology: {0}")]
    Invalid(String),
    #[error("template {template} has no pin {pin}")]
    UnknownPin { template: String, pin: String },
    #[error("unknown layer {0}")]
    UnknownLayer(String),
    #[error("unknown template {0}")]
    UnknownTemplate(String),
}

// Not a `#[from]` source: the message already embeds it.
impl From<serde_json::Error> for TechError {
    fn from(e: serde_json::Error) -> Self {
        TechError::Schema(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    H,
    V,
}

impl Dir {
    pub fn perpendicular(self) -> Dir {
        match self {
            Dir::H => Dir::V,
            Dir::V => Dir::H,
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dir::H => "H",
            Dir::V => "V",
        })
    }
}

/// Placement orientation. No 90-degree rotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum Orient {
    #[default]
    R0,
    MX,
    MY,
    R180,
}

impl Orient {
    pub const ALL: [Orient; 4] = [Orient::R0, Orient::MX, Orient::MY, Orient::R180];

    /// Maps a template-local point into the placed frame (before translation).
    pub fn apply(self, (dx, dy): (i64, i64), width: i64, height: i64) -> (i64, i64) {
        match self {
            Orient::R0 => (dx, dy),
            Orient::MY => (width - dx, dy),
            Orient::MX => (dx, height - dy),
            Orient::R180 => (width - dx, height - dy),
        }
    }
}

impl fmt::Display for Orient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orient::R0 => "R0",
            Orient::MX => "MX",
            Orient::MY => "MY",
            Orient::R180 => "R180",
        })
    }
}

impl FromStr for Orient {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "R0" => Ok(Orient::R0),
            "MX" => Ok(Orient::MX),
            "MY" => Ok(Orient::MY),
            "R180" => Ok(Orient::R180),
            _ => Err(format!("unknown orientation {s}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub name: String,
    pub direction: Dir,
    pub pitch: i64,
    pub offset: i64,
}

impl Layer {
    /// Coordinate that selects a track: x for vertical layers, y for horizontal.
    pub fn track_coord(&self, (x, y): (i64, i64)) -> i64 {
        match self.direction {
            Dir::V => x,
            Dir::H => y,
        }
    }

    /// Coordinate along the track.
    pub fn along_coord(&self, (x, y): (i64, i64)) -> i64 {
        match self.direction {
            Dir::V => y,
            Dir::H => x,
        }
    }

    pub fn is_track(&self, coord: i64) -> bool {
        (coord - self.offset).rem_euclid(self.pitch) == 0
    }

    pub fn on_track(&self, point: (i64, i64)) -> bool {
        self.is_track(self.track_coord(point))
    }

    /// Point at `along` on track `track`.
    pub fn point(&self, track: i64, along: i64) -> (i64, i64) {
        match self.direction {
            Dir::V => (track, along),
            Dir::H => (along, track),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViaRule {
    pub lower: String,
    pub upper: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateKind {
    PmosUnit,
    NmosUnit,
    GateCell,
}

/// One access point of a template pin, relative to the template origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessPoint(pub String, pub i64, pub i64);

impl AccessPoint {
    pub fn layer(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub name: String,
    pub kind: TemplateKind,
    pub width: i64,
    pub height: i64,
    pub pins: BTreeMap<String, Vec<AccessPoint>>,
}

/// A pin access point after placement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PinPoint {
    pub layer: String,
    pub x: i64,
    pub y: i64,
}

impl Template {
    pub fn pin(&self, name: &str) -> Option<(&String, &Vec<AccessPoint>)> {
        self.pins
            .get_key_value(name)
            .or_else(|| self.pins.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)))
    }

    /// Access points of `pin` after applying `orient` and translating by `origin`.
    pub fn resolve_pin(
        &self,
        pin: &str,
        origin: (i64, i64),
        orient: Orient,
    ) -> Result<Vec<PinPoint>, TechError> {
        let (_, points) = self.pin(pin).ok_or_else(|| TechError::UnknownPin {
            template: self.name.clone(),
            pin: pin.to_string(),
        })?;
        Ok(points
            .iter()
            .map(|AccessPoint(layer, dx, dy)| {
                let (x, y) = orient.apply((*dx, *dy), self.width, self.height);
                PinPoint {
                    layer: layer.clone(),
                    x: x + origin.0,
                    y: y + origin.1,
                }
            })
            .collect())
    }
}

fn default_row_gap() -> i64 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TechDoc {
    name: String,
    supply_names: Vec<String>,
    #[serde(default = "default_row_gap")]
    row_gap: i64,
    layers: Vec<Layer>,
    vias: Vec<ViaRule>,
    templates: Vec<Template>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Technology {
    pub name: String,
    pub supply_names: Vec<String>,
    /// Vertical gap between the NMOS and PMOS rows of transistor placement.
    pub row_gap: i64,
    pub layers: Vec<Layer>,
    pub vias: Vec<ViaRule>,
    pub templates: BTreeMap<String, Template>,
}

impl Technology {
    /// Parses and validates a tech document (JSON).
    pub fn from_json(text: &str) -> Result<Technology, TechError> {
        let doc: TechDoc = serde_json::from_str(text)?;
        let tech = Technology {
            name: doc.name,
            supply_names: doc.supply_names,
            row_gap: doc.row_gap,
            layers: doc.layers,
            vias: doc.vias,
            templates: doc
                .templates
                .into_iter()
                .map(|t| (t.name.clone(), t))
                .collect(),
        };
        tech.validate()?;
        Ok(tech)
    }

    pub fn to_json(&self) -> String {
        let doc = TechDoc {
            name: self.name.clone(),
            supply_names: self.supply_names.clone(),
            row_gap: self.row_gap,
            layers: self.layers.clone(),
            vias: self.vias.clone(),
            templates: self.templates.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("tech serializes")
    }

    fn validate(&self) -> Result<(), TechError> {
        if self.layers.is_empty() {
            return Err(TechError::Invalid("no routing layers".into()));
        }
        if self.row_gap < 0 {
            return Err(TechError::Invalid("row_gap must be non-negative".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.pitch <= 0 {
                return Err(TechError::Invalid(format!("layer {} has non-positive pitch", l.name)));
            }
            if l.offset < 0 || l.offset >= l.pitch {
                return Err(TechError::Invalid(format!(
                    "layer {} offset {} outside [0, {})",
                    l.name, l.offset, l.pitch
                )));
            }
            if self.layers[..i].iter().any(|o| o.name == l.name) {
                return Err(TechError::Invalid(format!("duplicate layer {}", l.name)));
            }
            if i > 0 && self.layers[i - 1].direction == l.direction {
                return Err(TechError::Direction {
                    lower: self.layers[i - 1].name.clone(),
                    upper: l.name.clone(),
                    dir: l.direction,
                });
            }
        }
        for v in &self.vias {
            let lo = self.layer_index(&v.lower).ok_or_else(|| TechError::UnknownLayer(v.lower.clone()))?;
            let hi = self.layer_index(&v.upper).ok_or_else(|| TechError::UnknownLayer(v.upper.clone()))?;
            if hi != lo + 1 {
                return Err(TechError::Invalid(format!(
                    "via {}/{} does not join adjacent layers",
                    v.lower, v.upper
                )));
            }
        }
        for t in self.templates.values() {
            if t.width <= 0 || t.height <= 0 {
                return Err(TechError::Invalid(format!("template {} has empty extent", t.name)));
            }
            for (pin, points) in &t.pins {
                if points.is_empty() {
                    return Err(TechError::Invalid(format!(
                        "template {} pin {pin} has no access points",
                        t.name
                    )));
                }
                for AccessPoint(layer, dx, dy) in points {
                    let l = self.layer(layer).ok_or_else(|| TechError::UnknownLayer(layer.clone()))?;
                    if !(0..=t.width).contains(dx) || !(0..=t.height).contains(dy) {
                        return Err(TechError::Invalid(format!(
                            "template {} pin {pin} access point ({dx}, {dy}) outside its {}x{} extent",
                            t.name, t.width, t.height
                        )));
                    }
                    // Every orientation must keep the point on a track.
                    for o in Orient::ALL {
                        let p = o.apply((*dx, *dy), t.width, t.height);
                        if !l.on_track(p) {
                            return Err(TechError::OffGridPin {
                                template: t.name.clone(),
                                pin: pin.clone(),
                                layer: layer.clone(),
                                x: p.0,
                                y: p.1,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name.eq_ignore_ascii_case(name))
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name.eq_ignore_ascii_case(name))
    }

    pub fn template(&self, name: &str) -> Option<&Template> {
        self.templates
            .get(name)
            .or_else(|| self.templates.values().find(|t| t.name.eq_ignore_ascii_case(name)))
    }

    pub fn template_of_kind(&self, kind: TemplateKind) -> Option<&Template> {
        self.templates.values().find(|t| t.kind == kind)
    }

    pub fn is_supply(&self, net: &str) -> bool {
        self.supply_names.iter().any(|s| s.eq_ignore_ascii_case(net))
    }

    /// True when a via rule joins the two layers (in either order).
    pub fn has_via(&self, a: &str, b: &str) -> bool {
        self.vias.iter().any(|v| {
            (v.lower.eq_ignore_ascii_case(a) && v.upper.eq_ignore_ascii_case(b))
                || (v.lower.eq_ignore_ascii_case(b) && v.upper.eq_ignore_ascii_case(a))
        })
    }
}

/// The bundled reference technology.
pub const ABS3ML_JSON: &str = include_str!("../../../corpus/abs3ml.json");

pub fn abs3ml() -> Technology {
    Technology::from_json(ABS3ML_JSON).expect("bundled technology is valid")
}
