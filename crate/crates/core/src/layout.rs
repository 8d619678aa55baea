//! Layout database: placed instances, track wires, vias and labels.
//!
//! Every mutating operation takes `&self` and returns a new snapshot, so the
//! session layer can keep old snapshots around for undo. Collections are kept
//! in canonical order at all times, which makes structural equality and
//! byte-level equality of the canonical JSON coincide.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::tech::{Dir, Orient, PinPoint, Technology};

mod svg;

pub use svg::{to_svg, SvgOptions};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize)]
pub enum LayoutError {
    #[error("instance {0} already exists")]
    DuplicateInstance(String),
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("instance {name} would overlap {existing}")]
    Overlap { name: String, existing: String },
    #[error("unknown instance {0}")]
    UnknownInstance(String),
    #[error("instance {instance}: pin nets {given:?} do not match template pins {expected:?}")]
    PinMismatch {
        instance: String,
        given: Vec<String>,
        expected: Vec<String>,
    },
    #[error("malformed layout file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacedInstance {
    pub name: String,
    pub template: String,
    pub origin: (i64, i64),
    pub orient: Orient,
    /// Template extent, copied at placement so the file is self-describing.
    pub width: i64,
    pub height: i64,
    pub pin_nets: BTreeMap<String, String>,
}

impl PlacedInstance {
    /// Closed bounding box `(x0, y0, x1, y1)`.
    pub fn bbox(&self) -> (i64, i64, i64, i64) {
        let (x, y) = self.origin;
        (x, y, x + self.width, y + self.height)
    }

    /// Interiors intersect. Shared edges (abutment) do not count.
    pub fn overlaps(&self, other: &PlacedInstance) -> bool {
        let (ax0, ay0, ax1, ay1) = self.bbox();
        let (bx0, by0, bx1, by1) = other.bbox();
        ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
    }
}

/// A wire on one routing track. `track` is the perpendicular coordinate
/// (x for vertical layers, y for horizontal), `span` the inclusive extent
/// along the track.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireSegment {
    pub net: String,
    pub layer: String,
    pub dir: Dir,
    pub track: i64,
    pub span: (i64, i64),
}

impl WireSegment {
    pub fn length(&self) -> i64 {
        self.span.1 - self.span.0
    }

    pub fn endpoints(&self) -> [(i64, i64); 2] {
        match self.dir {
            Dir::H => [(self.span.0, self.track), (self.span.1, self.track)],
            Dir::V => [(self.track, self.span.0), (self.track, self.span.1)],
        }
    }

    fn sort_key(&self) -> (&str, i64, i64, &str, i64, Dir) {
        (&self.layer, self.track, self.span.0, &self.net, self.span.1, self.dir)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Via {
    pub net: String,
    pub lower: String,
    pub upper: String,
    pub x: i64,
    pub y: i64,
}

impl Via {
    fn sort_key(&self) -> (&str, &str, i64, i64, &str) {
        (&self.lower, &self.upper, self.x, self.y, &self.net)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Label {
    pub net: String,
    pub layer: String,
    pub x: i64,
    pub y: i64,
}

impl Label {
    fn sort_key(&self) -> (&str, i64, i64, &str) {
        (&self.layer, self.x, self.y, &self.net)
    }
}

/// A resolved pin access point together with its owner and net.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PlacedPin {
    pub instance: String,
    pub pin: String,
    pub net: String,
    pub points: Vec<PinPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutDb {
    pub tech_name: String,
    pub cell_name: String,
    pub instances: BTreeMap<String, PlacedInstance>,
    pub wires: Vec<WireSegment>,
    pub vias: Vec<Via>,
    pub labels: Vec<Label>,
}

impl LayoutDb {
    pub fn new(tech_name: impl Into<String>, cell_name: impl Into<String>) -> Self {
        LayoutDb {
            tech_name: tech_name.into(),
            cell_name: cell_name.into(),
            ..Default::default()
        }
    }

    fn normalize(&mut self) {
        self.wires.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        self.wires.dedup();
        self.vias.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        self.vias.dedup();
        self.labels.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        self.labels.dedup();
    }

    pub fn instance(&self, name: &str) -> Result<&PlacedInstance, LayoutError> {
        self.instances
            .get(name)
            .ok_or_else(|| LayoutError::UnknownInstance(name.to_string()))
    }

    fn check_overlap(&self, inst: &PlacedInstance, ignore: &[&str]) -> Result<(), LayoutError> {
        match self
            .instances
            .values()
            .filter(|o| !ignore.contains(&o.name.as_str()))
            .find(|o| o.overlaps(inst))
        {
            Some(o) => Err(LayoutError::Overlap {
                name: inst.name.clone(),
                existing: o.name.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn place_instance(
        &self,
        tech: &Technology,
        name: &str,
        template: &str,
        origin: (i64, i64),
        orient: Orient,
        pin_nets: BTreeMap<String, String>,
    ) -> Result<LayoutDb, LayoutError> {
        if self.instances.contains_key(name) {
            return Err(LayoutError::DuplicateInstance(name.to_string()));
        }
        let t = tech
            .template(template)
            .ok_or_else(|| LayoutError::UnknownTemplate(template.to_string()))?;
        if !pin_nets.keys().eq(t.pins.keys()) {
            return Err(LayoutError::PinMismatch {
                instance: name.to_string(),
                given: pin_nets.keys().cloned().collect(),
                expected: t.pins.keys().cloned().collect(),
            });
        }
        let inst = PlacedInstance {
            name: name.to_string(),
            template: t.name.clone(),
            origin,
            orient,
            width: t.width,
            height: t.height,
            pin_nets,
        };
        self.check_overlap(&inst, &[])?;
        let mut db = self.clone();
        db.instances.insert(name.to_string(), inst);
        Ok(db)
    }

    /// Moves an instance. Attached routing keeps its coordinates.
    pub fn move_instance(&self, name: &str, origin: (i64, i64)) -> Result<LayoutDb, LayoutError> {
        let mut inst = self.instance(name)?.clone();
        inst.origin = origin;
        self.check_overlap(&inst, &[name])?;
        let mut db = self.clone();
        db.instances.insert(name.to_string(), inst);
        Ok(db)
    }

    /// Exchanges origins and orientations of two instances.
    pub fn swap_instances(&self, a: &str, b: &str) -> Result<LayoutDb, LayoutError> {
        let mut ia = self.instance(a)?.clone();
        let mut ib = self.instance(b)?.clone();
        std::mem::swap(&mut ia.origin, &mut ib.origin);
        std::mem::swap(&mut ia.orient, &mut ib.orient);
        if a != b {
            self.check_overlap(&ia, &[a, b])?;
            self.check_overlap(&ib, &[a, b])?;
            if ia.overlaps(&ib) {
                return Err(LayoutError::Overlap {
                    name: a.to_string(),
                    existing: b.to_string(),
                });
            }
        }
        let mut db = self.clone();
        db.instances.insert(a.to_string(), ia);
        db.instances.insert(b.to_string(), ib);
        Ok(db)
    }

    /// Adds raw geometry without any legality checks.
    pub fn with_geometry(
        &self,
        wires: impl IntoIterator<Item = WireSegment>,
        vias: impl IntoIterator<Item = Via>,
    ) -> LayoutDb {
        let mut db = self.clone();
        db.wires.extend(wires);
        db.vias.extend(vias);
        db.normalize();
        db
    }

    pub fn with_label(&self, label: Label) -> LayoutDb {
        let mut db = self.clone();
        db.labels.push(label);
        db.normalize();
        db
    }

    pub fn without_wire(&self, index: usize) -> LayoutDb {
        let mut db = self.clone();
        if index < db.wires.len() {
            db.wires.remove(index);
        }
        db
    }

    pub fn without_via(&self, index: usize) -> LayoutDb {
        let mut db = self.clone();
        if index < db.vias.len() {
            db.vias.remove(index);
        }
        db
    }

    /// Drops every wire and via tagged with `net`.
    pub fn without_net_geometry(&self, net: &str) -> LayoutDb {
        let mut db = self.clone();
        db.wires.retain(|w| w.net != net);
        db.vias.retain(|v| v.net != net);
        db
    }

    pub fn has_net(&self, net: &str) -> bool {
        self.instances.values().any(|i| i.pin_nets.values().any(|n| n == net))
    }

    /// `(instance, pin)` pairs bound to `net`, in name order.
    pub fn net_pins(&self, net: &str) -> Vec<(String, String)> {
        self.instances
            .values()
            .flat_map(|i| {
                i.pin_nets
                    .iter()
                    .filter(|(_, n)| *n == net)
                    .map(|(p, _)| (i.name.clone(), p.clone()))
            })
            .collect()
    }

    /// Every net bound to a placed pin.
    pub fn pin_net_names(&self) -> BTreeSet<String> {
        self.instances
            .values()
            .flat_map(|i| i.pin_nets.values().cloned())
            .collect()
    }

    pub fn routed_nets(&self) -> BTreeSet<String> {
        self.wires
            .iter()
            .map(|w| w.net.clone())
            .chain(self.vias.iter().map(|v| v.net.clone()))
            .collect()
    }

    /// Resolves every placed pin. Instances whose template is missing from
    /// `tech` are skipped.
    pub fn placed_pins(&self, tech: &Technology) -> Vec<PlacedPin> {
        let mut out = Vec::new();
        for inst in self.instances.values() {
            let Some(t) = tech.template(&inst.template) else {
                continue;
            };
            for (pin, net) in &inst.pin_nets {
                if let Ok(points) = t.resolve_pin(pin, inst.origin, inst.orient) {
                    out.push(PlacedPin {
                        instance: inst.name.clone(),
                        pin: pin.clone(),
                        net: net.clone(),
                        points,
                    });
                }
            }
        }
        out
    }

    /// Deterministic JSON: sorted keys, canonical collection order.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("layout serializes");
        let mut bytes = serde_json::to_vec_pretty(&value).expect("layout serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json(text: &str) -> Result<LayoutDb, LayoutError> {
        let mut db: LayoutDb =
            serde_json::from_str(text).map_err(|e| LayoutError::Parse(e.to_string()))?;
        for w in &db.wires {
            if w.span.0 > w.span.1 {
                return Err(LayoutError::Parse(format!(
                    "wire on {} track {} has reversed span",
                    w.layer, w.track
                )));
            }
        }
        db.normalize();
        Ok(db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tech::abs3ml;

    fn mos_nets(g: &str) -> BTreeMap<String, String> {
        [("D", "d"), ("G", g), ("S", "s")]
            .iter()
            .map(|(p, n)| (p.to_string(), n.to_string()))
            .collect()
    }

    fn place(db: &LayoutDb, name: &str, x: i64) -> Result<LayoutDb, LayoutError> {
        db.place_instance(&abs3ml(), name, "NMOS_UNIT", (x, 0), Orient::R0, mos_nets("g"))
    }

    #[test]
    fn place_overlap_and_abutment() {
        let db = LayoutDb::new("abs3ml", "t");
        let one = place(&db, "MN0", 0).unwrap();
        assert_eq!(one.instances.len(), 1);
        assert!(db.instances.is_empty(), "input snapshot untouched");
        // unit templates are 4 wide
        assert_eq!(
            place(&one, "MN1", 1).unwrap_err(),
            LayoutError::Overlap {
                name: "MN1".into(),
                existing: "MN0".into()
            }
        );
        let two = place(&one, "MN1", 4).unwrap();
        assert_eq!(two.instances.len(), 2);
        assert_eq!(place(&two, "MN1", 20).unwrap_err(), LayoutError::DuplicateInstance("MN1".into()));
        assert!(matches!(
            two.place_instance(&abs3ml(), "X", "NOPE", (0, 9), Orient::R0, BTreeMap::new()),
            Err(LayoutError::UnknownTemplate(_))
        ));
        assert!(matches!(
            two.place_instance(&abs3ml(), "X", "NMOS_UNIT", (0, 9), Orient::R0, BTreeMap::new()),
            Err(LayoutError::PinMismatch { .. })
        ));
    }

    #[test]
    fn move_and_swap() {
        let db = place(&place(&LayoutDb::new("abs3ml", "t"), "A", 0).unwrap(), "B", 4).unwrap();
        let swapped = db.swap_instances("A", "B").unwrap();
        assert_eq!(swapped.instances["A"].origin, (4, 0));
        assert_eq!(swapped.instances["B"].origin, (0, 0));
        assert!(matches!(db.move_instance("A", (2, 0)), Err(LayoutError::Overlap { .. })));
        assert!(matches!(db.move_instance("Z", (2, 0)), Err(LayoutError::UnknownInstance(_))));
        let moved = db.move_instance("A", (0, 10)).unwrap();
        assert_eq!(moved.instances["A"].origin, (0, 10));
    }

    #[test]
    fn canonical_json_is_order_independent() {
        let empty = LayoutDb::new("abs3ml", "t");
        assert_eq!(empty.to_canonical_json(), empty.to_canonical_json());

        let ab = place(&place(&empty, "A", 0).unwrap(), "B", 4).unwrap();
        let ba = place(&place(&empty, "B", 4).unwrap(), "A", 0).unwrap();
        let w1 = WireSegment {
            net: "g".into(),
            layer: "M2".into(),
            dir: Dir::H,
            track: 5,
            span: (2, 6),
        };
        let w2 = WireSegment {
            net: "d".into(),
            layer: "M1".into(),
            dir: Dir::V,
            track: 3,
            span: (2, 5),
        };
        let ab = ab.with_geometry([w1.clone(), w2.clone()], []);
        let ba = ba.with_geometry([w2], []).with_geometry([w1], []);
        assert_eq!(ab.to_canonical_json(), ba.to_canonical_json());

        let back = LayoutDb::from_json(std::str::from_utf8(&ab.to_canonical_json()).unwrap()).unwrap();
        assert_eq!(back, ab);
    }

    #[test]
    fn json_keys_are_sorted() {
        let db = place(&LayoutDb::new("abs3ml", "t"), "A", 0).unwrap();
        let text = String::from_utf8(db.to_canonical_json()).unwrap();
        let top: Vec<usize> = ["\"cell_name\"", "\"instances\"", "\"labels\"", "\"tech_name\"", "\"vias\"", "\"wires\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(top.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_reversed_span() {
        let text = r#"{"tech_name":"t","cell_name":"c","instances":{},"vias":[],"labels":[],
            "wires":[{"net":"a","layer":"M1","dir":"V","track":0,"span":[3,1]}]}"#;
        assert!(LayoutDb::from_json(text).is_err());
    }
}
