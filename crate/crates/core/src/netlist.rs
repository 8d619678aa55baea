//! SPICE subset parser and the hierarchical netlist model.
//!
//! The accepted subset is deliberately small: `*` comments, `+`
//! continuations, `.SUBCKT`/`.ENDS` blocks, `M` (MOSFET) and `X`
//! (subcircuit instance) element lines. Keywords and identifiers compare
//! case-insensitively; names keep the spelling of their first appearance.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::Serialize;

/// Nets treated as supplies when nothing else is configured.
pub const DEFAULT_SUPPLY_NAMES: [&str; 5] = ["VDD", "VSS", "VDD!", "VSS!", "GND"];

/// MOSFET terminal order.
pub const MOS_TERMINALS: [&str; 4] = ["D", "G", "S", "B"];

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize)]
pub enum NetlistError {
    #[error("line {line}: .SUBCKT {name} is missing its .ENDS")]
    UnterminatedSubckt { line: usize, name: String },
    #[error("line {line}: malformed device line: {reason}")]
    MalformedDeviceLine { line: usize, reason: String },
    #[error("line {line}: duplicate device name {name}")]
    DuplicateDeviceName { line: usize, name: String },
    #[error("line {line}: cannot infer polarity of MOS model {model}")]
    UnknownModel { line: usize, model: String },
    #[error("line {line}: unsupported line: {text}")]
    UnsupportedLine { line: usize, text: String },
    #[error("device {0} is a subcircuit instance; a transistor-level netlist is required")]
    NotTransistorLevel(String),
    #[error("no .SUBCKT block found")]
    NoSubckt,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum DeviceKind {
    Pmos,
    Nmos,
    Subckt(String),
}

impl DeviceKind {
    pub fn is_mos(&self) -> bool {
        matches!(self, DeviceKind::Pmos | DeviceKind::Nmos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Device {
    pub name: String,
    pub kind: DeviceKind,
    /// MOS model name as written; `None` for subcircuit instances.
    pub model: Option<String>,
    /// `(terminal, net)` in terminal order. MOS terminals are `D G S B`;
    /// subcircuit terminals take the referenced port names when the
    /// reference resolves, otherwise their 1-based position.
    pub terminals: Vec<(String, String)>,
    pub params: BTreeMap<String, f64>,
}

impl Device {
    pub fn net_of(&self, terminal: &str) -> Option<&str> {
        self.terminals
            .iter()
            .find(|(t, _)| t.eq_ignore_ascii_case(terminal))
            .map(|(_, n)| n.as_str())
    }

    pub fn subckt_ref(&self) -> Option<&str> {
        match &self.kind {
            DeviceKind::Subckt(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Netlist {
    pub name: String,
    pub ports: Vec<String>,
    pub devices: Vec<Device>,
    pub nets: BTreeSet<String>,
    pub supply_names: BTreeSet<String>,
    /// Subcircuit references that no block in the parsed file defines.
    pub unresolved_refs: BTreeSet<String>,
}

impl Netlist {
    pub fn new(name: impl Into<String>) -> Self {
        Netlist {
            name: name.into(),
            ports: Vec::new(),
            devices: Vec::new(),
            nets: BTreeSet::new(),
            supply_names: DEFAULT_SUPPLY_NAMES.iter().map(|s| s.to_string()).collect(),
            unresolved_refs: BTreeSet::new(),
        }
    }

    pub fn is_supply(&self, net: &str) -> bool {
        self.supply_names.iter().any(|s| s.eq_ignore_ascii_case(net))
    }

    /// Replaces the supply set (the technology file may override the default).
    pub fn with_supply_names<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.supply_names = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn device(&self, name: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.name.eq_ignore_ascii_case(name))
    }

    pub fn is_transistor_level(&self) -> bool {
        self.devices.iter().all(|d| d.kind.is_mos())
    }

    pub fn is_gate_level(&self) -> bool {
        self.devices.iter().all(|d| !d.kind.is_mos())
    }

    /// Non-supply nets in byte-lexicographic order.
    pub fn signal_nets(&self) -> Vec<String> {
        self.nets.iter().filter(|n| !self.is_supply(n)).cloned().collect()
    }

    /// Expands subcircuit instances whose reference is defined in `library`
    /// by one level. Child devices are named `<inst>/<device>`, internal
    /// nets `<inst>/<net>`; supply nets stay global.
    pub fn flatten_one_level(&self, library: &[Netlist]) -> Netlist {
        let mut out = Netlist {
            name: self.name.clone(),
            ports: self.ports.clone(),
            devices: Vec::new(),
            nets: self.ports.iter().cloned().collect(),
            supply_names: self.supply_names.clone(),
            unresolved_refs: BTreeSet::new(),
        };
        for dev in &self.devices {
            let child = dev
                .subckt_ref()
                .and_then(|r| library.iter().find(|n| n.name.eq_ignore_ascii_case(r)));
            let Some(child) = child else {
                if let Some(r) = dev.subckt_ref() {
                    out.unresolved_refs.insert(r.to_string());
                }
                out.nets.extend(dev.terminals.iter().map(|(_, n)| n.clone()));
                out.devices.push(dev.clone());
                continue;
            };
            let port_map: HashMap<String, &str> = child
                .ports
                .iter()
                .zip(dev.terminals.iter())
                .map(|(p, (_, n))| (p.to_ascii_uppercase(), n.as_str()))
                .collect();
            let map_net = |net: &str| -> String {
                if let Some(outer) = port_map.get(&net.to_ascii_uppercase()) {
                    outer.to_string()
                } else if child.is_supply(net) {
                    net.to_string()
                } else {
                    format!("{}/{}", dev.name, net)
                }
            };
            for cd in &child.devices {
                let terminals: Vec<(String, String)> = cd
                    .terminals
                    .iter()
                    .map(|(t, n)| (t.clone(), map_net(n)))
                    .collect();
                out.nets.extend(terminals.iter().map(|(_, n)| n.clone()));
                if let Some(r) = cd.subckt_ref() {
                    if !library.iter().any(|n| n.name.eq_ignore_ascii_case(r)) {
                        out.unresolved_refs.insert(r.to_string());
                    }
                }
                out.devices.push(Device {
                    name: format!("{}/{}", dev.name, cd.name),
                    kind: cd.kind.clone(),
                    model: cd.model.clone(),
                    terminals,
                    params: cd.params.clone(),
                });
            }
        }
        out
    }
}

/// Picks the top cell of a parsed file: the last block that no other block
/// instantiates (falling back to the last block).
pub fn select_top(library: &[Netlist]) -> Option<&Netlist> {
    let referenced: BTreeSet<String> = library
        .iter()
        .flat_map(|n| n.devices.iter())
        .filter_map(|d| d.subckt_ref().map(|r| r.to_ascii_uppercase()))
        .collect();
    library
        .iter()
        .rev()
        .find(|n| !referenced.contains(&n.name.to_ascii_uppercase()))
        .or_else(|| library.last())
}

/// Parses `text` and returns its top cell.
pub fn parse_top(text: &str) -> Result<Netlist, NetlistError> {
    let library = parse_spice(text)?;
    select_top(&library).cloned().ok_or(NetlistError::NoSubckt)
}

/// Looks a block up by name, case-insensitively.
pub fn find_cell<'a>(library: &'a [Netlist], name: &str) -> Option<&'a Netlist> {
    library.iter().find(|n| n.name.eq_ignore_ascii_case(name))
}

struct LogicalLine {
    line: usize,
    text: String,
}

fn logical_lines(text: &str) -> Vec<LogicalLine> {
    let mut out: Vec<LogicalLine> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('*') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('+') {
            if let Some(last) = out.last_mut() {
                last.text.push(' ');
                last.text.push_str(rest.trim());
                continue;
            }
        }
        out.push(LogicalLine {
            line: idx + 1,
            text: trimmed.to_string(),
        });
    }
    out
}

/// Parses a SPICE value with an optional engineering suffix (`1u`, `2meg`).
pub fn parse_value(token: &str) -> Option<f64> {
    let lower = token.to_ascii_lowercase();
    let split = lower
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e')
        .unwrap_or(lower.len());
    // `1e-6` is numeric; an `e` only ends the mantissa when a letter follows it.
    let (num, suffix) = lower.split_at(split);
    let base: f64 = num.parse().ok()?;
    let scale = if suffix.starts_with("meg") {
        1e6
    } else {
        match suffix.chars().next() {
            None => 1.0,
            Some('t') => 1e12,
            Some('g') => 1e9,
            Some('k') => 1e3,
            Some('m') => 1e-3,
            Some('u') => 1e-6,
            Some('n') => 1e-9,
            Some('p') => 1e-12,
            Some('f') => 1e-15,
            Some(_) => return None,
        }
    };
    Some(base * scale)
}

/// Case-insensitive interner that remembers the first spelling of each name.
#[derive(Default)]
struct NetTable {
    spelling: HashMap<String, String>,
}

impl NetTable {
    fn intern(&mut self, name: &str) -> String {
        self.spelling
            .entry(name.to_ascii_uppercase())
            .or_insert_with(|| name.to_string())
            .clone()
    }
}

struct Block {
    netlist: Netlist,
    line: usize,
    table: NetTable,
    names: BTreeSet<String>,
    // (device index, line) for post-pass terminal checks
    instance_lines: Vec<(usize, usize)>,
}

/// Parses every `.SUBCKT` block of `text`, in file order.
pub fn parse_spice(text: &str) -> Result<Vec<Netlist>, NetlistError> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut open: Option<Block> = None;

    for LogicalLine { line, text } in logical_lines(text) {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let head = tokens[0];
        let upper = head.to_ascii_uppercase();
        if upper == ".SUBCKT" {
            if let Some(b) = &open {
                return Err(NetlistError::UnterminatedSubckt {
                    line: b.line,
                    name: b.netlist.name.clone(),
                });
            }
            let Some(name) = tokens.get(1) else {
                return Err(NetlistError::UnsupportedLine { line, text });
            };
            let mut block = Block {
                netlist: Netlist::new(*name),
                line,
                table: NetTable::default(),
                names: BTreeSet::new(),
                instance_lines: Vec::new(),
            };
            for p in &tokens[2..] {
                if p.contains('=') {
                    continue;
                }
                let net = block.table.intern(p);
                block.netlist.nets.insert(net.clone());
                block.netlist.ports.push(net);
            }
            open = Some(block);
        } else if upper == ".ENDS" {
            match open.take() {
                Some(b) => blocks.push(b),
                None => return Err(NetlistError::UnsupportedLine { line, text }),
            }
        } else if upper == ".END" {
            break;
        } else if upper.starts_with('M') || upper.starts_with('X') {
            let Some(block) = open.as_mut() else {
                return Err(NetlistError::MalformedDeviceLine {
                    line,
                    reason: format!("{head} appears outside a .SUBCKT block"),
                });
            };
            let devices = if upper.starts_with('M') {
                parse_mos(&tokens, line, &mut block.table)?
            } else {
                vec![parse_instance(&tokens, line, &mut block.table)?]
            };
            for dev in devices {
                if !block.names.insert(dev.name.to_ascii_uppercase()) {
                    return Err(NetlistError::DuplicateDeviceName {
                        line,
                        name: dev.name,
                    });
                }
                block
                    .netlist
                    .nets
                    .extend(dev.terminals.iter().map(|(_, n)| n.clone()));
                if dev.subckt_ref().is_some() {
                    block
                        .instance_lines
                        .push((block.netlist.devices.len(), line));
                }
                block.netlist.devices.push(dev);
            }
        } else {
            return Err(NetlistError::UnsupportedLine { line, text });
        }
    }
    if let Some(b) = open {
        return Err(NetlistError::UnterminatedSubckt {
            line: b.line,
            name: b.netlist.name,
        });
    }

    // Resolve subcircuit references against the whole file.
    let ports: HashMap<String, Vec<String>> = blocks
        .iter()
        .map(|b| (b.netlist.name.to_ascii_uppercase(), b.netlist.ports.clone()))
        .collect();
    let mut out = Vec::with_capacity(blocks.len());
    for mut block in blocks {
        for &(idx, line) in &block.instance_lines {
            let dev = &mut block.netlist.devices[idx];
            let reference = dev.subckt_ref().unwrap_or_default().to_ascii_uppercase();
            match ports.get(&reference) {
                Some(port_names) => {
                    if port_names.len() != dev.terminals.len() {
                        return Err(NetlistError::MalformedDeviceLine {
                            line,
                            reason: format!(
                                "{} connects {} nets but {} has {} ports",
                                dev.name,
                                dev.terminals.len(),
                                dev.subckt_ref().unwrap_or_default(),
                                port_names.len()
                            ),
                        });
                    }
                    for ((t, _), p) in dev.terminals.iter_mut().zip(port_names) {
                        *t = p.clone();
                    }
                }
                None => {
                    let r = dev.subckt_ref().unwrap_or_default().to_string();
                    block.netlist.unresolved_refs.insert(r);
                }
            }
        }
        out.push(block.netlist);
    }
    Ok(out)
}

fn split_params<'a>(tokens: &[&'a str]) -> (Vec<&'a str>, Vec<(&'a str, &'a str)>) {
    let mut positional = Vec::new();
    let mut params = Vec::new();
    for t in tokens {
        match t.split_once('=') {
            Some((k, v)) => params.push((k, v)),
            None => positional.push(*t),
        }
    }
    (positional, params)
}

fn parse_params(
    pairs: &[(&str, &str)],
    line: usize,
) -> Result<BTreeMap<String, f64>, NetlistError> {
    let mut params = BTreeMap::new();
    for (k, v) in pairs {
        let value = parse_value(v).ok_or_else(|| NetlistError::MalformedDeviceLine {
            line,
            reason: format!("parameter {k} has non-numeric value {v}"),
        })?;
        params.insert(k.to_ascii_lowercase(), value);
    }
    Ok(params)
}

fn parse_mos(
    tokens: &[&str],
    line: usize,
    table: &mut NetTable,
) -> Result<Vec<Device>, NetlistError> {
    let (positional, pairs) = split_params(&tokens[1..]);
    if positional.len() != 5 {
        return Err(NetlistError::MalformedDeviceLine {
            line,
            reason: format!(
                "{} needs 4 terminals and a model, found {} fields",
                tokens[0],
                positional.len()
            ),
        });
    }
    let model = positional[4];
    let lower = model.to_ascii_lowercase();
    let kind = if lower.contains("pmos") {
        DeviceKind::Pmos
    } else if lower.contains("nmos") {
        DeviceKind::Nmos
    } else {
        return Err(NetlistError::UnknownModel {
            line,
            model: model.to_string(),
        });
    };
    let terminals: Vec<(String, String)> = MOS_TERMINALS
        .iter()
        .zip(&positional[..4])
        .map(|(t, n)| (t.to_string(), table.intern(n)))
        .collect();
    let mut params = parse_params(&pairs, line)?;
    let fingers = match params.remove("nf") {
        None => 1,
        Some(v) if v >= 1.0 && v.fract() == 0.0 => v as usize,
        Some(v) => {
            return Err(NetlistError::MalformedDeviceLine {
                line,
                reason: format!("nf must be a positive integer, got {v}"),
            })
        }
    };
    let base = Device {
        name: tokens[0].to_string(),
        kind,
        model: Some(model.to_string()),
        terminals,
        params,
    };
    if fingers == 1 {
        return Ok(vec![base]);
    }
    Ok((0..fingers)
        .map(|f| Device {
            name: format!("{}_f{}", base.name, f),
            ..base.clone()
        })
        .collect())
}

fn parse_instance(
    tokens: &[&str],
    line: usize,
    table: &mut NetTable,
) -> Result<Device, NetlistError> {
    let (positional, pairs) = split_params(&tokens[1..]);
    let Some((reference, nets)) = positional.split_last() else {
        return Err(NetlistError::MalformedDeviceLine {
            line,
            reason: format!("{} names no subcircuit", tokens[0]),
        });
    };
    let terminals = nets
        .iter()
        .enumerate()
        .map(|(i, n)| ((i + 1).to_string(), table.intern(n)))
        .collect();
    Ok(Device {
        name: tokens[0].to_string(),
        kind: DeviceKind::Subckt(reference.to_string()),
        model: None,
        terminals,
        params: parse_params(&pairs, line)?,
    })
}

fn write_device(out: &mut String, dev: &Device) -> fmt::Result {
    write!(out, "{}", dev.name)?;
    for (_, net) in &dev.terminals {
        write!(out, " {net}")?;
    }
    match &dev.kind {
        DeviceKind::Subckt(r) => write!(out, " {r}")?,
        _ => write!(out, " {}", dev.model.as_deref().unwrap_or("nmos"))?,
    }
    for (k, v) in &dev.params {
        write!(out, " {k}={v}")?;
    }
    writeln!(out)
}

/// Canonical text form of one block: upper-case keywords, ports in
/// declaration order, one device per line.
pub fn print_netlist(n: &Netlist) -> String {
    let mut out = String::new();
    let _ = write!(out, ".SUBCKT {}", n.name);
    for p in &n.ports {
        let _ = write!(out, " {p}");
    }
    out.push('\n');
    for d in &n.devices {
        let _ = write_device(&mut out, d);
    }
    let _ = writeln!(out, ".ENDS {}", n.name);
    out
}

pub fn print_library(library: &[Netlist]) -> String {
    library.iter().map(print_netlist).collect::<Vec<_>>().join("\n")
}

/// Greedy complementary pairing of PMOS and NMOS devices on a shared gate net.
///
/// Candidates that also share a drain net are taken first, then candidates in
/// device-name order. Returns `(pairs, unpaired)`; pairs are sorted by PMOS name,
/// unpaired names are sorted.
pub fn complementary_pairs(
    n: &Netlist,
) -> Result<(Vec<(String, String)>, Vec<String>), NetlistError> {
    if let Some(d) = n.devices.iter().find(|d| !d.kind.is_mos()) {
        return Err(NetlistError::NotTransistorLevel(d.name.clone()));
    }
    let pmos: Vec<&Device> = n.devices.iter().filter(|d| d.kind == DeviceKind::Pmos).collect();
    let nmos: Vec<&Device> = n.devices.iter().filter(|d| d.kind == DeviceKind::Nmos).collect();

    let same = |a: Option<&str>, b: Option<&str>| match (a, b) {
        (Some(a), Some(b)) => a.eq_ignore_ascii_case(b),
        _ => false,
    };
    let mut candidates: Vec<(bool, &str, &str)> = Vec::new();
    for p in &pmos {
        for m in &nmos {
            if same(p.net_of("G"), m.net_of("G")) {
                let drain = same(p.net_of("D"), m.net_of("D"));
                candidates.push((!drain, p.name.as_str(), m.name.as_str()));
            }
        }
    }
    candidates.sort();

    let mut used: BTreeSet<&str> = BTreeSet::new();
    let mut pairs = Vec::new();
    for (_, p, m) in candidates {
        if used.contains(p) || used.contains(m) {
            continue;
        }
        used.insert(p);
        used.insert(m);
        pairs.push((p.to_string(), m.to_string()));
    }
    pairs.sort();
    let mut unpaired: Vec<String> = n
        .devices
        .iter()
        .filter(|d| !used.contains(d.name.as_str()))
        .map(|d| d.name.clone())
        .collect();
    unpaired.sort();
    Ok((pairs, unpaired))
}
