use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::LayoutDb;

#[derive(Debug, Clone)]
pub struct SvgOptions {
    /// Pixels per grid unit.
    pub scale: i64,
    /// Layers drawn as (possibly empty) groups, bottom first. When empty the
    /// layers referenced by the layout are used, sorted by name.
    pub layers: Vec<String>,
    pub hide_layers: Vec<String>,
}

impl Default for SvgOptions {
    fn default() -> Self {
        SvgOptions {
            scale: 20,
            layers: Vec::new(),
            hide_layers: Vec::new(),
        }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn layer_color(name: &str) -> &'static str {
    let digits: String = name.chars().filter(|c| c.is_ascii_digit()).collect();
    let idx = match digits.parse::<usize>() {
        Ok(n) => n.saturating_sub(1),
        // FNV-1a over the name for layers without a number
        Err(_) => name
            .bytes()
            .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
            as usize,
    };
    PALETTE[idx % PALETTE.len()]
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the layout as SVG 1.1. Output depends only on `db` and `options`.
pub fn to_svg(db: &LayoutDb, options: &SvgOptions) -> String {
    let s = options.scale.max(1);
    let hidden = |layer: &str| options.hide_layers.iter().any(|h| h.eq_ignore_ascii_case(layer));

    let mut xs = vec![0i64];
    let mut ys = vec![0i64];
    for i in db.instances.values() {
        let (x0, y0, x1, y1) = i.bbox();
        xs.extend([x0, x1]);
        ys.extend([y0, y1]);
    }
    for w in &db.wires {
        for (x, y) in w.endpoints() {
            xs.push(x);
            ys.push(y);
        }
    }
    xs.extend(db.vias.iter().map(|v| v.x).chain(db.labels.iter().map(|l| l.x)));
    ys.extend(db.vias.iter().map(|v| v.y).chain(db.labels.iter().map(|l| l.y)));
    let (xmin, xmax) = (*xs.iter().min().unwrap() - 1, *xs.iter().max().unwrap() + 1);
    let (ymin, ymax) = (*ys.iter().min().unwrap() - 1, *ys.iter().max().unwrap() + 1);
    let px = |x: i64| (x - xmin) * s;
    let py = |y: i64| (ymax - y) * s;

    let layers: Vec<String> = if options.layers.is_empty() {
        let mut set: BTreeSet<String> = db.wires.iter().map(|w| w.layer.clone()).collect();
        set.extend(db.vias.iter().flat_map(|v| [v.lower.clone(), v.upper.clone()]));
        set.extend(db.labels.iter().map(|l| l.layer.clone()));
        set.into_iter().collect()
    } else {
        options.layers.clone()
    };

    let mut out = String::new();
    let (w, h) = ((xmax - xmin) * s, (ymax - ymin) * s);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<title>{}</title>"#, escape(&db.cell_name));
    let _ = writeln!(out, r##"<g id="instances" fill="none" stroke="#444" stroke-width="1">"##);
    for i in db.instances.values() {
        let (x0, y0, x1, y1) = i.bbox();
        let _ = writeln!(
            out,
            r#"<rect class="instance" data-name="{n}" x="{}" y="{}" width="{}" height="{}"/>"#,
            px(x0),
            py(y1),
            (x1 - x0) * s,
            (y1 - y0) * s,
            n = escape(&i.name)
        );
        let _ = writeln!(
            out,
            r##"<text class="instance-name" x="{}" y="{}" font-size="{}" fill="#444" stroke="none">{}</text>"##,
            px(x0) + s / 4,
            py(y1) + s,
            (s * 3 / 5).max(1),
            escape(&i.name)
        );
    }
    out.push_str("</g>\n");

    let thick = (s * 2 / 5).max(1);
    for layer in &layers {
        let _ = writeln!(
            out,
            r#"<g id="layer-{l}" class="layer" fill="{c}" fill-opacity="0.6">"#,
            l = escape(layer),
            c = layer_color(layer)
        );
        if !hidden(layer) {
            for wire in db.wires.iter().filter(|w| &w.layer == layer) {
                let [(x0, y0), (x1, y1)] = wire.endpoints();
                let _ = writeln!(
                    out,
                    r#"<rect class="wire" data-net="{n}" x="{}" y="{}" width="{}" height="{}"/>"#,
                    px(x0.min(x1)) - thick / 2,
                    py(y0.max(y1)) - thick / 2,
                    (x1 - x0).abs() * s + thick,
                    (y1 - y0).abs() * s + thick,
                    n = escape(&wire.net)
                );
            }
        }
        out.push_str("</g>\n");
    }

    let _ = writeln!(out, r##"<g id="vias" fill="#000">"##);
    for v in db.vias.iter().filter(|v| !hidden(&v.lower) && !hidden(&v.upper)) {
        let _ = writeln!(
            out,
            r#"<rect class="via" data-net="{n}" x="{}" y="{}" width="{t}" height="{t}"/>"#,
            px(v.x) - thick / 2,
            py(v.y) - thick / 2,
            t = thick,
            n = escape(&v.net)
        );
    }
    out.push_str("</g>\n");

    let _ = writeln!(out, r##"<g id="labels" fill="#000" font-size="{}">"##, (s * 3 / 5).max(1));
    for l in db.labels.iter().filter(|l| !hidden(&l.layer)) {
        let _ = writeln!(
            out,
            r#"<text class="label" x="{}" y="{}">{}</text>"#,
            px(l.x),
            py(l.y),
            escape(&l.net)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}
