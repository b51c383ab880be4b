//! Scatter plots as hand-assembled SVG.
//!
//! The output is deterministic text: a fixed viewport, a fixed data window,
//! and coordinates printed with fixed precision, so identical samples always
//! produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::checkpoint::write_atomic;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 40.0;
/// Data window [-EXTENT, EXTENT]^2 mapped onto the drawable area. Covers
/// every toy dataset with room for stray samples.
const EXTENT: f64 = 4.0;

fn to_px(v: f64) -> f64 {
    MARGIN + (v + EXTENT) / (2.0 * EXTENT) * (SIZE - 2.0 * MARGIN)
}

/// Render 2D samples to an SVG scatter at `path`. An empty sample set still
/// produces a complete plot frame.
pub fn render_scatter(samples: &[Vec<f64>], path: &Path) -> Result<()> {
    for x in samples {
        if x.len() != 2 {
            return Err(Error::DimensionMismatch {
                context: "render_scatter sample".into(),
                expected: 2,
                actual: x.len(),
            });
        }
        if !(x[0].is_finite() && x[1].is_finite()) {
            return Err(Error::NonFinite("render_scatter sample".into()));
        }
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let lo = MARGIN;
    let hi = SIZE - MARGIN;
    let _ = writeln!(
        svg,
        r##"<rect x="{lo}" y="{lo}" width="{w}" height="{w}" fill="none" stroke="#444" stroke-width="1"/>"##,
        w = hi - lo
    );
    // Axes through the data origin.
    let mid = to_px(0.0);
    let _ = writeln!(
        svg,
        r##"<line x1="{lo}" y1="{mid}" x2="{hi}" y2="{mid}" stroke="#bbb" stroke-width="1"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{mid}" y1="{lo}" x2="{mid}" y2="{hi}" stroke="#bbb" stroke-width="1"/>"##
    );
    for x in samples {
        // SVG's y axis grows downward; flip the second coordinate.
        let cx = to_px(x[0]);
        let cy = SIZE - to_px(x[1]);
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="steelblue" fill-opacity="0.6"/>"#
        );
    }
    svg.push_str("</svg>\n");
    write_atomic(path, svg.as_bytes())
}
