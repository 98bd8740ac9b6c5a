//! Deterministic label colors for the weight editor.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::skinning::{argmax_label, PartLabel, SkinningWeights};

const GOLDEN_CONJUGATE: f64 = 0.618033988749895;

/// Color of every label `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelPalette {
    pub colors: BTreeMap<PartLabel, [u8; 3]>,
}

impl LabelPalette {
    pub fn new(part_count: usize) -> Self {
        LabelPalette {
            colors: (0..part_count).map(|k| (PartLabel(k), label_color(PartLabel(k)))).collect(),
        }
    }

    pub fn get(&self, label: PartLabel) -> Option<[u8; 3]> {
        self.colors.get(&label).copied()
    }
}

pub fn label_hue(label: PartLabel) -> f64 {
    (label.0 as f64 * GOLDEN_CONJUGATE).fract()
}

/// Fully saturated, full-value color at the label's golden-ratio hue.
pub fn label_color(label: PartLabel) -> [u8; 3] {
    let [r, g, b] = hsv_to_rgb(label_hue(label), 1.0, 1.0);
    [to_byte(r), to_byte(g), to_byte(b)]
}

fn to_byte(c: f64) -> u8 {
    (c * 255.0).round().clamp(0.0, 255.0) as u8
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let sector = (h * 6.0).floor();
    let f = h * 6.0 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i64 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Palette plus the color of each vertex's argmax label.
pub fn label_colors(weights: &SkinningWeights) -> (LabelPalette, Vec<[u8; 3]>) {
    let palette = LabelPalette::new(weights.part_count());
    let colors = (0..weights.vertex_count())
        .map(|v| palette.colors[&argmax_label(weights, v)])
        .collect();
    (palette, colors)
}
