//! Chart specifications and sampling.

use serde::{Deserialize, Serialize};

use crate::chartlab::dsl::{DSLProgram, Scene, SceneItem, Vocab};
use crate::rng::Rng;

pub const NUM_BINS: u8 = 64;
pub const CAT_SLOTS: u8 = 8;
pub const COLOR_COUNT: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartType {
    Bar,
    Line,
    Scatter,
    Pie,
    Complex,
}

impl ChartType {
    pub const ALL: [ChartType; 5] = [
        ChartType::Bar,
        ChartType::Line,
        ChartType::Scatter,
        ChartType::Pie,
        ChartType::Complex,
    ];

    pub fn index(self) -> usize {
        match self {
            ChartType::Bar => 0,
            ChartType::Line => 1,
            ChartType::Scatter => 2,
            ChartType::Pie => 3,
            ChartType::Complex => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChartType::Bar => "bar",
            ChartType::Line => "line",
            ChartType::Scatter => "scatter",
            ChartType::Pie => "pie",
            ChartType::Complex => "complex",
        }
    }
}

/// One visual element: a bar, a polyline point, a marker, or a wedge.
/// Values are stored pre-quantized as DSL bins so spec -> program is lossless.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub value_bins: Vec<u8>,
    pub category: u8,
    pub color: u8,
    /// Leaf type of this element for `complex` charts; `None` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtype: Option<ChartType>,
}

/// Ground-truth structured description of a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub chart_type: ChartType,
    pub elements: Vec<Element>,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl ChartSpec {
    /// Check the spec invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.elements.is_empty() || self.elements.len() > 16 {
            return Err(format!("element count {} outside [1,16]", self.elements.len()));
        }
        for e in &self.elements {
            if e.value_bins.is_empty() {
                return Err("element without values".into());
            }
            for &b in &e.value_bins {
                if b >= NUM_BINS {
                    return Err(format!("value bin {b} out of range"));
                }
            }
            if self.chart_type == ChartType::Pie && e.value_bins[0] == 0 {
                return Err("pie values must be strictly positive".into());
            }
        }
        if self.chart_type == ChartType::Complex {
            let mut series: Vec<(Option<ChartType>, u8)> =
                self.elements.iter().map(|e| (e.subtype, e.color)).collect();
            series.sort();
            series.dedup();
            if series.len() < 2 {
                return Err("complex chart needs >= 2 sub-series".into());
            }
        }
        Ok(())
    }

    /// Scene form used by the rasterizer, in canonical order. Scatter markers
    /// and pie wedges carry no category in the DSL, so theirs normalize to 0.
    pub fn scene(&self) -> Scene {
        let mut items: Vec<SceneItem> = self
            .elements
            .iter()
            .map(|e| {
                let kind = e.subtype.unwrap_or(self.chart_type);
                let category = match kind {
                    ChartType::Scatter | ChartType::Pie => 0,
                    _ => e.category,
                };
                SceneItem {
                    kind,
                    value_bins: e.value_bins.clone(),
                    category,
                    color: e.color,
                }
            })
            .collect();
        items.sort();
        Scene {
            chart_type: self.chart_type,
            items,
        }
    }
}

/// Distribution over the five chart types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeMix(pub [f64; 5]);

impl TypeMix {
    /// The training-corpus ratios (bar/line/scatter/pie/complex), renormalized.
    pub fn default_mix() -> Self {
        let raw = [31.3, 26.8, 17.9, 13.4, 8.9];
        let total: f64 = raw.iter().sum();
        TypeMix([
            raw[0] / total,
            raw[1] / total,
            raw[2] / total,
            raw[3] / total,
            raw[4] / total,
        ])
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.0.iter().any(|&w| w < 0.0) {
            return Err("type mix has negative weight".into());
        }
        let s: f64 = self.0.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(format!("type mix sums to {s}, expected 1"));
        }
        Ok(())
    }
}

fn sample_distinct_cats(rng: &mut Rng, n: usize) -> Vec<u8> {
    let mut cats: Vec<u8> = (0..CAT_SLOTS).collect();
    rng.shuffle(&mut cats);
    let mut picked: Vec<u8> = cats.into_iter().take(n).collect();
    picked.sort_unstable();
    picked
}

fn sample_bin(rng: &mut Rng, lo: u8, hi: u8) -> u8 {
    lo + rng.usize_below((hi - lo + 1) as usize) as u8
}

/// Draw a chart spec from the type mix. Element counts are drawn uniformly
/// from each type's allowed range (kept small at desk scale).
pub fn sample_spec(rng: &mut Rng, type_mix: &TypeMix) -> ChartSpec {
    type_mix.validate().expect("invalid type mix");
    let chart_type = ChartType::ALL[rng.categorical(&type_mix.0)];
    let seed = (rng.f64() * u32::MAX as f64) as u64;
    let elements = match chart_type {
        ChartType::Bar => {
            let n = 2 + rng.usize_below(4); // 2..=5 bars
            let cats = sample_distinct_cats(rng, n);
            cats.into_iter()
                .map(|category| Element {
                    value_bins: vec![sample_bin(rng, 8, 63)],
                    category,
                    color: rng.usize_below(COLOR_COUNT as usize) as u8,
                    subtype: None,
                })
                .collect()
        }
        ChartType::Line => {
            let n = 3 + rng.usize_below(3); // 3..=5 points
            let color = rng.usize_below(COLOR_COUNT as usize) as u8;
            (0..n as u8)
                .map(|category| Element {
                    value_bins: vec![sample_bin(rng, 4, 63)],
                    category,
                    color,
                    subtype: None,
                })
                .collect()
        }
        ChartType::Scatter => {
            let n = 3 + rng.usize_below(3); // 3..=5 markers
            (0..n)
                .map(|i| Element {
                    value_bins: vec![sample_bin(rng, 0, 63), sample_bin(rng, 0, 63)],
                    category: i as u8,
                    color: rng.usize_below(COLOR_COUNT as usize) as u8,
                    subtype: None,
                })
                .collect()
        }
        ChartType::Pie => {
            let n = 2 + rng.usize_below(3); // 2..=4 wedges
            (0..n)
                .map(|i| Element {
                    value_bins: vec![sample_bin(rng, 6, 63)],
                    category: i as u8,
                    color: rng.usize_below(COLOR_COUNT as usize) as u8,
                    subtype: None,
                })
                .collect()
        }
        ChartType::Complex => {
            // one bar sub-series plus one line sub-series, distinct colors
            let bar_color = rng.usize_below(COLOR_COUNT as usize) as u8;
            let line_color = (bar_color + 1 + rng.usize_below(COLOR_COUNT as usize - 1) as u8)
                % COLOR_COUNT;
            let nb = 2 + rng.usize_below(2); // 2..=3 bars
            let nl = 2 + rng.usize_below(2); // 2..=3 points
            let mut els: Vec<Element> = sample_distinct_cats(rng, nb)
                .into_iter()
                .map(|category| Element {
                    value_bins: vec![sample_bin(rng, 8, 63)],
                    category,
                    color: bar_color,
                    subtype: Some(ChartType::Bar),
                })
                .collect();
            els.extend((0..nl as u8).map(|category| Element {
                value_bins: vec![sample_bin(rng, 4, 63)],
                category,
                color: line_color,
                subtype: Some(ChartType::Line),
            }));
            els
        }
    };
    let spec = ChartSpec {
        chart_type,
        elements,
        width: 64,
        height: 64,
        seed,
    };
    debug_assert!(spec.validate().is_ok(), "sampled spec invalid");
    spec
}

/// Emit the canonical DSL program for a spec: sorted series, fixed statement
/// order, quantized literals. Deterministic in the spec's content (the seed
/// field does not influence the program).
pub fn emit_code(spec: &ChartSpec) -> DSLProgram {
    let scene = spec.scene();
    let mut tokens: Vec<u16> = vec![Vocab::FIGURE, Vocab::type_kw(scene.chart_type)];
    for item in &scene.items {
        tokens.push(Vocab::SERIES);
        tokens.push(Vocab::LPAREN);
        let mut args: Vec<u16> = Vec::new();
        if scene.chart_type == ChartType::Complex {
            args.push(Vocab::type_kw(item.kind));
        }
        for &b in &item.value_bins {
            args.push(Vocab::num(b));
        }
        match item.kind {
            ChartType::Bar | ChartType::Line => args.push(Vocab::cat(item.category)),
            ChartType::Scatter | ChartType::Pie => {}
            ChartType::Complex => unreachable!("complex is never a leaf kind"),
        }
        args.push(Vocab::col(item.color));
        for (i, a) in args.iter().enumerate() {
            if i > 0 {
                tokens.push(Vocab::COMMA);
            }
            tokens.push(*a);
        }
        tokens.push(Vocab::RPAREN);
    }
    tokens.push(Vocab::END);
    DSLProgram { tokens }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_mix_always_bar() {
        let mut rng = Rng::from_seed(3);
        let mix = TypeMix([1.0, 0.0, 0.0, 0.0, 0.0]);
        for _ in 0..50 {
            assert_eq!(sample_spec(&mut rng, &mix).chart_type, ChartType::Bar);
        }
    }

    #[test]
    fn default_mix_frequencies() {
        let mix = TypeMix::default_mix();
        let root = Rng::from_seed(99);
        let mut counts = [0usize; 5];
        let n = 10_000;
        for i in 0..n {
            let mut rng = root.child_idx("sample", i);
            counts[sample_spec(&mut rng, &mix).chart_type.index()] += 1;
        }
        let expected = [0.313, 0.268, 0.179, 0.134, 0.089];
        for (c, e) in counts.iter().zip(expected) {
            let freq = *c as f64 / n as f64;
            assert!(
                (freq - e).abs() < 0.02,
                "frequency {freq} too far from {e}"
            );
        }
    }

    #[test]
    fn fixed_seed_identical_spec() {
        let mix = TypeMix::default_mix();
        let a = sample_spec(&mut Rng::from_seed(5), &mix);
        let b = sample_spec(&mut Rng::from_seed(5), &mix);
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_specs_validate() {
        let mix = TypeMix::default_mix();
        let root = Rng::from_seed(7);
        for i in 0..500 {
            let mut rng = root.child_idx("s", i);
            sample_spec(&mut rng, &mix).validate().unwrap();
        }
    }

    #[test]
    fn minimal_bar_program() {
        let spec = ChartSpec {
            chart_type: ChartType::Bar,
            elements: vec![Element {
                value_bins: vec![42],
                category: 3,
                color: 1,
                subtype: None,
            }],
            width: 64,
            height: 64,
            seed: 0,
        };
        let prog = emit_code(&spec);
        assert_eq!(
            prog.tokens,
            vec![
                Vocab::FIGURE,
                Vocab::BAR,
                Vocab::SERIES,
                Vocab::LPAREN,
                Vocab::num(42),
                Vocab::COMMA,
                Vocab::cat(3),
                Vocab::COMMA,
                Vocab::col(1),
                Vocab::RPAREN,
                Vocab::END
            ]
        );
    }

    #[test]
    fn seed_does_not_change_program() {
        let mix = TypeMix::default_mix();
        let mut a = sample_spec(&mut Rng::from_seed(5), &mix);
        let mut b = a.clone();
        a.seed = 1;
        b.seed = 2;
        assert_eq!(emit_code(&a).tokens, emit_code(&b).tokens);
    }
}
