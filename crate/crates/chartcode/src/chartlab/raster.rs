//! Deterministic chart rasterizer: scenes to 64x64 RGB images with an ink
//! mask, plus program execution (parse + render) for verification.

use thiserror::Error;

use crate::chartlab::dsl::{parse, DslError, DSLProgram, Scene, SceneItem};
use crate::chartlab::spec::{ChartSpec, ChartType};

/// Fixed 8-color palette (indexable by the DSL color literal), white excluded.
pub const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],  // blue
    [255, 127, 14],  // orange
    [44, 160, 44],   // green
    [214, 39, 40],   // red
    [148, 103, 189], // purple
    [140, 86, 75],   // brown
    [227, 119, 194], // pink
    [127, 127, 127], // gray
];

const WHITE: [u8; 3] = [255, 255, 255];
const BLACK: [u8; 3] = [0, 0, 0];

pub const IMG_W: usize = 64;
pub const IMG_H: usize = 64;

// Plot box at 1/8 margins.
const LEFT: i32 = (IMG_W / 8) as i32; // 8
const RIGHT: i32 = (IMG_W - IMG_W / 8) as i32; // 56
const TOP: i32 = (IMG_H / 8) as i32; // 8
const BOTTOM: i32 = (IMG_H - IMG_H / 8) as i32; // 56

const SLOT_W: i32 = 6;
const BAR_W: i32 = 4;
const MAX_BIN: f64 = 63.0;

/// An RGB render plus its binary ink mask (any non-white pixel).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB, `3 * width * height` bytes.
    pub rgb: Vec<u8>,
}

impl Raster {
    fn blank(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            rgb: vec![255u8; 3 * width * height],
        }
    }

    fn put(&mut self, x: i32, y: i32, c: [u8; 3]) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let i = 3 * (y as usize * self.width + x as usize);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Binary ink mask: true wherever the pixel is not pure white.
    pub fn mask(&self) -> Vec<bool> {
        self.rgb
            .chunks_exact(3)
            .map(|p| p != WHITE)
            .collect()
    }

    /// Flattened RGB as f64 in [0,1], the encoder's input layout.
    pub fn to_f64(&self) -> Vec<f64> {
        self.rgb.iter().map(|&b| b as f64 / 255.0).collect()
    }

    pub fn from_f64(width: usize, height: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), 3 * width * height);
        Raster {
            width,
            height,
            rgb: data
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect(),
        }
    }

    /// Encode as PNG bytes.
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.rgb.clone())
            .expect("raster buffer size");
        img.write_to(
            &mut std::io::Cursor::new(&mut out),
            image::ImageFormat::Png,
        )
        .expect("png encode");
        out
    }

    pub fn from_png(bytes: &[u8]) -> anyhow::Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb8();
        Ok(Raster {
            width: img.width() as usize,
            height: img.height() as usize,
            rgb: img.into_raw(),
        })
    }
}

/// Why a generated program could not be executed into a raster.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecFailure {
    #[error("parse: {0}")]
    Parse(#[from] DslError),
    #[error("degenerate scene: {0}")]
    Degenerate(String),
}

fn value_y(bin: u8) -> i32 {
    BOTTOM - ((bin as f64 / MAX_BIN) * (BOTTOM - TOP) as f64).round() as i32
}

fn slot_center_x(cat: u8) -> i32 {
    LEFT + SLOT_W * cat as i32 + SLOT_W / 2
}

fn draw_axes(img: &mut Raster) {
    for y in TOP..=BOTTOM {
        img.put(LEFT - 1, y, BLACK);
    }
    for x in (LEFT - 1)..=RIGHT {
        img.put(x, BOTTOM, BLACK);
    }
}

fn draw_bar(img: &mut Raster, item: &SceneItem) {
    let x0 = LEFT + SLOT_W * item.category as i32 + (SLOT_W - BAR_W) / 2;
    let y_top = value_y(item.value_bins[0]);
    let color = PALETTE[item.color as usize];
    for x in x0..x0 + BAR_W {
        for y in y_top..BOTTOM {
            img.put(x, y, color);
        }
    }
}

/// 2px-thick line segment (Bresenham with a one-pixel right/down companion).
fn draw_segment(img: &mut Raster, x0: i32, y0: i32, x1: i32, y1: i32, color: [u8; 3]) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    loop {
        img.put(x, y, color);
        img.put(x + 1, y, color);
        img.put(x, y + 1, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_lines(img: &mut Raster, items: &[&SceneItem]) {
    // group by color, connect points in category order
    let mut colors: Vec<u8> = items.iter().map(|i| i.color).collect();
    colors.sort_unstable();
    colors.dedup();
    for color in colors {
        let mut pts: Vec<(i32, i32)> = items
            .iter()
            .filter(|i| i.color == color)
            .map(|i| (slot_center_x(i.category), value_y(i.value_bins[0])))
            .collect();
        pts.sort_unstable();
        let rgb = PALETTE[color as usize];
        if pts.len() == 1 {
            let (x, y) = pts[0];
            draw_segment(img, x, y, x, y, rgb);
        }
        for w in pts.windows(2) {
            draw_segment(img, w[0].0, w[0].1, w[1].0, w[1].1, rgb);
        }
    }
}

fn draw_scatter(img: &mut Raster, item: &SceneItem) {
    let cx = LEFT + ((item.value_bins[0] as f64 / MAX_BIN) * (RIGHT - LEFT) as f64).round() as i32;
    let cy = value_y(item.value_bins[1]);
    let color = PALETTE[item.color as usize];
    for dx in -1..=1 {
        for dy in -1..=1 {
            img.put(cx + dx, cy + dy, color);
        }
    }
}

fn draw_pie(img: &mut Raster, items: &[&SceneItem]) -> Result<(), ExecFailure> {
    let total: f64 = items.iter().map(|i| i.value_bins[0] as f64).sum();
    if total <= 0.0 {
        return Err(ExecFailure::Degenerate("pie with zero total".into()));
    }
    let (cx, cy, r) = (32.0, 32.0, 20.0);
    // wedge boundaries in radians, clockwise from 12 o'clock
    let mut bounds = vec![0.0f64];
    let mut acc = 0.0;
    for item in items {
        acc += item.value_bins[0] as f64 / total;
        bounds.push(acc * std::f64::consts::TAU);
    }
    // angular gap between wedges makes the mask sensitive to wedge sizes
    let gap = 2.5f64.to_radians();
    for y in 0..IMG_H as i32 {
        for x in 0..IMG_W as i32 {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let mut theta = dx.atan2(-dy); // 0 at 12 o'clock, clockwise
            if theta < 0.0 {
                theta += std::f64::consts::TAU;
            }
            for (w, item) in items.iter().enumerate() {
                let (a, b) = (bounds[w], bounds[w + 1]);
                if theta >= a + gap / 2.0 && theta < b - gap / 2.0 {
                    img.put(x, y, PALETTE[item.color as usize]);
                    break;
                }
            }
        }
    }
    Ok(())
}

/// Render a canonical scene. Deterministic: identical scenes produce
/// byte-identical rasters.
pub fn rasterize_scene(scene: &Scene) -> Result<Raster, ExecFailure> {
    if scene.items.is_empty() {
        return Err(ExecFailure::Degenerate("scene without items".into()));
    }
    for item in &scene.items {
        if item.category as i32 >= (RIGHT - LEFT) / SLOT_W {
            return Err(ExecFailure::Degenerate(format!(
                "category {} beyond the {} drawable slots",
                item.category,
                (RIGHT - LEFT) / SLOT_W
            )));
        }
    }
    let mut img = Raster::blank(IMG_W, IMG_H);
    if scene.chart_type == ChartType::Pie {
        let wedges: Vec<&SceneItem> = scene.items.iter().collect();
        draw_pie(&mut img, &wedges)?;
        return Ok(img);
    }
    draw_axes(&mut img);
    // bars under lines under markers, matching canonical item order
    for item in scene.items.iter().filter(|i| i.kind == ChartType::Bar) {
        draw_bar(&mut img, item);
    }
    let line_items: Vec<&SceneItem> = scene
        .items
        .iter()
        .filter(|i| i.kind == ChartType::Line)
        .collect();
    if !line_items.is_empty() {
        draw_lines(&mut img, &line_items);
    }
    for item in scene.items.iter().filter(|i| i.kind == ChartType::Scatter) {
        draw_scatter(&mut img, item);
    }
    Ok(img)
}

/// Render the ground-truth raster for a spec.
pub fn rasterize_spec(spec: &ChartSpec) -> Result<Raster, ExecFailure> {
    rasterize_scene(&spec.scene())
}

/// Execute a DSL program: parse, then render. This is the verification path
/// for model output — any failure counts as an unsuccessful generation.
pub fn execute(program: &DSLProgram) -> Result<Raster, ExecFailure> {
    let scene = parse(program)?;
    rasterize_scene(&scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartlab::dsl::DSLProgram;
    use crate::chartlab::metrics::iou;
    use crate::chartlab::spec::{emit_code, sample_spec, TypeMix};
    use crate::rng::Rng;

    #[test]
    fn bar_geometry() {
        let prog = DSLProgram::from_text("figure bar series ( 63 , c0 , #3 ) end").unwrap();
        let img = execute(&prog).unwrap();
        // full-height bar in slot 0: columns 9..13, rows 8..56
        assert_eq!(img.pixel(9, 8), PALETTE[3]);
        assert_eq!(img.pixel(12, 55), PALETTE[3]);
        assert_eq!(img.pixel(13, 20), WHITE); // outside bar width
        assert_eq!(img.pixel(9, 7), WHITE); // above plot box
        assert_eq!(img.pixel(7, 30), BLACK); // y axis
        assert_eq!(img.pixel(30, 56), BLACK); // x axis
    }

    #[test]
    fn zero_bar_draws_no_ink_above_axis() {
        let prog = DSLProgram::from_text("figure bar series ( 0 , c2 , #1 ) end").unwrap();
        let img = execute(&prog).unwrap();
        for y in TOP..BOTTOM {
            for x in LEFT..RIGHT {
                assert_eq!(img.pixel(x as usize, y as usize), WHITE);
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let mix = TypeMix::default_mix();
        let spec = sample_spec(&mut Rng::from_seed(33), &mix);
        let a = rasterize_spec(&spec).unwrap();
        let b = rasterize_spec(&spec).unwrap();
        assert_eq!(a.rgb, b.rgb);
    }

    #[test]
    fn emit_execute_round_trip_iou_one() {
        let mix = TypeMix::default_mix();
        let root = Rng::from_seed(34);
        for i in 0..200 {
            let mut rng = root.child_idx("rt", i);
            let spec = sample_spec(&mut rng, &mix);
            let truth = rasterize_spec(&spec).unwrap();
            let rendered = execute(&emit_code(&spec)).unwrap();
            assert_eq!(
                iou(&truth, &rendered).unwrap(),
                1.0,
                "spec {i} ({:?})",
                spec.chart_type
            );
        }
    }

    #[test]
    fn pie_mask_depends_on_values() {
        let a = execute(&DSLProgram::from_text("figure pie series ( 10 , #0 ) series ( 50 , #1 ) end").unwrap()).unwrap();
        let b = execute(&DSLProgram::from_text("figure pie series ( 30 , #0 ) series ( 30 , #1 ) end").unwrap()).unwrap();
        assert_ne!(a.mask(), b.mask());
        let v = iou(&a, &b).unwrap();
        assert!(v < 1.0, "iou {v}");
    }

    #[test]
    fn pie_zero_total_fails() {
        let prog = DSLProgram::from_text("figure pie series ( 0 , #0 ) series ( 0 , #1 ) end").unwrap();
        assert!(matches!(execute(&prog), Err(ExecFailure::Degenerate(_))));
    }

    #[test]
    fn out_of_range_category_fails() {
        // the vocabulary allows c0..c15 but only 8 slots fit in the plot box
        let prog = DSLProgram::from_text("figure bar series ( 9 , c12 , #0 ) end").unwrap();
        assert!(matches!(execute(&prog), Err(ExecFailure::Degenerate(_))));
    }

    #[test]
    fn parse_failure_propagates() {
        let prog = DSLProgram::from_text("figure bar end").unwrap();
        assert!(matches!(execute(&prog), Err(ExecFailure::Parse(_))));
    }

    #[test]
    fn png_round_trip() {
        let mix = TypeMix::default_mix();
        let spec = sample_spec(&mut Rng::from_seed(35), &mix);
        let img = rasterize_spec(&spec).unwrap();
        let back = Raster::from_png(&img.to_png()).unwrap();
        assert_eq!(img, back);
    }
}
