//! Distribution-map rendering: the panorama with class-colored box outlines
//! and confidence labels, plus the final box list for the JSON sidecar.

use riverlitter::boxeval::{Bbox, Detection};
use riverlitter::raster::ImageBuffer;
use riverlitter::tilemap::{merge_seam_boxes, TileError, TileGrid};
use riverlitter::LitterClass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map panorama must have 3 channels, got {0}")]
    BadChannels(usize),
    #[error("detection ({x_min}, {y_min}, {x_max}, {y_max}) outside the {width}x{height} canvas")]
    OutOfCanvas { x_min: f64, y_min: f64, x_max: f64, y_max: f64, height: usize, width: usize },
    #[error("detection carries unknown class id {0}")]
    UnknownClass(u32),
    #[error(transparent)]
    Tile(#[from] TileError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOptions {
    pub merge_seams: bool,
    /// Tile edge the panorama was scanned with; defines seam lines for the
    /// merge pass.
    pub tile_size: usize,
    pub gap_tol: f64,
    pub span_overlap: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions { merge_seams: false, tile_size: 512, gap_tol: 4.0, span_overlap: 0.5 }
    }
}

/// Overlay color per class, deliberately far from the object paint colors
/// so outlines stay legible on top of the litter they mark.
pub fn ui_color(class: LitterClass) -> [f32; 3] {
    match class {
        LitterClass::PlasticBottle => [0.00, 0.35, 1.00],
        LitterClass::GlassBottle => [0.00, 0.95, 0.40],
        LitterClass::Can => [1.00, 0.10, 0.10],
        LitterClass::PlasticBag => [1.00, 0.80, 0.00],
    }
}

/// 3x5 digit glyphs, row-major, most significant bit leftmost.
const GLYPHS: [(char, [u8; 5]); 11] = [
    ('0', [0b111, 0b101, 0b101, 0b101, 0b111]),
    ('1', [0b010, 0b110, 0b010, 0b010, 0b111]),
    ('2', [0b111, 0b001, 0b111, 0b100, 0b111]),
    ('3', [0b111, 0b001, 0b111, 0b001, 0b111]),
    ('4', [0b101, 0b101, 0b111, 0b001, 0b001]),
    ('5', [0b111, 0b100, 0b111, 0b001, 0b111]),
    ('6', [0b111, 0b100, 0b111, 0b101, 0b111]),
    ('7', [0b111, 0b001, 0b010, 0b010, 0b010]),
    ('8', [0b111, 0b101, 0b111, 0b101, 0b111]),
    ('9', [0b111, 0b101, 0b111, 0b001, 0b111]),
    ('.', [0b000, 0b000, 0b000, 0b000, 0b010]),
];

fn put(img: &mut ImageBuffer, y: i64, x: i64, color: [f32; 3]) {
    if y < 0 || x < 0 || y as usize >= img.height() || x as usize >= img.width() {
        return;
    }
    for (c, &v) in color.iter().enumerate() {
        img.set(c, y as usize, x as usize, v);
    }
}

/// Two-pixel rectangle outline.  Box edges use the same end-exclusive pixel
/// convention as the detector, so the outline sits on the outermost object
/// pixels.
fn draw_outline(img: &mut ImageBuffer, b: &Bbox, color: [f32; 3]) {
    let x0 = b.x_min.floor() as i64;
    let y0 = b.y_min.floor() as i64;
    let x1 = b.x_max.ceil() as i64;
    let y1 = b.y_max.ceil() as i64;
    for t in 0..2 {
        for x in x0..x1 {
            put(img, y0 + t, x, color);
            put(img, y1 - 1 - t, x, color);
        }
        for y in y0..y1 {
            put(img, y, x0 + t, color);
            put(img, y, x1 - 1 - t, color);
        }
    }
}

fn draw_text(img: &mut ImageBuffer, y: i64, x: i64, text: &str, color: [f32; 3]) {
    let mut cx = x;
    for ch in text.chars() {
        if let Some((_, rows)) = GLYPHS.iter().find(|(g, _)| *g == ch) {
            for (dy, row) in rows.iter().enumerate() {
                for dx in 0..3 {
                    if row >> (2 - dx) & 1 == 1 {
                        put(img, y + dy as i64, cx + dx, color);
                    }
                }
            }
        }
        cx += 4;
    }
}

/// Render the distribution map.  Returns the painted image and the final
/// box list (after the optional seam-merge pass) for the sidecar.
pub fn render_map(
    panorama: &ImageBuffer,
    dets: &[Detection],
    opts: &MapOptions,
) -> Result<(ImageBuffer, Vec<Detection>), MapError> {
    if panorama.channels() != 3 {
        return Err(MapError::BadChannels(panorama.channels()));
    }
    let (h, w) = (panorama.height(), panorama.width());
    for d in dets {
        let b = &d.bbox;
        let inside = b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= w as f64 && b.y_max <= h as f64;
        if !inside {
            return Err(MapError::OutOfCanvas {
                x_min: b.x_min,
                y_min: b.y_min,
                x_max: b.x_max,
                y_max: b.y_max,
                height: h,
                width: w,
            });
        }
        if LitterClass::from_id(b.class_id).is_none() {
            return Err(MapError::UnknownClass(b.class_id));
        }
    }

    let final_dets = if opts.merge_seams {
        let grid = TileGrid::new(h, w, opts.tile_size, opts.tile_size)?;
        merge_seam_boxes(&grid, dets, opts.gap_tol, opts.span_overlap)?
    } else {
        dets.to_vec()
    };

    let mut img = panorama.clone();
    for d in &final_dets {
        let class = LitterClass::from_id(d.bbox.class_id).expect("validated above");
        let color = ui_color(class);
        draw_outline(&mut img, &d.bbox, color);
        let label = format!("{:.2}", d.confidence);
        // Label above the box, or just inside it at the canvas top.
        let y0 = d.bbox.y_min.floor() as i64;
        let ly = if y0 >= 7 { y0 - 7 } else { y0 + 3 };
        draw_text(&mut img, ly, d.bbox.x_min.floor() as i64, &label, color);
    }
    Ok((img, final_dets))
}
