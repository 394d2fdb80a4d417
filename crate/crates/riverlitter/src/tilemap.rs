//! Sliding-window tiling of large canvases and the way back: mosaic
//! reassembly, tile-local box promotion, and merging of detections that a
//! tile seam cut in half.
//!
//! Tiling walks origins at `stride` steps; when the last window would run
//! past the edge it is clamped flush against it instead of padding, so
//! every canvas pixel is covered and edge tiles may overlap their
//! neighbors.  Mosaic averages contributors per pixel, which makes the
//! round trip exact wherever exactly one tile covers a pixel.

use thiserror::Error;

use crate::boxeval::{Bbox, Detection};
use crate::raster::ImageBuffer;

#[derive(Debug, Error)]
pub enum TileError {
    #[error("tile size {tile_size} does not fit {height}x{width} canvas")]
    TileTooLarge { tile_size: usize, height: usize, width: usize },
    #[error("tile size must be >= 1")]
    ZeroTileSize,
    #[error("stride must be >= 1")]
    ZeroStride,
    #[error("stride {stride} exceeds tile size {tile_size} (would leave uncovered gaps)")]
    StrideGap { stride: usize, tile_size: usize },
    #[error("expected {expected} tiles, got {got}")]
    TileCountMismatch { expected: usize, got: usize },
    #[error("tile {index} has shape {got_h}x{got_w}x{got_c}, grid expects {tile_size}x{tile_size}")]
    TileShapeMismatch { index: usize, got_h: usize, got_w: usize, got_c: usize, tile_size: usize },
    #[error("tile index {index} out of range ({count} tiles)")]
    BadTileIndex { index: usize, count: usize },
    #[error("box ({x_min}, {y_min}, {x_max}, {y_max}) outside tile bounds 0..{tile_size}")]
    BoxOutsideTile { x_min: f64, y_min: f64, x_max: f64, y_max: f64, tile_size: usize },
    #[error("gap tolerance {0} must be finite and >= 0")]
    BadGapTol(f64),
    #[error("span overlap {0} must be in [0, 1]")]
    BadSpanOverlap(f64),
}

/// Tiling layout over one canvas.  `origins` are (row, col) pairs in
/// row-major walk order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub tile_size: usize,
    pub stride: usize,
    pub canvas_height: usize,
    pub canvas_width: usize,
    pub origins: Vec<(usize, usize)>,
}

impl TileGrid {
    /// Layout for a canvas without cutting any pixels.
    pub fn new(
        canvas_height: usize,
        canvas_width: usize,
        tile_size: usize,
        stride: usize,
    ) -> Result<TileGrid, TileError> {
        if tile_size == 0 {
            return Err(TileError::ZeroTileSize);
        }
        if stride == 0 {
            return Err(TileError::ZeroStride);
        }
        if stride > tile_size {
            return Err(TileError::StrideGap { stride, tile_size });
        }
        if tile_size > canvas_height || tile_size > canvas_width {
            return Err(TileError::TileTooLarge {
                tile_size,
                height: canvas_height,
                width: canvas_width,
            });
        }
        let rows = axis_origins(canvas_height, tile_size, stride);
        let cols = axis_origins(canvas_width, tile_size, stride);
        let mut origins = Vec::with_capacity(rows.len() * cols.len());
        for &r in &rows {
            for &c in &cols {
                origins.push((r, c));
            }
        }
        Ok(TileGrid { tile_size, stride, canvas_height, canvas_width, origins })
    }
}

/// Window start positions along one axis: 0, stride, 2*stride, ... with the
/// final origin clamped to dim - tile so the edge is always covered.
fn axis_origins(dim: usize, tile: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    loop {
        if pos + tile >= dim {
            out.push(dim - tile);
            return out;
        }
        out.push(pos);
        pos += stride;
    }
}

/// Cut a canvas into tiles.  Tiles are square `tile_size` crops returned in
/// the grid's row-major origin order.
pub fn tile(
    img: &ImageBuffer,
    tile_size: usize,
    stride: usize,
) -> Result<(TileGrid, Vec<ImageBuffer>), TileError> {
    let grid = TileGrid::new(img.height(), img.width(), tile_size, stride)?;
    let tiles = grid
        .origins
        .iter()
        .map(|&(r, c)| crop(img, r, c, tile_size))
        .collect();
    Ok((grid, tiles))
}

fn crop(img: &ImageBuffer, row: usize, col: usize, size: usize) -> ImageBuffer {
    let mut out = ImageBuffer::zeros(size, size, img.channels()).expect("crop dims");
    let w = img.width();
    for c in 0..img.channels() {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..size {
            let s = (row + y) * w + col;
            dst[y * size..(y + 1) * size].copy_from_slice(&src[s..s + size]);
        }
    }
    out
}

/// Reassemble a canvas from tiles: each pixel is the arithmetic mean of
/// every tile sample covering it.  Where exactly one tile contributes, the
/// sample passes through bit-exactly.
pub fn mosaic(grid: &TileGrid, tiles: &[ImageBuffer]) -> Result<ImageBuffer, TileError> {
    if tiles.len() != grid.origins.len() {
        return Err(TileError::TileCountMismatch { expected: grid.origins.len(), got: tiles.len() });
    }
    let channels = tiles.first().map_or(1, |t| t.channels());
    for (i, t) in tiles.iter().enumerate() {
        if t.height() != grid.tile_size || t.width() != grid.tile_size || t.channels() != channels {
            return Err(TileError::TileShapeMismatch {
                index: i,
                got_h: t.height(),
                got_w: t.width(),
                got_c: t.channels(),
                tile_size: grid.tile_size,
            });
        }
    }
    let (h, w, ts) = (grid.canvas_height, grid.canvas_width, grid.tile_size);
    let mut sum = vec![0.0f64; h * w * channels];
    let mut count = vec![0u32; h * w];
    for ((row, col), t) in grid.origins.iter().zip(tiles) {
        for y in 0..ts {
            let base = (row + y) * w + col;
            for x in 0..ts {
                count[base + x] += 1;
            }
            for c in 0..channels {
                let src = &t.plane(c)[y * ts..(y + 1) * ts];
                let dst = &mut sum[c * h * w + base..c * h * w + base + ts];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s as f64;
                }
            }
        }
    }
    let mut out = ImageBuffer::zeros(h, w, channels).expect("canvas dims");
    for c in 0..channels {
        let plane = out.plane_mut(c);
        for i in 0..h * w {
            debug_assert!(count[i] > 0, "uncovered pixel; stride <= tile_size forbids this");
            plane[i] = (sum[c * h * w + i] / count[i] as f64) as f32;
        }
    }
    Ok(out)
}

/// Promote tile-local boxes into canvas coordinates by translating them by
/// the tile's origin.
pub fn globalize_boxes(
    grid: &TileGrid,
    tile_index: usize,
    boxes: &[Bbox],
) -> Result<Vec<Bbox>, TileError> {
    let Some(&(row, col)) = grid.origins.get(tile_index) else {
        return Err(TileError::BadTileIndex { index: tile_index, count: grid.origins.len() });
    };
    let ts = grid.tile_size as f64;
    for b in boxes {
        let inside = b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= ts && b.y_max <= ts && b.x_min < b.x_max && b.y_min < b.y_max;
        if !inside {
            return Err(TileError::BoxOutsideTile {
                x_min: b.x_min,
                y_min: b.y_min,
                x_max: b.x_max,
                y_max: b.y_max,
                tile_size: grid.tile_size,
            });
        }
    }
    Ok(boxes.iter().map(|b| b.translated(col as f64, row as f64)).collect())
}

/// Interior tile boundary positions along one axis (canvas coordinates):
/// every tile start except 0 and every tile end except the canvas edge.
fn seam_positions(origins: impl Iterator<Item = usize>, tile: usize, dim: usize) -> Vec<f64> {
    let mut seams: Vec<usize> = Vec::new();
    for o in origins {
        if o > 0 {
            seams.push(o);
        }
        if o + tile < dim {
            seams.push(o + tile);
        }
    }
    seams.sort_unstable();
    seams.dedup();
    seams.into_iter().map(|s| s as f64).collect()
}

fn span_overlap_frac(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    let ov = (a1.min(b1) - a0.max(b0)).max(0.0);
    let min_span = (a1 - a0).min(b1 - b0);
    if min_span <= 0.0 {
        0.0
    } else {
        ov / min_span
    }
}

/// Merge detections that a tile seam split apart: two boxes of the same
/// class facing each other across one seam line (each edge within
/// `gap_tol` of it) whose perpendicular spans overlap by at least
/// `span_overlap` of the shorter span collapse into their union, keeping
/// the higher confidence.  Runs to a fixed point, so the result is
/// idempotent under a second pass.
pub fn merge_seam_boxes(
    grid: &TileGrid,
    dets: &[Detection],
    gap_tol: f64,
    span_overlap: f64,
) -> Result<Vec<Detection>, TileError> {
    if !gap_tol.is_finite() || gap_tol < 0.0 {
        return Err(TileError::BadGapTol(gap_tol));
    }
    if !(0.0..=1.0).contains(&span_overlap) {
        return Err(TileError::BadSpanOverlap(span_overlap));
    }
    let v_seams = seam_positions(
        grid.origins.iter().map(|&(_, c)| c),
        grid.tile_size,
        grid.canvas_width,
    );
    let h_seams = seam_positions(
        grid.origins.iter().map(|&(r, _)| r),
        grid.tile_size,
        grid.canvas_height,
    );

    let mut out: Vec<Detection> = dets.to_vec();
    loop {
        let merged = find_merge(&out, &v_seams, &h_seams, gap_tol, span_overlap);
        match merged {
            None => return Ok(out),
            Some((i, j, combined)) => {
                // replace i, drop j (j > i by construction)
                out[i] = combined;
                out.remove(j);
            }
        }
    }
}

fn find_merge(
    dets: &[Detection],
    v_seams: &[f64],
    h_seams: &[f64],
    gap_tol: f64,
    span_overlap: f64,
) -> Option<(usize, usize, Detection)> {
    for i in 0..dets.len() {
        for j in (i + 1)..dets.len() {
            let (a, b) = (&dets[i], &dets[j]);
            if a.bbox.class_id != b.bbox.class_id {
                continue;
            }
            let pair_merges = v_seams.iter().any(|&sx| faces_seam(
                a.bbox.x_max, b.bbox.x_min, sx, gap_tol,
            ) && span_overlap_frac(a.bbox.y_min, a.bbox.y_max, b.bbox.y_min, b.bbox.y_max)
                >= span_overlap)
                || v_seams.iter().any(|&sx| faces_seam(
                    b.bbox.x_max, a.bbox.x_min, sx, gap_tol,
                ) && span_overlap_frac(a.bbox.y_min, a.bbox.y_max, b.bbox.y_min, b.bbox.y_max)
                    >= span_overlap)
                || h_seams.iter().any(|&sy| faces_seam(
                    a.bbox.y_max, b.bbox.y_min, sy, gap_tol,
                ) && span_overlap_frac(a.bbox.x_min, a.bbox.x_max, b.bbox.x_min, b.bbox.x_max)
                    >= span_overlap)
                || h_seams.iter().any(|&sy| faces_seam(
                    b.bbox.y_max, a.bbox.y_min, sy, gap_tol,
                ) && span_overlap_frac(a.bbox.x_min, a.bbox.x_max, b.bbox.x_min, b.bbox.x_max)
                    >= span_overlap);
            if pair_merges {
                let combined = Detection {
                    bbox: a.bbox.union_bounds(&b.bbox),
                    confidence: a.confidence.max(b.confidence),
                };
                return Some((i, j, combined));
            }
        }
    }
    None
}

/// One box ends within gap_tol before/after the seam and the other begins
/// within gap_tol of it, from the far side.
fn faces_seam(end_edge: f64, start_edge: f64, seam: f64, gap_tol: f64) -> bool {
    (end_edge - seam).abs() <= gap_tol && (start_edge - seam).abs() <= gap_tol && end_edge <= start_edge + 2.0 * gap_tol
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageBuffer {
        let mut g = SplitMix64::new(seed);
        let samples = (0..h * w * c).map(|_| g.next_f64() as f32).collect();
        ImageBuffer::from_samples(h, w, c, samples).unwrap()
    }

    // -- tiling ------------------------------------------------------------

    #[test]
    fn exact_fit_single_tile() {
        let img = random_image(64, 64, 1, 1);
        let (grid, tiles) = tile(&img, 64, 64).unwrap();
        assert_eq!(grid.origins, vec![(0, 0)]);
        assert_eq!(tiles.len(), 1);
        assert_eq!(tiles[0], img);
    }

    #[test]
    fn exact_partition_four_tiles() {
        let img = random_image(128, 128, 1, 2);
        let (grid, tiles) = tile(&img, 64, 64).unwrap();
        assert_eq!(grid.origins, vec![(0, 0), (0, 64), (64, 0), (64, 64)]);
        assert_eq!(tiles.len(), 4);
    }

    #[test]
    fn ragged_edge_clamps_final_origin() {
        // 700-wide axis with 512 tiles at stride 512: origins 0 and 188.
        let img = random_image(700, 700, 1, 3);
        let (grid, _) = tile(&img, 512, 512).unwrap();
        assert_eq!(grid.origins, vec![(0, 0), (0, 188), (188, 0), (188, 188)]);
    }

    #[test]
    fn tile_count_matches_closed_form() {
        let mut g = SplitMix64::new(9);
        for _ in 0..50 {
            let ts = 4 + g.next_below(13) as usize;
            let h = ts + g.next_below(40) as usize;
            let w = ts + g.next_below(40) as usize;
            let stride = 1 + g.next_below(ts as u64) as usize;
            let img = ImageBuffer::zeros(h, w, 1).unwrap();
            let (grid, tiles) = tile(&img, ts, stride).unwrap();
            let per_axis = |dim: usize| ((dim - ts) as f64 / stride as f64).ceil() as usize + 1;
            assert_eq!(
                tiles.len(),
                per_axis(h) * per_axis(w),
                "dims {}x{} tile {} stride {}",
                h,
                w,
                ts,
                stride
            );
            assert_eq!(grid.origins.len(), tiles.len());
        }
    }

    #[test]
    fn tile_validation() {
        let img = ImageBuffer::zeros(32, 32, 1).unwrap();
        assert!(matches!(tile(&img, 0, 1), Err(TileError::ZeroTileSize)));
        assert!(matches!(tile(&img, 16, 0), Err(TileError::ZeroStride)));
        assert!(matches!(tile(&img, 33, 33), Err(TileError::TileTooLarge { .. })));
        assert!(matches!(tile(&img, 16, 17), Err(TileError::StrideGap { .. })));
    }

    // -- mosaic ------------------------------------------------------------

    #[test]
    fn mosaic_round_trips_exact_partition() {
        let img = random_image(96, 64, 3, 4);
        let (grid, tiles) = tile(&img, 32, 32).unwrap();
        let back = mosaic(&grid, &tiles).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn mosaic_round_trips_with_clamped_edges() {
        // 50x50 with 32-tiles: clamped origins overlap; overlap regions
        // average identical contributors, so the round trip stays exact.
        let img = random_image(50, 50, 1, 5);
        let (grid, tiles) = tile(&img, 32, 32).unwrap();
        let back = mosaic(&grid, &tiles).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn mosaic_averages_overlap() {
        // Two half-overlapping constant tiles: the shared strip averages to
        // (0.2 + 0.6) / 2 = 0.4.
        let grid = TileGrid {
            tile_size: 4,
            stride: 2,
            canvas_height: 4,
            canvas_width: 6,
            origins: vec![(0, 0), (0, 2)],
        };
        let tiles = vec![
            ImageBuffer::filled(4, 4, 1, 0.2).unwrap(),
            ImageBuffer::filled(4, 4, 1, 0.6).unwrap(),
        ];
        let out = mosaic(&grid, &tiles).unwrap();
        for y in 0..4 {
            for x in 0..6 {
                let expect = match x {
                    0 | 1 => 0.2,
                    2 | 3 => 0.4,
                    _ => 0.6,
                };
                assert!(
                    (out.get(0, y, x) - expect).abs() < 1e-7,
                    "({}, {}) = {}",
                    y,
                    x,
                    out.get(0, y, x)
                );
            }
        }
    }

    #[test]
    fn mosaic_validation() {
        let img = random_image(64, 64, 1, 6);
        let (grid, mut tiles) = tile(&img, 32, 32).unwrap();
        tiles.pop();
        assert!(matches!(mosaic(&grid, &tiles), Err(TileError::TileCountMismatch { .. })));
        let (grid2, mut tiles2) = tile(&img, 32, 32).unwrap();
        tiles2[1] = ImageBuffer::zeros(16, 16, 1).unwrap();
        assert!(matches!(mosaic(&grid2, &tiles2), Err(TileError::TileShapeMismatch { .. })));
    }

    // -- globalize ---------------------------------------------------------

    #[test]
    fn globalize_translates_by_origin() {
        let img = ImageBuffer::zeros(1024, 1024, 1).unwrap();
        let (grid, _) = tile(&img, 512, 512).unwrap();
        // origin (512, 512) is index 3 in row-major order
        let local = Bbox { x_min: 10.0, y_min: 20.0, x_max: 30.0, y_max: 40.0, class_id: 2 };
        let global = globalize_boxes(&grid, 3, &[local]).unwrap();
        assert_eq!(
            global[0],
            Bbox { x_min: 522.0, y_min: 532.0, x_max: 542.0, y_max: 552.0, class_id: 2 }
        );
    }

    #[test]
    fn globalize_validation() {
        let img = ImageBuffer::zeros(64, 64, 1).unwrap();
        let (grid, _) = tile(&img, 32, 32).unwrap();
        let local = Bbox { x_min: 0.0, y_min: 0.0, x_max: 33.0, y_max: 10.0, class_id: 0 };
        assert!(matches!(
            globalize_boxes(&grid, 0, &[local]),
            Err(TileError::BoxOutsideTile { .. })
        ));
        assert!(matches!(globalize_boxes(&grid, 9, &[]), Err(TileError::BadTileIndex { .. })));
    }

    // -- seam merge --------------------------------------------------------

    fn two_tile_grid() -> TileGrid {
        TileGrid {
            tile_size: 512,
            stride: 512,
            canvas_height: 512,
            canvas_width: 1024,
            origins: vec![(0, 0), (0, 512)],
        }
    }

    fn det(x0: f64, y0: f64, x1: f64, y1: f64, class_id: u32, conf: f64) -> Detection {
        Detection {
            bbox: Bbox { x_min: x0, y_min: y0, x_max: x1, y_max: y1, class_id },
            confidence: conf,
        }
    }

    #[test]
    fn seam_split_pair_merges_to_union() {
        let grid = two_tile_grid();
        let dets = vec![
            det(480.0, 100.0, 512.0, 160.0, 0, 0.8),
            det(512.0, 100.0, 544.0, 160.0, 0, 0.9),
        ];
        let merged = merge_seam_boxes(&grid, &dets, 4.0, 0.5).unwrap();
        assert_eq!(merged.len(), 1);
        let m = &merged[0];
        assert_eq!(
            m.bbox,
            Bbox { x_min: 480.0, y_min: 100.0, x_max: 544.0, y_max: 160.0, class_id: 0 }
        );
        assert_eq!(m.confidence, 0.9);

        // a second pass changes nothing
        let again = merge_seam_boxes(&grid, &merged, 4.0, 0.5).unwrap();
        assert_eq!(again, merged);
    }

    #[test]
    fn seam_merge_respects_class_and_alignment() {
        let grid = two_tile_grid();
        // different classes
        let cross_class = vec![
            det(480.0, 100.0, 512.0, 160.0, 0, 0.8),
            det(512.0, 100.0, 544.0, 160.0, 1, 0.9),
        ];
        assert_eq!(merge_seam_boxes(&grid, &cross_class, 4.0, 0.5).unwrap().len(), 2);
        // spans barely overlap (less than half the shorter span)
        let misaligned = vec![
            det(480.0, 100.0, 512.0, 160.0, 0, 0.8),
            det(512.0, 150.0, 544.0, 220.0, 0, 0.9),
        ];
        assert_eq!(merge_seam_boxes(&grid, &misaligned, 4.0, 0.5).unwrap().len(), 2);
        // both boxes on the same side of the seam
        let same_side = vec![
            det(400.0, 100.0, 440.0, 160.0, 0, 0.8),
            det(444.0, 100.0, 480.0, 160.0, 0, 0.9),
        ];
        assert_eq!(merge_seam_boxes(&grid, &same_side, 4.0, 0.5).unwrap().len(), 2);
    }

    #[test]
    fn seam_merge_chains_three_fragments() {
        // Vertical split at x = 512 and horizontal at y = 512 on a 2x2
        // grid: three fragments of one object collapse step by step.
        let img = ImageBuffer::zeros(1024, 1024, 1).unwrap();
        let (grid, _) = tile(&img, 512, 512).unwrap();
        let dets = vec![
            det(470.0, 470.0, 512.0, 512.0, 2, 0.7),
            det(512.0, 470.0, 550.0, 512.0, 2, 0.75),
            det(470.0, 512.0, 550.0, 560.0, 2, 0.9),
        ];
        let merged = merge_seam_boxes(&grid, &dets, 4.0, 0.5).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(
            merged[0].bbox,
            Bbox { x_min: 470.0, y_min: 470.0, x_max: 550.0, y_max: 560.0, class_id: 2 }
        );
        assert_eq!(merged[0].confidence, 0.9);
    }

    #[test]
    fn seam_merge_validation() {
        let grid = two_tile_grid();
        assert!(matches!(merge_seam_boxes(&grid, &[], -1.0, 0.5), Err(TileError::BadGapTol(_))));
        assert!(matches!(
            merge_seam_boxes(&grid, &[], 1.0, 1.5),
            Err(TileError::BadSpanOverlap(_))
        ));
    }
}
