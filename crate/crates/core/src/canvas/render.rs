//! Reference rasterizer.
//!
//! Pinned rules: white background, elements in order, strokes as
//! round-capped/round-joined polylines of width `stroke.width * scale`,
//! no anti-aliasing (a pixel is inked when its centre lies within half
//! the width of some segment), source-over compositing, placed images
//! scaled nearest-neighbour into their rectangle. Rendering works on a
//! pixel window in global raster coordinates, so a crop rendered
//! directly is identical to slicing the full frame.

use std::collections::VecDeque;

use super::{CanvasDocument, CanvasError, Element, ImageCatalog, PlacedImage, RegionSelection, Stroke};
use crate::raster::{Pixmap, RasterImage, Rgba};

pub const MIN_SCALE: f64 = 0.25;
pub const MAX_SCALE: f64 = 4.0;

#[derive(Debug, Clone, Copy)]
struct Window {
    x: i64,
    y: i64,
    w: u32,
    h: u32,
}

impl Window {
    fn x_end(&self) -> i64 {
        self.x + self.w as i64
    }
    fn y_end(&self) -> i64 {
        self.y + self.h as i64
    }
}

fn check_scale(scale: f64) -> Result<(), CanvasError> {
    if (MIN_SCALE..=MAX_SCALE).contains(&scale) {
        Ok(())
    } else {
        Err(CanvasError::InvalidScale(scale))
    }
}

/// Pixel rectangle `(x, y, w, h)` covered by `region` in a raster of the given size.
pub fn region_pixel_rect(
    region: &RegionSelection,
    scale: f64,
    raster_w: u32,
    raster_h: u32,
) -> Option<(u32, u32, u32, u32)> {
    let r = region.normalized();
    if ![r.x0, r.y0, r.x1, r.y1].iter().all(|v| v.is_finite()) {
        return None;
    }
    let x0 = ((r.x0 * scale).floor().max(0.0) as i64).min(raster_w as i64);
    let y0 = ((r.y0 * scale).floor().max(0.0) as i64).min(raster_h as i64);
    let x1 = ((r.x1 * scale).ceil().max(0.0) as i64).min(raster_w as i64);
    let y1 = ((r.y1 * scale).ceil().max(0.0) as i64).min(raster_h as i64);
    (x1 > x0 && y1 > y0).then(|| (x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32))
}

impl CanvasDocument {
    pub fn raster_size(&self, scale: f64) -> (u32, u32) {
        (
            ((self.width * scale).round() as u32).max(1),
            ((self.height * scale).round() as u32).max(1),
        )
    }

    pub fn render_pixmap(
        &self,
        scale: f64,
        images: &dyn ImageCatalog,
    ) -> Result<Pixmap, CanvasError> {
        check_scale(scale)?;
        let (w, h) = self.raster_size(scale);
        Ok(self.render_window(Window { x: 0, y: 0, w, h }, scale, images))
    }

    pub fn rasterize(
        &self,
        scale: f64,
        images: &dyn ImageCatalog,
    ) -> Result<RasterImage, CanvasError> {
        Ok(RasterImage::from_pixmap(&self.render_pixmap(scale, images)?))
    }

    pub fn crop_pixmap(
        &self,
        region: &RegionSelection,
        scale: f64,
        images: &dyn ImageCatalog,
    ) -> Result<Pixmap, CanvasError> {
        check_scale(scale)?;
        let (w, h) = self.raster_size(scale);
        let (x, y, cw, ch) =
            region_pixel_rect(region, scale, w, h).ok_or(CanvasError::EmptyRegion)?;
        Ok(self.render_window(
            Window {
                x: x as i64,
                y: y as i64,
                w: cw,
                h: ch,
            },
            scale,
            images,
        ))
    }

    pub fn crop_region(
        &self,
        region: &RegionSelection,
        scale: f64,
        images: &dyn ImageCatalog,
    ) -> Result<RasterImage, CanvasError> {
        Ok(RasterImage::from_pixmap(
            &self.crop_pixmap(region, scale, images)?,
        ))
    }

    /// Full frame through `cache`. When the document only appended
    /// elements since the cached frame, just the new ones are drawn.
    pub fn render_cached<'c>(
        &self,
        scale: f64,
        images: &dyn ImageCatalog,
        cache: &'c mut RenderCache,
    ) -> Result<&'c Pixmap, CanvasError> {
        check_scale(scale)?;
        let (w, h) = self.raster_size(scale);
        let win = Window { x: 0, y: 0, w, h };
        let reusable = cache.frame.as_ref().is_some_and(|f| {
            f.complete
                && f.scale == scale
                && (f.pixmap.width(), f.pixmap.height()) == (w, h)
                && f.elements.len() <= self.elements.len()
                && f.elements[..] == self.elements[..f.elements.len()]
        });
        let (mut pixmap, from) = match cache.frame.take() {
            Some(f) if reusable => (f.pixmap, f.elements.len()),
            _ => (Pixmap::filled(w, h, Rgba::WHITE), 0),
        };
        let mut complete = true;
        for el in &self.elements[from..] {
            complete &= draw_element(&mut pixmap, win, el, scale, images);
        }
        // A frame with an unresolved image could render differently later.
        let frame = cache.frame.insert(CachedFrame {
            scale,
            elements: if complete { self.elements.clone() } else { Vec::new() },
            complete,
            pixmap,
        });
        Ok(&frame.pixmap)
    }

    /// Same bytes as [`CanvasDocument::rasterize`]. Encoded frames are
    /// remembered by content, so undo/redo back to a seen state is free.
    pub fn rasterize_cached(
        &self,
        scale: f64,
        images: &dyn ImageCatalog,
        cache: &mut RenderCache,
    ) -> Result<RasterImage, CanvasError> {
        check_scale(scale)?;
        let key = serde_json::to_string(&(scale, self.width, self.height, &self.elements))
            .expect("elements serialize");
        if let Some(pos) = cache.encoded.iter().position(|(k, _)| *k == key) {
            let hit = cache.encoded.remove(pos).expect("position is in range");
            cache.encoded.push_back(hit.clone());
            return Ok(hit.1);
        }
        let img = RasterImage::from_pixmap(self.render_cached(scale, images, cache)?);
        if cache.frame.as_ref().is_some_and(|f| f.complete) {
            if cache.encoded.len() == ENCODED_FRAMES {
                cache.encoded.pop_front();
            }
            cache.encoded.push_back((key, img.clone()));
        }
        Ok(img)
    }

    /// Same bytes as [`CanvasDocument::crop_region`], sliced from the cached full frame.
    pub fn crop_cached(
        &self,
        region: &RegionSelection,
        scale: f64,
        images: &dyn ImageCatalog,
        cache: &mut RenderCache,
    ) -> Result<RasterImage, CanvasError> {
        check_scale(scale)?;
        let (w, h) = self.raster_size(scale);
        let (x, y, cw, ch) =
            region_pixel_rect(region, scale, w, h).ok_or(CanvasError::EmptyRegion)?;
        let full = self.render_cached(scale, images, cache)?;
        Ok(RasterImage::from_pixmap(&full.crop(x, y, cw, ch)))
    }

    fn render_window(&self, win: Window, scale: f64, images: &dyn ImageCatalog) -> Pixmap {
        let mut out = Pixmap::filled(win.w, win.h, Rgba::WHITE);
        for el in &self.elements {
            draw_element(&mut out, win, el, scale, images);
        }
        out
    }
}

const ENCODED_FRAMES: usize = 8;

#[derive(Debug, Default)]
pub struct RenderCache {
    frame: Option<CachedFrame>,
    encoded: VecDeque<(String, RasterImage)>,
}

#[derive(Debug)]
struct CachedFrame {
    scale: f64,
    elements: Vec<Element>,
    complete: bool,
    pixmap: Pixmap,
}

/// Returns false when a placed image could not be resolved.
fn draw_element(out: &mut Pixmap, win: Window, el: &Element, scale: f64, images: &dyn ImageCatalog) -> bool {
    match el {
        Element::Stroke(s) if !s.deleted => draw_stroke(out, win, s, scale),
        Element::Stroke(_) => {}
        Element::Image(img) => match images.image(&img.artifact_ref) {
            Some(src) => draw_image(out, win, img, src, scale),
            None => return false,
        },
    }
    true
}

#[inline]
fn seg_dist2(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
    qx * qx + qy * qy
}

fn draw_stroke(out: &mut Pixmap, win: Window, stroke: &Stroke, scale: f64) {
    let r = stroke.width * scale / 2.0;
    let r2 = r * r;
    let pts: Vec<(f64, f64)> = stroke
        .points
        .iter()
        .map(|p| (p.x * scale, p.y * scale))
        .collect();
    let segments: Vec<((f64, f64), (f64, f64))> = if pts.len() == 1 {
        vec![(pts[0], pts[0])]
    } else {
        pts.windows(2).map(|w| (w[0], w[1])).collect()
    };

    // Coverage mask over the stroke's clipped bounding box so overlapping
    // segments blend once.
    let pad = r + 0.5;
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &pts {
        lo_x = lo_x.min(p.0);
        lo_y = lo_y.min(p.1);
        hi_x = hi_x.max(p.0);
        hi_y = hi_y.max(p.1);
    }
    let bx0 = ((lo_x - pad).floor() as i64).max(win.x);
    let by0 = ((lo_y - pad).floor() as i64).max(win.y);
    let bx1 = ((hi_x + pad).ceil() as i64).min(win.x_end() - 1);
    let by1 = ((hi_y + pad).ceil() as i64).min(win.y_end() - 1);
    if bx1 < bx0 || by1 < by0 {
        return;
    }
    let opaque = stroke.color.0[3] == 255;
    let bw = (bx1 - bx0 + 1) as usize;
    // Opaque ink overwrites, so repeated coverage is harmless.
    let mut mask = if opaque {
        Vec::new()
    } else {
        vec![false; bw * (by1 - by0 + 1) as usize]
    };
    let mut any = false;
    for (a, b) in segments {
        let px_lo = ((a.0.min(b.0) - pad).floor() as i64).max(bx0);
        let px_hi = ((a.0.max(b.0) + r - 0.5).ceil() as i64).min(bx1);
        let py_lo = ((a.1.min(b.1) - pad).floor() as i64).max(by0);
        let py_hi = ((a.1.max(b.1) + r - 0.5).ceil() as i64).min(by1);
        for py in py_lo..=py_hi {
            let cy = py as f64 + 0.5;
            let Some((xl, xr)) = row_span(cy, a, b, r) else {
                continue;
            };
            let row = (py - by0) as usize * bw;
            let lo = px_lo.max(xl.floor() as i64 - 1);
            let hi = px_hi.min(xr.ceil() as i64 + 1);
            for px in lo..=hi {
                let cx = px as f64 + 0.5;
                if seg_dist2(cx, cy, a, b) <= r2 {
                    if opaque {
                        out.set_pixel((px - win.x) as u32, (py - win.y) as u32, stroke.color);
                    } else {
                        mask[row + (px - bx0) as usize] = true;
                        any = true;
                    }
                }
            }
        }
    }
    if !any {
        return;
    }
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        let x = (bx0 - win.x) as u32 + (i % bw) as u32;
        let y = (by0 - win.y) as u32 + (i / bw) as u32;
        out.blend_pixel(x, y, stroke.color);
    }
}

/// Conservative x-interval of points on row `cy` within `r` of segment
/// `ab`. A closest point within `r` lies at a parameter whose y is within
/// `r` of the row.
fn row_span(cy: f64, a: (f64, f64), b: (f64, f64), r: f64) -> Option<(f64, f64)> {
    let dy = b.1 - a.1;
    let (t0, t1) = if dy == 0.0 {
        if (a.1 - cy).abs() > r {
            return None;
        }
        (0.0, 1.0)
    } else {
        let u = (cy - r - a.1) / dy;
        let v = (cy + r - a.1) / dy;
        (u.min(v).max(0.0), u.max(v).min(1.0))
    };
    if t0 > t1 {
        return None;
    }
    let x0 = a.0 + t0 * (b.0 - a.0);
    let x1 = a.0 + t1 * (b.0 - a.0);
    Some((x0.min(x1) - r - 0.5, x0.max(x1) + r - 0.5))
}

fn draw_image(out: &mut Pixmap, win: Window, img: &PlacedImage, src: &Pixmap, scale: f64) {
    let rx0 = (img.x * scale).round() as i64;
    let ry0 = (img.y * scale).round() as i64;
    let rx1 = ((img.x + img.width) * scale).round() as i64;
    let ry1 = ((img.y + img.height) * scale).round() as i64;
    let (rw, rh) = (rx1 - rx0, ry1 - ry0);
    if rw <= 0 || rh <= 0 || src.width() == 0 || src.height() == 0 {
        return;
    }
    for gy in ry0.max(win.y)..ry1.min(win.y_end()) {
        let sy = (((gy - ry0) as f64 + 0.5) * src.height() as f64 / rh as f64) as u32;
        let sy = sy.min(src.height() - 1);
        for gx in rx0.max(win.x)..rx1.min(win.x_end()) {
            let sx = (((gx - rx0) as f64 + 0.5) * src.width() as f64 / rw as f64) as u32;
            let sx = sx.min(src.width() - 1);
            out.blend_pixel(
                (gx - win.x) as u32,
                (gy - win.y) as u32,
                src.pixel(sx, sy),
            );
        }
    }
}
