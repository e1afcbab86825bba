//! Independent reference implementations used as test oracles.

use rand::Rng;

use sketchvox_core::canvas::{
    CanvasAction, CanvasDocument, CanvasError, Element, NoImages, Point, RegionSelection, Stroke,
};
use sketchvox_core::raster::{Pixmap, Rgba};

/// Pixels whose centre lies within `width/2` of the segment, by brute force.
pub fn ink_count(w: u32, h: u32, a: (f64, f64), b: (f64, f64), width: f64) -> usize {
    let r = width / 2.0;
    let mut n = 0;
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let (vx, vy) = (b.0 - a.0, b.1 - a.1);
            let len2 = vx * vx + vy * vy;
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((px - a.0) * vx + (py - a.1) * vy) / len2).clamp(0.0, 1.0)
            };
            let (dx, dy) = (a.0 + t * vx - px, a.1 + t * vy - py);
            if (dx * dx + dy * dy).sqrt() <= r {
                n += 1;
            }
        }
    }
    n
}

/// Slices the full frame to the region's covering pixel rectangle.
pub fn crop_oracle(full: &Pixmap, region: &RegionSelection, scale: f64) -> Option<Vec<u8>> {
    let (lo_x, hi_x) = (region.x0.min(region.x1), region.x0.max(region.x1));
    let (lo_y, hi_y) = (region.y0.min(region.y1), region.y0.max(region.y1));
    let fw = full.width() as i64;
    let fh = full.height() as i64;
    let x0 = ((lo_x * scale).floor() as i64).clamp(0, fw);
    let x1 = ((hi_x * scale).ceil() as i64).clamp(0, fw);
    let y0 = ((lo_y * scale).floor() as i64).clamp(0, fh);
    let y1 = ((hi_y * scale).ceil() as i64).clamp(0, fh);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    let mut out = Vec::new();
    let row = full.width() as usize * 4;
    for y in y0..y1 {
        let start = y as usize * row + x0 as usize * 4;
        out.extend_from_slice(&full.data()[start..start + (x1 - x0) as usize * 4]);
    }
    Some(out)
}

#[derive(Debug, Clone)]
pub enum Op {
    Add { pts: Vec<(f64, f64)>, width: f64 },
    Erase(usize),
    Move { pick: usize, dx: f64, dy: f64 },
    Undo,
    Redo,
}

pub fn random_op(rng: &mut impl Rng) -> Op {
    match rng.random_range(0..10) {
        0..=3 => {
            let n = rng.random_range(1..5);
            Op::Add {
                pts: (0..n)
                    .map(|_| (rng.random_range(0.0..1024.0), rng.random_range(0.0..768.0)))
                    .collect(),
                width: rng.random_range(1.0..10.0),
            }
        }
        4 => Op::Erase(rng.random_range(0..16)),
        5 => Op::Move {
            pick: rng.random_range(0..16),
            dx: rng.random_range(-50.0..50.0),
            dy: rng.random_range(-50.0..50.0),
        },
        6..=7 => Op::Undo,
        _ => Op::Redo,
    }
}

/// Command-history reference: whole-content snapshots on two stacks.
#[derive(Default)]
pub struct RefHistory {
    pub elements: Vec<Element>,
    undo: Vec<Vec<Element>>,
    redo: Vec<Vec<Element>>,
    next_id: usize,
}

fn translated(e: &Element, dx: f64, dy: f64) -> Element {
    let mut e = e.clone();
    match &mut e {
        Element::Stroke(s) => s.points.iter_mut().for_each(|p| {
            p.x += dx;
            p.y += dy;
        }),
        Element::Image(i) => {
            i.x += dx;
            i.y += dy;
        }
    }
    e
}

impl RefHistory {
    fn commit(&mut self, next: Vec<Element>) {
        self.undo.push(std::mem::replace(&mut self.elements, next));
        self.redo.clear();
    }

    /// Applies `op` to both the reference and `doc`, returning whether the
    /// two agreed on success.
    pub fn step(&mut self, doc: &mut CanvasDocument, op: &Op) -> Result<bool, String> {
        let live: Vec<usize> = (0..self.elements.len())
            .filter(|i| self.elements[*i].is_live())
            .collect();
        let (expect_ok, got) = match op {
            Op::Add { pts, width } => {
                self.next_id += 1;
                let id = format!("r{}", self.next_id);
                let points = pts
                    .iter()
                    .enumerate()
                    .map(|(i, (x, y))| Point::new(*x, *y, i as u64))
                    .collect();
                let stroke = Stroke::new(id, points, *width, Rgba::BLACK);
                let mut next = self.elements.clone();
                next.push(Element::Stroke(stroke.clone()));
                self.commit(next);
                (true, doc.apply(CanvasAction::AddStroke { stroke }, &NoImages))
            }
            Op::Erase(k) => {
                let target = live.get(*k).map(|i| self.elements[*i].id().to_string());
                let id = target.clone().unwrap_or_else(|| "missing".into());
                if target.is_some() {
                    let mut next = self.elements.clone();
                    for e in &mut next {
                        if let Element::Stroke(s) = e {
                            if s.id == id {
                                s.deleted = true;
                            }
                        }
                    }
                    self.commit(next);
                }
                let got = doc.apply(CanvasAction::EraseStrokes { ids: vec![id] }, &NoImages);
                (target.is_some(), got)
            }
            Op::Move { pick, dx, dy } => {
                let idx = live.get(*pick).copied();
                let id = idx.map(|i| self.elements[i].id().to_string());
                if let Some(i) = idx {
                    let mut next = self.elements.clone();
                    next[i] = translated(&next[i], *dx, *dy);
                    self.commit(next);
                }
                let got = doc.apply(
                    CanvasAction::MoveSelection {
                        ids: id.clone().into_iter().collect(),
                        dx: *dx,
                        dy: *dy,
                    },
                    &NoImages,
                );
                (idx.is_some(), got)
            }
            Op::Undo => {
                let ok = match self.undo.pop() {
                    Some(prev) => {
                        self.redo.push(std::mem::replace(&mut self.elements, prev));
                        true
                    }
                    None => false,
                };
                let got = doc.undo();
                if !ok && got != Err(CanvasError::NothingToUndo) {
                    return Err(format!("undo: expected NothingToUndo, got {got:?}"));
                }
                (ok, got)
            }
            Op::Redo => {
                let ok = match self.redo.pop() {
                    Some(next) => {
                        self.undo.push(std::mem::replace(&mut self.elements, next));
                        true
                    }
                    None => false,
                };
                let got = doc.redo();
                if !ok && got != Err(CanvasError::NothingToRedo) {
                    return Err(format!("redo: expected NothingToRedo, got {got:?}"));
                }
                (ok, got)
            }
        };
        if expect_ok != got.is_ok() {
            return Err(format!("{op:?}: reference ok={expect_ok}, document {got:?}"));
        }
        if doc.elements != self.elements {
            return Err(format!("{op:?}: element lists differ"));
        }
        Ok(expect_ok)
    }
}

/// Random document built from `n` valid strokes plus a few erasures.
pub fn random_doc(rng: &mut impl Rng, n: usize) -> CanvasDocument {
    let mut doc = CanvasDocument::new("c");
    for i in 0..n {
        let k = rng.random_range(1..6);
        let pts = (0..k)
            .map(|j| {
                Point::new(
                    rng.random_range(-20.0..1044.0),
                    rng.random_range(-20.0..788.0),
                    j as u64,
                )
            })
            .collect();
        let color = Rgba([
            rng.random_range(0..=255),
            rng.random_range(0..=255),
            rng.random_range(0..=255),
            rng.random_range(64..=255),
        ]);
        let stroke = Stroke::new(format!("s{i}"), pts, rng.random_range(0.5..24.0), color);
        doc.apply(CanvasAction::AddStroke { stroke }, &NoImages)
            .expect("valid stroke");
        if rng.random_bool(0.15) {
            doc.apply(
                CanvasAction::EraseStrokes {
                    ids: vec![format!("s{i}")],
                },
                &NoImages,
            )
            .expect("live stroke");
        }
    }
    doc
}

pub fn random_region(rng: &mut impl Rng) -> RegionSelection {
    RegionSelection::new(
        rng.random_range(-100.0..1124.0),
        rng.random_range(-100.0..868.0),
        rng.random_range(-100.0..1124.0),
        rng.random_range(-100.0..868.0),
    )
}
