//! Vector sketch document: strokes, placed images, stroke-level erase,
//! undo/redo history and reset.
//!
//! Every successful mutation bumps `revision`. Actions that can be undone
//! push one [`Edit`] onto the undo stack and clear the redo stack; reset
//! clears both stacks and starts a new canvas lifetime (`insight_count = 0`).

mod gallery;
mod render;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Pixmap, Rgba};

pub use gallery::{Gallery, GalleryEntry, GalleryEntrySummary, GalleryError};
pub use render::{region_pixel_rect, RenderCache, MAX_SCALE, MIN_SCALE};

pub const DEFAULT_CANVAS_WIDTH: f64 = 1024.0;
pub const DEFAULT_CANVAS_HEIGHT: f64 = 768.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanvasError {
    #[error("unknown target element {0}")]
    UnknownTarget(String),
    #[error("stroke has no points")]
    EmptyStroke,
    #[error("invalid stroke: {0}")]
    InvalidStroke(String),
    #[error("element id {0} already in use")]
    DuplicateId(String),
    #[error("no targets given")]
    NoTargets,
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("nothing to redo")]
    NothingToRedo,
    #[error("region does not intersect the canvas")]
    EmptyRegion,
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("scale {0} outside [0.25, 4.0]")]
    InvalidScale(f64),
    #[error("invalid move offset")]
    InvalidOffset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Milliseconds since the stroke began.
    pub t_ms: u64,
    #[serde(default = "default_pressure")]
    pub pressure: f64,
}

fn default_pressure() -> f64 {
    0.5
}

impl Point {
    pub fn new(x: f64, y: f64, t_ms: u64) -> Self {
        Self {
            x,
            y,
            t_ms,
            pressure: default_pressure(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub id: String,
    pub points: Vec<Point>,
    pub width: f64,
    pub color: Rgba,
    #[serde(default)]
    pub deleted: bool,
}

impl Stroke {
    pub fn new(id: impl Into<String>, points: Vec<Point>, width: f64, color: Rgba) -> Self {
        Self {
            id: id.into(),
            points,
            width,
            color,
            deleted: false,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), CanvasError> {
        if self.points.is_empty() {
            return Err(CanvasError::EmptyStroke);
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(CanvasError::InvalidStroke(format!("width {}", self.width)));
        }
        let mut last_t = 0;
        for p in &self.points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(CanvasError::InvalidStroke("non-finite coordinate".into()));
            }
            if !(0.0..=1.0).contains(&p.pressure) {
                return Err(CanvasError::InvalidStroke(format!(
                    "pressure {}",
                    p.pressure
                )));
            }
            if p.t_ms < last_t {
                return Err(CanvasError::InvalidStroke("timestamps decrease".into()));
            }
            last_t = p.t_ms;
        }
        Ok(())
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &self.points {
            b.0 = b.0.min(p.x);
            b.1 = b.1.min(p.y);
            b.2 = b.2.max(p.x);
            b.3 = b.3.max(p.y);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedImage {
    pub id: String,
    pub artifact_ref: String,
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Element {
    Stroke(Stroke),
    Image(PlacedImage),
}

impl Element {
    pub fn id(&self) -> &str {
        match self {
            Element::Stroke(s) => &s.id,
            Element::Image(i) => &i.id,
        }
    }

    /// Live elements are drawn and selectable; erased strokes are not.
    pub fn is_live(&self) -> bool {
        match self {
            Element::Stroke(s) => !s.deleted,
            Element::Image(_) => true,
        }
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match self {
            Element::Stroke(s) => s.bounds(),
            Element::Image(i) => (i.x, i.y, i.x + i.width, i.y + i.height),
        }
    }

    fn translate(&mut self, dx: f64, dy: f64) {
        match self {
            Element::Stroke(s) => {
                for p in &mut s.points {
                    p.x += dx;
                    p.y += dy;
                }
            }
            Element::Image(i) => {
                i.x += dx;
                i.y += dy;
            }
        }
    }
}

/// Rectangle in logical canvas units. Corners may be given in any order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSelection {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl RegionSelection {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn normalized(&self) -> Self {
        Self {
            x0: self.x0.min(self.x1),
            y0: self.y0.min(self.y1),
            x1: self.x0.max(self.x1),
            y1: self.y0.max(self.y1),
        }
    }

    /// Normalized intersection with `[0,w] x [0,h]`, or `None` when empty.
    pub fn clamp_to(&self, w: f64, h: f64) -> Option<Self> {
        let r = self.normalized();
        if ![r.x0, r.y0, r.x1, r.y1].iter().all(|v| v.is_finite()) {
            return None;
        }
        let c = Self {
            x0: r.x0.max(0.0),
            y0: r.y0.max(0.0),
            x1: r.x1.min(w),
            y1: r.y1.min(h),
        };
        (c.x0 < c.x1 && c.y0 < c.y1).then_some(c)
    }

    pub fn intersects(&self, b: (f64, f64, f64, f64)) -> bool {
        let r = self.normalized();
        b.0 <= r.x1 && b.2 >= r.x0 && b.1 <= r.y1 && b.3 >= r.y0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum CanvasAction {
    AddStroke { stroke: Stroke },
    EraseStrokes { ids: Vec<String> },
    Reset,
    PlaceImage {
        id: String,
        artifact_ref: String,
        region: RegionSelection,
    },
    MoveSelection { ids: Vec<String>, dx: f64, dy: f64 },
}

/// One undoable step as kept on the history stacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "edit", rename_all = "snake_case")]
pub enum Edit {
    Added { index: usize, element: Element },
    Erased { ids: Vec<String> },
    Moved {
        dx: f64,
        dy: f64,
        /// Element state before the move, by index.
        before: Vec<(usize, Element)>,
    },
}

/// Resolves artifact references to decoded pixels for placement and rendering.
pub trait ImageCatalog {
    fn image(&self, artifact_ref: &str) -> Option<&Pixmap>;
}

/// Catalog with no images.
pub struct NoImages;

impl ImageCatalog for NoImages {
    fn image(&self, _: &str) -> Option<&Pixmap> {
        None
    }
}

impl ImageCatalog for HashMap<String, Pixmap> {
    fn image(&self, artifact_ref: &str) -> Option<&Pixmap> {
        self.get(artifact_ref)
    }
}

impl ImageCatalog for BTreeMap<String, Pixmap> {
    fn image(&self, artifact_ref: &str) -> Option<&Pixmap> {
        self.get(artifact_ref)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanvasDocument {
    pub canvas_id: String,
    pub width: f64,
    pub height: f64,
    pub elements: Vec<Element>,
    pub undo_stack: Vec<Edit>,
    pub redo_stack: Vec<Edit>,
    pub revision: u64,
    pub insight_count: u64,
}

/// Serialization view without `revision`, used for content comparisons.
#[derive(Serialize)]
struct ContentView<'a> {
    canvas_id: &'a str,
    width: f64,
    height: f64,
    elements: &'a [Element],
    undo_stack: &'a [Edit],
    redo_stack: &'a [Edit],
    insight_count: u64,
}

impl CanvasDocument {
    pub fn new(canvas_id: impl Into<String>) -> Self {
        Self::with_size(canvas_id, DEFAULT_CANVAS_WIDTH, DEFAULT_CANVAS_HEIGHT)
    }

    pub fn with_size(canvas_id: impl Into<String>, width: f64, height: f64) -> Self {
        Self {
            canvas_id: canvas_id.into(),
            width,
            height,
            elements: Vec::new(),
            undo_stack: Vec::new(),
            redo_stack: Vec::new(),
            revision: 0,
            insight_count: 0,
        }
    }

    /// Visual content equality: size and element list.
    pub fn content_eq(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.elements == other.elements
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("document serializes")
    }

    /// Canonical serialization of everything except `revision`.
    pub fn canonical_content_json(&self) -> String {
        serde_json::to_string(&ContentView {
            canvas_id: &self.canvas_id,
            width: self.width,
            height: self.height,
            elements: &self.elements,
            undo_stack: &self.undo_stack,
            redo_stack: &self.redo_stack,
            insight_count: self.insight_count,
        })
        .expect("document serializes")
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id() == id)
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.id() == id)
    }

    pub fn live_elements(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| e.is_live())
    }

    /// Ids of live elements whose bounding box touches `region`.
    pub fn select(&self, region: &RegionSelection) -> Vec<String> {
        self.live_elements()
            .filter(|e| region.intersects(e.bounds()))
            .map(|e| e.id().to_string())
            .collect()
    }

    pub fn can_undo(&self) -> bool {
        !self.undo_stack.is_empty()
    }

    pub fn can_redo(&self) -> bool {
        !self.redo_stack.is_empty()
    }

    fn bump(&mut self) {
        self.revision += 1;
    }

    /// Counts one insight generation against this canvas lifetime.
    /// Does not change the visual content, so `revision` is left alone.
    pub fn record_insight(&mut self) {
        self.insight_count += 1;
    }

    pub fn apply(
        &mut self,
        action: CanvasAction,
        images: &dyn ImageCatalog,
    ) -> Result<(), CanvasError> {
        let edit = match action {
            CanvasAction::AddStroke { mut stroke } => {
                stroke.validate()?;
                if self.index_of(&stroke.id).is_some() {
                    return Err(CanvasError::DuplicateId(stroke.id));
                }
                stroke.deleted = false;
                Edit::Added {
                    index: self.elements.len(),
                    element: Element::Stroke(stroke),
                }
            }
            CanvasAction::EraseStrokes { ids } => {
                if ids.is_empty() {
                    return Err(CanvasError::NoTargets);
                }
                let mut targets = Vec::with_capacity(ids.len());
                for id in ids {
                    match self.element(&id) {
                        Some(Element::Stroke(s)) if !s.deleted => {
                            if !targets.contains(&id) {
                                targets.push(id);
                            }
                        }
                        _ => return Err(CanvasError::UnknownTarget(id)),
                    }
                }
                Edit::Erased { ids: targets }
            }
            CanvasAction::Reset => {
                self.elements.clear();
                self.undo_stack.clear();
                self.redo_stack.clear();
                self.insight_count = 0;
                self.bump();
                return Ok(());
            }
            CanvasAction::PlaceImage {
                id,
                artifact_ref,
                region,
            } => {
                if images.image(&artifact_ref).is_none() {
                    return Err(CanvasError::UnknownArtifact(artifact_ref));
                }
                if self.index_of(&id).is_some() {
                    return Err(CanvasError::DuplicateId(id));
                }
                let r = region
                    .clamp_to(self.width, self.height)
                    .ok_or(CanvasError::EmptyRegion)?;
                Edit::Added {
                    index: self.elements.len(),
                    element: Element::Image(PlacedImage {
                        id,
                        artifact_ref,
                        x: r.x0,
                        y: r.y0,
                        width: r.x1 - r.x0,
                        height: r.y1 - r.y0,
                    }),
                }
            }
            CanvasAction::MoveSelection { ids, dx, dy } => {
                if !(dx.is_finite() && dy.is_finite()) {
                    return Err(CanvasError::InvalidOffset);
                }
                if ids.is_empty() {
                    return Err(CanvasError::NoTargets);
                }
                let mut before: Vec<(usize, Element)> = Vec::with_capacity(ids.len());
                for id in ids {
                    let idx = self
                        .index_of(&id)
                        .filter(|&i| self.elements[i].is_live())
                        .ok_or_else(|| CanvasError::UnknownTarget(id.clone()))?;
                    if !before.iter().any(|(i, _)| *i == idx) {
                        before.push((idx, self.elements[idx].clone()));
                    }
                }
                Edit::Moved { dx, dy, before }
            }
        };
        self.apply_edit(edit.clone());
        self.undo_stack.push(edit);
        self.redo_stack.clear();
        self.bump();
        Ok(())
    }

    /// Places a registered artifact into `region` (clamped to the canvas).
    pub fn import_image(
        &mut self,
        id: impl Into<String>,
        artifact_ref: impl Into<String>,
        region: RegionSelection,
        images: &dyn ImageCatalog,
    ) -> Result<(), CanvasError> {
        self.apply(
            CanvasAction::PlaceImage {
                id: id.into(),
                artifact_ref: artifact_ref.into(),
                region,
            },
            images,
        )
    }

    pub fn undo(&mut self) -> Result<(), CanvasError> {
        let edit = self.undo_stack.pop().ok_or(CanvasError::NothingToUndo)?;
        match &edit {
            Edit::Added { index, .. } => {
                self.elements.remove(*index);
            }
            Edit::Erased { ids } => self.set_deleted(ids, false),
            Edit::Moved { before, .. } => {
                for (idx, el) in before {
                    self.elements[*idx] = el.clone();
                }
            }
        }
        self.redo_stack.push(edit);
        self.bump();
        Ok(())
    }

    pub fn redo(&mut self) -> Result<(), CanvasError> {
        let edit = self.redo_stack.pop().ok_or(CanvasError::NothingToRedo)?;
        self.apply_edit(edit.clone());
        self.undo_stack.push(edit);
        self.bump();
        Ok(())
    }

    fn set_deleted(&mut self, ids: &[String], deleted: bool) {
        for el in &mut self.elements {
            if let Element::Stroke(s) = el {
                if ids.contains(&s.id) {
                    s.deleted = deleted;
                }
            }
        }
    }
}

impl CanvasDocument {
    // Forward application of an edit; shared by apply and redo.
    fn apply_edit(&mut self, edit: Edit) {
        match edit {
            Edit::Added { index, element } => self.elements.insert(index, element),
            Edit::Erased { ids } => self.set_deleted(&ids, true),
            Edit::Moved { dx, dy, before } => {
                for (idx, mut el) in before {
                    el.translate(dx, dy);
                    self.elements[idx] = el;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stroke(id: &str) -> Stroke {
        Stroke::new(
            id,
            vec![Point::new(0.0, 100.0, 0), Point::new(200.0, 100.0, 16)],
            4.0,
            Rgba::BLACK,
        )
    }

    fn add(doc: &mut CanvasDocument, id: &str) {
        doc.apply(CanvasAction::AddStroke { stroke: stroke(id) }, &NoImages)
            .unwrap();
    }

    #[test]
    fn add_stroke_pushes_one_undo_entry() {
        let mut doc = CanvasDocument::new("c");
        add(&mut doc, "s1");
        assert_eq!(doc.elements.len(), 1);
        assert_eq!(doc.undo_stack.len(), 1);
        assert_eq!(doc.revision, 1);
    }

    #[test]
    fn erase_marks_deleted_and_undo_restores() {
        let mut doc = CanvasDocument::new("c");
        add(&mut doc, "s1");
        doc.apply(
            CanvasAction::EraseStrokes {
                ids: vec!["s1".into()],
            },
            &NoImages,
        )
        .unwrap();
        assert_eq!(doc.undo_stack.len(), 2);
        assert!(matches!(&doc.elements[0], Element::Stroke(s) if s.deleted));
        doc.undo().unwrap();
        assert!(matches!(&doc.elements[0], Element::Stroke(s) if !s.deleted));
    }

    #[test]
    fn erase_unknown_or_already_erased_is_rejected() {
        let mut doc = CanvasDocument::new("c");
        let err = doc
            .apply(
                CanvasAction::EraseStrokes {
                    ids: vec!["nope".into()],
                },
                &NoImages,
            )
            .unwrap_err();
        assert_eq!(err, CanvasError::UnknownTarget("nope".into()));
        add(&mut doc, "s1");
        let erase = CanvasAction::EraseStrokes {
            ids: vec!["s1".into()],
        };
        doc.apply(erase.clone(), &NoImages).unwrap();
        assert!(doc.apply(erase, &NoImages).is_err());
    }

    #[test]
    fn reset_clears_everything() {
        let mut doc = CanvasDocument::new("c");
        add(&mut doc, "s1");
        add(&mut doc, "s2");
        doc.record_insight();
        let rev = doc.revision;
        doc.apply(CanvasAction::Reset, &NoImages).unwrap();
        assert!(doc.elements.is_empty());
        assert!(doc.undo_stack.is_empty() && doc.redo_stack.is_empty());
        assert_eq!(doc.insight_count, 0);
        assert!(doc.revision > rev);
    }

    #[test]
    fn empty_stroke_rejected() {
        let mut doc = CanvasDocument::new("c");
        let s = Stroke::new("s", vec![], 2.0, Rgba::BLACK);
        assert_eq!(
            doc.apply(CanvasAction::AddStroke { stroke: s }, &NoImages),
            Err(CanvasError::EmptyStroke)
        );
        assert_eq!(doc.revision, 0);
    }

    #[test]
    fn undo_redo_errors_on_empty_stacks() {
        let mut doc = CanvasDocument::new("c");
        assert_eq!(doc.undo(), Err(CanvasError::NothingToUndo));
        assert_eq!(doc.redo(), Err(CanvasError::NothingToRedo));
    }

    #[test]
    fn undo_then_redo_restores_content() {
        let mut doc = CanvasDocument::new("c");
        add(&mut doc, "s1");
        let before = doc.canonical_content_json();
        doc.undo().unwrap();
        assert!(doc.content_eq(&CanvasDocument::new("c")));
        doc.redo().unwrap();
        assert_eq!(doc.canonical_content_json(), before);
    }

    #[test]
    fn new_action_clears_redo() {
        let mut doc = CanvasDocument::new("c");
        add(&mut doc, "s1");
        doc.undo().unwrap();
        add(&mut doc, "s2");
        assert_eq!(doc.redo(), Err(CanvasError::NothingToRedo));
    }

    #[test]
    fn move_undo_restores_exact_coordinates() {
        let mut doc = CanvasDocument::new("c");
        add(&mut doc, "s1");
        let before = doc.elements.clone();
        doc.apply(
            CanvasAction::MoveSelection {
                ids: vec!["s1".into()],
                dx: 0.1,
                dy: 0.7,
            },
            &NoImages,
        )
        .unwrap();
        assert_ne!(doc.elements, before);
        doc.undo().unwrap();
        assert_eq!(doc.elements, before);
    }

    #[test]
    fn place_image_requires_known_artifact() {
        let mut doc = CanvasDocument::new("c");
        let region = RegionSelection::new(10.0, 10.0, 310.0, 210.0);
        assert_eq!(
            doc.import_image("i1", "missing", region, &NoImages),
            Err(CanvasError::UnknownArtifact("missing".into()))
        );
        let mut cat = HashMap::new();
        cat.insert("a".to_string(), Pixmap::filled(2, 2, Rgba::BLACK));
        doc.import_image("i1", "a", region, &cat).unwrap();
        assert!(matches!(doc.elements[0], Element::Image(_)));
        doc.undo().unwrap();
        assert!(doc.elements.is_empty());
    }

    #[test]
    fn placement_is_clamped_to_canvas() {
        let mut doc = CanvasDocument::new("c");
        let mut cat = HashMap::new();
        cat.insert("a".to_string(), Pixmap::filled(2, 2, Rgba::BLACK));
        doc.import_image("i1", "a", RegionSelection::new(900.0, 700.0, 1200.0, 900.0), &cat)
            .unwrap();
        let Element::Image(img) = &doc.elements[0] else {
            panic!()
        };
        assert_eq!((img.x, img.y, img.width, img.height), (900.0, 700.0, 124.0, 68.0));
        assert_eq!(
            doc.import_image("i2", "a", RegionSelection::new(2000.0, 0.0, 2100.0, 10.0), &cat),
            Err(CanvasError::EmptyRegion)
        );
    }

    #[test]
    fn select_picks_live_elements_touching_region() {
        let mut doc = CanvasDocument::new("c");
        add(&mut doc, "s1");
        doc.apply(
            CanvasAction::AddStroke {
                stroke: Stroke::new("s2", vec![Point::new(500.0, 500.0, 0)], 2.0, Rgba::BLACK),
            },
            &NoImages,
        )
        .unwrap();
        let sel = doc.select(&RegionSelection::new(0.0, 0.0, 300.0, 300.0));
        assert_eq!(sel, vec!["s1".to_string()]);
    }
}
