mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::oracles::{crop_oracle, ink_count, random_doc, random_op, random_region, Op, RefHistory};
use sketchvox_core::canvas::{
    CanvasAction, CanvasDocument, CanvasError, Gallery, NoImages, Point, RegionSelection,
    RenderCache, Stroke,
};
use sketchvox_core::raster::{Pixmap, Rgba};

fn line(id: &str, a: (f64, f64), b: (f64, f64), width: f64) -> CanvasAction {
    CanvasAction::AddStroke {
        stroke: Stroke::new(
            id,
            vec![Point::new(a.0, a.1, 0), Point::new(b.0, b.1, 10)],
            width,
            Rgba::BLACK,
        ),
    }
}

#[test]
fn horizontal_line_ink_matches_distance_oracle() {
    let mut doc = CanvasDocument::new("c");
    doc.apply(line("s1", (0.0, 100.0), (200.0, 100.0), 4.0), &NoImages)
        .unwrap();
    let px = doc.render_pixmap(1.0, &NoImages).unwrap();
    let got = px.count_pixels(|c| c != Rgba::WHITE) as f64;
    let want = ink_count(1024, 768, (0.0, 100.0), (200.0, 100.0), 4.0) as f64;
    assert!((got - want).abs() <= want * 0.02, "got {got}, oracle {want}");
}

#[test]
fn diagonal_line_ink_matches_distance_oracle() {
    let mut doc = CanvasDocument::with_size("c", 300.0, 300.0);
    doc.apply(line("s1", (20.0, 30.0), (250.0, 190.0), 7.0), &NoImages)
        .unwrap();
    let px = doc.render_pixmap(1.0, &NoImages).unwrap();
    let got = px.count_pixels(|c| c != Rgba::WHITE) as f64;
    let want = ink_count(300, 300, (20.0, 30.0), (250.0, 190.0), 7.0) as f64;
    assert!((got - want).abs() <= want * 0.02, "got {got}, oracle {want}");
}

#[test]
fn redo_cleared_by_new_mutation() {
    let mut doc = CanvasDocument::new("c");
    doc.apply(line("s1", (0.0, 0.0), (10.0, 10.0), 2.0), &NoImages).unwrap();
    doc.undo().unwrap();
    doc.apply(line("s2", (0.0, 0.0), (10.0, 10.0), 2.0), &NoImages).unwrap();
    assert_eq!(doc.redo(), Err(CanvasError::NothingToRedo));
}

#[test]
fn undo_of_erase_restores_stroke() {
    let mut doc = CanvasDocument::new("c");
    doc.apply(line("s1", (0.0, 0.0), (10.0, 10.0), 2.0), &NoImages).unwrap();
    doc.apply(CanvasAction::EraseStrokes { ids: vec!["s1".into()] }, &NoImages)
        .unwrap();
    doc.undo().unwrap();
    assert!(doc.element("s1").unwrap().is_live());
}

fn quadrant_image() -> Pixmap {
    let mut p = Pixmap::filled(8, 8, Rgba::WHITE);
    let colors = [
        Rgba([255, 0, 0, 255]),
        Rgba([0, 255, 0, 255]),
        Rgba([0, 0, 255, 255]),
        Rgba([255, 255, 0, 255]),
    ];
    for y in 0..8 {
        for x in 0..8 {
            p.set_pixel(x, y, colors[(y / 4 * 2 + x / 4) as usize]);
        }
    }
    p
}

#[test]
fn imported_image_composites_inside_region_only() {
    let images: BTreeMap<String, Pixmap> = [("img".to_string(), quadrant_image())].into();
    let mut doc = CanvasDocument::with_size("c", 400.0, 300.0);
    doc.import_image("p1", "img", RegionSelection::new(100.0, 50.0, 300.0, 250.0), &images)
        .unwrap();
    let px = doc.render_pixmap(1.0, &images).unwrap();
    // Quadrant centres of the placed rectangle carry the quadrant colours.
    assert_eq!(px.pixel(150, 100), Rgba([255, 0, 0, 255]));
    assert_eq!(px.pixel(250, 100), Rgba([0, 255, 0, 255]));
    assert_eq!(px.pixel(150, 200), Rgba([0, 0, 255, 255]));
    assert_eq!(px.pixel(250, 200), Rgba([255, 255, 0, 255]));
    // Everything outside the rectangle is background.
    for y in 0..300 {
        for x in 0..400 {
            let inside = (100..300).contains(&x) && (50..250).contains(&y);
            if !inside {
                assert_eq!(px.pixel(x, y), Rgba::WHITE, "({x},{y})");
            } else {
                assert_ne!(px.pixel(x, y), Rgba::WHITE, "({x},{y})");
            }
        }
    }
    doc.undo().unwrap();
    assert!(doc.elements.is_empty());
    assert_eq!(
        doc.import_image("p2", "nope", RegionSelection::new(0.0, 0.0, 5.0, 5.0), &images),
        Err(CanvasError::UnknownArtifact("nope".into()))
    );
}

#[test]
fn strokes_drawn_after_an_image_cover_it() {
    let images: BTreeMap<String, Pixmap> = [("img".to_string(), quadrant_image())].into();
    let mut doc = CanvasDocument::with_size("c", 200.0, 200.0);
    doc.import_image("p1", "img", RegionSelection::new(0.0, 0.0, 200.0, 200.0), &images)
        .unwrap();
    doc.apply(line("s1", (0.0, 100.0), (200.0, 100.0), 6.0), &images).unwrap();
    let px = doc.render_pixmap(1.0, &images).unwrap();
    assert_eq!(px.pixel(50, 100), Rgba::BLACK);
}

#[test]
fn crop_outside_canvas_is_empty_region() {
    let doc = CanvasDocument::new("c");
    assert_eq!(
        doc.crop_region(&RegionSelection::new(2000.0, 2000.0, 2100.0, 2100.0), 1.0, &NoImages),
        Err(CanvasError::EmptyRegion)
    );
}

#[test]
fn gallery_round_trip_preserves_canonical_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut doc = random_doc(&mut rng, 12);
    let mut g = Gallery::in_memory();
    let entry = g.save("e1", &doc, 0, &NoImages).unwrap();
    let saved = doc.canonical_json();
    doc.apply(line("late", (1.0, 1.0), (2.0, 2.0), 1.0), &NoImages).unwrap();
    assert_eq!(g.load(&entry.entry_id).unwrap().canonical_json(), saved);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn history_matches_reference(seed in any::<u64>(), len in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc = CanvasDocument::new("c");
        let mut reference = RefHistory::default();
        let mut last_rev = doc.revision;
        for _ in 0..len {
            let op = random_op(&mut rng);
            let ok = reference.step(&mut doc, &op).map_err(TestCaseError::fail)?;
            // Revision strictly increases on success and is untouched on failure.
            if ok {
                prop_assert!(doc.revision > last_rev);
            } else {
                prop_assert_eq!(doc.revision, last_rev);
            }
            last_rev = doc.revision;
        }
    }

    #[test]
    fn undo_all_restores_empty_content(seed in any::<u64>(), len in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc = CanvasDocument::new("c");
        let mut reference = RefHistory::default();
        for _ in 0..len {
            let op = match random_op(&mut rng) {
                Op::Undo | Op::Redo => continue,
                op => op,
            };
            reference.step(&mut doc, &op).map_err(TestCaseError::fail)?;
        }
        while doc.can_undo() {
            doc.undo().unwrap();
        }
        prop_assert!(doc.content_eq(&CanvasDocument::new("c")));
    }

    #[test]
    fn undo_then_redo_is_identity(seed in any::<u64>(), len in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc = CanvasDocument::new("c");
        let mut reference = RefHistory::default();
        for _ in 0..len {
            reference.step(&mut doc, &random_op(&mut rng)).map_err(TestCaseError::fail)?;
        }
        prop_assume!(doc.can_undo());
        let before = doc.canonical_content_json();
        doc.undo().unwrap();
        doc.redo().unwrap();
        prop_assert_eq!(doc.canonical_content_json(), before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn crop_equals_slice_of_full_raster(seed in any::<u64>(), scale_pick in 0usize..4) {
        let scale = [0.25, 0.5, 1.0, 1.5][scale_pick];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rand::Rng::random_range(&mut rng, 0..20);
        let doc = random_doc(&mut rng, n);
        let region = random_region(&mut rng);
        let full = doc.render_pixmap(scale, &NoImages).unwrap();
        match (crop_oracle(&full, &region, scale), doc.crop_pixmap(&region, scale, &NoImages)) {
            (Some(want), Ok(got)) => prop_assert!(got.data() == want.as_slice()),
            (None, Err(CanvasError::EmptyRegion)) => {}
            (want, got) => prop_assert!(false, "oracle {:?} vs {:?}", want.map(|w| w.len()), got.map(|g| g.width())),
        }
    }

    #[test]
    fn rasterize_is_pure(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let doc = random_doc(&mut rng, 8);
        let a = doc.rasterize(1.0, &NoImages).unwrap();
        let b = doc.clone().rasterize(1.0, &NoImages).unwrap();
        prop_assert!(a.png() == b.png());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The incremental paths produce the same bytes as a fresh render at
    /// every point of a random edit history, placed images included.
    #[test]
    fn cached_rendering_matches_fresh(seed in any::<u64>(), len in 1usize..40) {
        let images: BTreeMap<String, Pixmap> = [("img".to_string(), quadrant_image())].into();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc = CanvasDocument::new("c");
        let mut cache = RenderCache::default();
        for i in 0..len {
            // Failed actions are fine here; only rendering is under test.
            let live: Vec<String> = doc.elements.iter().filter(|e| e.is_live()).map(|e| e.id().to_string()).collect();
            let pick = |k: usize| live.get(k % live.len().max(1)).cloned().unwrap_or_default();
            let _ = match random_op(&mut rng) {
                _ if rand::Rng::random_bool(&mut rng, 0.1) => {
                    doc.import_image(format!("p{i}"), "img", random_region(&mut rng), &images)
                }
                Op::Add { pts, width } => {
                    let points = pts.iter().map(|(x, y)| Point::new(*x, *y, 0)).collect();
                    let color = Rgba([0, 0, 200, if i % 3 == 0 { 128 } else { 255 }]);
                    let stroke = Stroke::new(format!("s{i}"), points, width, color);
                    doc.apply(CanvasAction::AddStroke { stroke }, &images)
                }
                Op::Erase(k) => doc.apply(CanvasAction::EraseStrokes { ids: vec![pick(k)] }, &images),
                Op::Move { pick: k, dx, dy } => {
                    doc.apply(CanvasAction::MoveSelection { ids: vec![pick(k)], dx, dy }, &images)
                }
                Op::Undo => doc.undo(),
                Op::Redo => doc.redo(),
            };
            let fresh = doc.rasterize(1.0, &images).unwrap();
            prop_assert!(doc.rasterize_cached(1.0, &images, &mut cache).unwrap() == fresh);
            let region = random_region(&mut rng);
            match (doc.crop_region(&region, 1.0, &images), doc.crop_cached(&region, 1.0, &images, &mut cache)) {
                (Ok(a), Ok(b)) => prop_assert!(a == b),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a.is_ok(), b.is_ok()),
            }
        }
    }
}
