//! Saved canvases. Each entry holds a deep copy of the document plus a
//! quarter-scale thumbnail. A gallery may be backed by a directory holding
//! `index.json` and one `<entry_id>.json` / `<entry_id>.png` pair per entry.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CanvasDocument, ImageCatalog};
use crate::raster::RasterImage;

const THUMBNAIL_SCALE: f64 = 0.25;

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("unknown gallery entry {0}")]
    UnknownEntry(String),
    #[error("invalid entry id {0:?}")]
    InvalidId(String),
    #[error("gallery io: {0}")]
    Io(#[from] std::io::Error),
    #[error("gallery data: {0}")]
    Format(#[from] serde_json::Error),
    #[error("thumbnail: {0}")]
    Render(#[from] super::CanvasError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub entry_id: String,
    pub saved_at_ms: u64,
    pub document_snapshot: CanvasDocument,
    pub thumbnail: RasterImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntrySummary {
    pub entry_id: String,
    pub saved_at_ms: u64,
    pub canvas_id: String,
    pub element_count: usize,
    pub thumbnail_hash: String,
}

impl GalleryEntry {
    pub fn summary(&self) -> GalleryEntrySummary {
        GalleryEntrySummary {
            entry_id: self.entry_id.clone(),
            saved_at_ms: self.saved_at_ms,
            canvas_id: self.document_snapshot.canvas_id.clone(),
            element_count: self.document_snapshot.elements.len(),
            thumbnail_hash: self.thumbnail.content_hash(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Gallery {
    dir: Option<PathBuf>,
    entries: BTreeMap<String, GalleryEntry>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Gallery {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a directory-backed gallery and loads its entries.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GalleryError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut entries = BTreeMap::new();
        let index = dir.join("index.json");
        if index.exists() {
            let summaries: Vec<GalleryEntrySummary> =
                serde_json::from_slice(&fs::read(&index)?)?;
            for s in summaries {
                let doc: CanvasDocument =
                    serde_json::from_slice(&fs::read(dir.join(format!("{}.json", s.entry_id)))?)?;
                let png = fs::read(dir.join(format!("{}.png", s.entry_id)))?;
                let thumbnail = RasterImage::from_png(png)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
                entries.insert(
                    s.entry_id.clone(),
                    GalleryEntry {
                        entry_id: s.entry_id,
                        saved_at_ms: s.saved_at_ms,
                        document_snapshot: doc,
                        thumbnail,
                    },
                );
            }
        }
        Ok(Self {
            dir: Some(dir),
            entries,
        })
    }

    pub fn build_entry(
        entry_id: impl Into<String>,
        doc: &CanvasDocument,
        saved_at_ms: u64,
        images: &dyn ImageCatalog,
    ) -> Result<GalleryEntry, GalleryError> {
        let entry_id = entry_id.into();
        if !valid_id(&entry_id) {
            return Err(GalleryError::InvalidId(entry_id));
        }
        Ok(GalleryEntry {
            entry_id,
            saved_at_ms,
            document_snapshot: doc.clone(),
            thumbnail: doc.rasterize(THUMBNAIL_SCALE, images)?,
        })
    }

    pub fn save(
        &mut self,
        entry_id: impl Into<String>,
        doc: &CanvasDocument,
        saved_at_ms: u64,
        images: &dyn ImageCatalog,
    ) -> Result<GalleryEntrySummary, GalleryError> {
        let entry = Self::build_entry(entry_id, doc, saved_at_ms, images)?;
        self.insert(entry)
    }

    pub fn insert(&mut self, entry: GalleryEntry) -> Result<GalleryEntrySummary, GalleryError> {
        if !valid_id(&entry.entry_id) {
            return Err(GalleryError::InvalidId(entry.entry_id));
        }
        let summary = entry.summary();
        if let Some(dir) = &self.dir {
            fs::write(
                dir.join(format!("{}.json", entry.entry_id)),
                entry.document_snapshot.canonical_json(),
            )?;
            fs::write(dir.join(format!("{}.png", entry.entry_id)), entry.thumbnail.png())?;
        }
        self.entries.insert(entry.entry_id.clone(), entry);
        if let Some(dir) = &self.dir {
            fs::write(dir.join("index.json"), serde_json::to_vec_pretty(&self.list())?)?;
        }
        Ok(summary)
    }

    pub fn list(&self) -> Vec<GalleryEntrySummary> {
        let mut out: Vec<_> = self.entries.values().map(GalleryEntry::summary).collect();
        out.sort_by(|a, b| (a.saved_at_ms, &a.entry_id).cmp(&(b.saved_at_ms, &b.entry_id)));
        out
    }

    pub fn entry(&self, entry_id: &str) -> Option<&GalleryEntry> {
        self.entries.get(entry_id)
    }

    pub fn load(&self, entry_id: &str) -> Result<CanvasDocument, GalleryError> {
        self.entries
            .get(entry_id)
            .map(|e| e.document_snapshot.clone())
            .ok_or_else(|| GalleryError::UnknownEntry(entry_id.to_string()))
    }
}
