//! Insight prompt selection and assembly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canvas::{CanvasDocument, CanvasError, ImageCatalog};
use crate::chat::ChatTurn;
use crate::raster::RasterImage;
use crate::speech::Transcript;

/// First insight on a fresh canvas.
pub const KICKOFF_TEMPLATE: &str = "Act as a design thinking expert: based on the transcript and sketch canvas, identify what the user is trying to design, then\u{2014}using the Double Diamond framework\u{2014}guide them through Discover and Define by highlighting potential user needs, pain points, and framing questions, and finally offer 3\u{2013}4 concise design directions in an encouraging and curious tone (around 100 words).";

/// Every later insight on the same canvas.
pub const REFINE_TEMPLATE: &str = "Act as a design thinking collaborator: based on the updated transcript and sketch canvas, briefly summarise what the user is currently designing or refining, reflect their key idea in one or two sentences, suggest 1\u{2013}2 small ways to expand or clarify it, and end with 1\u{2013}2 open-ended questions to help further develop the concept in a supportive, conversational tone (around 80\u{2013}100 words).";

/// Insight prompts are rendered at 1:1 so request payloads hash stably.
pub const INSIGHT_RASTER_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsightTemplates {
    pub kickoff: String,
    pub refine: String,
}

impl Default for InsightTemplates {
    fn default() -> Self {
        Self {
            kickoff: KICKOFF_TEMPLATE.to_string(),
            refine: REFINE_TEMPLATE.to_string(),
        }
    }
}

impl InsightTemplates {
    pub fn for_kind(&self, kind: InsightPromptKind) -> &str {
        match kind {
            InsightPromptKind::Kickoff => &self.kickoff,
            InsightPromptKind::Refine => &self.refine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InsightPromptKind {
    Kickoff,
    Refine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BundleKind {
    Kickoff,
    Refine,
    ChatText,
    ChatImage,
}

impl From<InsightPromptKind> for BundleKind {
    fn from(k: InsightPromptKind) -> Self {
        match k {
            InsightPromptKind::Kickoff => BundleKind::Kickoff,
            InsightPromptKind::Refine => BundleKind::Refine,
        }
    }
}

impl BundleKind {
    pub fn is_insight(self) -> bool {
        matches!(self, BundleKind::Kickoff | BundleKind::Refine)
    }
}

/// Everything sent to a generation provider for one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub kind: BundleKind,
    pub system_text: String,
    pub user_text: String,
    /// Zero or one raster.
    pub attachments: Vec<RasterImage>,
    pub history: Vec<ChatTurn>,
}

impl PromptBundle {
    pub fn with_history(mut self, history: Vec<ChatTurn>) -> Self {
        self.history = history;
        self
    }
}

/// Input revisions an insight was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasedOn {
    pub transcript_revision: u64,
    pub canvas_revision: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsightResponse {
    pub insight_id: u64,
    pub kind: InsightPromptKind,
    pub text: String,
    pub based_on: BasedOn,
    pub created_at_ms: u64,
}

pub fn select_prompt_kind(doc: &CanvasDocument) -> InsightPromptKind {
    if doc.insight_count == 0 {
        InsightPromptKind::Kickoff
    } else {
        InsightPromptKind::Refine
    }
}

/// Assembles an insight bundle from an already rendered canvas raster.
pub fn build_insight_prompt_with_raster(
    templates: &InsightTemplates,
    kind: InsightPromptKind,
    transcript: &Transcript,
    canvas: RasterImage,
) -> PromptBundle {
    PromptBundle {
        kind: kind.into(),
        system_text: templates.for_kind(kind).to_string(),
        user_text: transcript.full_text(),
        attachments: vec![canvas],
        history: Vec::new(),
    }
}

pub fn build_insight_prompt(
    templates: &InsightTemplates,
    kind: InsightPromptKind,
    transcript: &Transcript,
    doc: &CanvasDocument,
    images: &dyn ImageCatalog,
) -> Result<PromptBundle, CanvasError> {
    let raster = doc.rasterize(INSIGHT_RASTER_SCALE, images)?;
    Ok(build_insight_prompt_with_raster(
        templates, kind, transcript, raster,
    ))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InsightError {
    #[error("insight request {0} was superseded")]
    Superseded(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingInsight {
    pub request_id: u64,
    pub kind: InsightPromptKind,
    pub based_on: BasedOn,
    pub fingerprint: String,
}

/// Latest-wins bookkeeping for insight generations: issuing a request
/// supersedes whatever was in flight, and only the newest request may
/// deliver a response.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsightTracker {
    next_request: u64,
    in_flight: Option<PendingInsight>,
    insights: Vec<InsightResponse>,
    superseded: u64,
    failed: u64,
}

impl InsightTracker {
    pub fn next_request_id(&self) -> u64 {
        self.next_request
    }

    pub fn begin(
        &mut self,
        kind: InsightPromptKind,
        based_on: BasedOn,
        fingerprint: String,
    ) -> u64 {
        let request_id = self.next_request;
        self.next_request += 1;
        if self.in_flight.is_some() {
            self.superseded += 1;
        }
        self.in_flight = Some(PendingInsight {
            request_id,
            kind,
            based_on,
            fingerprint,
        });
        request_id
    }

    pub fn in_flight(&self) -> Option<&PendingInsight> {
        self.in_flight.as_ref()
    }

    fn take_current(&mut self, request_id: u64) -> Result<PendingInsight, InsightError> {
        match &self.in_flight {
            Some(p) if p.request_id == request_id => Ok(self.in_flight.take().unwrap()),
            _ => Err(InsightError::Superseded(request_id)),
        }
    }

    pub fn check_current(&self, request_id: u64) -> Result<(), InsightError> {
        match &self.in_flight {
            Some(p) if p.request_id == request_id => Ok(()),
            _ => Err(InsightError::Superseded(request_id)),
        }
    }

    pub fn complete(
        &mut self,
        request_id: u64,
        text: String,
        created_at_ms: u64,
    ) -> Result<&InsightResponse, InsightError> {
        let pending = self.take_current(request_id)?;
        self.insights.push(InsightResponse {
            insight_id: pending.request_id,
            kind: pending.kind,
            text,
            based_on: pending.based_on,
            created_at_ms,
        });
        Ok(self.insights.last().unwrap())
    }

    pub fn fail(&mut self, request_id: u64) -> Result<(), InsightError> {
        self.take_current(request_id)?;
        self.failed += 1;
        Ok(())
    }

    pub fn insights(&self) -> &[InsightResponse] {
        &self.insights
    }

    pub fn latest(&self) -> Option<&InsightResponse> {
        self.insights.last()
    }

    /// True when the displayed insight no longer matches the current inputs.
    pub fn latest_is_stale(&self, current: BasedOn) -> bool {
        self.latest().is_some_and(|i| i.based_on != current)
    }

    pub fn superseded_count(&self) -> u64 {
        self.superseded
    }
}
