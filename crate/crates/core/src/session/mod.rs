//! Event-sourced sessions.
//!
//! Every state change is a record in an append-only log. The live
//! [`SessionHost`] writes a record before applying it, and [`replay`]
//! folds the same records through the same [`SessionState::apply`], so a
//! log (plus its blobs) fully determines the session.

mod error;
mod host;
mod log;
mod protocol;
mod record;
mod replay;
mod scenario;
mod snapshot;
mod state;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canvas::{DEFAULT_CANVAS_HEIGHT, DEFAULT_CANVAS_WIDTH};
use crate::chat::DEFAULT_HISTORY_TURN_BUDGET;
use crate::prompt::InsightTemplates;
use crate::providers::Providers;

pub use error::SessionError;
pub use host::{
    CallResult, CallTarget, Clock, CompletionMode, HostOptions, ManualClock, ProviderCall,
    RecordObserver, SessionHost, SystemClock,
};
pub use log::{BlobSource, EventLog, FileSink, LogError, BLOB_DIR, EVENTS_FILE};
pub use protocol::{ClientMessage, ServerMessage};
pub use record::{ChatOutcome, EventRecord, InsightOutcome, SessionEvent};
pub use replay::{replay, replay_until, ReplayError, ReplayReport, RequestLogEntry};
pub use scenario::{parse_scenario, run_scenario, DriverStep, ScenarioError, ScenarioStep};
pub use snapshot::{ChatPanel, InsightPanel, SessionSnapshot};
pub use state::{Applied, NextChat, PendingExport, Selection, SessionState};

/// Per-session settings, recorded in the first log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSettings {
    pub canvas_width: f64,
    pub canvas_height: f64,
    #[serde(default)]
    pub templates: InsightTemplates,
    #[serde(default)]
    pub chat_text_system: String,
    #[serde(default)]
    pub chat_image_system: String,
    pub history_turn_budget: usize,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            canvas_width: DEFAULT_CANVAS_WIDTH,
            canvas_height: DEFAULT_CANVAS_HEIGHT,
            templates: InsightTemplates::default(),
            chat_text_system: String::new(),
            chat_image_system: String::new(),
            history_turn_budget: DEFAULT_HISTORY_TURN_BUDGET,
        }
    }
}

impl SessionSettings {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |v: f64| !(v.is_finite() && v > 0.0);
        if bad(self.canvas_width) || bad(self.canvas_height) {
            return Err(SessionError::InvalidConfig(format!(
                "canvas size {}x{} must be positive",
                self.canvas_width, self.canvas_height
            )));
        }
        if self.history_turn_budget == 0 {
            return Err(SessionError::InvalidConfig(
                "history_turn_budget must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Session registry for in-process use. Ids are `s1`, `s2`, ... unless
/// the caller supplies its own.
pub struct SessionManager {
    providers: Providers,
    sessions: BTreeMap<String, SessionHost>,
    created: u64,
    make_options: Box<dyn Fn(&str) -> HostOptions + Send>,
}

impl SessionManager {
    pub fn new(providers: Providers) -> Self {
        Self::with_options(providers, |_| HostOptions::default())
    }

    pub fn with_options(
        providers: Providers,
        make_options: impl Fn(&str) -> HostOptions + Send + 'static,
    ) -> Self {
        Self {
            providers,
            sessions: BTreeMap::new(),
            created: 0,
            make_options: Box::new(make_options),
        }
    }

    pub fn create_session(&mut self, settings: SessionSettings) -> Result<String, SessionError> {
        let id = loop {
            self.created += 1;
            let id = format!("s{}", self.created);
            if !self.sessions.contains_key(&id) {
                break id;
            }
        };
        self.create_session_with_id(id, settings)
    }

    pub fn create_session_with_id(
        &mut self,
        id: String,
        settings: SessionSettings,
    ) -> Result<String, SessionError> {
        if self.sessions.contains_key(&id) {
            return Err(SessionError::InvalidConfig(format!("session {id} exists")));
        }
        let host = SessionHost::create(
            id.clone(),
            settings,
            self.providers.clone(),
            (self.make_options)(&id),
        )?;
        self.sessions.insert(id.clone(), host);
        Ok(id)
    }

    pub fn session(&self, id: &str) -> Result<&SessionHost, SessionError> {
        self.sessions
            .get(id)
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn session_mut(&mut self, id: &str) -> Result<&mut SessionHost, SessionError> {
        self.sessions
            .get_mut(id)
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn dispatch(
        &mut self,
        id: &str,
        msg: ClientMessage,
    ) -> Result<Vec<ServerMessage>, SessionError> {
        Ok(self.session_mut(id)?.dispatch(msg))
    }

    pub fn snapshot(&self, id: &str) -> Result<SessionSnapshot, SessionError> {
        Ok(self.session(id)?.snapshot())
    }

    pub fn history(&self, id: &str) -> Result<Vec<crate::chat::ChatTurn>, SessionError> {
        Ok(self.session(id)?.state().turns().to_vec())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.sessions.keys().map(String::as_str)
    }
}
