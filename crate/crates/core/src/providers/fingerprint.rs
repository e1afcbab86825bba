use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProviderRole;
use crate::chat::ChatTurn;
use crate::prompt::PromptBundle;

/// Stable digest of a logical provider request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestFingerprint(pub String);

impl std::fmt::Display for RequestFingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    role: ProviderRole,
    system_text: &'a str,
    user_text: &'a str,
    attachments: Vec<String>,
    history: String,
}

pub fn history_digest(history: &[ChatTurn]) -> String {
    let canonical = serde_json::to_vec(history).expect("turns serialize");
    hex::encode(Sha256::digest(canonical))
}

impl RequestFingerprint {
    pub fn of(role: ProviderRole, bundle: &PromptBundle) -> Self {
        let input = FingerprintInput {
            role,
            system_text: &bundle.system_text,
            user_text: &bundle.user_text,
            attachments: bundle.attachments.iter().map(|a| a.content_hash()).collect(),
            history: history_digest(&bundle.history),
        };
        let bytes = serde_json::to_vec(&input).expect("fingerprint input serializes");
        Self(hex::encode(Sha256::digest(bytes)))
    }
}
