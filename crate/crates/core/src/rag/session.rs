use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub chunk_id: String,
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub user_query: String,
    pub response: String,
    pub citations: Vec<Citation>,
    pub timestamp: DateTime<Utc>,
}

/// A multi-turn conversation. Turns are only ever appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub turns: Vec<ChatTurn>,
}

impl Session {
    pub fn new() -> Self {
        Self::with_id(uuid::Uuid::new_v4().to_string())
    }

    pub fn with_id(session_id: String) -> Self {
        Self {
            session_id,
            created_at: Utc::now(),
            turns: Vec::new(),
        }
    }

    pub fn push(&mut self, turn: ChatTurn) {
        self.turns.push(turn);
    }

    /// The most recent `n` turns, oldest first.
    pub fn last_turns(&self, n: usize) -> &[ChatTurn] {
        &self.turns[self.turns.len().saturating_sub(n)..]
    }
}

impl Default for Session {
    fn default() -> Self {
        Self::new()
    }
}
