//! Multi-turn dialogue model and prompt assembly.
//!
//! A conversation is a system prompt, a goal message, and an ordered list of
//! completed rounds. Each round holds the observation (split into a fixed
//! `"Observation:\n"` header message and a body message) and the assistant's
//! action. Prompts are assembled over a chosen subset of completed rounds,
//! followed by the observation the agent is about to answer.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Content of every observation header message.
pub const OBSERVATION_HEADER: &str = "Observation:\n";

#[derive(Debug, Error)]
pub enum ConversationError {
    #[error("round index {index} is not a completed round (conversation has {completed})")]
    UnknownRound { index: usize, completed: usize },
    #[error("assistant action must be nonempty")]
    EmptyAction,
    #[error("malformed transcript line {line}: {reason}")]
    Transcript { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// Semantic tag used by analytics to build token-role spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    SystemPrompt,
    Goal,
    /// Accumulated summaries emitted by the summary policy.
    Summary,
    ObservationHeader,
    ObservationBody,
    Action,
}

impl Tag {
    /// The only role a message with this tag may carry.
    pub fn role(self) -> Role {
        match self {
            Tag::SystemPrompt => Role::System,
            Tag::Goal | Tag::Summary | Tag::ObservationHeader | Tag::ObservationBody => Role::User,
            Tag::Action => Role::Assistant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub tag: Tag,
    pub content: String,
}

impl Message {
    /// Builds a message whose role is implied by `tag`.
    pub fn tagged(tag: Tag, content: impl Into<String>) -> Self {
        Self {
            role: tag.role(),
            tag,
            content: content.into(),
        }
    }

    pub fn observation_header() -> Self {
        Self::tagged(Tag::ObservationHeader, OBSERVATION_HEADER)
    }

    pub fn to_chat(&self) -> ChatMessage {
        ChatMessage {
            role: self.role,
            content: self.content.clone(),
        }
    }
}

/// Role/content pair as sent to chat endpoints and stored in preference records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

pub fn to_chat(messages: &[Message]) -> Vec<ChatMessage> {
    messages.iter().map(Message::to_chat).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    /// 1-based turn number.
    pub index: usize,
    /// Observation header followed by observation body.
    pub user_messages: Vec<Message>,
    pub assistant_message: Message,
}

impl Round {
    pub fn observation(&self) -> &str {
        self.user_messages
            .iter()
            .find(|m| m.tag == Tag::ObservationBody)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    pub fn action(&self) -> &str {
        &self.assistant_message.content
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub system_prompt: Message,
    pub goal: Message,
    pub rounds: Vec<Round>,
}

impl Conversation {
    pub fn new(system_prompt: impl Into<String>, goal: impl Into<String>) -> Self {
        Self {
            system_prompt: Message::tagged(Tag::SystemPrompt, system_prompt),
            goal: Message::tagged(Tag::Goal, goal),
            rounds: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn round(&self, index: usize) -> Option<&Round> {
        index.checked_sub(1).and_then(|i| self.rounds.get(i))
    }

    /// Appends a completed round; the new index is one past the current maximum.
    pub fn append_round(
        mut self,
        observation: impl Into<String>,
        action: impl Into<String>,
    ) -> Result<Self, ConversationError> {
        let action = action.into();
        if action.is_empty() {
            return Err(ConversationError::EmptyAction);
        }
        let index = self.rounds.last().map_or(1, |r| r.index + 1);
        self.rounds.push(Round {
            index,
            user_messages: vec![
                Message::observation_header(),
                Message::tagged(Tag::ObservationBody, observation),
            ],
            assistant_message: Message::tagged(Tag::Action, action),
        });
        Ok(self)
    }

    /// Assembles the prompt for the next turn over the completed rounds in
    /// `visible`, ending with the pending `observation`.
    ///
    /// Layout: system, goal, then per visible round (ascending) header, body,
    /// action, then the pending header and body.
    pub fn assemble_prompt(
        &self,
        visible: &BTreeSet<usize>,
        observation: &str,
    ) -> Result<Vec<Message>, ConversationError> {
        self.assemble_prompt_with_summaries(visible, &[], observation)
    }

    /// Like [`assemble_prompt`](Self::assemble_prompt), with a single summary
    /// block (oldest first) inserted after the goal when `summaries` is nonempty.
    pub fn assemble_prompt_with_summaries(
        &self,
        visible: &BTreeSet<usize>,
        summaries: &[String],
        observation: &str,
    ) -> Result<Vec<Message>, ConversationError> {
        let mut out = Vec::with_capacity(2 + 3 * visible.len() + 3);
        out.push(self.system_prompt.clone());
        out.push(self.goal.clone());
        if !summaries.is_empty() {
            out.push(Message::tagged(Tag::Summary, summary_block(summaries)));
        }
        for &index in visible {
            let round = self.round(index).ok_or(ConversationError::UnknownRound {
                index,
                completed: self.rounds.len(),
            })?;
            out.extend(round.user_messages.iter().cloned());
            out.push(round.assistant_message.clone());
        }
        out.push(Message::observation_header());
        out.push(Message::tagged(Tag::ObservationBody, observation));
        Ok(out)
    }

    /// Full serialization of the conversation with a visibility flag per
    /// message. System prompt and goal are always visible.
    pub fn masked_messages(&self, mask: &[bool], observation: &str) -> Vec<(Message, bool)> {
        let mut out = Vec::with_capacity(2 + 3 * self.rounds.len() + 2);
        out.push((self.system_prompt.clone(), true));
        out.push((self.goal.clone(), true));
        for round in &self.rounds {
            let visible = mask.get(round.index - 1).copied().unwrap_or(false);
            for m in &round.user_messages {
                out.push((m.clone(), visible));
            }
            out.push((round.assistant_message.clone(), visible));
        }
        out.push((Message::observation_header(), true));
        out.push((Message::tagged(Tag::ObservationBody, observation), true));
        out
    }

    /// Writes the line-delimited JSON transcript: one object per message with
    /// `{role, tag, content, round_index}`; system and goal use round 0.
    pub fn write_transcript<W: Write>(&self, mut w: W) -> Result<(), ConversationError> {
        let mut emit = |m: &Message, round_index: usize| -> Result<(), ConversationError> {
            let line = TranscriptLine {
                role: m.role,
                tag: m.tag,
                content: m.content.clone(),
                round_index,
            };
            serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        emit(&self.system_prompt, 0)?;
        emit(&self.goal, 0)?;
        for round in &self.rounds {
            for m in &round.user_messages {
                emit(m, round.index)?;
            }
            emit(&round.assistant_message, round.index)?;
        }
        Ok(())
    }

    pub fn read_transcript<R: BufRead>(r: R) -> Result<Self, ConversationError> {
        let mut system = None;
        let mut goal = None;
        let mut rounds: Vec<Round> = Vec::new();
        let mut pending: Vec<Message> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| ConversationError::Transcript {
                line: i + 1,
                reason: reason.to_string(),
            };
            let entry: TranscriptLine =
                serde_json::from_str(&line).map_err(|e| bad(&e.to_string()))?;
            if entry.tag.role() != entry.role {
                return Err(bad("tag inconsistent with role"));
            }
            let msg = Message {
                role: entry.role,
                tag: entry.tag,
                content: entry.content,
            };
            match entry.tag {
                Tag::SystemPrompt => system = Some(msg),
                Tag::Goal => goal = Some(msg),
                Tag::Summary => return Err(bad("summary blocks are not part of transcripts")),
                Tag::ObservationHeader | Tag::ObservationBody => pending.push(msg),
                Tag::Action => {
                    let expected = rounds.last().map_or(1, |r| r.index + 1);
                    if entry.round_index != expected {
                        return Err(bad("round indices must be contiguous from 1"));
                    }
                    rounds.push(Round {
                        index: entry.round_index,
                        user_messages: std::mem::take(&mut pending),
                        assistant_message: msg,
                    });
                }
            }
        }
        if !pending.is_empty() {
            return Err(ConversationError::Transcript {
                line: 0,
                reason: "trailing observation without action".into(),
            });
        }
        Ok(Self {
            system_prompt: system.ok_or_else(|| ConversationError::Transcript {
                line: 0,
                reason: "missing system prompt".into(),
            })?,
            goal: goal.ok_or_else(|| ConversationError::Transcript {
                line: 0,
                reason: "missing goal".into(),
            })?,
            rounds,
        })
    }
}

pub fn summary_block(summaries: &[String]) -> String {
    let mut s = String::from("Summary of earlier interaction:\n");
    for (i, text) in summaries.iter().enumerate() {
        s.push_str(&format!("[{}] {}\n", i + 1, text));
    }
    s
}

#[derive(Debug, Serialize, Deserialize)]
struct TranscriptLine {
    role: Role,
    tag: Tag,
    content: String,
    round_index: usize,
}
