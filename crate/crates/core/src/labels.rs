//! Relation taxonomy and dialogue context kinds.
//!
//! Both enums have a stable canonical index that every matrix, table and
//! serialization in the crate relies on. File tokens are lower snake case and
//! are matched exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Discourse relation label, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationLabel {
    Acknowledgement,
    Background,
    ClarificationQuestion,
    Comment,
    Continuation,
    Contrast,
    Elaboration,
    Explanation,
    Narration,
    QuestionAnswerPair,
    Result,
    Other,
}

impl RelationLabel {
    pub const COUNT: usize = 12;

    pub const ALL: [RelationLabel; 12] = [
        RelationLabel::Acknowledgement,
        RelationLabel::Background,
        RelationLabel::ClarificationQuestion,
        RelationLabel::Comment,
        RelationLabel::Continuation,
        RelationLabel::Contrast,
        RelationLabel::Elaboration,
        RelationLabel::Explanation,
        RelationLabel::Narration,
        RelationLabel::QuestionAnswerPair,
        RelationLabel::Result,
        RelationLabel::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Token used in corpus files.
    pub fn token(self) -> &'static str {
        match self {
            RelationLabel::Acknowledgement => "acknowledgement",
            RelationLabel::Background => "background",
            RelationLabel::ClarificationQuestion => "clarification_question",
            RelationLabel::Comment => "comment",
            RelationLabel::Continuation => "continuation",
            RelationLabel::Contrast => "contrast",
            RelationLabel::Elaboration => "elaboration",
            RelationLabel::Explanation => "explanation",
            RelationLabel::Narration => "narration",
            RelationLabel::QuestionAnswerPair => "question_answer_pair",
            RelationLabel::Result => "result",
            RelationLabel::Other => "other",
        }
    }

    /// Human-readable name for tables and figures.
    pub fn display_name(self) -> &'static str {
        match self {
            RelationLabel::Acknowledgement => "Acknowledgement",
            RelationLabel::Background => "Background",
            RelationLabel::ClarificationQuestion => "Clarification Question",
            RelationLabel::Comment => "Comment",
            RelationLabel::Continuation => "Continuation",
            RelationLabel::Contrast => "Contrast",
            RelationLabel::Elaboration => "Elaboration",
            RelationLabel::Explanation => "Explanation",
            RelationLabel::Narration => "Narration",
            RelationLabel::QuestionAnswerPair => "Question-Answer Pair",
            RelationLabel::Result => "Result",
            RelationLabel::Other => "Other",
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for RelationLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.token() == s)
            .ok_or_else(|| format!("unknown relation label {s:?}"))
    }
}

/// Where the two discourse units of a pair sit in the dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContextKind {
    #[serde(rename = "single_turn")]
    SingleTurn,
    #[serde(rename = "within_speaker")]
    WithinSpeakerCrossTurn,
    #[serde(rename = "cross_speaker")]
    CrossSpeaker,
}

impl ContextKind {
    pub const COUNT: usize = 3;

    pub const ALL: [ContextKind; 3] = [
        ContextKind::SingleTurn,
        ContextKind::WithinSpeakerCrossTurn,
        ContextKind::CrossSpeaker,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn token(self) -> &'static str {
        match self {
            ContextKind::SingleTurn => "single_turn",
            ContextKind::WithinSpeakerCrossTurn => "within_speaker",
            ContextKind::CrossSpeaker => "cross_speaker",
        }
    }
}

impl fmt::Display for ContextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ContextKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.token() == s)
            .ok_or_else(|| format!("unknown context kind {s:?}"))
    }
}
