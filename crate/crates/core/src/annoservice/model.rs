use std::fmt;

use serde::{Deserialize, Serialize};

/// Which of the two compared models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    X,
    Y,
}

impl Slot {
    pub fn other(self) -> Slot {
        match self {
            Slot::X => Slot::Y,
            Slot::Y => Slot::X,
        }
    }
}

/// Screen position picked by an annotator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    ObjectMotion,
    TextAlignment,
    ImageAlignment,
    OverallQuality,
}

impl Axis {
    pub const ALL: [Axis; 4] = [
        Axis::ObjectMotion,
        Axis::TextAlignment,
        Axis::ImageAlignment,
        Axis::OverallQuality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::ObjectMotion => "object_motion",
            Axis::TextAlignment => "text_alignment",
            Axis::ImageAlignment => "image_alignment",
            Axis::OverallQuality => "overall_quality",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One A/B comparison shown to annotators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTask {
    pub task_id: String,
    pub prompt_text: String,
    pub image: String,
    pub video_x: String,
    pub video_y: String,
    /// Model shown on the left; the other is on the right.
    pub left: Slot,
    pub required_votes: usize,
    pub min_watch_secs: f64,
}

impl PairTask {
    /// Model identity behind a screen position.
    pub fn slot_of(&self, choice: Choice) -> Slot {
        match choice {
            Choice::Left => self.left,
            Choice::Right => self.left.other(),
        }
    }

    /// What the annotator sees: no model identities.
    pub fn view(&self) -> TaskView {
        let (left, right) = match self.left {
            Slot::X => (&self.video_x, &self.video_y),
            Slot::Y => (&self.video_y, &self.video_x),
        };
        TaskView {
            task_id: self.task_id.clone(),
            prompt_text: self.prompt_text.clone(),
            image: self.image.clone(),
            left_video: left.clone(),
            right_video: right.clone(),
            min_watch_secs: self.min_watch_secs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub prompt_text: String,
    pub image: String,
    pub left_video: String,
    pub right_video: String,
    pub min_watch_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteRecord {
    pub task_id: String,
    pub annotator: String,
    pub choice: Choice,
    pub justification: Vec<Axis>,
    pub watch_secs: f64,
    /// Milliseconds since the Unix epoch, stamped by the server.
    #[serde(default)]
    pub timestamp_ms: u64,
}

/// Machine-readable reasons a vote is refused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    UnknownTask,
    NotAssigned,
    Duplicate,
    UnderTime,
    EmptyJustification,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rejection::UnknownTask => "unknown_task",
            Rejection::NotAssigned => "not_assigned",
            Rejection::Duplicate => "duplicate",
            Rejection::UnderTime => "under_time",
            Rejection::EmptyJustification => "empty_justification",
        };
        f.write_str(s)
    }
}

/// Source material for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairInput {
    pub task_id: String,
    pub prompt_text: String,
    pub image: String,
    pub video_x: String,
    pub video_y: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub session_id: String,
    pub model_x: String,
    pub model_y: String,
    pub seed: u64,
    #[serde(default = "default_votes")]
    pub required_votes: usize,
    #[serde(default = "default_watch")]
    pub min_watch_secs: f64,
}

fn default_votes() -> usize {
    5
}

fn default_watch() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub spec: SessionSpec,
    pub tasks: Vec<PairTask>,
    /// Inputs dropped because an asset was missing.
    pub excluded: Vec<String>,
}
