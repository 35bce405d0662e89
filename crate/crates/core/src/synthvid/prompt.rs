use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NULL_WORD: &str = "<null>";

/// What the target sprite does over the clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Left,
    Right,
    Up,
    Down,
    UpLeft,
    UpRight,
    DownLeft,
    DownRight,
    Grow,
    Shrink,
    Enter,
    Static,
}

impl Verb {
    pub const ALL: [Verb; 12] = [
        Verb::Left,
        Verb::Right,
        Verb::Up,
        Verb::Down,
        Verb::UpLeft,
        Verb::UpRight,
        Verb::DownLeft,
        Verb::DownRight,
        Verb::Grow,
        Verb::Shrink,
        Verb::Enter,
        Verb::Static,
    ];

    /// The nine classes a flow-direction classifier can tell apart.
    pub const DIRECTIONAL: [Verb; 9] = [
        Verb::Left,
        Verb::Right,
        Verb::Up,
        Verb::Down,
        Verb::UpLeft,
        Verb::UpRight,
        Verb::DownLeft,
        Verb::DownRight,
        Verb::Static,
    ];

    /// Unit image-space direction (x right, y down) for translations.
    pub fn direction(self) -> Option<(f32, f32)> {
        let d = std::f32::consts::FRAC_1_SQRT_2;
        Some(match self {
            Verb::Left => (-1.0, 0.0),
            Verb::Right => (1.0, 0.0),
            Verb::Up => (0.0, -1.0),
            Verb::Down => (0.0, 1.0),
            Verb::UpLeft => (-d, -d),
            Verb::UpRight => (d, -d),
            Verb::DownLeft => (-d, d),
            Verb::DownRight => (d, d),
            _ => return None,
        })
    }

    pub fn is_translation(self) -> bool {
        self.direction().is_some()
    }

    pub fn name(self) -> &'static str {
        match self {
            Verb::Left => "left",
            Verb::Right => "right",
            Verb::Up => "up",
            Verb::Down => "down",
            Verb::UpLeft => "up_left",
            Verb::UpRight => "up_right",
            Verb::DownLeft => "down_left",
            Verb::DownRight => "down_right",
            Verb::Grow => "grow",
            Verb::Shrink => "shrink",
            Verb::Enter => "enter",
            Verb::Static => "static",
        }
    }

    fn phrase(self) -> &'static str {
        match self {
            Verb::Left => "moves left",
            Verb::Right => "moves right",
            Verb::Up => "moves up",
            Verb::Down => "moves down",
            Verb::UpLeft => "moves up and to the left",
            Verb::UpRight => "moves up and to the right",
            Verb::DownLeft => "moves down and to the left",
            Verb::DownRight => "moves down and to the right",
            Verb::Grow => "grows",
            Verb::Shrink => "shrinks",
            Verb::Enter => "enters the scene",
            Verb::Static => "stays still",
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Verb {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Verb::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown verb {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speed {
    Slow,
    Fast,
}

impl Speed {
    pub fn name(self) -> &'static str {
        match self {
            Speed::Slow => "slow",
            Speed::Fast => "fast",
        }
    }
}

/// Selector naming which sprite a prompt refers to.
pub type Selector = String;

/// A structured motion prompt.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub scenario: String,
    pub selector: Selector,
    pub verb: Verb,
    pub speed: Speed,
    /// Row of the prompt-embedding table.
    pub index: usize,
    pub text: String,
}

/// Key used for vocabulary lookup; static prompts ignore speed.
pub fn prompt_key(selector: &str, verb: Verb, speed: Speed) -> (String, Verb, Speed) {
    let speed = if verb == Verb::Static { Speed::Slow } else { speed };
    (selector.to_string(), verb, speed)
}

pub fn prompt_text(selector: &str, noun: &str, verb: Verb, speed: Speed) -> String {
    let adverb = match (verb, speed) {
        (Verb::Static, _) => "",
        (_, Speed::Slow) => " slowly",
        (_, Speed::Fast) => " quickly",
    };
    format!("the {selector} {noun} {}{adverb}", verb.phrase())
}

/// Maps every (selector, verb, speed) triple to a unique embedding row.
/// The null prompt is `len()` and is never assigned to a triple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVocab {
    entries: Vec<(String, Verb, Speed)>,
}

impl PromptVocab {
    pub fn new(triples: impl IntoIterator<Item = (String, Verb, Speed)>) -> Self {
        let set: BTreeSet<_> = triples
            .into_iter()
            .map(|(s, v, sp)| prompt_key(&s, v, sp))
            .collect();
        Self {
            entries: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn null_index(&self) -> usize {
        self.entries.len()
    }

    pub fn index_of(&self, selector: &str, verb: Verb, speed: Speed) -> Option<usize> {
        let key = prompt_key(selector, verb, speed);
        self.entries.binary_search(&key).ok()
    }

    pub fn entry(&self, index: usize) -> Option<(&str, Verb, Speed)> {
        self.entries.get(index).map(|(s, v, sp)| (s.as_str(), *v, *sp))
    }

    /// Bag-of-words view of the vocabulary: the sorted word list and, per
    /// prompt plus the trailing null prompt, the indices of its words. The
    /// null prompt gets a reserved word of its own.
    pub fn word_tokens(&self) -> (Vec<String>, Vec<Vec<usize>>) {
        let words_of = |i: usize| -> Vec<String> {
            let (sel, verb, speed) = self.entry(i).expect("index in range");
            let mut w: Vec<String> = sel.split_whitespace().map(str::to_string).collect();
            w.extend(verb.phrase().split_whitespace().map(str::to_string));
            if verb != Verb::Static {
                w.push(speed.name().to_string());
            }
            w
        };
        let mut dict: BTreeSet<String> = (0..self.len()).flat_map(words_of).collect();
        dict.insert(NULL_WORD.to_string());
        let dict: Vec<String> = dict.into_iter().collect();
        let id = |w: &str| dict.binary_search_by(|d| d.as_str().cmp(w)).expect("word in dictionary");
        let mut lists: Vec<Vec<usize>> = (0..self.len())
            .map(|i| {
                let mut t: Vec<usize> = words_of(i).iter().map(|w| id(w)).collect();
                t.sort_unstable();
                t.dedup();
                t
            })
            .collect();
        lists.push(vec![id(NULL_WORD)]);
        (dict, lists)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_indices_are_unique_and_exclude_null() {
        let v = PromptVocab::new([
            ("red".to_string(), Verb::Left, Speed::Fast),
            ("red".to_string(), Verb::Left, Speed::Fast),
            ("red".to_string(), Verb::Static, Speed::Fast),
            ("red".to_string(), Verb::Static, Speed::Slow),
            ("blue".to_string(), Verb::Up, Speed::Slow),
        ]);
        assert_eq!(v.len(), 3);
        let ids: BTreeSet<_> = [
            v.index_of("red", Verb::Left, Speed::Fast),
            v.index_of("red", Verb::Static, Speed::Fast),
            v.index_of("blue", Verb::Up, Speed::Slow),
        ]
        .into_iter()
        .map(Option::unwrap)
        .collect();
        assert_eq!(ids.len(), 3);
        assert!(!ids.contains(&v.null_index()));
        assert_eq!(v.index_of("red", Verb::Up, Speed::Fast), None);
    }

    #[test]
    fn word_tokens_share_words_across_prompts() {
        let v = PromptVocab::new([
            ("red".to_string(), Verb::Left, Speed::Fast),
            ("blue".to_string(), Verb::UpLeft, Speed::Slow),
            ("blue".to_string(), Verb::Static, Speed::Slow),
        ]);
        let (dict, lists) = v.word_tokens();
        assert_eq!(lists.len(), v.len() + 1);
        let words = |i: usize| lists[i].iter().map(|&t| dict[t].as_str()).collect::<BTreeSet<_>>();
        let left = v.index_of("red", Verb::Left, Speed::Fast).unwrap();
        let up_left = v.index_of("blue", Verb::UpLeft, Speed::Slow).unwrap();
        assert!(words(left).contains("left") && words(up_left).contains("left"));
        assert!(words(up_left).contains("up") && words(up_left).contains("slow"));
        assert_eq!(words(v.null_index()), BTreeSet::from([NULL_WORD]));
        assert!(lists.iter().flatten().all(|&t| t < dict.len()));
    }

    #[test]
    fn verb_names_round_trip() {
        for v in Verb::ALL {
            assert_eq!(v.name().parse::<Verb>().unwrap(), v);
        }
    }

    #[test]
    fn text_mentions_selector_and_motion() {
        assert_eq!(
            prompt_text("red", "car", Verb::Left, Speed::Fast),
            "the red car moves left quickly"
        );
        assert_eq!(
            prompt_text("red", "car", Verb::Static, Speed::Fast),
            "the red car stays still"
        );
    }
}
