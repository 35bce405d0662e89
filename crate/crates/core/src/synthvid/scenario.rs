use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::prompt::{prompt_text, PromptSpec, PromptVocab, Speed, Verb};
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Square,
    Disc,
    Diamond,
}

/// Frame edge a novel sprite enters from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Left,
    Right,
    Top,
    Bottom,
}

impl Edge {
    /// Unit inward direction.
    pub fn inward(self) -> (f32, f32) {
        match self {
            Edge::Left => (1.0, 0.0),
            Edge::Right => (-1.0, 0.0),
            Edge::Top => (0.0, 1.0),
            Edge::Bottom => (0.0, -1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteSpec {
    pub noun: String,
    /// Color name; doubles as the prompt selector.
    pub color: String,
    pub rgb: [f32; 3],
    pub shape: Shape,
    /// Side length as a fraction of the shorter frame side.
    pub size_frac: f32,
    /// Preferred start center, normalized to `[0, 1]²`.
    pub anchor: (f32, f32),
    /// Absent from frame 0 and enters from `edge`.
    pub novel: Option<Edge>,
}

/// Two-tone value-noise palette.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundStyle {
    pub name: String,
    pub low: [f32; 3],
    pub high: [f32; 3],
    /// Noise lattice spacing as a fraction of the longer frame side.
    pub cell_frac: f32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioPrompt {
    pub selector: String,
    pub verb: Verb,
    pub speed: Speed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub backgrounds: Vec<BackgroundStyle>,
    pub sprites: Vec<SpriteSpec>,
    pub prompts: Vec<ScenarioPrompt>,
    pub multi_object: bool,
    pub novel_object: bool,
}

impl Scenario {
    pub fn sprite(&self, selector: &str) -> Option<(usize, &SpriteSpec)> {
        self.sprites
            .iter()
            .enumerate()
            .find(|(_, s)| s.color == selector)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.backgrounds.len() >= 3,
            "scenario {} needs at least 3 background styles",
            self.id
        );
        ensure!(
            (3..=5).contains(&self.prompts.len()),
            "scenario {} must define 3 to 5 prompts",
            self.id
        );
        let selectors: BTreeSet<_> = self.sprites.iter().map(|s| s.color.as_str()).collect();
        ensure!(
            selectors.len() == self.sprites.len(),
            "scenario {} has sprites sharing a selector",
            self.id
        );
        if self.multi_object {
            let present = self.sprites.iter().filter(|s| s.novel.is_none()).count();
            ensure!(
                present >= 2,
                "multi-object scenario {} needs two visible sprites",
                self.id
            );
        }
        let mut enters = false;
        for p in &self.prompts {
            let (_, sprite) = self.sprite(&p.selector).ok_or_else(|| {
                crate::Error::Contract(format!(
                    "scenario {} prompt selects unknown sprite {}",
                    self.id, p.selector
                ))
            })?;
            match (p.verb, sprite.novel) {
                (Verb::Enter, Some(_)) => enters = true,
                (Verb::Enter, None) => {
                    return Err(crate::Error::Contract(format!(
                        "scenario {}: enter prompt targets a sprite already in frame 0",
                        self.id
                    )))
                }
                (_, Some(_)) => {
                    return Err(crate::Error::Contract(format!(
                        "scenario {}: novel sprite {} can only enter",
                        self.id, sprite.color
                    )))
                }
                _ => {}
            }
        }
        ensure!(
            enters == self.novel_object,
            "scenario {} novel_object flag disagrees with its prompts",
            self.id
        );
        Ok(())
    }

    pub fn vocab_triples(&self) -> impl Iterator<Item = (String, Verb, Speed)> + '_ {
        self.prompts
            .iter()
            .map(|p| (p.selector.clone(), p.verb, p.speed))
    }

    /// Fully resolved prompts against `vocab`.
    pub fn prompt_specs(&self, vocab: &PromptVocab) -> Result<Vec<PromptSpec>> {
        self.prompts
            .iter()
            .map(|p| self.resolve(vocab, p))
            .collect()
    }

    pub fn resolve(&self, vocab: &PromptVocab, p: &ScenarioPrompt) -> Result<PromptSpec> {
        let (_, sprite) = self.sprite(&p.selector).ok_or_else(|| {
            crate::Error::Contract(format!("unknown selector {}", p.selector))
        })?;
        let index = vocab.index_of(&p.selector, p.verb, p.speed).ok_or_else(|| {
            crate::Error::Contract(format!(
                "prompt {}/{}/{} missing from vocabulary",
                p.selector,
                p.verb,
                p.speed.name()
            ))
        })?;
        Ok(PromptSpec {
            scenario: self.id.clone(),
            selector: p.selector.clone(),
            verb: p.verb,
            speed: p.speed,
            index,
            text: prompt_text(&p.selector, &sprite.noun, p.verb, p.speed),
        })
    }
}

/// Vocabulary covering every prompt of `scenarios`.
pub fn vocab_for(scenarios: &[Scenario]) -> PromptVocab {
    PromptVocab::new(scenarios.iter().flat_map(|s| s.vocab_triples()))
}

const RED: [f32; 3] = [0.85, 0.15, 0.15];
const BLUE: [f32; 3] = [0.15, 0.3, 0.85];
const YELLOW: [f32; 3] = [0.85, 0.8, 0.15];
const GREEN: [f32; 3] = [0.15, 0.7, 0.25];
const WHITE: [f32; 3] = [0.85, 0.85, 0.85];
const PURPLE: [f32; 3] = [0.6, 0.2, 0.8];
const ORANGE: [f32; 3] = [0.85, 0.5, 0.15];

fn color_rgb(name: &str) -> [f32; 3] {
    match name {
        "red" => RED,
        "blue" => BLUE,
        "yellow" => YELLOW,
        "green" => GREEN,
        "white" => WHITE,
        "purple" => PURPLE,
        "orange" => ORANGE,
        other => panic!("no palette entry for {other}"),
    }
}

fn palettes() -> Vec<BackgroundStyle> {
    let style = |name: &str, low: [f32; 3], high: [f32; 3], cell: f32| BackgroundStyle {
        name: name.to_string(),
        low,
        high,
        cell_frac: cell,
    };
    vec![
        style("asphalt", [0.3, 0.3, 0.33], [0.42, 0.42, 0.45], 0.2),
        style("meadow", [0.28, 0.38, 0.26], [0.4, 0.5, 0.34], 0.25),
        style("dusk", [0.34, 0.27, 0.4], [0.46, 0.38, 0.5], 0.3),
        style("water", [0.24, 0.34, 0.46], [0.34, 0.44, 0.56], 0.2),
        style("sand", [0.45, 0.4, 0.3], [0.55, 0.5, 0.4], 0.35),
    ]
}

struct Draft {
    id: &'static str,
    sprites: Vec<(&'static str, &'static str, Shape, f32, (f32, f32), Option<Edge>)>,
    prompts: Vec<(&'static str, Verb, Speed)>,
    styles: [usize; 3],
}

/// The 22 synthetic scenarios of the default benchmark, analogs of common
/// animate-this-image scenes.
pub fn default_scenarios() -> Vec<Scenario> {
    use Shape::*;
    use Speed::*;
    use Verb::*;
    let c = (0.5, 0.5);
    let drafts = vec![
        Draft {
            id: "car_on_road",
            sprites: vec![("car", "red", Square, 0.2, c, None)],
            prompts: vec![("red", Right, Fast), ("red", Right, Slow), ("red", UpRight, Slow), ("red", Static, Slow)],
            styles: [0, 4, 2],
        },
        Draft {
            id: "balance_scale",
            sprites: vec![("pan", "white", Square, 0.2, c, None)],
            prompts: vec![("white", Down, Slow), ("white", Up, Slow), ("white", Static, Slow)],
            styles: [4, 2, 3],
        },
        Draft {
            id: "balloons",
            sprites: vec![
                ("balloon", "red", Disc, 0.18, (0.25, 0.65), None),
                ("balloon", "blue", Disc, 0.18, (0.5, 0.7), None),
                ("balloon", "yellow", Disc, 0.18, (0.75, 0.65), None),
            ],
            prompts: vec![("red", Up, Slow), ("blue", Up, Fast), ("yellow", UpLeft, Slow), ("red", Static, Slow)],
            styles: [3, 2, 1],
        },
        Draft {
            id: "bird",
            sprites: vec![("bird", "white", Diamond, 0.22, c, None)],
            prompts: vec![("white", UpRight, Fast), ("white", Left, Slow), ("white", UpLeft, Slow), ("white", Static, Slow)],
            styles: [3, 1, 2],
        },
        Draft {
            id: "bulbs",
            sprites: vec![
                ("bulb", "yellow", Disc, 0.18, (0.3, 0.4), None),
                ("bulb", "white", Disc, 0.18, (0.7, 0.4), None),
            ],
            prompts: vec![("yellow", Grow, Slow), ("white", Grow, Fast), ("yellow", Static, Slow)],
            styles: [2, 0, 3],
        },
        Draft {
            id: "butterfly",
            sprites: vec![("butterfly", "purple", Diamond, 0.2, c, None)],
            prompts: vec![("purple", UpLeft, Slow), ("purple", DownRight, Slow), ("purple", Right, Slow), ("purple", Up, Slow)],
            styles: [1, 4, 0],
        },
        Draft {
            id: "candle",
            sprites: vec![("flame", "orange", Diamond, 0.2, c, None)],
            prompts: vec![("orange", Shrink, Slow), ("orange", Static, Slow), ("orange", Grow, Slow)],
            styles: [2, 3, 0],
        },
        Draft {
            id: "child_in_playground",
            sprites: vec![
                ("child", "blue", Square, 0.22, c, None),
                ("bubble", "white", Disc, 0.16, (0.5, 0.3), Some(Edge::Left)),
            ],
            prompts: vec![("blue", Left, Slow), ("blue", Right, Slow), ("white", Enter, Slow)],
            styles: [1, 4, 0],
        },
        Draft {
            id: "dog",
            sprites: vec![
                ("dog", "yellow", Square, 0.22, (0.5, 0.6), None),
                ("frisbee", "red", Disc, 0.16, (0.5, 0.25), Some(Edge::Right)),
            ],
            prompts: vec![("yellow", Right, Fast), ("yellow", Up, Slow), ("red", Enter, Fast), ("yellow", Static, Slow)],
            styles: [1, 0, 2],
        },
        Draft {
            id: "rubber_duck_in_pool",
            sprites: vec![("duck", "yellow", Disc, 0.2, c, None)],
            prompts: vec![("yellow", Right, Slow), ("yellow", Left, Slow), ("yellow", DownRight, Slow), ("yellow", Static, Slow)],
            styles: [3, 2, 0],
        },
        Draft {
            id: "fish",
            sprites: vec![("fish", "orange", Diamond, 0.2, c, None)],
            prompts: vec![("orange", Left, Fast), ("orange", DownLeft, Slow), ("orange", UpLeft, Fast), ("orange", Static, Slow)],
            styles: [3, 2, 1],
        },
        Draft {
            id: "flower",
            sprites: vec![("flower", "red", Disc, 0.2, c, None)],
            prompts: vec![("red", Grow, Slow), ("red", Shrink, Slow), ("red", Static, Slow)],
            styles: [1, 4, 2],
        },
        Draft {
            id: "golf_ball",
            sprites: vec![("ball", "white", Disc, 0.16, (0.35, 0.6), None)],
            prompts: vec![("white", Right, Fast), ("white", DownRight, Fast), ("white", UpRight, Fast), ("white", Static, Slow)],
            styles: [1, 4, 0],
        },
        Draft {
            id: "horse",
            sprites: vec![("horse", "orange", Square, 0.22, c, None)],
            prompts: vec![("orange", Left, Fast), ("orange", Left, Slow), ("orange", Down, Slow), ("orange", Static, Slow)],
            styles: [1, 4, 2],
        },
        Draft {
            id: "animal_on_meadow",
            sprites: vec![("sheep", "white", Square, 0.2, c, None)],
            prompts: vec![("white", Left, Slow), ("white", Right, Slow), ("white", DownLeft, Slow), ("white", UpLeft, Slow)],
            styles: [1, 4, 3],
        },
        Draft {
            id: "human_face",
            sprites: vec![("face", "yellow", Disc, 0.24, c, None)],
            prompts: vec![("yellow", Left, Slow), ("yellow", Right, Slow), ("yellow", Static, Slow)],
            styles: [2, 0, 3],
        },
        Draft {
            id: "human_body",
            sprites: vec![("person", "blue", Square, 0.22, c, None)],
            prompts: vec![("blue", Up, Slow), ("blue", Down, Slow), ("blue", Right, Slow), ("blue", Left, Slow)],
            styles: [4, 1, 0],
        },
        Draft {
            id: "sun",
            sprites: vec![("sun", "yellow", Disc, 0.22, c, None)],
            prompts: vec![("yellow", Up, Slow), ("yellow", Down, Slow), ("yellow", UpRight, Slow), ("yellow", Static, Slow)],
            styles: [2, 3, 0],
        },
        Draft {
            id: "tide",
            sprites: vec![("wave", "blue", Square, 0.22, c, None)],
            prompts: vec![("blue", Left, Slow), ("blue", Right, Slow), ("blue", Static, Slow)],
            styles: [4, 1, 2],
        },
        Draft {
            id: "traffic_light",
            sprites: vec![
                ("light", "red", Disc, 0.18, (0.5, 0.3), None),
                ("light", "green", Disc, 0.18, (0.5, 0.7), None),
            ],
            prompts: vec![("red", Shrink, Slow), ("green", Grow, Slow), ("red", Static, Slow)],
            styles: [0, 2, 3],
        },
        Draft {
            id: "tree",
            sprites: vec![("tree", "green", Diamond, 0.24, c, None)],
            prompts: vec![("green", Left, Slow), ("green", Right, Slow), ("green", Static, Slow), ("green", DownLeft, Slow)],
            styles: [4, 2, 3],
        },
        Draft {
            id: "volcano",
            sprites: vec![("lava", "orange", Diamond, 0.2, (0.5, 0.6), None)],
            prompts: vec![("orange", Up, Fast), ("orange", UpLeft, Fast), ("orange", UpRight, Slow), ("orange", Grow, Fast)],
            styles: [2, 0, 3],
        },
    ];
    let pal = palettes();
    drafts
        .into_iter()
        .map(|d| {
            let multi = d.sprites.iter().filter(|s| s.5.is_none()).count() >= 2;
            let novel = d.prompts.iter().any(|p| p.1 == Enter);
            Scenario {
                id: d.id.to_string(),
                backgrounds: d.styles.iter().map(|&i| pal[i].clone()).collect(),
                sprites: d
                    .sprites
                    .into_iter()
                    .map(|(noun, color, shape, size, anchor, novel)| SpriteSpec {
                        noun: noun.to_string(),
                        color: color.to_string(),
                        rgb: color_rgb(color),
                        shape,
                        size_frac: size,
                        anchor,
                        novel,
                    })
                    .collect(),
                prompts: d
                    .prompts
                    .into_iter()
                    .map(|(s, verb, speed)| ScenarioPrompt {
                        selector: s.to_string(),
                        verb,
                        speed,
                    })
                    .collect(),
                multi_object: multi,
                novel_object: novel,
            }
        })
        .collect()
}
