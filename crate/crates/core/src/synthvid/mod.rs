//! Procedural sprite videos with exact ground-truth flow, and the synthetic
//! benchmark built from them.

pub mod bench;
pub mod container;
mod dataset;
mod prompt;
mod render;
mod scenario;

pub use bench::{build_bench, BenchConfig, BenchCounts, BenchImage, BenchManifest, BenchRecord};
pub use container::{decode_container, encode_container, read_container, write_container};
pub use dataset::{gen_dataset, Dataset, DatasetConfig};
pub use prompt::{prompt_key, prompt_text, PromptSpec, PromptVocab, Selector, Speed, Verb};
pub use render::{gen_clip, render_background, render_clip, sample_layout, Clip, Layout, RenderConfig};
pub use scenario::{default_scenarios, vocab_for, BackgroundStyle, Edge, Scenario, ScenarioPrompt, Shape, SpriteSpec};
