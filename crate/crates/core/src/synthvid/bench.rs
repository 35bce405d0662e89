//! Synthetic benchmark of (start image, motion prompt) pairs.
//!
//! The manifest is JSON Lines, one record per pair, with fields in the order
//! `image_id, start_frame, prompt_id, prompt_text, scenario_id, selector,
//! verb, speed, image_seed`. `start_frame` is relative to the manifest's
//! directory; `image_seed` re-renders the exact clip via `gen_clip`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::container::export_png_frames;
use super::prompt::{PromptSpec, PromptVocab, Speed, Verb};
use super::render::{gen_clip, Clip, RenderConfig};
use super::scenario::Scenario;
use crate::error::{ensure, Error, Result};
use crate::numcore::VideoTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub render: RenderConfig,
    /// Scenarios enabled, taken in library order.
    pub scenarios: usize,
    pub images_per_scenario: usize,
    /// Cap on prompts per scenario; `None` keeps all.
    #[serde(default)]
    pub prompts_per_scenario: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            render: RenderConfig::default(),
            scenarios: 22,
            images_per_scenario: 4,
            prompts_per_scenario: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub image_id: String,
    pub start_frame: String,
    pub prompt_id: usize,
    pub prompt_text: String,
    pub scenario_id: String,
    pub selector: String,
    pub verb: Verb,
    pub speed: Speed,
    pub image_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCounts {
    pub scenarios: usize,
    pub images: usize,
    pub prompts: usize,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BenchManifest {
    pub records: Vec<BenchRecord>,
}

/// A rendered start frame.
#[derive(Clone, Debug)]
pub struct BenchImage {
    pub image_id: String,
    pub scenario_id: String,
    pub seed: u64,
    pub frame: VideoTensor,
}

impl BenchManifest {
    pub fn counts(&self) -> BenchCounts {
        let set = |f: fn(&BenchRecord) -> String| self.records.iter().map(f).collect::<BTreeSet<_>>().len();
        BenchCounts {
            scenarios: set(|r| r.scenario_id.clone()),
            images: set(|r| r.image_id.clone()),
            prompts: set(|r| r.prompt_text.clone()),
            pairs: self.records.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut pairs = BTreeSet::new();
        let mut per_image: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &self.records {
            ensure!(
                pairs.insert((r.image_id.as_str(), r.prompt_id)),
                "duplicate pair ({}, {})",
                r.image_id,
                r.prompt_id
            );
            *per_image.entry(&r.image_id).or_default() += 1;
        }
        for (img, n) in per_image {
            ensure!(n >= 3, "image {img} has only {n} prompts");
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<BenchRecord>, _>>()?;
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

/// Scenarios enabled by `count`, in library order except that a multi-object
/// and a novel-object scenario are always among the first four.
pub fn select_scenarios(library: &[Scenario], count: usize) -> Vec<Scenario> {
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    if count >= 4 {
        let multi = library.iter().position(|s| s.multi_object);
        let novel = library.iter().position(|s| s.novel_object && !s.multi_object);
        chosen.extend(multi.into_iter().chain(novel));
    }
    for i in 0..library.len() {
        if chosen.len() >= count {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| library[i].clone()).collect()
}

/// Builds the manifest and start frames; with `out_dir`, writes
/// `manifest.jsonl` and `images/<image_id>.png` there.
pub fn build_bench(
    library: &[Scenario],
    vocab: &PromptVocab,
    config: &BenchConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<(BenchManifest, Vec<BenchImage>)> {
    config.render.validate()?;
    ensure!(config.scenarios >= 1, "bench needs at least one scenario");
    ensure!(
        config.scenarios <= library.len(),
        "only {} scenarios available",
        library.len()
    );
    ensure!(
        (3..=5).contains(&config.images_per_scenario),
        "images per scenario must be 3 to 5"
    );
    if let Some(k) = config.prompts_per_scenario {
        ensure!((3..=5).contains(&k), "prompts per scenario must be 3 to 5");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = BenchManifest::default();
    let mut images = Vec::new();
    for s in select_scenarios(library, config.scenarios) {
        let mut prompts = s.prompt_specs(vocab)?;
        if let Some(k) = config.prompts_per_scenario {
            prompts.truncate(k);
        }
        for k in 0..config.images_per_scenario {
            let image_seed: u64 = rng.gen();
            let image_id = format!("{}_{k}", s.id);
            let start_frame = format!("images/{image_id}.png");
            let clip = gen_clip(&config.render, &s, &prompts[0], image_seed)?;
            images.push(BenchImage {
                image_id: image_id.clone(),
                scenario_id: s.id.clone(),
                seed: image_seed,
                frame: clip.video.frame_tensor(0),
            });
            for p in &prompts {
                manifest.records.push(BenchRecord {
                    image_id: image_id.clone(),
                    start_frame: start_frame.clone(),
                    prompt_id: p.index,
                    prompt_text: p.text.clone(),
                    scenario_id: s.id.clone(),
                    selector: p.selector.clone(),
                    verb: p.verb,
                    speed: p.speed,
                    image_seed,
                });
            }
        }
    }
    manifest.validate()?;
    if let Some(dir) = out_dir {
        let img_dir = dir.join("images");
        for im in &images {
            let written = export_png_frames(&img_dir, &im.image_id, &im.frame)?;
            let target = img_dir.join(format!("{}.png", im.image_id));
            std::fs::rename(&written[0], &target).map_err(|e| Error::io(&target, e))?;
        }
        manifest.save(&dir.join("manifest.jsonl"))?;
    }
    Ok((manifest, images))
}

/// Resolves a record back to its scenario and prompt.
pub fn resolve_record<'a>(library: &'a [Scenario], vocab: &PromptVocab, r: &BenchRecord) -> Result<(&'a Scenario, PromptSpec)> {
    let s = library
        .iter()
        .find(|s| s.id == r.scenario_id)
        .ok_or_else(|| Error::NotFound(format!("scenario {}", r.scenario_id)))?;
    let p = s
        .prompt_specs(vocab)?
        .into_iter()
        .find(|p| p.index == r.prompt_id)
        .ok_or_else(|| Error::NotFound(format!("prompt {} in {}", r.prompt_id, r.scenario_id)))?;
    Ok((s, p))
}

/// The oracle clip realizing a bench record.
pub fn record_clip(library: &[Scenario], vocab: &PromptVocab, render: &RenderConfig, r: &BenchRecord) -> Result<Clip> {
    let (s, p) = resolve_record(library, vocab, r)?;
    gen_clip(render, s, &p, r.image_seed)
}

pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
