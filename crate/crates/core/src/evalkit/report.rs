use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::classify::{classify_flow, ClassifierParams};
use super::lossratio::LossRatioCurve;
use super::metrics::{dynamic_degree_from_flow, first_frame_fidelity, static_baseline};
use crate::diffusion::Generator;
use crate::error::{ensure, Result};
use crate::motionmap::{estimate_video_flow, FlowParams};
use crate::synthvid::bench::record_clip;
use crate::synthvid::{BenchRecord, PromptVocab, RenderConfig, Scenario, Verb};

/// Flag on a row that has the best fidelity while producing no motion.
pub const STATIC_PATHOLOGY: &str = "static_pathology";
/// Flag on a row worse than a static row on fidelity and better on nothing.
pub const DOMINATED_BY_STATIC: &str = "dominated_by_static";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub steps: usize,
    pub guidance: f64,
    pub seeds: Vec<u64>,
    pub flow: FlowParams,
    pub classifier: ClassifierParams,
    /// Dynamic degree at or below this counts as no motion.
    pub still_tolerance: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            steps: 50,
            guidance: 7.5,
            seeds: vec![0],
            flow: FlowParams::default(),
            classifier: ClassifierParams::default(),
            still_tolerance: 1e-6,
        }
    }
}

/// What produces a video for a (start frame, prompt) pair.
#[derive(Clone, Copy)]
pub enum Candidate<'a> {
    Model(&'a Generator),
    /// Repeats the start frame.
    Static,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    /// `prompt_accuracy`, `fidelity_mse`, `fidelity_psnr`, `dynamic_degree`.
    pub metrics: BTreeMap<String, f64>,
    pub loss_ratio: Option<LossRatioCurve>,
    /// Prompt accuracy per scenario.
    pub per_scenario: BTreeMap<String, f64>,
    pub seeds: Vec<u64>,
    /// Pairs evaluated and pairs skipped for unsupported verbs.
    pub pairs: usize,
    pub skipped: usize,
    pub flags: Vec<String>,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> f64 {
        self.metrics.get(name).copied().unwrap_or(f64::NAN)
    }
}

/// Records the direction classifier can score.
pub fn classifiable(records: &[BenchRecord]) -> Vec<BenchRecord> {
    records.iter().filter(|r| Verb::DIRECTIONAL.contains(&r.verb)).cloned().collect()
}

/// Generates every (pair, seed) and scores it.
pub fn evaluate(
    model_id: &str,
    candidate: Candidate<'_>,
    records: &[BenchRecord],
    library: &[Scenario],
    vocab: &PromptVocab,
    render: &RenderConfig,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    ensure!(!opts.seeds.is_empty(), "evaluation needs at least one seed");
    if let Candidate::Model(g) = candidate {
        ensure!(
            g.config.data.render.height == render.height
                && g.config.data.render.width == render.width
                && g.config.data.render.frames == render.frames,
            "model {model_id} was trained at a different resolution"
        );
    }
    let usable = classifiable(records);
    let mut hits = 0usize;
    let (mut mse, mut psnr, mut degree) = (0.0, 0.0, 0.0);
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &usable {
        let cond = record_clip(library, vocab, render, r)?.video.frame_tensor(0);
        for &seed in &opts.seeds {
            let video = match candidate {
                Candidate::Model(g) => g.generate(&cond, r.prompt_id, opts.steps, opts.guidance, seed)?,
                Candidate::Static => static_baseline(&cond, render.frames)?,
            };
            let flow = estimate_video_flow(&video, &opts.flow)?;
            let ok = classify_flow(&flow, &opts.classifier).verb == r.verb;
            let fid = first_frame_fidelity(&video, &cond)?;
            hits += ok as usize;
            mse += fid.mse;
            psnr += fid.psnr;
            degree += dynamic_degree_from_flow(&flow);
            let e = per.entry(r.scenario_id.clone()).or_default();
            e.0 += ok as usize;
            e.1 += 1;
        }
    }
    let n = (usable.len() * opts.seeds.len()).max(1) as f64;
    let metrics = BTreeMap::from([
        ("prompt_accuracy".to_string(), hits as f64 / n),
        ("fidelity_mse".to_string(), mse / n),
        ("fidelity_psnr".to_string(), psnr / n),
        ("dynamic_degree".to_string(), degree / n),
    ]);
    Ok(EvalReport {
        model_id: model_id.to_string(),
        metrics,
        loss_ratio: None,
        per_scenario: per.into_iter().map(|(k, (h, t))| (k, h as f64 / t as f64)).collect(),
        seeds: opts.seeds.clone(),
        pairs: usable.len(),
        skipped: records.len() - usable.len(),
        flags: Vec::new(),
    })
}

/// Fraction of generations whose classified motion matches the prompt verb.
pub fn prompt_accuracy(
    model: &Generator,
    records: &[BenchRecord],
    library: &[Scenario],
    vocab: &PromptVocab,
    opts: &EvalOptions,
) -> Result<f64> {
    let render = model.config.data.render.clone();
    let report = evaluate("model", Candidate::Model(model), records, library, vocab, &render, opts)?;
    Ok(report.metric("prompt_accuracy"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<EvalReport>,
    pub table: String,
}

/// Sets the static-pathology and dominated flags across rows.
pub fn flag_rows(reports: &mut [EvalReport], still_tolerance: f64) {
    let best_mse = reports.iter().map(|r| r.metric("fidelity_mse")).fold(f64::INFINITY, f64::min);
    let statics: Vec<usize> = (0..reports.len())
        .filter(|&i| {
            let r = &reports[i];
            r.metric("dynamic_degree") <= still_tolerance && r.metric("fidelity_mse") <= best_mse
        })
        .collect();
    for &i in &statics {
        reports[i].flags.push(STATIC_PATHOLOGY.into());
    }
    for i in 0..reports.len() {
        if statics.contains(&i) {
            continue;
        }
        let dominated = statics.iter().any(|&s| {
            let (a, b) = (&reports[i], &reports[s]);
            a.metric("fidelity_mse") > b.metric("fidelity_mse")
                && a.metric("prompt_accuracy") <= b.metric("prompt_accuracy")
                && a.metric("dynamic_degree") <= b.metric("dynamic_degree")
        });
        if dominated {
            reports[i].flags.push(DOMINATED_BY_STATIC.into());
        }
    }
}

pub fn render_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>6} {:>9} {:>11} {:>8} {:>9}  {}",
        "model", "pairs", "prompt%", "fid_mse", "psnr", "dyn_deg", "flags"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>9.1} {:>11.6} {:>8.2} {:>9.5}  {}",
            r.model_id,
            r.pairs * r.seeds.len(),
            100.0 * r.metric("prompt_accuracy"),
            r.metric("fidelity_mse"),
            r.metric("fidelity_psnr"),
            r.metric("dynamic_degree"),
            r.flags.join(",")
        );
    }
    out
}

/// Evaluates every candidate on the same pairs and seeds.
pub fn compare(
    candidates: &[(String, Candidate<'_>)],
    records: &[BenchRecord],
    library: &[Scenario],
    vocab: &PromptVocab,
    render: &RenderConfig,
    opts: &EvalOptions,
) -> Result<Comparison> {
    ensure!(!candidates.is_empty(), "compare needs at least one model");
    let mut reports = candidates
        .iter()
        .map(|(id, c)| evaluate(id, *c, records, library, vocab, render, opts))
        .collect::<Result<Vec<_>>>()?;
    flag_rows(&mut reports, opts.still_tolerance);
    let table = render_table(&reports);
    Ok(Comparison { reports, table })
}
