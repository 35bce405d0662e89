//! Fixed inputs shared by the benchmarks.

use motif_core::diffusion::{prompt_library, Generator, TrainConfig};
use motif_core::synthvid::{gen_clip, Clip, RenderConfig};

/// Seed every benchmark input derives from.
pub const BENCH_SEED: u64 = 2024;

/// A moving-sprite clip at the default resolution.
pub fn sample_clip() -> Clip {
    let (lib, vocab) = prompt_library();
    let scenario = &lib[0];
    let prompt = scenario
        .prompt_specs(&vocab)
        .expect("library prompts resolve")
        .into_iter()
        .find(|p| p.verb.is_translation())
        .expect("scenario has a moving prompt");
    gen_clip(&RenderConfig::default(), scenario, &prompt, BENCH_SEED).expect("clip renders")
}

/// Untrained generator with a network of the given width.
pub fn untrained_generator(width: usize) -> Generator {
    let mut cfg = TrainConfig { seed: BENCH_SEED, ..TrainConfig::default() };
    cfg.model.width = width;
    Generator::untrained(cfg).expect("valid config")
}
