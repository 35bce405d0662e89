use motif_core::motionmap::{
    binarize, estimate_video_flow, flow_intensity, heatmap_from_flow, motion_stats, motion_stats_from_flow, FlowParams, HeatmapParams,
};
use motif_core::synthvid::{default_scenarios, gen_clip, vocab_for, RenderConfig, Scenario, ScenarioPrompt, Speed, Verb};

fn solo(verb: Verb, size_frac: f32) -> Scenario {
    let mut s = default_scenarios().into_iter().find(|s| s.id == "car_on_road").unwrap();
    s.sprites[0].size_frac = size_frac;
    s.prompts = [verb, Verb::Static, Verb::Up]
        .into_iter()
        .map(|verb| ScenarioPrompt { selector: "red".into(), verb, speed: Speed::Fast })
        .collect();
    s
}

fn interior(cov: &[f32], w: usize, y: usize, x: usize) -> bool {
    let h = cov.len() / w;
    if y == 0 || x == 0 || y + 1 >= h || x + 1 >= w {
        return false;
    }
    (0..3).all(|dy| (0..3).all(|dx| cov[(y + dy - 1) * w + x + dx - 1] == 1.0))
}

#[test]
fn estimated_intensity_tracks_oracle_inside_sprites() {
    let cfg = RenderConfig::default();
    let lib = default_scenarios();
    let vocab = vocab_for(&lib);
    let (mut err, mut n) = (0.0f64, 0usize);
    for s in &lib {
        for p in s.prompt_specs(&vocab).unwrap() {
            if !p.verb.is_translation() {
                continue;
            }
            let clip = gen_clip(&cfg, s, &p, 5).unwrap();
            let est = flow_intensity(&estimate_video_flow(&clip.video, &FlowParams::default()).unwrap());
            let ora = flow_intensity(&clip.flow);
            for l in 0..cfg.frames - 1 {
                let cov = clip.coverage.frame(l);
                for y in 0..cfg.height {
                    for x in 0..cfg.width {
                        if clip.mask.get(l, y, x, 0) == 1.0 && interior(cov, cfg.width, y, x) {
                            err += (est.get(l, y, x, 0) - ora.get(l, y, x, 0)).abs() as f64;
                            n += 1;
                        }
                    }
                }
            }
        }
    }
    let mae = err / n as f64;
    println!("interior intensity MAE {mae:.3} px/frame over {n} px");
    assert!(mae < 0.5, "{mae}");
}

#[test]
fn estimated_mask_overlaps_oracle_mask() {
    let cfg = RenderConfig { fast_px: 2.0, ..RenderConfig::default() };
    let s = solo(Verb::Right, 0.3);
    let vocab = vocab_for(std::slice::from_ref(&s));
    let p = s.prompt_specs(&vocab).unwrap().remove(0);
    let clip = gen_clip(&cfg, &s, &p, 8).unwrap();
    let flow = estimate_video_flow(&clip.video, &FlowParams::default()).unwrap();
    let m = heatmap_from_flow(&flow, HeatmapParams::default()).unwrap();
    let est = binarize(&m, 0.5);
    let (mut inter, mut union) = (0usize, 0usize);
    for (a, b) in est.data().iter().zip(clip.mask.data()) {
        inter += (*a == 1.0 && *b == 1.0) as usize;
        union += (*a == 1.0 || *b == 1.0) as usize;
    }
    let iou = inter as f64 / union as f64;
    println!("mask IoU {iou:.3}");
    assert!(iou >= 0.7, "{iou}");
}

#[test]
fn small_sprite_moving_fraction() {
    let cfg = RenderConfig { height: 64, width: 64, fast_px: 4.0, ..RenderConfig::default() };
    let s = solo(Verb::Right, 10.0 / 64.0);
    let vocab = vocab_for(std::slice::from_ref(&s));
    let p = s.prompt_specs(&vocab).unwrap().remove(0);
    let clip = gen_clip(&cfg, &s, &p, 2).unwrap();
    // Counting the oracle mask: 10x10 moving pixels per frame out of 64x64.
    let oracle = motion_stats_from_flow(&clip.flow, HeatmapParams::default(), 0.5).unwrap();
    assert!((0.024..=0.03).contains(&oracle.moving_fraction), "{oracle:?}");
    assert_eq!(oracle.moving_fraction + oracle.static_fraction, 1.0);
    // The estimator smears motion into a band around the sprite.
    let est = motion_stats(&clip.video, &FlowParams::default(), HeatmapParams::default(), 0.5).unwrap();
    println!("oracle {oracle:?}\nestimated {est:?}");
    assert!((0.02..=0.05).contains(&est.moving_fraction), "{est:?}");
    assert_eq!(est.moving_fraction + est.static_fraction, 1.0);
}

#[test]
fn static_clip_heatmap_is_near_zero() {
    let cfg = RenderConfig::default();
    let s = solo(Verb::Right, 0.2);
    let vocab = vocab_for(std::slice::from_ref(&s));
    let p = s.prompt_specs(&vocab).unwrap().into_iter().find(|p| p.verb == Verb::Static).unwrap();
    let clip = gen_clip(&cfg, &s, &p, 1).unwrap();
    let flow = estimate_video_flow(&clip.video, &FlowParams::default()).unwrap();
    let m = heatmap_from_flow(&flow, HeatmapParams::default()).unwrap();
    assert!(m.data().iter().all(|&v| v <= 0.01));
    let stats = motion_stats(&clip.video, &FlowParams::default(), HeatmapParams::default(), 0.5).unwrap();
    assert_eq!((stats.static_fraction, stats.moving_fraction), (1.0, 0.0));
    assert!(stats.mean_intensity < 1e-6);
}
