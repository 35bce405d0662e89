use std::path::Path;
use std::process::{Command, Output};

use motif_core::annoservice::{aggregate, create_session, Axis, Choice, PairInput, SessionSpec, SessionState, VoteRecord};
use motif_core::diffusion::TrainConfig;

fn motif(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motif"))
        .args(args)
        .env("MOTIF_OUT_DIR", dir)
        .env_remove("MOTIF_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = TrainConfig { steps: 3, batch_size: 2, ..TrainConfig::default() };
    cfg.model.width = 4;
    cfg.model.time_dim = 4;
    cfg.model.prompt_dim = 4;
    cfg.sampling.steps = 2;
    let path = dir.join("tiny.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    path
}

#[test]
fn malformed_flags_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["heatmap", "--bogus"][..], &["no-such-command"], &["train"], &["flow", "--in"]] {
        let o = motif(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("error:") && err.contains("--help"), "{args:?}: {err}");
    }
}

#[test]
fn runtime_errors_exit_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = motif(dir.path(), &["heatmap", "--in", "missing.bin", "--out", "hm.bin"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn data_flow_heatmap_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    ok(motif(dir.path(), &["data", "--count", "2", "--seed", "4", "--out", "clips"]));
    let clip = dir.path().join("clips/clip_0000.bin");
    assert!(clip.exists());
    assert!(dir.path().join("clips/clips.jsonl").exists());
    assert!(dir.path().join("clips/data.config.json").exists());
    let clip = clip.to_str().unwrap();
    let out = ok(motif(dir.path(), &["heatmap", "--in", clip, "--out", "hm.bin"]));
    assert!(out.contains("moving_fraction="), "{out}");
    let (hm, _) = motif_core::synthvid::read_container(&dir.path().join("hm.bin")).unwrap();
    assert_eq!(hm.dims().channels, 1);
    assert!(hm.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let out = ok(motif(dir.path(), &["flow", "--in", clip, "--out", "flow.bin"]));
    assert!(out.contains("mean_intensity="), "{out}");
    let (flow, _) = motif_core::synthvid::read_container(&dir.path().join("flow.bin")).unwrap();
    assert_eq!(flow.dims().channels, 2);
}

#[test]
fn training_is_reproducible_and_checkpoints_generate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for run in ["a", "b"] {
        let out = ok(motif(dir.path(), &["train", "--config", cfg, "--seed", "7", "--out", run]));
        assert!(out.contains("step"), "{out}");
    }
    let a = std::fs::read(dir.path().join("a/checkpoint.bin")).unwrap();
    let b = std::fs::read(dir.path().join("b/checkpoint.bin")).unwrap();
    assert_eq!(a, b);
    // The echoed config reproduces the run.
    let echo = dir.path().join("a/config.toml");
    ok(motif(dir.path(), &["train", "--config", echo.to_str().unwrap(), "--out", "c"]));
    assert_eq!(a, std::fs::read(dir.path().join("c/checkpoint.bin")).unwrap());

    ok(motif(dir.path(), &["data", "--count", "1", "--out", "clips"]));
    let ckpt = dir.path().join("a/checkpoint.bin");
    let image = dir.path().join("clips/clip_0000.bin");
    let out = ok(motif(
        dir.path(),
        &["gen", "--ckpt", ckpt.to_str().unwrap(), "--image", image.to_str().unwrap(), "--prompt", "0", "--seed", "1"],
    ));
    assert!(out.contains("generated 8 frames"), "{out}");
    let (video, _) = motif_core::synthvid::read_container(&dir.path().join("gen.bin")).unwrap();
    assert_eq!(video.dims().frames, 8);
    let o = motif(
        dir.path(),
        &["gen", "--ckpt", ckpt.to_str().unwrap(), "--image", image.to_str().unwrap(), "--prompt", "nonsense"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_and_eval_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(motif(dir.path(), &["bench", "--out", "bench"]));
    assert!(out.contains("320 pairs"), "{out}");
    let manifest = dir.path().join("bench/manifest.jsonl");
    assert!(dir.path().join("bench/images").is_dir());
    let cfg = tiny_config(dir.path());
    ok(motif(dir.path(), &["train", "--config", cfg.to_str().unwrap(), "--out", "m"]));
    let ckpt = dir.path().join("m/checkpoint.bin");
    let out = ok(motif(
        dir.path(),
        &[
            "eval", "--ckpt", ckpt.to_str().unwrap(), "--static", "--bench", manifest.to_str().unwrap(),
            "--directional", "--every", "60", "--steps", "2", "--out", "report.json",
        ],
    ));
    assert!(out.contains("static_pathology"), "{out}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 2);
    assert_eq!(report[0]["model_id"], "m");
}

#[test]
fn tally_replays_the_service_log() {
    let dir = tempfile::tempdir().unwrap();
    let inputs: Vec<PairInput> = (0..6)
        .map(|i| PairInput {
            task_id: format!("t{i}"),
            prompt_text: "p".into(),
            image: "i.png".into(),
            video_x: "x.bin".into(),
            video_y: "y.bin".into(),
        })
        .collect();
    let spec = SessionSpec {
        session_id: "s".into(),
        model_x: "motif".into(),
        model_y: "base".into(),
        seed: 3,
        required_votes: 5,
        min_watch_secs: 1.0,
    };
    let session = create_session(spec, &inputs, |_| true).unwrap();
    let log = dir.path().join("votes.jsonl");
    let mut state = SessionState::open(session, &log).unwrap();
    let mut now = 0;
    for a in 0..5 {
        let who = format!("a{a}");
        while let Some(t) = state.next_task(&who, now) {
            now += 1_000;
            let n: usize = t.task_id[1..].parse().unwrap();
            let vote = VoteRecord {
                task_id: t.task_id,
                annotator: who.clone(),
                choice: if (n + a) % 3 == 0 { Choice::Left } else { Choice::Right },
                justification: vec![Axis::TextAlignment],
                watch_secs: 1.5,
                timestamp_ms: 0,
            };
            state.submit(vote, now).unwrap().unwrap();
        }
    }
    let live = aggregate(&state.session, state.votes());
    let out = ok(motif(dir.path(), &["tally", "--log", log.to_str().unwrap(), "--json"]));
    let replayed: motif_core::annoservice::AggregateResult = serde_json::from_str(&out).unwrap();
    assert_eq!(replayed, live);
    let summary = ok(motif(dir.path(), &["tally", "--log", log.to_str().unwrap()]));
    assert!(summary.contains("motif") && summary.contains("tied 0"), "{summary}");
}

#[test]
fn serve_answers_http() {
    use std::io::{BufRead, BufReader, Read, Write};
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("i.png"), b"-").unwrap();
    std::fs::write(dir.path().join("x.bin"), b"-").unwrap();
    std::fs::write(dir.path().join("y.bin"), b"-").unwrap();
    let session = serde_json::json!({
        "spec": {"session_id": "web", "model_x": "motif", "model_y": "base", "seed": 1},
        "pairs": [{"task_id": "t0", "prompt_text": "p", "image": "i.png", "video_x": "x.bin", "video_y": "y.bin"}]
    });
    let cfg = dir.path().join("session.json");
    std::fs::write(&cfg, session.to_string()).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_motif"))
        .args(["serve", "--port", "0", "--session-config", cfg.to_str().unwrap()])
        .env("MOTIF_OUT_DIR", dir.path())
        .env("MOTIF_THREADS", "1")
        .stderr(std::process::Stdio::piped())
        .stdout(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server logs its address").unwrap();
        if let Some(at) = line.find("annotation service on ") {
            break line[at + "annotation service on ".len()..].trim().to_string();
        }
    };
    let mut stream = std::net::TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /sessions/web/aggregate HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"incomplete\":1"), "{resp}");
    assert!(dir.path().join("votes/web.jsonl").exists());
}
