//! End-to-end subcommand tests against the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn fbpick(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbpick"))
        .args(args)
        .output()
        .expect("spawn fbpick")
}

fn ok(args: &[&str]) -> Output {
    let out = fbpick(args);
    assert!(
        out.status.success(),
        "fbpick {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Tiny but complete experiment: generate, corrupt, train both arms, pick,
/// refine, evaluate, report.
#[test]
fn full_pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("clean");
    let noisy = tmp.path().join("noisy");
    let run = tmp.path().join("run");

    ok(&[
        "generate", "--gathers", "12", "--traces", "8", "--samples", "32", "--freq", "60",
        "--seed", "3", "-o", p(&data),
    ]);
    assert!(data.join("manifest.json").exists());
    assert!(data.join("gathers/g000000.f32").exists());
    assert!(data.join("picks/g000011.csv").exists());

    ok(&[
        "corrupt", "-i", p(&data), "-o", p(&noisy), "--label-var", "3", "--seed", "4",
    ]);
    assert!(noisy.join("manifest.json").exists());

    ok(&[
        "train", "--data", p(&noisy), "-o", p(&run), "--mode", "spr", "--gamma", "5",
        "--epochs", "2", "--depth", "1", "--width", "2", "--window-samples", "32",
        "--window-traces", "8", "--lr", "0.01", "--seed", "5",
    ]);
    assert!(run.join("checkpoint.bin").exists());
    assert!(run.join("run_config.json").exists());
    assert!(run.join("train_log.csv").exists());
    assert!(run.join("latent/EPOCH").exists());
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,step,loss,latent_moved_count\n"));
    assert!(log.lines().count() > 2);

    let picks = tmp.path().join("picks");
    ok(&["pick", "--run", p(&run), "--subset", "test", "-o", p(&picks)]);
    let picked: Vec<_> = std::fs::read_dir(&picks).unwrap().collect();
    assert_eq!(picked.len(), 1); // floor(0.1 * 12) = 1 test gather

    let refined = tmp.path().join("refined");
    ok(&["refine", "--run", p(&run), "--subset", "train", "-o", p(&refined)]);
    let refined_count = std::fs::read_dir(&refined).unwrap().count();
    assert_eq!(refined_count, 10);

    let report_csv = tmp.path().join("eval.csv");
    ok(&[
        "evaluate", "--ref", p(&data), "--pred", p(&refined), "--run", p(&run),
        "--subset", "train", "--method", "spr-refine", "-o", p(&report_csv),
    ]);
    let text = std::fs::read_to_string(&report_csv).unwrap();
    assert!(text.starts_with("method,HR0,HR1,HR2,HR3,HR5,MAE\n"));
    assert!(text.lines().nth(1).unwrap().starts_with("spr-refine,"));

    let report_dir = tmp.path().join("report");
    ok(&[
        "report", "--evals", p(&report_csv), "-o", p(&report_dir), "--overlay-data",
        p(&data), "--overlay-picks", p(&refined), "--overlay-gathers", "g000000",
    ]);
    assert!(report_dir.join("summary.csv").exists());
    let svg = std::fs::read_to_string(report_dir.join("overlay_g000000.svg")).unwrap();
    assert!(svg.contains("stroke=\"red\"") && svg.contains("fill=\"blue\""));
}

#[test]
fn identical_seeds_reproduce_identical_artifacts() {
    let run_once = |root: &Path| {
        let data = root.join("data");
        let run = root.join("run");
        let picks = root.join("picks");
        let eval = root.join("eval.csv");
        ok(&[
            "generate", "--gathers", "10", "--traces", "8", "--samples", "32", "--freq",
            "60", "--seed", "11", "-o", p(&data),
        ]);
        ok(&[
            "train", "--data", p(&data), "-o", p(&run), "--epochs", "2", "--depth", "1",
            "--width", "2", "--window-samples", "32", "--window-traces", "8", "--lr",
            "0.01", "--seed", "11",
        ]);
        ok(&["pick", "--run", p(&run), "--subset", "all", "-o", p(&picks)]);
        ok(&[
            "evaluate", "--ref", p(&data), "--pred", p(&picks), "--method", "spr", "-o",
            p(&eval),
        ]);
        (
            std::fs::read(run.join("checkpoint.bin")).unwrap(),
            std::fs::read(run.join("train_log.csv")).unwrap(),
            std::fs::read(picks.join("g000003.csv")).unwrap(),
            std::fs::read(eval).unwrap(),
        )
    };
    let a_dir = tempfile::tempdir().unwrap();
    let b_dir = tempfile::tempdir().unwrap();
    let a = run_once(a_dir.path());
    let b = run_once(b_dir.path());
    assert_eq!(a.0, b.0, "checkpoints differ");
    assert_eq!(a.1, b.1, "train logs differ");
    assert_eq!(a.2, b.2, "picks differ");
    assert_eq!(a.3, b.3, "evaluation rows differ");
}

#[test]
fn corrupt_never_mutates_its_input() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let noisy = tmp.path().join("noisy");
    ok(&[
        "generate", "--gathers", "4", "--traces", "8", "--samples", "32", "--seed", "7",
        "-o", p(&data),
    ]);
    let snapshot = |dir: &Path| {
        let mut entries: Vec<(String, Vec<u8>)> = Vec::new();
        for sub in ["manifest.json", "gathers/g000000.f32", "picks/g000000.csv",
                    "gathers/g000003.f32", "picks/g000003.csv"] {
            entries.push((sub.to_string(), std::fs::read(dir.join(sub)).unwrap()));
        }
        entries
    };
    let before = snapshot(&data);
    ok(&[
        "corrupt", "-i", p(&data), "-o", p(&noisy), "--signal-nl", "0.1", "--label-var",
        "3", "--seed", "2",
    ]);
    assert_eq!(before, snapshot(&data));
    // and the copy actually differs
    let orig = std::fs::read(data.join("gathers/g000000.f32")).unwrap();
    let corr = std::fs::read(noisy.join("gathers/g000000.f32")).unwrap();
    assert_ne!(orig, corr);
}

#[test]
fn exit_codes_follow_the_contract() {
    // unknown flag -> usage error, exit 1
    let out = fbpick(&["generate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("--no-such-flag") || msg.to_lowercase().contains("usage"));

    // unknown subcommand -> exit 1
    let out = fbpick(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));

    // runtime failure (missing dataset) -> exit 2
    let out = fbpick(&["corrupt", "-i", "/nonexistent-dir", "-o", "/tmp/x-out"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    // help -> exit 0
    let out = fbpick(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"gathers": 3, "traces": 8, "samples": 32, "seed": 9}"#).unwrap();
    let data = tmp.path().join("data");
    ok(&["generate", "--config", p(&cfg), "-o", p(&data)]);
    let manifest = std::fs::read_to_string(data.join("manifest.json")).unwrap();
    assert_eq!(manifest.matches("gather_id").count(), 3);

    // flag beats config
    let data2 = tmp.path().join("data2");
    ok(&["generate", "--config", p(&cfg), "--gathers", "5", "-o", p(&data2)]);
    let manifest = std::fs::read_to_string(data2.join("manifest.json")).unwrap();
    assert_eq!(manifest.matches("gather_id").count(), 5);
}
