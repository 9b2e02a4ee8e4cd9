use std::path::Path;
use std::process::{Command, Output};

fn posefree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posefree")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &[&str] = &[
    "--desk", "--xi-init", "20", "--xi", "5", "--hidden", "8", "--layers", "2", "--samples", "8", "--rays", "32",
    "--eval-rays", "16", "--pyramid-depth", "2", "--quiet",
];

fn synth(dir: &Path, kind: &str, count: &str) {
    let o = posefree(&[
        "synth", "--out", path(dir), "--kind", kind, "--count", count, "--size", "8", "--oversample", "32",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let o = posefree(&["synth", "--kind", "arc"]);
    assert_eq!(o.status.code(), Some(1));
    let o = posefree(&["train", "--data", "/nonexistent"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    assert_eq!(posefree(&["--help"]).status.code(), Some(0));
}

#[test]
fn synth_writes_arc_and_forward_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let arc = tmp.path().join("arc");
    let o = posefree(&["synth", "--out", path(&arc), "--kind", "arc", "--count", "12", "--step-deg", "15", "--size", "8", "--oversample", "16", "--ppm"]);
    assert!(o.status.success());
    let ds = posefree_core::synthdata::load_dataset(&arc).unwrap();
    assert_eq!((ds.len(), ds.width, ds.height), (12, 8, 8));
    assert!(arc.join("image_0011.ppm").exists());

    let fwd = tmp.path().join("fwd");
    synth(&fwd, "forward", "8");
    let ds = posefree_core::synthdata::load_dataset(&fwd).unwrap();
    let gt = ds.ground_truth.unwrap();
    assert_eq!(gt.poses.len(), 8);
    assert!(gt.poses.iter().all(|p| p.rotation.0.norm() == 0.0));
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = posefree(&["train", "--data", path(&tmp.path().join("none")), "--out", path(&tmp.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_eval_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "forward", "4");
    let run = tmp.path().join("run");
    let mut args = vec!["train", "--data", path(&data), "--out", path(&run)];
    args.extend_from_slice(TINY);
    let o = posefree(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.json", "field.ckpt", "poses.txt", "camera.txt", "log.jsonl", "poses_level0.txt", "poses_level1.txt"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let log = posefree_core::scheduler::read_log(&run.join("log.jsonl")).unwrap();
    assert!(log.iter().any(|r| r.phase == posefree_core::scheduler::Phase::Localize));

    let json = tmp.path().join("m.json");
    let o = posefree(&["eval", "--data", path(&data), "--run", path(&run), "--psnr", "--samples", "8", "--json", path(&json)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("ΔR"));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(m["psnr"].as_f64().unwrap().is_finite());

    let o = posefree(&["report", "--run", path(&run)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("localize"));

    let views = tmp.path().join("views");
    let o = posefree(&[
        "render", "--checkpoint", path(&run.join("field.ckpt")), "--poses", path(&run.join("poses.txt")), "--focal", "8",
        "--width", "8", "--height", "8", "--samples", "8", "--out", path(&views),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(views.join("view_0003.ppm").exists());
}

#[test]
fn train_rejects_lists() {
    let tmp = tempfile::tempdir().unwrap();
    let o = posefree(&["train", "--data", path(tmp.path()), "--out", path(&tmp.path().join("r")), "--xi", "3,5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn joint_mode_has_no_localization() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "arc", "3");
    let run = tmp.path().join("run");
    let mut args = vec!["train", "--data", path(&data), "--out", path(&run), "--mode", "joint"];
    args.extend_from_slice(TINY);
    assert!(posefree(&args).status.success());
    let log = posefree_core::scheduler::read_log(&run.join("log.jsonl")).unwrap();
    use posefree_core::scheduler::Phase;
    assert!(log.iter().all(|r| matches!(r.phase, Phase::Joint | Phase::Global)));
    assert_eq!(log[0].phase, Phase::Joint);
}

#[test]
fn eval_of_ground_truth_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "arc", "4");
    let json = tmp.path().join("m.json");
    let o = posefree(&["eval", "--data", path(&data), "--poses", path(&data.join("poses.txt")), "--json", path(&json)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(m["delta_r"].as_f64().unwrap() < 1e-6);
    assert!(m["delta_t"].as_f64().unwrap() < 1e-9);
}

#[test]
fn psnr_without_checkpoint_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "arc", "3");
    let o = posefree(&["eval", "--data", path(&data), "--poses", path(&data.join("poses.txt")), "--psnr"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ablate_reports_coarse_and_fine_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "arc", "4");
    let out = tmp.path().join("abl");
    let mut args = vec!["ablate", "--data", path(&data), "--out", path(&out)];
    args.extend(TINY.iter().filter(|a| !["--xi", "5"].contains(a)));
    args.extend(["--xi", "3,5", "--nglob", "2"]);
    let o = posefree(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for label in ["C, ξ=3, N_glob=2", "F, ξ=3, N_glob=2", "C, ξ=5, N_glob=2", "F, ξ=5, N_glob=2"] {
        assert!(text.contains(label), "{label} missing in\n{text}");
    }
    let rows = std::fs::read_to_string(out.join("ablation.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 4);
}

#[test]
fn fixed_seed_reproduces_the_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "arc", "3");
    let poses: Vec<String> = ["a", "b"]
        .iter()
        .map(|name| {
            let run = tmp.path().join(name);
            let mut args = vec!["--threads", "1", "train", "--data", path(&data), "--out", path(&run), "--seed", "9"];
            args.extend_from_slice(TINY);
            assert!(posefree(&args).status.success());
            std::fs::read_to_string(run.join("poses.txt")).unwrap()
        })
        .collect();
    assert_eq!(poses[0], poses[1]);
}
