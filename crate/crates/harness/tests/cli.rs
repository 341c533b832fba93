use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cellbal::artifacts::{read_records, SeedRow, StepRow, SummaryRow, SEEDS_FILE, STEPS_FILE, SUMMARY_FILE};
use cellbal::stats::{mean, sample_sd};

fn cellbal(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellbal"))
        .args(args)
        .env("CELLBAL_OUT_DIR", out_root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_reports_missing_seeds_and_unknown_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method = \"ppo\"\nscenario = \"A\"\n");
    let out = cellbal(&["validate", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("seeds: non-empty list required"), "{err}");
    for m in ["non-lb", "rule-based", "independent-ddpg", "maddpg", "ma3c", "robust-ma3c"] {
        assert!(err.contains(m), "{err}");
    }
}

#[test]
fn validate_fills_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method = \"ma3c\"\nscenario = \"B\"\nseeds = [0]\n");
    let out = cellbal(&["validate", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("episodes = 1500"));
    assert!(text.contains("batch_size = 64"));
    assert!(text.contains("n_bs = 3"));
}

#[test]
fn non_lb_summary_row_and_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "eval_episodes = 3\n");
    let out = cellbal(
        &["train", "--config", cfg.to_str().unwrap(), "--method", "non-lb", "--scenario", "A", "--seeds", "7,8"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let run = dir.path().join("non-lb-A");
    let summary: Vec<SummaryRow> = read_records(&run.join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.len(), 1);
    let s = &summary[0];
    assert_eq!((s.method.as_str(), s.scenario.as_str(), s.day, s.seed_count), ("non-lb", "A", 1, 2));
    assert_eq!(s.schema_id, "cellbal.summary.v1");

    // recompute the summary straight from the per-step file
    let steps: Vec<StepRow> = read_records(&run.join(STEPS_FILE)).unwrap();
    assert_eq!(steps.len(), 2 * 3 * 40);
    assert!(steps.iter().all(|r| r.aulb_handoffs == 0));
    let per_seed = |seed: u64, f: fn(&StepRow) -> f64| {
        mean(&steps.iter().filter(|r| r.seed == seed).map(f).collect::<Vec<_>>())
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
    for (f, m, sd) in [
        ((|r: &StepRow| r.g_aver) as fn(&StepRow) -> f64, s.g_aver_mean, s.g_aver_sd),
        (|r: &StepRow| r.g_min, s.g_min_mean, s.g_min_sd),
        (|r: &StepRow| r.g_sd, s.g_sd_mean, s.g_sd_sd),
        (|r: &StepRow| r.reward, s.reward_mean, s.reward_sd),
    ] {
        let xs = [per_seed(7, f), per_seed(8, f)];
        assert!(close(mean(&xs), m), "{} vs {m}", mean(&xs));
        assert!(close(sample_sd(&xs), sd));
    }
    let seeds: Vec<SeedRow> = read_records(&run.join(SEEDS_FILE)).unwrap();
    assert_eq!(seeds.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![7, 8]);
}

#[test]
fn zero_episodes_evaluates_untrained_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "eval_episodes = 1\n");
    let args = ["--config", cfg.to_str().unwrap(), "--method", "maddpg", "--scenario", "C-day3", "--seeds", "1", "--episodes", "0"];
    let out = cellbal(&[&["train"][..], &args[..]].concat(), dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let run = dir.path().join("maddpg-C-day3");
    let log = std::fs::read_to_string(run.join("learning_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 2, "schema line and header only");
    assert!(run.join("checkpoints/seed-1.json").exists());
    let before = std::fs::read(run.join(STEPS_FILE)).unwrap();

    // evaluating the saved checkpoint reproduces the evaluation exactly
    let out = cellbal(&[&["evaluate"][..], &args[..]].concat(), dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read(run.join(STEPS_FILE)).unwrap(), before);
}

#[test]
fn evaluate_without_checkpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = cellbal(&["evaluate", "--method", "ma3c", "--scenario", "A", "--seeds", "0"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("seed-0.json"), "{}", stderr(&out));
}

#[test]
fn unwritable_output_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = cellbal(
        &["train", "--method", "non-lb", "--scenario", "A", "--seeds", "0", "--out", blocker.to_str().unwrap()],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn plot_writes_bar_charts_and_learning_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "eval_episodes = 1\nepisodes = 2\n[learner]\nbatch_size = 8\n");
    for method in ["rule-based", "independent-ddpg"] {
        let out = cellbal(
            &["train", "--config", cfg.to_str().unwrap(), "--method", method, "--scenario", "B", "--seeds", "0"],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let out = cellbal(&["plot"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let plots = dir.path().join("plots");
    for name in ["g_aver.svg", "g_min.svg", "g_sd.svg", "learning-independent-ddpg-B-seed0.svg"] {
        let svg = std::fs::read_to_string(plots.join(name)).unwrap();
        assert!(svg.starts_with("<svg"));
    }
    let bars = std::fs::read_to_string(plots.join("g_min.svg")).unwrap();
    assert_eq!(bars.matches(r#"class="bar""#).count(), 2);
    let curves = std::fs::read_to_string(plots.join("learning-independent-ddpg-B-seed0.svg")).unwrap();
    assert_eq!(curves.matches(r#"class="curve""#).count(), 3);
}
