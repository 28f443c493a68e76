//! One pass over the whole command surface against real artifacts: train a
//! tiny run from a config file, then replay every downstream command on the
//! files the previous step produced.

use std::fs;
use std::path::PathBuf;

use spread_ippo::cli::cli_dispatch;

fn dispatch(args: &[&str]) -> i32 {
    cli_dispatch(args.iter().map(|s| s.to_string()))
}

#[test]
fn full_cli_pipeline_on_a_tiny_run() {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pipeline");
    if root.exists() {
        fs::remove_dir_all(&root).expect("clear stale dir");
    }
    fs::create_dir_all(&root).expect("create work dir");
    let run_dir = root.join("run");

    let config_path = root.join("config.json");
    let config = serde_json::json!({
        "output_dir": run_dir,
        "seeds": [0, 1],
        "episodes": 40,
        "checkpoint_every": 40,
        "eval_episodes": 20,
        "log_every": 20,
    });
    fs::write(&config_path, serde_json::to_vec_pretty(&config).expect("serializable"))
        .expect("write config");

    let p = |path: &PathBuf| path.to_str().expect("utf8 path").to_string();

    assert_eq!(dispatch(&["spread-ippo", "train", "--config", &p(&config_path)]), 0);
    for seed in [0, 1] {
        let dir = run_dir.join(format!("seed{seed}"));
        for name in ["log.jsonl", "final.json", "eval.json", "trajectories.jsonl"] {
            assert!(dir.join(name).exists(), "missing seed{seed}/{name}");
        }
    }
    assert!(run_dir.join("manifest.json").exists());

    // Re-evaluate the final checkpoint into a fresh directory.
    let eval_dir = root.join("eval");
    let checkpoint = run_dir.join("seed0/final.json");
    assert_eq!(
        dispatch(&[
            "spread-ippo",
            "eval",
            "--checkpoint",
            &p(&checkpoint),
            "--episodes",
            "10",
            "--out",
            &p(&eval_dir),
        ]),
        0
    );
    for name in ["eval.json", "trajectories.jsonl", "heatmap.csv", "heatmap.svg"] {
        assert!(eval_dir.join(name).exists(), "missing eval artifact {name}");
    }

    // Flatten the log into CSV, then plot two views of it.
    let csv = root.join("metrics.csv");
    let log = run_dir.join("seed0/log.jsonl");
    assert_eq!(
        dispatch(&["spread-ippo", "metrics", "--log", &p(&log), "--out", &p(&csv)]),
        0
    );
    let line_svg = root.join("reward.svg");
    assert_eq!(
        dispatch(&[
            "spread-ippo",
            "plot",
            "--input",
            &p(&csv),
            "--kind",
            "line",
            "--out",
            &p(&line_svg),
            "--window",
            "10",
        ]),
        0
    );
    let bar_svg = root.join("actions.svg");
    assert_eq!(
        dispatch(&[
            "spread-ippo",
            "plot",
            "--input",
            &p(&csv),
            "--kind",
            "bar",
            "--out",
            &p(&bar_svg),
        ]),
        0
    );
    let heat_svg = root.join("heatmap.svg");
    let heat_csv = eval_dir.join("heatmap.csv");
    assert_eq!(
        dispatch(&[
            "spread-ippo",
            "plot",
            "--input",
            &p(&heat_csv),
            "--kind",
            "heatmap",
            "--out",
            &p(&heat_svg),
        ]),
        0
    );

    // Cross-seed aggregation over the two seeds.
    let figs = root.join("figs");
    assert_eq!(
        dispatch(&["spread-ippo", "compare-seeds", "--runs", &p(&run_dir), "--out", &p(&figs)]),
        0
    );

    for path in [&line_svg, &bar_svg, &heat_svg, &figs.join("fig3_team_reward.svg")] {
        let body = fs::read_to_string(path).expect("svg exists");
        assert!(body.contains("<svg"), "not an svg: {}", path.display());
    }
}
