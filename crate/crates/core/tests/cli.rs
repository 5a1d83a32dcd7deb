mod common;

use std::fs;
use std::path::{Path, PathBuf};

use ncwno::cli::main_with_args;
use ncwno::config::{parse_config_str, Role};
use ncwno::Error;

use common::{snapshot, TINY};

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, args: &[&str]) -> i32 {
    let mut v = vec![
        "ncwno".to_string(),
        "--config".into(),
        config.display().to_string(),
    ];
    v.extend(args.iter().map(|s| s.to_string()));
    main_with_args(v)
}

#[test]
fn minimal_config_takes_paper_defaults() {
    let cfg = parse_config_str("out = \"somewhere\"\n", Path::new("/base")).unwrap();
    let m = &cfg.model;
    assert_eq!((m.blocks, m.experts, m.width, m.levels), (4, 10, 64, 4));
    assert_eq!(m.bases, (1..=10).collect::<Vec<_>>());
    assert_eq!(cfg.train.lr, 0.001);
    assert_eq!(cfg.train.batch_size, 20);
    assert_eq!(cfg.transfer.epochs, 50);
    assert_eq!(cfg.reports_dir(), Path::new("/base/somewhere/reports"));
}

#[test]
fn shipped_desk_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/desk.toml");
    let cfg = ncwno::config::parse_config(&path).unwrap();
    assert_eq!(cfg.model, ncwno::model::ModelConfig::desk(64, 3));
    assert_eq!(cfg.tasks_with(Role::Transfer).count(), 1);
    assert!(cfg.out.ends_with("desk-run"));
}

#[test]
fn config_errors_name_the_problem() {
    let dup = TINY.replace("label = 1", "label = 0");
    let e = parse_config_str(&dup, Path::new(".")).unwrap_err();
    assert!(
        matches!(&e, Error::Config(m) if m.contains("duplicate label")),
        "{e}"
    );

    let typo = TINY.replace("blocks = 1", "experts_per_blok = 1");
    let e = parse_config_str(&typo, Path::new(".")).unwrap_err();
    assert!(e.to_string().contains("experts_per_blok"), "{e}");

    let e = parse_config_str("seed = \"x\"\n", Path::new(".")).unwrap_err();
    assert!(e.to_string().contains("line 1"), "{e}");
    assert!(!e.to_string().contains('\n'));

    let wrong_grid = TINY.replace("grid = [32]", "grid = [64]");
    let e = parse_config_str(&wrong_grid, Path::new(".")).unwrap_err();
    assert!(e.to_string().contains("tasks.grid"), "{e}");

    let cfg = parse_config_str(TINY, Path::new(".")).unwrap();
    assert_eq!(cfg.tasks_with(Role::Transfer).count(), 1);
}

#[test]
fn generate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&cfg, &["--out", a.to_str().unwrap(), "generate"]), 0);
    assert_eq!(run(&cfg, &["--out", b.to_str().unwrap(), "generate"]), 0);
    let (sa, sb) = (snapshot(&a.join("data")), snapshot(&b.join("data")));
    assert_eq!(sa.len(), 12);
    assert_eq!(sa, sb);
    assert!(a.join("reports/stamp-generate.toml").exists());
}

#[test]
fn full_pipeline_keeps_old_tasks_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    assert_eq!(run(&cfg, &["generate"]), 0);
    assert_eq!(run(&cfg, &["train-foundation"]), 0);
    assert_eq!(run(&cfg, &["evaluate", "--task", "nagumo_1d"]), 0);
    let before = fs::read(out.join("reports/metrics-nagumo_1d.csv")).unwrap();

    let ckpt = snapshot(&out.join("checkpoint"));
    assert_eq!(run(&cfg, &["evaluate"]), 0);
    assert_eq!(
        snapshot(&out.join("checkpoint")),
        ckpt,
        "evaluate modified the checkpoint"
    );

    assert_eq!(run(&cfg, &["transfer"]), 0);
    assert_eq!(run(&cfg, &["evaluate", "--task", "nagumo_1d"]), 0);
    let after = fs::read(out.join("reports/metrics-nagumo_1d.csv")).unwrap();
    assert_eq!(before, after);

    assert_eq!(run(&cfg, &["evaluate"]), 0);
    let metrics = fs::read_to_string(out.join("reports/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("task,step,mean_acc,ci95_low,ci95_high"));
    let mut tasks = std::collections::BTreeSet::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        tasks.insert(f[0].to_string());
        let (m, lo, hi): (f64, f64, f64) = (
            f[2].parse().unwrap(),
            f[3].parse().unwrap(),
            f[4].parse().unwrap(),
        );
        assert!(lo <= m && m <= hi, "{line}");
        assert!(m <= 1.0, "{line}");
    }
    assert_eq!(tasks.len(), 3);
    let sim = fs::read_to_string(out.join("reports/similarity.csv")).unwrap();
    assert_eq!(sim.lines().count(), 4);
    let log = fs::read_to_string(out.join("reports/run.log")).unwrap();
    assert!(log.starts_with("epoch,phase,task,loss,lr,wall_ms\n"));
    assert!(log.contains(",transfer,2,"));
    assert!(out.join("reports/plot_metrics.py").exists());

    // transferring again without --overwrite is a no-op; with it, allowed
    assert_eq!(run(&cfg, &["transfer"]), 0);
    assert_eq!(run(&cfg, &["transfer", "--task", "heat_1d"]), 1);
    assert_eq!(
        run(&cfg, &["transfer", "--task", "heat_1d", "--overwrite"]),
        0
    );
}

#[test]
fn training_runs_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let mut snaps = Vec::new();
    for name in ["x", "y"] {
        let out = dir.path().join(name);
        let o = out.to_str().unwrap();
        for cmd in [
            &["generate"][..],
            &["train-foundation"],
            &["transfer"],
            &["evaluate"],
        ] {
            let mut args = vec!["--out", o];
            args.extend_from_slice(cmd);
            assert_eq!(run(&cfg, &args), 0);
        }
        let mut s = snapshot(&out);
        s.retain(|p, _| !p.ends_with("run.log"));
        snaps.push(s);
    }
    assert_eq!(snaps[0], snaps[1]);
}

#[test]
fn ablation_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{TINY}\n[ablation]\nexperts = [1, 2]\nseeds = [0]\n");
    let cfg = write_config(dir.path(), &text);
    assert_eq!(run(&cfg, &["generate"]), 0);
    assert_eq!(run(&cfg, &["ablate-experts"]), 0);
    let s = fs::read_to_string(dir.path().join("run/reports/ablation_summary.csv")).unwrap();
    assert_eq!(s.lines().count(), 3);
    assert!(s.starts_with("experts,mean_rel_l2,ci95_low,ci95_high\n1,"));
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(main_with_args(["ncwno", "generate"]), 1);
    assert_eq!(main_with_args(["ncwno", "frobnicate"]), 1);
    assert_eq!(main_with_args(["ncwno", "--help"]), 0);
    let missing = dir.path().join("nope.toml");
    assert_eq!(run(&missing, &["generate"]), 3);
    let cfg = write_config(dir.path(), TINY);
    assert_eq!(
        run(&cfg, &["train-foundation"]),
        3,
        "datasets not generated yet"
    );
    let bad = write_config(dir.path(), &TINY.replace("blocks = 1", "blocks = 0"));
    assert_eq!(run(&bad, &["generate"]), 1);
    let hot = write_config(
        dir.path(),
        &TINY.replace(
            "epochs = 2\nbatch_size = 8\nwindows_per_sample = 2\n\n[transfer]",
            "epochs = 2\nbatch_size = 8\nwindows_per_sample = 2\nlr = 1e30\n\n[transfer]",
        ),
    );
    assert_eq!(run(&hot, &["generate"]), 0);
    assert_eq!(run(&hot, &["train-foundation"]), 2);
}
