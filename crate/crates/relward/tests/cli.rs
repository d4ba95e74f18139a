//! Command-line surface tests: exit codes, artifact layout, byte-identical
//! re-runs, and input immutability. Most cases drive the parser and dispatch
//! in process; a few spawn the real binary to pin process-level behavior.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use relward::cli::run;

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["relward"];
    argv.extend_from_slice(args);
    run(argv)
}

/// Reads every file under `dir` into a path-keyed map for tree comparison.
fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn synth(dir: &Path, count: usize, seed: u64, snr: &str) {
    let out = dir.to_string_lossy().into_owned();
    let count = count.to_string();
    let seed = seed.to_string();
    let code = cli(&[
        "synth-data", "--out", &out, "--count", &count, "--classes", "3", "--seed", &seed,
        "--snr", snr,
    ]);
    assert_eq!(code, 0);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["--version"]), 0);
    assert_eq!(cli(&["train", "--help"]), 0);
}

#[test]
fn usage_problems_exit_one() {
    assert_eq!(cli(&[]), 1);
    assert_eq!(cli(&["no-such-command"]), 1);
    assert_eq!(cli(&["train", "--bogus-flag"]), 1);
    assert_eq!(cli(&["synth-data"]), 1); // --out is required
}

#[test]
fn bad_argument_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d").to_string_lossy().into_owned();
    assert_eq!(cli(&["synth-data", "--out", &out, "--snr", "loud"]), 1);
    assert_eq!(cli(&["synth-data", "--out", &out, "--noise", "brown"]), 1);
    assert_eq!(cli(&["synth-data", "--out", &out, "--table", "vowelish"]), 1);
    assert_eq!(cli(&["grad-check", "--variant", "A-Q"]), 1);
    assert_eq!(cli(&["grad-check", "--scale", "galactic"]), 1);
}

#[test]
fn missing_and_corrupt_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o").to_string_lossy().into_owned();
    assert_eq!(cli(&["eval", "--ckpt", "/no/such.ckpt", "--data", "/no/manifest.tsv", "--out", &out]), 2);
    assert_eq!(cli(&["export-filters", "--ckpt", "/no/such.ckpt", "--out", &out]), 2);
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, "not a checkpoint\n").unwrap();
    let junk = junk.to_string_lossy().into_owned();
    assert_eq!(cli(&["inspect", "--ckpt", &junk]), 2);
}

#[test]
fn synthesis_is_deterministic_and_rerunnable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    synth(&a, 8, 42, "inf,10");
    synth(&b, 8, 42, "inf,10");
    let ta = dir_bytes(&a);
    assert_eq!(ta, dir_bytes(&b));
    assert_eq!(ta.len(), 10); // 8 wavs + manifest.tsv + run.cfg
    assert!(ta.contains_key("manifest.tsv"));
    assert!(ta.contains_key("run.cfg"));
    assert!(ta.contains_key("clip_00000.wav"));
    // rerunning over the first output reproduces it in place
    synth(&a, 8, 42, "inf,10");
    assert_eq!(ta, dir_bytes(&a));
    // a different seed actually changes the audio
    synth(&b, 8, 43, "inf,10");
    assert_ne!(ta, dir_bytes(&b));
}

#[test]
fn training_artifacts_are_bit_identical_across_reruns_and_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 10, 11, "inf");
    let manifest = data.join("manifest.tsv").to_string_lossy().into_owned();
    let before = dir_bytes(&data);

    let train_into = |out: &Path| {
        let out = out.to_string_lossy().into_owned();
        let code = cli(&[
            "train", "--data", &manifest, "--eval-data", &manifest, "--out", &out,
            "--variant", "A-R,M-R", "--scale", "tiny", "--epochs", "2", "--batch", "4",
            "--seed", "9",
        ]);
        assert_eq!(code, 0);
    };
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    train_into(&r1);
    train_into(&r2);
    let t1 = dir_bytes(&r1);
    assert_eq!(t1, dir_bytes(&r2));
    assert!(t1.contains_key("model.ckpt"));
    assert!(t1.contains_key("metrics.csv"));
    assert!(t1.contains_key("run.cfg"));
    assert!(t1["metrics.csv"].starts_with(b"epoch,split,loss,accuracy\n"));
    // the training data directory is exactly as it was
    assert_eq!(before, dir_bytes(&data));
}

#[test]
fn config_file_drives_training_and_unknown_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 8, 3, "inf");
    let manifest = data.join("manifest.tsv").to_string_lossy().into_owned();

    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, "variant=A-R,M-R\nscale=tiny\nepochs=2\nbatch=4\nseed=9\n").unwrap();
    let cfg_s = cfg.to_string_lossy().into_owned();
    let by_file = dir.path().join("by_file");
    let by_flag = dir.path().join("by_flag");
    let out = by_file.to_string_lossy().into_owned();
    assert_eq!(cli(&["train", "--data", &manifest, "--out", &out, "--config", &cfg_s]), 0);
    let out = by_flag.to_string_lossy().into_owned();
    let code = cli(&[
        "train", "--data", &manifest, "--out", &out, "--variant", "A-R,M-R", "--scale", "tiny",
        "--epochs", "2", "--batch", "4", "--seed", "9",
    ]);
    assert_eq!(code, 0);
    // same resolved settings, same artifacts
    assert_eq!(dir_bytes(&by_file)["model.ckpt"], dir_bytes(&by_flag)["model.ckpt"]);

    std::fs::write(&cfg, "momentum=0.9\n").unwrap();
    let out = dir.path().join("bad").to_string_lossy().into_owned();
    assert_eq!(cli(&["train", "--data", &manifest, "--out", &out, "--config", &cfg_s]), 1);
}

#[test]
fn filter_export_import_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 8, 5, "inf");
    let manifest = data.join("manifest.tsv").to_string_lossy().into_owned();
    let run_dir = dir.path().join("run");
    let out = run_dir.to_string_lossy().into_owned();
    let code = cli(&[
        "train", "--data", &manifest, "--out", &out, "--variant", "A", "--scale", "tiny",
        "--epochs", "1", "--batch", "4", "--seed", "2",
    ]);
    assert_eq!(code, 0);

    let ckpt = run_dir.join("model.ckpt").to_string_lossy().into_owned();
    let filters = dir.path().join("filters.txt").to_string_lossy().into_owned();
    assert_eq!(cli(&["export-filters", "--ckpt", &ckpt, "--out", &filters]), 0);

    let fresh = dir.path().join("fresh.ckpt").to_string_lossy().into_owned();
    let code = cli(&[
        "import-filters", "--filters", &filters, "--out", &fresh, "--variant", "A",
        "--scale", "tiny", "--seed", "77",
    ]);
    assert_eq!(code, 0);

    // centers survive the full export -> import -> export loop bit for bit
    let again = dir.path().join("again.txt").to_string_lossy().into_owned();
    assert_eq!(cli(&["export-filters", "--ckpt", &fresh, "--out", &again]), 0);
    assert_eq!(
        std::fs::read(dir.path().join("filters.txt")).unwrap(),
        std::fs::read(dir.path().join("again.txt")).unwrap()
    );

    // geometry mismatch is a data-level failure: desk-scale model, tiny filters
    let clash = dir.path().join("clash.ckpt").to_string_lossy().into_owned();
    let code = cli(&[
        "import-filters", "--filters", &filters, "--out", &clash, "--variant", "A",
        "--scale", "desk", "--seed", "1",
    ]);
    assert_eq!(code, 2);

    // the imported checkpoint trains further via --init-ckpt with frozen filters
    let cont = dir.path().join("cont").to_string_lossy().into_owned();
    let code = cli(&[
        "train", "--data", &manifest, "--out", &cont, "--init-ckpt", &fresh,
        "--variant", "A", "--scale", "tiny", "--epochs", "1", "--batch", "4", "--seed", "3",
        "--freeze-filters",
    ]);
    assert_eq!(code, 0);
}

#[test]
fn eval_writes_one_row_per_condition() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 8, 6, "inf");
    let manifest = data.join("manifest.tsv").to_string_lossy().into_owned();
    let run_dir = dir.path().join("run");
    let out = run_dir.to_string_lossy().into_owned();
    let code = cli(&[
        "train", "--data", &manifest, "--out", &out, "--variant", "MFB", "--scale", "tiny",
        "--epochs", "1", "--batch", "4", "--seed", "2",
    ]);
    assert_eq!(code, 0);
    let ckpt = run_dir.join("model.ckpt").to_string_lossy().into_owned();
    let eval_dir = dir.path().join("ev");
    let out = eval_dir.to_string_lossy().into_owned();
    assert_eq!(
        cli(&["eval", "--ckpt", &ckpt, "--data", &manifest, "--out", &out, "--snr", "inf,20,0", "--seed", "4"]),
        0
    );
    let csv = std::fs::read_to_string(eval_dir.join("accuracy.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "snr_db,accuracy,loss");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("inf,"));
    assert!(lines[2].starts_with("20,"));
    assert!(lines[3].starts_with("0,"));
}

#[test]
fn inspect_requires_an_output_directory_for_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 8, 6, "inf");
    let manifest = data.join("manifest.tsv").to_string_lossy().into_owned();
    let run_dir = dir.path().join("run");
    let out = run_dir.to_string_lossy().into_owned();
    let code = cli(&[
        "train", "--data", &manifest, "--out", &out, "--variant", "A-R,M-R", "--scale", "tiny",
        "--epochs", "1", "--batch", "4", "--seed", "2",
    ]);
    assert_eq!(code, 0);
    let ckpt = run_dir.join("model.ckpt").to_string_lossy().into_owned();
    // summary alone needs no --out
    assert_eq!(cli(&["inspect", "--ckpt", &ckpt]), 0);
    // dumps without --out are usage errors
    assert_eq!(cli(&["inspect", "--ckpt", &ckpt, "--kernels"]), 1);
    let dump = dir.path().join("dump");
    let out = dump.to_string_lossy().into_owned();
    let code = cli(&["inspect", "--ckpt", &ckpt, "--data", &manifest, "--kernels", "--limit", "2", "--out", &out]);
    assert_eq!(code, 0);
    let weights = std::fs::read_to_string(dump.join("weights.csv")).unwrap();
    assert!(weights.lines().any(|l| l.starts_with("0,acoustic,")));
    assert!(weights.lines().any(|l| l.starts_with("1,modulation,")));
    let kernels = std::fs::read_to_string(dump.join("kernels.csv")).unwrap();
    assert_eq!(kernels.lines().next().unwrap(), "kernel,row,col,value");
}

#[test]
fn spawned_binary_honors_the_exit_code_contract() {
    let bin = env!("CARGO_BIN_EXE_relward");
    let ok = Command::new(bin).args(["--help"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let usage = Command::new(bin).args(["train", "--frobnicate"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
    let data = Command::new(bin)
        .args(["export-filters", "--ckpt", "/no/such.ckpt", "--out", "/tmp/never.txt"])
        .output()
        .unwrap();
    assert_eq!(data.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&data.stderr).contains("error:"));
}
