use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blocklru")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const PARITY: &str = "[task]\nkind = \"parity\"\nseq_len = 4\nnum_train = 10\nnum_test = 6\n";

#[test]
fn gen_is_deterministic_and_refuses_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("p.toml"), PARITY).unwrap();
    assert_eq!(code(&run(d, &["gen", "--config", "p.toml", "--out", "a"])), 0);
    assert_eq!(code(&run(d, &["gen", "--config", "p.toml", "--out", "b"])), 0);
    for f in ["train.lrnnds", "test.lrnnds", "manifest.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let pair = blocklru::tasks::read_dataset_dir(&d.join("a")).unwrap();
    assert_eq!(pair.train.rows, 10);

    let again = run(d, &["gen", "--config", "p.toml", "--out", "a"]);
    assert_eq!(code(&again), 2, "{}", stderr(&again));
    assert_eq!(code(&run(d, &["gen", "--config", "p.toml", "--out", "a", "--force"])), 0);
}

#[test]
fn sn3_baseline_has_ten_thousand_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("s.toml"), "[task]\nkind = \"sn_composition\"\n").unwrap();
    assert_eq!(code(&run(d, &["gen", "--config", "s.toml", "--out", "s3"])), 0);
    let pair = blocklru::tasks::read_dataset_dir(&d.join("s3")).unwrap();
    assert_eq!(pair.train.rows, 10_000);
    assert_eq!(pair.train.spec.vocab_size, 6);
}

#[test]
fn config_errors_exit_two_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "[task]\nkind = \"parityy\"\n").unwrap();
    let o = run(d, &["gen", "--config", "bad.toml", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("kind"), "{}", stderr(&o));

    fs::write(d.join("unknown.toml"), "[task]\nkind = \"parity\"\nlength = 3\n").unwrap();
    let o = run(d, &["gen", "--config", "unknown.toml", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("length"), "{}", stderr(&o));

    fs::write(d.join("range.toml"), "[task]\nkind = \"parity\"\nseq_len = 0\n").unwrap();
    let o = run(d, &["gen", "--config", "range.toml", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seq_len"), "{}", stderr(&o));
}

#[test]
fn flops_prints_table_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["flops", "--arch", "bdlru", "--sym", "h=128", "--sym", "m=4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "4352");
    let o = run(dir.path(), &["flops", "--arch", "lstm", "--out", "missing"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn scan_bench_with_no_repeats_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("b.toml"), "[bench]\nrepeats = 0\n").unwrap();
    assert_eq!(code(&run(d, &["scan-bench", "--config", "b.toml", "--out", "o"])), 0);
    let csv = fs::read_to_string(d.join("o/scan_bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("executor,"));
}

const SN: &str = "[task]\nkind = \"sn_composition\"\nnum_train = 64\nnum_test = 32\n\
[model]\nm = 2\nhidden = 8\nembed_dim = 8\n[train]\nbatch = 16\n";

#[test]
fn zero_epoch_train_writes_report_without_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), format!("{SN}epochs = 0\n")).unwrap();
    let o = run(d, &["train", "--config", "c.toml", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("o/report.json")).unwrap()).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 1);
    assert!(!d.join("o/checkpoint.bdlru").exists());
}

#[test]
fn eval_reproduces_logged_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), format!("{SN}epochs = 3\nlr = 0.01\n")).unwrap();
    let o = run(d, &["train", "--config", "c.toml", "--out", "o", "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(d, &["eval", "--checkpoint", "o/checkpoint.bdlru", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("o/report.json")).unwrap()).unwrap();
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("o/eval.json")).unwrap()).unwrap();
    assert_eq!(eval["test_acc"], report["best_test_acc"]);
    assert_eq!(eval["test_acc"], eval["logged_test_acc"]);
}

#[test]
fn mismatched_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("p.toml"), PARITY).unwrap();
    assert_eq!(code(&run(d, &["gen", "--config", "p.toml", "--out", "parity"])), 0);
    fs::write(d.join("c.toml"), format!("{SN}epochs = 1\n")).unwrap();
    assert_eq!(code(&run(d, &["train", "--config", "c.toml", "--out", "o"])), 0);
    let o = run(d, &["eval", "--checkpoint", "o/checkpoint.bdlru", "--data", "parity", "--out", "o"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("vocab") || stderr(&o).contains("head"), "{}", stderr(&o));
}

#[test]
fn sweep_emits_grid_times_seeds_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = "[task]\nkind = \"parity\"\nseq_len = 4\nnum_train = 40\nnum_test = 10\n\
[model]\nhidden = 8\nembed_dim = 8\n[train]\nepochs = 1\nseeds = 2\nbatch = 8\n[sweep]\nm = [1, 2]\n";
    fs::write(d.join("s.toml"), cfg).unwrap();
    let o = run(d, &["sweep", "--config", "s.toml", "--out", "o", "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.join("o/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 2);
    assert!(d.join("o/best_bdlru_m2_softmax_sel_n40.bdlru").exists());
}

#[test]
fn spectrum_of_untrained_order_one_model_is_real() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg =
        "[task]\nkind = \"sn_composition\"\nnum_train = 10\nnum_test = 80\n[model]\nm = 1\nhidden = 6\nembed_dim = 8\n";
    fs::write(d.join("s.toml"), cfg).unwrap();
    let o = run(d, &["spectrum", "--config", "s.toml", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("o/spectrum.json")).unwrap()).unwrap();
    assert_eq!(report["stats"]["frac_complex"], 0.0);
    let csv = fs::read_to_string(d.join("o/spectrum.csv")).unwrap();
    assert!(csv.starts_with("re,im,block,step"));
    assert_eq!(csv.lines().count(), 1 + 64 * 8 * 6);
}
