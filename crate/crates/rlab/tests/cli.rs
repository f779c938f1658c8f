use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rlab::format::load_dataset;
use rlab::report::read_records;
use rlab::ExperimentConfig;
use rlab_core::calo::DatasetKind;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn rlab(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rlab"));
    cmd.args(args).env_remove("RLAB_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8_lossy(&out.stdout).into(),
        stderr: String::from_utf8_lossy(&out.stderr).into(),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_cmd(cmd: &str, config: &Path, out: &Path, workers: &str) -> Run {
    rlab(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers], &[])
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

const SMALL_TRAINING: &str = r#"
[training.early_stop]
min_epochs = 3
window = 2
threshold = 0.1
hard_cap = 5
"#;

fn robustness_config(mode: &str, k: usize) -> String {
    format!(
        r#"seed = 21
[data]
generate = {{ kind = "A", events = 400 }}
[model]
preset = "model2"
filters = [2, 2]
{SMALL_TRAINING}
[robustness]
k = {k}
mode = "{mode}"
train_size = 100
test_size = 100
"#
    )
}

#[test]
fn gen_data_is_reproducible_and_records_its_kind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", "seed = 7\n[generator]\nkind = \"B\"\nevents = 500\ncsv = true\n");
    let out = dir.path().join("out");
    let first = run_cmd("gen-data", &cfg, &out, "2");
    assert_eq!(first.code, 0, "{}", first.stderr);
    assert!(first.stdout.contains("crc32"));
    let a = snapshot(&out);
    let second = run_cmd("gen-data", &cfg, &out, "1");
    assert_eq!(second.stdout, first.stdout);
    assert_eq!(a, snapshot(&out));
    let data = load_dataset(&out.join("dataset.rlab")).unwrap();
    assert_eq!(data.len(), 500);
    assert_eq!(data.provenance.unwrap().config.kind, DatasetKind::B);
    assert!(out.join("dataset.csv").exists());

    let empty = write(dir.path(), "e.toml", "seed = 7\n[generator]\nkind = \"A\"\nevents = 0\n");
    assert_eq!(run_cmd("gen-data", &empty, &out, "1").code, 2);
}

#[test]
fn robustness_fixed_data_shares_one_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.toml", &robustness_config("fixed_data_random_init", 10));
    let out = dir.path().join("out");
    let r = run_cmd("robustness", &cfg, &out, "2");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let records = read_records(&out).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].losses().len(), 10);
    let seeds: Vec<Option<u64>> = records[0].instances().iter().map(|p| p.data_seed).collect();
    assert!(seeds.iter().all(|s| s.is_some() && *s == seeds[0]));
    assert_eq!(fs::read_to_string(out.join("losses.csv")).unwrap().lines().count(), 11);
    assert_eq!(fs::read_to_string(out.join("log.jsonl")).unwrap().lines().count(), 10);
}

#[test]
fn single_instance_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.toml", &robustness_config("both_random", 1));
    let out = dir.path().join("out");
    assert_eq!(run_cmd("robustness", &cfg, &out, "1").code, 0);
    let s = read_records(&out).unwrap()[0].statistics().unwrap();
    assert_eq!(s.std, 0.0);
    let boxplot = fs::read_to_string(out.join("boxplot.csv")).unwrap();
    let row: Vec<&str> = boxplot.lines().nth(1).unwrap().split(',').collect();
    assert!(row[1..8].iter().all(|v| *v == row[1]), "{row:?}");
}

#[test]
fn reports_are_identical_across_reruns_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.toml", &robustness_config("both_random", 4));
    let out = dir.path().join("out");
    assert_eq!(run_cmd("robustness", &cfg, &out, "1").code, 0);
    let one = snapshot(&out);
    assert_eq!(run_cmd("robustness", &cfg, &out, "3").code, 0);
    assert_eq!(one, snapshot(&out));

    // The stored config reproduces the run on its own.
    let stored = out.join("config.toml");
    let again = dir.path().join("again");
    let copy = write(dir.path(), "stored.toml", &fs::read_to_string(&stored).unwrap());
    assert_eq!(run_cmd("robustness", &copy, &again, "2").code, 0);
    for (name, bytes) in &one {
        if name != "config.toml" {
            assert_eq!(bytes, &fs::read(again.join(name)).unwrap(), "{name}");
        }
    }
}

#[test]
fn mock_selection_halves_to_one_winner() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        r#"seed = 1
[selection]
k = 5
policy = { kind = "halving", start_round = 1 }
trainer = { kind = "mock", means = [8.0, 3.0, 5.0, 9.0, 1.0, 6.0, 4.0, 7.0], sigma = 0.1 }
"#,
    );
    let out = dir.path().join("out");
    let r = run_cmd("select", &cfg, &out, "2");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rounds = fs::read_to_string(out.join("rounds.csv")).unwrap();
    let survivors: Vec<&str> = rounds.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(survivors, ["4", "2", "1"]);
    let ledger: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ledger.json")).unwrap()).unwrap();
    assert!(ledger["total_trainings"].as_u64().unwrap() < 40);
    assert!(r.stdout.contains("winner mock4"));

    let single = write(
        dir.path(),
        "one.toml",
        "seed = 1\n[selection]\nk = 5\npolicy = { kind = \"halving\", start_round = 1 }\ntrainer = { kind = \"mock\", means = [2.0], sigma = 0.1 }\n",
    );
    let r = run_cmd("select", &single, &out, "1");
    assert_eq!(r.code, 0);
    assert_eq!(fs::read_to_string(out.join("rounds.csv")).unwrap().lines().count(), 1);
    assert!(r.stdout.contains("0 rounds"));
}

#[test]
fn external_trainer_supplies_losses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "x.toml",
        r#"seed = 2
[selection]
k = 3
policy = { kind = "halving", start_round = 1 }
trainer = { kind = "external", command = ["sh", "-c", "echo training $RLAB_ROUND; echo $((5 - RLAB_SPEC_INDEX))"] }
[[selection.models]]
preset = "model1"
[[selection.models]]
preset = "model2"
[[selection.models]]
preset = "model3"
"#,
    );
    let out = dir.path().join("out");
    let r = run_cmd("select", &cfg, &out, "2");
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("winner model3"), "{}", r.stdout);

    let broken = write(
        dir.path(),
        "b.toml",
        "seed = 2\n[selection]\nk = 3\npolicy = { kind = \"halving\", start_round = 1 }\ntrainer = { kind = \"external\", command = [\"sh\", \"-c\", \"echo oops\"] }\n[[selection.models]]\npreset = \"model1\"\n[[selection.models]]\npreset = \"model2\"\n",
    );
    let r = run_cmd("select", &broken, &out, "1");
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("oops"), "{}", r.stderr);
}

#[test]
fn sweep_rows_follow_the_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "w.toml",
        r#"seed = 4
[data]
generate = { kind = "A", events = 600 }
[model]
preset = "model2"
filters = [1, 1]
batch_size = 4096
[training.early_stop]
min_epochs = 1
window = 1
threshold = 0.1
hard_cap = 1
[sweep]
indices = [0, 22, 44]
k = 1
test_size = 100
"#,
    );
    let out = dir.path().join("out");
    let r = run_cmd("sweep", &cfg, &out, "2");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "132");
    assert_eq!(rows[2][0], "31698");
    for row in &rows {
        assert!(row[1..8].iter().all(|v| *v == row[1]), "k = 1 collapses the boxplot: {row:?}");
    }
}

#[test]
fn report_merges_stored_records() {
    let dir = tempfile::tempdir().unwrap();
    let sel = write(
        dir.path(),
        "s.toml",
        "seed = 3\n[selection]\nk = 4\npolicy = { kind = \"halving\", start_round = 5 }\ntrainer = { kind = \"mock\", means = [1.0, 2.0, 3.0], sigma = 0.5 }\n",
    );
    assert_eq!(run_cmd("select", &sel, &dir.path().join("sel"), "1").code, 0);
    let rep = write(dir.path(), "r.toml", "seed = 0\n[report]\ninputs = [\"sel\"]\n");
    let out = dir.path().join("rep");
    let r = run_cmd("report", &rep, &out, "1");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let criteria = fs::read_to_string(out.join("criteria.csv")).unwrap();
    assert_eq!(criteria.lines().count(), 1 + 6 * 3);
    assert_eq!(fs::read_to_string(out.join("boxplots.csv")).unwrap().lines().count(), 4);
}

#[test]
fn exit_codes_separate_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let bad_toml = write(dir.path(), "a.toml", "seed = \n");
    assert_eq!(run_cmd("train", &bad_toml, &out, "1").code, 2);
    let unknown_field = write(dir.path(), "b.toml", "seed = 1\nsede = 2\n");
    assert_eq!(run_cmd("train", &unknown_field, &out, "1").code, 2);
    let unknown_preset = write(dir.path(), "c.toml", "seed = 1\n[data]\npath = \"x.rlab\"\n[model]\npreset = \"model9\"\n");
    assert_eq!(run_cmd("train", &unknown_preset, &out, "1").code, 2);
    let missing = write(dir.path(), "d.toml", "seed = 1\n[data]\npath = \"nowhere.rlab\"\n[model]\npreset = \"model1\"\n");
    assert_eq!(run_cmd("train", &missing, &out, "1").code, 3);
    fs::write(dir.path().join("junk.rlab"), b"RLAB not really").unwrap();
    let corrupt = write(dir.path(), "e.toml", "seed = 1\n[data]\npath = \"junk.rlab\"\n[model]\npreset = \"model1\"\n");
    assert_eq!(run_cmd("train", &corrupt, &out, "1").code, 3);

    let diverging = write(
        dir.path(),
        "f.toml",
        &format!(
            "seed = 1\n[data]\ngenerate = {{ kind = \"A\", events = 80 }}\n[model]\npreset = \"model2\"\nfilters = [2, 2]\noptimizer = \"SGD\"\nlearning_rate = 1e300\n{SMALL_TRAINING}"
        ),
    );
    let r = run_cmd("train", &diverging, &out, "1");
    assert_eq!(r.code, 4, "{}", r.stderr);
    assert!(r.stdout.contains("diverged"));

    let ok = write(dir.path(), "g.toml", "seed = 1\n[generator]\nkind = \"A\"\nevents = 5\n");
    assert_eq!(rlab(&["gen-data", "--config", ok.to_str().unwrap(), "--out", out.to_str().unwrap()], &[("RLAB_WORKERS", "nope")]).code, 2);
    assert_eq!(rlab(&["gen-data", "--config", ok.to_str().unwrap(), "--out", out.to_str().unwrap()], &[("RLAB_WORKERS", "2")]).code, 0);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", "seed = 7\n[generator]\nkind = \"A\"\nevents = 50\n");
    let out = dir.path().join("out");
    let a = run_cmd("gen-data", &cfg, &out, "1").stdout;
    let b = rlab(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "8"], &[]).stdout;
    assert_ne!(a, b);
    let stored = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(stored.seed, 8);
}

#[test]
fn shipped_configs_round_trip() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::parse(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap(), cfg, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 5);
}
