//! Contract tests for the `semder` binary: exit codes, stream split,
//! config-file merging and output shapes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn semder() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semder"))
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const CORPUS: &str = "\
comparison\tthe hot sun\tvery cold ice
comparison\tvery warm day\tthe cold night
expansion\tthe hot sun\tvery warm day
expansion\tthe cold ice\tvery cold night
";

const MEMORY: &str = "\
6 4
hot 1.0 0.2 -0.3 0.5
cold -0.8 0.1 0.4 -0.2
warm 0.9 0.3 -0.1 0.4
ice -0.7 0.2 0.3 -0.3
the 0.01 0.02 0.01 -0.01
very 0.02 -0.01 0.03 0.02
";

struct Workdir {
    dir: tempfile::TempDir,
}

impl Workdir {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train.tsv"), CORPUS.repeat(8)).unwrap();
        fs::write(dir.path().join("memory.txt"), MEMORY).unwrap();
        Workdir { dir }
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, extra: &[&str]) -> Output {
        let mut cmd = semder();
        cmd.arg("train")
            .arg("--train")
            .arg(self.path("train.tsv"))
            .arg("--memory")
            .arg(self.path("memory.txt"))
            .arg("--model-out")
            .arg(self.path("model.bin"))
            .args(["--target", "comparison", "--d1", "6", "--da", "4"])
            .args(["--seed", "7", "--max-iters", "60"])
            .args(extra);
        cmd.output().unwrap()
    }
}

fn line_after<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no line starting with {:?} in:\n{}", prefix, text))
        .trim()
}

#[test]
fn eval_on_the_training_file_reproduces_the_logged_accuracy() {
    let w = Workdir::new();
    let out = w.train(&[]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let logged = line_after(&stdout_of(&out), "final train accuracy:").to_string();

    let eval = semder()
        .arg("eval")
        .arg("--model")
        .arg(w.path("model.bin"))
        .arg("--data")
        .arg(w.path("train.tsv"))
        .arg("--memory")
        .arg(w.path("memory.txt"))
        .output()
        .unwrap();
    assert!(eval.status.success(), "{}", stderr_of(&eval));
    let reported = line_after(&stdout_of(&eval), "accuracy=").to_string();
    assert_eq!(logged, reported);
}

#[test]
fn training_splits_metrics_to_stdout_and_diagnostics_to_stderr() {
    let w = Workdir::new();
    let out = w.train(&[]);
    assert!(out.status.success());
    let log = stdout_of(&out);
    let err = stderr_of(&out);
    assert!(log.lines().any(|l| l.starts_with("iter ")), "no iteration log:\n{}", log);
    assert!(log.contains("termination:"));
    assert!(!log.contains("positive"), "diagnostics leaked to stdout:\n{}", log);
    assert!(err.contains("16 positive / 16 negative"), "{}", err);
    assert!(err.contains("model written to"), "{}", err);
}

#[test]
fn config_file_supplies_settings_and_flags_override_it() {
    let w = Workdir::new();
    let cfg = w.path("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# run settings\n\
             train = {}\n\
             memory = {}\n\
             model-out = {}\n\
             target = comparison\n\
             d1 = 6\nda = 4\nseed = 7\nmax-iters = 3\n",
            w.path("train.tsv").display(),
            w.path("memory.txt").display(),
            w.path("model.bin").display(),
        ),
    )
    .unwrap();

    let out = semder().arg("train").arg("--config").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    let iters = stdout_of(&out).lines().filter(|l| l.starts_with("iter ")).count();
    assert_eq!(iters, 3, "config max-iters not honored");

    let out = semder()
        .arg("train")
        .arg("--config")
        .arg(&cfg)
        .args(["--max-iters", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let iters = stdout_of(&out).lines().filter(|l| l.starts_with("iter ")).count();
    assert_eq!(iters, 1, "flag did not override config");

    fs::write(&cfg, "train = x\nbroken line\n").unwrap();
    let out = semder().arg("train").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("line 2"), "{}", stderr_of(&out));
}

#[test]
fn missing_and_empty_inputs_exit_2_naming_the_path() {
    let w = Workdir::new();
    let out = semder()
        .arg("train")
        .arg("--train")
        .arg(w.path("absent.tsv"))
        .arg("--memory")
        .arg(w.path("memory.txt"))
        .arg("--model-out")
        .arg(w.path("m.bin"))
        .args(["--target", "comparison"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("absent.tsv"), "{}", stderr_of(&out));

    let train = w.train(&[]);
    assert!(train.status.success());
    fs::write(w.path("empty.tsv"), "").unwrap();
    let out = semder()
        .arg("eval")
        .arg("--model")
        .arg(w.path("model.bin"))
        .arg("--data")
        .arg(w.path("empty.tsv"))
        .arg("--memory")
        .arg(w.path("memory.txt"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("no instances"), "{}", stderr_of(&out));

    // missing required flag is a usage error
    let out = semder().arg("eval").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_exit_codes_cover_pass_corruption_and_bad_eps() {
    let pass = semder().args(["gradcheck", "--seed", "3"]).output().unwrap();
    assert_eq!(pass.status.code(), Some(0), "{}", stdout_of(&pass));
    assert!(stdout_of(&pass).contains("gradient check passed"));
    for block in ["theta_l", "w_rp", "w_rk", "b_r", "w_p", "w_m", "w_s", "b_a"] {
        assert!(stdout_of(&pass).contains(&format!("block {:<8}", block)));
    }

    let corrupt = semder()
        .args(["gradcheck", "--seed", "3", "--corrupt-block", "w_s"])
        .output()
        .unwrap();
    assert_eq!(corrupt.status.code(), Some(1));
    assert!(stdout_of(&corrupt).contains("FAILED"));

    let bad_eps = semder().args(["gradcheck", "--eps", "1e-2"]).output().unwrap();
    assert_eq!(bad_eps.status.code(), Some(2));
    let bad_block = semder()
        .args(["gradcheck", "--corrupt-block", "nonsense"])
        .output()
        .unwrap();
    assert_eq!(bad_block.status.code(), Some(2));
}

#[test]
fn inspect_marks_instances_without_in_memory_words() {
    let w = Workdir::new();
    // a memory table disjoint from the corpus vocabulary
    fs::write(w.path("disjoint.txt"), "2 4\nxx 1 0 0 0\nyy 0 1 0 0\n").unwrap();
    let out = semder()
        .arg("train")
        .arg("--train")
        .arg(w.path("train.tsv"))
        .arg("--memory")
        .arg(w.path("disjoint.txt"))
        .arg("--model-out")
        .arg(w.path("model.bin"))
        .args(["--target", "comparison", "--d1", "6", "--da", "4", "--seed", "7"])
        .args(["--max-iters", "60"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));

    fs::write(w.path("one.tsv"), "comparison\tthe hot sun\tvery cold ice\n").unwrap();
    let out = semder()
        .arg("inspect")
        .arg("--model")
        .arg(w.path("model.bin"))
        .arg("--data")
        .arg(w.path("one.tsv"))
        .arg("--memory")
        .arg(w.path("disjoint.txt"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("(no in-memory words)"), "{}", stdout_of(&out));

    // and with a matching memory, weights are printed to six decimals
    let train = w.train(&[]);
    assert!(train.status.success());
    let out = semder()
        .arg("inspect")
        .arg("--model")
        .arg(w.path("model.bin"))
        .arg("--data")
        .arg(w.path("one.tsv"))
        .arg("--memory")
        .arg(w.path("memory.txt"))
        .args(["--k", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let log = stdout_of(&out);
    assert!(log.lines().any(|l| l.starts_with("#1  gold comparison")), "{}", log);
    let weight_lines: Vec<&str> =
        log.lines().filter(|l| l.starts_with("  ") && !l.contains("(no")).collect();
    assert_eq!(weight_lines.len(), 2, "{}", log);
    for l in &weight_lines {
        let weight = l.split_whitespace().nth(1).unwrap();
        let frac = weight.split('.').nth(1).unwrap_or("");
        assert_eq!(frac.len(), 6, "weight {:?} not six decimals", weight);
    }
}

#[test]
fn model_files_round_trip_through_the_binary() {
    let w = Workdir::new();
    let out = w.train(&[]);
    assert!(out.status.success());
    let bytes = fs::read(w.path("model.bin")).unwrap();
    assert_eq!(&bytes[..7], b"SEMDER1");
    assert!(Path::new(&w.path("model.bin")).exists());
}
