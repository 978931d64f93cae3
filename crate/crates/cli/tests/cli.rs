use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn nldm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nldm")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const TRAIN: &str = "the\tDET\ndog\tNOUN\nbarks\tVERB\n\na\tDET\ncat\tNOUN\nsleeps\tVERB\n\nthe\tDET\ncat\tNOUN\n";
const DEV: &str = "a\tDET\ndog\tNOUN\nsleeps\tVERB\n";

const CONLLU: &str = "\
# sent_id = 1
1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_
2\tdog\tdog\tNOUN\t_\t_\t3\tnsubj\t_\t_
3\tbarks\tbark\tVERB\t_\t_\t0\troot\t_\t_

1\ta\ta\tDET\t_\t_\t2\tdet\t_\t_
2\tcat\tcat\tNOUN\t_\t_\t0\troot\t_\t_
";

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        std::fs::write(dir.path().join("train.tsv"), TRAIN).unwrap();
        std::fs::write(dir.path().join("dev.tsv"), DEV).unwrap();
        std::fs::write(dir.path().join("gold.conllu"), CONLLU).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    /// Trains a small model into `name`, returning the process output.
    fn train(&self, name: &str, model: &str, extra: &[&str]) -> Output {
        let (train, dev, out) = (self.p("train.tsv"), self.p("dev.tsv"), self.p(name));
        let mut args = vec![
            "train", "--train", &train, "--dev", &dev, "--out", &out, "--model", model, "--d-x", "4", "--d-h", "4",
            "--d-l", "3", "--d-r", "3", "--epochs", "3", "--batch-size", "2", "--lr", "0.3", "--seed", "7",
        ];
        args.extend_from_slice(extra);
        nldm(&args)
    }
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn missing_train_flag_is_a_usage_error() {
    let f = Fixture::new();
    let o = nldm(&["train", "--dev", &f.p("dev.tsv"), "--out", &f.p("m.ckpt")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--train"), "{}", stderr(&o));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_and_bad_values_are_usage_errors() {
    assert_eq!(nldm(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(nldm(&["gradcheck", "--model", "hmm"]).status.code(), Some(1));
    assert_eq!(nldm(&["--help"]).status.code(), Some(0));
}

#[test]
fn trained_checkpoint_reloads_for_every_command() {
    let f = Fixture::new();
    let o = f.train("m.ckpt", "nldm", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(f.path("m.ckpt").is_file());
    let log = read(&f.path("m.ckpt.log.tsv"));
    assert_eq!(log, stdout(&o));
    assert_eq!(log.lines().next().unwrap(), "epoch\ttrain_loss\tdev_accuracy\tparam_norm");

    let o = nldm(&["eval", "--checkpoint", &f.p("m.ckpt"), "--data", &f.p("dev.tsv")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let acc: f64 = stdout(&o).trim().strip_prefix("accuracy\t").unwrap().parse().unwrap();
    assert!((0.0..=100.0).contains(&acc));

    let o = nldm(&["parse", "--checkpoint", &f.p("m.ckpt"), "--data", &f.p("train.tsv")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2].split('\t').count(), 2);

    let o = nldm(&["analyze", "histogram", "--checkpoint", &f.p("m.ckpt"), "--data", &f.p("train.tsv")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let total: f64 = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(2).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 100.0).abs() < 0.1, "{}", stdout(&o));

    let o = nldm(&["analyze", "uas", "--checkpoint", &f.p("m.ckpt"), "--data", &f.p("gold.conllu")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("uas\t"));
}

#[test]
fn same_flags_and_seed_give_identical_logs() {
    let f = Fixture::new();
    let a = f.train("a.ckpt", "nldm", &["--log", &f.p("a.tsv")]);
    let b = f.train("b.ckpt", "nldm", &["--log", &f.p("b.tsv")]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    assert_eq!(read(&f.path("a.tsv")), read(&f.path("b.tsv")));
    assert_eq!(std::fs::read(f.path("a.ckpt")).unwrap(), std::fs::read(f.path("b.ckpt")).unwrap());
}

#[test]
fn predict_emits_one_line_per_token_plus_separators() {
    let f = Fixture::new();
    for model in ["nldm", "softmax", "crf1", "crf2"] {
        let ckpt = format!("{model}.ckpt");
        let o = f.train(&ckpt, model, &[]);
        assert_eq!(o.status.code(), Some(0), "{model}: {}", stderr(&o));
        let o = nldm(&["predict", "--checkpoint", &f.p(&ckpt), "--data", &f.p("train.tsv")]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let text = stdout(&o);
        // 8 tokens, 3 sentences
        assert_eq!(text.lines().count(), 8 + 2, "{model}:\n{text}");
        assert_eq!(text.lines().filter(|l| l.is_empty()).count(), 2);
        let words: Vec<&str> = text.lines().filter(|l| !l.is_empty()).map(|l| l.split('\t').next().unwrap()).collect();
        assert_eq!(words, ["the", "dog", "barks", "a", "cat", "sleeps", "the", "cat"]);
    }
}

#[test]
fn generate_defaults_split_eighty_ten_ten() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("syn");
    let o = nldm(&["generate", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "train\t800\ndev\t100\ntest\t100\n");
    for (name, count) in [("train", 800), ("dev", 100), ("test", 100)] {
        let text = read(&out.join(format!("{name}.tsv")));
        let sentences = text.split("\n\n").filter(|s| !s.trim().is_empty()).count();
        assert_eq!(sentences, count, "{name}");
    }
}

#[test]
fn gradcheck_default_toy_config_within_tolerance() {
    for model in ["nldm", "softmax", "crf1", "crf2"] {
        let o = nldm(&["gradcheck", "--model", model]);
        assert_eq!(o.status.code(), Some(0), "{model}: {}", stderr(&o));
        let err: f64 = stdout(&o)
            .lines()
            .find_map(|l| l.strip_prefix("max_rel_error\t"))
            .unwrap()
            .parse()
            .unwrap();
        assert!(err <= 1e-4, "{model}: {err}");
    }
    let o = nldm(&["gradcheck", "--scorer", "trilinear", "--tolerance", "0"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn config_file_applies_before_flags() {
    let f = Fixture::new();
    std::fs::write(f.path("run.cfg"), "# small run\nepochs = 1\npatience = 9\nlr=0.3\n").unwrap();
    let (cfg, train, dev, out) = (f.p("run.cfg"), f.p("train.tsv"), f.p("dev.tsv"), f.p("m.ckpt"));
    let base = ["train", "--config", &cfg, "--train", &train, "--dev", &dev, "--out", &out, "--d-x", "3", "--d-h", "3"];
    let o = nldm(&base);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
    let mut over = base.to_vec();
    over.extend(["--epochs", "2"]);
    let o = nldm(&over);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);

    std::fs::write(f.path("bad.cfg"), "no_such_flag = 1\n").unwrap();
    let o = nldm(&["train", "--config", &f.p("bad.cfg"), "--train", &train, "--dev", &dev, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(f.path("bad.cfg"), "epochs\n").unwrap();
    let o = nldm(&["train", "--config", &f.p("bad.cfg"), "--train", &train, "--dev", &dev, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn data_problems_exit_with_status_two() {
    let f = Fixture::new();
    assert_eq!(f.train("m.ckpt", "crf1", &[]).status.code(), Some(0));
    std::fs::write(f.path("other.tsv"), "dog\tADJ\n").unwrap();
    let o = nldm(&["eval", "--checkpoint", &f.p("m.ckpt"), "--data", &f.p("other.tsv")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ADJ"), "{}", stderr(&o));

    // trees need the tree model
    let o = nldm(&["parse", "--checkpoint", &f.p("m.ckpt"), "--data", &f.p("dev.tsv")]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(f.path("broken.tsv"), "one\ttwo\tthree\n").unwrap();
    let o = nldm(&["eval", "--checkpoint", &f.p("m.ckpt"), "--data", &f.p("broken.tsv")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":1:"), "{}", stderr(&o));

    std::fs::write(f.path("junk.ckpt"), b"not a checkpoint").unwrap();
    let o = nldm(&["eval", "--checkpoint", &f.p("junk.ckpt"), "--data", &f.p("dev.tsv")]);
    assert_eq!(o.status.code(), Some(2));

    let o = f.train("missing/m.ckpt", "nldm", &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gold_histogram_from_conllu() {
    let f = Fixture::new();
    let o = nldm(&["analyze", "histogram", "--gold", "--data", &f.p("gold.conllu")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // lengths 1, 1, 3, 1, 2
    assert_eq!(stdout(&o), "bucket\tcount\tpercent\n1\t3\t60.00\n2-10\t2\t40.00\n>10\t0\t0.00\n");
    let o = nldm(&["analyze", "histogram", "--gold", "--data", &f.p("train.tsv")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ksweep_emits_one_row_per_limit() {
    let f = Fixture::new();
    let (train, dev) = (f.p("train.tsv"), f.p("dev.tsv"));
    let o = nldm(&[
        "analyze", "ksweep", "--train", &train, "--dev", &dev, "--test", &dev, "--ks", "1,2,5", "--d-x", "3",
        "--d-h", "3", "--epochs", "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let ks: Vec<&str> = text.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(ks, ["1", "2", "5"]);
    let o = nldm(&["analyze", "ksweep", "--train", &train, "--dev", &dev, "--test", &dev, "--model", "crf1"]);
    assert_eq!(o.status.code(), Some(1));
}
