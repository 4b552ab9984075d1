use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wbalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbalign")).args(args).output().expect("spawn wbalign")
}

fn ok(args: &[&str]) -> Output {
    let out = wbalign(args);
    assert!(
        out.status.success(),
        "wbalign {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small synthetic corpus: three languages of 60 words in 5 dimensions.
fn corpus(dir: &Path) {
    ok(&["synth-gen", "--out", p(dir), "--n", "60", "--d", "5", "--seed", "3"]);
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn align_translate_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let conf = dir.path().join("run.conf");
    ok(&["align", "--config", p(&conf)]);
    let run = dir.path().join("run");
    for f in ["checkpoint.wba", "manifest.txt", "convergence.tsv", "barycenter_iterations.tsv", "gw_init.tsv", "report.tsv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let manifest = read(run.join("manifest.txt"));
    assert!(manifest.starts_with("# wbalign "));
    assert!(manifest.contains("vocab_size = 60"));

    // every synthetic pair is recovered from the planted rotations
    let report = read(run.join("report.tsv"));
    let p1: Vec<f64> = report
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').collect::<Vec<_>>())
        .filter(|c| c[1] == "P@k" && c[2] == "1")
        .map(|c| c[3].parse().unwrap())
        .collect();
    assert_eq!(p1.len(), 7, "{report}");
    assert!(p1.iter().all(|&v| v >= 0.95), "{report}");

    let words = dir.path().join("words.txt");
    fs::write(&words, "l0_3\nnot_a_word\nl0_17\n").unwrap();
    let out_dir = dir.path().join("lex");
    let ckpt = run.join("checkpoint.wba");
    let out = ok(&["translate", "--checkpoint", p(&ckpt), "--src", "l0", "--tgt", "l2", "--topk", "3", "--words", p(&words), "--out", p(&out_dir)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 skipped"));
    let lex = read(out_dir.join("lexicon.l0-l2.tsv"));
    let rows: Vec<Vec<&str>> = lex.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0][..3], ["l0_3", "l2_3", "1"]);
    assert_eq!(rows[3][..3], ["l0_17", "l2_17", "1"]);
    assert!(read(out_dir.join("manifest.txt")).contains("skipped = 1"));

    let eval_dir = dir.path().join("eval");
    let dicts = dir.path().join("dictionaries");
    ok(&["evaluate", "--checkpoint", p(&ckpt), "--dictionaries", p(&dicts), "--baseline", p(&ckpt), "--k", "1,5", "--out", p(&eval_dir)]);
    let report = read(eval_dir.join("report.tsv"));
    assert!(report.contains("l1-l2\tP@k\t5\t"), "{report}");
    // a system compared with itself has no discordant queries
    assert!(report.contains("l1-l2\tmcnemar_p\t1\t1"), "{report}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let conf = dir.path().join("run.conf");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["align", "--config", p(&conf), "--out", p(&a)]);
    ok(&["align", "--config", p(&conf), "--out", p(&b)]);
    assert_eq!(fs::read(a.join("checkpoint.wba")).unwrap(), fs::read(b.join("checkpoint.wba")).unwrap());
    assert_eq!(read(a.join("convergence.tsv")), read(b.join("convergence.tsv")));
    assert_eq!(read(a.join("report.tsv")), read(b.join("report.tsv")));
}

#[test]
fn hierarchical_writes_comparison() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth-gen", "--out", p(dir.path()), "--n", "40", "--d", "4", "--languages", "a,b,c,d"]);
    let conf = dir.path().join("run.conf");
    ok(&["hierarchical", "--config", p(&conf), "--tree", "((a,b),(c,d))"]);
    let run = dir.path().join("run");
    let cmp = read(run.join("comparison.tsv"));
    assert!(cmp.starts_with("pair\tmetric\tk\thierarchical\tflat\tdelta\n"));
    assert_eq!(cmp.lines().filter(|l| l.contains("\tP@k\t1\t")).count(), 12);
    ok(&["translate", "--checkpoint", p(&run.join("checkpoint.wba")), "--src", "a", "--tgt", "d", "--out", p(&run)]);
    assert_eq!(read(run.join("lexicon.a-d.tsv")).lines().count(), 40 * 10);
}

#[test]
fn ablation_sweeps_pivots() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth-gen", "--out", p(dir.path()), "--n", "30", "--d", "3"]);
    let conf = dir.path().join("run.conf");
    ok(&["ablate", "--config", p(&conf), "--mode", "pivot-robustness"]);
    let tsv = read(dir.path().join("run/ablation.tsv"));
    for pivot in ["l0", "l1", "l2"] {
        assert!(tsv.contains(&format!("pivot={pivot}\taverage\tP@k\t1\t")), "{tsv}");
    }
    assert!(tsv.contains("# spread of average P@1 over pivots"));
}

#[test]
fn errors_exit_nonzero_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "languages.xx = missing.vec\nlanguages.yy = missing2.vec\n").unwrap();
    let out = wbalign(&["align", "--config", p(&conf)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: [load] language `xx`"), "{err}");

    fs::write(&conf, "languages.xx = a.vec\nfrobnicate = 3\n").unwrap();
    let err = String::from_utf8_lossy(&wbalign(&["align", "--config", p(&conf)]).stderr).into_owned();
    assert!(err.contains("line 2"), "{err}");

    let out = wbalign(&["translate", "--checkpoint", p(&dir.path().join("none.wba")), "--src", "a", "--tgt", "b", "--out", p(dir.path())]);
    assert!(!out.status.success());
}
