use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use kgcl::kb::load_kb;
use kgcl::longrun::load_sessions;

fn kgcl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kgcl"))
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn golden_world() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/world_seed42.tsv")
}

fn ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn kgcl");
    assert!(out.status.success(), "kgcl failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn with_stdin(cmd: &mut Command, input: &str) -> Output {
    let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().expect("spawn kgcl");
    child.stdin.take().expect("piped").write_all(input.as_bytes()).expect("write stdin");
    child.wait_with_output().expect("wait")
}

/// Default world split into six sessions under `dir/gen`.
fn generated(dir: &Path) -> PathBuf {
    ok(kgcl().args(["generate", "--out"]).arg(dir.join("gen")));
    dir.join("gen/manifest.toml")
}

#[test]
fn generate_writes_a_loadable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generated(dir.path());
    let (_, sessions) = load_sessions(&manifest).unwrap();
    assert_eq!(sessions.len(), 6);
    let world = std::fs::read_to_string(dir.path().join("gen/world.tsv")).unwrap();
    assert_eq!(world, std::fs::read_to_string(golden_world()).unwrap());
}

#[test]
fn train_twice_gives_identical_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generated(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let stdout = ok(kgcl()
            .arg("--config")
            .arg(golden("toy.toml"))
            .args(["train", "--mode", "classical", "--seed", "7", "--sessions"])
            .arg(&manifest)
            .arg("--out")
            .arg(&out));
        (stdout, std::fs::read(out.join("eval_matrix.csv")).unwrap(), std::fs::read(out.join("model.kge")).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    assert!(a.0.starts_with("train_session,eval_split,metric,protocol,value\n"));
    assert_eq!(a.0.lines().count(), 1 + 2 * 21);
    assert_eq!(a, b);
}

#[test]
fn eval_of_toy_model_matches_golden_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generated(dir.path());
    let run = dir.path().join("run");
    ok(kgcl()
        .arg("--config")
        .arg(golden("toy.toml"))
        .args(["train", "--mode", "continual", "--seed", "7", "--sessions"])
        .arg(&manifest)
        .arg("--out")
        .arg(&run));
    let mut got = String::new();
    for (i, protocol) in ["filtered", "raw"].into_iter().enumerate() {
        let out = ok(kgcl()
            .current_dir(dir.path().join("gen"))
            .arg("eval")
            .arg("--checkpoint")
            .arg(run.join("model.kge"))
            .arg("--kb")
            .arg(run.join("kb.kgkb"))
            .args(["--split", "session_5_train.tsv", "--protocol", protocol]));
        let skip = if i == 0 { 0 } else { 1 };
        for line in out.lines().skip(skip) {
            got += line;
            got += "\n";
        }
    }
    assert_eq!(got, std::fs::read_to_string(golden("toy_eval.csv")).unwrap());
}

#[test]
fn teach_yes_commits_one_triple_and_acknowledges() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("kb.kgkb");
    let out = with_stdin(
        kgcl().args(["teach", "--detect", "mug", "--kb"]).arg(golden_world()).arg("--save-kb").arg(&saved),
        "yes\n",
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let acks: Vec<&str> = stdout.lines().filter(|l| l.starts_with("ack: ")).collect();
    assert_eq!(acks.len(), 1, "{stdout}");
    assert!(acks[0].contains("(mug, "), "{stdout}");
    assert!(stdout.contains("committed 1 new triples"), "{stdout}");
    let kb = load_kb(&saved).unwrap();
    assert_eq!(kb.len(), 219);
    let (last, prov) = kb.journal().last().unwrap();
    assert_eq!(kb.names(last).unwrap().head, "mug");
    assert_eq!(prov.source.as_str(), "predicted-confirmed");
}

#[test]
fn teach_no_takes_a_correction_and_rejects_empty_ones() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("kb.kgkb");
    let out = with_stdin(
        kgcl().args(["teach", "--detect", "mug", "--kb"]).arg(golden_world()).arg("--save-kb").arg(&saved),
        "maybe\nno\n\nno kitchen\nskip\n",
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("please answer yes, no or skip"));
    assert!(stdout.contains("error: invalid verdict"), "{stdout}");
    assert!(stdout.contains(", kitchen)."), "{stdout}");
    let kb = load_kb(&saved).unwrap();
    assert_eq!(kb.len(), 219);
    assert_eq!(kb.journal().last().unwrap().1.source.as_str(), "human-corrected");
}

#[test]
fn simulate_and_export_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("sim");
    let timeline = ok(kgcl().args(["simulate", "--cycles", "2", "--quota", "5", "--out"]).arg(&run));
    assert!(timeline.starts_with("cycle,metric,value\n"));
    assert!(timeline.lines().any(|l| l.starts_with("2,heldout_hits_at_10,")));
    let export = dir.path().join("export");
    ok(kgcl().arg("export").arg("--kb").arg(run.join("kb.kgkb")).arg("--out").arg(&export));
    let kb = load_kb(run.join("kb.kgkb")).unwrap();
    let provenance = std::fs::read_to_string(export.join("provenance.csv")).unwrap();
    assert_eq!(provenance.lines().count(), kb.len() + 1);
    let stats = std::fs::read_to_string(export.join("stats.csv")).unwrap();
    assert!(stats.contains(&format!("triples,{}\n", kb.len())));
    let tsv = std::fs::read_to_string(export.join("triples.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), kb.len());
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("manifest.toml");
    std::fs::write(&bad, "[[session]]\nindex = 3\ntrain = \"a\"\ndev = \"b\"\ntest = \"c\"\n").unwrap();
    let missing = dir.path().join("missing.kge");
    let cases: Vec<Vec<std::ffi::OsString>> = vec![
        vec!["train".into(), "--sessions".into(), bad.clone().into()],
        vec!["eval".into(), "--checkpoint".into(), missing.into(), "--kb".into(), "x".into(), "--split".into(), "y".into()],
        vec!["--config".into(), bad.into(), "simulate".into()],
    ];
    for args in cases {
        let out = kgcl().args(&args).output().unwrap();
        assert!(!out.status.success());
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert_eq!(stderr.lines().count(), 1, "{stderr}");
        assert!(stderr.starts_with("error: "), "{stderr}");
    }
    let out = kgcl().args(["train", "--mode", "sideways"]).output().unwrap();
    assert!(!out.status.success());
}
