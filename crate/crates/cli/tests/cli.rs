//! End-to-end checks of the `iacbv` binary: exit codes, output shapes and
//! the play file format, one process spawn per scenario.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iacbv"))
}

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process was killed by a signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn eval_reports_values() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "sum.ia", "|- 1 + 1 : exp");
    let out = bin().args(["eval"]).arg(&f).args(["--n", "5"]).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out), "value 2\n");
}

#[test]
fn eval_out_of_fuel_is_an_error() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "loop.ia", "|- while 1 do skip : com");
    let out = bin().args(["eval"]).arg(&f).args(["--fuel", "100"]).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("out of fuel after 100 steps"), "{}", stderr(&out));
}

#[test]
fn missing_file_is_an_error() {
    let out = bin().args(["eval", "/no/such/file.ia"]).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}

#[test]
fn check_accepts_an_equivalent_pair() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.ia", "|- new x in (x := 1; !x) : exp");
    let b = write(&dir, "b.ia", "|- 1 : exp");
    let out = bin().args(["check"]).arg(&a).arg(&b).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out), "EQUIVALENT\n");
}

#[test]
fn check_reports_a_witness_word() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.ia", "|- 1 : exp");
    let b = write(&dir, "b.ia", "|- 2 : exp");
    let out = bin().args(["check"]).arg(&a).arg(&b).output().unwrap();
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert!(text.starts_with("INEQUIVALENT witness @()"), "{}", text);

    let out = bin()
        .args(["check", "--format", "machine"])
        .arg(&a)
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).starts_with("INEQUIVALENT\t"), "{}", stdout(&out));
}

#[test]
fn check_can_search_for_a_context() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.ia", "|- 1 : exp");
    let b = write(&dir, "b.ia", "|- 2 : exp");
    let out = bin()
        .args(["check", "--find-context"])
        .arg(&a)
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("INEQUIVALENT witness"));
    assert!(lines.next().unwrap().starts_with("context "), "{}", text);
}

#[test]
fn check_rejects_mismatched_judgments() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.ia", "|- 1 : exp");
    let b = write(&dir, "b.ia", "|- skip : com");
    let out = bin().args(["check"]).arg(&a).arg(&b).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}

#[test]
fn distinguish_finds_a_context_or_reports_none() {
    let dir = TempDir::new().unwrap();
    let one = write(&dir, "one.ia", "|- 1 : exp");
    let two = write(&dir, "two.ia", "|- 2 : exp");
    let out = bin().args(["distinguish"]).arg(&one).arg(&two).output().unwrap();
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("context "), "{}", stdout(&out));

    let a = write(&dir, "a.ia", "|- skip; skip : com");
    let b = write(&dir, "b.ia", "|- skip : com");
    let out = bin().args(["distinguish"]).arg(&a).arg(&b).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out), "no context within budget\n");
}

#[test]
fn validate_play_accepts_a_legal_play() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "ok.play",
        "# a complete play of the constant command\n\
         |- skip : com\n\
         @() 0\n\
         r.* 1 -\n",
    );
    let out = bin().args(["validate-play"]).arg(&f).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out), "VALID\n");
}

#[test]
fn validate_play_rejects_a_double_answer() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "bad.play",
        "|- skip : com\n\
         @() 0\n\
         r.* 1\n\
         r.* 1\n",
    );
    let out = bin().args(["validate-play"]).arg(&f).output().unwrap();
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("INVALID"), "{}", stdout(&out));
}

#[test]
fn validate_play_rejects_unknown_moves() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "odd.play", "|- skip : com\nnope 0\n");
    let out = bin().args(["validate-play"]).arg(&f).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown move"), "{}", stderr(&out));
}

#[test]
fn arena_prints_a_move_table() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "app.ia", "f:com->com |- f skip : com");
    let out = bin().args(["arena"]).arg(&f).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("@(*)\tOQ"), "{}", text);
    assert!(text.contains("f.arg.*\tPQ"), "{}", text);

    let out = bin().args(["arena", "--format", "dot"]).arg(&f).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("digraph"), "{}", stdout(&out));
}

#[test]
fn translate_lists_component_languages() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "one.ia", "|- 1 : exp");
    let out = bin().args(["translate"]).arg(&f).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("component @()"), "{}", text);
    assert!(text.contains("r.1"), "{}", text);
}

#[test]
fn canon_prints_a_canonical_form() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "app.ia", "f:com->com |- f skip : com");
    let out = bin().args(["canon"]).arg(&f).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!stdout(&out).trim().is_empty());
}
