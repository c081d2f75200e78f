use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use moodrank::cli::{RunConfig, EXIT_DATA, EXIT_USAGE};
use moodrank::synth::{synthetic_world, write_workspace, WorldSpec};

fn moodrank(config: &Path, args: &[&str], stdin: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_moodrank"));
    cmd.args(args).arg("--config").arg(config);
    match stdin {
        None => cmd.output().unwrap(),
        Some(text) => {
            use std::io::Write;
            use std::process::Stdio;
            let mut child = cmd
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
                .unwrap();
            child
                .stdin
                .take()
                .unwrap()
                .write_all(text.as_bytes())
                .unwrap();
            child.wait_with_output().unwrap()
        }
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        stderr(&o)
    );
    o
}

fn workspace(dir: &Path) -> PathBuf {
    write_workspace(
        dir,
        &synthetic_world(&WorldSpec::default()),
        &RunConfig::default(),
    )
    .unwrap()
}

fn trained(dir: &Path) -> PathBuf {
    let config = workspace(dir);
    for cmd in ["train", "annotate", "build-memory"] {
        ok(moodrank(&config, &[cmd], None));
    }
    config
}

#[test]
fn train_writes_a_checkpoint_and_prints_the_epoch_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path());
    let out = ok(moodrank(&config, &["train"], None));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch\ttrain_loss\tval_loss\tval_r2");
    assert_eq!(lines.len(), 6);
    assert!(dir.path().join("head.ckpt.json").exists());

    let again = ok(moodrank(&config, &["train"], None));
    assert_eq!(stdout(&again), text);
    let other_seed = ok(moodrank(&config, &["train", "--seed", "5"], None));
    assert_ne!(stdout(&other_seed), text);
}

#[test]
fn missing_corpus_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path());
    std::fs::remove_file(dir.path().join("corpus.csv")).unwrap();
    let out = moodrank(&config, &["train"], None);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(stderr(&out).contains("corpus.csv"), "{}", stderr(&out));
}

#[test]
fn annotate_needs_a_checkpoint_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path());
    let out = moodrank(&config, &["annotate"], None);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(stderr(&out).contains("head.ckpt.json"));

    ok(moodrank(&config, &["train"], None));
    let out = ok(moodrank(&config, &["annotate"], None));
    assert_eq!(stdout(&out), "annotated\t48\nskipped\t0\n");
    let first = std::fs::read(dir.path().join("songs.jsonl")).unwrap();
    ok(moodrank(&config, &["annotate"], None));
    assert_eq!(
        std::fs::read(dir.path().join("songs.jsonl")).unwrap(),
        first
    );
}

#[test]
fn build_memory_tables_have_unit_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = trained(dir.path());
    let tables = moodrank::memory::load_memory_tables::<f64>(
        dir.path().join("user_emotion.jsonl"),
        dir.path().join("emotion_artist.jsonl"),
    )
    .unwrap();
    assert!(!tables.is_empty());
    for row in tables.user_emotion.rows.values() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let out = ok(moodrank(&config, &["build-memory"], None));
    assert!(stdout(&out).starts_with("matched_artists\t12\n"));
}

#[test]
fn build_memory_with_disjoint_artists_warns_and_writes_empty_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = trained(dir.path());
    std::fs::write(
        dir.path().join("plays.tsv"),
        "user_id\tartist_name\tplays\nu1\tNobody At All\t12\n",
    )
    .unwrap();
    let out = ok(moodrank(&config, &["build-memory"], None));
    assert!(stdout(&out).starts_with("matched_artists\t0\n"));
    assert!(stderr(&out).contains("warning"));
    let tables = moodrank::memory::load_memory_tables::<f64>(
        dir.path().join("user_emotion.jsonl"),
        dir.path().join("emotion_artist.jsonl"),
    )
    .unwrap();
    assert!(tables.is_empty());
}

#[test]
fn recommend_prints_a_sorted_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = trained(dir.path());
    let out = ok(moodrank(
        &config,
        &[
            "recommend",
            "--user",
            "user001",
            "--text",
            "tired and a little sad",
            "--k",
            "3",
        ],
        None,
    ));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "query\ttired and a little sad");
    assert!(lines[1].starts_with("query_va\t"));
    assert!(lines[2].starts_with("query_bin\t"));
    assert_eq!(lines[3], "rank\tartist\tsong\tv_pred\ta_pred\tscore");
    let scores: Vec<f64> = lines[4..]
        .iter()
        .map(|l| l.rsplit('\t').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 3);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(stderr(&out).is_empty());
}

#[test]
fn recommend_for_an_unknown_user_uses_the_full_pool_with_a_notice() {
    let dir = tempfile::tempdir().unwrap();
    let config = trained(dir.path());
    let out = ok(moodrank(
        &config,
        &[
            "recommend",
            "--user",
            "ghost",
            "--text",
            "excited for the weekend",
            "--k",
            "100",
        ],
        None,
    ));
    assert!(stderr(&out).contains("no play history"));
    assert_eq!(stdout(&out).lines().count(), 4 + 48);
}

#[test]
fn recommend_rejects_empty_text() {
    let dir = tempfile::tempdir().unwrap();
    let config = trained(dir.path());
    for args in [&["recommend"][..], &["recommend", "--text", "  "][..]] {
        let out = moodrank(&config, args, None);
        assert_eq!(out.status.code(), Some(EXIT_USAGE));
    }
    let out = moodrank(&config, &["recommend", "--text", "x", "--k", "0"], None);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}

#[test]
fn repl_answers_each_line_and_survives_unknown_queries() {
    let dir = tempfile::tempdir().unwrap();
    let config = trained(dir.path());
    let out = ok(moodrank(
        &config,
        &["recommend", "--repl", "--k", "2"],
        Some("so angry i could scream\n\nnot in the store\ni feel calm and content tonight\n"),
    ));
    let text = stdout(&out);
    assert_eq!(text.matches("query\t").count(), 2);
    assert_eq!(text.lines().count(), 2 * (4 + 2));
    assert!(stderr(&out).contains("embedding not found"));
}

#[test]
fn eval_matches_the_final_training_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path());
    let train = stdout(&ok(moodrank(&config, &["train", "--seed", "3"], None)));
    let last: Vec<&str> = train.lines().last().unwrap().split('\t').collect();
    let eval = ok(moodrank(&config, &["eval", "--seed", "3"], None));
    assert_eq!(
        stdout(&eval),
        format!("seed\t3\nval_loss\t{}\nval_r2\t{}\n", last[2], last[3])
    );
    assert!(stderr(&eval).is_empty());

    let shifted = ok(moodrank(&config, &["eval", "--seed", "4"], None));
    assert!(stderr(&shifted).contains("differs"));
}

#[test]
fn stats_counts_a_small_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.csv");
    std::fs::write(
        &corpus,
        "id,text,V,A\n1,a,1.2,3.0\n2,b,3.0,3.0\n3,c,4.8,4.51\n4,d,2.0,1.5\n",
    )
    .unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"paths": {"corpus": "c.csv"}}"#).unwrap();
    let text = stdout(&ok(moodrank(&config, &["stats"], None)));
    assert!(text.starts_with("count\t4\n"));
    assert!(text.contains("\n1.00\t1.25\t1\t0\n"));
    assert!(text.contains("\n3.00\t3.25\t1\t2\n"));
    assert!(text.contains("\n4.50\t4.75\t0\t1\n"));
    assert!(text.contains("\n1.50\t1.75\t0\t1\n"));
    assert!(text.ends_with("extreme_valence\t2\nextreme_arousal\t1\n"));

    std::fs::write(&corpus, "id,text,V,A\n").unwrap();
    let out = moodrank(&config, &["stats"], None);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
}

#[test]
fn stats_over_the_song_db() {
    let dir = tempfile::tempdir().unwrap();
    let config = trained(dir.path());
    let text = stdout(&ok(moodrank(
        &config,
        &["stats", "--source", "songdb"],
        None,
    )));
    assert!(text.starts_with("count\t48\n"));
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path());
    let inputs = [
        "corpus.csv",
        "lyrics.csv",
        "plays.tsv",
        "embeddings.jsonl",
        "run.json",
    ];
    let before: Vec<Vec<u8>> = inputs
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    trained(dir.path());
    ok(moodrank(
        &config,
        &["recommend", "--text", "tired and a little sad"],
        None,
    ));
    let after: Vec<Vec<u8>> = inputs
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
}
