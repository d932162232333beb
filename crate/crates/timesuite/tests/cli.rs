use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn timesuite(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_timesuite"));
    cmd.args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("TIMESUITE_")) {
        cmd.env_remove(k);
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("spawn timesuite")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn close(v: &Value, want: f64) -> bool {
    v.as_f64().is_some_and(|x| (x - want).abs() < 1e-12)
}

const GT: &str = r#"{"id":"q1","start":0,"end":10}
{"id":"q2","start":0,"end":10}
{"id":"q3","start":0,"end":10}
{"id":"q4","start":0,"end":10}
{"id":"q5","start":0,"end":10}
{"id":"q6","start":0,"end":10}
{"id":"q7","start":0,"end":10}
{"id":"q8","start":0,"end":10}
{"id":"q9","start":0,"end":10}
{"id":"q10","start":0,"end":10}
"#;

// IoUs against (0, 10): 1, 0.8, 0.6, 0.4, 0.2, unparsed, 1/3, 0.7, 0, 0.5.
const PRED: &str = r#"{"id":"q1","pred_start":0,"pred_end":10}
{"id":"q2","response_text":"It happens from 0 to 8 seconds."}
{"id":"q3","pred_start":0,"pred_end":6}
{"id":"q4","pred_start":0,"pred_end":4}
{"id":"q5","response_text":"2 to 4"}
{"id":"q6","response_text":"The query does not occur in this video."}
{"id":"q7","pred_start":5,"pred_end":15}
{"id":"q8","response_text":"start: 0, end: 7"}
{"id":"q9","pred_start":20,"pred_end":30}
{"id":"q10","pred_start":0,"pred_end":5}
"#;

#[test]
fn eval_grounding_known_fractions() {
    let dir = TempDir::new().unwrap();
    let (gt, pred, report) = (write(&dir, "gt.jsonl", GT), write(&dir, "pred.jsonl", PRED), dir.path().join("r.json"));
    let o = timesuite(&["--report", s(&report), "eval-grounding", "--pred", s(&pred), "--gt", s(&gt)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&report);
    assert!(close(&r["r1_03"], 0.7), "{r}");
    assert!(close(&r["r1_05"], 0.5), "{r}");
    assert!(close(&r["r1_07"], 0.3), "{r}");
    assert_eq!(r["n_items"], 10);
    assert_eq!(r["n_unparsed"], 1);
    assert!(stdout(&o).contains("R@1"), "{}", stdout(&o));
}

#[test]
fn eval_grounding_perfect_and_custom_thresholds() {
    let dir = TempDir::new().unwrap();
    let gt = write(&dir, "gt.jsonl", GT);
    let perfect: String = (1..=10)
        .map(|i| format!("{{\"id\":\"q{i}\",\"pred_start\":0,\"pred_end\":10}}\n"))
        .collect();
    let pred = write(&dir, "pred.jsonl", &perfect);
    let report = dir.path().join("r.json");
    let o = timesuite(
        &["--report", s(&report), "eval-grounding", "--pred", s(&pred), "--gt", s(&gt), "--thresholds", "0.5,0.9"],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&report);
    let recall = r["recall"].as_array().unwrap();
    assert_eq!(recall.len(), 2);
    assert!(recall.iter().all(|e| close(&e["r1"], 1.0)), "{r}");
}

#[test]
fn eval_grounding_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    let gt = write(&dir, "gt.jsonl", GT);
    let empty = write(&dir, "empty.jsonl", "");
    let o = timesuite(&["eval-grounding", "--pred", s(&empty), "--gt", s(&empty)], &[]);
    assert_eq!(o.status.code(), Some(1));

    let bad = write(&dir, "bad.jsonl", "{\"id\":\"q1\",\"pred_start\":0,\"pred_end\":1}\nnot json\n");
    let o = timesuite(&["eval-grounding", "--pred", s(&bad), "--gt", s(&gt)], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.jsonl:2:"), "{}", stderr(&o));

    let o = timesuite(&["eval-grounding", "--pred", s(&gt), "--gt", s(&gt), "--thresholds", "1.5"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_highlight_map_and_line_errors() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "hl.jsonl",
        "{\"id\":\"a\",\"clip_duration_s\":2,\"pred_scores\":[0.9,0.1],\"gt_saliency\":[4.0,1.0]}\n\
         {\"id\":\"b\",\"clip_duration_s\":2,\"pred_scores\":[0.1,0.9],\"gt_saliency\":[4.0,1.0]}\n",
    );
    let report = dir.path().join("r.json");
    let o = timesuite(&["--report", s(&report), "eval-highlight", "--input", s(&input)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&report);
    assert_eq!(r["map"], 0.75);
    assert_eq!(r["hit1"], 0.5);

    let all = write(
        &dir,
        "all.jsonl",
        "{\"id\":\"a\",\"clip_duration_s\":2,\"pred_scores\":[0.3,0.1,0.7],\"gt_saliency\":[4.0,5.0,4.5]}\n",
    );
    let o = timesuite(&["--report", s(&report), "eval-highlight", "--input", s(&all)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&report)["map"], 1.0);

    let bad = write(
        &dir,
        "bad.jsonl",
        "{\"id\":\"a\",\"clip_duration_s\":2,\"pred_scores\":[0.9],\"gt_saliency\":[4.0]}\n\
         {\"id\":\"b\",\"clip_duration_s\":2,\"pred_scores\":[0.9],\"gt_saliency\":[4.2]}\n",
    );
    let o = timesuite(&["eval-highlight", "--input", s(&bad)], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.jsonl:2:"), "{}", stderr(&o));
}

#[test]
fn tgc_build_counts_and_reruns() {
    let dir = TempDir::new().unwrap();
    let input = format!("{FIXTURES}/tgc_sources.jsonl");
    let mut corpora = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("c{run}.jsonl"));
        let report = dir.path().join(format!("r{run}.json"));
        let review = dir.path().join(format!("review{run}.txt"));
        let o = timesuite(
            &["--out", s(&out), "--report", s(&report), "tgc", "build", "--input", &input, "--review", s(&review)],
            &[],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let r = json(&report);
        let d = &r["stages"]["duration"];
        assert_eq!((d["kept"].as_u64(), d["too_short"].as_u64(), d["too_long"].as_u64()), (Some(15), Some(3), Some(2)));
        assert_eq!(r["stages"]["title"]["kept"], 15);
        assert_eq!(r["stages"]["similarity"]["rejected"], 2);
        assert_eq!(r["n_output"], 13);
        let dropped: Vec<u64> = r["rejections"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|x| x["stage"] == "similarity")
            .map(|x| x["source_line"].as_u64().unwrap())
            .collect();
        assert_eq!(dropped, vec![3, 9]);
        assert!(std::fs::read_to_string(&review).unwrap().contains("seed 0"));
        corpora.push((std::fs::read(&out).unwrap(), std::fs::read(&report).unwrap()));
    }
    assert_eq!(corpora[0], corpora[1]);
    assert_eq!(String::from_utf8_lossy(&corpora[0].0).lines().count(), 13);
}

#[test]
fn tgc_build_edge_cases() {
    let dir = TempDir::new().unwrap();
    let empty = write(&dir, "empty.jsonl", "");
    let out = dir.path().join("c.jsonl");
    let o = timesuite(&["--out", s(&out), "tgc", "build", "--input", s(&empty)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");

    let o = timesuite(&["tgc", "build", "--input", s(&empty)], &[]);
    assert_eq!(o.status.code(), Some(1));

    let bad = write(&dir, "bad.jsonl", "{\"video_id\":\"v\",\"start\":5,\"end\":1,\"caption\":\"x\",\"video_duration_s\":10}\n");
    let o = timesuite(&["--out", s(&out), "tgc", "build", "--input", s(&bad)], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.jsonl:1:"), "{}", stderr(&o));
}

#[test]
fn demo_token_counts() {
    let o = timesuite(&["demo"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("tokens to language model: 384 × C_l"), "{}", stdout(&o));

    let o = timesuite(&["demo", "--frames", "192"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("tokens to language model: 576 × C_l"), "{}", stdout(&o));

    let o = timesuite(&["--ablate", "no-tape", "demo"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("tokens to language model: 384 × C_l"), "{}", stdout(&o));
}

#[test]
fn config_validation_and_precedence() {
    let dir = TempDir::new().unwrap();
    let o = timesuite(&["demo"], &[("TIMESUITE_SHUFFLE_MERGE_LEN", "3")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("merge_len"), "{}", stderr(&o));

    let cfg = write(&dir, "cfg.toml", "seed = 3\n[shuffle]\nmerge_len = 3\n");
    let o = timesuite(&["--config", s(&cfg), "demo"], &[]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = write(&dir, "ok.toml", "seed = 3\n[eval]\nthresholds = [0.5]\n");
    let (gt, pred, report) = (write(&dir, "gt.jsonl", GT), write(&dir, "pred.jsonl", PRED), dir.path().join("r.json"));
    let args = ["--config", s(&cfg), "--report", s(&report), "eval-grounding", "--pred", s(&pred), "--gt", s(&gt)];
    let o = timesuite(&args, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&report)["config"]["seed"], 3);
    assert_eq!(json(&report)["recall"].as_array().unwrap().len(), 1);

    let o = timesuite(&args, &[("TIMESUITE_SEED", "5")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&report)["config"]["seed"], 5);

    let mut with_flag = vec!["--seed", "7"];
    with_flag.extend(args);
    let o = timesuite(&with_flag, &[("TIMESUITE_SEED", "5")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&report)["config"]["seed"], 7);

    let unknown = write(&dir, "unknown.toml", "[tape]\nbogus = 1\n");
    let o = timesuite(&["--config", s(&unknown), "demo"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(timesuite(&["frobnicate"], &[]).status.code(), Some(1));
    assert_eq!(timesuite(&["eval-grounding"], &[]).status.code(), Some(1));
    assert_eq!(timesuite(&["--ablate", "bogus", "check"], &[]).status.code(), Some(1));
    assert_eq!(timesuite(&["--help"], &[]).status.code(), Some(0));
}

#[test]
fn check_passes_with_stock_config() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("check.json");
    let o = timesuite(&["--threads", "2", "--report", s(&report), "check"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let r = json(&report);
    assert_eq!(r["failed"], 0);
    assert_eq!(r["checks"].as_array().unwrap().len(), 11);
}

#[test]
fn weights_round_trip_through_demo() {
    let dir = TempDir::new().unwrap();
    let (tape, shuffle) = (dir.path().join("tape.tsw"), dir.path().join("shuffle.tsw"));
    let o = timesuite(&["demo", "--save-tape", s(&tape), "--save-shuffle", s(&shuffle)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(&std::fs::read(&tape).unwrap()[..4], b"TSW1");
    assert_eq!(&std::fs::read(&shuffle).unwrap()[..4], b"TSW1");

    let a = timesuite(&["demo", "--load-tape", s(&tape)], &[]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&o));

    let o = timesuite(&["demo", "--load-tape", s(&shuffle)], &[]);
    assert_eq!(o.status.code(), Some(1));
    let o = timesuite(&["demo", "--frames", "192", "--load-tape", s(&tape)], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn demo_manifest_traces_each_video() {
    let dir = TempDir::new().unwrap();
    let manifest = write(
        &dir,
        "m.jsonl",
        "{\"video_id\":\"a\",\"total_frames\":900,\"duration_s\":30}\n{\"video_id\":\"b\",\"total_frames\":4000,\"duration_s\":133}\n",
    );
    let o = timesuite(&["demo", "--manifest", s(&manifest)], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("tokens to language model: 384 × C_l").count(), 2);
}
