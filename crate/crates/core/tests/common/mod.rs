#![allow(dead_code)]

use std::path::{Path, PathBuf};

use csd_rla::cli::execute;

pub const SEED: &str = "12345678901234567890";

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub struct Run {
    pub code: i32,
    pub out: String,
    pub err: String,
}

pub fn cli(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["csd-rla"];
    argv.extend_from_slice(args);
    let result = execute(argv, &mut out, &mut err);
    Run {
        code: result.exit_code,
        out: String::from_utf8(out).expect("utf-8 stdout"),
        err: String::from_utf8(err).expect("utf-8 stderr"),
    }
}

/// Election fixture copied into a fresh directory, so state lands there.
pub struct Election {
    pub dir: tempfile::TempDir,
}

impl Election {
    pub fn new() -> Self {
        Self::with_config(|c| c.to_string())
    }

    pub fn with_config(edit: impl FnOnce(&str) -> String) -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        for name in ["cvrs.json", "manifest.csv"] {
            std::fs::copy(fixture(&format!("election/{name}")), dir.path().join(name))
                .expect("copy fixture");
        }
        let config = std::fs::read_to_string(fixture("election/config.toml")).expect("config");
        std::fs::write(dir.path().join("config.toml"), edit(&config)).expect("write config");
        Election { dir }
    }

    pub fn config(&self) -> String {
        self.dir.path().join("config.toml").display().to_string()
    }

    pub fn state(&self) -> PathBuf {
        self.dir.path().join("state")
    }

    pub fn run(&self, args: &[&str]) -> Run {
        let config = self.config();
        let mut all = vec!["--config", config.as_str()];
        all.extend_from_slice(args);
        cli(&all)
    }

    pub fn cvrs(&self) -> serde_json::Value {
        let text = std::fs::read_to_string(self.dir.path().join("cvrs.json")).expect("cvrs");
        serde_json::from_str(&text).expect("cvrs json")
    }

    /// Manual records agreeing with the CVRs for every card on a retrieval
    /// list, except `flip` cards in the tied contest which read `quinn`.
    pub fn mvrs_for(&self, retrieval_csv: &str, flip: usize) -> String {
        let cvrs = self.cvrs();
        let by_id: std::collections::BTreeMap<&str, &serde_json::Value> = cvrs
            .as_array()
            .expect("array")
            .iter()
            .map(|c| (c["id"].as_str().expect("id"), c))
            .collect();
        let mut flipped = 0;
        let mut records = Vec::new();
        for line in retrieval_csv.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields[0] != "retrieve" {
                continue;
            }
            let mut contests = by_id[fields[1]]["contests"].clone();
            if flipped < flip && contests["tied"]["pat"] == 1 {
                contests["tied"] = serde_json::json!({"quinn": 1});
                flipped += 1;
            }
            records.push(serde_json::json!({"id": fields[1], "contests": contests}));
        }
        serde_json::to_string_pretty(&records).expect("serialize")
    }
}

/// Outputs of the full command sequence on the election fixture, keyed by
/// golden file name.
pub fn run_flow(e: &Election) -> Vec<(&'static str, String)> {
    let state = e.state().display().to_string();
    let s = state.as_str();
    let ok = |r: Run, step: &str| {
        assert_eq!(r.code, 0, "{step} failed: {}", r.err);
        r.out
    };
    let mut outputs = Vec::new();
    ok(e.run(&["--state-dir", s, "init"]), "init");
    outputs.push(("check.txt", ok(e.run(&["check"]), "check")));
    outputs.push((
        "estimate.txt",
        ok(
            e.run(&[
                "--state-dir",
                s,
                "estimate",
                "--errors",
                "0.001",
                "--errors",
                "0.01",
            ]),
            "estimate",
        ),
    ));
    let sample = ok(
        e.run(&[
            "--state-dir",
            s,
            "--format",
            "csv",
            "sample",
            "--round",
            "1",
            "--seed",
            SEED,
        ]),
        "sample",
    );
    let mvrs = e.mvrs_for(&sample, 1);
    outputs.push(("sample-round-1.csv", sample));
    let mvr_path = e.dir.path().join("mvrs-round-1.json");
    std::fs::write(&mvr_path, mvrs).expect("write mvrs");
    ok(
        e.run(&[
            "--state-dir",
            s,
            "import-mvrs",
            &mvr_path.display().to_string(),
        ]),
        "import-mvrs",
    );
    outputs.push((
        "measure.txt",
        ok(e.run(&["--state-dir", s, "measure"]), "measure"),
    ));
    ok(e.run(&["--state-dir", s, "escalate", "tied"]), "escalate");
    outputs.push((
        "report.txt",
        ok(
            e.run(&["--state-dir", s, "report", "--threshold", "0.05"]),
            "report",
        ),
    ));
    outputs.push((
        "report.json",
        ok(
            e.run(&["--state-dir", s, "--format", "structured", "report"]),
            "report",
        ),
    ));
    outputs
}

/// Compare against `tests/fixtures/election/golden/<name>`; with
/// `UPDATE_GOLDEN=1` the file is rewritten instead.
pub fn golden_mismatches(outputs: &[(&str, String)]) -> Vec<String> {
    let dir = fixture("election/golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut bad = Vec::new();
    for (name, text) in outputs {
        let path = dir.join(name);
        if update {
            std::fs::create_dir_all(&dir).expect("golden dir");
            std::fs::write(&path, text).expect("write golden");
            continue;
        }
        match std::fs::read_to_string(&path) {
            Ok(expected) if &expected == text => {}
            Ok(_) => bad.push(format!("{name} differs from golden")),
            Err(e) => bad.push(format!("{name}: {e}")),
        }
    }
    bad
}
