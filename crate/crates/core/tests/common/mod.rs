#![allow(dead_code)]

use std::path::PathBuf;

use neutrotensor::protocol::stimulus_registry;
use neutrotensor::{build_prompt, Strategy};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn render_golden(strategy: Strategy, statement: &str) -> String {
    let p = build_prompt(strategy, statement).expect("registry statements are non-empty");
    format!("--- system ---\n{}\n--- user ---\n{}\n", p.system, p.user)
}

/// Compares every (strategy, stimulus) prompt with its golden file and
/// returns the mismatching file names. With `UPDATE_GOLDEN=1` the files are
/// rewritten instead.
pub fn check_goldens() -> Vec<String> {
    let bless = std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1");
    let dir = golden_dir();
    let mut bad = Vec::new();
    for strategy in Strategy::ALL {
        for s in stimulus_registry() {
            let name = format!("{}_{}.txt", strategy.code(), s.id);
            let path = dir.join(&name);
            let rendered = render_golden(strategy, &s.statement);
            if bless {
                std::fs::write(&path, &rendered).expect("write golden");
                continue;
            }
            match std::fs::read(&path) {
                Ok(bytes) if bytes == rendered.as_bytes() => {}
                _ => bad.push(name),
            }
        }
    }
    bad
}

pub mod grid {
    use std::path::Path;

    use neutrotensor::gateway::{mock_endpoint, Gateway, ModelSpec, MockFixture, RunArchive, RunConfig};
    use neutrotensor::report::{analyze, save_archive_csv, AnalysisOptions, Dataset};
    use neutrotensor::{FailureKind, ParseOutcome, Strategy, TrialRecord};

    pub const MODELS: [&str; 2] = ["mock/alpha", "mock/beta"];
    pub const STIMULI: [&str; 2] = ["paradox", "ignorance"];

    /// The one fixture served cut off mid-object.
    pub const TRUNCATED: (&str, &str, Strategy, u32) = ("mock/beta", "ignorance", Strategy::TensorLosses, 2);

    fn s1_reply(m: usize, s: usize, rep: u32) -> String {
        let t = 0.1 * (m + 1) as f64;
        let i = 0.2 * (s + 1) as f64 + 0.05 * rep as f64;
        format!(r#"Here you go: {{"T": {t:.2}, "I": {i:.2}, "F": 0.40}}"#)
    }

    fn s4_reply(m: usize, s: usize, rep: u32) -> String {
        format!(
            r#"```json
{{"T": 0.1{m}, "I": 0.8{s}, "F": 0.1{rep}, "losses": [
  {{"what": "self reference in {stim}", "why": "the statement loops", "severity": 0.{sev}}},
  {{"what": "missing context", "why": "no ground truth for rep {rep}", "severity": 0.3}}
]}}
```"#,
            stim = STIMULI[s],
            sev = 5 + m + s,
        )
    }

    pub fn fixtures() -> Vec<MockFixture> {
        let mut out = Vec::new();
        for (m, model) in MODELS.iter().enumerate() {
            for (s, stimulus) in STIMULI.iter().enumerate() {
                for rep in 1..=2 {
                    out.push(MockFixture::ok(model, stimulus, Strategy::Neutrosophic, rep, s1_reply(m, s, rep)));
                    let mut s4 = s4_reply(m, s, rep);
                    if (*model, *stimulus, Strategy::TensorLosses, rep) == TRUNCATED {
                        s4.truncate(s4.find("\"why\"").expect("fixture has a why"));
                    }
                    out.push(MockFixture::ok(model, stimulus, Strategy::TensorLosses, rep, s4));
                }
            }
        }
        out
    }

    pub fn config(base_url: String) -> RunConfig {
        let models = MODELS
            .iter()
            .map(|slug| ModelSpec::new(*slug, *slug, "mock"))
            .collect();
        let mut c = RunConfig::new(
            base_url,
            models,
            STIMULI.iter().map(|s| s.to_string()).collect(),
            vec![Strategy::Neutrosophic, Strategy::TensorLosses],
        );
        c.repetitions = 2;
        c.retry_limit = 1;
        c.retry_base_delay_ms = 10;
        c.timeout_secs = 5;
        c
    }

    /// Everything the grid run produced, for comparison across runs.
    pub struct GridRun {
        pub archive: RunArchive,
        pub reloaded: RunArchive,
        pub records: Vec<TrialRecord>,
        pub csv: Vec<u8>,
        pub report_summary: String,
    }

    pub async fn run_grid(dir: &Path) -> Result<(GridRun, GridRun), String> {
        let server = mock_endpoint(fixtures(), 0).await.map_err(|e| e.to_string())?;
        let gateway = Gateway::new(config(server.base_url()), "test-key").map_err(|e| e.to_string())?;
        let mut runs = Vec::new();
        for name in ["first", "second"] {
            server.reset();
            let path = dir.join(format!("{name}.ndjson"));
            let archive = gateway.run_experiment(&path).await.map_err(|e| e.to_string())?;
            let reloaded = RunArchive::load(&path).map_err(|e| e.to_string())?;
            let records = reloaded.to_records();
            let csv_path = dir.join(format!("{name}.csv"));
            save_archive_csv(&csv_path, &records).map_err(|e| e.to_string())?;
            let csv = std::fs::read(&csv_path).map_err(|e| e.to_string())?;
            let replayed = neutrotensor::report::read_archive_csv(&csv_path).map_err(|e| e.to_string())?;
            if replayed != records {
                return Err(format!("{name}: CSV replay differs from parsed transcripts"));
            }
            let options = AnalysisOptions {
                permutations: 200,
                ..AnalysisOptions::default()
            };
            let report = analyze(&Dataset::from_records(replayed), &options);
            runs.push(GridRun {
                archive,
                reloaded,
                records,
                csv,
                report_summary: report.summary(),
            });
        }
        server.shutdown().await;
        let second = runs.pop().expect("two runs");
        let first = runs.pop().expect("two runs");
        Ok((first, second))
    }

    /// Checks one completed grid run; returns a description of the first
    /// problem found.
    pub fn check_run(run: &GridRun) -> Result<(), String> {
        let t = &run.archive.transcripts;
        if t.len() != 16 {
            return Err(format!("expected 16 transcripts, got {}", t.len()));
        }
        if let Some(bad) = t.iter().find(|t| !t.status.is_ok()) {
            return Err(format!("transport failure {:?}", bad.status));
        }
        let stripped = |a: &RunArchive| a.transcripts.iter().map(|t| t.without_timestamps()).collect::<Vec<_>>();
        if stripped(&run.archive) != stripped(&run.reloaded) || run.archive.config != run.reloaded.config {
            return Err("NDJSON reload differs from the in-memory archive".into());
        }
        if !run.reloaded.missing_cells().is_empty() {
            return Err(format!("missing cells {:?}", run.reloaded.missing_cells()));
        }
        for r in &run.records {
            let key = (r.model.as_str(), r.stimulus.as_str(), r.strategy, r.rep);
            let truncated = key == TRUNCATED;
            match (&r.outcome, truncated) {
                (ParseOutcome::Failure { failure: FailureKind::Truncated, .. }, true) => {}
                (_, true) => return Err(format!("{key:?} should be truncated, got {:?}", r.outcome)),
                (o, false) if !o.is_valid() => return Err(format!("{key:?} failed to parse: {o:?}")),
                (ParseOutcome::ValidTensor { tensor }, false) if tensor.losses.len() != 2 => {
                    return Err(format!("{key:?} lost declarations"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Both runs must agree byte for byte once timestamps are dropped.
    pub fn check_deterministic(a: &GridRun, b: &GridRun) -> Result<(), String> {
        let strip = |r: &GridRun| r.archive.transcripts.iter().map(|t| t.without_timestamps()).collect::<Vec<_>>();
        if strip(a) != strip(b) {
            return Err("transcripts differ between runs".into());
        }
        if a.csv != b.csv {
            return Err("archive CSV differs between runs".into());
        }
        if a.report_summary != b.report_summary {
            return Err("replayed report differs between runs".into());
        }
        Ok(())
    }
}
