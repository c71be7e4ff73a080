//! Synthetic inputs shared by the benchmarks under `benches/`.

use neutrotensor::protocol::original_stimulus_ids;
use neutrotensor::{Strategy, TrialKey, TrialRecord};

const LOSSES: [&str; 8] = [
    "Self-referential paradox resolution",
    "Empirical unknowability of the exact number of stars",
    "Definition of 'tall' depends on cultural context",
    "Competing moral frameworks",
    "Future weather cannot be observed yet",
    "Measurement precision of height",
    "Classical logic assumes bivalence",
    "Scope of the observable universe",
];

/// A realistic S4 completion: prose, a fenced block, and `n_losses` losses.
pub fn s4_response(seed: usize, n_losses: usize) -> String {
    let losses: Vec<String> = (0..n_losses)
        .map(|k| {
            format!(
                r#"    {{"what": "{}", "why": "The statement does not fix it (case {seed}).", "severity": 0.{}}}"#,
                LOSSES[(seed + k) % LOSSES.len()],
                3 + (seed + k) % 7
            )
        })
        .collect();
    format!(
        "Here is my evaluation.\n\n```json\n{{\n  \"T\": 0.{}, \"I\": 0.{}, \"F\": 0.1,\n  \"losses\": [\n{}\n  ]\n}}\n```\nLet me know if you need more.",
        seed % 10,
        5 + seed % 5,
        losses.join(",\n")
    )
}

/// Parsed S4 records for `models` models over the five original stimuli.
pub fn s4_records(models: usize, reps: u32) -> Vec<TrialRecord> {
    let mut out = Vec::new();
    for m in 0..models {
        for (s, stimulus) in original_stimulus_ids().into_iter().enumerate() {
            for rep in 1..=reps {
                let key = TrialKey {
                    model: format!("vendor/model-{m}"),
                    provider: "vendor".into(),
                    stimulus: stimulus.into(),
                    category: stimulus.into(),
                    strategy: Strategy::TensorLosses,
                    rep,
                };
                let seed = m * 31 + s * 7 + rep as usize;
                out.push(TrialRecord::from_raw(key, s4_response(seed, 2 + seed % 4)));
            }
        }
    }
    out
}
