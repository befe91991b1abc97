//! Appends result rows and aggregates them into per-cell mean and std.

use dang_lab::eval::{append_results, write_summary, ResultRow};

fn main() -> dang_lab::Result<()> {
    let dir = std::env::temp_dir().join("dang_results_example");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).map_err(|e| dang_lab::Error::io(&dir, e))?;
    let results = dir.join("results.csv");
    let rows: Vec<ResultRow> = [0.81, 0.79, 0.84]
        .iter()
        .enumerate()
        .map(|(seed, &acc)| ResultRow {
            dataset: "fixture".into(),
            scenario: "dang".into(),
            noise_rate: 0.3,
            method: "dagnn_full".into(),
            task: "node_classification".into(),
            seed: seed as u64,
            accuracy: Some(acc),
            roc_auc: None,
            sep_gap: None,
            sep_p_value: None,
        })
        .collect();
    append_results(&results, &rows)?;
    let cells = write_summary(&results, &dir.join("summary.json"))?;
    println!("{}", serde_json::to_string_pretty(&cells)?);
    Ok(())
}
