use std::path::PathBuf;
use std::time::Instant;

use geocheck_core::corpus::Region;
use geocheck_core::runner::ScenarioKind;
use geocheck_core::stats::{
    accuracy_table, build_design, check_full_rank, fit_logit, fit_logit_with, format_pvalue, null_loglik, read_cells,
    reconstruct_observations, relative_gap, wald_summary, AccuracyCell, FitOptions, References,
};
use geocheck_core::Execution;

fn cells() -> Vec<AccuracyCell> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/table1_cells.csv");
    read_cells(std::fs::File::open(path).unwrap()).unwrap()
}

// Published coefficient table: name, coefficient, standard error.
const TABLE2: [(&str, f64, f64); 10] = [
    ("Intercept", 1.6112, 0.120),
    ("Model = GPT-4o", -0.8293, 0.090),
    ("Model = LLaMA 3.3", 0.8592, 0.101),
    ("Region = Africa", -1.1540, 0.130),
    ("Region = Europe", 0.2250, 0.137),
    ("Region = Latin America", -0.4425, 0.131),
    ("Region = Middle East", -0.4748, 0.131),
    ("Region = North America", 0.7335, 0.146),
    ("Scenario = Agent-based", -1.2537, 0.081),
    ("Scenario = RAG-based", 3.3453, 0.225),
];

#[test]
fn reconstruction_has_expected_size() {
    let cells = cells();
    assert_eq!(cells.len(), 54);
    let obs = reconstruct_observations(&cells).unwrap();
    assert_eq!(obs.len(), 5400);
    // independent count straight from the cell file
    let ones: u64 = cells.iter().map(|c| c.n_correct).sum();
    assert_eq!(obs.iter().filter(|o| o.correct).count() as u64, ones);
    assert_eq!(ones, 4139);
}

#[test]
fn published_regression_is_reproduced() {
    let start = Instant::now();
    let d = build_design(&reconstruct_observations(&cells()).unwrap(), &References::default()).unwrap();
    check_full_rank(&d).unwrap();
    let fit = fit_logit(&d).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    let w = wald_summary(&fit);
    for (name, coef, se) in TABLE2 {
        let row = w.get(name).unwrap_or_else(|| panic!("{name}"));
        assert!((row.coef - coef).abs() <= 0.005, "{name}: {} vs {coef}", row.coef);
        assert!((row.se - se).abs() <= 0.005, "{name}: {} vs {se}", row.se);
    }
    let icpt = w.get("Intercept").unwrap();
    assert!((icpt.ci_low - 1.376).abs() <= 0.01 && (icpt.ci_high - 1.846).abs() <= 0.01);
    let eu = w.get("Region = Europe").unwrap();
    assert!((eu.ci_low + 0.044).abs() <= 0.01 && (eu.ci_high - 0.494).abs() <= 0.01);
    assert!((eu.z - 1.641).abs() < 0.01);
    assert_eq!(format_pvalue(eu.p), "0.101");
    assert!((fit.loglik + 2057.0).abs() <= 1.0);
    assert!((fit.loglik_null + 2934.9).abs() <= 0.5);
    assert!((fit.mcfadden_r2 - 0.2991).abs() <= 0.001);
    assert_eq!((fit.n_obs, fit.df_model, fit.df_resid), (5400, 9, 5390));
    assert_eq!(format_pvalue(fit.llr_pvalue), "0.000");
    assert!(fit.gradient_norm < 1e-6);
}

#[test]
fn null_loglik_from_counts() {
    let (n, k) = (5400.0f64, 4139.0f64);
    let p = k / n;
    let oracle = k * p.ln() + (n - k) * (1.0 - p).ln();
    let y: Vec<f64> = (0..5400).map(|i| if i < 4139 { 1.0 } else { 0.0 }).collect();
    assert!((null_loglik(&y).unwrap() - oracle).abs() < 1e-9);
    let doubled: Vec<f64> = y.iter().chain(&y).copied().collect();
    assert!((null_loglik(&doubled).unwrap() - 2.0 * oracle).abs() < 1e-8);
}

#[test]
fn parallel_fit_is_bitwise_identical() {
    let d = build_design(&reconstruct_observations(&cells()).unwrap(), &References::default()).unwrap();
    let seq = fit_logit(&d).unwrap();
    let par = fit_logit_with(&d, &FitOptions { exec: Execution::with_parallelism(4), ..FitOptions::default() }).unwrap();
    assert_eq!(seq, par);
}

/// Printed hemisphere and total rows (percent), columns in file order.
const PRINTED: [(&str, [f64; 9]); 3] = [
    ("north", [74.7, 92.0, 89.0, 42.3, 63.0, 88.3, 99.7, 99.0, 99.7]),
    ("south", [55.3, 77.7, 75.3, 23.3, 34.0, 72.0, 97.7, 98.3, 98.3]),
    ("total", [65.0, 84.8, 82.2, 32.8, 48.5, 80.2, 98.7, 98.7, 99.0]),
];

#[test]
fn aggregate_rows_match_print() {
    let t = accuracy_table(&cells()).unwrap();
    assert_eq!(t.columns.len(), 9);
    for (row, printed) in PRINTED {
        for (col, want) in t.columns.iter().zip(printed) {
            let got = 100.0
                * match row {
                    "north" => col.global_north.accuracy(),
                    "south" => col.global_south.accuracy(),
                    _ => col.total.accuracy(),
                };
            assert!((got - want).abs() <= 0.1 + 1e-9, "{row} {} {}: {got}", col.model_id, col.scenario);
        }
    }
    let gap = relative_gap(&t).unwrap();
    assert!((gap - 29.5).abs() <= 0.3, "{gap}");
    let gpt_agent = t.column("GPT-4o", ScenarioKind::AgentWiki).unwrap();
    assert_eq!(gpt_agent.regions[&Region::Africa].n_correct, 19);
    // 127/300 over 70/300
    assert!((100.0 * gpt_agent.relative_gap().unwrap() - 100.0 * (127.0 / 70.0 - 1.0)).abs() < 1e-9);
}
