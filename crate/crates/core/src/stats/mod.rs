//! Accuracy tables, confusion matrices and the logistic disparity model.

mod design;
mod logit;
mod special;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use design::{build_design, check_full_rank, DesignMatrix, References, INTERCEPT};
pub use logit::{
    fit_logit, fit_logit_with, format_pvalue, loglik, null_loglik, score, wald_summary, FitOptions, LogisticFit,
    WaldRow, WaldSummary, Z_975,
};
pub use special::{chi2_sf, norm_sf};

use crate::corpus::{Hemisphere, Region, Verdict};
use crate::runner::{RunRecord, ScenarioKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no data: {0}")]
    Empty(String),
    #[error("no observations for {model} / {scenario} / {region}")]
    EmptyGroup { model: String, scenario: String, region: String },
    #[error("invalid accuracy cell: {0}")]
    InvalidCell(String),
    #[error("record {statement_id} has gold label 'unclear'")]
    UnclearGold { statement_id: String },
    #[error("reference level {0} does not occur in the data")]
    MissingReference(String),
    #[error("level not present when the design was built: {0}")]
    UnseenLevel(String),
    #[error("design matrix is rank deficient at column '{column}'")]
    RankDeficient { column: String },
    #[error("fit did not converge: (quasi-)complete separation at column '{column}'")]
    Separation { column: String },
    #[error("fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },
    #[error("Global South accuracy is zero for {model} / {scenario}")]
    ZeroAccuracy { model: String, scenario: String },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("cannot read or write table: {0}")]
    Table(String),
}

impl From<csv::Error> for StatsError {
    fn from(e: csv::Error) -> Self {
        StatsError::Table(e.to_string())
    }
}

/// Correct-answer count for one (model, scenario, region) group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyCell {
    #[serde(rename = "model")]
    pub model_id: String,
    pub scenario: ScenarioKind,
    pub region: Region,
    pub n: u64,
    pub n_correct: u64,
}

impl AccuracyCell {
    /// Cell from a published percentage; the implied count must be whole.
    pub fn from_percent(
        model_id: impl Into<String>,
        scenario: ScenarioKind,
        region: Region,
        n: u64,
        percent: f64,
    ) -> Result<Self, StatsError> {
        let implied = percent * n as f64 / 100.0;
        let rounded = implied.round();
        if !(0.0..=n as f64).contains(&rounded) || (implied - rounded).abs() > 1e-9 {
            return Err(StatsError::InvalidCell(format!("{percent} % of {n} is not a whole count")));
        }
        Ok(AccuracyCell { model_id: model_id.into(), scenario, region, n, n_correct: rounded as u64 })
    }

    pub fn accuracy(&self) -> f64 {
        self.n_correct as f64 / self.n as f64
    }

    fn check(&self) -> Result<(), StatsError> {
        if self.n_correct > self.n {
            return Err(StatsError::InvalidCell(format!(
                "{} / {} / {}: {} correct out of {}",
                self.model_id,
                self.scenario.key(),
                self.region.key(),
                self.n_correct,
                self.n
            )));
        }
        Ok(())
    }
}

/// Reads cells from delimited text with header `model,scenario,region,n,n_correct`.
pub fn read_cells(reader: impl Read) -> Result<Vec<AccuracyCell>, StatsError> {
    let mut cells = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let cell: AccuracyCell = row?;
        cell.check()?;
        cells.push(cell);
    }
    if cells.is_empty() {
        return Err(StatsError::Empty("no accuracy cells".into()));
    }
    Ok(cells)
}

pub fn write_cells(writer: impl Write, cells: &[AccuracyCell]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(writer);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| StatsError::Table(e.to_string()))
}

/// Groups records into cells, ordered by first appearance.
pub fn cells_from_records(records: &[RunRecord]) -> Vec<AccuracyCell> {
    let mut order: Vec<(String, ScenarioKind, Region)> = Vec::new();
    let mut counts: BTreeMap<(String, ScenarioKind, Region), (u64, u64)> = BTreeMap::new();
    for r in records {
        let key = (r.model_id.clone(), r.scenario, r.region);
        let e = counts.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0, 0)
        });
        e.0 += 1;
        e.1 += r.is_correct() as u64;
    }
    order
        .into_iter()
        .map(|k| {
            let (n, n_correct) = counts[&k];
            AccuracyCell { model_id: k.0, scenario: k.1, region: k.2, n, n_correct }
        })
        .collect()
}

/// Correct and total counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub n: u64,
    pub n_correct: u64,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        self.n_correct as f64 / self.n as f64
    }

    fn add(&mut self, n: u64, n_correct: u64) {
        self.n += n;
        self.n_correct += n_correct;
    }
}

/// One (model, scenario) column of the accuracy table.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyColumn {
    pub model_id: String,
    pub scenario: ScenarioKind,
    pub regions: BTreeMap<Region, Tally>,
    pub global_north: Tally,
    pub global_south: Tally,
    pub total: Tally,
}

impl AccuracyColumn {
    /// Global North over Global South accuracy, minus one.
    pub fn relative_gap(&self) -> Result<f64, StatsError> {
        let south = self.global_south.accuracy();
        if south == 0.0 {
            return Err(StatsError::ZeroAccuracy {
                model: self.model_id.clone(),
                scenario: self.scenario.label().into(),
            });
        }
        Ok(self.global_north.accuracy() / south - 1.0)
    }

    pub fn hemisphere(&self, h: Hemisphere) -> Tally {
        match h {
            Hemisphere::GlobalNorth => self.global_north,
            Hemisphere::GlobalSouth => self.global_south,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub columns: Vec<AccuracyColumn>,
}

/// Region, hemisphere and total accuracy per (model, scenario), with
/// aggregates weighted by observation count. Columns keep the order in
/// which they first appear in `cells`.
pub fn accuracy_table(cells: &[AccuracyCell]) -> Result<AccuracyTable, StatsError> {
    if cells.is_empty() {
        return Err(StatsError::Empty("no accuracy cells".into()));
    }
    let mut columns: Vec<AccuracyColumn> = Vec::new();
    for c in cells {
        c.check()?;
        let idx = match columns.iter().position(|col| col.model_id == c.model_id && col.scenario == c.scenario) {
            Some(i) => i,
            None => {
                columns.push(AccuracyColumn {
                    model_id: c.model_id.clone(),
                    scenario: c.scenario,
                    regions: BTreeMap::new(),
                    global_north: Tally::default(),
                    global_south: Tally::default(),
                    total: Tally::default(),
                });
                columns.len() - 1
            }
        };
        let col = &mut columns[idx];
        col.regions.entry(c.region).or_default().add(c.n, c.n_correct);
        match c.region.hemisphere() {
            Hemisphere::GlobalNorth => col.global_north.add(c.n, c.n_correct),
            Hemisphere::GlobalSouth => col.global_south.add(c.n, c.n_correct),
        }
        col.total.add(c.n, c.n_correct);
    }
    for col in &columns {
        for region in Region::ALL {
            if col.regions.get(&region).is_none_or(|t| t.n == 0) {
                return Err(StatsError::EmptyGroup {
                    model: col.model_id.clone(),
                    scenario: col.scenario.label().into(),
                    region: region.label().into(),
                });
            }
        }
    }
    Ok(AccuracyTable { columns })
}

impl AccuracyTable {
    pub fn column(&self, model_id: &str, scenario: ScenarioKind) -> Option<&AccuracyColumn> {
        self.columns.iter().find(|c| c.model_id == model_id && c.scenario == scenario)
    }

    /// Long-format rows: model, scenario, row label, n, n_correct, accuracy in percent.
    pub fn write_csv(&self, writer: impl Write) -> Result<(), StatsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "scenario", "row", "n", "n_correct", "accuracy_pct"])?;
        for col in &self.columns {
            let rows = col
                .regions
                .iter()
                .map(|(r, t)| (r.label(), *t))
                .chain([
                    (Hemisphere::GlobalNorth.label(), col.global_north),
                    (Hemisphere::GlobalSouth.label(), col.global_south),
                    ("Total", col.total),
                ]);
            for (label, t) in rows {
                w.write_record([
                    col.model_id.as_str(),
                    col.scenario.key(),
                    label,
                    &t.n.to_string(),
                    &t.n_correct.to_string(),
                    &format!("{:.1}", 100.0 * t.accuracy()),
                ])?;
            }
        }
        w.flush().map_err(|e| StatsError::Table(e.to_string()))
    }
}

impl fmt::Display for AccuracyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<15}", "Region")?;
        for c in &self.columns {
            write!(f, " {:>24}", format!("{} / {}", c.scenario.label(), c.model_id))?;
        }
        writeln!(f)?;
        let row = |f: &mut fmt::Formatter<'_>, label: &str, get: &dyn Fn(&AccuracyColumn) -> Tally| {
            write!(f, "{label:<15}")?;
            for c in &self.columns {
                write!(f, " {:>23.1}%", 100.0 * get(c).accuracy())?;
            }
            writeln!(f)
        };
        for region in Region::ALL {
            row(f, region.label(), &|c| c.regions[&region])?;
        }
        row(f, Hemisphere::GlobalNorth.label(), &|c| c.global_north)?;
        row(f, Hemisphere::GlobalSouth.label(), &|c| c.global_south)?;
        row(f, "Total", &|c| c.total)
    }
}

/// Mean relative Global North advantage over all (model, scenario) pairs, in percent.
pub fn relative_gap(table: &AccuracyTable) -> Result<f64, StatsError> {
    if table.columns.is_empty() {
        return Err(StatsError::Empty("accuracy table has no columns".into()));
    }
    let mut sum = 0.0;
    for col in &table.columns {
        sum += col.relative_gap()?;
    }
    Ok(100.0 * sum / table.columns.len() as f64)
}

const PREDICTED: [Verdict; 3] = [Verdict::True, Verdict::False, Verdict::Unclear];

/// Actual (rows: true, false) against predicted (columns: true, false, unclear).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub model_id: String,
    pub scenario: ScenarioKind,
    pub counts: [[u64; 3]; 2],
}

impl ConfusionMatrix {
    pub fn totals(&self) -> [u64; 3] {
        std::array::from_fn(|j| self.counts[0][j] + self.counts[1][j])
    }

    pub fn row_sum(&self, actual: usize) -> u64 {
        self.counts[actual].iter().sum()
    }

    pub fn n_correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }
}

/// One matrix per (model, scenario), in order of first appearance.
pub fn confusion_matrices(records: &[RunRecord]) -> Result<Vec<ConfusionMatrix>, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty("no run records".into()));
    }
    let mut out: Vec<ConfusionMatrix> = Vec::new();
    for r in records {
        let row = match r.gold {
            Verdict::True => 0,
            Verdict::False => 1,
            Verdict::Unclear => return Err(StatsError::UnclearGold { statement_id: r.statement_id.clone() }),
        };
        let col = PREDICTED.iter().position(|v| *v == r.predicted).expect("three verdicts");
        let idx = match out.iter().position(|m| m.model_id == r.model_id && m.scenario == r.scenario) {
            Some(i) => i,
            None => {
                out.push(ConfusionMatrix { model_id: r.model_id.clone(), scenario: r.scenario, counts: [[0; 3]; 2] });
                out.len() - 1
            }
        };
        out[idx].counts[row][col] += 1;
    }
    Ok(out)
}

/// Long-format rows: model, scenario, actual, predicted_true, predicted_false, predicted_unclear.
pub fn write_confusion_csv(writer: impl Write, matrices: &[ConfusionMatrix]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "scenario", "actual", "predicted_true", "predicted_false", "predicted_unclear"])?;
    for m in matrices {
        let totals = m.totals();
        for (label, row) in [("true", m.counts[0]), ("false", m.counts[1]), ("total", totals)] {
            let mut rec = vec![m.model_id.clone(), m.scenario.key().to_string(), label.to_string()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| StatsError::Table(e.to_string()))
}

/// One binary outcome; unclear predictions count as incorrect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub correct: bool,
    pub model_id: String,
    pub region: Region,
    pub scenario: ScenarioKind,
}

pub fn observations_from_records(records: &[RunRecord]) -> Vec<Observation> {
    records
        .iter()
        .map(|r| Observation {
            correct: r.is_correct(),
            model_id: r.model_id.clone(),
            region: r.region,
            scenario: r.scenario,
        })
        .collect()
}

/// Expands counts into observations: per cell, in cell order, `n_correct`
/// ones followed by `n − n_correct` zeros.
pub fn reconstruct_observations(cells: &[AccuracyCell]) -> Result<Vec<Observation>, StatsError> {
    let mut out = Vec::with_capacity(cells.iter().map(|c| c.n as usize).sum());
    for c in cells {
        c.check()?;
        for i in 0..c.n {
            out.push(Observation {
                correct: i < c.n_correct,
                model_id: c.model_id.clone(),
                region: c.region,
                scenario: c.scenario,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(model: &str, scenario: ScenarioKind, region: Region, n_correct: u64) -> AccuracyCell {
        AccuracyCell { model_id: model.into(), scenario, region, n: 100, n_correct }
    }

    fn column(model: &str, scenario: ScenarioKind, correct: [u64; 6]) -> Vec<AccuracyCell> {
        Region::ALL.iter().zip(correct).map(|(r, c)| cell(model, scenario, *r, c)).collect()
    }

    #[test]
    fn percent_cells_must_be_whole() {
        let c = AccuracyCell::from_percent("GPT-4o", ScenarioKind::StatementOnly, Region::Africa, 100, 43.0).unwrap();
        assert_eq!(c.n_correct, 43);
        assert!(AccuracyCell::from_percent("m", ScenarioKind::StatementOnly, Region::Africa, 100, 43.5).is_err());
        assert!(AccuracyCell::from_percent("m", ScenarioKind::StatementOnly, Region::Africa, 100, 101.0).is_err());
    }

    #[test]
    fn hemisphere_aggregates() {
        let cells = column("GPT-4o", ScenarioKind::StatementOnly, [43, 73, 76, 60, 63, 75]);
        let t = accuracy_table(&cells).unwrap();
        let c = t.column("GPT-4o", ScenarioKind::StatementOnly).unwrap();
        assert_eq!(c.regions[&Region::Africa].accuracy(), 0.43);
        assert_eq!(c.global_south, Tally { n: 300, n_correct: 166 });
        assert_eq!(c.total, Tally { n: 600, n_correct: 390 });
    }

    #[test]
    fn missing_region_is_an_error() {
        let mut cells = column("m", ScenarioKind::RagGold, [1, 2, 3, 4, 5, 6]);
        cells.pop();
        assert!(matches!(accuracy_table(&cells), Err(StatsError::EmptyGroup { .. })));
        assert!(matches!(accuracy_table(&[]), Err(StatsError::Empty(_))));
    }

    #[test]
    fn identical_hemispheres_have_no_gap() {
        let t = accuracy_table(&column("m", ScenarioKind::RagGold, [50; 6])).unwrap();
        assert_eq!(relative_gap(&t).unwrap(), 0.0);
        let zero = accuracy_table(&column("m", ScenarioKind::RagGold, [0, 10, 10, 0, 0, 10])).unwrap();
        assert!(matches!(relative_gap(&zero), Err(StatsError::ZeroAccuracy { .. })));
    }

    #[test]
    fn reconstruction_orders_ones_first() {
        let obs = reconstruct_observations(&[cell("m", ScenarioKind::AgentWiki, Region::Africa, 43)]).unwrap();
        assert_eq!(obs.len(), 100);
        assert!(obs[..43].iter().all(|o| o.correct));
        assert!(obs[43..].iter().all(|o| !o.correct));
        let full = reconstruct_observations(&[cell("m", ScenarioKind::AgentWiki, Region::Africa, 100)]).unwrap();
        assert!(full.iter().all(|o| o.correct));
        let bad = AccuracyCell { n_correct: 101, ..cell("m", ScenarioKind::AgentWiki, Region::Africa, 0) };
        assert!(reconstruct_observations(&[bad]).is_err());
    }

    #[test]
    fn cells_round_trip_through_csv() {
        let cells = column("Sonnet 3.5", ScenarioKind::RagGold, [98, 99, 98, 98, 99, 100]);
        let mut buf = Vec::new();
        write_cells(&mut buf, &cells).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("model,scenario,region,n,n_correct\nSonnet 3.5,rag,africa,100,98\n"));
        assert_eq!(read_cells(buf.as_slice()).unwrap(), cells);
        assert!(read_cells("model,scenario,region,n,n_correct\n".as_bytes()).is_err());
    }
}
