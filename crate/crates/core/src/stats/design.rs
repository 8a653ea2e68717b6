use std::collections::BTreeSet;

use crate::corpus::Region;
use crate::runner::ScenarioKind;

use super::{Observation, StatsError};

pub const INTERCEPT: &str = "Intercept";

/// Reference level of each factor; it gets no dummy column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct References {
    pub model: String,
    pub region: Region,
    pub scenario: ScenarioKind,
}

impl Default for References {
    fn default() -> Self {
        References { model: "Sonnet 3.5".into(), region: Region::AsiaPacific, scenario: ScenarioKind::StatementOnly }
    }
}

/// Non-reference levels of each factor, in column order.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Coding {
    models: Vec<String>,
    regions: Vec<Region>,
    scenarios: Vec<ScenarioKind>,
}

/// Treatment-coded design: intercept, then model, region and scenario
/// dummies, each factor's levels sorted by label. Rows are stored
/// contiguously (`x[i * p .. (i + 1) * p]`).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub columns: Vec<String>,
    pub references: References,
    coding: Coding,
}

impl DesignMatrix {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn df_model(&self) -> usize {
        self.n_cols() - 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.x[i * p..(i + 1) * p]
    }

    /// Design row for one observation; levels unseen when the design was
    /// built are rejected.
    pub fn encode(&self, o: &Observation) -> Result<Vec<f64>, StatsError> {
        let mut row = vec![0.0; self.n_cols()];
        row[0] = 1.0;
        let mut offset = 1;
        if o.model_id != self.references.model {
            let j = self.coding.models.iter().position(|m| *m == o.model_id);
            row[offset + j.ok_or_else(|| StatsError::UnseenLevel(format!("model {}", o.model_id)))?] = 1.0;
        }
        offset += self.coding.models.len();
        if o.region != self.references.region {
            let j = self.coding.regions.iter().position(|r| *r == o.region);
            row[offset + j.ok_or_else(|| StatsError::UnseenLevel(format!("region {}", o.region.label())))?] = 1.0;
        }
        offset += self.coding.regions.len();
        if o.scenario != self.references.scenario {
            let j = self.coding.scenarios.iter().position(|s| *s == o.scenario);
            row[offset + j.ok_or_else(|| StatsError::UnseenLevel(format!("scenario {}", o.scenario.label())))?] = 1.0;
        }
        Ok(row)
    }
}

fn levels<T>(values: impl Iterator<Item = T>, reference: &T, what: &str) -> Result<Vec<T>, StatsError>
where
    T: Clone + Ord + std::fmt::Debug,
{
    let seen: BTreeSet<T> = values.collect();
    if !seen.contains(reference) {
        return Err(StatsError::MissingReference(format!("{what} {reference:?}")));
    }
    Ok(seen.into_iter().filter(|v| v != reference).collect())
}

pub fn build_design(observations: &[Observation], refs: &References) -> Result<DesignMatrix, StatsError> {
    if observations.is_empty() {
        return Err(StatsError::Empty("no observations".into()));
    }
    let models = levels(observations.iter().map(|o| o.model_id.clone()), &refs.model, "model")?;
    let mut regions = levels(observations.iter().map(|o| o.region), &refs.region, "region")?;
    regions.sort_by_key(|r| r.label());
    let mut scenarios = levels(observations.iter().map(|o| o.scenario), &refs.scenario, "scenario")?;
    scenarios.sort_by_key(|s| s.label());

    let mut columns = vec![INTERCEPT.to_string()];
    columns.extend(models.iter().map(|m| format!("Model = {m}")));
    columns.extend(regions.iter().map(|r| format!("Region = {}", r.label())));
    columns.extend(scenarios.iter().map(|s| format!("Scenario = {}", s.label())));

    let mut d = DesignMatrix {
        x: Vec::with_capacity(observations.len() * columns.len()),
        y: observations.iter().map(|o| if o.correct { 1.0 } else { 0.0 }).collect(),
        columns,
        references: refs.clone(),
        coding: Coding { models, regions, scenarios },
    };
    for o in observations {
        let row = d.encode(o)?;
        d.x.extend(row);
    }
    Ok(d)
}

/// Checks full column rank by eliminating columns in order on the Gram
/// matrix; the first column that is (numerically) a combination of the
/// ones before it is named in the error.
pub fn check_full_rank(d: &DesignMatrix) -> Result<(), StatsError> {
    let p = d.n_cols();
    let mut g = vec![0.0; p * p];
    for i in 0..d.n_obs() {
        let r = d.row(i);
        for a in 0..p {
            if r[a] != 0.0 {
                for b in 0..p {
                    g[a * p + b] += r[a] * r[b];
                }
            }
        }
    }
    // Cholesky without pivoting: a vanishing pivot marks a dependent column.
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let mut diag = g[j * p + j];
        for k in 0..j {
            diag -= l[j * p + k] * l[j * p + k];
        }
        if diag <= 1e-9 * g[j * p + j].max(1.0) {
            return Err(StatsError::RankDeficient { column: d.columns[j].clone() });
        }
        let pivot = diag.sqrt();
        l[j * p + j] = pivot;
        for i in j + 1..p {
            let mut s = g[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / pivot;
        }
    }
    Ok(())
}
