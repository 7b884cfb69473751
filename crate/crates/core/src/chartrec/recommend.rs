use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::features::featurize;
use super::model::RecModel;
use super::oracle::ChartType;
use crate::datatable::{column_subsets, ColumnType, DataTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub field: String,
    #[serde(rename = "type")]
    pub kind: ColumnType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<String>,
}

/// Vega-Lite style chart description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub mark: ChartType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Encoding>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Encoding>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<Encoding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecEntry {
    /// Column names in table order.
    pub columns: Vec<String>,
    pub indices: Vec<usize>,
    pub chart: ChartType,
    /// Logit of the column-set scorer.
    pub set_score: f64,
    pub chart_probability: f64,
    /// `set_score + ln(chart_probability)`
    pub score: f64,
    pub spec: ChartSpec,
}

impl RecEntry {
    /// Same column set and chart type, regardless of column order.
    pub fn same_choice(&self, other: &RecEntry) -> bool {
        self.chart == other.chart && self.sorted_columns() == other.sorted_columns()
    }

    pub fn sorted_columns(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub table: String,
    pub entries: Vec<RecEntry>,
}

impl Recommendation {
    pub fn top(&self) -> &RecEntry {
        &self.entries[0]
    }
}

fn encoding(table: &DataTable, idx: usize, aggregate: Option<&str>) -> Encoding {
    let c = table.column_at(idx);
    Encoding {
        field: c.name().to_string(),
        kind: c.kind(),
        aggregate: aggregate.map(str::to_string),
    }
}

/// Assign columns to channels: nominal on x for bars, temporal on x for
/// lines and areas, extra nominal columns on color.
pub fn chart_spec(table: &DataTable, indices: &[usize], chart: ChartType) -> ChartSpec {
    let of = |kind: ColumnType| indices.iter().copied().filter(move |&i| table.column_at(i).kind() == kind);
    let quant: Vec<usize> = of(ColumnType::Quantitative).collect();
    let temporal: Vec<usize> = of(ColumnType::Temporal).collect();
    let nominal: Vec<usize> = of(ColumnType::Nominal).collect();
    let mut x = None;
    let mut y = None;
    let mut color = None;
    let mut rest: Vec<usize> = Vec::new();
    match chart {
        ChartType::Pie => {
            color = indices.first().map(|&i| encoding(table, i, None));
        }
        ChartType::Bar => {
            x = nominal.first().map(|&i| encoding(table, i, None));
            y = quant
                .first()
                .map(|&i| encoding(table, i, Some("mean")))
                .or_else(|| x.as_ref().map(|e| Encoding { aggregate: Some("count".into()), ..e.clone() }));
            rest.extend(nominal.iter().skip(1));
        }
        ChartType::Line | ChartType::Area => {
            x = temporal.first().or(nominal.first()).map(|&i| encoding(table, i, None));
            y = quant.first().map(|&i| encoding(table, i, None));
            rest.extend(nominal.iter().filter(|i| Some(**i) != temporal.first().or(nominal.first()).copied()));
            if x.is_none() {
                x = y.clone().map(|mut e| {
                    e.aggregate = None;
                    e
                });
                y = None;
            }
        }
        ChartType::Scatter => {
            x = quant.first().map(|&i| encoding(table, i, None));
            y = quant.get(1).map(|&i| encoding(table, i, None));
            rest.extend(nominal.iter().chain(temporal.iter()));
        }
    }
    if color.is_none() {
        color = rest.first().map(|&i| encoding(table, i, None));
    }
    ChartSpec {
        mark: chart,
        x,
        y,
        color,
    }
}

fn ranking(a: &RecEntry, b: &RecEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.sorted_columns().cmp(&b.sorted_columns()))
        .then_with(|| a.chart.index().cmp(&b.chart.index()))
}

/// Score every column subset of size one to three, best first.
///
/// Ties on score are broken by the sorted column names, then chart type,
/// so the ranking does not depend on column order.
pub fn score_all(model: &RecModel, table: &DataTable) -> Result<Vec<RecEntry>> {
    if !model.trained {
        return Err(Error::UntrainedModel);
    }
    if table.width() == 0 {
        return Err(Error::NotEnoughColumns);
    }
    let feats = featurize(table)?;
    let mut entries = Vec::new();
    for subset in column_subsets(table.width()) {
        let seq: Vec<_> = subset.iter().map(|&i| feats[i]).collect();
        let out = model.evaluate(&seq)?;
        let (chart, p) = out.top_chart();
        entries.push(RecEntry {
            columns: subset.iter().map(|&i| table.column_at(i).name().to_string()).collect(),
            spec: chart_spec(table, &subset, chart),
            indices: subset,
            chart,
            set_score: out.set_score,
            chart_probability: p,
            score: out.set_score + p.ln(),
        });
    }
    entries.sort_by(ranking);
    Ok(entries)
}

/// Best `top_k` entries.
pub fn recommend(model: &RecModel, table: &DataTable, top_k: usize) -> Result<Recommendation> {
    let mut entries = score_all(model, table)?;
    entries.truncate(top_k.max(1));
    Ok(Recommendation {
        table: table.name().to_string(),
        entries,
    })
}
