//! Deterministic column-set → chart-type rules.
//!
//! The rules label the synthetic training corpus and decide whether a
//! recommendation is sound, so "the attack produced a wrong chart" is a
//! checkable predicate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::datatable::{Column, ColumnType};

/// Nominal columns with at most this many categories can drive bar colors/categories.
pub const BAR_MAX_CARDINALITY: usize = 12;
/// Nominal columns with at most this many categories can be a pie.
pub const PIE_MAX_CARDINALITY: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartType {
    Scatter,
    Line,
    Bar,
    Area,
    Pie,
}

impl ChartType {
    pub const ALL: [ChartType; 5] = [
        ChartType::Scatter,
        ChartType::Line,
        ChartType::Bar,
        ChartType::Area,
        ChartType::Pie,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> ChartType {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChartType::Scatter => "scatter",
            ChartType::Line => "line",
            ChartType::Bar => "bar",
            ChartType::Area => "area",
            ChartType::Pie => "pie",
        }
    }
}

impl fmt::Display for ChartType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub kind: ColumnType,
    pub cardinality: usize,
}

impl ColumnProfile {
    pub fn of(column: &Column) -> Self {
        Self {
            kind: column.kind(),
            cardinality: column.cardinality(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "verdict", content = "chart")]
pub enum Verdict {
    Chart(ChartType),
    Reject,
}

impl Verdict {
    pub fn chart(self) -> Option<ChartType> {
        match self {
            Verdict::Chart(c) => Some(c),
            Verdict::Reject => None,
        }
    }

    pub fn is_accepted(self) -> bool {
        matches!(self, Verdict::Chart(_))
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Chart(c) => c.as_str(),
            Verdict::Reject => "reject",
        }
    }
}

#[derive(Default)]
struct Counts {
    quant: usize,
    temporal: usize,
    nominal_bar: usize,
    nominal_pie: usize,
    other: usize,
}

fn count(subset: &[ColumnProfile]) -> Counts {
    let mut c = Counts::default();
    for p in subset {
        match p.kind {
            ColumnType::Quantitative => c.quant += 1,
            ColumnType::Temporal => c.temporal += 1,
            ColumnType::Nominal if p.cardinality <= PIE_MAX_CARDINALITY => {
                c.nominal_pie += 1;
                c.nominal_bar += 1;
            }
            ColumnType::Nominal if p.cardinality <= BAR_MAX_CARDINALITY => c.nominal_bar += 1,
            ColumnType::Nominal => c.other += 1,
        }
    }
    c
}

/// Order-independent rule table over subsets of one to three columns.
///
/// | columns                       | chart   |
/// |-------------------------------|---------|
/// | quantitative                  | area    |
/// | nominal (≤ 6 categories)      | pie     |
/// | temporal + quantitative       | line    |
/// | quantitative + quantitative   | scatter |
/// | nominal (≤ 12) + quantitative | bar     |
/// | temporal + quant + nominal≤12 | line    |
/// | quant + quant + nominal≤12    | scatter |
///
/// Everything else is rejected.
pub fn rule_oracle(subset: &[ColumnProfile]) -> Verdict {
    let c = count(subset);
    if c.other > 0 {
        return Verdict::Reject;
    }
    let chart = match (subset.len(), c.quant, c.temporal, c.nominal_bar) {
        (1, 1, 0, 0) => ChartType::Area,
        (1, 0, 0, 1) if c.nominal_pie == 1 => ChartType::Pie,
        (2, 1, 1, 0) => ChartType::Line,
        (2, 2, 0, 0) => ChartType::Scatter,
        (2, 1, 0, 1) => ChartType::Bar,
        (3, 1, 1, 1) => ChartType::Line,
        (3, 2, 0, 1) => ChartType::Scatter,
        _ => return Verdict::Reject,
    };
    Verdict::Chart(chart)
}

/// Training target for the column-set scorer: how desirable a subset is.
/// Pairs are preferred over single-column and three-column charts.
pub fn subset_utility(subset: &[ColumnProfile]) -> f64 {
    verdict_utility(rule_oracle(subset), subset.len())
}

/// [`subset_utility`] from an already computed verdict.
pub fn verdict_utility(verdict: Verdict, size: usize) -> f64 {
    match (verdict, size) {
        (Verdict::Reject, _) => 0.0,
        (_, 1) => 0.4,
        (_, 2) => 1.0,
        _ => 0.8,
    }
}
