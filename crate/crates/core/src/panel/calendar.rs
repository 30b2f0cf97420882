//! Weekly calendar completion for store-UPC series.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::filters::series_index;
use super::units::PanelRow;

/// One cell of the completed weekly grid. Inserted cells carry no economic
/// data.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub store_code: String,
    pub upc_code: String,
    pub week_id: i64,
    pub observed: Option<PanelRow>,
}

impl GridRow {
    pub fn is_synthetic_row(&self) -> bool {
        self.observed.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarReport {
    pub observed_rows: usize,
    pub synthetic_rows: usize,
    pub rows_from_global_gaps: usize,
    pub rows_from_series_gaps: usize,
    pub globally_missing_weeks: Vec<i64>,
}

/// The completed grid: every store-UPC series spans its first to last observed
/// week without holes. Rows are sorted by (store, upc, week).
#[derive(Debug, Clone, PartialEq)]
pub struct CalendarPanel {
    pub rows: Vec<GridRow>,
    pub first_week: i64,
    pub last_week: i64,
    pub globally_missing_weeks: BTreeSet<i64>,
    pub report: CalendarReport,
}

impl CalendarPanel {
    pub fn observed_rows(&self) -> Vec<PanelRow> {
        self.rows.iter().filter_map(|r| r.observed.clone()).collect()
    }

    /// Completion is idempotent: re-completing the observed rows yields the
    /// same grid.
    pub fn complete(&self) -> CalendarPanel {
        complete_calendar(&self.observed_rows())
    }
}

pub fn complete_calendar(panel: &[PanelRow]) -> CalendarPanel {
    let observed_weeks: BTreeSet<i64> = panel.iter().map(|r| r.week_id).collect();
    let first_week = observed_weeks.iter().next().copied().unwrap_or(0);
    let last_week = observed_weeks.iter().next_back().copied().unwrap_or(-1);
    let globally_missing: BTreeSet<i64> = (first_week..=last_week)
        .filter(|w| !observed_weeks.contains(w))
        .collect();

    let mut report = CalendarReport {
        globally_missing_weeks: globally_missing.iter().copied().collect(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for ((store, upc), idxs) in series_index(panel) {
        let by_week: BTreeMap<i64, &PanelRow> = idxs.iter().map(|&i| (panel[i].week_id, &panel[i])).collect();
        let lo = *by_week.keys().next().unwrap();
        let hi = *by_week.keys().next_back().unwrap();
        for week in lo..=hi {
            let observed = by_week.get(&week).map(|r| (*r).clone());
            if observed.is_some() {
                report.observed_rows += 1;
            } else if globally_missing.contains(&week) {
                report.rows_from_global_gaps += 1;
            } else {
                report.rows_from_series_gaps += 1;
            }
            rows.push(GridRow {
                store_code: store.clone(),
                upc_code: upc.clone(),
                week_id: week,
                observed,
            });
        }
    }
    report.synthetic_rows = report.rows_from_global_gaps + report.rows_from_series_gaps;
    CalendarPanel {
        rows,
        first_week,
        last_week,
        globally_missing_weeks: globally_missing,
        report,
    }
}
