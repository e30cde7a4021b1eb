//! Descriptive tables over a dataset: label frequencies and mean confidence
//! per (label, context) cell. Multi-label records count toward every label
//! they carry.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::labels::{ContextKind, RelationLabel};

/// Per-label token counts in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts(pub [usize; RelationLabel::COUNT]);

impl LabelCounts {
    pub fn get(&self, label: RelationLabel) -> usize {
        self.0[label.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Labels ordered by descending count, ties by canonical index.
    pub fn sorted_desc(&self) -> Vec<(RelationLabel, usize)> {
        let mut v: Vec<_> = RelationLabel::ALL.iter().map(|&l| (l, self.get(l))).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.index().cmp(&b.0.index())));
        v
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,name,count\n");
        for (l, c) in self.sorted_desc() {
            out.push_str(&format!("{},{},{}\n", l.token(), l.display_name(), c));
        }
        out
    }
}

pub fn label_frequencies(ds: &Dataset) -> LabelCounts {
    let mut counts = [0usize; RelationLabel::COUNT];
    for r in ds.records() {
        for l in &r.labels {
            counts[l.index()] += 1;
        }
    }
    LabelCounts(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub mean: f64,
    pub count: usize,
}

/// Mean confidence per (label, context); `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTable {
    pub cells: [[Option<CellStat>; ContextKind::COUNT]; RelationLabel::COUNT],
}

impl ConfidenceTable {
    pub fn cell(&self, label: RelationLabel, context: ContextKind) -> Option<CellStat> {
        self.cells[label.index()][context.index()]
    }

    /// Long-format CSV; absent cells are written with `NA` mean and zero count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,context,mean_confidence,count\n");
        for l in RelationLabel::ALL {
            for c in ContextKind::ALL {
                match self.cell(l, c) {
                    Some(s) => out.push_str(&format!(
                        "{},{},{:.6},{}\n",
                        l.token(),
                        c.token(),
                        s.mean,
                        s.count
                    )),
                    None => out.push_str(&format!("{},{},NA,0\n", l.token(), c.token())),
                }
            }
        }
        out
    }
}

pub fn confidence_table(ds: &Dataset) -> ConfidenceTable {
    let mut sums = [[0u64; ContextKind::COUNT]; RelationLabel::COUNT];
    let mut counts = [[0usize; ContextKind::COUNT]; RelationLabel::COUNT];
    for r in ds.records() {
        let c = r.context.index();
        for l in &r.labels {
            sums[l.index()][c] += r.confidence as u64;
            counts[l.index()][c] += 1;
        }
    }
    let mut cells = [[None; ContextKind::COUNT]; RelationLabel::COUNT];
    for l in 0..RelationLabel::COUNT {
        for c in 0..ContextKind::COUNT {
            if counts[l][c] > 0 {
                cells[l][c] = Some(CellStat {
                    mean: sums[l][c] as f64 / counts[l][c] as f64,
                    count: counts[l][c],
                });
            }
        }
    }
    ConfidenceTable { cells }
}
