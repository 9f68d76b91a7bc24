use std::fmt;

use crate::frag_codec::{FragmentPolicy, FrameModel};

/// `(fragments, UDP payload bytes)` pairs of the reference payload table.
pub const TABLE1: [(usize, usize); 14] = [
    (1, 16),
    (2, 80),
    (3, 176),
    (4, 272),
    (5, 368),
    (6, 464),
    (7, 560),
    (8, 656),
    (9, 752),
    (10, 848),
    (11, 944),
    (12, 1040),
    (13, 1136),
    (14, 1232),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table1Row {
    pub payload: usize,
    pub expected: usize,
    /// `None` when the payload cannot be fragmented under the model.
    pub fill_first: Option<usize>,
    pub minimal_first: Option<usize>,
}

impl Table1Row {
    pub fn ok(&self) -> bool {
        self.fill_first == Some(self.expected) && self.minimal_first == Some(self.expected)
    }
}

impl fmt::Display for Table1Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |c: Option<usize>| c.map_or("error".to_string(), |c| c.to_string());
        write!(
            f,
            "{:>5} B  expected {:>2}  fill_first {:>5}  minimal_first {:>5}  {}",
            self.payload,
            self.expected,
            show(self.fill_first),
            show(self.minimal_first),
            if self.ok() { "ok" } else { "MISMATCH" }
        )
    }
}

/// Frame counts of every reference payload under both fragmentation policies.
pub fn table1_check(model: &FrameModel) -> Vec<Table1Row> {
    TABLE1
        .iter()
        .map(|&(expected, payload)| Table1Row {
            payload,
            expected,
            fill_first: model.frame_count(payload, FragmentPolicy::FillFirst).ok(),
            minimal_first: model.frame_count(payload, FragmentPolicy::MinimalFirst).ok(),
        })
        .collect()
}
