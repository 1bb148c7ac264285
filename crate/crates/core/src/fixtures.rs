//! Published measurement tables bundled as CSV.

use crate::calibration::CalibrationSet;
use crate::dataset::TitrationDataset;
use crate::evaluation::ErrorTable;

/// Buffer calibration points for K⁺, Ca²⁺, NO₃⁻, NH₄⁺ (mol/L, V).
pub const TABLE1_CSV: &str = include_str!("../../../data/table1_calibration.csv");
/// Ten-step titration, theoretical vs measured (mmol/L).
pub const TABLE2_CSV: &str = include_str!("../../../data/table2_titration.csv");
/// Published per-step raw and corrected errors (%).
pub const TABLE4_CSV: &str = include_str!("../../../data/table4_errors.csv");

pub fn table1() -> CalibrationSet {
    CalibrationSet::from_csv(TABLE1_CSV.as_bytes()).expect("bundled calibration table parses")
}

pub fn table2() -> TitrationDataset {
    TitrationDataset::from_csv(TABLE2_CSV.as_bytes()).expect("bundled titration table parses")
}

pub fn table4() -> ErrorTable {
    ErrorTable::from_csv(TABLE4_CSV.as_bytes()).expect("bundled error table parses")
}
