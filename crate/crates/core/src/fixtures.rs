//! Small reference tables used by tests, examples and the CLI demo.

use crate::table::{load_csv, CsvOptions, Table};

/// Eight flights over five already-binned columns. `NaN` marks a departure
/// time that does not apply because the flight was cancelled.
pub const FLIGHTS_EXAMPLE_CSV: &str = "\
CANCELLED,DEP._TIME,YEAR,SCHED._DEP.,DISTANCE
1,NaN,2015,afternoon,short
1,NaN,2015,afternoon,medium
1,NaN,2015,morning,medium
1,NaN,2015,morning,short
0,morning,2016,morning,medium
0,morning,2015,morning,medium
0,evening,2015,evening,long
0,evening,2015,afternoon,long
";

pub fn flights_example() -> Table {
    load_csv(FLIGHTS_EXAMPLE_CSV.as_bytes(), &CsvOptions::default()).expect("fixture parses")
}
