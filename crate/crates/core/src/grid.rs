//! Rectangular cell grid with spreadsheet-style addressing.
//!
//! A [`Grid`] is the canonical ingestion form for every table the pipeline
//! touches: rows are padded to a uniform width at parse time and cells are
//! stored verbatim, so empty strings (merged-cell continuations, blank
//! corners) survive round-trips. [`CellAddress`] renders as A1 notation with
//! bijective base-26 column letters, which is also how cells are named in
//! model prompts and error messages.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("table has no rows")]
    EmptyInput,
    #[error("malformed cell reference `{0}`")]
    BadReference(String),
    #[error("row {row}, column {col} is outside a {rows}x{cols} grid")]
    OutOfBounds { row: usize, col: usize, rows: usize, cols: usize },
    #[error("CSV parse error: {0}")]
    Csv(String),
}

/// Zero-based (row, column) coordinate of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct CellAddress {
    pub row: usize,
    pub col: usize,
}

impl CellAddress {
    pub fn new(row: usize, col: usize) -> Self {
        CellAddress { row, col }
    }

    /// Renders as A1 notation: column letters in bijective base 26
    /// (A..Z, AA, AB, ..), then the 1-based row number.
    pub fn to_a1(self) -> String {
        let mut letters = Vec::new();
        let mut c = self.col + 1; // bijective base 26 works on 1-based values
        while c > 0 {
            let rem = (c - 1) % 26;
            letters.push(b'A' + rem as u8);
            c = (c - 1) / 26;
        }
        letters.reverse();
        format!("{}{}", String::from_utf8(letters).unwrap(), self.row + 1)
    }

    /// Parses A1 notation. Accepts lowercase letters; rejects anything that
    /// is not letters-then-digits.
    pub fn from_a1(s: &str) -> Result<Self, GridError> {
        let s = s.trim();
        let split = s.find(|ch: char| ch.is_ascii_digit());
        let (letters, digits) = match split {
            Some(i) if i > 0 => s.split_at(i),
            _ => return Err(GridError::BadReference(s.to_string())),
        };
        let mut col: usize = 0;
        for ch in letters.chars() {
            if !ch.is_ascii_alphabetic() {
                return Err(GridError::BadReference(s.to_string()));
            }
            let v = (ch.to_ascii_uppercase() as u8 - b'A') as usize + 1;
            col = col
                .checked_mul(26)
                .and_then(|c| c.checked_add(v))
                .ok_or_else(|| GridError::BadReference(s.to_string()))?;
        }
        let row: usize = digits
            .parse()
            .ok()
            .filter(|r| *r > 0)
            .ok_or_else(|| GridError::BadReference(s.to_string()))?;
        Ok(CellAddress::new(row - 1, col - 1))
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_a1())
    }
}

/// Immutable rectangular table. Row-major storage; every row has exactly
/// `cols` cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    cells: Vec<String>,
}

impl Grid {
    /// Builds a grid from raw rows, padding short rows with empty cells so the
    /// result is rectangular. Cell text is kept verbatim.
    pub fn parse(raw: Vec<Vec<String>>) -> Result<Self, GridError> {
        if raw.is_empty() {
            return Err(GridError::EmptyInput);
        }
        let cols = raw.iter().map(|r| r.len()).max().unwrap_or(0);
        let rows = raw.len();
        let mut cells = Vec::with_capacity(rows * cols);
        for mut row in raw {
            row.resize(cols, String::new());
            cells.extend(row);
        }
        Ok(Grid { rows, cols, cells })
    }

    /// Parses RFC 4180 CSV text (double-quote escaping, flexible row widths;
    /// short rows are padded like [`Grid::parse`]).
    pub fn from_csv(text: &str) -> Result<Self, GridError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut raw = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| GridError::Csv(e.to_string()))?;
            raw.push(record.iter().map(|s| s.to_string()).collect());
        }
        Grid::parse(raw)
    }

    /// Parses a JSON array of row arrays (the same shape
    /// [`Grid::compact_serialize`] emits). Non-string scalars are rendered
    /// with their JSON notation.
    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| GridError::Csv(e.to_string()))?;
        let rows = value.as_array().ok_or(GridError::EmptyInput)?;
        let mut raw = Vec::new();
        for row in rows {
            let cells = row.as_array().ok_or(GridError::EmptyInput)?;
            raw.push(
                cells
                    .iter()
                    .map(|c| match c {
                        serde_json::Value::String(s) => s.clone(),
                        serde_json::Value::Null => String::new(),
                        other => other.to_string(),
                    })
                    .collect(),
            );
        }
        Grid::parse(raw)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Total cell count (`rows * cols`).
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, addr: CellAddress) -> Option<&str> {
        if addr.row < self.rows && addr.col < self.cols {
            Some(&self.cells[addr.row * self.cols + addr.col])
        } else {
            None
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> Result<&str, GridError> {
        self.get(CellAddress::new(row, col)).ok_or(GridError::OutOfBounds {
            row,
            col,
            rows: self.rows,
            cols: self.cols,
        })
    }

    /// Iterates cells in row-major order with their addresses.
    pub fn iter(&self) -> impl Iterator<Item = (CellAddress, &str)> {
        self.cells.iter().enumerate().map(move |(i, c)| {
            (CellAddress::new(i / self.cols, i % self.cols), c.as_str())
        })
    }

    /// Compact, loss-free text form: a JSON array of row arrays with no
    /// insignificant whitespace. Empty cells stay as `""`, so distinct grids
    /// always serialize differently and the output parses back with
    /// [`Grid::from_json`]. This is the form token budgets are measured on
    /// and the form embedded in model prompts.
    pub fn compact_serialize(&self) -> String {
        let rows: Vec<Vec<&str>> = (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.cells[r * self.cols + c].as_str()).collect())
            .collect();
        serde_json::to_string(&rows).expect("grid serialization cannot fail")
    }

    /// Address-annotated listing (`A1: text`, one non-empty cell per line),
    /// used by prompts that need to name cells positionally.
    pub fn coordinate_view(&self) -> String {
        let mut out = String::new();
        for (addr, text) in self.iter() {
            if !text.is_empty() {
                out.push_str(&addr.to_a1());
                out.push_str(": ");
                out.push_str(text);
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent A1 column-letter oracle: enumerate letter strings in
    /// lexicographic-by-length order and index into the sequence.
    fn oracle_col_letters(mut index: usize) -> String {
        // index is 0-based: 0 -> "A", 25 -> "Z", 26 -> "AA", ...
        let mut out = String::new();
        loop {
            out.insert(0, (b'A' + (index % 26) as u8) as char);
            if index < 26 {
                break;
            }
            index = index / 26 - 1;
        }
        out
    }

    #[test]
    fn a1_rendering_matches_enumeration_oracle() {
        for col in 0..2000 {
            let expect = format!("{}1", oracle_col_letters(col));
            assert_eq!(CellAddress::new(0, col).to_a1(), expect, "col {col}");
        }
    }

    #[test]
    fn a1_known_points() {
        assert_eq!(CellAddress::new(0, 0).to_a1(), "A1");
        assert_eq!(CellAddress::new(6, 2).to_a1(), "C7");
        assert_eq!(CellAddress::new(0, 25).to_a1(), "Z1");
        assert_eq!(CellAddress::new(0, 26).to_a1(), "AA1");
        assert_eq!(CellAddress::new(0, 51).to_a1(), "AZ1");
        assert_eq!(CellAddress::new(0, 52).to_a1(), "BA1");
        assert_eq!(CellAddress::new(0, 701).to_a1(), "ZZ1");
        assert_eq!(CellAddress::new(0, 702).to_a1(), "AAA1");
    }

    #[test]
    fn a1_parse_rejects_garbage() {
        for bad in ["", "7", "A", "A0", "1A", "A-1", "A1B", "Ä1"] {
            assert!(CellAddress::from_a1(bad).is_err(), "{bad:?} should not parse");
        }
    }

    proptest! {
        #[test]
        fn a1_round_trips(row in 0usize..10_000, col in 0usize..10_000) {
            let addr = CellAddress::new(row, col);
            prop_assert_eq!(CellAddress::from_a1(&addr.to_a1()).unwrap(), addr);
        }

        #[test]
        fn compact_serialize_round_trips(
            raw in proptest::collection::vec(
                proptest::collection::vec("[ -~]{0,12}", 1..6), 1..6)
        ) {
            let grid = Grid::parse(raw).unwrap();
            let back = Grid::from_json(&grid.compact_serialize()).unwrap();
            prop_assert_eq!(back, grid);
        }
    }

    #[test]
    fn parse_pads_ragged_rows() {
        let g = Grid::parse(vec![
            vec!["a".into(), "b".into()],
            vec!["c".into()],
        ])
        .unwrap();
        assert_eq!((g.rows(), g.cols()), (2, 2));
        assert_eq!(g.cell(1, 1).unwrap(), "");
        assert_eq!(g.compact_serialize(), r#"[["a","b"],["c",""]]"#);
    }

    #[test]
    fn parse_rejects_empty() {
        assert!(matches!(Grid::parse(vec![]), Err(GridError::EmptyInput)));
    }

    #[test]
    fn csv_quoting_round_trip() {
        let g = Grid::from_csv("a,\"b,с\"\n\"say \"\"hi\"\"\",d\n").unwrap();
        assert_eq!(g.cell(0, 1).unwrap(), "b,с");
        assert_eq!(g.cell(1, 0).unwrap(), "say \"hi\"");
    }

    #[test]
    fn coordinate_view_skips_empty_cells() {
        let g = Grid::parse(vec![
            vec!["h".into(), "".into()],
            vec!["".into(), "v".into()],
        ])
        .unwrap();
        assert_eq!(g.coordinate_view(), "A1: h\nB2: v\n");
    }

    #[test]
    fn out_of_bounds_is_reported_with_shape() {
        let g = Grid::parse(vec![vec!["x".into()]]).unwrap();
        let err = g.cell(3, 0).unwrap_err();
        assert!(err.to_string().contains("1x1"), "{err}");
    }
}
