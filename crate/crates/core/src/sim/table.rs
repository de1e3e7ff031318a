use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

/// Measurement kind of a dataset column, the `<kind>` in `<kind>_<id>[unit]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorKind {
    MassFlow,
    Pressure,
    Temperature,
    Ambient,
    Demand,
    /// Physics-derived pressure drop over a pipe or valve.
    PressureDrop,
    /// Physics-derived temperature drop over a pipe.
    TemperatureDrop,
}

impl SensorKind {
    pub const ALL: [SensorKind; 7] = [
        SensorKind::MassFlow,
        SensorKind::Pressure,
        SensorKind::Temperature,
        SensorKind::Ambient,
        SensorKind::Demand,
        SensorKind::PressureDrop,
        SensorKind::TemperatureDrop,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            SensorKind::MassFlow => "mdot",
            SensorKind::Pressure => "p",
            SensorKind::Temperature => "t",
            SensorKind::Ambient => "amb",
            SensorKind::Demand => "demand",
            SensorKind::PressureDrop => "dp",
            SensorKind::TemperatureDrop => "dt",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SensorKind::MassFlow => "kg/s",
            SensorKind::Pressure | SensorKind::PressureDrop => "Pa",
            SensorKind::Temperature | SensorKind::Ambient => "degC",
            SensorKind::Demand => "kW",
            SensorKind::TemperatureDrop => "K",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.prefix() == prefix)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMeta {
    pub kind: SensorKind,
    /// Junction, edge or consumer id.
    pub component: String,
    pub unit: String,
}

impl ColumnMeta {
    pub fn new(kind: SensorKind, component: impl Into<String>) -> Self {
        Self {
            kind,
            component: component.into(),
            unit: kind.unit().to_string(),
        }
    }

    /// `<kind>_<id>`
    pub fn name(&self) -> String {
        format!("{}_{}", self.kind.prefix(), self.component)
    }

    pub fn header(&self) -> String {
        format!("{}[{}]", self.name(), self.unit)
    }

    fn parse_header(field: &str) -> Result<Self, String> {
        let (name, unit) = match field.find('[') {
            Some(open) if field.ends_with(']') => (&field[..open], &field[open + 1..field.len() - 1]),
            _ => return Err(format!("column `{field}` lacks a `[unit]` suffix")),
        };
        let (prefix, component) = name
            .split_once('_')
            .ok_or_else(|| format!("column `{field}` is not of the form <kind>_<id>[unit]"))?;
        let kind = SensorKind::from_prefix(prefix).ok_or_else(|| format!("unknown column kind `{prefix}`"))?;
        if component.is_empty() {
            return Err(format!("column `{field}` has an empty component id"));
        }
        Ok(Self {
            kind,
            component: component.to_string(),
            unit: unit.to_string(),
        })
    }
}

/// Hour-indexed measurement table, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTable {
    pub time: Vec<u64>,
    columns: Vec<ColumnMeta>,
    data: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
}

impl SensorTable {
    pub fn new(time: Vec<u64>) -> Self {
        Self {
            time,
            columns: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.time.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn push_column(&mut self, meta: ColumnMeta, values: Vec<f64>) -> Result<(), TableError> {
        if values.len() != self.n_rows() {
            return Err(TableError::Schema(format!(
                "column {} has {} rows, table has {}",
                meta.name(),
                values.len(),
                self.n_rows()
            )));
        }
        if self.column_index(&meta.name()).is_some() {
            return Err(TableError::Schema(format!("duplicate column {}", meta.name())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TableError::Schema(format!("column {} has a non-finite value at row {i}", meta.name())));
        }
        self.columns.push(meta);
        self.data.push(values);
        Ok(())
    }

    /// Index of the column named `<kind>_<id>`.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|i| self.data[i].as_slice())
    }

    pub fn column_at(&self, index: usize) -> &[f64] {
        &self.data[index]
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(ColumnMeta::name).collect()
    }

    /// Indices of every column of `kind`, in table order.
    pub fn indices_of(&self, kind: SensorKind) -> Vec<usize> {
        (0..self.columns.len()).filter(|&i| self.columns[i].kind == kind).collect()
    }

    /// Rows `range` of every column.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> SensorTable {
        SensorTable {
            time: self.time[range.clone()].to_vec(),
            columns: self.columns.clone(),
            data: self.data.iter().map(|c| c[range.clone()].to_vec()).collect(),
        }
    }

    /// Errors unless every name in `required` is present.
    pub fn require(&self, required: &[String]) -> Result<(), TableError> {
        let missing: Vec<&str> = required
            .iter()
            .filter(|n| self.column_index(n).is_none())
            .map(String::as_str)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(TableError::Schema(format!("missing declared columns: {}", missing.join(", "))))
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("time");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.header());
        }
        out.push('\n');
        for (r, t) in self.time.iter().enumerate() {
            write!(out, "{t}").unwrap();
            for col in &self.data {
                // Display on f64 prints the shortest string that parses back
                // to the same value.
                write!(out, ",{}", col[r]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv_reader(reader: impl BufRead) -> Result<Self, TableError> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => {
                return Err(TableError::Parse {
                    line: 1,
                    column: 1,
                    message: "empty file".into(),
                })
            }
        };
        let fields: Vec<&str> = header.split(',').collect();
        if fields[0] != "time" {
            return Err(TableError::Parse {
                line: 1,
                column: 1,
                message: format!("first column must be `time`, found `{}`", fields[0]),
            });
        }
        let mut columns = Vec::with_capacity(fields.len() - 1);
        let mut seen = HashSet::new();
        for field in &fields[1..] {
            let meta = ColumnMeta::parse_header(field).map_err(TableError::Schema)?;
            if !seen.insert(meta.name()) {
                return Err(TableError::Schema(format!("duplicate column {}", meta.name())));
            }
            columns.push(meta);
        }

        let mut time = Vec::new();
        let mut data = vec![Vec::new(); columns.len()];
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut count = 0;
            for (c, raw) in line.split(',').enumerate() {
                count += 1;
                let parse_err = |message: String| TableError::Parse {
                    line: line_no,
                    column: c + 1,
                    message,
                };
                if c > columns.len() {
                    return Err(parse_err(format!("expected {} fields", columns.len() + 1)));
                }
                if c == 0 {
                    time.push(raw.parse::<u64>().map_err(|e| parse_err(format!("bad time `{raw}`: {e}")))?);
                } else {
                    let v: f64 = raw.parse().map_err(|e| parse_err(format!("bad number `{raw}`: {e}")))?;
                    if !v.is_finite() {
                        return Err(parse_err(format!("non-finite value `{raw}`")));
                    }
                    data[c - 1].push(v);
                }
            }
            if count != columns.len() + 1 {
                return Err(TableError::Parse {
                    line: line_no,
                    column: count,
                    message: format!("expected {} fields, found {count}", columns.len() + 1),
                });
            }
        }
        Ok(SensorTable { time, columns, data })
    }
}

pub fn export_table(table: &SensorTable, path: impl AsRef<Path>) -> Result<(), TableError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(table.to_csv_string().as_bytes())?;
    file.flush()?;
    Ok(())
}

pub fn import_table(path: impl AsRef<Path>) -> Result<SensorTable, TableError> {
    let file = std::fs::File::open(path)?;
    SensorTable::from_csv_reader(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> SensorTable {
        let mut t = SensorTable::new(vec![0, 1, 2]);
        t.push_column(ColumnMeta::new(SensorKind::MassFlow, "FP0"), vec![0.1, 0.2, 1.0 / 3.0])
            .unwrap();
        t.push_column(ColumnMeta::new(SensorKind::Pressure, "F1"), vec![4.9e5, 4.8e5, 4.85e5])
            .unwrap();
        t.push_column(ColumnMeta::new(SensorKind::Ambient, "air"), vec![-3.5, 1e-17, 7.0])
            .unwrap();
        t
    }

    fn parse(text: &str) -> Result<SensorTable, TableError> {
        SensorTable::from_csv_reader(text.as_bytes())
    }

    #[test]
    fn header_layout() {
        let csv = sample().to_csv_string();
        assert!(csv.starts_with("time,mdot_FP0[kg/s],p_F1[Pa],amb_air[degC]\n0,0.1,490000,-3.5\n"));
    }

    #[test]
    fn round_trip_through_file() {
        let t = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        export_table(&t, &path).unwrap();
        assert_eq!(import_table(&path).unwrap(), t);
    }

    #[test]
    fn reports_line_and_column() {
        let err = parse("time,p_F1[Pa],t_F1[degC]\n0,1,2\n1,x,3\n").unwrap_err();
        match err {
            TableError::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            other => panic!("{other:?}"),
        }
        let err = parse("time,p_F1[Pa]\n0,1,2\n").unwrap_err();
        assert!(matches!(err, TableError::Parse { line: 2, .. }));
        let err = parse("time,p_F1[Pa]\n0\n").unwrap_err();
        assert!(matches!(err, TableError::Parse { line: 2, .. }));
        assert!(matches!(parse("time,p_F1[Pa]\n0,NaN\n"), Err(TableError::Parse { .. })));
    }

    #[test]
    fn unknown_kind_is_schema_error() {
        assert!(matches!(parse("time,flux_F1[W]\n0,1\n"), Err(TableError::Schema(_))));
        assert!(matches!(parse("time,p_F1[Pa],p_F1[Pa]\n0,1,1\n"), Err(TableError::Schema(_))));
    }

    #[test]
    fn missing_declared_column() {
        let t = parse("time,p_F1[Pa]\n0,1\n").unwrap();
        assert!(t.require(&["p_F1".into()]).is_ok());
        assert!(matches!(t.require(&["p_F1".into(), "t_F1".into()]), Err(TableError::Schema(_))));
    }

    proptest! {
        #[test]
        fn any_finite_value_round_trips(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40)) {
            let mut t = SensorTable::new((0..values.len() as u64).collect());
            t.push_column(ColumnMeta::new(SensorKind::Temperature, "X"), values.clone()).unwrap();
            let back = parse(&t.to_csv_string()).unwrap();
            for (a, b) in back.column("t_X").unwrap().iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
