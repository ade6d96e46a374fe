//! Report tables written both as CSV and as JSON with identical content.

use eurobalance::io::{fmt_num, round_sig};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(x) => fmt_num(*x),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Num(x) if x.is_finite() => serde_json::Number::from_f64(round_sig(*x))
                .map_or(Value::Null, Value::Number),
            Cell::Num(x) => Value::String(fmt_num(*x)),
            Cell::Missing => Value::Null,
        }
    }

    #[cfg(test)]
    fn parse(field: &str) -> Cell {
        if field.is_empty() {
            Cell::Missing
        } else if let Ok(x) = field.parse::<f64>() {
            Cell::Num(x)
        } else {
            Cell::Text(field.to_string())
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(Cell::csv).collect();
            out += &fields.join(",");
            out.push('\n');
        }
        out
    }

    /// Array of objects keyed by column, numbers rounded as in the CSV.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (c, cell) in self.columns.iter().zip(row) {
                    obj.insert(c.clone(), cell.json());
                }
                Value::Object(obj)
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&Value::Array(rows)).expect("json");
        text.push('\n');
        text
    }

    #[cfg(test)]
    pub fn parse_csv(text: &str) -> Option<Self> {
        let mut lines = text.lines();
        let columns: Vec<String> = lines.next()?.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for line in lines {
            let row: Vec<Cell> = line.split(',').map(Cell::parse).collect();
            if row.len() != columns.len() {
                return None;
            }
            rows.push(row);
        }
        Some(Self { columns, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_agree() {
        let mut t = Table::new(&["name", "value", "beta"]);
        t.push(vec!["a".into(), (1.0 / 3.0).into(), None.into()]);
        t.push(vec!["b".into(), f64::INFINITY.into(), Some(0.99999999).into()]);
        let csv = t.to_csv();
        assert_eq!(csv, "name,value,beta\na,0.333333,\nb,inf,1\n");
        let json: Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(json[0]["value"], 0.333333);
        assert_eq!(json[0]["beta"], Value::Null);
        assert_eq!(json[1]["value"], "inf");
        assert_eq!(json[1]["beta"], 1.0);
        let back = Table::parse_csv(&csv).unwrap();
        assert_eq!(back.to_csv(), csv);
    }
}
