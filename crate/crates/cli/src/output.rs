use persuade_core::scalar::{format_decimal, format_scalar};
use persuade_core::Scalar;
use serde_json::{json, Map, Value};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone)]
pub enum Field {
    Num(Scalar),
    Float(f64),
    Int(i64),
    Text(String),
    Interval(Option<(Scalar, Scalar)>),
    Missing,
}

impl Field {
    pub fn text(s: impl Into<String>) -> Field {
        Field::Text(s.into())
    }

    fn exact(&self) -> String {
        match self {
            Field::Num(x) => format_scalar(x),
            Field::Float(x) => format!("{x}"),
            Field::Int(n) => n.to_string(),
            Field::Text(s) => s.clone(),
            Field::Interval(Some((a, b))) => format!("[{}, {}]", format_scalar(a), format_scalar(b)),
            Field::Interval(None) => "empty".into(),
            Field::Missing => "-".into(),
        }
    }

    fn decimal(&self, digits: usize) -> Option<String> {
        match self {
            Field::Num(x) if !x.is_integer() => Some(format_decimal(x, digits)),
            Field::Interval(Some((a, b))) if !(a.is_integer() && b.is_integer()) => {
                Some(format!("[{}, {}]", format_decimal(a, digits), format_decimal(b, digits)))
            }
            _ => None,
        }
    }

    fn display(&self, digits: usize) -> String {
        match self.decimal(digits) {
            Some(d) => format!("{} ({d})", self.exact()),
            None => self.exact(),
        }
    }

    fn json(&self, digits: usize) -> Value {
        match self {
            Field::Num(x) => json!({"exact": format_scalar(x), "decimal": format_decimal(x, digits)}),
            Field::Float(x) => json!(x),
            Field::Int(n) => json!(n),
            Field::Text(s) => json!(s),
            Field::Interval(Some((a, b))) => json!([Field::Num(a.clone()).json(digits), Field::Num(b.clone()).json(digits)]),
            Field::Interval(None) => Value::Null,
            Field::Missing => Value::Null,
        }
    }
}

/// Key-value output of one command.
#[derive(Debug, Default)]
pub struct Report {
    pub notes: Vec<String>,
    pub fields: Vec<(String, Field)>,
}

impl Report {
    pub fn push(&mut self, key: &str, f: Field) {
        self.fields.push((key.to_string(), f));
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn to_json(&self, digits: usize) -> Value {
        let mut m = Map::new();
        for (k, f) in &self.fields {
            m.insert(k.clone(), f.json(digits));
        }
        if !self.notes.is_empty() {
            m.insert("notes".into(), json!(self.notes));
        }
        Value::Object(m)
    }

    pub fn render(&self, fmt: Format, digits: usize, out: &mut dyn Write) -> std::io::Result<()> {
        match fmt {
            Format::Text => {
                for n in &self.notes {
                    writeln!(out, "note: {n}")?;
                }
                let width = self.fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
                for (k, f) in &self.fields {
                    writeln!(out, "{k:<width$}  {}", f.display(digits))?;
                }
                Ok(())
            }
            Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&self.to_json(digits)).unwrap()),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["key", "exact", "decimal"])?;
                for (k, f) in &self.fields {
                    w.write_record([k.clone(), f.exact(), f.decimal(digits).unwrap_or_default()])?;
                }
                w.flush()
            }
        }
    }
}

/// Row-oriented output.
#[derive(Debug)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn render(&self, fmt: Format, digits: usize, out: &mut dyn Write) -> std::io::Result<()> {
        match fmt {
            Format::Text => {
                let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(|f| f.display(digits)).collect()).collect();
                let widths: Vec<usize> = (0..self.columns.len())
                    .map(|c| cells.iter().map(|r| r[c].chars().count()).chain([self.columns[c].len()]).max().unwrap())
                    .collect();
                let line = |vals: Vec<&str>| {
                    vals.iter()
                        .zip(&widths)
                        .map(|(v, w)| format!("{v:<w$}"))
                        .collect::<Vec<_>>()
                        .join(" | ")
                        .trim_end()
                        .to_string()
                };
                writeln!(out, "{}", line(self.columns.iter().map(|s| s.as_str()).collect()))?;
                writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"))?;
                for r in &cells {
                    writeln!(out, "{}", line(r.iter().map(|s| s.as_str()).collect()))?;
                }
                Ok(())
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Object(self.columns.iter().cloned().zip(r.iter().map(|f| f.json(digits))).collect()))
                    .collect();
                writeln!(out, "{}", serde_json::to_string_pretty(&rows).unwrap())
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.columns)?;
                for r in &self.rows {
                    w.write_record(r.iter().map(|f| f.exact()))?;
                }
                w.flush()
            }
        }
    }
}
