//! Result-table serialization.
//!
//! Numbers are written with 12 significant digits, positional notation for
//! exponents in [-4, 12) and scientific otherwise, trailing zeros trimmed.
//! Fields never contain the delimiter except free-text flag messages, which
//! are quoted. Row order and column order are fixed per model, so a run is
//! byte-reproducible.

use std::fmt::Write as _;

use crate::config::OutputFormat;

/// Formats a number with 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    // {:.11e} rounds to 12 significant digits and exposes the exponent.
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_fraction(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_fraction(mantissa.to_string()), exp)
    }
}

fn trim_fraction(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// Quotes a free-text field if it contains the delimiter, quotes or
/// newlines.
pub fn escape_text(field: &str, delimiter: char) -> String {
    if field.contains(delimiter) || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Accumulates delimited rows with a fixed header.
pub struct TableBuilder {
    delimiter: char,
    out: String,
    columns: usize,
}

impl TableBuilder {
    pub fn new(format: OutputFormat, header: &[&str]) -> Self {
        let delimiter = format.delimiter();
        let mut out = String::new();
        out.push_str(&header.join(&delimiter.to_string()));
        out.push('\n');
        TableBuilder {
            delimiter,
            out,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[Field]) {
        assert_eq!(fields.len(), self.columns, "row width mismatch");
        for (i, field) in fields.iter().enumerate() {
            if i > 0 {
                self.out.push(self.delimiter);
            }
            match field {
                Field::Num(x) => {
                    let _ = write!(self.out, "{}", fmt_num(*x));
                }
                Field::Int(v) => {
                    let _ = write!(self.out, "{v}");
                }
                Field::Text(s) => {
                    let _ = write!(self.out, "{}", escape_text(s, self.delimiter));
                }
                Field::Empty => {}
            }
        }
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// One serialized field.
pub enum Field {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Field {
    pub fn text(s: impl Into<String>) -> Self {
        Field::Text(s.into())
    }
}
