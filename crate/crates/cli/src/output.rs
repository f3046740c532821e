use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// A table plus the metadata written alongside it.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra JSON-only payload (matrices, scores).
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug)]
pub enum Cell {
    Int(usize),
    Num(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // 17 significant digits round-trip every f64
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Num(v) => {
                serde_json::Number::from_f64(*v).map_or(serde_json::Value::Null, Into::into)
            }
            Cell::Text(s) => s.clone().into(),
        }
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a serde_json::Value,
}

fn provenance(config: &serde_json::Value) -> Provenance<'_> {
    Provenance {
        tool: "asdep",
        version: env!("CARGO_PKG_VERSION"),
        config,
    }
}

pub fn render_csv(
    table: &Table,
    config: &serde_json::Value,
    notes: &[String],
) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    let header =
        serde_json::to_string(&provenance(config)).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out, "# {header}").map_err(|e| CliError::Io(e.to_string()))?;
    for n in notes {
        writeln!(out, "# {n}").map_err(|e| CliError::Io(e.to_string()))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)
        .map_err(|e| CliError::Io(e.to_string()))?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::csv))
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn render_json(
    table: &Table,
    config: &serde_json::Value,
    notes: &[String],
) -> Result<Vec<u8>, CliError> {
    let rows: Vec<serde_json::Value> = table
        .rows
        .iter()
        .map(|r| {
            serde_json::Value::Object(
                table
                    .columns
                    .iter()
                    .map(|c| c.to_string())
                    .zip(r.iter().map(Cell::json))
                    .collect(),
            )
        })
        .collect();
    let doc = serde_json::json!({
        "provenance": provenance(config),
        "notes": notes,
        "columns": table.columns,
        "rows": rows,
        "result": table.extra,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes to `path` (JSON when it ends in `.json`, CSV otherwise) or CSV to stdout.
pub fn emit(
    table: &Table,
    config: &serde_json::Value,
    notes: &[String],
    path: Option<&Path>,
) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let json = p
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("json"));
            let bytes = if json {
                render_json(table, config, notes)?
            } else {
                render_csv(table, config, notes)?
            };
            std::fs::write(p, bytes)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            let bytes = render_csv(table, config, notes)?;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

/// Aligned plain-text preview of the first rows, for stderr.
pub fn summary(table: &Table, max_rows: usize) -> String {
    let cells: Vec<Vec<String>> = table
        .rows
        .iter()
        .take(max_rows)
        .map(|r| {
            r.iter()
                .map(|c| match c {
                    Cell::Num(v) => format!("{v:.6}"),
                    other => other.csv(),
                })
                .collect()
        })
        .collect();
    let widths: Vec<usize> = (0..table.columns.len())
        .map(|i| {
            cells
                .iter()
                .map(|r| r[i].len())
                .chain([table.columns[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |vals: Vec<&str>| -> String {
        vals.iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut s = line(table.columns.clone());
    for r in &cells {
        s.push('\n');
        s.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    if table.rows.len() > max_rows {
        s.push_str(&format!("\n... {} more rows", table.rows.len() - max_rows));
    }
    s
}
