use std::path::Path;

use super::{DataError, Dataset, FeatureColumn, FeatureKind};

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    Last,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub delimiter: u8,
    pub missing_token: String,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label: LabelColumn::Last,
            delimiter: b',',
            missing_token: "?".to_string(),
        }
    }
}

/// Loads a headed, delimited text file. A column is numeric when every
/// non-missing cell parses as a number; otherwise it is categorical with
/// levels in first-appearance order.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    parse_csv(&text, &name, options)
}

pub(crate) fn parse_csv(text: &str, name: &str, options: &CsvOptions) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, 0))?
        .iter()
        .map(str::to_string)
        .collect();
    let label_idx = match &options.label {
        LabelColumn::Name(n) => header
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| DataError::LabelMissing(n.clone()))?,
        LabelColumn::Index(i) if *i < header.len() => *i,
        LabelColumn::Index(i) => return Err(DataError::LabelMissing(i.to_string())),
        LabelColumn::Last if header.is_empty() => {
            return Err(DataError::LabelMissing("last".into()))
        }
        LabelColumn::Last => header.len() - 1,
    };

    let mut columns: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(e, r + 1))?;
        for (c, cell) in record.iter().enumerate() {
            columns[c].push(cell.to_string());
        }
    }
    if columns[label_idx].is_empty() {
        return Err(DataError::Empty);
    }

    let mut class_names: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(columns[label_idx].len());
    for (r, cell) in columns[label_idx].iter().enumerate() {
        if *cell == options.missing_token {
            return Err(DataError::Parse {
                row: r + 1,
                column: header[label_idx].clone(),
                message: "missing class label".into(),
            });
        }
        labels.push(intern(&mut class_names, cell));
    }

    let mut features = Vec::new();
    for (c, cells) in columns.iter().enumerate() {
        if c == label_idx {
            continue;
        }
        features.push(infer_column(&header[c], cells, &options.missing_token)?);
    }
    Dataset::new(name, features, labels, class_names)
}

fn infer_column(name: &str, cells: &[String], missing: &str) -> Result<FeatureColumn, DataError> {
    let numeric = cells
        .iter()
        .filter(|c| c.as_str() != missing)
        .all(|c| c.parse::<f64>().is_ok());
    if numeric {
        let mut values = Vec::with_capacity(cells.len());
        for (r, c) in cells.iter().enumerate() {
            if c == missing {
                values.push(None);
                continue;
            }
            let v: f64 = c.parse().expect("checked above");
            if !v.is_finite() {
                return Err(DataError::Parse {
                    row: r + 1,
                    column: name.to_string(),
                    message: format!("non-finite number {c:?}"),
                });
            }
            values.push(Some(v));
        }
        Ok(FeatureColumn::numeric(name, values))
    } else {
        let mut levels = Vec::new();
        let values = cells
            .iter()
            .map(|c| (c != missing).then(|| intern(&mut levels, c) as u32))
            .collect();
        Ok(FeatureColumn::categorical(name, levels, values))
    }
}

fn intern(names: &mut Vec<String>, value: &str) -> usize {
    match names.iter().position(|n| n == value) {
        Some(i) => i,
        None => {
            names.push(value.to_string());
            names.len() - 1
        }
    }
}

fn csv_error(e: csv::Error, row: usize) -> DataError {
    let row = e.position().map_or(row, |p| p.line() as usize);
    DataError::Parse {
        row,
        column: "-".into(),
        message: e.to_string(),
    }
}

/// Writes a dataset as a headed CSV with the label last. Numbers use the
/// shortest representation that parses back to the same value.
pub fn write_csv(
    dataset: &Dataset,
    path: impl AsRef<Path>,
    options: &CsvOptions,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| DataError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
    };
    let mut writer = csv::WriterBuilder::new()
        .delimiter(options.delimiter)
        .from_path(path)
        .map_err(io_err)?;
    let mut header: Vec<String> = dataset.features().iter().map(|f| f.name.clone()).collect();
    header.push("class".into());
    writer.write_record(&header).map_err(io_err)?;
    for r in 0..dataset.len() {
        let mut record: Vec<String> = dataset
            .features()
            .iter()
            .map(|f| {
                let v = f.raw()[r];
                if v.is_nan() {
                    return options.missing_token.clone();
                }
                match &f.kind {
                    FeatureKind::Numeric => format!("{v:?}"),
                    FeatureKind::Categorical { levels } => levels[v as usize].clone(),
                }
            })
            .collect();
        record.push(dataset.class_names()[dataset.label(r)].clone());
        writer.write_record(&record).map_err(io_err)?;
    }
    writer.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}
