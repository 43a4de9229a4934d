use std::path::Path;

use super::{DataError, Dataset, FeatureColumn};

#[derive(Debug)]
enum AttrType {
    Numeric,
    Nominal(Vec<String>),
}

#[derive(Debug)]
struct Attribute {
    name: String,
    ty: AttrType,
}

/// Loads an ARFF file. The label is the last nominal attribute.
pub fn load_arff(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_arff(&text, None)
}

/// Parses ARFF text. `label` overrides the default of the last nominal
/// attribute.
pub fn parse_arff(text: &str, label: Option<&str>) -> Result<Dataset, DataError> {
    let mut relation = None;
    let mut attributes = Vec::new();
    let mut lines = text.lines().enumerate();

    for (_, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("@relation") {
            let rest = line["@relation".len()..].trim();
            let (name, _) = next_token(rest)
                .ok_or_else(|| DataError::ArffHeader("@relation without a name".into()))?;
            relation = Some(name);
        } else if lower.starts_with("@attribute") {
            attributes.push(parse_attribute(line["@attribute".len()..].trim())?);
        } else if lower.starts_with("@data") {
            break;
        } else {
            return Err(DataError::ArffHeader(format!("unexpected line {line:?}")));
        }
    }
    if attributes.is_empty() {
        return Err(DataError::ArffHeader("no @attribute declarations".into()));
    }

    let label_idx = match label {
        Some(name) => attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| DataError::LabelMissing(name.to_string()))?,
        None => attributes
            .iter()
            .rposition(|a| matches!(a.ty, AttrType::Nominal(_)))
            .ok_or_else(|| DataError::LabelMissing("no nominal attribute".into()))?,
    };
    let class_names = match &attributes[label_idx].ty {
        AttrType::Nominal(levels) => levels.clone(),
        AttrType::Numeric => {
            return Err(DataError::ArffHeader(format!(
                "label attribute {} is not nominal",
                attributes[label_idx].name
            )))
        }
    };

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); attributes.len()];
    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if line.starts_with('{') {
            return Err(DataError::SparseArff);
        }
        let cells = split_row(line);
        if cells.len() != attributes.len() {
            return Err(DataError::Arity {
                row: lineno + 1,
                found: cells.len(),
                expected: attributes.len(),
            });
        }
        for (j, (cell, attr)) in cells.iter().zip(&attributes).enumerate() {
            let v = if cell == "?" {
                f64::NAN
            } else {
                match &attr.ty {
                    AttrType::Numeric => match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => v,
                        _ => return Err(parse_err(lineno, &attr.name, cell, "not a number")),
                    },
                    AttrType::Nominal(levels) => match levels.iter().position(|l| l == cell) {
                        Some(i) => i as f64,
                        None => return Err(parse_err(lineno, &attr.name, cell, "undeclared level")),
                    },
                }
            };
            columns[j].push(v);
        }
    }

    let mut labels = Vec::with_capacity(columns[label_idx].len());
    for (r, &v) in columns[label_idx].iter().enumerate() {
        if v.is_nan() {
            return Err(parse_err(r, &attributes[label_idx].name, "?", "missing class label"));
        }
        labels.push(v as usize);
    }
    if labels.is_empty() {
        return Err(DataError::Empty);
    }
    // Declared levels that never occur are dropped from the class list.
    let mut present = vec![false; class_names.len()];
    for &y in &labels {
        present[y] = true;
    }
    let mut remap = vec![usize::MAX; class_names.len()];
    let mut kept = Vec::new();
    for (i, name) in class_names.into_iter().enumerate() {
        if present[i] {
            remap[i] = kept.len();
            kept.push(name);
        }
    }
    let labels = labels.into_iter().map(|y| remap[y]).collect();

    let features = attributes
        .into_iter()
        .zip(columns)
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, (attr, values))| match attr.ty {
            AttrType::Numeric => FeatureColumn::numeric(
                attr.name,
                values.into_iter().map(|v| (!v.is_nan()).then_some(v)).collect(),
            ),
            AttrType::Nominal(levels) => FeatureColumn::categorical(
                attr.name,
                levels,
                values
                    .into_iter()
                    .map(|v| (!v.is_nan()).then_some(v as u32))
                    .collect(),
            ),
        })
        .collect();
    Dataset::new(relation.unwrap_or_else(|| "arff".into()), features, labels, kept)
}

fn parse_err(lineno: usize, column: &str, cell: &str, what: &str) -> DataError {
    DataError::Parse {
        row: lineno + 1,
        column: column.to_string(),
        message: format!("{what}: {cell:?}"),
    }
}

fn parse_attribute(rest: &str) -> Result<Attribute, DataError> {
    let (name, rest) =
        next_token(rest).ok_or_else(|| DataError::ArffHeader("@attribute without a name".into()))?;
    let rest = rest.trim();
    if let Some(body) = rest.strip_prefix('{') {
        let body = body
            .rfind('}')
            .map(|end| &body[..end])
            .ok_or_else(|| DataError::ArffHeader(format!("unterminated level list for {name}")))?;
        let levels = split_row(body);
        if levels.is_empty() || levels.iter().any(String::is_empty) {
            return Err(DataError::ArffHeader(format!("empty level in {name}")));
        }
        return Ok(Attribute {
            name,
            ty: AttrType::Nominal(levels),
        });
    }
    match rest.split_whitespace().next().map(str::to_ascii_lowercase).as_deref() {
        Some("numeric" | "real" | "integer") => Ok(Attribute {
            name,
            ty: AttrType::Numeric,
        }),
        Some(other) => Err(DataError::ArffHeader(format!(
            "unsupported attribute type {other:?} for {name}"
        ))),
        None => Err(DataError::ArffHeader(format!("attribute {name} has no type"))),
    }
}

/// Reads one possibly quoted token and returns it with the remaining text.
fn next_token(s: &str) -> Option<(String, &str)> {
    let s = s.trim_start();
    let quote = s.chars().next()?;
    if quote == '\'' || quote == '"' {
        let mut out = String::new();
        let mut chars = s[1..].char_indices();
        while let Some((i, c)) = chars.next() {
            if c == '\\' {
                if let Some((_, e)) = chars.next() {
                    out.push(e);
                }
            } else if c == quote {
                return Some((out, &s[1 + i + 1..]));
            } else {
                out.push(c);
            }
        }
        None
    } else {
        let end = s.find(char::is_whitespace).unwrap_or(s.len());
        Some((s[..end].to_string(), &s[end..]))
    }
}

/// Splits a comma-separated row honoring single and double quotes.
fn split_row(line: &str) -> Vec<String> {
    let mut cells = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) if c == '\\' => {
                if let Some(e) = chars.next() {
                    current.push(e);
                }
            }
            Some(_) => current.push(c),
            None if c == '\'' || c == '"' => quote = Some(c),
            None if c == ',' => cells.push(std::mem::take(&mut current).trim().to_string()),
            None => current.push(c),
        }
    }
    cells.push(current.trim().to_string());
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Cell, FeatureKind};

    const WEATHER: &str = "% comment\n@relation weather\n@attribute outlook {sunny, overcast, rainy}\n\
        @attribute temperature numeric\n@attribute 'wind speed' real\n@attribute class {yes,no}\n\n\
        @data\nsunny,85,3.5,no\n% mid comment\novercast,83,?,yes\nrainy,70,1,yes\n";

    #[test]
    fn last_nominal_is_label() {
        let d = parse_arff(WEATHER, None).unwrap();
        assert_eq!(d.name, "weather");
        assert_eq!(d.n_features(), 3);
        assert_eq!(d.class_names(), &["yes".to_string(), "no".to_string()]);
        assert_eq!(d.labels(), &[1, 0, 0]);
        assert_eq!(d.feature(2).name, "wind speed");
        assert_eq!(d.feature(2).cell(1), Cell::Missing);
        assert!(matches!(d.feature(0).kind, FeatureKind::Categorical { .. }));
    }

    #[test]
    fn label_override() {
        let d = parse_arff(WEATHER, Some("outlook")).unwrap();
        assert_eq!(d.n_classes(), 3);
        assert_eq!(d.n_features(), 3);
    }

    #[test]
    fn three_numeric_plus_class_six_rows() {
        let mut text = String::from("@RELATION t\n@ATTRIBUTE a NUMERIC\n@ATTRIBUTE b INTEGER\n@ATTRIBUTE c REAL\n@ATTRIBUTE y {p,q}\n@DATA\n");
        for i in 0..6 {
            text.push_str(&format!("{i},{},{}.5,{}\n", i * 2, i, if i % 2 == 0 { "p" } else { "q" }));
        }
        let d = parse_arff(&text, None).unwrap();
        assert_eq!((d.len(), d.n_features(), d.n_classes()), (6, 3, 2));
    }

    #[test]
    fn sparse_rows_rejected() {
        let text = "@relation s\n@attribute a numeric\n@attribute y {p,q}\n@data\n{0 1, 1 q}\n";
        let err = parse_arff(text, None).unwrap_err();
        assert_eq!(err.to_string(), "sparse ARFF unsupported");
    }

    #[test]
    fn arity_and_header_errors() {
        let text = "@relation s\n@attribute a numeric\n@attribute y {p,q}\n@data\n1,p,3\n";
        assert!(matches!(parse_arff(text, None), Err(DataError::Arity { found: 3, expected: 2, .. })));
        let text = "@relation s\n@attribute a date\n@data\n";
        assert!(matches!(parse_arff(text, None), Err(DataError::ArffHeader(_))));
        let text = "@relation s\n@attribute y {p,q\n@data\n";
        assert!(matches!(parse_arff(text, None), Err(DataError::ArffHeader(_))));
    }

    #[test]
    fn quoted_levels_with_spaces() {
        let text = "@relation s\n@attribute a {'x y', z}\n@attribute y {p,q}\n@data\n'x y',p\nz,q\n";
        let d = parse_arff(text, None).unwrap();
        assert_eq!(d.feature(0).cell(0), Cell::Category(0));
    }

    #[test]
    fn unused_declared_class_dropped() {
        let text = "@relation s\n@attribute a numeric\n@attribute y {p,q,r}\n@data\n1,p\n2,r\n";
        let d = parse_arff(text, None).unwrap();
        assert_eq!(d.class_names(), &["p".to_string(), "r".to_string()]);
        assert_eq!(d.labels(), &[0, 1]);
    }
}
