//! CSV ingestion: column selection, missing-value accounting and
//! auto-detection of the MAGIC telescope layout (10 numeric image
//! parameters plus a g/h class label, no header).

use fnmcop::{Error, Result};
use std::path::Path;

const MAGIC_NAMES: [&str; 11] = [
    "Length", "Width", "Size", "Conc", "Conc1", "Asym", "M3Long", "M3Trans", "Alpha", "Dist",
    "class",
];

/// A two-column numeric dataset with provenance.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub column_names: [String; 2],
    pub col1: Vec<f64>,
    pub col2: Vec<f64>,
    pub path: String,
    pub rows_read: usize,
    pub rows_dropped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.col1.len()
    }
}

fn is_numeric(field: &str) -> bool {
    field.trim().parse::<f64>().is_ok()
}

/// Load two numeric columns from a CSV file. The selector holds two
/// column names or 1-based indices, comma separated.
pub fn load_csv(path: &str, selector: &str, no_header: bool) -> Result<Dataset> {
    let raw = std::fs::read_to_string(Path::new(path))
        .map_err(|e| Error::Input(format!("cannot read {path}: {e}")))?;
    let mut lines = raw
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .peekable();
    let first = lines
        .peek()
        .ok_or_else(|| Error::Input(format!("{path} is empty")))?;
    let first_fields: Vec<&str> = first.split(',').collect();

    // Header/layout detection: a MAGIC-layout row is 11 fields, 10
    // numeric plus a one-letter class; any all-numeric first row means
    // "no header".
    let magic_layout = first_fields.len() == 11
        && first_fields[..10].iter().all(|f| is_numeric(f))
        && matches!(first_fields[10].trim(), "g" | "h");
    let headerless =
        no_header || magic_layout || first_fields.iter().all(|f| is_numeric(f));

    let names: Vec<String> = if magic_layout {
        MAGIC_NAMES.iter().map(|s| s.to_string()).collect()
    } else if headerless {
        (1..=first_fields.len()).map(|i| format!("col{i}")).collect()
    } else {
        first_fields.iter().map(|f| f.trim().to_string()).collect()
    };
    if !headerless {
        lines.next();
    }

    let parts: Vec<&str> = selector.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Input(format!(
            "--cols must select exactly two columns, got '{selector}'"
        )));
    }
    let resolve = |token: &str| -> Result<usize> {
        if let Ok(idx) = token.parse::<usize>() {
            if idx >= 1 && idx <= names.len() {
                return Ok(idx - 1);
            }
            return Err(Error::Input(format!(
                "column index {idx} out of range 1..={}",
                names.len()
            )));
        }
        names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(token))
            .ok_or_else(|| {
                Error::Input(format!(
                    "no column named '{token}' (available: {})",
                    names.join(", ")
                ))
            })
    };
    let i1 = resolve(parts[0])?;
    let i2 = resolve(parts[1])?;
    if magic_layout && (i1 == 10 || i2 == 10) {
        return Err(Error::Input(
            "the MAGIC class label is not a numeric column".to_string(),
        ));
    }

    let mut col1 = Vec::new();
    let mut col2 = Vec::new();
    let mut rows_read = 0usize;
    let mut rows_dropped = 0usize;
    for line in lines {
        rows_read += 1;
        let fields: Vec<&str> = line.split(',').collect();
        let pair = (
            fields.get(i1).and_then(|f| f.trim().parse::<f64>().ok()),
            fields.get(i2).and_then(|f| f.trim().parse::<f64>().ok()),
        );
        match pair {
            (Some(a), Some(b)) if a.is_finite() && b.is_finite() => {
                col1.push(a);
                col2.push(b);
            }
            _ => rows_dropped += 1,
        }
    }
    if col1.len() < 3 {
        return Err(Error::Input(format!(
            "{path}: only {} usable rows in columns {} and {}",
            col1.len(),
            names[i1],
            names[i2]
        )));
    }
    Ok(Dataset {
        column_names: [names[i1].clone(), names[i2].clone()],
        col1,
        col2,
        path: path.to_string(),
        rows_read,
        rows_dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(name: &str, contents: &str) -> String {
        let path = std::env::temp_dir().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path.to_string_lossy().into_owned()
    }

    #[test]
    fn toy_csv_with_header() {
        let p = write_tmp(
            "fnmcop_toy.csv",
            "a,b,c\n1,2.5,9\n2,3.5,8\n3,1.5,7\n",
        );
        let d = load_csv(&p, "a,c", false).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.col2, vec![9.0, 8.0, 7.0]);
        let d = load_csv(&p, "2,3", false).unwrap();
        assert_eq!(d.column_names[0], "b");
    }

    #[test]
    fn non_numeric_rows_dropped_and_counted() {
        let p = write_tmp(
            "fnmcop_drop.csv",
            "x,y\n1,2\nbad,3\n4,5\n6,\n7,8\n",
        );
        let d = load_csv(&p, "x,y", false).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.rows_dropped, 2);
        assert_eq!(d.rows_read, 5);
    }

    #[test]
    fn magic_layout_detected() {
        let row = "28.7967,16.0021,2.6449,0.3918,0.1982,27.7004,22.011,-8.2027,40.092,81.8828,g";
        let mut contents = String::new();
        for _ in 0..5 {
            contents.push_str(row);
            contents.push('\n');
        }
        let p = write_tmp("fnmcop_magic.csv", &contents);
        let d = load_csv(&p, "Length,M3Long", false).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(d.col1[0], 28.7967);
        assert_eq!(d.col2[0], 22.011);
        assert!(load_csv(&p, "Length,class", false).is_err());
    }

    #[test]
    fn headerless_numeric_csv() {
        let p = write_tmp("fnmcop_nohdr.csv", "1,2\n3,4\n5,6\n");
        let d = load_csv(&p, "1,2", false).unwrap();
        assert_eq!(d.column_names[0], "col1");
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn unreadable_and_short_files_error() {
        assert!(load_csv("/nonexistent/file.csv", "1,2", false).is_err());
        let p = write_tmp("fnmcop_short.csv", "x,y\n1,2\n");
        assert!(load_csv(&p, "x,y", false).is_err());
    }
}
