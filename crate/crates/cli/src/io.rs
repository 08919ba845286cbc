use std::fs;
use std::path::{Path, PathBuf};

use holoquant_core::lutham::{deserialize, serialize, Model};

use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}

pub fn load_model(path: &Path) -> CliResult<Model> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("cannot read model {}", path.display()), e))?;
    deserialize(&bytes).map_err(|e| CliError::data(path.display(), e))
}

pub fn save_model(model: &Model, path: &Path) -> CliResult<()> {
    let bytes = serialize(model).map_err(|e| CliError::Internal(format!("serialize: {e}")))?;
    fs::write(path, bytes).map_err(|e| CliError::write(path, e))
}

/// Writes through a closure that renders into memory first, so a failed
/// render leaves no partial file.
pub fn write_with(path: &Path, render: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<PathBuf> {
    let mut buf = Vec::new();
    render(&mut buf).map_err(|e| CliError::write(path, e))?;
    fs::write(path, buf).map_err(|e| CliError::write(path, e))?;
    Ok(path.to_path_buf())
}

/// `655360` -> `655,360`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Parses headerless numeric CSV rows of exactly `width` values. Blank
/// lines are skipped; row numbers in errors are 1-based file lines.
pub fn parse_rows(text: &str, width: usize) -> CliResult<Vec<f32>> {
    let mut values = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let row = n + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(CliError::Data(format!(
                "row {row}: width mismatch, model expects {width} values, row has {}",
                fields.len()
            )));
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f32 = f
                .parse()
                .map_err(|_| CliError::Data(format!("row {row}, column {}: `{f}` is not a number", c + 1)))?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("row {row}, column {}: `{f}` is not finite", c + 1)));
            }
            values.push(v);
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_separators() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(655_360), "655,360");
        assert_eq!(thousands(1_130_000_000), "1,130,000,000");
    }

    #[test]
    fn rows() {
        assert_eq!(parse_rows("1,2\n\n 3 , 4\n", 2).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(parse_rows("", 3).unwrap().is_empty());
        let err = parse_rows("1,2\n3,x\n", 2).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        let err = parse_rows("1,2,3\n", 2).unwrap_err().to_string();
        assert!(err.contains("expects 2") && err.contains("has 3"), "{err}");
        assert!(parse_rows("nan\n", 1).is_err());
    }
}
