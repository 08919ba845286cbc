use std::fmt::Write as _;
use std::path::Path;

use holoquant_core::lutham::{compressed_forward, Workspace};

use crate::error::{CliError, CliResult};
use crate::io::{load_model, parse_rows, write_with};
use crate::manifest::Manifest;

pub fn run(model_path: &Path, input_path: &Path, out_dir: &Path) -> CliResult<()> {
    let model = load_model(model_path)?;
    let text = std::fs::read_to_string(input_path)
        .map_err(|e| CliError::data(format!("cannot read {}", input_path.display()), e))?;
    let inputs = parse_rows(&text, model.input_dim())?;
    let mut ws = Workspace::for_model(&model).map_err(|e| CliError::Internal(e.to_string()))?;
    let outputs = compressed_forward(&model, &inputs, &mut ws).map_err(|e| CliError::data("forward", e))?;

    let mut rendered = String::new();
    for row in outputs.chunks(model.output_dim()) {
        let line: Vec<String> = row.iter().map(f32::to_string).collect();
        let _ = writeln!(rendered, "{}", line.join(","));
    }
    let out_path = write_with(&out_dir.join("output.csv"), |w| {
        w.extend_from_slice(rendered.as_bytes());
        Ok(())
    })?;
    let rows = inputs.len() / model.input_dim();
    println!("{rows} rows -> {}", out_path.display());

    let mut m = Manifest::new("run");
    m.input(model_path).input(input_path).output(&out_path).param("rows", rows as i64);
    m.write(out_dir)?;
    Ok(())
}
