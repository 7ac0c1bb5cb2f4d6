use std::path::Path;

use muit_core::codegen::{compile, CompileOptions};
use muit_core::dsl::{check, has_errors, parse_source};

use crate::Failure;

pub fn run(src: &Path, out: &Path, name: Option<String>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(src).map_err(|e| Failure::Env(format!("cannot read {}: {e}", src.display())))?;
    let file = src.display().to_string();
    let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("module");
    let (module, mut diags) = parse_source(stem, &text);
    if !has_errors(&diags) {
        diags.extend(check(&module));
    }
    for d in &diags {
        eprintln!("{}", d.render(&file));
    }
    if has_errors(&diags) {
        // Diagnostics already printed.
        return Err(Failure::Domain(String::new()));
    }
    let bundle = compile(&module, &CompileOptions { name }).map_err(|e| Failure::Domain(e.to_string()))?;
    bundle.write_to(out).map_err(|e| Failure::Env(format!("cannot write {}: {e}", out.display())))?;
    tracing::info!(bundle = bundle.name(), out = %out.display(), "bundle written");
    println!("{} -> {}", bundle.name(), out.display());
    Ok(())
}
