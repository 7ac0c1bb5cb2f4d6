use std::path::Path;

use muit_core::dsl::{check, has_errors, parse_source};
use muit_core::wsdl::{emit_intermediate_dsl, generate_default_views, parse_wsdl, transform};

use crate::Failure;

fn fetch(source: &str) -> Result<String, Failure> {
    if !(source.starts_with("http://") || source.starts_with("https://")) {
        return std::fs::read_to_string(source).map_err(|e| Failure::Env(format!("cannot read {source}: {e}")));
    }
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| Failure::Env(e.to_string()))?;
    rt.block_on(async {
        let resp = reqwest::get(source).await.map_err(|e| Failure::Env(format!("cannot fetch {source}: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Failure::Env(format!("cannot fetch {source}: HTTP {status}")));
        }
        resp.text().await.map_err(|e| Failure::Env(format!("cannot fetch {source}: {e}")))
    })
}

pub fn run(source: &str, out: Option<&Path>) -> Result<(), Failure> {
    let doc = fetch(source)?;
    let desc = parse_wsdl(&doc).map_err(|e| Failure::Domain(e.to_string()))?;
    let model = generate_default_views(transform(&desc).map_err(|e| Failure::Domain(e.to_string()))?);
    let text = emit_intermediate_dsl(&model);

    // The emitted source must itself compile.
    let (m, mut diags) = parse_source("generated", &text);
    if !has_errors(&diags) {
        diags.extend(check(&m));
    }
    if has_errors(&diags) {
        for d in &diags {
            eprintln!("{}", d.render("<generated>"));
        }
        return Err(Failure::Domain("generated source does not compile".into()));
    }
    match out {
        Some(path) => {
            std::fs::write(path, &text).map_err(|e| Failure::Env(format!("cannot write {}: {e}", path.display())))?;
            println!("{} operation(s) -> {}", desc.operations.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
