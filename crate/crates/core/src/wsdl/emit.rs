use std::fmt::Write;

use super::transform::{FormSpec, IntermediateUiModel};
use crate::dsl::pretty::quote;

fn default_value(ty: &str) -> &'static str {
    match ty {
        "int" => "0",
        "boolean" => "false",
        "String" => "\"\"",
        _ => "null",
    }
}

fn write_form(out: &mut String, f: &FormSpec, indent: usize) {
    let pad = "    ".repeat(indent);
    let tag = if indent == 1 { "form" } else { "fieldset" };
    let _ = writeln!(out, "{pad}<{tag} name={}>", quote(&f.path));
    for field in &f.fields {
        let _ = writeln!(out, "{pad}    <input type=\"text\", name={}, value={}.{field}/>", quote(field), f.path);
    }
    for n in &f.nested {
        write_form(out, n, indent + 1);
    }
    let _ = writeln!(out, "{pad}</{tag}>");
}

/// Renders the model as DSL source that a developer can refine.
pub fn emit_intermediate_dsl(model: &IntermediateUiModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "// generated from service `{}` at {}", model.service_name, model.service_url);
    let _ = writeln!(out, "module {};", model.module_name);
    for e in &model.data_entities {
        let _ = writeln!(out, "\nentity {} {{", e.name);
        for p in &e.properties {
            let _ = writeln!(out, "    {} {};", p.ty, p.name);
        }
        out.push_str("}\n");
    }
    out.push_str("\noperation import(String WSDLUrl, String user, String pwd) {\n");
    out.push_str("    httpRequest(WSDLUrl + \"?user=\" + user + \"&pwd=\" + pwd);\n}\n");
    for op in &model.model_operations {
        let params: Vec<String> = op.params.iter().map(|p| format!("{} {}", p.ty, p.name)).collect();
        let mut args = vec![quote(&op.wsdl_operation)];
        args.extend(op.params.iter().map(|p| p.name.clone()));
        let _ = writeln!(out, "\noperation {}({}) {{\n    return invoke({});\n}}", op.name, params.join(", "), args.join(", "));
    }
    for v in &model.default_views {
        let params: Vec<String> = v.entity_params.iter().map(|p| format!("{} {}", p.ty, p.name)).collect();
        if params.is_empty() {
            let _ = writeln!(out, "\nscreen {} {{", v.screen);
        } else {
            let _ = writeln!(out, "\nscreen {}({}) {{", v.screen, params.join(", "));
        }
        let _ = writeln!(out, "    header({});", quote(&v.operation));
        for l in &v.lists {
            let _ = writeln!(out, "    var {} = [];", l.name);
        }
        for i in &v.inputs {
            let _ = writeln!(out, "    var {} = {};", i.name, default_value(&i.ty.name));
            let _ = writeln!(out, "    <input type=\"text\", name={}, value={}/>", quote(&i.name), i.name);
        }
        for f in &v.forms {
            write_form(&mut out, f, 1);
        }
        let call = if v.is_event {
            let mut args = vec![quote(&v.operation)];
            args.extend(v.args.iter().cloned());
            format!("invoke({})", args.join(", "))
        } else {
            format!("{}({})", v.screen, v.args.join(", "))
        };
        match &v.result_list {
            Some(r) => {
                out.push_str("    var results = [];\n");
                let _ = writeln!(out, "    button {{ {}, onClick = {{ results = {call}.{}; }} }}", quote(&v.screen), r.property);
                let row = match &r.label {
                    Some(l) => format!("r.{l}"),
                    None => "r".into(),
                };
                let _ = writeln!(out, "    foreach (r in results) {{\n        item {{ {row} }}\n    }}");
            }
            None => {
                let _ = writeln!(out, "    button {{ {}, onClick = {{ {call}; }} }}", quote(&v.screen));
            }
        }
        out.push_str("}\n");
    }
    out
}
