//! Compiles a checked module into a self-contained page bundle: one HTML
//! document per screen, shared styles, a runtime, a generated `app.js` and a
//! `manifest.json` describing screens, bindings, navigation and offline
//! assets.

mod html;
mod js;
mod vectors;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::ast::{DslModule, Expr, ExprKind, NodeId, ScreenDecl, ScreenItem, TypeRef};
use crate::dsl::eval::Interpreter;
use crate::dsl::{check, has_errors, Diagnostic};

pub use html::{escape_attr, escape_text};
pub use js::js_string;
pub use vectors::{rule_vectors, RuleCase, RuleVectors, ScreenRuleVectors};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_PATH: &str = "manifest.json";
pub const SYNTHESIZED_SCREEN: &str = "home";

const RUNTIME_JS: &str = include_str!("assets/runtime.js");
const BASE_CSS: &str = include_str!("assets/base.css");
const IOS_CSS: &str = include_str!("assets/ios.css");
const ANDROID_CSS: &str = include_str!("assets/android.css");

/// Assets every screen document links.
pub const SHARED_ASSETS: &[&str] = &["styles/base.css", "styles/ios.css", "styles/android.css", "assets/runtime.js", "app.js"];

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error("module has {} error(s); first: {}", .0.iter().filter(|d| d.is_error()).count(), .0.iter().find(|d| d.is_error()).map(|d| d.message.as_str()).unwrap_or(""))]
    NotCompilable(Vec<Diagnostic>),
    #[error("screen `{screen}` navigates to `{target}`, which is not a screen")]
    UnknownNavigationTarget { screen: String, target: String },
    #[error("screen `{screen}` imports `{target}`, which is neither a widget nor a touch")]
    UnknownImport { screen: String, target: String },
    #[error("screen `{screen}` references external resource `{url}`")]
    ExternalReference { screen: String, url: String },
    #[error("screen `{screen}`: invalid markup {detail}")]
    InvalidMarkup { screen: String, detail: String },
}

#[derive(Debug, Clone, Default)]
pub struct CompileOptions {
    /// Bundle name; defaults to the module name.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Action {
    Operation { name: String, args: Vec<String> },
    Navigate { screen: String, args: Vec<String>, mode: String },
    Back { delta: i64 },
    Assign { path: String },
    View,
    Script,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub element: String,
    pub event: String,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub watch: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub trigger: String,
    pub condition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub id: String,
    pub branches: Vec<BranchSpec>,
    pub has_else: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenEntry {
    pub name: String,
    pub document: String,
    pub params: Vec<ParamSpec>,
    pub cacheable: bool,
    /// Everything the document references, itself included.
    pub assets: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthesized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavEdge {
    pub from: String,
    pub to: Option<String>,
    /// `push`, `cascade` or `back`.
    pub kind: String,
    pub trigger: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackPolicy {
    pub root: String,
    pub visible: String,
    pub back_at_root: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Navigation {
    pub stack: StackPolicy,
    pub edges: Vec<NavEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationSpec {
    pub name: String,
    pub params: Vec<ParamSpec>,
    #[serde(rename = "async")]
    pub is_async: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub default: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpec {
    pub name: String,
    pub key: Option<String>,
    pub properties: Vec<PropertySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetEntry {
    pub path: String,
    pub media_type: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offline {
    pub screens: Vec<String>,
    pub assets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub name: String,
    pub module: String,
    pub entry: String,
    pub screens: Vec<ScreenEntry>,
    pub navigation: Navigation,
    pub bindings: BTreeMap<String, Vec<Binding>>,
    pub rules: BTreeMap<String, Vec<RuleSpec>>,
    pub operations: Vec<OperationSpec>,
    pub entities: Vec<EntitySpec>,
    pub assets: Vec<AssetEntry>,
    pub offline: Offline,
}

impl Manifest {
    pub fn screen(&self, name: &str) -> Option<&ScreenEntry> {
        self.screens.iter().find(|s| s.name == name)
    }

    pub fn asset(&self, path: &str) -> Option<&AssetEntry> {
        self.assets.iter().find(|a| a.path == path)
    }

    pub fn operation(&self, name: &str) -> Option<&OperationSpec> {
        self.operations.iter().find(|o| o.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageBundle {
    pub manifest: Manifest,
    /// Bundle files by relative path, `manifest.json` included.
    pub files: BTreeMap<String, Vec<u8>>,
}

impl PageBundle {
    pub fn name(&self) -> &str {
        &self.manifest.name
    }

    pub fn file(&self, path: &str) -> Option<&[u8]> {
        self.files.get(path).map(|v| v.as_slice())
    }

    pub fn text(&self, path: &str) -> Option<&str> {
        self.file(path).and_then(|b| std::str::from_utf8(b).ok())
    }

    pub fn document(&self, screen: &str) -> Option<&str> {
        self.text(&self.manifest.screen(screen)?.document)
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        for (path, bytes) in &self.files {
            let p = dir.join(path);
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, bytes)?;
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn media_type(path: &str) -> &'static str {
    match path.rsplit('.').next() {
        Some("html") => "text/html; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("js") => "text/javascript; charset=utf-8",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

fn type_name(t: &TypeRef) -> String {
    match &t.arg {
        Some(inner) => format!("{}<{}>", t.name, type_name(inner)),
        None => t.name.clone(),
    }
}

fn params(ps: &[crate::dsl::ast::Param]) -> Vec<ParamSpec> {
    ps.iter().map(|p| ParamSpec { name: p.name.clone(), ty: type_name(&p.ty) }).collect()
}

/// The screens of `m`, or a synthesized `home` screen when it has none.
pub fn effective_screens(m: &DslModule) -> Vec<ScreenDecl> {
    if !m.screens.is_empty() {
        return m.screens.clone();
    }
    let title = if m.name.is_empty() { SYNTHESIZED_SCREEN.to_string() } else { m.name.clone() };
    vec![ScreenDecl {
        id: NodeId(u32::MAX),
        name: SYNTHESIZED_SCREEN.into(),
        annotations: Vec::new(),
        params: Vec::new(),
        items: vec![ScreenItem::Header { id: NodeId(u32::MAX), title: Expr { id: NodeId(u32::MAX), kind: ExprKind::Str(title) }, items: Vec::new() }],
        cached_offline: false,
    }]
}

fn document(module: &str, screen: &ScreenDecl, body: &str) -> String {
    let name = escape_attr(&screen.name);
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    out.push_str("<meta name=\"viewport\" content=\"width=device-width, initial-scale=1\">\n");
    out.push_str(&format!("<title>{} - {}</title>\n", escape_text(&screen.name), escape_text(module)));
    out.push_str("<link rel=\"stylesheet\" href=\"../styles/base.css\">\n");
    out.push_str("<link rel=\"stylesheet\" href=\"../styles/ios.css\" data-platform=\"ios\" disabled>\n");
    out.push_str("<link rel=\"stylesheet\" href=\"../styles/android.css\" data-platform=\"android\" disabled>\n");
    out.push_str("<script src=\"../assets/runtime.js\" defer></script>\n");
    out.push_str("<script src=\"../app.js\" defer></script>\n");
    out.push_str("</head>\n");
    out.push_str(&format!("<body data-screen=\"{name}\">\n<main id=\"{name}\" class=\"muit-screen\">\n"));
    out.push_str(body);
    out.push_str("</main>\n</body>\n</html>\n");
    out
}

/// Forward edges from bindings, then one back edge per predecessor.
pub fn build_navigation(entry: &str, screens: &[String], bindings: &BTreeMap<String, Vec<Binding>>) -> Navigation {
    let mut edges = Vec::new();
    let mut backs = Vec::new();
    for screen in screens {
        for b in bindings.get(screen).into_iter().flatten() {
            let trigger = if b.event.starts_with("gesture:") { b.event.clone() } else { format!("{}:{}", b.event, b.element) };
            match &b.action {
                Action::Navigate { screen: to, mode, .. } => {
                    edges.push(NavEdge { from: screen.clone(), to: Some(to.clone()), kind: mode.clone(), trigger })
                }
                Action::Back { .. } => backs.push((screen.clone(), trigger)),
                _ => {}
            }
        }
    }
    let mut back_edges = Vec::new();
    for (from, trigger) in backs {
        let preds: BTreeSet<&String> = edges.iter().filter(|e| e.to.as_ref() == Some(&from)).map(|e| &e.from).collect();
        if preds.is_empty() {
            back_edges.push(NavEdge { from, to: None, kind: "back".into(), trigger });
        } else {
            for p in preds {
                back_edges.push(NavEdge { from: from.clone(), to: Some(p.clone()), kind: "back".into(), trigger: trigger.clone() });
            }
        }
    }
    edges.extend(back_edges);
    Navigation {
        stack: StackPolicy { root: entry.to_string(), visible: "top".into(), back_at_root: "ignore".into() },
        edges,
    }
}

/// Offline section: every asset of every cacheable screen.
pub fn emit_offline_manifest(screens: &[ScreenEntry]) -> Offline {
    let cacheable: Vec<&ScreenEntry> = screens.iter().filter(|s| s.cacheable).collect();
    let assets: BTreeSet<String> = cacheable.iter().flat_map(|s| s.assets.iter().cloned()).collect();
    Offline { screens: cacheable.iter().map(|s| s.name.clone()).collect(), assets: assets.into_iter().collect() }
}

fn app_js(m: &DslModule, entry: &str, screen_scripts: &[String]) -> String {
    let mut it = Interpreter::new(m);
    let vars: serde_json::Map<String, serde_json::Value> =
        m.vars.iter().map(|v| (v.name.clone(), it.global(&v.name).map(|x| x.to_json()).unwrap_or(serde_json::Value::Null))).collect();
    let entities: serde_json::Map<String, serde_json::Value> = m
        .entities
        .iter()
        .map(|e| (e.name.clone(), crate::Value::Map(it.entity_defaults(&e.name)).to_json()))
        .collect();
    let mut out = String::new();
    out.push_str(&format!("// generated by muit for module {}\n", m.name.replace('\n', " ")));
    out.push_str("(function (root) {\n  \"use strict\";\n");
    out.push_str(&format!(
        "  var app = {{ module: {}, entry: {}, vars: {}, entities: {}, ops: {{}}, screens: {{}} }};\n",
        js_string(&m.name),
        js_string(entry),
        serde_json::to_string(&vars).expect("json"),
        serde_json::to_string(&entities).expect("json")
    ));
    for op in &m.operations {
        let mut low = js::Lowerer::new(m);
        let names: Vec<String> = op.params.iter().map(|p| p.name.clone()).collect();
        low.push_scope(names.clone());
        let body = low.block(&op.body, 2);
        let args: Vec<String> = std::iter::once("$".to_string()).chain(names.iter().map(|n| format!("v_{n}"))).collect();
        out.push_str(&format!("  app.ops.{} = function ({}) {{\n{body}  }};\n", op.name, args.join(", ")));
    }
    for s in screen_scripts {
        out.push_str(s);
    }
    out.push_str("  if (typeof module !== \"undefined\" && module.exports) module.exports = app;\n");
    out.push_str("  else root.muitApp = app;\n");
    out.push_str("})(typeof globalThis !== \"undefined\" ? globalThis : this);\n");
    out
}

pub fn compile(m: &DslModule, opts: &CompileOptions) -> Result<PageBundle, CodegenError> {
    let diags = check(m);
    if has_errors(&diags) {
        return Err(CodegenError::NotCompilable(diags));
    }
    let screens = effective_screens(m);
    let synthesized = m.screens.is_empty();
    let entry = screens[0].name.clone();
    let module_name = if m.name.is_empty() { "main".to_string() } else { m.name.clone() };
    let name = opts.name.clone().unwrap_or_else(|| module_name.clone());

    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut bindings = BTreeMap::new();
    let mut rules = BTreeMap::new();
    let mut scripts = Vec::new();
    let mut entries = Vec::new();
    for s in &screens {
        let out = html::ScreenWalker::new(m, s).run()?;
        let doc_path = format!("screens/{}.html", s.name);
        files.insert(doc_path.clone(), document(&module_name, s, &out.body).into_bytes());
        let mut assets = vec![doc_path.clone()];
        assets.extend(SHARED_ASSETS.iter().map(|a| a.to_string()));
        assets.sort();
        entries.push(ScreenEntry { name: s.name.clone(), document: doc_path, params: params(&s.params), cacheable: s.cached_offline, assets, synthesized });
        bindings.insert(s.name.clone(), out.bindings);
        rules.insert(s.name.clone(), out.rules);
        scripts.push(out.script);
    }
    files.insert("styles/base.css".into(), BASE_CSS.as_bytes().to_vec());
    files.insert("styles/ios.css".into(), IOS_CSS.as_bytes().to_vec());
    files.insert("styles/android.css".into(), ANDROID_CSS.as_bytes().to_vec());
    files.insert("assets/runtime.js".into(), RUNTIME_JS.as_bytes().to_vec());
    files.insert("app.js".into(), app_js(m, &entry, &scripts).into_bytes());

    let screen_names: Vec<String> = screens.iter().map(|s| s.name.clone()).collect();
    let navigation = build_navigation(&entry, &screen_names, &bindings);
    let assets = files
        .iter()
        .map(|(path, bytes)| AssetEntry { path: path.clone(), media_type: media_type(path).into(), bytes: bytes.len(), sha256: sha256_hex(bytes) })
        .collect();
    let mut it = Interpreter::new(m);
    let entities = m
        .entities
        .iter()
        .map(|e| {
            let defaults = it.entity_defaults(&e.name);
            EntitySpec {
                name: e.name.clone(),
                key: crate::dsl::eval::entity_key(m, &e.name),
                properties: e
                    .properties
                    .iter()
                    .map(|p| PropertySpec {
                        name: p.name.clone(),
                        ty: type_name(&p.ty),
                        default: defaults.get(&p.name).map(|v| v.to_json()).unwrap_or(serde_json::Value::Null),
                    })
                    .collect(),
            }
        })
        .collect();
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        name,
        module: module_name,
        entry,
        offline: emit_offline_manifest(&entries),
        screens: entries,
        navigation,
        bindings,
        rules,
        operations: m.operations.iter().map(|o| OperationSpec { name: o.name.clone(), params: params(&o.params), is_async: o.is_async }).collect(),
        entities,
        assets,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    files.insert(MANIFEST_PATH.into(), json.into_bytes());
    Ok(PageBundle { manifest, files })
}

/// The bindings of `manifest` whose targets do not resolve.
pub fn unresolved_bindings(manifest: &Manifest) -> Vec<(String, Binding)> {
    let mut out = Vec::new();
    for (screen, bs) in &manifest.bindings {
        for b in bs {
            let ok = match &b.action {
                Action::Operation { name, .. } => manifest.operation(name).is_some(),
                Action::Navigate { screen, .. } => manifest.screen(screen).is_some(),
                _ => true,
            };
            if !ok {
                out.push((screen.clone(), b.clone()));
            }
        }
    }
    out
}
