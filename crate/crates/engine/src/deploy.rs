use std::collections::BTreeMap;
use std::sync::Arc;

use muit_core::bridge::Codec;
use muit_core::codegen::{compile, CodegenError, CompileOptions, PageBundle};
use muit_core::dsl::{self, ast::Expr, ast::ExprKind, has_errors, Diagnostic, DslModule};
use muit_core::wsdl::{parse_wsdl, WsdlError};
use parking_lot::RwLock;

#[derive(Debug, thiserror::Error)]
pub enum DeployError {
    #[error("`{0}` is not a valid service name")]
    BadName(String),
    #[error("service `{0}` is already deployed")]
    Duplicate(String),
    #[error("source does not compile: {}", first_error(.0))]
    Source(Vec<Diagnostic>),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Wsdl(#[from] WsdlError),
}

fn first_error(d: &[Diagnostic]) -> String {
    d.iter().find(|d| d.is_error()).map(|d| d.render("source")).unwrap_or_default()
}

/// One service published at `/svc/{name}`.
#[derive(Debug)]
pub struct Deployment {
    pub name: String,
    pub module: DslModule,
    pub bundle: PageBundle,
    pub codec: Codec,
    pub recipient: Option<String>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) && !s.starts_with('.')
}

impl Deployment {
    pub fn from_source(name: &str, source: &str, wsdl: Option<&str>, recipient: Option<String>) -> Result<Self, DeployError> {
        if !valid_name(name) {
            return Err(DeployError::BadName(name.to_string()));
        }
        let (module, diags) = dsl::parse_source(name, source);
        if has_errors(&diags) {
            return Err(DeployError::Source(diags));
        }
        let bundle = compile(&module, &CompileOptions { name: Some(name.to_string()) })?;
        let codec = match wsdl {
            Some(text) => Codec::from_wsdl(parse_wsdl(text)?),
            None => Codec::schemaless(Some(&format!("urn:muit:{name}"))),
        };
        Ok(Deployment { name: name.to_string(), module, bundle, codec, recipient })
    }

    /// The screen that presents `operation`: one named after it, otherwise
    /// the bundle's entry screen.
    pub fn screen_for(&self, operation: &str) -> &str {
        match self.bundle.manifest.screen(operation) {
            Some(s) => &s.name,
            None => &self.bundle.manifest.entry,
        }
    }

    /// Stakeholder named by a `@role("...")` property of an entity the
    /// operation takes.
    pub fn role_for(&self, operation: &str) -> Option<String> {
        let op = self.module.operation(operation)?;
        op.params.iter().filter_map(|p| self.module.entity(&p.ty.name)).find_map(|e| {
            e.properties.iter().flat_map(|p| &p.annotations).filter(|a| a.name == "role").find_map(|a| match a.args.first() {
                Some(Expr { kind: ExprKind::Str(s), .. }) => Some(s.clone()),
                _ => None,
            })
        })
    }
}

/// Read-mostly map of deployments; writers swap in a new map.
#[derive(Default)]
pub struct Registry {
    map: RwLock<Arc<BTreeMap<String, Arc<Deployment>>>>,
}

impl Registry {
    pub fn get(&self, name: &str) -> Option<Arc<Deployment>> {
        self.map.read().get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.map.read().keys().cloned().collect()
    }

    pub fn insert(&self, d: Deployment) -> Result<Arc<Deployment>, DeployError> {
        let mut guard = self.map.write();
        if guard.contains_key(&d.name) {
            return Err(DeployError::Duplicate(d.name));
        }
        let d = Arc::new(d);
        let mut next = (**guard).clone();
        next.insert(d.name.clone(), d.clone());
        *guard = Arc::new(next);
        Ok(d)
    }
}
