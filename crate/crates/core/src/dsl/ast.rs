//! Syntax tree for MUIT modules.
//!
//! Every node that can carry a diagnostic has a [`NodeId`]; its source
//! location lives in [`DslModule::source_span_index`] so that two trees can be
//! compared structurally without spans getting in the way.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::diag::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DslModule {
    pub name: String,
    pub vars: Vec<VarDecl>,
    pub entities: Vec<EntityDecl>,
    pub operations: Vec<OperationDecl>,
    pub screens: Vec<ScreenDecl>,
    pub widgets: Vec<WidgetDecl>,
    pub touches: Vec<TouchDecl>,
    #[serde(skip)]
    pub source_span_index: BTreeMap<NodeId, Span>,
}

impl DslModule {
    pub fn span(&self, id: NodeId) -> Span {
        self.source_span_index.get(&id).copied().unwrap_or_default()
    }

    pub fn entity(&self, name: &str) -> Option<&EntityDecl> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn operation(&self, name: &str) -> Option<&OperationDecl> {
        self.operations.iter().find(|o| o.name == name)
    }

    pub fn screen(&self, name: &str) -> Option<&ScreenDecl> {
        self.screens.iter().find(|s| s.name == name)
    }

    pub fn widget(&self, name: &str) -> Option<&WidgetDecl> {
        self.widgets.iter().find(|w| w.name == name)
    }

    pub fn touch(&self, name: &str) -> Option<&TouchDecl> {
        self.touches.iter().find(|t| t.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
            && self.entities.is_empty()
            && self.operations.is_empty()
            && self.screens.is_empty()
            && self.widgets.is_empty()
            && self.touches.is_empty()
    }

    /// The tree as JSON with node ids removed, for structural comparison.
    pub fn structure(&self) -> serde_json::Value {
        fn strip(v: &mut serde_json::Value) {
            match v {
                serde_json::Value::Object(map) => {
                    map.remove("id");
                    map.values_mut().for_each(strip);
                }
                serde_json::Value::Array(items) => items.iter_mut().for_each(strip),
                _ => {}
            }
        }
        let mut value = serde_json::to_value(self).expect("ast serializes");
        strip(&mut value);
        value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub name: String,
    pub args: Vec<Expr>,
}

/// A type as written in source: `String`, `Task`, `list<Task>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeRef {
    pub name: String,
    pub arg: Option<Box<TypeRef>>,
}

impl TypeRef {
    pub fn named(name: impl Into<String>) -> Self {
        TypeRef { name: name.into(), arg: None }
    }

    pub fn list_of(inner: TypeRef) -> Self {
        TypeRef { name: "list".into(), arg: Some(Box::new(inner)) }
    }
}

impl std::fmt::Display for TypeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.arg {
            Some(arg) => write!(f, "{}<{}>", self.name, arg),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDecl {
    pub id: NodeId,
    pub name: String,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityDecl {
    pub id: NodeId,
    pub name: String,
    pub annotations: Vec<Annotation>,
    pub properties: Vec<Property>,
}

impl EntityDecl {
    pub fn property(&self, name: &str) -> Option<&Property> {
        self.properties.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub id: NodeId,
    pub name: String,
    pub ty: TypeRef,
    pub default: Option<Expr>,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub id: NodeId,
    pub name: String,
    pub ty: TypeRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationDecl {
    pub id: NodeId,
    pub name: String,
    pub is_async: bool,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenDecl {
    pub id: NodeId,
    pub name: String,
    pub annotations: Vec<Annotation>,
    pub params: Vec<Param>,
    pub items: Vec<ScreenItem>,
    pub cached_offline: bool,
}

impl ScreenDecl {
    /// The unconditional header, if any.
    pub fn header(&self) -> Option<(&Expr, &[ScreenItem])> {
        self.items.iter().find_map(|item| match item {
            ScreenItem::Header { title, items, .. } => Some((title, items.as_slice())),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScreenItem {
    Header { id: NodeId, title: Expr, items: Vec<ScreenItem> },
    Import { id: NodeId, target: String, args: Vec<Expr> },
    Handler { id: NodeId, controls: Vec<Control> },
    Rule(Rule),
    Var(VarDecl),
    Repeat { id: NodeId, var: String, iter: Expr, items: Vec<ScreenItem> },
    Markup(Markup),
    Control(Control),
}

/// A UI control such as `button { "Done", onClick = { ... } }`.
///
/// A bare expression part without a trailing `;` is the label; one with a
/// trailing `;` is an action bound to the default event (`onClick`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub id: NodeId,
    pub tag: String,
    pub name: Option<String>,
    pub label: Option<Expr>,
    pub attrs: Vec<Attr>,
    pub actions: Vec<Stmt>,
    pub children: Vec<ScreenItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attr {
    pub name: String,
    pub value: Expr,
}

impl Attr {
    pub fn is_event(&self) -> bool {
        is_event_name(&self.name)
    }
}

pub fn is_event_name(name: &str) -> bool {
    name.len() > 2 && name.starts_with("on") && name[2..].starts_with(|c: char| c.is_ascii_uppercase() || c.is_ascii_lowercase())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Markup {
    pub id: NodeId,
    pub tag: String,
    pub attrs: Vec<Attr>,
    pub children: Vec<MarkupChild>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MarkupChild {
    Text(String),
    Item(ScreenItem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: NodeId,
    pub branches: Vec<RuleBranch>,
    pub otherwise: Option<Vec<ScreenItem>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBranch {
    pub context: Context,
    pub items: Vec<ScreenItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    When,
    Where,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub trigger: Trigger,
    pub condition: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidgetDecl {
    pub id: NodeId,
    pub kind: String,
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<WidgetItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WidgetItem {
    Stmt(Stmt),
    Markup(Markup),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchDecl {
    pub id: NodeId,
    pub kind: String,
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stmt {
    pub id: NodeId,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StmtKind {
    /// `var x = e;` is an assignment that also declares `x`.
    Var { name: String, init: Option<Expr> },
    Assign { target: Expr, value: Expr },
    Foreach { var: String, iter: Expr, body: Vec<Stmt> },
    If { branches: Vec<(Expr, Vec<Stmt>)>, otherwise: Option<Vec<Stmt>> },
    Return(Option<Expr>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expr {
    pub id: NodeId,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExprKind {
    Str(String),
    Int(i64),
    DateTime(String),
    Bool(bool),
    Null,
    Var(String),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Unary { op: UnOp, operand: Box<Expr> },
    Call { callee: Box<Expr>, args: Vec<Expr> },
    Member { object: Box<Expr>, field: String },
    List(Vec<Expr>),
    Block(Vec<Stmt>),
}

impl Expr {
    /// `a.b.c` as a dotted path when the expression is a pure member chain.
    pub fn path(&self) -> Option<String> {
        match &self.kind {
            ExprKind::Var(name) => Some(name.clone()),
            ExprKind::Member { object, field } => object.path().map(|p| format!("{p}.{field}")),
            _ => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(
            self.kind,
            ExprKind::Str(_) | ExprKind::Int(_) | ExprKind::DateTime(_) | ExprKind::Bool(_) | ExprKind::Null
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Rem,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    And,
    Or,
    In,
}

impl BinOp {
    pub const ALL: [BinOp; 13] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Rem,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Gt,
        BinOp::Le,
        BinOp::Ge,
        BinOp::And,
        BinOp::Or,
        BinOp::In,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::In => "in",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::In => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Rem => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Not,
    Neg,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Not => "!",
            UnOp::Neg => "-",
        }
    }
}

/// Calls `f` on every expression reachable from `stmts`, outermost first.
pub fn walk_stmts<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    for s in stmts {
        walk_stmt(s, f);
    }
}

pub fn walk_stmt<'a>(stmt: &'a Stmt, f: &mut dyn FnMut(&'a Expr)) {
    match &stmt.kind {
        StmtKind::Var { init, .. } => {
            if let Some(e) = init {
                walk_expr(e, f);
            }
        }
        StmtKind::Assign { target, value } => {
            walk_expr(target, f);
            walk_expr(value, f);
        }
        StmtKind::Foreach { iter, body, .. } => {
            walk_expr(iter, f);
            walk_stmts(body, f);
        }
        StmtKind::If { branches, otherwise } => {
            for (cond, body) in branches {
                walk_expr(cond, f);
                walk_stmts(body, f);
            }
            if let Some(body) = otherwise {
                walk_stmts(body, f);
            }
        }
        StmtKind::Return(e) => {
            if let Some(e) = e {
                walk_expr(e, f);
            }
        }
        StmtKind::Expr(e) => walk_expr(e, f),
    }
}

pub fn walk_expr<'a>(expr: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    f(expr);
    match &expr.kind {
        ExprKind::Binary { lhs, rhs, .. } => {
            walk_expr(lhs, f);
            walk_expr(rhs, f);
        }
        ExprKind::Unary { operand, .. } => walk_expr(operand, f),
        ExprKind::Call { callee, args } => {
            walk_expr(callee, f);
            args.iter().for_each(|a| walk_expr(a, f));
        }
        ExprKind::Member { object, .. } => walk_expr(object, f),
        ExprKind::List(items) => items.iter().for_each(|a| walk_expr(a, f)),
        ExprKind::Block(stmts) => walk_stmts(stmts, f),
        _ => {}
    }
}
