//! Lowering of DSL statements and expressions to plain JavaScript.
//!
//! Generated functions take the runtime environment `$` as first argument:
//! `$.vars` (module variables), `$.s` (screen params and locals), `$.ctx`
//! (context snapshot), `$.ops` (operations) and `$.api` (builtins).

use std::collections::BTreeSet;

use crate::dsl::ast::*;
use crate::dsl::check::widget_member_names;
use crate::dsl::types::{builtin_function, CONTEXT_ROOTS};

pub fn js_string(s: &str) -> String {
    let quoted = serde_json::to_string(s).expect("strings serialize");
    // keep generated scripts safe to inline in HTML
    quoted.replace("</", "<\\/").replace('\u{2028}', "\\u2028").replace('\u{2029}', "\\u2029")
}

pub struct Lowerer<'m> {
    m: &'m DslModule,
    scopes: Vec<BTreeSet<String>>,
    screen: BTreeSet<String>,
}

impl<'m> Lowerer<'m> {
    pub fn new(m: &'m DslModule) -> Self {
        Lowerer { m, scopes: Vec::new(), screen: BTreeSet::new() }
    }

    /// Names resolving to `$.s` (screen params and screen-level vars).
    pub fn with_screen(m: &'m DslModule, screen: &ScreenDecl) -> Self {
        let mut names: BTreeSet<String> = screen.params.iter().map(|p| p.name.clone()).collect();
        collect_screen_vars(&screen.items, &mut names);
        Lowerer { m, scopes: Vec::new(), screen: names }
    }

    pub fn push_scope<I: IntoIterator<Item = String>>(&mut self, names: I) {
        self.scopes.push(names.into_iter().collect());
    }

    pub fn pop_scope(&mut self) {
        self.scopes.pop();
    }

    fn is_local(&self, name: &str) -> bool {
        self.scopes.iter().any(|s| s.contains(name))
    }

    fn var(&self, name: &str) -> String {
        if self.is_local(name) {
            format!("v_{name}")
        } else if self.screen.contains(name) {
            format!("$.s.{name}")
        } else if self.m.vars.iter().any(|v| v.name == name) {
            format!("$.vars.{name}")
        } else if self.m.widget(name).is_some() {
            format!("$.widget({})", js_string(name))
        } else if self.m.screen(name).is_some() || self.m.operation(name).is_some() || self.m.touch(name).is_some() {
            js_string(name)
        } else if name == "option" {
            "$.option".to_string()
        } else if CONTEXT_ROOTS.contains(&name) {
            format!("$.ctx.{name}")
        } else {
            format!("$.api.{name}")
        }
    }

    fn is_value_name(&self, name: &str) -> bool {
        self.is_local(name) || self.screen.contains(name) || self.m.vars.iter().any(|v| v.name == name)
    }

    pub fn expr(&mut self, e: &Expr) -> String {
        match &e.kind {
            ExprKind::Str(s) | ExprKind::DateTime(s) => js_string(s),
            ExprKind::Int(v) => v.to_string(),
            ExprKind::Bool(b) => b.to_string(),
            ExprKind::Null => "null".into(),
            ExprKind::Var(name) => self.var(name),
            ExprKind::Binary { op, lhs, rhs } => {
                let (l, r) = (self.expr(lhs), self.expr(rhs));
                match op {
                    BinOp::Eq => format!("({l} === {r})"),
                    BinOp::Ne => format!("({l} !== {r})"),
                    BinOp::In => format!("$.api.contains({r}, {l})"),
                    other => format!("({l} {} {r})", other.symbol()),
                }
            }
            ExprKind::Unary { op, operand } => format!("({}{})", op.symbol(), self.expr(operand)),
            ExprKind::Member { object, field } => {
                if let ExprKind::Var(root) = &object.kind {
                    if !self.is_value_name(root) {
                        if let Some(w) = self.m.widget(root) {
                            if widget_member_names(w).contains(field) && self.m.vars.iter().any(|v| &v.name == field) {
                                return format!("$.vars.{field}");
                            }
                        }
                    }
                }
                format!("{}?.{field}", self.expr(object))
            }
            ExprKind::Call { callee, args } => self.call(callee, args),
            ExprKind::List(items) => format!("[{}]", items.iter().map(|i| self.expr(i)).collect::<Vec<_>>().join(", ")),
            ExprKind::Block(stmts) => format!("(function () {{ {} }})", self.stmts_inline(stmts)),
        }
    }

    fn args(&mut self, args: &[Expr]) -> Vec<String> {
        args.iter().map(|a| self.expr(a)).collect()
    }

    fn call(&mut self, callee: &Expr, args: &[Expr]) -> String {
        match &callee.kind {
            ExprKind::Var(name) if !self.is_value_name(name) && self.m.operation(name).is_some() => {
                let mut a = vec!["$".to_string()];
                a.extend(self.args(args));
                format!("$.ops.{name}({})", a.join(", "))
            }
            ExprKind::Var(name) if !self.is_value_name(name) && builtin_function(name).is_some() => {
                format!("$.api.{name}({})", self.args(args).join(", "))
            }
            ExprKind::Member { object, field } => {
                if let ExprKind::Var(root) = &object.kind {
                    if !self.is_value_name(root) {
                        if self.m.entity(root).is_some() {
                            return format!("$.api.entity({}).{field}({})", js_string(root), self.args(args).join(", "));
                        }
                        if matches!(root.as_str(), "history" | "DateTime") {
                            return format!("$.api.{root}.{field}({})", self.args(args).join(", "));
                        }
                    }
                }
                let recv = self.expr(object);
                let mut a = vec![recv];
                a.extend(self.args(args));
                format!("$.api.dt.{field}({})", a.join(", "))
            }
            _ => format!("({})({})", self.expr(callee), self.args(args).join(", ")),
        }
    }

    fn target(&mut self, e: &Expr) -> String {
        match &e.kind {
            ExprKind::Member { object, field } => format!("{}.{field}", self.target(object)),
            _ => self.expr(e),
        }
    }

    pub fn stmts_inline(&mut self, stmts: &[Stmt]) -> String {
        let mut out = String::new();
        self.push_scope(std::iter::empty());
        for s in stmts {
            self.stmt(s, &mut out, 0, true);
        }
        self.pop_scope();
        out.trim_end().to_string()
    }

    /// Statements as an indented block body.
    pub fn block(&mut self, stmts: &[Stmt], indent: usize) -> String {
        let mut out = String::new();
        self.push_scope(std::iter::empty());
        for s in stmts {
            self.stmt(s, &mut out, indent, false);
        }
        self.pop_scope();
        out
    }

    fn stmt(&mut self, s: &Stmt, out: &mut String, indent: usize, inline: bool) {
        let pad = if inline { String::new() } else { "  ".repeat(indent) };
        let nl = if inline { " " } else { "\n" };
        match &s.kind {
            StmtKind::Var { name, init } => {
                let v = init.as_ref().map(|e| self.expr(e)).unwrap_or_else(|| "null".into());
                if self.is_value_name(name) {
                    out.push_str(&format!("{pad}{} = {v};{nl}", self.var(name)));
                } else {
                    if let Some(scope) = self.scopes.last_mut() {
                        scope.insert(name.clone());
                    }
                    out.push_str(&format!("{pad}let v_{name} = {v};{nl}"));
                }
            }
            StmtKind::Assign { target, value } => {
                let (t, v) = (self.target(target), self.expr(value));
                out.push_str(&format!("{pad}{t} = {v};{nl}"));
            }
            StmtKind::Foreach { var, iter, body } => {
                let it = self.expr(iter);
                out.push_str(&format!("{pad}for (const v_{var} of $.api.iter({it})) {{{nl}"));
                self.push_scope([var.clone()]);
                for b in body {
                    self.stmt(b, out, indent + 1, inline);
                }
                self.pop_scope();
                out.push_str(&format!("{pad}}}{nl}"));
            }
            StmtKind::If { branches, otherwise } => {
                for (i, (cond, body)) in branches.iter().enumerate() {
                    let c = self.expr(cond);
                    let kw = if i == 0 { format!("{pad}if") } else { " else if".to_string() };
                    out.push_str(&format!("{kw} ({c}) {{{nl}"));
                    self.push_scope(std::iter::empty());
                    for b in body {
                        self.stmt(b, out, indent + 1, inline);
                    }
                    self.pop_scope();
                    out.push_str(&format!("{pad}}}"));
                }
                if let Some(body) = otherwise {
                    out.push_str(&format!(" else {{{nl}"));
                    self.push_scope(std::iter::empty());
                    for b in body {
                        self.stmt(b, out, indent + 1, inline);
                    }
                    self.pop_scope();
                    out.push_str(&format!("{pad}}}"));
                }
                out.push_str(nl);
            }
            StmtKind::Return(v) => match v {
                Some(e) => {
                    let v = self.expr(e);
                    out.push_str(&format!("{pad}return {v};{nl}"));
                }
                None => out.push_str(&format!("{pad}return;{nl}")),
            },
            StmtKind::Expr(e) => {
                let v = self.expr(e);
                out.push_str(&format!("{pad}{v};{nl}"));
            }
        }
    }
}

fn collect_screen_vars(items: &[ScreenItem], out: &mut BTreeSet<String>) {
    for item in items {
        match item {
            ScreenItem::Var(v) => {
                out.insert(v.name.clone());
            }
            ScreenItem::Header { items, .. } | ScreenItem::Repeat { items, .. } => collect_screen_vars(items, out),
            ScreenItem::Rule(r) => {
                for b in &r.branches {
                    collect_screen_vars(&b.items, out);
                }
                if let Some(items) = &r.otherwise {
                    collect_screen_vars(items, out);
                }
            }
            ScreenItem::Markup(m) => {
                for c in &m.children {
                    if let MarkupChild::Item(i) = c {
                        collect_screen_vars(std::slice::from_ref(i), out);
                    }
                }
            }
            _ => {}
        }
    }
}

/// A rule condition over the context snapshot `ctx`.
pub fn condition(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Str(s) | ExprKind::DateTime(s) => js_string(s),
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Null => "null".into(),
        ExprKind::Var(name) => format!("ctx.{name}"),
        ExprKind::Member { object, field } => format!("{}.{field}", condition(object)),
        ExprKind::Binary { op, lhs, rhs } => {
            let (l, r) = (condition(lhs), condition(rhs));
            match op {
                BinOp::Eq => format!("({l} === {r})"),
                BinOp::Ne => format!("({l} !== {r})"),
                BinOp::In => format!("(Array.isArray({r}) && {r}.includes({l}))"),
                other => format!("({l} {} {r})", other.symbol()),
            }
        }
        ExprKind::Unary { op, operand } => format!("({}{})", op.symbol(), condition(operand)),
        // excluded by the checker
        _ => "false".into(),
    }
}
