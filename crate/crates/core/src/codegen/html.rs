//! Per-screen lowering: HTML document, binding table and script fragments.

use crate::dsl::ast::*;
use crate::dsl::pretty::pretty_expr;

use super::js::{self, js_string, Lowerer};
use super::{Action, Binding, BranchSpec, CodegenError, RuleSpec};

const VOID_TAGS: &[&str] = &["area", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track", "wbr"];
const URL_ATTRS: &[&str] = &["src", "href", "action", "poster", "data", "srcset", "formaction"];

pub struct ScreenOutput {
    pub body: String,
    pub bindings: Vec<Binding>,
    pub rules: Vec<RuleSpec>,
    pub script: String,
}

pub fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn escape_attr(s: &str) -> String {
    escape_text(s).replace('"', "&quot;")
}

/// Variable paths an expression reads, outermost first.
pub fn read_paths(e: &Expr, out: &mut Vec<String>) {
    if let Some(p) = e.path() {
        if !out.contains(&p) {
            out.push(p);
        }
        return;
    }
    match &e.kind {
        ExprKind::Binary { lhs, rhs, .. } => {
            read_paths(lhs, out);
            read_paths(rhs, out);
        }
        ExprKind::Unary { operand, .. } => read_paths(operand, out),
        ExprKind::Call { args, .. } => args.iter().for_each(|a| read_paths(a, out)),
        ExprKind::Member { object, .. } => read_paths(object, out),
        ExprKind::List(items) => items.iter().for_each(|a| read_paths(a, out)),
        _ => {}
    }
}

fn is_external(url: &str) -> bool {
    let u = url.trim().to_ascii_lowercase();
    u.starts_with("//") || u.split_once(':').is_some_and(|(scheme, _)| !scheme.is_empty() && scheme.chars().all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c)) && scheme != "data" && scheme != "javascript" && scheme != "about")
}

fn valid_tag(tag: &str) -> bool {
    tag.starts_with(|c: char| c.is_ascii_alphabetic()) && tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
        && !matches!(tag.to_ascii_lowercase().as_str(), "script" | "style" | "iframe" | "object" | "base" | "link" | "meta")
}

pub struct ScreenWalker<'m> {
    m: &'m DslModule,
    screen: &'m ScreenDecl,
    low: Lowerer<'m>,
    html: String,
    bindings: Vec<Binding>,
    rules: Vec<RuleSpec>,
    handlers: Vec<(String, String)>,
    views: Vec<(String, String)>,
    rule_fns: Vec<(String, Vec<String>)>,
    init: String,
    repeat_vars: Vec<String>,
    rule_depth: usize,
}

impl<'m> ScreenWalker<'m> {
    pub fn new(m: &'m DslModule, screen: &'m ScreenDecl) -> Self {
        ScreenWalker {
            m,
            screen,
            low: Lowerer::with_screen(m, screen),
            html: String::new(),
            bindings: Vec::new(),
            rules: Vec::new(),
            handlers: Vec::new(),
            views: Vec::new(),
            rule_fns: Vec::new(),
            init: String::new(),
            repeat_vars: Vec::new(),
            rule_depth: 0,
        }
    }

    pub fn run(mut self) -> Result<ScreenOutput, CodegenError> {
        let items = &self.screen.items;
        self.items(items, "", 1)?;
        Ok(ScreenOutput { script: self.script(), body: self.html, bindings: self.bindings, rules: self.rules })
    }

    fn id(&self, path: &str) -> String {
        format!("{}__{}", self.screen.name, path)
    }

    fn child_path(path: &str, i: usize) -> String {
        if path.is_empty() {
            i.to_string()
        } else {
            format!("{path}-{i}")
        }
    }

    fn line(&mut self, indent: usize, s: &str) {
        for _ in 0..indent {
            self.html.push_str("  ");
        }
        self.html.push_str(s);
        self.html.push('\n');
    }

    fn fn_prelude(&self) -> String {
        self.repeat_vars.iter().map(|v| format!("const v_{v} = locals.{v}; ")).collect()
    }

    fn items(&mut self, items: &[ScreenItem], path: &str, indent: usize) -> Result<(), CodegenError> {
        for (i, item) in items.iter().enumerate() {
            self.item(item, &Self::child_path(path, i), indent)?;
        }
        Ok(())
    }

    fn add_view(&mut self, element: &str, slot: &str, e: &Expr) {
        let body = self.low.expr(e);
        let key = format!("{element}:{slot}");
        self.views.push((key, format!("function ($, locals) {{ {}return {body}; }}", self.fn_prelude())));
        let mut watch = Vec::new();
        read_paths(e, &mut watch);
        self.bindings.push(Binding { element: element.into(), event: format!("render:{slot}"), action: Action::View, watch });
    }

    fn add_handler(&mut self, element: &str, event: &str, stmts: &[Stmt], params: &[(String, String)]) -> Result<(), CodegenError> {
        let action = self.classify(stmts)?;
        let mut watch = Vec::new();
        match &action {
            Action::Operation { .. } | Action::Navigate { .. } => {
                for s in stmts {
                    walk_stmt(s, &mut |e| {
                        if let ExprKind::Call { args, .. } = &e.kind {
                            for a in args {
                                if !matches!(a.kind, ExprKind::Block(_)) {
                                    read_paths(a, &mut watch);
                                }
                            }
                        }
                    });
                }
            }
            Action::Assign { path } => watch.push(path.clone()),
            _ => {}
        }
        let watch = watch.into_iter().filter(|p| self.m.screen(p).is_none()).collect();
        let mut prelude = self.fn_prelude();
        let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
        for (name, value) in params {
            prelude.push_str(&format!("const v_{name} = {value}; "));
        }
        self.low.push_scope(names);
        let body = self.low.stmts_inline(stmts);
        self.low.pop_scope();
        self.handlers.push((format!("{element}:{event}"), format!("function ($, locals) {{ {prelude}{body} }}")));
        self.bindings.push(Binding { element: element.into(), event: event.into(), action, watch });
        Ok(())
    }

    /// What a block of statements does, judged by its first effectful call.
    fn classify(&self, stmts: &[Stmt]) -> Result<Action, CodegenError> {
        let mut found: Option<Result<Action, CodegenError>> = None;
        let rule_depth = self.rule_depth;
        for s in stmts {
            walk_stmt(s, &mut |e| {
                if found.is_some() {
                    return;
                }
                let ExprKind::Call { callee, args } = &e.kind else { return };
                match &callee.kind {
                    ExprKind::Var(name) if self.m.operation(name).is_some() => {
                        found = Some(Ok(Action::Operation { name: name.clone(), args: args.iter().map(pretty_expr).collect() }));
                    }
                    ExprKind::Var(name) if name == "navigate" => {
                        let target = args.first().and_then(|a| a.path()).unwrap_or_default();
                        found = Some(if self.m.screen(&target).is_some() {
                            Ok(Action::Navigate {
                                screen: target,
                                args: args.iter().skip(1).map(pretty_expr).collect(),
                                mode: if rule_depth > 0 { "cascade".into() } else { "push".into() },
                            })
                        } else {
                            Err(CodegenError::UnknownNavigationTarget { screen: self.screen.name.clone(), target })
                        });
                    }
                    ExprKind::Member { object, field } if matches!(&object.kind, ExprKind::Var(h) if h == "history") => {
                        let delta = match args.first().map(|a| &a.kind) {
                            Some(ExprKind::Int(d)) => *d,
                            Some(ExprKind::Unary { op: UnOp::Neg, operand }) => match operand.kind {
                                ExprKind::Int(d) => -d,
                                _ => -1,
                            },
                            _ => -1,
                        };
                        let _ = field;
                        found = Some(Ok(Action::Back { delta }));
                    }
                    _ => {}
                }
            });
        }
        if let Some(r) = found {
            return r;
        }
        if let [Stmt { kind: StmtKind::Assign { target, .. }, .. }] = stmts {
            if let Some(path) = target.path() {
                return Ok(Action::Assign { path });
            }
        }
        Ok(Action::Script)
    }

    fn attrs(&mut self, id: &str, attrs: &[Attr], out: &mut String) -> Result<(), CodegenError> {
        for a in attrs {
            let name = a.name.to_ascii_lowercase();
            if a.is_event() {
                let event = name[2..].to_string();
                let stmts = match &a.value.kind {
                    ExprKind::Block(stmts) => stmts.clone(),
                    _ => vec![Stmt { id: NodeId(0), kind: StmtKind::Expr(a.value.clone()) }],
                };
                self.add_handler(id, &event, &stmts, &[])?;
                continue;
            }
            if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') || name.is_empty() {
                return Err(CodegenError::InvalidMarkup { screen: self.screen.name.clone(), detail: format!("attribute name `{}`", a.name) });
            }
            let name = if name == "id" { "data-muit-id".to_string() } else { name };
            match &a.value.kind {
                ExprKind::Str(s) | ExprKind::DateTime(s) => {
                    if URL_ATTRS.contains(&name.as_str()) && is_external(s) {
                        return Err(CodegenError::ExternalReference { screen: self.screen.name.clone(), url: s.clone() });
                    }
                    out.push_str(&format!(" {name}=\"{}\"", escape_attr(s)));
                }
                ExprKind::Int(v) => out.push_str(&format!(" {name}=\"{v}\"")),
                ExprKind::Bool(b) => out.push_str(&format!(" {name}=\"{b}\"")),
                ExprKind::Null => {}
                _ => {
                    out.push_str(&format!(" data-view-{name}"));
                    self.add_view(id, &format!("attr:{name}"), &a.value);
                    if name == "value" {
                        if let Some(path) = a.value.path() {
                            let target = a.value.clone();
                            let assign = Stmt {
                                id: NodeId(0),
                                kind: StmtKind::Assign {
                                    target,
                                    value: Expr { id: NodeId(0), kind: ExprKind::Member { object: Box::new(var("$event")), field: "value".into() } },
                                },
                            };
                            let _ = path;
                            self.add_handler(id, "input", &[assign], &[("$event".into(), "locals.$event".into())])?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn label(&mut self, id: &str, label: Option<&Expr>) -> String {
        match label.map(|l| &l.kind) {
            None => String::new(),
            Some(ExprKind::Str(s)) => escape_text(s),
            Some(ExprKind::Int(v)) => v.to_string(),
            Some(ExprKind::Var(n)) if self.m.screen(n).is_some() && !self.screen.params.iter().any(|p| &p.name == n) => escape_text(n),
            Some(_) => {
                self.add_view(id, "text", label.expect("checked"));
                String::new()
            }
        }
    }

    fn item(&mut self, item: &ScreenItem, path: &str, indent: usize) -> Result<(), CodegenError> {
        let id = self.id(path);
        match item {
            ScreenItem::Header { title, items, .. } => {
                self.line(indent, &format!("<header id=\"{id}\" class=\"muit-header\">"));
                let tid = format!("{id}-t");
                let text = self.label(&tid, Some(title));
                let view = if text.is_empty() { " data-view-text" } else { "" };
                self.line(indent + 1, &format!("<h1 id=\"{tid}\"{view}>{text}</h1>"));
                self.items(items, path, indent + 1)?;
                self.line(indent, "</header>");
            }
            ScreenItem::Import { target, args, .. } => {
                if let Some(w) = self.m.widget(target) {
                    self.line(indent, &format!("<div id=\"{id}\" class=\"muit-widget muit-{}\" data-widget=\"{}\">", escape_attr(&w.kind), escape_attr(target)));
                    let mut stmts = Vec::new();
                    let mut k = 0;
                    for wi in &w.body {
                        match wi {
                            WidgetItem::Stmt(s) => stmts.push(s.clone()),
                            WidgetItem::Markup(mk) => {
                                self.markup(mk, &Self::child_path(path, k), indent + 1)?;
                                k += 1;
                            }
                        }
                    }
                    self.line(indent, "</div>");
                    if !stmts.is_empty() {
                        let params: Vec<(String, String)> = w.params.iter().zip(args.iter().map(Some).chain(std::iter::repeat(None)))
                            .map(|(p, a)| (p.name.clone(), a.map(|a| self.low.expr(a)).unwrap_or_else(|| "null".into())))
                            .collect();
                        self.add_handler(&id, "change", &stmts, &params)?;
                    }
                } else if let Some(t) = self.m.touch(target) {
                    self.line(indent, &format!("<div id=\"{id}\" class=\"muit-gesture\" data-gesture=\"{}\" hidden></div>", escape_attr(&t.kind)));
                    let params: Vec<(String, String)> = t.params.iter().zip(args.iter().map(Some).chain(std::iter::repeat(None)))
                        .map(|(p, a)| (p.name.clone(), a.map(|a| self.low.expr(a)).unwrap_or_else(|| "null".into())))
                        .collect();
                    let body = t.body.clone();
                    self.add_handler(&id, &format!("gesture:{}:{}", t.kind, t.name), &body, &params)?;
                } else {
                    return Err(CodegenError::UnknownImport { screen: self.screen.name.clone(), target: target.clone() });
                }
            }
            ScreenItem::Handler { controls, .. } => {
                self.line(indent, &format!("<div id=\"{id}\" class=\"muit-handler\">"));
                for (j, c) in controls.iter().enumerate() {
                    self.control(c, &Self::child_path(path, j), indent + 1)?;
                }
                self.line(indent, "</div>");
            }
            ScreenItem::Rule(rule) => {
                self.line(indent, &format!("<div id=\"{id}\" class=\"muit-rule\" data-rule>"));
                let mut spec = RuleSpec { id: id.clone(), branches: Vec::new(), has_else: rule.otherwise.is_some() };
                let mut fns = Vec::new();
                self.rule_depth += 1;
                for (k, b) in rule.branches.iter().enumerate() {
                    spec.branches.push(BranchSpec {
                        trigger: match b.context.trigger {
                            Trigger::When => "when".into(),
                            Trigger::Where => "where".into(),
                        },
                        condition: pretty_expr(&b.context.condition),
                    });
                    fns.push(format!("function (ctx) {{ return {}; }}", js::condition(&b.context.condition)));
                    self.line(indent + 1, &format!("<template data-branch=\"{k}\">"));
                    self.items(&b.items, &Self::child_path(path, k), indent + 2)?;
                    self.line(indent + 1, "</template>");
                }
                if let Some(items) = &rule.otherwise {
                    self.line(indent + 1, "<template data-branch=\"else\">");
                    self.items(items, &Self::child_path(path, rule.branches.len()), indent + 2)?;
                    self.line(indent + 1, "</template>");
                }
                self.rule_depth -= 1;
                self.line(indent, "</div>");
                self.rules.push(spec);
                self.rule_fns.push((id, fns));
            }
            ScreenItem::Var(v) => {
                let value = v.init.as_ref().map(|e| self.low.expr(e)).unwrap_or_else(|| "null".into());
                self.init.push_str(&format!("$.s.{} = {value}; ", v.name));
            }
            ScreenItem::Repeat { var, iter, items, .. } => {
                self.line(indent, &format!("<template id=\"{id}\" data-repeat=\"{}\" data-view-items>", escape_attr(var)));
                self.add_view(&id, "items", iter);
                self.repeat_vars.push(var.clone());
                self.low.push_scope([var.clone()]);
                self.items(items, path, indent + 1)?;
                self.low.pop_scope();
                self.repeat_vars.pop();
                self.line(indent, "</template>");
            }
            ScreenItem::Markup(mk) => self.markup(mk, path, indent)?,
            ScreenItem::Control(c) => self.control(c, path, indent)?,
        }
        Ok(())
    }

    fn markup(&mut self, mk: &Markup, path: &str, indent: usize) -> Result<(), CodegenError> {
        if !valid_tag(&mk.tag) {
            return Err(CodegenError::InvalidMarkup { screen: self.screen.name.clone(), detail: format!("tag `{}`", mk.tag) });
        }
        let id = self.id(path);
        let tag = mk.tag.to_ascii_lowercase();
        let mut attrs = String::new();
        self.attrs(&id, &mk.attrs, &mut attrs)?;
        if VOID_TAGS.contains(&tag.as_str()) {
            self.line(indent, &format!("<{tag} id=\"{id}\"{attrs}>"));
            return Ok(());
        }
        if mk.children.is_empty() {
            self.line(indent, &format!("<{tag} id=\"{id}\"{attrs}></{tag}>"));
            return Ok(());
        }
        self.line(indent, &format!("<{tag} id=\"{id}\"{attrs}>"));
        for (k, ch) in mk.children.iter().enumerate() {
            match ch {
                MarkupChild::Text(t) => {
                    let t = escape_text(t);
                    self.line(indent + 1, &t);
                }
                MarkupChild::Item(i) => self.item(i, &Self::child_path(path, k), indent + 1)?,
            }
        }
        self.line(indent, &format!("</{tag}>"));
        Ok(())
    }

    fn control(&mut self, c: &Control, path: &str, indent: usize) -> Result<(), CodegenError> {
        let id = self.id(path);
        let mut attrs = String::new();
        if let Some(n) = &c.name {
            attrs.push_str(&format!(" data-name=\"{}\"", escape_attr(n)));
        }
        self.attrs(&id, &c.attrs, &mut attrs)?;
        if !c.actions.is_empty() {
            let actions = c.actions.clone();
            self.add_handler(&id, "click", &actions, &[])?;
        }
        let text = self.label(&id, c.label.as_ref());
        let view = if text.is_empty() && c.label.is_some() { " data-view-text" } else { "" };
        let (open, close) = match c.tag.as_str() {
            "button" => (format!("<button id=\"{id}\" type=\"button\" class=\"muit-button\"{view}{attrs}>"), "</button>".to_string()),
            "item" => (format!("<li id=\"{id}\" class=\"muit-item\"{view}{attrs}>"), "</li>".to_string()),
            other => {
                if !valid_tag(other) {
                    return Err(CodegenError::InvalidMarkup { screen: self.screen.name.clone(), detail: format!("control `{other}`") });
                }
                (format!("<div id=\"{id}\" class=\"muit-{other}\"{view}{attrs}>"), "</div>".to_string())
            }
        };
        if c.children.is_empty() {
            self.line(indent, &format!("{open}{text}{close}"));
        } else {
            self.line(indent, &open);
            if !text.is_empty() {
                self.line(indent + 1, &format!("<span class=\"muit-label\">{text}</span>"));
            }
            self.items(&c.children, path, indent + 1)?;
            self.line(indent, &close);
        }
        Ok(())
    }

    fn script(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("  app.screens[{}] = {{\n", js_string(&self.screen.name)));
        let params: Vec<String> = self.screen.params.iter().map(|p| js_string(&p.name)).collect();
        out.push_str(&format!("    params: [{}],\n", params.join(", ")));
        out.push_str(&format!("    init: function ($) {{ {}}},\n", self.init));
        out.push_str("    rules: {\n");
        for (id, fns) in &self.rule_fns {
            out.push_str(&format!("      {}: [\n", js_string(id)));
            for f in fns {
                out.push_str(&format!("        {f},\n"));
            }
            out.push_str("      ],\n");
        }
        out.push_str("    },\n    views: {\n");
        for (k, f) in &self.views {
            out.push_str(&format!("      {}: {f},\n", js_string(k)));
        }
        out.push_str("    },\n    handlers: {\n");
        for (k, f) in &self.handlers {
            out.push_str(&format!("      {}: {f},\n", js_string(k)));
        }
        out.push_str("    },\n  };\n");
        out
    }
}

fn var(name: &str) -> Expr {
    Expr { id: NodeId(0), kind: ExprKind::Var(name.into()) }
}
