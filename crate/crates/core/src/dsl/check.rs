//! Name resolution and type checking.
//!
//! Resolution order for a bare name in value position: locals (innermost
//! first), module vars, widgets, touches, screens, operations, entities,
//! builtins. In callee position operations win over everything else.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::diag::{Code, Diagnostic, Span};
use super::types::*;

/// Checker output: diagnostics plus the resolved type of every expression.
#[derive(Debug, Clone, Default)]
pub struct Analysis {
    pub diagnostics: Vec<Diagnostic>,
    pub types: BTreeMap<NodeId, Type>,
}

impl Analysis {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(Diagnostic::is_error)
    }

    pub fn type_of(&self, id: NodeId) -> Option<&Type> {
        self.types.get(&id)
    }
}

pub fn check(module: &DslModule) -> Vec<Diagnostic> {
    analyze(module).diagnostics
}

pub fn analyze(module: &DslModule) -> Analysis {
    let mut c = Checker {
        m: module,
        diags: Vec::new(),
        types: BTreeMap::new(),
        globals: BTreeMap::new(),
        widget_members: BTreeMap::new(),
        scopes: Vec::new(),
        in_screen: false,
        screen_uses_model: false,
    };
    c.run();
    Analysis { diagnostics: c.diags, types: c.types }
}

/// Names a widget exposes to `widget.member` access: variables it assigns
/// or declares and identifiers bound through markup `value=` attributes.
pub fn widget_member_names(w: &WidgetDecl) -> Vec<String> {
    let mut names = Vec::new();
    let mut push = |n: &str| {
        if !names.iter().any(|x: &String| x == n) {
            names.push(n.to_string());
        }
    };
    fn markup_names(mk: &Markup, push: &mut dyn FnMut(&str)) {
        for a in &mk.attrs {
            if a.name == "value" {
                if let ExprKind::Var(n) = &a.value.kind {
                    push(n);
                }
            }
        }
        for ch in &mk.children {
            if let MarkupChild::Item(ScreenItem::Markup(inner)) = ch {
                markup_names(inner, push);
            }
        }
    }
    fn stmt_names(s: &Stmt, push: &mut dyn FnMut(&str)) {
        match &s.kind {
            StmtKind::Var { name, .. } => push(name),
            StmtKind::Assign { target, .. } => {
                if let ExprKind::Var(n) = &target.kind {
                    push(n);
                }
            }
            StmtKind::Foreach { body, .. } => body.iter().for_each(|s| stmt_names(s, push)),
            StmtKind::If { branches, otherwise } => {
                for (_, b) in branches {
                    b.iter().for_each(|s| stmt_names(s, push));
                }
                if let Some(b) = otherwise {
                    b.iter().for_each(|s| stmt_names(s, push));
                }
            }
            _ => {}
        }
    }
    for item in &w.body {
        match item {
            WidgetItem::Stmt(s) => stmt_names(s, &mut push),
            WidgetItem::Markup(mk) => markup_names(mk, &mut push),
        }
    }
    names
}

struct Checker<'m> {
    m: &'m DslModule,
    diags: Vec<Diagnostic>,
    types: BTreeMap<NodeId, Type>,
    globals: BTreeMap<String, Type>,
    widget_members: BTreeMap<String, BTreeMap<String, Type>>,
    scopes: Vec<BTreeMap<String, Type>>,
    in_screen: bool,
    screen_uses_model: bool,
}

impl<'m> Checker<'m> {
    fn span(&self, id: NodeId) -> Span {
        self.m.span(id)
    }

    fn err(&mut self, code: Code, id: NodeId, msg: impl Into<String>) {
        let span = self.span(id);
        self.diags.push(Diagnostic::error(code, span, msg));
    }

    fn resolve_type(&mut self, r: &TypeRef, at: NodeId) -> Type {
        let m = self.m;
        match Type::from_ref(r, &|n| m.entity(n).is_some()) {
            Ok(t) => t,
            Err(msg) => {
                self.err(Code::UnresolvedName, at, msg);
                Type::Any
            }
        }
    }

    fn run(&mut self) {
        self.duplicates();
        self.entities();
        for v in &self.m.vars {
            let t = match &v.init {
                Some(e) => self.expr(e),
                None => Type::Any,
            };
            let t = if t == Type::Null { Type::Any } else { t };
            self.globals.insert(v.name.clone(), t);
        }
        for op in &self.m.operations {
            self.operation(op);
        }
        for w in &self.m.widgets {
            self.widget(w);
        }
        for t in &self.m.touches {
            self.touch(t);
        }
        for s in &self.m.screens {
            self.screen(s);
        }
        if self.screen_uses_model && self.m.operation("import").is_none() {
            let span = self.m.screens.first().map(|s| self.span(s.id)).unwrap_or_default();
            self.diags.push(Diagnostic::warning(
                Code::MissingImport,
                span,
                "screens use remote data but the module declares no `import` operation",
            ));
        }
    }

    fn duplicates(&mut self) {
        fn dups<'a>(items: impl Iterator<Item = (&'a str, NodeId)>, kind: &str, out: &mut Vec<(NodeId, String)>) {
            let mut seen = BTreeSet::new();
            for (name, id) in items {
                if !seen.insert(name) {
                    out.push((id, format!("duplicate {kind} `{name}`")));
                }
            }
        }
        let m = self.m;
        let mut found = Vec::new();
        dups(m.entities.iter().map(|e| (e.name.as_str(), e.id)), "entity", &mut found);
        dups(m.operations.iter().map(|e| (e.name.as_str(), e.id)), "operation", &mut found);
        dups(m.screens.iter().map(|e| (e.name.as_str(), e.id)), "screen", &mut found);
        dups(m.widgets.iter().map(|e| (e.name.as_str(), e.id)), "widget", &mut found);
        dups(m.touches.iter().map(|e| (e.name.as_str(), e.id)), "touch", &mut found);
        dups(m.vars.iter().map(|e| (e.name.as_str(), e.id)), "variable", &mut found);
        for e in &m.entities {
            dups(e.properties.iter().map(|p| (p.name.as_str(), p.id)), "property", &mut found);
        }
        for (id, msg) in found {
            self.err(Code::DuplicateDeclaration, id, msg);
        }
    }

    fn entities(&mut self) {
        for e in &self.m.entities {
            for p in &e.properties {
                let ty = self.resolve_type(&p.ty, p.id);
                if let Some(d) = &p.default {
                    let dt = self.expr(d);
                    if !compatible(&ty, &dt) {
                        self.err(Code::TypeMismatch, d.id, format!("default of `{}` has type {dt}, expected {ty}", p.name));
                    }
                }
            }
        }
    }

    fn params(&mut self, params: &[Param]) -> BTreeMap<String, Type> {
        let mut scope = BTreeMap::new();
        for p in params {
            let t = self.resolve_type(&p.ty, p.id);
            if scope.insert(p.name.clone(), t).is_some() {
                self.err(Code::DuplicateDeclaration, p.id, format!("duplicate parameter `{}`", p.name));
            }
        }
        scope
    }

    fn operation(&mut self, op: &OperationDecl) {
        let scope = self.params(&op.params);
        if op.is_async {
            let callbacks = scope.values().filter(|t| **t == Type::Callback).count();
            if callbacks != 1 {
                self.err(
                    Code::AsyncCallback,
                    op.id,
                    format!("async operation `{}` must declare exactly one Callback parameter, found {callbacks}", op.name),
                );
            }
        }
        self.scopes.push(scope);
        self.stmts(&op.body);
        self.scopes.pop();
    }

    fn widget(&mut self, w: &WidgetDecl) {
        if !WIDGET_KINDS.contains(&w.kind.as_str()) {
            self.err(Code::UnknownWidgetKind, w.id, format!("unknown widget kind `{}`", w.kind));
        }
        let scope = self.params(&w.params);
        self.scopes.push(scope);
        self.scopes.push(BTreeMap::new());
        for item in &w.body {
            match item {
                WidgetItem::Stmt(s) => self.stmt(s),
                WidgetItem::Markup(mk) => self.markup(mk),
            }
        }
        let locals = self.scopes.pop().unwrap_or_default();
        self.scopes.pop();
        let mut members = BTreeMap::new();
        for name in widget_member_names(w) {
            let t = locals.get(&name).or_else(|| self.globals.get(&name)).cloned().unwrap_or(Type::Any);
            members.insert(name, t);
        }
        self.widget_members.insert(w.name.clone(), members);
    }

    fn touch(&mut self, t: &TouchDecl) {
        if !TOUCH_KINDS.contains(&t.kind.as_str()) {
            self.err(Code::UnknownTouchKind, t.id, format!("unknown touch kind `{}`", t.kind));
        }
        let scope = self.params(&t.params);
        self.scopes.push(scope);
        self.stmts(&t.body);
        self.scopes.pop();
    }

    fn screen(&mut self, s: &ScreenDecl) {
        let scope = self.params(&s.params);
        self.in_screen = true;
        self.scopes.push(scope);
        self.header_count(&s.items, s.id, "screen");
        self.items(&s.items);
        self.scopes.pop();
        self.in_screen = false;
    }

    fn header_count(&mut self, items: &[ScreenItem], at: NodeId, what: &str) {
        let headers: Vec<NodeId> = items
            .iter()
            .filter_map(|i| match i {
                ScreenItem::Header { id, .. } => Some(*id),
                _ => None,
            })
            .collect();
        if headers.len() > 1 {
            let _ = at;
            self.err(Code::DuplicateHeader, headers[1], format!("a {what} has at most one header"));
        }
    }

    fn items(&mut self, items: &[ScreenItem]) {
        for item in items {
            self.item(item);
        }
    }

    fn item(&mut self, item: &ScreenItem) {
        match item {
            ScreenItem::Header { title, items, .. } => {
                self.expr(title);
                self.items(items);
            }
            ScreenItem::Import { id, target, args } => self.import(*id, target, args),
            ScreenItem::Handler { controls, .. } => {
                for c in controls {
                    self.control(c);
                }
            }
            ScreenItem::Rule(r) => self.rule(r),
            ScreenItem::Var(v) => {
                let t = v.init.as_ref().map(|e| self.expr(e)).unwrap_or(Type::Any);
                self.declare(&v.name, t);
            }
            ScreenItem::Repeat { var, iter, items, .. } => {
                let it = self.expr(iter);
                let elem = self.element_type(&it, iter.id);
                self.scopes.push(BTreeMap::from([(var.clone(), elem)]));
                self.items(items);
                self.scopes.pop();
            }
            ScreenItem::Markup(mk) => self.markup(mk),
            ScreenItem::Control(c) => self.control(c),
        }
    }

    fn import(&mut self, id: NodeId, target: &str, args: &[Expr]) {
        let params: Vec<Param> = if let Some(w) = self.m.widget(target) {
            w.params.clone()
        } else if let Some(t) = self.m.touch(target) {
            t.params.clone()
        } else {
            for a in args {
                self.expr(a);
            }
            self.err(Code::UnresolvedWidget, id, format!("unresolved widget `{target}`"));
            return;
        };
        if args.len() > params.len() {
            self.err(Code::Arity, id, format!("`{target}` takes at most {} argument(s), got {}", params.len(), args.len()));
        }
        for (a, p) in args.iter().zip(&params) {
            let at = self.expr(a);
            let pt = self.resolve_type(&p.ty, p.id);
            if !arg_compatible(&pt, &at) {
                self.err(Code::TypeMismatch, a.id, format!("argument `{}` of `{target}` expects {pt}, found {at}", p.name));
            }
        }
        for a in args.iter().skip(params.len()) {
            self.expr(a);
        }
    }

    fn rule(&mut self, r: &Rule) {
        for b in &r.branches {
            let t = self.expr(&b.context.condition);
            if !compatible(&Type::Bool, &t) {
                self.err(Code::TypeMismatch, b.context.condition.id, format!("rule condition must be boolean, found {t}"));
            }
            if let Err(msg) = context_only(&b.context.condition, b.context.trigger) {
                self.err(Code::InvalidContext, b.context.condition.id, msg);
            }
            self.header_count(&b.items, r.id, "rule branch");
            self.scopes.push(BTreeMap::new());
            self.items(&b.items);
            self.scopes.pop();
        }
        if let Some(items) = &r.otherwise {
            self.header_count(items, r.id, "rule branch");
            self.scopes.push(BTreeMap::new());
            self.items(items);
            self.scopes.pop();
        }
    }

    fn control(&mut self, c: &Control) {
        if let Some(l) = &c.label {
            self.expr(l);
        }
        for a in &c.attrs {
            self.expr(&a.value);
        }
        self.scopes.push(BTreeMap::new());
        self.stmts(&c.actions);
        self.scopes.pop();
        self.items(&c.children);
    }

    fn markup(&mut self, mk: &Markup) {
        for a in &mk.attrs {
            self.expr(&a.value);
        }
        for ch in &mk.children {
            if let MarkupChild::Item(i) = ch {
                self.item(i);
            }
        }
    }

    // ---- statements ----

    fn declare(&mut self, name: &str, t: Type) {
        let t = if t == Type::Null || t == Type::Void { Type::Any } else { t };
        if let Some(scope) = self.scopes.last_mut() {
            scope.insert(name.to_string(), t);
        }
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn block(&mut self, stmts: &[Stmt]) {
        self.scopes.push(BTreeMap::new());
        self.stmts(stmts);
        self.scopes.pop();
    }

    fn element_type(&mut self, t: &Type, at: NodeId) -> Type {
        match t {
            Type::List(e) => (**e).clone(),
            Type::Any => Type::Any,
            other => {
                self.err(Code::TypeMismatch, at, format!("foreach needs a list, found {other}"));
                Type::Any
            }
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Var { name, init } => {
                let t = init.as_ref().map(|e| self.expr(e)).unwrap_or(Type::Any);
                self.declare(name, t);
            }
            StmtKind::Assign { target, value } => {
                let vt = self.expr(value);
                if let Some(tt) = self.place(target) {
                    if !compatible(&tt, &vt) {
                        self.err(Code::TypeMismatch, value.id, format!("cannot assign {vt} to a place of type {tt}"));
                    }
                }
            }
            StmtKind::Foreach { var, iter, body } => {
                let it = self.expr(iter);
                let elem = self.element_type(&it, iter.id);
                self.scopes.push(BTreeMap::from([(var.clone(), elem)]));
                self.stmts(body);
                self.scopes.pop();
            }
            StmtKind::If { branches, otherwise } => {
                for (cond, body) in branches {
                    let t = self.expr(cond);
                    if !compatible(&Type::Bool, &t) {
                        self.err(Code::TypeMismatch, cond.id, format!("condition must be boolean, found {t}"));
                    }
                    self.block(body);
                }
                if let Some(body) = otherwise {
                    self.block(body);
                }
            }
            StmtKind::Return(value) => {
                if let Some(v) = value {
                    self.expr(v);
                }
            }
            StmtKind::Expr(e) => {
                self.expr(e);
            }
        }
    }

    /// Type of an assignable place, or `None` after reporting an error.
    fn place(&mut self, target: &Expr) -> Option<Type> {
        match &target.kind {
            ExprKind::Var(name) => {
                let found = self
                    .scopes
                    .iter()
                    .rev()
                    .find_map(|s| s.get(name))
                    .or_else(|| self.globals.get(name))
                    .cloned();
                match found {
                    Some(t) => {
                        self.types.insert(target.id, t.clone());
                        Some(t)
                    }
                    None => {
                        let msg = if self.resolve(name).is_some() {
                            format!("cannot assign to `{name}`")
                        } else {
                            format!("unresolved name `{name}`")
                        };
                        let code = if msg.starts_with("unresolved") { Code::UnresolvedName } else { Code::InvalidAssignment };
                        self.err(code, target.id, msg);
                        None
                    }
                }
            }
            ExprKind::Member { object, field } => {
                let ot = self.expr(object);
                let t = match &ot {
                    Type::Entity(_) | Type::Widget(_) | Type::Any => self.member(&ot, field, target.id)?,
                    other => {
                        self.err(Code::InvalidAssignment, target.id, format!("cannot assign to a member of {other}"));
                        return None;
                    }
                };
                self.types.insert(target.id, t.clone());
                Some(t)
            }
            _ => {
                self.expr(target);
                self.err(Code::InvalidAssignment, target.id, "left side of `=` is not assignable");
                None
            }
        }
    }

    // ---- expressions ----

    /// Resolves a bare name in value position.
    fn resolve(&self, name: &str) -> Option<Type> {
        if let Some(t) = self.scopes.iter().rev().find_map(|s| s.get(name)) {
            return Some(t.clone());
        }
        if let Some(t) = self.globals.get(name) {
            return Some(t.clone());
        }
        if self.m.widget(name).is_some() {
            return Some(Type::Widget(name.to_string()));
        }
        if self.m.touch(name).is_some() {
            return Some(Type::Touch(name.to_string()));
        }
        if self.m.screen(name).is_some() {
            return Some(Type::Screen);
        }
        if let Some(op) = self.m.operation(name) {
            return Some(Type::Function(Box::new(self.op_sig(op))));
        }
        if self.m.entity(name).is_some() {
            return Some(Type::EntityStatic(name.to_string()));
        }
        if NAMESPACES.contains(&name) {
            return Some(Type::Builtin(name.to_string()));
        }
        builtin_function(name).map(|s| Type::Function(Box::new(s)))
    }

    fn op_sig(&self, op: &OperationDecl) -> FnSig {
        let m = self.m;
        let params =
            op.params.iter().map(|p| Type::from_ref(&p.ty, &|n| m.entity(n).is_some()).unwrap_or(Type::Any)).collect();
        FnSig::new(op.name.clone(), params, Type::Any)
    }

    fn expr(&mut self, e: &Expr) -> Type {
        let t = self.expr_inner(e);
        self.types.insert(e.id, t.clone());
        t
    }

    fn expr_inner(&mut self, e: &Expr) -> Type {
        match &e.kind {
            ExprKind::Str(_) => Type::String,
            ExprKind::Int(_) => Type::Int,
            ExprKind::DateTime(_) => Type::DateTime,
            ExprKind::Bool(_) => Type::Bool,
            ExprKind::Null => Type::Null,
            ExprKind::Var(name) => match self.resolve(name) {
                Some(t) => {
                    if self.in_screen && matches!(t, Type::EntityStatic(_) | Type::Entity(_)) {
                        self.screen_uses_model = true;
                    }
                    if self.in_screen && self.m.operation(name).is_some() {
                        self.screen_uses_model = true;
                    }
                    t
                }
                None => {
                    self.err(Code::UnresolvedName, e.id, format!("unresolved name `{name}`"));
                    Type::Any
                }
            },
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs);
                let r = self.expr(rhs);
                match binary_type(*op, &l, &r) {
                    Some(t) => t,
                    None => {
                        self.err(Code::TypeMismatch, e.id, format!("operator {} undefined for {l},{r}", op.symbol()));
                        Type::Any
                    }
                }
            }
            ExprKind::Unary { op, operand } => {
                let t = self.expr(operand);
                match unary_type(*op, &t) {
                    Some(t) => t,
                    None => {
                        self.err(Code::TypeMismatch, e.id, format!("operator {} undefined for {t}", op.symbol()));
                        Type::Any
                    }
                }
            }
            ExprKind::Member { object, field } => {
                let ot = self.expr(object);
                self.member(&ot, field, e.id).unwrap_or(Type::Any)
            }
            ExprKind::Call { callee, args } => self.call(e.id, callee, args),
            ExprKind::List(items) => {
                let mut elem: Option<Type> = None;
                for it in items {
                    let t = self.expr(it);
                    elem = match elem {
                        None => Some(t),
                        Some(prev) if compatible(&prev, &t) && !prev.is_any() => Some(prev),
                        Some(prev) if compatible(&t, &prev) => Some(t),
                        Some(prev) => {
                            self.err(Code::TypeMismatch, it.id, format!("list element of type {t} in a list of {prev}"));
                            Some(prev)
                        }
                    };
                }
                Type::List(Box::new(elem.filter(|t| *t != Type::Null).unwrap_or(Type::Any)))
            }
            ExprKind::Block(stmts) => {
                self.block(stmts);
                Type::Callback
            }
        }
    }

    fn member(&mut self, ot: &Type, field: &str, at: NodeId) -> Option<Type> {
        let found = match ot {
            Type::Any => Some(Type::Any),
            Type::Entity(name) => {
                let m = self.m;
                m.entity(name).and_then(|e| e.property(field)).map(|p| self.resolve_type(&p.ty, p.id))
            }
            Type::EntityStatic(name) => entity_static(name, field),
            Type::DateTime => datetime_method(field),
            Type::Builtin(ns) => namespace_member(ns, field),
            Type::Widget(name) => self.widget_members.get(name).and_then(|m| m.get(field)).cloned(),
            _ => None,
        };
        if found.is_none() {
            self.err(Code::UnresolvedMember, at, format!("{ot} has no member `{field}`"));
        }
        found
    }

    fn call(&mut self, id: NodeId, callee: &Expr, args: &[Expr]) -> Type {
        // `navigate(screen, args...)` checks against the target screen's params.
        if let ExprKind::Var(name) = &callee.kind {
            if name == "navigate" && self.m.operation(name).is_none() && self.resolve(name).is_some_and(|t| matches!(t, Type::Function(_))) {
                self.types.insert(callee.id, Type::Function(Box::new(builtin_function("navigate").unwrap())));
                return self.navigate(id, args);
            }
        }
        let ct = match &callee.kind {
            ExprKind::Var(name) => {
                if let Some(op) = self.m.operation(name) {
                    if self.in_screen {
                        self.screen_uses_model = true;
                    }
                    let t = Type::Function(Box::new(self.op_sig(op)));
                    self.types.insert(callee.id, t.clone());
                    t
                } else {
                    self.expr(callee)
                }
            }
            _ => self.expr(callee),
        };
        let sig = match ct {
            Type::Function(sig) => sig,
            Type::Any => {
                for a in args {
                    self.expr(a);
                }
                return Type::Any;
            }
            other => {
                for a in args {
                    self.expr(a);
                }
                self.err(Code::TypeMismatch, callee.id, format!("{other} is not callable"));
                return Type::Any;
            }
        };
        let arity_ok = if sig.variadic { args.len() >= sig.params.len() } else { args.len() == sig.params.len() };
        if !arity_ok {
            self.err(
                Code::Arity,
                id,
                format!("`{}` expects {}{} argument(s), got {}", sig.name, if sig.variadic { "at least " } else { "" }, sig.params.len(), args.len()),
            );
        }
        for (i, a) in args.iter().enumerate() {
            let at = self.expr(a);
            if let Some(pt) = sig.params.get(i) {
                if !arg_compatible(pt, &at) {
                    self.err(Code::TypeMismatch, a.id, format!("argument {} of `{}` expects {pt}, found {at}", i + 1, sig.name));
                }
            }
        }
        sig.ret.clone()
    }

    fn navigate(&mut self, id: NodeId, args: &[Expr]) -> Type {
        let Some((target, rest)) = args.split_first() else {
            self.err(Code::Arity, id, "`navigate` expects a target screen");
            return Type::Void;
        };
        let tt = self.expr(target);
        let screen = match &target.kind {
            ExprKind::Var(n) if tt == Type::Screen => self.m.screen(n),
            _ => None,
        };
        let Some(screen) = screen else {
            if !tt.is_any() {
                self.err(Code::TypeMismatch, target.id, format!("`navigate` expects a screen, found {tt}"));
            }
            for a in rest {
                self.expr(a);
            }
            return Type::Void;
        };
        if rest.len() != screen.params.len() {
            self.err(
                Code::Arity,
                id,
                format!("screen `{}` takes {} argument(s), got {}", screen.name, screen.params.len(), rest.len()),
            );
        }
        for (a, p) in rest.iter().zip(&screen.params) {
            let at = self.expr(a);
            let pt = self.resolve_type(&p.ty, p.id);
            if !arg_compatible(&pt, &at) {
                self.err(Code::TypeMismatch, a.id, format!("argument `{}` of screen `{}` expects {pt}, found {at}", p.name, screen.name));
            }
        }
        for a in rest.iter().skip(screen.params.len()) {
            self.expr(a);
        }
        Type::Void
    }
}

/// Rule conditions may only read context variables and literals; `where`
/// conditions are restricted to `location`.
pub fn context_only(e: &Expr, trigger: Trigger) -> Result<(), String> {
    match &e.kind {
        ExprKind::Str(_) | ExprKind::Int(_) | ExprKind::DateTime(_) | ExprKind::Bool(_) | ExprKind::Null => Ok(()),
        ExprKind::Var(name) => {
            let ok = match trigger {
                Trigger::When => CONTEXT_ROOTS.contains(&name.as_str()),
                Trigger::Where => name == "location",
            };
            if ok {
                Ok(())
            } else if trigger == Trigger::Where {
                Err(format!("`where` conditions may only read `location`, found `{name}`"))
            } else {
                Err(format!("rule conditions may only read context variables, found `{name}`"))
            }
        }
        ExprKind::Member { object, .. } => context_only(object, trigger),
        ExprKind::Binary { lhs, rhs, .. } => {
            context_only(lhs, trigger)?;
            context_only(rhs, trigger)
        }
        ExprKind::Unary { operand, .. } => context_only(operand, trigger),
        _ => Err("rule conditions may only contain context variables, literals and operators".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_source;

    fn diags(src: &str) -> Vec<Diagnostic> {
        let (m, d) = parse_source("t", src);
        assert!(d.is_empty(), "parse errors: {d:?}");
        check(&m)
    }

    fn codes(src: &str) -> Vec<Code> {
        diags(src).into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn datetime_plus_int_is_rejected() {
        let d = diags("entity Task { DateTime dueDate; } operation f(Task t) { var x = t.dueDate + 3; }");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "operator + undefined for DateTime,int");
    }

    #[test]
    fn unresolved_widget() {
        let d = diags("screen s { import(c9); }");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, Code::UnresolvedWidget);
        assert!(d[0].message.contains("unresolved widget"));
    }

    #[test]
    fn duplicate_per_kind_only() {
        assert_eq!(codes("entity A {} entity A {}"), vec![Code::DuplicateDeclaration]);
        assert!(codes("entity A {} screen A {}").is_empty());
    }

    #[test]
    fn unknown_kinds() {
        assert_eq!(codes("widget slider w() {}"), vec![Code::UnknownWidgetKind]);
        assert_eq!(codes("touch shake t() {}"), vec![Code::UnknownTouchKind]);
    }

    #[test]
    fn rule_conditions_are_context_only() {
        assert_eq!(codes(r#"var x = 1; screen s { when (x > 1) header("a"); }"#), vec![Code::InvalidContext]);
        assert_eq!(codes(r#"screen s { when (screen.window.innerWidth) header("a"); }"#), vec![Code::TypeMismatch]);
        assert_eq!(codes(r#"screen s { where (network.online) header("a"); }"#), vec![Code::InvalidContext]);
        assert!(codes(r#"screen s { where (location.city == "Beijing") header("a"); }"#).is_empty());
    }

    #[test]
    fn async_needs_one_callback() {
        assert_eq!(codes("async operation f(int a) {}"), vec![Code::AsyncCallback]);
        assert!(codes("async operation f(int a, Callback done) { done; }").is_empty());
    }

    #[test]
    fn headers_at_most_one() {
        assert_eq!(codes(r#"screen s { header("a"); header("b"); }"#), vec![Code::DuplicateHeader]);
    }

    #[test]
    fn missing_import_is_a_warning() {
        let d = diags("entity T { String n; } operation f(T t) {} screen s { button { \"x\", f(\"k\"); } }");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, Code::MissingImport);
        assert!(!d[0].is_error());
    }

    #[test]
    fn navigate_checks_screen_params() {
        assert!(codes("entity T { String n; } screen a(T t) {} screen b { button { \"x\", navigate(a, \"k\"); } }").is_empty());
        assert_eq!(
            codes("entity T { String n; } operation import(String u) {} screen a(T t) {} screen b { button { \"x\", navigate(a); } }"),
            vec![Code::Arity]
        );
    }

    #[test]
    fn assignment_targets() {
        assert_eq!(codes("screen s {} operation f() { s = 1; }"), vec![Code::InvalidAssignment]);
        assert_eq!(codes("operation f() { y = 1; }"), vec![Code::UnresolvedName]);
    }
}
