//! Source printer. Output reparses to a structurally identical module.

use std::fmt::Write;

use super::ast::*;
use super::lexer::Keyword;

pub fn pretty(m: &DslModule) -> String {
    let mut p = Printer { out: String::new(), indent: 0 };
    p.module(m);
    p.out
}

pub fn pretty_expr(e: &Expr) -> String {
    let mut p = Printer { out: String::new(), indent: 0 };
    p.expr(e, 0);
    p.out
}

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && Keyword::lookup(s).is_none()
}

struct Printer {
    out: String,
    indent: usize,
}

/// Binding strength used to decide where parentheses are needed.
fn strength(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Unary { .. } => 6,
        _ => 7,
    }
}

impl Printer {
    fn w(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn nl(&mut self) {
        self.out.push('\n');
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
    }

    fn module(&mut self, m: &DslModule) {
        if is_identifier(&m.name) {
            let _ = write!(self.out, "module {};\n\n", m.name);
        }
        for v in &m.vars {
            self.var(v);
            self.w("\n");
        }
        for e in &m.entities {
            self.entity(e);
        }
        for o in &m.operations {
            self.operation(o);
        }
        for w in &m.widgets {
            self.widget(w);
        }
        for t in &m.touches {
            self.touch(t);
        }
        for s in &m.screens {
            self.screen(s);
        }
    }

    fn annotations(&mut self, anns: &[Annotation]) {
        for a in anns {
            let _ = write!(self.out, "@{}", a.name);
            if !a.args.is_empty() {
                self.w("(");
                self.list(&a.args);
                self.w(")");
            }
            self.w(" ");
        }
    }

    fn list(&mut self, items: &[Expr]) {
        for (i, e) in items.iter().enumerate() {
            if i > 0 {
                self.w(", ");
            }
            self.expr(e, 0);
        }
    }

    fn params(&mut self, params: &[Param]) {
        self.w("(");
        for (i, p) in params.iter().enumerate() {
            if i > 0 {
                self.w(", ");
            }
            let _ = write!(self.out, "{} {}", p.ty, p.name);
        }
        self.w(")");
    }

    fn var(&mut self, v: &VarDecl) {
        let _ = write!(self.out, "var {}", v.name);
        if let Some(init) = &v.init {
            self.w(" = ");
            self.expr(init, 0);
        }
        self.w(";");
    }

    fn entity(&mut self, e: &EntityDecl) {
        self.w("\n");
        self.annotations(&e.annotations);
        let _ = write!(self.out, "entity {} {{", e.name);
        self.indent += 1;
        for p in &e.properties {
            self.nl();
            self.annotations(&p.annotations);
            let _ = write!(self.out, "{} {}", p.ty, p.name);
            if let Some(d) = &p.default {
                self.w(": ");
                self.expr(d, 0);
            }
            self.w(";");
        }
        self.indent -= 1;
        self.nl();
        self.w("}\n");
    }

    fn operation(&mut self, o: &OperationDecl) {
        self.w("\n");
        if o.is_async {
            self.w("async ");
        }
        let _ = write!(self.out, "operation {}", o.name);
        self.params(&o.params);
        self.w(" ");
        self.block(&o.body);
        self.w("\n");
    }

    fn widget(&mut self, w: &WidgetDecl) {
        let _ = write!(self.out, "\nwidget {} {}", w.kind, w.name);
        self.params(&w.params);
        self.w(" {");
        self.indent += 1;
        for item in &w.body {
            self.nl();
            match item {
                WidgetItem::Stmt(s) => self.stmt(s),
                WidgetItem::Markup(m) => self.markup(m),
            }
        }
        self.indent -= 1;
        self.nl();
        self.w("}\n");
    }

    fn touch(&mut self, t: &TouchDecl) {
        let _ = write!(self.out, "\ntouch {} {}", t.kind, t.name);
        self.params(&t.params);
        self.w(" ");
        self.block(&t.body);
        self.w("\n");
    }

    fn screen(&mut self, s: &ScreenDecl) {
        self.w("\n");
        if s.cached_offline {
            self.w("@cached\n");
        }
        self.annotations(&s.annotations);
        let _ = write!(self.out, "screen {}", s.name);
        if !s.params.is_empty() {
            self.params(&s.params);
        }
        self.w(" ");
        self.item_block(&s.items);
        self.w("\n");
    }

    fn item_block(&mut self, items: &[ScreenItem]) {
        self.w("{");
        self.indent += 1;
        for i in items {
            self.nl();
            self.item(i);
        }
        self.indent -= 1;
        if !items.is_empty() {
            self.nl();
        }
        self.w("}");
    }

    fn item(&mut self, item: &ScreenItem) {
        match item {
            ScreenItem::Header { title, items, .. } => {
                self.w("header (");
                self.expr(title, 0);
                self.w(")");
                if items.is_empty() {
                    self.w(";");
                } else {
                    self.w(" ");
                    self.item_block(items);
                }
            }
            ScreenItem::Import { target, args, .. } => {
                let _ = write!(self.out, "import({target}");
                if !args.is_empty() {
                    self.w("(");
                    self.list(args);
                    self.w(")");
                }
                self.w(");");
            }
            ScreenItem::Handler { controls, .. } => {
                self.w("handler {");
                self.indent += 1;
                for c in controls {
                    self.nl();
                    self.control(c);
                }
                self.indent -= 1;
                self.nl();
                self.w("}");
            }
            ScreenItem::Rule(r) => self.rule(r),
            ScreenItem::Var(v) => self.var(v),
            ScreenItem::Repeat { var, iter, items, .. } => {
                let _ = write!(self.out, "foreach ({var} in ");
                self.expr(iter, 0);
                self.w(") ");
                self.item_block(items);
            }
            ScreenItem::Markup(m) => self.markup(m),
            ScreenItem::Control(c) => self.control(c),
        }
    }

    fn context(&mut self, c: &Context) {
        self.w(match c.trigger {
            Trigger::When => "when (",
            Trigger::Where => "where (",
        });
        self.expr(&c.condition, 0);
        self.w(")");
    }

    fn rule(&mut self, r: &Rule) {
        if r.branches.len() == 1 && r.otherwise.is_none() {
            self.context(&r.branches[0].context);
            self.w(" ");
            self.item_block(&r.branches[0].items);
            return;
        }
        for (i, b) in r.branches.iter().enumerate() {
            self.w(if i == 0 { "if (" } else { " elseif (" });
            self.context(&b.context);
            self.w(") ");
            self.item_block(&b.items);
        }
        if let Some(items) = &r.otherwise {
            self.w(" else ");
            self.item_block(items);
        }
    }

    fn control(&mut self, c: &Control) {
        self.w(&c.tag);
        if let Some(n) = &c.name {
            let _ = write!(self.out, " {n}");
        }
        self.w(" { ");
        if let Some(l) = &c.label {
            self.expr(l, 0);
            self.w(", ");
        }
        for a in &c.attrs {
            let _ = write!(self.out, "{} = ", a.name);
            self.expr(&a.value, 0);
            self.w(", ");
        }
        for s in &c.actions {
            if let StmtKind::Expr(e) = &s.kind {
                self.expr(e, 0);
                self.w("; ");
            }
        }
        for ch in &c.children {
            self.item(ch);
            self.w(" ");
        }
        self.w("}");
    }

    fn markup(&mut self, m: &Markup) {
        let _ = write!(self.out, "<{}", m.tag);
        for (i, a) in m.attrs.iter().enumerate() {
            let _ = write!(self.out, "{}{} = ", if i == 0 { " " } else { ", " }, a.name);
            self.expr(&a.value, 7);
        }
        if m.children.is_empty() {
            self.w("/>");
            return;
        }
        self.w(">");
        self.indent += 1;
        for ch in &m.children {
            self.nl();
            match ch {
                MarkupChild::Text(t) => self.w(&quote(t)),
                MarkupChild::Item(i) => self.item(i),
            }
        }
        self.indent -= 1;
        self.nl();
        let _ = write!(self.out, "</{}>", m.tag);
    }

    fn block(&mut self, stmts: &[Stmt]) {
        self.w("{");
        self.indent += 1;
        for s in stmts {
            self.nl();
            self.stmt(s);
        }
        self.indent -= 1;
        if !stmts.is_empty() {
            self.nl();
        }
        self.w("}");
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Var { name, init } => {
                let _ = write!(self.out, "var {name}");
                if let Some(e) = init {
                    self.w(" = ");
                    self.expr(e, 0);
                }
                self.w(";");
            }
            StmtKind::Assign { target, value } => {
                self.expr(target, 0);
                self.w(" = ");
                self.expr(value, 0);
                self.w(";");
            }
            StmtKind::Foreach { var, iter, body } => {
                let _ = write!(self.out, "foreach ({var} in ");
                self.expr(iter, 0);
                self.w(") ");
                self.block(body);
            }
            StmtKind::If { branches, otherwise } => {
                for (i, (cond, body)) in branches.iter().enumerate() {
                    self.w(if i == 0 { "if (" } else { " elseif (" });
                    self.expr(cond, 0);
                    self.w(") ");
                    self.block(body);
                }
                if let Some(body) = otherwise {
                    self.w(" else ");
                    self.block(body);
                }
            }
            StmtKind::Return(v) => {
                self.w("return");
                if let Some(e) = v {
                    self.w(" ");
                    self.expr(e, 0);
                }
                self.w(";");
            }
            StmtKind::Expr(e) => {
                self.expr(e, 0);
                self.w(";");
            }
        }
    }

    /// Prints `e`, parenthesised when it binds looser than `min`.
    fn expr(&mut self, e: &Expr, min: u8) {
        if strength(e) < min {
            self.w("(");
            self.expr(e, 0);
            self.w(")");
            return;
        }
        match &e.kind {
            ExprKind::Str(s) => self.w(&quote(s)),
            ExprKind::Int(v) => {
                let _ = write!(self.out, "{v}");
            }
            ExprKind::DateTime(d) => self.w(d),
            ExprKind::Bool(b) => self.w(if *b { "true" } else { "false" }),
            ExprKind::Null => self.w("null"),
            ExprKind::Var(n) => self.w(n),
            ExprKind::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                self.expr(lhs, p);
                let _ = write!(self.out, " {} ", op.symbol());
                self.expr(rhs, p + 1);
            }
            ExprKind::Unary { op, operand } => {
                self.w(op.symbol());
                self.expr(operand, 6);
            }
            ExprKind::Call { callee, args } => {
                self.expr(callee, 7);
                self.w("(");
                self.list(args);
                self.w(")");
            }
            ExprKind::Member { object, field } => {
                self.expr(object, 7);
                let _ = write!(self.out, ".{field}");
            }
            ExprKind::List(items) => {
                self.w("[");
                self.list(items);
                self.w("]");
            }
            ExprKind::Block(stmts) => self.block(stmts),
        }
    }
}
