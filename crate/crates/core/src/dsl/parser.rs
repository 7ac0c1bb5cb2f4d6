//! Recursive-descent parser.
//!
//! ```text
//! module      := ('module' IDENT ';')? definition*
//! definition  := annotation* (entity | operation | screen | widget | touch | 'var' var)
//! annotation  := '@' IDENT ('(' exp (',' exp)* ')')?
//! entity      := 'entity' IDENT '{' (annotation* type IDENT (':' exp)? ';')* '}'
//! operation   := 'async'? 'operation' (IDENT | 'import') '(' params? ')' block
//! screen      := 'screen' IDENT ('(' params? ')')? '{' item* '}'
//! widget      := 'widget' KIND IDENT '(' params? ')' '{' (markup | stmt)* '}'
//! touch       := 'touch' KIND IDENT '(' params? ')' block
//! type        := IDENT ('<' type '>')?
//!
//! item        := 'header' '(' exp ')' ('{' item* '}' | ';')?
//!              | 'import' '(' IDENT ('(' args? ')')? ')' ';'
//!              | 'handler' '{' control* '}'
//!              | rule | 'var' var | 'foreach' '(' IDENT 'in' exp ')' '{' item* '}'
//!              | markup | control
//! rule        := 'if' '(' context ')' adapt ('elseif' '(' context ')' adapt)* ('else' adapt)?
//!              | context adapt
//! context     := ('when' | 'where') '(' exp ')'
//! adapt       := '{' item* '}' | item
//! control     := IDENT IDENT? '{' (part ','?)* '}'
//! part        := IDENT '=' exp ';'? | control | 'foreach' ... | markup | exp ';'?
//! markup      := '<' IDENT (IDENT '=' postfix ','?)* ('/' '>' | '>' (STRING | item)* '<' '/' IDENT '>')
//!
//! stmt        := 'var' IDENT ('=' exp)? ';' | 'foreach' '(' IDENT 'in' exp ')' body
//!              | 'if' '(' exp ')' body ('elseif' '(' exp ')' body)* ('else' body)?
//!              | 'return' exp? ';' | exp ('=' exp)? ';'
//! body        := block | stmt
//! exp         := or ; or := and ('||' and)* ; and := cmp ('&&' cmp)*
//! cmp         := add (('=='|'!='|'<'|'>'|'<='|'>='|'in') add)*
//! add         := mul (('+'|'-') mul)* ; mul := unary (('*'|'%') unary)*
//! unary       := ('!'|'-') unary | postfix
//! postfix     := primary ('(' args? ')' | '.' IDENT)*
//! primary     := STRING | INT | DATETIME | 'true' | 'false' | 'null' | IDENT | 'screen'
//!              | '(' exp ')' | '[' args? ']' | '{' stmt* '}'
//! ```
//!
//! On a syntax error the parser reports a diagnostic and skips to the next
//! top-level keyword, so one malformed declaration does not hide diagnostics
//! in later ones.

use super::ast::*;
use super::diag::{Code, Diagnostic, Span};
use super::lexer::{tokenize, Keyword, Token, TokenKind};

const MAX_DEPTH: usize = 200;

/// Marker returned after a diagnostic has been recorded.
struct Bail;

type PResult<T> = Result<T, Bail>;

pub fn parse(tokens: &[Token]) -> (DslModule, Vec<Diagnostic>) {
    parse_named("main", tokens)
}

pub fn parse_named(name: &str, tokens: &[Token]) -> (DslModule, Vec<Diagnostic>) {
    let mut toks: Vec<Token> = tokens.iter().filter(|t| !matches!(t.kind, TokenKind::Error(_))).cloned().collect();
    let eof_span = toks
        .last()
        .map(|t| Span::new(t.span.offset + t.span.len as usize, t.span.line, t.span.col + t.span.len, 0))
        .unwrap_or(Span::new(0, 1, 1, 0));
    toks.push(Token { kind: TokenKind::Eof, span: eof_span });
    let mut p = Parser { toks, pos: 0, next_id: 0, depth: 0, module: DslModule { name: name.to_string(), ..Default::default() }, diags: Vec::new() };
    p.module_body();
    (p.module, p.diags)
}

/// Tokenizes and parses `source`, merging lexer and parser diagnostics.
pub fn parse_source(name: &str, source: &str) -> (DslModule, Vec<Diagnostic>) {
    let lexed = tokenize(source);
    let (module, mut diags) = parse_named(name, &lexed.tokens);
    let mut all = lexed.diagnostics;
    all.append(&mut diags);
    (module, all)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    next_id: u32,
    depth: usize,
    module: DslModule,
    diags: Vec<Diagnostic>,
}

impl Parser {
    fn peek(&self) -> &TokenKind {
        &self.toks[self.pos].kind
    }

    fn peek_n(&self, n: usize) -> &TokenKind {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].kind
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn advance(&mut self) -> &Token {
        let i = self.pos;
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        &self.toks[i]
    }

    fn at(&self, kind: &TokenKind) -> bool {
        self.peek() == kind
    }

    fn at_kw(&self, kw: Keyword) -> bool {
        matches!(self.peek(), TokenKind::Keyword(k) if *k == kw)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.at(kind) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: Keyword) -> bool {
        if self.at_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error<T>(&mut self, message: impl Into<String>) -> PResult<T> {
        let span = self.span();
        self.diags.push(Diagnostic::error(Code::Syntax, span, message));
        Err(Bail)
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<Span> {
        if self.at(&kind) {
            Ok(self.advance().span)
        } else {
            let found = self.peek().clone();
            self.error(format!("expected {kind}, found {found}"))
        }
    }

    fn expect_kw(&mut self, kw: Keyword) -> PResult<Span> {
        if self.at_kw(kw) {
            Ok(self.advance().span)
        } else {
            let found = self.peek().clone();
            self.error(format!("expected `{}`, found {found}", kw.as_str()))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            TokenKind::Ident(name) => {
                let span = self.advance().span;
                Ok((name, span))
            }
            other => self.error(format!("expected {what}, found {other}")),
        }
    }

    fn node(&mut self, span: Span) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.module.source_span_index.insert(id, span);
        id
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let span = self.span();
            self.diags.push(Diagnostic::error(Code::NestingTooDeep, span, "nesting too deep"));
            return Err(Bail);
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    // ---- top level ----

    fn module_body(&mut self) {
        if self.at_kw(Keyword::Module) {
            self.advance();
            if let Ok((name, _)) = self.ident("module name") {
                self.module.name = name;
            }
            self.eat(&TokenKind::Semi);
        }
        while !self.at(&TokenKind::Eof) {
            let before = self.pos;
            self.depth = 0;
            if self.definition().is_err() {
                self.synchronize(before);
            }
        }
    }

    fn is_sync_point(&self) -> bool {
        match self.peek() {
            TokenKind::Keyword(Keyword::Screen) => !matches!(self.peek_n(1), TokenKind::Dot),
            TokenKind::Keyword(
                Keyword::Entity | Keyword::Operation | Keyword::Widget | Keyword::Touch | Keyword::Async | Keyword::Module,
            ) => true,
            _ => false,
        }
    }

    fn synchronize(&mut self, start: usize) {
        if self.pos == start {
            self.advance();
        }
        while !self.at(&TokenKind::Eof) && !self.is_sync_point() {
            self.advance();
        }
    }

    fn definition(&mut self) -> PResult<()> {
        let annotations = self.annotations()?;
        match self.peek().clone() {
            TokenKind::Keyword(Keyword::Entity) => {
                let e = self.entity(annotations)?;
                self.module.entities.push(e);
            }
            TokenKind::Keyword(Keyword::Operation | Keyword::Async) => {
                let o = self.operation()?;
                self.module.operations.push(o);
            }
            TokenKind::Keyword(Keyword::Screen) => {
                let s = self.screen(annotations)?;
                self.module.screens.push(s);
            }
            TokenKind::Keyword(Keyword::Widget) => {
                let w = self.widget()?;
                self.module.widgets.push(w);
            }
            TokenKind::Keyword(Keyword::Touch) => {
                let t = self.touch()?;
                self.module.touches.push(t);
            }
            TokenKind::Keyword(Keyword::Var) => {
                let v = self.var_decl()?;
                self.module.vars.push(v);
            }
            TokenKind::Keyword(Keyword::Handler) => {
                let span = self.span();
                self.diags.push(Diagnostic::error(
                    Code::MisplacedHandler,
                    span,
                    "`handler` blocks must appear inside a screen",
                ));
                self.advance();
                self.handler_controls()?;
            }
            TokenKind::Keyword(Keyword::Module) => {
                return self.error("`module` header must come first");
            }
            other => return self.error(format!("expected a declaration, found {other}")),
        }
        Ok(())
    }

    fn annotations(&mut self) -> PResult<Vec<Annotation>> {
        let mut out = Vec::new();
        while self.eat(&TokenKind::At) {
            let (name, _) = self.ident("annotation name")?;
            let mut args = Vec::new();
            if self.eat(&TokenKind::LParen) {
                args = self.args(TokenKind::RParen)?;
            }
            out.push(Annotation { name, args });
        }
        Ok(out)
    }

    fn type_ref(&mut self) -> PResult<TypeRef> {
        self.enter()?;
        let (name, _) = self.ident("type name")?;
        let mut ty = TypeRef::named(name);
        if self.eat(&TokenKind::Lt) {
            let inner = self.type_ref()?;
            self.expect(TokenKind::Gt)?;
            ty.arg = Some(Box::new(inner));
        }
        self.leave();
        Ok(ty)
    }

    fn entity(&mut self, annotations: Vec<Annotation>) -> PResult<EntityDecl> {
        let start = self.expect_kw(Keyword::Entity)?;
        let (name, name_span) = self.ident("entity name")?;
        let id = self.node(start.to(name_span));
        self.expect(TokenKind::LBrace)?;
        let mut properties = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            if self.at(&TokenKind::Eof) {
                return self.error("unclosed entity body");
            }
            let annotations = self.annotations()?;
            let ty_span = self.span();
            let ty = self.type_ref()?;
            let (pname, pspan) = self.ident("property name")?;
            let pid = self.node(ty_span.to(pspan));
            let default = if self.eat(&TokenKind::Colon) { Some(self.expr()?) } else { None };
            self.expect(TokenKind::Semi)?;
            properties.push(Property { id: pid, name: pname, ty, default, annotations });
        }
        self.advance();
        Ok(EntityDecl { id, name, annotations, properties })
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect(TokenKind::LParen)?;
        let mut params = Vec::new();
        if !self.at(&TokenKind::RParen) {
            loop {
                let start = self.span();
                let ty = self.type_ref()?;
                let (name, span) = self.ident("parameter name")?;
                let id = self.node(start.to(span));
                params.push(Param { id, name, ty });
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen)?;
        Ok(params)
    }

    fn operation(&mut self) -> PResult<OperationDecl> {
        let start = self.span();
        let is_async = self.eat_kw(Keyword::Async);
        self.expect_kw(Keyword::Operation)?;
        let (name, name_span) = if self.at_kw(Keyword::Import) {
            let span = self.advance().span;
            ("import".to_string(), span)
        } else {
            self.ident("operation name")?
        };
        let id = self.node(start.to(name_span));
        let params = self.params()?;
        let body = self.block()?;
        Ok(OperationDecl { id, name, is_async, params, body })
    }

    fn screen(&mut self, mut annotations: Vec<Annotation>) -> PResult<ScreenDecl> {
        let start = self.expect_kw(Keyword::Screen)?;
        let (name, name_span) = self.ident("screen name")?;
        let id = self.node(start.to(name_span));
        let params = if self.at(&TokenKind::LParen) { self.params()? } else { Vec::new() };
        let cached_offline = annotations.iter().any(|a| a.name == "cached");
        annotations.retain(|a| a.name != "cached");
        let items = self.item_block()?;
        Ok(ScreenDecl { id, name, annotations, params, items, cached_offline })
    }

    fn widget(&mut self) -> PResult<WidgetDecl> {
        let start = self.expect_kw(Keyword::Widget)?;
        let (kind, _) = self.ident("widget kind")?;
        let (name, name_span) = self.ident("widget name")?;
        let id = self.node(start.to(name_span));
        let params = self.params()?;
        self.expect(TokenKind::LBrace)?;
        let mut body = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            if self.at(&TokenKind::Eof) {
                return self.error("unclosed widget body");
            }
            if self.at(&TokenKind::Lt) && matches!(self.peek_n(1), TokenKind::Ident(_)) {
                body.push(WidgetItem::Markup(self.markup()?));
            } else {
                body.push(WidgetItem::Stmt(self.stmt()?));
            }
        }
        self.advance();
        Ok(WidgetDecl { id, kind, name, params, body })
    }

    fn touch(&mut self) -> PResult<TouchDecl> {
        let start = self.expect_kw(Keyword::Touch)?;
        let (kind, _) = self.ident("touch kind")?;
        let (name, name_span) = self.ident("touch name")?;
        let id = self.node(start.to(name_span));
        let params = self.params()?;
        let body = self.block()?;
        Ok(TouchDecl { id, kind, name, params, body })
    }

    fn var_decl(&mut self) -> PResult<VarDecl> {
        let start = self.expect_kw(Keyword::Var)?;
        let (name, span) = self.ident("variable name")?;
        let id = self.node(start.to(span));
        let init = if self.eat(&TokenKind::Assign) { Some(self.expr()?) } else { None };
        self.end_stmt()?;
        Ok(VarDecl { id, name, init })
    }

    /// `;`, or nothing when the enclosing block closes right away.
    fn end_stmt(&mut self) -> PResult<()> {
        if self.eat(&TokenKind::Semi) || self.at(&TokenKind::RBrace) {
            Ok(())
        } else {
            let found = self.peek().clone();
            self.error(format!("expected `;`, found {found}"))
        }
    }

    // ---- screen items ----

    fn item_block(&mut self) -> PResult<Vec<ScreenItem>> {
        self.expect(TokenKind::LBrace)?;
        let mut items = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            if self.at(&TokenKind::Eof) {
                return self.error("unclosed block, expected `}`");
            }
            items.push(self.item()?);
        }
        self.advance();
        Ok(items)
    }

    fn item(&mut self) -> PResult<ScreenItem> {
        self.enter()?;
        let item = self.item_inner();
        self.leave();
        item
    }

    fn item_inner(&mut self) -> PResult<ScreenItem> {
        let start = self.span();
        match self.peek().clone() {
            TokenKind::Keyword(Keyword::Header) => {
                self.advance();
                self.expect(TokenKind::LParen)?;
                let title = self.expr()?;
                self.expect(TokenKind::RParen)?;
                let id = self.node(start);
                let items = if self.at(&TokenKind::LBrace) {
                    self.item_block()?
                } else {
                    self.eat(&TokenKind::Semi);
                    Vec::new()
                };
                Ok(ScreenItem::Header { id, title, items })
            }
            TokenKind::Keyword(Keyword::Import) => {
                self.advance();
                self.expect(TokenKind::LParen)?;
                let (target, tspan) = self.ident("widget or touch name")?;
                let id = self.node(start.to(tspan));
                let args = if self.eat(&TokenKind::LParen) { self.args(TokenKind::RParen)? } else { Vec::new() };
                self.expect(TokenKind::RParen)?;
                self.eat(&TokenKind::Semi);
                Ok(ScreenItem::Import { id, target, args })
            }
            TokenKind::Keyword(Keyword::Handler) => {
                self.advance();
                let id = self.node(start);
                let controls = self.handler_controls()?;
                Ok(ScreenItem::Handler { id, controls })
            }
            TokenKind::Keyword(Keyword::If | Keyword::When | Keyword::Where) => Ok(ScreenItem::Rule(self.rule()?)),
            TokenKind::Keyword(Keyword::Var) => Ok(ScreenItem::Var(self.var_decl()?)),
            TokenKind::Keyword(Keyword::Foreach) => self.repeat(),
            TokenKind::Lt if matches!(self.peek_n(1), TokenKind::Ident(_)) => Ok(ScreenItem::Markup(self.markup()?)),
            TokenKind::Ident(_) if self.control_ahead() => Ok(ScreenItem::Control(self.control()?)),
            other => self.error(format!("expected a screen item, found {other}")),
        }
    }

    fn control_ahead(&self) -> bool {
        matches!(self.peek(), TokenKind::Ident(_))
            && (matches!(self.peek_n(1), TokenKind::LBrace)
                || (matches!(self.peek_n(1), TokenKind::Ident(_)) && matches!(self.peek_n(2), TokenKind::LBrace)))
    }

    fn handler_controls(&mut self) -> PResult<Vec<Control>> {
        self.expect(TokenKind::LBrace)?;
        let mut controls = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            if self.at(&TokenKind::Eof) {
                return self.error("unclosed handler block");
            }
            if !self.control_ahead() {
                let found = self.peek().clone();
                return self.error(format!("expected a control binding inside handler, found {found}"));
            }
            controls.push(self.control()?);
            while self.eat(&TokenKind::Comma) || self.eat(&TokenKind::Semi) {}
        }
        self.advance();
        Ok(controls)
    }

    fn repeat(&mut self) -> PResult<ScreenItem> {
        let start = self.expect_kw(Keyword::Foreach)?;
        self.expect(TokenKind::LParen)?;
        let (var, _) = self.ident("loop variable")?;
        self.expect_kw(Keyword::In)?;
        let iter = self.expr()?;
        let end = self.expect(TokenKind::RParen)?;
        let id = self.node(start.to(end));
        let items = self.item_block()?;
        Ok(ScreenItem::Repeat { id, var, iter, items })
    }

    fn context(&mut self) -> PResult<Context> {
        let trigger = match self.peek() {
            TokenKind::Keyword(Keyword::When) => Trigger::When,
            TokenKind::Keyword(Keyword::Where) => Trigger::Where,
            other => {
                let other = other.clone();
                return self.error(format!("expected `when` or `where`, found {other}"));
            }
        };
        self.advance();
        self.expect(TokenKind::LParen)?;
        let condition = self.expr()?;
        self.expect(TokenKind::RParen)?;
        Ok(Context { trigger, condition })
    }

    fn adaptation(&mut self) -> PResult<Vec<ScreenItem>> {
        if self.at(&TokenKind::LBrace) {
            self.item_block()
        } else {
            Ok(vec![self.item()?])
        }
    }

    fn rule(&mut self) -> PResult<Rule> {
        let start = self.span();
        let id = self.node(start);
        let mut branches = Vec::new();
        let mut otherwise = None;
        if self.eat_kw(Keyword::If) {
            self.expect(TokenKind::LParen)?;
            let context = self.context()?;
            self.expect(TokenKind::RParen)?;
            let items = self.adaptation()?;
            branches.push(RuleBranch { context, items });
            loop {
                let elseif = if self.at_kw(Keyword::Elseif) {
                    self.advance();
                    true
                } else if self.at_kw(Keyword::Else) && matches!(self.peek_n(1), TokenKind::Keyword(Keyword::If)) {
                    self.advance();
                    self.advance();
                    true
                } else {
                    false
                };
                if !elseif {
                    break;
                }
                self.expect(TokenKind::LParen)?;
                let context = self.context()?;
                self.expect(TokenKind::RParen)?;
                let items = self.adaptation()?;
                branches.push(RuleBranch { context, items });
            }
            if self.eat_kw(Keyword::Else) {
                otherwise = Some(self.adaptation()?);
            }
        } else {
            let context = self.context()?;
            let items = self.adaptation()?;
            branches.push(RuleBranch { context, items });
        }
        Ok(Rule { id, branches, otherwise })
    }

    fn control(&mut self) -> PResult<Control> {
        self.enter()?;
        let c = self.control_inner();
        self.leave();
        c
    }

    fn control_inner(&mut self) -> PResult<Control> {
        let (tag, tspan) = self.ident("control kind")?;
        let name = if let TokenKind::Ident(n) = self.peek().clone() {
            self.advance();
            Some(n)
        } else {
            None
        };
        let id = self.node(tspan);
        self.expect(TokenKind::LBrace)?;
        let mut control = Control { id, tag, name, label: None, attrs: Vec::new(), actions: Vec::new(), children: Vec::new() };
        while !self.at(&TokenKind::RBrace) {
            if self.at(&TokenKind::Eof) {
                return self.error("unclosed control body");
            }
            if matches!(self.peek(), TokenKind::Ident(_)) && matches!(self.peek_n(1), TokenKind::Assign) {
                let (name, _) = self.ident("attribute")?;
                self.advance();
                let value = self.expr()?;
                self.eat(&TokenKind::Semi);
                control.attrs.push(Attr { name, value });
            } else if self.control_ahead() {
                control.children.push(ScreenItem::Control(self.control()?));
            } else if self.at_kw(Keyword::Foreach) {
                control.children.push(self.repeat()?);
            } else if self.at(&TokenKind::Lt) && matches!(self.peek_n(1), TokenKind::Ident(_)) {
                control.children.push(ScreenItem::Markup(self.markup()?));
            } else {
                let sstart = self.span();
                let e = self.expr()?;
                if self.eat(&TokenKind::Semi) {
                    let sid = self.node(sstart);
                    control.actions.push(Stmt { id: sid, kind: StmtKind::Expr(e) });
                } else if control.label.is_none() {
                    control.label = Some(e);
                } else {
                    return self.error("a control has at most one label; end actions with `;`");
                }
            }
            if !self.eat(&TokenKind::Comma) && !self.at(&TokenKind::RBrace) {
                // parts may also be separated by the `;` already consumed above
                let prev_is_semi = matches!(self.toks[self.pos.saturating_sub(1)].kind, TokenKind::Semi | TokenKind::RBrace | TokenKind::Gt);
                if !prev_is_semi {
                    let found = self.peek().clone();
                    return self.error(format!("expected `,` or `}}` in control, found {found}"));
                }
            }
        }
        self.advance();
        Ok(control)
    }

    fn markup(&mut self) -> PResult<Markup> {
        self.enter()?;
        let m = self.markup_inner();
        self.leave();
        m
    }

    fn markup_inner(&mut self) -> PResult<Markup> {
        let start = self.expect(TokenKind::Lt)?;
        let (tag, tspan) = self.ident("tag name")?;
        let id = self.node(start.to(tspan));
        let mut attrs = Vec::new();
        while let TokenKind::Ident(name) = self.peek().clone() {
            self.advance();
            self.expect(TokenKind::Assign)?;
            let value = self.postfix()?;
            attrs.push(Attr { name, value });
            self.eat(&TokenKind::Comma);
        }
        let mut children = Vec::new();
        if self.eat(&TokenKind::Slash) {
            self.expect(TokenKind::Gt)?;
            return Ok(Markup { id, tag, attrs, children });
        }
        self.expect(TokenKind::Gt)?;
        loop {
            match self.peek().clone() {
                TokenKind::Eof => return self.error(format!("unclosed <{tag}>")),
                TokenKind::Lt if matches!(self.peek_n(1), TokenKind::Slash) => {
                    self.advance();
                    self.advance();
                    let (close, _) = self.ident("closing tag")?;
                    if close != tag {
                        return self.error(format!("mismatched closing tag </{close}>, expected </{tag}>"));
                    }
                    self.expect(TokenKind::Gt)?;
                    break;
                }
                TokenKind::Str(text) => {
                    self.advance();
                    children.push(MarkupChild::Text(text));
                }
                _ => children.push(MarkupChild::Item(self.item()?)),
            }
        }
        Ok(Markup { id, tag, attrs, children })
    }

    // ---- statements ----

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(TokenKind::LBrace)?;
        let mut stmts = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            if self.at(&TokenKind::Eof) {
                return self.error("unclosed block, expected `}`");
            }
            stmts.push(self.stmt()?);
        }
        self.advance();
        Ok(stmts)
    }

    fn body(&mut self) -> PResult<Vec<Stmt>> {
        if self.at(&TokenKind::LBrace) {
            self.block()
        } else {
            Ok(vec![self.stmt()?])
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        self.enter()?;
        let s = self.stmt_inner();
        self.leave();
        s
    }

    fn stmt_inner(&mut self) -> PResult<Stmt> {
        let start = self.span();
        let kind = match self.peek() {
            TokenKind::Keyword(Keyword::Var) => {
                self.advance();
                let (name, _) = self.ident("variable name")?;
                let init = if self.eat(&TokenKind::Assign) { Some(self.expr()?) } else { None };
                self.end_stmt()?;
                StmtKind::Var { name, init }
            }
            TokenKind::Keyword(Keyword::Foreach) => {
                self.advance();
                self.expect(TokenKind::LParen)?;
                let (var, _) = self.ident("loop variable")?;
                self.expect_kw(Keyword::In)?;
                let iter = self.expr()?;
                self.expect(TokenKind::RParen)?;
                let body = self.body()?;
                StmtKind::Foreach { var, iter, body }
            }
            TokenKind::Keyword(Keyword::If) => {
                self.advance();
                let mut branches = Vec::new();
                self.expect(TokenKind::LParen)?;
                let cond = self.expr()?;
                self.expect(TokenKind::RParen)?;
                branches.push((cond, self.body()?));
                let mut otherwise = None;
                loop {
                    if self.eat_kw(Keyword::Elseif)
                        || (self.at_kw(Keyword::Else) && matches!(self.peek_n(1), TokenKind::Keyword(Keyword::If)) && {
                            self.advance();
                            self.advance();
                            true
                        })
                    {
                        self.expect(TokenKind::LParen)?;
                        let cond = self.expr()?;
                        self.expect(TokenKind::RParen)?;
                        branches.push((cond, self.body()?));
                    } else if self.eat_kw(Keyword::Else) {
                        otherwise = Some(self.body()?);
                        break;
                    } else {
                        break;
                    }
                }
                StmtKind::If { branches, otherwise }
            }
            TokenKind::Keyword(Keyword::Return) => {
                self.advance();
                let value = if self.at(&TokenKind::Semi) || self.at(&TokenKind::RBrace) { None } else { Some(self.expr()?) };
                self.end_stmt()?;
                StmtKind::Return(value)
            }
            _ => {
                let e = self.expr()?;
                if self.eat(&TokenKind::Assign) {
                    let value = self.expr()?;
                    self.end_stmt()?;
                    StmtKind::Assign { target: e, value }
                } else {
                    self.end_stmt()?;
                    StmtKind::Expr(e)
                }
            }
        };
        let id = self.node(start.to(self.prev_span()));
        Ok(Stmt { id, kind })
    }

    // ---- expressions ----

    fn args(&mut self, close: TokenKind) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        if !self.at(&close) {
            loop {
                args.push(self.expr()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(close)?;
        Ok(args)
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            TokenKind::OrOr => BinOp::Or,
            TokenKind::AndAnd => BinOp::And,
            TokenKind::EqEq => BinOp::Eq,
            TokenKind::Ne => BinOp::Ne,
            TokenKind::Lt => BinOp::Lt,
            TokenKind::Gt => BinOp::Gt,
            TokenKind::Le => BinOp::Le,
            TokenKind::Ge => BinOp::Ge,
            TokenKind::Keyword(Keyword::In) => BinOp::In,
            TokenKind::Plus => BinOp::Add,
            TokenKind::Minus => BinOp::Sub,
            TokenKind::Star => BinOp::Mul,
            TokenKind::Percent => BinOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        self.enter()?;
        let start = self.span();
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            if op.precedence() < min_prec {
                break;
            }
            self.advance();
            let rhs = self.binary(op.precedence() + 1)?;
            let id = self.node(start.to(self.prev_span()));
            lhs = Expr { id, kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) } };
        }
        self.leave();
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.span();
        let op = match self.peek() {
            TokenKind::Bang => UnOp::Not,
            TokenKind::Minus => UnOp::Neg,
            _ => return self.postfix(),
        };
        self.advance();
        self.enter()?;
        let operand = self.unary()?;
        self.leave();
        let id = self.node(start.to(self.prev_span()));
        Ok(Expr { id, kind: ExprKind::Unary { op, operand: Box::new(operand) } })
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.primary()?;
        loop {
            if self.eat(&TokenKind::LParen) {
                let args = self.args(TokenKind::RParen)?;
                let id = self.node(start.to(self.prev_span()));
                e = Expr { id, kind: ExprKind::Call { callee: Box::new(e), args } };
            } else if self.eat(&TokenKind::Dot) {
                let (field, _) = self.ident("member name")?;
                let id = self.node(start.to(self.prev_span()));
                e = Expr { id, kind: ExprKind::Member { object: Box::new(e), field } };
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let kind = match self.peek().clone() {
            TokenKind::Str(s) => {
                self.advance();
                ExprKind::Str(s)
            }
            TokenKind::Int(v) => {
                self.advance();
                ExprKind::Int(v)
            }
            TokenKind::DateTime(d) => {
                self.advance();
                ExprKind::DateTime(d)
            }
            TokenKind::Keyword(Keyword::True) => {
                self.advance();
                ExprKind::Bool(true)
            }
            TokenKind::Keyword(Keyword::False) => {
                self.advance();
                ExprKind::Bool(false)
            }
            TokenKind::Keyword(Keyword::Null) => {
                self.advance();
                ExprKind::Null
            }
            TokenKind::Ident(name) => {
                self.advance();
                ExprKind::Var(name)
            }
            TokenKind::Keyword(Keyword::Screen) => {
                self.advance();
                ExprKind::Var("screen".into())
            }
            TokenKind::LParen => {
                self.advance();
                self.enter()?;
                let e = self.expr()?;
                self.leave();
                self.expect(TokenKind::RParen)?;
                return Ok(e);
            }
            TokenKind::LBracket => {
                self.advance();
                self.enter()?;
                let items = self.args(TokenKind::RBracket)?;
                self.leave();
                ExprKind::List(items)
            }
            TokenKind::LBrace => {
                self.enter()?;
                let stmts = self.block()?;
                self.leave();
                ExprKind::Block(stmts)
            }
            other => return self.error(format!("expected an expression, found {other}")),
        };
        let id = self.node(span.to(self.prev_span()));
        Ok(Expr { id, kind })
    }
}
