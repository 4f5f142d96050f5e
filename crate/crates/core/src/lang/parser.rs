//! Recursive-descent parser for the scoping grammar and island dialects.

use crate::agg::AggFunc;
use crate::error::ParseError;
use crate::expr::{ArithOp, CmpOp, ColumnRef, Expr};
use crate::value::{check_identifier, Value};

use super::ast::*;
use super::lexer::{Lexer, Tok, Token};

/// SQL words that cannot be used as identifiers inside `bdrel`.
const RESERVED: &[&str] = &[
    "select", "from", "where", "join", "inner", "on", "group", "by", "order", "asc", "desc", "limit", "and", "or",
    "not", "as", "null",
];

/// Words that cannot name a column inside expressions in any dialect.
const EXPR_RESERVED: &[&str] = &["and", "or", "not", "null"];

const AGG_NAMES: &[&str] = &["count", "sum", "avg", "min", "max"];

type PResult<T> = Result<T, ParseError>;

/// Parses a complete polystore query.
pub fn parse(src: &str) -> PResult<ScopedQuery> {
    let mut p = Parser { lx: Lexer::new(src) };
    let q = p.scoped()?;
    let t = p.lx.next()?;
    if t.tok != Tok::Eof {
        return Err(p.unexpected(&t, "end of input"));
    }
    Ok(q)
}

struct Parser<'a> {
    lx: Lexer<'a>,
}

impl Parser<'_> {
    fn unexpected(&self, t: &Token, wanted: &str) -> ParseError {
        let found = if t.tok == Tok::Eof {
            "end of input".to_string()
        } else {
            format!("{:?}", t.text)
        };
        ParseError {
            message: format!("expected {wanted}, found {found}"),
            position: t.pos,
            token: t.text.clone(),
        }
    }

    fn error_at(&self, t: &Token, message: impl Into<String>) -> ParseError {
        ParseError {
            message: message.into(),
            position: t.pos,
            token: t.text.clone(),
        }
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> PResult<Token> {
        let t = self.lx.next()?;
        if t.tok != tok {
            return Err(self.unexpected(&t, wanted));
        }
        Ok(t)
    }

    fn eat(&mut self, tok: &Tok) -> PResult<bool> {
        if &self.lx.peek()?.tok == tok {
            self.lx.next()?;
            return Ok(true);
        }
        Ok(false)
    }

    fn peek_keyword(&mut self, kw: &str) -> PResult<bool> {
        Ok(self.lx.peek()?.is_keyword(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> PResult<bool> {
        if self.peek_keyword(kw)? {
            self.lx.next()?;
            return Ok(true);
        }
        Ok(false)
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<Token> {
        let t = self.lx.next()?;
        if !t.is_keyword(kw) {
            return Err(self.unexpected(&t, &kw.to_uppercase()));
        }
        Ok(t)
    }

    /// Identifier, lowercased. `reserved` lists words rejected here.
    fn ident(&mut self, what: &str, reserved: &[&str]) -> PResult<String> {
        let t = self.lx.next()?;
        match &t.tok {
            Tok::Ident(s) if !reserved.iter().any(|r| r.eq_ignore_ascii_case(s)) => {
                check_identifier(s).map_err(|e| self.error_at(&t, e.to_string()))?;
                Ok(s.to_ascii_lowercase())
            }
            _ => Err(self.unexpected(&t, what)),
        }
    }

    fn comma_list<T>(&mut self, close: Tok, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        let mut out = vec![item(self)?];
        while self.eat(&Tok::Comma)? {
            out.push(item(self)?);
        }
        let t = self.lx.next()?;
        if t.tok != close {
            return Err(self.unexpected(&t, "',' or closing bracket"));
        }
        Ok(out)
    }

    fn scoped(&mut self) -> PResult<ScopedQuery> {
        let t = self.lx.next()?;
        let island = match &t.tok {
            Tok::Ident(s) => Island::from_scope_keyword(s),
            _ => None,
        }
        .ok_or_else(|| self.unexpected(&t, "bdrel, bdarray or bdtext"))?;
        self.expect(Tok::LParen, "'('")?;
        let q = match island {
            Island::Relational => ScopedQuery::Rel(self.select()?),
            Island::Array => ScopedQuery::Arr(self.afl()?),
            Island::Text => ScopedQuery::Text(self.text_scan()?),
        };
        self.expect(Tok::RParen, "')'")?;
        Ok(q)
    }

    fn is_cast_ahead(&mut self) -> PResult<bool> {
        Ok(self.lx.peek()?.is_keyword("bdcast") && self.lx.peek_nth(1)?.tok == Tok::LParen)
    }

    /// `bdcast(` already peeked; `island` is the island of the enclosing
    /// position.
    fn cast(&mut self, island: Island) -> PResult<Cast> {
        self.lx.next()?;
        self.expect(Tok::LParen, "'('")?;
        let inner = self.scoped()?;
        self.expect(Tok::Comma, "','")?;
        let name_tok = self.lx.peek()?.clone();
        let dest_name = self.ident("cast destination name", &[])?;
        if dest_name.starts_with("__bd") {
            return Err(self.error_at(&name_tok, "names starting with __bd are reserved"));
        }
        self.expect(Tok::Comma, "','")?;
        let spec_tok = self.lx.peek()?.clone();
        let spec = self.mapping_spec()?;
        self.expect(Tok::Comma, "','")?;
        let island_tok = self.lx.next()?;
        let dest_island = match &island_tok.tok {
            Tok::Ident(s) => s.parse::<Island>().ok(),
            _ => None,
        }
        .ok_or_else(|| self.unexpected(&island_tok, "relational, array or text"))?;
        if dest_island != island {
            return Err(self.error_at(
                &island_tok,
                format!("cast inside a {island} query must target the {island} island"),
            ));
        }
        if !spec.fits(dest_island) {
            return Err(self.error_at(&spec_tok, format!("mapping spec does not fit the {dest_island} island")));
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(Cast {
            inner,
            dest_name,
            spec,
            dest_island,
        })
    }

    fn mapping_spec(&mut self) -> PResult<MappingSpec> {
        let t = self.lx.next()?;
        let col = |p: &mut Self| p.ident("column name", &[]);
        match t.tok {
            Tok::Star => Ok(MappingSpec::Star),
            Tok::LParen => Ok(MappingSpec::Columns(self.comma_list(Tok::RParen, col)?)),
            // `<>` lexes as a single not-equal token.
            Tok::Lt | Tok::Ne if t.text != "!=" => {
                let attrs = if t.tok == Tok::Ne || self.eat(&Tok::Gt)? {
                    Vec::new()
                } else {
                    self.comma_list(Tok::Gt, col)?
                };
                self.expect(Tok::LBracket, "'['")?;
                let dims = self.comma_list(Tok::RBracket, col)?;
                Ok(MappingSpec::Array { attrs, dims })
            }
            Tok::LBrace => {
                let row_col = col(self)?;
                self.expect(Tok::Colon, "':'")?;
                let value_cols = self.comma_list(Tok::RBrace, col)?;
                Ok(MappingSpec::Text { row_col, value_cols })
            }
            _ => Err(self.unexpected(&t, "mapping spec")),
        }
    }

    // ---- SQL ----

    fn select(&mut self) -> PResult<Select> {
        self.expect_keyword("select")?;
        let mut items = vec![self.select_item()?];
        while self.eat(&Tok::Comma)? {
            items.push(self.select_item()?);
        }
        self.expect_keyword("from")?;
        let from = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            if self.eat_keyword("inner")? {
                self.expect_keyword("join")?;
            } else if !self.eat_keyword("join")? {
                break;
            }
            let table = self.table_ref()?;
            self.expect_keyword("on")?;
            let left = self.column_ref(RESERVED)?;
            self.expect(Tok::Eq, "'='")?;
            let right = self.column_ref(RESERVED)?;
            joins.push(Join { table, left, right });
        }
        let filter = if self.eat_keyword("where")? {
            Some(self.expr(RESERVED)?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.eat_keyword("group")? {
            self.expect_keyword("by")?;
            group_by.push(self.column_ref(RESERVED)?);
            while self.eat(&Tok::Comma)? {
                group_by.push(self.column_ref(RESERVED)?);
            }
        }
        let mut order_by = Vec::new();
        if self.eat_keyword("order")? {
            self.expect_keyword("by")?;
            loop {
                let column = self.column_ref(RESERVED)?;
                let descending = if self.eat_keyword("desc")? {
                    true
                } else {
                    self.eat_keyword("asc")?;
                    false
                };
                order_by.push(OrderItem { column, descending });
                if !self.eat(&Tok::Comma)? {
                    break;
                }
            }
        }
        let limit = if self.eat_keyword("limit")? {
            let t = self.lx.next()?;
            match &t.tok {
                Tok::Int(s) => Some(s.parse::<u64>().map_err(|_| self.error_at(&t, "LIMIT out of range"))?),
                _ => return Err(self.unexpected(&t, "integer")),
            }
        } else {
            None
        };
        Ok(Select {
            items,
            from,
            joins,
            filter,
            group_by,
            order_by,
            limit,
        })
    }

    fn alias(&mut self) -> PResult<Option<String>> {
        if self.eat_keyword("as")? {
            return Ok(Some(self.ident("alias", RESERVED)?));
        }
        Ok(None)
    }

    fn select_item(&mut self) -> PResult<SelectItem> {
        if self.eat(&Tok::Star)? {
            return Ok(SelectItem::Wildcard);
        }
        let t = self.lx.peek()?.clone();
        if let Tok::Ident(name) = &t.tok {
            if AGG_NAMES.iter().any(|a| a.eq_ignore_ascii_case(name)) && self.lx.peek_nth(1)?.tok == Tok::LParen {
                let func: AggFunc = name.parse().map_err(|_| self.error_at(&t, "unknown aggregate"))?;
                self.lx.next()?;
                self.lx.next()?;
                let arg = if self.lx.peek()?.tok == Tok::Star {
                    let star = self.lx.next()?;
                    if func != AggFunc::Count {
                        return Err(self.error_at(&star, format!("{func}(*) is not supported")));
                    }
                    None
                } else {
                    Some(self.expr(RESERVED)?)
                };
                self.expect(Tok::RParen, "')'")?;
                let alias = self.alias()?;
                return Ok(SelectItem::Agg { func, arg, alias });
            }
        }
        let expr = self.expr(RESERVED)?;
        let alias = self.alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn table_ref(&mut self) -> PResult<TableRef> {
        let source = if self.is_cast_ahead()? {
            Source::Cast(Box::new(self.cast(Island::Relational)?))
        } else {
            Source::Named(self.ident("table name", RESERVED)?)
        };
        let alias = if self.eat_keyword("as")? {
            Some(self.ident("alias", RESERVED)?)
        } else {
            match &self.lx.peek()?.tok {
                Tok::Ident(s) if !RESERVED.iter().any(|r| r.eq_ignore_ascii_case(s)) => {
                    Some(self.ident("alias", RESERVED)?)
                }
                _ => None,
            }
        };
        Ok(TableRef { source, alias })
    }

    fn column_ref(&mut self, reserved: &[&str]) -> PResult<ColumnRef> {
        let first = self.ident("column", reserved)?;
        if self.eat(&Tok::Dot)? {
            let name = self.ident("column", reserved)?;
            return Ok(ColumnRef::qualified(first, name));
        }
        Ok(ColumnRef::new(first))
    }

    // ---- expressions ----

    fn expr(&mut self, reserved: &[&str]) -> PResult<Expr> {
        let mut l = self.and_expr(reserved)?;
        while self.eat_keyword("or")? {
            let r = self.and_expr(reserved)?;
            l = Expr::Or(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn and_expr(&mut self, reserved: &[&str]) -> PResult<Expr> {
        let mut l = self.not_expr(reserved)?;
        while self.eat_keyword("and")? {
            let r = self.not_expr(reserved)?;
            l = Expr::And(Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn not_expr(&mut self, reserved: &[&str]) -> PResult<Expr> {
        if self.eat_keyword("not")? {
            return Ok(Expr::Not(Box::new(self.not_expr(reserved)?)));
        }
        self.cmp_expr(reserved)
    }

    fn cmp_expr(&mut self, reserved: &[&str]) -> PResult<Expr> {
        let l = self.add_expr(reserved)?;
        let op = match self.lx.peek()?.tok {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return Ok(l),
        };
        self.lx.next()?;
        let r = self.add_expr(reserved)?;
        Ok(Expr::cmp(op, l, r))
    }

    fn add_expr(&mut self, reserved: &[&str]) -> PResult<Expr> {
        let mut l = self.mul_expr(reserved)?;
        loop {
            let op = match self.lx.peek()?.tok {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(l),
            };
            self.lx.next()?;
            let r = self.mul_expr(reserved)?;
            l = Expr::arith(op, l, r);
        }
    }

    fn mul_expr(&mut self, reserved: &[&str]) -> PResult<Expr> {
        let mut l = self.unary(reserved)?;
        loop {
            let op = match self.lx.peek()?.tok {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(l),
            };
            self.lx.next()?;
            let r = self.unary(reserved)?;
            l = Expr::arith(op, l, r);
        }
    }

    fn unary(&mut self, reserved: &[&str]) -> PResult<Expr> {
        if self.lx.peek()?.tok == Tok::Minus {
            self.lx.next()?;
            if matches!(self.lx.peek()?.tok, Tok::Int(_) | Tok::Float(_)) {
                let t = self.lx.next()?;
                return Ok(Expr::Literal(self.number(&t, true)?));
            }
            return Ok(Expr::Neg(Box::new(self.unary(reserved)?)));
        }
        self.primary(reserved)
    }

    fn number(&self, t: &Token, negative: bool) -> PResult<Value> {
        let text = if negative {
            format!("-{}", t.text)
        } else {
            t.text.clone()
        };
        match t.tok {
            Tok::Int(_) => text
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| self.error_at(t, "integer literal out of range")),
            _ => match text.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Value::Float(x)),
                _ => Err(self.error_at(t, "float literal out of range")),
            },
        }
    }

    fn primary(&mut self, reserved: &[&str]) -> PResult<Expr> {
        let t = self.lx.peek()?.clone();
        match &t.tok {
            Tok::Int(_) | Tok::Float(_) => {
                self.lx.next()?;
                Ok(Expr::Literal(self.number(&t, false)?))
            }
            Tok::Str(s) => {
                self.lx.next()?;
                Ok(Expr::Literal(Value::Text(s.clone())))
            }
            Tok::LParen => {
                self.lx.next()?;
                let e = self.expr(reserved)?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(_) if t.is_keyword("null") => {
                self.lx.next()?;
                Ok(Expr::Literal(Value::Null))
            }
            Tok::Ident(_) => {
                if self.lx.peek_nth(1)?.tok == Tok::LParen {
                    return Err(self.error_at(&t, "function calls are only allowed as select items"));
                }
                Ok(Expr::Column(self.column_ref(reserved)?))
            }
            _ => Err(self.unexpected(&t, "expression")),
        }
    }

    // ---- AFL ----

    fn afl(&mut self) -> PResult<Afl> {
        let t = self.lx.next()?;
        let op = match &t.tok {
            Tok::Ident(s) => s.to_ascii_lowercase(),
            _ => return Err(self.unexpected(&t, "array operator")),
        };
        if !["scan", "filter", "subarray", "project", "apply", "aggregate"].contains(&op.as_str()) {
            return Err(self.unexpected(&t, "array operator"));
        }
        self.expect(Tok::LParen, "'('")?;
        let node = if op == "scan" {
            let src = if self.is_cast_ahead()? {
                Source::Cast(Box::new(self.cast(Island::Array)?))
            } else {
                Source::Named(self.ident("array name", &[])?)
            };
            Afl::Scan(src)
        } else {
            let input = Box::new(self.afl()?);
            self.expect(Tok::Comma, "','")?;
            match op.as_str() {
                "filter" => Afl::Filter(input, self.expr(EXPR_RESERVED)?),
                "subarray" => {
                    let mut bounds = vec![self.bound()?];
                    while self.eat(&Tok::Comma)? {
                        bounds.push(self.bound()?);
                    }
                    Afl::Subarray(input, bounds)
                }
                "project" => {
                    let mut attrs = vec![self.ident("attribute", &[])?];
                    while self.eat(&Tok::Comma)? {
                        attrs.push(self.ident("attribute", &[])?);
                    }
                    Afl::Project(input, attrs)
                }
                "apply" => {
                    let name = self.ident("attribute name", &[])?;
                    self.expect(Tok::Comma, "','")?;
                    Afl::Apply(input, name, self.expr(EXPR_RESERVED)?)
                }
                _ => {
                    let ft = self.lx.next()?;
                    let func: AggFunc = match &ft.tok {
                        Tok::Ident(s) => s.parse().ok(),
                        _ => None,
                    }
                    .ok_or_else(|| self.unexpected(&ft, "aggregate function"))?;
                    self.expect(Tok::LParen, "'('")?;
                    let attr = if self.lx.peek()?.tok == Tok::Star {
                        let star = self.lx.next()?;
                        if func != AggFunc::Count {
                            return Err(self.error_at(&star, format!("{func}(*) is not supported")));
                        }
                        None
                    } else {
                        Some(self.ident("attribute", &[])?)
                    };
                    self.expect(Tok::RParen, "')'")?;
                    let mut dims = Vec::new();
                    while self.eat(&Tok::Comma)? {
                        dims.push(self.ident("dimension", &[])?);
                    }
                    Afl::Aggregate {
                        input,
                        func,
                        attr,
                        dims,
                    }
                }
            }
        };
        self.expect(Tok::RParen, "')'")?;
        Ok(node)
    }

    fn bound(&mut self) -> PResult<i64> {
        let negative = self.eat(&Tok::Minus)?;
        let t = self.lx.next()?;
        match (&t.tok, self.number(&t, negative)) {
            (Tok::Int(_), Ok(Value::Int(v))) => Ok(v),
            (Tok::Int(_), Err(e)) => Err(e),
            _ => Err(self.unexpected(&t, "integer bound")),
        }
    }

    // ---- text JSON ----

    fn json_string(&mut self, what: &str) -> PResult<(String, Token)> {
        let t = self.lx.next()?;
        match &t.tok {
            Tok::JStr(s) => Ok((s.clone(), t.clone())),
            _ => Err(self.unexpected(&t, what)),
        }
    }

    fn json_opt_string(&mut self) -> PResult<Option<String>> {
        if matches!(&self.lx.peek()?.tok, Tok::Ident(s) if s == "null") {
            self.lx.next()?;
            return Ok(None);
        }
        Ok(Some(self.json_string("string or null")?.0))
    }

    fn text_scan(&mut self) -> PResult<TextScan> {
        let open = self.expect(Tok::LBrace, "'{'")?;
        let mut op = false;
        let mut table = None;
        let mut range = None;
        let mut pattern = None;
        let mut latest_only = None;
        let mut seen: Vec<String> = Vec::new();
        if self.lx.peek()?.tok != Tok::RBrace {
            loop {
                let (key, key_tok) = self.json_string("field name")?;
                if seen.contains(&key) {
                    return Err(self.error_at(&key_tok, format!("duplicate field {key:?}")));
                }
                seen.push(key.clone());
                self.expect(Tok::Colon, "':'")?;
                match key.as_str() {
                    "op" => {
                        let (v, t) = self.json_string("\"scan\"")?;
                        if v != "scan" {
                            return Err(self.error_at(&t, format!("unsupported op {v:?}")));
                        }
                        op = true;
                    }
                    "table" => {
                        table = Some(if self.is_cast_ahead()? {
                            Source::Cast(Box::new(self.cast(Island::Text)?))
                        } else {
                            let (v, t) = self.json_string("table name or bdcast")?;
                            check_identifier(&v).map_err(|e| self.error_at(&t, e.to_string()))?;
                            Source::Named(v.to_ascii_lowercase())
                        });
                    }
                    "range" => range = Some(self.json_range()?),
                    "pattern" => pattern = self.json_opt_string()?,
                    "latest_only" => {
                        let t = self.lx.next()?;
                        latest_only = Some(match &t.tok {
                            Tok::Ident(s) if s == "true" => true,
                            Tok::Ident(s) if s == "false" => false,
                            _ => return Err(self.unexpected(&t, "true or false")),
                        });
                    }
                    _ => return Err(self.error_at(&key_tok, format!("unknown field {key:?}"))),
                }
                if !self.eat(&Tok::Comma)? {
                    break;
                }
            }
        }
        self.expect(Tok::RBrace, "'}'")?;
        if !op {
            return Err(self.error_at(&open, "missing field \"op\""));
        }
        let table = table.ok_or_else(|| self.error_at(&open, "missing field \"table\""))?;
        Ok(TextScan {
            table,
            range,
            pattern,
            latest_only: latest_only.unwrap_or(false),
        })
    }

    fn json_range(&mut self) -> PResult<TextRange> {
        self.expect(Tok::LBrace, "'{'")?;
        let mut range = TextRange { start: None, end: None };
        let mut seen: Vec<String> = Vec::new();
        if self.lx.peek()?.tok != Tok::RBrace {
            loop {
                let (key, key_tok) = self.json_string("\"start\" or \"end\"")?;
                if seen.contains(&key) {
                    return Err(self.error_at(&key_tok, format!("duplicate field {key:?}")));
                }
                seen.push(key.clone());
                self.expect(Tok::Colon, "':'")?;
                match key.as_str() {
                    "start" => range.start = self.json_opt_string()?,
                    "end" => range.end = self.json_opt_string()?,
                    _ => return Err(self.error_at(&key_tok, format!("unknown field {key:?}"))),
                }
                if !self.eat(&Tok::Comma)? {
                    break;
                }
            }
        }
        self.expect(Tok::RBrace, "'}'")?;
        Ok(range)
    }
}
