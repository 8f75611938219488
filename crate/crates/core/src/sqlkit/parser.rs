//! Recursive-descent parser for the SELECT dialect used by the benchmark
//! gold queries. Produces a raw syntax tree; name resolution and literal
//! masking happen in `canon`.

use super::lexer::{tokenize, Token, TokenKind};
use super::{AggFunc, ArithOp, CmpOp, SetOpKind, SqlError};

const MAX_DEPTH: usize = 128;

const RESERVED: &[&str] = &[
    "select", "from", "where", "group", "by", "having", "order", "limit", "offset", "union", "intersect", "except",
    "join", "inner", "left", "right", "full", "outer", "cross", "natural", "on", "using", "as", "and", "or", "not",
    "in", "is", "like", "glob", "between", "exists", "distinct", "all", "case", "when", "then", "else", "end",
    "cast", "asc", "desc", "null", "with", "over", "window", "values", "escape",
];

fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| word.eq_ignore_ascii_case(k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub core: SelectCore,
    pub compound: Option<(SetOpKind, Box<Query>)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectCore {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: Option<From>,
    pub where_: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
    pub order_by: Vec<(Expr, bool)>,
    pub limit: Option<Expr>,
    pub offset: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectItem {
    pub expr: Expr,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct From {
    pub sources: Vec<Source>,
    /// ON conditions in source order; USING lists are expanded to equalities.
    pub conds: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Table { name: String, alias: Option<String> },
    Subquery { query: Box<Query>, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(String),
    String(String),
    Null,
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column {
        qualifier: Option<String>,
        name: String,
        /// Written as `"name"`; may turn out to be a string literal.
        double_quoted: bool,
    },
    Star(Option<String>),
    Literal(Literal),
    Subquery(Box<Query>),
    Agg {
        func: AggFunc,
        distinct: bool,
        arg: Box<Expr>,
    },
    Func {
        name: String,
        distinct: bool,
        args: Vec<Expr>,
    },
    Cast {
        expr: Box<Expr>,
        ty: String,
    },
    Case {
        operand: Option<Box<Expr>>,
        whens: Vec<(Expr, Expr)>,
        else_: Option<Box<Expr>>,
    },
    Arith {
        op: ArithOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Neg(Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Cmp {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Between {
        expr: Box<Expr>,
        lo: Box<Expr>,
        hi: Box<Expr>,
        negated: bool,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Expr>,
        negated: bool,
    },
    InQuery {
        expr: Box<Expr>,
        query: Box<Query>,
        negated: bool,
    },
    Like {
        expr: Box<Expr>,
        pattern: Box<Expr>,
        negated: bool,
        glob: bool,
    },
    Is {
        expr: Box<Expr>,
        rhs: Box<Expr>,
        negated: bool,
    },
    Exists {
        query: Box<Query>,
        negated: bool,
    },
}

pub fn parse_query(sql: &str) -> Result<Query, SqlError> {
    let tokens = tokenize(sql)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
        end: sql.len(),
    };
    if p.peek().is_none() {
        return Err(SqlError::parse(0, "empty query"));
    }
    if p.peek_word("with") {
        return Err(p.unsupported("common table expressions"));
    }
    let q = p.query()?;
    while p.eat(TokenKind::Semicolon) {}
    if let Some(t) = p.peek() {
        return Err(SqlError::parse(t.pos, format!("unexpected `{}` after end of query", t.text)));
    }
    Ok(q)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
    end: usize,
}

type PResult<T> = Result<T, SqlError>;

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&Token> {
        self.tokens.get(self.pos + n)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn peek_word(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_word(kw))
    }

    fn peek_kind(&self, kind: TokenKind) -> bool {
        self.peek().is_some_and(|t| t.kind == kind)
    }

    fn eat_word(&mut self, kw: &str) -> bool {
        if self.peek_word(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat(&mut self, kind: TokenKind) -> bool {
        if self.peek_kind(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek().is_some_and(|t| t.is_op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, kw: &str) -> PResult<()> {
        if self.eat_word(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{}`", kw.to_ascii_uppercase())))
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> PResult<()> {
        if self.eat(kind) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn error(&self, reason: impl Into<String>) -> SqlError {
        let reason = reason.into();
        match self.peek() {
            Some(t) => SqlError::parse(t.pos, format!("{reason}, found `{}`", t.text)),
            None => SqlError::parse(self.end, format!("{reason}, found end of input")),
        }
    }

    fn unsupported(&self, what: &str) -> SqlError {
        SqlError::Unsupported {
            pos: self.here(),
            construct: what.to_string(),
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(SqlError::parse(self.here(), "nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn query(&mut self) -> PResult<Query> {
        self.enter()?;
        let core = if self.peek_kind(TokenKind::LParen) && self.peek_at(1).is_some_and(|t| t.is_word("select")) {
            self.pos += 1;
            let inner = self.query()?;
            self.expect(TokenKind::RParen, "`)`")?;
            // A parenthesized compound in operand position is flattened onto its first core.
            if inner.compound.is_some() {
                self.leave();
                return Err(self.unsupported("parenthesized compound query as set operand"));
            }
            inner.core
        } else {
            self.select_core()?
        };
        let kind = if self.eat_word("union") {
            Some(if self.eat_word("all") {
                SetOpKind::UnionAll
            } else {
                SetOpKind::Union
            })
        } else if self.eat_word("intersect") {
            Some(SetOpKind::Intersect)
        } else if self.eat_word("except") {
            Some(SetOpKind::Except)
        } else {
            None
        };
        let compound = match kind {
            Some(k) => Some((k, Box::new(self.query()?))),
            None => None,
        };
        self.leave();
        Ok(Query { core, compound })
    }

    fn select_core(&mut self) -> PResult<SelectCore> {
        self.expect_word("select")?;
        let mut core = SelectCore::default();
        if self.eat_word("distinct") {
            core.distinct = true;
        } else {
            self.eat_word("all");
        }
        loop {
            let expr = self.expr()?;
            let alias = self.alias()?;
            core.items.push(SelectItem { expr, alias });
            if !self.eat(TokenKind::Comma) {
                break;
            }
        }
        if self.eat_word("from") {
            core.from = Some(self.from()?);
        }
        if self.eat_word("where") {
            core.where_ = Some(self.expr()?);
        }
        let mut saw_group = false;
        for _ in 0..2 {
            if !saw_group && self.peek_word("group") {
                self.pos += 1;
                self.expect_word("by")?;
                core.group_by = self.expr_list()?;
                saw_group = true;
            } else if core.having.is_none() && self.eat_word("having") {
                core.having = Some(self.expr()?);
            }
        }
        if self.peek_word("window") {
            return Err(self.unsupported("window clause"));
        }
        if self.eat_word("order") {
            self.expect_word("by")?;
            loop {
                let e = self.expr()?;
                let desc = if self.eat_word("desc") {
                    true
                } else {
                    self.eat_word("asc");
                    false
                };
                if self.eat_word("nulls") {
                    return Err(self.unsupported("NULLS FIRST/LAST"));
                }
                core.order_by.push((e, desc));
                if !self.eat(TokenKind::Comma) {
                    break;
                }
            }
        }
        if self.eat_word("limit") {
            let first = self.expr()?;
            if self.eat_word("offset") {
                core.limit = Some(first);
                core.offset = Some(self.expr()?);
            } else if self.eat(TokenKind::Comma) {
                core.offset = Some(first);
                core.limit = Some(self.expr()?);
            } else {
                core.limit = Some(first);
            }
        }
        Ok(core)
    }

    fn expr_list(&mut self) -> PResult<Vec<Expr>> {
        let mut out = vec![self.expr()?];
        while self.eat(TokenKind::Comma) {
            out.push(self.expr()?);
        }
        Ok(out)
    }

    fn alias(&mut self) -> PResult<Option<String>> {
        if self.eat_word("as") {
            return match self.peek() {
                Some(t) if matches!(t.kind, TokenKind::Word | TokenKind::QuotedIdent | TokenKind::DoubleQuoted | TokenKind::String) => {
                    let name = t.text.clone();
                    self.pos += 1;
                    Ok(Some(name))
                }
                _ => Err(self.error("expected alias after AS")),
            };
        }
        match self.peek() {
            Some(t) if t.kind == TokenKind::Word && !is_reserved(&t.text) => {
                let name = t.text.clone();
                self.pos += 1;
                Ok(Some(name))
            }
            Some(t) if t.kind == TokenKind::QuotedIdent => {
                let name = t.text.clone();
                self.pos += 1;
                Ok(Some(name))
            }
            _ => Ok(None),
        }
    }

    fn from(&mut self) -> PResult<From> {
        let mut sources = vec![self.source()?];
        let mut conds = Vec::new();
        loop {
            if self.eat(TokenKind::Comma) {
                sources.push(self.source()?);
                continue;
            }
            let save = self.pos;
            if self.eat_word("natural") {
                return Err(self.unsupported("NATURAL JOIN"));
            }
            let joined = if self.eat_word("join") {
                true
            } else if self.eat_word("inner") || self.eat_word("cross") {
                self.peek_word("join")
            } else if self.eat_word("left") || self.eat_word("right") || self.eat_word("full") {
                self.eat_word("outer");
                self.peek_word("join")
            } else {
                false
            };
            if !joined {
                self.pos = save;
                break;
            }
            self.eat_word("join");
            sources.push(self.source()?);
            if self.eat_word("on") {
                conds.push(self.expr()?);
            } else if self.eat_word("using") {
                let left = sources.len() - 2;
                let right = sources.len() - 1;
                self.expect(TokenKind::LParen, "`(` after USING")?;
                loop {
                    let col = self.ident("column name")?;
                    conds.push(Expr::Cmp {
                        op: CmpOp::Eq,
                        lhs: Box::new(source_column(&sources[left], &col)),
                        rhs: Box::new(source_column(&sources[right], &col)),
                    });
                    if !self.eat(TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::RParen, "`)`")?;
            }
        }
        Ok(From { sources, conds })
    }

    fn source(&mut self) -> PResult<Source> {
        if self.peek_kind(TokenKind::LParen) {
            if !self.peek_at(1).is_some_and(|t| t.is_word("select")) {
                return Err(self.unsupported("parenthesized join"));
            }
            self.pos += 1;
            let query = self.query()?;
            self.expect(TokenKind::RParen, "`)`")?;
            let alias = self.alias()?;
            return Ok(Source::Subquery {
                query: Box::new(query),
                alias,
            });
        }
        let name = self.ident("table name")?;
        if self.eat(TokenKind::Dot) {
            // schema-qualified names are not part of the dialect
            return Err(self.unsupported("schema-qualified table name"));
        }
        let alias = self.alias()?;
        Ok(Source::Table { name, alias })
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(t)
                if matches!(t.kind, TokenKind::QuotedIdent | TokenKind::DoubleQuoted)
                    || (t.kind == TokenKind::Word && !is_reserved(&t.text)) =>
            {
                let s = t.text.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = self.or_expr();
        self.leave();
        r
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat_word("or") {
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.eat_word("and") {
            let rhs = self.not_expr()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.peek_word("not") && !self.peek_at(1).is_some_and(|t| t.is_word("exists")) {
            self.pos += 1;
            self.enter()?;
            let inner = self.not_expr();
            self.leave();
            return Ok(Expr::Not(Box::new(inner?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let mut lhs = self.additive()?;
        loop {
            let Some(t) = self.peek() else { break };
            let op = match (t.kind, t.text.as_str()) {
                (TokenKind::Op, "=" | "==") => Some(CmpOp::Eq),
                (TokenKind::Op, "!=" | "<>") => Some(CmpOp::Ne),
                (TokenKind::Op, "<") => Some(CmpOp::Lt),
                (TokenKind::Op, ">") => Some(CmpOp::Gt),
                (TokenKind::Op, "<=") => Some(CmpOp::Le),
                (TokenKind::Op, ">=") => Some(CmpOp::Ge),
                _ => None,
            };
            if let Some(op) = op {
                self.pos += 1;
                let rhs = self.additive()?;
                lhs = Expr::Cmp {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                };
                continue;
            }
            if self.eat_word("is") {
                let negated = self.eat_word("not");
                let rhs = self.additive()?;
                lhs = Expr::Is {
                    expr: Box::new(lhs),
                    rhs: Box::new(rhs),
                    negated,
                };
                continue;
            }
            let save = self.pos;
            let negated = self.eat_word("not");
            if self.eat_word("between") {
                let lo = self.additive()?;
                self.expect_word("and")?;
                let hi = self.additive()?;
                lhs = Expr::Between {
                    expr: Box::new(lhs),
                    lo: Box::new(lo),
                    hi: Box::new(hi),
                    negated,
                };
            } else if self.eat_word("in") {
                lhs = self.in_rhs(lhs, negated)?;
            } else if self.peek_word("like") || self.peek_word("glob") {
                let glob = self.peek_word("glob");
                self.pos += 1;
                let pattern = self.additive()?;
                if self.peek_word("escape") {
                    return Err(self.unsupported("LIKE ... ESCAPE"));
                }
                lhs = Expr::Like {
                    expr: Box::new(lhs),
                    pattern: Box::new(pattern),
                    negated,
                    glob,
                };
            } else if negated && self.peek_word("null") {
                // `x NOT NULL`
                self.pos += 1;
                lhs = Expr::Is {
                    expr: Box::new(lhs),
                    rhs: Box::new(Expr::Literal(Literal::Null)),
                    negated: true,
                };
            } else {
                self.pos = save;
                break;
            }
        }
        Ok(lhs)
    }

    fn in_rhs(&mut self, lhs: Expr, negated: bool) -> PResult<Expr> {
        self.expect(TokenKind::LParen, "`(` after IN")?;
        if self.peek_word("select") {
            let query = self.query()?;
            self.expect(TokenKind::RParen, "`)`")?;
            return Ok(Expr::InQuery {
                expr: Box::new(lhs),
                query: Box::new(query),
                negated,
            });
        }
        let list = if self.peek_kind(TokenKind::RParen) {
            Vec::new()
        } else {
            self.expr_list()?
        };
        self.expect(TokenKind::RParen, "`)`")?;
        Ok(Expr::InList {
            expr: Box::new(lhs),
            list,
            negated,
        })
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = if self.eat_op("+") {
                ArithOp::Add
            } else if self.eat_op("-") {
                ArithOp::Sub
            } else {
                break;
            };
            let rhs = self.multiplicative()?;
            lhs = Expr::Arith {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut lhs = self.concat()?;
        loop {
            let op = if self.eat_op("*") {
                ArithOp::Mul
            } else if self.eat_op("/") {
                ArithOp::Div
            } else if self.eat_op("%") {
                ArithOp::Mod
            } else {
                break;
            };
            let rhs = self.concat()?;
            lhs = Expr::Arith {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn concat(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while self.eat_op("||") {
            let rhs = self.unary()?;
            lhs = Expr::Arith {
                op: ArithOp::Concat,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_op("-") {
            self.enter()?;
            let inner = self.unary();
            self.leave();
            return Ok(Expr::Neg(Box::new(inner?)));
        }
        if self.eat_op("+") {
            self.enter()?;
            let inner = self.unary();
            self.leave();
            return inner;
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error("expected expression"));
        };
        match tok.kind {
            TokenKind::Number => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Number(tok.text)))
            }
            TokenKind::String => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::String(tok.text)))
            }
            TokenKind::Op if tok.text == "*" => {
                self.pos += 1;
                Ok(Expr::Star(None))
            }
            TokenKind::LParen => {
                self.pos += 1;
                if self.peek_word("select") {
                    let q = self.query()?;
                    self.expect(TokenKind::RParen, "`)`")?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                let e = self.expr()?;
                if self.peek_kind(TokenKind::Comma) {
                    return Err(self.unsupported("row value"));
                }
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(e)
            }
            TokenKind::QuotedIdent | TokenKind::DoubleQuoted => {
                self.pos += 1;
                self.column_tail(tok.text, tok.kind == TokenKind::DoubleQuoted)
            }
            TokenKind::Word => self.word_primary(tok),
            _ => Err(self.error("expected expression")),
        }
    }

    fn word_primary(&mut self, tok: Token) -> PResult<Expr> {
        let lower = tok.text.to_ascii_lowercase();
        match lower.as_str() {
            "null" => {
                self.pos += 1;
                return Ok(Expr::Literal(Literal::Null));
            }
            "true" | "false" if !self.peek_at(1).is_some_and(|t| t.kind == TokenKind::Dot) => {
                self.pos += 1;
                return Ok(Expr::Literal(Literal::Bool(lower == "true")));
            }
            "case" => {
                self.pos += 1;
                return self.case_expr();
            }
            "cast" => {
                self.pos += 1;
                self.expect(TokenKind::LParen, "`(` after CAST")?;
                let e = self.expr()?;
                self.expect_word("as")?;
                let mut ty = Vec::new();
                while let Some(t) = self.peek() {
                    if t.kind == TokenKind::RParen {
                        break;
                    }
                    ty.push(t.text.to_ascii_lowercase());
                    self.pos += 1;
                }
                self.expect(TokenKind::RParen, "`)`")?;
                return Ok(Expr::Cast {
                    expr: Box::new(e),
                    ty: ty.join(" "),
                });
            }
            "exists" => {
                self.pos += 1;
                return self.exists(false);
            }
            "not" if self.peek_at(1).is_some_and(|t| t.is_word("exists")) => {
                self.pos += 2;
                return self.exists(true);
            }
            _ => {}
        }
        if is_reserved(&lower) {
            return Err(self.error("expected expression"));
        }
        self.pos += 1;
        if self.peek_kind(TokenKind::LParen) {
            return self.call(lower);
        }
        self.column_tail(tok.text, false)
    }

    fn exists(&mut self, negated: bool) -> PResult<Expr> {
        self.expect(TokenKind::LParen, "`(` after EXISTS")?;
        let q = self.query()?;
        self.expect(TokenKind::RParen, "`)`")?;
        Ok(Expr::Exists {
            query: Box::new(q),
            negated,
        })
    }

    fn column_tail(&mut self, first: String, double_quoted: bool) -> PResult<Expr> {
        if !self.eat(TokenKind::Dot) {
            return Ok(Expr::Column {
                qualifier: None,
                name: first,
                double_quoted,
            });
        }
        if self.eat_op("*") {
            return Ok(Expr::Star(Some(first)));
        }
        let name = match self.peek() {
            Some(t) if matches!(t.kind, TokenKind::Word | TokenKind::QuotedIdent | TokenKind::DoubleQuoted) => {
                t.text.clone()
            }
            _ => return Err(self.error("expected column name after `.`")),
        };
        self.pos += 1;
        if self.peek_kind(TokenKind::Dot) {
            return Err(self.unsupported("schema-qualified column"));
        }
        Ok(Expr::Column {
            qualifier: Some(first),
            name,
            double_quoted: false,
        })
    }

    fn call(&mut self, name: String) -> PResult<Expr> {
        self.expect(TokenKind::LParen, "`(`")?;
        let distinct = self.eat_word("distinct");
        let args = if self.peek_kind(TokenKind::RParen) {
            Vec::new()
        } else {
            self.expr_list()?
        };
        self.expect(TokenKind::RParen, "`)`")?;
        if self.peek_word("over") || self.peek_word("filter") {
            return Err(self.unsupported("window function"));
        }
        let agg = match name.as_str() {
            "count" => Some(AggFunc::Count),
            "sum" => Some(AggFunc::Sum),
            "avg" => Some(AggFunc::Avg),
            "min" if args.len() == 1 => Some(AggFunc::Min),
            "max" if args.len() == 1 => Some(AggFunc::Max),
            _ => None,
        };
        match agg {
            Some(func) if args.len() == 1 => Ok(Expr::Agg {
                func,
                distinct,
                arg: Box::new(args.into_iter().next().expect("one argument")),
            }),
            Some(_) => Err(SqlError::parse(self.here(), format!("aggregate `{name}` takes one argument"))),
            None => Ok(Expr::Func { name, distinct, args }),
        }
    }

    fn case_expr(&mut self) -> PResult<Expr> {
        let operand = if self.peek_word("when") {
            None
        } else {
            Some(Box::new(self.expr()?))
        };
        let mut whens = Vec::new();
        while self.eat_word("when") {
            let cond = self.expr()?;
            self.expect_word("then")?;
            let value = self.expr()?;
            whens.push((cond, value));
        }
        if whens.is_empty() {
            return Err(self.error("expected WHEN"));
        }
        let else_ = if self.eat_word("else") {
            Some(Box::new(self.expr()?))
        } else {
            None
        };
        self.expect_word("end")?;
        Ok(Expr::Case { operand, whens, else_ })
    }
}

fn source_column(source: &Source, col: &str) -> Expr {
    let qualifier = match source {
        Source::Table { name, alias } => Some(alias.clone().unwrap_or_else(|| name.clone())),
        Source::Subquery { alias, .. } => alias.clone(),
    };
    Expr::Column {
        qualifier,
        name: col.to_string(),
        double_quoted: false,
    }
}
