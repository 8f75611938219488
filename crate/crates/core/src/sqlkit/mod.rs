//! SQL parsing into a canonical clause structure.
//!
//! [`parse_sql`] resolves table aliases against a [`DatabaseSchema`], masks
//! literals, case-folds identifiers and sorts every set-valued clause, so two
//! queries are an exact-set match exactly when their [`SqlUnit`]s are equal.
//! The same structure feeds the Spider hardness classifier.

mod canon;
mod hardness;
mod lexer;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::DatabaseSchema;

pub use hardness::{classify_difficulty, ComponentCounts};
pub use lexer::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SqlError {
    #[error("lexical error at byte {pos}: {reason}")]
    Lex { pos: usize, reason: String },
    #[error("parse error at byte {pos}: {reason}")]
    Parse { pos: usize, reason: String },
    #[error("unsupported construct at byte {pos}: {construct}")]
    Unsupported { pos: usize, construct: String },
    #[error("difficulty labels for the {0} scheme are supplied by the dataset, not computed")]
    SchemeNotComputable(Scheme),
}

impl SqlError {
    pub(crate) fn lex(pos: usize, reason: impl Into<String>) -> Self {
        SqlError::Lex {
            pos,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(pos: usize, reason: impl Into<String>) -> Self {
        SqlError::Parse {
            pos,
            reason: reason.into(),
        }
    }

    pub fn position(&self) -> Option<usize> {
        match self {
            SqlError::Lex { pos, .. } | SqlError::Parse { pos, .. } | SqlError::Unsupported { pos, .. } => Some(*pos),
            SqlError::SchemeNotComputable(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFunc {
    Max,
    Min,
    Count,
    Sum,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Sub,
    Add,
    Mul,
    Div,
    Mod,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    /// The operator that holds after swapping operands.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetOpKind {
    Union,
    UnionAll,
    Intersect,
    Except,
}

/// Operator of a flattened WHERE/HAVING/ON predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PredOp {
    Cmp(CmpOp),
    Between,
    In,
    Like,
    Glob,
    Is,
    Exists,
    /// A boolean term with no comparison of its own (`WHERE flag`,
    /// `NOT (a AND b)`).
    Truth,
}

/// The right-hand side of a comparison once literals are masked.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ValueSlot {
    Masked,
    /// Only produced when masking is disabled.
    Literal(String),
    Subquery(Box<SqlUnit>),
}

impl ValueSlot {
    pub fn subquery(&self) -> Option<&SqlUnit> {
        match self {
            ValueSlot::Subquery(u) => Some(u),
            _ => None,
        }
    }
}

/// A column resolved to its owning table (lowercased). Columns of derived
/// tables use the qualifier `#<source position>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnName {
    pub table: Option<String>,
    pub column: String,
}

impl fmt::Display for ColumnName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) => write!(f, "{t}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Expr {
    Column(ColumnName),
    Star(Option<String>),
    Value(ValueSlot),
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
    /// Boolean sub-expression inside a scalar context (CASE WHEN, IIF).
    Cond(Box<Condition>),
}

impl Expr {
    pub fn is_value(&self) -> bool {
        matches!(self, Expr::Value(_))
    }

    /// Aggregate at the top of the expression, the way the Spider
    /// structures record `agg_id`.
    pub fn top_agg(&self) -> Option<AggFunc> {
        match self {
            Expr::Agg { func, .. } => Some(*func),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub negated: bool,
    pub op: PredOp,
    pub lhs: Expr,
    pub rhs: Vec<Expr>,
}

impl Predicate {
    /// Subqueries sitting directly in a value position.
    pub fn nested_units(&self) -> impl Iterator<Item = &SqlUnit> {
        std::iter::once(&self.lhs).chain(self.rhs.iter()).filter_map(|e| match e {
            Expr::Value(ValueSlot::Subquery(u)) => Some(u.as_ref()),
            _ => None,
        })
    }
}

/// A flattened AND/OR condition: predicates as a multiset plus connector counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub preds: Vec<Predicate>,
    pub ands: usize,
    pub ors: usize,
}

impl Condition {
    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TableSource {
    Table(String),
    Subquery(Box<SqlUnit>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FromClause {
    pub sources: Vec<TableSource>,
    pub conds: Condition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrderItem {
    pub expr: Expr,
    pub dir: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SetOp {
    pub kind: SetOpKind,
    pub rhs: Box<SqlUnit>,
}

/// Canonical clause decomposition of one SELECT (plus its set-operation tail).
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SqlUnit {
    pub distinct: bool,
    pub select: Vec<Expr>,
    pub from: FromClause,
    pub where_: Condition,
    pub group_by: Vec<Expr>,
    pub having: Condition,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<ValueSlot>,
    pub offset: Option<ValueSlot>,
    pub set_op: Option<SetOp>,
}

/// Clause names reported by [`diff_clauses`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    Select,
    From,
    Where,
    GroupBy,
    Having,
    OrderBy,
    Limit,
    SetOp,
}

impl SqlUnit {
    /// Re-sorts every set-valued clause, recursively. Parsing already
    /// returns canonical units; this is exposed for units built by hand.
    pub fn canonicalize(&mut self) {
        canon::sort_unit(self);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub mask_literals: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { mask_literals: true }
    }
}

/// Parses `sql` against `schema` into its canonical clause structure.
pub fn parse_sql(sql: &str, schema: &DatabaseSchema) -> Result<SqlUnit, SqlError> {
    parse_sql_with(sql, schema, ParseOptions::default())
}

pub fn parse_sql_with(sql: &str, schema: &DatabaseSchema, opts: ParseOptions) -> Result<SqlUnit, SqlError> {
    let query = parser::parse_query(sql)?;
    Ok(canon::canonicalize(&query, schema, opts))
}

/// Exact-set match: every clause of `pred` equals the corresponding clause of `gold`.
pub fn em_match(pred: &SqlUnit, gold: &SqlUnit) -> bool {
    pred == gold
}

/// Top-level clauses on which two units disagree, in clause order.
pub fn diff_clauses(pred: &SqlUnit, gold: &SqlUnit) -> Vec<Clause> {
    let mut out = Vec::new();
    if pred.distinct != gold.distinct || pred.select != gold.select {
        out.push(Clause::Select);
    }
    if pred.from != gold.from {
        out.push(Clause::From);
    }
    if pred.where_ != gold.where_ {
        out.push(Clause::Where);
    }
    if pred.group_by != gold.group_by {
        out.push(Clause::GroupBy);
    }
    if pred.having != gold.having {
        out.push(Clause::Having);
    }
    if pred.order_by != gold.order_by {
        out.push(Clause::OrderBy);
    }
    if pred.limit != gold.limit || pred.offset != gold.offset {
        out.push(Clause::Limit);
    }
    if pred.set_op != gold.set_op {
        out.push(Clause::SetOp);
    }
    out
}

/// True when the statement has an ORDER BY outside any parentheses, i.e.
/// one that orders the final result.
pub fn has_top_level_order_by(sql: &str) -> bool {
    let Ok(tokens) = tokenize(sql) else {
        return false;
    };
    let mut depth = 0i32;
    tokens.windows(2).any(|w| {
        match w[0].kind {
            TokenKind::LParen => depth += 1,
            TokenKind::RParen => depth -= 1,
            _ => {}
        }
        depth == 0 && w[0].is_word("order") && w[1].is_word("by")
    })
}

/// Keyword skeleton of a query: identifiers and literals become `_`.
pub fn sql_skeleton(sql: &str) -> String {
    let Ok(tokens) = tokenize(sql) else {
        return sql.trim().to_string();
    };
    const KEEP: &[&str] = &[
        "select", "from", "where", "group", "by", "having", "order", "limit", "offset", "union", "intersect",
        "except", "all", "join", "inner", "left", "outer", "cross", "on", "as", "and", "or", "not", "in", "is",
        "like", "glob", "between", "exists", "distinct", "case", "when", "then", "else", "end", "cast", "asc",
        "desc", "null", "count", "sum", "avg", "min", "max",
    ];
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    for t in &tokens {
        let piece = match t.kind {
            TokenKind::Word if KEEP.iter().any(|k| t.text.eq_ignore_ascii_case(k)) => t.text.to_ascii_lowercase(),
            TokenKind::Word | TokenKind::QuotedIdent | TokenKind::DoubleQuoted | TokenKind::String | TokenKind::Number => {
                "_".to_string()
            }
            TokenKind::Dot => continue,
            TokenKind::Semicolon => continue,
            _ => t.text.clone(),
        };
        // `T1.name` collapses to a single placeholder
        if piece == "_" && out.last().is_some_and(|p| p == "_") && matches!(t.kind, TokenKind::Word | TokenKind::QuotedIdent) {
            continue;
        }
        out.push(piece);
    }
    out.join(" ")
}

/// Difficulty labelling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Spider4,
    Bird3,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Spider4 => "spider4",
            Scheme::Bird3 => "bird3",
        })
    }
}

impl Scheme {
    pub fn labels(self) -> &'static [DifficultyLabel] {
        use DifficultyLabel::*;
        match self {
            Scheme::Spider4 => &[Easy, Medium, Hard, Extra],
            Scheme::Bird3 => &[Simple, Moderate, Challenging],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyLabel {
    Easy,
    Medium,
    Hard,
    Extra,
    Simple,
    Moderate,
    Challenging,
}

impl DifficultyLabel {
    pub fn scheme(self) -> Scheme {
        use DifficultyLabel::*;
        match self {
            Easy | Medium | Hard | Extra => Scheme::Spider4,
            Simple | Moderate | Challenging => Scheme::Bird3,
        }
    }

    pub fn as_str(self) -> &'static str {
        use DifficultyLabel::*;
        match self {
            Easy => "easy",
            Medium => "medium",
            Hard => "hard",
            Extra => "extra",
            Simple => "simple",
            Moderate => "moderate",
            Challenging => "challenging",
        }
    }

    /// Column heading used in rendered tables.
    pub fn title(self) -> &'static str {
        use DifficultyLabel::*;
        match self {
            Easy => "Easy",
            Medium => "Medium",
            Hard => "Hard",
            Extra => "Extra",
            Simple => "Simple",
            Moderate => "Moderate",
            Challenging => "Challenging",
        }
    }

    pub fn parse(scheme: Scheme, raw: &str) -> Option<DifficultyLabel> {
        let s = raw.trim().to_ascii_lowercase();
        let label = match s.as_str() {
            "easy" => DifficultyLabel::Easy,
            "medium" => DifficultyLabel::Medium,
            "hard" => DifficultyLabel::Hard,
            "extra" | "extra hard" | "extra_hard" => DifficultyLabel::Extra,
            "simple" => DifficultyLabel::Simple,
            "moderate" => DifficultyLabel::Moderate,
            "challenging" | "challenge" => DifficultyLabel::Challenging,
            _ => return None,
        };
        (label.scheme() == scheme).then_some(label)
    }
}

impl fmt::Display for DifficultyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
