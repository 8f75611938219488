//! Raw syntax tree -> canonical [`SqlUnit`].

use super::parser::{self, Literal, Query, SelectCore, Source};
use super::{
    ColumnName, CmpOp, Condition, Direction, Expr, OrderItem, ParseOptions, PredOp, Predicate, SetOp,
    SqlUnit, TableSource, ValueSlot,
};
use crate::dataset::DatabaseSchema;

pub(super) fn canonicalize(q: &Query, schema: &DatabaseSchema, opts: ParseOptions) -> SqlUnit {
    Ctx { schema, opts }.query(q, None)
}

struct Ctx<'s> {
    schema: &'s DatabaseSchema,
    opts: ParseOptions,
}

struct ScopeSource {
    /// Lowercased alias, or table name when unaliased.
    key: String,
    /// Canonical qualifier written into resolved columns.
    qualifier: String,
    /// Lowercased column names, when known.
    columns: Option<Vec<String>>,
}

struct Scope<'p> {
    sources: Vec<ScopeSource>,
    aliases: Vec<(String, Expr)>,
    parent: Option<&'p Scope<'p>>,
}

impl<'p> Scope<'p> {
    fn chain(&self) -> impl Iterator<Item = &Scope<'p>> {
        std::iter::successors(Some(self), |s| s.parent)
    }

    fn find_column(&self, name: &str) -> Option<&ScopeSource> {
        self.sources
            .iter()
            .find(|s| s.columns.as_ref().is_some_and(|cols| cols.iter().any(|c| c == name)))
    }

    fn alias(&self, name: &str) -> Option<&Expr> {
        self.aliases.iter().find(|(a, _)| a == name).map(|(_, e)| e)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// SELECT list, FROM conditions.
    Plain,
    /// WHERE / GROUP BY / HAVING: table columns win over result aliases.
    ColumnsFirst,
    /// ORDER BY: result aliases win.
    AliasFirst,
}

impl Ctx<'_> {
    fn query(&self, q: &Query, parent: Option<&Scope<'_>>) -> SqlUnit {
        let mut unit = self.core(&q.core, parent);
        if let Some((kind, rhs)) = &q.compound {
            unit.set_op = Some(SetOp {
                kind: *kind,
                rhs: Box::new(self.query(rhs, parent)),
            });
        }
        unit
    }

    fn core(&self, core: &SelectCore, parent: Option<&Scope<'_>>) -> SqlUnit {
        let mut unit = SqlUnit {
            distinct: core.distinct,
            ..Default::default()
        };

        let mut scope = Scope {
            sources: Vec::new(),
            aliases: Vec::new(),
            parent,
        };
        if let Some(from) = &core.from {
            for (i, src) in from.sources.iter().enumerate() {
                match src {
                    Source::Table { name, alias } => {
                        let table = name.to_lowercase();
                        let columns = self
                            .schema
                            .table(name)
                            .map(|t| t.columns.iter().map(|c| c.name.to_lowercase()).collect());
                        scope.sources.push(ScopeSource {
                            key: alias.as_deref().unwrap_or(name).to_lowercase(),
                            qualifier: table.clone(),
                            columns,
                        });
                        unit.from.sources.push(TableSource::Table(table));
                    }
                    Source::Subquery { query, alias } => {
                        let inner = self.query(query, parent);
                        scope.sources.push(ScopeSource {
                            key: alias.as_deref().unwrap_or_default().to_lowercase(),
                            qualifier: format!("#{i}"),
                            columns: output_columns(&query.core),
                        });
                        unit.from.sources.push(TableSource::Subquery(Box::new(inner)));
                    }
                }
            }
            let mut conds = Condition::default();
            for (n, on) in from.conds.iter().enumerate() {
                if n > 0 {
                    conds.ands += 1;
                }
                self.flatten(on, &scope, Mode::Plain, &mut conds);
            }
            conds.preds.sort();
            unit.from.conds = conds;
        }

        unit.select = core.items.iter().map(|it| self.expr(&it.expr, &scope, Mode::Plain)).collect();
        scope.aliases = core
            .items
            .iter()
            .zip(&unit.select)
            .filter_map(|(it, e)| it.alias.as_ref().map(|a| (a.to_lowercase(), e.clone())))
            .collect();

        if let Some(w) = &core.where_ {
            unit.where_ = self.condition(w, &scope, Mode::ColumnsFirst);
        }
        unit.group_by = core.group_by.iter().map(|e| self.expr(e, &scope, Mode::ColumnsFirst)).collect();
        if let Some(h) = &core.having {
            unit.having = self.condition(h, &scope, Mode::ColumnsFirst);
        }
        unit.order_by = core
            .order_by
            .iter()
            .map(|(e, desc)| OrderItem {
                expr: self.expr(e, &scope, Mode::AliasFirst),
                dir: if *desc { Direction::Desc } else { Direction::Asc },
            })
            .collect();
        unit.limit = core.limit.as_ref().map(|e| self.slot(e, &scope));
        unit.offset = core.offset.as_ref().map(|e| self.slot(e, &scope));

        unit.select.sort();
        unit.from.sources.sort();
        unit.group_by.sort();
        unit
    }

    fn slot(&self, e: &parser::Expr, scope: &Scope<'_>) -> ValueSlot {
        match self.expr(e, scope, Mode::Plain) {
            Expr::Value(v) => v,
            _ => ValueSlot::Masked,
        }
    }

    fn literal(&self, lit: &Literal) -> ValueSlot {
        if self.opts.mask_literals {
            return ValueSlot::Masked;
        }
        ValueSlot::Literal(match lit {
            Literal::Number(n) => n.clone(),
            Literal::String(s) => format!("'{s}'"),
            Literal::Null => "NULL".into(),
            Literal::Bool(b) => b.to_string(),
        })
    }

    fn condition(&self, e: &parser::Expr, scope: &Scope<'_>, mode: Mode) -> Condition {
        let mut c = Condition::default();
        self.flatten(e, scope, mode, &mut c);
        c.preds.sort();
        c
    }

    fn flatten(&self, e: &parser::Expr, scope: &Scope<'_>, mode: Mode, out: &mut Condition) {
        match e {
            parser::Expr::And(l, r) => {
                self.flatten(l, scope, mode, out);
                self.flatten(r, scope, mode, out);
                out.ands += 1;
            }
            parser::Expr::Or(l, r) => {
                self.flatten(l, scope, mode, out);
                self.flatten(r, scope, mode, out);
                out.ors += 1;
            }
            other => out.preds.push(self.predicate(other, scope, mode)),
        }
    }

    fn predicate(&self, e: &parser::Expr, scope: &Scope<'_>, mode: Mode) -> Predicate {
        use parser::Expr as P;
        let ex = |x: &P| self.expr(x, scope, mode);
        match e {
            P::Not(inner) => match inner.as_ref() {
                P::And(..) | P::Or(..) => Predicate {
                    negated: true,
                    op: PredOp::Truth,
                    lhs: Expr::Cond(Box::new(self.condition(inner, scope, mode))),
                    rhs: Vec::new(),
                },
                other => {
                    let mut p = self.predicate(other, scope, mode);
                    p.negated = !p.negated;
                    p
                }
            },
            P::Cmp { op, lhs, rhs } => orient(*op, ex(lhs), ex(rhs)),
            P::Between { expr, lo, hi, negated } => Predicate {
                negated: *negated,
                op: PredOp::Between,
                lhs: ex(expr),
                rhs: vec![ex(lo), ex(hi)],
            },
            P::InList { expr, list, negated } => {
                let mut items: Vec<Expr> = list.iter().map(ex).collect();
                if self.opts.mask_literals && items.iter().all(|i| matches!(i, Expr::Value(ValueSlot::Masked))) {
                    items = vec![Expr::Value(ValueSlot::Masked)];
                } else {
                    items.sort();
                }
                Predicate {
                    negated: *negated,
                    op: PredOp::In,
                    lhs: ex(expr),
                    rhs: items,
                }
            }
            P::InQuery { expr, query, negated } => Predicate {
                negated: *negated,
                op: PredOp::In,
                lhs: ex(expr),
                rhs: vec![Expr::Value(ValueSlot::Subquery(Box::new(self.query(query, Some(scope)))))],
            },
            P::Like {
                expr,
                pattern,
                negated,
                glob,
            } => Predicate {
                negated: *negated,
                op: if *glob { PredOp::Glob } else { PredOp::Like },
                lhs: ex(expr),
                rhs: vec![ex(pattern)],
            },
            P::Is { expr, rhs, negated } => Predicate {
                negated: *negated,
                op: PredOp::Is,
                lhs: ex(expr),
                rhs: vec![ex(rhs)],
            },
            P::Exists { query, negated } => Predicate {
                negated: *negated,
                op: PredOp::Exists,
                lhs: Expr::Value(ValueSlot::Subquery(Box::new(self.query(query, Some(scope))))),
                rhs: Vec::new(),
            },
            other => Predicate {
                negated: false,
                op: PredOp::Truth,
                lhs: ex(other),
                rhs: Vec::new(),
            },
        }
    }

    fn expr(&self, e: &parser::Expr, scope: &Scope<'_>, mode: Mode) -> Expr {
        use parser::Expr as P;
        let bx = |x: &P| Box::new(self.expr(x, scope, mode));
        match e {
            P::Column {
                qualifier,
                name,
                double_quoted,
            } => match self.column(qualifier.as_deref(), name, *double_quoted, scope, mode) {
                Some(c) => c,
                None => Expr::Value(self.literal(&Literal::String(name.clone()))),
            },
            P::Star(q) => Expr::Star(q.as_deref().map(|q| resolve_qualifier(q, scope))),
            P::Literal(l) => Expr::Value(self.literal(l)),
            P::Subquery(q) => Expr::Value(ValueSlot::Subquery(Box::new(self.query(q, Some(scope))))),
            P::Agg { func, distinct, arg } => Expr::Agg {
                func: *func,
                distinct: *distinct,
                arg: bx(arg),
            },
            P::Func { name, distinct, args } => Expr::Func {
                name: name.clone(),
                distinct: *distinct,
                args: args.iter().map(|a| self.expr(a, scope, mode)).collect(),
            },
            P::Cast { expr, ty } => Expr::Cast {
                expr: bx(expr),
                ty: ty.clone(),
            },
            P::Case { operand, whens, else_ } => Expr::Case {
                operand: operand.as_deref().map(bx),
                whens: whens
                    .iter()
                    .map(|(w, v)| {
                        let w = if operand.is_some() {
                            self.expr(w, scope, mode)
                        } else {
                            Expr::Cond(Box::new(self.condition(w, scope, mode)))
                        };
                        (w, self.expr(v, scope, mode))
                    })
                    .collect(),
                else_: else_.as_deref().map(bx),
            },
            P::Arith { op, lhs, rhs } => Expr::Arith {
                op: *op,
                lhs: bx(lhs),
                rhs: bx(rhs),
            },
            P::Neg(inner) => match self.expr(inner, scope, mode) {
                Expr::Value(ValueSlot::Literal(s)) => Expr::Value(ValueSlot::Literal(format!("-{s}"))),
                Expr::Value(ValueSlot::Masked) => Expr::Value(ValueSlot::Masked),
                other => Expr::Neg(Box::new(other)),
            },
            boolean => Expr::Cond(Box::new(self.condition(boolean, scope, mode))),
        }
    }

    /// `None` means a double-quoted token that names no column: a string.
    fn column(
        &self,
        qualifier: Option<&str>,
        name: &str,
        double_quoted: bool,
        scope: &Scope<'_>,
        mode: Mode,
    ) -> Option<Expr> {
        let column = name.to_lowercase();
        if let Some(q) = qualifier {
            return Some(Expr::Column(ColumnName {
                table: Some(resolve_qualifier(q, scope)),
                column,
            }));
        }
        if mode == Mode::AliasFirst {
            if let Some(e) = scope.alias(&column) {
                return Some(e.clone());
            }
        }
        if let Some(src) = scope.find_column(&column) {
            return Some(qualified(&src.qualifier, column));
        }
        if mode == Mode::ColumnsFirst {
            if let Some(e) = scope.alias(&column) {
                return Some(e.clone());
            }
        }
        for outer in scope.chain().skip(1) {
            if let Some(src) = outer.find_column(&column) {
                return Some(qualified(&src.qualifier, column));
            }
        }
        if double_quoted {
            return None;
        }
        if scope.sources.len() == 1 {
            return Some(qualified(&scope.sources[0].qualifier, column));
        }
        Some(Expr::Column(ColumnName { table: None, column }))
    }
}

fn qualified(table: &str, column: String) -> Expr {
    Expr::Column(ColumnName {
        table: Some(table.to_string()),
        column,
    })
}

fn resolve_qualifier(q: &str, scope: &Scope<'_>) -> String {
    let key = q.to_lowercase();
    for s in scope.chain() {
        if let Some(src) = s.sources.iter().find(|src| src.key == key) {
            return src.qualifier.clone();
        }
    }
    for s in scope.chain() {
        if let Some(src) = s.sources.iter().find(|src| src.qualifier == key) {
            return src.qualifier.clone();
        }
    }
    key
}

fn output_columns(core: &SelectCore) -> Option<Vec<String>> {
    let mut cols = Vec::with_capacity(core.items.len());
    for it in &core.items {
        match (&it.alias, &it.expr) {
            (Some(a), _) => cols.push(a.to_lowercase()),
            (None, parser::Expr::Column { name, .. }) => cols.push(name.to_lowercase()),
            (None, parser::Expr::Star(_)) => return None,
            _ => {}
        }
    }
    Some(cols)
}

/// Puts comparison operands in a fixed orientation: values go right, and two
/// non-values are ordered so `a = b` and `b = a` coincide.
fn orient(op: CmpOp, lhs: Expr, rhs: Expr) -> Predicate {
    let swap = (lhs.is_value() && !rhs.is_value()) || (lhs.is_value() == rhs.is_value() && lhs > rhs);
    let (op, lhs, rhs) = if swap { (op.flipped(), rhs, lhs) } else { (op, lhs, rhs) };
    Predicate {
        negated: false,
        op: PredOp::Cmp(op),
        lhs,
        rhs: vec![rhs],
    }
}

pub(super) fn sort_unit(u: &mut SqlUnit) {
    u.select.iter_mut().for_each(sort_expr);
    u.select.sort();
    for s in &mut u.from.sources {
        if let TableSource::Subquery(inner) = s {
            sort_unit(inner);
        }
    }
    u.from.sources.sort();
    sort_condition(&mut u.from.conds);
    sort_condition(&mut u.where_);
    u.group_by.iter_mut().for_each(sort_expr);
    u.group_by.sort();
    sort_condition(&mut u.having);
    for o in &mut u.order_by {
        sort_expr(&mut o.expr);
    }
    for v in [&mut u.limit, &mut u.offset].into_iter().flatten() {
        if let ValueSlot::Subquery(inner) = v {
            sort_unit(inner);
        }
    }
    if let Some(op) = &mut u.set_op {
        sort_unit(&mut op.rhs);
    }
}

fn sort_condition(c: &mut Condition) {
    for p in &mut c.preds {
        sort_expr(&mut p.lhs);
        p.rhs.iter_mut().for_each(sort_expr);
    }
    c.preds.sort();
}

fn sort_expr(e: &mut Expr) {
    match e {
        Expr::Value(ValueSlot::Subquery(u)) => sort_unit(u),
        Expr::Value(_) | Expr::Column(_) | Expr::Star(_) => {}
        Expr::Agg { arg, .. } => sort_expr(arg),
        Expr::Func { args, .. } => args.iter_mut().for_each(sort_expr),
        Expr::Cast { expr, .. } | Expr::Neg(expr) => sort_expr(expr),
        Expr::Case { operand, whens, else_ } => {
            if let Some(o) = operand {
                sort_expr(o);
            }
            for (w, v) in whens {
                sort_expr(w);
                sort_expr(v);
            }
            if let Some(x) = else_ {
                sort_expr(x);
            }
        }
        Expr::Arith { lhs, rhs, .. } => {
            sort_expr(lhs);
            sort_expr(rhs);
        }
        Expr::Cond(c) => sort_condition(c),
    }
}
