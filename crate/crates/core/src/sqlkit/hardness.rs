//! Spider four-level hardness, computed from a canonical [`SqlUnit`].
//!
//! The counting rules follow the reference evaluator, quirks included: a
//! negated predicate counts as an aggregate, and every AND/OR connector in
//! HAVING counts as one too.

use super::{Condition, DifficultyLabel, PredOp, Scheme, SqlError, SqlUnit};

/// The three counters the thresholds are applied to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComponentCounts {
    pub component1: usize,
    pub component2: usize,
    pub others: usize,
}

impl ComponentCounts {
    pub fn of(unit: &SqlUnit) -> Self {
        ComponentCounts {
            component1: component1(unit),
            component2: component2(unit),
            others: others(unit),
        }
    }

    pub fn label(self) -> DifficultyLabel {
        let ComponentCounts {
            component1: c1,
            component2: c2,
            others: o,
        } = self;
        if c1 <= 1 && o == 0 && c2 == 0 {
            DifficultyLabel::Easy
        } else if (o <= 2 && c1 <= 1 && c2 == 0) || (c1 <= 2 && o < 2 && c2 == 0) {
            DifficultyLabel::Medium
        } else if (o > 2 && c1 <= 2 && c2 == 0)
            || (2 < c1 && c1 <= 3 && o <= 2 && c2 == 0)
            || (c1 <= 1 && o == 0 && c2 <= 1)
        {
            DifficultyLabel::Hard
        } else {
            DifficultyLabel::Extra
        }
    }
}

/// Assigns a difficulty label. Only the Spider scheme is computable; BIRD
/// labels come with the dataset.
pub fn classify_difficulty(unit: &SqlUnit, scheme: Scheme) -> Result<DifficultyLabel, SqlError> {
    match scheme {
        Scheme::Spider4 => Ok(ComponentCounts::of(unit).label()),
        Scheme::Bird3 => Err(SqlError::SchemeNotComputable(scheme)),
    }
}

fn conditions(u: &SqlUnit) -> [&Condition; 3] {
    [&u.from.conds, &u.where_, &u.having]
}

fn component1(u: &SqlUnit) -> usize {
    let mut n = usize::from(!u.where_.is_empty())
        + usize::from(!u.group_by.is_empty())
        + usize::from(!u.order_by.is_empty())
        + usize::from(u.limit.is_some())
        + u.from.sources.len().saturating_sub(1);
    for c in conditions(u) {
        n += c.ors;
        n += c.preds.iter().filter(|p| p.op == PredOp::Like).count();
    }
    n
}

fn component2(u: &SqlUnit) -> usize {
    let nested: usize = conditions(u)
        .iter()
        .flat_map(|c| &c.preds)
        .map(|p| p.nested_units().count())
        .sum();
    nested + usize::from(u.set_op.is_some())
}

fn others(u: &SqlUnit) -> usize {
    let mut aggs = u.select.iter().filter(|e| e.top_agg().is_some()).count();
    aggs += u.where_.preds.iter().filter(|p| p.negated).count();
    aggs += u.group_by.iter().filter(|e| e.top_agg().is_some()).count();
    for o in &u.order_by {
        aggs += match &o.expr {
            super::Expr::Arith { lhs, rhs, .. } => {
                usize::from(lhs.top_agg().is_some()) + usize::from(rhs.top_agg().is_some())
            }
            e => usize::from(e.top_agg().is_some()),
        };
    }
    aggs += u.having.preds.iter().filter(|p| p.negated).count() + u.having.ands + u.having.ors;

    usize::from(aggs > 1)
        + usize::from(u.select.len() > 1)
        + usize::from(u.where_.preds.len() > 1)
        + usize::from(u.group_by.len() > 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnDef, ColumnType, DatabaseSchema, TableDef};
    use crate::sqlkit::parse_sql;

    fn schema() -> DatabaseSchema {
        let table = |name: &str, cols: &[&str]| TableDef {
            name: name.into(),
            columns: cols
                .iter()
                .map(|c| ColumnDef {
                    name: c.to_string(),
                    data_type: ColumnType::Text,
                    original_type: "text".into(),
                })
                .collect(),
        };
        DatabaseSchema {
            db_id: "concert_singer".into(),
            tables: vec![
                table("singer", &["Singer_ID", "Name", "Country", "Age"]),
                table("concert", &["concert_ID", "Stadium_ID", "Year"]),
            ],
            primary_keys: vec![],
            foreign_keys: vec![],
        }
    }

    fn label(sql: &str) -> DifficultyLabel {
        classify_difficulty(&parse_sql(sql, &schema()).unwrap(), Scheme::Spider4).unwrap()
    }

    #[test]
    fn one_of_each_level() {
        assert_eq!(label("SELECT count(*) FROM singer"), DifficultyLabel::Easy);
        assert_eq!(label("SELECT name, country, age FROM singer ORDER BY age DESC"), DifficultyLabel::Medium);
        assert_eq!(
            label("SELECT name FROM singer WHERE age > (SELECT avg(age) FROM singer)"),
            DifficultyLabel::Hard
        );
        assert_eq!(
            label("SELECT name FROM singer WHERE age > 20 AND country = 'France' INTERSECT SELECT name FROM singer WHERE age < 40 ORDER BY name LIMIT 3"),
            DifficultyLabel::Extra
        );
    }

    #[test]
    fn bird_scheme_is_not_computed() {
        let u = parse_sql("SELECT name FROM singer", &schema()).unwrap();
        assert_eq!(
            classify_difficulty(&u, Scheme::Bird3),
            Err(SqlError::SchemeNotComputable(Scheme::Bird3))
        );
    }

    #[test]
    fn having_connectors_count_as_aggregates() {
        let u = parse_sql(
            "SELECT country FROM singer GROUP BY country HAVING count(*) > 1 AND max(age) < 50",
            &schema(),
        )
        .unwrap();
        let c = ComponentCounts::of(&u);
        // one connector in HAVING, nothing in SELECT or GROUP BY
        assert_eq!(c.others, 0);
        let u = parse_sql(
            "SELECT country, count(*) FROM singer GROUP BY country HAVING count(*) > 1 AND max(age) < 50",
            &schema(),
        )
        .unwrap();
        assert_eq!(ComponentCounts::of(&u).others, 2);
    }
}
