// Licensed to the Apache Software Foundation (ASF) under one
// or more contributor license agreements.  See the NOTICE file
// distributed with this work for additional information
// regarding copyright ownership.  The ASF licenses this file
// to you under the Apache License, Version 2.0 (the
// "License"); you may not use this file except in compliance
// with the License.  You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing,
// software distributed under the License is distributed on an
// "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, either express or implied.  See the License for the
// specific language governing permissions and limitations
// under the License.

//! Vectorized scalar expressions.
//!
//! Nulls propagate through comparisons and arithmetic; `and`/`or` use
//! three-valued logic; an `if` whose condition is null takes the else
//! branch; division by zero yields null.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{CmpOp, Column, ColumnData, DataType, RowBatch, Schema, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Col(String),
    Lit(Value),
    /// ISO date literal, `YYYY-MM-DD`.
    Date(String),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Not(Box<Expr>),
    /// Membership in a list of constants.
    In(Box<Expr>, Vec<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    IsNull(Box<Expr>),
}

pub fn parse_date(s: &str) -> Result<i32> {
    let d = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::Type(format!("bad date {s:?}: {e}")))?;
    Ok(chrono::Datelike::num_days_from_ce(&d) - 719_163)
}

fn scalar_type(v: &Value) -> Option<DataType> {
    match v {
        Value::Null => None,
        Value::Bool(_) => Some(DataType::Bool),
        Value::Int(_) => Some(DataType::Int64),
        Value::Float(_) => Some(DataType::Float64),
        Value::Date(_) => Some(DataType::Date32),
        Value::Str(_) => Some(DataType::Utf8),
    }
}

fn is_numeric(t: DataType) -> bool {
    matches!(t, DataType::Int64 | DataType::Float64)
}

fn comparable(a: DataType, b: DataType) -> bool {
    a.logical_eq(b) || (is_numeric(a) && is_numeric(b))
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Col(name.to_string())
    }

    pub fn lit(v: Value) -> Expr {
        Expr::Lit(v)
    }

    pub fn cmp(op: CmpOp, a: Expr, b: Expr) -> Expr {
        Expr::Cmp(op, Box::new(a), Box::new(b))
    }

    /// Constant value if this is a literal.
    pub fn constant(&self) -> Result<Option<Value>> {
        Ok(match self {
            Expr::Lit(v) => Some(v.clone()),
            Expr::Date(s) => Some(Value::Date(parse_date(s)?)),
            _ => None,
        })
    }

    /// Column names referenced anywhere in the expression.
    pub fn columns(&self, out: &mut Vec<String>) {
        match self {
            Expr::Col(c) => {
                if !out.contains(c) {
                    out.push(c.clone())
                }
            }
            Expr::Lit(_) | Expr::Date(_) => {}
            Expr::Cmp(_, a, b) | Expr::Arith(_, a, b) => {
                a.columns(out);
                b.columns(out);
            }
            Expr::And(es) | Expr::Or(es) => es.iter().for_each(|e| e.columns(out)),
            Expr::Not(e) | Expr::IsNull(e) => e.columns(out),
            Expr::In(e, list) => {
                e.columns(out);
                list.iter().for_each(|e| e.columns(out));
            }
            Expr::If(c, a, b) => {
                c.columns(out);
                a.columns(out);
                b.columns(out);
            }
        }
    }

    /// Result type, or `None` for a bare null literal.
    pub fn data_type(&self, schema: &Schema) -> Result<Option<DataType>> {
        Ok(match self {
            Expr::Col(c) => Some(schema.field(schema.index_of(c)?).data_type),
            Expr::Lit(v) => scalar_type(v),
            Expr::Date(s) => {
                parse_date(s)?;
                Some(DataType::Date32)
            }
            Expr::Cmp(_, a, b) => {
                if let (Some(x), Some(y)) = (a.data_type(schema)?, b.data_type(schema)?) {
                    if !comparable(x, y) {
                        return Err(Error::Type(format!("cannot compare {x:?} with {y:?}")));
                    }
                }
                Some(DataType::Bool)
            }
            Expr::And(es) | Expr::Or(es) => {
                for e in es {
                    expect_bool(e, schema)?;
                }
                Some(DataType::Bool)
            }
            Expr::Not(e) => {
                expect_bool(e, schema)?;
                Some(DataType::Bool)
            }
            Expr::IsNull(e) => {
                e.data_type(schema)?;
                Some(DataType::Bool)
            }
            Expr::In(e, list) => {
                let t = e.data_type(schema)?;
                for item in list {
                    let v = item
                        .constant()?
                        .ok_or_else(|| Error::Type("IN list items must be constants".into()))?;
                    if let (Some(t), Some(vt)) = (t, scalar_type(&v)) {
                        if !comparable(t, vt) {
                            return Err(Error::Type(format!("IN list item {v:?} does not match {t:?}")));
                        }
                    }
                }
                Some(DataType::Bool)
            }
            Expr::Arith(op, a, b) => {
                let x = a.data_type(schema)?;
                let y = b.data_type(schema)?;
                for t in [x, y].into_iter().flatten() {
                    if !is_numeric(t) {
                        return Err(Error::Type(format!("arithmetic on {t:?}")));
                    }
                }
                match (op, x, y) {
                    (ArithOp::Div, _, _) => Some(DataType::Float64),
                    (_, Some(DataType::Int64), Some(DataType::Int64)) => Some(DataType::Int64),
                    (_, None, None) => None,
                    (_, Some(DataType::Int64), None) | (_, None, Some(DataType::Int64)) => Some(DataType::Int64),
                    _ => Some(DataType::Float64),
                }
            }
            Expr::If(c, a, b) => {
                expect_bool(c, schema)?;
                unify(a.data_type(schema)?, b.data_type(schema)?)?
            }
        })
    }

    /// Evaluate to a column of `batch.num_rows()` values.
    pub fn eval(&self, batch: &RowBatch) -> Result<Column> {
        let n = batch.num_rows();
        let dt = self.data_type(batch.schema())?.unwrap_or(DataType::Int64);
        match self.eval_datum(batch)? {
            Datum::Col(c) => Ok(c),
            Datum::Scalar(v) => broadcast(&v, dt, n),
        }
    }

    fn eval_datum(&self, batch: &RowBatch) -> Result<Datum> {
        let n = batch.num_rows();
        Ok(match self {
            Expr::Col(c) => Datum::Col(batch.column_by_name(c)?.clone()),
            Expr::Lit(_) | Expr::Date(_) => Datum::Scalar(self.constant()?.unwrap()),
            Expr::Cmp(op, a, b) => {
                let a = a.eval_datum(batch)?;
                let b = b.eval_datum(batch)?;
                Datum::Col(compare(*op, &a, &b, n)?)
            }
            Expr::And(es) => logic(es, batch, true)?,
            Expr::Or(es) => logic(es, batch, false)?,
            Expr::Not(e) => {
                let c = e.eval(batch)?;
                let ColumnData::Bool(v) = &c.data else {
                    return Err(Error::Type("not of non-boolean".into()));
                };
                Datum::Col(Column::with_validity(ColumnData::Bool(v.iter().map(|b| !b).collect()), c.validity.clone()))
            }
            Expr::IsNull(e) => {
                let c = e.eval(batch)?;
                Datum::Col(Column::new(ColumnData::Bool((0..n).map(|i| !c.is_valid(i)).collect())))
            }
            Expr::In(e, list) => {
                let c = e.eval(batch)?;
                let items = list
                    .iter()
                    .map(|x| x.constant().map(|v| v.unwrap_or(Value::Null)))
                    .collect::<Result<Vec<_>>>()?;
                Datum::Col(membership(&c, &items)?)
            }
            Expr::Arith(op, a, b) => {
                let dt = self.data_type(batch.schema())?;
                let a = a.eval_datum(batch)?;
                let b = b.eval_datum(batch)?;
                Datum::Col(arith(*op, &a, &b, n, dt.unwrap_or(DataType::Int64))?)
            }
            Expr::If(c, a, b) => {
                let dt = self.data_type(batch.schema())?.unwrap_or(DataType::Int64);
                let cond = c.eval(batch)?;
                let a = a.eval(batch)?;
                let b = b.eval(batch)?;
                Datum::Col(select(&cond, &coerce(a, dt)?, &coerce(b, dt)?, n))
            }
        })
    }
}

fn expect_bool(e: &Expr, schema: &Schema) -> Result<()> {
    match e.data_type(schema)? {
        Some(DataType::Bool) | None => Ok(()),
        Some(t) => Err(Error::Type(format!("expected boolean, found {t:?}"))),
    }
}

fn unify(a: Option<DataType>, b: Option<DataType>) -> Result<Option<DataType>> {
    Ok(match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) if x == y => Some(x),
        (Some(x), Some(y)) if x.is_string() && y.is_string() => Some(DataType::Utf8),
        (Some(x), Some(y)) if is_numeric(x) && is_numeric(y) => Some(DataType::Float64),
        (Some(x), Some(y)) => return Err(Error::Type(format!("branches have types {x:?} and {y:?}"))),
    })
}

enum Datum {
    Col(Column),
    Scalar(Value),
}

impl Datum {
    fn valid(&self, i: usize) -> bool {
        match self {
            Datum::Col(c) => c.is_valid(i),
            Datum::Scalar(v) => !v.is_null(),
        }
    }

    fn data_type(&self) -> Option<DataType> {
        match self {
            Datum::Col(c) => Some(c.data_type()),
            Datum::Scalar(v) => scalar_type(v),
        }
    }
}

fn broadcast(v: &Value, dt: DataType, n: usize) -> Result<Column> {
    let values = vec![v.clone(); n];
    Column::from_values(dt, &values)
}

fn coerce(c: Column, dt: DataType) -> Result<Column> {
    match (&c.data, dt) {
        (ColumnData::Int64(v), DataType::Float64) => Ok(Column::with_validity(
            ColumnData::Float64(v.iter().map(|&x| x as f64).collect()),
            c.validity.clone(),
        )),
        _ if c.data_type().logical_eq(dt) => Ok(c),
        _ => Err(Error::Type(format!("cannot coerce {:?} to {dt:?}", c.data_type()))),
    }
}

fn combine_validity(a: &Datum, b: &Datum, n: usize) -> Option<Vec<bool>> {
    let simple = |d: &Datum| match d {
        Datum::Col(c) => c.validity.is_none(),
        Datum::Scalar(v) => !v.is_null(),
    };
    if simple(a) && simple(b) {
        None
    } else {
        Some((0..n).map(|i| a.valid(i) && b.valid(i)).collect())
    }
}

/// Numeric view that reads ints, floats or a scalar as f64.
enum F64s<'a> {
    I(&'a [i64]),
    F(&'a [f64]),
    S(f64),
}

impl F64s<'_> {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        match self {
            F64s::I(v) => v[i] as f64,
            F64s::F(v) => v[i],
            F64s::S(x) => *x,
        }
    }
}

fn f64s(d: &Datum) -> Option<F64s<'_>> {
    match d {
        Datum::Col(c) => match &c.data {
            ColumnData::Int64(v) => Some(F64s::I(v)),
            ColumnData::Float64(v) => Some(F64s::F(v)),
            _ => None,
        },
        Datum::Scalar(Value::Int(x)) => Some(F64s::S(*x as f64)),
        Datum::Scalar(Value::Float(x)) => Some(F64s::S(*x)),
        Datum::Scalar(Value::Null) => Some(F64s::S(0.0)),
        _ => None,
    }
}

enum I64s<'a> {
    V(&'a [i64]),
    D(&'a [i32]),
    S(i64),
}

impl I64s<'_> {
    #[inline]
    fn get(&self, i: usize) -> i64 {
        match self {
            I64s::V(v) => v[i],
            I64s::D(v) => v[i] as i64,
            I64s::S(x) => *x,
        }
    }
}

/// Exact integer view of int, date and bool data.
fn i64s(d: &Datum) -> Option<I64s<'_>> {
    match d {
        Datum::Col(c) => match &c.data {
            ColumnData::Int64(v) => Some(I64s::V(v)),
            ColumnData::Date32(v) => Some(I64s::D(v)),
            _ => None,
        },
        Datum::Scalar(Value::Int(x)) => Some(I64s::S(*x)),
        Datum::Scalar(Value::Date(x)) => Some(I64s::S(*x as i64)),
        Datum::Scalar(Value::Null) => Some(I64s::S(0)),
        _ => None,
    }
}

fn str_at(d: &Datum, i: usize) -> &str {
    match d {
        Datum::Col(c) => c.str_at(i),
        Datum::Scalar(Value::Str(s)) => s,
        _ => "",
    }
}

fn compare(op: CmpOp, a: &Datum, b: &Datum, n: usize) -> Result<Column> {
    let validity = combine_validity(a, b, n);
    let (ta, tb) = (a.data_type(), b.data_type());
    let out: Vec<bool> = match (ta, tb) {
        (None, _) | (_, None) => vec![false; n],
        (Some(x), Some(y)) if !comparable(x, y) => {
            return Err(Error::Type(format!("cannot compare {x:?} with {y:?}")))
        }
        (Some(x), Some(_)) if x.is_string() => {
            // dictionary column against a constant: decide once per entry
            if let (Datum::Col(Column { data: ColumnData::Dict { codes, values }, .. }), Datum::Scalar(Value::Str(s))) = (a, b) {
                let per: Vec<bool> = values.iter().map(|v| op.holds(v.as_str().cmp(s.as_str()))).collect();
                codes.iter().map(|&c| per[c as usize]).collect()
            } else {
                (0..n).map(|i| op.holds(str_at(a, i).cmp(str_at(b, i)))).collect()
            }
        }
        (Some(DataType::Bool), _) => {
            let get = |d: &Datum, i: usize| match d {
                Datum::Col(Column { data: ColumnData::Bool(v), .. }) => v[i],
                Datum::Scalar(Value::Bool(x)) => *x,
                _ => false,
            };
            (0..n).map(|i| op.holds(get(a, i).cmp(&get(b, i)))).collect()
        }
        (Some(DataType::Float64), _) | (_, Some(DataType::Float64)) => {
            let (x, y) = (f64s(a).unwrap(), f64s(b).unwrap());
            (0..n).map(|i| op.holds(x.get(i).total_cmp(&y.get(i)))).collect()
        }
        _ => {
            let (x, y) = (
                i64s(a).ok_or_else(|| Error::Type("bad comparison operand".into()))?,
                i64s(b).ok_or_else(|| Error::Type("bad comparison operand".into()))?,
            );
            (0..n).map(|i| op.holds(x.get(i).cmp(&y.get(i)))).collect()
        }
    };
    Ok(Column::with_validity(ColumnData::Bool(out), validity))
}

fn logic(es: &[Expr], batch: &RowBatch, is_and: bool) -> Result<Datum> {
    let n = batch.num_rows();
    // value[i] and whether any operand was null
    let mut value = vec![is_and; n];
    let mut unknown = vec![false; n];
    for e in es {
        let c = e.eval(batch)?;
        let v = match &c.data {
            ColumnData::Bool(v) => v,
            other => return Err(Error::Type(format!("logic on {:?}", other.data_type()))),
        };
        for i in 0..n {
            if !c.is_valid(i) {
                unknown[i] = true;
            } else if v[i] != is_and {
                value[i] = !is_and;
            }
        }
    }
    // a decided value (false for and, true for or) wins over unknown
    let validity: Vec<bool> = (0..n).map(|i| value[i] != is_and || !unknown[i]).collect();
    Ok(Datum::Col(Column::with_validity(ColumnData::Bool(value), Some(validity))))
}

fn membership(c: &Column, items: &[Value]) -> Result<Column> {
    let n = c.len();
    let out: Vec<bool> = match &c.data {
        ColumnData::Utf8(_) | ColumnData::Dict { .. } => {
            let set: HashSet<&str> = items
                .iter()
                .filter_map(|v| match v {
                    Value::Str(s) => Some(s.as_str()),
                    _ => None,
                })
                .collect();
            if let ColumnData::Dict { codes, values } = &c.data {
                let per: Vec<bool> = values.iter().map(|v| set.contains(v.as_str())).collect();
                codes.iter().map(|&k| per[k as usize]).collect()
            } else {
                (0..n).map(|i| set.contains(c.str_at(i))).collect()
            }
        }
        _ => {
            let wanted: Vec<Value> = items.iter().filter(|v| !v.is_null()).cloned().collect();
            (0..n)
                .map(|i| {
                    let v = c.value(i);
                    wanted.iter().any(|w| v.total_cmp(w).is_eq())
                })
                .collect()
        }
    };
    Ok(Column::with_validity(ColumnData::Bool(out), c.validity.clone()))
}

fn arith(op: ArithOp, a: &Datum, b: &Datum, n: usize, dt: DataType) -> Result<Column> {
    let mut validity = combine_validity(a, b, n);
    let data = match dt {
        DataType::Int64 => {
            let (x, y) = (
                i64s(a).ok_or_else(|| Error::Type("non-integer operand".into()))?,
                i64s(b).ok_or_else(|| Error::Type("non-integer operand".into()))?,
            );
            ColumnData::Int64(
                (0..n)
                    .map(|i| match op {
                        ArithOp::Add => x.get(i).wrapping_add(y.get(i)),
                        ArithOp::Sub => x.get(i).wrapping_sub(y.get(i)),
                        ArithOp::Mul => x.get(i).wrapping_mul(y.get(i)),
                        ArithOp::Div => unreachable!(),
                    })
                    .collect(),
            )
        }
        _ => {
            let (x, y) = (
                f64s(a).ok_or_else(|| Error::Type("non-numeric operand".into()))?,
                f64s(b).ok_or_else(|| Error::Type("non-numeric operand".into()))?,
            );
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let (p, q) = (x.get(i), y.get(i));
                out.push(match op {
                    ArithOp::Add => p + q,
                    ArithOp::Sub => p - q,
                    ArithOp::Mul => p * q,
                    ArithOp::Div => {
                        if q == 0.0 {
                            validity.get_or_insert_with(|| vec![true; n])[i] = false;
                            0.0
                        } else {
                            p / q
                        }
                    }
                });
            }
            ColumnData::Float64(out)
        }
    };
    Ok(Column::with_validity(data, validity))
}

fn select(cond: &Column, a: &Column, b: &Column, n: usize) -> Column {
    let ColumnData::Bool(c) = &cond.data else {
        unreachable!("condition type checked")
    };
    let pick: Vec<bool> = (0..n).map(|i| cond.is_valid(i) && c[i]).collect();
    // gather from whichever branch each row takes
    let validity: Vec<bool> = (0..n)
        .map(|i| if pick[i] { a.is_valid(i) } else { b.is_valid(i) })
        .collect();
    macro_rules! sel {
        ($variant:ident, $x:expr, $y:expr) => {
            ColumnData::$variant((0..n).map(|i| if pick[i] { $x[i].clone() } else { $y[i].clone() }).collect())
        };
    }
    let data = match (&a.data, &b.data) {
        (ColumnData::Bool(x), ColumnData::Bool(y)) => sel!(Bool, x, y),
        (ColumnData::Int64(x), ColumnData::Int64(y)) => sel!(Int64, x, y),
        (ColumnData::Float64(x), ColumnData::Float64(y)) => sel!(Float64, x, y),
        (ColumnData::Date32(x), ColumnData::Date32(y)) => sel!(Date32, x, y),
        _ => ColumnData::Utf8(
            (0..n)
                .map(|i| if pick[i] { a.str_at(i) } else { b.str_at(i) }.to_string())
                .collect(),
        ),
    };
    Column::with_validity(data, Some(validity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::Field;
    use std::sync::Arc;

    fn batch() -> RowBatch {
        let schema = Arc::new(
            Schema::new(vec![
                Field::new("a", DataType::Int64, true),
                Field::new("f", DataType::Float64, false),
                Field::new("s", DataType::DictUtf8, false),
                Field::new("d", DataType::Date32, false),
            ])
            .unwrap(),
        );
        RowBatch::from_rows(
            schema,
            &[
                vec![Value::Int(1), Value::Float(0.5), Value::Str("MAIL".into()), Value::Date(100)],
                vec![Value::Null, Value::Float(2.0), Value::Str("SHIP".into()), Value::Date(200)],
                vec![Value::Int(3), Value::Float(-1.0), Value::Str("AIR".into()), Value::Date(300)],
            ],
        )
        .unwrap()
    }

    fn vals(c: &Column) -> Vec<Value> {
        (0..c.len()).map(|i| c.value(i)).collect()
    }

    fn parse(json: &str) -> Expr {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn json_forms() {
        let e = parse(r#"{"cmp": ["lt", {"col": "a"}, {"lit": 2}]}"#);
        assert_eq!(e, Expr::cmp(CmpOp::Lt, Expr::col("a"), Expr::lit(Value::Int(2))));
        let e = parse(r#"{"in": [{"col": "s"}, [{"lit": "MAIL"}, {"lit": "SHIP"}]]}"#);
        assert_eq!(vals(&e.eval(&batch()).unwrap()), vec![Value::Bool(true), Value::Bool(true), Value::Bool(false)]);
    }

    #[test]
    fn null_propagation_and_three_valued_logic() {
        let b = batch();
        let lt = Expr::cmp(CmpOp::Lt, Expr::col("a"), Expr::lit(Value::Int(2)));
        assert_eq!(vals(&lt.eval(&b).unwrap()), vec![Value::Bool(true), Value::Null, Value::Bool(false)]);
        let f = Expr::lit(Value::Bool(false));
        let and = Expr::And(vec![lt.clone(), f]);
        assert_eq!(vals(&and.eval(&b).unwrap()), vec![Value::Bool(false); 3]);
        let or = Expr::Or(vec![lt, Expr::lit(Value::Bool(false))]);
        assert_eq!(vals(&or.eval(&b).unwrap()), vec![Value::Bool(true), Value::Null, Value::Bool(false)]);
    }

    #[test]
    fn dates_strings_and_arith() {
        let b = batch();
        let e = Expr::cmp(CmpOp::Ge, Expr::col("d"), Expr::Date("1970-07-19".into()));
        assert_eq!(parse_date("1970-07-19").unwrap(), 199);
        assert_eq!(vals(&e.eval(&b).unwrap()), vec![Value::Bool(false), Value::Bool(true), Value::Bool(true)]);
        let e = Expr::cmp(CmpOp::Gt, Expr::col("s"), Expr::lit(Value::Str("B".into())));
        assert_eq!(vals(&e.eval(&b).unwrap()), vec![Value::Bool(true), Value::Bool(true), Value::Bool(false)]);
        let e = Expr::Arith(ArithOp::Mul, Box::new(Expr::col("a")), Box::new(Expr::col("f")));
        assert_eq!(vals(&e.eval(&b).unwrap()), vec![Value::Float(0.5), Value::Null, Value::Float(-3.0)]);
        let e = Expr::Arith(ArithOp::Div, Box::new(Expr::col("f")), Box::new(Expr::lit(Value::Int(0))));
        assert_eq!(vals(&e.eval(&b).unwrap()), vec![Value::Null; 3]);
    }

    #[test]
    fn if_takes_else_on_null() {
        let b = batch();
        let cond = Expr::cmp(CmpOp::Eq, Expr::col("a"), Expr::lit(Value::Int(1)));
        let e = Expr::If(Box::new(cond), Box::new(Expr::lit(Value::Int(1))), Box::new(Expr::lit(Value::Int(0))));
        assert_eq!(vals(&e.eval(&b).unwrap()), vec![Value::Int(1), Value::Int(0), Value::Int(0)]);
    }

    #[test]
    fn type_errors() {
        let b = batch();
        let e = Expr::cmp(CmpOp::Eq, Expr::col("s"), Expr::lit(Value::Int(1)));
        assert!(matches!(e.eval(&b), Err(Error::Type(_))));
        assert!(matches!(Expr::col("nope").eval(&b), Err(Error::UnknownColumn(_))));
    }
}
