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

//! Two-phase hash aggregation.
//!
//! A partial aggregate emits one row of intermediate state per group; a
//! final aggregate merges states and finishes them. Groups appear in the
//! order their first row was seen. Without grouping columns both phases
//! always emit exactly one row, so an empty input contributes identity
//! states (sum 0, count 0, no min/max).

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::keys::KeyColumns;
use super::MemoryBudget;
use crate::error::{Error, Result};
use crate::format::{Column, ColumnData, DataType, Field, RowBatch, Schema, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFunc {
    Sum,
    Count,
    Min,
    Max,
    Avg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggExpr {
    pub func: AggFunc,
    /// Argument; `count` without one counts rows.
    #[serde(default)]
    pub expr: Option<Expr>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggSpec {
    #[serde(default)]
    pub group_by: Vec<String>,
    pub aggs: Vec<AggExpr>,
}

fn avg_parts(name: &str) -> (String, String) {
    (format!("{name}__sum"), format!("{name}__count"))
}

impl AggSpec {
    fn arg_type(&self, a: &AggExpr, input: &Schema) -> Result<DataType> {
        match &a.expr {
            None if a.func == AggFunc::Count => Ok(DataType::Int64),
            None => Err(Error::SpecMismatch(format!("{:?} of {} needs an argument", a.func, a.name))),
            Some(e) => Ok(e.data_type(input)?.unwrap_or(DataType::Int64)),
        }
    }

    fn group_fields(&self, input: &Schema) -> Result<Vec<Field>> {
        self.group_by
            .iter()
            .map(|g| Ok(input.field(input.index_of(g)?).clone()))
            .collect()
    }

    /// Schema of partial-aggregate output for the given input.
    pub fn partial_schema(&self, input: &Schema) -> Result<Schema> {
        let mut fields = self.group_fields(input)?;
        for a in &self.aggs {
            let t = self.arg_type(a, input)?;
            match a.func {
                AggFunc::Sum => {
                    if !matches!(t, DataType::Int64 | DataType::Float64) {
                        return Err(Error::Type(format!("sum of {t:?}")));
                    }
                    fields.push(Field::new(a.name.clone(), t, false));
                }
                AggFunc::Count => fields.push(Field::new(a.name.clone(), DataType::Int64, false)),
                AggFunc::Min | AggFunc::Max => fields.push(Field::new(a.name.clone(), t, true)),
                AggFunc::Avg => {
                    if !matches!(t, DataType::Int64 | DataType::Float64) {
                        return Err(Error::Type(format!("avg of {t:?}")));
                    }
                    let (s, c) = avg_parts(&a.name);
                    fields.push(Field::new(s, DataType::Float64, false));
                    fields.push(Field::new(c, DataType::Int64, false));
                }
            }
        }
        Schema::new(fields)
    }

    /// Check that `partial` is shaped like this spec's partial output, and
    /// return the final output schema.
    pub fn final_schema(&self, partial: &Schema) -> Result<Schema> {
        let mismatch = |why: String| Error::SpecMismatch(why);
        let mut expected_names: Vec<String> = self.group_by.clone();
        for a in &self.aggs {
            if a.func == AggFunc::Avg {
                let (s, c) = avg_parts(&a.name);
                expected_names.push(s);
                expected_names.push(c);
            } else {
                expected_names.push(a.name.clone());
            }
        }
        let names: Vec<&str> = partial.fields().iter().map(|f| f.name.as_str()).collect();
        if names != expected_names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(mismatch(format!("partial columns {names:?}, expected {expected_names:?}")));
        }
        let mut fields: Vec<Field> = partial.fields()[..self.group_by.len()].to_vec();
        let mut i = self.group_by.len();
        for a in &self.aggs {
            let f = partial.field(i);
            let ok = match a.func {
                AggFunc::Sum => matches!(f.data_type, DataType::Int64 | DataType::Float64),
                AggFunc::Count => f.data_type == DataType::Int64,
                AggFunc::Min | AggFunc::Max => true,
                AggFunc::Avg => {
                    f.data_type == DataType::Float64 && partial.field(i + 1).data_type == DataType::Int64
                }
            };
            if !ok {
                return Err(mismatch(format!("state column {} has type {:?}", f.name, f.data_type)));
            }
            match a.func {
                AggFunc::Avg => {
                    fields.push(Field::new(a.name.clone(), DataType::Float64, true));
                    i += 2;
                }
                _ => {
                    fields.push(f.clone());
                    i += 1;
                }
            }
        }
        Schema::new(fields)
    }

    pub fn partial(&self, input: &RowBatch, mem: &mut MemoryBudget) -> Result<RowBatch> {
        let schema = Arc::new(self.partial_schema(input.schema())?);
        let groups = Groups::build(input, &self.group_by, mem, schema.approx_row_width())?;
        let mut columns = groups.key_columns(input, &self.group_by)?;
        for a in &self.aggs {
            let arg = match &a.expr {
                Some(e) => Some(e.eval(input)?),
                None => None,
            };
            match a.func {
                AggFunc::Sum => columns.push(groups.sum(arg.as_ref().unwrap())),
                AggFunc::Count => columns.push(groups.count(arg.as_ref())),
                AggFunc::Min => columns.push(groups.extreme(arg.as_ref().unwrap(), true)?),
                AggFunc::Max => columns.push(groups.extreme(arg.as_ref().unwrap(), false)?),
                AggFunc::Avg => {
                    let arg = arg.unwrap();
                    columns.push(groups.sum(&to_float(&arg)));
                    columns.push(groups.count(Some(&arg)));
                }
            }
        }
        RowBatch::try_new(schema, columns)
    }

    pub fn finish(&self, partials: &RowBatch, mem: &mut MemoryBudget) -> Result<RowBatch> {
        let schema = Arc::new(self.final_schema(partials.schema())?);
        let groups = Groups::build(partials, &self.group_by, mem, schema.approx_row_width())?;
        let mut columns = groups.key_columns(partials, &self.group_by)?;
        let mut i = self.group_by.len();
        for a in &self.aggs {
            let state = partials.column(i);
            match a.func {
                AggFunc::Sum | AggFunc::Count => columns.push(groups.sum(state)),
                AggFunc::Min => columns.push(groups.extreme(state, true)?),
                AggFunc::Max => columns.push(groups.extreme(state, false)?),
                AggFunc::Avg => {
                    let sums = groups.sum(state);
                    let counts = groups.sum(partials.column(i + 1));
                    let (ColumnData::Float64(s), ColumnData::Int64(c)) = (&sums.data, &counts.data) else {
                        unreachable!("avg state types checked")
                    };
                    let values: Vec<Value> = s
                        .iter()
                        .zip(c)
                        .map(|(&s, &c)| if c == 0 { Value::Null } else { Value::Float(s / c as f64) })
                        .collect();
                    columns.push(Column::from_values(DataType::Float64, &values)?);
                    i += 1;
                }
            }
            i += 1;
        }
        RowBatch::try_new(schema, columns)
    }
}

fn to_float(c: &Column) -> Column {
    match &c.data {
        ColumnData::Int64(v) => Column::with_validity(
            ColumnData::Float64(v.iter().map(|&x| x as f64).collect()),
            c.validity.clone(),
        ),
        _ => c.clone(),
    }
}

/// Row to group assignment.
struct Groups {
    ids: Vec<u32>,
    /// First row of each group.
    first: Vec<u32>,
}

impl Groups {
    fn build(input: &RowBatch, keys: &[String], mem: &mut MemoryBudget, row_width: u64) -> Result<Self> {
        let n = input.num_rows();
        if keys.is_empty() {
            mem.reserve(row_width)?;
            return Ok(Self {
                ids: vec![0; n],
                first: vec![0],
            });
        }
        let kc = KeyColumns::new(input, keys)?;
        let mut map: HashMap<Vec<u8>, u32> = HashMap::new();
        let mut ids = Vec::with_capacity(n);
        let mut first = Vec::new();
        let mut buf = Vec::new();
        for row in 0..n {
            kc.encode(row, &mut buf);
            let id = match map.get(buf.as_slice()) {
                Some(&id) => id,
                None => {
                    let id = first.len() as u32;
                    mem.reserve(row_width + buf.len() as u64)?;
                    map.insert(buf.clone(), id);
                    first.push(row as u32);
                    id
                }
            };
            ids.push(id);
        }
        Ok(Self { ids, first })
    }

    fn len(&self) -> usize {
        self.first.len()
    }

    fn key_columns(&self, input: &RowBatch, keys: &[String]) -> Result<Vec<Column>> {
        keys.iter()
            .map(|k| Ok(input.column_by_name(k)?.take(&self.first)))
            .collect()
    }

    fn sum(&self, arg: &Column) -> Column {
        match &arg.data {
            ColumnData::Int64(v) => {
                let mut acc = vec![0i64; self.len()];
                for (row, &g) in self.ids.iter().enumerate() {
                    if arg.is_valid(row) {
                        acc[g as usize] = acc[g as usize].wrapping_add(v[row]);
                    }
                }
                Column::new(ColumnData::Int64(acc))
            }
            ColumnData::Float64(v) => {
                let mut acc = vec![0f64; self.len()];
                for (row, &g) in self.ids.iter().enumerate() {
                    if arg.is_valid(row) {
                        acc[g as usize] += v[row];
                    }
                }
                Column::new(ColumnData::Float64(acc))
            }
            _ => unreachable!("sum argument type checked"),
        }
    }

    fn count(&self, arg: Option<&Column>) -> Column {
        let mut acc = vec![0i64; self.len()];
        for (row, &g) in self.ids.iter().enumerate() {
            if arg.is_none_or(|c| c.is_valid(row)) {
                acc[g as usize] += 1;
            }
        }
        Column::new(ColumnData::Int64(acc))
    }

    fn extreme(&self, arg: &Column, min: bool) -> Result<Column> {
        let mut best: Vec<Option<u32>> = vec![None; self.len()];
        for (row, &g) in self.ids.iter().enumerate() {
            if !arg.is_valid(row) {
                continue;
            }
            let slot = &mut best[g as usize];
            let better = match *slot {
                None => true,
                Some(b) => {
                    let ord = cell_cmp(arg, row, b as usize);
                    if min {
                        ord.is_lt()
                    } else {
                        ord.is_gt()
                    }
                }
            };
            if better {
                *slot = Some(row as u32);
            }
        }
        let values: Vec<Value> = best
            .iter()
            .map(|b| b.map_or(Value::Null, |r| arg.value(r as usize)))
            .collect();
        Column::from_values(arg.data_type(), &values)
    }
}

pub(crate) fn cell_cmp(c: &Column, a: usize, b: usize) -> std::cmp::Ordering {
    match &c.data {
        ColumnData::Bool(v) => v[a].cmp(&v[b]),
        ColumnData::Int64(v) => v[a].cmp(&v[b]),
        ColumnData::Float64(v) => v[a].total_cmp(&v[b]),
        ColumnData::Date32(v) => v[a].cmp(&v[b]),
        ColumnData::Utf8(_) | ColumnData::Dict { .. } => c.str_at(a).cmp(c.str_at(b)),
    }
}
