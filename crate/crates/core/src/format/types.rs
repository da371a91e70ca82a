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

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Bool,
    Int64,
    Float64,
    /// Days since 1970-01-01.
    Date32,
    Utf8,
    /// String column that prefers dictionary encoding.
    DictUtf8,
}

impl DataType {
    pub fn is_string(self) -> bool {
        matches!(self, DataType::Utf8 | DataType::DictUtf8)
    }

    /// Same logical type; the two string encodings are interchangeable.
    pub fn logical_eq(self, other: DataType) -> bool {
        self == other || (self.is_string() && other.is_string())
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            DataType::Bool => 0,
            DataType::Int64 => 1,
            DataType::Float64 => 2,
            DataType::Date32 => 3,
            DataType::Utf8 => 4,
            DataType::DictUtf8 => 5,
        }
    }

    pub(crate) fn from_tag(t: u8) -> Result<Self> {
        Ok(match t {
            0 => DataType::Bool,
            1 => DataType::Int64,
            2 => DataType::Float64,
            3 => DataType::Date32,
            4 => DataType::Utf8,
            5 => DataType::DictUtf8,
            _ => return Err(Error::corrupt(format!("unknown type tag {t}"))),
        })
    }

    /// Rough in-memory width used for memory reservations.
    pub fn approx_width(self) -> u64 {
        match self {
            DataType::Bool => 1,
            DataType::Date32 => 4,
            DataType::Int64 | DataType::Float64 => 8,
            DataType::Utf8 | DataType::DictUtf8 => 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub data_type: DataType,
    #[serde(default)]
    pub nullable: bool,
}

impl Field {
    pub fn new(name: impl Into<String>, data_type: DataType, nullable: bool) -> Self {
        Self {
            name: name.into(),
            data_type,
            nullable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Field>", into = "Vec<Field>")]
pub struct Schema {
    fields: Vec<Field>,
}

pub type SchemaRef = Arc<Schema>;

impl TryFrom<Vec<Field>> for Schema {
    type Error = Error;
    fn try_from(fields: Vec<Field>) -> Result<Self> {
        Schema::new(fields)
    }
}

impl From<Schema> for Vec<Field> {
    fn from(s: Schema) -> Self {
        s.fields
    }
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::SchemaMismatch("schema needs at least one column".into()));
        }
        let mut seen = HashSet::new();
        for f in &fields {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate column {}", f.name)));
            }
        }
        Ok(Self { fields })
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, i: usize) -> &Field {
        &self.fields[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.fields
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Same names and logical types, in order.
    pub fn logical_eq(&self, other: &Schema) -> bool {
        self.fields.len() == other.fields.len()
            && self
                .fields
                .iter()
                .zip(&other.fields)
                .all(|(a, b)| a.name == b.name && a.data_type.logical_eq(b.data_type))
    }

    pub fn project(&self, indices: &[usize]) -> Result<Schema> {
        Schema::new(indices.iter().map(|&i| self.fields[i].clone()).collect())
    }

    pub fn approx_row_width(&self) -> u64 {
        self.fields.iter().map(|f| f.data_type.approx_width()).sum()
    }
}

/// A single scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Date(i32),
    Str(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int(_) | Value::Float(_) => 2,
            Value::Date(_) => 3,
            Value::Str(_) => 4,
        }
    }

    /// Total order: nulls first, ints and floats compared numerically.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Int(a), Value::Float(b)) => (*a as f64).total_cmp(b),
            (Value::Float(a), Value::Int(b)) => a.total_cmp(&(*b as f64)),
            (Value::Date(a), Value::Date(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            Value::Date(v) => Some(*v as f64),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "NULL"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Date(v) => match chrono::NaiveDate::from_num_days_from_ce_opt(v + 719_163) {
                Some(d) => write!(f, "{d}"),
                None => write!(f, "date({v})"),
            },
            Value::Str(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ColumnData {
    Bool(Vec<bool>),
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    Date32(Vec<i32>),
    Utf8(Vec<String>),
    /// Codes into a shared dictionary, resolved on access.
    Dict {
        codes: Vec<u32>,
        values: Arc<Vec<String>>,
    },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Bool(v) => v.len(),
            ColumnData::Int64(v) => v.len(),
            ColumnData::Float64(v) => v.len(),
            ColumnData::Date32(v) => v.len(),
            ColumnData::Utf8(v) => v.len(),
            ColumnData::Dict { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data_type(&self) -> DataType {
        match self {
            ColumnData::Bool(_) => DataType::Bool,
            ColumnData::Int64(_) => DataType::Int64,
            ColumnData::Float64(_) => DataType::Float64,
            ColumnData::Date32(_) => DataType::Date32,
            ColumnData::Utf8(_) => DataType::Utf8,
            ColumnData::Dict { .. } => DataType::DictUtf8,
        }
    }

    pub fn empty(dt: DataType) -> Self {
        match dt {
            DataType::Bool => ColumnData::Bool(vec![]),
            DataType::Int64 => ColumnData::Int64(vec![]),
            DataType::Float64 => ColumnData::Float64(vec![]),
            DataType::Date32 => ColumnData::Date32(vec![]),
            DataType::Utf8 | DataType::DictUtf8 => ColumnData::Utf8(vec![]),
        }
    }
}

/// A column vector with an optional validity mask (`None` means all valid).
#[derive(Debug, Clone)]
pub struct Column {
    pub data: ColumnData,
    pub validity: Option<Vec<bool>>,
}

impl Column {
    pub fn new(data: ColumnData) -> Self {
        Self { data, validity: None }
    }

    pub fn with_validity(data: ColumnData, validity: Option<Vec<bool>>) -> Self {
        let validity = validity.filter(|v| v.iter().any(|b| !b));
        Self { data, validity }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data_type(&self) -> DataType {
        self.data.data_type()
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        self.validity.as_ref().is_none_or(|v| v[i])
    }

    pub fn null_count(&self) -> usize {
        self.validity
            .as_ref()
            .map_or(0, |v| v.iter().filter(|b| !**b).count())
    }

    /// String at row `i`; panics on non-string columns.
    #[inline]
    pub fn str_at(&self, i: usize) -> &str {
        match &self.data {
            ColumnData::Utf8(v) => &v[i],
            ColumnData::Dict { codes, values } => &values[codes[i] as usize],
            other => panic!("str_at on {:?}", other.data_type()),
        }
    }

    pub fn value(&self, i: usize) -> Value {
        if !self.is_valid(i) {
            return Value::Null;
        }
        match &self.data {
            ColumnData::Bool(v) => Value::Bool(v[i]),
            ColumnData::Int64(v) => Value::Int(v[i]),
            ColumnData::Float64(v) => Value::Float(v[i]),
            ColumnData::Date32(v) => Value::Date(v[i]),
            ColumnData::Utf8(_) | ColumnData::Dict { .. } => Value::Str(self.str_at(i).to_string()),
        }
    }

    pub fn take(&self, idx: &[u32]) -> Column {
        fn pick<T: Clone>(v: &[T], idx: &[u32]) -> Vec<T> {
            idx.iter().map(|&i| v[i as usize].clone()).collect()
        }
        let data = match &self.data {
            ColumnData::Bool(v) => ColumnData::Bool(pick(v, idx)),
            ColumnData::Int64(v) => ColumnData::Int64(pick(v, idx)),
            ColumnData::Float64(v) => ColumnData::Float64(pick(v, idx)),
            ColumnData::Date32(v) => ColumnData::Date32(pick(v, idx)),
            ColumnData::Utf8(v) => ColumnData::Utf8(pick(v, idx)),
            ColumnData::Dict { codes, values } => ColumnData::Dict {
                codes: pick(codes, idx),
                values: values.clone(),
            },
        };
        let validity = self.validity.as_ref().map(|v| pick(v, idx));
        Column::with_validity(data, validity)
    }

    /// Build from scalars. Nulls become default values with a cleared bit.
    pub fn from_values(dt: DataType, values: &[Value]) -> Result<Column> {
        let mut validity = Vec::with_capacity(values.len());
        macro_rules! build {
            ($variant:ident, $pat:pat => $e:expr, $default:expr) => {{
                let mut out = Vec::with_capacity(values.len());
                for v in values {
                    match v {
                        Value::Null => {
                            out.push($default);
                            validity.push(false);
                        }
                        $pat => {
                            out.push($e);
                            validity.push(true);
                        }
                        other => {
                            return Err(Error::Type(format!("{other:?} in {:?} column", dt)))
                        }
                    }
                }
                ColumnData::$variant(out)
            }};
        }
        let data = match dt {
            DataType::Bool => build!(Bool, Value::Bool(b) => *b, false),
            DataType::Int64 => build!(Int64, Value::Int(x) => *x, 0),
            DataType::Float64 => {
                let mut out = Vec::with_capacity(values.len());
                for v in values {
                    match v {
                        Value::Null => {
                            out.push(0.0);
                            validity.push(false);
                        }
                        Value::Float(x) => {
                            out.push(*x);
                            validity.push(true);
                        }
                        Value::Int(x) => {
                            out.push(*x as f64);
                            validity.push(true);
                        }
                        other => return Err(Error::Type(format!("{other:?} in float column"))),
                    }
                }
                ColumnData::Float64(out)
            }
            DataType::Date32 => build!(Date32, Value::Date(x) => *x, 0),
            DataType::Utf8 | DataType::DictUtf8 => build!(Utf8, Value::Str(s) => s.clone(), String::new()),
        };
        Ok(Column::with_validity(data, Some(validity)))
    }

    /// Concatenate columns of one logical type. Dictionary columns sharing a
    /// dictionary stay encoded; anything else is materialized.
    pub fn concat(dt: DataType, cols: &[&Column]) -> Column {
        let total: usize = cols.iter().map(|c| c.len()).sum();
        let validity = if cols.iter().any(|c| c.validity.is_some()) {
            let mut v = Vec::with_capacity(total);
            for c in cols {
                match &c.validity {
                    Some(m) => v.extend_from_slice(m),
                    None => v.extend(std::iter::repeat_n(true, c.len())),
                }
            }
            Some(v)
        } else {
            None
        };
        if dt.is_string() {
            let shared = cols.first().and_then(|c| match &c.data {
                ColumnData::Dict { values, .. } => Some(values.clone()),
                _ => None,
            });
            if let Some(dict) = shared {
                let all_same = cols.iter().all(|c| {
                    matches!(&c.data, ColumnData::Dict { values, .. } if Arc::ptr_eq(values, &dict))
                });
                if all_same {
                    let mut codes = Vec::with_capacity(total);
                    for c in cols {
                        if let ColumnData::Dict { codes: cc, .. } = &c.data {
                            codes.extend_from_slice(cc);
                        }
                    }
                    return Column::with_validity(ColumnData::Dict { codes, values: dict }, validity);
                }
            }
            let mut out = Vec::with_capacity(total);
            for c in cols {
                for i in 0..c.len() {
                    out.push(c.str_at(i).to_string());
                }
            }
            return Column::with_validity(ColumnData::Utf8(out), validity);
        }
        macro_rules! cat {
            ($variant:ident) => {{
                let mut out = Vec::with_capacity(total);
                for c in cols {
                    match &c.data {
                        ColumnData::$variant(v) => out.extend_from_slice(v),
                        other => panic!("concat of {:?} into {:?}", other.data_type(), dt),
                    }
                }
                ColumnData::$variant(out)
            }};
        }
        let data = match dt {
            DataType::Bool => cat!(Bool),
            DataType::Int64 => cat!(Int64),
            DataType::Float64 => cat!(Float64),
            DataType::Date32 => cat!(Date32),
            DataType::Utf8 | DataType::DictUtf8 => unreachable!(),
        };
        Column::with_validity(data, validity)
    }
}

impl PartialEq for Column {
    fn eq(&self, other: &Column) -> bool {
        if self.len() != other.len() || !self.data_type().logical_eq(other.data_type()) {
            return false;
        }
        (0..self.len()).all(|i| match (self.value(i), other.value(i)) {
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits() || a == b,
            (a, b) => a == b,
        })
    }
}

/// Equal-length column vectors under one schema.
#[derive(Debug, Clone)]
pub struct RowBatch {
    schema: SchemaRef,
    columns: Vec<Column>,
    rows: usize,
}

impl RowBatch {
    pub fn try_new(schema: SchemaRef, columns: Vec<Column>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} columns for a {}-column schema",
                columns.len(),
                schema.len()
            )));
        }
        let rows = columns.first().map_or(0, |c| c.len());
        for (f, c) in schema.fields().iter().zip(&columns) {
            if c.len() != rows {
                return Err(Error::SchemaMismatch(format!(
                    "column {} has {} rows, expected {rows}",
                    f.name,
                    c.len()
                )));
            }
            if !f.data_type.logical_eq(c.data_type()) {
                return Err(Error::SchemaMismatch(format!(
                    "column {} is {:?}, schema says {:?}",
                    f.name,
                    c.data_type(),
                    f.data_type
                )));
            }
            if let (ColumnData::Dict { codes, values }, true) = (&c.data, cfg!(debug_assertions)) {
                debug_assert!(codes.iter().all(|&k| (k as usize) < values.len()));
            }
        }
        Ok(Self {
            schema,
            columns,
            rows,
        })
    }

    pub fn empty(schema: SchemaRef) -> Self {
        let columns = schema
            .fields()
            .iter()
            .map(|f| Column::new(ColumnData::empty(f.data_type)))
            .collect();
        Self {
            schema,
            columns,
            rows: 0,
        }
    }

    pub fn from_rows(schema: SchemaRef, rows: &[Vec<Value>]) -> Result<Self> {
        let mut columns = Vec::with_capacity(schema.len());
        for (i, f) in schema.fields().iter().enumerate() {
            let vals: Vec<Value> = rows.iter().map(|r| r[i].clone()).collect();
            columns.push(Column::from_values(f.data_type, &vals)?);
        }
        if rows.is_empty() {
            return Ok(RowBatch::empty(schema));
        }
        RowBatch::try_new(schema, columns)
    }

    pub fn schema(&self) -> &SchemaRef {
        &self.schema
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn column_by_name(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.schema.index_of(name)?])
    }

    pub fn take(&self, idx: &[u32]) -> RowBatch {
        RowBatch {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(idx)).collect(),
            rows: idx.len(),
        }
    }

    pub fn project(&self, indices: &[usize]) -> Result<RowBatch> {
        let schema = Arc::new(self.schema.project(indices)?);
        let columns = indices.iter().map(|&i| self.columns[i].clone()).collect();
        RowBatch::try_new(schema, columns)
    }

    pub fn concat(schema: &SchemaRef, batches: &[RowBatch]) -> Result<RowBatch> {
        for b in batches {
            if !b.schema.logical_eq(schema) {
                return Err(Error::SchemaMismatch(format!(
                    "cannot concatenate {:?} into {:?}",
                    b.schema, schema
                )));
            }
        }
        let non_empty: Vec<&RowBatch> = batches.iter().filter(|b| b.rows > 0).collect();
        match non_empty.len() {
            0 => return Ok(RowBatch::empty(schema.clone())),
            1 => {
                return Ok(RowBatch {
                    schema: schema.clone(),
                    columns: non_empty[0].columns.clone(),
                    rows: non_empty[0].rows,
                })
            }
            _ => {}
        }
        let columns = (0..schema.len())
            .map(|i| {
                let cols: Vec<&Column> = non_empty.iter().map(|b| &b.columns[i]).collect();
                Column::concat(schema.field(i).data_type, &cols)
            })
            .collect();
        RowBatch::try_new(schema.clone(), columns)
    }

    pub fn row(&self, i: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<Value>> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }

    pub fn approx_bytes(&self) -> u64 {
        self.rows as u64 * self.schema.approx_row_width()
    }
}

impl PartialEq for RowBatch {
    fn eq(&self, other: &RowBatch) -> bool {
        self.rows == other.rows && self.schema.logical_eq(&other.schema) && self.columns == other.columns
    }
}
