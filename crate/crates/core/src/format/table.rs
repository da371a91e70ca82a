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

//! Columnar base-table object: one segment per column, then a footer with
//! the schema and per-column offsets and statistics, then a fixed trailer.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::sync::Arc;

use futures::future::try_join_all;
use serde::{Deserialize, Serialize};

use super::codec::{
    read_column, read_schema, read_value, write_column, write_schema, write_value, ByteReader,
    ByteWriter, StringMode,
};
use super::types::{Column, DataType, RowBatch, SchemaRef, Value};
use super::{FormatOptions, RangeReader, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::storesim::{ByteRange, ObjectKey};

pub const TABLE_MAGIC: &[u8; 4] = b"SBT1";
const TRAILER_LEN: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }

    /// `a op b` rewritten as `b op' a`.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }
}

/// `column op value`; a list of terms is a conjunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneTerm {
    pub column: String,
    pub op: CmpOp,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub offset: u64,
    pub length: u64,
    pub null_count: u64,
    /// Bounds over non-null values; `None` when every value is null.
    pub min: Option<Value>,
    pub max: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableFooter {
    pub schema: SchemaRef,
    pub rows: u64,
    pub columns: Vec<ColumnMeta>,
}

fn same_kind(a: &Value, b: &Value) -> bool {
    matches!(
        (a, b),
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_))
            | (Value::Bool(_), Value::Bool(_))
            | (Value::Date(_), Value::Date(_))
            | (Value::Str(_), Value::Str(_))
    )
}

impl TableFooter {
    /// True when the statistics prove no row satisfies every term. Nulls
    /// never satisfy a comparison.
    pub fn refutes(&self, terms: &[PruneTerm]) -> Result<bool> {
        if self.rows == 0 {
            return Ok(true);
        }
        for t in terms {
            let meta = &self.columns[self.schema.index_of(&t.column)?];
            let (min, max) = match (&meta.min, &meta.max) {
                (Some(a), Some(b)) => (a, b),
                _ => return Ok(true),
            };
            if t.value.is_null() {
                return Ok(true);
            }
            // ISO date strings stand in for date literals in plan files
            let value = match (min, &t.value) {
                (Value::Date(_), Value::Str(s)) => Value::Date(crate::exec::parse_date(s)?),
                _ => t.value.clone(),
            };
            if !same_kind(min, &value) {
                continue;
            }
            let lo = min.total_cmp(&value);
            let hi = max.total_cmp(&value);
            let impossible = match t.op {
                CmpOp::Lt => lo != Ordering::Less,
                CmpOp::Le => lo == Ordering::Greater,
                CmpOp::Gt => hi != Ordering::Greater,
                CmpOp::Ge => hi == Ordering::Less,
                CmpOp::Eq => lo == Ordering::Greater || hi == Ordering::Less,
                CmpOp::Ne => lo == Ordering::Equal && hi == Ordering::Equal,
            };
            if impossible {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn column_stats(col: &Column) -> (Option<Value>, Option<Value>) {
    let mut min: Option<Value> = None;
    let mut max: Option<Value> = None;
    for i in 0..col.len() {
        if !col.is_valid(i) {
            continue;
        }
        let v = col.value(i);
        if min.as_ref().is_none_or(|m| v.total_cmp(m) == Ordering::Less) {
            min = Some(v.clone());
        }
        if max.as_ref().is_none_or(|m| v.total_cmp(m) == Ordering::Greater) {
            max = Some(v);
        }
    }
    (min, max)
}

fn distinct_strings(col: &Column, limit: usize) -> usize {
    let mut seen = HashSet::new();
    for i in 0..col.len() {
        seen.insert(col.str_at(i));
        if seen.len() > limit {
            break;
        }
    }
    seen.len()
}

/// Encode one base-table object.
pub fn write_base_table(batch: &RowBatch, opts: &FormatOptions) -> Result<Vec<u8>> {
    let schema = batch.schema();
    let mut w = ByteWriter::new();
    let mut metas = Vec::with_capacity(schema.len());
    for (f, col) in schema.fields().iter().zip(batch.columns()) {
        if !f.nullable && col.null_count() > 0 {
            return Err(Error::SchemaMismatch(format!("nulls in non-nullable column {}", f.name)));
        }
        let offset = w.len() as u64;
        let mode = if f.data_type == DataType::DictUtf8 && distinct_strings(col, opts.dict_threshold) <= opts.dict_threshold {
            StringMode::InlineDict
        } else {
            StringMode::Plain
        };
        write_column(&mut w, col, mode);
        let (min, max) = column_stats(col);
        metas.push(ColumnMeta {
            offset,
            length: w.len() as u64 - offset,
            null_count: col.null_count() as u64,
            min,
            max,
        });
    }
    let footer_offset = w.len() as u64;
    write_schema(&mut w, schema);
    w.u64(batch.num_rows() as u64);
    for m in &metas {
        w.u64(m.offset);
        w.u64(m.length);
        w.u64(m.null_count);
        match (&m.min, &m.max) {
            (Some(a), Some(b)) => {
                w.u8(1);
                write_value(&mut w, a);
                write_value(&mut w, b);
            }
            _ => w.u8(0),
        }
    }
    let footer_len = w.len() as u64 - footer_offset;
    w.u64(footer_offset);
    w.u32(footer_len as u32);
    w.u16(FORMAT_VERSION);
    w.u16(0);
    w.bytes(TABLE_MAGIC);
    Ok(w.buf)
}

fn parse_footer(bytes: &[u8], footer_offset: u64) -> Result<TableFooter> {
    let mut r = ByteReader::new(bytes);
    let schema = Arc::new(read_schema(&mut r)?);
    let rows = r.u64()?;
    let mut columns = Vec::with_capacity(schema.len());
    for _ in 0..schema.len() {
        let offset = r.u64()?;
        let length = r.u64()?;
        let null_count = r.u64()?;
        let (min, max) = match r.u8()? {
            0 => (None, None),
            1 => (Some(read_value(&mut r)?), Some(read_value(&mut r)?)),
            v => return Err(Error::corrupt(format!("bad stats flag {v}"))),
        };
        if offset.checked_add(length).is_none_or(|e| e > footer_offset) {
            return Err(Error::corrupt("column segment outside data region"));
        }
        columns.push(ColumnMeta {
            offset,
            length,
            null_count,
            min,
            max,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::corrupt("trailing bytes in footer"));
    }
    let mut spans: Vec<(u64, u64)> = columns.iter().map(|c| (c.offset, c.offset + c.length)).collect();
    spans.sort();
    if spans.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(Error::corrupt("overlapping column segments"));
    }
    Ok(TableFooter { schema, rows, columns })
}

/// Fetch the footer with one suffix GET, plus one more when the footer is
/// larger than the suffix.
pub async fn read_footer(reader: &dyn RangeReader, key: &ObjectKey, opts: &FormatOptions) -> Result<TableFooter> {
    let tail = reader
        .get_range(key, ByteRange::Suffix(opts.head_size.max(TRAILER_LEN)))
        .await?;
    if (tail.len() as u64) < TRAILER_LEN {
        return Err(Error::corrupt("object too short for a table trailer"));
    }
    let mut r = ByteReader::new(&tail[tail.len() - TRAILER_LEN as usize..]);
    let footer_offset = r.u64()?;
    let footer_len = r.u32()? as u64;
    let version = r.u16()?;
    let flags = r.u16()?;
    if r.take(4)? != TABLE_MAGIC {
        return Err(Error::corrupt("bad magic for base table"));
    }
    if version != FORMAT_VERSION || flags != 0 {
        return Err(Error::corrupt(format!("unsupported table version {version} flags {flags}")));
    }
    let object_len = footer_offset + footer_len + TRAILER_LEN;
    let tail_start = object_len
        .checked_sub(tail.len() as u64)
        .ok_or_else(|| Error::corrupt("trailer offsets exceed object"))?;
    let footer = if footer_offset >= tail_start {
        let s = (footer_offset - tail_start) as usize;
        tail[s..s + footer_len as usize].to_vec()
    } else {
        reader
            .get_range(key, ByteRange::Span(footer_offset, footer_offset + footer_len))
            .await?
    };
    if footer.len() as u64 != footer_len {
        return Err(Error::corrupt("footer truncated"));
    }
    parse_footer(&footer, footer_offset)
}

/// Read `wanted` columns of one object. Segments of other columns are never
/// fetched; when the statistics refute `prune` no segment is fetched at all
/// and an empty batch is returned.
pub async fn scan_base_table(
    reader: &dyn RangeReader,
    key: &ObjectKey,
    wanted: &[String],
    prune: &[PruneTerm],
    opts: &FormatOptions,
) -> Result<RowBatch> {
    let footer = read_footer(reader, key, opts).await?;
    let indices = wanted
        .iter()
        .map(|c| footer.schema.index_of(c))
        .collect::<Result<Vec<_>>>()?;
    let schema = Arc::new(footer.schema.project(&indices)?);
    if footer.refutes(prune)? {
        return Ok(RowBatch::empty(schema));
    }
    let rows = footer.rows as usize;
    let segments = try_join_all(indices.iter().map(|&i| {
        let m = &footer.columns[i];
        reader.get_range(key, ByteRange::Span(m.offset, m.offset + m.length))
    }))
    .await?;
    let mut columns = Vec::with_capacity(indices.len());
    for (seg, &i) in segments.iter().zip(&indices) {
        if seg.len() as u64 != footer.columns[i].length {
            return Err(Error::corrupt("column segment truncated"));
        }
        let mut r = ByteReader::new(seg);
        if rows > seg.len() {
            return Err(Error::corrupt("row count exceeds segment size"));
        }
        let col = read_column(&mut r, rows, None)?;
        if r.remaining() != 0 {
            return Err(Error::corrupt("trailing bytes in column segment"));
        }
        columns.push(col);
    }
    RowBatch::try_new(schema, columns).map_err(|e| Error::corrupt(e.to_string()))
}
