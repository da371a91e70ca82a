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

//! Little-endian primitives and the column chunk encoding shared by both
//! object formats.

use std::collections::HashMap;
use std::sync::Arc;

use super::types::{Column, ColumnData, DataType, Field, Schema, Value};
use crate::error::{Error, Result};

pub(crate) const ENC_BOOL: u8 = 0;
pub(crate) const ENC_INT64: u8 = 1;
pub(crate) const ENC_FLOAT64: u8 = 2;
pub(crate) const ENC_DATE32: u8 = 3;
pub(crate) const ENC_UTF8: u8 = 4;
/// Codes into the enclosing object's dictionary for this column.
pub(crate) const ENC_DICT_REF: u8 = 5;
/// Dictionary stored inline, followed by codes.
pub(crate) const ENC_DICT_INLINE: u8 = 6;

#[derive(Default)]
pub(crate) struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn str16(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.bytes(s.as_bytes());
    }

    pub fn str32(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::corrupt(format!(
                "truncated: need {n} bytes at offset {}, have {}",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn utf8(b: &[u8]) -> Result<String> {
        String::from_utf8(b.to_vec()).map_err(|_| Error::corrupt("invalid utf-8"))
    }

    pub fn str16(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        Self::utf8(self.take(n)?)
    }

    pub fn str32(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        Self::utf8(self.take(n)?)
    }
}

pub(crate) fn write_schema(w: &mut ByteWriter, schema: &Schema) {
    w.u16(schema.len() as u16);
    for f in schema.fields() {
        w.str16(&f.name);
        w.u8(f.data_type.tag());
        w.u8(f.nullable as u8);
    }
}

pub(crate) fn read_schema(r: &mut ByteReader) -> Result<Schema> {
    let n = r.u16()? as usize;
    let mut fields = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.str16()?;
        let dt = DataType::from_tag(r.u8()?)?;
        let nullable = r.u8()? != 0;
        fields.push(Field::new(name, dt, nullable));
    }
    Schema::new(fields).map_err(|e| Error::corrupt(e.to_string()))
}

fn write_validity(w: &mut ByteWriter, col: &Column) {
    match &col.validity {
        Some(mask) => {
            w.u8(1);
            let mut bytes = vec![0u8; mask.len().div_ceil(8)];
            for (i, &b) in mask.iter().enumerate() {
                if b {
                    bytes[i / 8] |= 1 << (i % 8);
                }
            }
            w.bytes(&bytes);
        }
        None => w.u8(0),
    }
}

fn read_validity(r: &mut ByteReader, rows: usize) -> Result<Option<Vec<bool>>> {
    match r.u8()? {
        0 => Ok(None),
        1 => {
            let bytes = r.take(rows.div_ceil(8))?;
            Ok(Some((0..rows).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect()))
        }
        v => Err(Error::corrupt(format!("bad validity flag {v}"))),
    }
}

fn write_string_heap<'a>(w: &mut ByteWriter, rows: usize, get: impl Fn(usize) -> &'a str) {
    let mut offset = 0u32;
    w.u32(0);
    for i in 0..rows {
        offset += get(i).len() as u32;
        w.u32(offset);
    }
    for i in 0..rows {
        w.bytes(get(i).as_bytes());
    }
}

fn read_string_heap(r: &mut ByteReader, rows: usize) -> Result<Vec<String>> {
    let mut offsets = Vec::with_capacity(rows + 1);
    for _ in 0..=rows {
        offsets.push(r.u32()? as usize);
    }
    if offsets.windows(2).any(|w| w[1] < w[0]) || offsets[0] != 0 {
        return Err(Error::corrupt("string offsets not monotone"));
    }
    let heap = r.take(offsets[rows])?;
    let heap = std::str::from_utf8(heap).map_err(|_| Error::corrupt("invalid utf-8 heap"))?;
    (0..rows)
        .map(|i| {
            heap.get(offsets[i]..offsets[i + 1])
                .map(str::to_string)
                .ok_or_else(|| Error::corrupt("string offset splits a character"))
        })
        .collect()
}

/// Dictionary and reverse index for one string column of an object.
pub(crate) struct DictBuilder {
    pub values: Vec<String>,
    index: HashMap<String, u32>,
}

impl DictBuilder {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn code(&mut self, s: &str) -> u32 {
        if let Some(&c) = self.index.get(s) {
            return c;
        }
        let c = self.values.len() as u32;
        self.values.push(s.to_string());
        self.index.insert(s.to_string(), c);
        c
    }
}

pub(crate) fn write_dict_values(w: &mut ByteWriter, values: &[String]) {
    w.u32(values.len() as u32);
    for v in values {
        w.str32(v);
    }
}

pub(crate) fn read_dict_values(r: &mut ByteReader) -> Result<Vec<String>> {
    let n = r.u32()? as usize;
    if n > r.remaining() / 4 {
        return Err(Error::corrupt("dictionary length exceeds payload"));
    }
    (0..n).map(|_| r.str32()).collect()
}

/// How a string column is encoded inside a chunk.
pub(crate) enum StringMode {
    Plain,
    InlineDict,
}

/// String column as codes into the enclosing object's dictionary.
pub(crate) fn write_dict_ref_column(w: &mut ByteWriter, col: &Column, codes: &[u32]) {
    w.u8(ENC_DICT_REF);
    write_validity(w, col);
    for &c in codes {
        w.u32(c);
    }
}

pub(crate) fn write_column(w: &mut ByteWriter, col: &Column, mode: StringMode) {
    let rows = col.len();
    match &col.data {
        ColumnData::Bool(v) => {
            w.u8(ENC_BOOL);
            write_validity(w, col);
            for &b in v {
                w.u8(b as u8);
            }
        }
        ColumnData::Int64(v) => {
            w.u8(ENC_INT64);
            write_validity(w, col);
            for &x in v {
                w.i64(x);
            }
        }
        ColumnData::Float64(v) => {
            w.u8(ENC_FLOAT64);
            write_validity(w, col);
            for &x in v {
                w.f64(x);
            }
        }
        ColumnData::Date32(v) => {
            w.u8(ENC_DATE32);
            write_validity(w, col);
            for &x in v {
                w.i32(x);
            }
        }
        ColumnData::Utf8(_) | ColumnData::Dict { .. } => match mode {
            StringMode::Plain => {
                w.u8(ENC_UTF8);
                write_validity(w, col);
                write_string_heap(w, rows, |i| col.str_at(i));
            }
            StringMode::InlineDict => {
                w.u8(ENC_DICT_INLINE);
                write_validity(w, col);
                let mut dict = DictBuilder::new();
                let codes: Vec<u32> = (0..rows).map(|i| dict.code(col.str_at(i))).collect();
                write_dict_values(w, &dict.values);
                for c in codes {
                    w.u32(c);
                }
            }
        },
    }
}

pub(crate) fn read_column(
    r: &mut ByteReader,
    rows: usize,
    object_dict: Option<&Arc<Vec<String>>>,
) -> Result<Column> {
    let enc = r.u8()?;
    let validity = read_validity(r, rows)?;
    // Fixed-width payloads must fit before allocating.
    let width = match enc {
        ENC_BOOL => 1,
        ENC_DATE32 | ENC_DICT_REF => 4,
        ENC_INT64 | ENC_FLOAT64 => 8,
        _ => 0,
    };
    if rows.saturating_mul(width) > r.remaining() {
        return Err(Error::corrupt("column payload truncated"));
    }
    let data = match enc {
        ENC_BOOL => ColumnData::Bool((0..rows).map(|_| r.u8().map(|b| b != 0)).collect::<Result<_>>()?),
        ENC_INT64 => ColumnData::Int64((0..rows).map(|_| r.i64()).collect::<Result<_>>()?),
        ENC_FLOAT64 => ColumnData::Float64((0..rows).map(|_| r.f64()).collect::<Result<_>>()?),
        ENC_DATE32 => ColumnData::Date32((0..rows).map(|_| r.i32()).collect::<Result<_>>()?),
        ENC_UTF8 => ColumnData::Utf8(read_string_heap(r, rows)?),
        ENC_DICT_REF => {
            let values = object_dict
                .ok_or_else(|| Error::corrupt("dictionary-coded column without dictionary"))?
                .clone();
            let codes = read_codes(r, rows, values.len())?;
            ColumnData::Dict { codes, values }
        }
        ENC_DICT_INLINE => {
            let values = Arc::new(read_dict_values(r)?);
            let codes = read_codes(r, rows, values.len())?;
            ColumnData::Dict { codes, values }
        }
        other => return Err(Error::corrupt(format!("unknown column encoding {other}"))),
    };
    Ok(Column::with_validity(data, validity))
}

fn read_codes(r: &mut ByteReader, rows: usize, dict_len: usize) -> Result<Vec<u32>> {
    let codes: Vec<u32> = (0..rows).map(|_| r.u32()).collect::<Result<_>>()?;
    if codes.iter().any(|&c| c as usize >= dict_len) {
        return Err(Error::corrupt("dictionary code out of range"));
    }
    Ok(codes)
}

pub(crate) fn write_value(w: &mut ByteWriter, v: &Value) {
    match v {
        Value::Null => w.u8(0),
        Value::Bool(b) => {
            w.u8(1);
            w.u8(*b as u8)
        }
        Value::Int(x) => {
            w.u8(2);
            w.i64(*x)
        }
        Value::Float(x) => {
            w.u8(3);
            w.f64(*x)
        }
        Value::Date(x) => {
            w.u8(4);
            w.i32(*x)
        }
        Value::Str(s) => {
            w.u8(5);
            w.str32(s)
        }
    }
}

pub(crate) fn read_value(r: &mut ByteReader) -> Result<Value> {
    Ok(match r.u8()? {
        0 => Value::Null,
        1 => Value::Bool(r.u8()? != 0),
        2 => Value::Int(r.i64()?),
        3 => Value::Float(r.f64()?),
        4 => Value::Date(r.i32()?),
        5 => Value::Str(r.str32()?),
        t => return Err(Error::corrupt(format!("unknown value tag {t}"))),
    })
}
