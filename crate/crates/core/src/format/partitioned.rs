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

//! The partitioned intermediate object: metadata (schema, dictionaries,
//! absolute partition end offsets) at the head, partition payloads after it.
//! Any contiguous partition range is readable with two GETs.

use std::collections::HashMap;
use std::sync::Arc;

use super::codec::{
    read_column, read_dict_values, read_schema, write_column, write_dict_ref_column,
    write_dict_values, write_schema, ByteReader, ByteWriter, StringMode,
};
use super::types::{ColumnData, RowBatch, SchemaRef};
use super::{FormatOptions, RangeReader, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::storesim::{ByteRange, ObjectKey};

pub const PARTITIONED_MAGIC: &[u8; 4] = b"SPOB";
const HEADER_LEN: usize = 20;
const FLAG_COMPRESSED: u16 = 1;
const NULL_CODE: u32 = u32::MAX;

/// Per-column dictionary builder that remaps source dictionary codes
/// instead of hashing every row.
struct ObjectDict {
    values: Vec<String>,
    index: HashMap<String, u32>,
}

impl ObjectDict {
    fn code(&mut self, s: &str) -> u32 {
        if let Some(&c) = self.index.get(s) {
            return c;
        }
        let c = self.values.len() as u32;
        self.values.push(s.to_string());
        self.index.insert(s.to_string(), c);
        c
    }
}

/// Codes for every partition of column `ci`, or `None` when the column has
/// too many distinct values.
fn dictionary_codes(
    batches: &[RowBatch],
    ci: usize,
    threshold: usize,
) -> Option<(Vec<String>, Vec<Vec<u32>>)> {
    let mut dict = ObjectDict {
        values: Vec::new(),
        index: HashMap::new(),
    };
    let mut all = Vec::with_capacity(batches.len());
    let mut any_null = false;
    for b in batches {
        let col = b.column(ci);
        let mut out = Vec::with_capacity(col.len());
        match &col.data {
            ColumnData::Dict { codes, values } => {
                let mut remap: Vec<Option<u32>> = vec![None; values.len()];
                for (i, &c) in codes.iter().enumerate() {
                    if !col.is_valid(i) {
                        out.push(NULL_CODE);
                        continue;
                    }
                    let slot = &mut remap[c as usize];
                    out.push(*slot.get_or_insert_with(|| dict.code(&values[c as usize])));
                }
            }
            _ => {
                for i in 0..col.len() {
                    out.push(if col.is_valid(i) { dict.code(col.str_at(i)) } else { NULL_CODE });
                }
            }
        }
        if dict.values.len() > threshold {
            return None;
        }
        any_null |= col.validity.is_some();
        all.push(out);
    }
    // Null slots point at code 0, which must exist.
    if any_null {
        if dict.values.is_empty() {
            dict.values.push(String::new());
        }
        for codes in &mut all {
            for c in codes.iter_mut().filter(|c| **c == NULL_CODE) {
                *c = 0;
            }
        }
    }
    Some((dict.values, all))
}

/// Encode one object holding `batches[i]` as partition `i`.
pub fn write_partitioned(batches: &[RowBatch], fingerprint: u64, opts: &FormatOptions) -> Result<Vec<u8>> {
    let first = batches
        .first()
        .ok_or_else(|| Error::SchemaMismatch("a partitioned object needs at least one partition".into()))?;
    let schema = first.schema().clone();
    for (i, b) in batches.iter().enumerate() {
        if !b.schema().logical_eq(&schema) {
            return Err(Error::SchemaMismatch(format!("partition {i} schema differs from partition 0")));
        }
    }

    let mut dicts: Vec<(usize, Vec<String>)> = Vec::new();
    let mut codes: Vec<Option<Vec<Vec<u32>>>> = vec![None; schema.len()];
    for (ci, f) in schema.fields().iter().enumerate() {
        if f.data_type.is_string() {
            if let Some((values, c)) = dictionary_codes(batches, ci, opts.dict_threshold) {
                dicts.push((ci, values));
                codes[ci] = Some(c);
            }
        }
    }

    let mut payloads = Vec::with_capacity(batches.len());
    for (pi, b) in batches.iter().enumerate() {
        if b.num_rows() == 0 {
            payloads.push(Vec::new());
            continue;
        }
        let mut w = ByteWriter::new();
        w.u64(b.num_rows() as u64);
        for (ci, col) in b.columns().iter().enumerate() {
            match &codes[ci] {
                Some(c) => write_dict_ref_column(&mut w, col, &c[pi]),
                None => write_column(&mut w, col, StringMode::Plain),
            }
        }
        payloads.push(w.buf);
    }

    let mut body = ByteWriter::new();
    write_schema(&mut body, &schema);
    body.u16(dicts.len() as u16);
    for (ci, values) in &dicts {
        body.u16(*ci as u16);
        write_dict_values(&mut body, values);
    }
    body.u32(batches.len() as u32);
    let metadata_len = HEADER_LEN + body.len() + 8 * batches.len();

    let mut end = metadata_len as u64;
    for p in &payloads {
        end += p.len() as u64;
        body.u64(end);
    }

    let mut w = ByteWriter::new();
    w.buf.reserve(end as usize);
    w.bytes(PARTITIONED_MAGIC);
    w.u16(FORMAT_VERSION);
    w.u16(if opts.compress { FLAG_COMPRESSED } else { 0 });
    w.u32(metadata_len as u32);
    w.u64(fingerprint);
    w.bytes(&body.buf);
    debug_assert_eq!(w.len(), metadata_len);
    for p in &payloads {
        w.bytes(p);
    }
    Ok(w.buf)
}

/// Decoded head of a partitioned object.
#[derive(Debug, Clone)]
pub struct PartitionedMeta {
    pub version: u16,
    pub flags: u16,
    pub fingerprint: u64,
    pub metadata_len: u64,
    pub schema: SchemaRef,
    /// Object-level dictionary per column, if that column is dictionary coded.
    pub dicts: Vec<Option<Arc<Vec<String>>>>,
    /// Absolute end offset of each partition.
    pub ends: Vec<u64>,
}

fn check_header(head: &[u8]) -> Result<(u16, u16, u64, u64)> {
    if head.len() < HEADER_LEN {
        return Err(Error::corrupt(format!("object too short for a header: {} bytes", head.len())));
    }
    let mut r = ByteReader::new(head);
    if r.take(4)? != PARTITIONED_MAGIC {
        return Err(Error::corrupt("bad magic for partitioned object"));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::corrupt(format!("unsupported format version {version}")));
    }
    let flags = r.u16()?;
    if flags & !FLAG_COMPRESSED != 0 {
        return Err(Error::corrupt(format!("unknown flags {flags:#x}")));
    }
    let metadata_len = r.u32()? as u64;
    if metadata_len < HEADER_LEN as u64 {
        return Err(Error::corrupt("metadata length shorter than header"));
    }
    let fingerprint = r.u64()?;
    Ok((version, flags, metadata_len, fingerprint))
}

impl PartitionedMeta {
    /// Parse from the leading bytes of an object; `bytes` must cover the
    /// whole metadata block.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let (version, flags, metadata_len, fingerprint) = check_header(bytes)?;
        if (bytes.len() as u64) < metadata_len {
            return Err(Error::corrupt("metadata truncated"));
        }
        let mut r = ByteReader::new(&bytes[HEADER_LEN..metadata_len as usize]);
        let schema = Arc::new(read_schema(&mut r)?);
        let mut dicts = vec![None; schema.len()];
        let ndicts = r.u16()? as usize;
        for _ in 0..ndicts {
            let ci = r.u16()? as usize;
            if ci >= schema.len() || !schema.field(ci).data_type.is_string() || dicts[ci].is_some() {
                return Err(Error::corrupt(format!("dictionary for invalid column {ci}")));
            }
            dicts[ci] = Some(Arc::new(read_dict_values(&mut r)?));
        }
        let n = r.u32()? as usize;
        if n == 0 || n > r.remaining() / 8 {
            return Err(Error::corrupt(format!("bad partition count {n}")));
        }
        let ends: Vec<u64> = (0..n).map(|_| r.u64()).collect::<Result<_>>()?;
        if r.remaining() != 0 {
            return Err(Error::corrupt("trailing bytes in metadata"));
        }
        let mut prev = metadata_len;
        for (i, &e) in ends.iter().enumerate() {
            if e < prev {
                return Err(Error::corrupt(format!("partition {i} ends at {e}, before {prev}")));
            }
            prev = e;
        }
        Ok(Self {
            version,
            flags,
            fingerprint,
            metadata_len,
            schema,
            dicts,
            ends,
        })
    }

    pub fn partition_count(&self) -> usize {
        self.ends.len()
    }

    /// Object length implied by the offsets.
    pub fn object_len(&self) -> u64 {
        *self.ends.last().unwrap()
    }

    pub fn start(&self, i: usize) -> u64 {
        if i == 0 {
            self.metadata_len
        } else {
            self.ends[i - 1]
        }
    }

    /// Byte span `[start, end)` of partitions `lo..hi`.
    pub fn span(&self, lo: usize, hi: usize) -> Result<(u64, u64)> {
        if lo > hi || hi > self.partition_count() {
            return Err(Error::corrupt(format!(
                "partition range [{lo},{hi}) outside {} partitions",
                self.partition_count()
            )));
        }
        if lo == hi {
            let at = self.start(lo.min(self.partition_count() - 1));
            return Ok((at, at));
        }
        Ok((self.start(lo), self.ends[hi - 1]))
    }

    /// Decode partition `i` from `bytes`, which hold exactly its span.
    pub fn decode_partition(&self, i: usize, bytes: &[u8]) -> Result<RowBatch> {
        if bytes.is_empty() {
            return Ok(RowBatch::empty(self.schema.clone()));
        }
        let mut r = ByteReader::new(bytes);
        let rows = r.u64()? as usize;
        if rows > r.remaining() {
            return Err(Error::corrupt(format!("partition {i} claims {rows} rows")));
        }
        let columns = (0..self.schema.len())
            .map(|ci| read_column(&mut r, rows, self.dicts[ci].as_ref()))
            .collect::<Result<Vec<_>>>()?;
        if r.remaining() != 0 {
            return Err(Error::corrupt(format!("partition {i} has trailing bytes")));
        }
        RowBatch::try_new(self.schema.clone(), columns).map_err(|e| Error::corrupt(e.to_string()))
    }

    /// Split `data`, the bytes of [`PartitionedMeta::span`]`(lo, hi)`, into
    /// per-partition batches.
    pub fn decode_span(&self, lo: usize, hi: usize, data: &[u8]) -> Result<Vec<RowBatch>> {
        let (start, end) = self.span(lo, hi)?;
        if data.len() as u64 != end - start {
            return Err(Error::corrupt(format!(
                "expected {} data bytes, got {}",
                end - start,
                data.len()
            )));
        }
        (lo..hi)
            .map(|i| {
                let s = (self.start(i) - start) as usize;
                let e = (self.ends[i] - start) as usize;
                self.decode_partition(i, &data[s..e])
            })
            .collect()
    }

    /// Parse a whole in-memory object.
    pub fn decode_all(bytes: &[u8]) -> Result<(Self, Vec<RowBatch>)> {
        let meta = Self::parse(bytes)?;
        if meta.object_len() != bytes.len() as u64 {
            return Err(Error::corrupt("last partition offset differs from object length"));
        }
        let n = meta.partition_count();
        let parts = meta.decode_span(0, n, &bytes[meta.metadata_len as usize..])?;
        Ok((meta, parts))
    }
}

/// Fetch and parse the metadata: one head GET, plus one more only when the
/// metadata is longer than the head.
pub async fn read_partitioned_meta(
    reader: &dyn RangeReader,
    key: &ObjectKey,
    head_size: u64,
) -> Result<PartitionedMeta> {
    let head_size = head_size.max(HEADER_LEN as u64);
    let mut head = reader.get_range(key, ByteRange::Span(0, head_size)).await?;
    let (_, _, metadata_len, _) = check_header(&head)?;
    if metadata_len > head.len() as u64 {
        let rest = reader
            .get_range(key, ByteRange::Span(head.len() as u64, metadata_len))
            .await?;
        head.extend_from_slice(&rest);
    }
    PartitionedMeta::parse(&head)
}

/// Read partitions `lo..hi` as separate batches. Always exactly one data GET,
/// even for an empty span.
pub async fn read_partitions(
    reader: &dyn RangeReader,
    key: &ObjectKey,
    lo: usize,
    hi: usize,
    opts: &FormatOptions,
) -> Result<(PartitionedMeta, Vec<RowBatch>)> {
    let meta = read_partitioned_meta(reader, key, opts.head_size).await?;
    let (start, end) = meta.span(lo, hi)?;
    let data = reader.get_range(key, ByteRange::Span(start, end)).await?;
    let parts = meta.decode_span(lo, hi, &data)?;
    Ok((meta, parts))
}
