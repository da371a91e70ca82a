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

//! Canonical row-key encoding, shared by grouping, joins and the hash
//! partitioner. Both string encodings produce identical bytes.

use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};
use crate::format::{Column, ColumnData, DataType, RowBatch};

const TAG_NULL: u8 = 0;
const TAG_BOOL: u8 = 1;
const TAG_INT: u8 = 2;
const TAG_FLOAT: u8 = 3;
const TAG_DATE: u8 = 4;
const TAG_STR: u8 = 5;

pub(crate) fn encode_cell(col: &Column, i: usize, out: &mut Vec<u8>) {
    if !col.is_valid(i) {
        out.push(TAG_NULL);
        return;
    }
    match &col.data {
        ColumnData::Bool(v) => out.extend_from_slice(&[TAG_BOOL, v[i] as u8]),
        ColumnData::Int64(v) => {
            out.push(TAG_INT);
            out.extend_from_slice(&v[i].to_le_bytes());
        }
        ColumnData::Float64(v) => {
            out.push(TAG_FLOAT);
            // fold -0.0 into 0.0 so equal keys encode equally
            let x = if v[i] == 0.0 { 0.0f64 } else { v[i] };
            out.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        ColumnData::Date32(v) => {
            out.push(TAG_DATE);
            out.extend_from_slice(&v[i].to_le_bytes());
        }
        ColumnData::Utf8(_) | ColumnData::Dict { .. } => {
            let s = col.str_at(i);
            out.push(TAG_STR);
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
    }
}

/// Key columns of a batch, resolved once.
pub(crate) struct KeyColumns<'a> {
    cols: Vec<&'a Column>,
}

impl<'a> KeyColumns<'a> {
    pub fn new(batch: &'a RowBatch, names: &[String]) -> Result<Self> {
        let cols = names.iter().map(|n| batch.column_by_name(n)).collect::<Result<_>>()?;
        Ok(Self { cols })
    }

    pub fn types(&self) -> Vec<DataType> {
        self.cols.iter().map(|c| c.data_type()).collect()
    }

    /// Writes the key for `row` into `out` (cleared first). Returns false if
    /// any component is null.
    pub fn encode(&self, row: usize, out: &mut Vec<u8>) -> bool {
        out.clear();
        let mut all_valid = true;
        for c in &self.cols {
            all_valid &= c.is_valid(row);
            encode_cell(c, row, out);
        }
        all_valid
    }
}

/// Join keys must agree on logical type, otherwise equal values would encode
/// differently.
pub(crate) fn check_key_types(left: &[DataType], right: &[DataType]) -> Result<()> {
    if left.len() != right.len() {
        return Err(Error::Type(format!(
            "join key arity differs: {} vs {}",
            left.len(),
            right.len()
        )));
    }
    for (a, b) in left.iter().zip(right) {
        if !a.logical_eq(*b) {
            return Err(Error::Type(format!("join key types differ: {a:?} vs {b:?}")));
        }
    }
    Ok(())
}

const HASH_DOMAIN: &[u8] = b"xxh3-64/key-v1";

/// Identifies a (hash function, seed, partition count) triple. Objects written
/// by one partitioner can only be co-read with objects of the same identity.
pub fn partitioner_fingerprint(seed: u64, partitions: usize) -> u64 {
    let mut buf = HASH_DOMAIN.to_vec();
    buf.extend_from_slice(&(partitions as u64).to_le_bytes());
    xxh3_64_with_seed(&buf, seed)
}

/// Hash partitioning of rows by key columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashPartitioner {
    pub keys: Vec<String>,
    pub partitions: usize,
    pub seed: u64,
}

impl HashPartitioner {
    pub fn fingerprint(&self) -> u64 {
        partitioner_fingerprint(self.seed, self.partitions)
    }

    pub fn partition_of(&self, key: &[u8]) -> usize {
        (xxh3_64_with_seed(key, self.seed) % self.partitions as u64) as usize
    }

    /// Split `batch` into `partitions` batches; row order is kept within each.
    pub fn split(&self, batch: &RowBatch) -> Result<Vec<RowBatch>> {
        if self.partitions == 0 {
            return Err(Error::InvalidTopology("zero partitions".into()));
        }
        let keys = KeyColumns::new(batch, &self.keys)?;
        let mut idx: Vec<Vec<u32>> = vec![Vec::new(); self.partitions];
        let mut buf = Vec::new();
        for row in 0..batch.num_rows() {
            keys.encode(row, &mut buf);
            idx[self.partition_of(&buf)].push(row as u32);
        }
        Ok(idx.iter().map(|ix| batch.take(ix)).collect())
    }
}
