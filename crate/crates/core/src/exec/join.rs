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

//! Inner hash join.

use std::collections::HashMap;
use std::sync::Arc;

use super::keys::{check_key_types, KeyColumns};
use super::MemoryBudget;
use crate::error::{Error, Result};
use crate::format::{RowBatch, Schema};

/// Per-entry overhead charged on top of the build rows.
const ENTRY_OVERHEAD: u64 = 48;

/// Join `probe` against `build` on equal keys. Output columns are the probe
/// columns followed by the build columns; output rows follow probe order,
/// and matches for one probe row follow build order. Null keys never match.
pub fn hash_join(
    probe: &RowBatch,
    build: &RowBatch,
    probe_keys: &[String],
    build_keys: &[String],
    mem: &mut MemoryBudget,
) -> Result<RowBatch> {
    let pk = KeyColumns::new(probe, probe_keys)?;
    let bk = KeyColumns::new(build, build_keys)?;
    check_key_types(&pk.types(), &bk.types())?;

    let mut fields = probe.schema().fields().to_vec();
    for f in build.schema().fields() {
        if fields.iter().any(|g| g.name == f.name) {
            return Err(Error::Type(format!("join output has two columns named {}", f.name)));
        }
        fields.push(f.clone());
    }
    let schema = Arc::new(Schema::new(fields)?);

    mem.reserve(build.approx_bytes() + build.num_rows() as u64 * ENTRY_OVERHEAD)?;
    let mut table: HashMap<Vec<u8>, Vec<u32>> = HashMap::new();
    let mut buf = Vec::new();
    for row in 0..build.num_rows() {
        if bk.encode(row, &mut buf) {
            match table.get_mut(buf.as_slice()) {
                Some(rows) => rows.push(row as u32),
                None => {
                    table.insert(buf.clone(), vec![row as u32]);
                }
            }
        }
    }

    let mut pi = Vec::new();
    let mut bi = Vec::new();
    for row in 0..probe.num_rows() {
        if !pk.encode(row, &mut buf) {
            continue;
        }
        if let Some(matches) = table.get(buf.as_slice()) {
            for &b in matches {
                pi.push(row as u32);
                bi.push(b);
            }
        }
    }
    mem.reserve(pi.len() as u64 * schema.approx_row_width())?;

    let mut columns: Vec<_> = probe.columns().iter().map(|c| c.take(&pi)).collect();
    columns.extend(build.columns().iter().map(|c| c.take(&bi)));
    if pi.is_empty() {
        return Ok(RowBatch::empty(schema));
    }
    RowBatch::try_new(schema, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{DataType, Field, Value};

    fn batch(names: [&str; 2], rows: &[(Option<i64>, &str)]) -> RowBatch {
        let schema = Arc::new(
            Schema::new(vec![
                Field::new(names[0], DataType::Int64, true),
                Field::new(names[1], DataType::DictUtf8, false),
            ])
            .unwrap(),
        );
        let rows: Vec<Vec<Value>> = rows
            .iter()
            .map(|(k, s)| vec![k.map_or(Value::Null, Value::Int), Value::Str(s.to_string())])
            .collect();
        RowBatch::from_rows(schema, &rows).unwrap()
    }

    #[test]
    fn inner_join_order_and_nulls() {
        let probe = batch(["pk", "pv"], &[(Some(1), "a"), (None, "b"), (Some(2), "c"), (Some(1), "d")]);
        let build = batch(["bk", "bv"], &[(Some(1), "x"), (Some(3), "y"), (Some(1), "z"), (None, "n")]);
        let mut mem = MemoryBudget::new(1 << 20);
        let out = hash_join(&probe, &build, &["pk".into()], &["bk".into()], &mut mem).unwrap();
        let s = |x: &str| Value::Str(x.into());
        assert_eq!(
            out.to_rows(),
            vec![
                vec![Value::Int(1), s("a"), Value::Int(1), s("x")],
                vec![Value::Int(1), s("a"), Value::Int(1), s("z")],
                vec![Value::Int(1), s("d"), Value::Int(1), s("x")],
                vec![Value::Int(1), s("d"), Value::Int(1), s("z")],
            ]
        );
    }

    #[test]
    fn build_side_counts_against_memory() {
        let probe = batch(["pk", "pv"], &[(Some(1), "a")]);
        let build = batch(["bk", "bv"], &[(Some(1), "x"); 100]);
        let mut mem = MemoryBudget::new(1000);
        let err = hash_join(&probe, &build, &["pk".into()], &["bk".into()], &mut mem).unwrap_err();
        assert!(matches!(err, Error::OutOfBudget { .. }));
    }

    #[test]
    fn key_types_must_agree() {
        let probe = batch(["pk", "pv"], &[(Some(1), "a")]);
        let build = batch(["bk", "bv"], &[(Some(1), "x")]);
        let mut mem = MemoryBudget::new(1 << 20);
        let err = hash_join(&probe, &build, &["pk".into()], &["bv".into()], &mut mem).unwrap_err();
        assert!(matches!(err, Error::Type(_)));
    }
}
