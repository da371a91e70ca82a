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

//! Binary object formats: the partitioned intermediate object used for
//! shuffles and the columnar base-table object. Both layouts are described
//! byte for byte in `docs/formats.md`.

mod catalog;
mod codec;
mod partitioned;
mod table;
mod types;

use futures::future::BoxFuture;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::storesim::{ByteRange, ObjectKey, StoreClient};

pub use catalog::{Catalog, TableEntry};
pub use partitioned::{
    read_partitioned_meta, read_partitions, write_partitioned, PartitionedMeta, PARTITIONED_MAGIC,
};
pub use table::{
    read_footer, scan_base_table, write_base_table, CmpOp, ColumnMeta, PruneTerm, TableFooter,
    TABLE_MAGIC,
};
pub use types::{Column, ColumnData, DataType, Field, RowBatch, Schema, SchemaRef, Value};

pub const FORMAT_VERSION: u16 = 1;

/// Anything that can serve byte-range reads of stored objects. The plain
/// store client implements it; the mitigation layer wraps it with pooling,
/// hedging and visibility fallback.
pub trait RangeReader: Send + Sync {
    fn get_range<'a>(&'a self, key: &'a ObjectKey, range: ByteRange) -> BoxFuture<'a, Result<Vec<u8>>>;
}

impl RangeReader for StoreClient {
    fn get_range<'a>(&'a self, key: &'a ObjectKey, range: ByteRange) -> BoxFuture<'a, Result<Vec<u8>>> {
        Box::pin(self.get(key, range))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormatOptions {
    /// Bytes fetched by the first metadata read (head for partitioned
    /// objects, tail for base tables).
    pub head_size: u64,
    /// String columns with at most this many distinct values are
    /// dictionary encoded.
    pub dict_threshold: usize,
    /// Accepted and recorded in the header; payloads are stored as-is.
    pub compress: bool,
}

impl Default for FormatOptions {
    fn default() -> Self {
        Self {
            head_size: 64 * 1024,
            dict_threshold: 1 << 16,
            compress: false,
        }
    }
}
