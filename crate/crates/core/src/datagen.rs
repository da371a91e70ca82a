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

//! Seeded generator for TPC-H-shaped tables: a lineitem-like fact table, an
//! orders-like table and two small dimensions (customer, nation).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};
use crate::exec::parse_date;
use crate::format::{
    write_base_table, Catalog, Column, ColumnData, DataType, Field, FormatOptions, RowBatch, Schema, TableEntry,
};
use crate::storesim::{ObjectKey, SimObjectStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataGenOptions {
    /// Rows of the fact table.
    pub scale: u64,
    /// Upper bound on the size of one stored object.
    pub object_size: u64,
    pub seed: u64,
}

impl Default for DataGenOptions {
    fn default() -> Self {
        Self {
            scale: 1_000_000,
            object_size: 8 << 20,
            seed: 1,
        }
    }
}

/// Generated tables in memory plus their stored form. A dataset read back
/// from disk has only the stored form; `tables` is then empty.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub catalog: Catalog,
    pub tables: BTreeMap<String, RowBatch>,
    pub objects: Vec<(ObjectKey, Vec<u8>)>,
}

const CATALOG_FILE: &str = "catalog.json";
const OBJECTS_DIR: &str = "objects";

impl Dataset {
    pub fn table(&self, name: &str) -> &RowBatch {
        &self.tables[name]
    }

    pub fn row_counts(&self) -> BTreeMap<String, u64> {
        self.tables.iter().map(|(k, v)| (k.clone(), v.num_rows() as u64)).collect()
    }

    pub fn total_bytes(&self) -> u64 {
        self.objects.iter().map(|(_, b)| b.len() as u64).sum()
    }

    /// Write `dir/catalog.json` and `dir/objects/<bucket>/<key>`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.catalog.save(&dir.join(CATALOG_FILE))?;
        for (key, bytes) in &self.objects {
            let path = dir.join(OBJECTS_DIR).join(&key.bucket).join(&key.key);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        Ok(())
    }

    /// Read back a dataset written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let catalog = Catalog::load(&dir.join(CATALOG_FILE))?;
        let mut objects = Vec::new();
        for entry in catalog.tables.values() {
            for key in &entry.objects {
                let path = dir.join(OBJECTS_DIR).join(&key.bucket).join(&key.key);
                let bytes = std::fs::read(&path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                objects.push((key.clone(), bytes));
            }
        }
        Ok(Self {
            catalog,
            tables: BTreeMap::new(),
            objects,
        })
    }

    /// Place every object in `store`, visible immediately and unmetered.
    pub fn install(&self, store: &SimObjectStore) {
        for (k, b) in &self.objects {
            store.insert_raw(k, b.clone());
        }
    }
}

pub const TABLES: [&str; 4] = ["customer", "lineitem", "nation", "orders"];

const SHIP_MODES: [&str; 7] = ["AIR", "FOB", "MAIL", "RAIL", "REG AIR", "SHIP", "TRUCK"];
const SHIP_INSTRUCT: [&str; 4] = ["COLLECT COD", "DELIVER IN PERSON", "NONE", "TAKE BACK RETURN"];
const PRIORITIES: [&str; 5] = ["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"];
const SEGMENTS: [&str; 5] = ["AUTOMOBILE", "BUILDING", "FURNITURE", "HOUSEHOLD", "MACHINERY"];
const NATIONS: [&str; 25] = [
    "ALGERIA", "ARGENTINA", "BRAZIL", "CANADA", "EGYPT", "ETHIOPIA", "FRANCE", "GERMANY", "INDIA", "INDONESIA",
    "IRAN", "IRAQ", "JAPAN", "JORDAN", "KENYA", "MOROCCO", "PERU", "CHINA", "ROMANIA", "SAUDI ARABIA", "VIETNAM",
    "RUSSIA", "UNITED KINGDOM", "UNITED STATES", "MOZAMBIQUE",
];

fn rng_for(table: &str, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(xxh3_64_with_seed(table.as_bytes(), seed))
}

fn dict(values: &[&str], codes: Vec<u32>) -> Column {
    Column::new(ColumnData::Dict {
        codes,
        values: Arc::new(values.iter().map(|s| s.to_string()).collect()),
    })
}

fn batch(fields: Vec<Field>, columns: Vec<Column>) -> RowBatch {
    let schema = Arc::new(Schema::new(fields).expect("static schema"));
    RowBatch::try_new(schema, columns).expect("generated columns agree")
}

fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn lineitem_schema() -> Vec<Field> {
    vec![
        Field::new("l_orderkey", DataType::Int64, false),
        Field::new("l_partkey", DataType::Int64, false),
        Field::new("l_suppkey", DataType::Int64, false),
        Field::new("l_linenumber", DataType::Int64, false),
        Field::new("l_quantity", DataType::Float64, false),
        Field::new("l_extendedprice", DataType::Float64, false),
        Field::new("l_discount", DataType::Float64, false),
        Field::new("l_tax", DataType::Float64, true),
        Field::new("l_returnflag", DataType::DictUtf8, false),
        Field::new("l_linestatus", DataType::DictUtf8, false),
        Field::new("l_shipdate", DataType::Date32, false),
        Field::new("l_commitdate", DataType::Date32, false),
        Field::new("l_receiptdate", DataType::Date32, false),
        Field::new("l_shipinstruct", DataType::DictUtf8, false),
        Field::new("l_shipmode", DataType::DictUtf8, false),
    ]
}

struct Orders {
    batch: RowBatch,
    dates: Vec<i32>,
}

fn gen_orders(n: usize, customers: usize, seed: u64) -> Orders {
    let mut rng = rng_for("orders", seed);
    let start = parse_date("1992-01-01").unwrap();
    let end = parse_date("1998-08-02").unwrap();
    let mut key = Vec::with_capacity(n);
    let mut cust = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    let mut total = Vec::with_capacity(n);
    let mut date = Vec::with_capacity(n);
    let mut prio = Vec::with_capacity(n);
    let mut shipprio = Vec::with_capacity(n);
    for i in 0..n {
        key.push(i as i64 + 1);
        cust.push(rng.random_range(1..=customers.max(1)) as i64);
        status.push(rng.random_range(0..3u32));
        total.push(cents(rng.random_range(850.0..560_000.0)));
        date.push(rng.random_range(start..=end));
        prio.push(rng.random_range(0..5u32));
        shipprio.push(0i64);
    }
    let fields = vec![
        Field::new("o_orderkey", DataType::Int64, false),
        Field::new("o_custkey", DataType::Int64, false),
        Field::new("o_orderstatus", DataType::DictUtf8, false),
        Field::new("o_totalprice", DataType::Float64, false),
        Field::new("o_orderdate", DataType::Date32, false),
        Field::new("o_orderpriority", DataType::DictUtf8, false),
        Field::new("o_shippriority", DataType::Int64, false),
    ];
    let columns = vec![
        Column::new(ColumnData::Int64(key)),
        Column::new(ColumnData::Int64(cust)),
        dict(&["F", "O", "P"], status),
        Column::new(ColumnData::Float64(total)),
        Column::new(ColumnData::Date32(date.clone())),
        dict(&PRIORITIES, prio),
        Column::new(ColumnData::Int64(shipprio)),
    ];
    Orders {
        batch: batch(fields, columns),
        dates: date,
    }
}

fn gen_lineitem(n: usize, orders: &Orders, seed: u64) -> RowBatch {
    let mut rng = rng_for("lineitem", seed);
    let m = orders.dates.len();
    let cutoff = parse_date("1995-06-17").unwrap();
    let parts = (n / 5).max(1) as i64;
    let supps = (n / 100).max(1) as i64;
    let mut c_order = Vec::with_capacity(n);
    let mut c_part = Vec::with_capacity(n);
    let mut c_supp = Vec::with_capacity(n);
    let mut c_line = Vec::with_capacity(n);
    let mut c_qty = Vec::with_capacity(n);
    let mut c_price = Vec::with_capacity(n);
    let mut c_disc = Vec::with_capacity(n);
    let mut c_tax = Vec::with_capacity(n);
    let mut tax_valid = Vec::with_capacity(n);
    let mut c_flag = Vec::with_capacity(n);
    let mut c_status = Vec::with_capacity(n);
    let mut c_ship = Vec::with_capacity(n);
    let mut c_commit = Vec::with_capacity(n);
    let mut c_receipt = Vec::with_capacity(n);
    let mut c_instr = Vec::with_capacity(n);
    let mut c_mode = Vec::with_capacity(n);
    let mut prev_order = usize::MAX;
    let mut line = 0i64;
    for i in 0..n {
        // contiguous runs of about four lines per order
        let o = i * m / n;
        line = if o == prev_order { line + 1 } else { 1 };
        prev_order = o;
        let odate = orders.dates[o];
        let qty = rng.random_range(1..=50) as f64;
        let part = rng.random_range(1..=parts);
        let unit = 900.0 + (part % 1000) as f64 / 10.0 + rng.random_range(0.0..100.0);
        let ship = odate + rng.random_range(1..=121);
        let commit = odate + rng.random_range(30..=90);
        let receipt = ship + rng.random_range(1..=30);
        let tax = rng.random_range(0..=8) as f64 / 100.0;
        let has_tax = !rng.random_bool(0.005);
        c_order.push(o as i64 + 1);
        c_part.push(part);
        c_supp.push(rng.random_range(1..=supps));
        c_line.push(line);
        c_qty.push(qty);
        c_price.push(cents(qty * unit));
        c_disc.push(rng.random_range(0..=10) as f64 / 100.0);
        c_tax.push(if has_tax { tax } else { 0.0 });
        tax_valid.push(has_tax);
        c_flag.push(if receipt <= cutoff { rng.random_range(0..2u32) } else { 2 });
        c_status.push(if ship > cutoff { 1u32 } else { 0 });
        c_ship.push(ship);
        c_commit.push(commit);
        c_receipt.push(receipt);
        c_instr.push(rng.random_range(0..4u32));
        c_mode.push(rng.random_range(0..7u32));
    }
    let columns = vec![
        Column::new(ColumnData::Int64(c_order)),
        Column::new(ColumnData::Int64(c_part)),
        Column::new(ColumnData::Int64(c_supp)),
        Column::new(ColumnData::Int64(c_line)),
        Column::new(ColumnData::Float64(c_qty)),
        Column::new(ColumnData::Float64(c_price)),
        Column::new(ColumnData::Float64(c_disc)),
        Column::with_validity(ColumnData::Float64(c_tax), Some(tax_valid)),
        dict(&["A", "R", "N"], c_flag),
        dict(&["F", "O"], c_status),
        Column::new(ColumnData::Date32(c_ship)),
        Column::new(ColumnData::Date32(c_commit)),
        Column::new(ColumnData::Date32(c_receipt)),
        dict(&SHIP_INSTRUCT, c_instr),
        dict(&SHIP_MODES, c_mode),
    ];
    batch(lineitem_schema(), columns)
}

fn gen_customer(n: usize, nations: usize, seed: u64) -> RowBatch {
    let mut rng = rng_for("customer", seed);
    let mut key = Vec::with_capacity(n);
    let mut name = Vec::with_capacity(n);
    let mut nation = Vec::with_capacity(n);
    let mut bal = Vec::with_capacity(n);
    let mut bal_valid = Vec::with_capacity(n);
    let mut seg = Vec::with_capacity(n);
    for i in 0..n {
        key.push(i as i64 + 1);
        name.push(format!("Customer#{:09}", i + 1));
        nation.push(rng.random_range(0..nations.max(1)) as i64);
        bal.push(cents(rng.random_range(-999.99..9999.99)));
        bal_valid.push(!rng.random_bool(0.01));
        seg.push(rng.random_range(0..5u32));
    }
    let fields = vec![
        Field::new("c_custkey", DataType::Int64, false),
        Field::new("c_name", DataType::Utf8, false),
        Field::new("c_nationkey", DataType::Int64, false),
        Field::new("c_acctbal", DataType::Float64, true),
        Field::new("c_mktsegment", DataType::DictUtf8, false),
    ];
    let columns = vec![
        Column::new(ColumnData::Int64(key)),
        Column::new(ColumnData::Utf8(name)),
        Column::new(ColumnData::Int64(nation)),
        Column::with_validity(ColumnData::Float64(bal), Some(bal_valid)),
        dict(&SEGMENTS, seg),
    ];
    batch(fields, columns)
}

fn gen_nation(n: usize) -> RowBatch {
    let fields = vec![
        Field::new("n_nationkey", DataType::Int64, false),
        Field::new("n_name", DataType::DictUtf8, false),
        Field::new("n_regionkey", DataType::Int64, false),
    ];
    let columns = vec![
        Column::new(ColumnData::Int64((0..n as i64).collect())),
        dict(&NATIONS, (0..n as u32).collect()),
        Column::new(ColumnData::Int64((0..n as i64).map(|k| k % 5).collect())),
    ];
    batch(fields, columns)
}

/// The four tables in memory. Deterministic in `opts.seed`.
pub fn generate_tables(opts: &DataGenOptions) -> BTreeMap<String, RowBatch> {
    let n = opts.scale as usize;
    let n_orders = n.div_ceil(4);
    let n_customers = n.div_ceil(40);
    let n_nations = if n == 0 { 0 } else { NATIONS.len() };
    let orders = gen_orders(n_orders, n_customers, opts.seed);
    let mut out = BTreeMap::new();
    out.insert("lineitem".to_string(), gen_lineitem(n, &orders, opts.seed));
    out.insert("orders".to_string(), orders.batch);
    out.insert("customer".to_string(), gen_customer(n_customers, n_nations, opts.seed));
    out.insert("nation".to_string(), gen_nation(n_nations));
    out
}

/// Encode `batch` as base-table objects of at most `max_bytes` each, where
/// possible (a single row larger than the cap gets an object of its own).
pub fn split_objects(batch: &RowBatch, max_bytes: u64, fmt: &FormatOptions) -> Result<Vec<(Vec<u8>, u64)>> {
    let total = batch.num_rows();
    if total == 0 {
        return Ok(vec![(write_base_table(batch, fmt)?, 0)]);
    }
    let width = batch.schema().approx_row_width().max(1);
    let mut per = (max_bytes / width).clamp(1, total as u64) as usize;
    let mut out = Vec::new();
    let mut start = 0;
    while start < total {
        let end = (start + per).min(total);
        let idx: Vec<u32> = (start as u32..end as u32).collect();
        let bytes = write_base_table(&batch.take(&idx), fmt)?;
        if bytes.len() as u64 > max_bytes && end - start > 1 {
            per = ((end - start) / 2).max(1);
            continue;
        }
        out.push((bytes, (end - start) as u64));
        start = end;
    }
    Ok(out)
}

/// Generate, encode and catalog the tables under `bucket`.
pub fn build_dataset(opts: &DataGenOptions, bucket: &str, fmt: &FormatOptions) -> Result<Dataset> {
    let tables = generate_tables(opts);
    let mut catalog = Catalog::default();
    let mut objects = Vec::new();
    for (name, batch) in &tables {
        let pieces = split_objects(batch, opts.object_size, fmt)?;
        let mut entry = TableEntry {
            schema: batch.schema().as_ref().clone(),
            objects: Vec::new(),
            object_rows: Vec::new(),
        };
        for (i, (bytes, rows)) in pieces.into_iter().enumerate() {
            let key = ObjectKey::new(bucket, format!("tables/{name}/{i:05}.sbt"));
            entry.objects.push(key.clone());
            entry.object_rows.push(rows);
            objects.push((key, bytes));
        }
        catalog.tables.insert(name.clone(), entry);
    }
    Ok(Dataset {
        catalog,
        tables,
        objects,
    })
}
