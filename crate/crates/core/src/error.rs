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

use thiserror::Error;

use crate::storesim::ObjectKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("object {0} is not visible")]
    NotVisible(ObjectKey),

    #[error("neither {primary} nor {secondary} became visible within {budget_ms} ms")]
    BothInvisible {
        primary: ObjectKey,
        secondary: ObjectKey,
        budget_ms: f64,
    },

    #[error("corrupt object: {0}")]
    CorruptObject(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("unknown column: {0}")]
    UnknownColumn(String),

    #[error("memory reservation of {requested} bytes exceeds budget of {budget} bytes")]
    OutOfBudget { requested: u64, budget: u64 },

    #[error("partitioner mismatch: expected {expected:#x}, found {found:#x}")]
    PartitionMismatch { expected: u64, found: u64 },

    #[error("aggregate spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("invalid shuffle topology: {0}")]
    InvalidTopology(String),

    #[error("plan validation failed at {location}: {reason}")]
    PlanValidation { location: String, reason: String },

    #[error("type error: {0}")]
    Type(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("task {task} failed: {detail}")]
    TaskFailed { task: String, detail: String },

    #[error("query {query} failed: {detail}")]
    QueryFailed { query: String, detail: String },

    #[error("unknown bench kind: {0}")]
    UnknownBench(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn plan(location: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::PlanValidation {
            location: location.into(),
            reason: reason.into(),
        }
    }

    pub fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptObject(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
