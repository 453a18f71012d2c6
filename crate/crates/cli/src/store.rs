//! On-disk persistence of the decision service in a single redb file.
//!
//! Tables: users, the decision log, pending items, model versions, and a
//! meta row holding everything else about the service state.

use std::path::Path;
use std::sync::Arc;

use redb::{Database, ReadableDatabase, ReadableTable, TableDefinition};
use serde_json::Value;
use thiserror::Error;

use permassist_core::cf::CfModel;
use permassist_core::service::AssistantState;

const USERS: TableDefinition<&str, &str> = TableDefinition::new("users");
const LOG: TableDefinition<u64, &str> = TableDefinition::new("decisions");
const ITEMS: TableDefinition<u64, &str> = TableDefinition::new("pending_items");
const MODELS: TableDefinition<u64, &str> = TableDefinition::new("models");
const META: TableDefinition<&str, &str> = TableDefinition::new("meta");

const META_KEY: &str = "state";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage: {0}")]
    Db(#[from] redb::Error),
    #[error("stored state is corrupt: {0}")]
    Corrupt(String),
}

macro_rules! db_from {
    ($($t:ty),*) => {
        $(impl From<$t> for StoreError {
            fn from(e: $t) -> Self {
                StoreError::Db(e.into())
            }
        })*
    };
}
db_from!(redb::DatabaseError, redb::TransactionError, redb::TableError, redb::StorageError, redb::CommitError);

impl From<serde_json::Error> for StoreError {
    fn from(e: serde_json::Error) -> Self {
        StoreError::Corrupt(e.to_string())
    }
}

pub struct Store {
    db: Database,
}

impl Store {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        Ok(Self { db: Database::create(path)? })
    }

    /// Writes the full service state in one transaction.
    pub fn save(&self, state: &AssistantState) -> Result<(), StoreError> {
        let mut meta = serde_json::to_value(state)?;
        let obj = meta.as_object_mut().ok_or_else(|| StoreError::Corrupt("state is not an object".into()))?;
        obj.remove("users");
        obj.remove("log");
        obj.remove("items");

        let txn = self.db.begin_write()?;
        {
            let mut users = txn.open_table(USERS)?;
            for (id, u) in &state.users {
                users.insert(id.as_str(), serde_json::to_string(u)?.as_str())?;
            }
            let mut log = txn.open_table(LOG)?;
            for r in &state.log {
                log.insert(r.seq, serde_json::to_string(r)?.as_str())?;
            }
            let mut items = txn.open_table(ITEMS)?;
            for (id, item) in &state.items {
                items.insert(*id, serde_json::to_string(item)?.as_str())?;
            }
            let mut m = txn.open_table(META)?;
            m.insert(META_KEY, serde_json::to_string(&meta)?.as_str())?;
        }
        txn.commit()?;
        Ok(())
    }

    pub fn save_model(&self, version: u64, model: &CfModel) -> Result<(), StoreError> {
        let json = model.to_json().map_err(|e| StoreError::Corrupt(e.to_string()))?;
        let txn = self.db.begin_write()?;
        {
            let mut t = txn.open_table(MODELS)?;
            t.insert(version, json.as_str())?;
        }
        txn.commit()?;
        Ok(())
    }

    /// Model versions on record, oldest first.
    pub fn model_versions(&self) -> Result<Vec<u64>, StoreError> {
        let txn = self.db.begin_read()?;
        let t = match txn.open_table(MODELS) {
            Ok(t) => t,
            Err(redb::TableError::TableDoesNotExist(_)) => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for row in t.iter()? {
            out.push(row?.0.value());
        }
        Ok(out)
    }

    /// The stored state, or `None` for a fresh database.
    pub fn load(&self) -> Result<Option<AssistantState>, StoreError> {
        let txn = self.db.begin_read()?;
        let meta = match txn.open_table(META) {
            Ok(t) => t.get(META_KEY)?.map(|v| v.value().to_string()),
            Err(redb::TableError::TableDoesNotExist(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let Some(meta) = meta else { return Ok(None) };
        let mut doc: Value = serde_json::from_str(&meta)?;

        let mut users = serde_json::Map::new();
        for row in txn.open_table(USERS)?.iter()? {
            let (k, v) = row?;
            users.insert(k.value().to_string(), serde_json::from_str(v.value())?);
        }
        let mut log = Vec::new();
        for row in txn.open_table(LOG)?.iter()? {
            log.push(serde_json::from_str::<Value>(row?.1.value())?);
        }
        let mut items = serde_json::Map::new();
        for row in txn.open_table(ITEMS)?.iter()? {
            let (k, v) = row?;
            items.insert(k.value().to_string(), serde_json::from_str(v.value())?);
        }
        let obj = doc.as_object_mut().ok_or_else(|| StoreError::Corrupt("meta is not an object".into()))?;
        obj.insert("users".into(), Value::Object(users));
        obj.insert("log".into(), Value::Array(log));
        obj.insert("items".into(), Value::Object(items));
        let mut state: AssistantState = serde_json::from_value(doc)?;

        if state.model_version > 0 {
            let models = txn.open_table(MODELS)?;
            let json = models
                .get(state.model_version)?
                .ok_or_else(|| StoreError::Corrupt(format!("model version {} missing", state.model_version)))?;
            let model = CfModel::from_json(json.value()).map_err(|e| StoreError::Corrupt(e.to_string()))?;
            state.set_model(Arc::new(model));
        }
        Ok(Some(state))
    }
}
