use std::sync::Arc;

use crate::{ObjectId, OpKind};

/// What a fault hook sees before a mutating operation takes effect.
#[derive(Debug, Clone, Copy)]
pub struct FaultContext<'a> {
    pub op: OpKind,
    pub ns: &'a str,
    pub object: ObjectId,
    pub key: Option<&'a str>,
}

/// Returns `true` to make the operation fail with
/// [`EngineError::InjectedFault`](crate::EngineError::InjectedFault) before
/// any state changes.
pub type FaultHook = Arc<dyn Fn(&FaultContext<'_>) -> bool + Send + Sync>;
