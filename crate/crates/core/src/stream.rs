//! Evaluation of statements as they arrive, without materializing bodies.

use crate::eval::{eval_stmt, AccessSet, Diagnostic, EvalState};
use crate::model::{Stmt, TaskName};
use crate::trace::StatementSink;

/// A [`StatementSink`] that evaluates each statement immediately. Memory is
/// bounded by the process scopes and the access sets, not the trace length.
#[derive(Debug, Default)]
pub struct StreamingEvaluator {
    state: EvalState,
    accesses: Vec<AccessSet>,
    diagnostics: Vec<Diagnostic>,
    statements: u64,
}

impl StreamingEvaluator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Access set of a slot, empty if the slot never received a statement.
    pub fn access(&self, slot: usize) -> AccessSet {
        self.accesses.get(slot).cloned().unwrap_or_default()
    }

    pub fn take_access(&mut self, slot: usize) -> AccessSet {
        self.accesses.get_mut(slot).map(std::mem::take).unwrap_or_default()
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn into_diagnostics(self) -> Vec<Diagnostic> {
        self.diagnostics
    }

    pub fn state(&self) -> &EvalState {
        &self.state
    }

    pub fn statements(&self) -> u64 {
        self.statements
    }
}

impl StatementSink for StreamingEvaluator {
    fn statement(&mut self, slot: usize, task: &TaskName, stmt: Stmt) {
        if self.accesses.len() <= slot {
            self.accesses.resize_with(slot + 1, AccessSet::new);
        }
        self.statements += 1;
        eval_stmt(&stmt, task, &mut self.state, &mut self.accesses[slot], &mut self.diagnostics);
    }
}
