//! Reconstruction of a process's call forest from caller links.
//!
//! Nodes live in an arena owned by [`CallForest`]; [`CallNode`] is a cheap
//! borrowed handle, so subtrees share structure with the forest and deep
//! call chains never need recursion to build, walk or drop.

use std::cmp::Ordering;
use std::collections::HashMap;

use thiserror::Error;

use crate::model::MethodCallRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("duplicate call_id `{0}`")]
    DuplicateCallId(String),
    #[error("caller chain forms a cycle: {}", .0.join(" -> "))]
    CyclicCallerChain(Vec<String>),
    #[error("record `{call_id}` belongs to process `{found}`, expected `{expected}`")]
    MixedProcesses { call_id: String, expected: String, found: String },
    #[error("unknown call_id `{0}`")]
    UnknownCallId(String),
}

#[derive(Debug, Clone)]
struct Slot {
    record: MethodCallRecord,
    parent: Option<usize>,
    children: Vec<usize>,
    orphan: bool,
}

/// Parent/child structure of one process execution.
#[derive(Debug, Clone)]
pub struct CallForest {
    process_id: String,
    slots: Vec<Slot>,
    roots: Vec<usize>,
    index: HashMap<String, usize>,
}

/// Borrowed view of one node and its descendants.
#[derive(Debug, Clone, Copy)]
pub struct CallNode<'a> {
    forest: &'a CallForest,
    idx: usize,
}

fn call_order(a: &MethodCallRecord, b: &MethodCallRecord) -> Ordering {
    a.started_at
        .cmp(&b.started_at)
        .then_with(|| a.call_id.cmp(&b.call_id))
}

/// Builds the forest for one process.
///
/// Records whose caller cannot be found become roots flagged as orphans.
pub fn build_forest(records: Vec<MethodCallRecord>) -> Result<CallForest, TreeError> {
    let process_id = records
        .first()
        .map(|r| r.process_id.clone())
        .unwrap_or_default();

    let mut index = HashMap::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.process_id != process_id {
            return Err(TreeError::MixedProcesses {
                call_id: r.call_id.clone(),
                expected: process_id,
                found: r.process_id.clone(),
            });
        }
        if index.insert(r.call_id.clone(), i).is_some() {
            return Err(TreeError::DuplicateCallId(r.call_id.clone()));
        }
    }

    let mut slots: Vec<Slot> = records
        .into_iter()
        .map(|record| Slot { record, parent: None, children: Vec::new(), orphan: false })
        .collect();
    for slot in &mut slots {
        if let Some(caller) = &slot.record.caller_id {
            match index.get(caller) {
                Some(&p) => slot.parent = Some(p),
                None => slot.orphan = true,
            }
        }
    }

    detect_cycles(&slots)?;

    let mut roots = Vec::new();
    for i in 0..slots.len() {
        match slots[i].parent {
            Some(p) => slots[p].children.push(i),
            None => roots.push(i),
        }
    }
    let sort = |ids: &mut Vec<usize>, slots: &[Slot]| {
        ids.sort_by(|&a, &b| call_order(&slots[a].record, &slots[b].record));
    };
    sort(&mut roots, &slots);
    for i in 0..slots.len() {
        let mut children = std::mem::take(&mut slots[i].children);
        sort(&mut children, &slots);
        slots[i].children = children;
    }

    Ok(CallForest { process_id, slots, roots, index })
}

/// Iterative ancestor walk; every node is visited O(1) times overall.
fn detect_cycles(slots: &[Slot]) -> Result<(), TreeError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Unseen,
        OnPath,
        Done,
    }
    let mut marks = vec![Mark::Unseen; slots.len()];
    let mut path = Vec::new();
    for start in 0..slots.len() {
        let mut cur = Some(start);
        path.clear();
        while let Some(i) = cur {
            match marks[i] {
                Mark::Done => break,
                Mark::OnPath => {
                    let from = path.iter().position(|&p| p == i).unwrap_or(0);
                    let ids: Vec<String> = path[from..]
                        .iter()
                        .map(|&p: &usize| slots[p].record.call_id.clone())
                        .collect();
                    return Err(TreeError::CyclicCallerChain(ids));
                }
                Mark::Unseen => {
                    marks[i] = Mark::OnPath;
                    path.push(i);
                    cur = slots[i].parent;
                }
            }
        }
        for &p in &path {
            marks[p] = Mark::Done;
        }
    }
    Ok(())
}

impl CallForest {
    pub fn process_id(&self) -> &str {
        &self.process_id
    }

    pub fn node_count(&self) -> usize {
        self.slots.len()
    }

    pub fn roots(&self) -> impl ExactSizeIterator<Item = CallNode<'_>> + '_ {
        self.roots.iter().map(move |&idx| CallNode { forest: self, idx })
    }

    pub fn get(&self, call_id: &str) -> Option<CallNode<'_>> {
        self.index.get(call_id).map(|&idx| CallNode { forest: self, idx })
    }

    /// The node for `root_call_id` together with all of its descendants.
    pub fn subtree(&self, root_call_id: &str) -> Result<CallNode<'_>, TreeError> {
        self.get(root_call_id)
            .ok_or_else(|| TreeError::UnknownCallId(root_call_id.to_owned()))
    }

    pub fn orphan_count(&self) -> usize {
        self.slots.iter().filter(|s| s.orphan).count()
    }

    /// Length of the longest root-to-leaf path, counting nodes.
    pub fn depth(&self) -> usize {
        self.roots().map(|r| r.height() + 1).max().unwrap_or(0)
    }
}

impl<'a> CallNode<'a> {
    pub fn record(&self) -> &'a MethodCallRecord {
        &self.forest.slots[self.idx].record
    }

    pub fn call_id(&self) -> &'a str {
        &self.record().call_id
    }

    pub fn is_orphan(&self) -> bool {
        self.forest.slots[self.idx].orphan
    }

    pub fn is_leaf(&self) -> bool {
        self.forest.slots[self.idx].children.is_empty()
    }

    pub fn children(&self) -> impl ExactSizeIterator<Item = CallNode<'a>> + 'a {
        let forest = self.forest;
        forest.slots[self.idx]
            .children
            .iter()
            .map(move |&idx| CallNode { forest, idx })
    }

    pub fn parent(&self) -> Option<CallNode<'a>> {
        self.forest.slots[self.idx]
            .parent
            .map(|idx| CallNode { forest: self.forest, idx })
    }

    /// Arena position; stable for the lifetime of the forest.
    pub fn index(&self) -> usize {
        self.idx
    }

    /// Pre-order walk of this subtree, each node paired with its depth
    /// relative to `self` (which is depth 0).
    pub fn preorder(&self) -> Preorder<'a> {
        Preorder { forest: self.forest, stack: vec![(self.idx, 0)] }
    }

    pub fn size(&self) -> usize {
        self.preorder().count()
    }

    /// Number of edges on the longest downward path.
    pub fn height(&self) -> usize {
        self.preorder().map(|(_, d)| d).max().unwrap_or(0)
    }
}

pub struct Preorder<'a> {
    forest: &'a CallForest,
    stack: Vec<(usize, usize)>,
}

impl<'a> Iterator for Preorder<'a> {
    type Item = (CallNode<'a>, usize);

    fn next(&mut self) -> Option<Self::Item> {
        let (idx, depth) = self.stack.pop()?;
        let children = &self.forest.slots[idx].children;
        self.stack.extend(children.iter().rev().map(|&c| (c, depth + 1)));
        Some((CallNode { forest: self.forest, idx }, depth))
    }
}

/// Pre-order records of the subtree; the node's own record comes first.
pub fn call_sequence<'a>(node: &CallNode<'a>) -> Vec<&'a MethodCallRecord> {
    node.preorder().map(|(n, _)| n.record()).collect()
}
