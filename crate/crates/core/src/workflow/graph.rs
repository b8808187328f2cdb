use std::collections::{BTreeSet, HashMap};

use crate::forms::{
    validate_workflow_form, ActionType, Diagnostic, Event, RegistryView, WorkflowForm,
};

use super::WorkflowError;

/// Treats every tool and agent as present; only structural rules remain.
struct Structural;

impl RegistryView for Structural {
    fn has_tool(&self, _: &str) -> bool {
        true
    }
    fn has_agent(&self, _: &str) -> bool {
        true
    }
    fn has_workflow(&self, _: &str) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct EventGraph {
    form: WorkflowForm,
    index: HashMap<String, usize>,
    /// source → listeners, in document order.
    listen_edges: Vec<Vec<usize>>,
    goto_edges: Vec<(String, String)>,
    topo: Vec<usize>,
}

impl EventGraph {
    pub fn form(&self) -> &WorkflowForm {
        &self.form
    }

    pub fn len(&self) -> usize {
        self.form.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.form.events.is_empty()
    }

    pub fn event(&self, name: &str) -> Option<&Event> {
        self.index.get(name).map(|&i| &self.form.events[i])
    }

    pub(crate) fn idx(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub(crate) fn event_at(&self, i: usize) -> &Event {
        &self.form.events[i]
    }

    pub fn listeners(&self, name: &str) -> Vec<&str> {
        match self.index.get(name) {
            Some(&i) => self.listen_edges[i]
                .iter()
                .map(|&j| self.form.events[j].name.as_str())
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn listen_edges(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for (i, targets) in self.listen_edges.iter().enumerate() {
            for &j in targets {
                out.push((self.form.events[i].name.as_str(), self.form.events[j].name.as_str()));
            }
        }
        out
    }

    pub fn goto_edges(&self) -> &[(String, String)] {
        &self.goto_edges
    }

    pub fn topo_order(&self) -> Vec<&str> {
        self.topo.iter().map(|&i| self.form.events[i].name.as_str()).collect()
    }

    pub(crate) fn topo_indices(&self) -> &[usize] {
        &self.topo
    }

    /// `name` plus every event reachable from it along listen edges.
    pub fn forward_closure(&self, name: &str) -> BTreeSet<String> {
        let Some(&start) = self.index.get(name) else {
            return BTreeSet::new();
        };
        self.closure_of(start)
            .into_iter()
            .map(|i| self.form.events[i].name.clone())
            .collect()
    }

    pub(crate) fn closure_of(&self, start: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for &j in &self.listen_edges[i] {
                if seen.insert(j) {
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// Events that publish `key` through a RESULT output.
    pub(crate) fn producers(&self, key: &str) -> impl Iterator<Item = usize> + '_ {
        let key = key.to_string();
        self.form.events.iter().enumerate().filter_map(move |(i, e)| {
            e.outputs
                .iter()
                .any(|o| o.key == key && o.action.kind == ActionType::Result)
                .then_some(i)
        })
    }
}

/// Builds the event graph of a structurally valid form.
pub fn compile_graph(form: &WorkflowForm) -> Result<EventGraph, WorkflowError> {
    let diags: Vec<Diagnostic> = validate_workflow_form(form, &Structural);
    if !diags.is_empty() {
        return Err(WorkflowError::InvalidForm(diags));
    }
    let n = form.events.len();
    let index: HashMap<String, usize> = form
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| (e.name.clone(), i))
        .collect();
    let mut listen_edges = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for (j, e) in form.events.iter().enumerate() {
        for l in &e.listen {
            let i = index[l.as_str()];
            listen_edges[i].push(j);
            indegree[j] += 1;
        }
    }
    for targets in &mut listen_edges {
        targets.sort_unstable();
    }
    let goto_edges = form
        .events
        .iter()
        .flat_map(|e| {
            e.outputs.iter().filter_map(move |o| match (&o.action.kind, &o.action.value) {
                (ActionType::Goto, Some(t)) => Some((e.name.clone(), t.clone())),
                _ => None,
            })
        })
        .collect();

    // Kahn's algorithm, always taking the lowest document index among ready nodes.
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut topo = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        topo.push(i);
        for &j in &listen_edges[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert(j);
            }
        }
    }
    Ok(EventGraph {
        form: form.clone(),
        index,
        listen_edges,
        goto_edges,
        topo,
    })
}
