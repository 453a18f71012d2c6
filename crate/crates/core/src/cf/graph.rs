use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CfError;
use crate::model::{Label, ParticipantId, PermissionDecision, RequestKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub user: usize,
    pub request: usize,
    pub label: Label,
}

/// Bipartite user/request graph with one signed edge per observed answer.
///
/// Node numbering for propagation puts users first: user `u` is node `u`,
/// request `r` is node `users.len() + r`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub users: Vec<ParticipantId>,
    pub requests: Vec<RequestKey>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    user_index: HashMap<ParticipantId, usize>,
    #[serde(skip)]
    request_index: HashMap<RequestKey, usize>,
    /// Neighbor node ids per node, in edge insertion order.
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

impl InteractionGraph {
    /// Builds the graph from standing answers; one-time answers carry no
    /// label and are skipped. Repeats with the same label collapse, while
    /// conflicting labels for one (user, request) are rejected.
    pub fn build<'a, I>(train: I) -> Result<Self, CfError>
    where
        I: IntoIterator<Item = &'a PermissionDecision>,
    {
        let mut g = InteractionGraph::default();
        let mut seen: HashMap<(usize, usize), Label> = HashMap::new();
        for d in train {
            let Some(label) = d.binary_label() else { continue };
            let user = match g.user_index.get(&d.participant_id) {
                Some(&i) => i,
                None => {
                    g.users.push(d.participant_id.clone());
                    g.user_index.insert(d.participant_id.clone(), g.users.len() - 1);
                    g.users.len() - 1
                }
            };
            let key = d.request_key();
            let request = match g.request_index.get(&key) {
                Some(&i) => i,
                None => {
                    g.requests.push(key.clone());
                    g.request_index.insert(key, g.requests.len() - 1);
                    g.requests.len() - 1
                }
            };
            match seen.get(&(user, request)) {
                Some(&prev) if prev == label => continue,
                Some(_) => {
                    return Err(CfError::DuplicateObservation {
                        user: d.participant_id.clone(),
                        request: d.request_key(),
                    })
                }
                None => {
                    seen.insert((user, request), label);
                    g.edges.push(Edge { user, request, label });
                }
            }
        }
        g.rebuild_adjacency();
        Ok(g)
    }

    fn rebuild_adjacency(&mut self) {
        let nu = self.users.len();
        let mut adjacency = vec![Vec::new(); self.node_count()];
        for e in &self.edges {
            adjacency[e.user].push(nu + e.request);
            adjacency[nu + e.request].push(e.user);
        }
        self.adjacency = adjacency;
    }

    /// Restores lookup tables after deserialization.
    pub fn reindex(&mut self) {
        self.user_index = self.users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        self.request_index = self.requests.iter().enumerate().map(|(i, r)| (r.clone(), i)).collect();
        self.rebuild_adjacency();
    }

    pub fn node_count(&self) -> usize {
        self.users.len() + self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn user_node(&self, user: &ParticipantId) -> Option<usize> {
        self.user_index.get(user).copied()
    }

    pub fn request_node(&self, key: &RequestKey) -> Option<usize> {
        self.request_index.get(key).map(|r| r + self.users.len())
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::decision;
    use crate::model::DecisionOption::*;

    #[test]
    fn counts_nodes_and_edges() {
        let train = vec![
            decision("a", 0, "ssn", AlwaysShare),
            decision("a", 0, "hobbies", NeverShare),
            decision("b", 0, "ssn", AlwaysShare),
            decision("b", 1, "ssn", YesOnce),
        ];
        let g = InteractionGraph::build(&train).unwrap();
        assert_eq!((g.users.len(), g.requests.len(), g.edges.len()), (2, 2, 3));
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edges[0].label.sign(), 1.0);
        assert_eq!(g.edges[1].label.sign(), -1.0);
        let ssn = g.request_node(&train[0].request_key()).unwrap();
        assert_eq!(g.degree(ssn), 2);
    }

    #[test]
    fn conflicting_labels_are_rejected() {
        let train = vec![decision("a", 0, "ssn", AlwaysShare), decision("a", 0, "ssn", NeverShare)];
        assert!(matches!(InteractionGraph::build(&train), Err(CfError::DuplicateObservation { .. })));
        let same = vec![decision("a", 0, "ssn", AlwaysShare), decision("a", 0, "ssn", AlwaysShare)];
        assert_eq!(InteractionGraph::build(&same).unwrap().edges.len(), 1);
    }

    #[test]
    fn reindex_restores_lookups() {
        let train = vec![decision("a", 0, "ssn", AlwaysShare), decision("b", 1, "ssn", NeverShare)];
        let g = InteractionGraph::build(&train).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let mut back: InteractionGraph = serde_json::from_str(&json).unwrap();
        back.reindex();
        assert_eq!(back.user_node(&"b".into()), g.user_node(&"b".into()));
        assert_eq!(back.neighbors(0), g.neighbors(0));
    }
}
