//! Minimal join trees over the foreign-key graph.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::schema::{FkLink, JoinGraph, Name};

/// Tables reached from `anchor`, each added through one foreign-key link to
/// a table already on the path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinPath {
    pub anchor: Name,
    pub joins: Vec<(Name, FkLink)>,
}

impl JoinPath {
    pub fn tables(&self) -> Vec<Name> {
        std::iter::once(self.anchor.clone()).chain(self.joins.iter().map(|(t, _)| t.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JoinInferenceError {
    #[error("no tables to join")]
    Empty,
    #[error("tables not in the schema: {}", .0.join(", "))]
    UnknownTables(Vec<String>),
    #[error("tables cannot be connected through foreign keys; components: {}", format_components(.0))]
    Disconnected(Vec<Vec<String>>),
}

fn format_components(components: &[Vec<String>]) -> String {
    components.iter().map(|c| format!("{{{}}}", c.join(", "))).collect::<Vec<_>>().join(" ")
}

/// Exact Steiner tree: the fewest tables that connect `required`.
/// Among equally small sets the lexicographically smallest sorted table list
/// wins. The path starts at the smallest required table and grows
/// breadth-first in adjacency order.
pub fn infer_join_path(required: &BTreeSet<Name>, graph: &JoinGraph) -> Result<JoinPath, JoinInferenceError> {
    let anchor = required.iter().next().ok_or(JoinInferenceError::Empty)?.clone();
    let unknown: Vec<String> = required.iter().filter(|t| !graph.contains(t)).map(|t| t.to_string()).collect();
    if !unknown.is_empty() {
        return Err(JoinInferenceError::UnknownTables(unknown));
    }
    // Canonical spellings from the graph.
    let required: BTreeSet<Name> = required.iter().map(|t| graph.node(t.as_str()).expect("checked").clone()).collect();
    let anchor = graph.node(anchor.as_str()).expect("checked").clone();
    let components = components_of(&required, graph);
    if components.len() > 1 {
        return Err(JoinInferenceError::Disconnected(components));
    }

    let optional: Vec<Name> = graph.nodes().filter(|n| !required.contains(*n)).cloned().collect();
    let mut chosen: Option<BTreeSet<Name>> = None;
    'sizes: for extra in 0..=optional.len() {
        // Combinations come out in lexicographic order of index tuples, but a
        // smaller sorted union can come from a later tuple, so compare all.
        let mut best: Option<BTreeSet<Name>> = None;
        for combo in Combinations::new(optional.len(), extra) {
            let mut set = required.clone();
            set.extend(combo.iter().map(|&i| optional[i].clone()));
            if is_connected(&set, graph) && best.as_ref().is_none_or(|b| set.iter().lt(b.iter())) {
                best = Some(set);
            }
        }
        if best.is_some() {
            chosen = best;
            break 'sizes;
        }
    }
    let nodes = chosen.expect("required tables are connected, so the whole graph component works");
    Ok(spanning_path(anchor, &nodes, graph))
}

fn spanning_path(anchor: Name, nodes: &BTreeSet<Name>, graph: &JoinGraph) -> JoinPath {
    let mut seen: BTreeSet<Name> = BTreeSet::from([anchor.clone()]);
    let mut queue = VecDeque::from([anchor.clone()]);
    let mut joins = Vec::new();
    while let Some(t) = queue.pop_front() {
        for edge in graph.neighbors(&t) {
            if nodes.contains(&edge.neighbor) && seen.insert(edge.neighbor.clone()) {
                joins.push((edge.neighbor.clone(), edge.link.clone()));
                queue.push_back(edge.neighbor.clone());
            }
        }
    }
    JoinPath { anchor, joins }
}

fn is_connected(nodes: &BTreeSet<Name>, graph: &JoinGraph) -> bool {
    let Some(start) = nodes.iter().next() else { return true };
    let mut seen: BTreeSet<&Name> = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(t) = stack.pop() {
        for edge in graph.neighbors(t) {
            if let Some(n) = nodes.get(&edge.neighbor) {
                if seen.insert(n) {
                    stack.push(n);
                }
            }
        }
    }
    seen.len() == nodes.len()
}

/// Groups required tables by their connected component in the full graph.
fn components_of(required: &BTreeSet<Name>, graph: &JoinGraph) -> Vec<Vec<String>> {
    let mut assigned: BTreeSet<Name> = BTreeSet::new();
    let mut out = Vec::new();
    for start in required {
        if assigned.contains(start) {
            continue;
        }
        let mut seen = BTreeSet::from([start.clone()]);
        let mut stack = vec![start.clone()];
        while let Some(t) = stack.pop() {
            for edge in graph.neighbors(&t) {
                if seen.insert(edge.neighbor.clone()) {
                    stack.push(edge.neighbor.clone());
                }
            }
        }
        let members: Vec<String> = required.iter().filter(|r| seen.contains(*r)).map(|r| r.to_string()).collect();
        assigned.extend(required.iter().filter(|r| seen.contains(*r)).cloned());
        out.push(members);
    }
    out
}

/// k-subsets of 0..n in lexicographic order.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self { n, idx: (0..k).collect(), done: k > n }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::test_support::*;
    use crate::schema::{fk_join_graph, SchemaCatalog};

    fn names(list: &[&str]) -> BTreeSet<Name> {
        list.iter().map(|s| Name::new(*s)).collect()
    }

    #[test]
    fn combinations_enumerate_lexicographically() {
        let all: Vec<Vec<usize>> = Combinations::new(4, 2).collect();
        assert_eq!(all, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]);
        assert_eq!(Combinations::new(3, 0).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }

    #[test]
    fn schools_and_satscores_join_on_cds() {
        let g = fk_join_graph(&schools_catalog());
        let path = infer_join_path(&names(&["schools", "satscores"]), &g).unwrap();
        assert_eq!(path.anchor.as_str(), "satscores");
        assert_eq!(path.joins.len(), 1);
        let (t, link) = &path.joins[0];
        assert_eq!(t.as_str(), "schools");
        assert_eq!(link.from.to_string(), "satscores.cds");
        assert_eq!(link.to.to_string(), "schools.CDSCode");
    }

    #[test]
    fn single_table_has_no_joins() {
        let g = fk_join_graph(&schools_catalog());
        let path = infer_join_path(&names(&["frpm"]), &g).unwrap();
        assert!(path.joins.is_empty());
    }

    #[test]
    fn chain_pulls_in_the_middle_table() {
        let cat = SchemaCatalog::new(
            "x",
            vec![table("a", &["id", "b_id"], &[]), table("b", &["id", "c_id"], &[]), table("c", &["id"], &[])],
            vec![fk("a.b_id", "b.id"), fk("b.c_id", "c.id")],
        )
        .unwrap();
        let path = infer_join_path(&names(&["a", "c"]), &fk_join_graph(&cat)).unwrap();
        let tables: Vec<&str> = path.joins.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(tables, ["b", "c"]);
    }

    #[test]
    fn ties_pick_smallest_intermediate() {
        // a and d connect through either b or c
        let cat = SchemaCatalog::new(
            "x",
            vec![table("a", &["id"], &[]), table("b", &["a", "d"], &[]), table("c", &["a", "d"], &[]), table("d", &["id"], &[])],
            vec![fk("b.a", "a.id"), fk("b.d", "d.id"), fk("c.a", "a.id"), fk("c.d", "d.id")],
        )
        .unwrap();
        let path = infer_join_path(&names(&["d", "a"]), &fk_join_graph(&cat)).unwrap();
        assert_eq!(path.tables(), vec![Name::new("a"), Name::new("b"), Name::new("d")]);
    }

    #[test]
    fn parallel_links_use_the_first_column() {
        let cat = SchemaCatalog::new(
            "x",
            vec![table("hero", &["id", "hair_colour_id", "eye_colour_id"], &[]), table("colour", &["id"], &[])],
            vec![fk("hero.hair_colour_id", "colour.id"), fk("hero.eye_colour_id", "colour.id")],
        )
        .unwrap();
        let path = infer_join_path(&names(&["hero", "colour"]), &fk_join_graph(&cat)).unwrap();
        assert_eq!(path.joins.len(), 1);
        assert_eq!(path.joins[0].1.from.to_string(), "hero.eye_colour_id");
    }

    #[test]
    fn disconnected_tables_are_reported() {
        let cat = SchemaCatalog::new("x", vec![table("a", &["id"], &[]), table("b", &["id"], &[])], vec![]).unwrap();
        let err = infer_join_path(&names(&["a", "b"]), &fk_join_graph(&cat)).unwrap_err();
        assert_eq!(err, JoinInferenceError::Disconnected(vec![vec!["a".into()], vec!["b".into()]]));
        assert!(matches!(
            infer_join_path(&names(&["zzz"]), &fk_join_graph(&cat)),
            Err(JoinInferenceError::UnknownTables(_))
        ));
    }
}
