use std::collections::BTreeMap;

use super::{FkLink, Name, SchemaCatalog};

/// One adjacency entry: the neighbouring table and the link that reaches it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinEdge {
    pub neighbor: Name,
    pub link: FkLink,
}

/// Undirected multigraph over tables with one edge per foreign key.
/// Adjacency lists are sorted by neighbour table, then by column.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JoinGraph {
    adjacency: BTreeMap<Name, Vec<JoinEdge>>,
    edge_count: usize,
}

impl JoinGraph {
    pub fn nodes(&self) -> impl Iterator<Item = &Name> {
        self.adjacency.keys()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains(&self, table: &Name) -> bool {
        self.adjacency.contains_key(table)
    }

    pub fn neighbors(&self, table: &Name) -> &[JoinEdge] {
        self.adjacency.get(table).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Graph spelling of a table name.
    pub fn node(&self, table: &str) -> Option<&Name> {
        self.adjacency.get_key_value(&Name::new(table)).map(|(k, _)| k)
    }

    /// Builds a graph directly from table names and links.
    pub fn from_parts(tables: impl IntoIterator<Item = Name>, links: impl IntoIterator<Item = FkLink>) -> Self {
        let mut adjacency: BTreeMap<Name, Vec<JoinEdge>> = tables.into_iter().map(|t| (t, Vec::new())).collect();
        let mut edge_count = 0;
        for link in links {
            edge_count += 1;
            adjacency
                .entry(link.from.table.clone())
                .or_default()
                .push(JoinEdge { neighbor: link.to.table.clone(), link: link.clone() });
            adjacency
                .entry(link.to.table.clone())
                .or_default()
                .push(JoinEdge { neighbor: link.from.table.clone(), link });
        }
        for edges in adjacency.values_mut() {
            edges.sort_by(|a, b| {
                a.neighbor
                    .cmp(&b.neighbor)
                    .then_with(|| a.link.from.column.cmp(&b.link.from.column))
                    .then_with(|| a.link.to.column.cmp(&b.link.to.column))
                    .then_with(|| a.link.cmp(&b.link))
            });
        }
        Self { adjacency, edge_count }
    }
}

pub fn fk_join_graph(catalog: &SchemaCatalog) -> JoinGraph {
    JoinGraph::from_parts(catalog.tables.iter().map(|t| t.name.clone()), catalog.foreign_keys.iter().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::test_support::*;
    use std::collections::VecDeque;

    fn bfs_distance(g: &JoinGraph, from: &str, to: &str) -> Option<usize> {
        let start = g.node(from)?.clone();
        let mut seen = vec![start.clone()];
        let mut queue = VecDeque::from([(start, 0)]);
        while let Some((n, d)) = queue.pop_front() {
            if n == Name::new(to) {
                return Some(d);
            }
            for e in g.neighbors(&n) {
                if !seen.contains(&e.neighbor) {
                    seen.push(e.neighbor.clone());
                    queue.push_back((e.neighbor.clone(), d + 1));
                }
            }
        }
        None
    }

    #[test]
    fn no_foreign_keys_means_no_edges() {
        let cat = SchemaCatalog::new("x", vec![table("a", &["id"], &[]), table("b", &["id"], &[])], vec![]).unwrap();
        let g = fk_join_graph(&cat);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn schools_and_satscores_share_one_edge() {
        let cat = schools_catalog();
        let g = fk_join_graph(&cat);
        assert_eq!(g.node_count(), cat.table_count());
        assert_eq!(g.edge_count(), cat.foreign_keys.len());
        let sat = g.neighbors(&Name::new("satscores"));
        assert_eq!(sat.len(), 1);
        assert_eq!(sat[0].neighbor, Name::new("schools"));
        assert_eq!(sat[0].link.to.column.as_str(), "CDSCode");
        // adjacency of schools is alphabetical: frpm before satscores
        let schools: Vec<&str> = g.neighbors(&Name::new("schools")).iter().map(|e| e.neighbor.as_str()).collect();
        assert_eq!(schools, ["frpm", "satscores"]);
    }

    #[test]
    fn chain_endpoints_are_two_hops_apart() {
        let cat = SchemaCatalog::new(
            "x",
            vec![table("a", &["id", "b_id"], &[]), table("b", &["id", "c_id"], &[]), table("c", &["id"], &[])],
            vec![fk("a.b_id", "b.id"), fk("b.c_id", "c.id")],
        )
        .unwrap();
        let g = fk_join_graph(&cat);
        assert_eq!(bfs_distance(&g, "a", "c"), Some(2));
        assert_eq!(bfs_distance(&g, "a", "b"), Some(1));
    }
}
