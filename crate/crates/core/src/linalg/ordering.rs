//! Fill-reducing symmetric ordering by recursive level-structure bisection.

use std::collections::VecDeque;

use super::sparse::SparseMatrix;

const LEAF_SIZE: usize = 48;

/// Nested-dissection permutation of the symmetrized pattern of `a`:
/// `perm[k]` is the original index placed at position `k`. Rows/columns whose
/// degree is far above average (e.g. Lagrange-multiplier rows) are ordered last.
/// Within every leaf and separator, indices with a zero diagonal follow the others,
/// so that saddle-point rows meet an already-updated diagonal.
pub fn nested_dissection(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows();
    let late: Vec<bool> = (0..n).map(|i| a.get(i, i) == 0.0).collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let dense_limit = 16usize.max((10.0 * (n as f64).sqrt()) as usize);
    let dense: Vec<bool> = adj.iter().map(|l| l.len() > dense_limit).collect();
    if dense.iter().any(|&d| d) {
        for list in &mut adj {
            list.retain(|&j| !dense[j]);
        }
    }
    let mut state = Dissector {
        adj: &adj,
        owner: vec![0; n],
        level: vec![usize::MAX; n],
        late: &late,
        next_owner: 1,
        order: Vec::with_capacity(n),
    };
    let sparse_nodes: Vec<usize> = (0..n).filter(|&v| !dense[v]).collect();
    for &v in &sparse_nodes {
        state.owner[v] = 1;
    }
    state.next_owner = 2;
    state.dissect(sparse_nodes, 1);
    state.order.extend((0..n).filter(|&v| dense[v]));
    state.order
}

struct Dissector<'a> {
    adj: &'a [Vec<usize>],
    owner: Vec<usize>,
    level: Vec<usize>,
    late: &'a [bool],
    next_owner: usize,
    order: Vec<usize>,
}

impl Dissector<'_> {
    fn emit(&mut self, nodes: Vec<usize>) {
        let late = self.late;
        self.order.extend(nodes.iter().copied().filter(|&v| !late[v]));
        self.order.extend(nodes.into_iter().filter(|&v| late[v]));
    }

    fn fresh_owner(&mut self, nodes: &[usize]) -> usize {
        let id = self.next_owner;
        self.next_owner += 1;
        for &v in nodes {
            self.owner[v] = id;
        }
        id
    }

    /// BFS restricted to nodes with the given owner; returns level sets.
    fn bfs_levels(&mut self, root: usize, id: usize, nodes: &[usize]) -> Vec<Vec<usize>> {
        for &v in nodes {
            self.level[v] = usize::MAX;
        }
        let mut levels = vec![vec![root]];
        self.level[root] = 0;
        loop {
            let mut next = Vec::new();
            for &v in levels.last().unwrap() {
                for &w in &self.adj[v] {
                    if self.owner[w] == id && self.level[w] == usize::MAX {
                        self.level[w] = levels.len();
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    }

    fn components(&mut self, nodes: &[usize], id: usize) -> Vec<Vec<usize>> {
        for &v in nodes {
            self.level[v] = usize::MAX;
        }
        let mut comps = Vec::new();
        for &s in nodes {
            if self.level[s] != usize::MAX {
                continue;
            }
            self.level[s] = 0;
            let mut comp = vec![s];
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adj[v] {
                    if self.owner[w] == id && self.level[w] == usize::MAX {
                        self.level[w] = 0;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    fn dissect(&mut self, nodes: Vec<usize>, id: usize) {
        if nodes.len() <= LEAF_SIZE {
            self.emit(nodes);
            return;
        }
        let comps = self.components(&nodes, id);
        if comps.len() > 1 {
            for comp in comps {
                let cid = self.fresh_owner(&comp);
                self.dissect(comp, cid);
            }
            return;
        }
        // Pseudo-peripheral root.
        let mut levels = self.bfs_levels(nodes[0], id, &nodes);
        for _ in 0..4 {
            let last = levels.last().unwrap();
            let cand = *last.iter().min_by_key(|&&v| self.adj[v].len()).unwrap();
            let trial = self.bfs_levels(cand, id, &nodes);
            if trial.len() > levels.len() {
                levels = trial;
            } else {
                break;
            }
        }
        if levels.len() < 3 {
            self.emit(nodes);
            return;
        }
        let half = nodes.len() / 2;
        let mut acc = 0;
        let mut split = 1;
        for (s, lv) in levels.iter().enumerate() {
            acc += lv.len();
            if acc >= half {
                split = s.clamp(1, levels.len() - 2);
                break;
            }
        }
        // A rejected trial BFS may have overwritten the level marks.
        for (s, lv) in levels.iter().enumerate() {
            for &v in lv {
                self.level[v] = s;
            }
        }
        let mut part_a = Vec::new();
        let mut part_b = Vec::new();
        let mut separator = Vec::new();
        for (s, lv) in levels.iter().enumerate() {
            for &v in lv {
                if s < split {
                    part_a.push(v);
                } else if s > split {
                    part_b.push(v);
                } else if self.adj[v]
                    .iter()
                    .any(|&w| self.owner[w] == id && self.level[w] == split + 1)
                {
                    separator.push(v);
                } else {
                    part_a.push(v);
                }
            }
        }
        let ida = self.fresh_owner(&part_a);
        let idb = self.fresh_owner(&part_b);
        self.fresh_owner(&separator);
        self.dissect(part_a, ida);
        self.dissect(part_b, idb);
        self.emit(separator);
    }
}
