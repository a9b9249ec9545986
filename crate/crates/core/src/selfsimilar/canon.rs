//! Canonical forms of small graphs with marked vertices.
//!
//! Colour refinement followed by individualization of every vertex of the
//! first non-singleton cell; the canonical form is the least edge encoding
//! over all leaves of the search tree. Exponential in the worst case, which
//! is fine for the radius-`r` balls this is used on.

use serde::Serialize;

use crate::lattice::SimpleGraph;

/// Isomorphism invariant of a graph together with an ordered list of marks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CanonicalForm {
    pub vertices: usize,
    /// Canonical labels of the marked vertices.
    pub marks: Vec<usize>,
    /// Edges `(u, v)`, `u < v`, in canonical labels, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl CanonicalForm {
    pub fn graph(&self) -> SimpleGraph {
        SimpleGraph::new(self.vertices, self.edges.iter().copied())
    }

    /// Compact text key, e.g. `n3;m1;0-1,1-2`.
    pub fn key(&self) -> String {
        let marks: Vec<String> = self.marks.iter().map(|m| m.to_string()).collect();
        let edges: Vec<String> = self.edges.iter().map(|(u, v)| format!("{u}-{v}")).collect();
        format!("n{};m{};{}", self.vertices, marks.join(","), edges.join(","))
    }
}

pub fn canonical_form(g: &SimpleGraph, marks: &[usize]) -> CanonicalForm {
    let n = g.vertex_count();
    let signatures: Vec<Vec<usize>> = (0..n)
        .map(|v| (0..marks.len()).filter(|&k| marks[k] == v).collect())
        .collect();
    let colours = refine(g, rank(&signatures));
    let mut best = None;
    search(g, colours, marks, &mut best);
    best.unwrap_or(CanonicalForm {
        vertices: 0,
        marks: vec![],
        edges: vec![],
    })
}

/// Replaces each item by the rank of its value among the distinct values.
fn rank<T: Ord + Clone>(items: &[T]) -> Vec<usize> {
    let mut distinct = items.to_vec();
    distinct.sort();
    distinct.dedup();
    items
        .iter()
        .map(|x| distinct.binary_search(x).expect("present"))
        .collect()
}

fn cell_count(colours: &[usize]) -> usize {
    colours.iter().max().map_or(0, |&m| m + 1)
}

/// Iterated 1-dimensional Weisfeiler–Leman refinement. Colours keep the
/// order of the cells they split from.
fn refine(g: &SimpleGraph, mut colours: Vec<usize>) -> Vec<usize> {
    loop {
        let signatures: Vec<(usize, Vec<usize>)> = (0..g.vertex_count())
            .map(|v| {
                let mut around: Vec<usize> = g.neighbors(v).iter().map(|&w| colours[w]).collect();
                around.sort_unstable();
                (colours[v], around)
            })
            .collect();
        let next = rank(&signatures);
        if cell_count(&next) == cell_count(&colours) {
            return next;
        }
        colours = next;
    }
}

fn search(g: &SimpleGraph, colours: Vec<usize>, marks: &[usize], best: &mut Option<CanonicalForm>) {
    let n = g.vertex_count();
    let cells = cell_count(&colours);
    if cells == n {
        let mut edges: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .map(|&(u, v)| {
                let (a, b) = (colours[u], colours[v]);
                (a.min(b), a.max(b))
            })
            .collect();
        edges.sort_unstable();
        let form = CanonicalForm {
            vertices: n,
            marks: marks.iter().map(|&m| colours[m]).collect(),
            edges,
        };
        if best.as_ref().is_none_or(|b| form < *b) {
            *best = Some(form);
        }
        return;
    }
    let mut sizes = vec![0usize; cells];
    for &c in &colours {
        sizes[c] += 1;
    }
    let target = sizes.iter().position(|&s| s > 1).expect("some cell is not a singleton");
    for v in (0..n).filter(|&v| colours[v] == target) {
        let split: Vec<usize> = (0..n)
            .map(|u| 2 * colours[u] + usize::from(!(u == v)))
            .collect();
        search(g, refine(g, rank(&split)), marks, best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn relabel(g: &SimpleGraph, perm: &[usize]) -> SimpleGraph {
        SimpleGraph::new(g.vertex_count(), g.edges().iter().map(|&(u, v)| (perm[u], perm[v])))
    }

    fn path(n: usize) -> SimpleGraph {
        SimpleGraph::new(n, (1..n).map(|v| (v - 1, v)))
    }

    #[test]
    fn invariant_under_relabelling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let graphs = [
            path(5),
            SimpleGraph::new(6, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)]),
            // Petersen graph: vertex-transitive, a stress case for refinement.
            SimpleGraph::new(
                10,
                [
                    (0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 5), (1, 6), (2, 7), (3, 8),
                    (4, 9), (5, 7), (7, 9), (9, 6), (6, 8), (8, 5),
                ],
            ),
        ];
        for g in &graphs {
            let n = g.vertex_count();
            for marks in [vec![], vec![0], vec![0, 2]] {
                let base = canonical_form(g, &marks);
                for _ in 0..10 {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng);
                    let h = relabel(g, &perm);
                    let m: Vec<usize> = marks.iter().map(|&x| perm[x]).collect();
                    assert_eq!(canonical_form(&h, &m), base);
                }
            }
        }
    }

    #[test]
    fn separates_non_isomorphic() {
        let star = SimpleGraph::new(4, [(0, 1), (0, 2), (0, 3)]);
        assert_ne!(canonical_form(&path(4), &[]), canonical_form(&star, &[]));
        // Same graph, roots of different degree.
        assert_ne!(canonical_form(&path(3), &[0]), canonical_form(&path(3), &[1]));
        // Two 3-regular graphs on 6 vertices: prism and K_{3,3}.
        let prism = SimpleGraph::new(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (0, 3), (1, 4), (2, 5)]);
        let k33 = SimpleGraph::new(6, (0..3).flat_map(|a| (3..6).map(move |b| (a, b))));
        assert_ne!(canonical_form(&prism, &[]), canonical_form(&k33, &[]));
        // Mark order matters.
        assert_ne!(canonical_form(&path(3), &[0, 1]), canonical_form(&path(3), &[1, 0]));
        assert_eq!(canonical_form(&path(3), &[0, 1]), canonical_form(&path(3), &[2, 1]));
    }

    #[test]
    fn graph_round_trip() {
        let f = canonical_form(&path(4), &[1]);
        let g = f.graph();
        assert_eq!(canonical_form(&g, &f.marks), f);
        assert_eq!(f.vertices, 4);
        assert!(f.key().starts_with("n4;m"));
    }
}
