//! Linkage-tree family of subsets.
//!
//! Each template position is treated as a categorical random variable whose
//! sample is the population. Pairwise mutual information, normalized by the
//! joint entropy, feeds average-linkage agglomerative clustering; every
//! cluster it creates except the root becomes a crossover mask.

use std::fmt::Write as _;

use crate::expr::{Node, Tree};

/// Token shared by every constant, whatever its value.
pub const CONST_TOKEN: u32 = 8;

/// One categorical token per (member, slot).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolMatrix {
    rows: usize,
    cols: usize,
    tokens: Vec<u32>,
}

impl SymbolMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.tokens[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = u32> + '_ {
        (0..self.rows).map(move |r| self.get(r, col))
    }
}

pub fn token(node: &Node) -> u32 {
    match node {
        Node::Function(f) => f.id() as u32,
        Node::Constant { .. } => CONST_TOKEN,
        Node::Feature(j) => CONST_TOKEN + 1 + *j as u32,
    }
}

pub fn symbolize_population(population: &[Tree]) -> SymbolMatrix {
    let cols = population.first().map(Tree::len).unwrap_or(0);
    let mut tokens = Vec::with_capacity(population.len() * cols);
    for tree in population {
        assert_eq!(tree.len(), cols, "population must share one template");
        tokens.extend(tree.nodes().iter().map(token));
    }
    SymbolMatrix {
        rows: population.len(),
        cols,
        tokens,
    }
}

/// Symmetric `cols x cols` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = f(i, j);
            }
        }
        SimilarityMatrix { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Relabels a column to dense ids `0..k`.
fn densify(column: impl Iterator<Item = u32>) -> (Vec<usize>, usize) {
    let mut map: Vec<(u32, usize)> = Vec::new();
    let ids = column
        .map(|t| match map.iter().find(|(tok, _)| *tok == t) {
            Some(&(_, id)) => id,
            None => {
                map.push((t, map.len()));
                map.len() - 1
            }
        })
        .collect();
    (ids, map.len())
}

/// Mutual information divided by joint entropy, from plug-in frequencies.
/// Defined as 1 when the joint entropy is zero (both columns constant).
pub fn pairwise_nmi(tokens: &SymbolMatrix) -> SimilarityMatrix {
    let n = tokens.rows() as f64;
    let columns: Vec<(Vec<usize>, usize)> = (0..tokens.cols()).map(|c| densify(tokens.column(c))).collect();
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let marginal: Vec<f64> = columns
        .iter()
        .map(|(ids, k)| {
            let mut counts = vec![0usize; *k];
            for &id in ids {
                counts[id] += 1;
            }
            entropy(&counts)
        })
        .collect();

    let cols = tokens.cols();
    let mut values = vec![0.0; cols * cols];
    let mut joint_counts = Vec::new();
    for i in 0..cols {
        for j in i..cols {
            let (ids_i, ki) = &columns[i];
            let (ids_j, kj) = &columns[j];
            joint_counts.clear();
            joint_counts.resize(ki * kj, 0usize);
            for (&a, &b) in ids_i.iter().zip(ids_j) {
                joint_counts[a * kj + b] += 1;
            }
            let joint = entropy(&joint_counts);
            let nmi = if joint <= 0.0 {
                1.0
            } else {
                let mi = marginal[i] + marginal[j] - joint;
                (mi / joint).clamp(0.0, 1.0)
            };
            values[i * cols + j] = nmi;
            values[j * cols + i] = nmi;
        }
    }
    SimilarityMatrix { n: cols, values }
}

/// Family of subsets over slot indices, plus the merge history it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fos {
    subsets: Vec<Vec<usize>>,
    /// For each emitted non-singleton subset, the indices of the two subsets
    /// it was merged from. Singletons map to `None`.
    parents: Vec<Option<(usize, usize)>>,
    /// The two subsets merged into the excluded root, if any.
    root: Option<(usize, usize)>,
}

impl Fos {
    /// A plain FOS without dendrogram structure.
    pub fn from_subsets(subsets: Vec<Vec<usize>>) -> Fos {
        let parents = vec![None; subsets.len()];
        Fos {
            subsets,
            parents,
            root: None,
        }
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn parents(&self, subset: usize) -> Option<(usize, usize)> {
        self.parents[subset]
    }

    /// Dendrogram as nested lists, leaves being slot indices, e.g.
    /// `[[0, 3], [1, 2]]`. Falls back to the flat subset list when the FOS
    /// has no merge history.
    pub fn to_nested_string(&self) -> String {
        fn render(fos: &Fos, idx: usize, out: &mut String) {
            match fos.parents[idx] {
                None => {
                    let s = &fos.subsets[idx];
                    if s.len() == 1 {
                        let _ = write!(out, "{}", s[0]);
                    } else {
                        let _ = write!(out, "{s:?}");
                    }
                }
                Some((a, b)) => {
                    out.push('[');
                    render(fos, a, out);
                    out.push_str(", ");
                    render(fos, b, out);
                    out.push(']');
                }
            }
        }
        let mut out = String::new();
        match self.root {
            Some((a, b)) => {
                out.push('[');
                render(self, a, &mut out);
                out.push_str(", ");
                render(self, b, &mut out);
                out.push(']');
            }
            None => {
                let _ = write!(out, "{:?}", self.subsets);
            }
        }
        out
    }
}

struct Cluster {
    members: Vec<usize>,
    /// Index of this cluster's subset in the FOS under construction.
    fos_index: usize,
}

/// Average-linkage (UPGMA) agglomeration on a similarity matrix. Merges the
/// most similar pair first; ties go to the pair with the smallest
/// (min-member, min-member) key. Emits `2n - 2` subsets for `n >= 2`.
pub fn build_linkage_tree(similarity: &SimilarityMatrix) -> Fos {
    let n = similarity.len();
    let mut subsets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut parents: Vec<Option<(usize, usize)>> = vec![None; n];
    if n <= 1 {
        return Fos {
            subsets,
            parents,
            root: None,
        };
    }

    // Kept sorted by smallest member, so scanning pairs in order implements
    // the tie-break.
    let mut clusters: Vec<Cluster> = (0..n)
        .map(|i| Cluster {
            members: vec![i],
            fos_index: i,
        })
        .collect();
    // sim[a][b] between live clusters, indexed by position in `clusters`.
    let mut sim: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| similarity.get(i, j)).collect()).collect();
    let mut root = None;

    while clusters.len() > 1 {
        let mut best = (0, 1);
        let mut best_sim = f64::NEG_INFINITY;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                if sim[a][b] > best_sim {
                    best_sim = sim[a][b];
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        let size_a = clusters[a].members.len() as f64;
        let size_b = clusters[b].members.len() as f64;
        let merged_sim: Vec<f64> = (0..clusters.len())
            .map(|c| (size_a * sim[a][c] + size_b * sim[b][c]) / (size_a + size_b))
            .collect();

        let mut members: Vec<usize> = clusters[a].members.iter().chain(&clusters[b].members).copied().collect();
        members.sort_unstable();
        let pair = (clusters[a].fos_index, clusters[b].fos_index);

        if clusters.len() == 2 {
            root = Some(pair);
            break;
        }
        subsets.push(members.clone());
        parents.push(Some(pair));
        let merged = Cluster {
            members,
            fos_index: subsets.len() - 1,
        };

        // Replace `a` (it keeps the smaller min-member), drop `b`.
        clusters[a] = merged;
        for c in 0..clusters.len() {
            sim[a][c] = merged_sim[c];
            sim[c][a] = merged_sim[c];
        }
        clusters.remove(b);
        sim.remove(b);
        for row in sim.iter_mut() {
            row.remove(b);
        }
    }

    Fos {
        subsets,
        parents,
        root,
    }
}

/// Linkage tree of the current population.
pub fn linkage_tree_fos(population: &[Tree]) -> Fos {
    build_linkage_tree(&pairwise_nmi(&symbolize_population(population)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Function, Template};

    fn matrix(rows: &[&[u32]]) -> SymbolMatrix {
        SymbolMatrix {
            rows: rows.len(),
            cols: rows[0].len(),
            tokens: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    /// Direct plug-in mutual information over an explicit joint table.
    fn brute_mi(a: &[u32], b: &[u32]) -> (f64, f64) {
        let n = a.len() as f64;
        let mut ta: Vec<u32> = a.to_vec();
        ta.sort();
        ta.dedup();
        let mut tb: Vec<u32> = b.to_vec();
        tb.sort();
        tb.dedup();
        let mut mi = 0.0;
        let mut h = 0.0;
        for &x in &ta {
            for &y in &tb {
                let pxy = a.iter().zip(b).filter(|&(&u, &v)| u == x && v == y).count() as f64 / n;
                if pxy == 0.0 {
                    continue;
                }
                let px = a.iter().filter(|&&u| u == x).count() as f64 / n;
                let py = b.iter().filter(|&&v| v == y).count() as f64 / n;
                mi += pxy * (pxy / (px * py)).ln();
                h -= pxy * pxy.ln();
            }
        }
        (mi, h)
    }

    #[test]
    fn tokens_collapse_constants() {
        let t = Template::new(0, 2).unwrap();
        let a = Tree::new(t, vec![Node::Constant { value: 1.2, sigma: 1.0 }]).unwrap();
        let b = Tree::new(t, vec![Node::Constant { value: 3.4, sigma: 0.1 }]).unwrap();
        let m = symbolize_population(&[a, b]);
        assert_eq!(m.get(0, 0), m.get(1, 0));
    }

    #[test]
    fn tokens_distinguish_symbols() {
        let t = Template::new(1, 2).unwrap();
        let trees: Vec<Tree> = [Node::Function(Function::Add), Node::Function(Function::Sub), Node::Feature(0)]
            .into_iter()
            .map(|root| Tree::new(t, vec![root, Node::Feature(0), Node::Feature(0)]).unwrap())
            .collect();
        let m = symbolize_population(&trees);
        let mut col: Vec<u32> = m.column(0).collect();
        col.dedup();
        assert_eq!(col.len(), 3);
    }

    #[test]
    fn identical_population_gives_single_token_columns() {
        let t = Template::new(1, 2).unwrap();
        let tree = Tree::new(t, vec![Node::Function(Function::Add), Node::Feature(0), Node::Feature(1)]).unwrap();
        let m = symbolize_population(&vec![tree; 5]);
        for c in 0..3 {
            assert!(m.column(c).all(|tok| tok == m.get(0, c)));
        }
        let nmi = pairwise_nmi(&m);
        assert!((0..3).all(|i| (0..3).all(|j| nmi.get(i, j) == 1.0)));
    }

    #[test]
    fn nmi_cases() {
        let m = matrix(&[&[1, 1, 5, 2], &[2, 2, 5, 9], &[1, 1, 5, 9], &[3, 3, 5, 2]]);
        let nmi = pairwise_nmi(&m);
        assert!((nmi.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(nmi.get(0, 2), 0.0);
        assert_eq!(nmi.get(2, 2), 1.0);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(nmi.get(i, j), nmi.get(j, i));
                assert!((0.0..=1.0 + 1e-12).contains(&nmi.get(i, j)));
            }
        }
    }

    #[test]
    fn nmi_matches_brute_force_tables() {
        let a = [1, 1, 2, 2, 3, 1, 2, 3, 3, 1];
        let b = [7, 8, 7, 7, 8, 8, 7, 7, 8, 8];
        let rows: Vec<Vec<u32>> = a.iter().zip(&b).map(|(&x, &y)| vec![x, y]).collect();
        let rows: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
        let nmi = pairwise_nmi(&matrix(&rows));
        let (mi, h) = brute_mi(&a, &b);
        assert!((nmi.get(0, 1) - mi / h).abs() < 1e-12);
    }

    #[test]
    fn independent_columns_have_low_nmi() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<u32>> = (0..10_000)
            .map(|_| vec![rng.random_range(0..2), rng.random_range(0..2)])
            .collect();
        let rows: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
        assert!(pairwise_nmi(&matrix(&rows)).get(0, 1) < 0.02);
    }

    #[test]
    fn two_slots_give_two_singletons() {
        let sim = SimilarityMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { 0.3 });
        let fos = build_linkage_tree(&sim);
        assert_eq!(fos.subsets(), &[vec![0], vec![1]]);
        assert_eq!(fos.to_nested_string(), "[0, 1]");
    }

    #[test]
    fn dominant_pair_merges_first() {
        let sim = SimilarityMatrix::from_fn(4, |i, j| match (i.min(j), i.max(j)) {
            (a, b) if a == b => 1.0,
            (1, 3) => 0.9,
            (0, 2) => 0.4,
            _ => 0.1,
        });
        let fos = build_linkage_tree(&sim);
        assert_eq!(fos.len(), 6);
        assert_eq!(fos.subsets()[4], vec![1, 3]);
        assert_eq!(fos.subsets()[5], vec![0, 2]);
        assert_eq!(fos.to_nested_string(), "[[0, 2], [1, 3]]");
    }

    #[test]
    fn ties_prefer_smallest_pair() {
        let sim = SimilarityMatrix::from_fn(4, |i, j| if i == j { 1.0 } else { 0.5 });
        let fos = build_linkage_tree(&sim);
        assert_eq!(fos.subsets()[4], vec![0, 1]);
    }

    #[test]
    fn average_linkage_uses_mean_similarity() {
        // {0,1} merge first; then avg({0,1},2) = (0.8 + 0.0)/2 = 0.4 < sim(2,3) = 0.5
        let sim = SimilarityMatrix::from_fn(4, |i, j| match (i.min(j), i.max(j)) {
            (a, b) if a == b => 1.0,
            (0, 1) => 0.9,
            (0, 2) => 0.8,
            (2, 3) => 0.5,
            _ => 0.0,
        });
        let fos = build_linkage_tree(&sim);
        assert_eq!(fos.subsets()[4], vec![0, 1]);
        assert_eq!(fos.subsets()[5], vec![2, 3]);
    }

    #[test]
    fn seven_slots_give_twelve_subsets() {
        let sim = SimilarityMatrix::from_fn(7, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()));
        let fos = build_linkage_tree(&sim);
        assert_eq!(fos.len(), 12);
    }
}
