use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};

/// Maximal sub-graph in which every user and every item has degree >= `k`,
/// computed by queue-driven pruning to a fixpoint. Surviving edges keep their
/// input order; duplicate pairs are dropped.
pub fn k_core_filter(edges: &[(u32, u32)], k: usize) -> Result<Vec<(u32, u32)>> {
    if k == 0 {
        return Err(Error::Config("k-core requires k >= 1".into()));
    }
    let mut seen = HashSet::with_capacity(edges.len());
    let edges: Vec<(u32, u32)> = edges.iter().copied().filter(|e| seen.insert(*e)).collect();

    // node key: users even, items odd
    let key = |u: u32, side: u32| ((u as u64) << 1) | side as u64;
    let mut incident: HashMap<u64, Vec<usize>> = HashMap::new();
    for (e, &(u, v)) in edges.iter().enumerate() {
        incident.entry(key(u, 0)).or_default().push(e);
        incident.entry(key(v, 1)).or_default().push(e);
    }
    let mut degree: HashMap<u64, usize> = incident.iter().map(|(&n, es)| (n, es.len())).collect();
    let mut alive = vec![true; edges.len()];

    let mut queue: VecDeque<u64> = {
        let mut low: Vec<u64> = degree.iter().filter(|(_, &d)| d < k).map(|(&n, _)| n).collect();
        low.sort_unstable();
        low.into()
    };
    let mut removed: HashSet<u64> = queue.iter().copied().collect();
    while let Some(node) = queue.pop_front() {
        for &e in &incident[&node] {
            if !alive[e] {
                continue;
            }
            alive[e] = false;
            let (u, v) = edges[e];
            let other = if node & 1 == 0 { key(v, 1) } else { key(u, 0) };
            let d = degree.get_mut(&other).unwrap();
            *d -= 1;
            if *d < k && removed.insert(other) {
                queue.push_back(other);
            }
        }
    }

    let kept: Vec<(u32, u32)> = edges
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(&e, _)| e)
        .collect();
    if kept.is_empty() {
        return Err(Error::KCoreEliminated(k));
    }
    Ok(kept)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Repeatedly delete every edge touching a node of degree < k until
    /// nothing changes. Deliberately naive.
    pub(crate) fn iterative_deletion_oracle(edges: &[(u32, u32)], k: usize) -> Vec<(u32, u32)> {
        let mut cur: Vec<(u32, u32)> = edges.to_vec();
        cur.sort_unstable();
        cur.dedup();
        loop {
            let mut du: HashMap<u32, usize> = HashMap::new();
            let mut dv: HashMap<u32, usize> = HashMap::new();
            for &(u, v) in &cur {
                *du.entry(u).or_default() += 1;
                *dv.entry(v).or_default() += 1;
            }
            let next: Vec<(u32, u32)> = cur
                .iter()
                .copied()
                .filter(|(u, v)| du[u] >= k && dv[v] >= k)
                .collect();
            if next.len() == cur.len() {
                return next;
            }
            cur = next;
        }
    }

    fn sorted(mut v: Vec<(u32, u32)>) -> Vec<(u32, u32)> {
        v.sort_unstable();
        v
    }

    #[test]
    fn star_is_eliminated() {
        let star: Vec<_> = (0..5).map(|v| (0, v)).collect();
        assert!(matches!(k_core_filter(&star, 5), Err(Error::KCoreEliminated(5))));
    }

    #[test]
    fn complete_five_by_five_survives() {
        let full: Vec<_> = (0..5).flat_map(|u| (0..5).map(move |v| (u, v))).collect();
        assert_eq!(k_core_filter(&full, 5).unwrap(), full);
    }

    #[test]
    fn pruning_cascades_to_fixpoint() {
        // Users 0,1 and items 0,1 form a 2-core block. User 2 touches item 1
        // and item 2; item 2 has degree 1, so it goes, which drops user 2 to
        // degree 1, so user 2 goes as well.
        let edges = vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 1), (2, 2)];
        let kept = k_core_filter(&edges, 2).unwrap();
        assert_eq!(kept, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(kept, iterative_deletion_oracle(&edges, 2));
    }

    #[test]
    fn k_zero_is_a_config_error() {
        assert!(matches!(k_core_filter(&[(0, 0)], 0), Err(Error::Config(_))));
    }

    fn small_graph() -> impl Strategy<Value = Vec<(u32, u32)>> {
        prop::collection::vec((0u32..25, 0u32..25), 1..160)
    }

    proptest! {
        #[test]
        fn matches_oracle(edges in small_graph(), k in 1usize..5) {
            let oracle = iterative_deletion_oracle(&edges, k);
            match k_core_filter(&edges, k) {
                Ok(kept) => prop_assert_eq!(sorted(kept), oracle),
                Err(_) => prop_assert!(oracle.is_empty()),
            }
        }

        #[test]
        fn idempotent(edges in small_graph(), k in 1usize..5) {
            if let Ok(once) = k_core_filter(&edges, k) {
                prop_assert_eq!(k_core_filter(&once, k).unwrap(), once);
            }
        }
    }
}
