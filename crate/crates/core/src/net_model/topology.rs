//! Connectivity checks over the branch graph.

use super::{BranchId, CaseError, ContingencySet, PowerSystemCase};

fn adjacency(case: &PowerSystemCase) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); case.buses.len()];
    for (k, br) in case.branches.iter().enumerate() {
        let i = case.index.bus[&br.from_bus];
        let j = case.index.bus[&br.to_bus];
        adj[i].push((j, k));
        adj[j].push((i, k));
    }
    adj
}

/// Whether all buses are reachable over the branches, optionally with one
/// branch (by index) removed.
pub fn is_connected(case: &PowerSystemCase, removed: Option<usize>) -> bool {
    is_connected_without(case, &removed.into_iter().collect::<Vec<_>>())
}

/// Whether all buses are reachable when the given branch indices are removed.
pub fn is_connected_without(case: &PowerSystemCase, removed: &[usize]) -> bool {
    let n = case.buses.len();
    if n == 0 {
        return true;
    }
    let adj = adjacency(case);
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &(v, k) in &adj[u] {
            if !seen[v] && !removed.contains(&k) {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Returns `true` when the network stays connected after the outage of
/// `removed`, i.e. the outage does not island any bus.
pub fn check_islanding(case: &PowerSystemCase, removed: BranchId) -> Result<bool, CaseError> {
    let k = case.branch_index(removed).ok_or(CaseError::UnknownBranch(removed))?;
    Ok(is_connected(case, Some(k)))
}

/// Branch indices whose removal disconnects the graph (low-link search,
/// parallel branches handled by skipping only the tree edge itself).
pub fn bridges(case: &PowerSystemCase) -> Vec<usize> {
    let n = case.buses.len();
    let adj = adjacency(case);
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut out = Vec::new();
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (vertex, branch used to enter, next adjacency slot)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (u, via, ref mut slot)) = stack.last_mut() {
            if *slot < adj[u].len() {
                let (v, k) = adj[u][*slot];
                *slot += 1;
                if k == via {
                    continue;
                }
                if disc[v] == usize::MAX {
                    disc[v] = timer;
                    low[v] = timer;
                    timer += 1;
                    stack.push((v, k, 0));
                } else {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[u]);
                    if low[u] > disc[parent] {
                        out.push(via);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Every single-branch outage that keeps the network connected, in branch-id
/// order.
pub fn default_contingencies(case: &PowerSystemCase) -> ContingencySet {
    let bridge = bridges(case);
    let mut outages: Vec<BranchId> =
        (0..case.branches.len()).filter(|k| bridge.binary_search(k).is_err()).map(|k| case.branches[k].id).collect();
    outages.sort_unstable();
    ContingencySet { outages }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::load_case;

    fn network(edges: &[(u32, u32)], buses: u32) -> PowerSystemCase {
        let buses: Vec<String> = (1..=buses).map(|b| format!(r#"{{"id": {b}, "load": 0}}"#)).collect();
        let branches: Vec<String> = edges
            .iter()
            .enumerate()
            .map(|(k, (f, t))| {
                format!(
                    r#"{{"id": {}, "from_bus": {f}, "to_bus": {t}, "reactance": 0.1, "limit_normal": 1, "limit_emergency": 1}}"#,
                    k + 1
                )
            })
            .collect();
        let text = format!(
            r#"{{"buses": [{}], "branches": [{}], "thermal_units": [], "scenarios": [{{"weight": 1, "forecast_max": {{}}}}]}}"#,
            buses.join(","),
            branches.join(",")
        );
        load_case(&text).unwrap()
    }

    #[test]
    fn triangle_survives_any_single_outage() {
        let case = network(&[(1, 2), (2, 3), (1, 3)], 3);
        for id in 1..=3 {
            assert!(check_islanding(&case, id).unwrap());
        }
        assert_eq!(default_contingencies(&case).outages, vec![1, 2, 3]);
    }

    #[test]
    fn path_branches_are_bridges() {
        let case = network(&[(1, 2), (2, 3)], 3);
        assert!(!check_islanding(&case, 1).unwrap());
        assert!(!check_islanding(&case, 2).unwrap());
        assert!(default_contingencies(&case).is_empty());
        assert!(matches!(check_islanding(&case, 5), Err(CaseError::UnknownBranch(5))));
    }

    #[test]
    fn parallel_branches_are_not_bridges() {
        let case = network(&[(1, 2), (1, 2), (2, 3)], 3);
        assert_eq!(bridges(&case), vec![2]);
        assert_eq!(default_contingencies(&case).outages, vec![1, 2]);
    }

    #[test]
    fn low_link_agrees_with_search_per_removal() {
        let case = crate::net_model::load_case(crate::net_model::RTS96_ONE_AREA).unwrap();
        let bridge = bridges(&case);
        for k in 0..case.branches.len() {
            let survives = check_islanding(&case, case.branches[k].id).unwrap();
            assert_eq!(survives, bridge.binary_search(&k).is_err(), "branch index {k}");
        }
        // the radial spur to bus 7 is the only bridge
        assert_eq!(bridge.len(), 1);
        let spur = &case.branches[bridge[0]];
        assert_eq!((spur.from_bus, spur.to_bus), (7, 8));
        assert_eq!(default_contingencies(&case).len(), 37);
    }
}
