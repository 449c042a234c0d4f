//! Candidate recovery when the relaxed traversal returns bottom.
//!
//! Works on plain snapshots so it can be tested without a live structure.

use std::collections::{BTreeMap, BTreeSet};

use crate::node::Kind;

/// What a notification recorded about an update node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateSnapshot {
    pub id: u64,
    pub key: i64,
    pub kind: Kind,
    /// Second embedded predecessor result, for DEL nodes.
    pub del_pred2: Option<i64>,
}

/// A notification as seen by the receiving predecessor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Notice {
    pub key: i64,
    pub update: UpdateSnapshot,
    pub threshold: i64,
}

/// Builds L from the notify list of the earliest matching announcement
/// (`earlier`, newest first) and the caller's own list (`own`, newest first).
pub fn build_l(y: i64, earlier: Option<&[Notice]>, own: &[Notice]) -> Vec<UpdateSnapshot> {
    let mut l1: Vec<UpdateSnapshot> = Vec::new();
    if let Some(list) = earlier {
        for n in list.iter().filter(|n| n.key < y) {
            if !l1.iter().any(|u| u.id == n.update.id) {
                l1.insert(0, n.update);
            }
        }
    }
    let mut l2: Vec<UpdateSnapshot> = Vec::new();
    for n in own.iter().filter(|n| n.key < y) {
        l1.retain(|u| u.id != n.update.id);
        if n.threshold >= n.key && !l2.iter().any(|u| u.id == n.update.id) {
            l2.insert(0, n.update);
        }
    }
    let mut l = l1;
    l.extend(l2);
    let last_of_key: BTreeMap<i64, usize> = l.iter().enumerate().map(|(i, u)| (u.key, i)).collect();
    l.into_iter()
        .enumerate()
        .filter(|(i, u)| u.kind == Kind::Ins || last_of_key[&u.key] == *i)
        .map(|(_, u)| u)
        .collect()
}

/// The key graph: each DEL node in L contributes an edge from its key to its
/// second embedded predecessor result.
#[derive(Debug, Default)]
pub struct KeyGraph {
    pub vertices: BTreeSet<i64>,
    pub edges: BTreeMap<i64, i64>,
}

impl KeyGraph {
    pub fn build(l: &[UpdateSnapshot], ruall_del_preds: &[i64]) -> KeyGraph {
        let mut g = KeyGraph::default();
        for u in l {
            g.vertices.insert(u.key);
            if u.kind == Kind::Del {
                if let Some(v) = u.del_pred2 {
                    g.vertices.insert(v);
                    let prev = g.edges.insert(u.key, v);
                    debug_assert!(prev.is_none(), "out-degree above one at {}", u.key);
                }
            }
        }
        g.vertices.extend(ruall_del_preds.iter().copied());
        g
    }

    /// Every edge goes to a strictly smaller key.
    pub fn well_formed(&self) -> bool {
        self.edges.iter().all(|(u, v)| v < u)
    }

    pub fn sink_from(&self, mut x: i64) -> i64 {
        while let Some(&v) = self.edges.get(&x) {
            if v >= x {
                break;
            }
            x = v;
        }
        x
    }
}

/// r0 after recovery: the largest sink reachable from X, skipping keys of
/// DEL nodes seen in the reverse walk. Empty R yields -1.
pub fn recover(l: &[UpdateSnapshot], ruall_dels: &[(i64, i64)]) -> i64 {
    let del_preds: Vec<i64> = ruall_dels.iter().map(|d| d.1).collect();
    let g = KeyGraph::build(l, &del_preds);
    debug_assert!(g.well_formed());
    let mut x: BTreeSet<i64> = del_preds.iter().copied().collect();
    x.extend(l.iter().filter(|u| u.kind == Kind::Ins).map(|u| u.key));
    let r: BTreeSet<i64> = x
        .iter()
        .map(|&k| g.sink_from(k))
        .filter(|w| !ruall_dels.iter().any(|d| d.0 == *w))
        .collect();
    debug_assert!(!r.is_empty(), "recovery produced no candidate");
    r.last().copied().unwrap_or(-1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ins(id: u64, key: i64) -> UpdateSnapshot {
        UpdateSnapshot {
            id,
            key,
            kind: Kind::Ins,
            del_pred2: None,
        }
    }

    fn del(id: u64, key: i64, p2: i64) -> UpdateSnapshot {
        UpdateSnapshot {
            id,
            key,
            kind: Kind::Del,
            del_pred2: Some(p2),
        }
    }

    fn notice(u: UpdateSnapshot, threshold: i64) -> Notice {
        Notice {
            key: u.key,
            update: u,
            threshold,
        }
    }

    #[test]
    fn single_delete_recovers_its_predecessor() {
        // A delete of 5 whose embedded predecessor saw 2; nothing else.
        assert_eq!(recover(&[], &[(5, 2)]), 2);
    }

    #[test]
    fn chain_follows_second_predecessors() {
        let l = vec![del(1, 4, 2), del(2, 2, 0)];
        assert_eq!(recover(&l, &[(6, 4)]), 0);
    }

    #[test]
    fn deleted_sink_is_dropped() {
        let l = vec![ins(3, 1)];
        assert_eq!(recover(&l, &[(6, 4), (4, 1)]), 1);
    }

    #[test]
    fn l_keeps_only_last_del_per_key() {
        let own = vec![
            notice(del(9, 3, 1), 10),
            notice(ins(8, 3), 10),
            notice(del(7, 3, 0), 10),
        ];
        let l = build_l(5, None, &own);
        // own is newest first, so L is oldest first: del 7, ins 8, del 9.
        assert_eq!(l.iter().map(|u| u.id).collect::<Vec<_>>(), vec![8, 9]);
    }

    #[test]
    fn own_notices_remove_from_l1() {
        let a = ins(1, 1);
        let b = ins(2, 2);
        let earlier = vec![notice(b, 10), notice(a, 10)];
        let own = vec![notice(a, -100)];
        let l = build_l(5, Some(&earlier), &own);
        assert_eq!(l.iter().map(|u| u.id).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn keys_at_or_above_y_ignored() {
        let own = vec![notice(ins(1, 7), 10)];
        assert!(build_l(5, None, &own).is_empty());
    }
}
