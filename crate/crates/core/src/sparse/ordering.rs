//! Minimum-degree fill-reducing ordering on the pattern of `A + Aᵀ`.
//!
//! Works on the quotient graph: eliminated nodes become elements holding the
//! clique of their neighbours, and elements adjacent to a pivot are absorbed
//! into it. Degrees are the approximate external degrees of AMD (an upper
//! bound from element sizes); a lazy heap, compacted when stale entries pile
//! up, picks the next pivot.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::CsrMatrix;

/// Elimination order: `perm[k]` is the node eliminated at step `k`.
pub fn minimum_degree(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());

    // Symmetrized adjacency without the diagonal.
    let mut var_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                var_adj[i].push(j);
                var_adj[j].push(i);
            }
        }
    }
    for adj in &mut var_adj {
        adj.sort_unstable();
        adj.dedup();
    }

    let mut elem_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut eliminated = vec![false; n];
    let mut degree: Vec<usize> = var_adj.iter().map(Vec::len).collect();
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|i| Reverse((degree[i], i))).collect();

    let mut mark = vec![0usize; n];
    let mut stamp = 0usize;
    let mut wlen = vec![0usize; n];
    let mut wmark = vec![0usize; n];
    let mut round = 0usize;
    let mut perm = Vec::with_capacity(n);

    while let Some(Reverse((deg, p))) = heap.pop() {
        if eliminated[p] || deg != degree[p] {
            continue;
        }
        eliminated[p] = true;
        perm.push(p);

        // New element p: all live variables reachable from p.
        stamp += 1;
        mark[p] = stamp;
        let mut lp = Vec::new();
        for &j in &var_adj[p] {
            if !eliminated[j] && mark[j] != stamp {
                mark[j] = stamp;
                lp.push(j);
            }
        }
        let absorbed = std::mem::take(&mut elem_adj[p]);
        for &e in &absorbed {
            for &j in &members[e] {
                if !eliminated[j] && mark[j] != stamp {
                    mark[j] = stamp;
                    lp.push(j);
                }
            }
            members[e] = Vec::new();
        }
        var_adj[p] = Vec::new();
        let in_lp = stamp;

        for &i in &lp {
            // Edges into the new clique are now implied by element p.
            var_adj[i].retain(|&j| j != p && !eliminated[j] && mark[j] != in_lp);
            elem_adj[i].retain(|e| !absorbed.contains(e));
            elem_adj[i].push(p);
        }
        members[p] = lp;

        // Every remaining variable is in Lp: the rest is one clique, any order will do.
        let live = n - perm.len();
        if members[p].len() == live {
            perm.extend_from_slice(&members[p]);
            break;
        }

        // Approximate external degrees: |Lₑ \ Lp| for every element next to Lp.
        let lp_len = members[p].len();
        round += 1;
        for &i in &members[p] {
            for &e in &elem_adj[i] {
                if e == p {
                    continue;
                }
                if wmark[e] != round {
                    wmark[e] = round;
                    wlen[e] = members[e].len();
                }
                wlen[e] -= 1;
            }
        }
        for &i in &members[p] {
            let outside: usize = elem_adj[i].iter().filter(|&&e| e != p).map(|&e| wlen[e]).sum();
            let d = (live - 1).min(degree[i] + lp_len - 1).min(var_adj[i].len() + lp_len - 1 + outside);
            degree[i] = d;
            heap.push(Reverse((d, i)));
        }
        if heap.len() > 4 * n {
            heap = (0..n).filter(|&i| !eliminated[i]).map(|i| Reverse((degree[i], i))).collect();
        }
    }
    perm
}
