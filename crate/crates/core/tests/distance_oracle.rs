//! Cross-checks the distance DP against an exhaustive edit-script search.

use dnsfp::distance::{dl_distance, Cost, CostSchedule};
use dnsfp::features::{DnsSequence, Token};
use rayon::prelude::*;

/// Minimal cost over all edit scripts turning `a[..i]` into `b[..j]`,
/// found by exhaustive recursive enumeration (every root-to-leaf path is
/// one script). `bound` prunes branches that already cost as much as the
/// best complete script seen, which keeps the search exact but fast.
///
/// Allowed operations: insert, delete, substitute, and transposition of two
/// adjacent tokens where the transposed pair is consumed whole (no further
/// edits inside it).
fn oracle(a: &[Token], b: &[Token], c: &Costs, i: usize, j: usize, bound: f64) -> f64 {
    if i == 0 {
        return j as f64 * c.ins;
    }
    if j == 0 {
        return i as f64 * c.del;
    }
    let mut best = f64::INFINITY;
    let mut ops: Vec<(f64, usize, usize)> = vec![
        (
            if a[i - 1] == b[j - 1] { 0.0 } else { c.sub },
            i - 1,
            j - 1,
        ),
        (c.del, i - 1, j),
        (c.ins, i, j - 1),
    ];
    if i >= 2 && j >= 2 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
        ops.push((c.trans, i - 2, j - 2));
    }
    for (cost, ni, nj) in ops {
        // A branch can only matter if its total could beat both the caller's
        // budget and the best script found so far.
        let budget = bound.min(best) - cost;
        if budget <= 0.0 {
            continue;
        }
        best = best.min(cost + oracle(a, b, c, ni, nj, budget));
    }
    best
}

struct Costs {
    ins: f64,
    del: f64,
    sub: f64,
    trans: f64,
}

fn oracle_distance(a: &[Token], b: &[Token], c: &Costs) -> f64 {
    // Delete-everything-insert-everything is always a valid script, so its
    // cost (plus a hair of slack) bounds the search.
    let bound = a.len() as f64 * c.del + b.len() as f64 * c.ins + 1e-9;
    oracle(a, b, c, a.len(), b.len(), bound)
}

/// All token sequences of length 0..=max_len over the given alphabet.
fn all_sequences(alphabet: &[Token], max_len: usize) -> Vec<DnsSequence> {
    let mut out: Vec<Vec<Token>> = vec![vec![]];
    let mut frontier: Vec<Vec<Token>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &frontier {
            for &t in alphabet {
                let mut s = seq.clone();
                s.push(t);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out.into_iter().map(|tokens| DnsSequence { tokens }).collect()
}

fn check_all_pairs(schedule: &CostSchedule) {
    let alphabet = [Token::Msg(204), Token::Msg(-154), Token::Gap(4)];
    let sequences = all_sequences(&alphabet, 5);
    assert_eq!(sequences.len(), 364); // 3^0 + 3^1 + ... + 3^5
    let costs = Costs {
        ins: schedule.c_ins.as_f64(),
        del: schedule.c_del.as_f64(),
        sub: schedule.c_sub.as_f64(),
        trans: schedule.c_trans.as_f64(),
    };
    let mismatches: usize = sequences
        .par_iter()
        .map(|a| {
            let mut bad = 0usize;
            for b in &sequences {
                let got = dl_distance(a, b, schedule);
                let want = oracle_distance(&a.tokens, &b.tokens, &costs);
                // Both sides are sums of the same rational costs, exactly
                // representable in f64 for these schedules.
                if got != want {
                    eprintln!("mismatch: {a:?} -> {b:?}: dp {got} oracle {want}");
                    bad += 1;
                }
            }
            bad
        })
        .sum();
    assert_eq!(mismatches, 0);
}

#[test]
fn dp_matches_exhaustive_oracle_unit_costs() {
    check_all_pairs(&CostSchedule::default());
}

#[test]
fn dp_matches_exhaustive_oracle_half_cost_transposition() {
    let schedule = CostSchedule {
        c_ins: Cost::integer(1),
        c_del: Cost::integer(1),
        c_sub: Cost::integer(1),
        c_trans: Cost::new(1, 2).unwrap(),
    };
    check_all_pairs(&schedule);
}
