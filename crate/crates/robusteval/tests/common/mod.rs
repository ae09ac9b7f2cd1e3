//! Independent reference implementations used to cross-check the library.
//! Everything here is deliberately written from the definitions, not by
//! calling into the crate's own computation paths.

#![allow(dead_code)]

use std::collections::BTreeMap;

/// Brute-force sentence BLEU: explicit clipped n-gram counting over orders
/// 1..=min(max_order, |hyp|), exponential smoothing with numerators 1/2,
/// 1/4, ... on successive zero-match orders, and the brevity penalty.
pub fn bleu_oracle(hyp: &[String], reference: &[String], max_order: usize) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let effective = max_order.min(hyp.len());
    let mut numerator_floor = 1.0;
    let mut log_sum = 0.0;
    for n in 1..=effective {
        let hyp_grams: Vec<&[String]> = hyp.windows(n).collect();
        let ref_grams: Vec<&[String]> = reference.windows(n).collect();
        let mut matched = 0usize;
        let mut seen: Vec<&[String]> = Vec::new();
        for gram in &hyp_grams {
            if seen.contains(gram) {
                continue;
            }
            seen.push(gram);
            let in_hyp = hyp_grams.iter().filter(|g| g == &gram).count();
            let in_ref = ref_grams.iter().filter(|g| g == &gram).count();
            matched += in_hyp.min(in_ref);
        }
        let total = hyp_grams.len() as f64;
        let p = if matched > 0 {
            matched as f64 / total
        } else {
            numerator_floor /= 2.0;
            numerator_floor / total
        };
        log_sum += p.ln();
    }
    let bp = if hyp.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / hyp.len() as f64).exp()
    };
    bp * (log_sum / effective as f64).exp()
}

fn char_gram_multiset(text: &str, n: usize) -> Vec<String> {
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if chars.len() < n {
        return Vec::new();
    }
    let mut grams: Vec<String> = chars.windows(n).map(|w| w.iter().collect()).collect();
    grams.sort();
    grams
}

fn sorted_multiset_intersection(a: &[String], b: &[String]) -> usize {
    let (mut i, mut j, mut shared) = (0usize, 0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared
}

/// Per-order precision, recall and F-beta from sorted multiset intersection,
/// averaged over orders where either side has n-grams.
pub fn chrf_oracle(hyp: &str, reference: &str, max_order: usize, beta: f64) -> f64 {
    let beta_sq = beta * beta;
    let mut f_values = Vec::new();
    for n in 1..=max_order {
        let h = char_gram_multiset(hyp, n);
        let r = char_gram_multiset(reference, n);
        if h.is_empty() && r.is_empty() {
            continue;
        }
        let shared = sorted_multiset_intersection(&h, &r) as f64;
        let p = if h.is_empty() { 0.0 } else { shared / h.len() as f64 };
        let rec = if r.is_empty() { 0.0 } else { shared / r.len() as f64 };
        let denom = beta_sq * p + rec;
        f_values.push(if denom > 0.0 {
            (1.0 + beta_sq) * p * rec / denom
        } else {
            0.0
        });
    }
    if f_values.is_empty() {
        0.0
    } else {
        f_values.iter().sum::<f64>() / f_values.len() as f64
    }
}

/// Mean precision/recall over orders, for the beta-limit checks.
pub fn chrf_oracle_precision_recall(hyp: &str, reference: &str, max_order: usize) -> (f64, f64) {
    let mut ps = Vec::new();
    let mut rs = Vec::new();
    for n in 1..=max_order {
        let h = char_gram_multiset(hyp, n);
        let r = char_gram_multiset(reference, n);
        if h.is_empty() && r.is_empty() {
            continue;
        }
        let shared = sorted_multiset_intersection(&h, &r) as f64;
        ps.push(if h.is_empty() { 0.0 } else { shared / h.len() as f64 });
        rs.push(if r.is_empty() { 0.0 } else { shared / r.len() as f64 });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&ps), mean(&rs))
}

/// Edit operations of the oracle aligner, hypothesis point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleOp {
    Match,
    Substitute,
    Insert,
    Delete,
}

/// Full-matrix Levenshtein with the documented backtrace priority
/// (match > substitute > delete > insert). Returns the distance and the
/// OK/BAD tag string over hypothesis tokens (true = BAD).
pub fn levenshtein_oracle(hyp: &[String], reference: &[String]) -> (usize, Vec<bool>) {
    let m = hyp.len();
    let n = reference.len();
    let mut table = vec![vec![0usize; n + 1]; m + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in table[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let sub_cost = usize::from(hyp[i - 1] != reference[j - 1]);
            table[i][j] = (table[i - 1][j - 1] + sub_cost)
                .min(table[i - 1][j] + 1)
                .min(table[i][j - 1] + 1);
        }
    }

    let mut ops: Vec<(OracleOp, Option<usize>)> = Vec::new();
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let mut candidates: Vec<(OracleOp, Option<usize>)> = Vec::new();
        if i > 0 && j > 0 {
            if hyp[i - 1] == reference[j - 1] && table[i - 1][j - 1] == table[i][j] {
                candidates.push((OracleOp::Match, Some(i - 1)));
            }
            if hyp[i - 1] != reference[j - 1] && table[i - 1][j - 1] + 1 == table[i][j] {
                candidates.push((OracleOp::Substitute, Some(i - 1)));
            }
        }
        if j > 0 && table[i][j - 1] + 1 == table[i][j] {
            candidates.push((OracleOp::Delete, None));
        }
        if i > 0 && table[i - 1][j] + 1 == table[i][j] {
            candidates.push((OracleOp::Insert, Some(i - 1)));
        }
        let chosen = candidates[0];
        ops.push(chosen);
        match chosen.0 {
            OracleOp::Match | OracleOp::Substitute => {
                i -= 1;
                j -= 1;
            }
            OracleOp::Delete => j -= 1,
            OracleOp::Insert => i -= 1,
        }
    }

    let mut bad = vec![false; m];
    for (op, hyp_index) in &ops {
        match op {
            OracleOp::Match => {}
            OracleOp::Substitute | OracleOp::Insert => {
                bad[hyp_index.expect("sub/insert carry a hyp index")] = true;
            }
            OracleOp::Delete => {}
        }
    }
    (table[m][n], bad)
}

/// Tau-b by exhaustive pair enumeration with tie-group counting done on
/// sorted copies, using the closed formula
/// (nc - nd) / sqrt((n0 - n1) (n0 - n2)).
pub fn tau_b_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut nc = 0i64;
    let mut nd = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let prod = (x[i] - x[j]) * (y[i] - y[j]);
            if prod > 0.0 {
                nc += 1;
            } else if prod < 0.0 {
                nd += 1;
            }
        }
    }
    let tie_pairs = |values: &[f64]| -> i64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut total = 0i64;
        let mut run = 1i64;
        for k in 1..sorted.len() {
            if sorted[k] == sorted[k - 1] {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let n0 = (n * (n - 1) / 2) as i64;
    let n1 = tie_pairs(x);
    let n2 = tie_pairs(y);
    (nc - nd) as f64 / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt()
}

/// Williams' t from the published formula plus statrs for the p-value; a
/// second route against the crate's own incomplete-beta evaluation.
pub fn williams_oracle(r12: f64, r13: f64, r23: f64, n: usize) -> (f64, f64) {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let nf = n as f64;
    let k = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23;
    let r_bar = 0.5 * (r12 + r13);
    let t = (r12 - r13) * ((nf - 1.0) * (1.0 + r23)).sqrt()
        / (2.0 * k * (nf - 1.0) / (nf - 3.0) + r_bar * r_bar * (1.0 - r23).powi(3)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, nf - 3.0).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, p)
}

/// Simple xorshift generator so fixtures do not depend on rand's stream
/// stability.
pub struct XorShift(u64);

impl XorShift {
    pub fn new(seed: u64) -> Self {
        Self(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn below(&mut self, bound: usize) -> usize {
        (self.next_u64() % bound as u64) as usize
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Random token sequence over a small alphabet.
pub fn random_tokens(rng: &mut XorShift, max_len: usize, alphabet: usize) -> Vec<String> {
    let len = rng.below(max_len + 1);
    (0..len)
        .map(|_| {
            let c = (b'a' + rng.below(alphabet) as u8) as char;
            c.to_string()
        })
        .collect()
}

/// Counts per key, for multiset comparisons in tests.
pub fn counted<I: IntoIterator<Item = String>>(items: I) -> BTreeMap<String, usize> {
    let mut map = BTreeMap::new();
    for item in items {
        *map.entry(item).or_insert(0) += 1;
    }
    map
}
