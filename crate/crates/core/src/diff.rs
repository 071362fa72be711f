//! Longest-common-subsequence alignment and hunk-based diffs.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::Address;

/// Inputs whose DP table would exceed this many cells are aligned with
/// Hirschberg's linear-space recursion instead.
pub const FULL_TABLE_MAX_CELLS: usize = 1 << 24;

/// Length of a longest common subsequence, in `O(min(n, m))` space.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row = vec![0usize; short.len() + 1];
    for x in long {
        let mut diag = 0;
        for (j, y) in short.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[short.len()]
}

/// Index pairs `(i, j)` of a longest common subsequence, strictly increasing
/// in both coordinates. Among equally long alignments, the one taking the
/// earliest possible elements of `a` is returned (for inputs that fit the
/// full DP table).
pub fn lcs_alignment<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let mut out: Vec<(usize, usize)> = (0..prefix).map(|i| (i, i)).collect();
    let (ra, rb) = (&a[prefix..], &b[prefix..]);
    if (ra.len() + 1).saturating_mul(rb.len() + 1) <= FULL_TABLE_MAX_CELLS {
        table_alignment(ra, rb, prefix, prefix, &mut out);
    } else {
        let suffix = ra.iter().rev().zip(rb.iter().rev()).take_while(|(x, y)| x == y).count();
        let (ma, mb) = (&ra[..ra.len() - suffix], &rb[..rb.len() - suffix]);
        hirschberg(ma, mb, prefix, prefix, &mut out);
        let (ea, eb) = (prefix + ma.len(), prefix + mb.len());
        out.extend((0..suffix).map(|k| (ea + k, eb + k)));
    }
    out
}

/// One longest common subsequence of `a` and `b`.
pub fn lcs<T: PartialEq + Clone>(a: &[T], b: &[T]) -> Vec<T> {
    lcs_alignment(a, b).into_iter().map(|(i, _)| a[i].clone()).collect()
}

fn table_alignment<T: PartialEq>(a: &[T], b: &[T], off_a: usize, off_b: usize, out: &mut Vec<(usize, usize)>) {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    // suffix[i * w + j] = |lcs(a[i..], b[j..])|
    let mut suffix = vec![0u32; (n + 1) * w];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * w + j] = if a[i] == b[j] {
                suffix[(i + 1) * w + j + 1] + 1
            } else {
                suffix[(i + 1) * w + j].max(suffix[i * w + j + 1])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            out.push((off_a + i, off_b + j));
            i += 1;
            j += 1;
        } else if suffix[i * w + j + 1] == suffix[i * w + j] {
            j += 1;
        } else {
            i += 1;
        }
    }
}

fn forward_row<T: PartialEq>(a: &[T], b: &[T]) -> Vec<usize> {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row
}

fn reverse_row<T: PartialEq>(a: &[T], b: &[T]) -> Vec<usize> {
    let ra: Vec<&T> = a.iter().rev().collect();
    let rb: Vec<&T> = b.iter().rev().collect();
    let mut row = forward_row(&ra, &rb);
    row.reverse();
    row
}

fn hirschberg<T: PartialEq>(a: &[T], b: &[T], off_a: usize, off_b: usize, out: &mut Vec<(usize, usize)>) {
    if a.is_empty() || b.is_empty() {
        return;
    }
    if a.len() == 1 || (a.len() + 1) * (b.len() + 1) <= 4096 {
        table_alignment(a, b, off_a, off_b, out);
        return;
    }
    let mid = a.len() / 2;
    let left = forward_row(&a[..mid], b);
    let right = reverse_row(&a[mid..], b);
    let split = (0..=b.len())
        .max_by_key(|&k| (left[k] + right[k], std::cmp::Reverse(k)))
        .unwrap();
    hirschberg(&a[..mid], &b[..split], off_a, off_b, out);
    hirschberg(&a[mid..], &b[split..], off_a + mid, off_b + split, out);
}

/// Longest common contiguous run: `(start_a, start_b, len)`. Ties prefer the
/// earliest start in `a`, then in `b`.
pub fn longest_common_substring<T: PartialEq>(a: &[T], b: &[T]) -> (usize, usize, usize) {
    let mut best = (0, 0, 0);
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { 0 };
            let len = cur[j + 1];
            let cand = (i + 1 - len, j + 1 - len, len);
            if len > best.2 || (len == best.2 && len > 0 && (cand.0, cand.1) < (best.0, best.1)) {
                best = cand;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HunkKind {
    Equal,
    Delete,
    Insert,
    Replace,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffHunk {
    pub kind: HunkKind,
    pub pred_range: Range<usize>,
    pub succ_range: Range<usize>,
}

impl DiffHunk {
    fn new(kind: HunkKind, pred_range: Range<usize>, succ_range: Range<usize>) -> Self {
        DiffHunk {
            kind,
            pred_range,
            succ_range,
        }
    }
}

/// Hunks tiling both sequences, derived from [`lcs_alignment`].
pub fn diff_hunks<T: PartialEq>(a: &[T], b: &[T]) -> Vec<DiffHunk> {
    let mut hunks: Vec<DiffHunk> = Vec::new();
    let (mut i, mut j) = (0, 0);
    let push_gap = |hunks: &mut Vec<DiffHunk>, i0: usize, i1: usize, j0: usize, j1: usize| {
        let kind = match (i1 > i0, j1 > j0) {
            (true, true) => HunkKind::Replace,
            (true, false) => HunkKind::Delete,
            (false, true) => HunkKind::Insert,
            (false, false) => return,
        };
        hunks.push(DiffHunk::new(kind, i0..i1, j0..j1));
    };
    for (mi, mj) in lcs_alignment(a, b) {
        push_gap(&mut hunks, i, mi, j, mj);
        match hunks.last_mut() {
            Some(h) if h.kind == HunkKind::Equal && h.pred_range.end == mi && h.succ_range.end == mj => {
                h.pred_range.end += 1;
                h.succ_range.end += 1;
            }
            _ => hunks.push(DiffHunk::new(HunkKind::Equal, mi..mi + 1, mj..mj + 1)),
        }
        i = mi + 1;
        j = mj + 1;
    }
    push_gap(&mut hunks, i, a.len(), j, b.len());
    hunks
}

/// Rebuilds both sides from a hunk list.
pub fn reconstruct<T: Clone>(hunks: &[DiffHunk], a: &[T], b: &[T]) -> (Vec<T>, Vec<T>) {
    let mut ra = Vec::new();
    let mut rb = Vec::new();
    for h in hunks {
        match h.kind {
            HunkKind::Equal => {
                ra.extend_from_slice(&a[h.pred_range.clone()]);
                rb.extend_from_slice(&a[h.pred_range.clone()]);
            }
            HunkKind::Delete => ra.extend_from_slice(&a[h.pred_range.clone()]),
            HunkKind::Insert => rb.extend_from_slice(&b[h.succ_range.clone()]),
            HunkKind::Replace => {
                ra.extend_from_slice(&a[h.pred_range.clone()]);
                rb.extend_from_slice(&b[h.succ_range.clone()]);
            }
        }
    }
    (ra, rb)
}

/// A changed area with surrounding context, as shown to a reviewer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub pred_range: Range<usize>,
    pub succ_range: Range<usize>,
}

/// Non-equal hunks widened by `context` symbols of neighbouring equal content.
/// Regions separated by fewer than `2 * context` equal symbols are merged.
pub fn changed_regions(hunks: &[DiffHunk], context: usize) -> Vec<Region> {
    let equal_len = |k: Option<&DiffHunk>| match k {
        Some(h) if h.kind == HunkKind::Equal => h.pred_range.len(),
        _ => 0,
    };
    let mut regions: Vec<Region> = Vec::new();
    let mut gap_since_last: Option<usize> = None;
    for (k, h) in hunks.iter().enumerate() {
        if h.kind == HunkKind::Equal {
            if let Some(g) = gap_since_last.as_mut() {
                *g += h.pred_range.len();
            }
            continue;
        }
        let before = context.min(equal_len(k.checked_sub(1).and_then(|p| hunks.get(p))));
        let after = context.min(equal_len(hunks.get(k + 1)));
        let region = Region {
            pred_range: h.pred_range.start - before..h.pred_range.end + after,
            succ_range: h.succ_range.start - before..h.succ_range.end + after,
        };
        match (gap_since_last, regions.last_mut()) {
            (Some(gap), Some(last)) if gap < 2 * context => {
                last.pred_range.end = region.pred_range.end;
                last.succ_range.end = region.succ_range.end;
            }
            _ => regions.push(region),
        }
        gap_since_last = Some(0);
    }
    regions
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    Line,
    NormalizedToken,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "line" => Ok(Granularity::Line),
            "token" | "normalized-token" => Ok(Granularity::NormalizedToken),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub predecessor: Address,
    pub successor: Address,
    pub granularity: Granularity,
    pub lcs_length: usize,
    pub hunks: Vec<DiffHunk>,
}

impl DiffReport {
    pub fn build(
        predecessor: &Address,
        successor: &Address,
        granularity: Granularity,
        pred: &[String],
        succ: &[String],
    ) -> DiffReport {
        let hunks = diff_hunks(pred, succ);
        let lcs_length = hunks
            .iter()
            .filter(|h| h.kind == HunkKind::Equal)
            .map(|h| h.pred_range.len())
            .sum();
        DiffReport {
            predecessor: predecessor.clone(),
            successor: successor.clone(),
            granularity,
            lcs_length,
            hunks,
        }
    }
}

/// Trimmed source lines, the default diff symbols.
pub fn source_lines(text: &str) -> Vec<String> {
    text.lines().map(|l| l.trim().to_string()).collect()
}

/// Unified-diff text for one report.
pub fn unified(report: &DiffReport, pred: &[String], succ: &[String], context: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "--- {}", report.predecessor);
    let _ = writeln!(out, "+++ {}", report.successor);
    for region in changed_regions(&report.hunks, context) {
        let header = |r: &Range<usize>| {
            if r.is_empty() {
                format!("{},0", r.start)
            } else {
                format!("{},{}", r.start + 1, r.len())
            }
        };
        let _ = writeln!(
            out,
            "@@ -{} +{} @@",
            header(&region.pred_range),
            header(&region.succ_range)
        );
        for h in &report.hunks {
            let pr = clip(&h.pred_range, &region.pred_range);
            let sr = clip(&h.succ_range, &region.succ_range);
            match h.kind {
                HunkKind::Equal => {
                    for line in &pred[pr] {
                        let _ = writeln!(out, " {line}");
                    }
                }
                _ => {
                    for line in &pred[pr] {
                        let _ = writeln!(out, "-{line}");
                    }
                    for line in &succ[sr] {
                        let _ = writeln!(out, "+{line}");
                    }
                }
            }
        }
    }
    out
}

fn clip(r: &Range<usize>, bound: &Range<usize>) -> Range<usize> {
    let start = r.start.max(bound.start);
    let end = r.end.min(bound.end);
    start..end.max(start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    fn is_subsequence<T: PartialEq>(s: &[T], of: &[T]) -> bool {
        let mut it = of.iter();
        s.iter().all(|x| it.any(|y| y == x))
    }

    fn brute_lcs_len<T: PartialEq + Clone>(a: &[T], b: &[T]) -> usize {
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        let mut best = 0;
        for mask in 0u32..(1 << short.len()) {
            let sub: Vec<T> = (0..short.len())
                .filter(|k| mask & (1 << k) != 0)
                .map(|k| short[k].clone())
                .collect();
            if sub.len() > best && is_subsequence(&sub, long) {
                best = sub.len();
            }
        }
        best
    }

    #[test]
    fn lcs_examples() {
        let x = chars("ABCBDAB");
        assert_eq!(lcs(&x, &x), x);
        assert!(lcs(&x, &[]).is_empty());
        assert_eq!(lcs_length(&x, &chars("BDCABA")), 4);
        assert_eq!(brute_lcs_len(&x, &chars("BDCABA")), 4);
        let l = lcs(&x, &chars("BDCABA"));
        assert_eq!(l.len(), 4);
        assert!(is_subsequence(&l, &x) && is_subsequence(&l, &chars("BDCABA")));
    }

    #[test]
    fn tie_break_prefers_earliest_in_a() {
        assert_eq!(lcs_alignment(&chars("xx"), &chars("zx")), vec![(0, 1)]);
        assert_eq!(lcs_alignment(&chars("abab"), &chars("ba")), vec![(1, 0), (2, 1)]);
    }

    #[test]
    fn hunk_examples() {
        let a = chars("pqr");
        assert_eq!(diff_hunks(&a, &a), vec![DiffHunk::new(HunkKind::Equal, 0..3, 0..3)]);
        assert_eq!(
            diff_hunks(&chars("pq"), &[]),
            vec![DiffHunk::new(HunkKind::Delete, 0..2, 0..0)]
        );
        assert_eq!(
            diff_hunks(&a, &chars("pxr")),
            vec![
                DiffHunk::new(HunkKind::Equal, 0..1, 0..1),
                DiffHunk::new(HunkKind::Replace, 1..2, 1..2),
                DiffHunk::new(HunkKind::Equal, 2..3, 2..3),
            ]
        );
        assert!(diff_hunks::<char>(&[], &[]).is_empty());
    }

    #[test]
    fn region_examples() {
        let same = diff_hunks(&chars("abc"), &chars("abc"));
        assert!(changed_regions(&same, 3).is_empty());

        let one = diff_hunks(&chars("pqr"), &chars("pxr"));
        assert_eq!(
            changed_regions(&one, 0),
            vec![Region {
                pred_range: 1..2,
                succ_range: 1..2
            }]
        );

        // Two changes separated by three equal symbols.
        let a = chars("aXbcdYe");
        let b = chars("aQbcdRe");
        let hunks = diff_hunks(&a, &b);
        assert_eq!(changed_regions(&hunks, 1).len(), 2);
        let merged = changed_regions(&hunks, 2);
        assert_eq!(
            merged,
            vec![Region {
                pred_range: 0..7,
                succ_range: 0..7
            }]
        );
        assert_eq!(changed_regions(&hunks, 0).len(), 2);
    }

    #[test]
    fn contiguous_variant() {
        assert_eq!(longest_common_substring(&chars("xabcy"), &chars("zzabcq")), (1, 2, 3));
        assert_eq!(longest_common_substring(&chars("ab"), &chars("cd")), (0, 0, 0));
        assert_eq!(longest_common_substring(&chars("abab"), &chars("ab")), (0, 0, 2));
    }

    #[test]
    fn large_inputs_use_linear_space() {
        let a: Vec<u32> = (0..5000).map(|i| (i * 7 % 13) as u32).collect();
        let b: Vec<u32> = (0..4000).map(|i| (i * 5 % 11) as u32).collect();
        assert!((a.len() + 1) * (b.len() + 1) > FULL_TABLE_MAX_CELLS);
        let al = lcs_alignment(&a, &b);
        assert_eq!(al.len(), lcs_length(&a, &b));
        for w in al.windows(2) {
            assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
        }
        assert!(al.iter().all(|&(i, j)| a[i] == b[j]));
        let hunks = diff_hunks(&a, &b);
        assert_eq!(reconstruct(&hunks, &a, &b), (a, b));
    }

    #[test]
    fn unified_output() {
        let pred = source_lines("a\nb\nc\nd\n");
        let succ = source_lines("a\nB\nc\nd\n");
        let report = DiffReport::build(
            &Address::parse(&format!("0x{}", "1".repeat(40))).unwrap(),
            &Address::parse(&format!("0x{}", "2".repeat(40))).unwrap(),
            Granularity::Line,
            &pred,
            &succ,
        );
        assert_eq!(report.lcs_length, 3);
        let text = unified(&report, &pred, &succ, 1);
        let body: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(body, vec!["@@ -1,3 +1,3 @@", " a", "-b", "+B", " c"]);
    }

    fn seq() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..3, 0..=8)
    }

    proptest! {
        #[test]
        fn dp_matches_brute_force(a in seq(), b in seq()) {
            let n = lcs_length(&a, &b);
            prop_assert_eq!(n, brute_lcs_len(&a, &b));
            let l = lcs(&a, &b);
            prop_assert_eq!(l.len(), n);
            prop_assert!(is_subsequence(&l, &a) && is_subsequence(&l, &b));
        }

        #[test]
        fn length_symmetry_and_bound(a in proptest::collection::vec(0u8..4, 0..40), b in proptest::collection::vec(0u8..4, 0..40)) {
            let n = lcs_length(&a, &b);
            prop_assert_eq!(n, lcs_length(&b, &a));
            prop_assert!(n <= a.len().min(b.len()));
            let contained = is_subsequence(&a, &b) || is_subsequence(&b, &a);
            prop_assert_eq!(n == a.len().min(b.len()), contained);
        }

        #[test]
        fn hunks_round_trip(a in proptest::collection::vec(0u8..5, 0..60), b in proptest::collection::vec(0u8..5, 0..60)) {
            let hunks = diff_hunks(&a, &b);
            prop_assert_eq!(reconstruct(&hunks, &a, &b), (a.clone(), b.clone()));
            let (mut pa, mut pb) = (0, 0);
            for h in &hunks {
                prop_assert_eq!(h.pred_range.start, pa);
                prop_assert_eq!(h.succ_range.start, pb);
                if h.kind == HunkKind::Equal {
                    prop_assert_eq!(&a[h.pred_range.clone()], &b[h.succ_range.clone()]);
                }
                pa = h.pred_range.end;
                pb = h.succ_range.end;
            }
            prop_assert_eq!((pa, pb), (a.len(), b.len()));
            let eq: usize = hunks.iter().filter(|h| h.kind == HunkKind::Equal).map(|h| h.pred_range.len()).sum();
            prop_assert_eq!(eq, lcs_length(&a, &b));
        }

        #[test]
        fn regions_cover_changes(a in proptest::collection::vec(0u8..3, 0..30), b in proptest::collection::vec(0u8..3, 0..30), context in 0usize..4) {
            let hunks = diff_hunks(&a, &b);
            let regions = changed_regions(&hunks, context);
            for h in hunks.iter().filter(|h| h.kind != HunkKind::Equal) {
                prop_assert!(regions.iter().any(|r| r.pred_range.start <= h.pred_range.start && h.pred_range.end <= r.pred_range.end));
            }
            for w in regions.windows(2) {
                prop_assert!(w[0].pred_range.end <= w[1].pred_range.start);
                prop_assert!(w[0].succ_range.end <= w[1].succ_range.start);
            }
        }
    }
}
