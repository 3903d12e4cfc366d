//! One-probe storage for dynamic sets.
//!
//! A bit table indexed by the right nodes of a rich product graph. Each
//! stored element owns the positions its rich matching assigned it, all set
//! to 1; every other position is 0. A query reads one random neighbor's bit.
//! Deletions refresh the oldest element, so no matching outlives `2K`
//! further matchings and the matcher's expiration premise holds.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use bitvec::prelude::*;
use rand::Rng;
use thiserror::Error;

use crate::bigraph::Adjacency;
use crate::expire_match::ceil_log2;
use crate::game::{MatchError, Matcher};
use crate::rich_match::{ProductRichMatcher, RichBuildError, RichGraph, RichParams};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum BitprobeError {
    #[error(transparent)]
    Build(#[from] RichBuildError),
    #[error("matcher failed for {x}: {source}")]
    Match { x: usize, source: MatchError },
    #[error("inserting {x} would store more than {capacity} elements")]
    NotLegal { x: usize, capacity: usize },
    #[error("element {x} out of range (universe size {universe})")]
    OutOfRange { x: usize, universe: usize },
    #[error("matching of {x} born at {birth} still active at matching {now}")]
    Expired { x: usize, birth: u64, now: u64 },
    #[error("position {p} assigned to both {a} and {b}")]
    Overlap { p: usize, a: usize, b: usize },
    #[error("invalid parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    x: usize,
    positions: Vec<usize>,
    /// Index of the matching that produced `positions`.
    birth: u64,
}

/// Which half of the key claim failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimSide {
    Member,
    NonMember,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimViolation {
    pub x: usize,
    pub side: ClaimSide,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyClaimReport {
    pub members_checked: usize,
    pub non_members_checked: usize,
    pub violations: Vec<ClaimViolation>,
}

impl KeyClaimReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// The stored set: bit table, FIFO of `(x, f(x))` pairs and the rich matcher.
///
/// Queries take `&self` and may run concurrently; updates need `&mut self`.
#[derive(Debug)]
pub struct BitProbe<T: Scalar> {
    universe: usize,
    capacity: usize,
    eps: T,
    seed: u64,
    graph: Option<RichGraph>,
    matcher: Option<ProductRichMatcher>,
    table: BitVec,
    queue: BTreeMap<u64, Entry>,
    index: BTreeMap<usize, u64>,
    owner: HashMap<usize, usize>,
    next_seq: u64,
    matchings: u64,
    reads: AtomicU64,
}

impl<T: Scalar> BitProbe<T> {
    /// Storage for up to `capacity` elements of `0..universe` with query
    /// error at most `eps`, using the default product parameters.
    pub fn new(universe: usize, capacity: usize, eps: T, seed: u64) -> Result<Self, BitprobeError> {
        let mut params = RichParams::new(universe, (2 * capacity) as u64, eps);
        params.seed = seed;
        Self::with_params(capacity, params)
    }

    /// Storage over a rich product graph built from `params`, whose window
    /// must be `2 · capacity`.
    pub fn with_params(capacity: usize, params: RichParams<T>) -> Result<Self, BitprobeError> {
        if 2 * capacity > params.left_size {
            return Err(BitprobeError::Params(format!(
                "2K = {} exceeds universe size {}",
                2 * capacity,
                params.left_size
            )));
        }
        if params.window != (2 * capacity) as u64 {
            return Err(BitprobeError::Params("window must be 2K".into()));
        }
        let (graph, matcher, len) = if capacity == 0 {
            (None, None, 0)
        } else {
            let g = RichGraph::build(&params)?;
            let m = g.matcher();
            let len = g.right_size();
            (Some(g), Some(m), len)
        };
        Ok(BitProbe {
            universe: params.left_size,
            capacity,
            eps: params.eps,
            seed: params.seed,
            graph,
            matcher,
            table: bitvec![0; len],
            queue: BTreeMap::new(),
            index: BTreeMap::new(),
            owner: HashMap::new(),
            next_seq: 0,
            matchings: 0,
            reads: AtomicU64::new(0),
        })
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn graph(&self) -> Option<&RichGraph> {
        self.graph.as_ref()
    }

    /// Length of the bit table, `#R` of the product graph.
    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    /// Left degree `D` of the product graph.
    pub fn degree(&self) -> usize {
        self.graph.as_ref().map_or(0, RichGraph::degree)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.index.contains_key(&x)
    }

    /// Stored elements, oldest first.
    pub fn members(&self) -> Vec<usize> {
        self.queue.values().map(|e| e.x).collect()
    }

    /// Positions assigned to a stored element.
    pub fn positions(&self, x: usize) -> Option<&[usize]> {
        self.index
            .get(&x)
            .map(|s| self.queue[s].positions.as_slice())
    }

    /// Matchings performed so far.
    pub fn matchings(&self) -> u64 {
        self.matchings
    }

    /// Table bits read by queries so far.
    pub fn table_reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn bit(&self, p: usize) -> bool {
        self.table[p]
    }

    /// Flips one table bit, for fault injection.
    pub fn corrupt_bit(&mut self, p: usize) {
        let b = self.table[p];
        self.table.set(p, !b);
    }

    /// Bits of one stored pair at full size: the element and its `D` positions.
    pub fn entry_bits(&self) -> usize {
        let d = self.degree();
        ceil_log2(self.universe as u64) as usize
            + ceil_log2(d as u64 + 1) as usize
            + d * ceil_log2(self.table.len() as u64) as usize
    }

    /// Size of the structure in bits: the table plus room for `K` stored pairs.
    pub fn size_bits(&self) -> usize {
        self.table.len() + self.capacity * self.entry_bits()
    }

    fn check_range(&self, x: usize) -> Result<(), BitprobeError> {
        if x >= self.universe {
            return Err(BitprobeError::OutOfRange {
                x,
                universe: self.universe,
            });
        }
        Ok(())
    }

    /// Matches `x`, sets its bits and enqueues it.
    fn store(&mut self, x: usize) -> Result<(), BitprobeError> {
        let now = self.matchings;
        let window = 2 * self.capacity as u64;
        if let Some(e) = self.queue.values().find(|e| now >= e.birth + window) {
            return Err(BitprobeError::Expired {
                x: e.x,
                birth: e.birth,
                now,
            });
        }
        let matcher = self
            .matcher
            .as_mut()
            .ok_or(BitprobeError::NotLegal { x, capacity: 0 })?;
        let positions = matcher
            .request(x)
            .map_err(|source| BitprobeError::Match { x, source })?;
        for &p in &positions {
            if let Some(&a) = self.owner.get(&p) {
                return Err(BitprobeError::Overlap { p, a, b: x });
            }
        }
        for &p in &positions {
            self.owner.insert(p, x);
            self.table.set(p, true);
        }
        self.matchings += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.insert(
            seq,
            Entry {
                x,
                positions,
                birth: now,
            },
        );
        self.index.insert(x, seq);
        Ok(())
    }

    /// Clears the bits of `x`, removes its pair and retracts its matching.
    fn unstore(&mut self, x: usize) -> Result<(), BitprobeError> {
        let seq = self.index.remove(&x).expect("caller checked membership");
        let entry = self.queue.remove(&seq).expect("index and queue agree");
        for &p in &entry.positions {
            self.table.set(p, false);
            self.owner.remove(&p);
        }
        let matcher = self
            .matcher
            .as_mut()
            .expect("stored elements imply a matcher");
        matcher
            .retract(x, &entry.positions)
            .map_err(|source| BitprobeError::Match { x, source })
    }

    /// Adds `x`. Inserting a stored element changes nothing.
    pub fn insert(&mut self, x: usize) -> Result<(), BitprobeError> {
        self.check_range(x)?;
        if self.contains(x) {
            return Ok(());
        }
        if self.queue.len() >= self.capacity {
            return Err(BitprobeError::NotLegal {
                x,
                capacity: self.capacity,
            });
        }
        self.store(x)
    }

    /// Removes `x` if stored, then refreshes the oldest stored element.
    pub fn delete(&mut self, x: usize) -> Result<(), BitprobeError> {
        self.check_range(x)?;
        if self.contains(x) {
            self.unstore(x)?;
        }
        if let Some(oldest) = self.queue.values().next().map(|e| e.x) {
            self.unstore(oldest)?;
            self.store(oldest)?;
        }
        Ok(())
    }

    /// Bit of the `i`-th product neighbor of `x`, without counting the read.
    fn neighbor_position(&self, x: usize, i: usize) -> usize {
        let g = self.graph.as_ref().expect("nonempty table");
        let blocks = g.second.block_count();
        let y1 = g.first.neighbors(x)[i / blocks];
        y1 * g.second.right_size() + g.second.node(x, i % blocks)
    }

    /// Reads the bit of one uniformly random neighbor of `x`.
    pub fn query<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> bool {
        self.reads.fetch_add(1, Ordering::Relaxed);
        let d = self.degree();
        if d == 0 {
            return false;
        }
        self.table[self.neighbor_position(x, rng.gen_range(0..d))]
    }

    /// Majority bit over all neighbors of `x`; reads `D` bits.
    pub fn query_majority(&self, x: usize) -> bool {
        let d = self.degree();
        self.reads.fetch_add(d as u64, Ordering::Relaxed);
        let ones = (0..d)
            .filter(|&i| self.table[self.neighbor_position(x, i)])
            .count();
        2 * ones > d
    }

    /// Number of neighbors of `x` whose bit is 1.
    pub fn ones_among_neighbors(&self, x: usize) -> usize {
        (0..self.degree())
            .filter(|&i| self.table[self.neighbor_position(x, i)])
            .count()
    }

    /// Checks the key claim for every stored element and the given
    /// non-members: a stored element reads 1 on at least `⌈(1 - ε) D⌉`
    /// neighbors and on all its positions; a non-member can still be matched,
    /// and every position that matching would assign reads 0.
    pub fn verify_key_claim(&mut self, non_members: &[usize]) -> KeyClaimReport {
        let mut report = KeyClaimReport::default();
        let Some(g) = &self.graph else {
            report.non_members_checked = non_members.len();
            return report;
        };
        let min_ones = g.rich_min_edges;
        for entry in self.queue.values() {
            report.members_checked += 1;
            let x = entry.x;
            let ones = self.ones_among_neighbors(x);
            let fail = |detail: String| ClaimViolation {
                x,
                side: ClaimSide::Member,
                detail,
            };
            if ones < min_ones {
                report
                    .violations
                    .push(fail(format!("{ones} neighbors read 1, need {min_ones}")));
            } else if entry.positions.len() < min_ones {
                report.violations.push(fail(format!(
                    "only {} assigned positions",
                    entry.positions.len()
                )));
            } else if let Some(p) = entry.positions.iter().find(|&&p| !self.table[p]) {
                report
                    .violations
                    .push(fail(format!("assigned position {p} reads 0")));
            }
        }
        let matcher = self.matcher.as_mut().expect("graph implies matcher");
        for &x in non_members {
            if x >= self.universe || self.index.contains_key(&x) {
                continue;
            }
            report.non_members_checked += 1;
            let fail = |detail: String| ClaimViolation {
                x,
                side: ClaimSide::NonMember,
                detail,
            };
            match matcher.plan(x) {
                Err(e) => report
                    .violations
                    .push(fail(format!("virtual request failed: {e}"))),
                Ok(plan) => {
                    if plan.rights.len() < min_ones {
                        report.violations.push(fail(format!(
                            "virtual request got {} positions",
                            plan.rights.len()
                        )));
                    } else if let Some(p) = plan.rights.iter().find(|&&p| self.table[p]) {
                        report
                            .violations
                            .push(fail(format!("virtual position {p} reads 1")));
                    }
                }
            }
        }
        report
    }

    /// Audits the stored pairs against the table, the ownership map and the
    /// expiration window. Work is proportional to the stored positions.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.queue.len() > self.capacity {
            return Err(format!(
                "{} stored elements exceed capacity {}",
                self.queue.len(),
                self.capacity
            ));
        }
        if self.index.len() != self.queue.len() {
            return Err("key index out of sync with queue".into());
        }
        let mut owned = 0;
        let min = self.graph.as_ref().map_or(0, |g| g.rich_min_edges);
        let window = 2 * self.capacity as u64;
        for (seq, e) in &self.queue {
            if self.index.get(&e.x) != Some(seq) {
                return Err(format!("index entry of {} is stale", e.x));
            }
            if e.positions.len() < min {
                return Err(format!(
                    "{} holds {} positions, need {min}",
                    e.x,
                    e.positions.len()
                ));
            }
            if self.matchings > e.birth + window {
                return Err(format!(
                    "matching of {} is older than {window} matchings",
                    e.x
                ));
            }
            for &p in &e.positions {
                owned += 1;
                if self.owner.get(&p) != Some(&e.x) || !self.table[p] {
                    return Err(format!("position {p} of {} not owned and set", e.x));
                }
            }
        }
        if owned != self.owner.len() {
            return Err(format!(
                "{} owned positions, {owned} assigned",
                self.owner.len()
            ));
        }
        Ok(())
    }

    /// Scans the whole table: exactly the assigned positions are set.
    /// Linear in `#R`, unlike [`BitProbe::check_invariants`].
    pub fn check_table(&self) -> Result<(), String> {
        let ones = self.table.count_ones();
        if ones != self.owner.len() {
            return Err(format!(
                "{ones} bits set, {} positions assigned",
                self.owner.len()
            ));
        }
        Ok(())
    }

    /// Snapshot: a header line `bitprobe <N> <K> <eps> <seed> <#R>`, a line
    /// `table <bytes>` followed by the raw table bytes (bit `p` is bit `p % 8`
    /// of byte `p / 8`) and a newline, then `sigma <count>` and one line
    /// `<seq> <x> <p1> ... <pd>` per stored pair, oldest first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "bitprobe {} {} {} {} {}\n",
            self.universe,
            self.capacity,
            self.eps,
            self.seed,
            self.table.len()
        )
        .into_bytes();
        let mut bytes = vec![0u8; self.table.len().div_ceil(8)];
        for p in self.table.iter_ones() {
            bytes[p / 8] |= 1 << (p % 8);
        }
        out.extend_from_slice(format!("table {}\n", bytes.len()).as_bytes());
        out.extend_from_slice(&bytes);
        out.push(b'\n');
        let mut sigma = format!("sigma {}\n", self.queue.len());
        for (seq, e) in &self.queue {
            write!(sigma, "{seq} {}", e.x).unwrap();
            for p in &e.positions {
                write!(sigma, " {p}").unwrap();
            }
            sigma.push('\n');
        }
        out.extend_from_slice(sigma.as_bytes());
        out
    }

    /// Answers `INSERT x`, `DELETE x` and `QUERY x` lines with `OK`, `0`/`1`
    /// or `ERR <reason>`, until end of input. Returns the number of commands.
    pub fn serve<I: BufRead, O: Write, R: Rng + ?Sized>(
        &mut self,
        input: I,
        mut output: O,
        rng: &mut R,
    ) -> std::io::Result<u64> {
        let mut handled = 0;
        for line in input.lines() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let (Some(cmd), Some(arg), None) = (parts.next(), parts.next(), parts.next()) else {
                if !line.trim().is_empty() {
                    writeln!(output, "ERR expected `<INSERT|DELETE|QUERY> <x>`")?;
                }
                continue;
            };
            handled += 1;
            let Ok(x) = arg.parse::<usize>() else {
                writeln!(output, "ERR bad element {arg:?}")?;
                continue;
            };
            let reply = match cmd.to_ascii_uppercase().as_str() {
                "INSERT" => self.insert(x).map(|_| "OK".to_string()),
                "DELETE" => self.delete(x).map(|_| "OK".to_string()),
                "QUERY" if x < self.universe => Ok(u8::from(self.query(x, rng)).to_string()),
                "QUERY" => Err(BitprobeError::OutOfRange {
                    x,
                    universe: self.universe,
                }),
                _ => {
                    writeln!(output, "ERR unknown command {cmd:?}")?;
                    continue;
                }
            };
            match reply {
                Ok(s) => writeln!(output, "{s}")?,
                Err(e) => writeln!(output, "ERR {e}")?,
            }
        }
        output.flush()?;
        Ok(handled)
    }
}

/// Parsed form of [`BitProbe::to_bytes`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub universe: usize,
    pub capacity: usize,
    pub eps: String,
    pub seed: u64,
    pub table_len: usize,
    pub table: Vec<u8>,
    pub sigma: Vec<(u64, usize, Vec<usize>)>,
}

impl Snapshot {
    pub fn parse(bytes: &[u8]) -> Result<Self, String> {
        let (header, rest) = split_line(bytes)?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "bitprobe" {
            return Err("bad header".into());
        }
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| format!("bad number {s:?}: {e}"))
        };
        let (table_line, rest) = split_line(rest)?;
        let n_bytes = table_line
            .strip_prefix("table ")
            .ok_or("missing table line")
            .and_then(|s| s.parse::<usize>().map_err(|_| "bad table length"))?;
        if rest.len() < n_bytes + 1 || rest[n_bytes] != b'\n' {
            return Err("truncated table".into());
        }
        let table = rest[..n_bytes].to_vec();
        let (count_line, mut rest) = split_line(&rest[n_bytes + 1..])?;
        let count = count_line
            .strip_prefix("sigma ")
            .ok_or("missing sigma line")?;
        let count = num(count)? as usize;
        let mut sigma = Vec::with_capacity(count);
        for _ in 0..count {
            let (line, next) = split_line(rest)?;
            rest = next;
            let nums = line
                .split_whitespace()
                .map(num)
                .collect::<Result<Vec<_>, _>>()?;
            if nums.len() < 2 {
                return Err("short sigma line".into());
            }
            sigma.push((
                nums[0],
                nums[1] as usize,
                nums[2..].iter().map(|&p| p as usize).collect(),
            ));
        }
        Ok(Snapshot {
            universe: num(h[1])? as usize,
            capacity: num(h[2])? as usize,
            eps: h[3].to_string(),
            seed: num(h[4])?,
            table_len: num(h[5])? as usize,
            table,
            sigma,
        })
    }

    pub fn bit(&self, p: usize) -> bool {
        self.table[p / 8] >> (p % 8) & 1 == 1
    }
}

fn split_line(bytes: &[u8]) -> Result<(&str, &[u8]), String> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or("missing newline")?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|e| e.to_string())?;
    Ok((line, &bytes[end + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, stream_rng};
    use crate::scalar::Rational;

    fn small(k: usize) -> BitProbe<Rational> {
        let mut p = RichParams::new(32, (2 * k) as u64, Rational::new(1, 4));
        p.first_right = 8192;
        p.seed = 7;
        BitProbe::with_params(k, p).unwrap()
    }

    #[test]
    fn zero_capacity_reads_zero() {
        let mut s = BitProbe::new(16, 0, Rational::new(1, 4), 1).unwrap();
        let mut rng = stream_rng(1, stream::QUERY);
        assert_eq!(s.table_len(), 0);
        assert!(!s.query(3, &mut rng));
        assert!(matches!(s.insert(3), Err(BitprobeError::NotLegal { .. })));
        assert!(s.verify_key_claim(&[1, 2]).passed());
    }

    #[test]
    fn insert_then_delete_clears_table() {
        let mut s = small(2);
        s.insert(5).unwrap();
        assert!(s.positions(5).unwrap().len() >= s.graph().unwrap().rich_min_edges);
        s.check_invariants().unwrap();
        s.delete(5).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.table.count_ones(), 0);
    }

    #[test]
    fn delete_refreshes_the_oldest() {
        let mut s = small(2);
        s.insert(1).unwrap();
        s.insert(2).unwrap();
        s.delete(1).unwrap();
        assert_eq!(s.members(), vec![2]);
        assert_eq!(s.matchings(), 3);
        assert_eq!(s.queue.values().next().unwrap().birth, 2);
        let after = s.positions(2).unwrap().to_vec();
        let set: Vec<usize> = s.table.iter_ones().collect();
        assert_eq!(set, after);
        s.check_invariants().unwrap();
    }

    #[test]
    fn repeated_insert_is_a_no_op() {
        let mut s = small(2);
        s.insert(1).unwrap();
        s.insert(2).unwrap();
        s.insert(1).unwrap();
        assert_eq!(s.members(), vec![1, 2]);
        assert_eq!(s.matchings(), 2);
    }

    #[test]
    fn corrupted_bit_is_caught() {
        let mut s = small(2);
        s.insert(1).unwrap();
        let mut shadow = s.matcher.clone().unwrap();
        let p = shadow.plan(9).unwrap().rights[0];
        assert!(s.verify_key_claim(&[9]).passed());
        s.corrupt_bit(p);
        let report = s.verify_key_claim(&[9]);
        assert_eq!(report.violations[0].x, 9);
        assert_eq!(report.violations[0].side, ClaimSide::NonMember);
        assert!(s.check_table().is_err());
        assert!(s.check_invariants().is_ok());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = small(2);
        s.insert(3).unwrap();
        s.insert(4).unwrap();
        s.delete(3).unwrap();
        let snap = Snapshot::parse(&s.to_bytes()).unwrap();
        assert_eq!(snap.table_len, s.table_len());
        assert_eq!(snap.sigma.len(), 1);
        assert_eq!(snap.sigma[0].1, 4);
        for p in 0..s.table_len() {
            assert_eq!(snap.bit(p), s.bit(p));
        }
    }

    #[test]
    fn line_protocol() {
        let mut s = small(2);
        let mut rng = stream_rng(3, stream::QUERY);
        let mut out = Vec::new();
        let n = s
            .serve(
                "INSERT 4\nQUERY 5\nDELETE 4\nQUERY 4\nBOGUS 1\nINSERT 999\n".as_bytes(),
                &mut out,
                &mut rng,
            )
            .unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(n, 6);
        assert_eq!(lines[0], "OK");
        assert_eq!(lines[1], "0");
        assert_eq!(lines[2], "OK");
        assert_eq!(lines[3], "0");
        assert!(lines[4].starts_with("ERR unknown"));
        assert!(lines[5].starts_with("ERR element 999"));
    }
}
