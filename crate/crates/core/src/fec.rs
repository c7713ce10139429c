//! Regular LDPC codes built by progressive edge growth, a systematic
//! encoder obtained from Gaussian elimination over GF(2), and a sum-product
//! belief-propagation decoder.
//!
//! LLRs follow `log P(b=0)/P(b=1)` and are clipped to `±LLR_CLIP`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

pub const LLR_CLIP: f64 = 30.0;
const PEG_ATTEMPTS: u64 = 64;

#[inline]
pub fn clip_llr(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-LLR_CLIP, LLR_CLIP)
    }
}

/// A binary linear code defined by a sparse parity-check matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    n: usize,
    checks: Vec<Vec<usize>>,
    vars: Vec<Vec<usize>>,
    /// Codeword positions carrying information bits, ascending.
    info_positions: Vec<usize>,
    /// Pivot column of each independent check row after elimination.
    parity_positions: Vec<usize>,
    /// Row `r`: which information bits (by index into `info_positions`)
    /// sum into parity bit `parity_positions[r]`.
    parity_rows: Vec<Vec<u64>>,
}

fn words(bits: usize) -> usize {
    bits.div_ceil(64)
}

#[inline]
fn get_bit(row: &[u64], i: usize) -> bool {
    row[i / 64] >> (i % 64) & 1 == 1
}

#[inline]
fn set_bit(row: &mut [u64], i: usize) {
    row[i / 64] |= 1 << (i % 64);
}

impl LdpcCode {
    /// Build from check rows (each a list of column indices).
    pub fn from_checks(n: usize, checks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 || checks.is_empty() {
            return Err(Error::Code("empty parity-check matrix".into()));
        }
        let mut checks = checks;
        let mut vars = vec![Vec::new(); n];
        for (r, row) in checks.iter_mut().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Code(format!("check {r} lists a column twice")));
            }
            for &c in row.iter() {
                if c >= n {
                    return Err(Error::Code(format!("check {r} references column {c} >= n = {n}")));
                }
                vars[c].push(r);
            }
        }

        // Reduced row echelon form over GF(2).
        let w = words(n);
        let mut h: Vec<Vec<u64>> = checks
            .iter()
            .map(|row| {
                let mut bits = vec![0u64; w];
                row.iter().for_each(|&c| set_bit(&mut bits, c));
                bits
            })
            .collect();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..n {
            let Some(p) = (rank..h.len()).find(|&r| get_bit(&h[r], col)) else {
                continue;
            };
            h.swap(rank, p);
            let pivot_row = h[rank].clone();
            for (r, row) in h.iter_mut().enumerate() {
                if r != rank && get_bit(row, col) {
                    row.iter_mut().zip(&pivot_row).for_each(|(a, b)| *a ^= b);
                }
            }
            pivots.push(col);
            rank += 1;
            if rank == h.len() {
                break;
            }
        }
        let mut is_pivot = vec![false; n];
        pivots.iter().for_each(|&c| is_pivot[c] = true);
        let info_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        let k = info_positions.len();
        let parity_rows = h[..rank]
            .iter()
            .map(|row| {
                let mut out = vec![0u64; words(k)];
                for (i, &c) in info_positions.iter().enumerate() {
                    if get_bit(row, c) {
                        set_bit(&mut out, i);
                    }
                }
                out
            })
            .collect();
        Ok(Self {
            n,
            checks,
            vars,
            info_positions,
            parity_positions: pivots,
            parity_rows,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.info_positions.len()
    }

    pub fn check_count(&self) -> usize {
        self.checks.len()
    }

    pub fn rank(&self) -> usize {
        self.parity_positions.len()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    pub fn var_checks(&self, var: usize) -> &[usize] {
        &self.vars[var]
    }

    pub fn edge_count(&self) -> usize {
        self.checks.iter().map(Vec::len).sum()
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn column_weights(&self) -> Vec<usize> {
        self.vars.iter().map(Vec::len).collect()
    }

    pub fn row_weights(&self) -> Vec<usize> {
        self.checks.iter().map(Vec::len).collect()
    }

    pub fn encode(&self, info_bits: &[u8]) -> Result<Vec<u8>> {
        if info_bits.len() != self.k() {
            return Err(Error::Dimension {
                expected: self.k(),
                got: info_bits.len(),
            });
        }
        let mut packed = vec![0u64; words(self.k())];
        let mut cw = vec![0u8; self.n];
        for (i, (&pos, &b)) in self.info_positions.iter().zip(info_bits).enumerate() {
            cw[pos] = b & 1;
            if b & 1 == 1 {
                set_bit(&mut packed, i);
            }
        }
        for (row, &pos) in self.parity_rows.iter().zip(&self.parity_positions) {
            let ones: u32 = row.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            cw[pos] = (ones & 1) as u8;
        }
        Ok(cw)
    }

    pub fn extract_info(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| codeword[p]).collect()
    }

    /// Parity of every check row.
    pub fn syndrome(&self, codeword: &[u8]) -> Vec<u8> {
        self.checks
            .iter()
            .map(|row| row.iter().fold(0u8, |acc, &c| acc ^ (codeword[c] & 1)))
            .collect()
    }

    pub fn is_codeword(&self, codeword: &[u8]) -> bool {
        codeword.len() == self.n && self.syndrome(codeword).iter().all(|&s| s == 0)
    }

    /// Whether any two checks share more than one variable.
    pub fn has_4_cycles(&self) -> bool {
        for (v, cs) in self.vars.iter().enumerate() {
            for &c in cs {
                for &u in &self.checks[c] {
                    if u <= v {
                        continue;
                    }
                    for &c2 in &self.vars[u] {
                        if c2 != c && self.vars[v].contains(&c2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Shortest cycle length in the Tanner graph (`usize::MAX` if acyclic).
    pub fn girth(&self) -> usize {
        let m = self.checks.len();
        let total = self.n + m;
        let mut best = usize::MAX;
        // Nodes 0..n are variables, n.. are checks.
        let neighbours = |x: usize| -> Vec<usize> {
            if x < self.n {
                self.vars[x].iter().map(|&c| self.n + c).collect()
            } else {
                self.checks[x - self.n].clone()
            }
        };
        for start in 0..self.n {
            let mut dist = vec![usize::MAX; total];
            let mut parent = vec![usize::MAX; total];
            dist[start] = 0;
            let mut q = VecDeque::from([start]);
            while let Some(x) = q.pop_front() {
                if 2 * dist[x] >= best {
                    break;
                }
                for y in neighbours(x) {
                    if dist[y] == usize::MAX {
                        dist[y] = dist[x] + 1;
                        parent[y] = x;
                        q.push_back(y);
                    } else if parent[x] != y {
                        best = best.min(dist[x] + dist[y] + 1);
                    }
                }
            }
        }
        best
    }

    /// One line per check row: its sorted column indices.
    pub fn to_adjacency_text(&self) -> String {
        let mut s = format!("# ldpc n={} m={}\n", self.n, self.checks.len());
        for row in &self.checks {
            let cols: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "{}", cols.join(" "));
        }
        s
    }

    pub fn from_adjacency_text(text: &str) -> Result<Self> {
        let mut n = None;
        let mut checks = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                for f in comment.split_whitespace() {
                    if let Some(v) = f.strip_prefix("n=") {
                        n = Some(v.parse::<usize>().map_err(|_| Error::Parse {
                            line: i + 1,
                            msg: format!("bad block length `{v}`"),
                        })?);
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            checks.push(row);
        }
        let inferred = checks.iter().flatten().max().map_or(0, |&c| c + 1);
        Self::from_checks(n.unwrap_or(inferred), checks)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_adjacency_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_adjacency_text())?;
        Ok(())
    }
}

/// Progressive-edge-growth construction of a `(dv, dc)`-regular code of
/// length `n` with full-rank parity checks. Each new edge of a variable goes
/// to a check outside (or, failing that, deepest in) its current
/// neighbourhood tree; among candidates the lowest-degree check wins and
/// exact ties are broken by a seeded shuffle.
pub fn peg_construct(n: usize, dv: usize, dc: usize, seed: u64) -> Result<LdpcCode> {
    if dv == 0 || dc == 0 || (n * dv) % dc != 0 || dv > n * dv / dc.max(1) {
        return Err(Error::Code(format!(
            "no ({dv}, {dc})-regular code of length {n}: n·dv must be a multiple of dc"
        )));
    }
    let m = n * dv / dc;
    if dc > n {
        return Err(Error::Code(format!("check degree {dc} exceeds length {n}")));
    }
    let mut last_err = None;
    for attempt in 0..PEG_ATTEMPTS {
        match peg_attempt(n, m, dv, dc, seed::derive_seed(seed, &[attempt])) {
            Some(checks) => {
                let code = LdpcCode::from_checks(n, checks)?;
                if code.rank() == m {
                    return Ok(code);
                }
                last_err = Some(format!("rank {} < {m}", code.rank()));
            }
            None => last_err = Some("edge placement stalled".into()),
        }
    }
    Err(Error::Code(format!(
        "PEG failed after {PEG_ATTEMPTS} attempts for n={n}, dv={dv}, dc={dc}: {}",
        last_err.unwrap_or_default()
    )))
}

fn peg_attempt(n: usize, m: usize, dv: usize, dc: usize, seed: u64) -> Option<Vec<Vec<usize>>> {
    let mut rng = seed::rng_for(seed, &[]);
    let mut checks: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        for _ in 0..dv {
            let open = |c: usize, checks: &Vec<Vec<usize>>, vars: &Vec<Vec<usize>>| {
                checks[c].len() < dc && !vars[v].contains(&c)
            };
            let candidates: Vec<usize> = if vars[v].is_empty() {
                (0..m).filter(|&c| open(c, &checks, &vars)).collect()
            } else {
                let reached = bfs_levels(v, &checks, &vars, m);
                // Unreached open checks first; otherwise the open checks at
                // the deepest level.
                let unreached: Vec<usize> = (0..m)
                    .filter(|&c| reached[c] == usize::MAX && open(c, &checks, &vars))
                    .collect();
                if !unreached.is_empty() {
                    unreached
                } else {
                    let deepest = (0..m)
                        .filter(|&c| open(c, &checks, &vars))
                        .map(|c| reached[c])
                        .max()?;
                    (0..m)
                        .filter(|&c| open(c, &checks, &vars) && reached[c] == deepest)
                        .collect()
                }
            };
            let min_deg = candidates.iter().map(|&c| checks[c].len()).min()?;
            let mut ties: Vec<usize> = candidates.into_iter().filter(|&c| checks[c].len() == min_deg).collect();
            ties.shuffle(&mut rng);
            let c = ties[0];
            checks[c].push(v);
            vars[v].push(c);
        }
    }
    Some(checks)
}

/// Depth (in check layers) at which each check is first reached from `v`.
fn bfs_levels(v: usize, checks: &[Vec<usize>], vars: &[Vec<usize>], m: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; m];
    let mut var_seen = vec![false; vars.len()];
    var_seen[v] = true;
    let mut frontier: Vec<usize> = Vec::new();
    for &c in &vars[v] {
        level[c] = 0;
        frontier.push(c);
    }
    let mut depth = 0;
    while !frontier.is_empty() {
        depth += 1;
        let mut next = Vec::new();
        for &c in &frontier {
            for &u in &checks[c] {
                if std::mem::replace(&mut var_seen[u], true) {
                    continue;
                }
                for &c2 in &vars[u] {
                    if level[c2] == usize::MAX {
                        level[c2] = depth;
                        next.push(c2);
                    }
                }
            }
        }
        frontier = next;
    }
    level
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// Hard decisions on the whole codeword.
    pub bits: Vec<u8>,
    pub info_bits: Vec<u8>,
    /// A-posteriori LLRs, clipped.
    pub llr: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Sum-product decoding with early exit once the hard decisions satisfy
/// every check. A bit whose posterior LLR is exactly zero counts as
/// undecided and blocks convergence.
pub fn bp_decode(llr: &[f64], code: &LdpcCode, max_iter: usize) -> Result<DecodeOutput> {
    if llr.len() != code.n {
        return Err(Error::Dimension {
            expected: code.n,
            got: llr.len(),
        });
    }
    let channel: Vec<f64> = llr.iter().map(|&x| clip_llr(x)).collect();
    // Edges are numbered check-major.
    let mut offsets = Vec::with_capacity(code.checks.len() + 1);
    offsets.push(0);
    for row in &code.checks {
        offsets.push(offsets.last().unwrap() + row.len());
    }
    let edges = *offsets.last().unwrap();
    let edge_var: Vec<usize> = code.checks.iter().flatten().copied().collect();
    let mut v2c: Vec<f64> = edge_var.iter().map(|&v| channel[v]).collect();
    let mut c2v = vec![0.0; edges];
    let mut total = channel.clone();
    let mut bits = vec![0u8; code.n];
    let mut converged = false;
    let mut iterations = 0;
    let mut tanh_buf = Vec::new();
    let mut suffix = Vec::new();

    for it in 1..=max_iter {
        iterations = it;
        for r in 0..code.checks.len() {
            let (a, b) = (offsets[r], offsets[r + 1]);
            tanh_buf.clear();
            tanh_buf.extend(v2c[a..b].iter().map(|&x| (x / 2.0).tanh()));
            suffix.clear();
            suffix.resize(b - a + 1, 1.0);
            for i in (0..b - a).rev() {
                suffix[i] = suffix[i + 1] * tanh_buf[i];
            }
            let mut prefix = 1.0;
            for i in 0..b - a {
                let p = (prefix * suffix[i + 1]).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                c2v[a + i] = clip_llr(2.0 * p.atanh());
                prefix *= tanh_buf[i];
            }
        }
        total.copy_from_slice(&channel);
        for e in 0..edges {
            total[edge_var[e]] += c2v[e];
        }
        for e in 0..edges {
            v2c[e] = clip_llr(total[edge_var[e]] - c2v[e]);
        }
        for (b, &t) in bits.iter_mut().zip(&total) {
            *b = u8::from(t < 0.0);
        }
        if total.iter().all(|&t| t != 0.0) && code.is_codeword(&bits) {
            converged = true;
            break;
        }
    }
    let llr_out: Vec<f64> = total.iter().map(|&t| clip_llr(t)).collect();
    if max_iter == 0 {
        for (b, &t) in bits.iter_mut().zip(&llr_out) {
            *b = u8::from(t < 0.0);
        }
    }
    Ok(DecodeOutput {
        info_bits: code.extract_info(&bits),
        bits,
        llr: llr_out,
        converged,
        iterations,
    })
}
