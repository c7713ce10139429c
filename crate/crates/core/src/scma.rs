//! SCMA codebooks, delay/Doppler partitioning of the lattice, and per-block
//! resource hopping of user groups across partition slots.
//!
//! Users in one group share a slot through their sparse codebooks; groups
//! never overlap. Each block, a seeded permutation decides which slot each
//! group occupies. Transmitter and receiver derive the same permutation
//! from `(hop_seed, block_index)`.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::ddcore::{DdBlock, DdGrid, C64};
use crate::error::{Error, Result};
use crate::seed::{self, role};

const NONZERO_EPS: f64 = 1e-9;
const ENERGY_TOLERANCE: f64 = 0.01;

/// Per-user SCMA codebooks: `J` users, `Q` codewords of `K` resources each,
/// `D` of which are non-zero. Codeword `q` carries the bits of `q` in
/// natural binary order, most significant bit first.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmaCodebook {
    resources: usize,
    size: usize,
    nonzeros: usize,
    codewords: Vec<Vec<Vec<C64>>>,
    supports: Vec<Vec<usize>>,
}

const REFERENCE: &str = include_str!("../data/scma_j6_k4_q4.cb");

impl ScmaCodebook {
    /// The bundled `J=6, K=4, Q=4, D=2` codebook.
    pub fn reference() -> Self {
        Self::parse(REFERENCE, false).expect("bundled codebook is valid")
    }

    pub fn load(path: impl AsRef<Path>, renormalize: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, renormalize)
    }

    /// Build from `codewords[user][q][k]`, checking every structural
    /// invariant. With `renormalize`, each user's mean codeword energy is
    /// scaled to one instead of being rejected when it deviates.
    pub fn from_codewords(codewords: Vec<Vec<Vec<C64>>>, nonzeros: usize, renormalize: bool) -> Result<Self> {
        let j = codewords.len();
        if j == 0 {
            return Err(Error::Codebook("no users".into()));
        }
        let q = codewords[0].len();
        if q < 2 || !q.is_power_of_two() {
            return Err(Error::Codebook(format!("codebook size {q} is not a power of two >= 2")));
        }
        let k = codewords[0].first().map_or(0, Vec::len);
        if k == 0 || nonzeros == 0 || nonzeros > k {
            return Err(Error::Codebook(format!("invalid shape K={k}, D={nonzeros}")));
        }
        let mut codewords = codewords;
        let mut supports = Vec::with_capacity(j);
        for (u, book) in codewords.iter_mut().enumerate() {
            if book.len() != q {
                return Err(Error::Codebook(format!("user {u} has {} codewords, expected {q}", book.len())));
            }
            let mut support: Option<Vec<usize>> = None;
            for (idx, cw) in book.iter().enumerate() {
                if cw.len() != k {
                    return Err(Error::Codebook(format!(
                        "user {u} codeword {idx} has {} resources, expected {k}",
                        cw.len()
                    )));
                }
                let nz: Vec<usize> = (0..k).filter(|&r| cw[r].norm() > NONZERO_EPS).collect();
                if nz.len() != nonzeros {
                    return Err(Error::Codebook(format!(
                        "user {u} codeword {idx} has {} non-zero entries, expected {nonzeros}",
                        nz.len()
                    )));
                }
                match &support {
                    None => support = Some(nz),
                    Some(s) if *s != nz => {
                        return Err(Error::Codebook(format!(
                            "user {u} codeword {idx} leaves the user's support {s:?}"
                        )))
                    }
                    _ => {}
                }
            }
            let energy = book
                .iter()
                .map(|cw| cw.iter().map(|v| v.norm_sqr()).sum::<f64>())
                .sum::<f64>()
                / q as f64;
            if (energy - 1.0).abs() > ENERGY_TOLERANCE {
                if !renormalize {
                    return Err(Error::Codebook(format!(
                        "user {u} mean codeword energy {energy:.6} deviates from 1 by more than 1%"
                    )));
                }
                let s = 1.0 / energy.sqrt();
                book.iter_mut().flatten().for_each(|v| *v *= s);
            }
            supports.push(support.expect("q >= 2"));
        }
        if (j * nonzeros) % k != 0 {
            return Err(Error::Codebook(format!(
                "J·D = {} is not a multiple of K = {k}; resource degrees cannot be equal",
                j * nonzeros
            )));
        }
        let degree = j * nonzeros / k;
        for r in 0..k {
            let d = supports.iter().filter(|s| s.contains(&r)).count();
            if d != degree {
                return Err(Error::Codebook(format!(
                    "resource {r} is used by {d} users, expected {degree}"
                )));
            }
        }
        Ok(Self {
            resources: k,
            size: q,
            nonzeros,
            codewords,
            supports,
        })
    }

    /// Parse the text format produced by [`ScmaCodebook::to_text`].
    pub fn parse(text: &str, renormalize: bool) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "empty codebook".into(),
        })?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("scma-codebook") {
            return Err(Error::Parse {
                line: hline,
                msg: "expected `scma-codebook` header".into(),
            });
        }
        let (mut j, mut k, mut q, mut d) = (None, None, None, None);
        for f in fields {
            let (key, value) = f.split_once('=').ok_or(Error::Parse {
                line: hline,
                msg: format!("malformed header field `{f}`"),
            })?;
            let num = || {
                value.parse::<usize>().map_err(|_| Error::Parse {
                    line: hline,
                    msg: format!("bad value for {key}"),
                })
            };
            match key {
                "J" => j = Some(num()?),
                "K" => k = Some(num()?),
                "Q" => q = Some(num()?),
                "D" => d = Some(num()?),
                "labeling" if value == "natural" => {}
                "labeling" => {
                    return Err(Error::Parse {
                        line: hline,
                        msg: format!("unsupported labeling `{value}`"),
                    })
                }
                _ => {
                    return Err(Error::Parse {
                        line: hline,
                        msg: format!("unknown header field `{key}`"),
                    })
                }
            }
        }
        let missing = |name: &str| Error::Parse {
            line: hline,
            msg: format!("header lacks {name}"),
        };
        let (j, k, q, d) = (
            j.ok_or_else(|| missing("J"))?,
            k.ok_or_else(|| missing("K"))?,
            q.ok_or_else(|| missing("Q"))?,
            d.ok_or_else(|| missing("D"))?,
        );
        let mut codewords = Vec::with_capacity(j);
        for u in 0..j {
            let (line, l) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("missing block for user {u}"),
            })?;
            if l != format!("user {u}") {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected `user {u}`"),
                });
            }
            let mut book = Vec::with_capacity(q);
            for _ in 0..q {
                let (line, l) = lines.next().ok_or(Error::Parse {
                    line: 0,
                    msg: format!("user {u} has fewer than {q} codewords"),
                })?;
                let cw = l
                    .split_whitespace()
                    .map(|tok| {
                        let (re, im) = tok.split_once(',')?;
                        Some(C64::new(re.parse().ok()?, im.parse().ok()?))
                    })
                    .collect::<Option<Vec<_>>>()
                    .ok_or(Error::Parse {
                        line,
                        msg: "codeword entries must be `re,im` pairs".into(),
                    })?;
                if cw.len() != k {
                    return Err(Error::Parse {
                        line,
                        msg: format!("expected {k} entries, found {}", cw.len()),
                    });
                }
                book.push(cw);
            }
            codewords.push(book);
        }
        if let Some((line, _)) = lines.next() {
            return Err(Error::Parse {
                line,
                msg: "trailing content after last user".into(),
            });
        }
        Self::from_codewords(codewords, d, renormalize)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "scma-codebook J={} K={} Q={} D={} labeling=natural\n",
            self.users(),
            self.resources,
            self.size,
            self.nonzeros
        );
        for (u, book) in self.codewords.iter().enumerate() {
            let _ = writeln!(s, "user {u}");
            for cw in book {
                let row: Vec<String> = cw.iter().map(|v| format!("{:.15e},{:.15e}", v.re, v.im)).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }

    /// A codebook restricted to the listed users, re-validated.
    pub fn subset(&self, users: &[usize]) -> Result<Self> {
        let books = users
            .iter()
            .map(|&u| {
                self.codewords
                    .get(u)
                    .cloned()
                    .ok_or_else(|| Error::Codebook(format!("no user {u}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_codewords(books, self.nonzeros, false)
    }

    pub fn users(&self) -> usize {
        self.codewords.len()
    }

    pub fn resources(&self) -> usize {
        self.resources
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn nonzeros(&self) -> usize {
        self.nonzeros
    }

    pub fn bits_per_codeword(&self) -> usize {
        self.size.trailing_zeros() as usize
    }

    /// Number of users sharing each resource.
    pub fn resource_degree(&self) -> usize {
        self.users() * self.nonzeros / self.resources
    }

    pub fn codeword(&self, user: usize, index: usize) -> &[C64] {
        &self.codewords[user][index]
    }

    pub fn support(&self, user: usize) -> &[usize] {
        &self.supports[user]
    }

    /// Codewords of `user` restricted to its support: `[q][d]`.
    pub fn compact(&self, user: usize) -> Vec<Vec<C64>> {
        self.codewords[user]
            .iter()
            .map(|cw| self.supports[user].iter().map(|&r| cw[r]).collect())
            .collect()
    }

    pub fn mean_energy(&self, user: usize) -> f64 {
        self.codewords[user]
            .iter()
            .map(|cw| cw.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / self.size as f64
    }
}

/// Bit `i` (MSB first) of codeword label `q`.
#[inline]
pub fn label_bit(q: usize, i: usize, bits_per_codeword: usize) -> u8 {
    ((q >> (bits_per_codeword - 1 - i)) & 1) as u8
}

/// Group `log2 Q` bits into codeword labels.
pub fn encode_indices(bits: &[u8], bits_per_codeword: usize) -> Result<Vec<usize>> {
    if bits_per_codeword == 0 || bits.len() % bits_per_codeword != 0 {
        return Err(Error::Config(format!(
            "{} bits do not divide into {bits_per_codeword}-bit labels",
            bits.len()
        )));
    }
    Ok(bits
        .chunks(bits_per_codeword)
        .map(|c| c.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize))
        .collect())
}

pub fn indices_to_bits(indices: &[usize], bits_per_codeword: usize) -> Vec<u8> {
    indices
        .iter()
        .flat_map(|&q| (0..bits_per_codeword).map(move |i| label_bit(q, i, bits_per_codeword)))
        .collect()
}

/// Map coded bits of one user to its `K`-resource codewords.
pub fn scma_encode(coded_bits: &[u8], user: usize, codebook: &ScmaCodebook) -> Result<Vec<Vec<C64>>> {
    if user >= codebook.users() {
        return Err(Error::Codebook(format!("no user {user}")));
    }
    Ok(encode_indices(coded_bits, codebook.bits_per_codeword())?
        .into_iter()
        .map(|q| codebook.codeword(user, q).to_vec())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartitionAxis {
    Delay,
    Doppler,
}

impl PartitionAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Delay => "delay",
            Self::Doppler => "doppler",
        }
    }
}

impl std::str::FromStr for PartitionAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delay" => Ok(Self::Delay),
            "doppler" => Ok(Self::Doppler),
            _ => Err(Error::Config(format!("unknown partition axis `{s}`"))),
        }
    }
}

/// Equal split of the lattice into `G` slots along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionScheme {
    pub axis: PartitionAxis,
    pub groups: usize,
    m: usize,
    n: usize,
}

impl PartitionScheme {
    pub fn new(axis: PartitionAxis, groups: usize, grid: &DdGrid) -> Result<Self> {
        let extent = match axis {
            PartitionAxis::Delay => grid.m(),
            PartitionAxis::Doppler => grid.n(),
        };
        if groups == 0 || extent % groups != 0 {
            return Err(Error::Config(format!(
                "{} axis of length {extent} cannot be split into {groups} equal slots",
                axis.as_str()
            )));
        }
        Ok(Self {
            axis,
            groups,
            m: grid.m(),
            n: grid.n(),
        })
    }

    /// Length of one slot along the partition axis.
    pub fn slot_extent(&self) -> usize {
        match self.axis {
            PartitionAxis::Delay => self.m / self.groups,
            PartitionAxis::Doppler => self.n / self.groups,
        }
    }

    /// Rows (delay axis) or columns (Doppler axis) of `slot`.
    pub fn slot_range(&self, slot: usize) -> Range<usize> {
        let e = self.slot_extent();
        slot * e..(slot + 1) * e
    }

    pub fn bins_per_slot(&self) -> usize {
        self.m * self.n / self.groups
    }

    pub fn slot_of_bin(&self, bin: usize) -> usize {
        let (alpha, beta) = (bin % self.m, bin / self.m);
        match self.axis {
            PartitionAxis::Delay => alpha / self.slot_extent(),
            PartitionAxis::Doppler => beta / self.slot_extent(),
        }
    }

    pub fn codewords_per_slot(&self, k: usize) -> Result<usize> {
        if k == 0 || self.slot_extent() % k != 0 {
            return Err(Error::Allocation(format!(
                "codeword length {k} does not divide slot extent {}",
                self.slot_extent()
            )));
        }
        Ok(self.bins_per_slot() / k)
    }

    /// The `k` consecutive bins along the partition axis used by codeword
    /// position `p` of `slot`; positions run delay-fastest, then Doppler.
    pub fn codeword_bins(&self, slot: usize, p: usize, k: usize) -> Vec<usize> {
        let e = self.slot_extent();
        let start = slot * e;
        match self.axis {
            PartitionAxis::Delay => {
                let per_col = e / k;
                let beta = p / per_col;
                let row0 = start + (p % per_col) * k;
                (0..k).map(|r| row0 + r + beta * self.m).collect()
            }
            PartitionAxis::Doppler => {
                let alpha = p % self.m;
                let col0 = start + (p / self.m) * k;
                (0..k).map(|r| alpha + (col0 + r) * self.m).collect()
            }
        }
    }
}

/// Group-to-slot assignment for one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopState {
    pub seed: u64,
    pub block_index: u64,
    /// `permutation[group] = slot`.
    pub permutation: Vec<usize>,
}

pub fn gen_hop_permutation(seed: u64, block_index: u64, groups: usize, enabled: bool) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..groups).collect();
    if enabled && groups > 1 {
        let mut rng = seed::rng_for(seed, &[role::HOP, block_index]);
        perm.shuffle(&mut rng);
    }
    perm
}

impl HopState {
    pub fn new(seed: u64, block_index: u64, groups: usize, enabled: bool) -> Self {
        Self {
            seed,
            block_index,
            permutation: gen_hop_permutation(seed, block_index, groups, enabled),
        }
    }

    pub fn identity(groups: usize) -> Self {
        Self::new(0, 0, groups, false)
    }

    pub fn from_permutation(permutation: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; permutation.len()];
        for &s in &permutation {
            if s >= seen.len() || std::mem::replace(&mut seen[s], true) {
                return Err(Error::Allocation(format!("{permutation:?} is not a permutation")));
            }
        }
        Ok(Self {
            seed: 0,
            block_index: 0,
            permutation,
        })
    }

    pub fn slot_of(&self, group: usize) -> usize {
        self.permutation[group]
    }

    pub fn group_in_slot(&self, slot: usize) -> usize {
        self.permutation
            .iter()
            .position(|&s| s == slot)
            .expect("permutation is a bijection")
    }
}

/// Where each codeword of one group lands on the lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementMap {
    pub group: usize,
    pub slot: usize,
    pub resources: usize,
    /// Codeword `p` occupies `bins[p*K .. (p+1)*K]`, resource order.
    pub bins: Vec<usize>,
}

pub fn placement_map(scheme: &PartitionScheme, hop: &HopState, group: usize, k: usize) -> Result<PlacementMap> {
    if hop.permutation.len() != scheme.groups || group >= scheme.groups {
        return Err(Error::Allocation(format!(
            "hop state covers {} groups, scheme has {} (group {group})",
            hop.permutation.len(),
            scheme.groups
        )));
    }
    let slot = hop.slot_of(group);
    let count = scheme.codewords_per_slot(k)?;
    let bins = (0..count).flat_map(|p| scheme.codeword_bins(slot, p, k)).collect();
    Ok(PlacementMap {
        group,
        slot,
        resources: k,
        bins,
    })
}

impl PlacementMap {
    pub fn codewords(&self) -> usize {
        self.bins.len() / self.resources
    }

    pub fn codeword_bins(&self, p: usize) -> &[usize] {
        &self.bins[p * self.resources..(p + 1) * self.resources]
    }

    /// `(codeword, resource)` for a lattice bin, if the group uses it.
    pub fn locate(&self, bin: usize) -> Option<(usize, usize)> {
        self.bins
            .iter()
            .position(|&b| b == bin)
            .map(|i| (i / self.resources, i % self.resources))
    }

    /// FNV-1a digest of the placement, compared between transmitter and
    /// receiver to catch hop-state mismatches.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in &self.bins {
            for byte in (b as u64).to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn verify(&self, expected: u64) -> Result<()> {
        if self.checksum() == expected {
            Ok(())
        } else {
            Err(Error::Allocation(format!(
                "placement checksum mismatch for group {}: receiver {:#x}, transmitter {expected:#x}",
                self.group,
                self.checksum()
            )))
        }
    }
}

/// Place each user's codewords of `group` onto its own DD block.
pub fn allocate(
    codewords: &[Vec<Vec<C64>>],
    scheme: &PartitionScheme,
    hop: &HopState,
    group: usize,
    grid: &DdGrid,
) -> Result<Vec<DdBlock>> {
    let k = codewords
        .iter()
        .flat_map(|u| u.first())
        .map(Vec::len)
        .next()
        .ok_or_else(|| Error::Allocation("no codewords".into()))?;
    let map = placement_map(scheme, hop, group, k)?;
    codewords
        .iter()
        .map(|user_cws| allocate_user(user_cws, &map, grid))
        .collect()
}

pub fn allocate_user(codewords: &[Vec<C64>], map: &PlacementMap, grid: &DdGrid) -> Result<DdBlock> {
    if codewords.len() != map.codewords() {
        return Err(Error::Allocation(format!(
            "{} codewords supplied, slot holds {}",
            codewords.len(),
            map.codewords()
        )));
    }
    let mut block = DdBlock::zeros(grid);
    let data = block.as_vec_mut();
    for (p, cw) in codewords.iter().enumerate() {
        if cw.len() != map.resources {
            return Err(Error::Allocation(format!(
                "codeword {p} has {} resources, expected {}",
                cw.len(),
                map.resources
            )));
        }
        for (&b, v) in map.codeword_bins(p).iter().zip(cw) {
            data[b] = *v;
        }
    }
    Ok(block)
}

/// Read one user's codewords back out of its DD block.
pub fn deallocate(
    dd_block: &DdBlock,
    scheme: &PartitionScheme,
    hop: &HopState,
    group: usize,
    k: usize,
) -> Result<Vec<Vec<C64>>> {
    let map = placement_map(scheme, hop, group, k)?;
    let data = dd_block.as_vec();
    Ok((0..map.codewords())
        .map(|p| map.codeword_bins(p).iter().map(|&b| data[b]).collect())
        .collect())
}
