//! Codeword-level multiuser detection over `y = Σ_v A_v s_v + w`, where each
//! variable `v` is one SCMA codeword of one user and `A_v` holds the channel
//! columns of the `D` lattice bins it occupies.

use crate::channel::StackedChannel;
use crate::ddcore::C64;
use crate::error::{check_len, Error, Result};
use crate::fec::clip_llr;
use crate::scma::{label_bit, placement_map, HopState, PartitionScheme, ScmaCodebook};

const PSI_FLOOR: f64 = 1e-12;
/// Largest hypothesis count [`map_oracle_detect`] will enumerate.
pub const ORACLE_LIMIT: usize = 1 << 20;

/// One codeword variable: its sparse `MN × D` channel block, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub user: usize,
    pub position: usize,
    pub rows: Vec<usize>,
    pub coeffs: Vec<C64>,
}

/// Dense description of a variable, used to build small problems directly.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub user: usize,
    pub position: usize,
    /// `D` columns of length `MN`.
    pub columns: Vec<Vec<C64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionProblem {
    len: usize,
    dims: usize,
    size: usize,
    bits_per_codeword: usize,
    /// `codebooks[u][q*D + d]`: compact codewords of user `u`.
    codebooks: Vec<Vec<C64>>,
    vars: Vec<Variable>,
    /// Variables of user `u` are `user_vars[u]..user_vars[u+1]`, in
    /// placement order.
    user_vars: Vec<usize>,
    /// Expected power of the pruned entries on each row, treated as extra
    /// Gaussian noise.
    residual: Vec<f64>,
}

/// Keep rows where some column exceeds `threshold`; the power of the rest,
/// weighted by `energy[k]`, goes to `residual`.
fn sparsify(columns: &[Vec<C64>], threshold: f64, energy: &[f64], residual: &mut [f64]) -> (Vec<usize>, Vec<C64>) {
    let d = columns.len();
    let len = columns.first().map_or(0, Vec::len);
    let mut rows = Vec::new();
    let mut coeffs = Vec::new();
    for i in 0..len {
        if columns.iter().any(|c| c[i].norm() > threshold) {
            rows.push(i);
            coeffs.extend((0..d).map(|k| columns[k][i]));
        } else {
            residual[i] += (0..d).map(|k| columns[k][i].norm_sqr() * energy[k]).sum::<f64>();
        }
    }
    (rows, coeffs)
}

impl DetectionProblem {
    /// Build from explicit columns. `codebooks[u]` is user `u`'s compact
    /// codebook `[q][d]`; entries below `rel_threshold` times the user's
    /// largest entry are dropped.
    pub fn from_columns(
        len: usize,
        codebooks: Vec<Vec<Vec<C64>>>,
        variables: Vec<VariableSpec>,
        rel_threshold: f64,
    ) -> Result<Self> {
        let size = codebooks.first().map_or(0, Vec::len);
        let dims = codebooks.first().and_then(|b| b.first()).map_or(0, Vec::len);
        if size < 2 || !size.is_power_of_two() || dims == 0 {
            return Err(Error::Detector("codebooks must have a power-of-two size and non-empty codewords".into()));
        }
        if codebooks.iter().any(|b| b.len() != size || b.iter().any(|c| c.len() != dims)) {
            return Err(Error::Detector("all users need codebooks of the same shape".into()));
        }
        let users = codebooks.len();
        let mut variables = variables;
        variables.sort_by_key(|v| (v.user, v.position));
        let mut peak = vec![0.0f64; users];
        for v in &variables {
            if v.user >= users || v.columns.len() != dims {
                return Err(Error::Detector(format!(
                    "variable of user {} needs {dims} columns and a known user",
                    v.user
                )));
            }
            for c in &v.columns {
                check_len(len, c.len())?;
                peak[v.user] = c.iter().map(|x| x.norm()).fold(peak[v.user], f64::max);
            }
        }
        let energy: Vec<Vec<f64>> = codebooks
            .iter()
            .map(|b| (0..dims).map(|k| b.iter().map(|c| c[k].norm_sqr()).sum::<f64>() / size as f64).collect())
            .collect();
        let mut residual = vec![0.0; len];
        let vars: Vec<Variable> = variables
            .into_iter()
            .map(|v| {
                let (rows, coeffs) = sparsify(&v.columns, rel_threshold * peak[v.user], &energy[v.user], &mut residual);
                Variable {
                    user: v.user,
                    position: v.position,
                    rows,
                    coeffs,
                }
            })
            .collect();
        let mut user_vars = vec![0; users + 1];
        for v in &vars {
            user_vars[v.user + 1] += 1;
        }
        for u in 0..users {
            user_vars[u + 1] += user_vars[u];
        }
        Ok(Self {
            len,
            dims,
            size,
            bits_per_codeword: size.trailing_zeros() as usize,
            codebooks: codebooks.into_iter().map(|b| b.into_iter().flatten().collect()).collect(),
            vars,
            user_vars,
            residual,
        })
    }

    /// The stacked uplink seen through one block's placement. User index
    /// `u = g·J + j` uses codebook user `j` in group `g`. When
    /// `expected_checksums` is given, each group's placement must match the
    /// transmitter's.
    pub fn build(
        channel: &StackedChannel,
        codebook: &ScmaCodebook,
        scheme: &PartitionScheme,
        hop: &HopState,
        rel_threshold: f64,
        expected_checksums: Option<&[u64]>,
    ) -> Result<Self> {
        let j = codebook.users();
        let groups = scheme.groups;
        if channel.user_count() != groups * j {
            return Err(Error::Detector(format!(
                "channel has {} users, scheme needs {groups}×{j}",
                channel.user_count()
            )));
        }
        let k = codebook.resources();
        let mut specs = Vec::new();
        for g in 0..groups {
            let map = placement_map(scheme, hop, g, k)?;
            if let Some(sums) = expected_checksums {
                map.verify(*sums.get(g).ok_or_else(|| Error::Allocation(format!("no checksum for group {g}")))?)?;
            }
            for ju in 0..j {
                let u = g * j + ju;
                let support = codebook.support(ju);
                let bins: Vec<usize> = (0..map.codewords())
                    .flat_map(|p| {
                        let cw = map.codeword_bins(p);
                        support.iter().map(move |&r| cw[r])
                    })
                    .collect();
                let mut cols = channel.user(u).columns(&bins).into_iter();
                for p in 0..map.codewords() {
                    specs.push(VariableSpec {
                        user: u,
                        position: p,
                        columns: cols.by_ref().take(support.len()).collect(),
                    });
                }
            }
        }
        let books = (0..groups * j).map(|u| codebook.compact(u % j)).collect();
        Self::from_columns(channel.grid().len(), books, specs, rel_threshold)
    }

    /// The same observation model with only the listed users, renumbered
    /// in the given order.
    pub fn restrict_users(&self, users: &[usize]) -> Result<Self> {
        let mut vars = Vec::new();
        let mut user_vars = vec![0];
        let mut codebooks = Vec::new();
        for (new, &u) in users.iter().enumerate() {
            if u >= self.users() {
                return Err(Error::Detector(format!("no user {u}")));
            }
            vars.extend(self.vars[self.user_vars[u]..self.user_vars[u + 1]].iter().cloned().map(|mut v| {
                v.user = new;
                v
            }));
            user_vars.push(vars.len());
            codebooks.push(self.codebooks[u].clone());
        }
        Ok(Self {
            codebooks,
            vars,
            user_vars,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn users(&self) -> usize {
        self.user_vars.len() - 1
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn codewords_of(&self, user: usize) -> usize {
        self.user_vars[user + 1] - self.user_vars[user]
    }

    pub fn bits_of(&self, user: usize) -> usize {
        self.codewords_of(user) * self.bits_per_codeword
    }

    pub fn bits_per_codeword(&self) -> usize {
        self.bits_per_codeword
    }

    pub fn codebook_size(&self) -> usize {
        self.size
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Stored channel coefficients over all variables.
    pub fn nonzeros(&self) -> usize {
        self.vars.iter().map(|v| v.rows.len() * self.dims).sum()
    }

    fn codeword(&self, user: usize, q: usize) -> &[C64] {
        &self.codebooks[user][q * self.dims..(q + 1) * self.dims]
    }

    /// Noiseless observation for the given label of every variable.
    pub fn synthesize(&self, labels: &[usize]) -> Result<Vec<C64>> {
        check_len(self.vars.len(), labels.len())?;
        let mut y = vec![C64::new(0.0, 0.0); self.len];
        for (v, &q) in self.vars.iter().zip(labels) {
            let s = self.codeword(v.user, q);
            for (r, a) in v.rows.iter().zip(v.coeffs.chunks(self.dims)) {
                y[*r] += a.iter().zip(s).map(|(x, y)| x * y).sum::<C64>();
            }
        }
        Ok(y)
    }

    fn check_priors(&self, priors: &[Vec<f64>]) -> Result<()> {
        check_len(self.users(), priors.len())?;
        for (u, p) in priors.iter().enumerate() {
            check_len(self.bits_of(u), p.len())?;
        }
        Ok(())
    }

    /// Log prior of each label of variable `idx`, up to a constant.
    fn log_prior(&self, idx: usize, priors: &[Vec<f64>], out: &mut [f64]) {
        let v = &self.vars[idx];
        let bpc = self.bits_per_codeword;
        let base = (idx - self.user_vars[v.user]) * bpc;
        let llr = &priors[v.user][base..base + bpc];
        for (q, o) in out.iter_mut().enumerate() {
            *o = (0..bpc)
                .map(|i| if label_bit(q, i, bpc) == 0 { 0.5 * llr[i] } else { -0.5 * llr[i] })
                .sum();
        }
    }
}

/// Codeword probabilities for every variable, `probs[v*Q + q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPosterior {
    pub size: usize,
    pub probs: Vec<f64>,
}

impl SymbolPosterior {
    pub fn variable(&self, v: usize) -> &[f64] {
        &self.probs[v * self.size..(v + 1) * self.size]
    }

    pub fn variables(&self) -> usize {
        self.probs.len() / self.size
    }

    pub fn hard_decisions(&self) -> Vec<usize> {
        (0..self.variables())
            .map(|v| {
                let p = self.variable(v);
                (0..self.size).fold(0, |b, q| if p[q] > p[b] { q } else { b })
            })
            .collect()
    }

    /// Mean over variables of the total-variation distance.
    pub fn mean_tv_distance(&self, other: &SymbolPosterior) -> f64 {
        let v = self.variables();
        (0..v)
            .map(|i| {
                0.5 * self.variable(i).iter().zip(other.variable(i)).map(|(a, b)| (a - b).abs()).sum::<f64>()
            })
            .sum::<f64>()
            / v as f64
    }

    /// Per-bin means and variances `(mean[v*D+d], var[v*D+d])` of the
    /// complex symbols implied by the posterior.
    pub fn moments(&self, problem: &DetectionProblem) -> (Vec<C64>, Vec<f64>) {
        let d = problem.dims;
        let mut mean = vec![C64::new(0.0, 0.0); self.variables() * d];
        let mut var = vec![0.0; self.variables() * d];
        for (i, v) in problem.vars.iter().enumerate() {
            moments_into(problem, v.user, self.variable(i), &mut mean[i * d..(i + 1) * d], &mut var[i * d..(i + 1) * d]);
        }
        (mean, var)
    }
}

fn moments_into(problem: &DetectionProblem, user: usize, probs: &[f64], mean: &mut [C64], var: &mut [f64]) {
    mean.iter_mut().for_each(|m| *m = C64::new(0.0, 0.0));
    var.iter_mut().for_each(|v| *v = 0.0);
    for (q, &p) in probs.iter().enumerate() {
        for (d, s) in problem.codeword(user, q).iter().enumerate() {
            mean[d] += s * p;
            var[d] += p * s.norm_sqr();
        }
    }
    for (v, m) in var.iter_mut().zip(mean.iter()) {
        *v = (*v - m.norm_sqr()).max(0.0);
    }
}

fn normalize_log(logp: &mut [f64], probs: &mut [f64]) {
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (l, p) in logp.iter().zip(probs.iter_mut()) {
        *p = (l - max).exp();
        sum += *p;
    }
    let ln_sum = sum.ln();
    for (l, p) in logp.iter_mut().zip(probs.iter_mut()) {
        *p /= sum;
        *l -= max + ln_sum;
    }
}

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// A-posteriori bit LLRs of every user from per-variable log posteriors.
fn bit_llrs(problem: &DetectionProblem, log_post: &[f64]) -> Vec<Vec<f64>> {
    let (q, bpc) = (problem.size, problem.bits_per_codeword);
    (0..problem.users())
        .map(|u| {
            (problem.user_vars[u]..problem.user_vars[u + 1])
                .flat_map(|v| {
                    let lp = &log_post[v * q..(v + 1) * q];
                    (0..bpc).map(move |i| {
                        let zero = log_sum_exp((0..q).filter(|&x| label_bit(x, i, bpc) == 0).map(|x| lp[x]));
                        let one = log_sum_exp((0..q).filter(|&x| label_bit(x, i, bpc) == 1).map(|x| lp[x]));
                        clip_llr(zero - one)
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput {
    pub posterior: SymbolPosterior,
    /// A-posteriori bit LLRs per user, prior included.
    pub app_llr: Vec<Vec<f64>>,
    /// `app_llr − prior`, the part passed on to the decoder.
    pub extrinsic: Vec<Vec<f64>>,
    /// Complex multiply-accumulates spent.
    pub ops: u64,
    /// Some interference-plus-noise variance hit the floor.
    pub floored: bool,
}

fn finish(problem: &DetectionProblem, priors: &[Vec<f64>], probs: Vec<f64>, log_post: &[f64], ops: u64, floored: bool) -> DetectorOutput {
    let app_llr = bit_llrs(problem, log_post);
    let extrinsic = app_llr
        .iter()
        .zip(priors)
        .map(|(a, p)| a.iter().zip(p).map(|(x, y)| clip_llr(x - y)).collect())
        .collect();
    DetectorOutput {
        posterior: SymbolPosterior {
            size: problem.size,
            probs,
        },
        app_llr,
        extrinsic,
        ops,
        floored,
    }
}

/// Gaussian-approximation detector with a serial schedule.
///
/// Every variable keeps a mean and per-bin variance. For each variable in
/// turn, the others are treated as Gaussian interference: its own
/// contribution is added back to the residual to form the cavity, the `Q`
/// hypotheses are scored exactly against it together with the prior, and the
/// projected moments replace the old ones after damping by `damping`.
/// Entries pruned from the problem count as extra noise on their rows.
pub fn gaep_detect(
    problem: &DetectionProblem,
    y: &[C64],
    priors: &[Vec<f64>],
    noise_var: f64,
    iterations: usize,
    damping: f64,
) -> Result<DetectorOutput> {
    check_len(problem.len, y.len())?;
    problem.check_priors(priors)?;
    if !(noise_var > 0.0) || !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::Detector(format!(
            "noise variance {noise_var} must be positive and damping {damping} in (0, 1]"
        )));
    }
    let (d, q) = (problem.dims, problem.size);
    let nv = problem.vars.len();
    let mut log_prior = vec![0.0; nv * q];
    let mut log_post = vec![0.0; nv * q];
    let mut probs = vec![0.0; nv * q];
    let mut mean = vec![C64::new(0.0, 0.0); nv * d];
    let mut var = vec![0.0; nv * d];
    for v in 0..nv {
        problem.log_prior(v, priors, &mut log_prior[v * q..(v + 1) * q]);
        log_post[v * q..(v + 1) * q].copy_from_slice(&log_prior[v * q..(v + 1) * q]);
        normalize_log(&mut log_post[v * q..(v + 1) * q], &mut probs[v * q..(v + 1) * q]);
        moments_into(problem, problem.vars[v].user, &probs[v * q..(v + 1) * q], &mut mean[v * d..(v + 1) * d], &mut var[v * d..(v + 1) * d]);
    }

    let mut ops = 0u64;
    let mut floored = false;
    let mut r = vec![C64::new(0.0, 0.0); problem.len];
    let mut psi = vec![0.0; problem.len];
    let mut z = vec![C64::new(0.0, 0.0); d];
    let mut g = vec![C64::new(0.0, 0.0); d * d];
    let mut new_mean = vec![C64::new(0.0, 0.0); d];
    let mut new_var = vec![0.0; d];
    let mut ll = vec![0.0; q];

    for _ in 0..iterations {
        // Fresh residual and interference variance, free of drift.
        r.copy_from_slice(y);
        psi.iter_mut().zip(&problem.residual).for_each(|(p, e)| *p = noise_var + e);
        for (vi, v) in problem.vars.iter().enumerate() {
            let mu = &mean[vi * d..(vi + 1) * d];
            let s2 = &var[vi * d..(vi + 1) * d];
            for (&row, a) in v.rows.iter().zip(v.coeffs.chunks_exact(d)) {
                for k in 0..d {
                    r[row] -= a[k] * mu[k];
                    psi[row] += a[k].norm_sqr() * s2[k];
                }
            }
            ops += (2 * v.rows.len() * d) as u64;
        }

        for (vi, v) in problem.vars.iter().enumerate() {
            let mu = &mean[vi * d..(vi + 1) * d];
            let s2 = &var[vi * d..(vi + 1) * d];
            z.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            g.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            for (&row, a) in v.rows.iter().zip(v.coeffs.chunks_exact(d)) {
                let mut rc = r[row];
                let mut pc = psi[row];
                for k in 0..d {
                    rc += a[k] * mu[k];
                    pc -= a[k].norm_sqr() * s2[k];
                }
                if pc < PSI_FLOOR {
                    pc = PSI_FLOOR;
                    floored = true;
                }
                let w = 1.0 / pc;
                for k in 0..d {
                    let ak = a[k].conj() * w;
                    z[k] += ak * rc;
                    for l in 0..d {
                        g[k * d + l] += ak * a[l];
                    }
                }
            }
            ops += (v.rows.len() * (2 * d + d + d * d)) as u64;

            for (qi, l) in ll.iter_mut().enumerate() {
                let s = problem.codeword(v.user, qi);
                let mut lin = 0.0;
                let mut quad = 0.0;
                for k in 0..d {
                    lin += (s[k].conj() * z[k]).re;
                    let gs: C64 = (0..d).map(|m| g[k * d + m] * s[m]).sum();
                    quad += (s[k].conj() * gs).re;
                }
                *l = 2.0 * lin - quad + log_prior[vi * q + qi];
            }
            ops += (q * (d + d * d)) as u64;

            let lp = &mut log_post[vi * q..(vi + 1) * q];
            lp.copy_from_slice(&ll);
            let pr = &mut probs[vi * q..(vi + 1) * q];
            normalize_log(lp, pr);
            moments_into(problem, v.user, pr, &mut new_mean, &mut new_var);
            let mu = &mut mean[vi * d..(vi + 1) * d];
            let s2 = &mut var[vi * d..(vi + 1) * d];
            for k in 0..d {
                new_mean[k] = mu[k] + (new_mean[k] - mu[k]) * damping;
                new_var[k] = s2[k] + (new_var[k] - s2[k]) * damping;
            }
            for (&row, a) in v.rows.iter().zip(v.coeffs.chunks_exact(d)) {
                for k in 0..d {
                    r[row] -= a[k] * (new_mean[k] - mu[k]);
                    psi[row] += a[k].norm_sqr() * (new_var[k] - s2[k]);
                }
            }
            ops += (2 * v.rows.len() * d) as u64;
            mu.copy_from_slice(&new_mean);
            s2.copy_from_slice(&new_var);
        }
    }
    Ok(finish(problem, priors, probs, &log_post, ops, floored))
}

/// Exact posterior by enumerating every joint labelling.
pub fn map_oracle_detect(problem: &DetectionProblem, y: &[C64], priors: &[Vec<f64>], noise_var: f64) -> Result<DetectorOutput> {
    check_len(problem.len, y.len())?;
    problem.check_priors(priors)?;
    if !(noise_var > 0.0) {
        return Err(Error::Detector(format!("noise variance {noise_var} must be positive")));
    }
    let (q, nv) = (problem.size, problem.vars.len());
    let total = (0..nv).try_fold(1usize, |acc, _| acc.checked_mul(q).filter(|&t| t <= ORACLE_LIMIT));
    let total = total.ok_or_else(|| Error::Detector(format!("{q}^{nv} hypotheses exceed the oracle limit")))?;
    let mut log_prior = vec![0.0; nv * q];
    for v in 0..nv {
        problem.log_prior(v, priors, &mut log_prior[v * q..(v + 1) * q]);
    }
    let mut joint = Vec::with_capacity(total);
    let mut labels = vec![0usize; nv];
    for h in 0..total {
        let mut rem = h;
        for l in labels.iter_mut() {
            *l = rem % q;
            rem /= q;
        }
        let mean = problem.synthesize(&labels)?;
        let dist: f64 = y
            .iter()
            .zip(&mean)
            .zip(&problem.residual)
            .map(|((a, b), e)| (a - b).norm_sqr() / (noise_var + e))
            .sum();
        let prior: f64 = labels.iter().enumerate().map(|(v, &l)| log_prior[v * q + l]).sum();
        joint.push(-dist + prior);
    }
    let mut log_post = vec![f64::NEG_INFINITY; nv * q];
    for (h, &lj) in joint.iter().enumerate() {
        let mut rem = h;
        for v in 0..nv {
            let slot = &mut log_post[v * q + rem % q];
            *slot = log_sum_exp([*slot, lj].into_iter());
            rem /= q;
        }
    }
    let mut probs = vec![0.0; nv * q];
    for v in 0..nv {
        normalize_log(&mut log_post[v * q..(v + 1) * q], &mut probs[v * q..(v + 1) * q]);
    }
    Ok(finish(problem, priors, probs, &log_post, 0, false))
}
