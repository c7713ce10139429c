//! Doubly-selective multipath channels with fractional delay and Doppler.
//!
//! A path with gain `h`, delay `ℓ+ι` samples and Doppler `k+κ` bins acts on
//! the CP-stripped time block as `h · Π^{ℓ+ι} Δ^{k+κ}`. The delay-Doppler
//! equivalent is `(F_N ⊗ I_M) Π^{ℓ+ι} Δ^{k+κ} (F_N^H ⊗ I_M)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftPlanner};

use crate::ddcore::{
    check_dense, dense_sfft, CyclicShiftPower, DdGrid, DdTransform, DopplerPhasePower,
    LinearOperator, C64,
};
use crate::error::{check_len, Error, Result};
use crate::modem::TimeBlock;

/// Propagation speed used for the Doppler conversion. 3e8 m/s reproduces
/// the 444.44 Hz maximum Doppler at 120 km/h and 4 GHz.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Relative magnitude below which a matrix entry counts as zero in the
/// sparsity census.
pub const SPARSITY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPath {
    pub gain: C64,
    /// `ℓ + ι`, in units of the sample period `T/M`.
    pub delay_taps: f64,
    /// `k + κ`, in units of `1/(NT)`.
    pub doppler_taps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub group: usize,
    pub user: usize,
    pub paths: Vec<ChannelPath>,
}

impl UserChannel {
    pub fn single_path(gain: C64, delay_taps: f64, doppler_taps: f64) -> Self {
        Self {
            group: 0,
            user: 0,
            paths: vec![ChannelPath {
                gain,
                delay_taps,
                doppler_taps,
            }],
        }
    }

    pub fn total_gain(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }

    pub fn max_delay_taps(&self) -> f64 {
        self.paths.iter().map(|p| p.delay_taps).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockFading {
    /// Independent redraw for every OTFS block.
    PerBlock,
    /// One realization held for the whole run.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub paths_per_user: usize,
    pub tau_max_samples: f64,
    pub velocity_kmh: f64,
    pub carrier_hz: f64,
    pub block_fading: BlockFading,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            paths_per_user: 5,
            tau_max_samples: 2.0,
            velocity_kmh: 120.0,
            carrier_hz: 4e9,
            block_fading: BlockFading::PerBlock,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths_per_user == 0 {
            return Err(Error::Config("paths_per_user must be at least 1".into()));
        }
        if !(self.tau_max_samples >= 0.0 && self.tau_max_samples.is_finite()) {
            return Err(Error::Config(format!(
                "tau_max_samples must be non-negative, got {}",
                self.tau_max_samples
            )));
        }
        if !(self.velocity_kmh >= 0.0 && self.carrier_hz >= 0.0) {
            return Err(Error::Config("velocity and carrier must be non-negative".into()));
        }
        Ok(())
    }

    pub fn max_doppler_hz(&self) -> f64 {
        self.velocity_kmh / 3.6 * self.carrier_hz / SPEED_OF_LIGHT
    }

    /// Doppler shift in units of `1/(NT)`.
    pub fn doppler_taps(&self, nu_hz: f64, grid: &DdGrid) -> f64 {
        nu_hz * grid.n() as f64 * grid.symbol_period()
    }

    /// Expected `Σ_i |h_i|²` for one user when `users` share the receiver.
    pub fn mean_user_gain(&self, users: usize) -> f64 {
        1.0 / users as f64
    }
}

/// Jakes Doppler for arrival angle `theta`.
pub fn jakes_doppler(max_doppler_hz: f64, theta: f64) -> f64 {
    max_doppler_hz * theta.cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEnsemble {
    pub groups: usize,
    pub users_per_group: usize,
    /// Group-major: user `(g, j)` at index `g·J + j`.
    pub users: Vec<UserChannel>,
}

impl ChannelEnsemble {
    pub fn user(&self, group: usize, user: usize) -> &UserChannel {
        &self.users[group * self.users_per_group + user]
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

pub fn sample_channels<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    grid: &DdGrid,
    groups: usize,
    users_per_group: usize,
    rng: &mut R,
) -> Result<ChannelEnsemble> {
    cfg.validate()?;
    if groups == 0 || users_per_group == 0 {
        return Err(Error::Config("need at least one group and one user".into()));
    }
    let u = groups * users_per_group;
    let p = cfg.paths_per_user;
    let component = Normal::new(0.0, (1.0 / (2.0 * (u * p) as f64)).sqrt())
        .map_err(|e| Error::Config(e.to_string()))?;
    let nu_max = cfg.max_doppler_hz();
    let mut users = Vec::with_capacity(u);
    for g in 0..groups {
        for j in 0..users_per_group {
            let paths = (0..p)
                .map(|_| {
                    let gain = C64::new(component.sample(rng), component.sample(rng));
                    let delay_taps = rng.random::<f64>() * cfg.tau_max_samples;
                    // θ uniform on (-π, π].
                    let theta = PI - 2.0 * PI * rng.random::<f64>();
                    let doppler_taps = cfg.doppler_taps(jakes_doppler(nu_max, theta), grid);
                    ChannelPath {
                        gain,
                        delay_taps,
                        doppler_taps,
                    }
                })
                .collect();
            users.push(UserChannel {
                group: g,
                user: j,
                paths,
            });
        }
    }
    Ok(ChannelEnsemble {
        groups,
        users_per_group,
        users,
    })
}

struct PathKernel {
    gain: C64,
    doppler: DopplerPhasePower,
    shift: CyclicShiftPower,
}

/// Time-domain action `Σ_i h_i Π^{x_i} Δ^{y_i}` on a CP-stripped block.
#[derive(Clone)]
pub struct TimeChannel {
    size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    paths: Arc<Vec<PathKernel>>,
}

impl fmt::Debug for TimeChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeChannel(size={}, paths={})", self.size, self.paths.len())
    }
}

impl TimeChannel {
    pub fn new(channel: &UserChannel, grid: &DdGrid) -> Result<Self> {
        let size = grid.len();
        let mut planner = FftPlanner::new();
        let paths = channel
            .paths
            .iter()
            .map(|p| {
                Ok(PathKernel {
                    gain: p.gain,
                    doppler: DopplerPhasePower::new(p.doppler_taps, size)?,
                    shift: CyclicShiftPower::new(p.delay_taps, size)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            size,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
            paths: Arc::new(paths),
        })
    }
}

impl LinearOperator for TimeChannel {
    fn dim(&self) -> usize {
        self.size
    }

    fn apply_in_place(&self, x: &mut [C64]) {
        // Sum the paths in the shift operator's eigenbasis, then one inverse FFT.
        let mut acc = vec![C64::new(0.0, 0.0); self.size];
        let mut tmp = vec![C64::new(0.0, 0.0); self.size];
        for p in self.paths.iter() {
            for ((t, v), d) in tmp.iter_mut().zip(x.iter()).zip(p.doppler.diagonal()) {
                *t = v * d;
            }
            self.fwd.process(&mut tmp);
            for ((a, t), s) in acc.iter_mut().zip(&tmp).zip(p.shift.scaled_spectrum()) {
                *a += p.gain * s * t;
            }
        }
        self.inv.process(&mut acc);
        x.copy_from_slice(&acc);
    }

    fn to_dense(&self) -> Result<DMatrix<C64>> {
        check_dense(self.size)?;
        let mut out = DMatrix::zeros(self.size, self.size);
        for p in self.paths.iter() {
            out += (p.shift.to_dense()? * p.doppler.to_dense()?) * p.gain;
        }
        Ok(out)
    }
}

/// Receiver-side contribution of one user, computed in the time domain on
/// the CP-stripped block.
pub fn apply_channel_time(tx: &TimeBlock, user_channel: &UserChannel, grid: &DdGrid) -> Result<Vec<C64>> {
    check_len(grid.len() + tx.cp_len, tx.samples.len())?;
    TimeChannel::new(user_channel, grid)?.apply(tx.body())
}

/// The equivalent `MN × MN` delay-Doppler matrix `H_{g,j}`.
#[derive(Debug, Clone)]
pub struct DdChannel {
    grid: DdGrid,
    transform: DdTransform,
    time: TimeChannel,
}

pub fn build_dd_channel_matrix(user_channel: &UserChannel, grid: &DdGrid) -> Result<DdChannel> {
    DdChannel::new(user_channel, grid)
}

impl DdChannel {
    pub fn new(user_channel: &UserChannel, grid: &DdGrid) -> Result<Self> {
        Ok(Self {
            grid: *grid,
            transform: DdTransform::new(grid),
            time: TimeChannel::new(user_channel, grid)?,
        })
    }

    pub fn time_channel(&self) -> &TimeChannel {
        &self.time
    }

    /// Columns `H e_b` for the given bins.
    pub fn columns(&self, bins: &[usize]) -> Vec<Vec<C64>> {
        let (m, n) = (self.grid.m(), self.grid.n());
        let scale = 1.0 / (n as f64).sqrt();
        bins.iter()
            .map(|&b| {
                let (alpha, k) = self.grid.coords(b);
                // Time samples of a DD impulse: e^{j2πkm/N}/√N at α + mM.
                let mut x = vec![C64::new(0.0, 0.0); m * n];
                for slot in 0..n {
                    let e = ((k * slot) % n) as f64 / n as f64;
                    x[alpha + slot * m] = C64::from_polar(scale, 2.0 * PI * e);
                }
                self.time.apply_in_place(&mut x);
                self.transform.sfft_in_place(&mut x);
                x
            })
            .collect()
    }
}

impl LinearOperator for DdChannel {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn apply_in_place(&self, x: &mut [C64]) {
        self.transform.isfft_in_place(x);
        self.time.apply_in_place(x);
        self.transform.sfft_in_place(x);
    }

    /// `Σ_i h_i (F_N⊗I_M) Π^{x_i} Δ^{y_i} (F_N^H⊗I_M)` from dense factors.
    fn to_dense(&self) -> Result<DMatrix<C64>> {
        let fwd = dense_sfft(&self.grid, false)?;
        let inv = dense_sfft(&self.grid, true)?;
        Ok(fwd * self.time.to_dense()? * inv)
    }
}

/// Block-row operator `H = [H_{1,1}, …, H_{G,J}]` acting on the stacked
/// transmit vector.
#[derive(Debug, Clone)]
pub struct StackedChannel {
    grid: DdGrid,
    users: Vec<DdChannel>,
}

pub fn stack_full_matrix(ensemble: &ChannelEnsemble, grid: &DdGrid) -> Result<StackedChannel> {
    StackedChannel::new(ensemble, grid)
}

impl StackedChannel {
    pub fn new(ensemble: &ChannelEnsemble, grid: &DdGrid) -> Result<Self> {
        let users = ensemble
            .users
            .iter()
            .map(|u| DdChannel::new(u, grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: *grid, users })
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn user(&self, index: usize) -> &DdChannel {
        &self.users[index]
    }

    pub fn grid(&self) -> &DdGrid {
        &self.grid
    }

    /// `y = Σ_u H_u x_u` for the stacked `x` of length `MN·U`.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        let l = self.grid.len();
        check_len(l * self.users.len(), x.len())?;
        let mut y = vec![C64::new(0.0, 0.0); l];
        for (u, h) in self.users.iter().enumerate() {
            let part = h.apply(&x[u * l..(u + 1) * l])?;
            for (a, b) in y.iter_mut().zip(part) {
                *a += b;
            }
        }
        Ok(y)
    }

    /// Count of entries of the stacked matrix whose magnitude exceeds
    /// `rel_threshold` times the largest entry of their user block.
    pub fn sparsity_census(&self, rel_threshold: f64) -> usize {
        let bins: Vec<usize> = (0..self.grid.len()).collect();
        self.users
            .iter()
            .map(|h| count_above(&h.columns(&bins), rel_threshold))
            .sum()
    }
}

pub(crate) fn count_above(columns: &[Vec<C64>], rel_threshold: f64) -> usize {
    let max = columns
        .iter()
        .flat_map(|c| c.iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    columns
        .iter()
        .flat_map(|c| c.iter())
        .filter(|v| v.norm() > rel_threshold * max)
        .count()
}
