//! Poisson channel models for the two receivers and the information
//! quantities that set detection latency.
//!
//! A [`ChannelModel`] lists independent Poisson channels with their mean
//! counts per time step under the pre- and post-change objects. Rates are
//! `N` times per-photon detection probabilities; photons that miss every
//! channel (higher-order modes for TriSPADE, light outside the pixel grid
//! for direct imaging) are simply not observed.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bessel::bessel_j012;
use crate::optics::{OpticsError, Psf, PsfKind};
use crate::scene::{is_registered, Moments, ObjectModel, Vec2};

const RATE_SLACK: f64 = 1e-9;
const MIN_CAPTURED: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("object `{label}` is not centroid-registered (centroid ({x:e}, {y:e}), weight {weight})")]
    NotRegistered { label: String, x: f64, y: f64, weight: f64 },
    #[error("gamma must be positive and finite, got {0}")]
    InvalidGamma(f64),
    #[error("photons per step must be positive and finite, got {0}")]
    InvalidPhotonNumber(f64),
    #[error("invalid pixel grid: {0}")]
    InvalidGrid(String),
    #[error("pixel grid captures only {captured:.4} of the light (need at least {MIN_CAPTURED})")]
    GridTooCoarse { captured: f64 },
    #[error("channel {id}: invalid rates ({pre}, {post})")]
    InvalidRate { id: String, pre: f64, post: f64 },
    #[error("total rate {total} exceeds photons per step {n}")]
    RateExceedsPhotons { total: f64, n: f64 },
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Receiver {
    DirectImaging,
    #[serde(rename = "trispade")]
    TriSpade,
}

impl fmt::Display for Receiver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Receiver::DirectImaging => "direct",
            Receiver::TriSpade => "trispade",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelId {
    /// PSF-adapted mode `(n, m)` with n + m ≤ 1.
    Mode(u8, u8),
    /// Pixel column `ix`, row `iy`, counted from the grid's lower-left.
    Pixel(u32, u32),
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelId::Mode(n, m) => write!(f, "{n}{m}"),
            ChannelId::Pixel(ix, iy) => write!(f, "px_{ix}_{iy}"),
        }
    }
}

/// Square focal-plane array centered on the optical axis. Lengths in σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelGrid {
    pub pitch: f64,
    pub half_extent: f64,
    /// Midpoint sub-samples per pixel along each axis.
    #[serde(default = "default_subsamples")]
    pub subsamples: usize,
}

fn default_subsamples() -> usize {
    2
}

impl PixelGrid {
    /// Default grid for a PSF kind. The Airy grid is finer because the
    /// intensity zeros carry the direct-imaging information and must be
    /// resolved.
    pub fn default_for(kind: PsfKind) -> Self {
        match kind {
            PsfKind::Gaussian => Self {
                pitch: 0.1,
                half_extent: 6.0,
                subsamples: 2,
            },
            PsfKind::Airy => Self {
                pitch: 0.025,
                half_extent: 10.0,
                subsamples: 2,
            },
        }
    }

    /// Pixels per axis.
    pub fn pixels(&self) -> usize {
        (2.0 * self.half_extent / self.pitch).round() as usize
    }

    fn validate(&self) -> Result<(), ChannelError> {
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(ChannelError::InvalidGrid(format!("pitch {} must be positive", self.pitch)));
        }
        if !(self.half_extent >= 3.0 && self.half_extent.is_finite()) {
            return Err(ChannelError::InvalidGrid(format!(
                "half-extent {} must be at least 3 sigma",
                self.half_extent
            )));
        }
        if self.subsamples == 0 {
            return Err(ChannelError::InvalidGrid("subsamples must be at least 1".into()));
        }
        if self.pixels() > 1 << 14 {
            return Err(ChannelError::InvalidGrid(format!("{} pixels per axis is too many", self.pixels())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelMeta {
    Pixels(PixelGrid),
    Modes,
}

/// One channel's rates, as exported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub id: ChannelId,
    pub lambda_pre: f64,
    pub lambda_post: f64,
}

/// Independent Poisson channels with rates per time step under each
/// hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    ids: Vec<ChannelId>,
    pre: Vec<f64>,
    post: Vec<f64>,
    receiver: Receiver,
    meta: ChannelMeta,
}

impl ChannelModel {
    /// Validates rates (finite, non-negative, totals at most `n_photons`).
    pub fn new(
        channels: Vec<Channel>,
        receiver: Receiver,
        meta: ChannelMeta,
        n_photons: f64,
    ) -> Result<Self, ChannelError> {
        let mut ids = Vec::with_capacity(channels.len());
        let mut pre = Vec::with_capacity(channels.len());
        let mut post = Vec::with_capacity(channels.len());
        for c in channels {
            let ok = |v: f64| v.is_finite() && v >= 0.0;
            if !ok(c.lambda_pre) || !ok(c.lambda_post) {
                return Err(ChannelError::InvalidRate {
                    id: c.id.to_string(),
                    pre: c.lambda_pre,
                    post: c.lambda_post,
                });
            }
            ids.push(c.id);
            pre.push(c.lambda_pre);
            post.push(c.lambda_post);
        }
        for total in [pre.iter().sum::<f64>(), post.iter().sum::<f64>()] {
            if total > n_photons * (1.0 + RATE_SLACK) {
                return Err(ChannelError::RateExceedsPhotons { total, n: n_photons });
            }
        }
        Ok(Self {
            ids,
            pre,
            post,
            receiver,
            meta,
        })
    }

    /// Builds a model from raw rate vectors without the photon-budget check;
    /// rates must still be finite and non-negative.
    pub fn from_rates(pre: Vec<f64>, post: Vec<f64>) -> Result<Self, ChannelError> {
        assert_eq!(pre.len(), post.len(), "rate vectors differ in length");
        let channels = pre
            .iter()
            .zip(&post)
            .enumerate()
            .map(|(k, (&a, &b))| Channel {
                id: ChannelId::Pixel(k as u32, 0),
                lambda_pre: a,
                lambda_post: b,
            })
            .collect();
        Self::new(channels, Receiver::DirectImaging, ChannelMeta::Modes, f64::INFINITY)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn receiver(&self) -> Receiver {
        self.receiver
    }

    pub fn meta(&self) -> &ChannelMeta {
        &self.meta
    }

    pub fn lambda_pre(&self) -> &[f64] {
        &self.pre
    }

    pub fn lambda_post(&self) -> &[f64] {
        &self.post
    }

    pub fn ids(&self) -> &[ChannelId] {
        &self.ids
    }

    pub fn channels(&self) -> impl Iterator<Item = Channel> + '_ {
        (0..self.len()).map(move |k| Channel {
            id: self.ids[k],
            lambda_pre: self.pre[k],
            lambda_post: self.post[k],
        })
    }

    pub fn total_pre(&self) -> f64 {
        self.pre.iter().sum()
    }

    pub fn total_post(&self) -> f64 {
        self.post.iter().sum()
    }

    /// The same channels with the hypotheses exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pre: self.post.clone(),
            post: self.pre.clone(),
            ..self.clone()
        }
    }
}

/// A pre/post object pair seen through one PSF at one scale.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub pre: ObjectModel,
    pub post: ObjectModel,
    /// Object extent over PSF width.
    pub gamma: f64,
    /// Mean detected photons per time step, N.
    pub photons_per_step: f64,
    pub psf: Psf,
}

impl Scenario {
    /// Checks that both objects are normalized and centroid-registered;
    /// warns when γ leaves the validated range (0, 1].
    pub fn new(
        pre: ObjectModel,
        post: ObjectModel,
        gamma: f64,
        photons_per_step: f64,
        psf: Psf,
    ) -> Result<Self, ChannelError> {
        for obj in [&pre, &post] {
            if !is_registered(obj) {
                let c = obj.centroid();
                return Err(ChannelError::NotRegistered {
                    label: obj.label().to_string(),
                    x: c.x,
                    y: c.y,
                    weight: obj.total_weight(),
                });
            }
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(ChannelError::InvalidGamma(gamma));
        }
        if !(photons_per_step > 0.0 && photons_per_step.is_finite()) {
            return Err(ChannelError::InvalidPhotonNumber(photons_per_step));
        }
        if gamma > 1.0 {
            log::warn!("gamma = {gamma} is outside the validated range (0, 1]");
        }
        Ok(Self {
            pre,
            post,
            gamma,
            photons_per_step,
            psf,
        })
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self, ChannelError> {
        Self::new(self.pre.clone(), self.post.clone(), gamma, self.photons_per_step, self.psf.clone())
    }

    pub fn objects(&self) -> [&ObjectModel; 2] {
        [&self.pre, &self.post]
    }
}

/// TriSPADE rates: `λ_{j,m} = N Σ_i w_i p_m(γ x_i)` for modes 00, 10, 01.
pub fn trispade_channels(sc: &Scenario) -> Result<ChannelModel, ChannelError> {
    let mut rates = [[0.0; 3]; 2];
    for (j, obj) in sc.objects().into_iter().enumerate() {
        for (p, w) in obj.masses() {
            if w == 0.0 {
                continue;
            }
            let probs = sc.psf.mode_probabilities(p.scale(sc.gamma))?.as_array();
            for m in 0..3 {
                rates[j][m] += w * probs[m];
            }
        }
    }
    let n = sc.photons_per_step;
    let ids = [ChannelId::Mode(0, 0), ChannelId::Mode(1, 0), ChannelId::Mode(0, 1)];
    let channels = (0..3)
        .map(|m| Channel {
            id: ids[m],
            lambda_pre: n * rates[0][m],
            lambda_post: n * rates[1][m],
        })
        .collect();
    ChannelModel::new(channels, Receiver::TriSpade, ChannelMeta::Modes, n)
}

/// Direct-imaging pixel rates `λ_{j,k} = N ∬_k Σ_i w_i |ψ̃(u − γ x_i)|² d²u`,
/// each pixel integrated by a midpoint rule on `subsamples²` points.
///
/// Fails when either hypothesis loses more than 5% of the light off the
/// grid.
pub fn direct_channels(sc: &Scenario, grid: &PixelGrid) -> Result<ChannelModel, ChannelError> {
    grid.validate()?;
    let npix = grid.pixels();
    let pitch = grid.pitch;
    let sub = grid.subsamples;
    let half = npix as f64 * pitch / 2.0;
    let sub_offsets: Vec<f64> = (0..sub)
        .map(|k| pitch * ((k as f64 + 0.5) / sub as f64 - 0.5))
        .collect();
    let coords: Vec<f64> = (0..npix)
        .flat_map(|i| {
            let c = -half + (i as f64 + 0.5) * pitch;
            sub_offsets.iter().map(move |o| c + o)
        })
        .collect();
    let cell_area = (pitch / sub as f64).powi(2);

    let max_shift = sc
        .objects()
        .iter()
        .flat_map(|o| o.masses())
        .map(|(p, _)| p.norm() * sc.gamma)
        .fold(0.0, f64::max);
    let eval = IntensityEval::new(&sc.psf, half * 2f64.sqrt() + max_shift + 1.0);

    let mut rates = Vec::with_capacity(2);
    for obj in sc.objects() {
        let masses: Vec<(Vec2, f64)> = obj
            .nonzero_masses()
            .into_iter()
            .map(|(p, w)| (p.scale(sc.gamma), w))
            .collect();
        let rows: Vec<Vec<f64>> = (0..npix)
            .into_par_iter()
            .map(|iy| {
                let ys = &coords[iy * sub..(iy + 1) * sub];
                (0..npix)
                    .map(|ix| {
                        let xs = &coords[ix * sub..(ix + 1) * sub];
                        let mut acc = 0.0;
                        for &y in ys {
                            for &x in xs {
                                for &(s, w) in &masses {
                                    let dx = x - s.x;
                                    let dy = y - s.y;
                                    acc += w * eval.intensity_r2(dx * dx + dy * dy);
                                }
                            }
                        }
                        sc.photons_per_step * cell_area * acc
                    })
                    .collect()
            })
            .collect();
        rates.push(rows.concat());
    }

    let n = sc.photons_per_step;
    for r in &rates {
        let captured = r.iter().sum::<f64>() / n;
        if captured < MIN_CAPTURED {
            return Err(ChannelError::GridTooCoarse { captured });
        }
    }
    let channels = (0..npix * npix)
        .map(|k| Channel {
            id: ChannelId::Pixel((k % npix) as u32, (k / npix) as u32),
            lambda_pre: rates[0][k],
            lambda_post: rates[1][k],
        })
        .collect();
    ChannelModel::new(channels, Receiver::DirectImaging, ChannelMeta::Pixels(*grid), n)
}

/// Intensity |ψ̃|² as a function of squared radius. The Airy amplitude is
/// read from a cubic-Hermite table with analytic slopes.
enum IntensityEval {
    Gaussian,
    AiryTable { step: f64, value: Vec<f64>, slope: Vec<f64> },
}

const AIRY_TABLE_STEP: f64 = 0.004;

impl IntensityEval {
    fn new(psf: &Psf, max_radius: f64) -> Self {
        match psf.kind() {
            PsfKind::Gaussian => IntensityEval::Gaussian,
            PsfKind::Airy => {
                let step = AIRY_TABLE_STEP;
                let n = (max_radius / step).ceil() as usize + 2;
                let mut value = Vec::with_capacity(n);
                let mut slope = Vec::with_capacity(n);
                for k in 0..n {
                    let r = k as f64 * step;
                    let (v, d) = airy_amplitude_and_slope(r);
                    value.push(v);
                    slope.push(d);
                }
                IntensityEval::AiryTable { step, value, slope }
            }
        }
    }

    #[inline]
    fn intensity_r2(&self, r2: f64) -> f64 {
        match self {
            IntensityEval::Gaussian => (-0.5 * r2).exp() / (2.0 * PI),
            IntensityEval::AiryTable { step, value, slope } => {
                let u = r2.sqrt() / step;
                let k = u as usize;
                let t = u - k as f64;
                let (p0, p1) = (value[k], value[k + 1]);
                let (m0, m1) = (slope[k] * step, slope[k + 1] * step);
                let t2 = t * t;
                let t3 = t2 * t;
                let a = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
                    + (t3 - 2.0 * t2 + t) * m0
                    + (-2.0 * t3 + 3.0 * t2) * p1
                    + (t3 - t2) * m1;
                a * a
            }
        }
    }
}

/// ψ(r) = √π J₁(z)/z and dψ/dr = −π^{3/2} J₂(z)/z with z = πr.
fn airy_amplitude_and_slope(r: f64) -> (f64, f64) {
    let z = PI * r;
    if z < 1e-6 {
        let sp = PI.sqrt();
        return (sp * (0.5 - z * z / 16.0), -PI * sp * z / 8.0);
    }
    let [_, j1, j2] = bessel_j012(z);
    (PI.sqrt() * j1 / z, -PI.powf(1.5) * j2 / z)
}

/// Relative entropy per time step between the post- and pre-change count
/// vectors, `Σ_k [λ₂ ln(λ₂/λ₁) − λ₂ + λ₁]` (nats). Infinite when some
/// channel is possible only after the change.
pub fn poisson_re_per_step(cm: &ChannelModel) -> f64 {
    poisson_re(cm.lambda_pre(), cm.lambda_post())
}

/// `Σ_k [λ₂ ln(λ₂/λ₁) − λ₂ + λ₁]` with 0·ln 0 = 0.
pub fn poisson_re(lambda1: &[f64], lambda2: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&l1, &l2) in lambda1.iter().zip(lambda2) {
        if l2 > 0.0 {
            if l1 == 0.0 {
                return f64::INFINITY;
            }
            total += l2 * (l2 / l1).ln() - l2 + l1;
        } else {
            total += l1;
        }
    }
    total.max(0.0)
}

/// Leading-order quantum relative entropy per photon, in nats:
/// `([m₁ₓ − m₂ₓ + m₂ₓ ln(m₂ₓ/m₁ₓ)] Γₓₓ + [y terms] Γ_yy) γ²`.
///
/// Returns +∞ (with a logged diagnostic) when the post-change object has
/// spread along an axis where the pre-change object has none.
pub fn qre_leading_order(sc: &Scenario) -> f64 {
    let c = sc.psf.curvatures();
    qre_leading_order_from_moments(sc.pre.moments(), sc.post.moments(), c.gx2, c.gy2, sc.gamma)
}

pub fn qre_leading_order_from_moments(m1: Moments, m2: Moments, gx2: f64, gy2: f64, gamma: f64) -> f64 {
    let axis = |a: f64, b: f64, name: &str| -> f64 {
        if b == 0.0 {
            a
        } else if a == 0.0 {
            log::warn!("post-change object has {name}-spread absent before the change; quantum relative entropy is infinite");
            f64::INFINITY
        } else {
            a - b + b * (b / a).ln()
        }
    };
    let value = (axis(m1.mx2, m2.mx2, "x") * gx2 + axis(m1.my2, m2.my2, "y") * gy2) * gamma * gamma;
    value.max(0.0)
}
