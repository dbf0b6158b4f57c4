//! Channel noise profiles, SNR conversion and correlated Gaussian sampling.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::NoiseModel;

/// Shape of the diagonal channel covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileKind {
    /// Every channel has variance `ε_y / SNR`.
    EquiVariance,
    /// One channel in every `m` (indices `1, 1+m, 1+2m, …`) is `a` times noisier.
    NoisierSubset { m: usize, a: f64 },
    /// Channel 0 is `a` times noisier than the rest.
    SingleNoisy { a: f64 },
    /// `Σ = 0`; the SNR is ignored.
    Noiseless,
}

impl ProfileKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ProfileKind::NoisierSubset { m, a } => {
                if m < 2 {
                    return Err(Error::InvalidConfig(format!("noisier-subset needs m >= 2, got {m}")));
                }
                if !(a > 1.0 && a.is_finite()) {
                    return Err(Error::InvalidConfig(format!("noisier-subset needs a > 1, got {a}")));
                }
            }
            ProfileKind::SingleNoisy { a } => {
                if !(a > 1.0 && a.is_finite()) {
                    return Err(Error::InvalidConfig(format!("single-noisy needs a > 1, got {a}")));
                }
            }
            ProfileKind::EquiVariance | ProfileKind::Noiseless => {}
        }
        Ok(())
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileKind::EquiVariance => f.write_str("equi-variance"),
            ProfileKind::NoisierSubset { m, a } => write!(f, "noisier-subset:m={m},a={a}"),
            ProfileKind::SingleNoisy { a } => write!(f, "single-noisy:a={a}"),
            ProfileKind::Noiseless => f.write_str("noiseless"),
        }
    }
}

impl FromStr for ProfileKind {
    type Err = Error;

    /// Parses `equi-variance`, `noisier-subset:m=2,a=20`, `single-noisy:a=20` or `noiseless`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), p.trim()),
            None => (s, ""),
        };
        let mut m = None;
        let mut a = None;
        if !params.is_empty() {
            for kv in params.split(',') {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidConfig(format!("profile parameter `{kv}` is not key=value")))?;
                let bad = |e: &dyn fmt::Display| Error::InvalidConfig(format!("profile parameter `{kv}`: {e}"));
                match k.trim() {
                    "m" => m = Some(v.trim().parse::<usize>().map_err(|e| bad(&e))?),
                    "a" => a = Some(v.trim().parse::<f64>().map_err(|e| bad(&e))?),
                    other => return Err(Error::InvalidConfig(format!("unknown profile parameter `{other}`"))),
                }
            }
        }
        let kind = match name.replace('_', "-").as_str() {
            "equi-variance" => {
                if m.is_some() || a.is_some() {
                    return Err(Error::InvalidConfig("equi-variance takes no parameters".into()));
                }
                ProfileKind::EquiVariance
            }
            "noiseless" => ProfileKind::Noiseless,
            "noisier-subset" => ProfileKind::NoisierSubset {
                m: m.unwrap_or(2),
                a: a.unwrap_or(20.0),
            },
            "single-noisy" => {
                if m.is_some() {
                    return Err(Error::InvalidConfig("single-noisy takes only `a`".into()));
                }
                ProfileKind::SingleNoisy { a: a.unwrap_or(20.0) }
            }
            other => return Err(Error::InvalidConfig(format!("unknown noise profile `{other}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl Serialize for ProfileKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProfileKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A profile kind together with the operating point it is scaled to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProfileSpec {
    pub kind: ProfileKind,
    /// Linear ensemble SNR, `T ε_y / Tr(Σ)`.
    pub snr: f64,
    /// Normalized sum of squared targets.
    pub eps_y: f64,
}

impl NoiseProfileSpec {
    pub fn new(kind: ProfileKind, snr: f64) -> Self {
        Self { kind, snr, eps_y: 1.0 }
    }

    pub fn from_db(kind: ProfileKind, snr_db: f64) -> Self {
        Self::new(kind, snr_from_db(snr_db))
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::InvalidConfig(format!("snr must be positive, got {}", self.snr)));
        }
        if !(self.eps_y > 0.0 && self.eps_y.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps_y must be positive, got {}", self.eps_y)));
        }
        Ok(())
    }
}

/// Builds the diagonal covariance for `t_channels` channels.
///
/// Every noisy profile satisfies `Tr(Σ) = T ε_y / SNR`.
pub fn build_noise_profile(spec: &NoiseProfileSpec, t_channels: usize) -> Result<NoiseModel> {
    if t_channels == 0 {
        return Err(Error::InvalidConfig("noise profile needs T >= 1".into()));
    }
    if spec.kind == ProfileKind::Noiseless {
        spec.kind.validate()?;
        return NoiseModel::new(DMatrix::zeros(t_channels, t_channels), Some(*spec));
    }
    spec.validate()?;
    let t = t_channels as f64;
    let budget = t * spec.eps_y / spec.snr;
    let diag: Vec<f64> = match spec.kind {
        ProfileKind::EquiVariance => vec![spec.eps_y / spec.snr; t_channels],
        ProfileKind::NoisierSubset { m, a } => {
            let noisy = |i: usize| i % m == 1 % m;
            let k = (0..t_channels).filter(|&i| noisy(i)).count() as f64;
            // reduces to ε_y / ((1 + (a-1)/m·…) SNR) when m divides T
            let sigma2 = budget / (t - k + k * a);
            (0..t_channels)
                .map(|i| if noisy(i) { a * sigma2 } else { sigma2 })
                .collect()
        }
        ProfileKind::SingleNoisy { a } => {
            let first = budget / (1.0 + (t - 1.0) / a);
            (0..t_channels).map(|i| if i == 0 { first } else { first / a }).collect()
        }
        ProfileKind::Noiseless => unreachable!(),
    };
    NoiseModel::new(DMatrix::from_diagonal(&DVector::from_vec(diag)), Some(*spec))
}

pub fn snr_db(snr_linear: f64) -> Result<f64> {
    if !(snr_linear > 0.0) {
        return Err(Error::Invalid(format!("SNR must be positive, got {snr_linear}")));
    }
    Ok(10.0 * snr_linear.log10())
}

pub fn snr_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Deterministic RNG for one task of an experiment.
///
/// ChaCha8 is counter based: `seed` picks the key and the stream id is a SplitMix64
/// hash of the task coordinates, e.g. `(fold, realization)`. Streams never overlap and
/// do not depend on scheduling order.
pub fn stream_rng(seed: u64, stream: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = 0x243f_6a88_85a3_08d3u64;
    for &s in stream {
        h = splitmix64(h ^ splitmix64(s));
    }
    rng.set_stream(h);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One draw of `n ~ N(0, Σ)`, computed as `L z` with `L Lᵀ = Σ`.
pub fn sample_noise<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R) -> DVector<f64> {
    let t = model.dim();
    let z = DVector::from_fn(t, |_, _| rng.sample::<f64, _>(StandardNormal));
    model.factor() * z
}

/// Same as [`sample_noise`] but writes into `out` without allocating.
pub fn sample_noise_into<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
    let l = model.factor();
    let t = model.dim();
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for (i, o) in out.iter_mut().enumerate().take(t) {
        let mut acc = 0.0;
        for (j, zj) in z.iter().enumerate() {
            acc += l[(i, j)] * zj;
        }
        *o = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(m: &NoiseModel) -> Vec<f64> {
        m.cov().diagonal().iter().copied().collect()
    }

    #[test]
    fn equi_variance_unit() {
        let m = build_noise_profile(&NoiseProfileSpec::new(ProfileKind::EquiVariance, 1.0), 4).unwrap();
        assert_eq!(m.cov(), &DMatrix::identity(4, 4));
    }

    #[test]
    fn noisier_subset_example() {
        let spec = NoiseProfileSpec::new(ProfileKind::NoisierSubset { m: 2, a: 20.0 }, 1.0);
        let m = build_noise_profile(&spec, 4).unwrap();
        let s2 = 2.0 / 21.0;
        let expected = [s2, 20.0 * s2, s2, 20.0 * s2];
        for (g, e) in diag(&m).iter().zip(expected) {
            assert!((g - e).abs() < 1e-15);
        }
        assert!((m.trace() - 4.0).abs() < 1e-12);
        assert!((expected[0] - 0.095_238).abs() < 1e-6 && (expected[1] - 1.904_762).abs() < 1e-6);
    }

    #[test]
    fn noisier_subset_general_m_matches_closed_form() {
        // m divides T: σ² = m ε_y / ((a + m - 1) SNR)
        let (m, a, snr, eps) = (3usize, 10.0, 0.5, 1.3);
        let spec = NoiseProfileSpec { kind: ProfileKind::NoisierSubset { m, a }, snr, eps_y: eps };
        let model = build_noise_profile(&spec, 9).unwrap();
        let s2 = m as f64 * eps / ((a + m as f64 - 1.0) * snr);
        let d = diag(&model);
        for (i, v) in d.iter().enumerate() {
            let e = if i % 3 == 1 { a * s2 } else { s2 };
            assert!((v - e).abs() < 1e-12, "channel {i}");
        }
    }

    #[test]
    fn single_noisy_example() {
        let snr = snr_from_db(-6.0);
        let spec = NoiseProfileSpec { kind: ProfileKind::SingleNoisy { a: 20.0 }, snr, eps_y: 0.8 };
        let m = build_noise_profile(&spec, 5).unwrap();
        let first = 5.0 * 0.8 / ((1.0 + 4.0 / 20.0) * snr);
        let d = diag(&m);
        assert!((d[0] - first).abs() < 1e-12);
        for v in &d[1..] {
            assert!((v - first / 20.0).abs() < 1e-12);
        }
        assert!((m.trace() - 5.0 * 0.8 / snr).abs() < 1e-9);
    }

    #[test]
    fn trace_identity_all_profiles() {
        let kinds = [
            ProfileKind::EquiVariance,
            ProfileKind::NoisierSubset { m: 2, a: 20.0 },
            ProfileKind::NoisierSubset { m: 3, a: 5.0 },
            ProfileKind::NoisierSubset { m: 4, a: 100.0 },
            ProfileKind::SingleNoisy { a: 20.0 },
        ];
        for kind in kinds {
            for t in 1..=40 {
                for db in [-12.0, -3.0, 0.0, 7.5, 18.0] {
                    let spec = NoiseProfileSpec { kind, snr: snr_from_db(db), eps_y: 0.7 };
                    let m = build_noise_profile(&spec, t).unwrap();
                    let target = t as f64 * 0.7 / spec.snr;
                    assert!((m.trace() - target).abs() <= 1e-9 * target.max(1.0), "{kind} T={t}");
                    assert!(diag(&m).iter().all(|v| *v > 0.0));
                }
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(build_noise_profile(&NoiseProfileSpec::new(ProfileKind::EquiVariance, 0.0), 3).is_err());
        assert!(build_noise_profile(&NoiseProfileSpec::new(ProfileKind::EquiVariance, 1.0), 0).is_err());
        let bad = NoiseProfileSpec::new(ProfileKind::NoisierSubset { m: 1, a: 5.0 }, 1.0);
        assert!(build_noise_profile(&bad, 3).is_err());
        let bad = NoiseProfileSpec::new(ProfileKind::SingleNoisy { a: 0.5 }, 1.0);
        assert!(build_noise_profile(&bad, 3).is_err());
        let bad = NoiseProfileSpec { kind: ProfileKind::EquiVariance, snr: 1.0, eps_y: 0.0 };
        assert!(build_noise_profile(&bad, 3).is_err());
    }

    #[test]
    fn profile_strings() {
        assert_eq!("equi-variance".parse::<ProfileKind>().unwrap(), ProfileKind::EquiVariance);
        assert_eq!(
            "noisier-subset:m=2,a=20".parse::<ProfileKind>().unwrap(),
            ProfileKind::NoisierSubset { m: 2, a: 20.0 }
        );
        assert_eq!("single-noisy:a=4".parse::<ProfileKind>().unwrap(), ProfileKind::SingleNoisy { a: 4.0 });
        assert_eq!("noiseless".parse::<ProfileKind>().unwrap(), ProfileKind::Noiseless);
        for bad in ["bogus", "noisier-subset:m=1", "noisier-subset:q=2", "equi-variance:a=3", "single-noisy:a"] {
            assert!(bad.parse::<ProfileKind>().is_err(), "{bad}");
        }
        for kind in [ProfileKind::NoisierSubset { m: 3, a: 2.5 }, ProfileKind::SingleNoisy { a: 20.0 }] {
            assert_eq!(kind.to_string().parse::<ProfileKind>().unwrap(), kind);
        }
    }

    #[test]
    fn snr_conversions() {
        assert_eq!(snr_db(1.0).unwrap(), 0.0);
        assert!((snr_db(10.0).unwrap() - 10.0).abs() < 1e-15);
        assert!((snr_from_db(-6.0) - 0.251_189).abs() < 1e-6);
        assert!(snr_db(0.0).is_err() && snr_db(-1.0).is_err());
    }

    #[test]
    fn zero_covariance_samples_zero() {
        let m = NoiseModel::zeros(3);
        let mut rng = stream_rng(1, &[0]);
        for _ in 0..10 {
            assert!(sample_noise(&m, &mut rng).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn sample_variance_and_mean() {
        let m = NoiseModel::diagonal(&[4.0]).unwrap();
        let mut rng = stream_rng(7, &[1, 2]);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_noise(&m, &mut rng)[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((3.8..=4.2).contains(&var), "var {var}");
        assert!(mean.abs() <= 4.0 * (4.0f64 / n as f64).sqrt());
    }

    #[test]
    fn sample_covariance_off_diagonal() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let m = NoiseModel::new(cov, None).unwrap();
        let mut rng = stream_rng(3, &[9]);
        let n = 100_000;
        let mut prods = Vec::with_capacity(n);
        for _ in 0..n {
            let d = sample_noise(&m, &mut rng);
            prods.push(d[0] * d[1]);
        }
        let mean = prods.iter().sum::<f64>() / n as f64;
        let sd = (prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let se = sd / (n as f64).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * se, "cov {mean} ± {se}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(5, &[1, 2]).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let x: u64 = stream_rng(5, &[1, 2]).random();
        let y: u64 = stream_rng(5, &[2, 1]).random();
        let z: u64 = stream_rng(6, &[1, 2]).random();
        assert!(x != y && x != z);
    }

    #[test]
    fn sample_into_matches_allocating_version() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let m = NoiseModel::new(cov, None).unwrap();
        let a = sample_noise(&m, &mut stream_rng(1, &[4]));
        let mut z = [0.0; 2];
        let mut out = [0.0; 2];
        sample_noise_into(&m, &mut stream_rng(1, &[4]), &mut z, &mut out);
        assert!((a[0] - out[0]).abs() < 1e-15 && (a[1] - out[1]).abs() < 1e-15);
    }
}
