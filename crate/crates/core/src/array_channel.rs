//! Uniform linear array math: steering vectors, an oversampled DFT-style
//! beam codebook, geometric channel synthesis, and the average-SNR beam
//! selection rule that produces ground-truth labels.
//!
//! Conventions: the array lies on the ground-plane x axis, azimuth is measured
//! from broadside (positive toward +x), and the receive product is the plain
//! transpose `h_k^T f`. Beams are conjugate steering vectors so that the
//! transpose product peaks at each beam's own azimuth.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub num_antennas: usize,
    pub num_beams: usize,
    pub num_subcarriers: usize,
    /// Upper bound on path delays (in samples) for wideband channels.
    pub cyclic_prefix: usize,
    /// Transmit SNR `P / sigma^2` in dB.
    pub snr_db: f64,
    /// Element spacing in wavelengths.
    pub antenna_spacing: f64,
    pub num_nlos_paths: usize,
    /// NLOS path power relative to the LOS path, in dB.
    pub nlos_gain_db: f64,
    /// Half-width of the codebook's angular coverage, in degrees.
    pub max_azimuth_deg: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            num_antennas: 16,
            num_beams: 64,
            num_subcarriers: 1,
            cyclic_prefix: 0,
            snr_db: 0.0,
            antenna_spacing: 0.5,
            num_nlos_paths: 0,
            nlos_gain_db: -10.0,
            max_azimuth_deg: 60.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(Error::Config("num_antennas must be >= 1".into()));
        }
        if self.num_beams < self.num_antennas {
            return Err(Error::Config(format!(
                "num_beams ({}) must be >= num_antennas ({})",
                self.num_beams, self.num_antennas
            )));
        }
        if self.num_subcarriers == 0 {
            return Err(Error::Config("num_subcarriers must be >= 1".into()));
        }
        if !(self.antenna_spacing > 0.0 && self.antenna_spacing.is_finite()) {
            return Err(Error::Config("antenna_spacing must be positive".into()));
        }
        if !(self.max_azimuth_deg > 0.0 && self.max_azimuth_deg < 90.0) {
            return Err(Error::Config(
                "max_azimuth_deg must lie in (0, 90)".into(),
            ));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        if self.nlos_gain_db.is_nan() || self.nlos_gain_db == f64::INFINITY {
            return Err(Error::Config("nlos_gain_db must be < +inf".into()));
        }
        Ok(())
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn max_azimuth(&self) -> f64 {
        self.max_azimuth_deg.to_radians()
    }
}

/// Array response toward one azimuth. Entry `m` is `exp(i 2pi d m sin(theta))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(pub Vec<Complex64>);

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }
}

pub fn steering_vector(azimuth: f64, num_antennas: usize, spacing: f64) -> Result<SteeringVector> {
    if num_antennas == 0 {
        return Err(Error::Domain("steering vector needs at least one antenna".into()));
    }
    if !(azimuth > -FRAC_PI_2 && azimuth < FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "azimuth {azimuth} outside the open interval (-pi/2, pi/2)"
        )));
    }
    let step = 2.0 * PI * spacing * azimuth.sin();
    Ok(SteeringVector(
        (0..num_antennas)
            .map(|m| Complex64::from_polar(1.0, step * m as f64))
            .collect(),
    ))
}

/// Ordered set of unit-norm beamforming vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    beams: Vec<Vec<Complex64>>,
    azimuths: Vec<f64>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn beam(&self, q: usize) -> &[Complex64] {
        &self.beams[q]
    }

    pub fn beams(&self) -> &[Vec<Complex64>] {
        &self.beams
    }

    /// Main-lobe azimuth of each beam, increasing with the beam index.
    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    /// Builds a codebook from explicit beams. No normalization is applied.
    pub fn from_beams(beams: Vec<Vec<Complex64>>, azimuths: Vec<f64>) -> Result<Self> {
        if beams.len() != azimuths.len() {
            return Err(Error::Contract("one azimuth per beam required".into()));
        }
        Ok(Self { beams, azimuths })
    }
}

/// Uniform grid over `sin(theta)` in `[-sin(theta_max), +sin(theta_max)]`;
/// beam `q` is the normalized conjugate steering vector at grid point `q`.
pub fn build_codebook(cfg: &ChannelConfig) -> Result<Codebook> {
    cfg.validate()?;
    let q_count = cfg.num_beams;
    let m = cfg.num_antennas;
    let s_max = cfg.max_azimuth().sin();
    let norm = 1.0 / (m as f64).sqrt();

    let mut beams = Vec::with_capacity(q_count);
    let mut azimuths = Vec::with_capacity(q_count);
    for q in 0..q_count {
        let s = if q_count == 1 {
            0.0
        } else {
            -s_max + 2.0 * s_max * q as f64 / (q_count - 1) as f64
        };
        let theta = s.asin();
        let a = steering_vector(theta, m, cfg.antenna_spacing)?;
        beams.push(a.0.iter().map(|z| z.conj() * norm).collect());
        azimuths.push(theta);
    }
    Ok(Codebook { beams, azimuths })
}

/// Per-subcarrier channel vectors, `K x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    rows: Vec<Vec<Complex64>>,
}

impl ChannelMatrix {
    pub fn new(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Contract("channel needs at least one subcarrier".into()));
        };
        let m = first.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Contract("ragged channel matrix".into()));
        }
        if rows.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Contract("channel has non-finite entries".into()));
        }
        Ok(Self { rows })
    }

    pub fn num_subcarriers(&self) -> usize {
        self.rows.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.rows[0].len()
    }

    pub fn subcarrier(&self, k: usize) -> &[Complex64] {
        &self.rows[k]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|z| z * factor).collect())
                .collect(),
        }
    }
}

/// Geometric channel: a LOS path toward the user with free-space amplitude
/// `1 / range`, plus `num_nlos_paths` random-azimuth scatterers attenuated by
/// `nlos_gain_db`. With `K > 1` each path rotates across subcarriers
/// according to its delay; the LOS path is the zero-delay reference.
pub fn synth_channel<R: Rng + ?Sized>(
    user_azimuth: f64,
    user_range: f64,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    cfg.validate()?;
    if !(user_range > 0.0 && user_range.is_finite()) {
        return Err(Error::Domain(format!("user range {user_range} must be > 0")));
    }
    let m = cfg.num_antennas;
    let k_count = cfg.num_subcarriers;
    let los = steering_vector(user_azimuth, m, cfg.antenna_spacing)?;
    let los_amp = 1.0 / user_range;

    let mut rows: Vec<Vec<Complex64>> = (0..k_count)
        .map(|_| los.0.iter().map(|a| a * los_amp).collect())
        .collect();

    let nlos_amp = los_amp * 10f64.powf(cfg.nlos_gain_db / 20.0);
    let wideband = k_count > 1 && cfg.cyclic_prefix > 0;
    for _ in 0..cfg.num_nlos_paths {
        let azimuth = loop {
            let a = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
            if a > -FRAC_PI_2 {
                break a;
            }
        };
        let phase = rng.random_range(0.0..2.0 * PI);
        let delay = if wideband {
            rng.random_range(0.0..cfg.cyclic_prefix as f64)
        } else {
            0.0
        };
        let a = steering_vector(azimuth, m, cfg.antenna_spacing)?;
        for (k, row) in rows.iter_mut().enumerate() {
            let rot = -2.0 * PI * k as f64 * delay / k_count as f64;
            let gain = Complex64::from_polar(nlos_amp, phase + rot);
            for (h, ai) in row.iter_mut().zip(&a.0) {
                *h += gain * ai;
            }
        }
    }
    ChannelMatrix::new(rows)
}

/// `(1/K) * sum_k SNR * |h_k^T f|^2`.
pub fn receive_snr(h: &ChannelMatrix, beam: &[Complex64], cfg: &ChannelConfig) -> Result<f64> {
    if h.num_antennas() != beam.len() {
        return Err(Error::Contract(format!(
            "channel has {} antennas but beam has {}",
            h.num_antennas(),
            beam.len()
        )));
    }
    if h.num_subcarriers() != cfg.num_subcarriers {
        return Err(Error::Contract(format!(
            "channel has {} subcarriers, config expects {}",
            h.num_subcarriers(),
            cfg.num_subcarriers
        )));
    }
    let snr = cfg.snr_linear();
    let total: f64 = h
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(beam)
                .map(|(a, b)| a * b)
                .sum::<Complex64>()
                .norm_sqr()
        })
        .sum();
    Ok(snr * total / h.num_subcarriers() as f64)
}

/// Index of the beam with the highest average receive SNR. Ties go to the
/// lowest index.
pub fn optimal_beam(h: &ChannelMatrix, cb: &Codebook, cfg: &ChannelConfig) -> Result<usize> {
    if cb.is_empty() {
        return Err(Error::Contract("empty codebook".into()));
    }
    let mut best = 0;
    let mut best_snr = f64::NEG_INFINITY;
    for (q, beam) in cb.beams.iter().enumerate() {
        let snr = receive_snr(h, beam, cfg)?;
        if snr > best_snr {
            best = q;
            best_snr = snr;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(m: usize, q: usize) -> ChannelConfig {
        ChannelConfig {
            num_antennas: m,
            num_beams: q,
            ..Default::default()
        }
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        let a = steering_vector(0.0, 16, 0.5).unwrap();
        assert_eq!(a.len(), 16);
        for z in a.entries() {
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn steering_phase_matches_scalar_evaluation() {
        let a = steering_vector(PI / 6.0, 4, 0.5).unwrap();
        // sin(pi/6) = 0.5, so the phase of entry m is pi * m * 0.5.
        for m in 0..4 {
            let phase = PI * m as f64 * 0.5;
            assert_abs_diff_eq!(a.0[m].re, phase.cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(a.0[m].im, phase.sin(), epsilon = 1e-12);
            assert_abs_diff_eq!(a.0[m].norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn steering_rejects_bad_inputs() {
        assert!(matches!(steering_vector(0.1, 0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(steering_vector(FRAC_PI_2, 4, 0.5), Err(Error::Domain(_))));
        assert!(matches!(steering_vector(-FRAC_PI_2, 4, 0.5), Err(Error::Domain(_))));
        assert!(matches!(steering_vector(f64::NAN, 4, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn default_codebook_has_64_unit_norm_beams() {
        let cb = build_codebook(&ChannelConfig::default()).unwrap();
        assert_eq!(cb.len(), 64);
        for beam in cb.beams() {
            assert_eq!(beam.len(), 16);
            let norm: f64 = beam.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert!(cb.azimuths().windows(2).all(|w| w[0] < w[1]));
        assert_abs_diff_eq!(cb.azimuths()[0], -PI / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cb.azimuths()[63], PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_codebook_is_one() {
        let cb = build_codebook(&cfg(1, 1)).unwrap();
        assert_eq!(cb.beams(), &[vec![Complex64::new(1.0, 0.0)]]);
    }

    #[test]
    fn beam_main_lobes_under_transpose_product() {
        let cb = build_codebook(&ChannelConfig::default()).unwrap();
        let scan = 4096;
        let step = PI / scan as f64;
        for (q, beam) in cb.beams().iter().enumerate() {
            let mut best = (0.0, f64::MIN);
            for i in 0..scan {
                let t = -FRAC_PI_2 + PI * (i as f64 + 0.5) / scan as f64;
                let a = steering_vector(t, 16, 0.5).unwrap();
                let v = a.0.iter().zip(beam).map(|(x, y)| x * y).sum::<Complex64>().norm();
                if v > best.1 {
                    best = (t, v);
                }
            }
            assert!((best.0 - cb.azimuths()[q]).abs() <= step);
        }
    }

    #[test]
    fn single_los_channel_is_scaled_steering_vector() {
        let c = cfg(16, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = synth_channel(0.3, 25.0, &c, &mut rng).unwrap();
        let a = steering_vector(0.3, 16, 0.5).unwrap();
        assert_eq!(h.num_subcarriers(), 1);
        for (x, y) in h.subcarrier(0).iter().zip(a.entries()) {
            assert_abs_diff_eq!((x - y / 25.0).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn channel_is_deterministic_per_seed() {
        let c = ChannelConfig {
            num_nlos_paths: 3,
            num_subcarriers: 8,
            cyclic_prefix: 4,
            ..Default::default()
        };
        let h1 = synth_channel(0.2, 10.0, &c, &mut rng_for(9, &[1])).unwrap();
        let h2 = synth_channel(0.2, 10.0, &c, &mut rng_for(9, &[1])).unwrap();
        assert_eq!(h1, h2);
        let h3 = synth_channel(0.2, 10.0, &c, &mut rng_for(9, &[2])).unwrap();
        assert_ne!(h1, h3);
    }

    #[test]
    fn silent_nlos_paths_equal_los_only() {
        let silent = ChannelConfig {
            num_nlos_paths: 4,
            nlos_gain_db: f64::NEG_INFINITY,
            ..Default::default()
        };
        let none = ChannelConfig::default();
        let h1 = synth_channel(-0.4, 12.0, &silent, &mut rng_for(1, &[])).unwrap();
        let h2 = synth_channel(-0.4, 12.0, &none, &mut rng_for(1, &[])).unwrap();
        for (x, y) in h1.subcarrier(0).iter().zip(h2.subcarrier(0)) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn channel_rejects_nonpositive_range() {
        let c = ChannelConfig::default();
        let mut rng = rng_for(0, &[]);
        assert!(matches!(synth_channel(0.0, 0.0, &c, &mut rng), Err(Error::Domain(_))));
        assert!(matches!(synth_channel(0.0, -1.0, &c, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn wideband_channel_varies_across_subcarriers() {
        let c = ChannelConfig {
            num_subcarriers: 16,
            cyclic_prefix: 8,
            num_nlos_paths: 2,
            nlos_gain_db: 0.0,
            ..Default::default()
        };
        let h = synth_channel(0.1, 5.0, &c, &mut rng_for(4, &[])).unwrap();
        assert_eq!(h.num_subcarriers(), 16);
        assert_ne!(h.subcarrier(0), h.subcarrier(5));
    }

    #[test]
    fn matched_beam_has_unit_snr() {
        let cb = build_codebook(&ChannelConfig::default()).unwrap();
        let f = cb.beam(17);
        let h = ChannelMatrix::new(vec![f.iter().map(|z| z.conj()).collect()]).unwrap();
        let c = ChannelConfig::default();
        assert_abs_diff_eq!(receive_snr(&h, f, &c).unwrap(), 1.0, epsilon = 1e-12);
        let c10 = ChannelConfig { snr_db: 10.0, ..c };
        assert_abs_diff_eq!(receive_snr(&h, f, &c10).unwrap(), 10.0, epsilon = 1e-11);
    }

    #[test]
    fn receive_snr_matches_elementwise_loop() {
        let c = ChannelConfig {
            num_subcarriers: 4,
            cyclic_prefix: 2,
            num_nlos_paths: 3,
            snr_db: 7.0,
            ..Default::default()
        };
        let cb = build_codebook(&c).unwrap();
        let mut rng = rng_for(11, &[]);
        for trial in 0..20 {
            let h = synth_channel(0.01 * trial as f64, 8.0, &c, &mut rng).unwrap();
            let f = cb.beam(trial * 3);
            let mut acc = 0.0;
            for k in 0..4 {
                let (mut re, mut im) = (0.0, 0.0);
                for m in 0..16 {
                    let a = h.subcarrier(k)[m];
                    let b = f[m];
                    re += a.re * b.re - a.im * b.im;
                    im += a.re * b.im + a.im * b.re;
                }
                acc += 10f64.powf(0.7) * (re * re + im * im);
            }
            let got = receive_snr(&h, f, &c).unwrap();
            assert!((got - acc / 4.0).abs() <= 1e-12 * acc.max(1.0));
        }
    }

    #[test]
    fn receive_snr_rejects_mismatch() {
        let c = ChannelConfig::default();
        let h = synth_channel(0.0, 1.0, &c, &mut rng_for(0, &[])).unwrap();
        let short = vec![Complex64::new(1.0, 0.0); 8];
        assert!(matches!(receive_snr(&h, &short, &c), Err(Error::Contract(_))));
    }

    #[test]
    fn single_beam_codebook_always_wins() {
        let c = cfg(1, 1);
        let cb = build_codebook(&c).unwrap();
        let h = synth_channel(0.7, 3.0, &c, &mut rng_for(0, &[])).unwrap();
        assert_eq!(optimal_beam(&h, &cb, &c).unwrap(), 0);
    }

    #[test]
    fn empty_codebook_is_rejected() {
        let c = ChannelConfig::default();
        let cb = Codebook::from_beams(vec![], vec![]).unwrap();
        let h = synth_channel(0.0, 1.0, &c, &mut rng_for(0, &[])).unwrap();
        assert!(matches!(optimal_beam(&h, &cb, &c), Err(Error::Contract(_))));
    }

    #[test]
    fn los_on_grid_selects_that_beam() {
        let c = ChannelConfig::default();
        let cb = build_codebook(&c).unwrap();
        for q in 0..64 {
            let h = synth_channel(cb.azimuths()[q], 20.0, &c, &mut rng_for(0, &[])).unwrap();
            // brute force over all beams
            let snrs: Vec<f64> = cb.beams().iter().map(|f| receive_snr(&h, f, &c).unwrap()).collect();
            let brute = (0..64).fold(0, |b, i| if snrs[i] > snrs[b] { i } else { b });
            assert_eq!(brute, q);
            assert_eq!(optimal_beam(&h, &cb, &c).unwrap(), q);
        }
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let c = ChannelConfig::default();
        let cb = build_codebook(&c).unwrap();
        let zero = ChannelMatrix::new(vec![vec![Complex64::new(0.0, 0.0); 16]]).unwrap();
        assert_eq!(optimal_beam(&zero, &cb, &c).unwrap(), 0);
        assert_eq!(receive_snr(&zero, cb.beam(5), &c).unwrap(), 0.0);
    }

    #[test]
    fn beam_index_is_monotone_in_sin_azimuth() {
        let c = ChannelConfig::default();
        let cb = build_codebook(&c).unwrap();
        let s_max = c.max_azimuth().sin();
        let mut last = 0;
        for i in 0..=2000 {
            let s = -s_max + 2.0 * s_max * i as f64 / 2000.0;
            let h = synth_channel(s.asin(), 15.0, &c, &mut rng_for(0, &[])).unwrap();
            let q = optimal_beam(&h, &cb, &c).unwrap();
            assert!(q >= last, "index dropped from {last} to {q} at sin={s}");
            last = q;
        }
        assert_eq!(last, 63);
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_positive_scaling(
            az in -1.2f64..1.2,
            range in 1.0f64..100.0,
            scale in 1e-3f64..1e3,
            seed in any::<u64>(),
        ) {
            let c = ChannelConfig { num_nlos_paths: 2, ..Default::default() };
            let cb = build_codebook(&c).unwrap();
            let h = synth_channel(az, range, &c, &mut rng_for(seed, &[])).unwrap();
            let q = optimal_beam(&h, &cb, &c).unwrap();
            prop_assert_eq!(optimal_beam(&h.scaled(scale), &cb, &c).unwrap(), q);
        }

        #[test]
        fn receive_snr_is_nonnegative(az in -1.5f64..1.5, q in 0usize..64, seed in any::<u64>()) {
            let c = ChannelConfig { num_nlos_paths: 3, nlos_gain_db: 0.0, ..Default::default() };
            let cb = build_codebook(&c).unwrap();
            let h = synth_channel(az, 4.0, &c, &mut rng_for(seed, &[])).unwrap();
            prop_assert!(receive_snr(&h, cb.beam(q), &c).unwrap() >= 0.0);
        }
    }
}
