//! Synthetic session data from the scalar Gaussian loss channel.
//!
//! Every record holds Alice's displacement `x` in the quadrature Bob
//! measured, an optional second-modulation displacement `x_m2` added on the
//! same quadrature before the channel, and Bob's homodyne outcome
//! `y = t (x + x_m2) + z` with `z ~ N(0, 1 + T xi)`. All quantities are in
//! shot-noise units.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{degenerate, domain, Error, Result};

/// Standard telecom fiber attenuation.
pub const DEFAULT_LOSS_DB_PER_KM: f64 = 0.2;

/// True channel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    transmission: f64,
    excess_noise: f64,
}

impl ChannelParams {
    /// `transmission` must lie in (0, 1]; `excess_noise` is input-referred and non-negative.
    pub fn new(transmission: f64, excess_noise: f64) -> Result<Self> {
        if !(transmission > 0.0 && transmission <= 1.0) {
            return Err(domain!("transmission {transmission} not in (0, 1]"));
        }
        if !(excess_noise >= 0.0 && excess_noise.is_finite()) {
            return Err(domain!("excess noise {excess_noise} must be finite and >= 0"));
        }
        Ok(Self { transmission, excess_noise })
    }

    pub fn from_distance(distance_km: f64, loss_db_per_km: f64, excess_noise: f64) -> Result<Self> {
        Self::new(fiber_transmission(distance_km, loss_db_per_km)?, excess_noise)
    }

    pub fn transmission(&self) -> f64 {
        self.transmission
    }

    pub fn excess_noise(&self) -> f64 {
        self.excess_noise
    }

    /// Amplitude transmission `t = sqrt(T)`.
    pub fn amplitude(&self) -> f64 {
        self.transmission.sqrt()
    }

    /// Output-referred excess noise `V_xi = T xi`.
    pub fn output_excess_noise(&self) -> f64 {
        self.transmission * self.excess_noise
    }

    /// Total output noise variance `sigma^2 = 1 + T xi`.
    pub fn sigma2(&self) -> f64 {
        output_noise(self)
    }
}

pub fn output_noise(channel: &ChannelParams) -> f64 {
    1.0 + channel.transmission * channel.excess_noise
}

/// Power transmission of a fiber span, `10^(-loss * d / 10)`.
pub fn fiber_transmission(distance_km: f64, loss_db_per_km: f64) -> Result<f64> {
    if !distance_km.is_finite() || distance_km < 0.0 {
        return Err(domain!("distance {distance_km} km must be finite and >= 0"));
    }
    if !(loss_db_per_km > 0.0 && loss_db_per_km.is_finite()) {
        return Err(domain!("fiber loss {loss_db_per_km} dB/km must be > 0"));
    }
    Ok(10f64.powf(-loss_db_per_km * distance_km / 10.0))
}

/// Protocol-level settings chosen by Alice and Bob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub modulation_variance: f64,
    pub total_states: usize,
    pub revealed_states: usize,
    pub reconciliation_efficiency: f64,
    pub pe_failure_prob: f64,
    /// Variance of the second modulation; zero disables it.
    pub second_modulation_variance: f64,
}

impl ProtocolParams {
    pub fn new(
        modulation_variance: f64,
        total_states: usize,
        revealed_states: usize,
        reconciliation_efficiency: f64,
        pe_failure_prob: f64,
        second_modulation_variance: f64,
    ) -> Result<Self> {
        let p = Self {
            modulation_variance,
            total_states,
            revealed_states,
            reconciliation_efficiency,
            pe_failure_prob,
            second_modulation_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.modulation_variance > 0.0 && self.modulation_variance.is_finite()) {
            return Err(domain!("V_A = {} must be > 0", self.modulation_variance));
        }
        if self.revealed_states > self.total_states {
            return Err(domain!("m = {} exceeds N = {}", self.revealed_states, self.total_states));
        }
        if !(self.reconciliation_efficiency > 0.0 && self.reconciliation_efficiency <= 1.0) {
            return Err(domain!("beta = {} not in (0, 1]", self.reconciliation_efficiency));
        }
        if !(self.pe_failure_prob > 0.0 && self.pe_failure_prob < 1.0) {
            return Err(domain!("epsilon_PE = {} not in (0, 1)", self.pe_failure_prob));
        }
        if !(self.second_modulation_variance >= 0.0 && self.second_modulation_variance.is_finite()) {
            return Err(domain!("V_M2 = {} must be >= 0", self.second_modulation_variance));
        }
        Ok(())
    }

    pub fn key_states(&self) -> usize {
        self.total_states - self.revealed_states
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionData {
    pub x: Vec<f64>,
    pub x_m2: Option<Vec<f64>>,
    pub y: Vec<f64>,
    /// Generation seed; `None` for imported data.
    pub seed: Option<u64>,
}

impl SessionData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Gathers `(x, y)` at the given indices.
    pub fn subset(&self, indices: &[usize]) -> (Vec<f64>, Vec<f64>) {
        indices.iter().map(|&i| (self.x[i], self.y[i])).unzip()
    }
}

/// Draws a session. For each index the generator emits, in order, `x_i`,
/// then `x_m2,i` when the second modulation is on, then `z_i`, all from a
/// ChaCha8 stream seeded with `seed` and the rand_distr ziggurat normal.
pub fn sample_session(
    protocol: &ProtocolParams,
    channel: &ChannelParams,
    seed: u64,
) -> Result<SessionData> {
    protocol.validate()?;
    let n = protocol.total_states;
    if n == 0 {
        return Err(domain!("cannot sample a session with N = 0"));
    }
    let sd_a = protocol.modulation_variance.sqrt();
    let v_m2 = protocol.second_modulation_variance;
    let sd_m2 = v_m2.sqrt();
    let sd_z = channel.sigma2().sqrt();
    let t = channel.amplitude();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut x_m2 = (v_m2 > 0.0).then(|| Vec::with_capacity(n));
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = sd_a * rng.sample::<f64, _>(StandardNormal);
        let mut sent = xi;
        if let Some(m2) = x_m2.as_mut() {
            let d = sd_m2 * rng.sample::<f64, _>(StandardNormal);
            m2.push(d);
            sent += d;
        }
        let z = sd_z * rng.sample::<f64, _>(StandardNormal);
        x.push(xi);
        y.push(t * sent + z);
    }
    Ok(SessionData { x, x_m2, y, seed: Some(seed) })
}

/// Disjoint partition of the session indices into a revealed
/// (parameter-estimation) subset and a key subset. Both lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionSplit {
    pub pe_indices: Vec<usize>,
    pub key_indices: Vec<usize>,
}

impl SessionSplit {
    pub fn revealed(&self) -> usize {
        self.pe_indices.len()
    }

    pub fn key(&self) -> usize {
        self.key_indices.len()
    }

    pub fn total(&self) -> usize {
        self.pe_indices.len() + self.key_indices.len()
    }
}

/// Uniformly random split of `session` into `m` revealed and `N - m` key states.
pub fn split_session(session: &SessionData, m: usize, seed: u64) -> Result<SessionSplit> {
    split_indices(session.len(), m, seed)
}

pub fn split_indices(total: usize, m: usize, seed: u64) -> Result<SessionSplit> {
    if m > total {
        return Err(domain!("cannot reveal m = {m} of N = {total} states"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pe_indices = index::sample(&mut rng, total, m).into_vec();
    pe_indices.sort_unstable();
    let mut revealed = vec![false; total];
    for &i in &pe_indices {
        revealed[i] = true;
    }
    let key_indices = (0..total).filter(|&i| !revealed[i]).collect();
    Ok(SessionSplit { pe_indices, key_indices })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a master seed and a path of labels
/// (e.g. `[distance_index, trial, stream]`) by folding each label through
/// SplitMix64: `s <- splitmix64(s ^ splitmix64(label))`, starting from
/// `splitmix64(master)`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |s, &label| splitmix64(s ^ splitmix64(label)))
}

const CSV_HEADER: [&str; 4] = ["index", "x", "x_m2", "y"];

/// Writes a session as `index,x,x_m2,y`. Floats use Rust's shortest
/// round-trip representation, so reading back is lossless.
pub fn write_session_csv<W: Write>(session: &SessionData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for i in 0..session.len() {
        let m2 = session
            .x_m2
            .as_ref()
            .map(|v| v[i].to_string())
            .unwrap_or_default();
        w.write_record([
            i.to_string(),
            session.x[i].to_string(),
            m2,
            session.y[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_session_csv(session: &SessionData, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_session_csv(session, std::io::BufWriter::new(file))
}

pub fn read_session_csv<R: Read>(reader: R) -> Result<SessionData> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(domain!("session CSV header must be `index,x,x_m2,y`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")));
    }
    let parse = |field: &str, row: usize| -> Result<f64> {
        field
            .trim()
            .parse::<f64>()
            .map_err(|_| domain!("row {row}: cannot parse `{field}` as a number"))
    };
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut m2 = Vec::new();
    let mut m2_present: Option<bool> = None;
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let index: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| domain!("row {row}: bad index `{}`", &record[0]))?;
        if index != row {
            return Err(domain!("row {row}: index {index} out of sequence"));
        }
        x.push(parse(&record[1], row)?);
        let has_m2 = !record[2].trim().is_empty();
        match m2_present {
            None => m2_present = Some(has_m2),
            Some(p) if p != has_m2 => {
                return Err(domain!("row {row}: x_m2 column must be filled on all rows or none"))
            }
            _ => {}
        }
        if has_m2 {
            m2.push(parse(&record[2], row)?);
        }
        y.push(parse(&record[3], row)?);
    }
    if y.is_empty() {
        return Err(degenerate!("session CSV holds no records"));
    }
    Ok(SessionData {
        x,
        x_m2: m2_present.unwrap_or(false).then_some(m2),
        y,
        seed: None,
    })
}

pub fn load_session_csv(path: &Path) -> Result<SessionData> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_session_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn protocol(v_a: f64, n: usize, m: usize, v_m2: f64) -> ProtocolParams {
        ProtocolParams::new(v_a, n, m, 0.95, 1e-10, v_m2).unwrap()
    }

    fn sample_var(v: &[f64]) -> f64 {
        v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn fiber_transmission_values() {
        assert_eq!(fiber_transmission(0.0, 0.2).unwrap(), 1.0);
        assert!((fiber_transmission(50.0, 0.2).unwrap() - 0.1).abs() < 1e-15);
        assert!((fiber_transmission(100.0, 0.2).unwrap() - 0.01).abs() < 1e-16);
        assert!(fiber_transmission(-1.0, 0.2).is_err());
        assert!(fiber_transmission(f64::NAN, 0.2).is_err());
    }

    #[test]
    fn output_noise_values() {
        let noiseless = ChannelParams::new(0.37, 0.0).unwrap();
        assert_eq!(output_noise(&noiseless), 1.0);
        let c = ChannelParams::new(1.0, 0.01).unwrap();
        assert!((output_noise(&c) - 1.01).abs() < 1e-15);
        let c = ChannelParams::new(0.1, 0.01).unwrap();
        assert!((output_noise(&c) - 1.001).abs() < 1e-15);
        assert!((c.output_excess_noise() - 0.001).abs() < 1e-18);
        assert_eq!(c.amplitude() * c.amplitude(), 0.1_f64.sqrt().powi(2));
    }

    #[test]
    fn channel_params_reject_out_of_range() {
        assert!(ChannelParams::new(0.0, 0.0).is_err());
        assert!(ChannelParams::new(1.1, 0.0).is_err());
        assert!(ChannelParams::new(0.5, -0.1).is_err());
    }

    #[test]
    fn protocol_rejects_m_above_n() {
        assert!(ProtocolParams::new(3.0, 10, 11, 0.95, 1e-10, 0.0).is_err());
        assert!(ProtocolParams::new(0.0, 10, 1, 0.95, 1e-10, 0.0).is_err());
    }

    #[test]
    fn vacuum_session_has_unit_variance() {
        let n = 100_000;
        let p = protocol(1e-12, n, 0, 0.0);
        let c = ChannelParams::new(1.0, 0.0).unwrap();
        let s = sample_session(&p, &c, 11).unwrap();
        let v = sample_var(&s.y);
        assert!((v - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{v}");
    }

    #[test]
    fn reference_parameters_output_variance() {
        let n = 100_000;
        let p = protocol(3.0, n, n / 2, 0.0);
        let c = ChannelParams::new(1.0, 0.01).unwrap();
        let s = sample_session(&p, &c, 5).unwrap();
        let v = sample_var(&s.y);
        assert!((v - 4.01).abs() < 3.0 * (2.0 / n as f64).sqrt() * 4.01, "{v}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let p = protocol(3.0, 1000, 500, 10.0);
        let c = ChannelParams::new(0.3, 0.01).unwrap();
        let a = sample_session(&p, &c, 42).unwrap();
        let b = sample_session(&p, &c, 42).unwrap();
        assert_eq!(a, b);
        let other = sample_session(&p, &c, 43).unwrap();
        assert_ne!(a.y, other.y);
    }

    #[test]
    fn zero_states_is_a_domain_error() {
        let p = protocol(3.0, 0, 0, 0.0);
        let c = ChannelParams::new(1.0, 0.0).unwrap();
        assert!(matches!(sample_session(&p, &c, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn second_modulation_only_when_enabled() {
        let c = ChannelParams::new(1.0, 0.0).unwrap();
        let without = sample_session(&protocol(3.0, 10, 5, 0.0), &c, 1).unwrap();
        assert!(without.x_m2.is_none());
        let with = sample_session(&protocol(3.0, 10, 5, 10.0), &c, 1).unwrap();
        assert_eq!(with.x_m2.as_ref().unwrap().len(), 10);
    }

    #[test]
    fn split_edge_cases() {
        let p = protocol(3.0, 10, 4, 0.0);
        let c = ChannelParams::new(1.0, 0.0).unwrap();
        let s = sample_session(&p, &c, 3).unwrap();
        let all = split_session(&s, 10, 1).unwrap();
        assert!(all.key_indices.is_empty());
        let none = split_session(&s, 0, 1).unwrap();
        assert!(none.pe_indices.is_empty());
        assert_eq!(split_session(&s, 4, 9).unwrap(), split_session(&s, 4, 9).unwrap());
        assert!(matches!(split_session(&s, 11, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let c = ChannelParams::new(0.2, 0.01).unwrap();
        for v_m2 in [0.0, 10.0] {
            let s = sample_session(&protocol(3.0, 50, 10, v_m2), &c, 8).unwrap();
            let mut buf = Vec::new();
            write_session_csv(&s, &mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.starts_with("index,x,x_m2,y\n"));
            let back = read_session_csv(buf.as_slice()).unwrap();
            assert_eq!(back.x, s.x);
            assert_eq!(back.y, s.y);
            assert_eq!(back.x_m2, s.x_m2);
            assert_eq!(back.seed, None);
        }
    }

    #[test]
    fn csv_rejects_bad_header_and_mixed_m2() {
        assert!(read_session_csv("a,b,c,d\n0,1,,2\n".as_bytes()).is_err());
        let mixed = "index,x,x_m2,y\n0,1,,2\n1,1,3,2\n";
        assert!(read_session_csv(mixed.as_bytes()).is_err());
    }

    #[test]
    fn derived_seeds_differ_by_path() {
        assert_ne!(derive_seed(1, &[0, 0]), derive_seed(1, &[0, 1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(7, &[3, 4]), derive_seed(7, &[3, 4]));
    }

    proptest! {
        #[test]
        fn split_is_an_exact_partition(total in 0usize..300, frac in 0.0f64..=1.0, seed: u64) {
            let m = (frac * total as f64).floor() as usize;
            let split = split_indices(total, m, seed).unwrap();
            prop_assert_eq!(split.revealed(), m);
            prop_assert_eq!(split.key(), total - m);
            let mut seen = vec![0u8; total];
            for &i in split.pe_indices.iter().chain(&split.key_indices) {
                seen[i] += 1;
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
