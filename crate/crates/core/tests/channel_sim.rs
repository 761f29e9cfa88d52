//! Sampled sessions reproduce the channel moments.

use cvqkd_core::channel_sim::{
    derive_seed, fiber_transmission, sample_session, ChannelParams, ProtocolParams,
};
use cvqkd_core::stats::SampleSummary;

fn mean_of(v: impl Iterator<Item = f64>) -> SampleSummary {
    SampleSummary::from_slice(&v.collect::<Vec<_>>())
}

#[test]
fn moments_converge_to_channel_values() {
    let n = 200_000;
    for (i, d) in [0.0, 20.0, 100.0].into_iter().enumerate() {
        let t2 = fiber_transmission(d, 0.2).unwrap();
        let channel = ChannelParams::new(t2, 0.05).unwrap();
        let protocol = ProtocolParams::new(3.0, n, n / 2, 0.95, 1e-10, 10.0).unwrap();
        let s = sample_session(&protocol, &channel, derive_seed(5, &[i as u64])).unwrap();
        let x_m2 = s.x_m2.as_ref().unwrap();
        let t = t2.sqrt();

        let checks = [
            ("x^2", mean_of(s.x.iter().map(|x| x * x)), 3.0),
            ("x_M2^2", mean_of(x_m2.iter().map(|x| x * x)), 10.0),
            ("x y", mean_of(s.x.iter().zip(&s.y).map(|(x, y)| x * y)), t * 3.0),
            ("x_M2 y", mean_of(x_m2.iter().zip(&s.y).map(|(x, y)| x * y)), t * 10.0),
            ("y^2", mean_of(s.y.iter().map(|y| y * y)), t2 * 13.0 + 1.0 + t2 * 0.05),
            ("x x_M2", mean_of(s.x.iter().zip(x_m2).map(|(a, b)| a * b)), 0.0),
        ];
        for (name, summary, expected) in checks {
            let z = (summary.mean - expected) / summary.standard_error();
            assert!(z.abs() < 5.0, "d={d} {name}: mean {} expected {expected} (z = {z:.2})", summary.mean);
        }
    }
}
