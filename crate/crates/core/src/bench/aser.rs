use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_sqrt, CMat, CVec, C64};
use crate::model::complex_gaussian;
use crate::mse::Transceiver;

/// Gray-mapped unit-energy QPSK: bit 0 sets the sign of the real part,
/// bit 1 the sign of the imaginary part.
pub fn qpsk_symbol(index: u8) -> C64 {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let re = if index & 1 == 0 { a } else { -a };
    let im = if index & 2 == 0 { a } else { -a };
    C64::new(re, im)
}

/// Nearest QPSK point to `z`.
pub fn qpsk_decide(z: C64) -> u8 {
    u8::from(z.re < 0.0) | (u8::from(z.im < 0.0) << 1)
}

/// Fraction of QPSK symbols decided wrongly when `n_symbols` symbol vectors
/// are sent through the true channels `h_true` with noise covariances
/// `noise_cov` and detected from `W_k^H y_k`.
pub fn aser_qpsk<R: Rng + ?Sized>(
    tx: &Transceiver,
    h_true: &[CMat],
    noise_cov: &[CMat],
    n_symbols: usize,
    rng: &mut R,
) -> Result<f64> {
    let k = tx.b.len();
    if h_true.len() != k || noise_cov.len() != k || tx.w.len() != k {
        return Err(Error::Dimension("ASER needs one channel, noise covariance and decoder per user".into()));
    }
    if n_symbols == 0 {
        return Err(Error::Domain("ASER needs at least one symbol".into()));
    }
    if n_symbols < 100 {
        warn!("{n_symbols} QPSK symbols give a high-variance ASER estimate");
    }
    let streams: usize = tx.b.iter().map(|b| b.ncols()).sum();
    if streams == 0 {
        return Ok(0.0);
    }
    let roots = noise_cov.iter().map(hermitian_sqrt).collect::<Result<Vec<_>>>()?;
    let b_all = crate::linalg::hstack(&tx.b, tx.b[0].nrows());
    // Per-user effective channels W_k^H H_k B and coloured noise filters W_k^H R_nk^{1/2}.
    let effective: Vec<CMat> = (0..k).map(|u| tx.w[u].adjoint() * &h_true[u] * &b_all).collect();
    let shaping: Vec<CMat> = (0..k).map(|u| tx.w[u].adjoint() * &roots[u]).collect();
    let mut errors = 0usize;
    let mut sent = vec![0u8; streams];
    let mut d = CVec::zeros(streams);
    for _ in 0..n_symbols {
        for (l, slot) in sent.iter_mut().enumerate() {
            *slot = rng.gen_range(0..4);
            d[l] = qpsk_symbol(*slot);
        }
        let mut offset = 0;
        for u in 0..k {
            let m = roots[u].nrows();
            let z = CVec::from_fn(m, |_, _| complex_gaussian(rng, 1.0));
            let est = &effective[u] * &d + &shaping[u] * z;
            for s in 0..est.len() {
                if qpsk_decide(est[s]) != sent[offset + s] {
                    errors += 1;
                }
            }
            offset += est.len();
        }
    }
    Ok(errors as f64 / (n_symbols * streams) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, identity};
    use crate::model::RngStream;

    fn q(x: f64) -> f64 {
        0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
    }

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, c(x))
    }

    #[test]
    fn gray_mapping_round_trips() {
        for i in 0..4u8 {
            let s = qpsk_symbol(i);
            assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
            assert_eq!(qpsk_decide(s), i);
            assert_eq!(qpsk_decide(s * c(3.0)), i);
        }
        // Neighbours differ in one bit.
        assert_eq!((qpsk_decide(C64::new(1.0, 1.0)) ^ qpsk_decide(C64::new(-1.0, 1.0))).count_ones(), 1);
    }

    #[test]
    fn noiseless_identity_channel_has_no_errors() {
        let tx = Transceiver::downlink(vec![identity(2)], vec![identity(2)]);
        let mut rng = RngStream::new(1).rng();
        let aser = aser_qpsk(&tx, &[identity(2)], &[identity(2) * c(1e-30)], 1000, &mut rng).unwrap();
        assert_eq!(aser, 0.0);
    }

    #[test]
    fn silent_transmitter_guesses() {
        let tx = Transceiver::downlink(vec![CMat::zeros(2, 2)], vec![identity(2)]);
        let mut rng = RngStream::new(2).rng();
        let aser = aser_qpsk(&tx, &[identity(2)], &[identity(2)], 50_000, &mut rng).unwrap();
        assert!((aser - 0.75).abs() < 0.02, "{aser}");
    }

    #[test]
    fn scalar_awgn_matches_closed_form() {
        for snr in [1.0, 4.0, 8.0] {
            let tx = Transceiver::downlink(vec![scalar(1.0)], vec![scalar(1.0)]);
            let n = 200_000;
            let mut rng = RngStream::new(3).child(snr as u64).rng();
            let aser = aser_qpsk(&tx, &[scalar(1.0)], &[scalar(1.0 / snr)], n, &mut rng).unwrap();
            let qs = q(snr.sqrt());
            let exact = 2.0 * qs - qs * qs;
            let sd = (exact * (1.0 - exact) / n as f64).sqrt();
            assert!((aser - exact).abs() <= 3.0 * sd, "snr {snr}: {aser} vs {exact}");
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let tx = Transceiver::downlink(vec![identity(2)], vec![identity(2)]);
        let mut rng = RngStream::new(1).rng();
        assert!(aser_qpsk(&tx, &[], &[identity(2)], 10, &mut rng).is_err());
        assert!(aser_qpsk(&tx, &[identity(2)], &[identity(2)], 0, &mut rng).is_err());
    }
}
