use mimo_duality::linalg::{CMat, C64};
use mimo_duality::model::{complex_gaussian_matrix, realize_with, Correlations, LinkModel, RngStream, SystemConfig};
use mimo_duality::mse::{mamse_receiver_dl, sum_amse_dl};

fn instantaneous_mse(h: &[CMat], b: &[CMat], w: &[CMat], r_n: &[CMat]) -> f64 {
    let b_all = CMat::from_fn(b[0].nrows(), b.iter().map(|x| x.ncols()).sum(), |r, col| {
        let mut c = col;
        for blk in b {
            if c < blk.ncols() {
                return blk[(r, c)];
            }
            c -= blk.ncols();
        }
        unreachable!()
    });
    let mut offset = 0;
    let mut total = 0.0;
    for k in 0..h.len() {
        let mut e = w[k].adjoint() * &h[k] * &b_all;
        for s in 0..b[k].ncols() {
            e[(s, offset + s)] -= C64::new(1.0, 0.0);
        }
        offset += b[k].ncols();
        total += e.norm_squared() + (w[k].adjoint() * &r_n[k] * &w[k]).trace().re;
    }
    total
}

#[test]
fn amse_matches_the_error_average() {
    let cfg = SystemConfig {
        sigma_e2: vec![0.2, 0.4],
        rho_b: vec![0.4, 0.5],
        rho_m: vec![0.7, 0.8],
        ..SystemConfig::reference()
    };
    let corr = Correlations::new(&cfg).unwrap();
    let base = realize_with(&cfg, &corr, RngStream::new(3));
    let link = LinkModel::estimated(&base, &cfg);
    let mut rng = RngStream::new(4).rng();
    let b: Vec<CMat> = cfg.s.iter().map(|&s| complex_gaussian_matrix(&mut rng, cfg.n, s, 0.5)).collect();
    let w = mamse_receiver_dl(&b, &link).unwrap();
    let amse = sum_amse_dl(&b, &w, &link);
    assert!(amse > 0.0 && amse < cfg.total_symbols() as f64);

    let draws = 10_000u64;
    let mut mean = 0.0;
    for d in 0..draws {
        let err = realize_with(&cfg, &corr, RngStream::new(5).child(d)).error;
        let h: Vec<CMat> = base.h_hat.iter().zip(&err).map(|(a, e)| a + e).collect();
        mean += instantaneous_mse(&h, &b, &w, &cfg.noise_cov) / draws as f64;
    }
    assert!((mean / amse - 1.0).abs() < 0.02, "Monte-Carlo {mean} vs closed form {amse}");
}
