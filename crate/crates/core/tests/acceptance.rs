//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::time::{Duration, Instant};

use mimo_duality::bench::verify::{
    check_convergence, check_posynomial, check_power_min_fixed_point, check_transfers, check_white_reduction,
    ConvergenceCheck, TransferCheck,
};
use mimo_duality::bench::{aggregate, run_experiment, write_csv, AggregateRow, ExperimentSpec};
use mimo_duality::linalg::{c, identity};
use mimo_duality::model::{complex_gaussian_matrix, realize_channel, DesignMode, LinkModel, RngStream, SystemConfig};
use mimo_duality::mse::mamse_receiver_dl;
use mimo_duality::power_alloc::gp::{gp_solve, GpOptions, GpProblem, Posynomial};
use mimo_duality::power_alloc::{build_gp, d_matrix, decompose, phi_matrix};
use mimo_duality::problem::{PowerLimits, Problem};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn transfer_checks(instances: u64) -> Vec<(Problem, Vec<Result<TransferCheck, String>>)> {
    Problem::SUM_AMSE
        .iter()
        .map(|&p| (p, (0..instances).map(|s| check_transfers(p, 1000 + s).map_err(|e| e.to_string())).collect()))
        .collect()
}

fn max_of(results: &[Result<TransferCheck, String>], f: fn(&TransferCheck) -> f64) -> f64 {
    results.iter().filter_map(|r| r.as_ref().ok()).map(f).fold(0.0, f64::max)
}

fn errors(results: &[Result<TransferCheck, String>]) -> usize {
    results.iter().filter(|r| r.is_err()).count()
}

fn duality_conservation() -> Verdict {
    let start = Instant::now();
    let checks = transfer_checks(100);
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, r) in &checks {
        let worst = max_of(r, |c| c.forward.max(c.back));
        ok &= errors(r) == 0 && worst <= 1e-9;
        parts.push(format!("{p} {worst:.1e}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(30);
    verdict(ok, format!("worst relative change {} in {elapsed:.2?}", parts.join(", ")))
}

fn power_feasibility(runs: &[(Problem, Vec<ConvergenceCheck>)]) -> Verdict {
    let checks = transfer_checks(100);
    let mut ok = true;
    let mut parts = Vec::new();
    for ((p, r), (_, solves)) in checks.iter().zip(runs) {
        let single = max_of(r, |c| c.violation);
        let within = solves.iter().map(|c| c.worst_violation).fold(0.0, f64::max);
        ok &= errors(r) == 0 && single <= 1e-6 && within <= 1e-6;
        parts.push(format!("{p} {:.1e}", single.max(within)));
    }
    verdict(ok, format!("worst violation {}", parts.join(", ")))
}

fn fixed_point_identities() -> Verdict {
    let checks = transfer_checks(100);
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, r) in checks.iter().filter(|(p, _)| *p != Problem::P1) {
        let (res, budget) = (max_of(r, |c| c.residual), max_of(r, |c| c.budget));
        ok &= errors(r) == 0 && res <= 1e-8 && budget <= 1e-6;
        parts.push(format!("{p} {res:.1e}/{budget:.1e}"));
    }
    let pm: Vec<_> = (0..100).map(|s| check_power_min_fixed_point(2000 + s)).collect();
    let pm_err = pm.iter().filter(|r| r.is_err()).count();
    let (res, budget) =
        pm.iter().filter_map(|r| r.as_ref().ok()).fold((0.0_f64, 0.0_f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    ok &= pm_err == 0 && res <= 1e-8 && budget <= 1e-6;
    parts.push(format!("p7 {res:.1e}/{budget:.1e}"));
    verdict(ok, format!("residual/budget error {}", parts.join(", ")))
}

fn convergence_runs() -> Vec<(Problem, Vec<ConvergenceCheck>)> {
    Problem::SUM_AMSE
        .iter()
        .map(|&p| (p, (0..50).filter_map(|s| check_convergence(p, 3000 + s).ok()).collect()))
        .collect()
}

fn monotone_convergence(runs: &[(Problem, Vec<ConvergenceCheck>)], elapsed: Duration) -> Verdict {
    let mut ok = elapsed < Duration::from_secs(300);
    let mut parts = Vec::new();
    for (p, r) in runs {
        let conv = r.iter().filter(|c| c.converged && c.iterations <= 200).count();
        let inc = r.iter().map(|c| c.worst_increase).fold(f64::NEG_INFINITY, f64::max);
        ok &= inc <= 1e-8 && conv * 100 >= 95 * 50;
        parts.push(format!("{p} {conv}/50 (max rise {inc:.1e})"));
    }
    verdict(ok, format!("{} in {elapsed:.2?}", parts.join(", ")))
}

/// Minimum of a GP by repeatedly refined log-spaced grids.
fn zoom_grid_min(prob: &GpProblem, lo: f64, hi: f64) -> f64 {
    let n = prob.var_count;
    let pts = 41;
    let mut center = vec![(lo.ln() + hi.ln()) / 2.0; n];
    let mut half = vec![(hi.ln() - lo.ln()) / 2.0; n];
    let mut best = f64::INFINITY;
    for _ in 0..10 {
        let mut best_at = center.clone();
        let mut idx = vec![0usize; n];
        'grid: loop {
            let x: Vec<f64> =
                (0..n).map(|i| center[i] - half[i] + 2.0 * half[i] * idx[i] as f64 / (pts - 1) as f64).collect();
            let p: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            if prob.constraints.iter().all(|c| c.eval(&p) <= 1.0) {
                let v = prob.objective.eval(&p);
                if v < best {
                    best = v;
                    best_at = x;
                }
            }
            for i in idx.iter_mut() {
                *i += 1;
                if *i < pts {
                    continue 'grid;
                }
                *i = 0;
            }
            break;
        }
        for h in half.iter_mut() {
            *h *= 6.0 / (pts - 1) as f64;
        }
        center = best_at;
    }
    best
}

fn closed_form_gps() -> Vec<(f64, f64)> {
    let solve = |objective: Posynomial, constraints: Vec<Posynomial>| {
        let prob = GpProblem { var_count: objective.vars(), objective, constraints, amse_target: None };
        gp_solve(&prob, &GpOptions::default()).map(|s| s.objective).unwrap_or(f64::NAN)
    };
    // p + 4/p: minimum 4 at p = 2.
    let mut a = Posynomial::new(1);
    a.push(1.0, vec![1.0]);
    a.push(4.0, vec![-1.0]);
    // 1/p subject to p <= 5: 0.2.
    let mut b = Posynomial::new(1);
    b.push(1.0, vec![-1.0]);
    let mut b_cap = Posynomial::new(1);
    b_cap.push(0.2, vec![1.0]);
    // 1/p1 + 4/p2 subject to p1 + p2 <= 3: p = (1, 2), value 3.
    let mut d = Posynomial::new(2);
    d.push(1.0, vec![-1.0, 0.0]);
    d.push(4.0, vec![0.0, -1.0]);
    let mut d_cap = Posynomial::new(2);
    d_cap.push(1.0 / 3.0, vec![1.0, 0.0]);
    d_cap.push(1.0 / 3.0, vec![0.0, 1.0]);
    vec![(solve(a, vec![]), 4.0), (solve(b, vec![b_cap]), 0.2), (solve(d, vec![d_cap]), 3.0)]
}

fn gp_oracle() -> Verdict {
    let cfg = SystemConfig { n: 3, m: vec![1, 2], s: vec![1, 2], ..SystemConfig::reference() }
        .with_noise(vec![identity(1) * c(0.3), identity(2) * c(0.6)]);
    let mut worst = 0.0_f64;
    let mut failures = 0;
    for seed in 0..50u64 {
        let (problem, limits) = match seed % 4 {
            0 => (Problem::P1, PowerLimits::Total(4.0)),
            1 => (Problem::P2, PowerLimits::PerAntenna(vec![1.0, 1.5, 2.0])),
            2 => (Problem::P3, PowerLimits::PerUser(vec![1.5, 2.5])),
            _ => (Problem::P4, PowerLimits::PerSymbol(vec![1.0, 1.5, 2.0])),
        };
        let run = || -> mimo_duality::Result<(f64, f64)> {
            let ch = realize_channel(&cfg, RngStream::new(seed).child(5))?;
            let link = LinkModel::estimated(&ch, &cfg);
            let mut rng = RngStream::new(seed).child(6).rng();
            let b = vec![complex_gaussian_matrix(&mut rng, 3, 1, 1.0), complex_gaussian_matrix(&mut rng, 3, 2, 1.0)];
            let w = mamse_receiver_dl(&b, &link)?;
            let dec = decompose(&b, &w)?;
            let prob = build_gp(problem, &dec, &phi_matrix(&dec, &link)?, &d_matrix(&dec, &link)?, &link, &limits)?;
            let sol = gp_solve(&prob, &GpOptions::default())?;
            let budget = limits.budget();
            Ok((sol.objective, zoom_grid_min(&prob, 1e-6 * budget, budget)))
        };
        match run() {
            Ok((gp, grid)) => worst = worst.max((gp - grid).abs() / grid),
            Err(_) => failures += 1,
        }
    }
    let closed = closed_form_gps();
    let closed_err = closed.iter().map(|(got, want)| (got - want).abs()).fold(0.0, f64::max);
    verdict(
        failures == 0 && worst <= 1e-3 && closed_err <= 1e-6,
        format!("worst gap to grid {worst:.1e} over 50 instances, closed-form error {closed_err:.1e}"),
    )
}

fn posynomial_consistency() -> Verdict {
    let gaps: Vec<_> = (0..100).map(|s| check_posynomial(4000 + s)).collect();
    let errs = gaps.iter().filter(|g| g.is_err()).count();
    let worst = gaps.iter().filter_map(|g| g.as_ref().ok()).fold(0.0_f64, |a, b| a.max(*b));
    verdict(errs == 0 && worst <= 1e-9, format!("worst relative gap {worst:.1e} over 100 decompositions"))
}

fn row(rows: &[AggregateRow], snr: f64, mode: DesignMode) -> &AggregateRow {
    rows.iter().find(|r| r.snr_db == snr && r.design_mode == mode).expect("row present")
}

fn design_mode_ordering() -> Verdict {
    let start = Instant::now();
    let rows = match run_experiment(&ExperimentSpec::default(), 4) {
        Ok(r) => aggregate(&r),
        Err(e) => return verdict(false, format!("experiment failed: {e}")),
    };
    let elapsed = start.elapsed();
    let snrs = [0.0, 5.0, 10.0, 15.0, 20.0];
    let ordered = snrs.iter().all(|&s| {
        let (p, r, n) =
            (row(&rows, s, DesignMode::Perfect), row(&rows, s, DesignMode::Robust), row(&rows, s, DesignMode::Naive));
        p.sum_amse <= r.sum_amse && r.sum_amse <= n.sum_amse
    });
    let gap = |s: f64| row(&rows, s, DesignMode::Naive).sum_amse - row(&rows, s, DesignMode::Robust).sum_amse;
    let widening = gap(20.0) > gap(5.0);
    let aser =
        [15.0, 20.0].iter().all(|&s| row(&rows, s, DesignMode::Robust).aser <= row(&rows, s, DesignMode::Naive).aser);
    verdict(
        ordered && widening && aser && elapsed < Duration::from_secs(600),
        format!(
            "ordering {ordered}, gap 5 dB {:.3e} -> 20 dB {:.3e}, ASER robust<=naive at 15/20 dB {aser}, {elapsed:.2?}",
            gap(5.0),
            gap(20.0)
        ),
    )
}

fn correlation_degradation() -> Verdict {
    let low = ExperimentSpec { design_modes: vec![DesignMode::Robust], aser_symbols: 100, ..Default::default() };
    let mut high = low.clone();
    high.base.rho_b = vec![0.4, 0.5];
    high.base.rho_m = vec![0.7, 0.8];
    let (Ok(a), Ok(b)) = (run_experiment(&low, 4), run_experiment(&high, 4)) else {
        return verdict(false, "experiment failed".into());
    };
    let (a, b) = (aggregate(&a), aggregate(&b));
    let worse = a.iter().zip(&b).all(|(l, h)| h.sum_amse > l.sum_amse);
    let margins: Vec<String> = a.iter().zip(&b).map(|(l, h)| format!("{:.3}", h.sum_amse - l.sum_amse)).collect();
    verdict(worse, format!("high minus low correlation AMSE per SNR: {}", margins.join(", ")))
}

fn white_reduction() -> Verdict {
    let gaps: Vec<_> = (0..20).map(|s| check_white_reduction(5000 + s)).collect();
    let errs = gaps.iter().filter(|g| g.is_err()).count();
    let worst = gaps.iter().filter_map(|g| g.as_ref().ok()).fold(0.0_f64, |a, b| a.max(*b));
    verdict(errs == 0 && worst <= 1e-9, format!("worst relative trace gap {worst:.1e} over 20 instances"))
}

fn determinism() -> Verdict {
    let spec = ExperimentSpec {
        snr_grid_db: vec![0.0, 10.0, 20.0],
        n_realizations: 4,
        problems: Problem::SUM_AMSE.to_vec(),
        aser_symbols: 500,
        ..Default::default()
    };
    let csv = |jobs: usize| -> Option<Vec<u8>> {
        let rows = aggregate(&run_experiment(&spec, jobs).ok()?);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).ok()?;
        Some(buf)
    };
    let (one, eight) = (csv(1), csv(8));
    let same = one.is_some() && one == eight;
    verdict(same, format!("{} CSV bytes, identical across 1 and 8 workers: {same}", one.map_or(0, |b| b.len())))
}

#[test]
fn acceptance_criteria() {
    let start = Instant::now();
    let runs = convergence_runs();
    let conv_elapsed = start.elapsed();
    let results = [
        ("duality conservation", duality_conservation()),
        ("power feasibility", power_feasibility(&runs)),
        ("fixed-point identities", fixed_point_identities()),
        ("monotone convergence", monotone_convergence(&runs, conv_elapsed)),
        ("GP oracle equivalence", gp_oracle()),
        ("posynomial consistency", posynomial_consistency()),
        ("robust vs naive ordering", design_mode_ordering()),
        ("correlation degradation", correlation_degradation()),
        ("white-noise reduction", white_reduction()),
        ("determinism", determinism()),
    ];
    for (i, (name, v)) in results.iter().enumerate() {
        println!("{} criterion {:>2} {name}: {}", if v.passed { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|(_, v)| !v.passed).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
