// Scratch probe for sizing the acceptance experiments. Not part of the
// deliverable surface; run with `cargo run --release --example probe -- <what>`.

use lifnum::config::{preset, ScenarioConfig};
use lifnum::engine::{simulate, SimOptions};
use lifnum::experiments::{run_strong_experiment, run_weak_experiment, sample_seed};
use lifnum::model::threshold_current;
use lifnum::oracle::closed_form_spike_time;
use lifnum::paths::BrownianStore;
use lifnum::spikes::match_trains;
use std::time::Instant;

fn toy_config(drives: Vec<f64>, tau_c: f64, c_w: f64, min_samples: usize) -> ScenarioConfig {
    let mut cfg = preset("base").unwrap();
    cfg.network.depth = 3;
    cfg.network.width = 8;
    cfg.network.n_exc = 6;
    cfg.network.n_inh = 2;
    cfg.network.tau_c = tau_c;
    cfg.network.c_w = c_w;
    cfg.network.drives = Some(drives);
    cfg.grid.t_max = 10.0;
    cfg.grid.checkpoints = vec![10.0];
    cfg.pools.min_samples = min_samples;
    cfg.pools.max_samples = 6 * min_samples;
    cfg.pools.matched_floor = 400;
    cfg
}

fn main() {
    let what = std::env::args().nth(1).unwrap_or_else(|| "rates".into());
    match what.as_str() {
        "slope1" => slope1(),
        "rates" => rates(),
        "strong" => strong(),
        "weak" => weak(),
        "mismatch" => mismatch(),
        _ => eprintln!("unknown probe {what}"),
    }
}

// Criterion 1: grid first-spike-time error slope.
fn slope1() {
    let p = lifnum::model::NeuronParams {
        tau_v: 1.0,
        tau_c: 0.2,
        v_th: 1.0,
        v_r: 0.0,
        sigma: 0.0,
        drive: lifnum::model::Drive::Constant(2.0),
    };
    let exact = closed_form_spike_time(2.0, &p).unwrap();
    let net = lifnum::model::NetworkSpec::single(p).unwrap();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for exp in 5..=9 {
        let h = 2f64.powi(-exp);
        let store = BrownianStore::new(0, h, 4096, 1);
        let traj = simulate(&net, &store, 1, 2.0, &SimOptions::default()).unwrap();
        let err = (traj.spikes[0].times[0] - exact).abs();
        println!("h=2^-{exp}: first spike err {err:.6e}");
        hs.push(h);
        errs.push(err);
    }
    let fit = lifnum::analysis::fit_order(&hs, &errs).unwrap();
    println!("slope {:.3}", fit.slope);
}

fn rates() {
    // Layer rates for candidate drives on the 3x8 toy net.
    for b in [1.5f64, 2.0, 2.5, 3.0] {
        let cfg = toy_config(vec![b; 3], 0.2, 0.18, 10);
        let net = cfg.build_network().unwrap();
        let h_ref = cfg.grid.h_ref();
        let store = BrownianStore::new(7, h_ref, (10.0 / h_ref) as usize, net.n_neurons);
        let t0 = Instant::now();
        let traj = simulate(&net, &store, 1, 10.0, &SimOptions::default()).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        for l in 0..3 {
            let idx = net.neurons_in_layer(l);
            let n: usize = idx.iter().map(|&p| traj.spikes[p].times.len()).sum();
            print!("b={b}: layer {l} rate {:.2}  ", n as f64 / (8.0 * 10.0));
        }
        println!("(ref run {dt:.2}s)");
    }
}

fn strong() {
    let b: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.5);
    let seed: u64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let t0 = Instant::now();
    let mut cfg = toy_config(vec![b; 3], 0.2, 0.18, 500);
    cfg.seeds.master = seed;
    let out = run_strong_experiment(&cfg, &[1, 2, 3]).unwrap();
    println!("strong: {} samples in {:.1}s", out.n_samples, t0.elapsed().as_secs_f64());
    for c in &out.cells {
        println!(
            "h={:.5} depth={} matched {}/{} mse {:?} mse/h {:?} P_mis {:.3}",
            c.h, c.depth, c.n_matched, c.n_samples, c.mse, c.mse_over_h, c.mismatch_network.p_hat
        );
    }
    for (d, f) in &out.slopes {
        println!("depth {d}: slope {:.3}", f.slope);
    }
    for d in &out.diagnostics {
        println!(
            "h={:.5}: mean ref spikes/neuron {:.1}, min band count {:.2}",
            d.h, d.mean_ref_spikes_per_neuron, d.min_mean_band_count
        );
    }
}

fn weak() {
    let b: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.5);
    let emax: i32 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(-5);
    let seed: u64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(1);
    let t0 = Instant::now();
    let mut cfg = toy_config(vec![b; 3], 0.2, 0.18, 2000);
    cfg.grid.coarse_exps = (0..5).map(|k| emax - k).collect();
    cfg.seeds.master = seed;
    let out = run_weak_experiment(&cfg, &[1, 2, 3]).unwrap();
    println!("weak: {} samples in {:.1}s", out.n_samples, t0.elapsed().as_secs_f64());
    for c in &out.cells {
        println!(
            "h={:.5} depth={} t={} bias {:.5e} +- {:.2e}  (|b|/se {:.1})",
            c.h,
            c.depth,
            c.t,
            c.bias,
            c.stderr,
            c.bias.abs() / c.stderr
        );
    }
    for (t, d, f) in &out.slopes {
        println!(
            "t={t} depth {d}: slope {:?}",
            f.as_ref().map(|f| f.slope)
        );
    }
}

fn mismatch() {
    // Single noisy neuron: P(mismatch) vs h.
    let b: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.5);
    let sigma: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let t0 = Instant::now();
    let p = lifnum::model::NeuronParams {
        tau_v: 1.0,
        tau_c: 0.2,
        v_th: 1.0,
        v_r: 0.0,
        sigma,
        drive: lifnum::model::Drive::Constant(b),
    };
    let i_th = threshold_current(&p);
    let _ = i_th;
    let net = lifnum::model::NetworkSpec::single(p).unwrap();
    let horizon = 20.0;
    let h_ref = 2f64.powi(-10);
    let n_fine = (horizon / h_ref) as usize;
    let n_samples = 1500;
    let mut hs = Vec::new();
    let mut ps = Vec::new();
    for exp in [5, 6, 7, 8, 9] {
        let factor = 1usize << (10 - exp);
        let mut mis = 0usize;
        for k in 0..n_samples {
            let store = BrownianStore::new(sample_seed(11, k), h_ref, n_fine, 1);
            let refr = simulate(&net, &store, 1, horizon, &SimOptions::default()).unwrap();
            let coarse = simulate(&net, &store, factor, horizon, &SimOptions::default()).unwrap();
            let m = match_trains(&refr.spikes[0], &coarse.spikes[0], horizon);
            if m.horizon_mismatch {
                mis += 1;
            }
        }
        let p_hat = mis as f64 / n_samples as f64;
        println!("h=2^-{exp}: P(mis) {p_hat:.4} ({mis}/{n_samples})");
        hs.push(2f64.powi(-(exp as i32)));
        ps.push(p_hat);
    }
    let fit = lifnum::analysis::fit_order(&hs, &ps).unwrap();
    println!("mismatch slope {:.3} in {:.1}s", fit.slope, t0.elapsed().as_secs_f64());
}
