//! Helpers shared by the cli integration tests.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use heavytail::rng::seeded;
use rand::Rng;
use rand_distr::{Distribution, Exp};

pub fn heavytail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heavytail"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn run_to(args: &[&str], out: &Path) -> Vec<u8> {
    let mut full: Vec<&str> = args.to_vec();
    let out_s = out.to_str().unwrap();
    full.extend(["--out", out_s]);
    let o = heavytail(&full);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(out).unwrap()
}

/// Time-weighted occupation of a continuous-time chain with generator rows
/// `q`, simulated jump by jump from state 0.
pub fn ctmc_occupation(q: &[Vec<f64>], jumps: usize, seed: u64) -> Vec<f64> {
    let n = q.len();
    let mut rng = seeded(seed);
    let mut occ = vec![0.0; n];
    let mut state = 0;
    for _ in 0..jumps {
        let rate: f64 = (0..n).filter(|&j| j != state).map(|j| q[state][j]).sum();
        occ[state] += Exp::new(rate).unwrap().sample(&mut rng);
        let mut u = rng.random::<f64>() * rate;
        let mut next = state;
        for j in (0..n).filter(|&j| j != state) {
            next = j;
            if u < q[state][j] {
                break;
            }
            u -= q[state][j];
        }
        state = next;
    }
    let total: f64 = occ.iter().sum();
    occ.iter().map(|t| t / total).collect()
}
