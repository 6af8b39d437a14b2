// temporary diagnostic: sparse-grid acceptance probes (criteria 7 and 8).
use std::time::Instant;

use bsdex_core::integrators::{tableau, SchemeName};
use bsdex_core::models::hagan_sabr_price;
use bsdex_core::presets::*;
use bsdex_core::sparsegrid::{evaluate_combined, solve_combination};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "sabr".into());
    match which.as_str() {
        "sabr" => sabr9(),
        "basket" => basket8(),
        _ => {}
    }
}

fn sabr9() {
    let p = SabrParams::default();
    let fams = sabr_axis_families(&p);
    let tab = tableau(SchemeName::HochOst4);
    let t0 = Instant::now();
    let sol = solve_combination(9, &fams, |g| sabr_problem(g, &p), &tab, 200, 100).unwrap();
    let got = evaluate_combined(&sol, 0, &[100.0, 0.4]).unwrap();
    let reference =
        hagan_sabr_price(100.0, 0.4, 0.0, p.strike, p.horizon, p.rate, p.alpha, p.beta, p.rho)
            .unwrap();
    println!(
        "sabr q=9 N_t=200: value {got:.6}, abs err {:.4e} (paper 1.308e-3)  [{:.0}s]",
        (got - reference).abs(),
        t0.elapsed().as_secs_f64()
    );
}

fn basket8() {
    let p = BasketParams::default();
    let fams = p.axis_families();
    let tab = tableau(SchemeName::HochOst4);
    let t0 = Instant::now();
    let sol = solve_combination(8, &fams, |g| basket_problem(g, &p), &tab, 50, 100).unwrap();
    let probe = p.transformed_probe().unwrap();
    let got = evaluate_combined(&sol, 0, &probe).unwrap();
    println!(
        "basket q=8 N_t=50: value {got:.5} (paper 7.50013)  [{:.0}s]",
        t0.elapsed().as_secs_f64()
    );
}
