use num_complex::Complex64;
use rnd_waves::cxlinalg;
use rnd_waves::model::set_a;
use rnd_waves::fullwave::{het_bvp_solve, BvpOptions, SaddleEnd};
use rnd_waves::reduced::{singular_het_solve, Orientation, SolveOptions};
use rnd_waves::spectral::*;

fn cr(x: f64) -> Complex64 { Complex64::new(x, 0.0) }

#[test]
#[ignore]
fn diag() {
    let p = set_a().with_a(0.5182);
    let opts = SolveOptions { c_bracket: (0.1, 0.3), ..Default::default() };
    let seed = singular_het_solve(0.5182, &p, Orientation::Invasion, &opts).unwrap();
    let wave = het_bvp_solve(&seed, 1e-4, &p, &BvpOptions::default()).unwrap();
    let ctx = EvansContext::new(&wave, &p);

    // dense eigenvalues at |lambda| = 1e6 for the asymptotics ledger
    for a in [0.0_f64, 0.5182] {
        let pa = p.with_a(a).with_c(wave.wavespeed).with_eps(1e-4);
        let ctxa = EvansContext::new(&wave, &pa);
        let m = ctxa.matrix_at_end(SaddleEnd::PPlus, cr(1e6));
        let mut eigs: Vec<Complex64> = cxlinalg::eigenvalues4(&m).to_vec();
        eigs.sort_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap());
        println!("a={a}: dense |mu| = {:?}", eigs.iter().map(|z| z.norm()).collect::<Vec<_>>());
        println!("       predicted = {:?}", asymptotic_spatial_eigs(cr(1e6), &pa).iter().map(|z| z.norm()).collect::<Vec<_>>());
    }

    // backward flow at lambda = -0.8
    for lam in [-0.8_f64, -0.5, -0.2, 0.0] {
        let start = boundary_state(&ctx, cr(lam), FlowDirection::Backward).unwrap();
        println!("lam={lam}: start chart={:?} |W|={:.3}", start.chart,
            start.w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt());
        match riccati_flow(&ctx, cr(lam), &start, ctx.z0) {
            Ok(st) => println!("   flow ok: swaps={} |W|={:.3}", st.swaps, st.w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()),
            Err(e) => println!("   flow ERR: {e}"),
        }
    }
}
