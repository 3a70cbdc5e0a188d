//! Gradient sampling hands over to the trust-region method once the
//! sampling radius drops below 1e-2. Prints the certificate reductions and
//! the contraction ratios recorded there.

use nsopt::bench::build_ratio_vectors;
use nsopt::grafus::{run_hybrid, GrafusConfig};
use nsopt::gs::GsConfig;
use nsopt::nalgebra::DVector;
use nsopt::oracle::{make_test_function, Objective};
use nsopt::sampling::SampleRng;

fn main() -> nsopt::Result<()> {
    let f1 = make_test_function("F1", 5)?;
    let fs = f1.known_optimum().unwrap();
    let mut rng = SampleRng::new(2);
    let x0 = DVector::from_vec(vec![-1.2, 0.8, 1.9, -0.6, 0.1]);
    let t = run_hybrid(&f1, &GsConfig::default(), &GrafusConfig::default(), &x0, &mut rng)?;

    let gs = t.gs.as_ref().expect("GS phase ran");
    println!("GS: {} iterations, f - f* = {:.2e} at handover", gs.records.len(), gs.final_f - fs);
    let Some(gf) = &t.grafus else {
        println!("{}", t.note.unwrap_or_default());
        return Ok(());
    };
    println!("{:>4} {:>12} {:>10} {:>10} {:>10}", "k", "f - f*", "nu", "nu ratio", "x* ratio");
    for r in gf.reductions() {
        println!(
            "{:>4} {:>12.3e} {:>10.2e} {:>10.3} {:>10.3}",
            r.k,
            r.f - fs,
            r.nu,
            r.nu_ratio(),
            r.xstar_ratio().unwrap_or(f64::NAN)
        );
    }
    println!(
        "{:?} after {} outer iterations, f - f* = {:.2e}, {} H updates",
        gf.status,
        gf.outer.len(),
        gf.final_f - fs,
        gf.h_updates
    );
    let v = build_ratio_vectors(gf, 30);
    println!("vec_nu[..{}] = {:.3?}", v.reductions, &v.vec_nu[..v.reductions]);
    Ok(())
}
