use fput_core::ensemble::{sample_kappa, Distribution, EnsembleConfig};
use fput_core::frame::WaveFrame;
use fput_core::lattice::{integrate, simulation_window, LatticeField};
use fput_core::modulation::{integrate_modulation, ModulationState};
use fput_core::profile::ProfileFamily;

fn config(sigma: f64) -> EnsembleConfig {
    EnsembleConfig { distribution: Distribution::UniformPmSqrt3, sigma, c_star: 1.015, realizations: 1, master_seed: 2024 }
}

#[test]
fn modulation_reconstruction_matches_direct_simulation() {
    let fam = ProfileFamily::new();
    let c = 1.015;
    let t_end = 100.0;
    let (j_min, w) = simulation_window(c, t_end, 50);
    let coeffs = sample_kappa(&config(0.07), 0, j_min, w).unwrap();
    let init = ModulationState::wave(c, j_min, w);
    let jet = fam.jet(c).unwrap();
    let u0 = init.reconstruct(&WaveFrame::new(&jet, 0.0));
    let mut direct: Vec<LatticeField> = Vec::new();
    integrate(&u0, &coeffs, 0.05, t_end, 100, |_, u| {
        direct.push(u.clone());
        Ok(())
    })
    .unwrap();
    let mut worst = 0.0f64;
    let mut worst_ortho = 0.0f64;
    let mut k = 0;
    integrate_modulation(&fam, &init, &coeffs, 0.05, t_end, 100, |_, s, frame| {
        let u = s.reconstruct(frame);
        let d = u.sub(&direct[k]).sup_norm();
        worst = worst.max(d);
        let o = fput_core::modulation::orthogonality(frame, &s.eta);
        worst_ortho = worst_ortho.max(o[0].abs().max(o[1].abs()));
        k += 1;
        Ok(())
    })
    .unwrap();
    assert!(worst <= 1e-5, "{worst}");
    assert!(worst_ortho <= 1e-6, "{worst_ortho}");
}
