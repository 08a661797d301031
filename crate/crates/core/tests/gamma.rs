use modscat::galilean::modulation;
use modscat::grid::{ComplexField, GridSpec};
use modscat::lens;
use modscat::propagator::{free_flow, free_flow_lens, Frame};
use modscat::wavepacket::*;
use modscat::C64;

fn packet(g: GridSpec, t0: f64) -> ComplexField {
    let u0 = ComplexField::from_fn(g, 0.0, |x| {
        let r2 = (x[0] - 0.4).powi(2) + (x[1] + 0.2).powi(2);
        C64::new(1.0, 0.3 * x[0]) * (-r2).exp()
    });
    let mut u = free_flow(&u0, t0).unwrap();
    u.t = t0;
    u
}

#[test]
fn modulated_gaussian_overlap_closed_form() {
    let g = GridSpec::new(2, 128, 16.0).unwrap();
    let t = 2.0;
    let base = ComplexField::from_fn(g, t, |x| C64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0));
    let u = modulation(&base, t, 1.0).unwrap();
    let p = WavepacketProfile::gaussian(2);
    let vg = lens::velocity_grid(g, t);
    let nodes = sample_nodes(&vg, 1.0, 5);
    let direct = gamma_direct(&u, Frame::Physical, &p, vg, &nodes).unwrap();
    for (&node, val) in nodes.iter().zip(&direct.values) {
        let v = vg.point(node);
        let v2 = v[0] * v[0] + v[1] * v[1];
        let exact = t / (t + 1.0) * (-4.0 * t * t * v2 / (1.0 + t)).exp();
        assert!((val - exact).norm() < 1e-12, "v = {v:?}: {val} vs {exact}");
    }
}

#[test]
fn three_routes_agree_in_physical_frame() {
    let g = GridSpec::new(2, 128, 16.0).unwrap();
    let u = packet(g, 1.0);
    let p = WavepacketProfile::gaussian(2);
    let conv = gamma_convolution(&u, Frame::Physical, &p).unwrap();
    let nodes = sample_nodes(&conv.grid, 1.5, 7);
    let direct = gamma_direct(&u, Frame::Physical, &p, conv.grid, &nodes).unwrap();
    let gap = gamma_relative_gap(&direct, &conv).unwrap();
    assert!(gap < 1e-10, "convolution gap {gap}");

    let four = gamma_fourier(&u, Frame::Physical, &p).unwrap();
    let fnodes = sample_nodes(&four.grid, 1.5, 7);
    let direct_f = gamma_direct(&u, Frame::Physical, &p, four.grid, &fnodes).unwrap();
    let gap = gamma_relative_gap(&direct_f, &four).unwrap();
    assert!(gap < 1e-8, "fourier gap {gap}");
}

#[test]
fn lens_frame_routes_match_physical() {
    let g = GridSpec::new(2, 128, 16.0).unwrap();
    let p = WavepacketProfile::gaussian(2);
    // B at t = 2 on the velocity box fixed at t = 0.5.
    let b_half = lens::to_lens(&packet(g, 0.5), 0.5);
    let b = free_flow_lens(&b_half, 0.5, 2.0).unwrap();
    assert_eq!(b.t, 2.0);
    let conv = gamma_convolution(&b, Frame::Lens, &p).unwrap();
    let nodes = sample_nodes(&b.grid, 1.5, 7);
    let direct = gamma_direct(&b, Frame::Lens, &p, b.grid, &nodes).unwrap();
    let gap = gamma_relative_gap(&direct, &conv).unwrap();
    assert!(gap < 1e-10, "lens convolution gap {gap}");
    let four = gamma_fourier(&b, Frame::Lens, &p).unwrap();
    let gap = gamma_relative_gap(&direct, &four).unwrap();
    assert!(gap < 1e-8, "lens fourier gap {gap}");

    // Physical reference on a box wide enough for t = 2.
    let gp = GridSpec::new(2, 256, 32.0).unwrap();
    let u = packet(gp, 2.0);
    let phys = gamma_direct(&u, Frame::Physical, &p, b.grid, &nodes).unwrap();
    let gap = gamma_relative_gap(&phys, &conv).unwrap();
    assert!(gap < 1e-9, "lens vs physical {gap}");
}

#[test]
fn gamma_file_round_trip() {
    let g = GridSpec::new(2, 16, 4.0).unwrap();
    let p = WavepacketProfile::gaussian(2);
    let u = packet(g, 1.0);
    let dir = tempfile::tempdir().unwrap();
    let conv = gamma_convolution(&u, Frame::Physical, &p).unwrap();
    let direct = gamma_direct(&u, Frame::Physical, &p, conv.grid, &[3, 40, 100]).unwrap();
    for f in [conv, direct] {
        let path = dir.path().join(format!("{}.bin", f.method.name()));
        f.write(&path).unwrap();
        assert_eq!(GammaField::read(&path).unwrap(), f);
    }
    let path = dir.path().join("direct.bin");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(GammaField::read(&path), Err(modscat::Error::Corrupt(_))));
}
