use super::*;
use crate::basis::build_basis;

#[test]
fn phantom_is_deterministic() {
    let a = make_phantom(16, 3).unwrap();
    let b = make_phantom(16, 3).unwrap();
    let c = make_phantom(16, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn phantom_maximum_matches_direct_formula() {
    let l = 32;
    let v = make_phantom(l, 0).unwrap();
    let (arg, &max) = v
        .data()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let (i, j, k) = (arg / (l * l), (arg / l) % l, arg % l);
    let p = [i, j, k].map(|t| (t as f64 - 16.0 + 0.5) / 16.0);
    let mut direct = 0.0;
    for b in phantom_blobs(0) {
        let d: Vec<f64> = (0..3).map(|a| p[a] - b.center[a]).collect();
        let mut q = 0.0;
        for axis in 0..3 {
            let mut t = 0.0;
            for r in 0..3 {
                t += b.frame[r][axis] * d[r];
            }
            q += (t / b.sigmas[axis]).powi(2);
        }
        direct += b.amplitude * (-q / 2.0).exp();
    }
    assert!((max - direct).abs() <= 1e-14 * direct);
    assert!(max > 0.4);
}

#[test]
fn zero_amplitude_phantom_is_zero() {
    let mut blobs = phantom_blobs(5);
    for b in &mut blobs {
        b.amplitude = 0.0;
    }
    let v = phantom_from_blobs(12, &blobs);
    assert!(v.data().iter().all(|&x| x == 0.0));
}

#[test]
fn identity_projection_sums_along_z() {
    let v = make_phantom(16, 1).unwrap();
    let img = project(&v, &IDENTITY).unwrap();
    for i in 0..16 {
        for j in 0..16 {
            let sum: f64 = (0..16).map(|k| v.get(i, j, k)).sum::<f64>() * v.voxel_size();
            assert!((img.get(i, j) - sum).abs() < 1e-12 * sum.abs().max(1.0));
        }
    }
}

#[test]
fn in_plane_rotation_rotates_projection() {
    let v = make_phantom(32, 2).unwrap();
    let base = project(&v, &IDENTITY).unwrap();
    let phi = 0.61;
    let rotated = project(&v, &rotation_z(phi)).unwrap();
    let expected = base.rotated(phi);
    let err = rotated.sub(&expected).norm() / expected.norm();
    assert!(err <= 0.05, "{err}");
}

#[test]
fn projection_preserves_mass() {
    let blobs = vec![Blob {
        center: [0.1, -0.05, 0.0],
        amplitude: 1.0,
        sigmas: [0.15, 0.1, 0.2],
        frame: rotation_z(0.3),
    }];
    let v = phantom_from_blobs(32, &blobs);
    let vs = v.voxel_size();
    let mass3: f64 = v.data().iter().sum::<f64>() * vs.powi(3);
    let r = Stream::new(9, domain::TEST, 0).rotation();
    let img = project(&v, &r).unwrap();
    let mass2: f64 = img.data().iter().sum::<f64>() * vs * vs;
    assert!((mass2 / mass3 - 1.0).abs() < 0.02, "{mass2} {mass3}");
    assert!(project(&v, &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]).is_err());
}

#[test]
fn noiseless_dataset_is_filtered_projections() {
    let basis = build_basis(16, 1.0).unwrap();
    let v = make_phantom(16, 0).unwrap();
    let cfg = SimulationConfig::new(6, 3, None, 11);
    let d = make_dataset(&basis, &v, &cfg).unwrap();
    assert_eq!(d.noise, NoiseModel::none());
    assert_eq!(d.group_of, vec![0, 1, 2, 0, 1, 2]);
    for i in 0..6 {
        let x = basis.expand(&project(&v, &image_rotation(11, i)).unwrap()).unwrap();
        let y = x.weighted(&d.filters[d.group_of[i]].weights(&basis)).unwrap();
        let want = basis.synthesize(&y).unwrap();
        assert!(d.images[i].sub(&want).norm() <= 1e-12 * want.norm());
    }
    let one = make_dataset(&basis, &v, &SimulationConfig::new(4, 1, None, 1)).unwrap();
    assert_eq!(one.filters.len(), 1);
    assert!(one.group_of.iter().all(|&g| g == 0));
    assert!(make_dataset(&basis, &v, &SimulationConfig::new(4, 1, Some(0.0), 1)).is_err());
    assert!(make_dataset(&basis, &v, &SimulationConfig::new(4, 5, None, 1)).is_err());
}

#[test]
fn measured_snr_matches_target() {
    let basis = build_basis(32, 1.0).unwrap();
    let v = make_phantom(32, 0).unwrap();
    let cfg = SimulationConfig::new(1000, 100, Some(0.1), 3);
    let d = make_dataset(&basis, &v, &cfg).unwrap();
    // recompute from stored pairs: noise = image - filtered clean
    let mut signal = 0.0;
    let mut noise = 0.0;
    for (i, img) in d.images.iter().enumerate() {
        let x = basis.expand(&d.clean.as_ref().unwrap()[i]).unwrap();
        let y = basis
            .synthesize(&x.weighted(&d.filters[d.group_of[i]].weights(&basis)).unwrap())
            .unwrap();
        signal += y.disk_energy();
        noise += img.sub(&y).disk_energy();
    }
    let snr = signal / noise;
    assert!((snr / 0.1 - 1.0).abs() < 0.05, "{snr}");
    assert!((d.measured_snr.unwrap() / snr - 1.0).abs() < 1e-6);
}

#[test]
fn expected_noise_energy_matches_draws() {
    let basis = build_basis(16, 1.0).unwrap();
    let noise = NoiseModel {
        kind: NoiseKind::Colored,
        variance: 2.0,
    };
    let draws = 2000;
    let mut total = 0.0;
    for t in 0..draws {
        let mut s = Stream::new(1, domain::TEST, t);
        total += basis.synthesize(&noise.draw(&basis, &mut s)).unwrap().disk_energy();
    }
    let ratio = total / draws as f64 / noise.expected_energy(&basis);
    assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
}

fn coeff_dataset(basis: &BasisSpec, noise: &NoiseModel, count: usize) -> CoeffDataset {
    let coeffs = (0..count)
        .map(|t| noise.draw(basis, &mut Stream::new(5, domain::TEST, t as u64)))
        .collect();
    CoeffDataset {
        coeffs,
        group_of: vec![0; count],
        group_weights: vec![ctf_weights(basis)],
        sigma2: noise.variance,
        whitening: RadialWeightVec::ones(basis.len()),
    }
}

fn ctf_weights(basis: &BasisSpec) -> RadialWeightVec {
    Filter::Ctf(CtfParams::new(1.5, default_pixel_size(basis.grid_size()))).weights(basis)
}

#[test]
fn unit_white_noise_whitening_is_identity() {
    let basis = build_basis(16, 1.0).unwrap();
    let noise = NoiseModel::white(1.0);
    let data = coeff_dataset(&basis, &noise, 4);
    let w = whiten(&basis, &data, &noise).unwrap();
    assert_eq!(w.coeffs, data.coeffs);
    assert_eq!(w.group_weights, data.group_weights);
    assert_eq!(w.sigma2, 1.0);
}

#[test]
fn colored_noise_becomes_flat() {
    let basis = build_basis(32, 1.0).unwrap();
    let noise = NoiseModel {
        kind: NoiseKind::Colored,
        variance: 3.0,
    };
    let data = coeff_dataset(&basis, &noise, 500);
    let w = whiten(&basis, &data, &noise).unwrap();
    assert_eq!(w.sigma2, 1.0);
    // mean power per radial root band, over 8 bands
    let bands = 8;
    let mut power = vec![0.0; bands];
    let mut count = vec![0usize; bands];
    for j in 0..basis.len() {
        let b = ((basis.lambdas()[j] / basis.lambda_max() * bands as f64) as usize).min(bands - 1);
        for g in &w.coeffs {
            power[b] += g[j].norm_sqr();
        }
        count[b] += w.coeffs.len();
    }
    for b in 0..bands {
        let p = power[b] / count[b] as f64;
        assert!((p - 1.0).abs() < 0.1, "band {b}: {p}");
    }
    let psd = noise.psd(&basis);
    let direct: Vec<f64> = data.group_weights[0]
        .values()
        .iter()
        .zip(psd.values())
        .map(|(h, p)| h * (1.0 / (noise.variance * p).sqrt()))
        .collect();
    assert_eq!(w.group_weights[0].values(), &direct[..]);
}
