//! Pore-size distributions of rasterized disks against their analytic values.

use membrane_mech::psd::{aggregate_replicates, area_weighted_psd, dilate_mask, equivalent_diameter, label_pores};
use membrane_mech::synth::{generate_disk_mask, random_disks, Disk};

const SCALE: f64 = 0.5;
const IMAGE: (f64, f64) = (200.0, 200.0);

/// Diameters at bin centres, so the expected bin is unambiguous.
fn centred_disks() -> Vec<Disk> {
    [6.25, 8.75, 10.25, 14.75, 20.25]
        .iter()
        .enumerate()
        .map(|(i, &d)| Disk {
            cx: 25.0 + 37.0 * i as f64,
            cy: 40.0 + 29.0 * i as f64,
            diameter: d,
        })
        .collect()
}

#[test]
fn porosity_and_bins_match_geometry() {
    let disks = centred_disks();
    let mask = generate_disk_mask(&disks, IMAGE, SCALE).unwrap();
    let analytic: f64 = disks.iter().map(Disk::area).sum::<f64>() / (IMAGE.0 * IMAGE.1) * 100.0;
    let psd = area_weighted_psd(&mask, 0.5);
    assert!((psd.surface_porosity - analytic).abs() <= 0.02 * analytic);
    assert!((psd.total_fraction() - psd.surface_porosity / 100.0).abs() < 1e-9);
    for d in &disks {
        let k = (d.diameter / 0.5).floor() as usize;
        assert!(psd.area_fraction[k] > 0.0, "no mass in bin of {} nm", d.diameter);
    }
    let occupied = psd.area_fraction.iter().filter(|&&v| v > 0.0).count();
    assert_eq!(occupied, disks.len());
}

#[test]
fn single_ten_nm_disk() {
    let disk = Disk {
        cx: 50.0,
        cy: 50.0,
        diameter: 10.0,
    };
    let mask = generate_disk_mask(&[disk], (100.0, 100.0), SCALE).unwrap();
    let psd = area_weighted_psd(&mask, 0.5);
    let nonzero: Vec<usize> = (0..psd.area_fraction.len())
        .filter(|&k| psd.area_fraction[k] > 0.0)
        .collect();
    assert_eq!(nonzero.len(), 1);
    assert!(nonzero[0] == 19 || nonzero[0] == 20);
    assert!((psd.area_fraction[nonzero[0]] - 78.54 / 1e4).abs() < 0.02 * 78.54 / 1e4);
}

#[test]
fn coating_dilation_adds_twice_the_thickness() {
    let disks = centred_disks();
    let mask = generate_disk_mask(&disks, IMAGE, SCALE).unwrap();
    let grown = dilate_mask(&mask, 1.8);
    assert!(grown.corrected);
    assert!(grown.porosity_pct() > mask.porosity_pct());
    let diameters = |m| {
        let mut d: Vec<f64> = label_pores(m)
            .iter()
            .map(|p| equivalent_diameter(p.pixel_area as f64 * SCALE * SCALE).unwrap())
            .collect();
        d.sort_by(f64::total_cmp);
        d
    };
    let before = diameters(&mask);
    let after = diameters(&grown);
    assert_eq!(before.len(), after.len());
    for (b, a) in before.iter().zip(&after) {
        assert!(((a - b) - 3.6).abs() <= 2.0 * SCALE, "{b} -> {a}");
    }
}

#[test]
fn replicate_masks_aggregate() {
    let psds: Vec<_> = (0..3)
        .map(|seed| {
            let disks = random_disks(25, (4.0, 14.0), IMAGE, 2.0, seed).unwrap();
            area_weighted_psd(&generate_disk_mask(&disks, IMAGE, SCALE).unwrap(), 0.5)
        })
        .collect();
    let agg = aggregate_replicates(&psds).unwrap();
    let mean_porosity = psds.iter().map(|p| p.surface_porosity).sum::<f64>() / 3.0;
    assert!((agg.porosity_mean - mean_porosity).abs() < 1e-12);
    assert!(agg.porosity_se > 0.0);
    let total: f64 = agg.mean.iter().sum();
    assert!((total - mean_porosity / 100.0).abs() < 1e-9);
}
