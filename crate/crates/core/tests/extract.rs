mod common;

use common::{rng, OracleStream};
use featdist_core::corpus::{save_image, DatasetManifest, ManifestEntry, RasterImage};
use featdist_core::extract::{ExtractorConfig, ExtractorKind, FeatureExtractor};
use featdist_core::frechet::{fit_gaussian, frechet_distance};
use featdist_core::Error;
use rand::Rng;

fn random_image(seed: u64, side: u32, c: u8) -> RasterImage {
    let mut r = rng(seed);
    let px = (0..side as usize * side as usize * c as usize).map(|_| r.random()).collect();
    RasterImage::new(side, side, c, px).unwrap()
}

/// Block means of the channel mean, for sides that divide exactly.
fn block_pool(img: &RasterImage, side: u32) -> Vec<f64> {
    let b = img.width() / side;
    let mut out = Vec::new();
    for cy in 0..side {
        for cx in 0..side {
            let mut sum = 0.0;
            for y in cy * b..(cy + 1) * b {
                for x in cx * b..(cx + 1) * b {
                    let p = img.pixel(x, y);
                    sum += p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64;
                }
            }
            out.push(sum / (b * b) as f64 / 255.0);
        }
    }
    out
}

fn projection_oracle(x: &[f64], seed: u64, widths: &[usize]) -> Vec<f64> {
    let mut stream = OracleStream::new(seed);
    let mut x = x.to_vec();
    for (l, &out) in widths.iter().enumerate() {
        let inp = x.len();
        let a = (6.0 / (inp + out) as f64).sqrt();
        let w: Vec<f64> = (0..inp * out).map(|_| (2.0 * stream.unit() - 1.0) * a).collect();
        let mut y: Vec<f64> = (0..out).map(|o| (0..inp).map(|i| w[o * inp + i] * x[i]).sum()).collect();
        if l + 1 < widths.len() {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        x = y;
    }
    x
}

#[test]
fn raw_downsample_matches_block_means() {
    let img = random_image(1, 64, 3);
    let ex = FeatureExtractor::from_config(&ExtractorConfig::raw_downsample("raw", 8)).unwrap();
    let v = ex.extract(&img).unwrap();
    let expected = block_pool(&img, 8);
    assert_eq!(v.len(), 64);
    for (a, b) in v.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn random_projection_matches_oracle_network() {
    let img = random_image(2, 64, 3);
    let widths = vec![24, 10];
    let ex = FeatureExtractor::from_config(&ExtractorConfig::random_projection("rp", 77, 8, widths.clone())).unwrap();
    assert_eq!(ex.dim(), 10);
    let v = ex.extract(&img).unwrap();
    let expected = projection_oracle(&block_pool(&img, 8), 77, &widths);
    for (a, b) in v.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn default_random_projection_shape() {
    let config = ExtractorConfig {
        id: "rp".into(),
        kind: ExtractorKind::RandomProjection,
        dim: None,
        seed: Some(0),
        side: None,
        widths: None,
        resize: None,
    };
    let ex = FeatureExtractor::from_config(&config).unwrap();
    assert_eq!(ex.dim(), 2048);
    let v = ex.extract(&random_image(3, 32, 1)).unwrap();
    assert_eq!(v.len(), 2048);
}

#[test]
fn one_pixel_changes_the_embedding() {
    let img = random_image(4, 32, 3);
    let mut other = img.clone();
    other.pixels_mut()[0] = img.pixels()[0].wrapping_add(90);
    for config in [
        ExtractorConfig::raw_downsample("raw", 32),
        ExtractorConfig::random_projection("rp", 5, 32, vec![64, 32]),
    ] {
        let ex = FeatureExtractor::from_config(&config).unwrap();
        assert_ne!(ex.extract(&img).unwrap(), ex.extract(&other).unwrap());
        assert_eq!(ex.extract(&img).unwrap(), ex.extract(&img).unwrap());
    }
}

#[test]
fn same_seed_same_network_and_different_seed_differs() {
    let img = random_image(5, 32, 3);
    let a = FeatureExtractor::from_config(&ExtractorConfig::random_projection("a", 1, 16, vec![32, 8])).unwrap();
    let b = FeatureExtractor::from_config(&ExtractorConfig::random_projection("b", 1, 16, vec![32, 8])).unwrap();
    let c = FeatureExtractor::from_config(&ExtractorConfig::random_projection("c", 2, 16, vec![32, 8])).unwrap();
    assert_eq!(a.extract(&img).unwrap(), b.extract(&img).unwrap());
    assert_ne!(a.extract(&img).unwrap(), c.extract(&img).unwrap());
}

#[test]
fn extract_set_is_elementwise_and_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<RasterImage> = (0..12).map(|i| random_image(100 + i, 32, 3)).collect();
    let mut entries = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let path = dir.path().join(format!("{i}.png"));
        save_image(img, &path).unwrap();
        entries.push(ManifestEntry::new(path));
    }
    let ex = FeatureExtractor::from_config(&ExtractorConfig::random_projection("rp", 3, 8, vec![16, 6])).unwrap();

    let set = ex.extract_set(&DatasetManifest::new("d", entries.clone()).unwrap()).unwrap();
    assert_eq!((set.len(), set.dim()), (12, 6));
    assert_eq!(set.extractor_id, "rp");
    for (i, img) in images.iter().enumerate() {
        assert_eq!(set.row(i), ex.extract(img).unwrap().as_slice());
    }

    let mut perm: Vec<usize> = (0..12).collect();
    perm.reverse();
    perm.swap(2, 7);
    let shuffled: Vec<ManifestEntry> = perm.iter().map(|&i| entries[i].clone()).collect();
    let set2 = ex.extract_set(&DatasetManifest::new("d", shuffled).unwrap()).unwrap();
    for (row, &i) in perm.iter().enumerate() {
        assert_eq!(set2.row(row), set.row(i));
    }
}

#[test]
fn self_distance_of_extracted_set_is_zero() {
    let images: Vec<RasterImage> = (0..40).map(|i| random_image(200 + i, 32, 3)).collect();
    let manifest = DatasetManifest::new("d", (0..40).map(|i| ManifestEntry::new(format!("{i}"))).collect()).unwrap();
    let ex = FeatureExtractor::from_config(&ExtractorConfig::random_projection("rp", 9, 8, vec![16, 12])).unwrap();
    let set = ex
        .extract_images(&manifest, |p| Ok(images[p.to_str().unwrap().parse::<usize>().unwrap()].clone()))
        .unwrap();
    let g = fit_gaussian(&set).unwrap();
    assert!(frechet_distance(&g, &g).unwrap().value <= 1e-9);
}

#[test]
fn external_extractors_do_not_compute() {
    let config = ExtractorConfig {
        id: "inception".into(),
        kind: ExtractorKind::External,
        dim: None,
        seed: None,
        side: None,
        widths: None,
        resize: None,
    };
    let ex = FeatureExtractor::from_config(&config).unwrap();
    assert_eq!(ex.dim(), 2048);
    assert!(matches!(ex.extract(&random_image(6, 8, 1)), Err(Error::Unsupported(_))));
}

#[test]
fn declared_dim_must_match() {
    let mut config = ExtractorConfig::raw_downsample("raw", 4);
    config.dim = Some(17);
    assert!(matches!(FeatureExtractor::from_config(&config), Err(Error::Shape(_))));
}
