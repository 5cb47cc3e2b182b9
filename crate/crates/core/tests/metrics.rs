mod oracle;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlvlm::metrics::{
    detection_loss, mse, psnr, srra, ssim, text_stats, DetectionGrid, GridCell, Lexicons, Psnr, RasterImage,
};
use rlvlm::textenc::EmbeddingVector;

fn random_image(rng: &mut ChaCha8Rng) -> RasterImage {
    let (w, h) = (rng.gen_range(8..=24), rng.gen_range(8..=24));
    let c = if rng.gen_bool(0.5) { 1 } else { 3 };
    let samples = (0..w * h * c).map(|_| rng.gen()).collect();
    RasterImage::new(w, h, c, samples).unwrap()
}

#[test]
fn mse_hand_cases() {
    let a = RasterImage::new(2, 2, 1, vec![10, 20, 30, 40]).unwrap();
    assert_eq!(mse(&a, &a).unwrap(), 0.0);
    let b = RasterImage::new(2, 2, 1, vec![10, 20, 30, 42]).unwrap();
    assert_eq!(mse(&a, &b).unwrap(), 1.0);
    let c = RasterImage::new(1, 4, 1, vec![10, 20, 30, 40]).unwrap();
    assert!(mse(&a, &c).is_err());
}

#[test]
fn psnr_hand_cases() {
    let db = Psnr::from_mse(1.0, 255.0).db().unwrap();
    assert!((db - 48.1308).abs() < 1e-3);
    let a = RasterImage::filled(8, 8, 1, 7).unwrap();
    assert_eq!(psnr(&a, &a, 255.0).unwrap(), Psnr::Infinite);
    assert_eq!(Psnr::Infinite.to_string(), "inf");
    assert!(Psnr::from_mse(255.0 * 255.0, 255.0).db().unwrap().abs() < 1e-12);
    let grid: Vec<f64> = (1..200).map(|i| i as f64 * 0.37).collect();
    for w in grid.windows(2) {
        assert!(Psnr::from_mse(w[0], 255.0).db().unwrap() > Psnr::from_mse(w[1], 255.0).db().unwrap());
    }
}

#[test]
fn ssim_of_an_image_with_itself_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let img = random_image(&mut rng);
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn ssim_needs_a_full_window() {
    let small = RasterImage::filled(4, 4, 1, 0).unwrap();
    assert!(ssim(&small, &small).is_err());
}

#[test]
fn srra_matches_nearest_neighbor_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for round in 0..10 {
        let dim = 16;
        let mut gallery = Vec::new();
        for s in 0..20 {
            let v = oracle::unit((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
            gallery.push((format!("subject{s:02}"), v));
        }
        // A duplicate embedding under a different identity: the earlier entry wins.
        let dup = gallery[3].1.clone();
        gallery.push(("impostor".to_owned(), dup));
        let mut probes = Vec::new();
        let mut truth = Vec::new();
        for i in 0..40 {
            let s = i % 21;
            let noise = 0.1 * round as f64;
            let v: Vec<f64> = gallery[s].1.iter().map(|x| x + rng.gen_range(-noise..=noise)).collect();
            probes.push(oracle::unit(v));
            truth.push(gallery[s].0.clone());
        }
        let lib_gallery: Vec<(String, EmbeddingVector)> = gallery
            .iter()
            .map(|(id, v)| (id.clone(), EmbeddingVector::raw(v.clone()).unwrap()))
            .collect();
        let lib_probes: Vec<EmbeddingVector> = probes.iter().map(|v| EmbeddingVector::raw(v.clone()).unwrap()).collect();
        let got = srra(&lib_probes, &lib_gallery, &truth).unwrap();
        assert_eq!(got, oracle::brute_srra(&probes, &gallery, &truth), "round {round}");
    }
}

#[test]
fn text_stats_hand_counts() {
    let lex = Lexicons::default();
    let s = text_stats(
        "A red car waits behind a large white truck at the junction which has busy traffic.",
        &lex,
    );
    assert_eq!((s.words, s.unique_words, s.entities, s.modifiers), (16, 15, 3, 1));
    assert_eq!(s.detail_density, 5.0 / 16.0);

    let s = text_stats("Two pedestrians cross the wet road near a parked bus while several cars wait.", &lex);
    assert_eq!((s.words, s.unique_words, s.entities, s.modifiers), (14, 14, 4, 3));
    assert_eq!(s.detail_density, 3.0 / 14.0);

    let s = text_stats("", &lex);
    assert_eq!((s.words, s.unique_words, s.detail_density), (0, 0, 0.0));
}

fn cell(object: bool, p: &[f64]) -> GridCell {
    GridCell {
        object,
        class_probs: p.to_vec(),
    }
}

#[test]
fn detection_loss_hand_cases() {
    let truth = DetectionGrid::new(1, vec![cell(true, &[1.0, 0.0])]).unwrap();
    let pred = DetectionGrid::new(1, vec![cell(true, &[0.5, 0.5])]).unwrap();
    assert_eq!(detection_loss(&truth, &pred).unwrap(), 0.5);
    assert_eq!(detection_loss(&truth, &truth).unwrap(), 0.0);

    let truth = DetectionGrid::new(
        2,
        vec![
            cell(true, &[1.0, 0.0]),
            cell(true, &[0.0, 1.0]),
            cell(false, &[1.0, 0.0]),
            cell(true, &[0.25, 0.75]),
        ],
    )
    .unwrap();
    let pred = DetectionGrid::new(
        2,
        vec![
            cell(true, &[0.5, 0.5]),
            cell(true, &[0.0, 1.0]),
            cell(false, &[0.0, 1.0]),
            cell(true, &[0.75, 0.25]),
        ],
    )
    .unwrap();
    assert_eq!(detection_loss(&truth, &pred).unwrap(), 1.0);

    assert!(DetectionGrid::new(1, vec![cell(true, &[0.6, 0.6])]).is_err());
    assert!(DetectionGrid::new(2, vec![cell(true, &[1.0])]).is_err());
}

#[test]
fn pnm_parsing() {
    let img = RasterImage::parse_pnm("P2\n# c\n2 2\n255\n1 2\n3 4\n").unwrap();
    assert_eq!(img.samples(), &[1, 2, 3, 4]);
    assert_eq!(RasterImage::parse_pnm(&img.to_pnm()).unwrap(), img);
    let rgb = RasterImage::parse_pnm("P3 1 1 255 9 8 7").unwrap();
    assert_eq!((rgb.channels(), rgb.sample(0, 0, 2)), (3, 7));
    assert!(RasterImage::parse_pnm("P2 1 1 255").is_err());
    assert!(RasterImage::parse_pnm("P5 1 1 255 0").is_err());
    assert!(RasterImage::parse_pnm("P2 1 1 255 300").is_err());
}

proptest! {
    #[test]
    fn mse_is_symmetric_and_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_image(&mut rng);
        let b = RasterImage::new(a.width(), a.height(), a.channels(),
            (0..a.samples().len()).map(|_| rng.gen()).collect()).unwrap();
        let ab = mse(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, mse(&b, &a).unwrap());
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&s));
        prop_assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn text_stats_invariants(text in "[a-z ,.]{0,200}") {
        let s = text_stats(&text, &Lexicons::default());
        prop_assert!(s.unique_words <= s.words);
        prop_assert!((0.0..=1.0).contains(&s.detail_density));
        prop_assert!(s.entities <= s.words && s.modifiers <= s.words);
    }

    #[test]
    fn detection_loss_is_zero_iff_object_cells_agree(
        cells in prop::collection::vec((any::<bool>(), 0.0f64..1.0, 0.0f64..1.0), 4),
        shift in 0.01f64..0.5,
    ) {
        let truth = DetectionGrid::new(2, cells.iter().map(|&(o, p, _)| cell(o, &[p, 1.0 - p])).collect()).unwrap();
        // Background cells may disagree freely.
        let pred: Vec<GridCell> = cells
            .iter()
            .map(|&(o, p, noise)| if o { cell(o, &[p, 1.0 - p]) } else { cell(o, &[noise, 1.0 - noise]) })
            .collect();
        prop_assert_eq!(detection_loss(&truth, &DetectionGrid::new(2, pred.clone()).unwrap()).unwrap(), 0.0);
        if let Some(k) = cells.iter().position(|c| c.0) {
            let p = cells[k].1;
            let q = if p + shift <= 1.0 { p + shift } else { p - shift };
            let mut moved = pred;
            moved[k] = cell(true, &[q, 1.0 - q]);
            prop_assert!(detection_loss(&truth, &DetectionGrid::new(2, moved).unwrap()).unwrap() > 0.0);
        }
    }
}
