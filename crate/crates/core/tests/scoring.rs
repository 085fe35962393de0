mod common;

use std::path::{Path, PathBuf};

use common::desk_corpus;
use perceptiq_core::image_io::{load_gray, rmse, save_png};
use perceptiq_core::msd::{forest_train, msd_features, ForestParams};
use perceptiq_core::niqe::{fit_natural_model_from_images, niqe_score, NiqeConfig};
use perceptiq_core::scoring::{
    batch_report, perceptual_score, region_of, score_image, Region, RmseSpace, ScoreOptions,
    CSV_COLUMNS, MEAN_ROW,
};
use perceptiq_core::synth::add_gaussian_noise;
use perceptiq_core::{Error, GrayImage};

struct Fixture {
    _dir: tempfile::TempDir,
    sr: PathBuf,
    hr: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let sr = dir.path().join("sr");
    let hr = dir.path().join("hr");
    std::fs::create_dir_all(&sr).unwrap();
    std::fs::create_dir_all(&hr).unwrap();
    for (i, img) in desk_corpus(3, 96, 900).iter().enumerate() {
        save_png(img, hr.join(format!("img{i}.png"))).unwrap();
        let noisy = add_gaussian_noise(img, 4.0 * (i + 1) as f64, i as u64);
        save_png(&noisy, sr.join(format!("img{i}.png"))).unwrap();
    }
    Fixture { _dir: dir, sr, hr }
}

fn models() -> (
    perceptiq_core::niqe::MvgModel,
    perceptiq_core::msd::ForestModel,
) {
    let cfg = NiqeConfig {
        patch: 32,
        ..Default::default()
    };
    let corpus = desk_corpus(6, 128, 1);
    let natural = fit_natural_model_from_images(&corpus, &cfg, "").unwrap();
    let rows: Vec<_> = corpus
        .iter()
        .enumerate()
        .map(|(i, img)| (msd_features(img, 16).unwrap().pooled, 3.0 + i as f64))
        .collect();
    let forest = forest_train(
        &rows,
        &ForestParams {
            n_trees: 8,
            min_leaf: 1,
            ..Default::default()
        },
    )
    .unwrap();
    (natural, forest)
}

#[test]
fn batch_rows_equal_single_invocations() {
    let fx = fixture();
    let (natural, forest) = models();
    let opts = ScoreOptions {
        niqe: &natural,
        forest: Some(&forest),
        crop: 0,
        rmse_space: RmseSpace::Luma,
    };
    let report = batch_report(&fx.sr, Some(&fx.hr), &opts).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(!report.has_errors());
    for (i, row) in report.rows.iter().enumerate() {
        let name = format!("img{i}.png");
        assert_eq!(row.image, name);
        let single = score_image(&fx.sr.join(&name), Some(&fx.hr.join(&name)), &opts);
        assert_eq!(&single, row);

        let sr = load_gray(fx.sr.join(&name)).unwrap();
        let hr = load_gray(fx.hr.join(&name)).unwrap();
        assert_eq!(row.niqe, Some(niqe_score(&sr, &natural).unwrap()));
        assert_eq!(row.rmse, Some(rmse(&sr, &hr).unwrap()));
        let p = perceptual_score(row.ma.unwrap(), row.niqe.unwrap()).unwrap();
        assert!((row.perceptual.unwrap() - p).abs() < 1e-12);
    }

    let mean = |f: fn(&perceptiq_core::scoring::ImageReport) -> Option<f64>| {
        report.rows.iter().map(|r| f(r).unwrap()).sum::<f64>() / 3.0
    };
    assert!((report.aggregate.niqe.unwrap() - mean(|r| r.niqe)).abs() < 1e-12);
    assert!((report.aggregate.ma.unwrap() - mean(|r| r.ma)).abs() < 1e-12);
    assert!((report.aggregate.perceptual.unwrap() - mean(|r| r.perceptual)).abs() < 1e-12);
    assert!((report.aggregate.rmse.unwrap() - mean(|r| r.rmse)).abs() < 1e-12);
}

#[test]
fn self_comparison_is_region_one() {
    let fx = fixture();
    let (natural, _) = models();
    let opts = ScoreOptions {
        niqe: &natural,
        forest: None,
        crop: 4,
        rmse_space: RmseSpace::Rgb,
    };
    let report = batch_report(&fx.hr, Some(&fx.hr), &opts).unwrap();
    for row in &report.rows {
        assert_eq!(row.rmse, Some(0.0));
        assert_eq!(row.region, Some(Region::R1));
        assert_eq!(row.ma, None);
        assert_eq!(row.perceptual, None);
    }
}

#[test]
fn reports_are_stable_text() {
    let fx = fixture();
    let (natural, forest) = models();
    let opts = ScoreOptions {
        niqe: &natural,
        forest: Some(&forest),
        crop: 0,
        rmse_space: RmseSpace::Luma,
    };
    let a = batch_report(&fx.sr, Some(&fx.hr), &opts).unwrap();
    let b = batch_report(&fx.sr, Some(&fx.hr), &opts).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json(), b.to_json());

    let csv = a.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().starts_with(MEAN_ROW));
    let json: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn per_image_failures_do_not_abort() {
    let fx = fixture();
    let (natural, _) = models();
    save_png(
        &GrayImage::filled(96, 96, 128.0).unwrap(),
        fx.sr.join("flat.png"),
    )
    .unwrap();
    save_png(
        &GrayImage::filled(96, 96, 130.0).unwrap(),
        fx.hr.join("flat.png"),
    )
    .unwrap();
    save_png(&desk_corpus(1, 64, 3)[0], fx.sr.join("small.png")).unwrap();
    save_png(&desk_corpus(1, 96, 3)[0], fx.hr.join("small.png")).unwrap();
    let opts = ScoreOptions {
        niqe: &natural,
        forest: None,
        crop: 0,
        rmse_space: RmseSpace::Luma,
    };
    let report = batch_report(&fx.sr, Some(&fx.hr), &opts).unwrap();
    assert_eq!(report.rows.len(), 5);
    assert!(report.has_errors());
    assert_eq!(report.aggregate.failed, 2);

    let flat = report.rows.iter().find(|r| r.image == "flat.png").unwrap();
    assert!(flat
        .error
        .as_deref()
        .unwrap()
        .contains("insufficient texture"));
    assert_eq!(flat.rmse, Some(2.0));
    let small = report.rows.iter().find(|r| r.image == "small.png").unwrap();
    assert!(small.error.as_deref().unwrap().contains("rmse"));
    assert!(small.niqe.is_some());
}

#[test]
fn unpaired_and_empty_directories_fail() {
    let fx = fixture();
    let (natural, _) = models();
    let opts = ScoreOptions {
        niqe: &natural,
        forest: None,
        crop: 0,
        rmse_space: RmseSpace::Luma,
    };
    std::fs::remove_file(fx.hr.join("img1.png")).unwrap();
    assert!(matches!(
        batch_report(&fx.sr, Some(&fx.hr), &opts),
        Err(Error::InvalidParameter(_))
    ));
    let empty = tempfile::tempdir().unwrap();
    assert!(batch_report(empty.path(), None, &opts).is_err());
    assert!(batch_report(Path::new("/nonexistent/dir"), None, &opts).is_err());
}

#[test]
fn quoted_table_rows_classify() {
    assert_eq!(region_of(11.86).unwrap(), Region::R2);
    assert_eq!(region_of(14.12).unwrap(), Region::R3);
    assert_eq!(region_of(11.5).unwrap(), Region::R1);
    assert_eq!(region_of(12.5).unwrap(), Region::R2);
    assert_eq!(region_of(16.0).unwrap(), Region::R3);
    assert_eq!(region_of(16.01).unwrap(), Region::OutOfRange);
    assert!(region_of(-0.1).is_err());
}
