use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadq::geo::*;

fn date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 2, 29).unwrap()
}

/// Raster whose pixel (col, row) holds (col, row, col ^ row).
fn gradient_raster(w: usize, h: usize) -> RasterImage {
    let data = (0..h)
        .flat_map(|r| (0..w).flat_map(move |c| [c as u8, r as u8, (c ^ r) as u8]))
        .collect();
    RasterImage::new(
        w,
        h,
        data,
        GeoTransform::new(500.0, 800.0, 0.5, 0.5).unwrap(),
        date(),
    )
    .unwrap()
}

#[test]
fn world_to_pixel_examples() {
    let t = GeoTransform::new(100.0, 200.0, 0.5, 0.5).unwrap();
    assert_eq!(
        t.world_to_pixel(Point::new(100.0, 200.0)),
        PixelCoord { col: 0.0, row: 0.0 }
    );
    assert_eq!(
        t.world_to_pixel(Point::new(101.0, 199.0)),
        PixelCoord { col: 2.0, row: 2.0 }
    );
    assert!(GeoTransform::new(0.0, 0.0, 0.0, 1.0).is_err());
    assert!(GeoTransform::new(0.0, 0.0, 1.0, -1.0).is_err());
}

#[test]
fn pixel_world_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t = GeoTransform::new(
            rng.random_range(-1e6..1e6),
            rng.random_range(-1e6..1e7),
            rng.random_range(0.1..30.0),
            rng.random_range(0.1..30.0),
        )
        .unwrap();
        let p = Point::new(
            t.origin_x + rng.random_range(-5e4..5e4),
            t.origin_y + rng.random_range(-5e4..5e4),
        );
        let back = t.pixel_to_world(t.world_to_pixel(p));
        worst = worst.max((back.x - p.x).abs()).max((back.y - p.y).abs());
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn chainage_examples() {
    let r = RoadPolyline::new("A", vec![Point::new(0.0, 0.0), Point::new(100.0, 0.0)]).unwrap();
    assert_eq!(r.chainage_to_point(50.0).unwrap(), Point::new(50.0, 0.0));
    assert_eq!(r.chainage_to_point(0.0).unwrap(), Point::new(0.0, 0.0));
    let bend = RoadPolyline::new(
        "B",
        vec![
            Point::new(0.0, 0.0),
            Point::new(100.0, 0.0),
            Point::new(100.0, 100.0),
        ],
    )
    .unwrap();
    assert_eq!(bend.chainage_to_point(150.0).unwrap(), Point::new(100.0, 50.0));
    assert!(matches!(
        bend.chainage_to_point(-0.1),
        Err(GeoError::ChainageOutOfRange { .. })
    ));
    assert!(matches!(
        bend.chainage_to_point(200.1),
        Err(GeoError::ChainageOutOfRange { .. })
    ));
}

#[test]
fn degenerate_polylines_are_rejected() {
    assert!(RoadPolyline::new("A", vec![Point::new(0.0, 0.0)]).is_err());
    assert!(RoadPolyline::new("A", vec![Point::new(1.0, 1.0), Point::new(1.0, 1.0)]).is_err());
}

proptest! {
    #[test]
    fn vertices_sit_at_their_chainage(steps in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..20)) {
        let mut pts = vec![Point::new(0.0, 0.0)];
        for (dx, dy) in steps {
            let last = *pts.last().unwrap();
            if dx.hypot(dy) > 1e-3 {
                pts.push(Point::new(last.x + dx, last.y + dy));
            }
        }
        prop_assume!(pts.len() >= 2);
        let r = RoadPolyline::new("P", pts.clone()).unwrap();
        let cum = r.cumulative_chainage();
        prop_assert_eq!(cum[0], 0.0);
        for i in 0..pts.len() {
            prop_assert_eq!(r.chainage_to_point(cum[i]).unwrap(), pts[i]);
            if i > 0 {
                let d = pts[i].distance(&pts[i - 1]);
                prop_assert!(cum[i] > cum[i - 1]);
                prop_assert!(((cum[i] - cum[i - 1]) - d).abs() <= 1e-6 * d);
            }
        }
    }
}

#[test]
fn window_is_centered_on_the_rounded_pixel() {
    let img = gradient_raster(10, 10);
    // center of pixel (5, 5)
    let center = img.transform().pixel_center(5, 5);
    let b = sample_window(&img, center, 4).unwrap();
    assert_eq!(b.size, 4);
    assert_eq!((b.get(0, 0, 0), b.get(0, 0, 1)), (3, 3));
    assert_eq!((b.get(3, 3, 0), b.get(3, 3, 1)), (6, 6));
}

#[test]
fn windows_past_the_edge_are_rejected() {
    let img = gradient_raster(100, 100);
    let near_corner = img.transform().pixel_center(1, 1);
    assert!(matches!(
        sample_window(&img, near_corner, 64),
        Err(GeoError::WindowOutOfBounds { .. })
    ));
    let mid = img.transform().pixel_center(50, 50);
    assert!(sample_window(&img, mid, 64).is_ok());
}

#[test]
fn windows_copy_source_pixels() {
    let img = gradient_raster(120, 90);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let size = rng.random_range(1..30);
        let p = Point::new(
            500.0 + rng.random_range(0.0..60.0),
            800.0 - rng.random_range(0.0..45.0),
        );
        if let Ok(b) = sample_window(&img, p, size) {
            let left = b.get(0, 0, 0) as usize;
            let top = b.get(0, 0, 1) as usize;
            for r in 0..size {
                for c in 0..size {
                    let want = img.pixel(left + c, top + r);
                    assert_eq!([b.get(c, r, 0), b.get(c, r, 1), b.get(c, r, 2)], want);
                }
            }
        }
    }
    let flat = RasterImage::new(
        40,
        40,
        vec![77; 40 * 40 * 3],
        GeoTransform::new(0.0, 20.0, 0.5, 0.5).unwrap(),
        date(),
    )
    .unwrap();
    let b = sample_window(&flat, Point::new(10.0, 10.0), 16).unwrap();
    assert!(b.data.iter().all(|&v| v == 77));
}

#[test]
fn resample_examples() {
    let flat = PixelBlock::new(64, vec![37; 64 * 64 * 3]);
    let up = resample_bilinear(&flat, 224);
    assert_eq!(up.size, 224);
    assert_eq!(up.data.len(), 224 * 224 * 3);
    assert!(up.data.iter().all(|&v| v == 37));

    let two = PixelBlock::new(2, [0u8, 0, 0, 255, 255, 255, 0, 0, 0, 255, 255, 255].to_vec());
    let three = resample_bilinear(&two, 3);
    for r in 0..3 {
        assert_eq!(three.get(0, r, 0), 0);
        assert!([127, 128].contains(&three.get(1, r, 0)));
        assert_eq!(three.get(2, r, 0), 255);
    }
}

proptest! {
    #[test]
    fn resample_stays_in_input_range(size in 2usize..9, target in 1usize..20, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<u8> = (0..size * size * 3).map(|_| rng.random()).collect();
        let b = PixelBlock::new(size, data);
        let out = resample_bilinear(&b, target);
        for band in 0..3 {
            let src = b.data.iter().skip(band).step_by(3);
            let (lo, hi) = src.fold((255u8, 0u8), |(l, h), &v| (l.min(v), h.max(v)));
            for &v in out.data.iter().skip(band).step_by(3) {
                prop_assert!(lo <= v && v <= hi);
            }
        }
    }
}

#[test]
fn raster_container_round_trip() {
    let img = gradient_raster(33, 17);
    let mut buf = Vec::new();
    write_raster(&img, &mut buf).unwrap();
    assert!(buf.starts_with(RASTER_MAGIC));
    assert_eq!(buf.len(), 76 + 33 * 17 * 3);
    let back = read_raster(&buf[..]).unwrap();
    assert_eq!(back, img);
    assert!(read_raster(&buf[..buf.len() - 1]).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_raster(&bad[..]).is_err());
}

#[test]
fn png_with_world_file() {
    let dir = tempfile::tempdir().unwrap();
    let png_path = dir.path().join("img.png");
    let (w, h) = (5u32, 3u32);
    let pixels: Vec<u8> = (0..w * h)
        .flat_map(|i| [i as u8, 2 * i as u8, 200, 255])
        .collect();
    {
        let file = std::fs::File::create(&png_path).unwrap();
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w, h);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header().unwrap().write_image_data(&pixels).unwrap();
    }
    let world = dir.path().join("img.pgw");
    std::fs::write(&world, "0.5\n0\n0\n-0.5\n1000.25\n2000.75\n").unwrap();
    let img = load_png_with_world_file(&png_path, &world, date()).unwrap();
    assert_eq!((img.width(), img.height()), (5, 3));
    assert_eq!(img.transform().origin_x, 1000.0);
    assert_eq!(img.transform().origin_y, 2001.0);
    assert_eq!(img.pixel(4, 2), [14, 28, 200]);
    assert_eq!(img.capture_date(), date());

    std::fs::write(&world, "0.5\n0.1\n0\n-0.5\n1000\n2000\n").unwrap();
    assert!(load_png_with_world_file(&png_path, &world, date()).is_err());
}

#[test]
fn roads_json_round_trip() {
    let roads = vec![
        RoadPolyline::new("A1", vec![Point::new(0.0, 0.0), Point::new(3.0, 4.0)]).unwrap(),
        RoadPolyline::new(
            "B2",
            vec![Point::new(1.0, 1.0), Point::new(1.0, 9.5), Point::new(2.0, 9.5)],
        )
        .unwrap(),
    ];
    let mut buf = Vec::new();
    write_roads(&roads, &mut buf).unwrap();
    let back = read_roads(&buf[..]).unwrap();
    assert_eq!(back, roads);
    assert_eq!(back[1].total_length(), 9.5);
    assert!(read_roads(&br#"[{"road_id": "x", "vertices": [[0, 0]]}]"#[..]).is_err());
}
