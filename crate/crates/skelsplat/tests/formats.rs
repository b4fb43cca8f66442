use std::path::Path;

use proptest::prelude::*;
use skelsplat::formats::binary::{decode_checkpoint, encode_checkpoint, load_dump, save_dump};
use skelsplat::formats::history::{load_history, save_history};
use skelsplat::formats::image::{load_labels, load_rgb, quantize, save_labels, save_rgb};
use skelsplat::formats::ply::{load_ply, save_ply};
use skelsplat::formats::text::{load_camera, save_camera};
use skelsplat_core::densify::{PointCloud, Region};
use skelsplat_core::fit::HistoryRecord;
use skelsplat_core::gaussian::GaussianCloud;
use skelsplat_core::geometry::{Camera, Quat, Vec3};

fn vec3() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-1e3f64..1e3).prop_map(Vec3::from_array)
}

fn cloud() -> impl Strategy<Value = GaussianCloud> {
    (0usize..4, 0usize..12).prop_flat_map(|(f, n)| {
        (
            prop::collection::vec((vec3(), prop::array::uniform4(-2.0f64..2.0), vec3(), -20.0f64..20.0, vec3()), n),
            prop::collection::vec(-1e6f64..1e6, n * f),
        )
            .prop_map(move |(rows, features)| {
                let mut c = GaussianCloud::empty(f);
                for (m, q, s, o, col) in rows {
                    c.means.push(m);
                    c.rotations.push(Quat::new(q[0], q[1], q[2], q[3]));
                    c.log_scales.push(s);
                    c.opacity_logits.push(o);
                    c.colors.push(col);
                }
                c.features = features;
                c
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoints_round_trip_bit_exactly(c in cloud()) {
        let bytes = encode_checkpoint(&c);
        prop_assert_eq!(decode_checkpoint(Path::new("c.gsck"), &bytes).unwrap(), c);
    }

    #[test]
    fn damaged_checkpoints_are_rejected(c in cloud(), cut in 0usize..10_000, flip in 0usize..8) {
        let bytes = encode_checkpoint(&c);
        let cut = cut % bytes.len();
        prop_assert!(decode_checkpoint(Path::new("c.gsck"), &bytes[..cut]).is_err());
        let mut junk = bytes.clone();
        junk.push(0);
        prop_assert!(decode_checkpoint(Path::new("c.gsck"), &junk).is_err());
        let mut bad = bytes;
        bad[flip] ^= 0x40;
        prop_assert!(decode_checkpoint(Path::new("c.gsck"), &bad).is_err());
    }

    #[test]
    fn float_dumps_round_trip_through_f32(w in 1u32..6, h in 1u32..6, c in 1usize..4, seed in any::<u64>()) {
        let n = (w * h) as usize * c;
        let data: Vec<f64> = (0..n).map(|i| ((seed.wrapping_mul(i as u64 + 1) % 10_007) as f64 - 5000.0) / 37.0).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.gsfd");
        save_dump(&p, w, h, c, &data).unwrap();
        let (w2, h2, c2, back) = load_dump(&p).unwrap();
        prop_assert_eq!((w2, h2, c2), (w, h, c));
        for (a, b) in data.iter().zip(&back) {
            prop_assert_eq!(*b, *a as f32 as f64);
        }
    }

    #[test]
    fn label_maps_round_trip(w in 1u32..9, h in 1u32..9, labels in prop::collection::vec(0u32..=255, 64)) {
        let labels = &labels[..(w * h) as usize];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        save_labels(&p, w, h, labels).unwrap();
        prop_assert_eq!(load_labels(&p).unwrap(), (w, h, labels.to_vec()));
    }

    #[test]
    fn color_images_store_quantized_values(w in 1u32..6, h in 1u32..6, values in prop::collection::vec(-0.5f64..1.5, 75)) {
        let values = &values[..(w * h * 3) as usize];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        save_rgb(&p, w, h, values).unwrap();
        let img = load_rgb(&p).unwrap();
        prop_assert_eq!((img.width, img.height), (w, h));
        for (v, back) in values.iter().zip(&img.data) {
            prop_assert_eq!(*back, quantize(*v) as f64 / 255.0);
        }
    }

    #[test]
    fn cameras_round_trip(eye in prop::array::uniform3(-5.0f64..5.0), focal in 1.0f64..500.0, w in 1u32..300, h in 1u32..300) {
        let eye = Vec3::from_array(eye);
        prop_assume!(eye.norm() > 0.5 && Vec3::new(eye.x, 0.0, eye.z).norm() > 0.1);
        let cam = Camera::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), focal, w, h).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cam.toml");
        save_camera(&p, &cam).unwrap();
        prop_assert_eq!(load_camera(&p).unwrap(), cam);
    }

    #[test]
    fn point_clouds_round_trip(rows in prop::collection::vec((vec3(), 0u32..20), 0..30)) {
        let pc = PointCloud {
            points: rows.iter().map(|r| r.0).collect(),
            regions: rows.iter().map(|r| match r.1 { 0 => Region::Face, 1 => Region::Torso, l => Region::Limb(l - 2) }).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pc.ply");
        save_ply(&p, &pc).unwrap();
        prop_assert_eq!(load_ply(&p).unwrap(), pc);
    }

    #[test]
    fn histories_round_trip(rows in prop::collection::vec((0.0f64..1.0, 0.0f64..0.5, 0.0f64..200.0), 0..20)) {
        let records: Vec<HistoryRecord> = rows
            .iter()
            .enumerate()
            .map(|(step, &(l1, dssim, psnr))| HistoryRecord { step, l1, dssim, total: 0.8 * l1 + 0.2 * dssim, psnr })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.txt");
        save_history(&p, &records).unwrap();
        prop_assert_eq!(load_history(&p).unwrap(), records);
    }
}

#[test]
fn history_keeps_infinite_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.txt");
    let r = [HistoryRecord { step: 0, l1: 0.0, dssim: 0.0, total: 0.0, psnr: f64::INFINITY }];
    save_history(&p, &r).unwrap();
    assert_eq!(load_history(&p).unwrap(), r);
}
