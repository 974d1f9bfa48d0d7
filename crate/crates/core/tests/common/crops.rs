//! Hand-computed crop rectangles.

use bmi_curate::crop::Perspective;
use bmi_curate::ingest::{BoundingBox, ImageRecord, Keypoint, KeypointName, KeypointSet, NUM_KEYPOINTS};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::record;

pub struct CropCase {
    pub name: &'static str,
    pub record: ImageRecord,
    pub perspective: Perspective,
    /// (x, y, width, height) or an error code.
    pub expect: Result<[f64; 4], &'static str>,
}

/// Named keypoints at visibility 1; everything else invisible at the origin.
pub fn pose(points: &[(KeypointName, f64, f64)]) -> KeypointSet {
    let mut all = [Keypoint::new(0.0, 0.0, 0.0); NUM_KEYPOINTS];
    for &(name, x, y) in points {
        all[name.index()] = Keypoint::new(x, y, 1.0);
    }
    KeypointSet::new(all).unwrap()
}

fn with_pose(size: (u32, u32), points: &[(KeypointName, f64, f64)]) -> ImageRecord {
    record("case", "s", size, None, Some(pose(points)))
}

fn with_bbox(size: (u32, u32), b: [f64; 4]) -> ImageRecord {
    record("case", "s", size, Some(BoundingBox::new(b[0], b[1], b[2], b[3], 0.9).unwrap()), None)
}

pub fn cases() -> Vec<CropCase> {
    use KeypointName::*;
    let torso = [
        (LeftShoulder, 100.0, 310.0),
        (RightShoulder, 200.0, 300.0),
        (LeftEye, 140.0, 198.0),
        (RightEye, 160.0, 200.0),
    ];
    let head = [
        (Nose, 150.0, 100.0),
        (LeftEye, 140.0, 95.0),
        (RightEye, 160.0, 95.0),
        (LeftEar, 130.0, 100.0),
        (RightEar, 170.0, 100.0),
    ];
    let mut one_ear_hidden = pose(&head[..4]).points().to_vec();
    one_ear_hidden[RightEar.index()] = Keypoint::new(170.0, 100.0, 0.1);
    let mut face_box = with_pose((640, 480), &head);
    face_box.face_bbox = Some(BoundingBox::new(120.0, 80.0, 60.0, 40.0, 1.0).unwrap());

    vec![
        CropCase {
            name: "torso worked example",
            record: with_pose((640, 480), &torso),
            perspective: Perspective::TorsoUp,
            // base x [100,200] y [198,310]; +25 / +28 per side
            expect: Ok([75.0, 170.0, 150.0, 168.0]),
        },
        CropCase {
            name: "torso clamped at right edge",
            record: with_pose((200, 480), &torso),
            perspective: Perspective::TorsoUp,
            expect: Ok([75.0, 170.0, 125.0, 168.0]),
        },
        CropCase {
            name: "torso clamped at top edge",
            record: with_pose(
                (640, 480),
                &[(LeftShoulder, 150.0, 100.0), (RightShoulder, 50.0, 100.0), (LeftEye, 110.0, 20.0), (RightEye, 90.0, 20.0)],
            ),
            perspective: Perspective::TorsoUp,
            // base x [50,150] y [20,100]; +25 / +20 per side, top clipped at 0
            expect: Ok([25.0, 0.0, 150.0, 120.0]),
        },
        CropCase {
            name: "torso shoulders share x",
            record: with_pose(
                (640, 480),
                &[(LeftShoulder, 100.0, 300.0), (RightShoulder, 100.0, 310.0), (LeftEye, 90.0, 200.0), (RightEye, 110.0, 200.0)],
            ),
            perspective: Perspective::TorsoUp,
            expect: Err("degenerate_crop"),
        },
        CropCase {
            name: "face worked example",
            record: with_pose((640, 480), &head),
            perspective: Perspective::Face,
            // base x [130,170] y [95,100]; +12 / +1.5 per side
            expect: Ok([118.0, 93.5, 64.0, 8.0]),
        },
        CropCase {
            name: "face with one ear below visibility",
            record: record("case", "s", (640, 480), None, Some(KeypointSet::from_slice(&one_ear_hidden).unwrap())),
            perspective: Perspective::Face,
            // base x [130,160] y [95,100]; +9 / +1.5 per side
            expect: Ok([121.0, 93.5, 48.0, 8.0]),
        },
        CropCase {
            name: "face clamped at left edge",
            record: with_pose((640, 480), &[(Nose, 10.0, 50.0), (LeftEye, 5.0, 40.0), (RightEye, 15.0, 40.0), (LeftEar, 0.0, 50.0), (RightEar, 20.0, 50.0)]),
            perspective: Perspective::Face,
            // base x [0,20] y [40,50]; +6 / +3 per side, left clipped at 0
            expect: Ok([0.0, 37.0, 26.0, 16.0]),
        },
        CropCase {
            name: "face only nose visible",
            record: with_pose((640, 480), &head[..1]),
            perspective: Perspective::Face,
            expect: Err("insufficient_head_keypoints"),
        },
        CropCase {
            name: "supplied face box wins",
            record: face_box,
            perspective: Perspective::Face,
            expect: Ok([120.0, 80.0, 60.0, 40.0]),
        },
        CropCase {
            name: "full body identity",
            record: with_bbox((640, 480), [10.0, 10.0, 100.0, 200.0]),
            perspective: Perspective::FullBody,
            expect: Ok([10.0, 10.0, 100.0, 200.0]),
        },
        CropCase {
            name: "full body overflowing right",
            record: with_bbox((640, 480), [600.0, 100.0, 100.0, 200.0]),
            perspective: Perspective::FullBody,
            expect: Ok([600.0, 100.0, 40.0, 200.0]),
        },
        CropCase {
            name: "full body outside frame",
            record: with_bbox((640, 480), [700.0, 100.0, 50.0, 50.0]),
            perspective: Perspective::FullBody,
            expect: Err("degenerate_crop"),
        },
    ]
}

/// Checks one case; `Err` describes the mismatch.
pub fn check(case: &CropCase) -> Result<(), String> {
    let got = bmi_curate::crop::crop_for(&case.record, case.perspective);
    match (&case.expect, got) {
        (Ok(want), Ok(r)) => {
            let have = [r.x, r.y, r.width, r.height];
            if have == *want && r.perspective == case.perspective {
                Ok(())
            } else {
                Err(format!("{}: got {have:?}, want {want:?}", case.name))
            }
        }
        (Err(code), Err(e)) if e.code() == *code => Ok(()),
        (want, got) => Err(format!("{}: got {got:?}, want {want:?}", case.name)),
    }
}

/// Pose with every keypoint visible, shoulders below the eyes, inside `w` x `h`.
pub fn random_torso_pose(rng: &mut ChaCha8Rng, w: f64, h: f64) -> KeypointSet {
    let pts: Vec<Keypoint> = (0..NUM_KEYPOINTS)
        .map(|i| {
            let (y_lo, y_hi) = match i {
                1..=4 => (0.0, 0.45 * h),
                5 | 6 => (0.55 * h, h),
                _ => (0.0, h),
            };
            Keypoint::new(rng.random_range(0.0..w), rng.random_range(y_lo..y_hi), rng.random_range(0.3..=1.0))
        })
        .collect();
    KeypointSet::from_slice(&pts).unwrap()
}

/// Mirror the left/right labels (coordinates unchanged).
pub fn swap_labels(k: &KeypointSet) -> KeypointSet {
    let p = k.points();
    let mut out = *p;
    for (a, b) in [(1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16)] {
        out[a] = p[b];
        out[b] = p[a];
    }
    KeypointSet::new(out).unwrap()
}
