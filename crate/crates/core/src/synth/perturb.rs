use crate::mask::{LabelMask, Structure, BACKGROUND, FH, PS};

/// Deterministic edits of a label mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Shift every label; pixels leaving the frame are dropped.
    Translate { dx: i32, dy: i32 },
    /// Grow each structure by `k` 4-connected steps into background; PS wins
    /// pixels both structures reach in the same step.
    Dilate(u32),
    /// Shrink each structure by `k` 4-connected steps; the frame border
    /// counts as outside.
    Erode(u32),
    /// Remove one structure (`Psfh` removes both).
    Drop(Structure),
}

const STEPS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn neighbors(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = Option<usize>> {
    STEPS.iter().map(move |&(dx, dy)| {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then(|| ny as usize * w + nx as usize)
    })
}

fn dilate_once(labels: &[u8], w: usize, h: usize) -> Vec<u8> {
    let mut out = labels.to_vec();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if labels[i] != BACKGROUND {
                continue;
            }
            let mut reach = BACKGROUND;
            for n in neighbors(x, y, w, h).flatten() {
                match labels[n] {
                    PS => reach = PS,
                    FH if reach == BACKGROUND => reach = FH,
                    _ => {}
                }
            }
            out[i] = reach;
        }
    }
    out
}

fn erode_once(labels: &[u8], w: usize, h: usize) -> Vec<u8> {
    let mut out = labels.to_vec();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let l = labels[i];
            if l != BACKGROUND && neighbors(x, y, w, h).any(|n| n.is_none_or(|n| labels[n] != l)) {
                out[i] = BACKGROUND;
            }
        }
    }
    out
}

pub fn perturb(mask: &LabelMask, op: Perturbation) -> LabelMask {
    let (w, h) = mask.dims();
    let src = mask.labels();
    let labels = match op {
        Perturbation::Translate { dx, dy } => {
            let mut out = vec![BACKGROUND; src.len()];
            let mut lost = 0usize;
            for y in 0..h {
                for x in 0..w {
                    let l = src[y * w + x];
                    if l == BACKGROUND {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx as i64, y as i64 + dy as i64);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        lost += 1;
                    } else {
                        out[ny as usize * w + nx as usize] = l;
                    }
                }
            }
            if lost > 0 {
                log::warn!("translate({dx},{dy}) pushed {lost} foreground pixels out of frame");
            }
            out
        }
        Perturbation::Dilate(k) => (0..k).fold(src.to_vec(), |acc, _| dilate_once(&acc, w, h)),
        Perturbation::Erode(k) => (0..k).fold(src.to_vec(), |acc, _| erode_once(&acc, w, h)),
        Perturbation::Drop(s) => src.iter().map(|&l| if s.matches(l) { BACKGROUND } else { l }).collect(),
    };
    LabelMask::new(w, h, labels).expect("dimensions unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{evaluate_case, hausdorff, MetricOptions, MetricValue};
    use crate::ingest::{CaseMeta, Institution, Scanner, Split};

    fn square_scene() -> LabelMask {
        LabelMask::from_fn(32, 32, |x, y| {
            if (4..10).contains(&x) && (4..10).contains(&y) {
                PS
            } else if (16..26).contains(&x) && (14..24).contains(&y) {
                FH
            } else {
                BACKGROUND
            }
        })
    }

    #[test]
    fn translate_square_gives_hd_shift() {
        let m = square_scene();
        let moved = perturb(&m, Perturbation::Translate { dx: 3, dy: 0 });
        let hd = hausdorff(&m.select(Structure::Ps), &moved.select(Structure::Ps), &MetricOptions::default()).unwrap();
        assert_eq!(hd, MetricValue::Finite(3.0));
        assert_eq!(moved.count(PS), m.count(PS));
        let gone = perturb(&m, Perturbation::Translate { dx: -30, dy: 0 });
        assert_eq!(gone.count(PS), 0);
    }

    #[test]
    fn drop_gives_missing_record() {
        let m = square_scene();
        let pred = perturb(&m, Perturbation::Drop(Structure::Fh));
        assert_eq!(pred.count(FH), 0);
        assert_eq!(pred.count(PS), m.count(PS));
        let meta = CaseMeta::new("c", Split::Test2, Institution::Smu, Scanner::ObEye);
        let recs = evaluate_case(&m, &pred, &meta, "t", &MetricOptions::default()).unwrap();
        let fh = recs.iter().find(|r| r.structure == Structure::Fh).unwrap();
        assert_eq!((fh.dsc, fh.hd, fh.asd), (0.0, MetricValue::Unbounded, MetricValue::Unbounded));
        assert_eq!(perturb(&m, Perturbation::Drop(Structure::Psfh)).count(BACKGROUND), 32 * 32);
    }

    #[test]
    fn zero_steps_are_identity() {
        let m = square_scene();
        assert_eq!(perturb(&m, Perturbation::Dilate(0)), m);
        assert_eq!(perturb(&m, Perturbation::Erode(0)), m);
        assert_eq!(perturb(&m, Perturbation::Translate { dx: 0, dy: 0 }), m);
    }

    #[test]
    fn dilate_and_erode_counts() {
        let m = square_scene();
        // One step adds a 6-pixel strip on each side of the 6×6 square.
        assert_eq!(perturb(&m, Perturbation::Dilate(1)).count(PS), 36 + 24);
        assert_eq!(perturb(&m, Perturbation::Erode(1)).count(PS), 16);
        assert_eq!(perturb(&m, Perturbation::Erode(3)).count(PS), 0);
        let grown = perturb(&m, Perturbation::Dilate(2));
        // Closing a rectangle with a diamond gives the rectangle back.
        assert_eq!(perturb(&grown, Perturbation::Erode(2)), m);
    }

    #[test]
    fn ps_wins_contested_pixels() {
        let m = LabelMask::from_fn(5, 1, |x, _| match x {
            1 => PS,
            3 => FH,
            _ => BACKGROUND,
        });
        let d = perturb(&m, Perturbation::Dilate(1));
        assert_eq!(d.labels(), &[PS, PS, PS, FH, FH]);
    }

    #[test]
    fn erosion_treats_border_as_outside() {
        let m = LabelMask::from_fn(3, 3, |_, _| FH);
        assert_eq!(perturb(&m, Perturbation::Erode(1)).count(FH), 1);
    }
}
