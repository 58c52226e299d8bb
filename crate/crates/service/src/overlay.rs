use trueimage_core::imaging::Image;

pub const SKIN_TINT: [u8; 3] = [0, 255, 0];
pub const SKIN_ALPHA: f64 = 0.4;
pub const LESION_OUTLINE: [u8; 3] = [255, 0, 0];

/// Input photo with skin tinted green and the lesion boundary drawn in red,
/// thickened by one pixel in every direction.
pub fn render_overlay(img: &Image, skin: &[bool], lesion: Option<&[bool]>) -> Image {
    let (w, h) = (img.width(), img.height());
    assert_eq!(skin.len(), w * h, "skin mask size");
    let outline = lesion.map(|l| {
        assert_eq!(l.len(), w * h, "lesion mask size");
        dilate(&boundary(l, w, h), w, h)
    });
    Image::from_fn(w, h, |r, c| {
        let i = r * w + c;
        if outline.as_ref().is_some_and(|o| o[i]) {
            return LESION_OUTLINE;
        }
        let px = img.pixel(r, c);
        if skin[i] {
            std::array::from_fn(|ch| {
                let v = (1.0 - SKIN_ALPHA) * f64::from(px[ch]) + SKIN_ALPHA * f64::from(SKIN_TINT[ch]);
                v.round().clamp(0.0, 255.0) as u8
            })
        } else {
            px
        }
    })
}

/// Mask pixels with a 4-neighbour outside the mask or on the image edge.
fn boundary(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let at = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && mask[r as usize * w + c as usize];
    (0..w * h)
        .map(|i| {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            mask[i] && !(at(r - 1, c) && at(r + 1, c) && at(r, c - 1) && at(r, c + 1))
        })
        .collect()
}

/// 3x3 binary dilation.
fn dilate(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            if !mask[r * w + c] {
                continue;
            }
            for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    out[rr * w + cc] = true;
                }
            }
        }
    }
    out
}
