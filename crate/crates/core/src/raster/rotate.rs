use crate::model::{wrap_degrees, RasterImage, BACKGROUND};

/// Rotates a raster about its geometric center, counterclockwise on screen.
///
/// Multiples of 90° are exact pixel permutations (180° always, 90°/270° for
/// square rasters); other angles use bilinear resampling with background fill.
pub fn rotate_image(img: &RasterImage, theta_deg: f64) -> RasterImage {
    let theta = wrap_degrees(theta_deg);
    let (w, h) = (img.width() as usize, img.height() as usize);
    let src = img.pixels();
    let quarter = theta / 90.0;
    if quarter.fract() == 0.0 {
        let q = quarter as u32;
        if q == 0 {
            return img.clone();
        }
        if q == 2 || w == h {
            let mut out = vec![BACKGROUND; w * h];
            for y in 0..h {
                for x in 0..w {
                    let (sx, sy) = match q {
                        1 => (w - 1 - y, x),
                        2 => (w - 1 - x, h - 1 - y),
                        _ => (y, h - 1 - x),
                    };
                    out[y * w + x] = src[sy * w + sx];
                }
            }
            return RasterImage::new(img.width(), img.height(), out).unwrap();
        }
    }

    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    // Source padded by one background pixel so every bilinear tap is in range.
    let pw = w + 2;
    let mut padded = vec![BACKGROUND as f64; pw * (h + 2)];
    let mut reach2: f64 = -1.0; // squared distance of the farthest non-background pixel center
    for y in 0..h {
        for x in 0..w {
            let p = src[y * w + x];
            padded[(y + 1) * pw + x + 1] = p as f64;
            if p != BACKGROUND {
                let (ox, oy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                reach2 = reach2.max(ox * ox + oy * oy);
            }
        }
    }
    let mut out = vec![BACKGROUND; w * h];
    if reach2 < 0.0 {
        return RasterImage::new(img.width(), img.height(), out).unwrap();
    }
    let limit = (reach2.sqrt() + 1.5).powi(2);
    // inverse mapping: output pixel center back into the source, i.e. the
    // offset rotated by -theta
    let (sin, cos) = (-theta).to_radians().sin_cos();
    for y in 0..h {
        let oy = y as f64 + 0.5 - cy;
        for x in 0..w {
            let ox = x as f64 + 0.5 - cx;
            if ox * ox + oy * oy > limit {
                continue;
            }
            // +1 for the padding, -0.5 from centers to indices
            let u = cx + ox * cos + oy * sin + 0.5;
            let v = cy - ox * sin + oy * cos + 0.5;
            if u < 0.0 || v < 0.0 || u >= (w + 1) as f64 || v >= (h + 1) as f64 {
                continue;
            }
            // u, v >= 0 here, so truncation is floor
            let (u0, v0) = (u as usize, v as usize);
            let (fx, fy) = (u - u0 as f64, v - v0 as f64);
            let k = v0 * pw + u0;
            let val = (1.0 - fx) * (1.0 - fy) * padded[k]
                + fx * (1.0 - fy) * padded[k + 1]
                + (1.0 - fx) * fy * padded[k + pw]
                + fx * fy * padded[k + pw + 1];
            out[y * w + x] = (val + 0.5).clamp(0.0, 255.0) as u8;
        }
    }
    RasterImage::new(img.width(), img.height(), out).unwrap()
}
