//! Grayscale image I/O (binary PGM and the raw "TBIM" container) and
//! bilinear resizing.
//!
//! TBIM layout: magic `TBIM`, u32 LE height, u32 LE width, then
//! `height * width` bytes, row-major. Both formats load as `[H, W, 1]`
//! tensors scaled to [0, 1] by /255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const TBIM_MAGIC: &[u8; 4] = b"TBIM";

fn scale_bytes(h: usize, w: usize, bytes: &[u8]) -> Result<Tensor> {
    let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
    Tensor::new(vec![h, w, 1], data)
}

/// PGM "plain header" tokens: whitespace-separated, `#` comments allowed.
fn pgm_tokens(buf: &[u8], count: usize, path: &Path) -> Result<(Vec<usize>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 2; // past "P5"
    while tokens.len() < count {
        while i < buf.len() && (buf[i].is_ascii_whitespace() || buf[i] == b'#') {
            if buf[i] == b'#' {
                while i < buf.len() && buf[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < buf.len() && buf[i].is_ascii_digit() {
            i += 1;
        }
        if start == i {
            return Err(Error::Truncated(format!("PGM header of {}", path.display())));
        }
        let tok = std::str::from_utf8(&buf[start..i]).unwrap();
        tokens.push(tok.parse::<usize>().map_err(|_| {
            Error::Truncated(format!("PGM header of {}", path.display()))
        })?);
    }
    // Exactly one whitespace byte separates the header from the payload.
    if i >= buf.len() || !buf[i].is_ascii_whitespace() {
        return Err(Error::Truncated(format!("PGM header of {}", path.display())));
    }
    Ok((tokens, i + 1))
}

/// Loads a binary PGM (P5, 8-bit) or TBIM file as `[H, W, 1]` in [0, 1].
pub fn load_image(path: &Path) -> Result<Tensor> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() >= 2 && &buf[..2] == b"P5" {
        let (tokens, payload_at) = pgm_tokens(&buf, 3, path)?;
        let (w, h, maxval) = (tokens[0], tokens[1], tokens[2]);
        if maxval == 0 || maxval > 255 {
            return Err(Error::InvalidArgument(format!(
                "{}: only 8-bit PGM supported (maxval {maxval})",
                path.display()
            )));
        }
        let payload = &buf[payload_at..];
        if payload.len() != h * w {
            return Err(Error::Truncated(format!(
                "{}: PGM payload is {} bytes, dimensions imply {}",
                path.display(),
                payload.len(),
                h * w
            )));
        }
        scale_bytes(h, w, payload)
    } else if buf.len() >= 4 && &buf[..4] == TBIM_MAGIC.as_slice() {
        if buf.len() < 12 {
            return Err(Error::Truncated(format!("TBIM header of {}", path.display())));
        }
        let h = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let w = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let payload = &buf[12..];
        if payload.len() != h * w {
            return Err(Error::Truncated(format!(
                "{}: TBIM payload is {} bytes, dimensions imply {}",
                path.display(),
                payload.len(),
                h * w
            )));
        }
        scale_bytes(h, w, payload)
    } else {
        Err(Error::InvalidArgument(format!(
            "{}: unknown image magic (expected PGM P5 or TBIM)",
            path.display()
        )))
    }
}

fn quantize(image: &Tensor) -> Result<Vec<u8>> {
    if image.rank() != 3 || image.dim(2) != 1 {
        return Err(Error::shape("grayscale image", &[0, 0, 1], image.shape()));
    }
    Ok(image
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect())
}

/// Writes `[H, W, 1]` values in [0, 1] as binary 8-bit PGM.
pub fn save_pgm(path: &Path, image: &Tensor) -> Result<()> {
    let bytes = quantize(image)?;
    let mut out = format!("P5\n{} {}\n255\n", image.dim(1), image.dim(0)).into_bytes();
    out.extend_from_slice(&bytes);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes the TBIM raw container.
pub fn save_raw(path: &Path, image: &Tensor) -> Result<()> {
    let bytes = quantize(image)?;
    let mut out = Vec::with_capacity(12 + bytes.len());
    out.extend_from_slice(TBIM_MAGIC);
    out.extend_from_slice(&(image.dim(0) as u32).to_le_bytes());
    out.extend_from_slice(&(image.dim(1) as u32).to_le_bytes());
    out.extend_from_slice(&bytes);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Bilinear resize with half-pixel (corner-aligned-off) sampling: source
/// coordinate `(i + 0.5) * H / H' - 0.5`, clamped. Output values stay
/// within the input's min/max.
pub fn resize_bilinear(image: &Tensor, target_h: usize, target_w: usize) -> Result<Tensor> {
    if image.rank() != 3 {
        return Err(Error::shape("resize input", &[0, 0, 0], image.shape()));
    }
    if target_h == 0 || target_w == 0 {
        return Err(Error::InvalidArgument("resize target must be >= 1".into()));
    }
    let (h, w, c) = (image.dim(0), image.dim(1), image.dim(2));
    let mut out = Tensor::zeros(&[target_h, target_w, c]);
    let src = image.data();
    let dst = out.data_mut();
    for oy in 0..target_h {
        let sy = ((oy as f64 + 0.5) * h as f64 / target_h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = (sy - y0 as f64) as f32;
        for ox in 0..target_w {
            let sx =
                ((ox as f64 + 0.5) * w as f64 / target_w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = (sx - x0 as f64) as f32;
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * w + x) * c + ch];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                dst[(oy * target_w + ox) * c + ch] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::mem::forget(dir);
        path
    }

    #[test]
    fn pgm_2x2_reference() {
        let path = tmp("t.pgm");
        std::fs::write(&path, [b"P5\n2 2\n255\n".as_slice(), &[0, 255, 255, 0]].concat())
            .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.shape(), &[2, 2, 1]);
        assert_eq!(img.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn pgm_with_comment_parses() {
        let path = tmp("c.pgm");
        std::fs::write(
            &path,
            [b"P5\n# a comment\n2 1\n255\n".as_slice(), &[10, 20]].concat(),
        )
        .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.shape(), &[1, 2, 1]);
    }

    #[test]
    fn truncated_payload_rejected() {
        let path = tmp("bad.pgm");
        std::fs::write(&path, [b"P5\n2 2\n255\n".as_slice(), &[0, 255]].concat()).unwrap();
        assert!(matches!(
            load_image(&path).unwrap_err(),
            Error::Truncated(_)
        ));
    }

    #[test]
    fn unknown_magic_rejected() {
        let path = tmp("junk.bin");
        std::fs::write(&path, b"JUNKDATA").unwrap();
        assert!(load_image(&path).is_err());
    }

    #[test]
    fn raw_container_round_trip() {
        let path = tmp("t.tbim");
        let img = Tensor::new(vec![3, 2, 1], vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        save_raw(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.shape(), &[3, 2, 1]);
        // Bit-identical after the initial quantization.
        save_raw(&path, &back).unwrap();
        let again = load_image(&path).unwrap();
        assert_eq!(back.data(), again.data());
    }

    #[test]
    fn loaded_values_in_unit_range() {
        let path = tmp("r.pgm");
        let bytes: Vec<u8> = (0..=255).collect();
        std::fs::write(&path, [b"P5\n16 16\n255\n".as_slice(), &bytes].concat()).unwrap();
        let img = load_image(&path).unwrap();
        assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn resize_identity_when_same_size() {
        let mut rng = crate::RngState::new(3);
        let data: Vec<f32> = (0..36).map(|_| rng.next_f64() as f32).collect();
        let img = Tensor::new(vec![6, 6, 1], data).unwrap();
        let out = resize_bilinear(&img, 6, 6).unwrap();
        for (a, b) in out.iter().zip(img.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = Tensor::full(&[5, 7, 1], 0.37);
        let out = resize_bilinear(&img, 11, 3).unwrap();
        assert!(out.iter().all(|&v| (v - 0.37).abs() < 1e-6));
    }

    // Upsampling [[0,1],[1,0]] to 3x3: the center samples at (0.5, 0.5),
    // the mean of all four corners.
    #[test]
    fn resize_center_closed_form() {
        let img = Tensor::new(vec![2, 2, 1], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = resize_bilinear(&img, 3, 3).unwrap();
        assert!((out.at(&[1, 1, 0]) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn resize_never_overshoots() {
        let mut rng = crate::RngState::new(9);
        let data: Vec<f32> = (0..64).map(|_| rng.next_f64() as f32).collect();
        let img = Tensor::new(vec![8, 8, 1], data).unwrap();
        let lo = img.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = img.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        for (th, tw) in [(3, 3), (16, 16), (5, 13)] {
            let out = resize_bilinear(&img, th, tw).unwrap();
            assert!(out.iter().all(|&v| v >= lo - 1e-6 && v <= hi + 1e-6));
        }
    }
}
