use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

use super::IoError;
use crate::geometry::Timestamp;
use crate::vision::ImageFrame;

/// Writes 8-bit binary PGM (1 channel) or PPM (3 channels). Intensities are clamped to
/// [0, 255] and rounded.
pub fn write_pnm(path: &Path, frame: &ImageFrame) -> Result<(), IoError> {
    let bytes: Vec<u8> = frame.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let (subtype, color) = match frame.channels {
        1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
        3 => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
        c => return Err(IoError::file(path, format!("unsupported channel count {c}"))),
    };
    let file = std::fs::File::create(path).map_err(|e| IoError::file(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(&bytes, frame.width as u32, frame.height as u32, color)
        .map_err(|e| IoError::file(path, e))?;
    std::io::Write::flush(&mut out).map_err(|e| IoError::file(path, e))
}

/// Reads binary PGM/PPM; other channel layouts are converted to RGB.
pub fn read_pnm(path: &Path, stamp: Timestamp) -> Result<ImageFrame, IoError> {
    let img = image::ImageReader::open(path)
        .map_err(|e| IoError::file(path, e))?
        .with_guessed_format()
        .map_err(|e| IoError::file(path, e))?
        .decode()
        .map_err(|e| IoError::file(path, e))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, bytes) = match img {
        DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
        other => (3, other.to_rgb8().into_raw()),
    };
    Ok(ImageFrame { stamp, width, height, channels, data: bytes.into_iter().map(f32::from).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_gray_and_color() {
        let dir = tempfile::tempdir().unwrap();
        for ch in [1, 3] {
            let img = ImageFrame::from_fn(Timestamp(1.5), 7, 5, ch, |x, y, c| ((x * 30 + y * 7 + c * 50) % 256) as f32);
            let path = dir.path().join(format!("img{ch}.pnm"));
            write_pnm(&path, &img).unwrap();
            let magic = if ch == 1 { b"P5" } else { b"P6" };
            assert_eq!(&std::fs::read(&path).unwrap()[..2], magic);
            let back = read_pnm(&path, Timestamp(1.5)).unwrap();
            assert_eq!(back, img);
        }
    }
}
