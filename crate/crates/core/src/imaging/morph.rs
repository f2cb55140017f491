use super::{ImageBuffer, ImagingError};

/// Dilation followed by erosion with a `kernel_w x kernel_h` rectangle.
///
/// Dilation treats out-of-frame pixels as background and erosion treats them
/// as foreground, so an all-foreground image is a fixed point.
pub fn morph_close(
    binary: &ImageBuffer,
    kernel_w: usize,
    kernel_h: usize,
) -> Result<ImageBuffer, ImagingError> {
    let dilated = dilate(binary, kernel_w, kernel_h)?;
    erode(&dilated, kernel_w, kernel_h)
}

pub fn dilate(img: &ImageBuffer, kernel_w: usize, kernel_h: usize) -> Result<ImageBuffer, ImagingError> {
    rank_filter(img, kernel_w, kernel_h, true)
}

pub fn erode(img: &ImageBuffer, kernel_w: usize, kernel_h: usize) -> Result<ImageBuffer, ImagingError> {
    rank_filter(img, kernel_w, kernel_h, false)
}

fn rank_filter(
    img: &ImageBuffer,
    kernel_w: usize,
    kernel_h: usize,
    max: bool,
) -> Result<ImageBuffer, ImagingError> {
    img.expect_channels(1)?;
    if kernel_w == 0 || kernel_h == 0 || kernel_w % 2 == 0 || kernel_h % 2 == 0 {
        return Err(ImagingError::InvalidParameter(format!(
            "kernel {kernel_w}x{kernel_h} must be odd and >= 1"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let pad = if max { 0u8 } else { 255u8 };
    let pick = |a: u8, b: u8| if max { a.max(b) } else { a.min(b) };
    let (rx, ry) = ((kernel_w / 2) as isize, (kernel_h / 2) as isize);

    let src = img.data();
    let mut tmp = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = if max { 0 } else { 255 };
            for dx in -rx..=rx {
                let xx = x as isize + dx;
                let v = if xx < 0 || xx >= w as isize { pad } else { src[y * w + xx as usize] };
                acc = pick(acc, v);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = if max { 0 } else { 255 };
            for dy in -ry..=ry {
                let yy = y as isize + dy;
                let v = if yy < 0 || yy >= h as isize { pad } else { tmp[yy as usize * w + x] };
                acc = pick(acc, v);
            }
            out[y * w + x] = acc;
        }
    }
    ImageBuffer::from_raw(w, h, 1, out)
}

/// Otsu's threshold on a gray image: the level `t` maximizing between-class
/// variance for the split `{v <= t}` / `{v > t}`.
pub fn otsu_threshold(img: &ImageBuffer) -> Result<u8, ImagingError> {
    img.expect_channels(1)?;
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let total = img.area() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    let (mut best_t, mut best_var) = (0u8, -1.0f64);
    for t in 0..255 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1).powi(2);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    if best_var < 0.0 {
        // Single-valued image.
        best_t = img.data()[0];
    }
    Ok(best_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
    /// First pixel in raster order.
    pub start: (usize, usize),
}

impl Component {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn touches_border(&self, w: usize, h: usize) -> bool {
        self.x_min == 0 || self.y_min == 0 || self.x_max + 1 == w || self.y_max + 1 == h
    }
}

/// 8-connected labelling of nonzero pixels. Label 0 is background; component
/// `i` carries label `i + 1`.
#[derive(Debug, Clone)]
pub struct Components {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

impl Components {
    pub fn mask(&self, label: u32) -> ImageBuffer {
        let data = self
            .labels
            .iter()
            .map(|&l| if l == label { 255 } else { 0 })
            .collect();
        ImageBuffer::from_raw(self.width, self.height, 1, data).expect("label grid matches shape")
    }
}

pub fn connected_components(binary: &ImageBuffer) -> Result<Components, ImagingError> {
    binary.expect_channels(1)?;
    let (w, h) = (binary.width(), binary.height());
    let src = binary.data();
    let mut labels = vec![0u32; w * h];
    let mut components = Vec::new();
    let mut queue = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            let si = sy * w + sx;
            if src[si] == 0 || labels[si] != 0 {
                continue;
            }
            let label = components.len() as u32 + 1;
            let mut c = Component {
                label,
                area: 0,
                x_min: sx,
                y_min: sy,
                x_max: sx,
                y_max: sy,
                start: (sx, sy),
            };
            labels[si] = label;
            queue.clear();
            queue.push(si);
            while let Some(i) = queue.pop() {
                let (x, y) = (i % w, i / w);
                c.area += 1;
                c.x_min = c.x_min.min(x);
                c.x_max = c.x_max.max(x);
                c.y_min = c.y_min.min(y);
                c.y_max = c.y_max.max(y);
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if src[j] != 0 && labels[j] == 0 {
                            labels[j] = label;
                            queue.push(j);
                        }
                    }
                }
            }
            components.push(c);
        }
    }
    Ok(Components {
        width: w,
        height: h,
        labels,
        components,
    })
}
