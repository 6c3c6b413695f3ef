//! 8-connected component labeling of pore masks.

use std::collections::VecDeque;

use super::PoreMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pore {
    /// 1-based label in raster order of each pore's first pixel.
    pub id: u32,
    pub pixel_area: usize,
    pub touches_border: bool,
}

/// Labels connected pores; returns the pores and a label image (0 = background).
pub fn label_image(mask: &PoreMask) -> (Vec<Pore>, Vec<u32>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut pores = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let id = pores.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut area = 0usize;
        let mut border = false;
        while let Some(idx) = queue.pop_front() {
            area += 1;
            let (x, y) = (idx % w, idx / w);
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                border = true;
            }
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if mask.bits[n] && labels[n] == 0 {
                        labels[n] = id;
                        queue.push_back(n);
                    }
                }
            }
        }
        pores.push(Pore {
            id,
            pixel_area: area,
            touches_border: border,
        });
    }
    (pores, labels)
}

/// Connected pores (8-connectivity) with their pixel areas.
pub fn label_pores(mask: &PoreMask) -> Vec<Pore> {
    label_image(mask).0
}
