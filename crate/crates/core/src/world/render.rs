//! Deterministic top-down raster of a scene.

use image::{ImageFormat, Rgb, RgbImage};

use super::{Category, Cell, Scene, WorldError};

pub const IMAGE_SIZE: u32 = 512;
pub const BLOCK_SIDE: u32 = 48;
pub const BOWL_RADIUS: u32 = 28;
pub const BACKGROUND: [u8; 3] = [196, 180, 150];

/// Pixel at the center of a grid cell.
pub fn cell_center(cell: Cell) -> (u32, u32) {
    (
        32 + 80 * u32::from(cell.0) + 24,
        64 + 96 * u32::from(cell.1) + 16,
    )
}

pub fn render_scene(scene: &Scene) -> RgbImage {
    let mut img = RgbImage::from_pixel(IMAGE_SIZE, IMAGE_SIZE, Rgb(BACKGROUND));
    for obj in &scene.objects {
        let (cx, cy) = cell_center(obj.cell);
        let color = Rgb(obj.color.rgb());
        match obj.category {
            Category::Block => {
                let half = BLOCK_SIDE / 2;
                for y in cy - half..cy + half {
                    for x in cx - half..cx + half {
                        img.put_pixel(x, y, color);
                    }
                }
            }
            Category::Bowl => {
                let r = BOWL_RADIUS as i64;
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx * dx + dy * dy <= r * r {
                            img.put_pixel((cx as i64 + dx) as u32, (cy as i64 + dy) as u32, color);
                        }
                    }
                }
            }
        }
    }
    img
}

/// PNG encoding of [`render_scene`].
pub fn render_png(scene: &Scene) -> Result<Vec<u8>, WorldError> {
    let mut bytes = std::io::Cursor::new(Vec::new());
    render_scene(scene)
        .write_to(&mut bytes, ImageFormat::Png)
        .map_err(|e| WorldError::Image(e.to_string()))?;
    Ok(bytes.into_inner())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::world::{sample_scene, Color, Grid, SceneObject, DEFAULT_OBJECTS};

    #[test]
    fn center_formula() {
        assert_eq!(cell_center(Cell(0, 0)), (56, 80));
        assert_eq!(cell_center(Cell(5, 3)), (456, 368));
    }

    #[test]
    fn deterministic_bytes() {
        let s = sample_scene("s", Grid::default(), DEFAULT_OBJECTS, 4).unwrap();
        assert_eq!(render_png(&s).unwrap(), render_png(&s).unwrap());
    }

    #[test]
    fn palette_is_closed() {
        let mut allowed: Vec<[u8; 3]> = Color::ALL.iter().map(|c| c.rgb()).collect();
        allowed.push(BACKGROUND);
        for seed in 0..20 {
            let s = sample_scene("s", Grid::default(), DEFAULT_OBJECTS, seed).unwrap();
            let mut histogram: BTreeMap<[u8; 3], usize> = BTreeMap::new();
            for p in render_scene(&s).pixels() {
                *histogram.entry(p.0).or_default() += 1;
            }
            assert!(
                histogram.keys().all(|c| allowed.contains(c)),
                "{histogram:?}"
            );
        }
    }

    #[test]
    fn shape_centered_on_cell() {
        let s = Scene {
            scene_id: "s".into(),
            grid: Grid::default(),
            seed: 0,
            objects: vec![
                SceneObject {
                    id: "a".into(),
                    category: Category::Block,
                    color: Color::Blue,
                    cell: Cell(0, 0),
                },
                SceneObject {
                    id: "b".into(),
                    category: Category::Bowl,
                    color: Color::Red,
                    cell: Cell(2, 1),
                },
            ],
        };
        let img = render_scene(&s);
        let centroid = |rgb: [u8; 3]| {
            let (mut sx, mut sy, mut n) = (0f64, 0f64, 0f64);
            for (x, y, p) in img.enumerate_pixels() {
                if p.0 == rgb {
                    sx += f64::from(x);
                    sy += f64::from(y);
                    n += 1.0;
                }
            }
            (sx / n, sy / n, n)
        };
        let (x, y, n) = centroid(Color::Blue.rgb());
        assert!((x - 56.0).abs() <= 1.0 && (y - 80.0).abs() <= 1.0);
        assert_eq!(n as u32, BLOCK_SIDE * BLOCK_SIDE);
        let (x, y, _) = centroid(Color::Red.rgb());
        let (cx, cy) = cell_center(Cell(2, 1));
        assert_eq!((x, y), (f64::from(cx), f64::from(cy)));
    }
}
