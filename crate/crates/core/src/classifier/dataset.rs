use crate::image::ImageTensor;
use crate::numkit::RngStream;

/// Names of the eight synthetic sign classes, in label order.
pub const CLASS_NAMES: [&str; 8] = [
    "octagon",
    "triangle",
    "diamond",
    "circle",
    "square",
    "inverted_triangle",
    "pentagon",
    "bar",
];

const GLYPH_COLORS: [[f64; 3]; 8] = [
    [0.85, 0.10, 0.10],
    [0.90, 0.85, 0.10],
    [0.95, 0.55, 0.05],
    [0.10, 0.25, 0.90],
    [0.10, 0.75, 0.20],
    [0.85, 0.15, 0.80],
    [0.10, 0.80, 0.85],
    [0.95, 0.95, 0.95],
];

const SUPERSAMPLE: usize = 4;

/// Labeled images.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Seeded stratified split; returns `(train, test)` index lists with
    /// `round(test_fraction · n_c)` test samples from each class.
    pub fn stratified_split(&self, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut rng = RngStream::new(seed, 0x5_911);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for c in 0..self.num_classes() {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            rng.shuffle(&mut idx);
            let n_test = (test_fraction * idx.len() as f64).round() as usize;
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    }
}

/// Generates `n_per_class` jittered glyph images per class.
///
/// Panics if `width` or `height` is below 16.
pub fn gen_dataset(seed: u64, n_per_class: usize, width: usize, height: usize) -> Dataset {
    assert!(width >= 16 && height >= 16, "dataset images must be at least 16x16");
    let mut images = Vec::with_capacity(n_per_class * CLASS_NAMES.len());
    let mut labels = Vec::with_capacity(images.capacity());
    for i in 0..n_per_class {
        for class in 0..CLASS_NAMES.len() {
            let mut rng = RngStream::new(seed, 0xDA7A).derive((i * CLASS_NAMES.len() + class) as u64);
            images.push(render_glyph(class, width, height, &mut rng));
            labels.push(class);
        }
    }
    Dataset {
        images,
        labels,
        class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

fn render_glyph(class: usize, width: usize, height: usize, rng: &mut RngStream) -> ImageTensor {
    let gray = rng.uniform(0.25, 0.55);
    let background = [
        gray + rng.uniform(-0.08, 0.08),
        gray + rng.uniform(-0.08, 0.08),
        gray + rng.uniform(-0.08, 0.08),
    ];
    let size = width.min(height) as f64;
    let cx = width as f64 / 2.0 + rng.uniform(-0.1, 0.1) * width as f64;
    let cy = height as f64 / 2.0 + rng.uniform(-0.1, 0.1) * height as f64;
    let radius = 0.32 * size * rng.uniform(0.85, 1.15);
    let shape = Shape::for_class(class);
    let color = GLYPH_COLORS[class];

    let mut img = ImageTensor::zeros(width, height);
    let inv = 1.0 / SUPERSAMPLE as f64;
    for y in 0..height {
        for x in 0..width {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 + (sx as f64 + 0.5) * inv;
                    let py = y as f64 + (sy as f64 + 0.5) * inv;
                    if shape.contains((px - cx) / radius, (py - cy) / radius) {
                        hits += 1;
                    }
                }
            }
            let cover = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
            for c in 0..3 {
                let v = cover * color[c] + (1.0 - cover) * background[c] + 0.02 * rng.normal();
                img.set(x, y, c, v.clamp(0.0, 1.0));
            }
        }
    }
    img
}

enum Shape {
    Polygon(Vec<(f64, f64)>),
    Circle,
    Bar,
}

impl Shape {
    fn for_class(class: usize) -> Self {
        // Image y grows downward, so a vertex at angle -90° points up.
        let regular = |n: usize, start_deg: f64| {
            Shape::Polygon(
                (0..n)
                    .map(|k| {
                        let t = (start_deg + 360.0 * k as f64 / n as f64).to_radians();
                        (t.cos(), t.sin())
                    })
                    .collect(),
            )
        };
        match class {
            0 => regular(8, 22.5),
            1 => regular(3, -90.0),
            2 => regular(4, 0.0),
            3 => Shape::Circle,
            4 => regular(4, 45.0),
            5 => regular(3, 90.0),
            6 => regular(5, -90.0),
            _ => Shape::Bar,
        }
    }

    /// Point test in glyph-normalized coordinates (unit circumradius).
    fn contains(&self, u: f64, v: f64) -> bool {
        match self {
            Shape::Circle => u * u + v * v <= 1.0,
            Shape::Bar => u.abs() <= 1.0 && v.abs() <= 0.3,
            Shape::Polygon(verts) => {
                // Convex and counter-clockwise in (u, v), so every edge keeps
                // the interior on the same side.
                (0..verts.len()).all(|k| {
                    let (x0, y0) = verts[k];
                    let (x1, y1) = verts[(k + 1) % verts.len()];
                    (x1 - x0) * (v - y0) - (y1 - y0) * (u - x0) >= 0.0
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let a = gen_dataset(3, 10, 16, 16);
        let b = gen_dataset(3, 10, 16, 16);
        assert_eq!(a, b);
        assert_eq!(a.len(), 80);
        assert_eq!(a.class_counts(), vec![10; 8]);
        assert_ne!(a, gen_dataset(4, 10, 16, 16));
    }

    #[test]
    fn class_centroids_are_separated() {
        let ds = gen_dataset(11, 40, 32, 32);
        let dim = ds.images[0].len();
        let mut centroids = vec![vec![0.0; dim]; 8];
        for (img, &l) in ds.images.iter().zip(&ds.labels) {
            for (c, v) in centroids[l].iter_mut().zip(img.data()) {
                *c += v / 40.0;
            }
        }
        let mut var = 0.0;
        for (img, &l) in ds.images.iter().zip(&ds.labels) {
            var += img.data().iter().zip(&centroids[l]).map(|(v, c)| (v - c).powi(2)).sum::<f64>();
        }
        let within_std = (var / (ds.len() * dim) as f64).sqrt();
        let mut min_dist = f64::INFINITY;
        for i in 0..8 {
            for j in i + 1..8 {
                let d = centroids[i]
                    .iter()
                    .zip(&centroids[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                min_dist = min_dist.min(d);
            }
        }
        assert!(min_dist > 5.0 * within_std, "{min_dist} vs {within_std}");
    }

    #[test]
    fn convex_polygons_contain_their_center() {
        for class in 0..8 {
            assert!(Shape::for_class(class).contains(0.0, 0.0), "class {class}");
            assert!(!Shape::for_class(class).contains(1.5, 1.5), "class {class}");
        }
    }

    #[test]
    fn stratified_split_keeps_class_ratio() {
        let ds = gen_dataset(1, 10, 16, 16);
        let (train, test) = ds.stratified_split(0.2, 9);
        assert_eq!(train.len(), 64);
        assert_eq!(test.len(), 16);
        assert_eq!(ds.subset(&test).class_counts(), vec![2; 8]);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..80).collect::<Vec<_>>());
    }
}
