/// Dense row-major 2D grid indexed by `(x, y)` = (column, row).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

impl<P: Copy> Plane<P> {
    pub fn new(width: usize, height: usize, fill: P) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Wraps row-major data; `None` if the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<P>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[P] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> P {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    /// Bounds-checked access with signed coordinates.
    pub fn get_checked(&self, x: i64, y: i64) -> Option<P> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.data[y as usize * self.width + x as usize])
        }
    }

    pub fn set(&mut self, x: usize, y: usize, value: P) {
        self.data[y * self.width + x] = value;
    }

    pub fn map<Q: Copy>(&self, f: impl Fn(P) -> Q) -> Plane<Q> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn same_size<Q>(&self, other: &Plane<Q>) -> bool {
        self.width == other.width && self.height == other.height
    }
}
