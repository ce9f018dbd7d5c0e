//! Dense row-major 2-D grids used for count maps, time surfaces and depth rasters.

/// Row-major 2-D array with `u32` pixel coordinates.
///
/// `(x, y)` indexes column `x` of row `y`; `data[y * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: u32,
    height: u32,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(width: u32, height: u32, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> T) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
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

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> T {
        debug_assert!(self.contains(x, y));
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: T) {
        debug_assert!(self.contains(x, y));
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    #[inline]
    pub fn get_mut(&mut self, x: u32, y: u32) -> &mut T {
        debug_assert!(self.contains(x, y));
        &mut self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn row(&self, y: u32) -> &[T] {
        let w = self.width as usize;
        let start = y as usize * w;
        &self.data[start..start + w]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Grid<f64> {
    /// Bilinear sample at a sub-pixel location.
    ///
    /// Returns `None` when the 2x2 support is not fully inside the grid.
    #[inline]
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Option<f64> {
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let x0 = u.floor();
        let y0 = v.floor();
        let x0i = x0 as u32;
        let y0i = y0 as u32;
        if x0i + 1 >= self.width || y0i + 1 >= self.height {
            return None;
        }
        let fx = u - x0;
        let fy = v - y0;
        let w = self.width as usize;
        let idx = y0i as usize * w + x0i as usize;
        let v00 = self.data[idx];
        let v10 = self.data[idx + 1];
        let v01 = self.data[idx + w];
        let v11 = self.data[idx + w + 1];
        Some(v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy)
    }

    /// Horizontal and vertical Sobel derivatives, 1/8 normalization so a linear
    /// ramp `f = a*x + b*y` yields exactly `(a, b)`. Border pixels are zero.
    pub fn sobel_gradients(&self) -> (Grid<f64>, Grid<f64>) {
        let mut gx = Grid::filled(self.width, self.height, 0.0f64);
        let mut gy = Grid::filled(self.width, self.height, 0.0f64);
        if self.width < 3 || self.height < 3 {
            return (gx, gy);
        }
        let w = self.width as usize;
        for y in 1..self.height as usize - 1 {
            let up = &self.data[(y - 1) * w..y * w];
            let mid = &self.data[y * w..(y + 1) * w];
            let dn = &self.data[(y + 1) * w..(y + 2) * w];
            let gxr = &mut gx.data[y * w..(y + 1) * w];
            let gyr = &mut gy.data[y * w..(y + 1) * w];
            for x in 1..w - 1 {
                let (l, r) = (x - 1, x + 1);
                gxr[x] = ((up[r] - up[l]) + 2.0 * (mid[r] - mid[l]) + (dn[r] - dn[l])) / 8.0;
                gyr[x] = ((dn[l] - up[l]) + 2.0 * (dn[x] - up[x]) + (dn[r] - up[r])) / 8.0;
            }
        }
        (gx, gy)
    }

    /// Separable Gaussian blur with a (2*radius+1)-tap kernel.
    ///
    /// The kernel is renormalized over the in-bounds support so constant fields
    /// are preserved at the borders.
    pub fn gaussian_blur(&self, sigma: f64, radius: u32) -> Grid<f64> {
        let r = radius as i64;
        let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
        for i in -r..=r {
            kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
        }
        let sum: f64 = kernel.iter().sum();
        for k in &mut kernel {
            *k /= sum;
        }

        let w = self.width as i64;
        let h = self.height as i64;
        let mut tmp = Grid::filled(self.width, self.height, 0.0f64);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (ki, &kv) in kernel.iter().enumerate() {
                    let xx = x + ki as i64 - r;
                    if xx >= 0 && xx < w {
                        acc += kv * self.data[(y * w + xx) as usize];
                        norm += kv;
                    }
                }
                tmp.data[(y * w + x) as usize] = acc / norm;
            }
        }
        let mut out = Grid::filled(self.width, self.height, 0.0f64);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (ki, &kv) in kernel.iter().enumerate() {
                    let yy = y + ki as i64 - r;
                    if yy >= 0 && yy < h {
                        acc += kv * tmp.data[(yy * w + x) as usize];
                        norm += kv;
                    }
                }
                out.data[(y * w + x) as usize] = acc / norm;
            }
        }
        out
    }
}
