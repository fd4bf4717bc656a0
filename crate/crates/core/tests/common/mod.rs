/// Independent RMSProp+AF, one axis at a time, with a fixed-size array buffer.
pub struct StraightLine {
    pub p: [f64; 2],
    pub r: [f64; 2],
    pub buf: [[f64; 3]; 2],
    pub filled: usize,
    pub rho: [f64; 2],
}

impl StraightLine {
    pub fn new(p: [f64; 2]) -> Self {
        Self {
            p,
            r: [0.0; 2],
            buf: [[0.0; 3]; 2],
            filled: 0,
            rho: [0.0; 2],
        }
    }

    pub fn step(&mut self, k: usize, g: [f64; 2], mu: f64, rho0: f64, delta: f64) {
        let slot = k - 3 * ((k - 1) / 3);
        self.filled = self.filled.max(slot);
        for a in 0..2 {
            self.buf[a][slot - 1] = g[a] * g[a];
            let live = &self.buf[a][..self.filled];
            let vmax = live.iter().cloned().fold(f64::MIN, f64::max);
            let vmin = live.iter().cloned().fold(f64::MAX, f64::min);
            let gamma = (vmax - vmin) / (vmax + vmin + 1.0);
            self.rho[a] = if gamma > rho0 { gamma } else { rho0 };
            self.r[a] = self.rho[a] * self.r[a] + (1.0 - self.rho[a]) * g[a] * g[a];
            self.p[a] -= mu / (delta + self.r[a].sqrt()) * g[a];
        }
    }
}

pub fn scripted() -> Vec<[[f64; 2]; 5]> {
    vec![
        [[1.0, -2.0], [3.0, 0.5], [-4.0, 4.0], [0.25, -8.0], [10.0, 1.0]],
        [[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [0.0, 0.0], [5.0, -5.0]],
        [[100.0, 1e-3], [-100.0, 2e-3], [50.0, -1e-3], [-25.0, 0.0], [12.5, 4e-3]],
        [[2.0, 2.0], [2.0, 2.0], [2.0, 2.0], [2.0, 2.0], [2.0, 2.0]],
    ]
}
