//! Piecewise-linear tables on sorted abscissae with constant extension.

/// Linear interpolation table. Outside the abscissa range the value is held
/// constant at the nearest endpoint.
#[derive(Debug, Clone)]
pub struct LinearTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl LinearTable {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2, "table needs at least two points");
        assert!(
            xs.windows(2).all(|w| w[0] < w[1]),
            "abscissae must be strictly increasing"
        );
        LinearTable { xs, ys }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 1,
            p => p,
        };
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let (y0, y1) = (self.ys[i - 1], self.ys[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_extends() {
        let t = LinearTable::new(vec![1.0, 2.0, 4.0], vec![10.0, 20.0, 0.0]);
        assert_eq!(t.eval(1.0), 10.0);
        assert_eq!(t.eval(1.5), 15.0);
        assert_eq!(t.eval(3.0), 10.0);
        assert_eq!(t.eval(0.0), 10.0); // constant left extension
        assert_eq!(t.eval(9.0), 0.0); // constant right extension
    }

    #[test]
    fn hits_nodes_exactly() {
        let xs: Vec<f64> = (0..20).map(|i| 0.1 + i as f64 * 0.37).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let t = LinearTable::new(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(ys.iter()) {
            assert_eq!(t.eval(*x), *y);
        }
    }
}
