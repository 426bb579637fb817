//! Quadrature helpers.

/// Nodes and weights of the composite Simpson rule on `[a, b]` with
/// `panels` subintervals (rounded up to an even count).
pub fn simpson_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let n = (panels.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (a + i as f64 * h, w * h / 3.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_cubics_exactly() {
        let q: f64 = simpson_nodes(0.0, 2.0, 4)
            .iter()
            .map(|&(x, w)| w * (x * x * x - x + 1.0))
            .sum();
        assert!((q - 4.0).abs() < 1e-14);
    }

    #[test]
    fn odd_panel_count_rounds_up() {
        assert_eq!(simpson_nodes(0.0, 1.0, 5).len(), 7);
    }
}
