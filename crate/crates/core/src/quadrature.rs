//! Symmetric quadrature rules on the reference triangle.

/// Points in barycentric coordinates; weights sum to one, so an integral over
/// a triangle `K` is `|K| * sum_q w_q f(x_q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadRule {
    /// Smallest built-in rule exact for polynomials of total degree `degree`.
    /// Degrees above 5 are served by the 7-point degree-5 rule.
    pub fn triangle(degree: usize) -> QuadRule {
        match degree {
            0 | 1 => QuadRule {
                points: vec![[1.0 / 3.0; 3]],
                weights: vec![1.0],
                degree: 1,
            },
            2 => {
                let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
                QuadRule {
                    points: vec![[b, a, a], [a, b, a], [a, a, b]],
                    weights: vec![1.0 / 3.0; 3],
                    degree: 2,
                }
            }
            3 | 4 => {
                let (a1, w1) = (0.445_948_490_915_964_886_318_329_253_883, 0.223_381_589_678_011_465_944_518_008_975);
                let (a2, w2) = (0.091_576_213_509_770_743_459_571_463_402_2, 0.109_951_743_655_321_867_388_815_324_358);
                let (b1, b2) = (1.0 - 2.0 * a1, 1.0 - 2.0 * a2);
                QuadRule {
                    points: vec![[a1, a1, b1], [a1, b1, a1], [b1, a1, a1], [a2, a2, b2], [a2, b2, a2], [b2, a2, a2]],
                    weights: vec![w1, w1, w1, w2, w2, w2],
                    degree: 4,
                }
            }
            _ => {
                let s15 = 15f64.sqrt();
                let a1 = (6.0 - s15) / 21.0;
                let a2 = (6.0 + s15) / 21.0;
                let w1 = (155.0 - s15) / 1200.0;
                let w2 = (155.0 + s15) / 1200.0;
                let (b1, b2) = (1.0 - 2.0 * a1, 1.0 - 2.0 * a2);
                QuadRule {
                    points: vec![
                        [1.0 / 3.0; 3],
                        [a1, a1, b1],
                        [a1, b1, a1],
                        [b1, a1, a1],
                        [a2, a2, b2],
                        [a2, b2, a2],
                        [b2, a2, a2],
                    ],
                    weights: vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
                    degree: 5,
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of x^i y^j over the unit reference triangle
    /// {x, y >= 0, x + y <= 1}: i! j! / (i + j + 2)!.
    fn monomial_exact(i: u32, j: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    #[test]
    fn exactness_up_to_degree() {
        for deg in [1usize, 2, 4, 5] {
            let q = QuadRule::triangle(deg);
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for i in 0..=deg as u32 {
                for j in 0..=(deg as u32 - i) {
                    // reference triangle with vertices (0,0), (1,0), (0,1): x = l1, y = l2, area 1/2
                    let v: f64 = q
                        .points
                        .iter()
                        .zip(&q.weights)
                        .map(|(l, w)| w * l[1].powi(i as i32) * l[2].powi(j as i32))
                        .sum::<f64>()
                        * 0.5;
                    let e = monomial_exact(i, j);
                    assert!((v - e).abs() < 1e-13 * e.max(1.0), "deg {deg} x^{i} y^{j}: {v} vs {e}");
                }
            }
        }
    }

    #[test]
    fn degree_four_rule_misses_degree_six() {
        let q = QuadRule::triangle(4);
        let v: f64 = q.points.iter().zip(&q.weights).map(|(l, w)| w * l[1].powi(6)).sum::<f64>() * 0.5;
        assert!((v - monomial_exact(6, 0)).abs() > 1e-8);
    }
}
