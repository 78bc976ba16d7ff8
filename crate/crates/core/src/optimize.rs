//! Derivative-free maximization on the unit box `[0, 1]^n`.
//!
//! Nelder–Mead with box constraints enforced by reflecting trial points back
//! into the box. The search is run in sweeps: each sweep rebuilds a fresh
//! simplex around the incumbent and runs until the simplex's function values
//! agree to `rel_tol`; the search stops once a whole sweep improves the
//! incumbent by less than `rel_tol` (relative) or the iteration budget is spent.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    pub rel_tol: f64,
    /// Edge length of each fresh simplex, in unit-box coordinates.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iterations: 500,
            rel_tol: 1e-8,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Folds a coordinate into `[0, 1]` by mirror reflection at the faces.
pub fn reflect_into_unit(v: f64) -> f64 {
    if (0.0..=1.0).contains(&v) {
        return v;
    }
    if !v.is_finite() {
        return if v > 0.0 { 1.0 } else { 0.0 };
    }
    let m = v.rem_euclid(2.0);
    if m <= 1.0 {
        m
    } else {
        2.0 - m
    }
}

#[derive(Debug, Clone)]
struct Vertex {
    x: Vec<f64>,
    // Objective to minimize (negated value); NaN is mapped to +inf.
    cost: f64,
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

struct Search<'a, F> {
    f: &'a mut F,
    iterations: usize,
    max_iterations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Search<'_, F> {
    fn cost(&mut self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    }

    fn vertex(&mut self, x: Vec<f64>) -> Vertex {
        let cost = self.cost(&x);
        Vertex { x, cost }
    }

    /// Inserts after any vertices of equal cost, so the incumbent only changes
    /// on strict improvement.
    fn insert(simplex: &mut Vec<Vertex>, v: Vertex) {
        let pos = simplex.partition_point(|w| w.cost.total_cmp(&v.cost).is_le());
        simplex.insert(pos, v);
    }

    fn sweep(&mut self, start: Vertex, step: f64, rel_tol: f64) -> Vertex {
        let n = start.x.len();
        let mut simplex = vec![start.clone()];
        for i in 0..n {
            let mut x = start.x.clone();
            let mut v = x[i] + step;
            if v > 1.0 {
                v = x[i] - step;
            }
            x[i] = reflect_into_unit(v);
            let vert = self.vertex(x);
            Self::insert(&mut simplex, vert);
        }

        while self.iterations < self.max_iterations {
            let best = simplex[0].cost;
            let worst = simplex[n].cost;
            if best.is_finite() && worst.is_finite() && relative_gap(best, worst) <= rel_tol {
                break;
            }
            self.iterations += 1;

            let mut centroid = vec![0.0; n];
            for v in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(&v.x) {
                    *c += xi / n as f64;
                }
            }
            let worst_v = simplex.pop().expect("simplex has n+1 vertices");
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst_v.x)
                    .map(|(c, w)| reflect_into_unit(c + t * (c - w)))
                    .collect()
            };

            let reflected = self.vertex(along(REFLECT));
            let second_worst = simplex[n - 1].cost;
            if reflected.cost < simplex[0].cost {
                let expanded = self.vertex(along(EXPAND));
                if expanded.cost < reflected.cost {
                    Self::insert(&mut simplex, expanded);
                } else {
                    Self::insert(&mut simplex, reflected);
                }
                continue;
            }
            if reflected.cost < second_worst {
                Self::insert(&mut simplex, reflected);
                continue;
            }
            let contracted = if reflected.cost < worst_v.cost {
                self.vertex(along(CONTRACT))
            } else {
                self.vertex(along(-CONTRACT))
            };
            if contracted.cost < reflected.cost.min(worst_v.cost) {
                Self::insert(&mut simplex, contracted);
                continue;
            }

            // Shrink toward the best vertex.
            simplex.push(worst_v);
            let best_x = simplex[0].x.clone();
            let rest: Vec<Vertex> = simplex.drain(1..).collect();
            for v in rest {
                let x: Vec<f64> = best_x
                    .iter()
                    .zip(&v.x)
                    .map(|(b, xi)| b + SHRINK * (xi - b))
                    .collect();
                let vert = self.vertex(x);
                Self::insert(&mut simplex, vert);
            }
        }
        simplex.swap_remove(0)
    }
}

/// Maximizes `f` over the unit box starting from `x0`.
///
/// The returned value is never below `f(x0)`.
pub fn maximize_in_unit_box<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> OptimOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let mut search = Search {
        f: &mut f,
        iterations: 0,
        max_iterations: opts.max_iterations,
    };
    let start: Vec<f64> = x0.iter().map(|&v| reflect_into_unit(v)).collect();
    let mut best = search.vertex(start);
    if x0.is_empty() || !best.cost.is_finite() {
        return OptimOutcome {
            value: -best.cost,
            x: best.x,
            iterations: 0,
            converged: x0.is_empty(),
        };
    }

    let mut converged = false;
    while search.iterations < search.max_iterations {
        let before = best.cost;
        best = search.sweep(best, opts.initial_step, opts.rel_tol);
        if relative_gap(before, best.cost) <= opts.rel_tol && search.iterations < search.max_iterations {
            converged = true;
            break;
        }
    }
    OptimOutcome {
        value: -best.cost,
        x: best.x,
        iterations: search.iterations,
        converged,
    }
}
