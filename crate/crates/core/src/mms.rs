//! Manufactured solutions and grid-convergence studies.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::calculus::{energy_geometric, energy_simplified, mean_curvature};
use crate::expr::Expr;
use crate::field::{FieldKind, ScalarField};
use crate::geometry::{BoundaryData, DomainSpec, Grid};
use crate::pmc::{solve_pmc, NewtonOptions};
use crate::{Error, Result};

/// An exact surface `u*` with known mean curvature `H*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Manufactured {
    pub name: String,
    pub spec: DomainSpec,
    pub u: Expr,
    /// Analytic curvature when known; otherwise computed by finite
    /// differences of `u`.
    pub h: Option<Expr>,
    /// Constant mean curvature surfaces have zero curvature-variation energy.
    pub cmc: bool,
    /// Errors sit at rounding level, so no order is measured.
    pub exact: bool,
}

impl Manufactured {
    /// `u = a x + b y + c` on the unit square.
    pub fn plane(a: f64, b: f64, c: f64) -> Self {
        Manufactured {
            name: "plane".into(),
            spec: DomainSpec::unit_square(),
            u: parse(&format!("{} * x + {} * y + {}", lit(a), lit(b), lit(c))),
            h: Some(Expr::num(0.0)),
            cmc: true,
            exact: true,
        }
    }

    /// Upper spherical cap of radius `r` over the unit disk,
    /// `u = sqrt(r^2 - x^2 - y^2)`, with `H = -1/r`.
    pub fn cap(r: f64) -> Self {
        Manufactured {
            name: format!("cap-R={r}"),
            spec: DomainSpec::unit_disk(),
            u: parse(&format!("sqrt({} - x^2 - y^2)", lit(r * r))),
            h: Some(Expr::num(-1.0 / r)),
            cmc: true,
            exact: false,
        }
    }

    /// `u = 0.1 sin(pi x) sin(pi y) + x/4` on the unit square.
    pub fn sine() -> Self {
        let ux = "(0.1*pi*cos(pi*x)*sin(pi*y) + 0.25)";
        let uy = "(0.1*pi*sin(pi*x)*cos(pi*y))";
        let uxx = "(-0.1*pi^2*sin(pi*x)*sin(pi*y))";
        let uyy = uxx;
        let uxy = "(0.1*pi^2*cos(pi*x)*cos(pi*y))";
        let h = format!(
            "((1 + {uy}^2)*{uxx} - 2*{ux}*{uy}*{uxy} + (1 + {ux}^2)*{uyy}) / (2*(1 + {ux}^2 + {uy}^2)^1.5)"
        );
        Manufactured {
            name: "sine".into(),
            spec: DomainSpec::unit_square(),
            u: parse("0.1*sin(pi*x)*sin(pi*y) + x/4"),
            h: Some(parse(&h)),
            cmc: false,
            exact: false,
        }
    }

    /// A user-supplied exact surface on `spec`.
    pub fn from_expr(spec: DomainSpec, u: Expr) -> Self {
        Manufactured { name: format!("{u}"), spec, u, h: None, cmc: false, exact: false }
    }

    /// Looks up `plane`, `cap` (radius 2), `cap-R=<r>` or `sine`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "plane" => Ok(Self::plane(3.0, -2.0, 0.5)),
            "cap" => Ok(Self::cap(2.0)),
            "sine" => Ok(Self::sine()),
            _ => {
                if let Some(r) = name.strip_prefix("cap-R=").and_then(|r| r.parse::<f64>().ok()) {
                    if r > 1.0 {
                        return Ok(Self::cap(r));
                    }
                }
                Err(Error::InvalidOption(format!("unknown preset `{name}`")))
            }
        }
    }

    pub fn u_at(&self, grid: &Grid, p: [f64; 2]) -> Result<f64> {
        self.u.eval(&grid.bindings(p))
    }

    /// `H*` at `p`, analytic or from fourth-order differences of `u*`.
    pub fn h_at(&self, grid: &Grid, p: [f64; 2]) -> Result<f64> {
        if let Some(h) = &self.h {
            return h.eval(&grid.bindings(p));
        }
        let f = |x: f64, y: f64| self.u.eval(&grid.bindings([x, y]));
        let d = 1e-3 * self.spec.diameter();
        let d1 = |g: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
            Ok((-g(2.0 * d)? + 8.0 * g(d)? - 8.0 * g(-d)? + g(-2.0 * d)?) / (12.0 * d))
        };
        let d2 = |g: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
            Ok((-g(2.0 * d)? + 16.0 * g(d)? - 30.0 * g(0.0)? + 16.0 * g(-d)? - g(-2.0 * d)?) / (12.0 * d * d))
        };
        let [x, y] = p;
        let ux = d1(&|s| f(x + s, y))?;
        let uxx = d2(&|s| f(x + s, y))?;
        if self.spec.dim() == 1 {
            let q = 1.0 + ux * ux;
            return Ok(uxx / (q * libm::sqrt(q)));
        }
        let uy = d1(&|s| f(x, y + s))?;
        let uyy = d2(&|s| f(x, y + s))?;
        let uxy = d1(&|s| d1(&|t| f(x + t, y + s)))?;
        let q = 1.0 + ux * ux + uy * uy;
        Ok(((1.0 + uy * uy) * uxx - 2.0 * ux * uy * uxy + (1.0 + ux * ux) * uyy) / (2.0 * q * libm::sqrt(q)))
    }

    pub fn u_field(&self, grid: &Grid) -> Result<ScalarField> {
        ScalarField::from_expr(grid, FieldKind::Height, &self.u)
    }

    pub fn h_field(&self, grid: &Grid) -> Result<ScalarField> {
        let vals = grid.positions().iter().map(|&p| self.h_at(grid, p)).collect::<Result<Vec<_>>>()?;
        ScalarField::from_values(grid, FieldKind::Curvature, vals)
    }

    /// Boundary data `g = u*`; `h` is the analytic curvature when it is an
    /// expression and zero otherwise (studies never read it).
    pub fn boundary_data(&self, grid: &Grid) -> Result<BoundaryData> {
        BoundaryData::new(grid, self.u.clone(), self.h.clone().unwrap_or(Expr::num(0.0)))
    }
}

fn lit(v: f64) -> String {
    if v < 0.0 {
        format!("({v})")
    } else {
        v.to_string()
    }
}

fn parse(s: &str) -> Expr {
    Expr::parse(s).expect("built-in formula parses")
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StudyRow {
    pub m: usize,
    pub h: f64,
    /// `max |mean_curvature(u*) - H*|` over interior nodes.
    pub err_h: f64,
    /// `max |u - u*|` for the prescribed mean curvature solve with `H*`.
    pub err_u: f64,
    /// Energies of `(mean_curvature(u*) with trace H*, u*)`.
    pub e_simplified: f64,
    pub e_geometric: f64,
    pub newton_steps: usize,
    pub quadratic_tail: bool,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OrderRow {
    pub from_m: usize,
    pub to_m: usize,
    pub err_h: Option<f64>,
    pub err_u: Option<f64>,
    pub e_simplified: Option<f64>,
    pub e_geometric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Study {
    pub name: String,
    pub rows: Vec<StudyRow>,
    pub orders: Vec<OrderRow>,
    /// Orders required to be at least this value.
    pub min_order: f64,
    pub passed: bool,
}

/// Observed order `log2(e_coarse / e_fine) / log2(h_coarse / h_fine)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    libm::log(e_coarse / e_fine) / libm::log(h_coarse / h_fine)
}

/// One row of a study at resolution `m`.
pub fn study_row(man: &Manufactured, m: usize, newton: &NewtonOptions) -> Result<StudyRow> {
    let grid = Grid::build(man.spec, m)?;
    let bd = man.boundary_data(&grid)?;
    let u_star = man.u_field(&grid)?;
    let h_star = man.h_field(&grid)?;
    let ni = grid.num_interior();

    let h_fd = mean_curvature(&u_star, &grid)?.with_trace(&grid, h_star.boundary(&grid))?;
    let err_h = h_fd.values()[..ni].iter().zip(&h_star.values()[..ni]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let e_simplified = energy_simplified(&h_fd, &u_star, &grid)?;
    let e_geometric = energy_geometric(&h_fd, &u_star, &grid)?;

    let sol = solve_pmc(&h_star, &bd, &grid, None, newton)?;
    let err_u = sol.u.max_abs_diff(&u_star);
    Ok(StudyRow {
        m,
        h: grid.spacing()[0],
        err_h,
        err_u,
        e_simplified,
        e_geometric,
        newton_steps: sol.log.steps(),
        quadratic_tail: sol.log.full_steps_in_tail(),
        kappa: sol.log.kappa(newton.tol),
    })
}

/// Runs the study over `ms` (increasing). Orders are required for the
/// curvature and solution errors, and for the energies of constant mean
/// curvature surfaces; exact presets skip the order test.
pub fn convergence_study(man: &Manufactured, ms: &[usize], newton: &NewtonOptions, min_order: f64) -> Result<Study> {
    let rows = ms.iter().map(|&m| study_row(man, m, newton)).collect::<Result<Vec<_>>>()?;
    let mut orders = Vec::new();
    let mut passed = true;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let ord = |x: f64, y: f64| observed_order(x, y, a.h, b.h);
        let row = if man.exact {
            OrderRow { from_m: a.m, to_m: b.m, err_h: None, err_u: None, e_simplified: None, e_geometric: None }
        } else {
            OrderRow {
                from_m: a.m,
                to_m: b.m,
                err_h: Some(ord(a.err_h, b.err_h)),
                err_u: Some(ord(a.err_u, b.err_u)),
                e_simplified: man.cmc.then(|| ord(a.e_simplified, b.e_simplified)),
                e_geometric: man.cmc.then(|| ord(a.e_geometric, b.e_geometric)),
            }
        };
        for o in [row.err_h, row.err_u, row.e_simplified, row.e_geometric].into_iter().flatten() {
            passed &= o >= min_order;
        }
        orders.push(row);
    }
    passed &= rows.iter().all(|r| r.quadratic_tail);
    Ok(Study { name: man.name.clone(), rows, orders, min_order, passed })
}
