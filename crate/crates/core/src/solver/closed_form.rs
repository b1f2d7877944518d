use crate::market::{price_no_dr, HydroParams, PeriodDemand, ThermalParams};

/// No-DR equilibrium of a single period, with the capacity duals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormPoint {
    pub r: f64,
    pub w: f64,
    pub h: f64,
    pub q: f64,
    pub price: f64,
    pub mu_t: f64,
    pub mu_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Regime {
    Interior,
    Zero,
    Cap,
}

const REGIMES: [Regime; 3] = [Regime::Interior, Regime::Zero, Regime::Cap];

/// Unconstrained thermal best response to hydro output `h`.
fn thermal_reply(pd: &PeriodDemand, tp: &ThermalParams, h: f64) -> f64 {
    (pd.intercept - tp.c1 - pd.gamma * h) / (2.0 * pd.gamma + tp.c2)
}

/// Unconstrained hydro best response (in energy) to thermal output `r`.
fn hydro_reply(pd: &PeriodDemand, r: f64) -> f64 {
    (pd.intercept - pd.gamma * r) / (2.0 * pd.gamma)
}

/// Exact no-DR Cournot equilibrium of one period.
///
/// With both players interior, `r = (intercept/2 - c1) / (1.5 gamma + c2)` and
/// `H = (qbar - r) / 2`. Otherwise each player's regime (interior, at zero, at
/// capacity) is enumerated and the combination whose clamped best responses
/// form a fixed point is returned. The game is strictly diagonally dominant,
/// so that fixed point is unique.
pub fn closed_form_no_dr(pd: &PeriodDemand, tp: &ThermalParams, hp: &HydroParams) -> ClosedFormPoint {
    let h_cap = hp.energy_cap();
    let (g, c2) = (pd.gamma, tp.c2);
    let consistent = |r: f64, h: f64| {
        let br_r = thermal_reply(pd, tp, h).clamp(0.0, tp.r_max);
        let br_h = hydro_reply(pd, r).clamp(0.0, h_cap);
        (r - br_r).abs() <= 1e-9 * (1.0 + r.abs()) && (h - br_h).abs() <= 1e-9 * (1.0 + h.abs())
    };

    let mut found = None;
    'search: for rt in REGIMES {
        for rh in REGIMES {
            let fixed_r = match rt {
                Regime::Zero => Some(0.0),
                Regime::Cap => Some(tp.r_max),
                Regime::Interior => None,
            };
            let fixed_h = match rh {
                Regime::Zero => Some(0.0),
                Regime::Cap => Some(h_cap),
                Regime::Interior => None,
            };
            let (r, h) = match (fixed_r, fixed_h) {
                (Some(r), Some(h)) => (r, h),
                (Some(r), None) => (r, hydro_reply(pd, r)),
                (None, Some(h)) => (thermal_reply(pd, tp, h), h),
                (None, None) => {
                    let r = (0.5 * pd.intercept - tp.c1) / (1.5 * g + c2);
                    (r, 0.5 * (pd.reference_quantity() - r))
                }
            };
            if r >= 0.0 && r <= tp.r_max && h >= 0.0 && h <= h_cap && consistent(r, h) {
                found = Some((r, h));
                break 'search;
            }
        }
    }
    let (r, h) = found.unwrap_or_else(|| iterate_replies(pd, tp, h_cap));

    let eta = hp.production.slope();
    let thermal_row = r * (2.0 * g + c2) + g * h + tp.c1 - pd.intercept;
    let hydro_row = eta * (g * r + 2.0 * g * h - pd.intercept);
    let mu_t = if r >= tp.r_max { (-thermal_row).max(0.0) } else { 0.0 };
    let mu_h = if h >= h_cap { (-hydro_row).max(0.0) } else { 0.0 };
    let w = if h >= h_cap {
        hp.w_max
    } else {
        hp.production.release_for(h)
    };
    ClosedFormPoint {
        r,
        w,
        h,
        q: r + h,
        price: price_no_dr(pd, r + h),
        mu_t,
        mu_h,
    }
}

/// Clamped best-response iteration; a contraction with factor below 1/2.
fn iterate_replies(pd: &PeriodDemand, tp: &ThermalParams, h_cap: f64) -> (f64, f64) {
    let (mut r, mut h) = (0.0, 0.0);
    for _ in 0..200 {
        let rn = thermal_reply(pd, tp, h).clamp(0.0, tp.r_max);
        let hn = hydro_reply(pd, rn).clamp(0.0, h_cap);
        let moved = (rn - r).abs().max((hn - h).abs());
        r = rn;
        h = hn;
        if moved == 0.0 {
            break;
        }
    }
    (r, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Production;

    fn thermal(c1: f64) -> ThermalParams {
        ThermalParams {
            c1,
            c2: 0.025,
            c3: 0.0,
            r_max: 500.0,
        }
    }

    fn hydro() -> HydroParams {
        HydroParams {
            c4: 0.0,
            w_max: 1000.0,
            production: Production::Identity,
        }
    }

    #[test]
    fn hour_20_interior_point() {
        let pd = PeriodDemand::new(0.054, 120.35, 0.0).unwrap();
        let cf = closed_form_no_dr(&pd, &thermal(10.0), &hydro());
        assert!((cf.r - 473.35).abs() < 0.01);
        assert!((cf.h - 877.68).abs() < 0.01);
        assert!((cf.q - 1351.03).abs() < 0.01);
        assert!((cf.price - 47.39).abs() < 0.01);
        assert_eq!((cf.mu_t, cf.mu_h), (0.0, 0.0));
    }

    #[test]
    fn both_capacities_bind() {
        let pd = PeriodDemand::new(0.05, 200.0, 0.0).unwrap();
        let cf = closed_form_no_dr(&pd, &thermal(10.0), &hydro());
        assert_eq!((cf.r, cf.w), (500.0, 1000.0));
        // duals from the thermal and hydro stationarity rows
        assert!((cf.mu_t - 77.5).abs() < 1e-9, "{}", cf.mu_t);
        assert!((cf.mu_h - 75.0).abs() < 1e-9, "{}", cf.mu_h);
    }

    #[test]
    fn expensive_thermal_is_priced_out() {
        let pd = PeriodDemand::new(0.054, 120.35, 0.0).unwrap();
        let cf = closed_form_no_dr(&pd, &thermal(70.0), &hydro());
        assert_eq!(cf.r, 0.0);
        // hydro would want qbar/2 = 1114 but is capped
        assert_eq!(cf.h, 1000.0);
        let big = HydroParams {
            w_max: 5000.0,
            ..hydro()
        };
        let cf = closed_form_no_dr(&pd, &thermal(70.0), &big);
        assert!((cf.h - 0.5 * pd.reference_quantity()).abs() < 1e-9);
    }

    #[test]
    fn matches_clamped_reply_iteration() {
        for (g, a, c1) in [
            (0.05, 200.0, 10.0),
            (0.065, 92.4, 10.0),
            (0.03, 150.0, 80.0),
            (0.2, 30.0, 5.0),
        ] {
            let pd = PeriodDemand::new(g, a, 0.0).unwrap();
            let tp = thermal(c1);
            let cf = closed_form_no_dr(&pd, &tp, &hydro());
            let (r, h) = iterate_replies(&pd, &tp, 1000.0);
            assert!((cf.r - r).abs() < 1e-8 && (cf.h - h).abs() < 1e-8, "{g} {a} {c1}");
        }
    }

    #[test]
    fn linear_production_scales_release() {
        let pd = PeriodDemand::new(0.054, 120.35, 0.0).unwrap();
        let hp = HydroParams {
            production: Production::Linear { efficiency: 0.5 },
            w_max: 4000.0,
            ..hydro()
        };
        let cf = closed_form_no_dr(&pd, &thermal(10.0), &hp);
        assert!((cf.h - 877.68).abs() < 0.01);
        assert!((cf.w - 2.0 * cf.h).abs() < 1e-9);
    }
}
