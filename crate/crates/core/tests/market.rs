mod common;

use approx::assert_abs_diff_eq;
use cvcal_core::array::{Array2, Array3};
use cvcal_core::fixtures::{self, Supplier};
use cvcal_core::market::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

fn anchor(s0: f64, lambda0: f64, eta: f64) -> DemandAnchor {
    DemandAnchor::new(s0, lambda0, eta).unwrap()
}

fn solve(inst: &fixtures::Instance) -> Equilibrium {
    let sys = assemble_base(&inst.network, &inst.anchors, &inst.theta).unwrap();
    solve_system(&inst.network, &sys, TOL).unwrap()
}

#[test]
fn monopoly_matches_closed_form() {
    let a = anchor(50.0, 100.0, -0.5);
    let (int, slp) = inverse_demand_coeffs(&a).unwrap();
    for theta in [0.0, 0.25, 0.5, 1.0] {
        let mut inst = fixtures::single_market(
            &[Supplier {
                linc: 30.0,
                quac: 0.0,
                transport: 5.0,
            }],
            1,
            a,
        );
        inst.set_theta(0, theta);
        let eq = solve(&inst);
        let q = common::cv_monopoly(int, slp, 35.0, theta);
        assert_abs_diff_eq!(eq.sales.at(0, 0, 0), q, epsilon = 1e-7);
        assert_abs_diff_eq!(eq.price.at(0, 0), int + slp * q, epsilon = 1e-7);
        // Marginal cost at the market is production plus transport.
        assert_abs_diff_eq!(eq.phi.at(0, 0, 0), 35.0, epsilon = 1e-7);
    }
}

#[test]
fn competitive_price_follows_merit_order() {
    let a = anchor(100.0, 60.0, -0.4);
    let (int, slp) = inverse_demand_coeffs(&a).unwrap();
    let data = [(40.0, 30.0), (20.0, 25.0), (55.0, 100.0), (30.0, 20.0)];
    let suppliers: Vec<Supplier> = data.iter().map(|&(c, _)| Supplier::constant(c)).collect();
    let mut inst = fixtures::single_market(&suppliers, 1, a);
    for (p, &(_, cap)) in inst.network.production.iter_mut().zip(&data) {
        p.cap = vec![cap];
    }
    let eq = solve(&inst);
    let expected = common::merit_order_price(int, slp, &data);
    assert_abs_diff_eq!(eq.price.at(0, 0), expected, epsilon = 1e-7);
    // The highest active supplier's marginal cost (with its capacity fee)
    // sets the price.
    let active_max = (0..data.len())
        .filter(|&f| eq.sales.at(f, 0, 0) > 1e-9)
        .map(|f| eq.phi.at(f, 0, 0))
        .fold(f64::NEG_INFINITY, f64::max);
    assert_abs_diff_eq!(active_max, expected, epsilon = 1e-7);
}

#[test]
fn two_node_symmetry() {
    let inst = fixtures::two_node(20.0, 4.0, anchor(80.0, 90.0, -0.6), 0.6);
    let eq = solve(&inst);
    let (n, m) = (0, 1);
    for t in 0..2 {
        assert_abs_diff_eq!(eq.price.at(n, t), eq.price.at(m, t), epsilon = 1e-7);
        assert_abs_diff_eq!(eq.sales.at(0, n, t), eq.sales.at(1, m, t), epsilon = 1e-7);
        assert_abs_diff_eq!(eq.sales.at(0, m, t), eq.sales.at(1, n, t), epsilon = 1e-7);
        assert_abs_diff_eq!(
            eq.pipeline.at(0, 0, t),
            eq.pipeline.at(1, 1, t),
            epsilon = 1e-7
        );
        assert_abs_diff_eq!(
            eq.production.at(0, n, t),
            eq.production.at(1, m, t),
            epsilon = 1e-7
        );
    }
    // Each trader ships to the other node by pipeline, the cheaper route.
    assert!(eq.pipeline.at(0, 0, 0) > 1.0);
    assert_abs_diff_eq!(eq.shipping.at(0, 0, 0), 0.0, epsilon = 1e-9);
}

#[test]
fn zero_willingness_to_pay() {
    let inst = fixtures::single_market(&[Supplier::constant(10.0)], 2, anchor(1.0, 0.0, -1.0));
    let eq = solve(&inst);
    for t in 0..2 {
        assert_eq!(eq.price.at(0, t), 0.0);
        assert_eq!(eq.sales.at(0, 0, t), 0.0);
    }
}

#[test]
fn missing_anchor_is_reported() {
    let mut inst =
        fixtures::single_market(&[Supplier::constant(10.0)], 1, anchor(10.0, 50.0, -0.5));
    inst.anchors.set(0, 0, None);
    let err = assemble_base(&inst.network, &inst.anchors, &inst.theta).unwrap_err();
    assert!(matches!(err, ModelError::MissingAnchor { .. }), "{err}");
}

#[test]
fn assembly_is_deterministic() {
    let inst = fixtures::grid10(11);
    let a = assemble_base(&inst.network, &inst.anchors, &inst.theta).unwrap();
    let b = assemble_base(&inst.network, &inst.anchors, &inst.theta).unwrap();
    assert_eq!(a.mlcp.matrix(), b.mlcp.matrix());
    assert_eq!(a.mlcp.b(), b.mlcp.b());
    assert_eq!(a.labels(), b.labels());
}

fn two_supplier() -> fixtures::Instance {
    let mut inst = fixtures::single_market(
        &[Supplier::constant(30.0), Supplier::constant(45.0)],
        1,
        anchor(50.0, 100.0, -0.5),
    );
    inst.set_theta(0, 0.5);
    inst.set_theta(1, 0.3);
    inst
}

#[test]
fn fixed_sales_are_enforced_for_any_theta() {
    let mut inst = two_supplier();
    let mut q_ref = Array3::zeros(2, 3, 1);
    q_ref.set(0, 0, 0, 12.0);
    q_ref.set(1, 0, 0, 7.0);
    for theta in [0.0, 0.4, 1.0] {
        inst.set_theta(0, theta);
        inst.set_theta(1, theta);
        let sys = assemble_fixed_sales(&inst.network, &inst.anchors, &inst.theta, &q_ref).unwrap();
        assert_eq!(sys.mlcp.free_indices().count(), 2);
        let eq = solve_system(&inst.network, &sys, TOL).unwrap();
        assert_abs_diff_eq!(eq.sales.at(0, 0, 0), 12.0, epsilon = 1e-8);
        assert_abs_diff_eq!(eq.sales.at(1, 0, 0), 7.0, epsilon = 1e-8);
        // The sales row holds with equality: phi = lambda + theta SLP q - xi.
        let (_, slp) = inverse_demand_coeffs(&inst.anchors.get(0, 0).unwrap()).unwrap();
        for (f, q) in [(0, 12.0), (1, 7.0)] {
            let xi = eq
                .shadow_price(&VarLabel::FixedSales {
                    trader: f,
                    node: 0,
                    period: 0,
                })
                .unwrap();
            let phi = eq.price.at(0, 0) + theta * slp * q - xi;
            assert_abs_diff_eq!(eq.phi.at(f, 0, 0), phi, epsilon = 1e-7);
        }
    }
}

#[test]
fn fixed_sales_shadow_prices() {
    let inst = two_supplier();
    let base = solve(&inst);
    let xi_of = |eq: &Equilibrium, f: usize| {
        eq.shadow_price(&VarLabel::FixedSales {
            trader: f,
            node: 0,
            period: 0,
        })
        .unwrap()
    };
    let mut q_ref = Array3::zeros(2, 3, 1);
    for f in 0..2 {
        q_ref.set(f, 0, 0, base.sales.at(f, 0, 0));
    }
    let sys = assemble_fixed_sales(&inst.network, &inst.anchors, &inst.theta, &q_ref).unwrap();
    let eq = solve_system(&inst.network, &sys, TOL).unwrap();
    for f in 0..2 {
        assert_abs_diff_eq!(xi_of(&eq, f), 0.0, epsilon = 1e-7);
    }
    // Forcing more sales than the equilibrium needs a subsidy.
    q_ref.set(0, 0, 0, base.sales.at(0, 0, 0) + 5.0);
    let sys = assemble_fixed_sales(&inst.network, &inst.anchors, &inst.theta, &q_ref).unwrap();
    let eq = solve_system(&inst.network, &sys, TOL).unwrap();
    assert!(xi_of(&eq, 0) < -1e-6, "xi = {}", xi_of(&eq, 0));
}

#[test]
fn vacuous_bounds_reproduce_base() {
    let inst = fixtures::grid10(5);
    let base = solve(&inst);
    let net = &inst.network;
    let bounds = SalesBounds::vacuous(net.n_traders(), net.n_nodes(), net.n_periods());
    let sys = assemble_bounded(net, &inst.anchors, &inst.theta, &bounds).unwrap();
    let eq = solve_system(net, &sys, TOL).unwrap();
    for ((f, n, t), q) in base.sales.indexed() {
        assert_abs_diff_eq!(eq.sales.at(f, n, t), *q, epsilon = 1e-6);
    }
    for ((n, t), p) in base.price.indexed() {
        assert_abs_diff_eq!(eq.price.at(n, t), *p, epsilon = 1e-6);
    }
}

#[test]
fn collapsed_bounds_match_fixed_sales() {
    let inst = two_supplier();
    let mut bounds = SalesBounds::vacuous(2, 3, 1);
    let mut q_ref = Array3::zeros(2, 3, 1);
    for (f, q) in [(0, 15.0), (1, 4.0)] {
        q_ref.set(f, 0, 0, q);
        bounds.lower.set(f, 0, 0, q);
        bounds.upper.set(f, 0, 0, q);
    }
    bounds.fixed_consumption.set(0, 0, Some(19.0));
    let sys = assemble_bounded(&inst.network, &inst.anchors, &inst.theta, &bounds).unwrap();
    let eq = solve_system(&inst.network, &sys, TOL).unwrap();
    let sys_fixed =
        assemble_fixed_sales(&inst.network, &inst.anchors, &inst.theta, &q_ref).unwrap();
    let eq_fixed = solve_system(&inst.network, &sys_fixed, TOL).unwrap();
    for f in 0..2 {
        assert_abs_diff_eq!(eq.sales.at(f, 0, 0), q_ref.at(f, 0, 0), epsilon = 1e-8);
        assert_abs_diff_eq!(
            eq.sales.at(f, 0, 0),
            eq_fixed.sales.at(f, 0, 0),
            epsilon = 1e-8
        );
    }
}

#[test]
fn pinned_consumption_pins_price() {
    let inst = fixtures::grid10(2);
    let net = &inst.network;
    let base = solve(&inst);
    let mut bounds = SalesBounds::vacuous(net.n_traders(), net.n_nodes(), net.n_periods());
    let mut anchors = inst.anchors.clone();
    for n in net.consumer_nodes() {
        for t in 0..net.n_periods() {
            // Re-anchor at a different price but pin consumption to s0.
            let a = anchors.get(n, t).unwrap();
            let moved = DemandAnchor {
                lambda0: a.lambda0 * 1.05,
                s0: base.consumption.at(n, t),
                ..a
            };
            anchors.set(n, t, Some(moved));
            bounds.fixed_consumption.set(n, t, Some(moved.s0));
        }
    }
    let sys = assemble_bounded(net, &anchors, &inst.theta, &bounds).unwrap();
    let eq = solve_system(net, &sys, TOL).unwrap();
    for n in net.consumer_nodes() {
        for t in 0..net.n_periods() {
            let l0 = anchors.get(n, t).unwrap().lambda0;
            assert_abs_diff_eq!(eq.price.at(n, t), l0, epsilon = TOL * l0.max(1.0));
            assert_abs_diff_eq!(
                eq.consumption.at(n, t),
                base.consumption.at(n, t),
                epsilon = 1e-7
            );
        }
    }
}

#[test]
fn infeasible_bounds_are_rejected() {
    let inst = two_supplier();
    let mut bounds = SalesBounds::vacuous(2, 3, 1);
    bounds.lower.set(0, 0, 0, 30.0);
    bounds.fixed_consumption.set(0, 0, Some(20.0));
    let err = assemble_bounded(&inst.network, &inst.anchors, &inst.theta, &bounds).unwrap_err();
    assert!(matches!(err, ModelError::InfeasibleBounds { .. }), "{err}");
    let mut bounds = SalesBounds::vacuous(2, 3, 1);
    bounds.upper = Array3::filled(2, 3, 1, 5.0);
    bounds.fixed_consumption.set(0, 0, Some(20.0));
    assert!(assemble_bounded(&inst.network, &inst.anchors, &inst.theta, &bounds).is_err());
}

#[test]
fn unreachable_service_is_rejected() {
    let mut inst = two_supplier();
    inst.network.traders[0].pipelines.push(1);
    let err = assemble_base(&inst.network, &inst.anchors, &inst.theta).unwrap_err();
    assert!(
        matches!(err, ModelError::UnreachableService { .. }),
        "{err}"
    );
}

/// Checks balance, capacity and clearing conditions of an equilibrium.
fn check_equilibrium(inst: &fixtures::Instance, eq: &Equilibrium) {
    let net = &inst.network;
    let tol = 1e-6;
    for (f, tr) in net.traders.iter().enumerate() {
        for t in 0..net.n_periods() {
            for &n in &tr.nodes {
                let mut inflow = eq.production.at(f, n, t) + eq.extraction.at(f, n, t);
                let mut outflow = eq.sales.at(f, n, t) + eq.injection.at(f, n, t);
                for &a in &tr.pipelines {
                    let l = &net.pipelines[a];
                    if l.to == n {
                        inflow += eq.pipeline.at(f, a, t);
                    }
                    if l.from == n {
                        outflow += eq.pipeline.at(f, a, t);
                    }
                }
                for &a in &tr.ships {
                    let l = &net.ships[a];
                    if l.to == n {
                        inflow += eq.shipping.at(f, a, t);
                    }
                    if l.from == n {
                        outflow += eq.shipping.at(f, a, t);
                    }
                }
                assert!(inflow >= outflow - tol, "balance f{f} n{n} t{t}");
                if eq.phi.at(f, n, t) > tol {
                    assert_abs_diff_eq!(inflow, outflow, epsilon = tol);
                }
            }
        }
        for &n in &tr.storage {
            let inj: f64 = (0..net.n_periods()).map(|t| eq.injection.at(f, n, t)).sum();
            let ext: f64 = (0..net.n_periods())
                .map(|t| eq.extraction.at(f, n, t))
                .sum();
            assert!(inj >= ext - tol);
            if eq.phi_storage.at(f, n) > tol {
                assert_abs_diff_eq!(inj, ext, epsilon = tol);
            }
        }
    }
    for (label, value) in &eq.shadow {
        assert!(*value >= -tol, "{label} = {value}");
        if let VarLabel::Congestion {
            service: ServiceKind::A,
            index,
            period,
        } = *label
        {
            if *value > tol {
                let used: f64 = (0..net.n_traders())
                    .map(|f| eq.pipeline.at(f, index, period))
                    .sum();
                assert_abs_diff_eq!(used, net.pipelines[index].cap[period], epsilon = tol);
            }
        }
    }
    for n in net.consumer_nodes() {
        for t in 0..net.n_periods() {
            let s: f64 = (0..net.n_traders()).map(|f| eq.sales.at(f, n, t)).sum();
            assert_abs_diff_eq!(s, eq.consumption.at(n, t), epsilon = tol);
            let (int, slp) = inverse_demand_coeffs(&inst.anchors.get(n, t).unwrap()).unwrap();
            if eq.price.at(n, t) > tol {
                assert_abs_diff_eq!(eq.price.at(n, t), int + slp * s, epsilon = tol);
            }
        }
    }
}

#[test]
fn network_equilibria_satisfy_market_conditions() {
    for seed in 0..3 {
        let inst = fixtures::grid10(seed);
        check_equilibrium(&inst, &solve(&inst));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let inst = fixtures::random_two_node(&mut rng);
        check_equilibrium(&inst, &solve(&inst));
    }
}

#[test]
fn idle_traders_get_their_supply_cost() {
    // The expensive supplier sells nothing; its marginal cost at the market
    // is still its production plus transport cost.
    let suppliers = [
        Supplier::constant(20.0),
        Supplier {
            linc: 250.0,
            quac: 0.0,
            transport: 7.0,
        },
    ];
    let mut inst = fixtures::single_market(&suppliers, 1, anchor(50.0, 100.0, -0.5));
    inst.set_theta(0, 1.0);
    let eq = solve(&inst);
    assert_abs_diff_eq!(eq.sales.at(1, 0, 0), 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(eq.phi.at(1, 0, 0), 257.0, epsilon = 1e-8);
}

#[test]
fn replica_dimension_is_stable() {
    let a = fixtures::replica43(1);
    let b = fixtures::replica43(1);
    let da = assemble_base(&a.network, &a.anchors, &a.theta)
        .unwrap()
        .dim();
    let db = assemble_base(&b.network, &b.anchors, &b.theta)
        .unwrap()
        .dim();
    assert_eq!(da, db);
    assert!(da > 1000);
}

#[test]
fn anchors_shape_is_checked() {
    let inst = two_supplier();
    let anchors = Array2::filled(1, 1, None);
    assert!(matches!(
        assemble_base(&inst.network, &anchors, &inst.theta),
        Err(ModelError::DimensionMismatch(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn single_supplier_oracle(
        c in 5.0f64..80.0,
        s0 in 10.0f64..200.0,
        l0 in 20.0f64..150.0,
        eta in -2.0f64..-0.1,
        theta in 0.0f64..=1.0,
    ) {
        let a = anchor(s0, l0, eta);
        let (int, slp) = inverse_demand_coeffs(&a).unwrap();
        let mut inst = fixtures::single_market(&[Supplier::constant(c)], 1, a);
        inst.set_theta(0, theta);
        let eq = solve(&inst);
        let q = common::cv_monopoly(int, slp, c, theta);
        prop_assert!((eq.sales.at(0, 0, 0) - q).abs() <= 1e-7 * q.max(1.0));
    }
}
