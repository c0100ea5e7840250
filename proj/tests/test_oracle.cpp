#include <doctest.h>

#include <cmath>

#include "prefopt/errors.hpp"
#include "prefopt/oracle.hpp"

using namespace prefopt;

namespace {
const PairInstance kWorked{0.02, 0.01, 1.0, 1.0 / 11.0};
}

TEST_CASE("eta of the worked example is exactly 20") {
    CHECK(eta(kWorked) == 20.0);
}

TEST_CASE("eta general formula") {
    PairInstance inst{0.02, 0.01, 2.0, 1.0 / 11.0};
    CHECK(eta(inst) == doctest::Approx(6.324555320336759).epsilon(1e-14));
    // eps < 1/2 forces eta strictly above the reference ratio
    PairInstance weak{0.1, 0.3, 3.0, 0.49};
    CHECK(eta(weak) > weak.ref_w / weak.ref_l);
    PairInstance bad = kWorked;
    bad.eps = 0.5;
    CHECK_THROWS_AS(eta(bad), config_error);
}

TEST_CASE("remark-3 candidates against the eta line") {
    Remark3Report rep = verify_remark3(kWorked);
    REQUIRE(rep.cases.size() == 3);
    CHECK(rep.eta_value == 20.0);
    CHECK(rep.cases[0].on_line);                       // (0.4, 0.02)
    CHECK_FALSE(rep.cases[1].on_line);                 // (0.001, 0.0002): ratio 5
    CHECK(rep.cases[1].ratio == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(rep.cases[2].on_line);                       // corrected (0.004, 0.0002)
}

TEST_CASE("phi table validates monotonicity") {
    CHECK_THROWS_AS(Phi::table({0.1, 0.2, 0.3}, {1.0, 0.5, 2.0}), std::domain_error);
    CHECK_THROWS_AS(Phi::table({0.1, 0.2, 0.3}, {1.0, 1.0, 2.0}), std::domain_error);
    CHECK_THROWS_AS(Phi::table({0.1, 0.3, 0.2}, {1.0, 2.0, 3.0}), std::domain_error);
    Phi dec = Phi::table({0.1, 0.2, 0.4}, {3.0, 2.0, 1.0}); // decreasing is fine
    CHECK(dec(0.15) == doctest::Approx(2.5));
    CHECK(dec.name() == "table");
}

TEST_CASE("grid_solve rejects bad options") {
    PairLossFn loss = soft_label_kl_loss(kWorked);
    GridSolveOptions opts;
    opts.resolution = 50;
    CHECK_THROWS_AS(grid_solve_instance(kWorked, loss, nullptr, opts), config_error);
}

TEST_CASE("unconstrained near-optimal set is the eta line: wide and thin") {
    GridSolveOptions opts;
    opts.resolution = 1000;
    opts.near_opt_tol = 1e-6;
    GridSolveResult res = grid_solve_instance(kWorked, soft_label_kl_loss(kWorked), nullptr, opts);
    REQUIRE(!res.near_optimal.empty());
    double e = eta(kWorked);
    double qw_min = 1.0, qw_max = 0.0;
    for (const auto& p : res.near_optimal) {
        qw_min = std::min(qw_min, p.q_w);
        qw_max = std::max(qw_max, p.q_w);
        CHECK(std::fabs(p.q_w / p.q_l - e) <= 0.02 * e);
    }
    CHECK(qw_max / qw_min >= 100.0); // at least two decades of freedom
}

TEST_CASE("log constraint pins the product, identity pins the sum") {
    PairLossFn loss = soft_label_kl_loss(kWorked);
    GridSolveOptions opts;
    opts.resolution = 500;
    opts.refine_passes = 3;

    Phi lg = Phi::log();
    GridSolveResult a = grid_solve_instance(kWorked, loss, &lg, opts);
    CHECK(std::fabs(a.best.q_w * a.best.q_l - kWorked.ref_w * kWorked.ref_l) <= 1e-8);
    CHECK(a.best.q_w > kWorked.ref_w);
    CHECK(a.best.q_l < kWorked.ref_l);

    Phi id = Phi::identity();
    GridSolveResult b = grid_solve_instance(kWorked, loss, &id, opts);
    CHECK(std::fabs(b.best.q_w + b.best.q_l - (kWorked.ref_w + kWorked.ref_l)) <= 1e-10);
    CHECK(b.best.q_w > kWorked.ref_w);
    CHECK(b.best.q_l < kWorked.ref_l);
    // winner gain is bounded by the loser's reference probability
    CHECK(b.best.q_w - kWorked.ref_w <= kWorked.ref_l);
}

TEST_CASE("grid solution matches the 1-D root-finding oracle") {
    PairLossFn loss = soft_label_kl_loss(kWorked);
    for (const Phi& phi : {Phi::log(), Phi::identity(), Phi::cube(), Phi::neg_inverse()}) {
        AnalyticSolution an = solve_constrained_analytic(kWorked, phi);
        GridSolveOptions opts;
        opts.resolution = 1000;
        opts.refine_passes = 3;
        GridSolveResult res = grid_solve_instance(kWorked, loss, &phi, opts);
        CHECK(std::fabs(res.best.q_w - an.q_w) <= 1e-3 * an.q_w);
        CHECK(std::fabs(res.best.q_l - an.q_l) <= 1e-3 * an.q_l);
        // and the analytic point is on the eta line by construction
        CHECK(an.q_w / an.q_l == doctest::Approx(eta(kWorked)).epsilon(1e-10));
    }
}

TEST_CASE("tabulated monotone phi works in the constrained solver") {
    // dense piecewise-linear table of x^3 over the feasible range
    std::vector<double> xs, ys;
    for (int i = 0; i <= 2000; ++i) {
        double x = std::exp(std::log(1e-8) + (std::log(1.0) - std::log(1e-8)) * i / 2000.0);
        xs.push_back(x);
        ys.push_back(x * x * x);
    }
    Phi tab = Phi::table(xs, ys);
    PairLossFn loss = soft_label_kl_loss(kWorked);
    GridSolveOptions opts;
    opts.resolution = 400;
    GridSolveResult res = grid_solve_instance(kWorked, loss, &tab, opts);
    CHECK(res.best.q_w > kWorked.ref_w);
    CHECK(res.best.q_l < kWorked.ref_l);
}

TEST_CASE("proposition holds on a quick random batch") {
    PropositionReport rep = verify_proposition(10, 7);
    CHECK(rep.trials == 40);
    CHECK(rep.violations == 0);
    for (const auto& t : rep.results) {
        CHECK(t.winner_up);
        CHECK(t.loser_down);
    }
}

TEST_CASE("degenerate equal references still separate: eta > 1") {
    PairInstance inst{0.05, 0.05, 1.0, 0.45};
    PairLossFn loss = soft_label_kl_loss(inst);
    Phi id = Phi::identity();
    GridSolveOptions opts;
    opts.resolution = 400;
    opts.refine_passes = 3;
    GridSolveResult res = grid_solve_instance(inst, loss, &id, opts);
    CHECK(res.best.q_w > res.best.q_l);
    CHECK(res.best.q_w > inst.ref_w);
    CHECK(res.best.q_l < inst.ref_l);
}
