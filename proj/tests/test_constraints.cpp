#include <doctest.h>

#include <cmath>

#include "prefopt/constraints.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/rng.hpp"

using namespace prefopt;

namespace {

ModelPair remark3_pair() {
    return ModelPair(PolicyModel::tabular_from_probs({1, 4}, {0.4, 0.02, 0.29, 0.29}),
                     PolicyModel::tabular_from_probs({1, 4}, {0.02, 0.01, 0.48, 0.49}));
}

ModelPair random_pair(Rng& rng, int k, double spread) {
    std::vector<double> ref(k), theta(k);
    for (int i = 0; i < k; ++i) {
        ref[i] = rng.next_normal();
        theta[i] = ref[i] + spread * rng.next_normal();
    }
    return ModelPair(PolicyModel::tabular({1, k}, std::move(theta)),
                     PolicyModel::tabular({1, k}, std::move(ref)));
}

const PreferenceRecord kRec = PreferenceRecord::pair(0, 0, 1);

} // namespace

TEST_CASE("residuals vanish when theta equals ref") {
    Rng rng(51);
    ModelPair same = ModelPair::from_ref(random_pair(rng, 5, 0.0).ref);
    CHECK(residual_log(same, kRec) == 0.0);
    CHECK(residual_identity(same, kRec) == 0.0);
}

TEST_CASE("worked-example residuals: log 40 and log 14") {
    ModelPair pair = remark3_pair();
    CHECK(residual_log(pair, kRec) == doctest::Approx(3.6888794541139363).epsilon(1e-12));
    CHECK(residual_identity(pair, kRec) == doctest::Approx(2.6390573296152584).epsilon(1e-12));
}

TEST_CASE("swapping theta and ref negates the residuals") {
    Rng rng(52);
    for (int t = 0; t < 50; ++t) {
        ModelPair pair = random_pair(rng, 4, 0.8);
        ModelPair swapped(pair.ref, pair.theta);
        CHECK(residual_log(swapped, kRec) ==
              doctest::Approx(-residual_log(pair, kRec)).epsilon(1e-12));
        CHECK(residual_identity(swapped, kRec) ==
              doctest::Approx(-residual_identity(pair, kRec)).epsilon(1e-12));
    }
}

TEST_CASE("identity residual equals direct probability sums away from underflow") {
    Rng rng(53);
    for (int t = 0; t < 200; ++t) {
        ModelPair pair = random_pair(rng, 5, 1.0);
        double pw_t = std::exp(pair.theta.log_prob(0, 0));
        double pl_t = std::exp(pair.theta.log_prob(0, 1));
        double pw_r = std::exp(pair.ref.log_prob(0, 0));
        double pl_r = std::exp(pair.ref.log_prob(0, 1));
        double direct = std::log(pw_t + pl_t) - std::log(pw_r + pl_r);
        CHECK(std::fabs(residual_identity(pair, kRec) - direct) <= 1e-10);
    }
}

TEST_CASE("residuals depend only on the pair's probabilities") {
    // same mass on {winner, loser}, different elsewhere
    ModelPair pair(PolicyModel::tabular_from_probs({1, 4}, {0.2, 0.1, 0.3, 0.4}),
                   PolicyModel::tabular_from_probs({1, 4}, {0.2, 0.1, 0.45, 0.25}));
    CHECK(std::fabs(residual_log(pair, kRec)) <= 1e-12);
    CHECK(std::fabs(residual_identity(pair, kRec)) <= 1e-12);
}

TEST_CASE("lemma 1 identity defect") {
    CHECK(check_lemma1(1.0, 1.0) <= 1e-15);
    CHECK(check_lemma1(1e8, 1e-8) <= 1e-12);
    Rng rng(54);
    double worst = 0.0;
    for (int t = 0; t < 10000; ++t) {
        double a = std::exp(rng.next_uniform(std::log(1e-8), std::log(1e8)));
        double b = std::exp(rng.next_uniform(std::log(1e-8), std::log(1e8)));
        worst = std::max(worst, check_lemma1(a, b));
    }
    CHECK(worst <= 1e-12);
    CHECK_THROWS_AS(check_lemma1(-1.0, 2.0), std::domain_error);
    CHECK_THROWS_AS(check_lemma1(1.0, 0.0), std::domain_error);
}

TEST_CASE("penalty norms") {
    CHECK(penalty(0.0, PenaltyNorm::L1) == 0.0);
    CHECK(penalty(0.0, PenaltyNorm::L2) == 0.0);
    CHECK(penalty(-3.0, PenaltyNorm::L1) == 3.0);
    CHECK(penalty(-3.0, PenaltyNorm::L2) == 9.0);
    CHECK(penalty_grad(0.0, PenaltyNorm::L1) == 0.0); // subgradient choice
    CHECK(penalty_grad(-2.0, PenaltyNorm::L1) == -1.0);
    CHECK(penalty_grad(-2.0, PenaltyNorm::L2) == -4.0);
}

TEST_CASE("c3dpo loss composition") {
    ModelPair pair = remark3_pair();
    ConstraintSpec log_l2{PhiKind::Log, PenaltyNorm::L2, 2e-4};
    double loss = c3dpo_loss(pair, 1.0, kRec, Preset::DpoBt, 0.1, log_l2);
    // -log(10/11) + 2e-4 * (log 40)^2
    CHECK(loss == doctest::Approx(0.09803174612972168).epsilon(1e-10));

    // lambda = 0 reduces to the base loss bitwise
    ConstraintSpec off{PhiKind::Identity, PenaltyNorm::L1, 0.0};
    CHECK(c3dpo_loss(pair, 1.0, kRec, Preset::DpoBt, 0.1, off) ==
          preset_loss(pair, 1.0, kRec, Preset::DpoBt));

    // theta == ref: log 2 for every variant
    ModelPair same = ModelPair::from_ref(pair.ref);
    for (PhiKind phi : {PhiKind::Log, PhiKind::Identity})
        for (PenaltyNorm norm : {PenaltyNorm::L1, PenaltyNorm::L2}) {
            ConstraintSpec cons{phi, norm, 0.3};
            CHECK(c3dpo_loss(same, 2.0, kRec, Preset::DpoBt, 0.1, cons) ==
                  doctest::Approx(0.6931471805599453).epsilon(1e-14));
        }

    CHECK_THROWS_AS(
        c3dpo_loss(pair, 1.0, PreferenceRecord::list(0, {0, 1}), Preset::DpoBt, 0.1, log_l2),
        unsupported_form_error);
}

TEST_CASE("c3dpo loss is non-decreasing in lambda at fixed policies") {
    ModelPair pair = remark3_pair();
    for (PhiKind phi : {PhiKind::Log, PhiKind::Identity})
        for (PenaltyNorm norm : {PenaltyNorm::L1, PenaltyNorm::L2}) {
            double prev = -1.0;
            for (double lambda : {0.0, 1e-4, 1e-2, 1.0, 10.0}) {
                double v = c3dpo_loss(pair, 1.0, kRec, Preset::DpoBt, 0.1, {phi, norm, lambda});
                CHECK(v >= prev);
                prev = v;
            }
        }
}

TEST_CASE("implicit-reward form matches the log/l2 composition") {
    ModelPair same = ModelPair::from_ref(remark3_pair().ref);
    CHECK(implicit_reward_form(same, 1.0, kRec, 0.1) ==
          doctest::Approx(0.6931471805599453).epsilon(1e-14));

    Rng rng(55);
    for (int t = 0; t < 1000; ++t) {
        ModelPair pair = random_pair(rng, 4, 0.8);
        double beta = std::exp(rng.next_uniform(std::log(0.1), std::log(5.0)));
        double lambda = std::exp(rng.next_uniform(std::log(1e-4), 0.0));
        double a = implicit_reward_form(pair, beta, kRec, lambda);
        double b = c3dpo_loss(pair, beta, kRec, Preset::DpoBt, 0.1,
                              {PhiKind::Log, PenaltyNorm::L2, lambda});
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }

    // the reward-space penalty coefficient is lambda / beta^2
    ModelPair pair = remark3_pair();
    double r = residual_log(pair, kRec); // rhat_w + rhat_l = beta * r
    double base = preset_loss(pair, 2.0, kRec, Preset::DpoBt);
    double v = implicit_reward_form(pair, 2.0, kRec, 0.04);
    CHECK(v - base == doctest::Approx(0.04 / 4.0 * (2.0 * r) * (2.0 * r)).epsilon(1e-10));
}

