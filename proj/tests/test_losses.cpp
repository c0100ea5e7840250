#include <doctest.h>

#include <cmath>

#include "prefopt/errors.hpp"
#include "prefopt/losses.hpp"
#include "prefopt/logspace.hpp"
#include "prefopt/rng.hpp"

using namespace prefopt;

namespace {

ModelPair remark3_pair() {
    // theta puts (0.4, 0.02) and ref (0.02, 0.01) on the tracked pair
    return ModelPair(PolicyModel::tabular_from_probs({1, 4}, {0.4, 0.02, 0.29, 0.29}),
                     PolicyModel::tabular_from_probs({1, 4}, {0.02, 0.01, 0.48, 0.49}));
}

ModelPair random_pair(Rng& rng, int p, int k, double spread) {
    std::vector<double> ref(static_cast<std::size_t>(p) * k), theta(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        ref[i] = rng.next_normal();
        theta[i] = ref[i] + spread * rng.next_normal();
    }
    return ModelPair(PolicyModel::tabular({p, k}, std::move(theta)),
                     PolicyModel::tabular({p, k}, std::move(ref)));
}

} // namespace

TEST_CASE("classifier probabilities: identical policies give (1/2, 1/2)") {
    Rng rng(41);
    ModelPair pair = random_pair(rng, 1, 4, 0.0);
    ClassProb cp = classifier_prob_pair(pair, 1.7, PreferenceRecord::pair(0, 0, 2));
    CHECK(cp.p_w() == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(cp.p_l() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("classifier probabilities on the worked example: ratios (20, 2) -> 10/11") {
    ModelPair pair = remark3_pair();
    ClassProb cp = classifier_prob_pair(pair, 1.0, PreferenceRecord::pair(0, 0, 1));
    CHECK(cp.p_w() == doctest::Approx(10.0 / 11.0).epsilon(1e-12));
    CHECK(cp.p_l() == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
    CHECK(cp.p_w() + cp.p_l() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pair classifier matches naive exponentiated-ratio evaluation") {
    Rng rng(42);
    for (int t = 0; t < 300; ++t) {
        ModelPair pair = random_pair(rng, 2, 4, 0.7);
        double beta = std::exp(rng.next_uniform(std::log(0.05), std::log(5.0)));
        PreferenceRecord rec = PreferenceRecord::pair(rng.next_index(2), 0, 1);
        ClassProb cp = classifier_prob_pair(pair, beta, rec);
        // naive route: raw probabilities, raw powers
        auto prob = [&](const PolicyModel& m, int y) {
            std::vector<double> z(4);
            m.row_logits(rec.prompt, z);
            double s = 0.0;
            for (double& v : z) {
                v = std::exp(v);
                s += v;
            }
            return z[y] / s;
        };
        double rw = std::pow(prob(pair.theta, rec.winner) / prob(pair.ref, rec.winner), beta);
        double rl = std::pow(prob(pair.theta, rec.loser) / prob(pair.ref, rec.loser), beta);
        if (rw / rl < 1e-3 || rw / rl > 1e3)
            continue;
        CHECK(cp.p_w() == doctest::Approx(rw / (rw + rl)).epsilon(1e-10));
    }
}

TEST_CASE("list classifier: uniform case, pair reduction, naive oracle") {
    Rng rng(43);
    ModelPair same = random_pair(rng, 1, 5, 0.0);
    const int cands3[3] = {0, 2, 4};
    ClassProb cp = classifier_prob_list(same, 2.0, 0, cands3);
    for (double p : cp.probs())
        CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-13));

    ModelPair pair = random_pair(rng, 1, 5, 0.5);
    const int cands2[2] = {1, 3};
    ClassProb lst = classifier_prob_list(pair, 1.3, 0, cands2);
    ClassProb pr = classifier_prob_pair(pair, 1.3, PreferenceRecord::pair(0, 1, 3));
    CHECK(lst.probs()[0] == doctest::Approx(pr.p_w()).epsilon(1e-13));

    for (int t = 0; t < 100; ++t) {
        ModelPair rnd = random_pair(rng, 1, 5, 0.6);
        const int cands5[5] = {0, 1, 2, 3, 4};
        ClassProb c5 = classifier_prob_list(rnd, 0.8, 0, cands5);
        std::vector<double> naive(5);
        double sum = 0.0;
        for (int y = 0; y < 5; ++y) {
            naive[y] = std::exp(0.8 * (rnd.theta.log_prob(0, y) - rnd.ref.log_prob(0, y)));
            sum += naive[y];
        }
        auto probs = c5.probs();
        for (int y = 0; y < 5; ++y)
            CHECK(probs[y] == doctest::Approx(naive[y] / sum).epsilon(1e-10));
    }

    const int dup[3] = {0, 0, 1};
    CHECK_THROWS_AS(classifier_prob_list(pair, 1.0, 0, dup), invalid_record_error);
}

TEST_CASE("make_labels") {
    PreferenceRecord rec = PreferenceRecord::pair(0, 0, 1);
    auto hard = make_labels({LabelKind::Hard, 0.0}, rec);
    CHECK(hard[0] == 1.0);
    CHECK(hard[1] == 0.0);

    auto soft = make_labels({LabelKind::SoftEps, 1.0 / 11.0}, rec);
    CHECK(soft[0] == doctest::Approx(10.0 / 11.0).epsilon(1e-15));
    CHECK(soft[1] == doctest::Approx(1.0 / 11.0).epsilon(1e-15));

    auto ipo = make_labels({LabelKind::Ipo, 0.0}, rec);
    CHECK(ipo[0] == doctest::Approx(0.6224593312018546).epsilon(1e-14));
    CHECK(ipo[1] == doctest::Approx(0.3775406687981454).epsilon(1e-14));

    auto scored =
        make_labels({LabelKind::ScoreDerived, 0.0}, PreferenceRecord::scored_pair(0, 0, 1.5, 1, 1.5));
    CHECK(scored[0] == doctest::Approx(0.5).epsilon(1e-15));

    CHECK_THROWS_AS(make_labels({LabelKind::ScoreDerived, 0.0}, rec), config_error);
    CHECK_THROWS_AS(make_labels({LabelKind::SoftEps, 0.6}, rec), config_error);
}

TEST_CASE("ce_loss basics") {
    ClassProb even{{0.0, 0.0}};
    const double hard[2] = {1.0, 0.0};
    CHECK(ce_loss(even, hard) == doctest::Approx(0.6931471805599453).epsilon(1e-14));

    // hard-label CE is the log-sigmoid of the implicit-reward margin
    Rng rng(44);
    for (int t = 0; t < 200; ++t) {
        double hw = rng.next_uniform(-3.0, 3.0), hl = rng.next_uniform(-3.0, 3.0);
        ClassProb cp{{hw, hl}};
        CHECK(ce_loss(cp, hard) == doctest::Approx(-log_sigmoid(hw - hl)).epsilon(1e-12));
    }
}

TEST_CASE("cross entropy dominates target entropy, equality iff matched") {
    Rng rng(45);
    for (int t = 0; t < 300; ++t) {
        double z = rng.next_uniform(-4.0, 4.0);
        ClassProb cp{{z, 0.0}};
        double tw = rng.next_uniform(0.02, 0.98);
        const double target[2] = {tw, 1.0 - tw};
        double ce = ce_loss(cp, target);
        CHECK(ce >= target_entropy(target) - 1e-10);
        // matched target: excess collapses to zero
        const double matched[2] = {cp.p_w(), cp.p_l()};
        CHECK(std::fabs(ce_excess_loss(cp, matched)) <= 1e-10);
        // and excess is strictly positive away from the match
        if (std::fabs(tw - cp.p_w()) > 1e-3)
            CHECK(ce_excess_loss(cp, target) > 0.0);
    }
}

TEST_CASE("slr_loss") {
    PreferenceRecord rec = PreferenceRecord::pair(0, 0, 1);
    auto ipo = make_labels({LabelKind::Ipo, 0.0}, rec);

    // matched log-odds give zero
    ClassProb matched{{0.5, 0.0}};
    CHECK(slr_loss(matched, ipo) == doctest::Approx(0.0).epsilon(1e-20));

    // equal implicit rewards against the IPO target: (0 - 1/2)^2
    ClassProb even{{0.0, 0.0}};
    CHECK(slr_loss(even, ipo) == doctest::Approx(0.25).epsilon(1e-12));

    ClassProb listform{{0.1, 0.2, 0.3}};
    const double t3[3] = {0.5, 0.3, 0.2};
    CHECK_THROWS_AS(slr_loss(listform, t3), unsupported_form_error);

    const double hard[2] = {1.0, 0.0};
    CHECK_THROWS_AS(slr_loss(even, hard), std::domain_error);
}

TEST_CASE("slr zero iff model and target log-odds agree") {
    Rng rng(46);
    for (int t = 0; t < 200; ++t) {
        double z = rng.next_uniform(-3.0, 3.0);
        ClassProb cp{{z, 0.0}};
        double tw = rng.next_uniform(0.05, 0.95);
        const double target[2] = {tw, 1.0 - tw};
        double loss = slr_loss(cp, target);
        double gap = z - std::log(tw / (1.0 - tw));
        if (std::fabs(gap) < 1e-6)
            CHECK(loss <= 1e-10);
        else
            CHECK(loss > 1e-13);
    }
}

TEST_CASE("list_loss_pl") {
    Rng rng(47);
    // N=2 reduces to hard-label pair CE
    for (int t = 0; t < 50; ++t) {
        ModelPair pair = random_pair(rng, 1, 4, 0.8);
        double pl = list_loss_pl(pair, 1.2, PreferenceRecord::list(0, {2, 0}));
        double ce = preset_loss(pair, 1.2, PreferenceRecord::pair(0, 2, 0), Preset::DpoBt);
        CHECK(pl == doctest::Approx(ce).epsilon(1e-13));
    }

    // identical policies, N=3: log 3 + log 2
    ModelPair same = random_pair(rng, 1, 4, 0.0);
    CHECK(list_loss_pl(same, 3.0, PreferenceRecord::list(0, {0, 1, 2})) ==
          doctest::Approx(1.791759469228055).epsilon(1e-13));

    // random N=4 equals -log of the suffix-softmax product computed naively
    for (int t = 0; t < 100; ++t) {
        ModelPair pair = random_pair(rng, 1, 5, 0.5);
        PreferenceRecord rec = PreferenceRecord::list(0, {3, 0, 4, 1});
        double impl = list_loss_pl(pair, 0.9, rec);
        double product = 1.0;
        for (int start = 0; start + 1 < 4; ++start) {
            double denom = 0.0;
            for (int j = start; j < 4; ++j)
                denom += std::exp(
                    0.9 * (pair.theta.log_prob(0, rec.ranking[j]) - pair.ref.log_prob(0, rec.ranking[j])));
            denom = std::exp(0.9 * (pair.theta.log_prob(0, rec.ranking[start]) -
                                    pair.ref.log_prob(0, rec.ranking[start]))) /
                    denom;
            product *= denom;
        }
        CHECK(impl == doctest::Approx(-std::log(product)).epsilon(1e-10));
    }

    CHECK_THROWS_AS(list_loss_pl(same, 1.0, PreferenceRecord::pair(0, 0, 1)),
                    unsupported_form_error);
}

TEST_CASE("preset table") {
    CHECK(preset(Preset::DpoBt).labels.kind == LabelKind::Hard);
    CHECK(preset(Preset::DpoBt).loss == LossKind::CrossEntropy);
    CHECK(preset(Preset::Cdpo).labels.kind == LabelKind::SoftEps);
    CHECK(preset(Preset::Ipo).loss == LossKind::SquaredLogRatio);
    CHECK(preset(Preset::DpoPl).variant == RecordVariant::List);
    CHECK(preset(Preset::Rpo).labels.kind == LabelKind::ScoreDerived);
    CHECK(preset(Preset::Rpo).loss == LossKind::CrossEntropy);
    CHECK(preset(Preset::DistilledDpo).loss == LossKind::SquaredLogRatio);
    CHECK(preset_from_name("dpo") == Preset::DpoBt);
    CHECK(preset_from_name("distilled_dpo") == Preset::DistilledDpo);
    CHECK_THROWS_AS(preset_from_name("nope"), config_error);
    // scored presets reject unscored records
    Rng rng(48);
    ModelPair pair = random_pair(rng, 1, 3, 0.3);
    CHECK_THROWS_AS(preset_loss(pair, 1.0, PreferenceRecord::pair(0, 0, 1), Preset::Rpo),
                    unsupported_form_error);
}

TEST_CASE("every loss is invariant to shifting both policies' logits per prompt") {
    Rng rng(49);
    ModelPair pair = random_pair(rng, 2, 5, 0.6);
    PreferenceRecord pr = PreferenceRecord::pair(1, 0, 3);
    PreferenceRecord sc = PreferenceRecord::scored_pair(1, 0, 0.8, 3, -0.2);
    PreferenceRecord ls = PreferenceRecord::list(1, {0, 3, 2});

    double before[6] = {preset_loss(pair, 1.5, pr, Preset::DpoBt),
                        preset_loss(pair, 1.5, pr, Preset::Cdpo, 0.1),
                        preset_loss(pair, 1.5, pr, Preset::Ipo),
                        preset_loss(pair, 1.5, ls, Preset::DpoPl),
                        preset_loss(pair, 1.5, sc, Preset::Rpo),
                        preset_loss(pair, 1.5, sc, Preset::DistilledDpo)};
    for (int y = 0; y < 5; ++y) {
        pair.theta.params()[5 + y] += 7.25;
        pair.ref.params()[5 + y] += 7.25;
    }
    double after[6] = {preset_loss(pair, 1.5, pr, Preset::DpoBt),
                       preset_loss(pair, 1.5, pr, Preset::Cdpo, 0.1),
                       preset_loss(pair, 1.5, pr, Preset::Ipo),
                       preset_loss(pair, 1.5, ls, Preset::DpoPl),
                       preset_loss(pair, 1.5, sc, Preset::Rpo),
                       preset_loss(pair, 1.5, sc, Preset::DistilledDpo)};
    for (int i = 0; i < 6; ++i)
        CHECK(std::fabs(after[i] - before[i]) <= 1e-10);
}
