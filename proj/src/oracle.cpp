#include "prefopt/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <omp.h>

#include "prefopt/errors.hpp"
#include "prefopt/logspace.hpp"
#include "prefopt/rng.hpp"

namespace prefopt {

void PairInstance::validate() const {
    if (!(ref_w > 0.0 && ref_w < 1.0) || !(ref_l > 0.0 && ref_l < 1.0))
        throw config_error("PairInstance: reference probabilities must lie in (0,1)");
    if (!(ref_w + ref_l <= 1.0))
        throw config_error("PairInstance: ref_w + ref_l must not exceed 1");
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw config_error("PairInstance: beta must be positive");
    if (!(eps > 0.0 && eps < 0.5))
        throw config_error("PairInstance: eps must lie in (0, 1/2)");
}

double eta(const PairInstance& inst) {
    inst.validate();
    return std::pow((1.0 - inst.eps) / inst.eps, 1.0 / inst.beta) * (inst.ref_w / inst.ref_l);
}

// ----------------------------------------------------------------------- phi

Phi Phi::log() {
    return Phi("log", [](double x) { return std::log(x); });
}
Phi Phi::identity() {
    return Phi("identity", [](double x) { return x; });
}
Phi Phi::cube() {
    return Phi("cube", [](double x) { return x * x * x; });
}
Phi Phi::neg_inverse() {
    return Phi("neg_inverse", [](double x) { return -1.0 / x; });
}

Phi Phi::table(std::vector<double> xs, std::vector<double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::domain_error("phi table needs matching xs/ys with at least 2 points");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1]))
            throw std::domain_error("phi table xs must be strictly increasing");
    bool increasing = ys[1] > ys[0];
    for (std::size_t i = 1; i < ys.size(); ++i) {
        bool step_up = ys[i] > ys[i - 1];
        if (ys[i] == ys[i - 1] || step_up != increasing)
            throw std::domain_error("phi table is not strictly monotone");
    }
    auto fn = [xs = std::move(xs), ys = std::move(ys)](double x) {
        if (x <= xs.front())
            return ys.front();
        if (x >= xs.back())
            return ys.back();
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        std::size_t hi = static_cast<std::size_t>(it - xs.begin());
        double t = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
        return ys[hi - 1] + t * (ys[hi] - ys[hi - 1]);
    };
    return Phi("table", std::move(fn));
}

PairLossFn soft_label_kl_loss(const PairInstance& inst) {
    inst.validate();
    const double beta = inst.beta;
    const double eps = inst.eps;
    const double lrw = std::log(inst.ref_w);
    const double lrl = std::log(inst.ref_l);
    const double entropy = -(1.0 - eps) * std::log(1.0 - eps) - eps * std::log(eps);
    return [=](double q_w, double q_l) {
        double z = beta * ((std::log(q_w) - lrw) - (std::log(q_l) - lrl));
        return -(1.0 - eps) * log_sigmoid(z) - eps * log_sigmoid(-z) - entropy;
    };
}

// ---------------------------------------------------------------- grid solve

namespace {

std::vector<double> log_spaced(double lo, double hi, int n) {
    std::vector<double> out(n);
    const double llo = std::log(lo);
    const double lhi = std::log(hi);
    for (int i = 0; i < n; ++i)
        out[i] = std::exp(llo + (lhi - llo) * i / (n - 1));
    out.front() = lo;
    out.back() = hi;
    return out;
}

// Geometric bisection for phi(q) = target on [a, b]; NaN when not bracketed.
double solve_phi_on(const Phi& phi, double target, double a, double b) {
    double fa = phi(a) - target;
    double fb = phi(b) - target;
    if (fa == 0.0)
        return a;
    if (fb == 0.0)
        return b;
    if ((fa > 0.0) == (fb > 0.0))
        return std::numeric_limits<double>::quiet_NaN();
    for (int it = 0; it < 200 && b - a > 1e-16 * b; ++it) {
        double m = std::sqrt(a * b);
        if (!(m > a && m < b))
            break;
        double fm = phi(m) - target;
        if (fm == 0.0)
            return m;
        if ((fm > 0.0) == (fa > 0.0)) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    return std::sqrt(a * b);
}

struct PassResult {
    GridPoint best;
    std::vector<GridPoint> near_optimal;
    double grid_min = std::numeric_limits<double>::infinity();
};

PassResult unconstrained_pass(const PairLossFn& loss, double lo_w, double hi_w, double lo_l,
                              double hi_l, const GridSolveOptions& opts) {
    const int r = opts.resolution;
    std::vector<double> qw = log_spaced(lo_w, hi_w, r);
    std::vector<double> ql = log_spaced(lo_l, hi_l, r);
    std::vector<double> values(static_cast<std::size_t>(r) * r,
                               std::numeric_limits<double>::infinity());
    #pragma omp parallel for schedule(static)
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j) {
            if (qw[i] + ql[j] < 1.0)
                values[static_cast<std::size_t>(i) * r + j] = loss(qw[i], ql[j]);
        }
    }
    PassResult out;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
            double v = values[static_cast<std::size_t>(i) * r + j];
            if (v < out.grid_min) {
                out.grid_min = v;
                out.best = {qw[i], ql[j], v};
            }
        }
    if (!std::isfinite(out.grid_min))
        throw config_error("grid_solve: no feasible grid point");
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
            double v = values[static_cast<std::size_t>(i) * r + j];
            if (v <= out.grid_min + opts.near_opt_tol)
                out.near_optimal.push_back({qw[i], ql[j], v});
        }
    return out;
}

PassResult constrained_pass(const PairLossFn& loss, const Phi& phi, double rhs, double lo_w,
                            double hi_w, double lo_l, double hi_l,
                            const GridSolveOptions& opts) {
    const int r = opts.resolution;
    std::vector<double> qw = log_spaced(lo_w, hi_w, r);
    std::vector<GridPoint> points(r, {0.0, 0.0, std::numeric_limits<double>::infinity()});
    #pragma omp parallel for schedule(static)
    for (int i = 0; i < r; ++i) {
        double cap = 1.0 - qw[i] - 1e-15;
        double hi = std::min(hi_l, cap);
        if (hi <= lo_l)
            continue;
        double q_l = solve_phi_on(phi, rhs - phi(qw[i]), lo_l, hi);
        if (std::isnan(q_l))
            continue;
        points[i] = {qw[i], q_l, loss(qw[i], q_l)};
    }
    PassResult out;
    for (const auto& p : points)
        if (p.loss < out.grid_min) {
            out.grid_min = p.loss;
            out.best = p;
        }
    if (!std::isfinite(out.grid_min))
        throw config_error("grid_solve: constraint curve misses the feasible grid");
    for (const auto& p : points)
        if (p.loss <= out.grid_min + opts.near_opt_tol)
            out.near_optimal.push_back(p);
    return out;
}

} // namespace

GridSolveResult grid_solve(const PairLossFn& loss, const Phi* constraint, double constraint_rhs,
                           const GridSolveOptions& opts) {
    if (opts.resolution < 100)
        throw config_error("grid_solve: resolution must be at least 100 per axis");
    if (!(opts.q_min > 0.0 && opts.q_min < opts.q_max && opts.q_max < 1.0))
        throw config_error("grid_solve: need 0 < q_min < q_max < 1");

    double lo_w = opts.q_min, hi_w = opts.q_max;
    double lo_l = opts.q_min, hi_l = opts.q_max;
    GridSolveResult result;
    for (int pass = 0; pass <= opts.refine_passes; ++pass) {
        PassResult pr = constraint
                            ? constrained_pass(loss, *constraint, constraint_rhs, lo_w, hi_w,
                                               lo_l, hi_l, opts)
                            : unconstrained_pass(loss, lo_w, hi_w, lo_l, hi_l, opts);
        if (pass == 0) {
            result.near_optimal = std::move(pr.near_optimal);
            result.grid_min = pr.grid_min;
        }
        result.best = pr.best;
        if (pass == opts.refine_passes)
            break;
        // zoom: a few grid steps around the best point, clamped to the
        // original range
        double step = (std::log(hi_w) - std::log(lo_w)) / (opts.resolution - 1);
        double w = 4.0 * step;
        lo_w = std::max(opts.q_min, result.best.q_w * std::exp(-w));
        hi_w = std::min(opts.q_max, result.best.q_w * std::exp(w));
        if (!constraint) {
            double step_l = (std::log(hi_l) - std::log(lo_l)) / (opts.resolution - 1);
            double wl = 4.0 * step_l;
            lo_l = std::max(opts.q_min, result.best.q_l * std::exp(-wl));
            hi_l = std::min(opts.q_max, result.best.q_l * std::exp(wl));
        }
    }
    return result;
}

GridSolveResult grid_solve_instance(const PairInstance& inst, const PairLossFn& loss,
                                    const Phi* constraint, const GridSolveOptions& opts) {
    inst.validate();
    double rhs = 0.0;
    if (constraint)
        rhs = (*constraint)(inst.ref_w) + (*constraint)(inst.ref_l);
    return grid_solve(loss, constraint, rhs, opts);
}

AnalyticSolution solve_constrained_analytic(const PairInstance& inst, const Phi& phi) {
    const double e = eta(inst);
    const double rhs = phi(inst.ref_w) + phi(inst.ref_l);
    // phi(eta*q) + phi(q) is strictly monotone in q, so bisect directly.
    double lo = 1e-14;
    double hi = (1.0 - 1e-12) / (1.0 + e);
    auto f = [&](double q) { return phi(e * q) + phi(q) - rhs; };
    double flo = f(lo), fhi = f(hi);
    if ((flo > 0.0) == (fhi > 0.0))
        throw numerical_error("solve_constrained_analytic: root not bracketed");
    for (int it = 0; it < 300 && hi - lo > 1e-17 * hi; ++it) {
        double m = std::sqrt(lo * hi);
        if (!(m > lo && m < hi))
            break;
        double fm = f(m);
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = m;
            flo = fm;
        } else {
            hi = m;
        }
    }
    double q_l = std::sqrt(lo * hi);
    return {e * q_l, q_l};
}

// ------------------------------------------------------------------ remark 3

Remark3Report verify_remark3(const PairInstance& inst) {
    Remark3Report rep;
    rep.eta_value = eta(inst);
    const double candidates[3][2] = {{0.4, 0.02}, {0.001, 0.0002}, {0.004, 0.0002}};
    for (const auto& c : candidates) {
        Remark3Case rc;
        rc.q_w = c[0];
        rc.q_l = c[1];
        rc.ratio = c[0] / c[1];
        rc.on_line = std::fabs(rc.ratio - rep.eta_value) <= 1e-9 * rep.eta_value;
        rep.cases.push_back(rc);
    }
    return rep;
}

// --------------------------------------------------------------- proposition

PropositionReport verify_proposition(int trials, std::uint64_t seed, int resolution,
                                     int refine_passes) {
    if (trials < 1)
        throw config_error("verify_proposition: trials must be positive");
    const Phi phis[4] = {Phi::log(), Phi::identity(), Phi::cube(), Phi::neg_inverse()};
    PropositionReport rep;
    rep.trials = trials * 4;
    rep.results.resize(static_cast<std::size_t>(trials) * 4);

    #pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(t));
        PairInstance inst;
        inst.ref_w = rng.next_uniform(1e-4, 0.4);
        inst.ref_l = rng.next_uniform(1e-4, 0.4);
        inst.beta = rng.next_uniform(0.1, 5.0);
        inst.eps = rng.next_uniform(0.01, 0.45);
        PairLossFn loss = soft_label_kl_loss(inst);
        for (int p = 0; p < 4; ++p) {
            GridSolveOptions opts;
            opts.resolution = resolution;
            opts.refine_passes = refine_passes;
            GridSolveResult res = grid_solve_instance(inst, loss, &phis[p], opts);
            PropositionTrial trial;
            trial.inst = inst;
            trial.phi_name = phis[p].name();
            trial.q_w = res.best.q_w;
            trial.q_l = res.best.q_l;
            trial.winner_up = trial.q_w > inst.ref_w;
            trial.loser_down = trial.q_l < inst.ref_l;
            rep.results[static_cast<std::size_t>(t) * 4 + p] = trial;
        }
    }
    for (const auto& r : rep.results)
        if (!r.winner_up || !r.loser_down)
            ++rep.violations;
    return rep;
}

} // namespace prefopt
