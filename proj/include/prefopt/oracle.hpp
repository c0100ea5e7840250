#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace prefopt {

// One winner/loser reference configuration on the open feasible triangle
// {(q_w, q_l) : q_w, q_l > 0, q_w + q_l < 1}.
struct PairInstance {
    double ref_w = 0.02;
    double ref_l = 0.01;
    double beta = 1.0;
    double eps = 1.0 / 11.0;

    void validate() const;
};

// Slope of the zero-loss line q_w = eta * q_l:
// ((1-eps)/eps)^(1/beta) * ref_w/ref_l.
double eta(const PairInstance& inst);

// Monotone constraint function for the hard-constraint solver. Builtins are
// closed-form; table() interpolates piecewise-linearly and rejects
// non-monotone data.
class Phi {
  public:
    static Phi log();
    static Phi identity();
    static Phi cube();
    static Phi neg_inverse(); // -1/x
    static Phi table(std::vector<double> xs, std::vector<double> ys);

    double operator()(double x) const { return fn_(x); }
    const std::string& name() const { return name_; }

  private:
    Phi(std::string name, std::function<double(double)> fn)
        : name_(std::move(name)), fn_(std::move(fn)) {}
    std::string name_;
    std::function<double(double)> fn_;
};

// Loss landscape over candidate (q_w, q_l); evaluated pointwise by the grid.
using PairLossFn = std::function<double(double q_w, double q_l)>;

// KL form of the soft-label CE for the instance's (1-eps, eps) labels:
// exactly zero on the line q_w = eta * q_l.
PairLossFn soft_label_kl_loss(const PairInstance& inst);

struct GridPoint {
    double q_w = 0.0;
    double q_l = 0.0;
    double loss = 0.0;
};

struct GridSolveOptions {
    int resolution = 1000;      // grid points per axis, >= 100
    double near_opt_tol = 1e-6; // membership threshold above the grid minimum
    int refine_passes = 0;      // extra zoomed passes around the best point
    double q_min = 1e-8;
    double q_max = 1.0 - 1e-8;
    double bisect_tol = 1e-10; // |phi residual| target on constraint rays
};

struct GridSolveResult {
    GridPoint best;                       // refined when refine_passes > 0
    std::vector<GridPoint> near_optimal;  // from the coarsest pass
    double grid_min = 0.0;
};

// Brute-force minimization over a log-spaced feasible grid. Without a
// constraint both axes are gridded; with one, each q_w ray is projected onto
// the constraint curve by bisection (phi monotone) before evaluation.
GridSolveResult grid_solve(const PairLossFn& loss, const Phi* constraint, double constraint_rhs,
                           const GridSolveOptions& opts);

// Convenience: constraint_rhs = phi(ref_w) + phi(ref_l).
GridSolveResult grid_solve_instance(const PairInstance& inst, const PairLossFn& loss,
                                    const Phi* constraint, const GridSolveOptions& opts);

// Independent route to the constrained optimum: 1-D root finding on
// {q_w = eta q_l, phi(q_w) + phi(q_l) = phi(ref_w) + phi(ref_l)}.
struct AnalyticSolution {
    double q_w = 0.0;
    double q_l = 0.0;
};
AnalyticSolution solve_constrained_analytic(const PairInstance& inst, const Phi& phi);

// ---------------------------------------------------------------- remark 3

struct Remark3Case {
    double q_w = 0.0;
    double q_l = 0.0;
    double ratio = 0.0;
    bool on_line = false;
};

struct Remark3Report {
    double eta_value = 0.0;
    std::vector<Remark3Case> cases;
};

// Checks the worked-example candidates against the eta-line: (0.4, 0.02) is
// on it; (0.001, 0.0002) has ratio 5 and is flagged; (0.004, 0.0002) is the
// corrected both-decrease point.
Remark3Report verify_remark3(const PairInstance& inst);

// ------------------------------------------------------------- proposition

struct PropositionTrial {
    PairInstance inst;
    std::string phi_name;
    double q_w = 0.0;
    double q_l = 0.0;
    bool winner_up = false;
    bool loser_down = false;
};

struct PropositionReport {
    int trials = 0;
    int violations = 0;
    std::vector<PropositionTrial> results; // all trials, in order
};

// Random constrained instances, each solved under all four builtin phi;
// passes iff q_w* > ref_w and q_l* < ref_l in every trial.
PropositionReport verify_proposition(int trials, std::uint64_t seed, int resolution = 300,
                                     int refine_passes = 4);

} // namespace prefopt
