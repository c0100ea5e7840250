// Timing comparison of the serial reference kernels against the OpenMP
// paths: batch loss+gradient evaluation and the feasible-grid solver.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include <omp.h>

#include "prefopt/batch.hpp"
#include "prefopt/oracle.hpp"
#include "prefopt/rng.hpp"

using namespace prefopt;

namespace {

double time_best_of(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (s < best)
            best = s;
    }
    return best;
}

} // namespace

int main(int argc, char** argv) {
    int prompts = argc > 1 ? std::atoi(argv[1]) : 256;
    int k = argc > 2 ? std::atoi(argv[2]) : 16;
    int n_records = argc > 3 ? std::atoi(argv[3]) : 100000;
    int reps = 5;

    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("model: tabular %dx%d, records: %d\n\n", prompts, k, n_records);

    Rng rng(12345);
    PromptSpace space{prompts, k};
    std::vector<double> ref_logits(static_cast<std::size_t>(prompts) * k);
    for (double& v : ref_logits)
        v = rng.next_normal();
    std::vector<double> theta_logits = ref_logits;
    for (double& v : theta_logits)
        v += 0.3 * rng.next_normal();
    ModelPair pair(PolicyModel::tabular(space, theta_logits),
                   PolicyModel::tabular(space, ref_logits));

    std::vector<PreferenceRecord> records;
    records.reserve(n_records);
    for (int i = 0; i < n_records; ++i) {
        int x = rng.next_index(prompts);
        int w = rng.next_index(k);
        int l = rng.next_index(k - 1);
        if (l >= w)
            ++l;
        records.push_back(PreferenceRecord::pair(x, w, l));
    }
    std::vector<int> all(n_records);
    for (int i = 0; i < n_records; ++i)
        all[i] = i;

    RefLogProbs cache = RefLogProbs::compute(pair.ref);
    std::vector<double> grad(pair.theta.param_count(), 0.0);

    for (const char* name : {"dpo", "c3dpo_log_l2"}) {
        LossSpec spec = LossSpec::from_name(name);
        spec.beta = 0.5;
        double serial = time_best_of(reps, [&] {
            batch_loss_grad(pair, records, all, spec, grad, Exec::Serial, &cache);
        });
        double parallel = time_best_of(reps, [&] {
            batch_loss_grad(pair, records, all, spec, grad, Exec::Parallel, &cache);
        });
        std::printf("batch_loss_grad %-14s serial %8.2f ms   openmp %8.2f ms   speedup %.2fx\n",
                    name, serial * 1e3, parallel * 1e3, serial / parallel);
    }

    PairInstance inst{0.02, 0.01, 1.0, 1.0 / 11.0};
    PairLossFn loss = soft_label_kl_loss(inst);
    GridSolveOptions opts;
    opts.resolution = 2000;
    {
        int saved = omp_get_max_threads();
        double parallel =
            time_best_of(reps, [&] { grid_solve_instance(inst, loss, nullptr, opts); });
        omp_set_num_threads(1);
        double serial =
            time_best_of(reps, [&] { grid_solve_instance(inst, loss, nullptr, opts); });
        omp_set_num_threads(saved);
        std::printf("grid_solve 2000x2000        serial %8.2f ms   openmp %8.2f ms   speedup %.2fx\n",
                    serial * 1e3, parallel * 1e3, serial / parallel);
    }
    return 0;
}
