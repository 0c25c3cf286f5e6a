#include "odesurv/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "odesurv/parallel.hpp"

namespace odesurv {

namespace {

struct ObsWork {
    HazardEvaluator ev;
    GradientMode mode;
    const ode::SolverOptions& ode;

    ObsWork(const ModelSpec& spec, const ParamLayout& lay, std::span<const double> flat,
            const ode::SolverOptions& opts)
        : ev(spec, lay), mode(resolve_gradient_mode(spec, lay)), ode(opts) {
        ev.set_params(flat);
    }

    double value(const Observation& o) {
        ev.bind(o);
        double lam = 0;
        if (o.y > 0) {
            ode::IvpProblem p;
            p.rhs = [this](double t, double u) { return ev.eval(t, u).f; };
            p.t_end = o.y;
            lam = ode::solve_ivp(p, ode);
        }
        if (o.delta == 0) return -lam;
        return ev.eval(o.y, lam).psi - lam;
    }

    // Fills row[0..P) and returns the contribution value.
    double value_and_score(const Observation& o, double* row) {
        ev.bind(o);
        auto s = hazard_gradient(ev, o.y, mode, ode);
        const int P = ev.layout().n_free;
        if (o.delta == 0) {
            for (int j = 0; j < P; ++j) row[j] = -s.grad[j];
            return -s.lam_y;
        }
        auto e = ev.eval(o.y, s.lam_y);
        const double gprime = e.df_dlam / e.f;  // g'(lam) at the event
        for (int j = 0; j < P; ++j) row[j] = (gprime - 1.0) * s.grad[j];
        ev.add_dpsi(1.0, row);
        return e.psi - s.lam_y;
    }
};

// Runs per_chunk_fn over [0, n) in parallel; if chunks fail, the failure
// with the smallest observation index wins.
template <typename Fn>
void run_over_obs(const Dataset& data, int workers, const Fn& per_chunk_fn) {
    const int n = data.n();
    const int w_total = std::min(std::max(1, resolve_workers(workers)), std::max(1, n));
    const int chunk = (n + w_total - 1) / w_total;
    std::vector<std::optional<std::pair<int, std::string>>> fail_slots(
        static_cast<std::size_t>(w_total) + 1);
    parallel_chunks(n, w_total, [&](int begin, int end) {
        const int slot = chunk > 0 ? begin / chunk : 0;
        try {
            per_chunk_fn(begin, end);
        } catch (const LoglikError& e) {
            fail_slots[slot] = {e.obs_index, std::string(e.what())};
        }
    });
    std::optional<std::pair<int, std::string>> first;
    for (const auto& f : fail_slots)
        if (f && (!first || f->first < first->first)) first = f;
    if (first) throw LoglikError(first->first, first->second);
}

}  // namespace

double loglik_obs(const Observation& o, const ModelSpec& spec, const ParamLayout& lay,
                  std::span<const double> flat, const ode::SolverOptions& opts) {
    ObsWork w(spec, lay, flat, opts);
    return w.value(o);
}

std::vector<double> score_obs(const Observation& o, const ModelSpec& spec,
                              const ParamLayout& lay, std::span<const double> flat,
                              const ode::SolverOptions& opts) {
    ObsWork w(spec, lay, flat, opts);
    std::vector<double> row(lay.n_free, 0.0);
    w.value_and_score(o, row.data());
    return row;
}

LoglikResult loglik(const Dataset& data, const ModelSpec& spec, const ParamLayout& lay,
                    std::span<const double> flat, const EvalOptions& opts) {
    const int n = data.n();
    const int P = lay.n_free;
    if (n == 0) throw DataError("empty dataset");
    std::vector<double> values(n, 0.0);
    std::vector<double> rows(static_cast<std::size_t>(n) * P, 0.0);

    run_over_obs(data, opts.workers, [&](int begin, int end) {
        ObsWork w(spec, lay, flat, opts.ode);
        for (int i = begin; i < end; ++i) {
            try {
                values[i] = w.value_and_score(data.obs[i],
                                              rows.data() + static_cast<std::size_t>(i) * P);
            } catch (const std::exception& e) {
                throw LoglikError(i, "observation " + std::to_string(i) + ": " + e.what());
            }
        }
    });

    LoglikResult out;
    const double dn = static_cast<double>(n);
    out.value = pairwise_sum(values) / dn;
    out.grad = pairwise_sum_rows(rows, n, P);
    for (double& g : out.grad) g /= dn;
    return out;
}

double loglik_value(const Dataset& data, const ModelSpec& spec, const ParamLayout& lay,
                    std::span<const double> flat, const EvalOptions& opts) {
    const int n = data.n();
    if (n == 0) throw DataError("empty dataset");
    std::vector<double> values(n, 0.0);
    run_over_obs(data, opts.workers, [&](int begin, int end) {
        ObsWork w(spec, lay, flat, opts.ode);
        for (int i = begin; i < end; ++i) {
            try {
                values[i] = w.value(data.obs[i]);
            } catch (const std::exception& e) {
                throw LoglikError(i, "observation " + std::to_string(i) + ": " + e.what());
            }
        }
    });
    return pairwise_sum(values) / static_cast<double>(n);
}

std::vector<double> score_matrix(const Dataset& data, const ModelSpec& spec,
                                 const ParamLayout& lay, std::span<const double> flat,
                                 const EvalOptions& opts) {
    const int n = data.n();
    const int P = lay.n_free;
    std::vector<double> rows(static_cast<std::size_t>(n) * P, 0.0);
    run_over_obs(data, opts.workers, [&](int begin, int end) {
        ObsWork w(spec, lay, flat, opts.ode);
        for (int i = begin; i < end; ++i) {
            try {
                w.value_and_score(data.obs[i], rows.data() + static_cast<std::size_t>(i) * P);
            } catch (const std::exception& e) {
                throw LoglikError(i, "observation " + std::to_string(i) + ": " + e.what());
            }
        }
    });
    return rows;
}

}  // namespace odesurv
