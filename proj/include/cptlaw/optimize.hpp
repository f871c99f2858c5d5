#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <span>
#include <vector>

namespace cptlaw {

struct BoxLbfgsOptions {
    int max_iters = 2000;
    double grad_tol = 1e-10; // inf-norm of the projected gradient
    double f_tol = 1e-14;    // relative per-iteration objective decrease
    int memory = 10;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    int max_line_evals = 60;
};

enum class OptStatus {
    grad_converged,
    f_converged,
    max_iters,
    line_search_failed,
    non_finite,
};

struct BoxLbfgsResult {
    std::vector<double> x;
    std::vector<double> grad;
    double f = std::numeric_limits<double>::quiet_NaN();
    double pg_inf = std::numeric_limits<double>::quiet_NaN();
    int iters = 0;
    int n_evals = 0;
    OptStatus status = OptStatus::non_finite;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline void clamp_into_box(std::vector<double>& x, std::span<const double> lo,
                           std::span<const double> hi) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
}

// Gradient with components zeroed where the box blocks descent.
inline void projected_gradient(std::span<const double> x, std::span<const double> g,
                               std::span<const double> lo, std::span<const double> hi,
                               std::vector<double>& pg) {
    pg.assign(g.begin(), g.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) pg[i] = 0.0;
    }
}

struct LbfgsMemory {
    std::deque<std::vector<double>> s, y;
    std::deque<double> rho;
    double gamma = 1.0;

    void clear() {
        s.clear();
        y.clear();
        rho.clear();
        gamma = 1.0;
    }

    void push(std::vector<double> si, std::vector<double> yi, int cap) {
        const double sy = dot(si, yi);
        const double yy = dot(yi, yi);
        if (!(sy > 0.0) || !(yy > 0.0)) return;
        gamma = std::clamp(sy / yy, 1e-12, 1e12);
        s.push_back(std::move(si));
        y.push_back(std::move(yi));
        rho.push_back(1.0 / sy);
        while (static_cast<int>(s.size()) > cap) {
            s.pop_front();
            y.pop_front();
            rho.pop_front();
        }
    }

    // Two-loop recursion: d = -H q.
    void direction(std::span<const double> q, std::vector<double>& d) const {
        d.assign(q.begin(), q.end());
        const int k = static_cast<int>(s.size());
        std::vector<double> alpha(k);
        for (int j = k - 1; j >= 0; --j) {
            alpha[j] = rho[j] * dot(s[j], d);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= alpha[j] * y[j][i];
        }
        for (double& v : d) v *= gamma;
        for (int j = 0; j < k; ++j) {
            const double beta = rho[j] * dot(y[j], d);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += (alpha[j] - beta) * s[j][i];
        }
        for (double& v : d) v = -v;
    }
};

} // namespace detail

// Limited-memory quasi-Newton minimizer over a box. Search directions come
// from the two-loop recursion restricted to coordinates the box does not
// block; steps use a strong-Wolfe line search truncated at the first bound
// crossing. Fully deterministic for a given callback and start.
//
// FG signature: double fg(std::span<const double> x, std::span<double> grad_out)
template <class FG>
BoxLbfgsResult box_lbfgs(FG&& fg, std::span<const double> lo, std::span<const double> hi,
                         std::vector<double> x0, const BoxLbfgsOptions& opts = {}) {
    const std::size_t n = x0.size();
    BoxLbfgsResult res;
    detail::clamp_into_box(x0, lo, hi);

    std::vector<double> x = std::move(x0);
    std::vector<double> g(n), pg(n), d(n), x_trial(n), g_trial(n);
    double f = fg(x, g);
    res.n_evals = 1;
    if (!std::isfinite(f)) {
        res.x = x;
        res.grad = g;
        res.f = f;
        res.status = OptStatus::non_finite;
        return res;
    }

    detail::LbfgsMemory mem;
    res.status = OptStatus::max_iters;
    int stall_count = 0;

    auto finish = [&](OptStatus status) {
        detail::projected_gradient(x, g, lo, hi, pg);
        res.x = x;
        res.grad = g;
        res.f = f;
        res.pg_inf = detail::inf_norm(pg);
        res.status = status;
    };

    // Evaluates f and the directional derivative along d at x + a*d.
    auto eval_step = [&](double a, double& df_out) {
        for (std::size_t i = 0; i < n; ++i) x_trial[i] = x[i] + a * d[i];
        detail::clamp_into_box(x_trial, lo, hi);
        const double ft = fg(x_trial, g_trial);
        ++res.n_evals;
        df_out = detail::dot(g_trial, d);
        return ft;
    };

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        res.iters = iter;
        detail::projected_gradient(x, g, lo, hi, pg);
        if (detail::inf_norm(pg) <= opts.grad_tol) {
            finish(OptStatus::grad_converged);
            res.iters = iter;
            return res;
        }

        bool used_fallback = false;
        const bool was_steepest = mem.s.empty();
        mem.direction(pg, d);
        for (int attempt = 0; attempt < 2; ++attempt) {
            // Zero components that would immediately leave the box.
            for (std::size_t i = 0; i < n; ++i) {
                if ((x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0)) d[i] = 0.0;
            }
            double df0 = detail::dot(g, d);
            if (df0 < 0.0) break;
            // Not a descent direction: drop memory, fall back to -pg.
            mem.clear();
            for (std::size_t i = 0; i < n; ++i) d[i] = -pg[i];
            used_fallback = true;
        }
        double df0 = detail::dot(g, d);
        if (!(df0 < 0.0)) {
            finish(OptStatus::line_search_failed);
            return res;
        }

        // Largest step before a bound crossing.
        double a_cap = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (d[i] > 0.0)
                a_cap = std::min(a_cap, (hi[i] - x[i]) / d[i]);
            else if (d[i] < 0.0)
                a_cap = std::min(a_cap, (lo[i] - x[i]) / d[i]);
        }
        if (!(a_cap > 0.0)) {
            finish(OptStatus::line_search_failed);
            return res;
        }

        // Strong Wolfe line search on phi(a) = f(x + a*d), truncated at a_cap.
        const double c1 = opts.wolfe_c1, c2 = opts.wolfe_c2;
        double a_prev = 0.0, f_prev = f;
        double a = std::min(1.0, a_cap);
        double a_best = 0.0, f_best = f; // best Armijo point seen
        double a_lo = -1.0, f_lo = 0.0, a_hi = -1.0;
        bool accepted = false, bracketed = false;
        double f_acc = 0.0;
        int evals = 0;

        while (evals < opts.max_line_evals) {
            double df_a;
            const double f_a = eval_step(a, df_a);
            ++evals;
            const bool armijo = std::isfinite(f_a) && f_a <= f + c1 * a * df0;
            if (armijo && f_a < f_best) {
                a_best = a;
                f_best = f_a;
            }
            if (!std::isfinite(f_a) || !armijo || (a_prev > 0.0 && f_a >= f_prev)) {
                a_lo = a_prev;
                f_lo = f_prev;
                a_hi = a;
                bracketed = true;
                break;
            }
            if (std::abs(df_a) <= -c2 * df0) {
                accepted = true;
                f_acc = f_a;
                break;
            }
            if (df_a >= 0.0) {
                a_lo = a;
                f_lo = f_a;
                a_hi = a_prev;
                bracketed = true;
                break;
            }
            if (a >= a_cap * (1.0 - 1e-12)) {
                // Bound-limited step; Armijo held, take it.
                accepted = true;
                f_acc = f_a;
                break;
            }
            a_prev = a;
            f_prev = f_a;
            a = std::min(2.0 * a, a_cap);
        }

        if (!accepted && bracketed) {
            // Zoom by bisection.
            while (evals < opts.max_line_evals) {
                const double aj = 0.5 * (a_lo + a_hi);
                if (!(std::abs(a_hi - a_lo) > 1e-16 * std::max(1.0, std::abs(a_lo)))) break;
                double df_j;
                const double f_j = eval_step(aj, df_j);
                ++evals;
                const bool armijo = std::isfinite(f_j) && f_j <= f + c1 * aj * df0;
                if (armijo && f_j < f_best) {
                    a_best = aj;
                    f_best = f_j;
                }
                if (!std::isfinite(f_j) || !armijo || f_j >= f_lo) {
                    a_hi = aj;
                    continue;
                }
                if (std::abs(df_j) <= -c2 * df0) {
                    accepted = true;
                    a = aj;
                    f_acc = f_j;
                    break;
                }
                if (df_j * (a_hi - a_lo) >= 0.0) a_hi = a_lo;
                a_lo = aj;
                f_lo = f_j;
            }
        }

        if (!accepted && a_best > 0.0) {
            // Wolfe curvature unattainable within budget; keep the best
            // sufficient-decrease point so progress stays monotone.
            accepted = true;
            a = a_best;
            f_acc = f_best;
        }

        if (!accepted) {
            if (used_fallback || was_steepest) {
                finish(OptStatus::line_search_failed);
                return res;
            }
            // Retry the whole iteration from steepest descent.
            mem.clear();
            continue;
        }

        // Recompute the accepted point (x_trial/g_trial may hold a later probe).
        for (std::size_t i = 0; i < n; ++i) x_trial[i] = x[i] + a * d[i];
        detail::clamp_into_box(x_trial, lo, hi);
        const double f_new = fg(x_trial, g_trial);
        ++res.n_evals;
        (void)f_acc;

        std::vector<double> s(n), yv(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = x_trial[i] - x[i];
            yv[i] = g_trial[i] - g[i];
        }
        const double sy = detail::dot(s, yv);
        const double s2 = std::sqrt(detail::dot(s, s));
        const double y2 = std::sqrt(detail::dot(yv, yv));
        if (sy > 1e-10 * s2 * y2) mem.push(std::move(s), std::move(yv), opts.memory);

        const double f_old = f;
        x.swap(x_trial);
        g.swap(g_trial);
        f = f_new;

        if (f_old - f <= opts.f_tol * std::max({1.0, std::abs(f_old), std::abs(f)})) {
            if (++stall_count >= 2) {
                finish(OptStatus::f_converged);
                res.iters = iter + 1;
                return res;
            }
        } else {
            stall_count = 0;
        }
    }

    res.iters = opts.max_iters;
    finish(OptStatus::max_iters);
    return res;
}

} // namespace cptlaw
