#pragma once

// Central-difference gradient verification, run in double precision.
// Relative error uses max(|fd|, |analytic|, 1e-2) as denominator so tiny
// gradients compare on an absolute scale. A failing entry is retried with a
// smaller step: finite differences across a ReLU kink shrink with the step,
// a wrong analytic gradient does not.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fusesr/tensor.hpp"

namespace fusesr {

struct GradcheckReport {
    int checked = 0;
    int failed = 0;
    double max_err = 0.0;
    std::string worst;

    bool ok() const { return failed == 0; }
    void merge(const GradcheckReport& o) {
        checked += o.checked;
        failed += o.failed;
        if (o.max_err > max_err) {
            max_err = o.max_err;
            worst = o.worst;
        }
    }
};

inline double gradcheck_rel_err(double fd, double an) {
    const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-2});
    return std::fabs(fd - an) / denom;
}

// Checks analytic gradients for one parameter tensor against central
// differences of loss_fn. indices selects which elements to probe (empty
// means all). loss_fn must recompute the full forward pass each call.
inline GradcheckReport check_gradient_block(
    const std::string& name, std::vector<double>& values,
    const std::vector<double>& analytic,
    const std::function<double()>& loss_fn,
    const std::vector<int64_t>& indices = {}, double h = 1e-5,
    double tol = 1e-5) {
    GradcheckReport rep;
    std::vector<int64_t> idx = indices;
    if (idx.empty()) {
        idx.resize(values.size());
        for (size_t i = 0; i < values.size(); ++i)
            idx[i] = static_cast<int64_t>(i);
    }
    for (const int64_t i : idx) {
        const double saved = values[static_cast<size_t>(i)];
        auto fd_at = [&](double step) {
            values[static_cast<size_t>(i)] = saved + step;
            const double lp = loss_fn();
            values[static_cast<size_t>(i)] = saved - step;
            const double lm = loss_fn();
            values[static_cast<size_t>(i)] = saved;
            return (lp - lm) / (2.0 * step);
        };
        const double an = analytic[static_cast<size_t>(i)];
        double fd = fd_at(h);
        double err = gradcheck_rel_err(fd, an);
        if (err > tol) {
            // Retry with a smaller step to rule out kink crossings.
            fd = fd_at(h / 8.0);
            err = gradcheck_rel_err(fd, an);
        }
        ++rep.checked;
        if (err > rep.max_err) {
            rep.max_err = err;
            rep.worst = name + "[" + std::to_string(i) + "]";
        }
        if (err > tol) ++rep.failed;
    }
    return rep;
}

inline GradcheckReport check_gradient_block(
    const std::string& name, TensorT<double>& param,
    const TensorT<double>& analytic, const std::function<double()>& loss_fn,
    const std::vector<int64_t>& indices = {}, double h = 1e-5,
    double tol = 1e-5) {
    return check_gradient_block(name, param.data, analytic.data, loss_fn,
                                indices, h, tol);
}

// Deterministic index sample: count elements spread over [0, n).
inline std::vector<int64_t> sample_indices(int64_t n, int count,
                                           uint64_t seed) {
    std::vector<int64_t> idx;
    if (n <= count) {
        idx.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        return idx;
    }
    Rng rng(seed);
    for (int i = 0; i < count; ++i)
        idx.push_back(static_cast<int64_t>(
            rng.uniform_index(static_cast<uint64_t>(n))));
    return idx;
}

// Random projection loss: L = sum(c .* y) with fixed unit-scale c. Gives a
// scalar loss whose output-gradient is c, exercising all output elements.
struct ProjectionLoss {
    TensorT<double> c;

    ProjectionLoss(int64_t b, int64_t ch, int64_t h, int64_t w, uint64_t seed)
        : c(b, ch, h, w) {
        Rng rng(seed);
        const double s = 1.0 / std::sqrt(static_cast<double>(c.numel()));
        for (auto& v : c.data) v = rng.normal() * s;
    }

    double value(const TensorT<double>& y) const {
        require_same_shape("projection_loss", y, c);
        double acc = 0.0;
        for (size_t i = 0; i < y.data.size(); ++i)
            acc += c.data[i] * y.data[i];
        return acc;
    }

    const TensorT<double>& output_grad() const { return c; }
};

}  // namespace fusesr
