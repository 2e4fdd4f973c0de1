#pragma once

// Shared helpers for the unit tests: seeded random tensors and a gradient
// check wrapper around the finite-difference harness.

#include "nigcast/diffkit.hpp"
#include "nigcast/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace nigcast::testkit {

inline diff::Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    diff::Tensor t({rows, cols});
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

/// Max relative error of the analytic gradient against central differences.
inline double grad_error(const diff::Graph& graph, const std::vector<diff::Tensor>& params, double step = 1e-6) {
    const auto report = diff::finite_diff_check(graph, params, step);
    EXPECT_TRUE(report.flagged.empty()) << "finite differences hit a non-finite loss";
    return report.max_rel_error;
}

}  // namespace nigcast::testkit
