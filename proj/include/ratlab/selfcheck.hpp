#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "ratlab/autodiff.hpp"

namespace ratlab {

struct GradCheckResult {
    double max_rel_err = 0.0;  // per input: ||analytic - numeric|| / max(||analytic||, ||numeric||)
    std::size_t entries = 0;
};

using GraphFunction = std::function<ad::Var(ad::Graph&, std::span<const ad::Var>)>;

// Central differences of a scalar-valued recorded function against its
// reverse-mode gradient, for every entry of every input.
GradCheckResult gradcheck(const GraphFunction& f, const std::vector<Tensor>& inputs,
                          double h = 1e-6);

// Runs the built-in invariant checks, one line per check. True if all pass.
bool run_selfcheck(std::ostream& os);

}  // namespace ratlab
