#pragma once

// Central-difference gradient verification. The checker is independent of
// the backward rules it validates: it re-evaluates the forward pass under
// coordinate perturbations and compares against the taped gradients.

#include <functional>
#include <vector>

#include "vqr/tensor.hpp"

namespace vqr::gradcheck {

/// Max over all entries of all leaves of
/// |analytic - (f(x+h) - f(x-h)) / 2h| / max(1, |analytic|).
/// `build` must construct a scalar loss on the tape from the leaves' current
/// values.
double max_rel_fd_error(const std::function<Tensor(Tape&)>& build, std::vector<Tensor> leaves,
                        double h = 1e-5);

struct Report {
  double max_rel_error = 0;
  int coordinates = 0;  // perturbed entries
  int seeds = 0;
};

/// Exhaustive finite-difference check of a small full model (every layer on,
/// every parameter coordinate perturbed), repeated across seeds.
Report check_full_model(int seeds);

/// Per-operation sweep over the autodiff primitives with random inputs.
Report check_operations(int seeds);

}  // namespace vqr::gradcheck
