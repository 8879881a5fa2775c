#pragma once

#include <functional>

#include "vifuse/tensor.hpp"

namespace vifuse {

struct FdResult {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::string worst;  // "leaf<k>[i]" of the worst element
};

// Central-difference check of reverse-mode gradients, double precision only.
// `build` must rebuild the graph from the leaf values and return a scalar
// loss; it is re-evaluated with perturbed leaves, so it has to read the leaf
// tensors it was given (not copies).
FdResult fd_check(const std::function<Tensor<double>()>& build,
                  const std::vector<Tensor<double>>& leaves, double eps = 1e-5);

}  // namespace vifuse
