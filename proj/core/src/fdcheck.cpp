#include "vifuse/fdcheck.hpp"

#include <algorithm>
#include <cmath>

namespace vifuse {

FdResult fd_check(const std::function<Tensor<double>()>& build,
                  const std::vector<Tensor<double>>& leaves, double eps) {
    for (const auto& l : leaves)
        check(l.defined() && l.requires_grad(), "fd_check: leaves must require grad");

    std::vector<std::vector<double>> analytic;
    {
        Tape<double> tape;
        Tape<double>::Scope scope(tape);
        Tensor<double> loss = build();
        tape.backward(loss);
        for (const auto& l : leaves) {
            if (l.grad().empty())
                analytic.emplace_back(static_cast<size_t>(l.numel()), 0.0);
            else
                analytic.push_back(l.grad());
        }
    }
    for (const auto& l : leaves) l.impl()->grad.clear();

    FdResult res;
    for (size_t k = 0; k < leaves.size(); ++k) {
        Tensor<double> leaf = leaves[k];
        for (int64_t i = 0; i < leaf.numel(); ++i) {
            const double saved = leaf.data()[i];
            leaf.data()[i] = saved + eps;
            const double lp = build().item();
            leaf.data()[i] = saved - eps;
            const double lm = build().item();
            leaf.data()[i] = saved;
            check(std::isfinite(lp) && std::isfinite(lm),
                  "fd_check: non-finite loss at " + std::to_string(k) + "[" +
                      std::to_string(i) + "]");
            const double numeric = (lp - lm) / (2.0 * eps);
            const double a = analytic[k][static_cast<size_t>(i)];
            const double abs_err = std::fabs(a - numeric);
            // The floor keeps central-difference cancellation noise (~1e-11
            // on an O(1) loss) from registering as a large relative error at
            // coordinates whose true gradient is zero.
            const double rel =
                abs_err / std::max({std::fabs(a), std::fabs(numeric), 1e-5});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "leaf" + std::to_string(k) + "[" + std::to_string(i) + "]";
            }
            res.max_abs_err = std::max(res.max_abs_err, abs_err);
        }
    }
    return res;
}

}  // namespace vifuse
