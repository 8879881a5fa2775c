#include "vifuse/tensor.hpp"

namespace vifuse {

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    check(!consumed_, "tape: backward() called twice on the same tape");
    check(loss.defined() && loss.numel() == 1,
          "tape: backward() needs a scalar loss");
    check(loss.impl()->tape == this && loss.impl()->node >= 0,
          "tape: loss was not recorded on this tape");
    consumed_ = true;
    loss.impl()->grad.assign(1, T(1));
    for (int64_t i = loss.impl()->node; i >= 0; --i) nodes_[static_cast<size_t>(i)]();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace vifuse
