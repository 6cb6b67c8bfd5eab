// SPDX-License-Identifier: Apache-2.0
#include "deqflow/tensor.hpp"

#include <algorithm>

#include "deqflow/error.hpp"

namespace deqflow {

Tensor squeeze(const Tensor& x) {
  if (x.length % 2 != 0) {
    fail(ErrorKind::Shape, "squeeze needs an even time length, got " + std::to_string(x.length));
  }
  Tensor out(2 * x.channels, x.length / 2);
  for (int c = 0; c < x.channels; ++c) {
    const double* src = x.row(c);
    double* even = out.row(2 * c);
    double* odd = out.row(2 * c + 1);
    for (int t = 0; t < out.length; ++t) {
      even[t] = src[2 * t];
      odd[t] = src[2 * t + 1];
    }
  }
  return out;
}

Tensor unsqueeze(const Tensor& x) {
  if (x.channels % 2 != 0) fail(ErrorKind::Shape, "unsqueeze needs an even channel count");
  Tensor out(x.channels / 2, x.length * 2);
  for (int c = 0; c < out.channels; ++c) {
    const double* even = x.row(2 * c);
    const double* odd = x.row(2 * c + 1);
    double* dst = out.row(c);
    for (int t = 0; t < x.length; ++t) {
      dst[2 * t] = even[t];
      dst[2 * t + 1] = odd[t];
    }
  }
  return out;
}

Tensor swap_halves(const Tensor& x) {
  if (x.channels % 2 != 0) fail(ErrorKind::Shape, "swap needs an even channel count");
  Tensor out(x.channels, x.length);
  const std::size_t half = x.data.size() / 2;
  std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(half), x.data.end(), out.data.begin());
  std::copy(x.data.begin(), x.data.begin() + static_cast<std::ptrdiff_t>(half),
            out.data.begin() + static_cast<std::ptrdiff_t>(half));
  return out;
}

std::size_t ParamSet::add(std::string name, std::size_t size, double fill) {
  const std::size_t offset = values_.size();
  values_.resize(offset + size, fill);
  groups_.push_back({std::move(name), offset, size});
  return offset;
}

const ParamGroup* ParamSet::find(const std::string& name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

}  // namespace deqflow
