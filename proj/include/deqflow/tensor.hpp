// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace deqflow {

/// Dense [channels, time] activation for a single example.
struct Tensor {
  int channels = 0;
  int length = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int t, double fill = 0.0)
      : channels(c), length(t), data(static_cast<std::size_t>(c) * static_cast<std::size_t>(t), fill) {}

  double* row(int c) { return data.data() + static_cast<std::size_t>(c) * length; }
  const double* row(int c) const { return data.data() + static_cast<std::size_t>(c) * length; }
  double& at(int c, int t) { return row(c)[t]; }
  double at(int c, int t) const { return row(c)[t]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return channels == o.channels && length == o.length; }
};

/// [C, T] -> [2C, T/2]. Channel c splits into 2c (even times) and 2c+1 (odd).
Tensor squeeze(const Tensor& x);
Tensor unsqueeze(const Tensor& x);

/// Exchanges the front and back channel halves. An involution.
Tensor swap_halves(const Tensor& x);

/// Named contiguous slice of a flat parameter vector.
struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Flat parameter storage. Layers refer to their weights by offset.
class ParamSet {
 public:
  std::size_t add(std::string name, std::size_t size, double fill = 0.0);

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& storage() { return values_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  std::size_t size() const { return values_.size(); }
  const ParamGroup* find(const std::string& name) const;

 private:
  std::vector<double> values_;
  std::vector<ParamGroup> groups_;
};

}  // namespace deqflow
