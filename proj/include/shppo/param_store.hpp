#pragma once

#include <map>
#include <string>
#include <vector>

#include "shppo/tensor.hpp"

namespace shppo {

struct ParamEntry {
  Tensor value;
  Tensor grad;
};

/// Named parameter arrays with paired gradient accumulators. Iteration is
/// lexicographic by name; entry addresses are stable across insertions.
class ParamStore {
 public:
  using Map = std::map<std::string, ParamEntry>;

  Tensor& add(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  ParamEntry& entry(const std::string& name);
  const ParamEntry& entry(const std::string& name) const;
  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }
  const Tensor& grad(const std::string& name) const { return entry(name).grad; }

  void zero_grad();
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;
  std::vector<std::string> names() const;

  /// Largest |grad| entry over all parameters.
  double grad_max_abs() const;
  double grad_l2() const;

  /// Copies `other` into this store under `prefix + name`.
  void merge(const ParamStore& other, const std::string& prefix);
  /// Entries whose names start with `prefix`, with the prefix stripped.
  ParamStore extract(const std::string& prefix) const;

  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

 private:
  Map entries_;
};

/// True when every value in `a` and `b` is bit-identical and names/shapes match.
bool values_equal(const ParamStore& a, const ParamStore& b);

}  // namespace shppo
