#include "shppo/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace shppo {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (name.empty()) throw ContractError("parameter name must be non-empty");
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  Tensor grad(init.shape());
  auto [it, _] = entries_.emplace(name, ParamEntry{std::move(init), std::move(grad)});
  return it->second.value;
}

ParamEntry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) e.grad.fill(0.0);
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.numel();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

double ParamStore::grad_max_abs() const {
  double m = 0.0;
  for (const auto& [_, e] : entries_)
    for (double g : e.grad.span()) m = std::max(m, std::abs(g));
  return m;
}

double ParamStore::grad_l2() const {
  double s = 0.0;
  for (const auto& [_, e] : entries_)
    for (double g : e.grad.span()) s += g * g;
  return std::sqrt(s);
}

void ParamStore::merge(const ParamStore& other, const std::string& prefix) {
  for (const auto& [name, e] : other) add(prefix + name, e.value);
}

ParamStore ParamStore::extract(const std::string& prefix) const {
  ParamStore out;
  for (const auto& [name, e] : entries_) {
    if (name.rfind(prefix, 0) == 0) out.add(name.substr(prefix.size()), e.value);
  }
  return out;
}

bool values_equal(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    const Tensor& va = ia->second.value;
    const Tensor& vb = ib->second.value;
    if (va.shape() != vb.shape()) return false;
    if (std::memcmp(va.data(), vb.data(), va.numel() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace shppo
