// Copyright 2026 The QANA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "qana/tensor.hpp"

namespace qana {

/// Ordered collection of uniquely named parameter tensors.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> value;
    bool trainable = true;
  };

  void add(const std::string& name, BasicTensor<T> value, bool trainable = true) {
    if (index_.contains(name)) throw Error(Errc::invalid_argument, "duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{name, std::move(value), trainable});
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  BasicTensor<T>& get(const std::string& name) { return entries_[locate(name)].value; }
  const BasicTensor<T>& get(const std::string& name) const { return entries_[locate(name)].value; }

  std::span<const T> values(const std::string& name) const { return get(name).data(); }

  bool trainable(const std::string& name) const { return entries_[locate(name)].trainable; }

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t parameter_count(bool trainable_only = false) const {
    std::size_t total = 0;
    for (const auto& e : entries_)
      if (!trainable_only || e.trainable) total += e.value.size();
    return total;
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.trainable);
    return out;
  }

  ParamStore zeros_like() const {
    ParamStore out;
    for (const auto& e : entries_) out.add(e.name, BasicTensor<T>(e.value.shape()), e.trainable);
    return out;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.name != y.name || x.trainable != y.trainable || !(x.value == y.value)) return false;
    }
    return true;
  }

 private:
  std::size_t locate(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw Error(Errc::invalid_argument, "unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace qana
