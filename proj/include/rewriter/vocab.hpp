#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "rewriter/error.hpp"

namespace rewriter {

// Token <-> id map with a fixed reserved prefix. Insertion order is the id
// order, so vocabularies built from the same corpus are identical.
class Vocab {
 public:
  explicit Vocab(std::vector<std::string> reserved = {}) {
    for (auto& r : reserved) add(r);
  }

  int add(const std::string& tok) {
    auto it = ids_.find(tok);
    if (it != ids_.end()) return it->second;
    int id = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
    ids_.emplace(tok, id);
    return id;
  }

  int id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? -1 : it->second;
  }

  int id_or(const std::string& tok, int fallback) const {
    int i = id(tok);
    return i < 0 ? fallback : i;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw UsageError("vocab id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace rewriter
