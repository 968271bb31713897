#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "exmarket/rng.hpp"

namespace exmarket {

/// Walker/Vose alias table over a fixed weight vector; one 64-bit draw per
/// sample. Equal weights short-circuit to a plain uniform index.
class AliasTable {
 public:
  AliasTable() = default;

  explicit AliasTable(std::span<const double> weights) { build(weights); }

  std::size_t size() const noexcept { return size_; }
  double total() const noexcept { return total_; }
  bool empty() const noexcept { return size_ == 0 || total_ <= 0.0; }

  template <class Rng>
  std::size_t sample(Rng& rng) const noexcept {
    const std::uint64_t r = rng();
    if (uniform_) return static_cast<std::size_t>((static_cast<unsigned __int128>(r) * size_) >> 64);
    // high bits pick the column, low 32 bits the coin
    const auto col = static_cast<std::size_t>(
        (static_cast<unsigned __int128>(r >> 32) * size_) >> 32);
    const double coin = static_cast<double>(r & 0xFFFFFFFFULL) * 0x1.0p-32;
    return coin < prob_[col] ? col : alias_[col];
  }

  double weight_fraction(std::size_t i) const { return weights_.at(i) / total_; }

 private:
  void build(std::span<const double> weights) {
    size_ = weights.size();
    weights_.assign(weights.begin(), weights.end());
    total_ = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("alias weights must be >= 0");
      total_ += w;
    }
    if (size_ == 0 || total_ <= 0.0) return;
    uniform_ = true;
    for (double w : weights)
      if (w != weights.front()) uniform_ = false;
    if (uniform_) return;

    prob_.assign(size_, 0.0);
    alias_.assign(size_, 0);
    std::vector<double> scaled(size_);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < size_; ++i) {
      scaled[i] = weights[i] * static_cast<double>(size_) / total_;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const std::size_t s = small.back();
      small.pop_back();
      const std::size_t l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] -= 1.0 - scaled[s];
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (std::size_t i : large) {
      prob_[i] = 1.0;
      alias_[i] = i;
    }
    for (std::size_t i : small) {  // round-off leftovers
      prob_[i] = 1.0;
      alias_[i] = i;
    }
  }

  std::size_t size_ = 0;
  double total_ = 0.0;
  bool uniform_ = false;
  std::vector<double> weights_;
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

/// O(1) insert/erase/uniform-pick set over agent indices [0, n).
class IndexSet {
 public:
  static constexpr std::uint32_t kAbsent = 0xFFFFFFFFu;

  IndexSet() = default;
  explicit IndexSet(std::size_t universe) : pos_(universe, kAbsent) {}

  std::size_t size() const noexcept { return members_.size(); }
  bool contains(std::size_t i) const noexcept { return pos_[i] != kAbsent; }

  void insert(std::size_t i) {
    if (pos_[i] != kAbsent) return;
    pos_[i] = static_cast<std::uint32_t>(members_.size());
    members_.push_back(static_cast<std::uint32_t>(i));
  }

  void erase(std::size_t i) {
    const std::uint32_t p = pos_[i];
    if (p == kAbsent) return;
    const std::uint32_t last = members_.back();
    members_[p] = last;
    pos_[last] = p;
    members_.pop_back();
    pos_[i] = kAbsent;
  }

  template <class Rng>
  std::size_t pick(Rng& rng) const noexcept {
    return members_[uniform_index(rng, members_.size())];
  }

 private:
  std::vector<std::uint32_t> members_;
  std::vector<std::uint32_t> pos_;
};

}  // namespace exmarket
