#pragma once

#include <bit>
#include <cstdint>
#include <vector>

namespace mtqsar {

// Fixed-width packed bit set. Width is established at construction and all
// set-bit indices stay below it.
class BitVec {
 public:
  BitVec() = default;
  explicit BitVec(int width) : width_(width), words_((width + 63) / 64, 0) {}

  int width() const { return width_; }

  void set(int i) { words_[std::size_t(i) >> 6] |= (1ULL << (i & 63)); }
  bool test(int i) const {
    return (words_[std::size_t(i) >> 6] >> (i & 63)) & 1ULL;
  }

  int popcount() const {
    int n = 0;
    for (std::uint64_t w : words_) n += std::popcount(w);
    return n;
  }

  std::vector<int> set_bits() const {
    std::vector<int> out;
    for (std::size_t wi = 0; wi < words_.size(); ++wi) {
      std::uint64_t w = words_[wi];
      while (w) {
        const int b = std::countr_zero(w);
        out.push_back(int(wi * 64) + b);
        w &= w - 1;
      }
    }
    return out;
  }

  const std::vector<std::uint64_t>& words() const { return words_; }
  std::vector<std::uint64_t>& words() { return words_; }

  friend bool operator==(const BitVec&, const BitVec&) = default;

  static int intersection_size(const BitVec& a, const BitVec& b) {
    int n = 0;
    for (std::size_t i = 0; i < a.words_.size(); ++i)
      n += std::popcount(a.words_[i] & b.words_[i]);
    return n;
  }

 private:
  int width_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace mtqsar
