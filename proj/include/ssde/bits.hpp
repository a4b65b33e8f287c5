#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssde/errors.hpp"

namespace ssde {

/// Fixed-length packed bit vector, 64 bits per word.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t size, bool value = false)
      : size_(size), words_((size + 63) / 64, value ? ~uint64_t{0} : 0) {
    trim();
  }

  static BitVector ones(std::size_t size) { return BitVector(size, true); }

  std::size_t size() const noexcept { return size_; }

  bool get(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1U; }
  bool operator[](std::size_t i) const { return get(i); }

  void set(std::size_t i, bool value = true) {
    const uint64_t bit = uint64_t{1} << (i & 63);
    if (value)
      words_[i >> 6] |= bit;
    else
      words_[i >> 6] &= ~bit;
  }

  std::size_t popcount() const {
    std::size_t n = 0;
    for (uint64_t w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  bool none() const { return popcount() == 0; }
  bool all() const { return popcount() == size_; }

  /// Indices of set bits in increasing order.
  std::vector<int> indices() const {
    std::vector<int> out;
    out.reserve(popcount());
    for (std::size_t w = 0; w < words_.size(); ++w) {
      uint64_t bits = words_[w];
      while (bits) {
        const int b = std::countr_zero(bits);
        out.push_back(static_cast<int>(w * 64 + b));
        bits &= bits - 1;
      }
    }
    return out;
  }

  BitVector& operator|=(const BitVector& other) {
    check_same(other);
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
    return *this;
  }
  BitVector& operator&=(const BitVector& other) {
    check_same(other);
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
    return *this;
  }
  friend BitVector operator|(BitVector a, const BitVector& b) { return a |= b; }
  friend BitVector operator&(BitVector a, const BitVector& b) { return a &= b; }
  BitVector operator~() const {
    BitVector out(*this);
    for (auto& w : out.words_) w = ~w;
    out.trim();
    return out;
  }

  friend bool operator==(const BitVector&, const BitVector&) = default;

  std::span<const uint64_t> words() const { return words_; }
  std::span<uint64_t> words() { return words_; }

  /// "0101..." rendering, index 0 first.
  std::string to_string() const {
    std::string s(size_, '0');
    for (std::size_t i = 0; i < size_; ++i)
      if (get(i)) s[i] = '1';
    return s;
  }

  static BitVector from_string(const std::string& s) {
    BitVector v(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '1')
        v.set(i);
      else if (s[i] != '0')
        throw format_error("bit string contains a character other than 0/1");
    }
    return v;
  }

 private:
  void trim() {
    if (size_ % 64 != 0 && !words_.empty())
      words_.back() &= (uint64_t{1} << (size_ % 64)) - 1;
  }
  void check_same(const BitVector& other) const {
    if (other.size_ != size_) throw invalid_input("bit vector length mismatch");
  }

  std::size_t size_ = 0;
  std::vector<uint64_t> words_;
};

/// Row-major packed bit matrix; each row padded to a whole number of words.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), stride_((cols + 63) / 64), words_(rows * stride_, 0) {}

  /// bits[p][q] = rows[p] AND cols[q].
  static BitMatrix outer(const BitVector& rows, const BitVector& cols) {
    BitMatrix m(rows.size(), cols.size());
    const auto col_words = cols.words();
    for (std::size_t p = 0; p < rows.size(); ++p) {
      if (!rows.get(p)) continue;
      std::copy(col_words.begin(), col_words.end(), m.words_.begin() + p * m.stride_);
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t stride() const noexcept { return stride_; }

  bool get(std::size_t r, std::size_t c) const {
    return (words_[r * stride_ + (c >> 6)] >> (c & 63)) & 1U;
  }
  void set(std::size_t r, std::size_t c, bool value = true) {
    const uint64_t bit = uint64_t{1} << (c & 63);
    auto& w = words_[r * stride_ + (c >> 6)];
    if (value)
      w |= bit;
    else
      w &= ~bit;
  }

  std::size_t popcount() const {
    std::size_t n = 0;
    for (uint64_t w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  BitMatrix& operator|=(const BitMatrix& other) {
    check_same(other);
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
    return *this;
  }
  BitMatrix& operator&=(const BitMatrix& other) {
    check_same(other);
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
    return *this;
  }
  friend BitMatrix operator|(BitMatrix a, const BitMatrix& b) { return a |= b; }
  friend BitMatrix operator&(BitMatrix a, const BitMatrix& b) { return a &= b; }

  /// True if every set bit of `other` is also set here.
  bool contains(const BitMatrix& other) const {
    check_same(other);
    for (std::size_t i = 0; i < words_.size(); ++i)
      if ((other.words_[i] & ~words_[i]) != 0) return false;
    return true;
  }

  friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

  std::span<const uint64_t> words() const { return words_; }
  std::span<uint64_t> words() { return words_; }

 private:
  void check_same(const BitMatrix& other) const {
    if (other.rows_ != rows_ || other.cols_ != cols_)
      throw invalid_input("bit matrix shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t stride_ = 0;
  std::vector<uint64_t> words_;
};

}  // namespace ssde
