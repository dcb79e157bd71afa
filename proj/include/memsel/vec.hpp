#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ranges>
#include <span>
#include <string>
#include <vector>

#include "memsel/error.hpp"

namespace memsel {

// Embeddings live in memory as f32, matching the on-disk payload.
using Embedding = std::vector<float>;

template <typename R>
concept NumericRange = std::ranges::random_access_range<R> && std::ranges::sized_range<R> &&
                       std::is_arithmetic_v<std::ranges::range_value_t<R>>;

// Dot products and norms accumulate in double, left to right. The k-NN
// exactness guarantee relies on this summation order being fixed.
template <NumericRange A, NumericRange B>
double dot(const A& a, const B& b) {
  const auto n = std::ranges::size(a);
  double acc = 0.0;
  auto ia = std::ranges::begin(a);
  auto ib = std::ranges::begin(b);
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(ia[i]) * static_cast<double>(ib[i]);
  return acc;
}

template <NumericRange A>
double l2_norm(const A& a) {
  return std::sqrt(dot(a, a));
}

template <NumericRange A>
bool all_finite(const A& a) {
  for (auto v : a)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

/// Cosine similarity in [-1, 1]. Symmetric and invariant to positive scaling.
template <NumericRange A, NumericRange B>
double cosine(const A& a, const B& b) {
  if (std::ranges::size(a) != std::ranges::size(b))
    throw Error(ErrorCode::DimMismatch, "cosine over dims " + std::to_string(std::ranges::size(a)) +
                                            " and " + std::to_string(std::ranges::size(b)));
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

/// Returns a/|a| in f32. Throws ZeroVector when |a| = 0.
template <NumericRange A>
Embedding normalized(const A& a) {
  const double n = l2_norm(a);
  if (n == 0.0) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  Embedding out;
  out.reserve(std::ranges::size(a));
  for (auto v : a) out.push_back(static_cast<float>(static_cast<double>(v) / n));
  return out;
}

}  // namespace memsel
