#pragma once

#include <span>

#include "hbayes/model.hpp"

namespace hbayes::detail {

inline std::span<const double> view(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

inline std::span<double> view(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

}  // namespace hbayes::detail
