#include "tables.hpp"

namespace hbayes::kernels::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void syr_scalar(double alpha, const double* x, double* a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double s = alpha * x[j];
    double* col = a + j * n;
    for (std::size_t i = 0; i < n; ++i) col[i] += s * x[i];
  }
}

double quad_form_scalar(const double* a, const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += x[j] * dot_scalar(a + j * n, x, n);
  return acc;
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

const KernelTable kScalarTable{Isa::kScalar,     dot_scalar,       axpy_scalar,
                               syr_scalar,       quad_form_scalar, squared_distance_scalar};

}  // namespace hbayes::kernels::detail
