#pragma once

// Dense inner-loop kernels used by the inference and prediction paths.
//
// Every kernel has a portable scalar reference implementation and, on
// x86-64, an AVX2/FMA variant. The variant is chosen once at runtime from
// CPUID (override with HBAYES_ISA=scalar|avx2 or set_isa()). Variants agree
// with the reference up to floating-point reassociation.
//
// Matrices are dense n*n blocks; the kernels only touch symmetric
// quantities, so storage order does not matter.

#include <cstddef>
#include <span>
#include <string_view>

namespace hbayes::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // a += alpha * x x^T
  void (*syr)(double alpha, const double* x, double* a, std::size_t n);
  // x^T a x
  double (*quad_form)(const double* a, const double* x, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_table();

bool isa_supported(Isa isa);
Isa detected_isa();

// Table used by the span wrappers below.
const KernelTable& active();
Isa active_isa();

// Throws std::invalid_argument if the ISA is not supported here.
void set_isa(Isa isa);

// RAII pin of the active ISA, restoring the previous one on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa);
  ~ScopedIsa();
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void syr(double alpha, std::span<const double> x, std::span<double> a);
double quad_form(std::span<const double> a, std::span<const double> x);
double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace hbayes::kernels
