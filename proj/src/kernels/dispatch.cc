#include <atomic>
#include <cassert>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "tables.hpp"

namespace hbayes::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(HBAYES_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& table_for(Isa isa) {
#if defined(HBAYES_HAVE_AVX2)
  if (isa == Isa::kAvx2) return detail::kAvx2Table;
#endif
  (void)isa;
  return detail::kScalarTable;
}

Isa initial_isa() {
  if (const char* env = std::getenv("HBAYES_ISA")) {
    const std::string value(env);
    if (value == "scalar") return Isa::kScalar;
    if (value == "avx2" && isa_supported(Isa::kAvx2)) return Isa::kAvx2;
  }
  return detected_isa();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table_for(initial_isa())};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& scalar_table() { return detail::kScalarTable; }

const KernelTable* avx2_table() {
  return isa_supported(Isa::kAvx2) ? &table_for(Isa::kAvx2) : nullptr;
}

bool isa_supported(Isa isa) {
  if (isa == Isa::kScalar) return true;
  static const bool has_avx2 = cpu_has_avx2();
  return has_avx2;
}

Isa detected_isa() { return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar; }

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("kernel ISA not supported on this machine: " +
                                std::string(isa_name(isa)));
  }
  active_slot().store(&table_for(isa), std::memory_order_release);
}

ScopedIsa::ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }

ScopedIsa::~ScopedIsa() { active_slot().store(&table_for(previous_), std::memory_order_release); }

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void syr(double alpha, std::span<const double> x, std::span<double> a) {
  assert(a.size() == x.size() * x.size());
  active().syr(alpha, x.data(), a.data(), x.size());
}

double quad_form(std::span<const double> a, std::span<const double> x) {
  assert(a.size() == x.size() * x.size());
  return active().quad_form(a.data(), x.data(), x.size());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace hbayes::kernels
