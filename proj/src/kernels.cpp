#include "nsr/kernels.hpp"

namespace nsr::kernels {
namespace {

Backend detect() {
  return avx2_available() ? Backend::avx2 : Backend::scalar;
}

Backend g_backend = detect();
bool g_forced = false;

}  // namespace

bool avx2_available() {
#if defined(__GNUC__) || defined(__clang__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Ops& ops() {
  return g_backend == Backend::avx2 ? avx2_ops() : scalar_ops();
}

void force_backend(Backend b) {
  g_backend = b;
  g_forced = true;
}

void reset_backend() {
  g_backend = detect();
  g_forced = false;
}

Backend active_backend() { return g_backend; }

std::string backend_name() {
  return g_backend == Backend::avx2 ? "avx2" : "scalar";
}

}  // namespace nsr::kernels
