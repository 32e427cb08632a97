// Runtime kernel selection. Because every variant is bit-identical to the
// scalar reference, the choice affects speed only, never results.

#include <cstdlib>

#include "pcmorph/errors.hpp"
#include "pcmorph/kernels.hpp"

namespace pcmorph::kern {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Kernels* detect() {
  if (const Kernels* t = avx2_kernels(); t && cpu_has_avx2()) return t;
  if (const Kernels* t = neon_kernels()) return t;
  return &scalar_kernels();
}

const Kernels* resolve(const std::string& name) {
  if (name == "auto") return detect();
  if (name == "scalar") return &scalar_kernels();
  if (name == "avx2") {
    const Kernels* t = avx2_kernels();
    if (!t || !cpu_has_avx2())
      throw InvalidArgument("kernels: avx2 not supported on this machine");
    return t;
  }
  if (name == "neon") {
    const Kernels* t = neon_kernels();
    if (!t) throw InvalidArgument("kernels: neon not supported on this machine");
    return t;
  }
  throw InvalidArgument("kernels: unknown variant '" + name + "'");
}

const Kernels*& active_slot() {
  static const Kernels* slot = [] {
    if (const char* env = std::getenv("PCMORPH_KERNELS"))
      return resolve(env);
    return detect();
  }();
  return slot;
}

}  // namespace

const Kernels& active() { return *active_slot(); }

void force(const std::string& name) { active_slot() = resolve(name); }

}  // namespace pcmorph::kern
