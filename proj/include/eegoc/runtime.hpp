#pragma once

// Process-level setup shared by the executables.

#include <dlfcn.h>
#include <unistd.h>

#include <cstdlib>
#include <string_view>

namespace eegoc {

/// OpenBLAS 0.3.20 picks its Cooperlake kernels on some AVX-512 machines and
/// those return NaN inside UMFPACK's dense updates. The core type is read once
/// when the library loads, so the only fix from inside the process is to
/// re-exec with OPENBLAS_CORETYPE set. No-op when the variable is already set,
/// when OpenBLAS is not loaded, or for other core types.
inline void ensure_safe_blas(char** argv) {
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
  using corename_fn = char* (*)();
  auto fn = reinterpret_cast<corename_fn>(dlsym(RTLD_DEFAULT, "openblas_get_corename"));
  if (fn == nullptr) return;
  const std::string_view core = fn();
  if (core != "Cooperlake" && core != "cooperlake" && core != "SapphireRapids" && core != "sapphirerapids") return;
  setenv("OPENBLAS_CORETYPE", "SkylakeX", 1);
  execv("/proc/self/exe", argv);
  // exec failed: carry on; DirectFactorization falls back to SparseLU.
}

}  // namespace eegoc
