#include <atomic>
#include <cstdlib>
#include <string_view>

#include "icr/kernels.hpp"

namespace icr::kernels {

#if defined(ICR_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

namespace {

bool cpu_has_avx2_fma() {
#if defined(ICR_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__)) && \
    (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* select_default() {
    const char* env = std::getenv("ICR_KERNELS");
    if (env != nullptr && std::string_view(env) == "scalar") return &scalar_kernels();
    if (const KernelTable* t = avx2_kernels()) return t;
    return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> current{select_default()};
    return current;
}

}  // namespace

const KernelTable* avx2_kernels() {
#if defined(ICR_HAVE_AVX2)
    static const bool ok = cpu_has_avx2_fma();
    return ok ? &avx2_table() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(const KernelTable& table) { slot().store(&table, std::memory_order_release); }

}  // namespace icr::kernels
