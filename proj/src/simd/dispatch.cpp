#include "heston/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace heston::simd {

#if defined(HESTON_HAVE_AVX2)
const KernelTable* avx2_kernels_impl();
#endif

const KernelTable* avx2_kernels() {
#if defined(HESTON_HAVE_AVX2)
    return avx2_kernels_impl();
#else
    return nullptr;
#endif
}

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

const KernelTable* initial_table() {
    const char* env = std::getenv("HESTON_SIMD");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return &scalar_kernels();
    if (avx2_kernels() != nullptr && cpu_supports_avx2()) return avx2_kernels();
    return &scalar_kernels();
}

std::atomic<const KernelTable*>& active() {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

} // namespace

const KernelTable& kernels() { return *active().load(std::memory_order_acquire); }

void select_isa(Isa isa) {
    if (isa == Isa::Scalar) {
        active().store(&scalar_kernels(), std::memory_order_release);
        return;
    }
    if (avx2_kernels() == nullptr || !cpu_supports_avx2())
        throw std::runtime_error("AVX2 kernels are not available on this machine");
    active().store(avx2_kernels(), std::memory_order_release);
}

} // namespace heston::simd
