#include "kgqa/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "kgqa/common.hpp"

namespace kgqa::kernels {

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

const Ops* lookup(const char* name) {
    if (std::strcmp(name, "scalar") == 0) return &scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
    if (std::strcmp(name, "avx2") == 0) {
        require(avx2_supported(), "kernels: avx2 requested but not supported by this CPU");
        return &avx2_ops();
    }
#endif
#if defined(__aarch64__)
    if (std::strcmp(name, "neon") == 0) return &neon_ops();
#endif
    fail("kernels: unknown or unavailable backend '", name, "'");
}

const Ops* pick_auto() {
#if defined(__aarch64__)
    return &neon_ops();
#elif defined(__x86_64__) || defined(_M_X64)
    if (avx2_supported()) return &avx2_ops();
    return &scalar_ops();
#else
    return &scalar_ops();
#endif
}

const Ops*& active_slot() {
    static const Ops* active = [] {
        if (const char* env = std::getenv("KGQA_KERNELS")) return lookup(env);
        return pick_auto();
    }();
    return active;
}

}  // namespace

const Ops& active_ops() { return *active_slot(); }

void force_backend(const char* name) {
    active_slot() = name ? lookup(name) : pick_auto();
}

std::vector<const Ops*> available_backends() {
    std::vector<const Ops*> v{&scalar_ops()};
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2_supported()) v.push_back(&avx2_ops());
#endif
#if defined(__aarch64__)
    v.push_back(&neon_ops());
#endif
    return v;
}

}  // namespace kgqa::kernels
