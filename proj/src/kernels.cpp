#include "ctvit/kernels.hpp"

#include <cstdlib>

#include "ctvit/common.hpp"

namespace ctvit::kernels {

const KernelTable& scalar_table() {
    static const KernelTable t = {
        scalar::matmul, scalar::add, scalar::mul,
        scalar::axpy,   scalar::scale, scalar::adam_update,
        "scalar",
    };
    return t;
}

#ifdef CTVIT_HAVE_AVX2_BUILD
const KernelTable& avx2_table() {
    static const KernelTable t = {
        avx2::matmul, avx2::add, avx2::mul,
        avx2::axpy,   avx2::scale, avx2::adam_update,
        "avx2",
    };
    return t;
}
#endif

bool cpu_has_avx2() {
#ifdef CTVIT_HAVE_AVX2_BUILD
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

namespace {

const KernelTable* pick_default() {
    if (const char* env = std::getenv("CTVIT_KERNELS")) {
        const std::string name(env);
        if (name == "scalar") return &scalar_table();
#ifdef CTVIT_HAVE_AVX2_BUILD
        if (name == "avx2" && cpu_has_avx2()) return &avx2_table();
#endif
        // Unknown or unsupported override falls through to autodetect.
    }
#ifdef CTVIT_HAVE_AVX2_BUILD
    if (cpu_has_avx2()) return &avx2_table();
#endif
    return &scalar_table();
}

const KernelTable*& active_slot() {
    static const KernelTable* slot = pick_default();
    return slot;
}

}  // namespace

const KernelTable& active() { return *active_slot(); }

void select(const std::string& name) {
    if (name == "scalar") {
        active_slot() = &scalar_table();
        return;
    }
#ifdef CTVIT_HAVE_AVX2_BUILD
    if (name == "avx2") {
        if (!cpu_has_avx2()) throw ConfigError("avx2 kernels not supported on this cpu");
        active_slot() = &avx2_table();
        return;
    }
#endif
    throw ConfigError("unknown kernel backend: " + name);
}

}  // namespace ctvit::kernels
