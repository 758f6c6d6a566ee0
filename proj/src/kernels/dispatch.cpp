#include "estop/kernels.hpp"

#include <cstdlib>
#include <string>

namespace estop::kernels {

namespace {

const KernelTable kScalar{Isa::Scalar, "scalar", detail::dot_scalar, detail::axpy_scalar,
                          detail::max_abs_diff_scalar, detail::affine_rows_scalar};

#if defined(ESTOP_HAVE_AVX2)
const KernelTable kAvx2{Isa::Avx2, "avx2", detail::dot_avx2, detail::axpy_avx2,
                        detail::max_abs_diff_avx2, detail::affine_rows_avx2};

bool cpu_has_avx2() {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable& select() {
    const char* forced = std::getenv("ESTOP_KERNELS");
    const std::string want = forced ? forced : "";
    if (want == "scalar") return kScalar;
    if (const KernelTable* t = avx2_table()) return *t;
    return kScalar;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(ESTOP_HAVE_AVX2)
    static const bool ok = cpu_has_avx2();
    return ok ? &kAvx2 : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

std::vector<const KernelTable*> available() {
    std::vector<const KernelTable*> out{&kScalar};
    if (const KernelTable* t = avx2_table()) out.push_back(t);
    return out;
}

std::string_view to_string(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
    }
    return "unknown";
}

}  // namespace estop::kernels
