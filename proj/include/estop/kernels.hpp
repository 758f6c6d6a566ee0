#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

// Dense inner loops used by the planners. Every routine has a portable scalar
// reference and, on x86-64, an AVX2/FMA variant; the variant is chosen once at
// startup from CPUID (override with ESTOP_KERNELS=scalar|avx2).

namespace estop::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
    Isa isa;
    const char* name;
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    double (*max_abs_diff)(const double* a, const double* b, std::size_t n);
    // out[r] = bias[r] + scale * dot(rows + r*n, v), for r < n_rows
    void (*affine_rows)(const double* rows, const double* bias, const double* v, double scale,
                        double* out, std::size_t n_rows, std::size_t n);
};

const KernelTable& scalar_table();
/// nullptr when the binary was built without AVX2 or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();
/// Table selected for this process.
const KernelTable& active();
/// Every table runnable on this machine (scalar first).
std::vector<const KernelTable*> available();

std::string_view to_string(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}
inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    return active().max_abs_diff(a.data(), b.data(), a.size());
}

namespace detail {
double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
double max_abs_diff_scalar(const double* a, const double* b, std::size_t n);
void affine_rows_scalar(const double* rows, const double* bias, const double* v, double scale,
                        double* out, std::size_t n_rows, std::size_t n);
#if defined(ESTOP_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
double max_abs_diff_avx2(const double* a, const double* b, std::size_t n);
void affine_rows_avx2(const double* rows, const double* bias, const double* v, double scale,
                      double* out, std::size_t n_rows, std::size_t n);
#endif
}  // namespace detail

}  // namespace estop::kernels
