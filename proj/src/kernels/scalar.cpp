#include "estop/kernels.hpp"

#include <cmath>

namespace estop::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double max_abs_diff_scalar(const double* a, const double* b, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::fmax(m, std::fabs(a[i] - b[i]));
    return m;
}

void affine_rows_scalar(const double* rows, const double* bias, const double* v, double scale,
                        double* out, std::size_t n_rows, std::size_t n) {
    for (std::size_t r = 0; r < n_rows; ++r) out[r] = bias[r] + scale * dot_scalar(rows + r * n, v, n);
}

}  // namespace estop::kernels::detail
