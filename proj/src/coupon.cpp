#include <algorithm>
#include <cmath>
#include <vector>

#include "estop/bounds.hpp"

namespace estop {

namespace {

// Neumaier-compensated accumulator in extended precision.
class CompensatedSum {
public:
    void add(long double x) {
        const long double t = sum_ + x;
        if (std::fabs(sum_) >= std::fabs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    long double value() const { return sum_ + comp_; }

private:
    long double sum_ = 0.0L;
    long double comp_ = 0.0L;
};

long double binomial(int m, int k) {
    long double c = 1.0L;
    for (int i = 1; i <= k; ++i) c = c * (m - k + i) / i;
    return std::round(c);
}

// Occupancy recursion over the number of distinct cells hit so far: every
// term is nonnegative, so nothing cancels. Each of the m cells has mass eps,
// the remaining 1 - m eps hits no cell.
double occupancy(int m, double eps, int n) {
    const double rest = 1.0 - m * eps;
    std::vector<double> p(static_cast<std::size_t>(m) + 1, 0.0), next(p.size());
    p[0] = 1.0;
    for (int draw = 0; draw < n; ++draw) {
        next[0] = p[0] * rest;
        for (int j = 1; j <= m; ++j) {
            next[static_cast<std::size_t>(j)] = p[static_cast<std::size_t>(j)] * (j * eps + rest) +
                                                 p[static_cast<std::size_t>(j) - 1] * ((m - j + 1) * eps);
        }
        std::swap(p, next);
    }
    return p[static_cast<std::size_t>(m)];
}

constexpr int kLargeM = 60;

}  // namespace

double coupon_probability(int m, int n) {
    if (m < 1) throw Error("coupon_probability needs m >= 1");
    if (n < 0) throw Error("coupon_probability needs n >= 0");
    if (n < m) return 0.0;
    if (m == 1) return 1.0;

    // Exact integer inclusion-exclusion while sum_k C(m,k) m^n fits in 126 bits.
    if (m + n * std::log2(static_cast<double>(m)) < 125.0) {
        __int128 num = 0;
        __int128 den = 1;
        for (int i = 0; i < n; ++i) den *= m;
        __int128 c = 1;
        for (int k = 0; k <= m; ++k) {
            __int128 pw = 1;
            for (int i = 0; i < n; ++i) pw *= (m - k);
            num += (k % 2 == 0 ? 1 : -1) * c * pw;
            c = c * (m - k) / (k + 1);
        }
        return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
    }
    if (m > kLargeM) return occupancy(m, 1.0 / m, n);

    CompensatedSum sum;
    for (int k = 0; k <= m; ++k) {
        const long double base = static_cast<long double>(m - k) / m;
        const long double term = binomial(m, k) * std::pow(base, static_cast<long double>(n));
        sum.add(k % 2 == 0 ? term : -term);
    }
    return std::clamp(static_cast<double>(sum.value()), 0.0, 1.0);
}

double cover_probability(int m, double eps, int n) {
    if (m < 1) throw Error("cover_probability needs m >= 1");
    if (n < 0) throw Error("cover_probability needs n >= 0");
    if (!(eps > 0.0 && eps <= 1.0)) throw Error("cover_probability needs eps in (0,1]");
    if (m > kLargeM && m * eps <= 1.0 + 1e-12) return occupancy(m, std::min(eps, 1.0 / m), n);

    CompensatedSum sum;
    for (int k = 0; k <= m; ++k) {
        long double base = 1.0L - static_cast<long double>(k) * eps;
        if (std::fabs(base) <= 1e-12L) base = 0.0L;  // 0^0 = 1 keeps the n = 0 case exact
        if (base < 0.0L) continue;
        const long double term = binomial(m, k) * std::pow(base, static_cast<long double>(n));
        sum.add(k % 2 == 0 ? term : -term);
    }
    return std::clamp(static_cast<double>(sum.value()), 0.0, 1.0);
}

}  // namespace estop
