#include <algorithm>
#include <cmath>

#include "estop/experiments.hpp"

namespace estop {

AggregateCurve aggregate_curves(const std::vector<LearningCurve>& curves, long spacing) {
    if (spacing < 1) throw Error("aggregation spacing must be positive");
    AggregateCurve agg;
    long last = 0;
    for (const auto& c : curves) {
        if (!c.points.empty()) last = std::max(last, c.points.back().states_seen);
    }
    std::vector<double> values;
    for (long x = 0; x <= last; x += spacing) {
        values.clear();
        for (const auto& c : curves) {
            if (auto v = interpolate(c, static_cast<double>(x))) values.push_back(*v);
        }
        if (values.empty()) continue;
        std::sort(values.begin(), values.end());
        AggregatePoint p;
        p.x = x;
        p.count = static_cast<int>(values.size());
        const auto n = values.size();
        p.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
        double sum = 0.0;
        for (double v : values) sum += v;
        p.mean = sum / static_cast<double>(n);
        if (n > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - p.mean) * (v - p.mean);
            p.stddev = std::sqrt(ss / static_cast<double>(n - 1));
        }
        p.min = values.front();
        p.max = values.back();
        agg.points.push_back(p);
    }
    return agg;
}

}  // namespace estop
