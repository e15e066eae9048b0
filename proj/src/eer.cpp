#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "revforge/detect.hpp"

namespace revforge {

EerResult compute_eer(std::span<const ScoredSample> samples) {
    EerResult out;
    std::vector<double> fakes, reals;
    for (const auto& s : samples) {
        if (!std::isfinite(s.score)) throw std::invalid_argument("compute_eer: non-finite score");
        (s.is_fake ? fakes : reals).push_back(s.score);
    }
    out.n_fake = fakes.size();
    out.n_real = reals.size();
    if (fakes.empty() || reals.empty()) throw std::invalid_argument("compute_eer needs both fake and real scores");
    std::sort(fakes.begin(), fakes.end());
    std::sort(reals.begin(), reals.end());

    std::vector<double> thresholds;
    thresholds.reserve(samples.size() + 1);
    for (const auto& s : samples) thresholds.push_back(s.score);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    thresholds.push_back(std::numeric_limits<double>::infinity());

    const double nf = static_cast<double>(fakes.size());
    const double nr = static_cast<double>(reals.size());
    auto far = [&](double t) {
        auto it = std::lower_bound(reals.begin(), reals.end(), t);
        return static_cast<double>(reals.end() - it) / nr;
    };
    auto frr = [&](double t) {
        auto it = std::lower_bound(fakes.begin(), fakes.end(), t);
        return static_cast<double>(it - fakes.begin()) / nf;
    };

    // FAR - FRR starts at 1 - 0 >= 0 for the lowest threshold and ends at
    // 0 - 1 < 0 at +inf, falling monotonically in between.
    double prev_t = thresholds.front();
    double prev_far = far(prev_t), prev_frr = frr(prev_t);
    if (prev_far - prev_frr <= 0.0) {
        out.eer = prev_far;
        out.threshold = prev_t;
        return out;
    }
    for (std::size_t k = 1; k < thresholds.size(); ++k) {
        const double t = thresholds[k];
        const double a = far(t), r = frr(t);
        const double d = a - r;
        if (d <= 0.0) {
            const double d_prev = prev_far - prev_frr;
            if (d == 0.0) {
                out.eer = a;
                out.threshold = std::isfinite(t) ? t : prev_t;
            } else {
                const double w = d_prev / (d_prev - d);
                out.eer = prev_far + w * (a - prev_far);
                out.threshold = std::isfinite(t) ? prev_t + w * (t - prev_t) : prev_t;
            }
            return out;
        }
        prev_t = t;
        prev_far = a;
        prev_frr = r;
    }
    throw std::logic_error("compute_eer: no FAR/FRR crossing");
}

}  // namespace revforge
