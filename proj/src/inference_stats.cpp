#include "compromise/inference_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "compromise/diagnostics.hpp"
#include "compromise/hashing.hpp"
#include "compromise/random.hpp"

namespace compromise {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (size_t i = 0; i < idx.size();) {
        size_t j = i;
        while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error("spearman needs two equal-length samples");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw Error("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

StatResult bootstrap_ci(std::span<const double> sample, std::uint64_t iterations, double level,
                        std::uint64_t seed) {
    if (sample.empty()) throw Error("bootstrap_ci: empty sample");
    if (!(level > 0.0 && level < 1.0)) throw Error("bootstrap_ci: level must lie in (0, 1)");
    if (iterations == 0) throw Error("bootstrap_ci: iterations must be positive");
    const size_t n = sample.size();
    const double point = std::accumulate(sample.begin(), sample.end(), 0.0) / static_cast<double>(n);

    Rng rng(seed);
    std::vector<double> means(iterations);
    for (auto& m : means) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += sample[uniform_index(rng, n)];
        m = s / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    const double alpha = 1.0 - level;

    StatResult r;
    r.method = "percentile_bootstrap";
    r.point_estimate = point;
    r.ci_low = std::min(point, quantile_sorted(means, alpha / 2.0));
    r.ci_high = std::max(point, quantile_sorted(means, 1.0 - alpha / 2.0));
    r.has_ci = true;
    r.iterations = iterations;
    r.seed = seed;
    return r;
}

StatResult wilcoxon_signed_rank(std::span<const double> diffs, int exact_max_n) {
    std::vector<double> nz;
    for (double d : diffs)
        if (d != 0.0) nz.push_back(d);

    StatResult r;
    r.method = "wilcoxon_signed_rank";
    if (!diffs.empty())
        r.point_estimate = std::accumulate(diffs.begin(), diffs.end(), 0.0) /
                           static_cast<double>(diffs.size());
    if (nz.empty()) {
        r.p_value = 1.0;
        r.degenerate = true;
        return r;
    }
    const size_t n = nz.size();
    std::vector<double> abs_d(n);
    for (size_t i = 0; i < n; ++i) abs_d[i] = std::abs(nz[i]);
    const auto ranks = average_ranks(abs_d);
    double w_plus = 0.0;
    for (size_t i = 0; i < n; ++i)
        if (nz[i] > 0) w_plus += ranks[i];
    r.statistic = w_plus;

    if (static_cast<int>(n) <= exact_max_n) {
        // Midranks are multiples of 1/2, so doubled ranks are exact integers.
        std::vector<long> twice(n);
        long total = 0;
        for (size_t i = 0; i < n; ++i) {
            twice[i] = std::lround(2.0 * ranks[i]);
            total += twice[i];
        }
        std::vector<double> dist(static_cast<size_t>(total) + 1, 0.0);
        dist[0] = 1.0;
        for (long t : twice) {
            for (long s = total; s >= t; --s) dist[s] += dist[s - t];
        }
        const double patterns = std::ldexp(1.0, static_cast<int>(n));
        const long obs = std::lround(2.0 * w_plus);
        double upper = 0.0, lower = 0.0;
        for (long s = 0; s <= total; ++s) {
            if (s >= obs) upper += dist[s];
            if (s <= obs) lower += dist[s];
        }
        r.p_value = std::min(1.0, 2.0 * std::min(upper, lower) / patterns);
        r.method += "_exact";
    } else {
        const double nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
        std::vector<double> sorted = abs_d;
        std::sort(sorted.begin(), sorted.end());
        for (size_t i = 0; i < n;) {
            size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            var -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
        if (var <= 0.0) {
            r.p_value = 1.0;
            r.degenerate = true;
        } else {
            const double z = (w_plus - mean) / std::sqrt(var);
            r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
        }
        r.method += "_normal";
    }
    return r;
}

StatResult permutation_test(std::span<const RankPair> per_item_ranks, std::uint64_t iterations,
                            std::uint64_t seed, PermutationMode mode) {
    if (per_item_ranks.empty()) throw Error("permutation_test: no items");
    const size_t n = per_item_ranks.size();
    std::vector<double> d(n);
    for (size_t i = 0; i < n; ++i) d[i] = per_item_ranks[i].second - per_item_ranks[i].first;
    const double obs = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    const double threshold = std::abs(obs) - 1e-12;

    StatResult r;
    r.point_estimate = obs;
    r.statistic = obs;
    r.seed = seed;

    if (mode == PermutationMode::exhaustive) {
        if (n > 24) throw Error("permutation_test: exhaustive mode limited to 24 items");
        const std::uint64_t patterns = std::uint64_t{1} << n;
        std::uint64_t extreme = 0;
        for (std::uint64_t mask = 0; mask < patterns; ++mask) {
            double s = 0.0;
            for (size_t i = 0; i < n; ++i) s += (mask >> i & 1) ? -d[i] : d[i];
            if (std::abs(s / static_cast<double>(n)) >= threshold) ++extreme;
        }
        r.p_value = static_cast<double>(extreme) / static_cast<double>(patterns);
        r.iterations = patterns;
        r.method = "sign_flip_permutation_exact";
        return r;
    }

    if (iterations == 0) throw Error("permutation_test: iterations must be positive");
    Rng rng(mix64(seed));
    std::uint64_t extreme = 0;
    for (std::uint64_t it = 0; it < iterations; ++it) {
        double s = 0.0;
        std::uint64_t bits = 0;
        for (size_t i = 0; i < n; ++i) {
            if (i % 64 == 0) bits = rng();
            s += (bits & 1) ? -d[i] : d[i];
            bits >>= 1;
        }
        if (std::abs(s / static_cast<double>(n)) >= threshold) ++extreme;
    }
    r.p_value = static_cast<double>(extreme + 1) / static_cast<double>(iterations + 1);
    r.iterations = iterations;
    r.method = "sign_flip_permutation";
    return r;
}

}  // namespace compromise
